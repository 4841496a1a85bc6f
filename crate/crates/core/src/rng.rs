//! Counter-based random streams.
//!
//! Every random draw in a simulation comes from a [`SplitMix64`] generator whose
//! starting state is a hash of `(seed, purpose, round, client, step)`. Streams
//! never share state, so the values a client sees do not depend on which worker
//! ran it or in what order.

use rand::RngCore;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Steele, Lea and Flood's SplitMix64 generator.
#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(state: u64) -> Self {
        SplitMix64 { state }
    }
}

impl RngCore for SplitMix64 {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

/// What a stream is used for. Distinct purposes never collide even with
/// identical seed, round and client.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Purpose {
    Params,
    ServerInit,
    ClientInit,
    Selection,
    Attackers,
    Noise,
    Batches,
    IidShuffle,
    ShardDeal,
    SynthCenters,
    SynthSamples,
    Gradcheck,
}

impl Purpose {
    fn tag(self) -> u64 {
        // Arbitrary fixed constants; changing them changes every run.
        match self {
            Purpose::Params => 0x7061_7261_6d73,
            Purpose::ServerInit => 0x7365_7276_6572,
            Purpose::ClientInit => 0x6963_6d69,
            Purpose::Selection => 0x7365_6c65_6374,
            Purpose::Attackers => 0x6174_7461_636b,
            Purpose::Noise => 0x6e_6f69_7365,
            Purpose::Batches => 0x62_6174_6368,
            Purpose::IidShuffle => 0x69_6964,
            Purpose::ShardDeal => 0x73_6861_7264,
            Purpose::SynthCenters => 0x6365_6e74_6572,
            Purpose::SynthSamples => 0x7361_6d70_6c65,
            Purpose::Gradcheck => 0x6772_6164,
        }
    }
}

/// Identifies one random stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub purpose: Purpose,
    pub round: u64,
    pub client: u64,
    pub step: u64,
}

impl StreamKey {
    pub fn new(seed: u64, purpose: Purpose) -> Self {
        StreamKey { seed, purpose, round: 0, client: 0, step: 0 }
    }

    pub fn round(mut self, round: u64) -> Self {
        self.round = round;
        self
    }

    pub fn client(mut self, client: u64) -> Self {
        self.client = client;
        self
    }

    pub fn step(mut self, step: u64) -> Self {
        self.step = step;
        self
    }

    fn state(&self) -> u64 {
        let mut h = mix64(self.seed.wrapping_add(GOLDEN_GAMMA));
        for word in [self.purpose.tag(), self.round, self.client, self.step] {
            h = mix64(h ^ mix64(word.wrapping_add(GOLDEN_GAMMA)));
        }
        h
    }

    pub fn rng(&self) -> SplitMix64 {
        SplitMix64::new(self.state())
    }

    /// A 64-bit seed derived from this key, for APIs that take a plain seed.
    pub fn derive_seed(&self) -> u64 {
        self.rng().next_u64()
    }
}
