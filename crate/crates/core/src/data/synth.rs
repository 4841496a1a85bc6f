use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::Shape;
use crate::rng::{Purpose, StreamKey};

/// Gaussian-blob classification data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub num_classes: usize,
    pub per_class: usize,
    pub dim: usize,
    /// Expected distance between two class means, in units of the per-coordinate noise std.
    pub separation: f64,
}

fn class_centers(params: &SynthParams, seed: u64) -> Vec<Vec<f64>> {
    // Random directions with norm separation/√2: in high dimension two such
    // vectors are nearly orthogonal, so their distance is about `separation`.
    let mut rng = StreamKey::new(seed, Purpose::SynthCenters).rng();
    (0..params.num_classes)
        .map(|_| {
            let v: Vec<f64> = (0..params.dim).map(|_| rng.sample(StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            let scale = params.separation / std::f64::consts::SQRT_2 / norm;
            v.into_iter().map(|x| x * scale).collect()
        })
        .collect()
}

fn draw_split(params: &SynthParams, seed: u64, split: u64, per_class: usize, name: &str) -> Result<Dataset> {
    if params.separation.is_nan() || params.separation <= 0.0 {
        return Err(Error::input("separation must be positive"));
    }
    if params.num_classes < 2 || params.dim == 0 {
        return Err(Error::input("need at least two classes and one dimension"));
    }
    let centers = class_centers(params, seed);
    // Affine map into [0, 1] sending ±4 standard deviations of a coordinate
    // (center spread plus unit noise) to the edges; the rare excess is clamped.
    let coord_std = (params.separation * params.separation / (2.0 * params.dim as f64) + 1.0).sqrt();
    let half_range = 2.0 * 4.0 * coord_std;
    let n = params.num_classes * per_class;
    let mut features = Vec::with_capacity(n * params.dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % params.num_classes;
        let mut rng = StreamKey::new(seed, Purpose::SynthSamples).client(split).step(i as u64).rng();
        for &c in &centers[label] {
            let x = c + rng.sample::<f64, _>(StandardNormal);
            features.push((0.5 + x / half_range).clamp(0.0, 1.0) as f32);
        }
        labels.push(label);
    }
    Dataset::new(name, Shape::flat(params.dim), params.num_classes, features, labels)
}

/// `num_classes · per_class` samples, exactly `per_class` of each class.
pub fn synth_dataset(num_classes: usize, per_class: usize, dim: usize, separation: f64, seed: u64) -> Result<Dataset> {
    let params = SynthParams { num_classes, per_class, dim, separation };
    draw_split(&params, seed, 0, per_class, "synth")
}

/// A training set and a held-out set drawn around the same class means.
pub fn synth_train_test(params: &SynthParams, test_per_class: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    let train = draw_split(params, seed, 0, params.per_class, "synth-train")?;
    let test = draw_split(params, seed, 1, test_per_class, "synth-test")?;
    Ok((train, test))
}
