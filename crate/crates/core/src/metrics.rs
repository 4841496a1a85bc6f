//! Global-model reconstruction, test-set evaluation, payload statistics and
//! CSV output.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::fl::{aggregate, ClientState, InitMode, Scheme, ServerState};
use crate::nn::{forward, ModelSpec, ParamVector, PayloadKind};
use crate::real::Real;

pub const CSV_HEADER: &str = "round,test_accuracy,test_loss,mean_update_norm,mean_model_norm,wallclock_ms";

/// One metrics row per federated round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u64,
    pub test_accuracy: f64,
    pub test_loss: f64,
    /// Mean ℓ₂ norm of the participants' local changes in this round.
    pub mean_update_norm: f64,
    /// Mean ℓ₂ norm of the participants' models after local learning.
    pub mean_model_norm: f64,
    pub wallclock_ms: u64,
}

/// The model the evaluation harness scores.
///
/// MB: the server's current `w_t`. MUB with a server-drawn `w_1`: the
/// accumulated `w_1 + Σ u`. MUB with client-side initialization has no global
/// model on the wire, so the data-size weighted mean of all client models is
/// used instead (an omniscient view that no protocol message reveals).
pub fn reconstruct_global<T: Real>(server: &ServerState<T>, clients: &[ClientState<T>]) -> Result<ParamVector<T>> {
    match (server.scheme, server.init_mode) {
        (Scheme::Mb, _) if server.broadcast.is_some() => Ok(server.broadcast.clone().expect("checked")),
        (Scheme::Mub, InitMode::Server) => server
            .accumulated_global
            .clone()
            .ok_or_else(|| Error::Contract("MUB server lost its accumulated model".into())),
        _ => client_mean(clients),
    }
}

/// Data-size weighted mean of the clients' local models.
pub fn client_mean<T: Real>(clients: &[ClientState<T>]) -> Result<ParamVector<T>> {
    let models: Vec<ParamVector<T>> = clients.iter().map(|c| c.local_model.clone()).collect();
    let sizes: Vec<usize> = clients.iter().map(|c| c.partition.len()).collect();
    aggregate(&models, &sizes)
}

/// Accuracy (argmax, ties to the lowest class) and mean cross-entropy over the
/// whole test set, processed in chunks of `batch` samples.
pub fn evaluate<T: Real>(
    spec: &ModelSpec,
    params: &ParamVector<T>,
    testset: &Dataset,
    batch: usize,
) -> Result<(f64, f64)> {
    if testset.is_empty() {
        return Err(Error::input("empty test set"));
    }
    if params.kind() != PayloadKind::Model {
        return Err(Error::Contract("only models can be evaluated".into()));
    }
    let idx: Vec<usize> = (0..testset.len()).collect();
    let parts = idx
        .par_chunks(batch.max(1))
        .map(|chunk| -> Result<(usize, f64)> {
            let b = testset.batch::<T>(chunk)?;
            let logits = forward(spec, params, &b)?;
            let mut correct = 0;
            let mut loss = 0.0;
            for (r, &y) in b.labels().iter().enumerate() {
                let row: Vec<f64> = logits.row(r).iter().map(|v| v.to_f64()).collect();
                let (mut best, mut best_val) = (0, row[0]);
                for (c, &v) in row.iter().enumerate().skip(1) {
                    if v > best_val {
                        best = c;
                        best_val = v;
                    }
                }
                if best == y {
                    correct += 1;
                }
                let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
                loss += lse - row[y];
            }
            Ok((correct, loss))
        })
        .collect::<Result<Vec<_>>>()?;
    // Chunk results are combined in order, so the loss sum is schedule independent.
    let correct: usize = parts.iter().map(|p| p.0).sum();
    let loss: f64 = parts.iter().map(|p| p.1).sum();
    let n = testset.len() as f64;
    Ok((correct as f64 / n, loss / n))
}

/// Fixed-range histogram; values outside `[lo, hi)` land in the edge bins.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(bins: usize, lo: f64, hi: f64) -> Result<Self> {
        if bins == 0 || hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::input("histogram needs at least one bin and hi > lo"));
        }
        Ok(Histogram { lo, hi, counts: vec![0; bins] })
    }

    pub fn add(&mut self, v: f64) {
        let bins = self.counts.len();
        let pos = ((v - self.lo) / (self.hi - self.lo) * bins as f64).floor();
        let bin = if pos.is_nan() || pos < 0.0 { 0 } else { (pos as usize).min(bins - 1) };
        self.counts[bin] += 1;
    }

    pub fn bin_edges(&self, i: usize) -> (f64, f64) {
        let width = (self.hi - self.lo) / self.counts.len() as f64;
        (self.lo + width * i as f64, self.lo + width * (i + 1) as f64)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Norm and coordinate statistics of a set of payloads.
#[derive(Clone, Debug, PartialEq)]
pub struct NormStats {
    pub mean_norm: f64,
    pub std_norm: f64,
    /// Standard deviation of all coordinates pooled together.
    pub coord_std: f64,
    pub histogram: Histogram,
}

pub fn payload_norm_stats<T: Real>(payloads: &[ParamVector<T>], bins: usize, range: (f64, f64)) -> Result<NormStats> {
    let first = payloads.first().ok_or_else(|| Error::input("no payloads"))?;
    for p in payloads {
        first.check_compatible(p)?;
    }
    let norms: Vec<f64> = payloads.iter().map(ParamVector::l2_norm).collect();
    let (mean_norm, std_norm) = mean_std(norms.iter().copied());
    let mut histogram = Histogram::new(bins, range.0, range.1)?;
    for p in payloads {
        for v in p.values() {
            histogram.add(v.to_f64());
        }
    }
    let (_, coord_std) = mean_std(payloads.iter().flat_map(|p| p.values().iter().map(|v| v.to_f64())));
    Ok(NormStats { mean_norm, std_norm, coord_std, histogram })
}

/// Population mean and standard deviation.
fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let (n, sum) = values.clone().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = sum / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

/// `%.9g`-style rendering: nine significant digits, trailing zeros trimmed,
/// scientific notation only for very large or small magnitudes.
pub fn format_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..9).contains(&exp) {
        let mantissa = mantissa.trim_end_matches('0').trim_end_matches('.');
        return format!("{mantissa}e{exp}");
    }
    let decimals = (8 - exp) as usize;
    let fixed = format!("{v:.decimals$}");
    if fixed.contains('.') {
        fixed.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        fixed
    }
}

fn csv_row(r: &RoundRecord) -> String {
    format!(
        "{},{},{},{},{},{}\n",
        r.round,
        format_sig9(r.test_accuracy),
        format_sig9(r.test_loss),
        format_sig9(r.mean_update_norm),
        format_sig9(r.mean_model_norm),
        r.wallclock_ms
    )
}

/// Writes the header and one LF-terminated row per record; returns the byte count.
pub fn emit_csv<W: Write>(records: &[RoundRecord], sink: &mut W) -> io::Result<usize> {
    let mut written = 0;
    let header = format!("{CSV_HEADER}\n");
    sink.write_all(header.as_bytes())?;
    written += header.len();
    for r in records {
        let row = csv_row(r);
        sink.write_all(row.as_bytes())?;
        written += row.len();
    }
    Ok(written)
}

/// Parses a metrics file written by [`emit_csv`].
pub fn parse_csv(text: &str) -> Result<Vec<RoundRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Format("missing metrics header".into()));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(Error::Format(format!("expected 6 fields: {line}")));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Format(format!("{s}: {e}")));
            let int = |s: &str| s.parse::<u64>().map_err(|e| Error::Format(format!("{s}: {e}")));
            Ok(RoundRecord {
                round: int(f[0])?,
                test_accuracy: num(f[1])?,
                test_loss: num(f[2])?,
                mean_update_norm: num(f[3])?,
                mean_model_norm: num(f[4])?,
                wallclock_ms: int(f[5])?,
            })
        })
        .collect()
}

/// `bin_lo,bin_hi,count` rows.
pub fn emit_histogram_csv<W: Write>(hist: &Histogram, sink: &mut W) -> io::Result<usize> {
    let mut out = String::from("bin_lo,bin_hi,count\n");
    for (i, c) in hist.counts.iter().enumerate() {
        let (lo, hi) = hist.bin_edges(i);
        out.push_str(&format!("{},{},{c}\n", format_sig9(lo), format_sig9(hi)));
    }
    sink.write_all(out.as_bytes())?;
    Ok(out.len())
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::data::Partition;
    use crate::nn::{init_params, InitScheme, Shape};

    #[test]
    fn sig9_rendering() {
        assert_eq!(format_sig9(0.0), "0");
        assert_eq!(format_sig9(1.0), "1");
        assert_eq!(format_sig9(0.25), "0.25");
        assert_eq!(format_sig9(std::f64::consts::LN_10), "2.30258509");
        assert_eq!(format_sig9(123456789.4), "123456789");
        assert_eq!(format_sig9(1234567890.0), "1.23456789e9");
        assert_eq!(format_sig9(0.0001234), "0.0001234");
        assert_eq!(format_sig9(0.00001234), "1.234e-5");
        assert_eq!(format_sig9(-0.5), "-0.5");
        assert_eq!(format_sig9(9.999999999), "10");
    }

    #[test]
    fn empty_records_give_header_only() {
        let mut buf = Vec::new();
        let n = emit_csv(&[], &mut buf).unwrap();
        assert_eq!(buf, format!("{CSV_HEADER}\n").as_bytes());
        assert_eq!(n, buf.len());
    }

    #[test]
    fn csv_round_trip_within_precision() {
        let records = vec![
            RoundRecord {
                round: 1,
                test_accuracy: 0.8123456789,
                test_loss: 0.61234567891,
                mean_update_norm: 1.0 / 3.0,
                mean_model_norm: 12.5,
                wallclock_ms: 17,
            },
            RoundRecord {
                round: 2,
                test_accuracy: 1.0,
                test_loss: 1e-7,
                mean_update_norm: 0.0,
                mean_model_norm: 3e12,
                wallclock_ms: 0,
            },
        ];
        let mut buf = Vec::new();
        emit_csv(&records, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(!text.contains('\r'));
        let back = parse_csv(&text).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in records.iter().zip(&back) {
            assert_eq!(a.round, b.round);
            assert_eq!(a.wallclock_ms, b.wallclock_ms);
            for (x, y) in [
                (a.test_accuracy, b.test_accuracy),
                (a.test_loss, b.test_loss),
                (a.mean_update_norm, b.mean_update_norm),
                (a.mean_model_norm, b.mean_model_norm),
            ] {
                assert!((x - y).abs() <= 5e-9 * x.abs());
            }
        }
    }

    fn tiny() -> (Arc<ModelSpec>, Dataset) {
        let spec = Arc::new(ModelSpec::mlp(2, &[], 3).unwrap());
        // Hand-built test set of 10 samples; labels below.
        let labels = vec![0, 1, 2, 0, 1, 2, 0, 0, 1, 2];
        let mut features = Vec::new();
        for i in 0..10 {
            features.push((i % 3) as f32 / 2.0);
            features.push((i % 4) as f32 / 3.0);
        }
        (spec, Dataset::new("ten", Shape::flat(2), 3, features, labels).unwrap())
    }

    #[test]
    fn zero_model_predicts_class_zero() {
        let (spec, data) = tiny();
        let zero = init_params::<f64>(&spec, 0, InitScheme::Zero);
        let (acc, loss) = evaluate(&spec, &zero, &data, 3).unwrap();
        assert_eq!(acc, 0.4); // four samples have label 0
        assert!((loss - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn accuracy_matches_hand_tally() {
        let (spec, data) = tiny();
        // Dense weights are input-major: logit_c = b_c + x0·w[0][c] + x1·w[1][c].
        // logits = [x0, x1, 0.4]
        let params = ParamVector::from_values(
            PayloadKind::Model,
            spec.clone(),
            vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.4],
        )
        .unwrap();
        // Per sample (x0, x1) -> argmax, label:
        // 0 (0,0)->2 vs 0 ✗ | 1 (.5,.33)->0 vs 1 ✗ | 2 (1,.67)->0 vs 2 ✗ | 3 (0,1)->1 vs 0 ✗
        // 4 (.5,0)->0 vs 1 ✗ | 5 (1,.33)->0 vs 2 ✗ | 6 (0,.67)->1 vs 0 ✗ | 7 (.5,1)->1 vs 0 ✗
        // 8 (1,0)->0 vs 1 ✗ | 9 (0,.33)->2 vs 2 ✓
        let (acc, _) = evaluate(&spec, &params, &data, 4).unwrap();
        assert_eq!(acc, 0.1);
        let naive: usize = (0..data.len())
            .filter(|&i| {
                let x = data.sample(i);
                let z = [x[0] as f64, x[1] as f64, 0.4];
                let best = (0..3).fold(0, |b, c| if z[c] > z[b] { c } else { b });
                best == data.label(i)
            })
            .count();
        assert_eq!(acc, naive as f64 / 10.0);
    }

    #[test]
    fn memorized_singleton() {
        let spec = Arc::new(ModelSpec::mlp(2, &[], 3).unwrap());
        let data = Dataset::new("one", Shape::flat(2), 3, vec![0.5, 0.5], vec![2]).unwrap();
        let params = ParamVector::from_values(
            PayloadKind::Model,
            spec.clone(),
            vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 5.0],
        )
        .unwrap();
        assert_eq!(evaluate(&spec, &params, &data, 8).unwrap().0, 1.0);
        assert!(evaluate(&spec, &params, &data.prefix(0), 8).is_err());
    }

    #[test]
    fn norm_stats_basics() {
        let spec = Arc::new(ModelSpec::mlp(1, &[], 2).unwrap());
        let p = ParamVector::from_values(PayloadKind::Update, spec.clone(), vec![3.0f64, 4.0, 0.0, 0.0]).unwrap();
        let s = payload_norm_stats(std::slice::from_ref(&p), 10, (-1.0, 1.0)).unwrap();
        assert_eq!(s.mean_norm, 5.0);
        assert_eq!(s.std_norm, 0.0);
        assert_eq!(s.histogram.total(), 4);

        let q = ParamVector::from_values(PayloadKind::Update, spec, vec![0.1f64, -0.2, 7.0, -9.0]).unwrap();
        let a = payload_norm_stats(&[p.clone(), q.clone()], 7, (-1.0, 1.0)).unwrap();
        let b = payload_norm_stats(&[q, p], 7, (-1.0, 1.0)).unwrap();
        assert_eq!(a.histogram.total(), 8);
        assert_eq!(a.histogram, b.histogram);
        assert!((a.mean_norm - b.mean_norm).abs() < 1e-12);
        assert!((a.std_norm - b.std_norm).abs() < 1e-12);
        assert!(payload_norm_stats::<f64>(&[], 7, (-1.0, 1.0)).is_err());
    }

    #[test]
    fn reconstruct_icmi_shared_model() {
        let spec = Arc::new(ModelSpec::mlp(2, &[], 3).unwrap());
        let w = init_params::<f64>(&spec, 3, InitScheme::Glorot);
        let clients: Vec<ClientState<f64>> = (0..3)
            .map(|k| ClientState {
                client_id: k,
                local_model: w.clone(),
                partition: Partition { client_id: k, sample_indices: (0..k + 1).collect() },
                malicious: false,
            })
            .collect();
        let server = ServerState {
            scheme: Scheme::Mub,
            init_mode: InitMode::Icmi,
            broadcast: Some(ParamVector::zeros(PayloadKind::Update, spec)),
            accumulated_global: None,
            initial_model: None,
            round: 1,
        };
        let g = reconstruct_global(&server, &clients).unwrap();
        for (a, b) in g.values().iter().zip(w.values()) {
            assert!((a - b).abs() <= 4.0 * f64::EPSILON * b.abs());
        }
    }
}
