//! Central finite differences, used as an independent oracle for backprop.

use std::sync::Arc;

use rand::Rng;

use crate::data::Batch;
use crate::error::{Error, Result};
use crate::nn::{kink_margin, loss, loss_and_grad, Layer, ModelKind, ModelSpec, ParamVector, PayloadKind, Shape};
use crate::real::{Precision, Real};
use crate::rng::{Purpose, StreamKey};

/// Central differences of an arbitrary scalar function at `x`.
pub fn central_difference<T: Real, F>(x: &[T], epsilon: T, mut f: F) -> Result<Vec<T>>
where
    F: FnMut(&[T]) -> Result<T>,
{
    if epsilon.partial_cmp(&T::ZERO) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::input("epsilon must be positive"));
    }
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let w = x[i];
        let (hi, lo) = (w + epsilon, w - epsilon);
        probe[i] = hi;
        let f_hi = f(&probe)?;
        probe[i] = lo;
        let f_lo = f(&probe)?;
        probe[i] = w;
        // The representable step can differ slightly from 2ε.
        out.push((f_hi - f_lo) / (hi - lo));
    }
    Ok(out)
}

/// Central difference `(L(w+εe_i) − L(w−εe_i)) / 2ε` of the batch loss for
/// every parameter.
pub fn finite_diff_grad<T: Real>(
    spec: &ModelSpec,
    params: &ParamVector<T>,
    batch: &Batch<T>,
    epsilon: T,
) -> Result<ParamVector<T>> {
    let mut probe = params.clone();
    let values = central_difference(params.values(), epsilon, |w| {
        probe.values_mut().copy_from_slice(w);
        loss(spec, &probe, batch)
    })?;
    ParamVector::from_values(PayloadKind::Update, params.layout().clone(), values)
}

/// `‖a − b‖∞ / max(‖a‖∞, ‖b‖∞)`: coordinate errors measured against the
/// gradient's own scale.
pub fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let scale = a.iter().chain(b).fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Step used by [`check_instance`].
pub const GRADCHECK_EPSILON: f64 = 1e-6;

/// Pass threshold on [`max_relative_error`] for the given precision.
pub fn gradcheck_tolerance(precision: Precision) -> f64 {
    match precision {
        Precision::Single => 1e-4,
        Precision::Double => 1e-6,
    }
}

/// Relative error between backprop at `precision` and double-precision
/// central differences on one instance.
pub fn check_instance(inst: &GradcheckInstance, precision: Precision) -> Result<f64> {
    let numeric = finite_diff_grad(&inst.spec, &inst.params, &inst.batch, GRADCHECK_EPSILON)?;
    let analytic: Vec<f64> = match precision {
        Precision::Double => loss_and_grad(&inst.spec, &inst.params, &inst.batch)?.grad.values().to_vec(),
        Precision::Single => {
            let grad = loss_and_grad(&inst.spec, &inst.params.cast::<f32>(), &inst.batch.cast::<f32>())?.grad;
            grad.values().iter().map(|&g| g as f64).collect()
        }
    };
    Ok(max_relative_error(&analytic, numeric.values()))
}

/// A small random network with parameters and a batch, for gradient checking.
#[derive(Clone, Debug)]
pub struct GradcheckInstance {
    pub spec: Arc<ModelSpec>,
    pub params: ParamVector<f64>,
    pub batch: Batch<f64>,
}

/// Minimum kink margin accepted for a random instance.
const MIN_MARGIN: f64 = 1e-3;

/// Below this loss the softmax is saturated and the gradient sinks under the
/// finite-difference rounding floor.
const MIN_LOSS: f64 = 1e-4;

/// Draws the `index`-th random tiny instance of the given family. Instances
/// whose activations sit close to a ReLU or max-pool kink are redrawn so that
/// finite differences stay on one smooth piece, and so are instances with a
/// saturated softmax.
pub fn random_instance(kind: ModelKind, seed: u64, index: u64) -> GradcheckInstance {
    for attempt in 0.. {
        let mut rng = StreamKey::new(seed, Purpose::Gradcheck).client(index).step(attempt).rng();
        let spec = Arc::new(match kind {
            ModelKind::Mlp => {
                let input = rng.random_range(2..=6);
                let depth = rng.random_range(1..=2);
                let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(2..=5)).collect();
                let classes = rng.random_range(2..=4);
                ModelSpec::mlp(input, &hidden, classes).expect("valid random mlp")
            }
            ModelKind::Cnn => {
                let channels = rng.random_range(1..=2);
                let side = rng.random_range(6..=8);
                let filters = rng.random_range(1..=3);
                let k = rng.random_range(2..=3);
                let conv_out = side - k + 1;
                let pooled = conv_out / 2;
                let classes = rng.random_range(2..=4);
                let layers = vec![
                    Layer::Conv { in_channels: channels, out_channels: filters, kernel_h: k, kernel_w: k },
                    Layer::MaxPool { window: 2 },
                    Layer::Relu,
                    Layer::Dense { in_dim: filters * pooled * pooled, out_dim: 4 },
                    Layer::Relu,
                    Layer::Dense { in_dim: 4, out_dim: classes },
                ];
                ModelSpec::new(ModelKind::Cnn, Shape::new(channels, side, side), layers, classes)
                    .expect("valid random cnn")
            }
        });
        let values: Vec<f64> = (0..spec.param_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let params = ParamVector::from_values(PayloadKind::Model, spec.clone(), values).expect("sized to spec");
        let n = rng.random_range(1..=4);
        let inputs: Vec<f64> = (0..n * spec.input_len()).map(|_| rng.random_range(0.0..1.0)).collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..spec.num_classes())).collect();
        let batch = Batch::new(inputs, labels, spec.input_len()).expect("sized to spec");
        let margin = kink_margin(&spec, &params, &batch).expect("consistent instance");
        if margin >= MIN_MARGIN && loss(&spec, &params, &batch).expect("consistent instance") >= MIN_LOSS {
            return GradcheckInstance { spec, params, batch };
        }
    }
    unreachable!()
}
