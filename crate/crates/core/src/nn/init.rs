use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{ModelSpec, ParamVector, PayloadKind};
use crate::real::Real;
use crate::rng::{Purpose, StreamKey};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// Weights uniform in ±sqrt(6 / (fan_in + fan_out)), biases zero.
    Glorot,
    Zero,
}

/// Fresh model parameters, a deterministic function of `(spec, seed, scheme)`.
pub fn init_params<T: Real>(spec: &Arc<ModelSpec>, seed: u64, scheme: InitScheme) -> ParamVector<T> {
    let mut params = ParamVector::zeros(PayloadKind::Model, Arc::clone(spec));
    if scheme == InitScheme::Zero {
        return params;
    }
    let mut rng = StreamKey::new(seed, Purpose::Params).rng();
    let values = params.values_mut();
    for (layer, lp) in spec.layers().iter().zip(spec.param_layout()) {
        if lp.weights.is_empty() {
            continue;
        }
        let (fan_in, fan_out) = layer.fans();
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for v in &mut values[lp.weights] {
            *v = T::from_f64(rng.random_range(-limit..limit));
        }
    }
    params
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn glorot_is_deterministic_and_bounded() {
        let spec = Arc::new(ModelSpec::mnist_mlp());
        let a = init_params::<f32>(&spec, 7, InitScheme::Glorot);
        let b = init_params::<f32>(&spec, 7, InitScheme::Glorot);
        assert_eq!(a.len(), 159_010);
        assert_eq!(a, b);
        assert_ne!(a, init_params::<f32>(&spec, 8, InitScheme::Glorot));

        let limit = (6.0f64 / (784.0 + 200.0)).sqrt() as f32;
        let layout = spec.param_layout();
        assert!(a.values()[layout[0].weights.clone()].iter().all(|v| v.abs() <= limit));
        assert!(a.values()[layout[0].bias.clone()].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_scheme_is_all_zero() {
        for spec in [ModelSpec::mnist_mlp(), ModelSpec::mnist_cnn()] {
            let p = init_params::<f64>(&Arc::new(spec.clone()), 99, InitScheme::Zero);
            assert_eq!(p.len(), spec.param_count());
            assert!(p.values().iter().all(|&v| v == 0.0));
        }
    }
}
