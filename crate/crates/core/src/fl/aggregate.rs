use crate::error::{Error, Result};
use crate::nn::ParamVector;
use crate::real::Real;

/// `|D_k| / Σ|D_k|` for each participant.
pub fn aggregation_weights(sizes: &[usize]) -> Vec<f64> {
    let total: usize = sizes.iter().sum();
    sizes.iter().map(|&s| s as f64 / total as f64).collect()
}

/// Data-size weighted mean of payloads of one kind, reduced in the order given
/// (callers pass ascending client id), so the result is bitwise reproducible.
pub fn aggregate<T: Real>(payloads: &[ParamVector<T>], sizes: &[usize]) -> Result<ParamVector<T>> {
    let first = payloads.first().ok_or_else(|| Error::input("nothing to aggregate"))?;
    if payloads.len() != sizes.len() {
        return Err(Error::input(format!("{} payloads but {} sizes", payloads.len(), sizes.len())));
    }
    if sizes.contains(&0) {
        return Err(Error::input("client data sizes must be positive"));
    }
    for p in &payloads[1..] {
        if p.kind() != first.kind() {
            return Err(Error::Contract(format!("cannot aggregate {:?} with {:?} payloads", first.kind(), p.kind())));
        }
        first.check_compatible(p)?;
    }
    let mut out = ParamVector::zeros(first.kind(), first.layout().clone());
    for (p, w) in payloads.iter().zip(aggregation_weights(sizes)) {
        let w = T::from_f64(w);
        for (o, &v) in out.values_mut().iter_mut().zip(p.values()) {
            *o += w * v;
        }
    }
    Ok(out)
}
