use crate::data::Batch;
use crate::error::{Error, Result};
use crate::nn::{Layer, LayerParams, ModelSpec, ParamVector, PayloadKind, Shape};
use crate::real::Real;

/// Row-major `batch × num_classes` matrix of pre-softmax scores.
#[derive(Clone, Debug, PartialEq)]
pub struct Logits<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Real> Logits<T> {
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

#[derive(Clone, Debug)]
pub struct GradResult<T> {
    /// Mean cross-entropy over the batch.
    pub loss: T,
    pub grad: ParamVector<T>,
}

/// Per-sample scratch state: the output of every layer.
struct Trace<T> {
    acts: Vec<Vec<T>>,
}

struct Net<'a> {
    layers: &'a [Layer],
    params: Vec<LayerParams>,
    shapes: Vec<Shape>,
}

impl<'a> Net<'a> {
    fn new(spec: &'a ModelSpec) -> Self {
        Net { layers: spec.layers(), params: spec.param_layout(), shapes: spec.shapes() }
    }

    fn trace<T: Real>(&self) -> Trace<T> {
        Trace { acts: self.shapes[1..].iter().map(|s| vec![T::ZERO; s.len()]).collect() }
    }

    fn forward<T: Real>(&self, w: &[T], input: &[T], trace: &mut Trace<T>) {
        for l in 0..self.layers.len() {
            let (done, rest) = trace.acts.split_at_mut(l);
            let x = if l == 0 { input } else { &done[l - 1] };
            let y = &mut rest[0];
            layer_forward(&self.layers[l], &self.params[l], self.shapes[l], w, x, y);
        }
    }

    fn logits<'t, T: Real>(&self, trace: &'t Trace<T>) -> &'t [T] {
        trace.acts.last().expect("at least one layer")
    }

    /// Accumulates `∂loss/∂w` for one sample into `grad`, given `∂loss/∂logits`.
    fn backward<T: Real>(&self, w: &[T], input: &[T], trace: &Trace<T>, dlogits: Vec<T>, grad: &mut [T]) {
        let mut delta = dlogits;
        for l in (0..self.layers.len()).rev() {
            let x = if l == 0 { input } else { &trace.acts[l - 1] };
            delta = layer_backward(
                &self.layers[l],
                &self.params[l],
                self.shapes[l],
                self.shapes[l + 1],
                w,
                x,
                &delta,
                grad,
                l > 0,
            );
        }
    }
}

fn layer_forward<T: Real>(layer: &Layer, lp: &LayerParams, in_shape: Shape, w: &[T], x: &[T], y: &mut [T]) {
    match *layer {
        Layer::Dense { out_dim, .. } => {
            let weights = &w[lp.weights.clone()];
            y.copy_from_slice(&w[lp.bias.clone()]);
            // Input-major weights: each nonzero input adds one scaled row.
            for (i, &xi) in x.iter().enumerate() {
                if xi == T::ZERO {
                    continue;
                }
                let row = &weights[i * out_dim..(i + 1) * out_dim];
                for (yo, &wv) in y.iter_mut().zip(row) {
                    *yo += xi * wv;
                }
            }
        }
        Layer::Conv { in_channels, out_channels, kernel_h, kernel_w } => {
            let weights = &w[lp.weights.clone()];
            let bias = &w[lp.bias.clone()];
            let (h, wd) = (in_shape.height, in_shape.width);
            let (oh, ow) = (h - kernel_h + 1, wd - kernel_w + 1);
            for oc in 0..out_channels {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = bias[oc];
                        for ic in 0..in_channels {
                            let kbase = (oc * in_channels + ic) * kernel_h * kernel_w;
                            for ky in 0..kernel_h {
                                let xrow = (ic * h + oy + ky) * wd + ox;
                                let krow = kbase + ky * kernel_w;
                                for kx in 0..kernel_w {
                                    acc += weights[krow + kx] * x[xrow + kx];
                                }
                            }
                        }
                        y[(oc * oh + oy) * ow + ox] = acc;
                    }
                }
            }
        }
        Layer::MaxPool { window } => {
            let (h, wd) = (in_shape.height, in_shape.width);
            let (oh, ow) = (h / window, wd / window);
            for c in 0..in_shape.channels {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let idx = pool_argmax(x, c, h, wd, oy, ox, window);
                        y[(c * oh + oy) * ow + ox] = x[idx];
                    }
                }
            }
        }
        Layer::Relu => {
            for (yo, &xi) in y.iter_mut().zip(x) {
                *yo = if xi > T::ZERO { xi } else { T::ZERO };
            }
        }
    }
}

/// Index of the first maximal element of a pooling window in row-major order.
#[inline]
fn pool_argmax<T: Real>(x: &[T], c: usize, h: usize, wd: usize, oy: usize, ox: usize, window: usize) -> usize {
    let mut best = (c * h + oy * window) * wd + ox * window;
    for dy in 0..window {
        for dx in 0..window {
            let idx = (c * h + oy * window + dy) * wd + ox * window + dx;
            if x[idx] > x[best] {
                best = idx;
            }
        }
    }
    best
}

#[allow(clippy::too_many_arguments)]
fn layer_backward<T: Real>(
    layer: &Layer,
    lp: &LayerParams,
    in_shape: Shape,
    out_shape: Shape,
    w: &[T],
    x: &[T],
    delta: &[T],
    grad: &mut [T],
    need_input_grad: bool,
) -> Vec<T> {
    match *layer {
        Layer::Dense { in_dim, out_dim } => {
            let weights = &w[lp.weights.clone()];
            {
                let gb = &mut grad[lp.bias.clone()];
                for (g, &d) in gb.iter_mut().zip(delta) {
                    *g += d;
                }
            }
            let gw = &mut grad[lp.weights.clone()];
            for (i, &xi) in x.iter().enumerate() {
                if xi == T::ZERO {
                    continue;
                }
                let grow = &mut gw[i * out_dim..(i + 1) * out_dim];
                for (g, &d) in grow.iter_mut().zip(delta) {
                    *g += xi * d;
                }
            }
            if !need_input_grad {
                return Vec::new();
            }
            (0..in_dim)
                .map(|i| {
                    let row = &weights[i * out_dim..(i + 1) * out_dim];
                    row.iter().zip(delta).map(|(&wv, &d)| wv * d).sum()
                })
                .collect()
        }
        Layer::Conv { in_channels, out_channels, kernel_h, kernel_w } => {
            let (h, wd) = (in_shape.height, in_shape.width);
            let (oh, ow) = (out_shape.height, out_shape.width);
            let weights = &w[lp.weights.clone()];
            let mut dx = if need_input_grad { vec![T::ZERO; in_shape.len()] } else { Vec::new() };
            let (wr, br) = (lp.weights.clone(), lp.bias.clone());
            for oc in 0..out_channels {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let d = delta[(oc * oh + oy) * ow + ox];
                        grad[br.start + oc] += d;
                        if d == T::ZERO {
                            continue;
                        }
                        for ic in 0..in_channels {
                            let kbase = (oc * in_channels + ic) * kernel_h * kernel_w;
                            for ky in 0..kernel_h {
                                let xrow = (ic * h + oy + ky) * wd + ox;
                                let krow = kbase + ky * kernel_w;
                                for kx in 0..kernel_w {
                                    grad[wr.start + krow + kx] += d * x[xrow + kx];
                                    if need_input_grad {
                                        dx[xrow + kx] += d * weights[krow + kx];
                                    }
                                }
                            }
                        }
                    }
                }
            }
            dx
        }
        Layer::MaxPool { window } => {
            let (h, wd) = (in_shape.height, in_shape.width);
            let (oh, ow) = (out_shape.height, out_shape.width);
            let mut dx = vec![T::ZERO; in_shape.len()];
            for c in 0..in_shape.channels {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let idx = pool_argmax(x, c, h, wd, oy, ox, window);
                        dx[idx] += delta[(c * oh + oy) * ow + ox];
                    }
                }
            }
            dx
        }
        Layer::Relu => x.iter().zip(delta).map(|(&xi, &d)| if xi > T::ZERO { d } else { T::ZERO }).collect(),
    }
}

fn check_inputs<T: Real>(spec: &ModelSpec, params: &ParamVector<T>, batch: &Batch<T>) -> Result<()> {
    params.check_layout(spec)?;
    if params.kind() != PayloadKind::Model {
        return Err(Error::Contract("forward pass needs a model, not an update".into()));
    }
    if batch.sample_len() != spec.input_len() {
        return Err(Error::layout(format!(
            "samples have {} features, model expects {}",
            batch.sample_len(),
            spec.input_len()
        )));
    }
    Ok(())
}

fn check_labels<T: Real>(spec: &ModelSpec, batch: &Batch<T>) -> Result<()> {
    if let Some(&bad) = batch.labels().iter().find(|&&y| y >= spec.num_classes()) {
        return Err(Error::input(format!("label {bad} out of range for {} classes", spec.num_classes())));
    }
    Ok(())
}

/// Logits for every sample of the batch. Pure: `params` is not modified.
pub fn forward<T: Real>(spec: &ModelSpec, params: &ParamVector<T>, batch: &Batch<T>) -> Result<Logits<T>> {
    check_inputs(spec, params, batch)?;
    let net = Net::new(spec);
    let mut trace = net.trace();
    let cols = spec.num_classes();
    let mut data = Vec::with_capacity(batch.len() * cols);
    for i in 0..batch.len() {
        net.forward(params.values(), batch.sample(i), &mut trace);
        data.extend_from_slice(net.logits(&trace));
    }
    Ok(Logits { rows: batch.len(), cols, data })
}

/// Row-wise softmax.
pub fn softmax<T: Real>(logits: &Logits<T>) -> Vec<T> {
    let mut out = Vec::with_capacity(logits.data.len());
    for r in 0..logits.rows {
        let row = logits.row(r);
        let m = row.iter().copied().fold(row[0], T::max);
        let exps: Vec<T> = row.iter().map(|&z| (z - m).exp()).collect();
        let total: T = exps.iter().copied().sum();
        out.extend(exps.into_iter().map(|e| e / total));
    }
    out
}

/// Loss of one sample and its gradient w.r.t. the logits (unscaled).
fn sample_cross_entropy<T: Real>(z: &[T], label: usize) -> (T, Vec<T>) {
    let m = z.iter().copied().fold(z[0], T::max);
    let exps: Vec<T> = z.iter().map(|&v| (v - m).exp()).collect();
    let total: T = exps.iter().copied().sum();
    let log_sum = m + total.ln();
    let loss = log_sum - z[label];
    let mut d: Vec<T> = exps.into_iter().map(|e| e / total).collect();
    d[label] -= T::ONE;
    (loss, d)
}

/// Mean softmax cross-entropy of a logit matrix and its gradient w.r.t. the logits.
pub fn softmax_cross_entropy<T: Real>(logits: &Logits<T>, labels: &[usize]) -> Result<(T, Vec<T>)> {
    if labels.len() != logits.rows || logits.rows == 0 {
        return Err(Error::input("one label per logit row required"));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= logits.cols) {
        return Err(Error::input(format!("label {bad} out of range for {} classes", logits.cols)));
    }
    let inv_n = T::ONE / T::from_f64(logits.rows as f64);
    let mut total = T::ZERO;
    let mut grad = Vec::with_capacity(logits.data.len());
    for (r, &y) in labels.iter().enumerate() {
        let (l, d) = sample_cross_entropy(logits.row(r), y);
        total += l;
        grad.extend(d.into_iter().map(|v| v * inv_n));
    }
    Ok((total * inv_n, grad))
}

/// Mean cross-entropy of the batch.
pub fn loss<T: Real>(spec: &ModelSpec, params: &ParamVector<T>, batch: &Batch<T>) -> Result<T> {
    check_labels(spec, batch)?;
    let logits = forward(spec, params, batch)?;
    Ok(softmax_cross_entropy(&logits, batch.labels())?.0)
}

/// Mean batch cross-entropy and its exact gradient by backpropagation.
pub fn loss_and_grad<T: Real>(spec: &ModelSpec, params: &ParamVector<T>, batch: &Batch<T>) -> Result<GradResult<T>> {
    let mut grad = ParamVector::zeros(PayloadKind::Update, params.layout().clone());
    let loss = loss_and_grad_into(spec, params, batch, &mut grad)?;
    Ok(GradResult { loss, grad })
}

/// [`loss_and_grad`] writing into a caller-owned gradient buffer.
pub(crate) fn loss_and_grad_into<T: Real>(
    spec: &ModelSpec,
    params: &ParamVector<T>,
    batch: &Batch<T>,
    grad: &mut ParamVector<T>,
) -> Result<T> {
    check_inputs(spec, params, batch)?;
    check_labels(spec, batch)?;
    params.check_compatible(grad)?;
    let net = Net::new(spec);
    let mut trace = net.trace();
    let w = params.values();
    grad.values_mut().fill(T::ZERO);
    let inv_n = T::ONE / T::from_f64(batch.len() as f64);
    let mut total = T::ZERO;
    for i in 0..batch.len() {
        let input = batch.sample(i);
        net.forward(w, input, &mut trace);
        let (l, mut d) = sample_cross_entropy(net.logits(&trace), batch.labels()[i]);
        total += l;
        for v in &mut d {
            *v *= inv_n;
        }
        net.backward(w, input, &trace, d, grad.values_mut());
    }
    Ok(total * inv_n)
}

/// `params − eta · grad`, coordinate-wise.
pub fn sgd_step<T: Real>(params: &ParamVector<T>, grad: &ParamVector<T>, eta: T) -> Result<ParamVector<T>> {
    let mut out = params.clone();
    sgd_step_in_place(&mut out, grad, eta)?;
    Ok(out)
}

pub(crate) fn sgd_step_in_place<T: Real>(params: &mut ParamVector<T>, grad: &ParamVector<T>, eta: T) -> Result<()> {
    params.check_compatible(grad)?;
    if params.kind() != PayloadKind::Model {
        return Err(Error::Contract("SGD steps apply to models".into()));
    }
    for (p, &g) in params.values_mut().iter_mut().zip(grad.values()) {
        *p -= eta * g;
    }
    Ok(())
}

/// Smallest distance of any ReLU input from zero, or of any pooling window's
/// runner-up from its maximum, over the batch. Finite differences are only
/// trustworthy when this exceeds the perturbation size.
pub fn kink_margin<T: Real>(spec: &ModelSpec, params: &ParamVector<T>, batch: &Batch<T>) -> Result<f64> {
    check_inputs(spec, params, batch)?;
    let net = Net::new(spec);
    let mut trace = net.trace();
    let mut margin = f64::INFINITY;
    for i in 0..batch.len() {
        let input = batch.sample(i);
        net.forward(params.values(), input, &mut trace);
        for (l, layer) in spec.layers().iter().enumerate() {
            let x = if l == 0 { input } else { &trace.acts[l - 1] };
            match *layer {
                Layer::Relu => {
                    for &v in x {
                        margin = margin.min(v.to_f64().abs());
                    }
                }
                Layer::MaxPool { window } => {
                    let s = net.shapes[l];
                    for c in 0..s.channels {
                        for oy in 0..s.height / window {
                            for ox in 0..s.width / window {
                                let mut vals: Vec<f64> = (0..window * window)
                                    .map(|k| {
                                        let (dy, dx) = (k / window, k % window);
                                        x[(c * s.height + oy * window + dy) * s.width + ox * window + dx].to_f64()
                                    })
                                    .collect();
                                vals.sort_by(|a, b| b.total_cmp(a));
                                if vals.len() > 1 {
                                    margin = margin.min(vals[0] - vals[1]);
                                }
                            }
                        }
                    }
                }
                _ => {}
            }
        }
    }
    Ok(margin)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::nn::{init_params, InitScheme, ModelKind};

    fn batch_f64(samples: &[&[f64]], labels: &[usize]) -> Batch<f64> {
        let inputs = samples.iter().flat_map(|s| s.iter().copied()).collect();
        Batch::new(inputs, labels.to_vec(), samples[0].len()).unwrap()
    }

    #[test]
    fn zero_model_gives_uniform_softmax() {
        let spec = Arc::new(ModelSpec::mnist_mlp());
        let params = init_params::<f64>(&spec, 1, InitScheme::Zero);
        let batch = Batch::new(vec![0.5; 784 * 2], vec![3, 7], 784).unwrap();
        let logits = forward(&spec, &params, &batch).unwrap();
        assert!(logits.data.iter().all(|&z| z == 0.0));
        for p in softmax(&logits) {
            assert!((p - 0.1).abs() < 1e-15);
        }
        let res = loss_and_grad(&spec, &params, &batch).unwrap();
        assert!((res.loss - 10f64.ln()).abs() < 1e-12);
        assert!((res.loss - std::f64::consts::LN_10).abs() < 1e-6);
    }

    #[test]
    fn identity_dense_layer() {
        let spec = Arc::new(
            ModelSpec::new(ModelKind::Mlp, Shape::flat(2), vec![Layer::Dense { in_dim: 2, out_dim: 2 }], 2).unwrap(),
        );
        // weights (input-major) then bias
        let params =
            ParamVector::from_values(PayloadKind::Model, spec.clone(), vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let logits = forward(&spec, &params, &batch_f64(&[&[0.3, 0.7]], &[0])).unwrap();
        assert_eq!(logits.data, vec![0.3, 0.7]);
    }

    #[test]
    fn label_out_of_range_is_input_error() {
        let spec = Arc::new(ModelSpec::mlp(2, &[], 2).unwrap());
        let params = init_params::<f64>(&spec, 1, InitScheme::Glorot);
        let err = loss_and_grad(&spec, &params, &batch_f64(&[&[0.1, 0.2]], &[2])).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }

    #[test]
    fn wrong_sample_width_is_layout_error() {
        let spec = Arc::new(ModelSpec::mlp(3, &[], 2).unwrap());
        let params = init_params::<f64>(&spec, 1, InitScheme::Glorot);
        let err = forward(&spec, &params, &batch_f64(&[&[0.1, 0.2]], &[0])).unwrap_err();
        assert!(matches!(err, Error::Layout(_)));
    }

    #[test]
    fn duplicated_sample_matches_single() {
        let spec = Arc::new(ModelSpec::mlp(4, &[5], 3).unwrap());
        let params = init_params::<f64>(&spec, 3, InitScheme::Glorot);
        let x = [0.1, 0.9, 0.4, 0.0];
        let one = loss_and_grad(&spec, &params, &batch_f64(&[&x], &[1])).unwrap();
        let two = loss_and_grad(&spec, &params, &batch_f64(&[&x, &x], &[1, 1])).unwrap();
        assert_eq!(one.loss, two.loss);
        assert_eq!(one.grad.values(), two.grad.values());
    }

    #[test]
    fn sgd_step_arithmetic() {
        let spec = Arc::new(ModelSpec::mlp(1, &[], 2).unwrap());
        assert_eq!(spec.param_count(), 4);
        let p = ParamVector::from_values(PayloadKind::Model, spec.clone(), vec![1.0, 1.0, 0.5, -0.25]).unwrap();
        let g = ParamVector::from_values(PayloadKind::Update, spec.clone(), vec![2.0, -2.0, 0.0, 0.0]).unwrap();
        let stepped = sgd_step(&p, &g, 0.01).unwrap();
        assert!((stepped.values()[0] - 0.98).abs() < 1e-15);
        assert!((stepped.values()[1] - 1.02).abs() < 1e-15);
        assert_eq!(&stepped.values()[2..], &[0.5, -0.25]);

        let zero = ParamVector::zeros(PayloadKind::Update, spec.clone());
        assert_eq!(sgd_step(&p, &zero, 0.01).unwrap(), p);

        // Dyadic values make the round trip exact.
        let g2 = ParamVector::from_values(PayloadKind::Update, spec.clone(), vec![0.5, -0.25, 2.0, 8.0]).unwrap();
        let mut neg = g2.clone();
        neg.values_mut().iter_mut().for_each(|v| *v = -*v);
        let back = sgd_step(&sgd_step(&p, &g2, 0.125).unwrap(), &neg, 0.125).unwrap();
        assert_eq!(back, p);

        assert!(matches!(sgd_step(&g, &g, 0.1), Err(Error::Contract(_))));
    }
}
