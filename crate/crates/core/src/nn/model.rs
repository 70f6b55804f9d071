use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{image_to_input, LayerShape, NetConfig, NnError, Real, Tensor};
use crate::dataset::EmotionLabel;
use crate::imgproc::GrayImage;

/// Whether dropout is active. Training masks are derived from `seed` and the
/// row index, so they do not depend on evaluation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Inference,
    Training { seed: u64 },
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// One gradient tensor per parameter tensor, same order and shapes.
pub type Gradients<T> = Vec<Tensor<T>>;

#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel<T> {
    config: NetConfig,
    layers: Vec<LayerShape>,
    params: Vec<Tensor<T>>,
    rng_seed: u64,
}

/// Activations kept from the forward pass of one sample.
struct Trace<T> {
    /// Input to each layer, then the final logits.
    acts: Vec<Vec<T>>,
    /// Max-pool argmax positions (into the pool input), per pool layer.
    pool_idx: Vec<Vec<usize>>,
    dropout_mask: Option<Vec<T>>,
}

impl<T: Real> CnnModel<T> {
    /// Glorot-uniform weights, zero biases.
    pub fn init(config: NetConfig, seed: u64) -> Result<Self, NnError> {
        let layers = config.layers()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        for shape in config.parameter_shapes()? {
            let tensor = if shape.len() == 1 {
                Tensor::zeros(shape)
            } else {
                let (fan_in, fan_out) = if shape.len() == 4 {
                    let k2 = shape[2] * shape[3];
                    (shape[1] * k2, shape[0] * k2)
                } else {
                    (shape[1], shape[0])
                };
                let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let n: usize = shape.iter().product();
                let data = (0..n).map(|_| T::from_f64_lossy(rng.gen_range(-a..a))).collect();
                Tensor::new(shape, data)?
            };
            params.push(tensor);
        }
        Ok(Self { config, layers, params, rng_seed: seed })
    }

    pub(crate) fn from_parts(config: NetConfig, params: Vec<Tensor<T>>, rng_seed: u64) -> Result<Self, NnError> {
        let layers = config.layers()?;
        let shapes = config.parameter_shapes()?;
        if shapes.len() != params.len() || shapes.iter().zip(&params).any(|(s, p)| s.as_slice() != p.shape()) {
            return Err(NnError::CorruptFile("parameter shapes do not match config".into()));
        }
        Ok(Self { config, layers, params, rng_seed })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn parameters(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn parameters_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Copy of the model in another scalar type.
    pub fn cast<U: Real>(&self) -> CnnModel<U> {
        CnnModel {
            config: self.config.clone(),
            layers: self.layers.clone(),
            params: self.params.iter().map(Tensor::cast).collect(),
            rng_seed: self.rng_seed,
        }
    }

    fn input_len(&self) -> usize {
        self.config.input_size * self.config.input_size
    }

    fn check_batch(&self, batch: &Tensor<T>) -> Result<usize, NnError> {
        let s = self.config.input_size;
        let shape = batch.shape();
        let ok = shape.len() == 4 && shape[1] == s && shape[2] == s && shape[3] == 1;
        if !ok {
            return Err(NnError::ShapeMismatch { expected: vec![shape.first().copied().unwrap_or(0), s, s, 1], got: shape.to_vec() });
        }
        Ok(shape[0])
    }

    /// Softmax class probabilities, shape `(n, 6)`.
    pub fn forward(&self, batch: &Tensor<T>, mode: Mode) -> Result<Tensor<T>, NnError> {
        let n = self.check_batch(batch)?;
        let mut out = Vec::with_capacity(n * self.config.num_classes);
        for i in 0..n {
            let trace = self.forward_sample(batch.row(i), mode, i);
            out.extend(softmax(trace.acts.last().expect("logits")));
        }
        Tensor::new(vec![n, self.config.num_classes], out)
    }

    /// Inference probabilities for one image at the network's input size.
    pub fn probabilities(&self, img: &GrayImage) -> Result<[f64; 6], NnError> {
        let s = self.config.input_size;
        if img.width() != s || img.height() != s {
            return Err(NnError::ShapeMismatch { expected: vec![s, s], got: vec![img.height(), img.width()] });
        }
        let input = image_to_input::<T>(img);
        let trace = self.forward_sample(&input, Mode::Inference, 0);
        let probs = softmax(trace.acts.last().expect("logits"));
        let mut out = [0.0; 6];
        for (o, p) in out.iter_mut().zip(probs) {
            *o = p.to_f64().expect("finite");
        }
        Ok(out)
    }

    pub fn predict_label(&self, img: &GrayImage) -> Result<EmotionLabel, NnError> {
        let probs = self.probabilities(img)?;
        Ok(EmotionLabel::from_index(argmax(&probs)).expect("six classes"))
    }

    /// Mean cross-entropy over the batch and its gradient for every parameter.
    pub fn loss_and_gradients(
        &self,
        batch: &Tensor<T>,
        labels: &[usize],
        mode: Mode,
    ) -> Result<(T, Gradients<T>), NnError> {
        let n = self.check_batch(batch)?;
        if labels.len() != n {
            return Err(NnError::ShapeMismatch { expected: vec![n], got: vec![labels.len()] });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= self.config.num_classes) {
            return Err(NnError::LabelOutOfRange(bad));
        }
        let mut grads: Gradients<T> = self.params.iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect();
        let mut total = T::zero();
        for (i, &label) in labels.iter().enumerate() {
            let trace = self.forward_sample(batch.row(i), mode, i);
            let probs = softmax(trace.acts.last().expect("logits"));
            total += -probs[label].max(T::min_positive_value()).ln();
            let mut delta = probs;
            delta[label] -= T::one();
            self.backward_sample(&trace, delta, &mut grads);
        }
        let scale = T::one() / T::from_usize(n).expect("batch size");
        for g in &mut grads {
            g.data_mut().iter_mut().for_each(|v| *v *= scale);
        }
        Ok((total * scale, grads))
    }

    /// Mean cross-entropy only.
    pub fn loss(&self, batch: &Tensor<T>, labels: &[usize], mode: Mode) -> Result<T, NnError> {
        let probs = self.forward(batch, mode)?;
        if labels.len() != probs.shape()[0] {
            return Err(NnError::ShapeMismatch { expected: vec![probs.shape()[0]], got: vec![labels.len()] });
        }
        let mut total = T::zero();
        for (i, &l) in labels.iter().enumerate() {
            let row = probs.row(i);
            let p = *row.get(l).ok_or(NnError::LabelOutOfRange(l))?;
            total += -p.max(T::min_positive_value()).ln();
        }
        Ok(total / T::from_usize(labels.len()).expect("batch size"))
    }

    fn forward_sample(&self, input: &[T], mode: Mode, row: usize) -> Trace<T> {
        debug_assert_eq!(input.len(), self.input_len());
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut pool_idx = Vec::new();
        let mut dropout_mask = None;
        let mut x = input.to_vec();
        let mut p = 0;
        for layer in &self.layers {
            let next = match *layer {
                LayerShape::Conv { in_c, out_c, kernel, stride, in_hw, out_hw } => {
                    let mut y = conv_forward(&x, &self.params[p].data, &self.params[p + 1].data, in_c, out_c, kernel, stride, in_hw, out_hw);
                    p += 2;
                    relu(&mut y);
                    y
                }
                LayerShape::Pool { channels, in_hw, out_hw } => {
                    let (y, idx) = maxpool_forward(&x, channels, in_hw, out_hw);
                    pool_idx.push(idx);
                    y
                }
                LayerShape::Fc { inputs, outputs, relu: act, dropout } => {
                    let mut y = fc_forward(&x, &self.params[p].data, &self.params[p + 1].data, inputs, outputs);
                    p += 2;
                    if act {
                        relu(&mut y);
                    }
                    if dropout {
                        if let Mode::Training { seed } = mode {
                            let mask = dropout_mask_for(self.config.dropout_rate, outputs, seed, row);
                            y.iter_mut().zip(&mask).for_each(|(v, m)| *v *= *m);
                            dropout_mask = Some(mask);
                        }
                    }
                    y
                }
            };
            acts.push(std::mem::replace(&mut x, next));
        }
        acts.push(x);
        Trace { acts, pool_idx, dropout_mask }
    }

    /// Accumulates parameter gradients given d(loss)/d(logits).
    fn backward_sample(&self, trace: &Trace<T>, mut delta: Vec<T>, grads: &mut Gradients<T>) {
        let mut p = self.params.len();
        let mut pool = trace.pool_idx.len();
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let input = &trace.acts[li];
            let output = &trace.acts[li + 1];
            delta = match *layer {
                LayerShape::Fc { inputs, outputs, relu: act, dropout } => {
                    p -= 2;
                    if dropout {
                        if let Some(mask) = &trace.dropout_mask {
                            delta.iter_mut().zip(mask).for_each(|(d, m)| *d *= *m);
                        }
                    }
                    if act {
                        relu_backward(&mut delta, output);
                    }
                    let (gw, rest) = grads[p..].split_at_mut(1);
                    fc_backward(input, &delta, &self.params[p].data, &mut gw[0].data, &mut rest[0].data, inputs, outputs, li > 0)
                }
                LayerShape::Pool { channels, in_hw, out_hw } => {
                    pool -= 1;
                    maxpool_backward(&delta, &trace.pool_idx[pool], channels * in_hw * in_hw, channels * out_hw * out_hw)
                }
                LayerShape::Conv { in_c, out_c, kernel, stride, in_hw, out_hw } => {
                    p -= 2;
                    relu_backward(&mut delta, output);
                    let (gw, rest) = grads[p..].split_at_mut(1);
                    conv_backward(
                        input,
                        &delta,
                        &self.params[p].data,
                        &mut gw[0].data,
                        &mut rest[0].data,
                        ConvGeom { in_c, out_c, kernel, stride, in_hw, out_hw },
                        li > 0,
                    )
                }
            };
        }
    }
}

fn dropout_mask_for<T: Real>(rate: f64, n: usize, seed: u64, row: usize) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (row as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let keep = T::from_f64_lossy(1.0 / (1.0 - rate));
    (0..n).map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep }).collect()
}

pub(crate) fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - m).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn relu<T: Real>(x: &mut [T]) {
    for v in x {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

fn relu_backward<T: Real>(delta: &mut [T], activated: &[T]) {
    for (d, &a) in delta.iter_mut().zip(activated) {
        if a <= T::zero() {
            *d = T::zero();
        }
    }
}

#[derive(Clone, Copy)]
struct ConvGeom {
    in_c: usize,
    out_c: usize,
    kernel: usize,
    stride: usize,
    in_hw: usize,
    out_hw: usize,
}

impl ConvGeom {
    /// Output index range along one axis for which `o * stride + k - pad`
    /// stays inside the input.
    #[inline]
    fn valid_range(&self, k: usize) -> (usize, usize) {
        let pad = self.kernel / 2;
        let lo = if k < pad { (pad - k).div_ceil(self.stride) } else { 0 };
        let last_in = self.in_hw - 1 + pad;
        if last_in < k {
            return (0, 0);
        }
        let hi = ((last_in - k) / self.stride + 1).min(self.out_hw);
        (lo.min(hi), hi)
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_forward<T: Real>(
    x: &[T],
    w: &[T],
    b: &[T],
    in_c: usize,
    out_c: usize,
    kernel: usize,
    stride: usize,
    in_hw: usize,
    out_hw: usize,
) -> Vec<T> {
    let g = ConvGeom { in_c, out_c, kernel, stride, in_hw, out_hw };
    let pad = kernel / 2;
    let plane = out_hw * out_hw;
    let mut y = vec![T::zero(); out_c * plane];
    for oc in 0..out_c {
        let out = &mut y[oc * plane..(oc + 1) * plane];
        out.iter_mut().for_each(|v| *v = b[oc]);
        for ic in 0..in_c {
            let src = &x[ic * in_hw * in_hw..(ic + 1) * in_hw * in_hw];
            for ky in 0..kernel {
                let (oy0, oy1) = g.valid_range(ky);
                for kx in 0..kernel {
                    let wv = w[((oc * in_c + ic) * kernel + ky) * kernel + kx];
                    let (ox0, ox1) = g.valid_range(kx);
                    for oy in oy0..oy1 {
                        let iy = oy * stride + ky - pad;
                        let src_row = &src[iy * in_hw..(iy + 1) * in_hw];
                        let out_row = &mut out[oy * out_hw..(oy + 1) * out_hw];
                        if stride == 1 {
                            let off = ox0 + kx - pad;
                            for (o, &s) in out_row[ox0..ox1].iter_mut().zip(&src_row[off..off + (ox1 - ox0)]) {
                                *o += wv * s;
                            }
                        } else {
                            for ox in ox0..ox1 {
                                out_row[ox] += wv * src_row[ox * stride + kx - pad];
                            }
                        }
                    }
                }
            }
        }
    }
    y
}

/// Returns d(loss)/d(input) when `need_input_grad`, else an empty vector.
fn conv_backward<T: Real>(
    x: &[T],
    delta: &[T],
    w: &[T],
    gw: &mut [T],
    gb: &mut [T],
    g: ConvGeom,
    need_input_grad: bool,
) -> Vec<T> {
    let ConvGeom { in_c, out_c, kernel, stride, in_hw, out_hw } = g;
    let pad = kernel / 2;
    let plane = out_hw * out_hw;
    let in_plane = in_hw * in_hw;
    let mut dx = if need_input_grad { vec![T::zero(); in_c * in_plane] } else { Vec::new() };
    for oc in 0..out_c {
        let d = &delta[oc * plane..(oc + 1) * plane];
        gb[oc] += d.iter().copied().sum::<T>();
        for ic in 0..in_c {
            let src = &x[ic * in_plane..(ic + 1) * in_plane];
            for ky in 0..kernel {
                let (oy0, oy1) = g.valid_range(ky);
                for kx in 0..kernel {
                    let widx = ((oc * in_c + ic) * kernel + ky) * kernel + kx;
                    let wv = w[widx];
                    let (ox0, ox1) = g.valid_range(kx);
                    let mut acc = T::zero();
                    for oy in oy0..oy1 {
                        let iy = oy * stride + ky - pad;
                        let d_row = &d[oy * out_hw..(oy + 1) * out_hw];
                        if stride == 1 {
                            let off = ox0 + kx - pad;
                            let n = ox1 - ox0;
                            let s_row = &src[iy * in_hw + off..iy * in_hw + off + n];
                            for (&dv, &sv) in d_row[ox0..ox1].iter().zip(s_row) {
                                acc += dv * sv;
                            }
                            if need_input_grad {
                                let dx_row = &mut dx[ic * in_plane + iy * in_hw + off..ic * in_plane + iy * in_hw + off + n];
                                for (o, &dv) in dx_row.iter_mut().zip(&d_row[ox0..ox1]) {
                                    *o += wv * dv;
                                }
                            }
                        } else {
                            for ox in ox0..ox1 {
                                let ix = ox * stride + kx - pad;
                                acc += d_row[ox] * src[iy * in_hw + ix];
                                if need_input_grad {
                                    dx[ic * in_plane + iy * in_hw + ix] += wv * d_row[ox];
                                }
                            }
                        }
                    }
                    gw[widx] += acc;
                }
            }
        }
    }
    dx
}

fn maxpool_forward<T: Real>(x: &[T], channels: usize, in_hw: usize, out_hw: usize) -> (Vec<T>, Vec<usize>) {
    let mut y = Vec::with_capacity(channels * out_hw * out_hw);
    let mut idx = Vec::with_capacity(y.capacity());
    for c in 0..channels {
        let base = c * in_hw * in_hw;
        for oy in 0..out_hw {
            for ox in 0..out_hw {
                let mut best = base + 2 * oy * in_hw + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = base + (2 * oy + dy) * in_hw + 2 * ox + dx;
                    if x[i] > x[best] {
                        best = i;
                    }
                }
                y.push(x[best]);
                idx.push(best);
            }
        }
    }
    (y, idx)
}

fn maxpool_backward<T: Real>(delta: &[T], idx: &[usize], in_len: usize, out_len: usize) -> Vec<T> {
    debug_assert_eq!(idx.len(), out_len);
    let mut dx = vec![T::zero(); in_len];
    for (&d, &i) in delta.iter().zip(idx) {
        dx[i] += d;
    }
    dx
}

fn fc_forward<T: Real>(x: &[T], w: &[T], b: &[T], inputs: usize, outputs: usize) -> Vec<T> {
    (0..outputs)
        .map(|o| {
            let row = &w[o * inputs..(o + 1) * inputs];
            b[o] + row.iter().zip(x).map(|(&a, &v)| a * v).sum::<T>()
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn fc_backward<T: Real>(
    x: &[T],
    delta: &[T],
    w: &[T],
    gw: &mut [T],
    gb: &mut [T],
    inputs: usize,
    outputs: usize,
    need_input_grad: bool,
) -> Vec<T> {
    let mut dx = if need_input_grad { vec![T::zero(); inputs] } else { Vec::new() };
    for o in 0..outputs {
        let d = delta[o];
        gb[o] += d;
        if d == T::zero() {
            continue;
        }
        let grow = &mut gw[o * inputs..(o + 1) * inputs];
        for (g, &v) in grow.iter_mut().zip(x) {
            *g += d * v;
        }
        if need_input_grad {
            let wrow = &w[o * inputs..(o + 1) * inputs];
            for (g, &wv) in dx.iter_mut().zip(wrow) {
                *g += d * wv;
            }
        }
    }
    dx
}
