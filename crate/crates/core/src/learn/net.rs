//! Small convolutional classifier with hand-written backpropagation.
//!
//! Activations are kept channel-last (`[batch, y, x, channel]`) so that a
//! 3×3 convolution is one matrix product over an im2col buffer.

use std::fmt;

use ndarray::{Array1, Array2, Array4, ArrayView2, ArrayView4, Axis, LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub trait Scalar: Float + FromPrimitive + LinalgScalar + ScalarOperand + Send + Sync + fmt::Debug + 'static {}
impl<T: Float + FromPrimitive + LinalgScalar + ScalarOperand + Send + Sync + fmt::Debug + 'static> Scalar for T {}

fn lit<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("representable constant")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Widths {
    pub conv1: usize,
    pub conv2: usize,
    pub hidden: usize,
}

impl Widths {
    pub const DEFAULT: Widths = Widths { conv1: 16, conv2: 32, hidden: 128 };
}

impl Default for Widths {
    fn default() -> Self {
        Widths::DEFAULT
    }
}

/// conv(3×3, pad 1) → relu → maxpool(2) → conv(3×3, pad 1) → relu →
/// maxpool(2) → dense → relu → dense, on single-channel input.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallNet<T> {
    pub input_size: usize,
    pub n_classes: usize,
    pub widths: Widths,
    /// `[9, conv1]`, rows ordered `(ky, kx)`.
    pub conv1_w: Array2<T>,
    pub conv1_b: Array1<T>,
    /// `[9·conv1, conv2]`, rows ordered `(ky, kx, cin)`.
    pub conv2_w: Array2<T>,
    pub conv2_b: Array1<T>,
    /// `[q·q·conv2, hidden]` with `q = input_size / 4`, rows ordered `(y, x, c)`.
    pub fc1_w: Array2<T>,
    pub fc1_b: Array1<T>,
    /// `[hidden, n_classes]`.
    pub fc2_w: Array2<T>,
    pub fc2_b: Array1<T>,
}

pub const PARAMETER_NAMES: [&str; 8] = ["conv1.w", "conv1.b", "conv2.w", "conv2.b", "fc1.w", "fc1.b", "fc2.w", "fc2.b"];

/// Intermediate values kept for the backward pass.
pub struct ForwardCache<T> {
    batch: usize,
    cols1: Array2<T>,
    relu1: Array4<T>,
    pool1_idx: Vec<usize>,
    cols2: Array2<T>,
    relu2: Array4<T>,
    pool2_idx: Vec<usize>,
    flat: Array2<T>,
    hidden: Array2<T>,
    pub logits: Array2<T>,
}

impl<T: Scalar> SmallNet<T> {
    /// He-normal weights, biases 0.01.
    pub fn new(input_size: usize, n_classes: usize, widths: Widths, seed: u64) -> Result<Self> {
        if input_size < 4 || input_size % 4 != 0 {
            return Err(Error::Config(format!("SmallNet input size must be a positive multiple of 4, got {input_size}")));
        }
        if n_classes < 2 || widths.conv1 == 0 || widths.conv2 == 0 || widths.hidden == 0 {
            return Err(Error::Config("SmallNet needs >= 2 classes and nonzero widths".into()));
        }
        let q = input_size / 4;
        let mut rng = rng::rng_from(seed, &[rng::tag("smallnet-init")]);
        let mut he = |rows: usize, cols: usize| {
            let normal = Normal::new(0.0, (2.0 / rows as f64).sqrt()).expect("valid std");
            Array2::from_shape_simple_fn((rows, cols), || lit::<T>(normal.sample(&mut rng)))
        };
        let bias = |n: usize| Array1::from_elem(n, lit::<T>(0.01));
        Ok(SmallNet {
            input_size,
            n_classes,
            widths,
            conv1_w: he(9, widths.conv1),
            conv1_b: bias(widths.conv1),
            conv2_w: he(9 * widths.conv1, widths.conv2),
            conv2_b: bias(widths.conv2),
            fc1_w: he(q * q * widths.conv2, widths.hidden),
            fc1_b: bias(widths.hidden),
            fc2_w: he(widths.hidden, n_classes),
            fc2_b: bias(n_classes),
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// All parameter tensors as flat slices, in [`PARAMETER_NAMES`] order.
    pub fn tensors(&self) -> [&[T]; 8] {
        fn s<T>(a: Option<&[T]>) -> &[T] {
            a.expect("standard layout")
        }
        [
            s(self.conv1_w.as_slice()),
            s(self.conv1_b.as_slice()),
            s(self.conv2_w.as_slice()),
            s(self.conv2_b.as_slice()),
            s(self.fc1_w.as_slice()),
            s(self.fc1_b.as_slice()),
            s(self.fc2_w.as_slice()),
            s(self.fc2_b.as_slice()),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [T]; 8] {
        fn s<T>(a: Option<&mut [T]>) -> &mut [T] {
            a.expect("standard layout")
        }
        [
            s(self.conv1_w.as_slice_mut()),
            s(self.conv1_b.as_slice_mut()),
            s(self.conv2_w.as_slice_mut()),
            s(self.conv2_b.as_slice_mut()),
            s(self.fc1_w.as_slice_mut()),
            s(self.fc1_b.as_slice_mut()),
            s(self.fc2_w.as_slice_mut()),
            s(self.fc2_b.as_slice_mut()),
        ]
    }

    /// A network of the same shape with every parameter zero.
    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.tensors_mut().into_iter().for_each(|t| t.fill(T::zero()));
        z
    }

    pub fn cast<U: Scalar>(&self) -> SmallNet<U> {
        let c2 = |a: &Array2<T>| a.mapv(|v| lit::<U>(v.to_f64().expect("finite")));
        let c1 = |a: &Array1<T>| a.mapv(|v| lit::<U>(v.to_f64().expect("finite")));
        SmallNet {
            input_size: self.input_size,
            n_classes: self.n_classes,
            widths: self.widths,
            conv1_w: c2(&self.conv1_w),
            conv1_b: c1(&self.conv1_b),
            conv2_w: c2(&self.conv2_w),
            conv2_b: c1(&self.conv2_b),
            fc1_w: c2(&self.fc1_w),
            fc1_b: c1(&self.fc1_b),
            fc2_w: c2(&self.fc2_w),
            fc2_b: c1(&self.fc2_b),
        }
    }

    /// `self -= lr · grad`.
    pub fn sgd_step(&mut self, grad: &SmallNet<T>, lr: T) {
        for (p, g) in self.tensors_mut().into_iter().zip(grad.tensors()) {
            p.iter_mut().zip(g).for_each(|(p, &g)| *p = *p - lr * g);
        }
    }

    /// `x` is `[batch, size, size, 1]`.
    pub fn forward(&self, x: ArrayView4<T>) -> Result<ForwardCache<T>> {
        let (batch, h, w, c) = x.dim();
        if h != self.input_size || w != self.input_size || c != 1 {
            return Err(Error::InvalidDataset(format!(
                "input is {h}x{w}x{c}, network expects {0}x{0}x1",
                self.input_size
            )));
        }
        let s = self.input_size;
        let cols1 = im2col(x);
        let relu1 = relu(conv_out(&cols1, &self.conv1_w, &self.conv1_b), batch, s, self.widths.conv1);
        let (pool1, pool1_idx) = maxpool2(relu1.view());
        let cols2 = im2col(pool1.view());
        let relu2 = relu(conv_out(&cols2, &self.conv2_w, &self.conv2_b), batch, s / 2, self.widths.conv2);
        let (pool2, pool2_idx) = maxpool2(relu2.view());
        let q = s / 4;
        let flat = pool2.into_shape_with_order((batch, q * q * self.widths.conv2)).expect("contiguous");
        let mut hidden = flat.dot(&self.fc1_w) + &self.fc1_b;
        hidden.mapv_inplace(relu_scalar);
        let logits = hidden.dot(&self.fc2_w) + &self.fc2_b;
        Ok(ForwardCache { batch, cols1, relu1, pool1_idx, cols2, relu2, pool2_idx, flat, hidden, logits })
    }

    /// Gradients of the loss with respect to every parameter, given the
    /// loss gradient at the logits.
    pub fn backward(&self, cache: &ForwardCache<T>, d_logits: ArrayView2<T>) -> SmallNet<T> {
        let s = self.input_size;
        let b = cache.batch;
        let Widths { conv1: c1, conv2: c2, .. } = self.widths;
        let mut g = self.zeros_like();

        g.fc2_w = cache.hidden.t().dot(&d_logits);
        g.fc2_b = d_logits.sum_axis(Axis(0));
        let mut d_hidden = d_logits.dot(&self.fc2_w.t());
        d_hidden.zip_mut_with(&cache.hidden, |d, &h| {
            if h <= T::zero() {
                *d = T::zero()
            }
        });
        g.fc1_w = cache.flat.t().dot(&d_hidden);
        g.fc1_b = d_hidden.sum_axis(Axis(0));
        let d_flat = d_hidden.dot(&self.fc1_w.t());

        let mut d_relu2 = unpool(d_flat.as_slice().expect("contiguous"), &cache.pool2_idx, (b, s / 2, s / 2, c2));
        d_relu2.zip_mut_with(&cache.relu2, |d, &a| {
            if a <= T::zero() {
                *d = T::zero()
            }
        });
        let d2 = d_relu2.into_shape_with_order((b * (s / 2) * (s / 2), c2)).expect("contiguous");
        g.conv2_w = cache.cols2.t().dot(&d2);
        g.conv2_b = d2.sum_axis(Axis(0));
        let d_cols2 = d2.dot(&self.conv2_w.t());
        let d_pool1 = col2im(d_cols2.view(), (b, s / 2, s / 2, c1));

        let mut d_relu1 = unpool(d_pool1.as_slice().expect("contiguous"), &cache.pool1_idx, (b, s, s, c1));
        d_relu1.zip_mut_with(&cache.relu1, |d, &a| {
            if a <= T::zero() {
                *d = T::zero()
            }
        });
        let d1 = d_relu1.into_shape_with_order((b * s * s, c1)).expect("contiguous");
        g.conv1_w = cache.cols1.t().dot(&d1);
        g.conv1_b = d1.sum_axis(Axis(0));
        g
    }

    /// Mean softmax cross-entropy over the batch, its gradients, and the
    /// number of correct argmax predictions.
    pub fn loss_and_grad(&self, x: ArrayView4<T>, labels: &[usize]) -> Result<(T, SmallNet<T>, usize)> {
        let cache = self.forward(x)?;
        let (loss, d_logits, correct) = softmax_cross_entropy(cache.logits.view(), labels)?;
        Ok((loss, self.backward(&cache, d_logits.view()), correct))
    }

    pub fn loss(&self, x: ArrayView4<T>, labels: &[usize]) -> Result<T> {
        let cache = self.forward(x)?;
        Ok(softmax_cross_entropy(cache.logits.view(), labels)?.0)
    }

    /// Class probabilities, one row per input.
    pub fn predict_proba(&self, x: ArrayView4<T>) -> Result<Array2<T>> {
        let mut logits = self.forward(x)?.logits;
        logits.rows_mut().into_iter().for_each(|mut row| softmax_in_place(row.as_slice_mut().expect("contiguous")));
        Ok(logits)
    }
}

fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum = sum + *v;
    }
    row.iter_mut().for_each(|v| *v = *v / sum);
}

/// Returns (mean loss, d loss / d logits, correct count).
pub fn softmax_cross_entropy<T: Scalar>(logits: ArrayView2<T>, labels: &[usize]) -> Result<(T, Array2<T>, usize)> {
    let (b, k) = logits.dim();
    if labels.len() != b {
        return Err(Error::LengthMismatch { left: b, right: labels.len() });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::InvalidDataset(format!("label {bad} out of range for {k} classes")));
    }
    let mut probs = logits.to_owned();
    let mut loss = T::zero();
    let mut correct = 0;
    let inv_b = T::one() / lit::<T>(b as f64);
    for (mut row, &label) in probs.rows_mut().into_iter().zip(labels) {
        let r = row.as_slice_mut().expect("contiguous");
        let argmax = (0..k).fold(0, |best, j| if r[j] > r[best] { j } else { best });
        correct += usize::from(argmax == label);
        softmax_in_place(r);
        let p = r[label];
        // `max` would swallow a NaN probability and hide divergence.
        loss = loss - if p.is_nan() { p } else { p.max(T::min_positive_value()).ln() };
        r[label] = r[label] - T::one();
        r.iter_mut().for_each(|v| *v = *v * inv_b);
    }
    Ok((loss * inv_b, probs, correct))
}

fn conv_out<T: Scalar>(cols: &Array2<T>, w: &Array2<T>, b: &Array1<T>) -> Array2<T> {
    cols.dot(w) + b
}

/// Keeps NaN, unlike `Float::max`, so divergence reaches the loss.
fn relu_scalar<T: Scalar>(v: T) -> T {
    if v < T::zero() {
        T::zero()
    } else {
        v
    }
}

fn relu<T: Scalar>(mut z: Array2<T>, batch: usize, size: usize, channels: usize) -> Array4<T> {
    z.mapv_inplace(relu_scalar);
    z.into_shape_with_order((batch, size, size, channels)).expect("contiguous")
}

/// 3×3 patches with zero padding 1: `[b·h·w, 9·c]`, columns `(ky, kx, c)`.
fn im2col<T: Scalar>(x: ArrayView4<T>) -> Array2<T> {
    let (b, h, w, c) = x.dim();
    let x = x.as_standard_layout();
    let src = x.as_slice().expect("standard layout");
    let mut cols = Array2::zeros((b * h * w, 9 * c));
    let dst = cols.as_slice_mut().expect("standard layout");
    for n in 0..b {
        for y in 0..h {
            for xx in 0..w {
                let row = ((n * h + y) * w + xx) * 9 * c;
                for ky in 0..3 {
                    let Some(sy) = (y + ky).checked_sub(1).filter(|&v| v < h) else { continue };
                    for kx in 0..3 {
                        let Some(sx) = (xx + kx).checked_sub(1).filter(|&v| v < w) else { continue };
                        let from = ((n * h + sy) * w + sx) * c;
                        let to = row + (ky * 3 + kx) * c;
                        dst[to..to + c].copy_from_slice(&src[from..from + c]);
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`].
fn col2im<T: Scalar>(cols: ArrayView2<T>, dims: (usize, usize, usize, usize)) -> Array4<T> {
    let (b, h, w, c) = dims;
    let cols = cols.as_standard_layout();
    let src = cols.as_slice().expect("standard layout");
    let mut out = Array4::zeros(dims);
    let dst = out.as_slice_mut().expect("standard layout");
    for n in 0..b {
        for y in 0..h {
            for xx in 0..w {
                let row = ((n * h + y) * w + xx) * 9 * c;
                for ky in 0..3 {
                    let Some(sy) = (y + ky).checked_sub(1).filter(|&v| v < h) else { continue };
                    for kx in 0..3 {
                        let Some(sx) = (xx + kx).checked_sub(1).filter(|&v| v < w) else { continue };
                        let to = ((n * h + sy) * w + sx) * c;
                        let from = row + (ky * 3 + kx) * c;
                        for ch in 0..c {
                            dst[to + ch] = dst[to + ch] + src[from + ch];
                        }
                    }
                }
            }
        }
    }
    out
}

/// 2×2 max pooling, stride 2. Also returns, per output element, the flat
/// input index of the (first) maximum.
fn maxpool2<T: Scalar>(x: ArrayView4<T>) -> (Array4<T>, Vec<usize>) {
    let (b, h, w, c) = x.dim();
    let (oh, ow) = (h / 2, w / 2);
    let x = x.as_standard_layout();
    let src = x.as_slice().expect("standard layout");
    let mut out = Array4::zeros((b, oh, ow, c));
    let mut idx = vec![0usize; b * oh * ow * c];
    let dst = out.as_slice_mut().expect("standard layout");
    for n in 0..b {
        for y in 0..oh {
            for xx in 0..ow {
                for ch in 0..c {
                    let o = ((n * oh + y) * ow + xx) * c + ch;
                    let mut best = ((n * h + 2 * y) * w + 2 * xx) * c + ch;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let i = ((n * h + 2 * y + dy) * w + 2 * xx + dx) * c + ch;
                        if src[i] > src[best] {
                            best = i;
                        }
                    }
                    dst[o] = src[best];
                    idx[o] = best;
                }
            }
        }
    }
    (out, idx)
}

fn unpool<T: Scalar>(d_out: &[T], idx: &[usize], dims: (usize, usize, usize, usize)) -> Array4<T> {
    let mut d_in = Array4::zeros(dims);
    let dst = d_in.as_slice_mut().expect("standard layout");
    for (&d, &i) in d_out.iter().zip(idx) {
        dst[i] = dst[i] + d;
    }
    d_in
}
