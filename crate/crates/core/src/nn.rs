//! Dense building blocks shared by every stage of the network.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign};

use ndarray::{Array1, Array2, ArrayView2, Axis, LinalgScalar, ScalarOperand, Zip};
use num_traits::Float;
use rand::Rng;

/// Scalar type of network activations and parameters.
pub trait Real:
    Float
    + LinalgScalar
    + ScalarOperand
    + AddAssign
    + MulAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Weight archive dtype code.
    const DTYPE: u8;

    fn of(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Real for f32 {
    const DTYPE: u8 = 0;

    fn of(v: f64) -> Self {
        v as f32
    }

    fn to_f64(self) -> f64 {
        f64::from(self)
    }
}

impl Real for f64 {
    const DTYPE: u8 = 1;

    fn of(v: f64) -> Self {
        v
    }

    fn to_f64(self) -> f64 {
        self
    }
}

pub fn relu<T: Real>(x: T) -> T {
    x.max(T::zero())
}

/// `x * sigmoid(x)`.
pub fn silu<T: Real>(x: T) -> T {
    x / (T::one() + (-x).exp())
}

pub fn softplus<T: Real>(x: T) -> T {
    if x > T::of(20.0) {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Callback receiving a tensor name, shape and data.
pub type Visit<'a, T> = dyn FnMut(&str, &[usize], &[T]) + 'a;
pub type VisitMut<'a, T> = dyn FnMut(&str, &[usize], &mut [T]) + 'a;

/// Visits named parameter tensors in a fixed order.
pub trait Params<T> {
    fn visit(&self, prefix: &str, f: &mut Visit<'_, T>);
    fn visit_mut(&mut self, prefix: &str, f: &mut VisitMut<'_, T>);

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, _, data| n += data.len());
        n
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

pub(crate) fn visit_array1<T: Real>(
    a: &Array1<T>,
    name: &str,
    f: &mut Visit<'_, T>,
) {
    f(name, a.shape(), a.as_slice().expect("parameters are contiguous"));
}

pub(crate) fn visit_array1_mut<T: Real>(
    a: &mut Array1<T>,
    name: &str,
    f: &mut VisitMut<'_, T>,
) {
    let shape = a.shape().to_vec();
    f(name, &shape, a.as_slice_mut().expect("parameters are contiguous"));
}

pub(crate) fn visit_array2<T: Real>(
    a: &Array2<T>,
    name: &str,
    f: &mut Visit<'_, T>,
) {
    f(name, a.shape(), a.as_slice().expect("parameters are contiguous"));
}

pub(crate) fn visit_array2_mut<T: Real>(
    a: &mut Array2<T>,
    name: &str,
    f: &mut VisitMut<'_, T>,
) {
    let shape = a.shape().to_vec();
    f(name, &shape, a.as_slice_mut().expect("parameters are contiguous"));
}

/// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
pub(crate) fn fan_in_uniform<T: Real, R: Rng>(
    rng: &mut R,
    shape: (usize, usize),
    fan_in: usize,
) -> Array2<T> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    Array2::from_shape_simple_fn(shape, || T::of(rng.gen_range(-bound..=bound)))
}

/// Affine map `y = x W + b` with `W` stored as `[in, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub weight: Array2<T>,
    pub bias: Option<Array1<T>>,
}

impl<T: Real> Linear<T> {
    pub fn new<R: Rng>(rng: &mut R, d_in: usize, d_out: usize, bias: bool) -> Self {
        Self {
            weight: fan_in_uniform(rng, (d_in, d_out), d_in),
            bias: bias.then(|| Array1::zeros(d_out)),
        }
    }

    pub fn zeros(d_in: usize, d_out: usize, bias: bool) -> Self {
        Self {
            weight: Array2::zeros((d_in, d_out)),
            bias: bias.then(|| Array1::zeros(d_out)),
        }
    }

    pub fn d_in(&self) -> usize {
        self.weight.nrows()
    }

    pub fn d_out(&self) -> usize {
        self.weight.ncols()
    }

    pub fn forward(&self, x: ArrayView2<'_, T>) -> Array2<T> {
        let mut y = x.dot(&self.weight);
        if let Some(b) = &self.bias {
            y += b;
        }
        y
    }

    /// Multiply-accumulates for `rows` input rows.
    pub fn macs(&self, rows: usize) -> u64 {
        (rows * self.d_in() * self.d_out()) as u64
    }
}

impl<T: Real> Params<T> for Linear<T> {
    fn visit(&self, prefix: &str, f: &mut Visit<'_, T>) {
        visit_array2(&self.weight, &join(prefix, "weight"), f);
        if let Some(b) = &self.bias {
            visit_array1(b, &join(prefix, "bias"), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut VisitMut<'_, T>) {
        visit_array2_mut(&mut self.weight, &join(prefix, "weight"), f);
        if let Some(b) = &mut self.bias {
            visit_array1_mut(b, &join(prefix, "bias"), f);
        }
    }
}

pub const RMS_EPS: f64 = 1e-5;

/// Row-wise root-mean-square normalization with a learnable per-channel scale.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsNorm<T> {
    pub scale: Array1<T>,
    pub eps: T,
}

impl<T: Real> RmsNorm<T> {
    pub fn new(d: usize) -> Self {
        Self {
            scale: Array1::ones(d),
            eps: T::of(RMS_EPS),
        }
    }

    pub fn forward(&self, x: ArrayView2<'_, T>) -> Array2<T> {
        let mut y = x.to_owned();
        self.forward_inplace(&mut y);
        y
    }

    pub fn forward_inplace(&self, x: &mut Array2<T>) {
        let inv_d = T::one() / T::of(x.ncols() as f64);
        for mut row in x.axis_iter_mut(Axis(0)) {
            let ms = row.iter().map(|&v| v * v).sum::<T>() * inv_d;
            let r = T::one() / (ms + self.eps).sqrt();
            Zip::from(&mut row).and(&self.scale).for_each(|v, &s| *v = *v * r * s);
        }
    }
}

impl<T: Real> Params<T> for RmsNorm<T> {
    fn visit(&self, prefix: &str, f: &mut Visit<'_, T>) {
        visit_array1(&self.scale, &join(prefix, "scale"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut VisitMut<'_, T>) {
        visit_array1_mut(&mut self.scale, &join(prefix, "scale"), f);
    }
}

/// `relu(x + norm2(fc2(relu(norm1(fc1(x))))))`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlock<T> {
    pub fc1: Linear<T>,
    pub norm1: RmsNorm<T>,
    pub fc2: Linear<T>,
    pub norm2: RmsNorm<T>,
}

impl<T: Real> ResidualBlock<T> {
    pub fn new<R: Rng>(rng: &mut R, d: usize) -> Self {
        Self {
            fc1: Linear::new(rng, d, d, true),
            norm1: RmsNorm::new(d),
            fc2: Linear::new(rng, d, d, true),
            norm2: RmsNorm::new(d),
        }
    }

    pub fn width(&self) -> usize {
        self.fc1.d_in()
    }

    pub fn forward(&self, x: ArrayView2<'_, T>) -> Array2<T> {
        let mut h = self.fc1.forward(x);
        self.norm1.forward_inplace(&mut h);
        h.mapv_inplace(relu);
        let mut h = self.fc2.forward(h.view());
        self.norm2.forward_inplace(&mut h);
        Zip::from(&mut h).and(&x).for_each(|o, &s| *o = relu(*o + s));
        h
    }

    pub fn macs(&self, rows: usize) -> u64 {
        self.fc1.macs(rows) + self.fc2.macs(rows)
    }
}

impl<T: Real> Params<T> for ResidualBlock<T> {
    fn visit(&self, prefix: &str, f: &mut Visit<'_, T>) {
        self.fc1.visit(&join(prefix, "fc1"), f);
        self.norm1.visit(&join(prefix, "norm1"), f);
        self.fc2.visit(&join(prefix, "fc2"), f);
        self.norm2.visit(&join(prefix, "norm2"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut VisitMut<'_, T>) {
        self.fc1.visit_mut(&join(prefix, "fc1"), f);
        self.norm1.visit_mut(&join(prefix, "norm1"), f);
        self.fc2.visit_mut(&join(prefix, "fc2"), f);
        self.norm2.visit_mut(&join(prefix, "norm2"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_param_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let l: Linear<f32> = Linear::new(&mut rng, 7, 5, true);
        assert_eq!(l.num_params(), 7 * 5 + 5);
        assert_eq!(Linear::<f32>::zeros(7, 5, false).num_params(), 35);
    }

    #[test]
    fn linear_forward_matches_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut l: Linear<f64> = Linear::new(&mut rng, 3, 2, true);
        l.bias = Some(array![0.5, -1.0]);
        let x = array![[1.0, 2.0, 3.0], [-1.0, 0.0, 4.0]];
        let y = l.forward(x.view());
        for i in 0..2 {
            for j in 0..2 {
                let e: f64 = (0..3).map(|k| x[[i, k]] * l.weight[[k, j]]).sum::<f64>()
                    + l.bias.as_ref().unwrap()[j];
                assert!((y[[i, j]] - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn init_within_fan_in_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let l: Linear<f64> = Linear::new(&mut rng, 16, 8, true);
        assert!(l.weight.iter().all(|w| w.abs() <= 0.25));
        assert!(l.bias.unwrap().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn rms_norm_unit_rms() {
        let n = RmsNorm::<f64>::new(4);
        let y = n.forward(array![[3.0, -3.0, 3.0, -3.0]].view());
        let rms = (y.iter().map(|v| v * v).sum::<f64>() / 4.0).sqrt();
        assert!((rms - 1.0).abs() < 1e-6);
    }

    #[test]
    fn activations() {
        assert_eq!(relu(-2.0f64), 0.0);
        assert_eq!(silu(0.0f64), 0.0);
        assert!((softplus(0.0f64) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(50.0f64), 50.0);
    }

    #[test]
    fn residual_block_visits_in_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b: ResidualBlock<f32> = ResidualBlock::new(&mut rng, 4);
        let mut names = Vec::new();
        b.visit("blk", &mut |n, _, _| names.push(n.to_string()));
        assert_eq!(names[0], "blk.fc1.weight");
        assert_eq!(names.len(), 6);
        assert_eq!(b.num_params(), 2 * (16 + 4) + 2 * 4);
    }
}
