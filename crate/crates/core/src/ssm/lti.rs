//! Diagonal linear time-invariant kernels: discretization, the sequential
//! scan, its global-convolution form and the scan adjoint.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::nn::Real;
use crate::{Error, Result};

/// Below this `|dt * a|` the zero-order-hold input gain uses its series.
pub const TAYLOR_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiscretizeMode {
    /// `b_bar = (exp(dt a) - 1) / a * b`.
    ExactZoh,
    /// `b_bar = dt * b`.
    #[default]
    Euler,
}

/// Discretizes one diagonal entry without range checks.
#[inline]
pub fn discretize_scalar<T: Real>(dt: T, a: T, b: T, mode: DiscretizeMode) -> (T, T) {
    let x = dt * a;
    let a_bar = x.exp();
    let b_bar = match mode {
        DiscretizeMode::Euler => dt * b,
        DiscretizeMode::ExactZoh => {
            if x.abs() < T::of(TAYLOR_THRESHOLD) {
                let series = T::one() + x * (T::of(0.5) + x / T::of(6.0));
                dt * b * series
            } else {
                x.exp_m1() / a * b
            }
        }
    };
    (a_bar, b_bar)
}

/// Zero-order-hold discretization of a diagonal system.
pub fn discretize(dt: f64, a: &[f64], b: &[f64], mode: DiscretizeMode) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("dt must be positive and finite, got {dt}")));
    }
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "a has {} entries but b has {}",
            a.len(),
            b.len()
        )));
    }
    let mut a_bar = Vec::with_capacity(a.len());
    let mut b_bar = Vec::with_capacity(a.len());
    for (s, (&ai, &bi)) in a.iter().zip(b).enumerate() {
        let (ab, bb) = discretize_scalar(dt, ai, bi, mode);
        if !ab.is_finite() || !bb.is_finite() {
            return Err(Error::NumericRange(format!(
                "exp(dt * a) is not finite for state {s} (dt = {dt}, a = {ai})"
            )));
        }
        a_bar.push(ab);
        b_bar.push(bb);
    }
    Ok((a_bar, b_bar))
}

/// Continuous-time diagonal system with fixed step.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiSystem {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub dt: f64,
}

impl LtiSystem {
    pub fn new(a: Vec<f64>, b: Vec<f64>, c: Vec<f64>, dt: f64) -> Result<Self> {
        if a.len() != b.len() || a.len() != c.len() || a.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "a, b, c must share a non-zero length, got {}, {}, {}",
                a.len(),
                b.len(),
                c.len()
            )));
        }
        if a.iter().chain(&b).chain(&c).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("system entries must be finite".into()));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive and finite, got {dt}")));
        }
        Ok(Self { a, b, c, dt })
    }

    pub fn state_dim(&self) -> usize {
        self.a.len()
    }

    /// The same discretized parameters repeated for `m` steps.
    pub fn steps(&self, m: usize, mode: DiscretizeMode) -> Result<StepParams> {
        let (a_bar, b_bar) = discretize(self.dt, &self.a, &self.b, mode)?;
        let s = self.state_dim();
        Ok(StepParams {
            a_bar: Array2::from_shape_fn((m, s), |(_, j)| a_bar[j]),
            b_bar: Array2::from_shape_fn((m, s), |(_, j)| b_bar[j]),
            c: Array2::from_shape_fn((m, s), |(_, j)| self.c[j]),
        })
    }
}

/// Per-step discrete parameters, each `M x S`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepParams {
    pub a_bar: Array2<f64>,
    pub b_bar: Array2<f64>,
    pub c: Array2<f64>,
}

impl StepParams {
    pub fn new(a_bar: Array2<f64>, b_bar: Array2<f64>, c: Array2<f64>) -> Result<Self> {
        if a_bar.dim() != b_bar.dim() || a_bar.dim() != c.dim() {
            return Err(Error::InvalidArgument(format!(
                "per-step parameters disagree in shape: {:?}, {:?}, {:?}",
                a_bar.dim(),
                b_bar.dim(),
                c.dim()
            )));
        }
        Ok(Self { a_bar, b_bar, c })
    }

    pub fn len(&self) -> usize {
        self.a_bar.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.a_bar.nrows() == 0
    }

    pub fn state_dim(&self) -> usize {
        self.a_bar.ncols()
    }

    pub fn is_time_invariant(&self) -> bool {
        [&self.a_bar, &self.b_bar, &self.c]
            .iter()
            .all(|p| p.rows().into_iter().all(|r| r == p.row(0)))
    }

    fn check_len(&self, m: usize, what: &str) -> Result<()> {
        if self.len() != m {
            return Err(Error::InvalidArgument(format!(
                "{what} has length {m} but parameters cover {} steps",
                self.len()
            )));
        }
        Ok(())
    }
}

/// `h_t = a_bar_t * h_{t-1} + b_bar_t x_t`, `y_t = c_t . h_t`, `h_0 = 0`.
pub fn scan(x: &[f64], p: &StepParams) -> Result<Vec<f64>> {
    p.check_len(x.len(), "input")?;
    let mut h = vec![0.0; p.state_dim()];
    Ok(x.iter()
        .enumerate()
        .map(|(t, &xt)| {
            let (ab, bb, c) = (p.a_bar.row(t), p.b_bar.row(t), p.c.row(t));
            let mut y = 0.0;
            for s in 0..h.len() {
                h[s] = ab[s] * h[s] + bb[s] * xt;
                y += c[s] * h[s];
            }
            y
        })
        .collect())
}

/// `K_m = c . (a_bar^m * b_bar)` for `m = 0..M`.
pub fn conv_kernel(p: &StepParams) -> Result<Vec<f64>> {
    if p.is_empty() {
        return Ok(Vec::new());
    }
    if !p.is_time_invariant() {
        return Err(Error::ContractViolation(
            "the convolution form needs time-invariant parameters".into(),
        ));
    }
    let (ab, c) = (p.a_bar.row(0), p.c.row(0));
    let mut pow: Vec<f64> = p.b_bar.row(0).to_vec();
    Ok((0..p.len())
        .map(|_| {
            let k = pow.iter().zip(c).map(|(v, c)| v * c).sum();
            pow.iter_mut().zip(ab).for_each(|(v, a)| *v *= a);
            k
        })
        .collect())
}

/// Causal convolution of `x` with the kernel of a time-invariant system.
pub fn conv_form(x: &[f64], p: &StepParams) -> Result<Vec<f64>> {
    p.check_len(x.len(), "input")?;
    let k = conv_kernel(p)?;
    Ok((0..x.len())
        .map(|t| (0..=t).map(|m| k[m] * x[t - m]).sum())
        .collect())
}

/// Gradients of `sum_t g_t y_t` with respect to the scan inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanGrads {
    pub dx: Vec<f64>,
    pub da_bar: Array2<f64>,
    pub db_bar: Array2<f64>,
    pub dc: Array2<f64>,
}

/// Reverse-time adjoint of [`scan`] for upstream gradient `g = dL/dy`.
pub fn scan_backward(x: &[f64], p: &StepParams, upstream: &[f64]) -> Result<ScanGrads> {
    p.check_len(x.len(), "input")?;
    p.check_len(upstream.len(), "upstream gradient")?;
    let (m, s) = (x.len(), p.state_dim());
    let mut hs = Array2::<f64>::zeros((m + 1, s));
    for t in 0..m {
        for j in 0..s {
            hs[[t + 1, j]] = p.a_bar[[t, j]] * hs[[t, j]] + p.b_bar[[t, j]] * x[t];
        }
    }
    let mut g = ScanGrads {
        dx: vec![0.0; m],
        da_bar: Array2::zeros((m, s)),
        db_bar: Array2::zeros((m, s)),
        dc: Array2::zeros((m, s)),
    };
    let mut lambda = vec![0.0; s];
    for t in (0..m).rev() {
        let mut dx = 0.0;
        for j in 0..s {
            let carry = if t + 1 < m { p.a_bar[[t + 1, j]] * lambda[j] } else { 0.0 };
            lambda[j] = upstream[t] * p.c[[t, j]] + carry;
            g.dc[[t, j]] = upstream[t] * hs[[t + 1, j]];
            g.da_bar[[t, j]] = lambda[j] * hs[[t, j]];
            g.db_bar[[t, j]] = lambda[j] * x[t];
            dx += lambda[j] * p.b_bar[[t, j]];
        }
        g.dx[t] = dx;
    }
    Ok(g)
}
