//! Dense-vector kernels and the multistep schemes built on them.
//!
//! Everything here is a pure function of its inputs: backward finite
//! differences under the sampling convention `Δ¹x_t = x_t − x_{t+1}`
//! (time decreases as sampling proceeds), backward Lagrange extrapolation
//! with alternating-binomial weights, the blended second/third-order
//! Adams–Moulton state estimator, and Lagrange interpolation over a rolling
//! buffer of cached nodes. All arithmetic is in `f64`.

use crate::error::{Error, Result};

/// Dense vector of 64-bit floats; the carrier for states, gradients, noise
/// predictions and data predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector {
    data: Vec<f64>,
}

impl Vector {
    pub fn new(data: Vec<f64>) -> Self {
        debug_assert!(data.iter().all(|v| v.is_finite()), "non-finite entry");
        Self { data }
    }

    /// Validating constructor for values coming from outside the crate.
    pub fn checked(data: Vec<f64>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Vector::checked"));
        }
        Ok(Self { data })
    }

    pub fn zeros(len: usize) -> Self {
        Self { data: vec![0.0; len] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn scale(&self, c: f64) -> Vector {
        Vector::new(self.data.iter().map(|v| c * v).collect())
    }

    pub fn add(&self, other: &Vector) -> Result<Vector> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Vector) -> Result<Vector> {
        self.zip(other, |a, b| a - b)
    }

    /// Elementwise (Hadamard) product.
    pub fn hadamard(&self, other: &Vector) -> Result<Vector> {
        self.zip(other, |a, b| a * b)
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: f64, other: &Vector) -> Result<Vector> {
        self.zip(other, |a, b| a + c * b)
    }

    pub fn dot(&self, other: &Vector) -> Result<f64> {
        self.check_len(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b)
            .sum())
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    fn check_len(&self, other: &Vector) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: other.len(),
            });
        }
        Ok(())
    }

    fn zip(&self, other: &Vector, f: impl Fn(f64, f64) -> f64) -> Result<Vector> {
        self.check_len(other)?;
        Ok(Vector::new(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        ))
    }
}

impl From<Vec<f64>> for Vector {
    fn from(data: Vec<f64>) -> Self {
        Vector::new(data)
    }
}

impl std::ops::Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

/// Fixed-capacity history of the three most recent `(time, value)` pairs,
/// newest first. Pushing a fourth entry evicts the oldest; pushed times must
/// strictly decrease, matching the sampling direction.
#[derive(Debug, Clone, Default)]
pub struct RingBuffer3 {
    entries: Vec<(f64, Vector)>,
}

impl RingBuffer3 {
    pub const CAPACITY: usize = 3;

    pub fn new() -> Self {
        Self { entries: Vec::with_capacity(Self::CAPACITY + 1) }
    }

    pub fn push(&mut self, t: f64, v: Vector) -> Result<()> {
        if let Some((newest, _)) = self.entries.first() {
            if t >= *newest {
                return Err(Error::NonDecreasingTime { newest: *newest, pushed: t });
            }
        }
        self.entries.insert(0, (t, v));
        if self.entries.len() > Self::CAPACITY {
            self.entries.pop();
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() == Self::CAPACITY
    }

    /// Entry `i` counting from the newest (`0` = most recent push).
    pub fn get(&self, i: usize) -> Option<&(f64, Vector)> {
        self.entries.get(i)
    }

    pub fn times(&self) -> Vec<f64> {
        self.entries.iter().map(|(t, _)| *t).collect()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }
}

/// Rolling buffer of `(time, value)` interpolation nodes with bounded
/// capacity; pushing past capacity evicts the oldest node.
#[derive(Debug, Clone)]
pub struct LagrangeBuffer {
    nodes: Vec<(f64, Vector)>,
    capacity: usize,
}

impl LagrangeBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 2, "LagrangeBuffer needs capacity >= 2");
        Self { nodes: Vec::with_capacity(capacity + 1), capacity }
    }

    pub fn push(&mut self, t: f64, v: Vector) -> Result<()> {
        if self.nodes.iter().any(|(tn, _)| *tn == t) {
            return Err(Error::DegenerateNodes(t));
        }
        self.nodes.insert(0, (t, v));
        if self.nodes.len() > self.capacity {
            self.nodes.pop();
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn nodes(&self) -> &[(f64, Vector)] {
        &self.nodes
    }

    pub fn clear(&mut self) {
        self.nodes.clear();
    }
}

/// Exact binomial coefficient C(n, k) as a signed 64-bit integer.
pub fn binomial(n: u32, k: u32) -> i64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: i64 = 1;
    for i in 0..k {
        acc = acc * (n - i) as i64 / (i + 1) as i64;
    }
    acc
}

/// Weights of the backward Lagrange extrapolation of order `k`: the value one
/// step before the newest of `k` equally spaced samples is
/// `Σ_i w_i · x_{t+i}` with `w_i = (−1)^i C(k, i+1)`.
pub fn extrapolation_weights(k: u32) -> Vec<i64> {
    (0..k)
        .map(|i| {
            let sign = if i % 2 == 0 { 1 } else { -1 };
            sign * binomial(k, i + 1)
        })
        .collect()
}

/// Backward finite difference `Δ^(order)` at the newest point.
///
/// `newest` is `x_t`; `history` holds `x_{t+1}, x_{t+2}, …` (newest first).
/// Uses the alternating-binomial weights, so `Δ¹x_t = x_t − x_{t+1}`.
pub fn backward_diff(order: u32, history: &RingBuffer3, newest: &Vector) -> Result<Vector> {
    if !(1..=3).contains(&order) {
        return Err(Error::NotEnoughHistory { needed: order as usize, have: RingBuffer3::CAPACITY });
    }
    if history.len() < order as usize {
        return Err(Error::NotEnoughHistory { needed: order as usize, have: history.len() });
    }
    let mut acc = newest.clone();
    for i in 1..=order {
        let (_, v) = history.get(i as usize - 1).expect("length checked");
        if v.len() != newest.len() {
            return Err(Error::DimensionMismatch { expected: newest.len(), got: v.len() });
        }
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        acc = acc.axpy(sign * binomial(order, i) as f64, v)?;
    }
    Ok(acc)
}

/// Backward extrapolation one step past the newest of three equally spaced
/// samples: `3·x_t − 3·x_{t+1} + x_{t+2}` (the `k = 3` weights `[3, −3, 1]`).
///
/// Exact on polynomials of degree ≤ 2.
pub fn backward_extrapolate(history: &RingBuffer3) -> Result<Vector> {
    if history.len() < 3 {
        return Err(Error::NotEnoughHistory { needed: 3, have: history.len() });
    }
    let (_, x0) = history.get(0).unwrap();
    let (_, x1) = history.get(1).unwrap();
    let (_, x2) = history.get(2).unwrap();
    x0.scale(3.0).axpy(-3.0, x1)?.add(x2)
}

/// Relative tolerance for the uniform-spacing check below.
pub const GRID_UNIFORMITY_RTOL: f64 = 1e-9;

/// Blended second/third-order Adams–Moulton estimate of the state one step
/// past `x_t`:
///
/// `x̂_{t−1} = x_t − (5Δt/6)·y_t − (5Δt/6)·y_{t+1} + (2Δt/3)·y_{t+2}`
///
/// `grads` holds the gradients `y_t, y_{t+1}, y_{t+2}` newest first, sampled
/// on a uniform grid of spacing `dt > 0`. Grids whose observed spacing
/// deviates from `dt` by more than `1e−9` relative are rejected rather than
/// silently reweighted: the coefficients are only valid for uniform spacing.
pub fn adams_moulton_estimate(x_t: &Vector, grads: &RingBuffer3, dt: f64) -> Result<Vector> {
    if grads.len() < 3 {
        return Err(Error::NotEnoughHistory { needed: 3, have: grads.len() });
    }
    if !(dt > 0.0) {
        return Err(Error::NonUniformGrid { expected: dt, observed: f64::NAN });
    }
    let times = grads.times();
    for w in times.windows(2) {
        // Newest-first and strictly decreasing in sampling time, so the
        // spacing toward older entries is +dt.
        let spacing = w[1] - w[0];
        if (spacing - dt).abs() > GRID_UNIFORMITY_RTOL * dt.max(1.0) {
            return Err(Error::NonUniformGrid { expected: dt, observed: spacing });
        }
    }
    let (_, y0) = grads.get(0).unwrap();
    let (_, y1) = grads.get(1).unwrap();
    let (_, y2) = grads.get(2).unwrap();
    x_t.axpy(-5.0 * dt / 6.0, y0)?
        .axpy(-5.0 * dt / 6.0, y1)?
        .axpy(2.0 * dt / 3.0, y2)
}

/// Lagrange interpolation over the buffered nodes, evaluated at `t`:
///
/// `Σ_i x_i · Π_{j≠i} (t − t_j)/(t_i − t_j)`
///
/// Returns the cached value bit-exactly when `t` equals a node time. With
/// `m` nodes the interpolant is exact on polynomials of degree ≤ m−1 and has
/// error `O(h^m)` on smooth data with node spacing `h`.
pub fn lagrange_interpolate(buf: &LagrangeBuffer, t: f64) -> Result<Vector> {
    let nodes = buf.nodes();
    if nodes.len() < 2 {
        return Err(Error::CacheUnderfull(nodes.len()));
    }
    for (i, (ti, _)) in nodes.iter().enumerate() {
        if *ti == t {
            return Ok(nodes[i].1.clone());
        }
        for (tj, _) in &nodes[i + 1..] {
            if *ti == *tj {
                return Err(Error::DegenerateNodes(*ti));
            }
        }
    }
    let dim = nodes[0].1.len();
    let mut out = Vector::zeros(dim);
    for (i, (ti, xi)) in nodes.iter().enumerate() {
        if xi.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: xi.len() });
        }
        let mut basis = 1.0;
        for (j, (tj, _)) in nodes.iter().enumerate() {
            if i != j {
                basis *= (t - tj) / (ti - tj);
            }
        }
        out = out.axpy(basis, xi)?;
    }
    if out.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("lagrange_interpolate"));
    }
    Ok(out)
}
