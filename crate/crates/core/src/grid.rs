//! Radial grids with quadrature weights for the `r dr` measure, fields on
//! them, and fourth-order finite-difference derivatives.

use crate::error::{LabError, Result};
use crate::quad;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridKind {
    /// `r_i = r_min e^{i h}`, `i = 0..n`.
    LogUniform,
    /// `r_i = (i + 1) dr`, `i = 0..n`, `dr = r_max / n`.
    Uniform,
}

/// Serializable description of a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub kind: GridKind,
    pub r_min: f64,
    pub r_max: f64,
    pub n: usize,
}

impl GridSpec {
    pub fn build(&self) -> Result<RadialGrid> {
        match self.kind {
            GridKind::LogUniform => RadialGrid::log_uniform(self.r_min, self.r_max, self.n),
            GridKind::Uniform => {
                let g = RadialGrid::uniform(self.r_max, self.n)?;
                let expected = self.r_max / self.n as f64;
                if (self.r_min - expected).abs() > 1e-12 * expected {
                    return Err(LabError::Configuration(format!(
                        "uniform grid with n = {} and r_max = {} has r_min = {expected}, not {}",
                        self.n, self.r_max, self.r_min
                    )));
                }
                Ok(g)
            }
        }
    }
}

/// How a field is continued past the inner edge of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    /// The field behaves like `r^k` at the origin: on a log grid it is
    /// extended by `u(r) ∝ r^k` below `r_min`; on a uniform grid the
    /// parity ghosts `u(0) = 0`, `u(-r) = (-1)^k u(r)` are used.
    Equivariant(u32),
    /// One-sided stencils, no assumption on the field.
    OneSided,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    kind: GridKind,
    r_min: f64,
    r_max: f64,
    /// `h` in `ln r` for log grids, `dr` for uniform grids.
    step: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl RadialGrid {
    pub fn log_uniform(r_min: f64, r_max: f64, n: usize) -> Result<Self> {
        if !(r_min > 0.0 && r_max > r_min && r_max.is_finite()) {
            return Err(LabError::Configuration(format!(
                "log grid needs 0 < r_min < r_max, got ({r_min}, {r_max})"
            )));
        }
        if n < 16 {
            return Err(LabError::Configuration(format!("grid needs at least 16 points, got {n}")));
        }
        let h = (r_max / r_min).ln() / (n - 1) as f64;
        let ln_min = r_min.ln();
        let mut nodes: Vec<f64> = (0..n).map(|i| (ln_min + i as f64 * h).exp()).collect();
        nodes[0] = r_min;
        nodes[n - 1] = r_max;
        let g = quad::gregory_weights(n);
        let weights = nodes.iter().zip(&g).map(|(r, gi)| h * gi * r * r).collect();
        Ok(Self { kind: GridKind::LogUniform, r_min, r_max, step: h, nodes, weights })
    }

    /// Uniform grid on `(0, r_max]`. The quadrature covers `[0, r_max]`;
    /// the node at the origin carries no weight since the measure `r dr`
    /// vanishes there.
    pub fn uniform(r_max: f64, n: usize) -> Result<Self> {
        if !(r_max > 0.0 && r_max.is_finite()) {
            return Err(LabError::Configuration(format!("uniform grid needs r_max > 0, got {r_max}")));
        }
        if n < 16 {
            return Err(LabError::Configuration(format!("grid needs at least 16 points, got {n}")));
        }
        let dr = r_max / n as f64;
        let nodes: Vec<f64> = (1..=n).map(|i| i as f64 * dr).collect();
        let g = quad::gregory_weights(n + 1);
        let weights = nodes.iter().zip(&g[1..]).map(|(r, gi)| dr * gi * r).collect();
        Ok(Self { kind: GridKind::Uniform, r_min: dr, r_max, step: dr, nodes, weights })
    }

    /// Log grid on `[1e-6, 1e3]` with 8192 points.
    pub fn default_log() -> Self {
        Self::log_uniform(1e-6, 1e3, 8192).expect("default grid parameters are valid")
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec { kind: self.kind, r_min: self.r_min, r_max: self.r_max, n: self.len() }
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn r_min(&self) -> f64 {
        self.r_min
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Smallest distance between neighbouring nodes.
    pub fn min_spacing(&self) -> f64 {
        match self.kind {
            GridKind::Uniform => self.step,
            GridKind::LogUniform => self.nodes[1] - self.nodes[0],
        }
    }

    /// Number of nodes inside `[a, b]`.
    pub fn points_in(&self, a: f64, b: f64) -> usize {
        self.nodes.iter().filter(|&&r| r >= a && r <= b).count()
    }

    /// `sum_i w_i f_i`, approximating `int f r dr`.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    pub fn integrate_fn<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&r, w)| w * f(r)).sum()
    }

    pub fn sample<F: Fn(f64) -> f64>(&self, f: F) -> Vec<f64> {
        self.nodes.iter().map(|&r| f(r)).collect()
    }

    /// `d/dr` of nodal values.
    pub fn d_r(&self, u: &[f64], origin: Origin) -> Vec<f64> {
        let ghosts = self.ghosts(u, origin);
        let mut d = stencil_d1(u, self.step, ghosts);
        if self.kind == GridKind::LogUniform {
            for (di, r) in d.iter_mut().zip(&self.nodes) {
                *di /= r;
            }
        }
        d
    }

    /// `d^2/dr^2` of nodal values.
    pub fn d_rr(&self, u: &[f64], origin: Origin) -> Vec<f64> {
        let ghosts = self.ghosts(u, origin);
        let mut dd = stencil_d2(u, self.step, ghosts);
        if self.kind == GridKind::LogUniform {
            let ds = stencil_d1(u, self.step, ghosts);
            for ((ddi, dsi), r) in dd.iter_mut().zip(&ds).zip(&self.nodes) {
                *ddi = (*ddi - dsi) / (r * r);
            }
        }
        dd
    }

    fn ghosts(&self, u: &[f64], origin: Origin) -> Option<[f64; 2]> {
        match origin {
            Origin::OneSided => None,
            Origin::Equivariant(k) => match self.kind {
                GridKind::LogUniform => {
                    let q = (-(k as f64) * self.step).exp();
                    Some([u[0] * q * q, u[0] * q])
                }
                GridKind::Uniform => {
                    let parity = if k % 2 == 0 { 1.0 } else { -1.0 };
                    Some([parity * u[0], 0.0])
                }
            },
        }
    }
}

// Fourth-order stencils. `ghosts = [u_{-2}, u_{-1}]` when available.
const D1_EDGE0: [f64; 5] = [-25.0, 48.0, -36.0, 16.0, -3.0];
const D1_EDGE1: [f64; 5] = [-3.0, -10.0, 18.0, -6.0, 1.0];
const D2_EDGE0: [f64; 6] = [45.0, -154.0, 214.0, -156.0, 61.0, -10.0];
const D2_EDGE1: [f64; 6] = [10.0, -15.0, -4.0, 14.0, -6.0, 1.0];

fn stencil_d1(u: &[f64], h: f64, ghosts: Option<[f64; 2]>) -> Vec<f64> {
    let n = u.len();
    let c = 1.0 / (12.0 * h);
    let mut d = vec![0.0; n];
    for i in 2..n - 2 {
        d[i] = (u[i - 2] - 8.0 * u[i - 1] + 8.0 * u[i + 1] - u[i + 2]) * c;
    }
    match ghosts {
        Some([gm2, gm1]) => {
            d[0] = (gm2 - 8.0 * gm1 + 8.0 * u[1] - u[2]) * c;
            d[1] = (gm1 - 8.0 * u[0] + 8.0 * u[2] - u[3]) * c;
        }
        None => {
            d[0] = dot(&D1_EDGE0, &u[0..5]) * c;
            d[1] = dot(&D1_EDGE1, &u[0..5]) * c;
        }
    }
    d[n - 1] = -dot_rev(&D1_EDGE0, &u[n - 5..]) * c;
    d[n - 2] = -dot_rev(&D1_EDGE1, &u[n - 5..]) * c;
    d
}

fn stencil_d2(u: &[f64], h: f64, ghosts: Option<[f64; 2]>) -> Vec<f64> {
    let n = u.len();
    let c = 1.0 / (12.0 * h * h);
    let mut d = vec![0.0; n];
    for i in 2..n - 2 {
        d[i] = (-u[i - 2] + 16.0 * u[i - 1] - 30.0 * u[i] + 16.0 * u[i + 1] - u[i + 2]) * c;
    }
    match ghosts {
        Some([gm2, gm1]) => {
            d[0] = (-gm2 + 16.0 * gm1 - 30.0 * u[0] + 16.0 * u[1] - u[2]) * c;
            d[1] = (-gm1 + 16.0 * u[0] - 30.0 * u[1] + 16.0 * u[2] - u[3]) * c;
        }
        None => {
            d[0] = dot(&D2_EDGE0, &u[0..6]) * c;
            d[1] = dot(&D2_EDGE1, &u[0..6]) * c;
        }
    }
    d[n - 1] = dot_rev(&D2_EDGE0, &u[n - 6..]) * c;
    d[n - 2] = dot_rev(&D2_EDGE1, &u[n - 6..]) * c;
    d
}

fn dot(c: &[f64], u: &[f64]) -> f64 {
    c.iter().zip(u).map(|(a, b)| a * b).sum()
}

// Mirrored stencil: c[0] multiplies the last entry of `u`.
fn dot_rev(c: &[f64], u: &[f64]) -> f64 {
    c.iter().zip(u.iter().rev()).map(|(a, b)| a * b).sum()
}

/// Nodal values on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Arc<RadialGrid>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(LabError::Configuration(format!(
                "field has {} values on a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(LabError::Domain(format!("non-finite value at node {i}")));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn<F: Fn(f64) -> f64>(grid: &Arc<RadialGrid>, f: F) -> Self {
        let values = grid.sample(f);
        Self { grid: grid.clone(), values }
    }

    pub fn zeros(grid: &Arc<RadialGrid>) -> Self {
        Self { grid: grid.clone(), values: vec![0.0; grid.len()] }
    }

    pub(crate) fn from_raw(grid: Arc<RadialGrid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub fn map<F: Fn(f64, f64) -> f64>(&self, f: F) -> Self {
        let values = self.grid.nodes().iter().zip(&self.values).map(|(&r, &v)| f(r, v)).collect();
        Self { grid: self.grid.clone(), values }
    }

    pub fn zip_with<F: Fn(f64, f64, f64) -> f64>(&self, other: &Self, f: F) -> Self {
        assert!(self.same_grid(other), "fields live on different grids");
        let values = self
            .grid
            .nodes()
            .iter()
            .zip(self.values.iter().zip(&other.values))
            .map(|(&r, (&a, &b))| f(r, a, b))
            .collect();
        Self { grid: self.grid.clone(), values }
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|_, v| c * v)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |_, a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |_, a, b| a - b)
    }

    /// `self += c * other`.
    pub fn axpy(&mut self, c: f64, other: &Self) {
        assert!(self.same_grid(other), "fields live on different grids");
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
    }

    /// `int f g r dr`.
    pub fn inner(&self, other: &Self) -> f64 {
        assert!(self.same_grid(other), "fields live on different grids");
        self.grid
            .weights()
            .iter()
            .zip(self.values.iter().zip(&other.values))
            .map(|(w, (a, b))| w * a * b)
            .sum()
    }

    pub fn integral(&self) -> f64 {
        self.grid.integrate(&self.values)
    }

    pub fn norm_l2(&self) -> f64 {
        self.inner(self).max(0.0).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn d_r(&self, origin: Origin) -> Self {
        Self { grid: self.grid.clone(), values: self.grid.d_r(&self.values, origin) }
    }

    pub fn d_rr(&self, origin: Origin) -> Self {
        Self { grid: self.grid.clone(), values: self.grid.d_rr(&self.values, origin) }
    }

    /// Monotone cubic (PCHIP) resampling onto another grid. Outside the
    /// source range the end values are held constant.
    pub fn resample(&self, target: &Arc<RadialGrid>) -> Self {
        let values = pchip(self.grid.nodes(), &self.values, target.nodes());
        Self { grid: target.clone(), values }
    }
}

/// A state `(u, u_t)` on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldPair {
    pub u: ScalarField,
    pub udot: ScalarField,
}

impl FieldPair {
    pub fn new(u: ScalarField, udot: ScalarField) -> Result<Self> {
        if !u.same_grid(&udot) {
            return Err(LabError::Configuration("field pair components live on different grids".into()));
        }
        Ok(Self { u, udot })
    }

    pub fn zeros(grid: &Arc<RadialGrid>) -> Self {
        Self { u: ScalarField::zeros(grid), udot: ScalarField::zeros(grid) }
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        self.u.grid()
    }

    pub fn resample(&self, target: &Arc<RadialGrid>) -> Self {
        Self { u: self.u.resample(target), udot: self.udot.resample(target) }
    }
}

/// Piecewise cubic Hermite interpolation with Fritsch–Carlson slopes.
pub fn pchip(x: &[f64], y: &[f64], xq: &[f64]) -> Vec<f64> {
    let n = x.len();
    assert!(n >= 2 && y.len() == n);
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    let mut m = vec![0.0; n];
    for i in 1..n - 1 {
        if delta[i - 1] * delta[i] > 0.0 {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            m[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    m[0] = pchip_end(h[0], h.get(1).copied().unwrap_or(h[0]), delta[0], delta.get(1).copied().unwrap_or(delta[0]));
    m[n - 1] = pchip_end(
        h[n - 2],
        if n > 2 { h[n - 3] } else { h[n - 2] },
        delta[n - 2],
        if n > 2 { delta[n - 3] } else { delta[n - 2] },
    );
    xq.iter()
        .map(|&q| {
            if q <= x[0] {
                return y[0];
            }
            if q >= x[n - 1] {
                return y[n - 1];
            }
            let i = x.partition_point(|&v| v <= q) - 1;
            let t = (q - x[i]) / h[i];
            let t2 = t * t;
            let t3 = t2 * t;
            let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
            let h10 = t3 - 2.0 * t2 + t;
            let h01 = -2.0 * t3 + 3.0 * t2;
            let h11 = t3 - t2;
            h00 * y[i] + h10 * h[i] * m[i] + h01 * y[i + 1] + h11 * h[i] * m[i + 1]
        })
        .collect()
}

fn pchip_end(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if m.signum() != d0.signum() {
        0.0
    } else if d0.signum() != d1.signum() && m.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn weights_reproduce_area() {
        let g = RadialGrid::default_log();
        assert!(g.weights().iter().all(|&w| w > 0.0));
        assert!(g.nodes().windows(2).all(|w| w[1] > w[0]));
        let exact = 0.5 * (1e6 - 1e-12);
        assert!((g.integrate(&vec![1.0; g.len()]) / exact - 1.0).abs() < 1e-12);
        let u = RadialGrid::uniform(7.0, 300).unwrap();
        assert!((u.integrate(&vec![1.0; u.len()]) / 24.5 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stencils_exact_on_polynomials() {
        let x: Vec<f64> = (0..12).map(|i| 0.3 * i as f64).collect();
        for deg in 0..=4 {
            let u: Vec<f64> = x.iter().map(|v| v.powi(deg)).collect();
            let d1 = stencil_d1(&u, 0.3, None);
            let d2 = stencil_d2(&u, 0.3, None);
            for (i, &xi) in x.iter().enumerate() {
                let e1 = if deg == 0 { 0.0 } else { deg as f64 * xi.powi(deg - 1) };
                let e2 = if deg < 2 { 0.0 } else { (deg * (deg - 1)) as f64 * xi.powi(deg - 2) };
                assert!((d1[i] - e1).abs() < 1e-9, "d1 deg {deg} node {i}");
                assert!((d2[i] - e2).abs() < 1e-8, "d2 deg {deg} node {i}");
            }
        }
    }

    #[test]
    fn derivatives_converge_at_fourth_order() {
        let err = |n: usize| {
            let g = RadialGrid::uniform(10.0, n).unwrap();
            let u = g.sample(|r| r.powi(3) * (-r * r).exp());
            let d = g.d_r(&u, Origin::Equivariant(3));
            let dd = g.d_rr(&u, Origin::Equivariant(3));
            g.nodes()
                .iter()
                .enumerate()
                .map(|(i, &r)| {
                    let e = (-r * r).exp();
                    let ex1 = (3.0 * r * r - 2.0 * r.powi(4)) * e;
                    let ex2 = (6.0 * r - 14.0 * r.powi(3) + 4.0 * r.powi(5)) * e;
                    (d[i] - ex1).abs().max((dd[i] - ex2).abs())
                })
                .fold(0.0, f64::max)
        };
        let order = (err(200) / err(400)).log2();
        assert!(order > 3.5, "observed order {order}");
    }

    #[test]
    fn log_grid_derivatives() {
        let g = RadialGrid::log_uniform(1e-6, 1e2, 3000).unwrap();
        let u = g.sample(|r| r * r / (1.0 + r * r));
        let d = g.d_r(&u, Origin::Equivariant(2));
        let dd = g.d_rr(&u, Origin::Equivariant(2));
        for (i, &r) in g.nodes().iter().enumerate() {
            let s = 1.0 + r * r;
            let ex1 = 2.0 * r / (s * s);
            let ex2 = (2.0 - 6.0 * r * r) / (s * s * s);
            assert!((d[i] - ex1).abs() < 1e-7 * (1.0 + ex1.abs()), "d1 at {r}");
            assert!((dd[i] - ex2).abs() < 1e-6 * (1.0 + ex2.abs()), "d2 at {r}");
        }
    }

    #[test]
    fn pchip_reproduces_linear_and_stays_monotone() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.5).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v - 1.0).collect();
        let q = [0.1, 3.3, 9.4];
        for (a, b) in pchip(&x, &y, &q).iter().zip(q) {
            assert!((a - (2.0 * b - 1.0)).abs() < 1e-13);
        }
        let step: Vec<f64> = x.iter().map(|&v| if v < 5.0 { 0.0 } else { 1.0 }).collect();
        let fine: Vec<f64> = (0..400).map(|i| i as f64 * 0.0237).collect();
        let s = pchip(&x, &step, &fine);
        assert!(s.windows(2).all(|w| w[1] >= w[0] - 1e-15));
        assert!(s.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn field_construction_checks() {
        let g = Arc::new(RadialGrid::uniform(1.0, 32).unwrap());
        assert!(ScalarField::new(g.clone(), vec![0.0; 31]).is_err());
        let mut v = vec![0.0; 32];
        v[3] = f64::NAN;
        assert!(ScalarField::new(g.clone(), v).is_err());
        let other = Arc::new(RadialGrid::uniform(2.0, 32).unwrap());
        assert!(FieldPair::new(ScalarField::zeros(&g), ScalarField::zeros(&other)).is_err());
    }

    proptest! {
        #[test]
        fn integration_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let g = RadialGrid::log_uniform(1e-3, 10.0, 200).unwrap();
            let f = g.sample(|r| (-r).exp());
            let h = g.sample(|r| r / (1.0 + r));
            let comb: Vec<f64> = f.iter().zip(&h).map(|(x, y)| a * x + b * y).collect();
            let lhs = g.integrate(&comb);
            let rhs = a * g.integrate(&f) + b * g.integrate(&h);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }
    }
}
