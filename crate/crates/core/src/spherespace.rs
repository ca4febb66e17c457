//! Graph functions `u_b` of the geodesic spheres near `S_θ`, cut out by the
//! planes `x_{n+2} + Σ b_i x_i = √(1+|b|²)(cos θ + b_{n+2})`, and least-squares
//! fitting of such spheres to arbitrary graphs.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{embed_unchecked, validate, GraphFunction};
use crate::grid::{ScalarField, SphereGrid};

/// Plane residual above which the arctan branch counts as wrong.
pub const BRANCH_TOL: f64 = 1e-9;
/// Central-difference step for derivatives in `b`.
pub const PARAM_STEP: f64 = 1e-5;
pub const FIT_MAX_ITER: usize = 50;
pub const FIT_STEP_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SphereParams {
    pub b: Vec<f64>,
}

impl SphereParams {
    pub fn new(b: Vec<f64>) -> Self {
        Self { b }
    }

    pub fn zero(n: usize) -> Self {
        Self { b: vec![0.0; n + 2] }
    }

    /// `|b|²` over the first `n + 1` entries.
    pub fn tilt_sq(&self) -> f64 {
        self.b[..self.b.len() - 1].iter().map(|v| v * v).sum()
    }

    pub fn shift(&self) -> f64 {
        *self.b.last().unwrap()
    }

    /// Right-hand side `√(1+|b|²)(cos θ + b_{n+2})` of the plane equation.
    pub fn plane_level(&self, theta: f64) -> f64 {
        (1.0 + self.tilt_sq()).sqrt() * (theta.cos() + self.shift())
    }

    /// `b_{n+2} ∈ (−1 − cos θ, 1 − cos θ)` and `|b|² < (cos θ + b_{n+2})^{−2} − 1`.
    pub fn is_valid(&self, theta: f64) -> bool {
        let c = theta.cos() + self.shift();
        self.b.iter().all(|v| v.is_finite())
            && c > -1.0
            && c < 1.0
            && (c == 0.0 || self.tilt_sq() < 1.0 / (c * c) - 1.0)
    }

    pub fn check(&self, n: usize, theta: f64) -> Result<()> {
        if self.b.len() != n + 2 {
            return Err(Error::Domain(format!("sphere parameters need {} entries, got {}", n + 2, self.b.len())));
        }
        if !self.is_valid(theta) {
            return Err(Error::Domain(format!("sphere parameters {:?} outside the admissible region at θ = {theta}", self.b)));
        }
        Ok(())
    }
}

/// `[0, π)`-valued arctangent of `num/den`, with `π/2` where `den = 0`.
fn arctan_branch(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        return PI / 2.0;
    }
    let t = (num / den).atan();
    if t < 0.0 {
        t + PI
    } else {
        t
    }
}

fn u_values(grid: &SphereGrid, theta: f64, params: &SphereParams) -> ScalarField {
    let n = grid.n();
    let k = params.plane_level(theta);
    let k2 = k * k;
    (0..grid.len())
        .map(|node| {
            let y = grid.frame.y(node);
            let s: f64 = (0..=n).map(|i| params.b[i] * y[i]).sum();
            let root = (1.0 + s * s - k2).max(0.0).sqrt();
            arctan_branch(s + k * root, k2 - s * s) - theta
        })
        .collect()
}

/// `u_b` on the grid, checked against the plane equation.
pub fn u_from_params(grid: &SphereGrid, theta: f64, params: &SphereParams) -> Result<GraphFunction> {
    params.check(grid.n(), theta)?;
    let gf = GraphFunction::new(theta, u_values(grid, theta, params));
    let res = plane_residual(grid, params, &gf);
    if !(res <= BRANCH_TOL) {
        return Err(Error::Branch(res));
    }
    if !validate(grid, &gf).is_valid() {
        return Err(Error::Domain(format!("u_b for b = {:?} is not a valid graph", params.b)));
    }
    Ok(gf)
}

/// `max |x_{n+2} + Σ b_i x_i − √(1+|b|²)(cos θ + b_{n+2})|` over the nodes of `X_u`.
pub fn plane_residual(grid: &SphereGrid, params: &SphereParams, gf: &GraphFunction) -> f64 {
    let dim = grid.n() + 2;
    let x = embed_unchecked(grid, gf);
    let level = params.plane_level(gf.theta);
    x.chunks(dim)
        .map(|p| {
            let lin: f64 = (0..dim - 1).map(|i| params.b[i] * p[i]).sum();
            (p[dim - 1] + lin - level).abs()
        })
        .fold(0.0f64, |m, v| if v.is_nan() { f64::NAN } else { m.max(v) })
}

/// Errors of the central difference of `b ↦ u_b` at `b = 0` against
/// `Σ z_j Y_j − z_{n+2}/sin θ`.
#[derive(Clone, Debug, Serialize)]
pub struct TangentReport {
    /// Max-norm error per coordinate direction `e_1, ..., e_{n+2}`.
    pub direction_errors: Vec<f64>,
    /// Max-norm deviation of `Du_0[z]` from `Σ z_j Du_0[e_j]` for a mixed `z`.
    pub linearity_error: f64,
}

impl TangentReport {
    pub fn max_error(&self) -> f64 {
        self.direction_errors.iter().fold(0.0f64, |m, v| m.max(*v))
    }
}

fn param_derivative(grid: &SphereGrid, theta: f64, base: &SphereParams, z: &[f64]) -> Result<ScalarField> {
    let h = PARAM_STEP;
    let shifted = |sign: f64| SphereParams::new(base.b.iter().zip(z).map(|(b, z)| b + sign * h * z).collect());
    let plus = u_from_params(grid, theta, &shifted(1.0))?;
    let minus = u_from_params(grid, theta, &shifted(-1.0))?;
    Ok(plus.u.iter().zip(&minus.u).map(|(p, m)| (p - m) / (2.0 * h)).collect())
}

pub fn tangent_linearization_check(grid: &SphereGrid, theta: f64) -> Result<TangentReport> {
    let n = grid.n();
    let harmonics = grid.harmonics_first_order();
    let zero = SphereParams::zero(n);
    let mut direction_errors = Vec::with_capacity(n + 2);
    let mut columns = Vec::with_capacity(n + 2);
    for j in 0..n + 2 {
        let mut z = vec![0.0; n + 2];
        z[j] = 1.0;
        let d = param_derivative(grid, theta, &zero, &z)?;
        let err = (0..grid.len())
            .map(|node| {
                let expect = if j <= n { harmonics[j][node] } else { -1.0 / theta.sin() };
                (d[node] - expect).abs()
            })
            .fold(0.0f64, f64::max);
        direction_errors.push(err);
        columns.push(d);
    }
    let z: Vec<f64> = (0..n + 2).map(|j| 0.3 - 0.17 * j as f64).collect();
    let mixed = param_derivative(grid, theta, &zero, &z)?;
    let linearity_error = (0..grid.len())
        .map(|node| (mixed[node] - (0..n + 2).map(|j| z[j] * columns[j][node]).sum::<f64>()).abs())
        .fold(0.0f64, f64::max);
    Ok(TangentReport { direction_errors, linearity_error })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphereFit {
    pub b: Vec<f64>,
    /// `max |u − u_b|`
    pub residual: f64,
    pub iterations: usize,
}

/// Gauss-Newton fit of `u_b` to `gf.u` in the quadrature L² norm, from `b = 0`.
pub fn fit_sphere(grid: &SphereGrid, gf: &GraphFunction) -> Result<SphereFit> {
    let n = grid.n();
    let m = n + 2;
    let theta = gf.theta;
    let w = grid.weights();
    let objective = |ub: &[f64]| -> f64 {
        crate::grid::compensated_sum(ub.iter().zip(&gf.u).zip(w).map(|((a, b), w)| w * (b - a) * (b - a)))
    };
    let mut params = SphereParams::zero(n);
    let mut current = u_from_params(grid, theta, &params)?.u;
    let mut obj = objective(&current);
    let mut last_step = f64::INFINITY;
    for iter in 1..=FIT_MAX_ITER {
        let mut jac = DMatrix::zeros(grid.len(), m);
        for j in 0..m {
            let mut z = vec![0.0; m];
            z[j] = 1.0;
            let col = param_derivative(grid, theta, &params, &z)?;
            for (node, v) in col.iter().enumerate() {
                jac[(node, j)] = v * w[node].sqrt();
            }
        }
        let r = DVector::from_iterator(grid.len(), (0..grid.len()).map(|i| (gf.u[i] - current[i]) * w[i].sqrt()));
        let normal = jac.transpose() * &jac;
        let rhs = jac.transpose() * r;
        let step = normal
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::NoConvergence { iterations: iter, last_step })?;
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial = SphereParams::new(params.b.iter().zip(step.iter()).map(|(b, s)| b + alpha * s).collect());
            if trial.is_valid(theta) {
                if let Ok(ub) = u_from_params(grid, theta, &trial) {
                    let o = objective(&ub.u);
                    if o <= obj || alpha * step.amax() < FIT_STEP_TOL {
                        accepted = Some((trial, ub.u, o));
                        break;
                    }
                }
            }
            alpha *= 0.5;
        }
        let Some((trial, ub, o)) = accepted else {
            return Err(Error::Domain("sphere fit iterates left the admissible parameter region".into()));
        };
        last_step = alpha * step.amax();
        params = trial;
        current = ub;
        obj = o;
        if last_step < FIT_STEP_TOL {
            let residual = current.iter().zip(&gf.u).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max);
            return Ok(SphereFit { b: params.b, residual, iterations: iter });
        }
    }
    Err(Error::NoConvergence { iterations: FIT_MAX_ITER, last_step })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_params_give_zero() {
        for (n, res) in [(1, 16), (2, 8)] {
            let grid = SphereGrid::build(n, res).unwrap();
            let gf = u_from_params(&grid, 1.0, &SphereParams::zero(n)).unwrap();
            assert!(gf.u.iter().all(|v| v.abs() < 1e-15));
            assert!(plane_residual(&grid, &SphereParams::zero(n), &gf) <= 1e-12);
        }
    }

    #[test]
    fn pure_shift_is_constant() {
        let grid = SphereGrid::build(2, 8).unwrap();
        let theta = 1.2f64;
        let beta = 0.15;
        let gf = u_from_params(&grid, theta, &SphereParams::new(vec![0.0, 0.0, 0.0, beta])).unwrap();
        let c = (theta.cos() + beta).acos() - theta;
        assert!(gf.u.iter().all(|v| (v - c).abs() < 1e-14));
    }

    #[test]
    fn branch_matches_angle_sum_form() {
        // s = atan(S) + acos(K / √(1 + S²))
        let grid = SphereGrid::build(1, 32).unwrap();
        for theta in [0.3, 1.0, PI / 2.0, 2.5] {
            let p = SphereParams::new(vec![0.08, -0.05, 0.04]);
            let gf = u_from_params(&grid, theta, &p).unwrap();
            let k = p.plane_level(theta);
            let y = grid.harmonics_first_order();
            for node in 0..grid.len() {
                let s = 0.08 * y[0][node] - 0.05 * y[1][node];
                let expect = s.atan() + (k / (1.0 + s * s).sqrt()).acos();
                assert!((gf.u[node] + theta - expect).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn invalid_params_rejected() {
        let grid = SphereGrid::build(1, 16).unwrap();
        let theta = 1.0f64;
        let p = SphereParams::new(vec![0.0, 0.0, 1.0 - theta.cos() + 0.01]);
        assert!(matches!(u_from_params(&grid, theta, &p), Err(Error::Domain(_))));
        let p = SphereParams::new(vec![5.0, 0.0, 0.0]);
        assert!(matches!(u_from_params(&grid, theta, &p), Err(Error::Domain(_))));
    }

    #[test]
    fn perturbed_sphere_violates_plane() {
        let grid = SphereGrid::build(2, 12).unwrap();
        let p = SphereParams::new(vec![0.05, 0.02, -0.03, 0.01]);
        let mut gf = u_from_params(&grid, 1.0, &p).unwrap();
        let y2 = grid.field_from_fn(|q| 1.5 * q[1].cos().powi(2) - 0.5);
        for (u, y) in gf.u.iter_mut().zip(&y2) {
            *u += 0.01 * y;
        }
        assert!(plane_residual(&grid, &p, &gf) > 1e-4);
    }

    #[test]
    fn tangent_check_examples() {
        for (n, res) in [(1, 16), (2, 10)] {
            let grid = SphereGrid::build(n, res).unwrap();
            let r = tangent_linearization_check(&grid, 1.1).unwrap();
            assert!(r.max_error() <= 1e-6, "{:?}", r);
            assert!(r.linearity_error <= 1e-8);
        }
    }

    #[test]
    fn fit_round_trip() {
        let grid = SphereGrid::build(2, 10).unwrap();
        let p = SphereParams::new(vec![0.04, -0.06, 0.03, -0.02]);
        let gf = u_from_params(&grid, 1.0, &p).unwrap();
        let fit = fit_sphere(&grid, &gf).unwrap();
        for (a, b) in fit.b.iter().zip(&p.b) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!(fit.residual <= 1e-9);
        let zero = fit_sphere(&grid, &GraphFunction::zero(&grid, 1.0)).unwrap();
        assert!(zero.b.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn fit_keeps_orthogonal_residual() {
        let grid = SphereGrid::build(2, 12).unwrap();
        let p = SphereParams::new(vec![0.02, 0.01, -0.03, 0.02]);
        let mut gf = u_from_params(&grid, 1.0, &p).unwrap();
        let y2: Vec<f64> = grid.field_from_fn(|q| 1.5 * q[1].cos().powi(2) - 0.5);
        let peak = y2.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (u, y) in gf.u.iter_mut().zip(&y2) {
            *u += 1e-3 * y / peak;
        }
        let fit = fit_sphere(&grid, &gf).unwrap();
        assert!(fit.residual > 3e-4 && fit.residual < 2e-3, "{}", fit.residual);
        for (a, b) in fit.b.iter().zip(&p.b) {
            assert!((a - b).abs() < 1e-3);
        }
    }
}
