//! The linearization `DG(0)` at the base sphere: analytic and finite
//! difference assembly on the retained spectral modes, spectra, the
//! projection onto the stationary directions, and variation self-tests.

use nalgebra::{Complex, DMatrix, Schur};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{filter_degree, rhs, UniformSource};
use crate::geometry::{geometry_fields, GraphFunction};
use crate::grid::{ScalarField, SphereGrid};
use crate::symfunc::{elementary_symmetric, speed_and_gradient, umbilic_speed_derivative, SpeedSpec};
use crate::weights::WeightSpec;

pub const NULL_TOL_ANALYTIC: f64 = 1e-8;
pub const NULL_TOL_NUMERIC: f64 = 1e-4;
pub const JACOBIAN_EPS_RANGE: (f64, f64) = (1e-7, 1e-4);
/// Step of the normal variations in [`linearization_selftest`].
pub const SELFTEST_STEP: f64 = 1e-5;

/// Quadrature-orthogonal projection onto `span{1, Y_1, ..., Y_{n+1}}`.
#[derive(Clone, Copy, Debug)]
pub struct NullProjection<'a> {
    grid: &'a SphereGrid,
}

impl<'a> NullProjection<'a> {
    pub fn new(grid: &'a SphereGrid) -> Self {
        Self { grid }
    }

    pub fn apply(&self, u: &[f64]) -> ScalarField {
        self.grid.project(u, 1)
    }

    /// `‖(I − P)u‖_∞`
    pub fn complement_norm(&self, u: &[f64]) -> f64 {
        let p = self.apply(u);
        u.iter().zip(&p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// `P` as a node-by-node matrix.
    pub fn matrix(&self) -> DMatrix<f64> {
        let nodes = self.grid.len();
        let mut m = DMatrix::zeros(nodes, nodes);
        for j in 0..nodes {
            let mut e = vec![0.0; nodes];
            e[j] = 1.0;
            for (i, v) in self.apply(&e).into_iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    }
}

/// `P` for the grid; see [`NullProjection`].
pub fn projection_p(grid: &SphereGrid) -> NullProjection<'_> {
    NullProjection::new(grid)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assembly {
    Analytic,
    Numeric,
}

/// Dense operator on the orthonormal spectral coefficients of degree at most
/// the flow's filter degree.
#[derive(Clone, Debug)]
pub struct LinearOperator {
    pub matrix: DMatrix<f64>,
    /// Coefficient indices of the rows and columns.
    pub modes: Vec<usize>,
    pub n: usize,
    pub theta: f64,
    pub speed: SpeedSpec,
    pub assembly: Assembly,
}

impl LinearOperator {
    pub fn dim(&self) -> usize {
        self.modes.len()
    }

    /// Operator applied to the field with the given retained coefficients.
    pub fn apply(&self, coeffs: &[f64]) -> Vec<f64> {
        (&self.matrix * nalgebra::DVector::from_column_slice(coeffs)).iter().copied().collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.matrix.amax()
    }
}

fn retained_modes(grid: &SphereGrid) -> Vec<usize> {
    let k = filter_degree(grid);
    (0..grid.num_modes()).filter(|&i| grid.mode_degree(i) <= k).collect()
}

fn restrict(grid: &SphereGrid, modes: &[usize], f: &[f64]) -> Vec<f64> {
    let a = grid.analyze(f);
    modes.iter().map(|&i| a[i]).collect()
}

/// `w ↦ F′ sin^{−2}θ (Δ w + n w − n ⨍ w)` with `F′ = ∂F/∂κ_1` on the base sphere.
pub fn dg0_analytic(grid: &SphereGrid, theta: f64, speed: &SpeedSpec) -> Result<LinearOperator> {
    let n = grid.n();
    let df = umbilic_speed_derivative(speed, n, 1.0 / theta.tan())?;
    if !(df > 0.0) {
        return Err(Error::Config(format!("speed {speed} has ∂F/∂κ_1 = {df:e} ≤ 0 at θ = {theta}")));
    }
    let modes = retained_modes(grid);
    let scale = df / theta.sin().powi(2);
    let measure = grid.sphere_measure();
    let mut matrix = DMatrix::zeros(modes.len(), modes.len());
    for (j, &mode) in modes.iter().enumerate() {
        let w = grid.basis_field(mode);
        let lap = grid.laplacian(&w);
        let mean = grid.integrate_plain(&w) / measure;
        let out: Vec<f64> = w.iter().zip(&lap).map(|(w, l)| scale * (l + n as f64 * (w - mean))).collect();
        for (i, v) in restrict(grid, &modes, &out).into_iter().enumerate() {
            matrix[(i, j)] = v;
        }
    }
    Ok(LinearOperator { matrix, modes, n, theta, speed: *speed, assembly: Assembly::Analytic })
}

/// Central-difference Jacobian of the right-hand side at `u = 0`, one
/// column per retained mode, columns computed in parallel.
pub fn dg0_numeric(
    grid: &SphereGrid,
    theta: f64,
    speed: &SpeedSpec,
    spec: &WeightSpec,
    eps: f64,
) -> Result<LinearOperator> {
    if !(eps >= JACOBIAN_EPS_RANGE.0 && eps <= JACOBIAN_EPS_RANGE.1) {
        return Err(Error::Config(format!(
            "Jacobian step {eps:e} outside [{:e}, {:e}]",
            JACOBIAN_EPS_RANGE.0, JACOBIAN_EPS_RANGE.1
        )));
    }
    spec.validate(grid.n(), theta)?;
    let modes = retained_modes(grid);
    let columns: Vec<Vec<f64>> = modes
        .par_iter()
        .map(|&mode| {
            let w = grid.basis_field(mode);
            let eval = |sign: f64| rhs(grid, &GraphFunction::new(theta, w.iter().map(|v| sign * eps * v).collect()), speed, spec);
            let (plus, minus) = (eval(1.0)?, eval(-1.0)?);
            let diff: Vec<f64> = plus.iter().zip(&minus).map(|(p, m)| (p - m) / (2.0 * eps)).collect();
            Ok(restrict(grid, &modes, &diff))
        })
        .collect::<Result<_>>()?;
    let dim = modes.len();
    let matrix = DMatrix::from_fn(dim, dim, |i, j| columns[j][i]);
    Ok(LinearOperator { matrix, modes, n: grid.n(), theta, speed: *speed, assembly: Assembly::Numeric })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// Real parts, descending.
    pub eigenvalues: Vec<f64>,
    /// Largest imaginary part seen.
    pub max_imag: f64,
    pub null_tol: f64,
    pub null_multiplicity: usize,
    /// Largest real part outside the null set.
    pub gap: f64,
}

pub fn spectrum(op: &LinearOperator) -> Spectrum {
    let null_tol = match op.assembly {
        Assembly::Analytic => NULL_TOL_ANALYTIC,
        Assembly::Numeric => NULL_TOL_NUMERIC,
    };
    let eig = eigenvalues_of(&op.matrix);
    let max_imag = eig.iter().fold(0.0f64, |m, z| m.max(z.im.abs()));
    let mut eigenvalues: Vec<f64> = eig.iter().map(|z| z.re).collect();
    eigenvalues.sort_by(|a, b| b.total_cmp(a));
    let null_multiplicity = eig.iter().filter(|z| z.norm() <= null_tol).count();
    let gap = eig.iter().filter(|z| z.norm() > null_tol).map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    Spectrum { eigenvalues, max_imag, null_tol, null_multiplicity, gap }
}

/// Symmetric matrices go through the symmetric solver; others through a
/// real Schur form with an iteration cap, falling back to the symmetric part
/// if that does not converge.
fn eigenvalues_of(m: &DMatrix<f64>) -> Vec<Complex<f64>> {
    let asym = (m - m.transpose()).amax();
    let symmetric_part = || {
        let sym = (m + m.transpose()) * 0.5;
        sym.symmetric_eigenvalues().iter().map(|&x| Complex::new(x, 0.0)).collect()
    };
    if asym <= 1e-12 * m.amax().max(1.0) {
        return symmetric_part();
    }
    match Schur::try_new(m.clone(), f64::EPSILON, 1000 * m.nrows().max(1)) {
        Some(schur) => schur.complex_eigenvalues().iter().copied().collect(),
        None => symmetric_part(),
    }
}

/// `−(n+2) F′ / sin²θ`
pub fn predicted_gap(n: usize, theta: f64, speed: &SpeedSpec) -> Result<f64> {
    let df = umbilic_speed_derivative(speed, n, 1.0 / theta.tan())?;
    Ok(-(n as f64 + 2.0) * df / theta.sin().powi(2))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearizationReport {
    /// Per sample, `max |FD − predicted| / max(1, max |predicted|)` for `F(κ)`.
    pub speed_errors: Vec<f64>,
    /// Per sample, `|FD − ∫ E_1 w dμ| / max(1, |∫ E_1 w dμ|)` for the area.
    pub area_errors: Vec<f64>,
}

impl LinearizationReport {
    pub fn max_error(&self) -> f64 {
        self.speed_errors.iter().chain(&self.area_errors).fold(0.0, |m, v| m.max(*v))
    }
}

/// Band-limited field with coefficients uniform in `[−1, 1)` up to
/// `max_degree`, scaled to `max |w| = 1`.
pub fn random_band_limited(grid: &SphereGrid, max_degree: usize, src: &mut UniformSource) -> ScalarField {
    let coeffs: Vec<f64> = (0..grid.num_modes())
        .map(|i| if grid.mode_degree(i) <= max_degree { src.next_range(-1.0, 1.0) } else { 0.0 })
        .collect();
    let w = grid.synthesize(&coeffs);
    let peak = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    w.into_iter().map(|v| v / peak).collect()
}

/// Predicted first variation of `F(κ)` along the normal field `w` at the
/// sphere: `−F′ (Δ_g̊ w + n cot²θ w + n w)` with `Δ_g̊ = sin^{−2}θ Δ`.
pub fn umbilic_speed_variation(grid: &SphereGrid, theta: f64, speed: &SpeedSpec, w: &[f64]) -> Result<ScalarField> {
    let n = grid.n() as f64;
    let df = umbilic_speed_derivative(speed, grid.n(), 1.0 / theta.tan())?;
    let cot2 = (1.0 / theta.tan()).powi(2);
    let lap = grid.laplacian(w);
    let s2 = theta.sin().powi(2);
    Ok(w.iter().zip(&lap).map(|(w, l)| -df * (l / s2 + n * cot2 * w + n * w)).collect())
}

/// Compares finite differences of `F(κ)` and of the area under the graph
/// variations `u = ±ε w` with their linearizations, for `w = 1` and then
/// `samples` random fields of degree `≤ max_degree`.
pub fn linearization_selftest(
    grid: &SphereGrid,
    theta: f64,
    speed: &SpeedSpec,
    samples: usize,
    max_degree: usize,
    seed: u64,
) -> Result<LinearizationReport> {
    let eps = SELFTEST_STEP;
    let mut src = UniformSource::new(seed);
    let mut fields_w = vec![vec![1.0; grid.len()]];
    fields_w.extend((0..samples).map(|_| random_band_limited(grid, max_degree.min(grid.max_degree()), &mut src)));
    let base = geometry_fields(grid, &GraphFunction::zero(grid, theta))?;
    let e1: Vec<f64> = (0..grid.len()).map(|node| elementary_symmetric(base.kappa(node))[1]).collect();
    let mut report = LinearizationReport { speed_errors: Vec::new(), area_errors: Vec::new() };
    for w in &fields_w {
        let perturbed = |sign: f64| {
            let gf = GraphFunction::new(theta, w.iter().map(|v| sign * eps * v).collect());
            geometry_fields(grid, &gf)
        };
        let (plus, minus) = (perturbed(1.0)?, perturbed(-1.0)?);
        let speed_at = |f: &crate::geometry::GeometryFields| -> Result<Vec<f64>> {
            (0..grid.len()).map(|node| Ok(speed_and_gradient(speed, f.kappa(node))?.0)).collect()
        };
        let (fp, fm) = (speed_at(&plus)?, speed_at(&minus)?);
        let predicted = umbilic_speed_variation(grid, theta, speed, w)?;
        let scale = predicted.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let err = (0..grid.len())
            .map(|node| ((fp[node] - fm[node]) / (2.0 * eps) - predicted[node]).abs())
            .fold(0.0f64, f64::max);
        report.speed_errors.push(err / scale);

        let fd_area = (plus.area(grid) - minus.area(grid)) / (2.0 * eps);
        let e1w: Vec<f64> = e1.iter().zip(w).map(|(e, w)| e * w).collect();
        let analytic = grid.integrate(&e1w, &base.mu);
        report.area_errors.push((fd_area - analytic).abs() / analytic.abs().max(1.0));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn projection_properties() {
        for (n, res) in [(1, 32), (2, 10)] {
            let grid = SphereGrid::build(n, res).unwrap();
            let p = NullProjection::new(&grid);
            for y in grid.harmonics_first_order() {
                let py = p.apply(&y);
                assert!(y.iter().zip(&py).all(|(a, b)| (a - b).abs() <= 1e-12));
            }
            let d2 = grid.basis_field(grid.mode_index(2, 0).unwrap());
            assert!(p.apply(&d2).iter().all(|v| v.abs() <= 1e-10));
            let m = p.matrix();
            assert!((&m * &m - &m).amax() <= 1e-12);
        }
    }

    #[test]
    fn analytic_operator_on_low_modes() {
        let grid = SphereGrid::build(2, 12).unwrap();
        let theta = PI / 3.0;
        let op = dg0_analytic(&grid, theta, &SpeedSpec::power(1)).unwrap();
        let col = |l: usize, m: i64| {
            let idx = grid.mode_index(l, m).unwrap();
            let j = op.modes.iter().position(|&k| k == idx).unwrap();
            (j, op.matrix.column(j).iter().copied().collect::<Vec<_>>())
        };
        for (l, m) in [(0, 0), (1, 0), (1, 1), (1, -1)] {
            assert!(col(l, m).1.iter().all(|v| v.abs() <= 1e-10));
        }
        let (j, c) = col(2, 1);
        let df = umbilic_speed_derivative(&SpeedSpec::power(1), 2, 1.0 / theta.tan()).unwrap();
        let expect = -4.0 * df / theta.sin().powi(2);
        assert!((c[j] - expect).abs() <= 1e-10 * expect.abs());
        assert!(c.iter().enumerate().all(|(i, v)| i == j || v.abs() <= 1e-10));
    }

    #[test]
    fn analytic_spectrum() {
        for (n, res) in [(1, 32), (2, 12)] {
            let grid = SphereGrid::build(n, res).unwrap();
            for theta in [PI / 3.0, PI / 2.0] {
                let op = dg0_analytic(&grid, theta, &SpeedSpec::power(1)).unwrap();
                let s = spectrum(&op);
                assert_eq!(s.null_multiplicity, n + 2);
                let gap = predicted_gap(n, theta, &SpeedSpec::power(1)).unwrap();
                assert!((s.gap - gap).abs() <= 1e-6 * gap.abs());
                assert!(s.eigenvalues.iter().all(|&l| l < 0.0 || l.abs() <= NULL_TOL_ANALYTIC));
            }
        }
    }

    #[test]
    fn numeric_matches_analytic() {
        let grid = SphereGrid::build(1, 64).unwrap();
        let theta = PI / 3.0;
        let speed = SpeedSpec::power(1);
        let an = dg0_analytic(&grid, theta, &speed).unwrap();
        let nu = dg0_numeric(&grid, theta, &speed, &WeightSpec::basis(1, 2), 1e-5).unwrap();
        assert!((&an.matrix - &nu.matrix).amax() <= 1e-4);
        let other = dg0_numeric(&grid, theta, &speed, &WeightSpec::new(vec![0.2, 1.0, 0.5]), 1e-5).unwrap();
        assert!((&other.matrix - &nu.matrix).amax() <= 1e-4);
        // orthonormal coefficients make μ̊-symmetry plain matrix symmetry
        assert!((&nu.matrix - nu.matrix.transpose()).amax() <= 1e-4);
        let s = spectrum(&nu);
        assert_eq!(s.null_multiplicity, 3);
        assert!((s.gap + 3.0 / 0.75).abs() <= 1e-3 * 4.0);
    }

    #[test]
    fn scaling_speed_doubles_spectrum() {
        let grid = SphereGrid::build(1, 32).unwrap();
        let spec = WeightSpec::volume(1);
        let a = spectrum(&dg0_numeric(&grid, 1.0, &SpeedSpec::power(1), &spec, 1e-5).unwrap());
        let b = spectrum(&dg0_numeric(&grid, 1.0, &SpeedSpec::power(1).scaled(2.0), &spec, 1e-5).unwrap());
        for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
            if x.abs() > NULL_TOL_NUMERIC {
                assert!((y - 2.0 * x).abs() <= 1e-6 * y.abs());
            }
        }
    }

    #[test]
    fn jacobian_step_range() {
        let grid = SphereGrid::build(1, 16).unwrap();
        for eps in [1e-8, 1e-3] {
            let r = dg0_numeric(&grid, 1.0, &SpeedSpec::power(1), &WeightSpec::volume(1), eps);
            assert!(matches!(r, Err(Error::Config(_))));
        }
    }

    #[test]
    fn umbilic_variation_examples() {
        let grid = SphereGrid::build(1, 32).unwrap();
        let ones = vec![1.0; grid.len()];
        let v = umbilic_speed_variation(&grid, PI / 2.0, &SpeedSpec::power(1), &ones).unwrap();
        assert!(v.iter().all(|x| (x + 1.0).abs() <= 1e-12));
        let y = &grid.harmonics_first_order()[0];
        let v = umbilic_speed_variation(&grid, PI / 2.0, &SpeedSpec::power(1), y).unwrap();
        assert!(v.iter().all(|x| x.abs() <= 1e-12));
    }

    #[test]
    fn selftest_passes() {
        for (n, res) in [(1, 32), (2, 12)] {
            let grid = SphereGrid::build(n, res).unwrap();
            for theta in [PI / 3.0, PI / 2.0] {
                let r = linearization_selftest(&grid, theta, &SpeedSpec::power(1), 3, 4, 11).unwrap();
                assert!(r.max_error() <= 1e-5, "n = {n}, θ = {theta}: {r:?}");
            }
        }
        let grid = SphereGrid::build(1, 32).unwrap();
        let base = geometry_fields(&grid, &GraphFunction::zero(&grid, 1.0)).unwrap();
        let e1: Vec<f64> = (0..grid.len()).map(|i| base.kappa(i)[0]).collect();
        assert!((grid.integrate(&e1, &base.mu) - 2.0 * PI * 1.0f64.cos()).abs() <= 1e-12);
    }
}
