//! The bundled invariant suite behind `spheregraph verify`.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::Result;
use crate::flow::{measure_decay, rhs, run_flow, FlowConfig, FlowStatus, InitialCondition, UniformSource};
use crate::geometry::{geometry_fields, GraphFunction};
use crate::grid::SphereGrid;
use crate::spherespace::{fit_sphere, plane_residual, tangent_linearization_check, u_from_params, SphereParams};
use crate::stability::{dg0_analytic, dg0_numeric, linearization_selftest, predicted_gap, spectrum, random_band_limited};
use crate::symfunc::{elementary_symmetric_matrix, esym_derivative_tensor, speed_and_gradient, SpeedSpec};
use crate::volumes::vhat_directional_derivative;
use crate::weights::{xi_a_field, xi_sphere_closed_form, WeightSpec};

#[derive(Clone, Debug, Serialize)]
pub struct CheckOutcome {
    pub module: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

type Check = fn(bool) -> Result<(bool, String)>;

const CHECKS: &[(&str, &str, Check)] = &[
    ("symfunc", "derivative tensor identities", check_symfunc_identities),
    ("symfunc", "speed gradients", check_speed_gradients),
    ("grid", "orthonormal basis and spectrum", check_grid),
    ("geometry", "base sphere geometry", check_base_geometry),
    ("weights", "weights at the sphere", check_weights),
    ("volumes", "first variation of V̂", check_volume_variation),
    ("spherespace", "sphere parameters", check_sphere_space),
    ("flow", "stationary spheres", check_stationary),
    ("flow", "conservation and decay", check_flow),
    ("stability", "analytic spectrum", check_analytic_spectrum),
    ("stability", "numeric spectrum", check_numeric_spectrum),
    ("stability", "umbilic linearization", check_linearization),
];

/// Runs every check; `quick` uses coarse grids and fewer samples.
pub fn run_suite(quick: bool) -> Vec<CheckOutcome> {
    CHECKS
        .iter()
        .map(|&(module, name, check)| {
            let start = Instant::now();
            let (passed, detail) = match check(quick) {
                Ok(v) => v,
                Err(e) => (false, format!("error: {e}")),
            };
            CheckOutcome { module, name, passed, detail, seconds: start.elapsed().as_secs_f64() }
        })
        .collect()
}

pub fn format_table(results: &[CheckOutcome]) -> String {
    let mut out = format!("{:<12} {:<32} {:<6} {:>8}  detail\n", "module", "check", "result", "seconds");
    for r in results {
        out.push_str(&format!(
            "{:<12} {:<32} {:<6} {:>8.2}  {}\n",
            r.module,
            r.name,
            if r.passed { "PASS" } else { "FAIL" },
            r.seconds,
            r.detail
        ));
    }
    out
}

fn grids(quick: bool) -> Vec<SphereGrid> {
    let sizes: &[(usize, usize)] = if quick { &[(1, 32), (2, 12)] } else { &[(1, 64), (2, 16)] };
    sizes.iter().map(|&(n, r)| SphereGrid::build(n, r).expect("grid sizes are valid")).collect()
}

/// `W = g^{-1} h` with random symmetric positive `g` and symmetric `h`.
pub fn random_weingarten(n: usize, src: &mut UniformSource) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let a = DMatrix::from_fn(n, n, |_, _| src.next_range(-1.0, 1.0));
    let g = a.transpose() * &a + DMatrix::identity(n, n);
    let r = DMatrix::from_fn(n, n, |_, _| src.next_range(-2.0, 2.0));
    let h = (&r + r.transpose()) * 0.5;
    let w = g.clone().try_inverse().expect("positive definite") * &h;
    (g, h, w)
}

/// Largest violation of the derivative tensor identities over `samples`
/// random Weingarten maps of size `n`: mixed-index symmetry, the recursion
/// in `a`, symmetry of `h D^T`, and Euler homogeneity.
pub fn symfunc_identity_error(n: usize, samples: usize, seed: u64) -> f64 {
    let mut src = UniformSource::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let (g, h, w) = random_weingarten(n, &mut src);
        let ginv = g.clone().try_inverse().unwrap();
        let e = elementary_symmetric_matrix(&w);
        let scale = 1.0 + e.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for a in 0..=n {
            let d = esym_derivative_tensor(&w, a);
            worst = worst.max((&g * d.transpose() * &ginv - &d).amax() / scale);
            let hd = &h * d.transpose();
            worst = worst.max((&hd - hd.transpose()).amax() / scale);
            if a < n {
                let next = esym_derivative_tensor(&w, a + 1);
                let rec = DMatrix::identity(n, n) * e[a] - &d * w.transpose();
                worst = worst.max((next - rec).amax() / scale);
                let euler: f64 = w.component_mul(&esym_derivative_tensor(&w, a + 1)).sum();
                worst = worst.max((euler - (a as f64 + 1.0) * e[a + 1]).abs() / scale);
            }
        }
    }
    worst
}

fn check_symfunc_identities(quick: bool) -> Result<(bool, String)> {
    let samples = if quick { 100 } else { 1000 };
    let worst = (1..=4).map(|n| symfunc_identity_error(n, samples, 17 + n as u64)).fold(0.0, f64::max);
    Ok((worst <= 1e-10, format!("max violation {worst:.2e}")))
}

fn check_speed_gradients(quick: bool) -> Result<(bool, String)> {
    let mut src = UniformSource::new(5);
    let samples = if quick { 50 } else { 500 };
    let mut worst = 0.0f64;
    for n in 1..=3 {
        let mut speeds = vec![SpeedSpec::power(1), SpeedSpec::root(n)];
        if n > 1 {
            speeds.extend([SpeedSpec::power(2), SpeedSpec::quotient(1)]);
        }
        for _ in 0..samples {
            let kappa: Vec<f64> = (0..n).map(|_| src.next_range(0.2, 2.0)).collect();
            for spec in &speeds {
                let (_, grad) = speed_and_gradient(spec, &kappa)?;
                for (a, ga) in grad.iter().enumerate() {
                    let at = |d: f64| {
                        let mut k = kappa.clone();
                        k[a] += d;
                        speed_and_gradient(spec, &k).map(|v| v.0)
                    };
                    let fd = (at(1e-6)? - at(-1e-6)?) / 2e-6;
                    worst = worst.max((fd - ga).abs() / ga.abs().max(1.0));
                }
            }
        }
    }
    Ok((worst <= 1e-6, format!("max relative error {worst:.2e}")))
}

fn check_grid(quick: bool) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for grid in grids(quick) {
        let modes = grid.num_modes();
        let step = (modes / 40).max(1);
        for i in (0..modes).step_by(step) {
            let f = grid.basis_field(i);
            let lap = grid.laplacian(&f);
            let lam = grid.mode_eigenvalue(i);
            worst = worst.max(f.iter().zip(&lap).map(|(f, l)| (l - lam * f).abs()).fold(0.0, f64::max) / lam.abs().max(1.0));
            for j in (0..modes).step_by(step) {
                let g = grid.basis_field(j);
                let fg: Vec<f64> = f.iter().zip(&g).map(|(a, b)| a * b).collect();
                let expect = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((grid.integrate_plain(&fg) - expect).abs());
            }
        }
    }
    Ok((worst <= 1e-10, format!("max error {worst:.2e}")))
}

fn check_base_geometry(quick: bool) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for grid in grids(quick) {
        for theta in [PI / 6.0, PI / 2.0, 2.0] {
            let f = geometry_fields(&grid, &GraphFunction::zero(&grid, theta))?;
            let cot = 1.0 / theta.tan();
            worst = worst.max(f.kappa.iter().map(|k| (k - cot).abs()).fold(0.0, f64::max));
            let mu = theta.sin().powi(grid.n() as i32);
            worst = worst.max(f.mu.iter().map(|m| (m - mu).abs()).fold(0.0, f64::max));
        }
    }
    Ok((worst <= 1e-12, format!("max error {worst:.2e}")))
}

/// Largest relative error of assembled `Ξ_a` at the base sphere against
/// the closed form, over `θ ∈ {π/6, π/4, π/3, π/2, 2π/3}` and all `a`.
pub fn weight_oracle_error(grid: &SphereGrid) -> Result<f64> {
    let n = grid.n();
    let mut worst = 0.0f64;
    for theta in [PI / 6.0, PI / 4.0, PI / 3.0, PI / 2.0, 2.0 * PI / 3.0] {
        let fields = geometry_fields(grid, &GraphFunction::zero(grid, theta))?;
        for a in 0..=n + 1 {
            let xi = xi_a_field(grid, &fields, a)?;
            let expect = xi_sphere_closed_form(n, theta, a);
            let err = xi.iter().map(|x| (x - expect).abs()).fold(0.0, f64::max);
            worst = worst.max(err / expect.abs().max(1.0));
        }
    }
    Ok(worst)
}

fn check_weights(quick: bool) -> Result<(bool, String)> {
    let worst = grids(quick).iter().map(weight_oracle_error).collect::<Result<Vec<_>>>()?.into_iter().fold(0.0, f64::max);
    Ok((worst <= 1e-6, format!("max relative error {worst:.2e}")))
}

/// Largest relative FD-vs-analytic error of `dV̂_a[w]` over `pairs` random
/// band-limited `(u, w)` and every `a`.
pub fn volume_variation_error(grid: &SphereGrid, theta: f64, pairs: usize, seed: u64) -> Result<f64> {
    let n = grid.n();
    let mut src = UniformSource::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let u: Vec<f64> = random_band_limited(grid, 4, &mut src).into_iter().map(|v| 0.03 * v).collect();
        let w = random_band_limited(grid, 4, &mut src);
        let gf = GraphFunction::new(theta, u);
        for a in 0..=n + 1 {
            let (fd, an) = vhat_directional_derivative(grid, &gf, &w, &WeightSpec::basis(n, a))?;
            worst = worst.max((fd - an).abs() / an.abs().max(1.0));
        }
    }
    Ok(worst)
}

fn check_volume_variation(quick: bool) -> Result<(bool, String)> {
    let pairs = if quick { 3 } else { 10 };
    let mut worst = 0.0f64;
    for (i, grid) in grids(quick).iter().enumerate() {
        worst = worst.max(volume_variation_error(grid, 1.1, pairs, 31 + i as u64)?);
    }
    Ok((worst <= 1e-4, format!("max relative error {worst:.2e}")))
}

/// Valid sphere parameters with `|b_i| ≤ 0.05`.
pub fn random_sphere_params(n: usize, theta: f64, src: &mut UniformSource) -> SphereParams {
    loop {
        let p = SphereParams::new((0..n + 2).map(|_| src.next_range(-0.05, 0.05)).collect());
        if p.is_valid(theta) {
            return p;
        }
    }
}

fn check_sphere_space(quick: bool) -> Result<(bool, String)> {
    let samples = if quick { 5 } else { 20 };
    let (mut fit_err, mut plane, mut tangent) = (0.0f64, 0.0f64, 0.0f64);
    let mut src = UniformSource::new(99);
    for grid in grids(quick) {
        let theta = 1.2;
        tangent = tangent.max(tangent_linearization_check(&grid, theta)?.max_error());
        for _ in 0..samples {
            let b = random_sphere_params(grid.n(), theta, &mut src);
            let ub = u_from_params(&grid, theta, &b)?;
            plane = plane.max(plane_residual(&grid, &b, &ub));
            let fit = fit_sphere(&grid, &ub)?;
            fit_err = fit_err.max(fit.b.iter().zip(&b.b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
        }
    }
    let ok = fit_err <= 1e-8 && plane <= 1e-9 && tangent <= 1e-6;
    Ok((ok, format!("fit {fit_err:.2e}, plane {plane:.2e}, tangent {tangent:.2e}")))
}

fn check_stationary(quick: bool) -> Result<(bool, String)> {
    let samples = if quick { 5 } else { 20 };
    let mut worst = 0.0f64;
    let mut src = UniformSource::new(123);
    for grid in grids(quick) {
        let n = grid.n();
        for theta in [PI / 3.0, PI / 2.0] {
            for _ in 0..samples {
                let b = random_sphere_params(n, theta, &mut src);
                let ub = u_from_params(&grid, theta, &b)?;
                let r = rhs(&grid, &ub, &SpeedSpec::power(1), &WeightSpec::volume(n))?;
                worst = worst.max(r.iter().fold(0.0f64, |m, v| m.max(v.abs())));
            }
        }
    }
    Ok((worst <= 1e-7, format!("max |G(u_b)| {worst:.2e}")))
}

fn check_flow(quick: bool) -> Result<(bool, String)> {
    let cases: &[(usize, usize)] = if quick { &[(1, 32)] } else { &[(1, 128), (2, 24)] };
    let mut ok = true;
    let mut detail = Vec::new();
    for &(n, res) in cases {
        let theta = PI / 3.0;
        let cfg = FlowConfig::new(
            n,
            theta,
            res,
            SpeedSpec::power(1),
            WeightSpec::volume(n),
            InitialCondition::axial_degree_two(0.03),
            10.0,
        );
        let out = run_flow(&cfg)?;
        let drift = out.trace.vhat_drift();
        let rate = measure_decay(&out.trace)?.rate;
        let expect = (n as f64 + 2.0) / theta.sin().powi(2);
        let fit = out.final_fit.as_ref().map_or(f64::INFINITY, |f| f.residual);
        ok &= out.status == FlowStatus::Converged && drift <= 1e-5 && (rate - expect).abs() <= 0.1 * expect && fit <= 1e-6;
        detail.push(format!("n={n}: drift {drift:.1e}, rate {rate:.4}/{expect:.4}, fit {fit:.1e}"));
    }
    Ok((ok, detail.join("; ")))
}

fn check_analytic_spectrum(quick: bool) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    let mut ok = true;
    for grid in grids(quick) {
        let n = grid.n();
        for theta in [PI / 3.0, PI / 2.0] {
            let speed = SpeedSpec::power(1);
            let s = spectrum(&dg0_analytic(&grid, theta, &speed)?);
            let gap = predicted_gap(n, theta, &speed)?;
            ok &= s.null_multiplicity == n + 2;
            worst = worst.max((s.gap - gap).abs() / gap.abs());
        }
    }
    Ok((ok && worst <= 1e-6, format!("multiplicities ok: {ok}, gap error {worst:.2e}")))
}

fn check_numeric_spectrum(quick: bool) -> Result<(bool, String)> {
    let sizes: &[(usize, usize)] = if quick { &[(1, 32)] } else { &[(1, 64), (2, 12)] };
    let mut worst = 0.0f64;
    let mut ok = true;
    for &(n, res) in sizes {
        let grid = SphereGrid::build(n, res)?;
        let theta = PI / 3.0;
        let speed = SpeedSpec::power(1);
        let s = spectrum(&dg0_numeric(&grid, theta, &speed, &WeightSpec::volume(n), 1e-5)?);
        let gap = predicted_gap(n, theta, &speed)?;
        ok &= s.null_multiplicity == n + 2;
        worst = worst.max((s.gap - gap).abs() / gap.abs());
    }
    Ok((ok && worst <= 1e-3, format!("multiplicities ok: {ok}, gap error {worst:.2e}")))
}

fn check_linearization(quick: bool) -> Result<(bool, String)> {
    let samples = if quick { 3 } else { 10 };
    let mut worst = 0.0f64;
    for grid in grids(quick) {
        for theta in [PI / 3.0, PI / 2.0] {
            worst = worst.max(linearization_selftest(&grid, theta, &SpeedSpec::power(1), samples, 6, 2024)?.max_error());
        }
    }
    Ok((worst <= 1e-5, format!("max relative error {worst:.2e}")))
}

/// `true` when every check passed.
pub fn all_passed(results: &[CheckOutcome]) -> bool {
    results.iter().all(|r| r.passed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_suite_passes() {
        let results = run_suite(true);
        let table = format_table(&results);
        assert!(all_passed(&results), "{table}");
        assert_eq!(table.lines().count(), CHECKS.len() + 1);
    }
}
