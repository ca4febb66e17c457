//! The constrained flow `∂u/∂t = L(u) Ĝ(X_u)` and its time integration.

mod decay;
mod initial;
mod trace;

pub use decay::{measure_decay, DecayFit, DECAY_BAND, MIN_DECAY_ROWS};
pub use initial::{HarmonicTerm, InitialCondition, RandomHarmonics, UniformSource};
pub use trace::{FlowTrace, TraceRow};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{geometry_fields, validate, GeometryFields, GraphFunction, SAFETY_MARGIN};
use crate::grid::{ScalarField, Snapshot, SphereGrid};
use crate::spherespace::{fit_sphere, SphereFit};
use crate::stability::NullProjection;
use crate::symfunc::{speed_and_gradient, umbilic_speed_derivative, SpeedSpec};
use crate::volumes::{mixed_volumes, vhat};
use crate::weights::{xi_combination, xi_hat_field, WeightSpec};

/// `|∫ Ξ̂ dμ|` at or below this times the area is degenerate.
pub const WEIGHT_INTEGRAL_TOL: f64 = 1e-10;
/// Filtered `‖rhs‖_∞` at which a run counts as converged.
pub const CONVERGENCE_TOL: f64 = 1e-10;
/// Stability interval of the order-3 stage on the negative real axis.
const RK23_STABILITY: f64 = 2.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub n: usize,
    pub theta: f64,
    pub resolution: usize,
    pub speed: SpeedSpec,
    pub weights: WeightSpec,
    pub initial: InitialCondition,
    pub t_end: f64,
    #[serde(default = "defaults::dt_init")]
    pub dt_init: f64,
    #[serde(default = "defaults::safety")]
    pub safety: f64,
    /// Store a snapshot every this many accepted steps (0: none).
    #[serde(default)]
    pub snapshot_stride: usize,
    /// Fit a sphere every this many accepted steps (0: final state only).
    #[serde(default = "defaults::fit_stride")]
    pub fit_stride: usize,
    #[serde(default = "defaults::rtol")]
    pub rtol: f64,
    #[serde(default = "defaults::atol")]
    pub atol: f64,
    /// Shift `u` by a constant after each step to restore `V̂(0)`.
    #[serde(default)]
    pub renormalize: bool,
}

mod defaults {
    pub fn dt_init() -> f64 {
        1e-4
    }
    pub fn safety() -> f64 {
        0.9
    }
    pub fn fit_stride() -> usize {
        10
    }
    pub fn rtol() -> f64 {
        1e-8
    }
    pub fn atol() -> f64 {
        1e-11
    }
}

impl FlowConfig {
    pub fn new(
        n: usize,
        theta: f64,
        resolution: usize,
        speed: SpeedSpec,
        weights: WeightSpec,
        initial: InitialCondition,
        t_end: f64,
    ) -> Self {
        Self {
            n,
            theta,
            resolution,
            speed,
            weights,
            initial,
            t_end,
            dt_init: defaults::dt_init(),
            safety: defaults::safety(),
            snapshot_stride: 0,
            fit_stride: defaults::fit_stride(),
            rtol: defaults::rtol(),
            atol: defaults::atol(),
            renormalize: false,
        }
    }

    /// Checks everything that does not need the initial field.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.theta > 0.0 && self.theta < std::f64::consts::PI) {
            return bad(format!("theta = {} outside (0, π)", self.theta));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end = {} must be positive", self.t_end));
        }
        if !(self.dt_init > 0.0 && self.dt_init.is_finite()) {
            return bad(format!("dt_init = {} must be positive", self.dt_init));
        }
        if !(self.safety > 0.0 && self.safety <= 1.0) {
            return bad(format!("safety = {} outside (0, 1]", self.safety));
        }
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return bad("tolerances must be positive".into());
        }
        self.speed.validate(self.n)?;
        self.weights.validate(self.n, self.theta)?;
        let df = umbilic_speed_derivative(&self.speed, self.n, 1.0 / self.theta.tan())?;
        if !(df > 0.0) {
            return bad(format!("speed {} has ∂F/∂κ_1 = {df:e} ≤ 0 on the base sphere", self.speed));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowStatus {
    Converged,
    ReachedTEnd,
}

#[derive(Clone, Debug)]
pub struct FlowOutcome {
    pub status: FlowStatus,
    pub trace: FlowTrace,
    pub final_u: ScalarField,
    pub final_fit: Option<SphereFit>,
    pub snapshots: Vec<Snapshot>,
}

/// Highest degree kept in the right-hand side: two thirds of the band.
pub fn filter_degree(grid: &SphereGrid) -> usize {
    2 * grid.max_degree() / 3
}

fn speed_field(fields: &GeometryFields, speed: &SpeedSpec) -> Result<(ScalarField, f64)> {
    let mut max_df = 0.0f64;
    let f = (0..fields.nodes())
        .map(|node| {
            let (f, df) = speed_and_gradient(speed, fields.kappa(node))?;
            max_df = df.iter().fold(max_df, |m, v| m.max(v.abs()));
            Ok(f)
        })
        .collect::<Result<_>>()?;
    Ok((f, max_df))
}

fn ghat_from(grid: &SphereGrid, fields: &GeometryFields, f: &[f64], xi: &[f64]) -> Result<ScalarField> {
    let denom = grid.integrate(xi, &fields.mu);
    let area = fields.area(grid);
    if denom.abs() <= WEIGHT_INTEGRAL_TOL * area {
        return Err(Error::DegenerateWeight(format!("∫ Ξ̂ dμ = {denom:e} with area {area:e}")));
    }
    let weighted: Vec<f64> = f.iter().zip(xi).map(|(f, x)| f * x).collect();
    let mean = grid.integrate(&weighted, &fields.mu) / denom;
    Ok(f.iter().map(|f| mean - f).collect())
}

/// `Ĝ = ∫ F Ξ̂ dμ / ∫ Ξ̂ dμ − F`.
pub fn speed_ghat(grid: &SphereGrid, fields: &GeometryFields, speed: &SpeedSpec, spec: &WeightSpec) -> Result<ScalarField> {
    let (f, _) = speed_field(fields, speed)?;
    let xi = xi_hat_field(grid, fields, spec)?;
    ghat_from(grid, fields, &f, &xi)
}

/// `G(u) = L(u) Ĝ(X_u)`.
pub fn rhs(grid: &SphereGrid, gf: &GraphFunction, speed: &SpeedSpec, spec: &WeightSpec) -> Result<ScalarField> {
    let fields = geometry_fields(grid, gf)?;
    let g = speed_ghat(grid, &fields, speed, spec)?;
    Ok(g.iter().zip(&fields.l).map(|(g, l)| g * l).collect())
}

/// One right-hand side evaluation with what the stepper and trace reuse.
struct Evaluation {
    rhs: ScalarField,
    fields: GeometryFields,
    max_g: f64,
    max_df: f64,
}

struct Integrator<'a> {
    grid: &'a SphereGrid,
    config: &'a FlowConfig,
    filter: usize,
    xi_checked: bool,
}

impl Integrator<'_> {
    fn evaluate(&mut self, u: &[f64]) -> Result<Evaluation> {
        let gf = GraphFunction::new(self.config.theta, u.to_vec());
        let fields = geometry_fields(self.grid, &gf)?;
        let (f, max_df) = speed_field(&fields, &self.config.speed)?;
        let xi = if self.xi_checked {
            xi_combination(self.grid, &fields, &self.config.weights)?
        } else {
            self.xi_checked = true;
            xi_hat_field(self.grid, &fields, &self.config.weights)?
        };
        let g = ghat_from(self.grid, &fields, &f, &xi)?;
        let max_g = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let raw: Vec<f64> = g.iter().zip(&fields.l).map(|(g, l)| g * l).collect();
        Ok(Evaluation { rhs: self.grid.project(&raw, self.filter), fields, max_g, max_df })
    }

    /// Explicit stability limit from the largest eigenvalue of the frozen
    /// linear operator on the retained band.
    fn stiff_limit(&self, eval: &Evaluation, u: &[f64]) -> f64 {
        let n = self.config.n as f64;
        let k = self.filter as f64;
        let max_l = eval.fields.l.iter().fold(1.0f64, |m, v| m.max(*v));
        let min_sin2 = u.iter().fold(f64::INFINITY, |m, v| m.min((self.config.theta + v).sin().powi(2)));
        let lambda = eval.max_df.max(f64::MIN_POSITIVE) * (k * (k + n - 1.0) + n) * max_l / min_sin2;
        self.config.safety * RK23_STABILITY / lambda
    }

    fn row(&self, t: f64, dt: f64, u: &[f64], eval: &Evaluation, fit: Option<SphereFit>) -> TraceRow {
        let gf = GraphFunction::new(self.config.theta, u.to_vec());
        let volumes = mixed_volumes(self.grid, &gf, &eval.fields);
        let vhat = vhat(&volumes, &self.config.weights);
        let p = NullProjection::new(self.grid);
        TraceRow {
            t,
            dt,
            max_u: u.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            max_g: eval.max_g,
            volumes,
            vhat,
            res_nonsphere: p.complement_norm(u),
            fit,
        }
    }

    fn fit(&self, u: &[f64]) -> Option<SphereFit> {
        fit_sphere(self.grid, &GraphFunction::new(self.config.theta, u.to_vec())).ok()
    }

    /// Newton iteration on a constant offset so that `V̂(u + c) = target`.
    fn renormalize(&mut self, u: &mut [f64], target: f64) -> Result<()> {
        let ones = vec![1.0; u.len()];
        for _ in 0..8 {
            let gf = GraphFunction::new(self.config.theta, u.to_vec());
            let fields = geometry_fields(self.grid, &gf)?;
            let current = vhat(&mixed_volumes(self.grid, &gf, &fields), &self.config.weights);
            let gap = target - current;
            if gap.abs() <= 1e-15 * target.abs().max(1.0) {
                break;
            }
            let xi = xi_combination(self.grid, &fields, &self.config.weights)?;
            let w: Vec<f64> = xi.iter().zip(&fields.l).zip(&ones).map(|((x, l), o)| x * o / l).collect();
            let slope = self.grid.integrate(&w, &fields.mu);
            u.iter_mut().for_each(|v| *v += gap / slope);
        }
        Ok(())
    }
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn axpy(y: &[f64], terms: &[(f64, &[f64])]) -> Vec<f64> {
    (0..y.len()).map(|i| y[i] + terms.iter().map(|(c, k)| c * k[i]).sum::<f64>()).collect()
}

/// Integrates the flow with the Bogacki-Shampine 3(2) pair until
/// convergence or `t_end`. Steps are limited both by the local error and by
/// the explicit stability bound of the parabolic system. The right-hand side
/// is truncated to degrees `≤` [`filter_degree`].
pub fn run_flow(config: &FlowConfig) -> Result<FlowOutcome> {
    config.validate()?;
    let grid = SphereGrid::build(config.n, config.resolution)?;
    let filter = filter_degree(&grid);
    let u0 = config.initial.build(&grid, config.theta)?;
    let mut u = grid.project(&u0, filter);
    let diag = validate(&grid, &GraphFunction::new(config.theta, u.clone()));
    if !diag.within(SAFETY_MARGIN) {
        return Err(Error::Config(format!("initial graph outside the admissible set: {}", diag.describe())));
    }

    let mut it = Integrator { grid: &grid, config, filter, xi_checked: false };
    let mut k1 = it.evaluate(&u)?;
    let mut trace = FlowTrace::new(config.n);
    let mut snapshots = Vec::new();
    let snapshot = |u: &[f64], t: f64| {
        let mut s = Snapshot::new(&grid, u);
        s.theta = Some(config.theta);
        s.t = Some(t);
        s
    };
    let fit0 = if config.fit_stride > 0 { it.fit(&u) } else { None };
    trace.rows.push(it.row(0.0, 0.0, &u, &k1, fit0));
    if config.snapshot_stride > 0 {
        snapshots.push(snapshot(&u, 0.0));
    }
    let target = trace.rows[0].vhat;

    let mut t = 0.0;
    let mut dt = config.dt_init.min(it.stiff_limit(&k1, &u));
    let mut steps = 0usize;
    let status = loop {
        if max_norm(&k1.rhs) <= CONVERGENCE_TOL {
            break FlowStatus::Converged;
        }
        if t >= config.t_end {
            break FlowStatus::ReachedTEnd;
        }
        dt = dt.min(config.t_end - t).min(it.stiff_limit(&k1, &u));
        if dt <= 1e-14 * t.max(1.0) {
            return Err(Error::DegenerateGraph {
                t,
                reason: format!("step size collapsed to {dt:e}"),
                trace: Box::new(trace),
            });
        }
        let attempt = (|| -> Result<(Vec<f64>, Evaluation, f64)> {
            let k2 = it.evaluate(&axpy(&u, &[(0.5 * dt, &k1.rhs)]))?;
            let k3 = it.evaluate(&axpy(&u, &[(0.75 * dt, &k2.rhs)]))?;
            let next = axpy(&u, &[(2.0 / 9.0 * dt, &k1.rhs), (1.0 / 3.0 * dt, &k2.rhs), (4.0 / 9.0 * dt, &k3.rhs)]);
            let k4 = it.evaluate(&next)?;
            let mut err = 0.0f64;
            for i in 0..u.len() {
                let e = dt
                    * (-5.0 / 72.0 * k1.rhs[i] + 1.0 / 12.0 * k2.rhs[i] + 1.0 / 9.0 * k3.rhs[i]
                        - 0.125 * k4.rhs[i]);
                let scale = config.atol + config.rtol * u[i].abs().max(next[i].abs());
                err = err.max(e.abs() / scale);
            }
            Ok((next, k4, err))
        })();
        let (next, k4, err) = match attempt {
            Ok(v) => v,
            Err(Error::Domain(_) | Error::SingularMetric { .. }) => {
                dt *= 0.25;
                continue;
            }
            Err(e) => return Err(e),
        };
        if err > 1.0 {
            dt *= (0.9 * err.powf(-1.0 / 3.0)).max(0.2);
            continue;
        }
        let diag = validate(&grid, &GraphFunction::new(config.theta, next.clone()));
        if !diag.within(SAFETY_MARGIN) {
            return Err(Error::DegenerateGraph { t: t + dt, reason: diag.describe(), trace: Box::new(trace) });
        }
        t += dt;
        steps += 1;
        u = next;
        k1 = k4;
        if config.renormalize {
            it.renormalize(&mut u, target)?;
            k1 = it.evaluate(&u)?;
        }
        let fit = (config.fit_stride > 0 && steps % config.fit_stride == 0).then(|| it.fit(&u)).flatten();
        trace.rows.push(it.row(t, dt, &u, &k1, fit));
        if config.snapshot_stride > 0 && steps % config.snapshot_stride == 0 {
            snapshots.push(snapshot(&u, t));
        }
        let growth = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-1.0 / 3.0)).clamp(0.2, 5.0) };
        dt *= growth;
    };

    let final_fit = it.fit(&u);
    if let (Some(fit), Some(row)) = (&final_fit, trace.rows.last_mut()) {
        row.fit = Some(fit.clone());
    }
    Ok(FlowOutcome { status, trace, final_u: u, final_fit, snapshots })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spherespace::{u_from_params, SphereParams};
    use std::f64::consts::PI;

    fn curve_config(u_amp: f64, t_end: f64) -> FlowConfig {
        let initial = InitialCondition::Harmonics {
            terms: vec![HarmonicTerm { l: 2, m: 0, coefficient: 1.0 }],
            random: None,
            max_abs: Some(u_amp),
        };
        FlowConfig::new(1, PI / 2.0, 32, SpeedSpec::power(1), WeightSpec::volume(1), initial, t_end)
    }

    #[test]
    fn ghat_vanishes_on_spheres() {
        for (n, res, theta) in [(1, 32, 1.0), (2, 12, PI / 3.0)] {
            let grid = SphereGrid::build(n, res).unwrap();
            let spec = WeightSpec::volume(n);
            let zero = GraphFunction::zero(&grid, theta);
            let g = rhs(&grid, &zero, &SpeedSpec::power(1), &spec).unwrap();
            assert!(max_norm(&g) <= 1e-10);
            let mut b = vec![0.0; n + 2];
            b[0] = 0.04;
            b[n + 1] = -0.03;
            let gf = u_from_params(&grid, theta, &SphereParams::new(b)).unwrap();
            let g = rhs(&grid, &gf, &SpeedSpec::power(1), &spec).unwrap();
            assert!(max_norm(&g) <= 1e-7, "n = {n}: {}", max_norm(&g));
        }
    }

    #[test]
    fn ghat_has_zero_weighted_mean() {
        let grid = SphereGrid::build(2, 12).unwrap();
        let u = grid.field_from_fn(|p| 0.02 * (p[1].cos().powi(2) + p[0].sin() * p[1].sin()));
        let gf = GraphFunction::new(1.2, u);
        let fields = geometry_fields(&grid, &gf).unwrap();
        let spec = WeightSpec::new(vec![0.3, 1.0, 0.0, 0.5]);
        let g = speed_ghat(&grid, &fields, &SpeedSpec::power(1), &spec).unwrap();
        let xi = xi_hat_field(&grid, &fields, &spec).unwrap();
        let prod: Vec<f64> = g.iter().zip(&xi).map(|(g, x)| g * x).collect();
        assert!(grid.integrate(&prod, &fields.mu).abs() <= 1e-12);
    }

    #[test]
    fn rhs_is_l_times_ghat() {
        let grid = SphereGrid::build(1, 32).unwrap();
        let gf = GraphFunction::new(1.0, grid.field_from_fn(|p| 0.05 * (2.0 * p[0]).cos() + 0.02 * p[0].sin()));
        let spec = WeightSpec::volume(1);
        let fields = geometry_fields(&grid, &gf).unwrap();
        let g = speed_ghat(&grid, &fields, &SpeedSpec::power(1), &spec).unwrap();
        let r = rhs(&grid, &gf, &SpeedSpec::power(1), &spec).unwrap();
        for node in 0..grid.len() {
            assert_eq!(r[node], fields.l[node] * g[node]);
        }
    }

    #[test]
    fn curve_ghat_matches_refined_grid() {
        // The speed sign: Ĝ pushes the curve toward the mean curvature, and
        // doubling the resolution changes nothing.
        let spec = WeightSpec::basis(1, 2);
        let eval = |res: usize| {
            let grid = SphereGrid::build(1, res).unwrap();
            let gf = GraphFunction::new(PI / 2.0, grid.field_from_fn(|p| 0.05 * (2.0 * p[0]).cos()));
            let fields = geometry_fields(&grid, &gf).unwrap();
            let g = speed_ghat(&grid, &fields, &SpeedSpec::power(1), &spec).unwrap();
            (grid.coords(0)[0], g[0], g[res / 4], g)
        };
        let (_, g0, gq, coarse) = eval(64);
        let (_, g0f, gqf, _) = eval(128);
        assert!((g0 - g0f).abs() <= 1e-5 * g0f.abs());
        assert!((gq - gqf).abs() <= 1e-5 * gqf.abs());
        // u = 0.05 cos 2p peaks at p = 0, where the graph bends least: Ĝ < 0 there.
        assert!(g0 < 0.0 && gq > 0.0);
        assert!(coarse.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn config_rejects_bad_values() {
        let mut c = curve_config(0.03, 1.0);
        assert!(c.validate().is_ok());
        c.t_end = 0.0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = curve_config(0.03, 1.0);
        c.safety = 1.5;
        assert!(c.validate().is_err());
        let mut c = curve_config(0.03, 1.0);
        c.weights = WeightSpec::basis(1, 1);
        assert!(matches!(c.validate(), Err(Error::DegenerateWeight(_))));
        let json = r#"{"n":1,"theta":1.0,"resolution":32,"speed":{"kind":"power","k":1},
            "weights":[0,0,1],"initial":{"kind":"sphere","b":[0,0,0]},"t_end":1,"bogus":3}"#;
        assert!(serde_json::from_str::<FlowConfig>(json).is_err());
    }

    #[test]
    fn zero_initial_data_is_fixed() {
        let mut c = curve_config(0.03, 1.0);
        c.initial = InitialCondition::Field { values: vec![0.0; 32] };
        let out = run_flow(&c).unwrap();
        assert_eq!(out.status, FlowStatus::Converged);
        assert!(out.final_u.iter().all(|v| *v == 0.0));
        assert_eq!(out.trace.vhat_drift(), 0.0);
    }

    #[test]
    fn sphere_initial_data_is_stationary() {
        let mut c = curve_config(0.03, 0.5);
        c.theta = 1.0;
        c.initial = InitialCondition::Sphere { b: vec![0.03, -0.02, 0.04] };
        let grid = SphereGrid::build(1, 32).unwrap();
        let ub = u_from_params(&grid, 1.0, &SphereParams::new(vec![0.03, -0.02, 0.04])).unwrap();
        let out = run_flow(&c).unwrap();
        let dev = out.final_u.iter().zip(&ub.u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(dev <= 1e-6, "{dev}");
        assert!(matches!(measure_decay(&out.trace), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn curve_flow_converges_at_the_predicted_rate() {
        let out = run_flow(&curve_config(0.05, 12.0)).unwrap();
        assert_eq!(out.status, FlowStatus::Converged);
        assert!(out.trace.vhat_drift() <= 1e-6, "{}", out.trace.vhat_drift());
        let decay = measure_decay(&out.trace).unwrap();
        assert!((decay.rate - 3.0).abs() <= 0.3, "{decay:?}");
        assert!(out.final_fit.unwrap().residual <= 1e-6);
        let t: Vec<f64> = out.trace.rows.iter().map(|r| r.t).collect();
        assert!(t.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn renormalized_run_keeps_vhat() {
        let mut c = curve_config(0.05, 0.5);
        c.renormalize = true;
        c.rtol = 1e-5;
        let out = run_flow(&c).unwrap();
        assert!(out.trace.vhat_drift() <= 1e-12);
    }

    #[test]
    fn snapshots_follow_stride() {
        let mut c = curve_config(0.05, 0.2);
        c.snapshot_stride = 5;
        let out = run_flow(&c).unwrap();
        let steps = out.trace.len() - 1;
        assert_eq!(out.snapshots.len(), 1 + steps / 5);
        assert!(out.snapshots.iter().all(|s| s.theta == Some(PI / 2.0) && s.values.len() == 32));
    }
}
