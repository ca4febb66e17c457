//! Mixed volumes `V̂_0, ..., V̂_{n+1}` of the region bounded by a graph,
//! their combinations `V̂ = Σ c_a V̂_a` and first variations.
//!
//! `V̂_a = ∫ E_{n−a} dμ / ((n+1) C(n, n−a))` for `a ≤ n`; `V̂_{n+1}` is the
//! volume of the side containing the pole `q_{n+1} = 0`.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{geometry_fields, GeometryFields, GraphFunction};
use crate::grid::SphereGrid;
use crate::symfunc::{binomial, elementary_symmetric};
use crate::weights::{xi_combination, WeightSpec};

/// Central-difference step for volume variations.
pub const VARIATION_STEP: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeReport {
    /// `V̂_0, ..., V̂_{n+1}`
    pub v_a: Vec<f64>,
    pub area: f64,
}

impl VolumeReport {
    pub fn vhat(&self, spec: &WeightSpec) -> f64 {
        vhat(self, spec)
    }

    pub fn enclosed_volume(&self) -> f64 {
        *self.v_a.last().unwrap()
    }
}

/// `∫_0^s sin^n`, for `n = 1, 2`.
pub fn sin_power_antiderivative(n: usize, s: f64) -> f64 {
    match n {
        1 => 1.0 - s.cos(),
        2 => 0.5 * s - 0.25 * (2.0 * s).sin(),
        _ => panic!("n = {n} not supported"),
    }
}

pub fn mixed_volumes(grid: &SphereGrid, gf: &GraphFunction, fields: &GeometryFields) -> VolumeReport {
    let n = fields.n;
    let nodes = fields.nodes();
    let mut v_a = vec![0.0; n + 2];
    let esym: Vec<Vec<f64>> = (0..nodes).map(|node| elementary_symmetric(fields.kappa(node))).collect();
    for (a, v) in v_a.iter_mut().enumerate().take(n + 1) {
        let k = n - a;
        let e: Vec<f64> = esym.iter().map(|e| e[k]).collect();
        *v = grid.integrate(&e, &fields.mu) / ((n as f64 + 1.0) * binomial(n, k));
    }
    let phi: Vec<f64> = gf.u.iter().map(|u| sin_power_antiderivative(n, gf.theta + u)).collect();
    v_a[n + 1] = grid.integrate_plain(&phi);
    VolumeReport { v_a, area: fields.area(grid) }
}

/// Geometry and volumes in one call.
pub fn volumes_of(grid: &SphereGrid, gf: &GraphFunction) -> Result<VolumeReport> {
    let f = geometry_fields(grid, gf)?;
    Ok(mixed_volumes(grid, gf, &f))
}

/// `Σ c_a V̂_a`
pub fn vhat(report: &VolumeReport, spec: &WeightSpec) -> f64 {
    report.v_a.iter().zip(&spec.c).map(|(v, c)| v * c).sum()
}

/// `(fd, analytic)` derivatives of `V̂` along `u + ε w`: the central
/// difference with step [`VARIATION_STEP`], and `∫ Ξ̂ L^{−1} w dμ`.
pub fn vhat_directional_derivative(
    grid: &SphereGrid,
    gf: &GraphFunction,
    w: &[f64],
    spec: &WeightSpec,
) -> Result<(f64, f64)> {
    let eps = VARIATION_STEP;
    let shifted = |sign: f64| GraphFunction::new(gf.theta, gf.u.iter().zip(w).map(|(u, w)| u + sign * eps * w).collect());
    let plus = vhat(&volumes_of(grid, &shifted(1.0))?, spec);
    let minus = vhat(&volumes_of(grid, &shifted(-1.0))?, spec);
    let fd = (plus - minus) / (2.0 * eps);
    let fields = geometry_fields(grid, gf)?;
    let xi = xi_combination(grid, &fields, spec)?;
    let integrand: Vec<f64> = (0..grid.len()).map(|node| xi[node] * w[node] / fields.l[node]).collect();
    Ok((fd, grid.integrate(&integrand, &fields.mu)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn circle_volumes() {
        let grid = SphereGrid::build(1, 32).unwrap();
        for theta in [0.4, PI / 3.0, 2.0] {
            let r = volumes_of(&grid, &GraphFunction::zero(&grid, theta)).unwrap();
            assert!((r.v_a[2] - 2.0 * PI * (1.0 - theta.cos())).abs() < 1e-12);
            assert!((r.v_a[1] - PI * theta.sin()).abs() < 1e-12);
            assert!((r.v_a[0] - PI * theta.cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn two_sphere_volumes() {
        let grid = SphereGrid::build(2, 12).unwrap();
        let theta = 1.1f64;
        let r = volumes_of(&grid, &GraphFunction::zero(&grid, theta)).unwrap();
        assert!((r.v_a[2] - 4.0 * PI * theta.sin().powi(2) / 3.0).abs() < 1e-12);
        assert!((r.area - 4.0 * PI * theta.sin().powi(2)).abs() < 1e-12);
        // ball of geodesic radius θ in S^3: π(2θ − sin 2θ)
        assert!((r.v_a[3] - PI * (2.0 * theta - (2.0 * theta).sin())).abs() < 1e-12);
    }

    #[test]
    fn vn_is_area_share_for_any_u() {
        let grid = SphereGrid::build(2, 12).unwrap();
        let u = grid.field_from_fn(|p| 0.04 * (p[0].sin() * p[1].sin() + p[1].cos().powi(2)));
        let r = volumes_of(&grid, &GraphFunction::new(0.9, u)).unwrap();
        assert!((r.v_a[2] - r.area / 3.0).abs() < 1e-12);
    }

    #[test]
    fn vhat_is_linear() {
        let r = VolumeReport { v_a: vec![1.0, 2.0, 3.0], area: 4.0 };
        assert_eq!(vhat(&r, &WeightSpec::volume(1)), 3.0);
        assert_eq!(vhat(&r, &WeightSpec::new(vec![0.5, -1.0, 2.0])), 0.5 - 2.0 + 6.0);
    }

    #[test]
    fn volume_variation_at_sphere() {
        for (n, res) in [(1, 32), (2, 12)] {
            let grid = SphereGrid::build(n, res).unwrap();
            let theta = 1.0f64;
            let gf = GraphFunction::zero(&grid, theta);
            let ones = vec![1.0; grid.len()];
            let (fd, an) = vhat_directional_derivative(&grid, &gf, &ones, &WeightSpec::volume(n)).unwrap();
            let area = grid.sphere_measure() * theta.sin().powi(n as i32);
            assert!((an - area).abs() < 1e-12);
            assert!((fd - area).abs() < 1e-6 * area);
            for y in grid.harmonics_first_order() {
                let (fd, an) = vhat_directional_derivative(&grid, &gf, &y, &WeightSpec::basis(n, 0)).unwrap();
                assert!(an.abs() < 1e-12);
                assert!(fd.abs() < 1e-7);
            }
        }
    }

    #[test]
    fn enclosed_volume_increases_with_offset() {
        let grid = SphereGrid::build(1, 16).unwrap();
        let mut last = -1.0;
        for c in [-0.5, -0.2, 0.0, 0.3, 0.6] {
            let r = volumes_of(&grid, &GraphFunction::new(1.2, vec![c; grid.len()])).unwrap();
            assert!(r.enclosed_volume() > last);
            last = r.enclosed_volume();
        }
    }
}
