//! Weight fields `Ξ_a` whose pairing with the normal speed is the first
//! variation of the mixed volume `V̂_a`, their combinations `Ξ̂ = Σ c_a Ξ_a`,
//! and the closed forms on the base sphere.
//!
//! For `a ≤ n`, with `D = ∂E_{n−a}/∂h` and curvature contraction
//! `ḡ(R̄(ν,T_k)ν,T_j) = g_kj` of the unit round ambient,
//!
//! `Ξ_a = −(D_i^i + g^{ik}∇_j∇_k D_i^j) / ((n+1) C(n, n−a)) + E_{n+1−a} / C(n+1, n+1−a)`
//!
//! and `Ξ_{n+1} = 1`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::GeometryFields;
use crate::grid::tensor::{covariant_second_derivative, MatrixField, Slot};
use crate::grid::{ScalarField, SphereGrid};
use crate::symfunc::{binomial, elementary_symmetric_matrix, esym_derivative_tensor};

/// `|Ξ̂(X_0)|` at or below this is treated as degenerate.
pub const DEGENERATE_WEIGHT_TOL: f64 = 1e-8;

/// Coefficients `c_0, ..., c_{n+1}` of `Ξ̂ = Σ c_a Ξ_a` and `V̂ = Σ c_a V̂_a`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightSpec {
    pub c: Vec<f64>,
}

impl WeightSpec {
    pub fn new(c: Vec<f64>) -> Self {
        Self { c }
    }

    /// `e_a` in `R^{n+2}`.
    pub fn basis(n: usize, a: usize) -> Self {
        let mut c = vec![0.0; n + 2];
        c[a] = 1.0;
        Self { c }
    }

    /// Pure enclosed volume, `e_{n+1}`.
    pub fn volume(n: usize) -> Self {
        Self::basis(n, n + 1)
    }

    /// `Σ c_a Ξ_a(X_0)` on the base sphere of latitude `theta`.
    pub fn sphere_value(&self, n: usize, theta: f64) -> f64 {
        self.c.iter().enumerate().map(|(a, c)| c * xi_sphere_closed_form(n, theta, a)).sum()
    }

    pub fn validate(&self, n: usize, theta: f64) -> Result<()> {
        if self.c.len() != n + 2 {
            return Err(Error::Config(format!("weight spec needs {} coefficients, got {}", n + 2, self.c.len())));
        }
        if self.c.iter().any(|c| !c.is_finite()) || self.c.iter().all(|&c| c == 0.0) {
            return Err(Error::Config("weight coefficients must be finite and not all zero".into()));
        }
        let v = self.sphere_value(n, theta);
        if v.abs() <= DEGENERATE_WEIGHT_TOL {
            return Err(Error::DegenerateWeight(format!("Ξ̂(X_0) = {v:e} at θ = {theta}")));
        }
        Ok(())
    }
}

/// `Ξ_a(X_0) = cot^{n−a−1}θ (a cot²θ − n + a) / (n+1)` for `a ≤ n`, and 1 for `a = n+1`.
pub fn xi_sphere_closed_form(n: usize, theta: f64, a: usize) -> f64 {
    assert!(a <= n + 1);
    if a == n + 1 {
        return 1.0;
    }
    let cot = theta.cos() / theta.sin();
    let k = (n - a) as i32;
    let mut v = a as f64 * cot.powi(k + 1);
    if k > 0 {
        v -= k as f64 * cot.powi(k - 1);
    }
    v / (n as f64 + 1.0)
}

/// `Ξ_a(X_u)` at every node.
pub fn xi_a_field(grid: &SphereGrid, fields: &GeometryFields, a: usize) -> Result<ScalarField> {
    let n = fields.n;
    if a > n + 1 {
        return Err(Error::Config(format!("weight index {a} outside 0..={}", n + 1)));
    }
    if a == n + 1 {
        return Ok(vec![1.0; fields.nodes()]);
    }
    let conn = fields.connection()?;
    xi_a_with(grid, fields, &conn, a)
}

fn xi_a_with(
    grid: &SphereGrid,
    fields: &GeometryFields,
    conn: &crate::grid::Connection,
    a: usize,
) -> Result<ScalarField> {
    let n = fields.n;
    let k = n - a;
    let nodes = fields.nodes();
    let mut top = vec![0.0; nodes];
    let d = MatrixField::from_fn(n, [Slot::Down, Slot::Up], nodes, |node, b| {
        let w = fields.weingarten(node);
        let dm = esym_derivative_tensor(&w, k);
        for i in 0..n {
            for j in 0..n {
                b[i * n + j] = dm[(i, j)];
            }
        }
        top[node] = elementary_symmetric_matrix(&w).get(k + 1).copied().unwrap_or(0.0);
    });
    let dd = covariant_second_derivative(grid, &d, conn);
    let c1 = (n as f64 + 1.0) * binomial(n, k);
    let c2 = binomial(n + 1, k + 1);
    Ok((0..nodes)
        .map(|node| {
            let tr: f64 = (0..n).map(|i| d.at(node, i, i)).sum();
            -(tr + dd[node]) / c1 + top[node] / c2
        })
        .collect())
}

/// `Ξ̂ = Σ c_a Ξ_a(X_u)`.
pub fn xi_hat_field(grid: &SphereGrid, fields: &GeometryFields, spec: &WeightSpec) -> Result<ScalarField> {
    spec.validate(fields.n, fields.theta)?;
    xi_combination(grid, fields, spec)
}

/// `Σ c_a Ξ_a(X_u)` without the nondegeneracy check on `Ξ̂(X_0)`.
pub fn xi_combination(grid: &SphereGrid, fields: &GeometryFields, spec: &WeightSpec) -> Result<ScalarField> {
    let n = fields.n;
    if spec.c.len() != n + 2 {
        return Err(Error::Config(format!("weight spec needs {} coefficients, got {}", n + 2, spec.c.len())));
    }
    let mut out = vec![0.0; fields.nodes()];
    let mut conn = None;
    for (a, &c) in spec.c.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let xi = if a == n + 1 {
            vec![1.0; fields.nodes()]
        } else {
            if conn.is_none() {
                conn = Some(fields.connection()?);
            }
            xi_a_with(grid, fields, conn.as_ref().unwrap(), a)?
        };
        for (o, x) in out.iter_mut().zip(&xi) {
            *o += c * x;
        }
    }
    Ok(out)
}

/// `Γ(k/2)` for a positive integer `k`.
pub(crate) fn gamma_half(k: usize) -> f64 {
    assert!(k > 0);
    let (mut x, mut g) = if k % 2 == 0 { (1.0, 1.0) } else { (0.5, PI.sqrt()) };
    while 2.0 * x < k as f64 {
        g *= x;
        x += 1.0;
    }
    g
}

/// Coefficients turning the mixed volumes into `Û_a = Σ_b coef_{a+2b} V̂_{a+2b}`,
/// as a [`WeightSpec`]. The same coefficients give `Ẑ_a = Σ coef Ξ`.
pub fn uhat_weight_spec(n: usize, a: usize) -> WeightSpec {
    assert!(a <= n + 1);
    let front = gamma_half(2 * n + 4) / (2f64.powi(n as i32 + 2) * PI.powf(n as f64 / 2.0));
    let mut c = vec![0.0; n + 2];
    let mut idx = a;
    while idx <= n + 1 {
        // Γ(idx/2 + 1) Γ((n − idx)/2 + 1)
        c[idx] = front / (gamma_half(idx + 2) * gamma_half(n + 2 - idx));
        idx += 2;
    }
    WeightSpec::new(c)
}

/// `Ẑ_a(X_0) = a Γ(n+1) cot(θ)^{n+1−a} / (2^{n+2} π^{n/2} Γ(a/2+1) Γ((n−a)/2+1))`.
pub fn zhat_sphere(n: usize, theta: f64, a: usize) -> f64 {
    assert!(a <= n + 1);
    if a == 0 {
        return 0.0;
    }
    let cot = theta.cos() / theta.sin();
    a as f64 * gamma_half(2 * n + 2) * cot.powi((n + 1 - a) as i32)
        / (2f64.powi(n as i32 + 2) * PI.powf(n as f64 / 2.0) * gamma_half(a + 2) * gamma_half(n + 2 - a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{geometry_fields, GraphFunction};

    const THETAS: [f64; 5] = [PI / 6.0, PI / 4.0, PI / 3.0, PI / 2.0, 2.0 * PI / 3.0];

    #[test]
    fn closed_form_examples() {
        for n in 1..=3 {
            assert_eq!(xi_sphere_closed_form(n, 0.7, n + 1), 1.0);
        }
        assert!((xi_sphere_closed_form(1, PI / 4.0, 1) - 0.5).abs() < 1e-15);
        let t1 = (0.5f64).sqrt().asin();
        assert!(xi_sphere_closed_form(2, t1, 1).abs() < 1e-15);
        assert!((xi_sphere_closed_form(1, 0.9, 0) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn closed_form_zero_set() {
        // zero at θ_a = arcsin √(a/n), π/2 and π − θ_a, except a = n−1 (no π/2 zero)
        let n = 3;
        for a in 1..n {
            let ta = (a as f64 / n as f64).sqrt().asin();
            assert!(xi_sphere_closed_form(n, ta, a).abs() < 1e-14);
            assert!(xi_sphere_closed_form(n, PI - ta, a).abs() < 1e-14);
            let mid = xi_sphere_closed_form(n, PI / 2.0, a).abs();
            if a == n - 1 {
                assert!(mid > 0.1);
            } else {
                assert!(mid < 1e-14);
            }
        }
    }

    #[test]
    fn gamma_half_values() {
        assert!((gamma_half(1) - PI.sqrt()).abs() < 1e-15);
        assert_eq!(gamma_half(2), 1.0);
        assert!((gamma_half(5) - 0.75 * PI.sqrt()).abs() < 1e-14);
        assert_eq!(gamma_half(10), 24.0);
    }

    #[test]
    fn weight_fields_at_sphere() {
        for (n, res) in [(1, 16), (2, 12)] {
            let grid = SphereGrid::build(n, res).unwrap();
            for theta in THETAS {
                let f = geometry_fields(&grid, &GraphFunction::zero(&grid, theta)).unwrap();
                for a in 0..=n + 1 {
                    let xi = xi_a_field(&grid, &f, a).unwrap();
                    let expect = xi_sphere_closed_form(n, theta, a);
                    for v in xi {
                        assert!((v - expect).abs() <= 1e-9 * (1.0 + expect.abs()), "n={n} θ={theta} a={a}: {v} vs {expect}");
                    }
                }
            }
        }
    }

    #[test]
    fn xi_hat_examples() {
        let grid = SphereGrid::build(2, 10).unwrap();
        let u = grid.field_from_fn(|p| 0.03 * p[1].cos().powi(2) * (1.0 + 0.2 * p[0].sin()));
        let f = geometry_fields(&grid, &GraphFunction::new(1.0, u)).unwrap();
        assert!(xi_hat_field(&grid, &f, &WeightSpec::volume(2)).unwrap().iter().all(|&v| v == 1.0));
        let f0 = geometry_fields(&grid, &GraphFunction::zero(&grid, 1.0)).unwrap();
        let x = xi_hat_field(&grid, &f0, &WeightSpec::basis(2, 2)).unwrap();
        for v in x {
            assert!((v - 2.0 / (3.0 * 1.0f64.tan())).abs() < 1e-12);
        }
        let t1 = (0.5f64).sqrt().asin();
        let f1 = geometry_fields(&grid, &GraphFunction::zero(&grid, t1)).unwrap();
        assert!(matches!(xi_hat_field(&grid, &f1, &WeightSpec::basis(2, 1)), Err(Error::DegenerateWeight(_))));
        assert!(matches!(WeightSpec::new(vec![1.0]).validate(2, 1.0), Err(Error::Config(_))));
    }

    #[test]
    fn zhat_examples_and_consistency() {
        for n in 1..=2 {
            for theta in THETAS {
                assert_eq!(zhat_sphere(n, theta, 0), 0.0);
                for a in 0..=n + 1 {
                    let spec = uhat_weight_spec(n, a);
                    let sum = spec.sphere_value(n, theta);
                    let z = zhat_sphere(n, theta, a);
                    assert!((sum - z).abs() < 1e-10, "n={n} a={a} θ={theta}: {sum} vs {z}");
                }
                for a in 0..=n {
                    if theta == PI / 2.0 {
                        assert!(zhat_sphere(n, theta, a).abs() < 1e-15);
                    }
                }
            }
        }
    }
}
