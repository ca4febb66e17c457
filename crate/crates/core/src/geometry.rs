//! Normal geodesic graphs over the latitude sphere `S_θ ⊂ S^{n+1} ⊂ R^{n+2}`.
//!
//! With `s = θ + u(p)` and `y(p) ∈ S^n` the graph is
//! `X_u(p) = (sin s · y(p), cos s)`. The geodesic direction is
//! `γ̇ = (cos s · y, −sin s)`, and every extrinsic quantity is taken from the
//! flat derivatives of `X_u` in `R^{n+2}`. For a hypersurface of the unit
//! sphere the Gauss-formula correction to `D_i D_j X` is parallel to `X`, so
//! `h_ij = −⟨ν, D_i D_j X⟩`.

use crate::error::{Error, Result};
use crate::grid::tensor::{Connection, MatrixField, Slot, Tensor02Field, Tensor11Field};
use crate::grid::{small, ScalarField, SphereGrid};

/// Slope and height bounds are enforced with this safety factor in the flow.
pub const SAFETY_MARGIN: f64 = 0.98;

#[derive(Clone, Debug, PartialEq)]
pub struct GraphFunction {
    pub theta: f64,
    pub u: ScalarField,
}

impl GraphFunction {
    pub fn new(theta: f64, u: ScalarField) -> Self {
        Self { theta, u }
    }

    pub fn zero(grid: &SphereGrid, theta: f64) -> Self {
        Self::new(theta, vec![0.0; grid.len()])
    }

    /// Injectivity bound `min(θ, π − θ)` on `|u|`.
    pub fn height_bound(&self) -> f64 {
        self.theta.min(std::f64::consts::PI - self.theta)
    }
}

/// Validity margins of a graph function.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphDiagnostics {
    pub max_abs_u: f64,
    /// `max |∇u|_{g(u)}`
    pub max_slope: f64,
    /// `min(θ, π−θ) − max|u|`
    pub height_margin: f64,
    /// `1 − max|∇u|_{g(u)}`
    pub slope_margin: f64,
    pub finite: bool,
}

impl GraphDiagnostics {
    /// Strict graph invariants.
    pub fn is_valid(&self) -> bool {
        self.finite && self.height_margin > 0.0 && self.slope_margin > 0.0
    }

    /// Invariants with both bounds shrunk by `factor`.
    pub fn within(&self, factor: f64) -> bool {
        let bound = self.max_abs_u + self.height_margin;
        self.finite && self.max_abs_u < factor * bound && self.max_slope < factor
    }

    pub fn describe(&self) -> String {
        format!(
            "max|u| = {:.6e} (margin {:.6e}), max|∇u|_g = {:.6e} (margin {:.6e})",
            self.max_abs_u, self.height_margin, self.max_slope, self.slope_margin
        )
    }
}

/// `|∇u|²_{g(u)}` at every node, using `q = r/(1+r)` with `r = |∇u|²_σ / sin² s`.
fn slope_squared(grid: &SphereGrid, gf: &GraphFunction, du: &[ScalarField]) -> ScalarField {
    let n = grid.n();
    (0..grid.len())
        .map(|node| {
            let (sig_inv, _) = small::inverse(n, grid.frame.sigma(node));
            let mut r = 0.0;
            for i in 0..n {
                for j in 0..n {
                    r += sig_inv[i * n + j] * du[i][node] * du[j][node];
                }
            }
            r /= (gf.theta + gf.u[node]).sin().powi(2);
            r / (1.0 + r)
        })
        .collect()
}

/// Height and slope margins. Never fails.
pub fn validate(grid: &SphereGrid, gf: &GraphFunction) -> GraphDiagnostics {
    let finite = gf.u.iter().all(|v| v.is_finite());
    let max_abs_u = gf.u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let max_slope = if finite {
        let du = grid.gradient(&gf.u);
        slope_squared(grid, gf, &du).iter().fold(0.0f64, |m, v| m.max(v.sqrt()))
    } else {
        f64::NAN
    };
    GraphDiagnostics {
        max_abs_u,
        max_slope,
        height_margin: gf.height_bound() - max_abs_u,
        slope_margin: 1.0 - max_slope,
        finite: finite && max_slope.is_finite(),
    }
}

fn check(grid: &SphereGrid, gf: &GraphFunction) -> Result<()> {
    if gf.u.len() != grid.len() {
        return Err(Error::Domain(format!("field has {} values, grid has {} nodes", gf.u.len(), grid.len())));
    }
    if !(gf.theta > 0.0 && gf.theta < std::f64::consts::PI) {
        return Err(Error::Domain(format!("theta = {} outside (0, π)", gf.theta)));
    }
    let d = validate(grid, gf);
    if !d.is_valid() {
        return Err(Error::Domain(format!("invalid graph function: {}", d.describe())));
    }
    Ok(())
}

/// Points `X_u(p)` in `R^{n+2}`, flat with stride `n + 2`.
pub fn embed(grid: &SphereGrid, gf: &GraphFunction) -> Result<Vec<f64>> {
    check(grid, gf)?;
    Ok(embed_unchecked(grid, gf))
}

pub(crate) fn embed_unchecked(grid: &SphereGrid, gf: &GraphFunction) -> Vec<f64> {
    let dim = grid.n() + 2;
    let mut out = vec![0.0; grid.len() * dim];
    for node in 0..grid.len() {
        let (ss, cs) = (gf.theta + gf.u[node]).sin_cos();
        let y = grid.frame.y(node);
        let x = &mut out[node * dim..(node + 1) * dim];
        for a in 0..dim - 1 {
            x[a] = ss * y[a];
        }
        x[dim - 1] = cs;
    }
    out
}

/// Induced geometry of `X_u` at every node.
#[derive(Clone, Debug)]
pub struct GeometryFields {
    pub n: usize,
    pub theta: f64,
    /// `g_ij`
    pub g: Tensor02Field,
    /// `∂_k g_ij`
    pub dg: Vec<Tensor02Field>,
    /// `g^ij`
    pub ginv: MatrixField,
    /// `h_ij`
    pub h: Tensor02Field,
    /// `W[i][j] = h^i_j`
    pub w: Tensor11Field,
    /// Principal curvatures, ascending, stride `n`.
    pub kappa: Vec<f64>,
    /// Area element relative to the unit `S^n` measure.
    pub mu: ScalarField,
    /// Unit normal in `R^{n+2}`, stride `n + 2`.
    pub nu: Vec<f64>,
    /// `X_u`, stride `n + 2`.
    pub points: Vec<f64>,
    /// Tangents `∂_i X_u`, stride `n + 2`, index `node * n + i`.
    pub tangents: Vec<f64>,
    /// `|∇u|²_{g(u)}`
    pub grad_sq: ScalarField,
    /// `L(u) = (1 − |∇u|²_{g(u)})^{−1/2}`
    pub l: ScalarField,
}

impl GeometryFields {
    pub fn nodes(&self) -> usize {
        self.mu.len()
    }

    #[inline]
    pub fn kappa(&self, node: usize) -> &[f64] {
        &self.kappa[node * self.n..(node + 1) * self.n]
    }

    #[inline]
    pub fn nu(&self, node: usize) -> &[f64] {
        &self.nu[node * (self.n + 2)..(node + 1) * (self.n + 2)]
    }

    #[inline]
    pub fn point(&self, node: usize) -> &[f64] {
        &self.points[node * (self.n + 2)..(node + 1) * (self.n + 2)]
    }

    #[inline]
    pub fn tangent(&self, node: usize, i: usize) -> &[f64] {
        let d = self.n + 2;
        &self.tangents[(node * self.n + i) * d..(node * self.n + i + 1) * d]
    }

    /// Weingarten map at a node as a dense matrix.
    pub fn weingarten(&self, node: usize) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.n, self.n, |i, j| self.w.at(node, i, j))
    }

    /// Levi-Civita connection of the induced metric.
    pub fn connection(&self) -> Result<Connection> {
        Connection::from_metric_partials(&self.g, &self.dg)
    }

    /// Total area `∫ dμ`.
    pub fn area(&self, grid: &SphereGrid) -> f64 {
        grid.integrate_plain(&self.mu)
    }
}

/// Metric, normal, second fundamental form, curvatures and tilt of `X_u`.
pub fn geometry_fields(grid: &SphereGrid, gf: &GraphFunction) -> Result<GeometryFields> {
    check(grid, gf)?;
    let n = grid.n();
    let dim = n + 2;
    let nodes = grid.len();
    let frame = &grid.frame;
    let p = grid.partials(&gf.u);
    let du = &p.first;
    let ddu = &p.second;

    let mut g = MatrixField::zeros(n, [Slot::Down, Slot::Down], nodes);
    let mut dg: Vec<MatrixField> = (0..n).map(|_| MatrixField::zeros(n, [Slot::Down, Slot::Down], nodes)).collect();
    let mut ginv = MatrixField::zeros(n, [Slot::Up, Slot::Up], nodes);
    let mut h = MatrixField::zeros(n, [Slot::Down, Slot::Down], nodes);
    let mut w = MatrixField::zeros(n, [Slot::Up, Slot::Down], nodes);
    let mut kappa = vec![0.0; nodes * n];
    let mut mu = vec![0.0; nodes];
    let mut nu = vec![0.0; nodes * dim];
    let mut tangents = vec![0.0; nodes * n * dim];
    let mut grad_sq = vec![0.0; nodes];
    let mut l = vec![0.0; nodes];
    let points = embed_unchecked(grid, gf);

    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

    for node in 0..nodes {
        let (ss, cs) = (gf.theta + gf.u[node]).sin_cos();
        let y = frame.y(node);
        let sigma = frame.sigma(node);
        let ui: Vec<f64> = (0..n).map(|i| du[i][node]).collect();
        let uij = |i: usize, j: usize| ddu[i * n + j][node];

        let mut gb = [0.0; 4];
        for i in 0..n {
            for j in 0..n {
                gb[i * n + j] = ss * ss * sigma[i * n + j] + ui[i] * ui[j];
            }
        }
        let (gi, det) = small::inverse(n, &gb);
        if !(det >= crate::grid::tensor::SINGULAR_METRIC_DET) {
            return Err(Error::SingularMetric { node, det });
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let dsig = dot(frame.de(node, k, i), frame.e(node, j)) + dot(frame.e(node, i), frame.de(node, k, j));
                    dg[k].comps[i * n + j][node] = 2.0 * ss * cs * ui[k] * sigma[i * n + j]
                        + ss * ss * dsig
                        + uij(i, k) * ui[j]
                        + ui[i] * uij(j, k);
                }
            }
        }

        let mut q = 0.0;
        let mut up = [0.0; 2];
        for i in 0..n {
            for j in 0..n {
                up[i] += gi[i * n + j] * ui[j];
            }
            q += up[i] * ui[i];
        }
        let root = (1.0 - q).sqrt();

        // ν = √(1−q) γ̇ − (g^{ij}u_i / √(1−q)) ∂γ/∂p_j
        let nv = &mut nu[node * dim..(node + 1) * dim];
        for a in 0..dim - 1 {
            let mut tang = 0.0;
            for j in 0..n {
                tang += up[j] * ss * frame.e(node, j)[a];
            }
            nv[a] = root * cs * y[a] - tang / root;
        }
        nv[dim - 1] = -root * ss;

        for i in 0..n {
            let t = &mut tangents[(node * n + i) * dim..(node * n + i + 1) * dim];
            let e = frame.e(node, i);
            for a in 0..dim - 1 {
                t[a] = ss * e[a] + ui[i] * cs * y[a];
            }
            t[dim - 1] = -ui[i] * ss;
        }

        let nv = &nu[node * dim..(node + 1) * dim];
        let mut hb = [0.0; 4];
        let mut xij = vec![0.0; dim];
        for i in 0..n {
            for j in i..n {
                let (ei, ej, de) = (frame.e(node, i), frame.e(node, j), frame.de(node, i, j));
                for a in 0..dim - 1 {
                    xij[a] = cs * ui[j] * ei[a] + ss * de[a] + uij(i, j) * cs * y[a] - ui[i] * ui[j] * ss * y[a]
                        + ui[i] * cs * ej[a];
                }
                xij[dim - 1] = -uij(i, j) * ss - ui[i] * ui[j] * cs;
                let v = -dot(nv, &xij);
                hb[i * n + j] = v;
                hb[j * n + i] = v;
            }
        }
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += gi[i * n + k] * hb[k * n + j];
                }
                w.comps[i * n + j][node] = acc;
                g.comps[i * n + j][node] = gb[i * n + j];
                ginv.comps[i * n + j][node] = gi[i * n + j];
                h.comps[i * n + j][node] = hb[i * n + j];
            }
        }
        let ev = small::generalized_symmetric_eigenvalues(n, &hb, &gb);
        kappa[node * n..(node + 1) * n].copy_from_slice(&ev[..n]);
        mu[node] = det.sqrt() / frame.sqrt_det_sigma[node];
        grad_sq[node] = q;
        l[node] = 1.0 / root;
    }

    Ok(GeometryFields { n, theta: gf.theta, g, dg, ginv, h, w, kappa, mu, nu, points, tangents, grad_sq, l })
}
