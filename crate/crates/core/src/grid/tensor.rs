//! Coordinate-frame tensor fields on the grid and their Levi-Civita calculus.
//!
//! Coordinate components of tensors are not smooth functions on `S^2` near
//! the poles, so they are never differentiated spectrally. A tensor is lifted
//! to its Cartesian components in `R^{n+1}` through the round frame
//! (`e_i` for upper slots, `e^i` for lower slots), those smooth scalars are
//! differentiated, and the product rule with the analytically known frame
//! derivatives recovers `∂_k T`.

use super::{small, Frame, ScalarField, SphereGrid};
use crate::error::{Error, Result};

/// Below this coordinate determinant a metric counts as singular.
pub const SINGULAR_METRIC_DET: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    Up,
    Down,
}

/// One component field per coordinate.
#[derive(Clone, Debug)]
pub struct VectorField {
    pub slot: Slot,
    pub comps: Vec<ScalarField>,
}

pub type CovectorField = VectorField;

/// Two-slot tensor, component `(i, j)` stored at `comps[i * n + j]`.
#[derive(Clone, Debug)]
pub struct MatrixField {
    pub n: usize,
    pub slots: [Slot; 2],
    pub comps: Vec<ScalarField>,
}

pub type Tensor02Field = MatrixField;
pub type Tensor11Field = MatrixField;

impl VectorField {
    pub fn new(slot: Slot, comps: Vec<ScalarField>) -> Self {
        Self { slot, comps }
    }

    pub fn covector(comps: Vec<ScalarField>) -> Self {
        Self::new(Slot::Down, comps)
    }

    pub fn at(&self, node: usize, i: usize) -> f64 {
        self.comps[i][node]
    }
}

impl MatrixField {
    pub fn new(n: usize, slots: [Slot; 2], comps: Vec<ScalarField>) -> Self {
        assert_eq!(comps.len(), n * n);
        Self { n, slots, comps }
    }

    pub fn zeros(n: usize, slots: [Slot; 2], nodes: usize) -> Self {
        Self::new(n, slots, vec![vec![0.0; nodes]; n * n])
    }

    /// Builds a field from a per-node closure filling the row-major `n x n` block.
    pub fn from_fn<F: FnMut(usize, &mut [f64])>(n: usize, slots: [Slot; 2], nodes: usize, mut f: F) -> Self {
        let mut out = Self::zeros(n, slots, nodes);
        let mut block = vec![0.0; n * n];
        for node in 0..nodes {
            block.iter_mut().for_each(|v| *v = 0.0);
            f(node, &mut block);
            for (c, v) in out.comps.iter_mut().zip(&block) {
                c[node] = *v;
            }
        }
        out
    }

    #[inline]
    pub fn at(&self, node: usize, i: usize, j: usize) -> f64 {
        self.comps[i * self.n + j][node]
    }

    /// Row-major `n x n` block at a node.
    pub fn block(&self, node: usize) -> [f64; 4] {
        let mut b = [0.0; 4];
        for (k, c) in self.comps.iter().enumerate() {
            b[k] = c[node];
        }
        b
    }

    pub fn nodes(&self) -> usize {
        self.comps[0].len()
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

#[inline]
fn lift_vec(frame: &Frame, node: usize, slot: Slot, i: usize) -> &[f64] {
    match slot {
        Slot::Up => frame.e(node, i),
        Slot::Down => frame.dual(node, i),
    }
}

#[inline]
fn recover_vec(frame: &Frame, node: usize, slot: Slot, i: usize) -> &[f64] {
    match slot {
        Slot::Up => frame.dual(node, i),
        Slot::Down => frame.e(node, i),
    }
}

#[inline]
fn d_recover_vec(frame: &Frame, node: usize, slot: Slot, k: usize, i: usize) -> &[f64] {
    match slot {
        Slot::Up => frame.d_dual(node, k, i),
        Slot::Down => frame.de(node, k, i),
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `∂_k V^i` (or `∂_k V_i`), one vector field per `k`.
pub fn vector_partials(grid: &SphereGrid, v: &VectorField) -> Vec<VectorField> {
    let (n, frame, nodes) = (grid.n(), &grid.frame, grid.len());
    let dim = n + 1;
    let mut amb = vec![vec![0.0; nodes]; dim];
    for node in 0..nodes {
        for i in 0..n {
            let l = lift_vec(frame, node, v.slot, i);
            for a in 0..dim {
                amb[a][node] += v.comps[i][node] * l[a];
            }
        }
    }
    let d_amb: Vec<Vec<ScalarField>> = amb.iter().map(|f| grid.gradient(f)).collect();
    (0..n)
        .map(|k| {
            let mut comps = vec![vec![0.0; nodes]; n];
            for node in 0..nodes {
                let a: Vec<f64> = (0..dim).map(|c| amb[c][node]).collect();
                let da: Vec<f64> = (0..dim).map(|c| d_amb[c][k][node]).collect();
                for (i, comp) in comps.iter_mut().enumerate() {
                    comp[node] = dot(d_recover_vec(frame, node, v.slot, k, i), &a)
                        + dot(recover_vec(frame, node, v.slot, i), &da);
                }
            }
            VectorField::new(v.slot, comps)
        })
        .collect()
}

/// `∂_k T_{ij}` with the slot placement of `t`, one field per `k`.
pub fn tensor_partials(grid: &SphereGrid, t: &MatrixField) -> Vec<MatrixField> {
    let (n, frame, nodes) = (grid.n(), &grid.frame, grid.len());
    let dim = n + 1;
    let [s0, s1] = t.slots;
    let mut amb = vec![vec![0.0; nodes]; dim * dim];
    for node in 0..nodes {
        for i in 0..n {
            let l0 = lift_vec(frame, node, s0, i);
            for j in 0..n {
                let l1 = lift_vec(frame, node, s1, j);
                let c = t.comps[i * n + j][node];
                for a in 0..dim {
                    for b in 0..dim {
                        amb[a * dim + b][node] += c * l0[a] * l1[b];
                    }
                }
            }
        }
    }
    let d_amb: Vec<Vec<ScalarField>> = amb.iter().map(|f| grid.gradient(f)).collect();
    let bilinear = |m: &[f64], x: &[f64], y: &[f64]| -> f64 {
        let mut acc = 0.0;
        for a in 0..dim {
            for b in 0..dim {
                acc += x[a] * m[a * dim + b] * y[b];
            }
        }
        acc
    };
    (0..n)
        .map(|k| {
            let mut out = MatrixField::zeros(n, t.slots, nodes);
            let mut a = vec![0.0; dim * dim];
            let mut da = vec![0.0; dim * dim];
            for node in 0..nodes {
                for c in 0..dim * dim {
                    a[c] = amb[c][node];
                    da[c] = d_amb[c][k][node];
                }
                for i in 0..n {
                    let r0 = recover_vec(frame, node, s0, i);
                    let dr0 = d_recover_vec(frame, node, s0, k, i);
                    for j in 0..n {
                        let r1 = recover_vec(frame, node, s1, j);
                        let dr1 = d_recover_vec(frame, node, s1, k, j);
                        out.comps[i * n + j][node] =
                            bilinear(&a, dr0, r1) + bilinear(&da, r0, r1) + bilinear(&a, r0, dr1);
                    }
                }
            }
            out
        })
        .collect()
}

/// Inverse metric and Christoffel symbols `Γ^k_{ij}` of a metric at every node.
#[derive(Clone, Debug)]
pub struct Connection {
    n: usize,
    ginv: Vec<[f64; 4]>,
    gamma: Vec<[f64; 8]>,
}

impl Connection {
    /// Partials of `g` are taken through the frame lift.
    pub fn from_metric(grid: &SphereGrid, g: &Tensor02Field) -> Result<Self> {
        check_metric(g)?;
        let dg = tensor_partials(grid, g);
        Self::from_metric_partials(g, &dg)
    }

    /// `dg[k]` holds `∂_k g_{ij}`.
    pub fn from_metric_partials(g: &Tensor02Field, dg: &[Tensor02Field]) -> Result<Self> {
        check_metric(g)?;
        let n = g.n;
        let nodes = g.nodes();
        let mut ginv = Vec::with_capacity(nodes);
        let mut gamma = Vec::with_capacity(nodes);
        for node in 0..nodes {
            let (inv, _) = small::inverse(n, &g.block(node));
            let d = |k: usize, i: usize, j: usize| dg[k].at(node, i, j);
            let mut gm = [0.0; 8];
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        let mut acc = 0.0;
                        for l in 0..n {
                            acc += inv[k * n + l] * (d(i, j, l) + d(j, i, l) - d(l, i, j));
                        }
                        gm[(k * n + i) * n + j] = 0.5 * acc;
                    }
                }
            }
            ginv.push(inv);
            gamma.push(gm);
        }
        Ok(Self { n, ginv, gamma })
    }

    /// `Γ^k_{ij}`
    #[inline]
    pub fn gamma(&self, node: usize, k: usize, i: usize, j: usize) -> f64 {
        self.gamma[node][(k * self.n + i) * self.n + j]
    }

    /// `Γ^k_{kl}`
    #[inline]
    pub fn trace_gamma(&self, node: usize, l: usize) -> f64 {
        (0..self.n).map(|k| self.gamma(node, k, k, l)).sum()
    }

    #[inline]
    pub fn ginv(&self, node: usize, i: usize, j: usize) -> f64 {
        self.ginv[node][i * self.n + j]
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

fn check_metric(g: &Tensor02Field) -> Result<()> {
    for node in 0..g.nodes() {
        let (_, det) = small::inverse(g.n, &g.block(node));
        if !(det >= SINGULAR_METRIC_DET) {
            return Err(Error::SingularMetric { node, det });
        }
    }
    Ok(())
}

/// `∇_i ∇_j f = ∂_i ∂_j f − Γ^k_{ij} ∂_k f`.
pub fn covariant_hessian(grid: &SphereGrid, f: &[f64], conn: &Connection) -> Tensor02Field {
    let n = grid.n();
    let p = grid.partials(f);
    MatrixField::from_fn(n, [Slot::Down, Slot::Down], grid.len(), |node, b| {
        for i in 0..n {
            for j in 0..n {
                let mut v = p.second[i * n + j][node];
                for k in 0..n {
                    v -= conn.gamma(node, k, i, j) * p.first[k][node];
                }
                b[i * n + j] = v;
            }
        }
    })
}

/// `∇_k T`, one field per `k`, same slots as `t`.
pub fn covariant_derivative(grid: &SphereGrid, t: &MatrixField, conn: &Connection) -> Vec<MatrixField> {
    let n = t.n;
    let mut d = tensor_partials(grid, t);
    for (k, dk) in d.iter_mut().enumerate() {
        for node in 0..t.nodes() {
            let b = t.block(node);
            for i in 0..n {
                for j in 0..n {
                    let mut corr = 0.0;
                    for l in 0..n {
                        corr += match t.slots[0] {
                            Slot::Up => conn.gamma(node, i, k, l) * b[l * n + j],
                            Slot::Down => -conn.gamma(node, l, k, i) * b[l * n + j],
                        };
                        corr += match t.slots[1] {
                            Slot::Up => conn.gamma(node, j, k, l) * b[i * n + l],
                            Slot::Down => -conn.gamma(node, l, k, j) * b[i * n + l],
                        };
                    }
                    dk.comps[i * n + j][node] += corr;
                }
            }
        }
    }
    d
}

/// `∇_j V^j` of a vector field.
pub fn covariant_divergence(grid: &SphereGrid, v: &VectorField, conn: &Connection) -> ScalarField {
    assert_eq!(v.slot, Slot::Up);
    let n = grid.n();
    let dv = vector_partials(grid, v);
    (0..grid.len())
        .map(|node| {
            (0..n)
                .map(|j| dv[j].comps[j][node] + conn.trace_gamma(node, j) * v.comps[j][node])
                .sum()
        })
        .collect()
}

/// `g^{ik} ∇_j ∇_k T_i^j` for a `(Down, Up)` tensor `T`.
pub fn covariant_second_derivative(grid: &SphereGrid, t: &Tensor11Field, conn: &Connection) -> ScalarField {
    assert_eq!(t.slots, [Slot::Down, Slot::Up]);
    let n = t.n;
    let nodes = t.nodes();
    // S^{kj} = g^{ki} T_i^j
    let s = MatrixField::from_fn(n, [Slot::Up, Slot::Up], nodes, |node, b| {
        for k in 0..n {
            for j in 0..n {
                b[k * n + j] = (0..n).map(|i| conn.ginv(node, k, i) * t.at(node, i, j)).sum();
            }
        }
    });
    let ds = tensor_partials(grid, &s);
    // V^j = ∇_k S^{kj}
    let mut v = vec![vec![0.0; nodes]; n];
    for node in 0..nodes {
        for (j, vj) in v.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in 0..n {
                acc += ds[k].at(node, k, j);
                for l in 0..n {
                    acc += conn.gamma(node, k, k, l) * s.at(node, l, j) + conn.gamma(node, j, k, l) * s.at(node, k, l);
                }
            }
            vj[node] = acc;
        }
    }
    covariant_divergence(grid, &VectorField::new(Slot::Up, v), conn)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn round_metric(grid: &SphereGrid, scale: f64) -> Tensor02Field {
        let n = grid.n();
        MatrixField::from_fn(n, [Slot::Down, Slot::Down], grid.len(), |node, b| {
            for (k, v) in grid.frame.sigma(node).iter().enumerate() {
                b[k] = scale * v;
            }
        })
    }

    #[test]
    fn hessian_of_constant_vanishes() {
        for (n, res) in [(1, 32), (2, 16)] {
            let g = SphereGrid::build(n, res).unwrap();
            let conn = Connection::from_metric(&g, &round_metric(&g, 0.7)).unwrap();
            let h = covariant_hessian(&g, &vec![3.0; g.len()], &conn);
            assert!(h.max_abs() <= 1e-10);
        }
    }

    #[test]
    fn identity_tensor_is_parallel() {
        for (n, res) in [(1, 32), (2, 16)] {
            let g = SphereGrid::build(n, res).unwrap();
            let s2 = (std::f64::consts::PI / 3.0).sin().powi(2);
            let conn = Connection::from_metric(&g, &round_metric(&g, s2)).unwrap();
            let id = MatrixField::from_fn(n, [Slot::Down, Slot::Up], g.len(), |_, b| {
                for i in 0..n {
                    b[i * n + i] = 1.0;
                }
            });
            for d in covariant_derivative(&g, &id, &conn) {
                assert!(d.max_abs() <= 1e-9);
            }
            let dd = covariant_second_derivative(&g, &id, &conn);
            assert!(dd.iter().all(|v| v.abs() <= 1e-9));
        }
    }

    #[test]
    fn metric_compatibility_for_graph_like_metric() {
        let g = SphereGrid::build(2, 20).unwrap();
        let u = g.field_from_fn(|p| 0.05 * (p[1].cos() * p[1].sin() * p[0].cos() + p[1].cos().powi(2)));
        let du = g.gradient(&u);
        let metric = MatrixField::from_fn(2, [Slot::Down, Slot::Down], g.len(), |node, b| {
            let s = (1.1 + u[node]).sin().powi(2);
            let sig = g.frame.sigma(node);
            for i in 0..2 {
                for j in 0..2 {
                    b[i * 2 + j] = s * sig[i * 2 + j] + du[i][node] * du[j][node];
                }
            }
        });
        let conn = Connection::from_metric(&g, &metric).unwrap();
        for d in covariant_derivative(&g, &metric, &conn) {
            assert!(d.max_abs() <= 1e-9, "{}", d.max_abs());
        }
    }

    #[test]
    fn christoffel_symbols_of_round_sphere() {
        // Γ^φ_{φθ} = cot θ, Γ^θ_{φφ} = -sin θ cos θ
        let g = SphereGrid::build(2, 16).unwrap();
        let conn = Connection::from_metric(&g, &round_metric(&g, 1.0)).unwrap();
        for node in 0..g.len() {
            let t = g.coords(node)[1];
            assert!((conn.gamma(node, 0, 0, 1) - 1.0 / t.tan()).abs() < 1e-9);
            assert!((conn.gamma(node, 1, 0, 0) + t.sin() * t.cos()).abs() < 1e-9);
            assert!(conn.gamma(node, 1, 1, 1).abs() < 1e-9);
        }
    }

    #[test]
    fn hessian_trace_is_laplacian() {
        let g = SphereGrid::build(2, 20).unwrap();
        let conn = Connection::from_metric(&g, &round_metric(&g, 1.0)).unwrap();
        let f = g.project(&g.field_from_fn(|p| (p[0].sin() * p[1].sin() + 0.3 * p[1].cos()).exp()), 12);
        let h = covariant_hessian(&g, &f, &conn);
        let lap = g.laplacian(&f);
        for node in 0..g.len() {
            let tr: f64 = (0..2).flat_map(|i| (0..2).map(move |j| (i, j))).map(|(i, j)| conn.ginv(node, i, j) * h.at(node, i, j)).sum();
            assert!((tr - lap[node]).abs() < 1e-8);
        }
    }

    #[test]
    fn divergence_of_gradient_is_laplacian() {
        let g = SphereGrid::build(2, 20).unwrap();
        let conn = Connection::from_metric(&g, &round_metric(&g, 1.0)).unwrap();
        let f = g.project(&g.field_from_fn(|p| (p[0].cos() * p[1].sin()).sin()), 10);
        let df = g.gradient(&f);
        let up: Vec<ScalarField> = (0..2)
            .map(|i| (0..g.len()).map(|node| (0..2).map(|j| conn.ginv(node, i, j) * df[j][node]).sum()).collect())
            .collect();
        let div = covariant_divergence(&g, &VectorField::new(Slot::Up, up), &conn);
        let lap = g.laplacian(&f);
        for node in 0..g.len() {
            assert!((div[node] - lap[node]).abs() < 1e-8, "{} vs {}", div[node], lap[node]);
        }
    }

    #[test]
    fn singular_metric_is_rejected() {
        let g = SphereGrid::build(1, 16).unwrap();
        let m = round_metric(&g, 1e-13);
        assert!(matches!(Connection::from_metric(&g, &m), Err(Error::SingularMetric { .. })));
    }
}
