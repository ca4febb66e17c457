//! Discretization of the parameter sphere `S^n` for `n = 1, 2`.
//!
//! `n = 1`: `N` equispaced nodes `p_1 = 2πk/N`, Fourier differentiation.
//! `n = 2`: `L` Gauss-Legendre colatitudes `p_2` times `2L` equispaced
//! longitudes `p_1`, node index `j * 2L + k` (colatitude-major), spherical
//! harmonic differentiation up to degree `L - 1`.
//!
//! Quadrature weights integrate against the unit-sphere measure, so they sum
//! to `|S^n|`.

mod legendre;
mod spectral;
pub mod tensor;

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use spectral::{CircleTransform, SphereTransform};

pub use legendre::gauss_legendre;
pub use tensor::{Connection, CovectorField, MatrixField, Slot, Tensor02Field, Tensor11Field, VectorField};

/// Per-node values.
pub type ScalarField = Vec<f64>;

pub const MIN_RESOLUTION: usize = 8;

/// Neumaier-compensated sum in iteration order.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for x in values {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[derive(Clone)]
enum Spectral {
    Circle(CircleTransform),
    Sphere(SphereTransform),
}

/// Coordinate frame of the unit sphere `S^n ⊂ R^{n+1}` at every node:
/// the embedding `y(p)`, tangents `e_i = ∂_i y`, their derivatives, the dual
/// frame `e^i = σ^{ij} e_j` and its derivatives.
#[derive(Clone, Debug)]
pub(crate) struct Frame {
    pub n: usize,
    pub dim: usize,
    pub y: Vec<f64>,
    pub e: Vec<f64>,
    pub de: Vec<f64>,
    pub dual: Vec<f64>,
    pub d_dual: Vec<f64>,
    pub sigma: Vec<f64>,
    pub sqrt_det_sigma: Vec<f64>,
}

impl Frame {
    fn build(n: usize, coords: &[f64]) -> Self {
        let dim = n + 1;
        let nodes = coords.len() / n;
        let mut f = Frame {
            n,
            dim,
            y: vec![0.0; nodes * dim],
            e: vec![0.0; nodes * n * dim],
            de: vec![0.0; nodes * n * n * dim],
            dual: vec![0.0; nodes * n * dim],
            d_dual: vec![0.0; nodes * n * n * dim],
            sigma: vec![0.0; nodes * n * n],
            sqrt_det_sigma: vec![0.0; nodes],
        };
        for node in 0..nodes {
            let p = &coords[node * n..(node + 1) * n];
            let mut y = vec![0.0; dim];
            let mut e = vec![vec![0.0; dim]; n];
            let mut de = vec![vec![vec![0.0; dim]; n]; n];
            if n == 1 {
                let (s, c) = p[0].sin_cos();
                y.copy_from_slice(&[s, c]);
                e[0].copy_from_slice(&[c, -s]);
                de[0][0].copy_from_slice(&[-s, -c]);
            } else {
                let (sf, cf) = p[0].sin_cos();
                let (st, ct) = p[1].sin_cos();
                y.copy_from_slice(&[sf * st, cf * st, ct]);
                e[0].copy_from_slice(&[cf * st, -sf * st, 0.0]);
                e[1].copy_from_slice(&[sf * ct, cf * ct, -st]);
                de[0][0].copy_from_slice(&[-sf * st, -cf * st, 0.0]);
                de[0][1].copy_from_slice(&[cf * ct, -sf * ct, 0.0]);
                de[1][0] = de[0][1].clone();
                de[1][1].copy_from_slice(&[-sf * st, -cf * st, -ct]);
            }
            let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
            let mut sigma = [0.0; 4];
            for i in 0..n {
                for j in 0..n {
                    sigma[i * n + j] = dot(&e[i], &e[j]);
                }
            }
            let (sigma_inv, det) = small::inverse(n, &sigma);
            let mut dual = vec![vec![0.0; dim]; n];
            for i in 0..n {
                for j in 0..n {
                    for a in 0..dim {
                        dual[i][a] += sigma_inv[i * n + j] * e[j][a];
                    }
                }
            }
            for k in 0..n {
                // ∂_k σ_ab, then ∂_k σ^{ij} = -σ^{ia} ∂_kσ_ab σ^{bj}
                let mut dsig = [0.0; 4];
                for a in 0..n {
                    for b in 0..n {
                        dsig[a * n + b] = dot(&de[k][a], &e[b]) + dot(&e[a], &de[k][b]);
                    }
                }
                let mut dsig_inv = [0.0; 4];
                for i in 0..n {
                    for j in 0..n {
                        let mut acc = 0.0;
                        for a in 0..n {
                            for b in 0..n {
                                acc -= sigma_inv[i * n + a] * dsig[a * n + b] * sigma_inv[b * n + j];
                            }
                        }
                        dsig_inv[i * n + j] = acc;
                    }
                }
                for i in 0..n {
                    let base = ((node * n + k) * n + i) * dim;
                    for j in 0..n {
                        for a in 0..dim {
                            f.d_dual[base + a] +=
                                dsig_inv[i * n + j] * e[j][a] + sigma_inv[i * n + j] * de[k][j][a];
                        }
                    }
                }
            }
            f.y[node * dim..(node + 1) * dim].copy_from_slice(&y);
            for i in 0..n {
                f.e[(node * n + i) * dim..(node * n + i + 1) * dim].copy_from_slice(&e[i]);
                f.dual[(node * n + i) * dim..(node * n + i + 1) * dim].copy_from_slice(&dual[i]);
                for k in 0..n {
                    let base = ((node * n + k) * n + i) * dim;
                    f.de[base..base + dim].copy_from_slice(&de[k][i]);
                }
            }
            f.sigma[node * n * n..(node + 1) * n * n].copy_from_slice(&sigma[..n * n]);
            f.sqrt_det_sigma[node] = det.sqrt();
        }
        f
    }

    #[inline]
    pub fn y(&self, node: usize) -> &[f64] {
        &self.y[node * self.dim..(node + 1) * self.dim]
    }

    #[inline]
    pub fn e(&self, node: usize, i: usize) -> &[f64] {
        let s = (node * self.n + i) * self.dim;
        &self.e[s..s + self.dim]
    }

    /// `∂_k e_i`
    #[inline]
    pub fn de(&self, node: usize, k: usize, i: usize) -> &[f64] {
        let s = ((node * self.n + k) * self.n + i) * self.dim;
        &self.de[s..s + self.dim]
    }

    #[inline]
    pub fn dual(&self, node: usize, i: usize) -> &[f64] {
        let s = (node * self.n + i) * self.dim;
        &self.dual[s..s + self.dim]
    }

    /// `∂_k e^i`
    #[inline]
    pub fn d_dual(&self, node: usize, k: usize, i: usize) -> &[f64] {
        let s = ((node * self.n + k) * self.n + i) * self.dim;
        &self.d_dual[s..s + self.dim]
    }

    #[inline]
    pub fn sigma(&self, node: usize) -> &[f64] {
        &self.sigma[node * self.n * self.n..(node + 1) * self.n * self.n]
    }
}

/// Coordinate partial derivatives of a scalar field.
#[derive(Clone, Debug)]
pub struct Partials {
    /// `∂_i f`, one field per coordinate.
    pub first: Vec<ScalarField>,
    /// `∂_i ∂_j f` at index `i * n + j`.
    pub second: Vec<ScalarField>,
}

#[derive(Clone)]
pub struct SphereGrid {
    n: usize,
    resolution: usize,
    nlat: usize,
    nlon: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
    pub(crate) frame: Frame,
    spectral: Spectral,
}

impl std::fmt::Debug for SphereGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SphereGrid")
            .field("n", &self.n)
            .field("resolution", &self.resolution)
            .field("nodes", &self.len())
            .finish()
    }
}

impl SphereGrid {
    /// `n = 1`: `resolution` nodes. `n = 2`: `resolution` colatitudes times
    /// `2 * resolution` longitudes.
    pub fn build(n: usize, resolution: usize) -> Result<Self> {
        if !(1..=2).contains(&n) {
            return Err(Error::Config(format!("fields are implemented for n = 1, 2 only (got n = {n})")));
        }
        if resolution < MIN_RESOLUTION {
            return Err(Error::Config(format!(
                "resolution {resolution} below the minimum {MIN_RESOLUTION}"
            )));
        }
        if n == 1 {
            let count = resolution;
            let h = 2.0 * PI / count as f64;
            let coords: Vec<f64> = (0..count).map(|k| k as f64 * h).collect();
            let frame = Frame::build(1, &coords);
            Ok(Self {
                n,
                resolution,
                nlat: 1,
                nlon: count,
                weights: vec![h; count],
                coords,
                frame,
                spectral: Spectral::Circle(CircleTransform::new(count)),
            })
        } else {
            let nlat = resolution;
            let nlon = 2 * resolution;
            let (transform, colat) = SphereTransform::new(nlat);
            let hphi = 2.0 * PI / nlon as f64;
            let mut coords = Vec::with_capacity(2 * nlat * nlon);
            let mut weights = Vec::with_capacity(nlat * nlon);
            for (j, &t) in colat.iter().enumerate() {
                for k in 0..nlon {
                    coords.push(k as f64 * hphi);
                    coords.push(t);
                    weights.push(transform.lat_weights()[j] * hphi);
                }
            }
            let frame = Frame::build(2, &coords);
            Ok(Self {
                n,
                resolution,
                nlat,
                nlon,
                coords,
                weights,
                frame,
                spectral: Spectral::Sphere(transform),
            })
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `(colatitude rows, longitude columns)`; `n = 1` has a single row.
    pub fn shape(&self) -> (usize, usize) {
        (self.nlat, self.nlon)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Coordinates `(p_1, ..., p_n)` of a node.
    pub fn coords(&self, node: usize) -> &[f64] {
        &self.coords[node * self.n..(node + 1) * self.n]
    }

    /// Volume of the unit `S^n`.
    pub fn sphere_measure(&self) -> f64 {
        if self.n == 1 {
            2.0 * PI
        } else {
            4.0 * PI
        }
    }

    /// Largest degree resolved by the spectral transforms.
    pub fn max_degree(&self) -> usize {
        match &self.spectral {
            Spectral::Circle(t) => t.max_degree(),
            Spectral::Sphere(t) => t.max_degree(),
        }
    }

    pub fn num_modes(&self) -> usize {
        match &self.spectral {
            Spectral::Circle(t) => t.num_modes(),
            Spectral::Sphere(t) => t.num_modes(),
        }
    }

    /// Harmonic degree of a coefficient index.
    pub fn mode_degree(&self, index: usize) -> usize {
        if self.n == 1 {
            (index + 1) / 2
        } else {
            (index as f64).sqrt().floor() as usize
        }
    }

    /// Coefficient index of a real harmonic. `n = 1`: `m >= 0` selects
    /// `cos(l p)`, `m < 0` selects `sin(l p)`. `n = 2`: `m >= 0` selects
    /// `P̄_l^m cos(m p_1)`, `m < 0` selects `P̄_l^{|m|} sin(|m| p_1)`.
    pub fn mode_index(&self, l: usize, m: i64) -> Result<usize> {
        let bad = || Error::Config(format!("no harmonic (l = {l}, m = {m}) on this grid"));
        if l > self.max_degree() {
            return Err(bad());
        }
        if self.n == 1 {
            Ok(match (l, m < 0) {
                (0, false) => 0,
                (0, true) => return Err(bad()),
                (_, false) => 2 * l - 1,
                (_, true) => 2 * l,
            })
        } else {
            let mu = m.unsigned_abs() as usize;
            if mu > l || (m < 0 && mu == 0) {
                return Err(bad());
            }
            Ok(SphereTransform::index(l, mu, m < 0))
        }
    }

    /// Laplacian eigenvalue `-l(l+n-1)` of a coefficient index.
    pub fn mode_eigenvalue(&self, index: usize) -> f64 {
        let l = self.mode_degree(index) as f64;
        -l * (l + self.n as f64 - 1.0)
    }

    /// Orthonormal spectral coefficients (quadrature projection).
    pub fn analyze(&self, f: &[f64]) -> Vec<f64> {
        self.check_len(f);
        match &self.spectral {
            Spectral::Circle(t) => t.analyze(f),
            Spectral::Sphere(t) => t.analyze(f),
        }
    }

    pub fn synthesize(&self, coeffs: &[f64]) -> ScalarField {
        match &self.spectral {
            Spectral::Circle(t) => t.synthesize(coeffs, 0),
            Spectral::Sphere(t) => t.synthesize(coeffs, &[(0, 0)]).pop().unwrap(),
        }
    }

    /// Values of basis function `index` at the nodes.
    pub fn basis_field(&self, index: usize) -> ScalarField {
        let mut a = vec![0.0; self.num_modes()];
        a[index] = 1.0;
        self.synthesize(&a)
    }

    /// Drops every mode above `max_degree`.
    pub fn project(&self, f: &[f64], max_degree: usize) -> ScalarField {
        let mut a = self.analyze(f);
        for (i, c) in a.iter_mut().enumerate() {
            if self.mode_degree(i) > max_degree {
                *c = 0.0;
            }
        }
        self.synthesize(&a)
    }

    /// `f` minus its quadrature mean. Derivatives are taken of this, which
    /// keeps the rounding of a large mean out of high-degree coefficients.
    fn centered(&self, f: &[f64]) -> Vec<f64> {
        let mean = self.integrate_plain(f) / self.sphere_measure();
        f.iter().map(|v| v - mean).collect()
    }

    /// First coordinate derivatives `∂_i f`.
    pub fn gradient(&self, f: &[f64]) -> Vec<ScalarField> {
        self.check_len(f);
        let f = &self.centered(f)[..];
        match &self.spectral {
            Spectral::Circle(t) => vec![t.synthesize(&t.analyze(f), 1)],
            Spectral::Sphere(t) => t.synthesize(&t.analyze(f), &[(0, 1), (1, 0)]),
        }
    }

    /// First and second coordinate derivatives of `f`.
    pub fn partials(&self, f: &[f64]) -> Partials {
        self.check_len(f);
        let f = &self.centered(f)[..];
        match &self.spectral {
            Spectral::Circle(t) => {
                let a = t.analyze(f);
                Partials { first: vec![t.synthesize(&a, 1)], second: vec![t.synthesize(&a, 2)] }
            }
            Spectral::Sphere(t) => {
                let a = t.analyze(f);
                let mut out = t.synthesize(&a, &[(0, 1), (1, 0), (0, 2), (1, 1), (2, 0)]);
                let d22 = out.pop().unwrap();
                let d12 = out.pop().unwrap();
                let d11 = out.pop().unwrap();
                Partials { first: out, second: vec![d11, d12.clone(), d12, d22] }
            }
        }
    }

    /// Laplace-Beltrami operator of the unit round `S^n`.
    pub fn laplacian(&self, f: &[f64]) -> ScalarField {
        let mut a = self.analyze(&self.centered(f));
        for (i, c) in a.iter_mut().enumerate() {
            *c *= self.mode_eigenvalue(i);
        }
        self.synthesize(&a)
    }

    /// `Σ weight · f · density` with compensated summation in node order.
    pub fn integrate(&self, f: &[f64], density: &[f64]) -> f64 {
        self.check_len(f);
        self.check_len(density);
        compensated_sum(self.weights.iter().zip(f).zip(density).map(|((w, f), d)| w * f * d))
    }

    /// `Σ weight · f`.
    pub fn integrate_plain(&self, f: &[f64]) -> f64 {
        self.check_len(f);
        compensated_sum(self.weights.iter().zip(f).map(|(w, f)| w * f))
    }

    /// `Y_1, ..., Y_{n+1}`: the Cartesian components of the standard
    /// embedding `S^n ⊂ R^{n+1}` in the coordinates used here.
    pub fn harmonics_first_order(&self) -> Vec<ScalarField> {
        (0..=self.n)
            .map(|i| (0..self.len()).map(|node| self.frame.y(node)[i]).collect())
            .collect()
    }

    /// Evaluates `f(p)` at every node.
    pub fn field_from_fn<F: Fn(&[f64]) -> f64>(&self, f: F) -> ScalarField {
        (0..self.len()).map(|node| f(self.coords(node))).collect()
    }

    fn check_len(&self, f: &[f64]) {
        assert_eq!(f.len(), self.len(), "field length does not match the grid");
    }
}

/// On-disk form of a grid field: `{n, resolution, values}` with optional
/// context keys written by the flow.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub n: usize,
    pub resolution: usize,
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
}

impl Snapshot {
    pub fn new(grid: &SphereGrid, values: &[f64]) -> Self {
        Self { n: grid.n(), resolution: grid.resolution(), values: values.to_vec(), theta: None, t: None }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Rebuilds the grid and checks the value count.
    pub fn grid(&self) -> Result<SphereGrid> {
        let grid = SphereGrid::build(self.n, self.resolution)?;
        if grid.len() != self.values.len() {
            return Err(Error::Config(format!(
                "snapshot holds {} values, grid (n = {}, resolution = {}) has {} nodes",
                self.values.len(),
                self.n,
                self.resolution,
                grid.len()
            )));
        }
        Ok(grid)
    }
}

/// Dense helpers for the `n x n` (`n <= 2`) matrices stored row-major in
/// `[f64; 4]`.
pub(crate) mod small {
    /// Inverse and determinant.
    #[inline]
    pub fn inverse(n: usize, m: &[f64]) -> ([f64; 4], f64) {
        if n == 1 {
            ([1.0 / m[0], 0.0, 0.0, 0.0], m[0])
        } else {
            let det = m[0] * m[3] - m[1] * m[2];
            ([m[3] / det, -m[1] / det, -m[2] / det, m[0] / det], det)
        }
    }

    /// Eigenvalues (ascending) of the symmetric pencil `h v = λ g v` for SPD `g`.
    #[inline]
    pub fn generalized_symmetric_eigenvalues(n: usize, h: &[f64], g: &[f64]) -> [f64; 2] {
        if n == 1 {
            return [h[0] / g[0], 0.0];
        }
        // Cholesky g = C C^T, M = C^{-1} h C^{-T}
        let c11 = g[0].sqrt();
        let c21 = g[2] / c11;
        let c22 = (g[3] - c21 * c21).sqrt();
        let m11 = h[0] / (c11 * c11);
        let m21 = (h[2] - c21 * m11 * c11) / (c11 * c22);
        let m22 = (h[3] - 2.0 * c21 * m21 * c22 - c21 * c21 * m11) / (c22 * c22);
        let mean = 0.5 * (m11 + m22);
        let rad = (0.25 * (m11 - m22) * (m11 - m22) + m21 * m21).sqrt();
        [mean - rad, mean + rad]
    }
}
