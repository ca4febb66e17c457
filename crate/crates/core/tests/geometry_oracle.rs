//! Curvatures of analytic graphs against finite differences of the embedding.

use nalgebra::{DMatrix, SymmetricEigen};
use spheregraph::geometry::{geometry_fields, GraphFunction};
use spheregraph::grid::SphereGrid;

const STEP: f64 = 3e-4;

fn y_of(n: usize, p: &[f64]) -> Vec<f64> {
    if n == 1 {
        vec![p[0].sin(), p[0].cos()]
    } else {
        let (phi, t) = (p[0], p[1]);
        vec![phi.sin() * t.sin(), phi.cos() * t.sin(), t.cos()]
    }
}

fn height(y: &[f64]) -> f64 {
    match y.len() {
        2 => 0.04 * (2.0 * y[0] * y[1]) + 0.03 * y[1] * y[1] * y[1] - 0.02 * y[0],
        _ => 0.04 * y[0] * y[1] + 0.03 * y[2] * y[2] - 0.02 * y[1] * y[2] * y[2] + 0.01 * y[0],
    }
}

fn embed(n: usize, theta: f64, p: &[f64]) -> Vec<f64> {
    let y = y_of(n, p);
    let s = theta + height(&y);
    let mut x: Vec<f64> = y.iter().map(|v| s.sin() * v).collect();
    x.push(s.cos());
    x
}

fn shifted(p: &[f64], i: usize, d: f64) -> Vec<f64> {
    let mut q = p.to_vec();
    q[i] += d;
    q
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Principal curvatures, area factor and normal from central differences.
fn oracle(n: usize, theta: f64, p: &[f64]) -> (Vec<f64>, f64, Vec<f64>) {
    let x = embed(n, theta, p);
    let first: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let (a, b) = (embed(n, theta, &shifted(p, i, STEP)), embed(n, theta, &shifted(p, i, -STEP)));
            a.iter().zip(&b).map(|(a, b)| (a - b) / (2.0 * STEP)).collect()
        })
        .collect();
    let second = |i: usize, j: usize| -> Vec<f64> {
        if i == j {
            let (a, b) = (embed(n, theta, &shifted(p, i, STEP)), embed(n, theta, &shifted(p, i, -STEP)));
            a.iter().zip(&b).zip(&x).map(|((a, b), c)| (a + b - 2.0 * c) / (STEP * STEP)).collect()
        } else {
            let e = |si: f64, sj: f64| embed(n, theta, &shifted(&shifted(p, i, si * STEP), j, sj * STEP));
            let (pp, pm, mp, mm) = (e(1.0, 1.0), e(1.0, -1.0), e(-1.0, 1.0), e(-1.0, -1.0));
            (0..x.len()).map(|k| (pp[k] - pm[k] - mp[k] + mm[k]) / (4.0 * STEP * STEP)).collect()
        }
    };
    // Normal: the outward geodesic direction made orthogonal to X and the tangents.
    let y = y_of(n, p);
    let s = theta + height(&y);
    let mut nu: Vec<f64> = y.iter().map(|v| s.cos() * v).collect();
    nu.push(-s.sin());
    let mut basis = vec![x.clone()];
    for t in &first {
        let mut v = t.clone();
        for b in &basis {
            let c = dot(&v, b) / dot(b, b);
            v.iter_mut().zip(b).for_each(|(v, b)| *v -= c * b);
        }
        basis.push(v);
    }
    for b in &basis {
        let c = dot(&nu, b) / dot(b, b);
        nu.iter_mut().zip(b).for_each(|(v, b)| *v -= c * b);
    }
    let norm = dot(&nu, &nu).sqrt();
    nu.iter_mut().for_each(|v| *v /= norm);

    let g = DMatrix::from_fn(n, n, |i, j| dot(&first[i], &first[j]));
    let h = DMatrix::from_fn(n, n, |i, j| -dot(&nu, &second(i, j)));
    let l = g.clone().cholesky().unwrap().l();
    let linv = l.clone().try_inverse().unwrap();
    let sym = &linv * h * linv.transpose();
    let mut kappa: Vec<f64> = SymmetricEigen::new((&sym + sym.transpose()) * 0.5).eigenvalues.iter().copied().collect();
    kappa.sort_by(f64::total_cmp);
    let sigma_det = if n == 1 { 1.0 } else { p[1].sin().powi(2) };
    (kappa, (g.determinant() / sigma_det).sqrt(), nu)
}

#[test]
fn curvatures_match_finite_differences() {
    for (n, res) in [(1, 64), (2, 24)] {
        let grid = SphereGrid::build(n, res).unwrap();
        for theta in [0.7, std::f64::consts::FRAC_PI_2, 2.1] {
            let u = grid.field_from_fn(|p| height(&y_of(n, p)));
            let fields = geometry_fields(&grid, &GraphFunction::new(theta, u)).unwrap();
            let (mut dk, mut dmu, mut dnu) = (0.0f64, 0.0f64, 0.0f64);
            for node in (0..grid.len()).step_by(7) {
                let (kappa, mu, nu) = oracle(n, theta, grid.coords(node));
                for (a, b) in kappa.iter().zip(fields.kappa(node)) {
                    dk = dk.max((a - b).abs());
                }
                dmu = dmu.max((mu - fields.mu[node]).abs());
                for (a, b) in nu.iter().zip(fields.nu(node)) {
                    dnu = dnu.max((a - b).abs());
                }
            }
            assert!(dk <= 1e-6, "n = {n}, θ = {theta}: curvature error {dk:e}");
            assert!(dmu <= 1e-7, "n = {n}, θ = {theta}: area factor error {dmu:e}");
            assert!(dnu <= 1e-7, "n = {n}, θ = {theta}: normal error {dnu:e}");
        }
    }
}
