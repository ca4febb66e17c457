//! Real orthonormal spectral bases on S^1 (Fourier) and S^2 (spherical
//! harmonics) with analysis, synthesis and exact derivative synthesis.
//!
//! Coefficient ordering is by degree. On S^1 index 0 is the constant and
//! `2k-1`, `2k` are `cos(kp)`, `sin(kp)`. On S^2 degree `l` occupies
//! `l^2 .. (l+1)^2`: `(l, 0)` first, then `cos(m p1)`, `sin(m p1)` pairs for
//! `m = 1..=l`. Every basis function has unit L2 norm on the unit sphere.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::legendre::{gauss_legendre, LegendreTable};

#[derive(Clone)]
pub(crate) struct CircleTransform {
    nodes: usize,
    kmax: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl CircleTransform {
    pub fn new(nodes: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            nodes,
            kmax: nodes / 2 - 1,
            forward: planner.plan_fft_forward(nodes),
            inverse: planner.plan_fft_inverse(nodes),
        }
    }

    pub fn max_degree(&self) -> usize {
        self.kmax
    }

    pub fn num_modes(&self) -> usize {
        2 * self.kmax + 1
    }

    pub fn analyze(&self, f: &[f64]) -> Vec<f64> {
        let mut buf: Vec<Complex<f64>> = f.iter().map(|&x| Complex::new(x, 0.0)).collect();
        self.forward.process(&mut buf);
        let h = 2.0 * PI / self.nodes as f64;
        let mut a = vec![0.0; self.num_modes()];
        a[0] = h * buf[0].re / (2.0 * PI).sqrt();
        let c = h / PI.sqrt();
        for k in 1..=self.kmax {
            a[2 * k - 1] = c * buf[k].re;
            a[2 * k] = -c * buf[k].im;
        }
        a
    }

    /// `order`-th derivative of the band-limited function with coefficients `a`.
    pub fn synthesize(&self, a: &[f64], order: usize) -> Vec<f64> {
        let mut buf = vec![Complex::new(0.0, 0.0); self.nodes];
        if order == 0 {
            buf[0] = Complex::new(a[0] / (2.0 * PI).sqrt(), 0.0);
        }
        let c = 1.0 / PI.sqrt();
        for k in 1..=self.kmax {
            let mut z = Complex::new(a[2 * k - 1], -a[2 * k]) * c;
            for _ in 0..order {
                z *= Complex::new(0.0, k as f64);
            }
            buf[k] = z;
        }
        self.inverse.process(&mut buf);
        buf.into_iter().map(|z| z.re).collect()
    }
}

#[derive(Clone)]
pub(crate) struct SphereTransform {
    nlat: usize,
    nlon: usize,
    lmax: usize,
    lat_weights: Vec<f64>,
    table: LegendreTable,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl SphereTransform {
    /// Returns the transform and the node colatitudes.
    pub fn new(nlat: usize) -> (Self, Vec<f64>) {
        let nlon = 2 * nlat;
        let (x, w) = gauss_legendre(nlat);
        let colat: Vec<f64> = x.iter().map(|x| x.acos()).collect();
        let lmax = nlat - 1;
        let mut planner = FftPlanner::new();
        let t = Self {
            nlat,
            nlon,
            lmax,
            lat_weights: w,
            table: LegendreTable::new(lmax, &colat),
            forward: planner.plan_fft_forward(nlon),
            inverse: planner.plan_fft_inverse(nlon),
        };
        (t, colat)
    }

    pub fn lat_weights(&self) -> &[f64] {
        &self.lat_weights
    }

    pub fn max_degree(&self) -> usize {
        self.lmax
    }

    pub fn num_modes(&self) -> usize {
        (self.lmax + 1) * (self.lmax + 1)
    }

    #[inline]
    fn norm(m: usize) -> f64 {
        if m == 0 {
            1.0 / (2.0 * PI).sqrt()
        } else {
            1.0 / PI.sqrt()
        }
    }

    #[inline]
    pub fn index(l: usize, m: usize, sine: bool) -> usize {
        match (m, sine) {
            (0, _) => l * l,
            (_, false) => l * l + 2 * m - 1,
            (_, true) => l * l + 2 * m,
        }
    }

    pub fn analyze(&self, f: &[f64]) -> Vec<f64> {
        let mut a = vec![0.0; self.num_modes()];
        let hphi = 2.0 * PI / self.nlon as f64;
        let mut row = vec![Complex::new(0.0, 0.0); self.nlon];
        for j in 0..self.nlat {
            for (slot, &v) in row.iter_mut().zip(&f[j * self.nlon..(j + 1) * self.nlon]) {
                *slot = Complex::new(v, 0.0);
            }
            self.forward.process(&mut row);
            let wj = self.lat_weights[j] * hphi;
            for m in 0..=self.lmax {
                let scale = wj * Self::norm(m);
                let (re, im) = (row[m].re * scale, -row[m].im * scale);
                for l in m..=self.lmax {
                    let p = self.table.column(0, l, m)[j];
                    a[Self::index(l, m, false)] += re * p;
                    if m > 0 {
                        a[Self::index(l, m, true)] += im * p;
                    }
                }
            }
        }
        a
    }

    /// Synthesizes `d^{dt}/dcolat^{dt} d^{dp}/dlon^{dp}` of the expansion for
    /// every requested `(dt, dp)` pair.
    pub fn synthesize(&self, a: &[f64], orders: &[(usize, usize)]) -> Vec<Vec<f64>> {
        let npts = self.nlat * self.nlon;
        let mut out: Vec<Vec<f64>> = orders.iter().map(|_| vec![0.0; npts]).collect();
        let mut sums = vec![(0.0, 0.0); (self.lmax + 1) * 3];
        let mut buf = vec![Complex::new(0.0, 0.0); self.nlon];
        let needed: [bool; 3] = [0, 1, 2].map(|d| orders.iter().any(|o| o.0 == d));
        for j in 0..self.nlat {
            for m in 0..=self.lmax {
                for (dt, need) in needed.iter().enumerate() {
                    if !need {
                        continue;
                    }
                    let (mut sc, mut ss) = (0.0, 0.0);
                    for l in m..=self.lmax {
                        let p = self.table.column(dt, l, m)[j];
                        sc += a[Self::index(l, m, false)] * p;
                        if m > 0 {
                            ss += a[Self::index(l, m, true)] * p;
                        }
                    }
                    let c = Self::norm(m);
                    sums[m * 3 + dt] = (sc * c, ss * c);
                }
            }
            for (field, &(dt, dp)) in out.iter_mut().zip(orders) {
                buf.iter_mut().for_each(|z| *z = Complex::new(0.0, 0.0));
                for m in 0..=self.lmax {
                    let (sc, ss) = sums[m * 3 + dt];
                    let mut z = Complex::new(sc, -ss);
                    for _ in 0..dp {
                        z *= Complex::new(0.0, m as f64);
                    }
                    buf[m] = z;
                }
                self.inverse.process(&mut buf);
                for (k, z) in buf.iter().enumerate() {
                    field[j * self.nlon + k] = z.re;
                }
            }
        }
        out
    }
}
