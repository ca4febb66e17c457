//! Gauss-Legendre quadrature and tables of normalized associated Legendre
//! functions (with colatitude derivatives) at the quadrature nodes.

/// Gauss-Legendre nodes on `[-1, 1]` in descending order (so colatitudes
/// `acos(x)` ascend), with their weights (summing to 2).
pub fn gauss_legendre(count: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; count];
    let mut weights = vec![0.0; count];
    let nf = count as f64;
    for i in 0..count {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, p_prev) = legendre_pair(count, x);
            dp = nf * (x * p - p_prev) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (p, p_prev) = legendre_pair(count, x);
        dp = if dp == 0.0 { 1.0 } else { nf * (x * p - p_prev) / (x * x - 1.0) };
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// `(P_n(x), P_{n-1}(x))` by the three-term recurrence.
fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    (p1, p0)
}

/// `P̄_l^m(cos t)` normalized so that `∫_{-1}^{1} (P̄_l^m)^2 dx = 1`, plus its
/// first and second derivatives in the colatitude `t`, for `0 <= m <= l <= lmax`
/// at a fixed set of colatitudes.
#[derive(Debug, Clone)]
pub struct LegendreTable {
    count: usize,
    offsets: Vec<usize>,
    values: [Vec<f64>; 3],
}

impl LegendreTable {
    pub fn new(lmax: usize, colatitudes: &[f64]) -> Self {
        let count = colatitudes.len();
        let mut offsets = Vec::with_capacity(lmax + 2);
        let mut acc = 0;
        for m in 0..=lmax {
            offsets.push(acc);
            acc += (lmax - m + 1) * count;
        }
        offsets.push(acc);
        let mut values = [vec![0.0; acc], vec![0.0; acc], vec![0.0; acc]];

        for (j, &t) in colatitudes.iter().enumerate() {
            let (s, x) = t.sin_cos();
            let mut pmm = std::f64::consts::FRAC_1_SQRT_2;
            for m in 0..=lmax {
                if m > 0 {
                    let mf = m as f64;
                    pmm *= ((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * s;
                }
                let idx = |l: usize| offsets[m] + (l - m) * count + j;
                let mut prev2 = 0.0;
                let mut prev = pmm;
                values[0][idx(m)] = pmm;
                for l in m + 1..=lmax {
                    let (lf, mf) = (l as f64, m as f64);
                    let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
                    let b = (((lf - 1.0).powi(2) - mf * mf) / (4.0 * (lf - 1.0).powi(2) - 1.0)).sqrt();
                    let p = a * (x * prev - b * prev2);
                    values[0][idx(l)] = p;
                    prev2 = prev;
                    prev = p;
                }
                for l in m..=lmax {
                    let (lf, mf) = (l as f64, m as f64);
                    let p = values[0][idx(l)];
                    let p_lower = if l > m { values[0][idx(l - 1)] } else { 0.0 };
                    let c = if l > m {
                        ((2.0 * lf + 1.0) / (2.0 * lf - 1.0) * (lf * lf - mf * mf)).sqrt()
                    } else {
                        0.0
                    };
                    let dp = (lf * x * p - c * p_lower) / s;
                    let d2p = -(x / s) * dp - (lf * (lf + 1.0) - mf * mf / (s * s)) * p;
                    values[1][idx(l)] = dp;
                    values[2][idx(l)] = d2p;
                }
            }
        }
        Self { count, offsets, values }
    }

    /// Slice over nodes of the `order`-th colatitude derivative of `P̄_l^m`.
    #[inline]
    pub fn column(&self, order: usize, l: usize, m: usize) -> &[f64] {
        let start = self.offsets[m] + (l - m) * self.count;
        &self.values[order][start..start + self.count]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_and_exactness() {
        let (x, w) = gauss_legendre(12);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        // exact through degree 23
        for deg in 0..24 {
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg)).sum();
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            assert!((q - exact).abs() < 1e-14, "degree {deg}: {q} vs {exact}");
        }
        assert!(x.windows(2).all(|p| p[0] > p[1]));
    }

    #[test]
    fn legendre_orthonormal() {
        let count = 20;
        let (x, w) = gauss_legendre(count);
        let t: Vec<f64> = x.iter().map(|x| x.acos()).collect();
        let table = LegendreTable::new(12, &t);
        for m in 0..=12 {
            for l in m..=12 {
                for l2 in m..=12 {
                    let a = table.column(0, l, m);
                    let b = table.column(0, l2, m);
                    let ip: f64 = (0..count).map(|j| w[j] * a[j] * b[j]).sum();
                    let expect = if l == l2 { 1.0 } else { 0.0 };
                    assert!((ip - expect).abs() < 1e-12, "l={l} l2={l2} m={m}: {ip}");
                }
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let t0 = [0.4, 1.3, 2.9];
        let h = 1e-5;
        let shifted = |d: f64| -> Vec<f64> { t0.iter().map(|t| t + d).collect() };
        let base = LegendreTable::new(8, &t0);
        let plus = LegendreTable::new(8, &shifted(h));
        let minus = LegendreTable::new(8, &shifted(-h));
        for m in 0..=8 {
            for l in m..=8 {
                for j in 0..3 {
                    let fd1 = (plus.column(0, l, m)[j] - minus.column(0, l, m)[j]) / (2.0 * h);
                    let fd2 = (plus.column(0, l, m)[j] - 2.0 * base.column(0, l, m)[j]
                        + minus.column(0, l, m)[j])
                        / (h * h);
                    assert!((fd1 - base.column(1, l, m)[j]).abs() < 1e-7);
                    assert!((fd2 - base.column(2, l, m)[j]).abs() < 1e-3);
                }
            }
        }
    }
}
