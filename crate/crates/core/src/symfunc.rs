//! Elementary symmetric functions of principal curvatures, their derivative
//! tensors with respect to the Weingarten map, and the speed functions built
//! from them.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Denominators and radicands of quotient/root speeds must exceed this.
pub const SPEED_DOMAIN_EPS: f64 = 1e-12;

/// Binomial coefficient as a float; zero outside `0 <= k <= n`.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `E_0..E_n` of the entries of `kappa`.
///
/// Uses the degree-graded product recurrence: multiplying in one factor
/// `(1 + kappa_i t)` at a time updates every degree in place.
pub fn elementary_symmetric(kappa: &[f64]) -> Vec<f64> {
    let n = kappa.len();
    let mut e = vec![0.0; n + 1];
    e[0] = 1.0;
    for (i, &k) in kappa.iter().enumerate() {
        for a in (1..=i + 1).rev() {
            e[a] += k * e[a - 1];
        }
    }
    e
}

/// `dE_a/dkappa_i` for every `i`, i.e. `E_{a-1}` of the curvatures with
/// entry `i` removed.
pub fn esym_gradient(kappa: &[f64], a: usize) -> Vec<f64> {
    if a == 0 {
        return vec![0.0; kappa.len()];
    }
    (0..kappa.len())
        .map(|i| {
            let rest: Vec<f64> = kappa
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &k)| k)
                .collect();
            elementary_symmetric(&rest).get(a - 1).copied().unwrap_or(0.0)
        })
        .collect()
}

/// `E_0..E_n` of the eigenvalues of a square matrix, read off the
/// characteristic polynomial (Faddeev-LeVerrier), so no eigen-solve is needed
/// and non-symmetric input is fine.
pub fn elementary_symmetric_matrix(w: &DMatrix<f64>) -> Vec<f64> {
    let n = w.nrows();
    assert_eq!(n, w.ncols(), "Weingarten matrix must be square");
    // charpoly(t) = det(tI - W) = sum_k (-1)^k E_k t^{n-k}
    let mut e = vec![0.0; n + 1];
    e[0] = 1.0;
    let mut m = DMatrix::<f64>::zeros(n, n);
    let mut c_prev = 1.0;
    for k in 1..=n {
        m = w * &m;
        for i in 0..n {
            m[(i, i)] += c_prev;
        }
        let c = -(w * &m).trace() / k as f64;
        e[k] = if k % 2 == 0 { c } else { -c };
        c_prev = c;
    }
    e
}

/// `dE_a/dh^i_j` as an `n x n` matrix `D` with `D[(i, j)] = dE_a/dh^i_j`,
/// where `W[(i, j)] = h^i_j`.
///
/// `dE_a/dh^i_j = sum_{b=0}^{a-1} (-1)^b (W^b)^j_i E_{a-1-b}`, so `D` is a
/// polynomial in `W^T`. The first slot of `D` is covariant, the second
/// contravariant.
pub fn esym_derivative_tensor(w: &DMatrix<f64>, a: usize) -> DMatrix<f64> {
    let n = w.nrows();
    let mut d = DMatrix::<f64>::zeros(n, n);
    if a == 0 || a > n {
        return d;
    }
    let e = elementary_symmetric_matrix(w);
    let wt = w.transpose();
    let mut power = DMatrix::<f64>::identity(n, n);
    for b in 0..a {
        let sign = if b % 2 == 0 { 1.0 } else { -1.0 };
        d += &power * (sign * e[a - 1 - b]);
        power = &power * &wt;
    }
    d
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpeedKind {
    /// `E_k`
    Power,
    /// `E_k^{1/k}`
    Root,
    /// `E_{k+1} / E_k`
    Quotient,
}

/// A symmetric speed function `F(kappa)`, optionally scaled.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeedSpec {
    pub kind: SpeedKind,
    pub k: usize,
    #[serde(default = "unit_scale")]
    pub scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

impl SpeedSpec {
    pub fn power(k: usize) -> Self {
        Self { kind: SpeedKind::Power, k, scale: 1.0 }
    }

    pub fn root(k: usize) -> Self {
        Self { kind: SpeedKind::Root, k, scale: 1.0 }
    }

    pub fn quotient(k: usize) -> Self {
        Self { kind: SpeedKind::Quotient, k, scale: 1.0 }
    }

    pub fn scaled(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    /// Checks that `k` fits the dimension.
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k == 0 || self.k > n {
            return Err(Error::Config(format!("speed {self}: k must lie in 1..={n}")));
        }
        if !self.scale.is_finite() || self.scale == 0.0 {
            return Err(Error::Config(format!("speed {self}: scale must be finite and nonzero")));
        }
        Ok(())
    }

    /// Largest `k` index of `E` the speed touches.
    fn top_degree(&self) -> usize {
        match self.kind {
            SpeedKind::Quotient => self.k + 1,
            _ => self.k,
        }
    }
}

impl fmt::Display for SpeedSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.scale != 1.0 {
            write!(f, "{}*", self.scale)?;
        }
        match self.kind {
            SpeedKind::Power => write!(f, "E{}", self.k),
            SpeedKind::Root => write!(f, "E{}^(1/{})", self.k, self.k),
            SpeedKind::Quotient => write!(f, "E{}/E{}", self.k + 1, self.k),
        }
    }
}

impl FromStr for SpeedSpec {
    type Err = Error;

    /// Accepts `E2`, `E2^(1/2)` (or `E2^1/2`), `E3/E2`, with an optional
    /// `c*` scale prefix.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unrecognised speed '{s}' (try E1, E2^(1/2), E2/E1)"));
        let s_trim = s.trim();
        let (scale, body) = match s_trim.split_once('*') {
            Some((c, rest)) => (c.trim().parse::<f64>().map_err(|_| bad())?, rest.trim()),
            None => (1.0, s_trim),
        };
        let index = |t: &str| -> Result<usize> {
            t.strip_prefix('E')
                .or_else(|| t.strip_prefix('e'))
                .and_then(|d| d.parse::<usize>().ok())
                .ok_or_else(bad)
        };
        let spec = if let Some((num, den)) = body.split_once('/').filter(|_| !body.contains('^')) {
            let (top, bottom) = (index(num)?, index(den)?);
            if top != bottom + 1 {
                return Err(bad());
            }
            SpeedSpec::quotient(bottom)
        } else if let Some((base, exp)) = body.split_once('^') {
            let k = index(base)?;
            let exp = exp.trim_start_matches('(').trim_end_matches(')');
            if exp != format!("1/{k}") {
                return Err(bad());
            }
            SpeedSpec::root(k)
        } else {
            SpeedSpec::power(index(body)?)
        };
        Ok(spec.scaled(scale))
    }
}

/// `F(kappa)` and its exact gradient `dF/dkappa_a`.
pub fn speed_and_gradient(spec: &SpeedSpec, kappa: &[f64]) -> Result<(f64, Vec<f64>)> {
    let n = kappa.len();
    let k = spec.k;
    if k == 0 || spec.top_degree() > n + 1 {
        return Err(Error::Config(format!("speed {spec} undefined for n = {n}")));
    }
    let e = elementary_symmetric(kappa);
    let e_at = |a: usize| e.get(a).copied().unwrap_or(0.0);
    let (f, df): (f64, Vec<f64>) = match spec.kind {
        SpeedKind::Power => (e_at(k), esym_gradient(kappa, k)),
        SpeedKind::Root if k == 1 => (e_at(1), esym_gradient(kappa, 1)),
        SpeedKind::Root => {
            let ek = e_at(k);
            if ek <= SPEED_DOMAIN_EPS {
                return Err(Error::Domain(format!(
                    "{spec} needs E{k} > {SPEED_DOMAIN_EPS:e}, got {ek:e}"
                )));
            }
            let f = ek.powf(1.0 / k as f64);
            let factor = f / (k as f64 * ek);
            let grad = esym_gradient(kappa, k).into_iter().map(|g| factor * g).collect();
            (f, grad)
        }
        SpeedKind::Quotient => {
            let (top, bottom) = (e_at(k + 1), e_at(k));
            if bottom.abs() <= SPEED_DOMAIN_EPS {
                return Err(Error::Domain(format!(
                    "{spec} needs |E{k}| > {SPEED_DOMAIN_EPS:e}, got {bottom:e}"
                )));
            }
            let g_top = esym_gradient(kappa, k + 1);
            let g_bottom = esym_gradient(kappa, k);
            let grad = g_top
                .iter()
                .zip(&g_bottom)
                .map(|(gt, gb)| (gt * bottom - top * gb) / (bottom * bottom))
                .collect();
            (top / bottom, grad)
        }
    };
    Ok((spec.scale * f, df.into_iter().map(|g| spec.scale * g).collect()))
}

/// `dF/dkappa_1` at the umbilic point `(kappa0, ..., kappa0)`.
pub fn umbilic_speed_derivative(spec: &SpeedSpec, n: usize, kappa0: f64) -> Result<f64> {
    let (_, grad) = speed_and_gradient(spec, &vec![kappa0; n])?;
    Ok(grad[0])
}
