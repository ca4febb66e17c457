//! Initial graph functions and the seeded generator behind random ones.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ScalarField, SphereGrid};
use crate::spherespace::{u_from_params, SphereParams};

/// Seeded uniform sequence: xoshiro256++ seeded through splitmix64
/// (`seed_from_u64`), mapped to `[0, 1)` as `(next_u64 >> 11) · 2^{−53}`.
#[derive(Clone, Debug)]
pub struct UniformSource {
    rng: Xoshiro256PlusPlus,
}

impl UniformSource {
    pub fn new(seed: u64) -> Self {
        Self { rng: Xoshiro256PlusPlus::seed_from_u64(seed) }
    }

    /// Uniform in `[0, 1)`.
    pub fn next_unit(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn next_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_unit()
    }
}

/// One orthonormal harmonic: `n = 1` uses `(l, m ≥ 0)` for `cos(l p)` and
/// `m < 0` for `sin(l p)`; `n = 2` uses `(l, m)` with `|m| ≤ l`, sign of `m`
/// selecting cosine or sine in longitude.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarmonicTerm {
    pub l: usize,
    #[serde(default)]
    pub m: i64,
    pub coefficient: f64,
}

/// Coefficients uniform in `[−1, 1)` for every harmonic of degree
/// `min_degree ..= max_degree`, drawn in coefficient-index order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomHarmonics {
    pub seed: u64,
    #[serde(default)]
    pub min_degree: usize,
    pub max_degree: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    /// Sum of orthonormal harmonics, optionally rescaled to `max |u| = max_abs`.
    Harmonics {
        #[serde(default)]
        terms: Vec<HarmonicTerm>,
        #[serde(default)]
        random: Option<RandomHarmonics>,
        #[serde(default)]
        max_abs: Option<f64>,
    },
    /// Graph of the geodesic sphere with parameters `b`.
    Sphere { b: Vec<f64> },
    /// Nodal values on the configured grid.
    Field { values: Vec<f64> },
}

impl InitialCondition {
    pub fn build(&self, grid: &SphereGrid, theta: f64) -> Result<ScalarField> {
        match self {
            InitialCondition::Harmonics { terms, random, max_abs } => {
                let mut coeffs = vec![0.0; grid.num_modes()];
                for t in terms {
                    coeffs[grid.mode_index(t.l, t.m)?] += t.coefficient;
                }
                if let Some(r) = random {
                    if r.max_degree > grid.max_degree() || r.min_degree > r.max_degree {
                        return Err(Error::Config(format!(
                            "random degrees {}..={} not resolved (grid band {})",
                            r.min_degree,
                            r.max_degree,
                            grid.max_degree()
                        )));
                    }
                    let mut src = UniformSource::new(r.seed);
                    for (i, c) in coeffs.iter_mut().enumerate() {
                        let l = grid.mode_degree(i);
                        if l >= r.min_degree && l <= r.max_degree {
                            *c += src.next_range(-1.0, 1.0);
                        }
                    }
                }
                let mut u = grid.synthesize(&coeffs);
                if let Some(target) = max_abs {
                    let peak = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    if peak == 0.0 {
                        return Err(Error::Config("cannot rescale a zero initial field".into()));
                    }
                    u.iter_mut().for_each(|v| *v *= target / peak);
                }
                Ok(u)
            }
            InitialCondition::Sphere { b } => Ok(u_from_params(grid, theta, &SphereParams::new(b.clone()))?.u),
            InitialCondition::Field { values } => {
                if values.len() != grid.len() {
                    return Err(Error::Config(format!(
                        "initial field has {} values, grid has {} nodes",
                        values.len(),
                        grid.len()
                    )));
                }
                Ok(values.clone())
            }
        }
    }

    /// `amplitude · P_2` profile symmetric under the isometries fixing the
    /// axis: `cos 2p` for `n = 1`, `(3 cos² p_2 − 1)/2` for `n = 2`, scaled
    /// so `max |u| = amplitude` on the grid.
    pub fn axial_degree_two(amplitude: f64) -> Self {
        let term = HarmonicTerm { l: 2, m: 0, coefficient: 1.0 };
        InitialCondition::Harmonics { terms: vec![term], random: None, max_abs: Some(amplitude) }
    }
}
