use serde::{Deserialize, Serialize};

use super::FlowTrace;
use crate::error::{Error, Result};

/// Band of `‖(I − P)u‖_∞` values used for the rate fit.
pub const DECAY_BAND: (f64, f64) = (1e-9, 1e-3);
pub const MIN_DECAY_ROWS: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// `−d log‖(I − P)u‖ / dt`
    pub rate: f64,
    pub window: (f64, f64),
    pub r_squared: f64,
    pub rows: usize,
}

/// Least-squares slope of `log ‖(I − P)u‖_∞` against `t` over the longest
/// run of consecutive rows inside [`DECAY_BAND`]. The run must hold at least
/// [`MIN_DECAY_ROWS`] rows and span a decade.
pub fn measure_decay(trace: &FlowTrace) -> Result<DecayFit> {
    let inside = |r: f64| r > DECAY_BAND.0 && r < DECAY_BAND.1;
    let (mut best, mut start) = ((0, 0), None);
    for (i, row) in trace.rows.iter().enumerate() {
        match (inside(row.res_nonsphere), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                if i - s > best.1 - best.0 {
                    best = (s, i);
                }
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        if trace.rows.len() - s > best.1 - best.0 {
            best = (s, trace.rows.len());
        }
    }
    let rows = &trace.rows[best.0..best.1];
    if rows.len() < MIN_DECAY_ROWS {
        return Err(Error::InsufficientData(format!(
            "{} consecutive rows with residual in ({:e}, {:e}), need {MIN_DECAY_ROWS}",
            rows.len(),
            DECAY_BAND.0,
            DECAY_BAND.1
        )));
    }
    let ys: Vec<f64> = rows.iter().map(|r| r.res_nonsphere.ln()).collect();
    let (ymin, ymax) = ys.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &y| (a.min(y), b.max(y)));
    if ymax - ymin < std::f64::consts::LN_10 {
        return Err(Error::InsufficientData(format!(
            "residual varies by a factor {:.3} over the window, need at least 10",
            (ymax - ymin).exp()
        )));
    }
    let m = rows.len() as f64;
    let tbar = rows.iter().map(|r| r.t).sum::<f64>() / m;
    let ybar = ys.iter().sum::<f64>() / m;
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for (r, y) in rows.iter().zip(&ys) {
        let (dt, dy) = (r.t - tbar, y - ybar);
        stt += dt * dt;
        sty += dt * dy;
        syy += dy * dy;
    }
    let slope = sty / stt;
    let r_squared = if syy > 0.0 { sty * sty / (stt * syy) } else { 1.0 };
    Ok(DecayFit { rate: -slope, window: (rows[0].t, rows[rows.len() - 1].t), r_squared, rows: rows.len() })
}
