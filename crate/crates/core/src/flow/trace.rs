use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::spherespace::SphereFit;
use crate::volumes::VolumeReport;

/// Observables at one accepted step (row 0 is the initial state, `dt = 0`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub dt: f64,
    pub max_u: f64,
    pub max_g: f64,
    pub volumes: VolumeReport,
    pub vhat: f64,
    /// `‖(I − P)u‖_∞`
    pub res_nonsphere: f64,
    pub fit: Option<SphereFit>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FlowTrace {
    pub n: usize,
    pub rows: Vec<TraceRow>,
}

impl FlowTrace {
    pub fn new(n: usize) -> Self {
        Self { n, rows: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    /// `max |V̂(t) − V̂(0)| / max(|V̂(0)|, 1)`
    pub fn vhat_drift(&self) -> f64 {
        let Some(first) = self.rows.first() else { return 0.0 };
        let scale = first.vhat.abs().max(1.0);
        self.rows.iter().map(|r| (r.vhat - first.vhat).abs() / scale).fold(0.0, f64::max)
    }

    pub fn csv_header(n: usize) -> String {
        let mut h = String::from("t,dt,max_u,max_G");
        for a in 0..n + 2 {
            write!(h, ",V{a}").unwrap();
        }
        h.push_str(",Vhat,res_nonsphere");
        for a in 0..n + 2 {
            write!(h, ",fit_b{a}").unwrap();
        }
        h.push_str(",fit_residual");
        h
    }

    /// Rows without a sphere fit leave the fit columns empty. Numbers use the
    /// shortest representation that round-trips.
    pub fn to_csv(&self) -> String {
        let mut out = Self::csv_header(self.n);
        out.push('\n');
        for r in &self.rows {
            write!(out, "{},{},{},{}", r.t, r.dt, r.max_u, r.max_g).unwrap();
            for v in &r.volumes.v_a {
                write!(out, ",{v}").unwrap();
            }
            write!(out, ",{},{}", r.vhat, r.res_nonsphere).unwrap();
            match &r.fit {
                Some(fit) => {
                    for b in &fit.b {
                        write!(out, ",{b}").unwrap();
                    }
                    write!(out, ",{}", fit.residual).unwrap();
                }
                None => out.push_str(&",".repeat(self.n + 3)),
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        assert_eq!(
            FlowTrace::csv_header(1),
            "t,dt,max_u,max_G,V0,V1,V2,Vhat,res_nonsphere,fit_b0,fit_b1,fit_b2,fit_residual"
        );
    }

    #[test]
    fn rows_have_header_width() {
        let row = |fit| TraceRow {
            t: 0.5,
            dt: 0.1,
            max_u: 0.01,
            max_g: 1e-3,
            volumes: VolumeReport { v_a: vec![1.0, 2.0, 3.0, 4.0], area: 6.0 },
            vhat: 4.0,
            res_nonsphere: 1e-4,
            fit,
        };
        let trace = FlowTrace {
            n: 2,
            rows: vec![row(None), row(Some(SphereFit { b: vec![0.0; 4], residual: 1e-7, iterations: 3 }))],
        };
        let csv = trace.to_csv();
        let widths: Vec<usize> = csv.lines().map(|l| l.split(',').count()).collect();
        assert!(widths.iter().all(|&w| w == widths[0]));
        assert_eq!(trace.vhat_drift(), 0.0);
    }
}
