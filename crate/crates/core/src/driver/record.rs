use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const RECORD_HEADER: [&str; 8] = [
    "step",
    "t",
    "fit_residual",
    "rel_l2",
    "linf",
    "r_current",
    "reinit",
    "wall_ms",
];

/// One row of the trace. Step 0 is the initial fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    /// RMS of the interior rows of the fit, the error to the target.
    pub fit_residual: f64,
    /// Error to the reference; NaN when no reference is available.
    pub rel_l2: f64,
    pub linf: f64,
    pub r_current: f64,
    pub reinit: bool,
    pub wall_ms: f64,
    /// Least-squares solves performed during this step.
    pub solves: usize,
    /// Per-component errors `[u1, u2, p]` for ns2d.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub components: Option<[f64; 3]>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub rows: Vec<StepRecord>,
    pub total_ms: f64,
}

impl RunRecord {
    pub fn last(&self) -> Option<&StepRecord> {
        self.rows.last()
    }

    pub fn final_rel_l2(&self) -> f64 {
        self.last().map_or(f64::NAN, |r| r.rel_l2)
    }

    pub fn final_linf(&self) -> f64 {
        self.last().map_or(f64::NAN, |r| r.linf)
    }

    pub fn reinit_times(&self) -> Vec<f64> {
        self.rows.iter().filter(|r| r.reinit).map(|r| r.t).collect()
    }

    /// Row whose time is closest to `t`.
    pub fn at_time(&self, t: f64) -> Option<&StepRecord> {
        self.rows
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
    }

    /// Sum of per-step wall times, excluding the initial fit.
    pub fn stepping_ms(&self) -> f64 {
        self.rows.iter().skip(1).map(|r| r.wall_ms).sum()
    }

    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(RECORD_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.step.to_string(),
                format!("{:e}", r.t),
                format!("{:e}", r.fit_residual),
                format!("{:e}", r.rel_l2),
                format!("{:e}", r.linf),
                format!("{:e}", r.r_current),
                u8::from(r.reinit).to_string(),
                format!("{:.3}", r.wall_ms),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn read_csv(input: impl std::io::Read) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header != RECORD_HEADER {
            return Err(Error::invalid(format!("unexpected record header {header:?}")));
        }
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let f = |i: usize| -> Result<f64> {
                rec[i]
                    .parse::<f64>()
                    .map_err(|e| Error::invalid(format!("column {}: {e}", RECORD_HEADER[i])))
            };
            rows.push(StepRecord {
                step: f(0)? as usize,
                t: f(1)?,
                fit_residual: f(2)?,
                rel_l2: f(3)?,
                linf: f(4)?,
                r_current: f(5)?,
                reinit: &rec[6] == "1",
                wall_ms: f(7)?,
                solves: 0,
                components: None,
            });
        }
        Ok(Self {
            rows,
            total_ms: 0.0,
        })
    }
}

/// Predicted field on the test grid at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSnapshot {
    pub t: f64,
    /// M x dim
    pub points: Array2<f64>,
    /// M x c: the solution components, then pressure for ns2d.
    pub values: Array2<f64>,
}

impl FieldSnapshot {
    pub fn header(&self) -> Vec<&'static str> {
        let coords = ["x", "y", "z"];
        let comps = ["u", "v", "p"];
        coords[..self.points.ncols()]
            .iter()
            .chain(comps[..self.values.ncols()].iter())
            .copied()
            .collect()
    }

    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(self.header())?;
        for (p, v) in self.points.rows().into_iter().zip(self.values.rows()) {
            w.write_record(p.iter().chain(v.iter()).map(|x| format!("{x:e}")))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}
