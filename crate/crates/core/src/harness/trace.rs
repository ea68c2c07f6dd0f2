//! Per-iteration run records and their frozen CSV form.

use std::io::Write;
use std::path::Path;
use std::time::Duration;

use crate::error::Result;
use crate::numeric::RealVector;

/// Exact CSV header. Changing it breaks downstream tooling.
pub const CSV_HEADER: &str =
    "t,grad_phi_norm,avg_grad_norm,alpha_t,alpha_prime_t,eta_x_t,eta_y_t,dist_y,sum_diff_sq,sum_lower_sq";

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: u64,
    /// `|grad Phi(x_t)|` at the iterate entering iteration `t`.
    pub grad_phi_norm: Option<f64>,
    /// `(1/t) sum_{k<=t} |grad Phi(x_k)|`.
    pub avg_grad_norm: Option<f64>,
    pub alpha_t: Option<f64>,
    pub alpha_prime_t: Option<f64>,
    pub eta_x_t: Option<f64>,
    pub eta_y_t: Option<f64>,
    /// `|y_t - y*(x_t)|`
    pub dist_y: Option<f64>,
    pub sum_diff_sq: Option<f64>,
    pub sum_lower_sq: Option<f64>,
    // not exported to CSV
    pub step_norm: f64,
    pub momentum_norm: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct TraceMeta {
    pub algorithm: String,
    pub seed: u64,
    /// Serialized run configuration, when the run came from the harness.
    pub config_echo: String,
    pub wall_time: Duration,
    pub initial_x: Option<RealVector>,
    pub final_x: Option<RealVector>,
    pub final_y: Option<RealVector>,
}

#[derive(Debug, Clone, Default)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
    pub meta: TraceMeta,
}

fn field(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl RunTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn final_avg_grad_norm(&self) -> Option<f64> {
        self.last().and_then(|r| r.avg_grad_norm)
    }

    pub fn best_grad_phi_norm(&self) -> Option<f64> {
        self.records
            .iter()
            .filter_map(|r| r.grad_phi_norm)
            .min_by(|a, b| a.total_cmp(b))
    }

    /// Writes the trace as CSV with the frozen header. Absent values are
    /// empty fields.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        w.write_record(CSV_HEADER.split(','))?;
        for r in &self.records {
            w.write_record([
                r.t.to_string(),
                field(r.grad_phi_norm),
                field(r.avg_grad_norm),
                field(r.alpha_t),
                field(r.alpha_prime_t),
                field(r.eta_x_t),
                field(r.eta_y_t),
                field(r.dist_y),
                field(r.sum_diff_sq),
                field(r.sum_lower_sq),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}
