//! Per-trial CSV rows.

use std::io::Write;

use anyhow::Result;
use serde::Serialize;

pub const COLUMNS: [&str; 17] = [
    "experiment",
    "trial",
    "d",
    "q",
    "k",
    "epsilon",
    "true_value",
    "estimate",
    "abs_error",
    "s",
    "m",
    "s_a",
    "s_b",
    "copies_used",
    "qubit_equivalents",
    "classical_bits",
    "seed",
];

/// One trial. Fields that do not apply to an experiment are `None` and
/// written as empty cells.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    /// `<experiment>:<grid index>`.
    pub experiment: String,
    pub grid: usize,
    pub trial: usize,
    pub d: usize,
    pub q: Option<usize>,
    pub k: usize,
    pub epsilon: f64,
    pub true_value: f64,
    pub estimate: f64,
    pub abs_error: f64,
    pub s: Option<usize>,
    pub m: Option<usize>,
    pub s_a: Option<usize>,
    pub s_b: Option<usize>,
    pub copies_used: u64,
    pub qubit_equivalents: Option<f64>,
    pub classical_bits: Option<u64>,
    pub seed: u64,
}

/// 17 significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl TrialRecord {
    pub fn row(&self) -> [String; 17] {
        [
            self.experiment.clone(),
            self.trial.to_string(),
            self.d.to_string(),
            opt(self.q),
            self.k.to_string(),
            fmt_float(self.epsilon),
            fmt_float(self.true_value),
            fmt_float(self.estimate),
            fmt_float(self.abs_error),
            opt(self.s),
            opt(self.m),
            opt(self.s_a),
            opt(self.s_b),
            self.copies_used.to_string(),
            self.qubit_equivalents.map(fmt_float).unwrap_or_default(),
            opt(self.classical_bits),
            self.seed.to_string(),
        ]
    }
}

/// Write a `# generated` timestamp line, the header and the rows sorted by
/// `(grid, trial)`.
pub fn write_csv<W: Write>(mut out: W, records: &[TrialRecord], timestamp: u64) -> Result<()> {
    writeln!(out, "# generated unix={timestamp}")?;
    let mut sorted: Vec<&TrialRecord> = records.iter().collect();
    sorted.sort_by_key(|r| (r.grid, r.trial));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    for r in sorted {
        w.write_record(r.row())?;
    }
    w.flush()?;
    Ok(())
}
