//! Sweep rows and their CSV form.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::format::fmt_sig12;

pub const CSV_HEADER: &str = "sweep_var,estimator,empirical_mse,theory_mse,seed";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub sweep_var: f64,
    pub estimator: String,
    pub empirical_mse: f64,
    pub theory_mse: Option<f64>,
    pub seed: u64,
}

impl SweepRow {
    pub fn new(
        sweep_var: f64,
        estimator: impl Into<String>,
        empirical_mse: f64,
        theory_mse: Option<f64>,
        seed: u64,
    ) -> Self {
        Self {
            sweep_var,
            estimator: estimator.into(),
            empirical_mse,
            theory_mse,
            seed,
        }
    }
}

/// Looks up the row for `estimator` at `sweep_var`.
pub fn find_row<'a>(rows: &'a [SweepRow], sweep_var: f64, estimator: &str) -> Option<&'a SweepRow> {
    rows.iter()
        .find(|r| r.sweep_var == sweep_var && r.estimator == estimator)
}

/// Sorts by sweep variable, then estimator name, then seed.
pub fn sort_rows(rows: &mut [SweepRow]) {
    rows.sort_by(|a, b| {
        a.sweep_var
            .total_cmp(&b.sweep_var)
            .then_with(|| a.estimator.cmp(&b.estimator))
            .then(a.seed.cmp(&b.seed))
    });
}

pub fn render_csv(rows: &[SweepRow]) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::NothingToWrite);
    }
    let mut sorted = rows.to_vec();
    sort_rows(&mut sorted);
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &sorted {
        if r.estimator.contains([',', '\n', '"']) {
            return Err(Error::invalid(format!(
                "estimator name `{}` is not CSV-safe",
                r.estimator
            )));
        }
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            fmt_sig12(r.sweep_var),
            r.estimator,
            fmt_sig12(r.empirical_mse),
            r.theory_mse.map(fmt_sig12).unwrap_or_default(),
            r.seed
        );
    }
    Ok(out)
}

/// Writes rows as CSV, creating parent directories as needed.
pub fn write_results(rows: &[SweepRow], path: &Path) -> Result<()> {
    let text = render_csv(rows)?;
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}
