use std::fmt::Write as _;
use std::io::Write;

use super::{MetricsReport, Mode, Outcome};
use crate::error::Result;

pub const CSV_HEADER: [&str; 5] = ["subset", "mode", "mape", "rmse", "entries"];

/// Text used for the metric columns when nothing survived the filter.
const EMPTY: &str = "NA";

/// One row per report and mode. MAPE is written as a fraction.
pub fn write_csv<W: Write>(reports: &[MetricsReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in reports {
        for mode in [Mode::Od, Mode::Origin] {
            let (mape, rmse, entries) = match r.outcome(mode) {
                Outcome::Scores(s) => (format!("{:.10}", s.mape), format!("{:.10}", s.rmse), s.entries),
                Outcome::Empty => (EMPTY.to_string(), EMPTY.to_string(), 0),
            };
            w.write_record([r.subset.as_str(), mode.as_str(), &mape, &rmse, &entries.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn cell(o: Outcome) -> (String, String) {
    match o {
        Outcome::Scores(s) => (format!("{:.2}%", 100.0 * s.mape), format!("{:.4}", s.rmse)),
        Outcome::Empty => ("n/a".into(), "n/a".into()),
    }
}

/// Fixed-width table for terminals.
pub fn render_table(reports: &[MetricsReport]) -> String {
    let width = reports.iter().map(|r| r.subset.len()).max().unwrap_or(0).max(6);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<width$}  {:>9}  {:>10}  {:>10}  {:>10}  {:>10}",
        "subset", "intervals", "OD-MAPE", "OD-RMSE", "O-MAPE", "O-RMSE"
    );
    for r in reports {
        let (om, or) = cell(r.od);
        let (gm, gr) = cell(r.origin);
        let _ = writeln!(
            s,
            "{:<width$}  {:>9}  {:>10}  {:>10}  {:>10}  {:>10}",
            r.subset, r.intervals, om, or, gm, gr
        );
    }
    s.push_str("(MAPE and RMSE pooled over entries with ground truth >= threshold)\n");
    s
}
