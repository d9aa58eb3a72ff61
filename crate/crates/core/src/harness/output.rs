//! CSV serialization of experiment results.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::experiment::{Cell, HistogramBin, SummaryRow, TrialRecord};
use crate::error::{Error, Result};

pub const SUMMARY_HEADER: [&str; 16] = [
    "experiment",
    "detector",
    "M",
    "N",
    "snr_db",
    "rho",
    "sir_db",
    "pfa_target",
    "threshold",
    "trials",
    "pd",
    "pd_ci_lo",
    "pd_ci_hi",
    "pfa_emp",
    "pfa_ci_lo",
    "pfa_ci_hi",
];

pub const TRIAL_HEADER: [&str; 12] = [
    "experiment",
    "detector",
    "M",
    "N",
    "snr_db",
    "rho",
    "sir_db",
    "hypothesis",
    "trial",
    "statistic",
    "threshold",
    "decision",
];

pub const HISTOGRAM_HEADER: [&str; 4] = ["bin_lo", "bin_hi", "count", "chi2_pdf_at_midpoint"];

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn cell_fields(c: &Cell) -> [String; 5] {
    [
        c.m.to_string(),
        c.n.to_string(),
        c.snr_db.to_string(),
        c.rho.to_string(),
        opt(c.sir_db),
    ]
}

fn summary_fields(r: &SummaryRow) -> Vec<String> {
    let mut f = vec![r.experiment.clone(), r.detector.to_string()];
    f.extend(cell_fields(&r.cell));
    f.extend([
        r.pfa_target.to_string(),
        r.threshold.to_string(),
        r.trials.to_string(),
        opt(r.pd),
        opt(r.pd_ci.map(|c| c.0)),
        opt(r.pd_ci.map(|c| c.1)),
        r.pfa_emp.to_string(),
        r.pfa_ci.0.to_string(),
        r.pfa_ci.1.to_string(),
    ]);
    f
}

fn trial_fields(r: &TrialRecord) -> Vec<String> {
    let mut f = vec![r.experiment.clone(), r.detector.to_string()];
    f.extend(cell_fields(&r.cell));
    f.extend([
        r.hypothesis.as_str().to_string(),
        r.trial.to_string(),
        r.statistic.to_string(),
        r.threshold.to_string(),
        u8::from(r.decision).to_string(),
    ]);
    f
}

fn histogram_fields(b: &HistogramBin) -> Vec<String> {
    vec![
        b.bin_lo.to_string(),
        b.bin_hi.to_string(),
        b.count.to_string(),
        b.chi2_pdf_at_midpoint.to_string(),
    ]
}

fn write_rows<W: Write, T>(
    w: W,
    header: &[&str],
    rows: &[T],
    fields: fn(&T) -> Vec<String>,
) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header)?;
    for r in rows {
        out.write_record(fields(r))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_summary<W: Write>(w: W, rows: &[SummaryRow]) -> csv::Result<()> {
    write_rows(w, &SUMMARY_HEADER, rows, summary_fields)
}

pub fn write_trials<W: Write>(w: W, rows: &[TrialRecord]) -> csv::Result<()> {
    write_rows(w, &TRIAL_HEADER, rows, trial_fields)
}

pub fn write_histogram<W: Write>(w: W, bins: &[HistogramBin]) -> csv::Result<()> {
    write_rows(w, &HISTOGRAM_HEADER, bins, histogram_fields)
}

fn to_file(path: &Path, write: impl FnOnce(BufWriter<File>) -> csv::Result<()>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write(BufWriter::new(file)).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })
}

pub fn emit_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    to_file(path, |w| write_summary(w, rows))
}

pub fn emit_trials_csv(path: &Path, rows: &[TrialRecord]) -> Result<()> {
    to_file(path, |w| write_trials(w, rows))
}

pub fn emit_histogram_csv(path: &Path, bins: &[HistogramBin]) -> Result<()> {
    to_file(path, |w| write_histogram(w, bins))
}
