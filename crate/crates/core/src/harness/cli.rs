//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use super::config::{ExperimentConfig, ExperimentKind};
use super::experiment::{cells, resolve_workers, run_experiment, with_workers, ExperimentOutput};
use super::output::{
    emit_histogram_csv, emit_summary_csv, emit_trials_csv, write_histogram, write_summary,
};
use crate::cyclostat::MsdfConfig;
use crate::detectors::{calibrate_thresholds, ev_css_threshold};
use crate::error::{Error, Result};
use crate::sigmodel::{
    best_lag, cyclic_features_bpsk, lag_profile, CyclicFeature, SignalSpec, DEFAULT_PROBE_LEN,
};

#[derive(Debug, Parser)]
#[command(
    name = "cyclosense",
    version,
    about = "Monte Carlo simulator for multi-antenna cyclostationary spectrum sensing",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Empirical P_fa of EV-CSS at the analytic threshold.
    PfaVerify(RunArgs),
    /// Histogram of the H0 EV-CSS statistic against the χ² density.
    Hist(RunArgs),
    /// ROC curves by sweeping thresholds over recorded statistics.
    Roc(RunArgs),
    /// P_d against SNR at fixed P_fa.
    PdVsSnr(RunArgs),
    /// P_d against frame length, white or correlated noise.
    PdVsN(RunArgs),
    /// P_d with a co-channel BPSK interferer over an SIR grid.
    Interference(RunArgs),
    /// P_d against the number of antennas.
    PdVsM(RunArgs),
    /// Empirical thresholds for each detector on H0 frames.
    Calibrate(RunArgs),
    /// Best lag of each BPSK cyclic feature.
    FeatureScan(ScanArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Flat `key = value` config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo trials per hypothesis and cell.
    #[arg(long)]
    trials: Option<usize>,
    /// Main CSV output (the histogram for `hist`); stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-trial records.
    #[arg(long)]
    trials_out: Option<PathBuf>,
    /// Summary table for `hist`.
    #[arg(long)]
    summary_out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr_db: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    m: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    rho: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    sir_db: Vec<f64>,
    #[arg(long)]
    pfa: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    detectors: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    noise_variance: Vec<f64>,
    #[arg(long)]
    calibration_trials: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct ScanArgs {
    #[arg(long, default_value_t = 16)]
    max_lag: usize,
    #[arg(long, default_value_t = DEFAULT_PROBE_LEN)]
    probe_len: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Runs the CLI; returns the process exit code (0 success, 2 usage or
/// configuration error, 1 runtime failure).
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                2
            } else {
                1
            }
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    let kind = match &command {
        Command::PfaVerify(_) => ExperimentKind::PfaVerify,
        Command::Hist(_) => ExperimentKind::StatisticHist,
        Command::Roc(_) => ExperimentKind::Roc,
        Command::PdVsSnr(_) => ExperimentKind::PdVsSnr,
        Command::PdVsN(_) => ExperimentKind::PdVsN,
        Command::Interference(_) => ExperimentKind::Interference,
        Command::PdVsM(_) => ExperimentKind::PdVsM,
        Command::Calibrate(args) => return calibrate(args),
        Command::FeatureScan(args) => return feature_scan(args),
    };
    let args = match command {
        Command::PfaVerify(a)
        | Command::Hist(a)
        | Command::Roc(a)
        | Command::PdVsSnr(a)
        | Command::PdVsN(a)
        | Command::Interference(a)
        | Command::PdVsM(a) => a,
        Command::Calibrate(_) | Command::FeatureScan(_) => unreachable!(),
    };
    let config = build_config(kind, &args)?;
    let output = run_experiment(&config)?;
    report(&output);
    if kind == ExperimentKind::StatisticHist {
        write_main(
            args.out.as_deref(),
            |w| write_histogram(w, &output.histogram),
            |p| emit_histogram_csv(p, &output.histogram),
        )?;
        if let Some(p) = &args.summary_out {
            emit_summary_csv(p, &output.summary)?;
        }
    } else {
        write_main(
            args.out.as_deref(),
            |w| write_summary(w, &output.summary),
            |p| emit_summary_csv(p, &output.summary),
        )?;
    }
    if let Some(p) = &args.trials_out {
        emit_trials_csv(p, &output.records)?;
    }
    Ok(())
}

fn write_main(
    path: Option<&Path>,
    to_stdout: impl FnOnce(&mut dyn Write) -> csv::Result<()>,
    to_file: impl FnOnce(&Path) -> Result<()>,
) -> Result<()> {
    match path {
        Some(p) => to_file(p),
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            to_stdout(&mut lock).map_err(stdout_error)
        }
    }
}

fn stdout_error(source: csv::Error) -> Error {
    Error::Csv {
        path: PathBuf::from("<stdout>"),
        source,
    }
}

fn report(output: &ExperimentOutput) {
    for w in &output.warnings {
        eprintln!("warning: {w}");
    }
}

/// Defaults for `kind`, then the config file, then flag overrides.
fn build_config(kind: ExperimentKind, args: &RunArgs) -> Result<ExperimentConfig> {
    let mut c = ExperimentConfig::defaults(kind);
    if let Some(path) = &args.config {
        c.apply_file(path)?;
    }
    apply_flags(&mut c, args)?;
    c.validate()?;
    Ok(c)
}

fn apply_flags(c: &mut ExperimentConfig, args: &RunArgs) -> Result<()> {
    fn grid<T: Clone>(target: &mut Vec<T>, flag: &[T]) {
        if !flag.is_empty() {
            *target = flag.to_vec();
        }
    }
    grid(&mut c.snr_db, &args.snr_db);
    grid(&mut c.n, &args.n);
    grid(&mut c.m, &args.m);
    grid(&mut c.rho, &args.rho);
    grid(&mut c.sir_db, &args.sir_db);
    grid(&mut c.noise_variance, &args.noise_variance);
    if !args.detectors.is_empty() {
        c.detectors = args
            .detectors
            .iter()
            .map(|d| d.parse())
            .collect::<Result<_>>()?;
    }
    if let Some(s) = args.seed {
        c.master_seed = s;
    }
    if let Some(t) = args.trials {
        c.n_trials = t;
    }
    if let Some(p) = args.pfa {
        c.pfa = p;
    }
    if let Some(t) = args.calibration_trials {
        c.calibration_trials = t;
    }
    if args.workers.is_some() {
        c.workers = args.workers;
    }
    Ok(())
}

/// Per cell and detector: the empirical threshold (EV-CSS included, as a
/// diagnostic against its analytic value).
fn calibrate(args: &RunArgs) -> Result<()> {
    let mut c = ExperimentConfig::defaults(ExperimentKind::PdVsSnr);
    c.snr_db = vec![-14.0];
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if let Some(kind) = declared_kind(&text)? {
            c = ExperimentConfig::defaults(kind);
        }
        c.apply_text(&text)?;
    }
    apply_flags(&mut c, args)?;
    if let Some(t) = args.trials {
        c.calibration_trials = t;
        c.n_trials = c.n_trials.max(100);
    }
    if (c.calibration_trials as f64) < 10.0 / c.pfa {
        return Err(Error::Config(format!(
            "calibration needs at least {} trials at pfa = {}",
            (10.0 / c.pfa).ceil(),
            c.pfa
        )));
    }
    c.validate()?;

    let soi = SignalSpec::reference_soi();
    let feature = CyclicFeature::doubled_carrier(&soi);
    let msdf = MsdfConfig::for_sample_rate(soi.sample_rate_hz);
    let workers = resolve_workers(c.workers)?;
    let mut rows = Vec::new();
    for cell in cells(&c) {
        let scenario = cell.scenario();
        let cal = with_workers(workers, || {
            calibrate_thresholds(
                &c.detectors,
                &scenario,
                &feature,
                &msdf,
                c.pfa,
                c.calibration_trials,
                c.master_seed,
            )
        })??;
        for (d, thr) in c.detectors.iter().zip(&cal.thresholds) {
            let analytic = if d.is_analytic() {
                ev_css_threshold(cell.m, feature.conjugate, c.pfa)?.to_string()
            } else {
                String::new()
            };
            rows.push(vec![
                d.to_string(),
                cell.m.to_string(),
                cell.n.to_string(),
                cell.snr_db.to_string(),
                cell.rho.to_string(),
                cell.sir_db.map(|s| s.to_string()).unwrap_or_default(),
                cell.noise_variance.to_string(),
                c.pfa.to_string(),
                thr.to_string(),
                analytic,
                cal.trials.to_string(),
            ]);
        }
    }
    let header = [
        "detector",
        "M",
        "N",
        "snr_db",
        "rho",
        "sir_db",
        "noise_variance",
        "pfa_target",
        "threshold",
        "analytic_threshold",
        "trials",
    ];
    write_table(args.out.as_deref(), &header, &rows)
}

fn feature_scan(args: &ScanArgs) -> Result<()> {
    let spec = SignalSpec::reference_soi();
    let mut rows = Vec::new();
    for f in cyclic_features_bpsk(&spec) {
        let profile = lag_profile(&spec, &f, args.max_lag, args.probe_len)?;
        let lag = best_lag(&spec, &f, args.max_lag, args.probe_len)?;
        rows.push(vec![
            f.alpha_hz.to_string(),
            u8::from(f.conjugate).to_string(),
            lag.to_string(),
            profile[lag].to_string(),
        ]);
    }
    write_table(
        args.out.as_deref(),
        &["alpha_hz", "conjugate", "best_lag", "magnitude"],
        &rows,
    )
}

fn write_table(path: Option<&Path>, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let write = |w: &mut dyn Write| -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(header)?;
        for r in rows {
            out.write_record(r)?;
        }
        out.flush()?;
        Ok(())
    };
    match path {
        Some(p) => {
            let mut file = std::fs::File::create(p).map_err(|e| Error::io(p, e))?;
            write(&mut file).map_err(|source| Error::Csv {
                path: p.to_path_buf(),
                source,
            })
        }
        None => write(&mut std::io::stdout().lock()).map_err(stdout_error),
    }
}

fn declared_kind(text: &str) -> Result<Option<ExperimentKind>> {
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("");
        if let Some((k, v)) = line.split_once('=') {
            if k.trim() == "experiment_kind" {
                return v.parse().map(Some);
            }
        }
    }
    Ok(None)
}
