use clap::{Args, ValueEnum};
use focal_calib::data::{read_probs_csv, write_probs_csv};
use focal_calib::fitting::default_probe_gammas;
use focal_calib::metrics::DEFAULT_BINS;
use focal_calib::{
    apply_calibrator, ece_equal_mass, error_rate, fit_focal_temperature, fit_focal_temperature_line, fit_temperature,
    ingest_csv, nll, reliability_table, CalibError, CalibratorParams, Criterion, FitResult, GridSpec, PredictionBatch,
    Result,
};
use serde::Serialize;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Method {
    /// Temperature scaling only.
    Ts,
    /// Full (gamma, T) grid.
    Fts,
    /// Two probe sweeps, then candidates along the fitted line.
    FtsLine,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CriterionArg {
    Ece,
    Nll,
}

impl From<CriterionArg> for Criterion {
    fn from(c: CriterionArg) -> Self {
        match c {
            CriterionArg::Ece => Criterion::Ece,
            CriterionArg::Nll => Criterion::Nll,
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Validation logits CSV (logit_0,...,logit_{n-1},label).
    #[arg(long)]
    val: PathBuf,
    #[arg(long, value_enum, default_value = "fts")]
    method: Method,
    #[arg(long, value_enum, default_value = "ece")]
    criterion: CriterionArg,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    /// Comma-separated gamma grid.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true,
          default_value = "-0.5,-0.25,0.05,0.25,0.37,0.5,0.75,1,5")]
    gammas: Vec<f64>,
    #[arg(long, default_value_t = 0.01)]
    t_min: f64,
    #[arg(long, default_value_t = 5.0)]
    t_max: f64,
    #[arg(long, default_value_t = 0.01)]
    t_step: f64,
    /// Probe gammas for fts-line (default: smallest and largest nonzero grid gamma).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, num_args = 2)]
    probes: Option<Vec<f64>>,
    /// Output params JSON.
    #[arg(long)]
    out: PathBuf,
    /// Accepted for a uniform interface; fitting is deterministic.
    #[arg(long, default_value_t = crate::DEFAULT_SEED)]
    seed: u64,
}

#[derive(Debug, Args)]
pub struct ApplyArgs {
    /// Params JSON written by `fit`.
    #[arg(long)]
    params: PathBuf,
    /// Logits CSV.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output CSV (prob_0,...,prob_{n-1},label).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Logits CSV, or a probabilities CSV written by `apply`.
    #[arg(long = "in")]
    input: PathBuf,
    /// Params JSON; without it logits are evaluated through plain softmax.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    /// Report JSON; the reliability table goes next to it with a `.reliability.csv` suffix.
    #[arg(long)]
    report: PathBuf,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path).map_err(|e| CalibError::Io(format!("{}: {e}", path.display())))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(
        File::create(path).map_err(|e| CalibError::Io(format!("{}: {e}", path.display())))?,
    ))
}

fn read_params(path: &Path) -> Result<CalibratorParams> {
    let text = fs::read_to_string(path).map_err(|e| CalibError::Io(format!("{}: {e}", path.display())))?;
    let fit: serde_json::Value = serde_json::from_str(&text)?;
    let params: CalibratorParams = serde_json::from_value(fit)?;
    CalibratorParams::new(params.family, params.gamma_ev, params.temperature)
        .map_err(|e| CalibError::Ingestion(format!("{}: {e}", path.display())))
}

pub fn fit(args: FitArgs) -> Result<()> {
    let data = ingest_csv(&args.val)?;
    let grid = GridSpec {
        gammas: args.gammas.clone(),
        t_min: args.t_min,
        t_max: args.t_max,
        t_step: args.t_step,
        criterion: args.criterion.into(),
        bins: args.bins,
    };
    let result: FitResult = match args.method {
        Method::Ts => fit_temperature(&data, &grid)?,
        Method::Fts => fit_focal_temperature(&data, &grid)?,
        Method::FtsLine => {
            let probes = match &args.probes {
                Some(p) => [p[0], p[1]],
                None => default_probe_gammas(&grid)?,
            };
            fit_focal_temperature_line(&data, &grid, probes)?
        }
    };
    write_json(&args.out, &result)?;
    println!(
        "family={} gamma_ev={} temperature={} {}={} candidates={}",
        result.best.family,
        result.best.gamma_ev,
        result.best.temperature.value(),
        result.criterion,
        result.criterion_value,
        result.trace.len()
    );
    Ok(())
}

pub fn apply(args: ApplyArgs) -> Result<()> {
    let params = read_params(&args.params)?;
    let data = ingest_csv(&args.input)?;
    let batch = apply_calibrator(&data, &params)?;
    let mut w = create(&args.out)?;
    write_probs_csv(&mut w, batch.probs(), batch.labels())?;
    w.flush()?;
    println!("wrote {} rows to {}", batch.len(), args.out.display());
    Ok(())
}

fn is_probability_file(path: &Path) -> Result<bool> {
    let file = File::open(path).map_err(|e| CalibError::Io(format!("{}: {e}", path.display())))?;
    let mut first = String::new();
    BufReader::new(file).read_line(&mut first)?;
    Ok(first.trim_start().starts_with("prob_"))
}

#[derive(Debug, Serialize)]
struct EvalReport {
    input: String,
    n: usize,
    rows: usize,
    accuracy: f64,
    error_rate: f64,
    nll: f64,
    ece: f64,
    bins: usize,
    params_used: Option<CalibratorParams>,
    reliability_csv: String,
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let (batch, params_used) = if is_probability_file(&args.input)? {
        if args.params.is_some() {
            return Err(CalibError::Parameter(
                "--params applies to logits files; this input already holds probabilities".into(),
            ));
        }
        let file = File::open(&args.input)?;
        let (probs, labels) = read_probs_csv(file)?;
        (PredictionBatch::new(probs, labels)?, None)
    } else {
        let data = ingest_csv(&args.input)?;
        let params = match &args.params {
            Some(p) => read_params(p)?,
            None => CalibratorParams::identity(),
        };
        let used = args.params.as_ref().map(|_| params);
        (apply_calibrator(&data, &params)?, used)
    };
    let err = error_rate(&batch)?;
    let table = reliability_table(&batch, args.bins)?;
    let reliability = args.report.with_extension("reliability.csv");
    let mut w = create(&reliability)?;
    table.write_csv(&mut w)?;
    w.flush()?;
    let report = EvalReport {
        input: args.input.display().to_string(),
        n: batch.n_classes(),
        rows: batch.len(),
        accuracy: 1.0 - err,
        error_rate: err,
        nll: nll(&batch)?,
        ece: ece_equal_mass(&batch, args.bins)?,
        bins: args.bins,
        params_used,
        reliability_csv: reliability.display().to_string(),
    };
    write_json(&args.report, &report)?;
    println!(
        "rows={} accuracy={} nll={} ece={}",
        report.rows, report.accuracy, report.nll, report.ece
    );
    Ok(())
}
