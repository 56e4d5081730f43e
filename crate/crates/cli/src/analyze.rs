use crate::commands::{create, write_json};
use clap::{Args, Subcommand};
use focal_calib::analysis::{
    bound_check, confidence_raising_census, confidence_raising_scan, convexity_scan, default_line_gammas, focal_risk_minimizer,
    linear_fit_gamma_inv_t, loss_landscape_table, properness_scan, random_interior_truths, LogitGrid, MatchConfig,
    TSearch, DEFAULT_PERCENTILES,
};
use focal_calib::prob::ProbVector;
use focal_calib::{focal_calib_binary, CalibError, Result};
use serde::Serialize;
use serde_json::json;
use std::io::Write;
use std::path::PathBuf;

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(subcommand)]
    study: Study,
}

#[derive(Debug, Args)]
struct OutDir {
    /// Directory for CSV and JSON artifacts; the JSON summary is always printed.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MatchFlags {
    /// Gamma values (default: 0.5..5 step 0.5 for binary, 0.5..10 for simplices).
    #[arg(long, value_delimiter = ',')]
    gammas: Option<Vec<f64>>,
    #[arg(long, allow_hyphen_values = true)]
    logit_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    logit_max: Option<f64>,
    #[arg(long)]
    logit_step: Option<f64>,
    #[arg(long)]
    t_min: Option<f64>,
    #[arg(long)]
    t_max: Option<f64>,
    /// Coarse-to-fine temperature steps.
    #[arg(long, value_delimiter = ',')]
    t_steps: Option<Vec<f64>>,
}

impl MatchFlags {
    fn config(&self, dim: usize, max_points: Option<usize>) -> Result<MatchConfig> {
        let mut c = MatchConfig::default_for(dim);
        let lo = self.logit_min.unwrap_or(c.logits.lo);
        let hi = self.logit_max.unwrap_or(c.logits.hi);
        let step = self.logit_step.unwrap_or(c.logits.step);
        c.logits = LogitGrid::new(lo, hi, step)?;
        let d = TSearch::default();
        c.t_search = TSearch {
            t_min: self.t_min.unwrap_or(d.t_min),
            t_max: self.t_max.unwrap_or(d.t_max),
            steps: self.t_steps.clone().unwrap_or(d.steps),
        };
        if let Some(m) = max_points {
            c.max_points = m;
        }
        Ok(c)
    }
}

#[derive(Debug, Subcommand)]
enum Study {
    /// Minimax temperature per gamma for two classes, and the fitted line in (gamma, 1/T).
    BinaryFit {
        #[command(flatten)]
        grid: MatchFlags,
        #[command(flatten)]
        out: OutDir,
    },
    /// The same study on the simplex of `--dim` classes.
    SimplexFit {
        #[arg(long, default_value_t = 3)]
        dim: usize,
        /// Enumerated logit vectors allowed before the logit step is doubled.
        #[arg(long)]
        max_points: Option<usize>,
        #[command(flatten)]
        grid: MatchFlags,
        #[command(flatten)]
        out: OutDir,
    },
    /// Temperature envelopes of the binary focal map; fails if the sandwich breaks.
    Bounds {
        #[arg(long)]
        gamma: f64,
        #[arg(long, default_value_t = -20.0, allow_hyphen_values = true)]
        logit_min: f64,
        #[arg(long, default_value_t = 20.0, allow_hyphen_values = true)]
        logit_max: f64,
        #[arg(long, default_value_t = 0.01)]
        logit_step: f64,
        #[arg(long, default_value_t = 0.001)]
        t_step: f64,
        #[command(flatten)]
        out: OutDir,
    },
    /// Grid minimizer of the properized focal risk must sit at the truth.
    Properness {
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        /// Truth vectors, `;`-separated, each a comma list.
        #[arg(long, default_value = "0.55,0.30,0.15")]
        truths: String,
        /// Extra random truths per class count in {2, 3}.
        #[arg(long, default_value_t = 0)]
        random: usize,
        #[arg(long, default_value_t = 0.01)]
        coarse_step: f64,
        #[arg(long, default_value_t = 0.001)]
        fine_step: f64,
        #[arg(long, default_value_t = crate::DEFAULT_SEED)]
        seed: u64,
        #[command(flatten)]
        out: OutDir,
    },
    /// Dirichlet scan that the focal map never lowers the top probability,
    /// plus the focal-loss curvature check.
    Confidence {
        #[arg(long, value_delimiter = ',', default_value = "2,3,5,10")]
        dims: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "0.5,1,3,7")]
        gammas: Vec<f64>,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 0.001)]
        q_step: f64,
        #[arg(long, default_value_t = 1e-5)]
        rel_tol: f64,
        #[arg(long, default_value_t = crate::DEFAULT_SEED)]
        seed: u64,
        #[command(flatten)]
        out: OutDir,
    },
    /// Conditional risks of four losses over a prediction grid.
    Landscape {
        #[arg(long, value_delimiter = ',', default_value = "0.55,0.30,0.15")]
        p: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long, default_value_t = 0.01)]
        step: f64,
        #[arg(long, value_delimiter = ',')]
        percentiles: Option<Vec<f64>>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Binary focal risk minimizer and the truth recovered from it by the focal map.
    Minimizer {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        gamma: f64,
        #[command(flatten)]
        out: OutDir,
    },
}

fn parse_truths(text: &str) -> Result<Vec<ProbVector>> {
    text.split(';')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            let v = t
                .split(',')
                .map(|x| {
                    x.trim()
                        .parse::<f64>()
                        .map_err(|e| CalibError::Parameter(format!("truth entry {x:?}: {e}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            ProbVector::new(v)
        })
        .collect()
}

/// Prints the summary and, with `--out`, writes `<name>.json` and an optional CSV.
fn emit<T: Serialize>(
    out: &OutDir,
    name: &str,
    summary: &T,
    csv: Option<&dyn Fn(&mut dyn Write) -> Result<()>>,
) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    match writeln!(stdout, "{}", serde_json::to_string_pretty(summary)?) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => return Err(e.into()),
        _ => {}
    }
    if let Some(dir) = &out.out {
        write_json(&dir.join(format!("{name}.json")), summary)?;
        if let Some(write) = csv {
            let path = dir.join(format!("{name}.csv"));
            let mut w = create(&path)?;
            write(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

pub fn run(args: AnalyzeArgs) -> Result<()> {
    match args.study {
        Study::BinaryFit { grid, out } => {
            let config = grid.config(2, None)?;
            let gammas = grid.gammas.clone().unwrap_or_else(|| default_line_gammas(2));
            let fit = linear_fit_gamma_inv_t(2, &gammas, &config)?;
            let summary = json!({ "config": config, "gammas": gammas, "fit": fit });
            emit(&out, "binary_fit", &summary, Some(&|w: &mut dyn Write| fit.write_csv(w)))
        }
        Study::SimplexFit { dim, max_points, grid, out } => {
            let config = grid.config(dim, max_points)?;
            let gammas = grid.gammas.clone().unwrap_or_else(|| default_line_gammas(dim));
            let fit = linear_fit_gamma_inv_t(dim, &gammas, &config)?;
            let summary = json!({ "config": config, "gammas": gammas, "fit": fit });
            emit(&out, &format!("simplex_fit_{dim}"), &summary, Some(&|w: &mut dyn Write| fit.write_csv(w)))
        }
        Study::Bounds { gamma, logit_min, logit_max, logit_step, t_step, out } => {
            let grid = LogitGrid::new(logit_min, logit_max, logit_step)?;
            let result = bound_check(gamma, grid, t_step)?;
            emit(&out, "bounds", &result, Some(&|w: &mut dyn Write| result.write_csv(w)))
        }
        Study::Properness { gamma, truths, random, coarse_step, fine_step, seed, out } => {
            let mut all = parse_truths(&truths)?;
            if random > 0 {
                for n in [2, 3] {
                    all.extend(random_interior_truths(n, random, 0.05, seed)?);
                }
            }
            let report = properness_scan(&all, gamma, coarse_step, fine_step)?;
            let summary = json!({ "seed": seed, "random_per_n": random, "report": report });
            emit(&out, "properness", &summary, Some(&|w: &mut dyn Write| report.write_csv(w)))
        }
        Study::Confidence { dims, gammas, samples, q_step, rel_tol, seed, out } => {
            let confidence = confidence_raising_census(&dims, &gammas, samples, seed)?;
            let convexity = convexity_scan(&gammas, q_step, rel_tol)?;
            let summary = json!({ "confidence": confidence, "convexity": convexity });
            emit(&out, "confidence", &summary, Some(&|w: &mut dyn Write| confidence.write_csv(w)))?;
            // artifacts first, then the loud failure
            confidence_raising_scan(&dims, &gammas, samples, seed).map(|_| ())
        }
        Study::Landscape { p, gamma, step, percentiles, out } => {
            let p_true = ProbVector::new(p)?;
            let levels = percentiles.unwrap_or_else(|| DEFAULT_PERCENTILES.to_vec());
            let table = loss_landscape_table(&p_true, gamma, step, &levels)?;
            let summary = json!({
                "p_true": table.p_true,
                "gamma": table.gamma,
                "step": table.step,
                "grid_points": table.rows.len(),
                "levels": table.levels,
            });
            emit(&out, "landscape", &summary, Some(&|w: &mut dyn Write| table.write_csv(w)))
        }
        Study::Minimizer { p, gamma, out } => {
            let q_star = focal_risk_minimizer(p, gamma)?;
            let recovered = focal_calib_binary(q_star, gamma)?;
            let summary = json!({
                "p_true": p,
                "gamma": gamma,
                "minimizer": q_star,
                "recovered_p": recovered,
                "recovery_error": (recovered - p).abs(),
            });
            emit(&out, "minimizer", &summary, None)
        }
    }
}
