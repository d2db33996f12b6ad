//! The five pipeline commands. Each validates its arguments, does the work
//! through the estimator crate, writes outputs atomically, and prints a
//! short human-readable summary. Everything is deterministic given the
//! input files, the flags, and the seed.

use std::path::PathBuf;

use clap::Args;

use fsir::link::{cv_select_k, fit_smoother, predict_smoother, prediction_error, CvScheme};
use fsir::rkhs::residual_trace;
use fsir::simgen::{simulate, LinkKind, SimConfig, SimModel};
use fsir::sir::{center, make_slices, predict_indices, sample_covariance, slice_stats, SliceStrategy};
use fsir::simgen::bm_eigenvalue;
use fsir::RankPolicy;

use crate::format::{
    cv_report_to_csv, fmt_real, load_dataset, load_prediction_input, predictions_to_csv,
    sidecar_path, series_to_csv, write_dataset, write_xi_sidecar, FitFile, Transform,
};
use crate::CliError;

/// Flags shared by every command that reads a dataset.
#[derive(Debug, Clone, Args)]
pub struct PolicyArgs {
    /// Relative eigenvalue threshold: eigenvalues below rel-tol * lambda_1
    /// count as zero
    #[arg(long = "rel-tol", default_value_t = 1e-10)]
    pub rel_tol: f64,
    /// Absolute eigenvalue floor
    #[arg(long = "abs-floor", default_value_t = 0.0)]
    pub abs_floor: f64,
}

impl PolicyArgs {
    pub fn policy(&self) -> Result<RankPolicy, CliError> {
        RankPolicy::new(self.rel_tol, self.abs_floor).map_err(CliError::from)
    }

    fn echo(&self) -> String {
        format!("--rel-tol {} --abs-floor {}", self.rel_tol, self.abs_floor)
    }
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Simulation design
    #[arg(long, value_parser = parse_model)]
    pub model: ModelChoice,
    /// Sample size
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Grid points J (fixed to 120 for example2)
    #[arg(long = "grid-points", default_value_t = 100)]
    pub grid_points: usize,
    /// Noise standard deviation
    #[arg(long = "noise-sd", default_value_t = 0.3)]
    pub noise_sd: f64,
    /// Dimension for the finite-dim design
    #[arg(long, default_value_t = 5)]
    pub dim: usize,
    /// Comma-separated direction for the finite-dim design (defaults to e_1)
    #[arg(long)]
    pub beta: Option<String>,
    /// Link for the finite-dim design: identity|exp|arctan
    #[arg(long, default_value = "identity")]
    pub link: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output dataset path; the true indices go to the `.xi.csv` sidecar
    #[arg(long)]
    pub out: PathBuf,
    /// Print the resolved configuration before running
    #[arg(long = "echo-config")]
    pub echo_config: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelChoice {
    Example1,
    Example2,
    FiniteDim,
    Null,
}

fn parse_model(s: &str) -> Result<ModelChoice, String> {
    match s {
        "example1" => Ok(ModelChoice::Example1),
        "example2" => Ok(ModelChoice::Example2),
        "finite-dim" => Ok(ModelChoice::FiniteDim),
        "null" => Ok(ModelChoice::Null),
        other => Err(format!(
            "unknown model '{other}' (expected example1|example2|finite-dim|null)"
        )),
    }
}

fn parse_link(s: &str) -> Result<LinkKind, CliError> {
    match s {
        "identity" => Ok(LinkKind::Identity),
        "exp" => Ok(LinkKind::Exp),
        "arctan" => Ok(LinkKind::Arctan),
        other => Err(CliError::Usage(format!(
            "unknown link '{other}' (expected identity|exp|arctan)"
        ))),
    }
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let model = match args.model {
        ModelChoice::Example1 => SimModel::Example1,
        ModelChoice::Example2 => SimModel::Example2,
        ModelChoice::FiniteDim => {
            let beta = match &args.beta {
                Some(list) => list
                    .split(',')
                    .map(|v| {
                        v.trim()
                            .parse::<f64>()
                            .map_err(|_| CliError::Usage(format!("bad beta entry '{v}'")))
                    })
                    .collect::<Result<Vec<f64>, CliError>>()?,
                None => {
                    let mut b = vec![0.0; args.dim];
                    if let Some(first) = b.first_mut() {
                        *first = 1.0;
                    }
                    b
                }
            };
            SimModel::FiniteDim {
                dim: args.dim,
                beta,
                link: parse_link(&args.link)?,
            }
        }
        ModelChoice::Null => SimModel::NullModel,
    };
    let cfg = SimConfig {
        n: args.n,
        grid_points: args.grid_points,
        noise_sd: args.noise_sd,
        seed: args.seed,
        model,
    };
    let echo = format!(
        "fsir simulate --model {} --n {} --grid-points {} --noise-sd {} --seed {} --out {}",
        match args.model {
            ModelChoice::Example1 => "example1",
            ModelChoice::Example2 => "example2",
            ModelChoice::FiniteDim => "finite-dim",
            ModelChoice::Null => "null",
        },
        cfg.n,
        cfg.grid_points,
        cfg.noise_sd,
        cfg.seed,
        args.out.display()
    );
    if args.echo_config {
        println!("{echo}");
    }
    let out = simulate(&cfg)?;
    write_dataset(&args.out, &out.dataset)?;
    let sidecar = sidecar_path(&args.out);
    write_xi_sidecar(&sidecar, &out.xi_true)?;
    println!(
        "simulated n = {}, J = {} (seed {}) -> {} and {}",
        out.dataset.n(),
        out.dataset.grid_len(),
        cfg.seed,
        args.out.display(),
        sidecar.display()
    );
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// Input dataset CSV
    #[arg(long)]
    pub data: PathBuf,
    /// Output fit file
    #[arg(long)]
    pub out: PathBuf,
    /// Number of slices S
    #[arg(long, default_value_t = 10)]
    pub slices: usize,
    /// Truncation rank k
    #[arg(long)]
    pub rank: usize,
    /// Number of directions p (default min(S - 1, k))
    #[arg(long)]
    pub dirs: Option<usize>,
    /// Response transform: none|logit10
    #[arg(long, default_value = "none")]
    pub transform: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub policy: PolicyArgs,
    #[arg(long = "echo-config")]
    pub echo_config: bool,
}

pub fn cmd_fit(args: &FitArgs) -> Result<(), CliError> {
    let transform: Transform = args.transform.parse()?;
    let policy = args.policy.policy()?;
    if args.echo_config {
        println!(
            "fsir fit --data {} --out {} --slices {} --rank {} --dirs {} --transform {} --seed {} {}",
            args.data.display(),
            args.out.display(),
            args.slices,
            args.rank,
            args.dirs.map(|p| p.to_string()).unwrap_or_else(|| "auto".into()),
            transform.name(),
            args.seed,
            args.policy.echo()
        );
    }
    let dataset = load_dataset(&args.data, transform)?;
    let p = args
        .dirs
        .unwrap_or_else(|| (args.slices.saturating_sub(1)).min(args.rank).max(1));
    let fit = fsir::sir::fit(&dataset, args.slices, args.rank, p, &policy)?;

    let diag = &fit.diagnostics;
    println!(
        "fit: n = {}, J = {}, S = {}, k = {}, p = {}",
        dataset.n(),
        dataset.grid_len(),
        fit.s,
        fit.k,
        fit.p
    );
    println!("covariance spectrum (leading eigenvalues, cumulative share):");
    for (i, (l, c)) in diag
        .covariance_eigenvalues
        .iter()
        .zip(&diag.variance_explained)
        .take(10)
        .enumerate()
    {
        println!("  {:>3}  {:>14.6}  {:.4}", i + 1, l, c);
    }
    println!(
        "directions (eigenvalues of the whitened slice moment): {}",
        fit.sir_eigenvalues
            .iter()
            .map(|v| format!("{v:.4}"))
            .collect::<Vec<_>>()
            .join(", ")
    );
    for w in &diag.warnings {
        println!("warning: {w}");
    }

    let file = FitFile::from_fit(&fit, &dataset, args.seed, transform);
    file.write(&args.out)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct CvArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Output CSV with one row per candidate rank
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub slices: usize,
    /// Candidate ranks: `a..b` (inclusive) or a comma list
    #[arg(long = "rank-grid")]
    pub rank_grid: String,
    /// Number of directions fed to the link smoother
    #[arg(long, default_value_t = 1)]
    pub dirs: usize,
    /// Fold scheme: loo | holdout:FRAC (default: loo when n <= 200)
    #[arg(long)]
    pub scheme: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "none")]
    pub transform: String,
    #[command(flatten)]
    pub policy: PolicyArgs,
    #[arg(long = "echo-config")]
    pub echo_config: bool,
}

pub fn parse_rank_grid(spec: &str) -> Result<Vec<usize>, CliError> {
    let bad = |s: &str| CliError::Usage(format!("bad rank grid '{s}' (expected a..b or k1,k2,...)"));
    if let Some((a, b)) = spec.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad(spec))?;
        let b: usize = b.trim().parse().map_err(|_| bad(spec))?;
        if a == 0 || b < a {
            return Err(bad(spec));
        }
        Ok((a..=b).collect())
    } else {
        spec.split(',')
            .map(|v| v.trim().parse::<usize>().map_err(|_| bad(spec)))
            .collect()
    }
}

pub fn parse_scheme(spec: &str) -> Result<CvScheme, CliError> {
    if spec == "loo" {
        return Ok(CvScheme::Loo);
    }
    if let Some(frac) = spec.strip_prefix("holdout:") {
        let f: f64 = frac
            .parse()
            .map_err(|_| CliError::Usage(format!("bad holdout fraction '{frac}'")))?;
        return Ok(CvScheme::Holdout { test_fraction: f });
    }
    Err(CliError::Usage(format!(
        "unknown scheme '{spec}' (expected loo or holdout:FRAC)"
    )))
}

pub fn cmd_cv(args: &CvArgs) -> Result<(), CliError> {
    let transform: Transform = args.transform.parse()?;
    let policy = args.policy.policy()?;
    let grid = parse_rank_grid(&args.rank_grid)?;
    let dataset = load_dataset(&args.data, transform)?;
    let scheme = match &args.scheme {
        Some(s) => parse_scheme(s)?,
        None => CvScheme::default_for(dataset.n()),
    };
    if args.echo_config {
        let scheme_str = match scheme {
            CvScheme::Loo => "loo".to_string(),
            CvScheme::Holdout { test_fraction } => format!("holdout:{test_fraction}"),
        };
        println!(
            "fsir cv --data {} --out {} --slices {} --rank-grid {} --dirs {} --scheme {} --transform {} --seed {} {}",
            args.data.display(),
            args.out.display(),
            args.slices,
            args.rank_grid,
            args.dirs,
            scheme_str,
            transform.name(),
            args.seed,
            args.policy.echo()
        );
    }
    let report = cv_select_k(
        &dataset,
        args.slices,
        args.dirs,
        &grid,
        scheme,
        args.seed,
        &policy,
    )?;
    for e in &report.entries {
        match (&e.cv, &e.note) {
            (Some(cv), _) => println!("  k = {:>3}  CV = {:.6}", e.k, cv),
            (None, Some(note)) => println!("  k = {:>3}  skipped: {note}", e.k),
            (None, None) => println!("  k = {:>3}  skipped", e.k),
        }
    }
    println!(
        "k* = {} ({})",
        report.k_star,
        if report.significant_minimum {
            "minimum exceeds twice the fold noise"
        } else {
            "no significant minimum; curve is flat within fold noise"
        }
    );
    crate::format::atomic_write(&args.out, &cv_report_to_csv(&report))?;
    println!("wrote {}", args.out.display());
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    /// Fit file produced by `fsir fit`
    #[arg(long)]
    pub fit: PathBuf,
    /// New curves; the y column may be left empty
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Transform for the incoming responses (defaults to the fit's)
    #[arg(long)]
    pub transform: Option<String>,
    #[arg(long = "echo-config")]
    pub echo_config: bool,
}

pub fn cmd_predict(args: &PredictArgs) -> Result<(), CliError> {
    let file = FitFile::read(&args.fit)?;
    let transform = match &args.transform {
        Some(t) => t.parse()?,
        None => file.transform,
    };
    if args.echo_config {
        println!(
            "fsir predict --fit {} --data {} --out {} --transform {}",
            args.fit.display(),
            args.data.display(),
            args.out.display(),
            transform.name()
        );
    }
    let input = load_prediction_input(&args.data, transform)?;
    if input.grid.len() != file.j {
        return Err(CliError::Data(format!(
            "prediction grid has {} points, fit expects {}",
            input.grid.len(),
            file.j
        )));
    }
    let fit = file.to_sir_fit();
    let xi_new = predict_indices(&fit, &input.x)?;
    let smoother = fit_smoother(&file.xi, &file.y)?;
    let (y_hat, warnings) = predict_smoother(&smoother, &xi_new)?;
    for w in &warnings {
        println!("warning: {w}");
    }
    crate::format::atomic_write(&args.out, &predictions_to_csv(&xi_new, &y_hat))?;
    println!("wrote {} ({} predictions)", args.out.display(), y_hat.len());
    if let Some(y) = &input.y {
        let rmse = prediction_error(&y_hat, y)?;
        println!("prediction error (rmse): {}", fmt_real(rmse));
    }
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Output CSV of plot-ready (series, x, y) rows
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub slices: usize,
    /// Largest cut for the truncation sweep (default min(J, 20))
    #[arg(long)]
    pub rank: Option<usize>,
    /// Also emit the eigenvalue-scaling table against the Brownian spectrum
    #[arg(long)]
    pub brownian: bool,
    #[arg(long, default_value = "none")]
    pub transform: String,
    #[command(flatten)]
    pub policy: PolicyArgs,
    #[arg(long = "echo-config")]
    pub echo_config: bool,
}

pub fn cmd_diagnose(args: &DiagnoseArgs) -> Result<(), CliError> {
    let transform: Transform = args.transform.parse()?;
    let policy = args.policy.policy()?;
    if args.echo_config {
        println!(
            "fsir diagnose --data {} --out {} --slices {} --rank {} --brownian {} --transform {} {}",
            args.data.display(),
            args.out.display(),
            args.slices,
            args.rank.map(|k| k.to_string()).unwrap_or_else(|| "auto".into()),
            args.brownian,
            transform.name(),
            args.policy.echo()
        );
    }
    let dataset = load_dataset(&args.data, transform)?;
    let j = dataset.grid_len();
    let k_max = args.rank.unwrap_or_else(|| j.min(20)).min(j).max(1);

    let (centered, _) = center(&dataset);
    let r_hat = sample_covariance(&centered)?;
    let slices = make_slices(centered.y(), args.slices, &SliceStrategy::EqualFrequency)?;
    let summary = slice_stats(&centered, &slices)?;
    let k_hat = summary.moment_matrix()?;
    let decomp = r_hat.eigendecomp()?;

    let mut rows: Vec<(String, f64, f64)> = Vec::new();
    for k in 1..=k_max {
        let v = residual_trace(&r_hat, &k_hat, k, &policy)?;
        rows.push(("residual_trace".into(), k as f64, v));
    }
    for m in 1..=k_max {
        if let Ok(gap) = decomp.eigengap(m) {
            rows.push(("eigengap_ratio".into(), m as f64, gap / j as f64));
        }
    }
    let total: f64 = decomp.eigenvalues().iter().map(|l| l.max(0.0)).sum();
    let mut acc = 0.0;
    for (i, l) in decomp.eigenvalues().iter().enumerate().take(k_max) {
        acc += l.max(0.0);
        rows.push((
            "cum_var_explained".into(),
            (i + 1) as f64,
            if total > 0.0 { acc / total } else { 0.0 },
        ));
    }
    if args.brownian {
        for (i, l) in decomp.eigenvalues().iter().enumerate().take(k_max) {
            rows.push(("eig_scaling_sample".into(), (i + 1) as f64, l / j as f64));
            rows.push((
                "eig_scaling_brownian".into(),
                (i + 1) as f64,
                bm_eigenvalue(i + 1),
            ));
        }
    }

    println!(
        "diagnostics on n = {}, J = {}: sweep to k = {k_max}{}",
        dataset.n(),
        j,
        if args.brownian { " (with Brownian scaling table)" } else { "" }
    );
    let rt1 = rows.iter().find(|r| r.0 == "residual_trace").map(|r| r.2);
    if let Some(v) = rt1 {
        println!("  residual trace at k = 1: {v:.6}");
    }
    crate::format::atomic_write(&args.out, &series_to_csv(&rows))?;
    println!("wrote {}", args.out.display());
    Ok(())
}
