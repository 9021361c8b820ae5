//! Command-line front end for the OECL laboratory.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 numerical
//! failure (training divergence, quadrature non-convergence),
//! 3 verification verdict failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use oecl::data::{load_dataset, Origin, TransformSpec};
use oecl::encoder::{load_params, save_params};
use oecl::harness::{
    emit_metrics, load_config, parse_transform, run_alpha_sweep, run_diminishing, run_fewshot,
    train, OeSetting,
};
use oecl::scoring::{evaluate, ScoreKind};
use oecl::theory::{
    lemma1_f, mu_monotonicity_ok, verify_lemma1, verify_theorem1, GaussianSpec, Verdict,
};
use oecl::{Error, Result};

const EXIT_VERIFICATION: u8 = 3;

#[derive(Parser)]
#[command(
    name = "oecl",
    about = "Outlier-exposure contrastive learning laboratory for OOD detection"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train an encoder and write checkpoint + metrics CSV
    Train {
        /// Experiment configuration file (key = value lines)
        #[arg(long)]
        config: PathBuf,
        /// Output directory for checkpoint.bin and metrics.csv
        #[arg(long)]
        out: PathBuf,
        /// Override the configured experiment seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a dataset with a trained checkpoint and report AUROC
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset CSV (see the dataset format in the library docs)
        #[arg(long)]
        data: PathBuf,
        /// Score function: s_l2, s_mu, or s_l2_ens
        #[arg(long)]
        score: String,
        /// Augmentations per sample for the ensemble scores
        #[arg(long, default_value_t = 32)]
        n_aug: usize,
        /// Comma-separated augmentation list for the ensemble scores
        #[arg(long, default_value = "gaussian-noise:0.25")]
        aug: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Check the expected-cosine bounds on a grid of Gaussians
    VerifyTheorem {
        /// Grid CSV with header mu,sigma,sigma_v_sq,dim
        #[arg(long)]
        grid: PathBuf,
        #[arg(long, default_value_t = 1_000_000)]
        n_samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Check that f(y) is non-increasing and convex on a y-grid
    VerifyLemma {
        #[arg(long)]
        mu: f64,
        #[arg(long)]
        sigma: f64,
        /// Comma-separated ascending y values
        #[arg(long, default_value = "0,0.25,1,4,16,64")]
        y_grid: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train weighted alignment/uniformity objectives over a weight list
    SweepAlpha {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated uniformity weights in [0,1]
        #[arg(long)]
        weights: String,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// OE gain vs training-set fraction, near and far OE
    Diminish {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated fractions in (0,1]
        #[arg(long)]
        fractions: String,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Few-shot OE: train with only k outlier samples
    Fewshot {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated k values (0 = no OE)
        #[arg(long)]
        k: String,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad {what} value '{p}'")))
        })
        .collect()
}

fn load_with_seed(path: &PathBuf, seed: Option<u64>) -> Result<oecl::harness::ExperimentConfig> {
    let mut cfg = load_config(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
        // derive fresh generator seeds so --seed changes the data too
        cfg.data.seed = oecl::rng::mix(s, 0xda7a);
        cfg.anomaly.seed = oecl::rng::mix(s, 0xa07a);
    }
    Ok(cfg)
}

fn cmd_train(config: PathBuf, out: PathBuf, seed: Option<u64>) -> Result<u8> {
    let cfg = load_with_seed(&config, seed)?;
    std::fs::create_dir_all(&out)?;
    let (params, log) = train(&cfg)?;
    save_params(&params, &out.join("checkpoint.bin"))?;
    emit_metrics(&log, &out.join("metrics.csv"))?;
    if let Some(last) = log.last() {
        println!(
            "trained {} epochs: auroc_s_mu={:.4} auroc_s_l2={:.4} auroc_s_l2_ens={:.4}",
            cfg.epochs, last.auroc_s_mu, last.auroc_s_l2, last.auroc_s_l2_ens
        );
    }
    Ok(0)
}

fn cmd_eval(
    checkpoint: PathBuf,
    data: PathBuf,
    score: String,
    n_aug: usize,
    aug: String,
    seed: u64,
) -> Result<u8> {
    let kind: ScoreKind = score.parse().map_err(Error::Config)?;
    let params = load_params(&checkpoint)?;
    let (_, samples) = load_dataset(&data)?;
    let transforms: Vec<TransformSpec> = aug
        .split(',')
        .map(|p| parse_transform(p.trim()))
        .collect::<Result<_>>()?;
    let (normal, anomalous): (Vec<_>, Vec<_>) = samples
        .into_iter()
        .partition(|s| s.origin == Origin::Normal);
    if normal.is_empty() || anomalous.is_empty() {
        return Err(Error::Contract(
            "dataset must contain both normal and non-normal samples".into(),
        ));
    }
    let (auroc, rows) = evaluate(&params, &normal, &anomalous, kind, &transforms, n_aug, seed)?;
    println!("# auroc {auroc:.16e}");
    println!("sample_id,origin,score");
    for r in rows {
        println!("{},{},{:.16e}", r.sample_id, r.origin, r.score);
    }
    Ok(0)
}

fn cmd_verify_theorem(grid: PathBuf, n_samples: usize, seed: u64) -> Result<u8> {
    let text = std::fs::read_to_string(&grid)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "mu,sigma,sigma_v_sq,dim" => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: "grid file must start with header mu,sigma,sigma_v_sq,dim".into(),
            });
        }
    }
    let mut specs = Vec::new();
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 4 {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("expected 4 columns, got {}", cells.len()),
            });
        }
        let f = |j: usize| -> Result<f64> {
            cells[j].trim().parse().map_err(|_| Error::Parse {
                line: i + 1,
                msg: format!("bad number '{}'", cells[j]),
            })
        };
        specs.push(GaussianSpec::isotropic(f(0)?, f(1)?, f(2)?, f(3)? as usize)?);
    }
    let reports = verify_theorem1(&specs, n_samples, seed)?;
    println!("mu,sigma,sigma_v_sq,dim,estimate,stderr,lower,epsilon_star,upper,verdict");
    for r in &reports {
        println!(
            "{:.16e},{:.16e},{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            r.spec.mu,
            r.spec.sigma,
            r.spec.sigma_v_sq,
            r.spec.dim,
            r.estimate,
            r.stderr,
            r.lower,
            r.epsilon_star,
            r.upper,
            r.verdict
        );
    }
    let bounds_ok = reports.iter().all(|r| r.verdict == Verdict::BoundsHold);
    let mono_ok = mu_monotonicity_ok(&reports);
    if !bounds_ok || !mono_ok {
        eprintln!(
            "verification failed: bounds {} / mu-monotonicity {}",
            if bounds_ok { "ok" } else { "violated" },
            if mono_ok { "ok" } else { "violated" }
        );
        return Ok(EXIT_VERIFICATION);
    }
    Ok(0)
}

fn cmd_verify_lemma(mu: f64, sigma: f64, y_grid: String, _seed: u64) -> Result<u8> {
    let grid: Vec<f64> = parse_list(&y_grid, "y-grid")?;
    let report = verify_lemma1(mu, sigma, &grid)?;
    println!("y,f");
    for (y, v) in report.y_grid.iter().zip(&report.values) {
        println!("{y:.16e},{v:.16e}");
    }
    println!(
        "# non_increasing={} convex={} f0_closed_form={:.16e}",
        report.non_increasing,
        report.convex,
        lemma1_f(0.0, mu.max(0.0), sigma)?
    );
    if !report.passed() {
        eprintln!("verification failed: f(y) is not non-increasing and convex on the grid");
        return Ok(EXIT_VERIFICATION);
    }
    Ok(0)
}

fn cmd_sweep(config: PathBuf, weights: String, seed: Option<u64>) -> Result<u8> {
    let cfg = load_with_seed(&config, seed)?;
    let weights: Vec<f64> = parse_list(&weights, "weight")?;
    let rows = run_alpha_sweep(&cfg, &weights)?;
    println!("weight,exp_uniform,auroc");
    for r in rows {
        println!("{:.16e},{:.16e},{:.16e}", r.weight, r.exp_uniform, r.auroc);
    }
    Ok(0)
}

fn cmd_diminish(config: PathBuf, fractions: String, seed: Option<u64>) -> Result<u8> {
    let cfg = load_with_seed(&config, seed)?;
    let fractions: Vec<f64> = parse_list(&fractions, "fraction")?;
    let rows = run_diminishing(&cfg, &fractions, &[OeSetting::Near, OeSetting::Far])?;
    println!("fraction,oe_kind,auroc,auroc_baseline,gain");
    for r in rows {
        println!(
            "{:.16e},{},{:.16e},{:.16e},{:.16e}",
            r.fraction, r.oe_kind, r.auroc, r.auroc_baseline, r.gain
        );
    }
    Ok(0)
}

fn cmd_fewshot(config: PathBuf, k: String, seed: Option<u64>) -> Result<u8> {
    let cfg = load_with_seed(&config, seed)?;
    let k_values: Vec<usize> = parse_list(&k, "k")?;
    let rows = run_fewshot(&cfg, &k_values)?;
    println!("k,auroc");
    for r in rows {
        println!("{},{:.16e}", r.k, r.auroc);
    }
    Ok(0)
}

fn run(cli: Cli) -> Result<u8> {
    match cli.cmd {
        Cmd::Train { config, out, seed } => cmd_train(config, out, seed),
        Cmd::Eval { checkpoint, data, score, n_aug, aug, seed } => {
            cmd_eval(checkpoint, data, score, n_aug, aug, seed)
        }
        Cmd::VerifyTheorem { grid, n_samples, seed } => cmd_verify_theorem(grid, n_samples, seed),
        Cmd::VerifyLemma { mu, sigma, y_grid, seed } => cmd_verify_lemma(mu, sigma, y_grid, seed),
        Cmd::SweepAlpha { config, weights, seed } => cmd_sweep(config, weights, seed),
        Cmd::Diminish { config, fractions, seed } => cmd_diminish(config, fractions, seed),
        Cmd::Fewshot { config, k, seed } => cmd_fewshot(config, k, seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Numerical(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
