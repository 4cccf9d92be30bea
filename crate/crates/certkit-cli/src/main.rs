//! Command-line interface to the certification toolkit.
//!
//! Subcommands: `divergence`, `certify`, `bound`, `cover`, `evaluate`,
//! `curve`, `sweep`, `attack`. Global flags `--seed`, `--samples`, `--out`,
//! and `--config` (a JSON file mirroring the flags; explicit flags win).
//! Exits 0 on success, 2 on validation errors, 3 when a request falls
//! outside the implemented capabilities.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;

use certkit::bounds::{build_risk_gap_report, estimate_exp_neg_entropy};
use certkit::classifiers::{load_model, DeterministicClassifier};
use certkit::distributions::{divergence, CategoricalDistribution, DivergenceKind, GroundDistance};
use certkit::generalization::{covering_exact, covering_greedy};
use certkit::harness::{
    attack_point, benchmark_dataset, curve_to_csv, empirical_adversarial_risk, empirical_risk,
    fit_linear_least_squares, guaranteed_accuracy_curve, noise_accuracy_sweep, noisy_classifier,
    sweep_to_csv, AttackBudget, CurveConfig, LabeledDataset,
};
use certkit::norm::NormOrder;
use certkit::smoothing::{certify_gaussian_preprocessing, GaussianNoiseSpec};
use certkit::{CertError, Result};

const DEFAULT_SAMPLES: usize = 1000;
const DEFAULT_N: usize = 1000;
const DEFAULT_ALPHAS: &str = "0,0.05,0.1,0.15,0.2,0.25,0.3,0.35,0.4,0.45,0.5";
const DEFAULT_SIGMAS: &str = "0,0.05,0.1,0.2,0.5,1";

/// Certification toolkit for randomized classifiers.
#[derive(Parser)]
#[command(name = "certkit", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Master RNG seed for sampling, dataset generation, and attacks.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Monte-Carlo samples per evaluated point.
    #[arg(long, global = true)]
    samples: Option<usize>,

    /// Write the result to this file instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// JSON config mirroring the flags; explicit flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Distance or divergence between two categorical distributions.
    Divergence {
        /// One of: tv, renyi, kl, max, hellinger, separation, wasserstein.
        #[arg(long)]
        kind: Option<String>,
        /// Renyi order; required for --kind renyi.
        #[arg(long)]
        beta: Option<f64>,
        /// First distribution as comma-separated probabilities.
        #[arg(long)]
        p: Option<String>,
        /// Second distribution as comma-separated probabilities.
        #[arg(long)]
        q: Option<String>,
        /// Ground distance for wasserstein: trivial or line.
        #[arg(long)]
        ground: Option<String>,
    },
    /// Robustness certificates for Gaussian noise-injection preprocessing.
    Certify {
        /// Noise standard deviation.
        #[arg(long)]
        sigma: Option<f64>,
        /// Certified l2 perturbation radius.
        #[arg(long)]
        alpha: Option<f64>,
        /// Renyi order of the divergence certificate [default: 2].
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Adversarial-risk-gap report from a clean risk and a noise level.
    Bound {
        /// Clean risk in [0, 1].
        #[arg(long)]
        risk: Option<f64>,
        /// Noise standard deviation.
        #[arg(long)]
        sigma: Option<f64>,
        /// Certified l2 perturbation radius.
        #[arg(long)]
        alpha: Option<f64>,
        /// Renyi order.
        #[arg(long)]
        beta: Option<f64>,
        /// Estimate of E[exp(-H(rho(X)))] enabling the additive route.
        #[arg(long)]
        entropy_term: Option<f64>,
    },
    /// Cover a point set with radius-alpha balls centered at points.
    Cover {
        /// Headerless CSV, one comma-separated point per row.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Ball radius.
        #[arg(long)]
        alpha: Option<f64>,
        /// Norm order: 1, 2, or inf [default: 2].
        #[arg(long)]
        norm: Option<String>,
        /// Exhaustive minimal cover instead of the greedy one.
        #[arg(long)]
        exact: bool,
    },
    /// Clean and attacked risks plus the certified risk-gap report.
    Evaluate {
        /// Model JSON; defaults to a least-squares fit on the dataset.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Dataset JSON; defaults to the synthetic benchmark.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Points in the generated benchmark dataset [default: 1000].
        #[arg(long)]
        n: Option<usize>,
        /// Noise standard deviation; 0 disables noise [default: 0.5].
        #[arg(long)]
        sigma: Option<f64>,
        /// Perturbation radius for certificates and attacks [default: 0.25].
        #[arg(long)]
        alpha: Option<f64>,
        /// Renyi order [default: 2].
        #[arg(long)]
        beta: Option<f64>,
        /// Norm order for the attack: 1, 2, or inf [default: 2].
        #[arg(long)]
        norm: Option<String>,
        /// Also run the empirical attack (a lower bound on the risk).
        #[arg(long)]
        attack: bool,
        /// Random restarts per attacked point [default: 3].
        #[arg(long)]
        restarts: Option<usize>,
        /// Refinement sweeps per attacked point [default: 4].
        #[arg(long)]
        refinements: Option<usize>,
    },
    /// Guaranteed-accuracy curve over a grid of perturbation radii (CSV).
    Curve {
        /// Model JSON; defaults to a least-squares fit on the dataset.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Dataset JSON; defaults to the synthetic benchmark.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Points in the generated benchmark dataset [default: 1000].
        #[arg(long)]
        n: Option<usize>,
        /// Noise standard deviation [default: 0.5].
        #[arg(long)]
        sigma: Option<f64>,
        /// Renyi order [default: 2].
        #[arg(long)]
        beta: Option<f64>,
        /// Comma-separated ascending radii.
        #[arg(long)]
        alphas: Option<String>,
        /// Also attack each point at each radius.
        #[arg(long)]
        attack: bool,
        /// Random restarts per attacked point [default: 3].
        #[arg(long)]
        restarts: Option<usize>,
        /// Refinement sweeps per attacked point [default: 4].
        #[arg(long)]
        refinements: Option<usize>,
    },
    /// Clean accuracy as a function of the noise level (CSV).
    Sweep {
        /// Model JSON; defaults to a least-squares fit on the dataset.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Dataset JSON; defaults to the synthetic benchmark.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Points in the generated benchmark dataset [default: 1000].
        #[arg(long)]
        n: Option<usize>,
        /// Comma-separated ascending noise levels.
        #[arg(long)]
        sigmas: Option<String>,
    },
    /// Attack a single labeled point and report the perturbation found.
    Attack {
        /// Model JSON; defaults to a fit on the generated benchmark.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Points in the generated benchmark dataset [default: 1000].
        #[arg(long)]
        n: Option<usize>,
        /// The point to attack, comma-separated coordinates in [-1,1].
        #[arg(long)]
        point: Option<String>,
        /// True label of the point.
        #[arg(long)]
        label: Option<usize>,
        /// Perturbation radius [default: 0.25].
        #[arg(long)]
        alpha: Option<f64>,
        /// Norm order: 1, 2, or inf [default: 2].
        #[arg(long)]
        norm: Option<String>,
        /// Noise standard deviation; 0 disables noise [default: 0].
        #[arg(long)]
        sigma: Option<f64>,
        /// Random restarts [default: 3].
        #[arg(long)]
        restarts: Option<usize>,
        /// Refinement sweeps [default: 4].
        #[arg(long)]
        refinements: Option<usize>,
    },
}

/// Flag values read from `--config`. Keys use the flag spelling.
#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    samples: Option<usize>,
    kind: Option<String>,
    beta: Option<f64>,
    p: Option<String>,
    q: Option<String>,
    ground: Option<String>,
    sigma: Option<f64>,
    alpha: Option<f64>,
    risk: Option<f64>,
    #[serde(alias = "entropy_term")]
    entropy_term: Option<f64>,
    input: Option<PathBuf>,
    norm: Option<String>,
    exact: Option<bool>,
    model: Option<PathBuf>,
    dataset: Option<PathBuf>,
    n: Option<usize>,
    alphas: Option<String>,
    sigmas: Option<String>,
    attack: Option<bool>,
    restarts: Option<usize>,
    refinements: Option<usize>,
    point: Option<String>,
    label: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_capability() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(path) => serde_json::from_str::<FileConfig>(&fs::read_to_string(path)?)?,
        None => FileConfig::default(),
    };
    let seed = pick(cli.seed, cfg.seed, 0);
    let samples = pick(cli.samples, cfg.samples, DEFAULT_SAMPLES);

    let output = match cli.command {
        Command::Divergence {
            kind,
            beta,
            p,
            q,
            ground,
        } => {
            let kind_name = required(kind, cfg.kind, "kind")?;
            let kind = parse_kind(
                &kind_name,
                beta.or(cfg.beta),
                ground.or(cfg.ground).as_deref(),
            )?;
            let p = required(p, cfg.p, "p")?;
            let q = required(q, cfg.q, "q")?;
            let rho = CategoricalDistribution::new(parse_numbers(&p, "--p")?)?;
            let rho_alt = CategoricalDistribution::new(parse_numbers(&q, "--q")?)?;
            format!("{}\n", format_value(divergence(kind, &rho, &rho_alt)?))
        }
        Command::Certify { sigma, alpha, beta } => {
            let sigma = required(sigma, cfg.sigma, "sigma")?;
            let alpha = required(alpha, cfg.alpha, "alpha")?;
            let beta = pick(beta, cfg.beta, 2.0);
            let certs = certify_gaussian_preprocessing(sigma, alpha, beta)?;
            pretty(&json!({
                "radius": certs.renyi.radius(),
                "renyi_eps": certs.renyi.epsilon(),
                "tv_eps": certs.tv.epsilon(),
                "beta": beta,
            }))?
        }
        Command::Bound {
            risk,
            sigma,
            alpha,
            beta,
            entropy_term,
        } => {
            let risk = required(risk, cfg.risk, "risk")?;
            let sigma = required(sigma, cfg.sigma, "sigma")?;
            let alpha = required(alpha, cfg.alpha, "alpha")?;
            let beta = required(beta, cfg.beta, "beta")?;
            let certs = certify_gaussian_preprocessing(sigma, alpha, beta)?;
            let report = build_risk_gap_report(
                risk,
                Some(&certs.tv),
                Some(&certs.renyi),
                entropy_term.or(cfg.entropy_term),
            )?;
            pretty(&report)?
        }
        Command::Cover {
            input,
            alpha,
            norm,
            exact,
        } => {
            let input = required(input, cfg.input, "input")?;
            let alpha = required(alpha, cfg.alpha, "alpha")?;
            let norm = parse_norm(&pick(norm, cfg.norm, "2".into()))?;
            let points = read_points_csv(&input)?;
            let result = if exact || cfg.exact.unwrap_or(false) {
                covering_exact(&points, alpha, norm)?
            } else {
                covering_greedy(&points, alpha, norm)?
            };
            pretty(&json!({
                "n_balls": result.n_balls(),
                "centers": result.centers(),
                "exact": result.is_exact(),
            }))?
        }
        Command::Evaluate {
            model,
            dataset,
            n,
            sigma,
            alpha,
            beta,
            norm,
            attack,
            restarts,
            refinements,
        } => {
            let dataset =
                resolve_dataset(dataset.or(cfg.dataset), pick(n, cfg.n, DEFAULT_N), seed)?;
            let base = resolve_model(model.or(cfg.model), &dataset)?;
            let sigma = pick(sigma, cfg.sigma, 0.5);
            let alpha = pick(alpha, cfg.alpha, 0.25);
            let beta = pick(beta, cfg.beta, 2.0);
            let norm = parse_norm(&pick(norm, cfg.norm, "2".into()))?;
            let clf = noisy_classifier(&base, noise_for(sigma)?, samples, seed)?;
            let clean = empirical_risk(&clf, &dataset, samples)?;
            let entropy = estimate_exp_neg_entropy(&clf, dataset.points(), samples)?;
            let certs = if sigma > 0.0 {
                Some(certify_gaussian_preprocessing(sigma, alpha, beta)?)
            } else {
                None
            };
            let report = build_risk_gap_report(
                clean.mean(),
                certs.as_ref().map(|c| &c.tv),
                certs.as_ref().map(|c| &c.renyi),
                Some(entropy),
            )?;
            let attacked = if attack || cfg.attack.unwrap_or(false) {
                let budget = AttackBudget::new(
                    pick(restarts, cfg.restarts, 3),
                    pick(refinements, cfg.refinements, 4),
                    samples,
                    seed,
                )?;
                Some(empirical_adversarial_risk(
                    &clf, &dataset, alpha, norm, &budget,
                )?)
            } else {
                None
            };
            pretty(&json!({
                "clean_risk": clean,
                "attacked_risk": attacked,
                "certificate": certs.as_ref().map(|c| json!({
                    "radius": c.renyi.radius(),
                    "renyi_eps": c.renyi.epsilon(),
                    "tv_eps": c.tv.epsilon(),
                    "beta": beta,
                })),
                "report": report,
            }))?
        }
        Command::Curve {
            model,
            dataset,
            n,
            sigma,
            beta,
            alphas,
            attack,
            restarts,
            refinements,
        } => {
            let dataset =
                resolve_dataset(dataset.or(cfg.dataset), pick(n, cfg.n, DEFAULT_N), seed)?;
            let base = resolve_model(model.or(cfg.model), &dataset)?;
            let alphas = pick(alphas, cfg.alphas, DEFAULT_ALPHAS.into());
            let attack = if attack || cfg.attack.unwrap_or(false) {
                Some(AttackBudget::new(
                    pick(restarts, cfg.restarts, 3),
                    pick(refinements, cfg.refinements, 4),
                    samples,
                    seed,
                )?)
            } else {
                None
            };
            let config = CurveConfig {
                sigma: pick(sigma, cfg.sigma, 0.5),
                beta: pick(beta, cfg.beta, 2.0),
                alpha_grid: parse_numbers(&alphas, "--alphas")?,
                samples,
                seed,
                attack,
            };
            curve_to_csv(&guaranteed_accuracy_curve(&base, &dataset, &config)?)
        }
        Command::Sweep {
            model,
            dataset,
            n,
            sigmas,
        } => {
            let dataset =
                resolve_dataset(dataset.or(cfg.dataset), pick(n, cfg.n, DEFAULT_N), seed)?;
            let base = resolve_model(model.or(cfg.model), &dataset)?;
            let sigmas = pick(sigmas, cfg.sigmas, DEFAULT_SIGMAS.into());
            let grid = parse_numbers(&sigmas, "--sigmas")?;
            sweep_to_csv(&noise_accuracy_sweep(
                &base, &dataset, &grid, samples, seed,
            )?)
        }
        Command::Attack {
            model,
            n,
            point,
            label,
            alpha,
            norm,
            sigma,
            restarts,
            refinements,
        } => {
            let point = required(point, cfg.point, "point")?;
            let x = parse_numbers(&point, "--point")?;
            let label = required(label, cfg.label, "label")?;
            let alpha = pick(alpha, cfg.alpha, 0.25);
            let norm = parse_norm(&pick(norm, cfg.norm, "2".into()))?;
            let sigma = pick(sigma, cfg.sigma, 0.0);
            let base = match model.or(cfg.model) {
                Some(path) => load_model(&path)?,
                None => {
                    fit_linear_least_squares(&benchmark_dataset(pick(n, cfg.n, DEFAULT_N), seed)?)?
                }
            };
            let clf = noisy_classifier(&base, noise_for(sigma)?, samples, seed)?;
            let budget = AttackBudget::new(
                pick(restarts, cfg.restarts, 3),
                pick(refinements, cfg.refinements, 4),
                samples,
                seed,
            )?;
            let (tau, loss) = attack_point(&clf, &x, label, alpha, norm, &budget)?;
            pretty(&json!({
                "tau": tau.as_slice(),
                "attacked_loss": loss,
                "alpha": alpha,
                "norm": norm.to_string(),
            }))?
        }
    };

    match &cli.out {
        Some(path) => fs::write(path, output)?,
        None => print!("{output}"),
    }
    Ok(())
}

fn pick<T>(flag: Option<T>, config: Option<T>, default: T) -> T {
    flag.or(config).unwrap_or(default)
}

fn required<T>(flag: Option<T>, config: Option<T>, name: &str) -> Result<T> {
    flag.or(config)
        .ok_or_else(|| CertError::InvalidInput(format!("missing required --{name}")))
}

fn pretty<T: serde::Serialize>(value: &T) -> Result<String> {
    Ok(format!("{}\n", serde_json::to_string_pretty(value)?))
}

fn parse_numbers(text: &str, name: &str) -> Result<Vec<f64>> {
    let entries: Vec<&str> = text
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .collect();
    if entries.is_empty() {
        return Err(CertError::InvalidInput(format!("{name} is empty")));
    }
    entries
        .into_iter()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| CertError::InvalidInput(format!("{name}: {t:?} is not a number")))
        })
        .collect()
}

fn parse_norm(text: &str) -> Result<NormOrder> {
    match text.trim() {
        "1" => Ok(NormOrder::L1),
        "2" => Ok(NormOrder::L2),
        "inf" => Ok(NormOrder::LINF),
        other => Err(CertError::InvalidInput(format!(
            "norm must be 1, 2, or inf, got {other:?}"
        ))),
    }
}

fn parse_kind(name: &str, beta: Option<f64>, ground: Option<&str>) -> Result<DivergenceKind> {
    match name {
        "tv" => Ok(DivergenceKind::TotalVariation),
        "renyi" => {
            let beta =
                beta.ok_or_else(|| CertError::InvalidInput("--kind renyi requires --beta".into()))?;
            Ok(DivergenceKind::Renyi { beta })
        }
        "kl" => Ok(DivergenceKind::Renyi { beta: 1.0 }),
        "max" => Ok(DivergenceKind::Renyi {
            beta: f64::INFINITY,
        }),
        "hellinger" => Ok(DivergenceKind::Hellinger),
        "separation" => Ok(DivergenceKind::Separation),
        "wasserstein" => {
            let ground = match ground.unwrap_or("trivial") {
                "trivial" => GroundDistance::Trivial,
                "line" => GroundDistance::OrderedLine,
                other => {
                    return Err(CertError::InvalidInput(format!(
                        "ground must be trivial or line, got {other:?}"
                    )))
                }
            };
            Ok(DivergenceKind::Wasserstein(ground))
        }
        other => Err(CertError::InvalidInput(format!(
            "unknown divergence kind {other:?}"
        ))),
    }
}

/// At least 12 significant digits; plain decimal for moderate magnitudes,
/// scientific otherwise.
fn format_value(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    if v == 0.0 {
        return format!("{v:.15}");
    }
    let mag = v.abs().log10().floor() as i32;
    if (-4..15).contains(&mag) {
        let decimals = (14 - mag).max(0) as usize;
        format!("{v:.decimals$}")
    } else {
        format!("{v:.14e}")
    }
}

fn noise_for(sigma: f64) -> Result<Option<GaussianNoiseSpec>> {
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(CertError::InvalidInput(format!(
            "sigma must be nonnegative, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        Ok(None)
    } else {
        Ok(Some(GaussianNoiseSpec::isotropic(sigma)?))
    }
}

fn read_points_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path)?;
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        points.push(parse_numbers(line, &format!("line {}", i + 1))?);
    }
    Ok(points)
}

fn load_dataset(path: &Path) -> Result<LabeledDataset> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn resolve_dataset(path: Option<PathBuf>, n: usize, seed: u64) -> Result<LabeledDataset> {
    match path {
        Some(path) => load_dataset(&path),
        None => benchmark_dataset(n, seed),
    }
}

fn resolve_model(
    path: Option<PathBuf>,
    dataset: &LabeledDataset,
) -> Result<DeterministicClassifier> {
    match path {
        Some(path) => load_model(&path),
        None => fit_linear_least_squares(dataset),
    }
}
