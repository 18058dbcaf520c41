//! Command-line front end: model lifecycle, exact inference, deepening,
//! approximation runs, and the verification suites.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on domain errors
//! (including a failing verification suite), 3 when an enumeration cap is
//! exceeded. `PADIC_DBN_CAP` overrides the enumeration width cap.

mod oracles;

use clap::{Parser, Subcommand};
use padic_dbn::{
    extended_marginal, greedy_construct, log_partition_factorized, log_partition_function,
    marginal, support_ladder_closed_form, support_ladder_construct, DbnModel, DeepLayer,
    Distribution, EnumerationCaps, Error as CoreError, ModelKind, SearchConfig, Side, TreeGroup,
    DEFAULT_ALPHA,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "padic-dbn",
    version,
    about = "Discrete deep belief networks on p-adic tree groups: exact inference, deepening, and constructive approximation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print a group's elements, digits, norms and pairwise ancestor levels.
    Tree {
        /// Prime branching factor.
        #[arg(long)]
        p: u64,
        /// Number of tree levels above the root.
        #[arg(long)]
        l: u32,
    },
    /// Create, inspect or validate model files.
    Model {
        #[command(subcommand)]
        action: ModelAction,
    },
    /// Write the exact visible marginal as CSV and report the log
    /// partition function.
    Exact {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Cross-check the factorized route against full joint enumeration.
        #[arg(long)]
        check: bool,
    },
    /// Add one deepening layer to a model.
    Deepen {
        #[arg(long)]
        model: PathBuf,
        /// Comma-separated effective coupling, one value per visible unit.
        #[arg(long, allow_hyphen_values = true)]
        w_eff: String,
        /// Bias of the extra unit; "-inf" freezes the layer.
        #[arg(long, allow_hyphen_values = true)]
        b_eff: String,
        #[arg(long, default_value_t = 1)]
        alpha: u64,
        #[arg(long, default_value_t = 1)]
        beta: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Greedily add divergence-reducing layers toward a target
    /// distribution.
    Greedy {
        /// Target distribution CSV (bitmask,probability).
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 16)]
        max_layers: u32,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        trace: PathBuf,
    },
    /// Build a model for a target distribution with one layer per
    /// supported configuration.
    Approx {
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        p: u64,
        #[arg(long)]
        l0: u32,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        /// First-layer bias offset; derived from eps when omitted.
        #[arg(long, allow_hyphen_values = true)]
        lambda1: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        trace: PathBuf,
    },
    /// Run a verification suite; exits 0 only if every property holds.
    Oracle {
        /// One of: ultrametric, discretize, extension, lemma2,
        /// factorization, theorem3.
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum ModelAction {
    /// Write a fresh model; zero parameters unless a seed is given.
    New {
        #[arg(long)]
        p: u64,
        #[arg(long)]
        l: u32,
        /// One of: rbm, conv, radial.
        #[arg(long, default_value = "conv")]
        kind: String,
        /// Draw parameters uniformly from [-scale, scale] with this seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a summary of a model file.
    Show {
        #[arg(long)]
        model: PathBuf,
    },
    /// Check that a model file parses and satisfies its invariants.
    Validate {
        #[arg(long)]
        model: PathBuf,
    },
}

enum CliError {
    Usage(String),
    Domain(String),
    Cap(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Domain(_) => 2,
            CliError::Cap(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Domain(m) | CliError::Cap(m) => m,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::CapExceeded { .. } | CoreError::GroupTooLarge { .. } => {
                CliError::Cap(e.to_string())
            }
            other => CliError::Domain(other.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let caps = EnumerationCaps::from_env();
    match cli.command {
        Command::Tree { p, l } => cmd_tree(p, l),
        Command::Model { action } => match action {
            ModelAction::New {
                p,
                l,
                kind,
                seed,
                scale,
                out,
            } => cmd_model_new(p, l, &kind, seed, scale, &out),
            ModelAction::Show { model } => cmd_model_show(&model),
            ModelAction::Validate { model } => cmd_model_validate(&model),
        },
        Command::Exact { model, out, check } => cmd_exact(&model, &out, check, &caps),
        Command::Deepen {
            model,
            w_eff,
            b_eff,
            alpha,
            beta,
            out,
        } => cmd_deepen(&model, &w_eff, &b_eff, alpha, beta, &out),
        Command::Greedy {
            target,
            model,
            eps,
            max_layers,
            out,
            trace,
        } => cmd_greedy(&target, &model, eps, max_layers, &out, &trace, &caps),
        Command::Approx {
            target,
            p,
            l0,
            eps,
            alpha,
            lambda1,
            out,
            trace,
        } => cmd_approx(&target, p, l0, eps, alpha, lambda1, &out, &trace, &caps),
        Command::Oracle { suite, seed } => cmd_oracle(&suite, seed),
    }
}

fn read_file(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Domain(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::Domain(format!("cannot write {}: {e}", path.display())))
}

fn load_model(path: &Path) -> CliResult<DbnModel> {
    Ok(DbnModel::from_json_str(&read_file(path)?)?)
}

fn load_target(path: &Path) -> CliResult<Distribution> {
    // Targets must sum to one within 1e-6 and are renormalized exactly.
    Ok(Distribution::from_csv_str(&read_file(path)?, 1e-6)?)
}

fn cmd_tree(p: u64, l: u32) -> CliResult<()> {
    let group = TreeGroup::new(p, l)?;
    let n = group.order();
    if n > 4096 {
        return Err(CliError::Cap(format!(
            "group has {n} elements; printing is capped at 4096"
        )));
    }
    println!(
        "group: p={p}, l={l}, order={n} (rooted tree with {} levels, {n} leaves)",
        l + 1
    );
    println!("element  digits{}norm", " ".repeat(2 * l as usize + 2));
    for a in group.elements() {
        let digits = group.digits(a).map_err(CliError::from)?;
        let digit_str = digits
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let norm = group.norm_f64(a)?;
        println!("{:<8} [{digit_str}]{}{norm}", a.0, " ".repeat(4));
    }
    if n <= 32 {
        println!("\nancestor level of (row, column); distance = p^-level:");
        let head: Vec<String> = group.elements().map(|e| format!("{:>3}", e.0)).collect();
        println!("     {}", head.join(""));
        for a in group.elements() {
            let mut row = String::new();
            for b in group.elements() {
                let lvl = group.ancestor_level(a, b)?;
                row.push_str(&format!("{lvl:>3}"));
            }
            println!("{:>4} {row}", a.0);
        }
    } else {
        println!("\n(pairwise ancestor table omitted for more than 32 leaves)");
    }
    Ok(())
}

fn parse_kind(kind: &str) -> CliResult<ModelKind> {
    match kind {
        "rbm" => Ok(ModelKind::Rbm),
        "conv" => Ok(ModelKind::Conv),
        "radial" => Ok(ModelKind::Radial),
        other => Err(CliError::Usage(format!(
            "unknown kind `{other}`; expected rbm, conv or radial"
        ))),
    }
}

fn cmd_model_new(
    p: u64,
    l: u32,
    kind: &str,
    seed: Option<u64>,
    scale: f64,
    out: &Path,
) -> CliResult<()> {
    let group = TreeGroup::new(p, l)?;
    let kind = parse_kind(kind)?;
    let n = group.order() as usize;
    let model = match seed {
        None => match kind {
            ModelKind::Conv => DbnModel::zero_conv(group),
            ModelKind::Rbm => {
                DbnModel::rbm(group, vec![vec![0.0; n]; n], vec![0.0; n], vec![0.0; n])?
            }
            ModelKind::Radial => DbnModel::radial(
                group,
                vec![0.0; l as usize],
                0.0,
                vec![0.0; n],
                vec![0.0; n],
            )?,
        },
        Some(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            DbnModel::random(group, kind, scale, &mut rng)
        }
    };
    write_file(out, &model.to_json_string())?;
    if let Some(seed) = seed {
        println!("seed: {seed}");
    }
    println!("wrote {} ({} parameters)", out.display(), model.param_count());
    Ok(())
}

fn cmd_model_show(path: &Path) -> CliResult<()> {
    let model = load_model(path)?;
    let group = model.group();
    println!("kind: {}", model.kind().as_str());
    println!("p: {}, l: {}, units: {}", group.prime(), group.level(), model.units());
    println!("parameters: {}", model.param_count());
    println!("deepening layers: {}", model.deepening().len());
    for (i, layer) in model.deepening().iter().enumerate() {
        let bias = if layer.is_frozen() {
            "-inf (frozen)".to_string()
        } else {
            format!("{}", layer.b_eff)
        };
        println!("  layer {}: b_eff = {bias}, alpha = {}, beta = {}", i + 1, layer.alpha_idx, layer.beta_idx);
    }
    Ok(())
}

fn cmd_model_validate(path: &Path) -> CliResult<()> {
    let model = load_model(path)?;
    println!(
        "ok: {} model on p={}, l={} with {} parameters",
        model.kind().as_str(),
        model.group().prime(),
        model.group().level(),
        model.param_count()
    );
    Ok(())
}

fn cmd_exact(model_path: &Path, out: &Path, check: bool, caps: &EnumerationCaps) -> CliResult<()> {
    let model = load_model(model_path)?;
    let dist = extended_marginal(&model, caps)?;
    let log_z = log_partition_factorized(&model, caps)?;
    write_file(out, &dist.to_csv_string())?;
    println!("log_z = {log_z:.16e}");
    println!("wrote {}", out.display());
    if check {
        let enumerated = marginal(&model, Side::Visible, caps)?;
        let gap = dist.max_norm_distance(&enumerated)?;
        let log_z_enum = log_partition_function(&model, caps)?;
        let z_gap = (log_z - log_z_enum).abs();
        if gap > 1e-10 || z_gap > 1e-10 {
            return Err(CliError::Domain(format!(
                "factorized and enumerated routes disagree: marginal gap {gap:e}, log_z gap {z_gap:e}"
            )));
        }
        println!("check: factorized and enumerated routes agree (max gap {gap:.3e})");
    }
    Ok(())
}

fn parse_bias(text: &str) -> CliResult<f64> {
    if text == "-inf" {
        return Ok(f64::NEG_INFINITY);
    }
    text.parse::<f64>()
        .map_err(|_| CliError::Usage(format!("bad bias `{text}`; expected a float or \"-inf\"")))
        .and_then(|x| {
            if x.is_nan() || x == f64::INFINITY {
                Err(CliError::Usage(format!("bias `{text}` must be finite or -inf")))
            } else {
                Ok(x)
            }
        })
}

fn parse_weights(text: &str) -> CliResult<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("bad weight `{s}` in coupling list")))
        })
        .collect()
}

fn cmd_deepen(
    model_path: &Path,
    w_eff: &str,
    b_eff: &str,
    alpha: u64,
    beta: u64,
    out: &Path,
) -> CliResult<()> {
    let mut model = load_model(model_path)?;
    let w_eff = parse_weights(w_eff)?;
    let b_eff = parse_bias(b_eff)?;
    model.push_layer(DeepLayer::new(w_eff, b_eff, alpha, beta))?;
    write_file(out, &model.to_json_string())?;
    println!(
        "wrote {} ({} deepening layers)",
        out.display(),
        model.deepening().len()
    );
    Ok(())
}

fn cmd_greedy(
    target: &Path,
    model_path: &Path,
    eps: f64,
    max_layers: u32,
    out: &Path,
    trace_path: &Path,
    caps: &EnumerationCaps,
) -> CliResult<()> {
    if !(eps > 0.0) {
        return Err(CliError::Usage(format!("eps must be positive, got {eps}")));
    }
    let q = load_target(target)?;
    let model = load_model(model_path)?;
    if q.width() != model.units() {
        return Err(CliError::Domain(format!(
            "target width {} does not match the model's {} visible units",
            q.width(),
            model.units()
        )));
    }
    let (deepened, trace) =
        greedy_construct(&q, &model, eps, max_layers, caps, &SearchConfig::default())?;
    write_file(out, &deepened.to_json_string())?;
    write_file(trace_path, &trace.to_csv_string())?;
    println!(
        "layers added: {}, final kl: {:.16e}, reached eps: {}",
        trace.steps.len(),
        trace.final_kl,
        trace.reached
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_approx(
    target: &Path,
    p: u64,
    l0: u32,
    eps: f64,
    alpha: f64,
    lambda1: Option<f64>,
    out: &Path,
    trace_path: &Path,
    caps: &EnumerationCaps,
) -> CliResult<()> {
    if !(eps > 0.0) {
        return Err(CliError::Usage(format!("eps must be positive, got {eps}")));
    }
    let q = load_target(target)?;
    let group = TreeGroup::new(p, l0)?;
    if q.width() > group.order() as u32 {
        return Err(CliError::Domain(format!(
            "target width {} exceeds the {} visible units of p^l0",
            q.width(),
            group.order()
        )));
    }
    let padded = q.zero_pad(group.order() as u32)?;
    let lambda1 = lambda1.unwrap_or_else(|| lambda1_for_eps(&padded, eps));
    let (model, trace) = support_ladder_construct(&padded, &group, lambda1, alpha, caps)?;
    write_file(out, &model.to_json_string())?;
    write_file(trace_path, &trace.to_csv_string())?;
    let ideal = support_ladder_closed_form(&padded, lambda1)?;
    let exact = extended_marginal(&model, caps)?;
    println!(
        "layers: {}, lambda1: {lambda1}, final kl: {:.16e}, reached eps: {}",
        trace.steps.len(),
        trace.final_kl,
        trace.final_kl < eps
    );
    println!(
        "closed-form deviation (max norm): {:.3e}",
        exact.max_norm_distance(&ideal)?
    );
    Ok(())
}

/// First-layer offset that drives the closed-form divergence below `eps`,
/// with half a unit of margin.
fn lambda1_for_eps(q: &Distribution, eps: f64) -> f64 {
    let k = q.support().len() as f64;
    let total = q.probs().len() as f64;
    let q1 = q
        .support()
        .iter()
        .map(|&b| q.prob(b))
        .fold(f64::INFINITY, f64::min);
    let needed = (total - k) * q1 / eps.exp_m1();
    needed.max(1.0).ln() + 0.5
}

fn cmd_oracle(suite: &str, seed: u64) -> CliResult<()> {
    println!("seed: {seed}");
    let report = match suite {
        "ultrametric" => oracles::ultrametric(seed),
        "discretize" => oracles::discretize(seed),
        "extension" => oracles::extension(seed),
        "lemma2" => oracles::marginal_limit(seed),
        "factorization" => oracles::factorization(seed),
        "theorem3" => oracles::ladder(seed),
        other => {
            return Err(CliError::Usage(format!(
                "unknown suite `{other}`; expected ultrametric, discretize, extension, lemma2, factorization or theorem3"
            )))
        }
    };
    for line in &report.lines {
        println!("{line}");
    }
    if report.failures == 0 {
        println!("suite {suite}: pass ({} properties)", report.checks);
        Ok(())
    } else {
        Err(CliError::Domain(format!(
            "suite {suite}: {} of {} properties failed",
            report.failures, report.checks
        )))
    }
}
