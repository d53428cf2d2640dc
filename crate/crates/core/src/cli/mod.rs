//! Command-line front end: JSON configs in, JSON or CSV results out.
//!
//! Exit codes: 0 on success, 2 for usage and configuration errors, 3 for
//! numerical failures.

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::alloc::{
    frontier_allocation, weighted_allocation_general_p, weighted_allocation_shared_p,
    worstcase_allocation_shared_p, WeightedRiskWeights,
};
use crate::alsim::{
    default_spec, gen_2d, reweight_grid, run_al_loop, sample_mixture, trace_frontier, ALConfig,
    Dataset2D, SyntheticSpec2D,
};
use crate::detect::{
    bound_report, empirical_precision, BoundReport, Estimate, GroupLossModel, LossDist,
};
use crate::error::{Error, Result};
use crate::learner::{Activation, MlpSpec, TrainConfig};
use crate::metrics::empirical_cdf;
use crate::ridge::{closed_form, monte_carlo, RidgeOrthogonalProblem};
use crate::rng;
use crate::scaling::{population_risk, worst_case_risk, LawSet};
use crate::selfplay::{gap_estimate, make_folds, rank_threshold_labels, train_cv_ensemble};

#[derive(Parser, Debug)]
#[command(
    name = "grouprisk",
    version,
    about = "Group-aware data allocation, bias detection and active-learning simulation"
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "GROUPRISK_JOBS")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug, Clone)]
struct LawArgs {
    #[command(flatten)]
    common: Common,
    /// Total training-set size (overrides `n` in the config).
    #[arg(long)]
    n: Option<f64>,
    /// Population weight of the frontier objective.
    #[arg(long)]
    omega: Option<f64>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Objective {
    Weighted,
    Worstcase,
    Frontier,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Closed-form allocation for a scaling-law set.
    Allocate {
        #[arg(long, value_enum)]
        objective: Objective,
        #[command(flatten)]
        args: LawArgs,
    },
    /// Minimax (worst-group) allocation.
    Worstcase(LawArgs),
    /// Frontier allocation for a population weight omega.
    Frontier(LawArgs),
    /// Noise/bias/variance per group for orthogonal-design ridge; CSV out.
    RidgeDecompose(Common),
    /// Precision lower bound for the rank detector.
    DetectBound(Common),
    /// Per-example self-play gap and naive error on the 2-D task; CSV out.
    SelfplayEstimate(Common),
    /// Active-learning loop on the 2-D task; per-round CSV out.
    SimulateAl(Common),
    /// Reweighted final-model grid on an AL-labeled set; per-cell CSV out.
    TraceFrontier(Common),
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn dispatch<I: IntoIterator<Item = OsString>>(argv: I) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let run = || run_command(&cli.command);
    let outcome = match cli.jobs {
        Some(0) => Err(Error::invalid("--jobs must be at least 1")),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(run),
            Err(e) => Err(Error::invalid(format!(
                "cannot start {n} worker threads: {e}"
            ))),
        },
        None => run(),
    };
    match outcome {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                2
            } else {
                3
            }
        }
    }
}

fn run_command(cmd: &Command) -> Result<String> {
    match cmd {
        Command::Allocate { objective, args } => allocate(*objective, args),
        Command::Worstcase(args) => allocate(Objective::Worstcase, args),
        Command::Frontier(args) => allocate(Objective::Frontier, args),
        Command::RidgeDecompose(c) => ridge_decompose(c),
        Command::DetectBound(c) => detect_bound(c),
        Command::SelfplayEstimate(c) => selfplay_estimate(c),
        Command::SimulateAl(c) => simulate_al(c),
        Command::TraceFrontier(c) => run_trace_frontier(c),
    }
}

fn read_config<C: DeserializeOwned>(path: &Path) -> Result<C> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
}

fn write_output(out: Option<&Path>, body: &str) -> Result<String> {
    match out {
        Some(p) => {
            fs::write(p, body).map_err(|e| Error::io(p, e))?;
            Ok(p.display().to_string())
        }
        None => {
            std::io::stdout()
                .write_all(body.as_bytes())
                .map_err(|e| Error::io(Path::new("<stdout>"), e))?;
            Ok("stdout".into())
        }
    }
}

fn to_csv(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::invalid(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

/// 17 significant digits.
fn f(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

#[derive(Serialize)]
struct WeightedOutput {
    objective: &'static str,
    alpha: Vec<f64>,
    population_risk: Option<f64>,
    worst_group_risk: Option<f64>,
}

fn allocate(objective: Objective, args: &LawArgs) -> Result<String> {
    let set: LawSet = read_config(&args.common.config)?;
    set.validate()?;
    let n = args.n.or(set.n);
    let need_n = || n.ok_or_else(|| Error::invalid("total size n is required (config `n` or --n)"));
    let (body, summary) = match objective {
        Objective::Weighted => {
            let w = match (&set.weights, &set.gamma) {
                (Some(w), _) | (None, Some(w)) => WeightedRiskWeights::new(w.clone())?,
                (None, None) => {
                    return Err(Error::invalid(
                        "weighted objective needs `weights` or `gamma`",
                    ))
                }
            };
            let shared = set.laws.iter().all(|l| l.p == set.laws[0].p);
            let alpha = if shared {
                weighted_allocation_shared_p(&set.laws, &w)?
            } else {
                weighted_allocation_general_p(&set.laws, &w, need_n()?)?
            };
            let pop = match (&set.gamma, n) {
                (Some(_), Some(n)) => Some(population_risk(&set.laws, &set.gamma()?, &alpha, n)?),
                _ => None,
            };
            let worst = match n {
                Some(n) => Some(worst_case_risk(&set.laws, &alpha, n)?),
                None => None,
            };
            let out = WeightedOutput {
                objective: "weighted",
                alpha: alpha.as_slice().to_vec(),
                population_risk: pop,
                worst_group_risk: worst,
            };
            (
                to_json(&out)?,
                format!("weighted allocation over {} groups", set.laws.len()),
            )
        }
        Objective::Worstcase => {
            let sol = worstcase_allocation_shared_p(&set.laws, need_n()?)?;
            let summary = format!("worst-case allocation: lambda = {:.6e}", sol.lambda);
            (to_json(&sol)?, summary)
        }
        Objective::Frontier => {
            let omega = args
                .omega
                .ok_or_else(|| Error::invalid("frontier objective needs --omega"))?;
            let sol = frontier_allocation(&set.laws, &set.gamma()?, need_n()?, omega)?;
            let summary = format!(
                "frontier allocation at omega = {omega}: {} underrepresented group(s), risk = {:.6e}",
                sol.underrep_set.len(),
                sol.risk
            );
            (to_json(&sol)?, summary)
        }
    };
    let dest = write_output(args.common.out.as_deref(), &body)?;
    Ok(format!("{summary} -> {dest}"))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RidgeConfig {
    theta: Vec<f64>,
    sigma: Vec<f64>,
    group_sizes: Vec<u64>,
    ridge: f64,
    /// Monte Carlo trials per group; closed form only when absent.
    #[serde(default)]
    trials: Option<usize>,
    #[serde(default)]
    seed: u64,
}

fn ridge_decompose(c: &Common) -> Result<String> {
    let cfg: RidgeConfig = read_config(&c.config)?;
    let seed = c.seed.unwrap_or(cfg.seed);
    let problem = RidgeOrthogonalProblem::new(cfg.theta, cfg.sigma, cfg.group_sizes, cfg.ridge)?;
    let mut header = vec!["group", "noise", "bias", "variance", "total"];
    if cfg.trials.is_some() {
        header.extend([
            "mc_noise",
            "mc_bias",
            "mc_variance",
            "mc_total",
            "se_noise",
            "se_bias",
            "se_variance",
            "se_total",
        ]);
    }
    let mut rows = Vec::with_capacity(problem.theta.len());
    for g in 0..problem.theta.len() {
        let d = closed_form(&problem, g)?;
        let mut row = vec![
            g.to_string(),
            f(d.noise),
            f(d.bias),
            f(d.variance),
            f(d.total()),
        ];
        if let Some(trials) = cfg.trials {
            let mc = monte_carlo(&problem, g, trials, seed)?;
            row.extend([
                f(mc.estimate.noise),
                f(mc.estimate.bias),
                f(mc.estimate.variance),
                f(mc.total),
                f(mc.se.noise),
                f(mc.se.bias),
                f(mc.se.variance),
                f(mc.se_total),
            ]);
        }
        rows.push(row);
    }
    let csv = to_csv(&header, &rows)?;
    let dest = write_output(c.out.as_deref(), &csv)?;
    Ok(format!(
        "ridge decomposition for {} groups -> {dest}",
        problem.theta.len()
    ))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectConfig {
    dist0: LossDist,
    dist1: LossDist,
    gamma0: f64,
    q: f64,
    /// Monte Carlo draws for the empirical precision; skipped when absent.
    #[serde(default)]
    samples: Option<usize>,
    #[serde(default)]
    seed: u64,
}

#[derive(Serialize)]
struct DetectOutput {
    bound: BoundReport,
    empirical_precision: Option<Estimate>,
}

fn detect_bound(c: &Common) -> Result<String> {
    let cfg: DetectConfig = read_config(&c.config)?;
    let model = GroupLossModel::new(cfg.dist0, cfg.dist1, cfg.gamma0)?;
    let seed = c.seed.unwrap_or(cfg.seed);
    let bound = bound_report(&model, cfg.q)?;
    let emp = match cfg.samples {
        Some(s) => Some(empirical_precision(&model, cfg.q, s, seed)?),
        None => None,
    };
    let summary = format!(
        "precision bound at q = {}: {:.6}",
        cfg.q, bound.precision_lower
    );
    let dest = write_output(
        c.out.as_deref(),
        &to_json(&DetectOutput {
            bound,
            empirical_precision: emp,
        })?,
    )?;
    Ok(format!("{summary} -> {dest}"))
}

fn default_mlp() -> MlpSpec {
    MlpSpec {
        input_dim: 2,
        hidden_dims: vec![32],
        embed_dim: 16,
        activation: Activation::Relu,
        init_seed: 0,
    }
}

fn default_member_train() -> TrainConfig {
    TrainConfig {
        learning_rate: 0.02,
        epochs: 150,
        bias_weight: 0.0,
        ..TrainConfig::default()
    }
}

fn default_k() -> usize {
    10
}

fn default_m() -> usize {
    1
}

fn default_test_size() -> usize {
    10_000
}

/// Pool from the config (or the default layout), reseeded when `--seed` is
/// given.
fn pool_of(
    data: Option<SyntheticSpec2D>,
    seed: u64,
    overridden: bool,
) -> Result<(SyntheticSpec2D, Dataset2D)> {
    let mut spec = data.unwrap_or_else(|| default_spec(25, seed));
    if overridden {
        spec.seed = rng::derive_seed(seed, rng::TAG_DATA, 0);
    }
    let pool = gen_2d(&spec)?;
    Ok((spec, pool))
}

fn test_set(spec: &SyntheticSpec2D, size: usize, seed: u64) -> Result<Dataset2D> {
    sample_mixture(spec, size, rng::derive_seed(seed, rng::TAG_DATA, 1))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SelfplayConfig {
    #[serde(default)]
    data: Option<SyntheticSpec2D>,
    #[serde(default = "default_k")]
    k: usize,
    #[serde(default = "default_m")]
    m: usize,
    #[serde(default = "default_mlp")]
    spec: MlpSpec,
    #[serde(default = "default_member_train")]
    train: TrainConfig,
    /// Quantile for the rank detector column.
    #[serde(default = "default_q")]
    q: f64,
    #[serde(default)]
    seed: u64,
}

fn default_q() -> f64 {
    0.9
}

fn selfplay_estimate(c: &Common) -> Result<String> {
    let cfg: SelfplayConfig = read_config(&c.config)?;
    let seed = c.seed.unwrap_or(cfg.seed);
    let (_, pool) = pool_of(cfg.data, seed, c.seed.is_some())?;
    let idx: Vec<usize> = (0..pool.len()).collect();
    let data = pool.samples(&idx, &vec![0.0; idx.len()]);
    let folds = make_folds(
        data.len(),
        cfg.k,
        cfg.m,
        rng::derive_seed(seed, rng::TAG_FOLDS, 0),
    )?;
    let ens = train_cv_ensemble(&data, &folds, &cfg.spec, &cfg.train, seed)?;
    let est = gap_estimate(&ens, &folds, &data)?;
    let rank = empirical_cdf(&est.gap);
    let labels = rank_threshold_labels(&est.gap, cfg.q)?;
    let rows: Vec<Vec<String>> = (0..pool.len())
        .map(|i| {
            vec![
                i.to_string(),
                pool.group[i].to_string(),
                pool.y[i].to_string(),
                f(est.gap[i]),
                f(est.naive_error[i]),
                f(rank[i]),
                (labels[i] as u8).to_string(),
            ]
        })
        .collect();
    let csv = to_csv(
        &[
            "example_id",
            "group",
            "y",
            "gap",
            "naive_error",
            "rank",
            "label_at_q",
        ],
        &rows,
    )?;
    let dest = write_output(c.out.as_deref(), &csv)?;
    Ok(format!(
        "self-play gaps for {} examples (K = {}, m = {}, stop epoch {}) -> {dest}",
        pool.len(),
        cfg.k,
        cfg.m,
        est.stop_epoch
    ))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AlRunConfig {
    #[serde(default)]
    data: Option<SyntheticSpec2D>,
    #[serde(default = "default_test_size")]
    test_size: usize,
    al: ALConfig,
}

fn al_setup(c: &Common) -> Result<(ALConfig, Dataset2D, Dataset2D)> {
    let cfg: AlRunConfig = read_config(&c.config)?;
    let mut al = cfg.al;
    if let Some(s) = c.seed {
        al.seed = s;
    }
    let (spec, pool) = pool_of(cfg.data, al.seed, c.seed.is_some())?;
    let test = test_set(&spec, cfg.test_size, al.seed)?;
    Ok((al, pool, test))
}

fn simulate_al(c: &Common) -> Result<String> {
    let (al, pool, test) = al_setup(c)?;
    let res = run_al_loop(&pool, &test, &al)?;
    let rows: Vec<Vec<String>> = res
        .rounds
        .iter()
        .map(|r| {
            vec![
                r.round.to_string(),
                r.labeled_size.to_string(),
                f(r.tail_rate),
                f(r.acc),
                f(r.worst_group_acc),
                f(r.combined),
            ]
        })
        .collect();
    let csv = to_csv(
        &[
            "round",
            "labeled_size",
            "tail_rate",
            "acc",
            "worst_group_acc",
            "combined",
        ],
        &rows,
    )?;
    let dest = write_output(c.out.as_deref(), &csv)?;
    let last = res.rounds.last();
    Ok(format!(
        "{} rounds, tail rate {:.4}, combined accuracy {:.4}{} -> {dest}",
        res.rounds.len(),
        last.map_or(0.0, |r| r.tail_rate),
        last.map_or(f64::NAN, |r| r.combined),
        if res.exhausted {
            " (pool exhausted)"
        } else {
            ""
        }
    ))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TraceConfig {
    #[serde(default)]
    data: Option<SyntheticSpec2D>,
    #[serde(default = "default_test_size")]
    test_size: usize,
    al: ALConfig,
    /// `(t, lambda_up)` cells; the full 420-cell grid when absent.
    #[serde(default)]
    grid: Option<Vec<(f64, f64)>>,
    /// Final-model training; label loss only.
    #[serde(default)]
    final_train: Option<TrainConfig>,
}

fn run_trace_frontier(c: &Common) -> Result<String> {
    let cfg: TraceConfig = read_config(&c.config)?;
    let mut al = cfg.al;
    if let Some(s) = c.seed {
        al.seed = s;
    }
    let (spec, pool) = pool_of(cfg.data, al.seed, c.seed.is_some())?;
    let test = test_set(&spec, cfg.test_size, al.seed)?;
    let res = run_al_loop(&pool, &test, &al)?;
    let data = pool.samples(&res.labeled, &res.b_labels);
    let grid = cfg.grid.unwrap_or_else(reweight_grid);
    let mut train = cfg.final_train.unwrap_or_else(|| al.train.clone());
    train.bias_weight = 0.0;
    train.shuffle_seed = rng::derive_seed(al.seed, rng::TAG_SHUFFLE, u64::MAX);
    let mut spec_final = al.spec.clone();
    spec_final.init_seed = rng::derive_seed(al.seed, rng::TAG_INIT, u64::MAX);
    let trace = trace_frontier(&data, &res.b_labels, &grid, &spec_final, &train, &test)?;
    let rows: Vec<Vec<String>> = trace
        .cells
        .iter()
        .enumerate()
        .map(|(i, cell)| {
            vec![
                f(cell.t),
                f(cell.lambda_up),
                f(cell.acc),
                f(cell.wga),
                f(cell.combined),
                (trace.pareto.contains(&i) as u8).to_string(),
                (cell.empty_set as u8).to_string(),
                cell.error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    let csv = to_csv(
        &[
            "t",
            "lambda_up",
            "acc",
            "wga",
            "combined",
            "pareto_flag",
            "empty_set",
            "error",
        ],
        &rows,
    )?;
    let dest = write_output(c.out.as_deref(), &csv)?;
    let best = trace.best_combined().map_or(f64::NAN, |b| b.combined);
    Ok(format!(
        "{} cells, {} Pareto, best combined accuracy {best:.4} -> {dest}",
        trace.cells.len(),
        trace.pareto.len()
    ))
}
