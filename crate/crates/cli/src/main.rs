use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use plmix::assessment::{ppcheck_with, CheckKind};
use plmix::em::{fit_map_multistart, Hyperparams, MapConfig, MapFit};
use plmix::gibbs::{gibbs_run, GibbsChain, GibbsConfig, GibbsInit};
use plmix::io::{self, DataFormat};
use plmix::rank_data::{make_partial, rank_summaries, unit_to_freq, Censoring};
use plmix::relabel::pra_relabel;
use plmix::selection::{selection_criteria, PointEstimate};
use plmix::{Dataset, Error, ErrorKind, MixtureParams, Result};

mod config;

use config::RunOpts;

#[derive(Debug, Parser)]
#[command(name = "plmix", version, about = "Bayesian Plackett-Luce mixtures for partial top rankings")]
struct Cli {
    #[command(flatten)]
    opts: RunOpts,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Switch between ordering and ranking layouts, or tabulate frequencies
    Convert {
        /// Output layout (default: the other CSV layout)
        #[arg(long)]
        to: Option<DataFormat>,
        /// Write the frequency table of distinct sequences instead
        #[arg(long)]
        freq: bool,
    },
    /// Descriptive summaries of a dataset (JSON)
    Summarize,
    /// Draw a sample from a PL mixture
    Simulate {
        /// Number of units
        #[arg(long = "N", env = "PLMIX_N")]
        n: usize,
        /// Mixture parameters as JSON ({"supports": [[..]], "weights": [..]});
        /// random parameters are drawn when absent (needs --K)
        #[arg(long, env = "PLMIX_PARAMS")]
        params: Option<PathBuf>,
        /// Probabilities of depths 1..K-2 followed by that of a complete ordering
        #[arg(long, value_delimiter = ',', env = "PLMIX_CENSOR")]
        censor: Option<Vec<f64>>,
    },
    /// MAP estimation by EM for each candidate G
    FitMap,
    /// Gibbs sampling for each candidate G
    FitGibbs {
        /// MAP fit (JSON) or a directory of fit-map outputs to start from
        #[arg(long, env = "PLMIX_INIT_FROM")]
        init_from: Option<PathBuf>,
    },
    /// DIC, BPIC and BICM from fit-map and fit-gibbs outputs
    Select {
        /// Point estimate plugged into the criteria: map, mean or median
        #[arg(long, default_value = "map", env = "PLMIX_POINT_ESTIMATE")]
        point_estimate: PointEstimate,
    },
    /// Posterior predictive checks from fit-gibbs outputs
    Ppcheck {
        /// Also report the depth-conditional checks
        #[arg(long, env = "PLMIX_CONDITIONAL")]
        conditional: bool,
    },
    /// Pivotal relabeling of fit-gibbs outputs towards the MAP fit
    Relabel,
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Validation => 2,
        ErrorKind::Io => 3,
        ErrorKind::Numerical => 4,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = format!("{:?}", e.kind()).to_lowercase();
            eprintln!("{}", serde_json::json!({ "error": kind, "message": e.to_string() }));
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let opts = cli.opts.merge_config()?;
    if let Some(n) = opts.parallel {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Convert { to, freq } => convert(&opts, to, freq),
        Command::Summarize => summarize(&opts),
        Command::Simulate { n, params, censor } => simulate(&opts, n, params.as_deref(), censor),
        Command::FitMap => fit_map(&opts),
        Command::FitGibbs { init_from } => fit_gibbs(&opts, init_from.as_deref()),
        Command::Select { point_estimate } => select(&opts, point_estimate),
        Command::Ppcheck { conditional } => ppcheck(&opts, conditional),
        Command::Relabel => relabel(&opts),
    }
}

fn load(opts: &RunOpts) -> Result<Dataset> {
    io::load_dataset(opts.input()?, opts.format(), opts.k)
}

fn emit(opts: &RunOpts, text: &str) -> Result<()> {
    match &opts.out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn convert(opts: &RunOpts, to: Option<DataFormat>, freq: bool) -> Result<()> {
    let data = load(opts)?;
    let text = if freq {
        io::format_freq(&unit_to_freq(&data))
    } else {
        let to = to.unwrap_or(match opts.format() {
            DataFormat::CsvRanking => DataFormat::CsvOrdering,
            _ => DataFormat::CsvRanking,
        });
        io::format_dataset(&data, to)
    };
    emit(opts, &text)
}

fn summarize(opts: &RunOpts) -> Result<()> {
    let data = load(opts)?;
    let mut text = serde_json::to_string_pretty(&rank_summaries(&data))?;
    text.push('\n');
    emit(opts, &text)
}

fn hyper(opts: &RunOpts, k: usize, g: usize) -> Hyperparams {
    Hyperparams::constant(
        k,
        g,
        opts.shape.unwrap_or(1.0),
        opts.rate.unwrap_or(0.0),
        opts.alpha.unwrap_or(1.0),
    )
}

fn simulate(opts: &RunOpts, n: usize, params: Option<&Path>, censor: Option<Vec<f64>>) -> Result<()> {
    use rand::SeedableRng;
    let seed = opts.seed()?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let theta: MixtureParams = match params {
        Some(path) => io::read_json(path)?,
        None => {
            let k = opts
                .k
                .ok_or_else(|| Error::InvalidArgument("--K or --params is required".into()))?;
            let g = opts.g.unwrap_or(1);
            let data = Dataset::from_orderings(&[(1..=k as u32).collect()])?;
            plmix::em::random_init(&data, g, false, &mut rng)
        }
    };
    let (labels, mut data) = plmix::plmodel::sample_plmix(n, &theta, &mut rng)?;
    if let Some(probs) = censor {
        data = make_partial(&data, &Censoring::Probabilities(probs), &mut rng)?;
    }
    let dir = opts.out_dir()?;
    io::save_dataset(&dir.join("data.csv"), &data, opts.format.unwrap_or(DataFormat::CsvOrdering))?;
    let label_rows: Vec<Vec<u32>> = labels.iter().map(|&c| vec![c as u32]).collect();
    std::fs::write(dir.join("labels.csv"), io::format_matrix(&label_rows, Some(&["component".into()])))?;
    io::write_json(&dir.join("params.json"), &theta)?;
    println!("simulated N = {n}, K = {}, G = {} (seed {seed})", theta.k(), theta.g());
    Ok(())
}

fn map_path(dir: &Path, g: usize) -> PathBuf {
    dir.join(format!("map_g{g}.json"))
}

fn chain_path(dir: &Path, g: usize, relabeled: bool) -> PathBuf {
    if relabeled {
        dir.join(format!("chain_g{g}_relabeled.csv"))
    } else {
        dir.join(format!("chain_g{g}.csv"))
    }
}

#[derive(Serialize)]
struct MapSummary {
    g: usize,
    log_lik: f64,
    log_post: f64,
    bic: Option<f64>,
    converged: bool,
    n_iter: usize,
    best_start: usize,
}

fn fit_map(opts: &RunOpts) -> Result<()> {
    let data = load(opts)?;
    let seed = opts.seed()?;
    let dir = opts.out_dir()?;
    let k = data.k();
    let fits = opts
        .g_range()?
        .into_iter()
        .map(|g| {
            let cfg = MapConfig {
                g,
                hyper: hyper(opts, k, g),
                max_iter: opts.max_iter.unwrap_or(400 * g),
                tol: opts.tol.unwrap_or(1e-6),
            };
            let fit = fit_map_multistart(&data, &cfg, opts.n_start.unwrap_or(1), opts.centered_start.unwrap_or(false), seed)?;
            io::write_json(&map_path(&dir, g), &fit.best)?;
            Ok(MapSummary {
                g,
                log_lik: fit.best.log_lik,
                log_post: fit.best.log_post,
                bic: fit.best.bic,
                converged: fit.best.converged,
                n_iter: fit.best.n_iter,
                best_start: fit.best_start,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    io::write_csv_records(&dir.join("map_summary.csv"), &fits)?;
    println!("{:>3} {:>16} {:>16} {:>16} {:>9} {:>6}", "G", "log_lik", "log_post", "BIC", "converged", "iter");
    for f in &fits {
        let bic = f.bic.map_or("-".to_string(), |b| format!("{b:.4}"));
        println!("{:>3} {:>16.4} {:>16.4} {:>16} {:>9} {:>6}", f.g, f.log_lik, f.log_post, bic, f.converged, f.n_iter);
    }
    Ok(())
}

fn fit_gibbs(opts: &RunOpts, init_from: Option<&Path>) -> Result<()> {
    let data = load(opts)?;
    let seed = opts.seed()?;
    let dir = opts.out_dir()?;
    let k = data.k();
    let gs = opts.g_range()?;
    let inits: Vec<Option<GibbsInit>> = gs
        .iter()
        .map(|&g| {
            let Some(src) = init_from else { return Ok(None) };
            let path = if src.is_dir() {
                map_path(src, g)
            } else if gs.len() == 1 {
                src.to_path_buf()
            } else {
                return Err(Error::InvalidArgument("--init-from must be a directory when several G are fitted".into()));
            };
            let fit: MapFit = io::read_json(&path)?;
            if fit.params.g() != g || fit.params.k() != k {
                return Err(Error::Dimension(format!(
                    "{} holds K = {}, G = {}; expected K = {k}, G = {g}",
                    path.display(),
                    fit.params.k(),
                    fit.params.g()
                )));
            }
            Ok(Some(GibbsInit::from_map(&fit)))
        })
        .collect::<Result<_>>()?;
    let chains: Vec<GibbsChain> = gs
        .par_iter()
        .zip(&inits)
        .map(|(&g, init)| {
            let cfg = GibbsConfig {
                g,
                hyper: hyper(opts, k, g),
                n_iter: opts.n_iter.unwrap_or(22_000),
                n_burn: opts.n_burn.unwrap_or(2_000),
            };
            gibbs_run(&data, &cfg, init.as_ref(), seed)
        })
        .collect::<Result<_>>()?;
    println!("{:>3} {:>8} {:>16} {:>16}", "G", "draws", "mean log_lik", "max log_lik");
    for ((&g, chain), init) in gs.iter().zip(&chains).zip(&inits) {
        io::save_chain(&chain_path(&dir, g, false), chain)?;
        if let Some(init) = init {
            io::write_json(&dir.join(format!("gibbs_init_g{g}.json")), init)?;
        }
        let ll = chain.log_lik();
        let mean = ll.iter().sum::<f64>() / ll.len() as f64;
        let max = ll.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        println!("{g:>3} {:>8} {mean:>16.4} {max:>16.4}", chain.len());
    }
    Ok(())
}

fn load_chains(dir: &Path, gs: &[usize], relabeled: bool) -> Result<Vec<GibbsChain>> {
    gs.iter().map(|&g| io::load_chain(&chain_path(dir, g, relabeled))).collect()
}

fn select(opts: &RunOpts, point: PointEstimate) -> Result<()> {
    let data = load(opts)?;
    let dir = opts.out_dir()?;
    let gs = opts.g_range()?;
    let chains = load_chains(&dir, &gs, false)?;
    let estimates: Vec<MixtureParams> = match point {
        PointEstimate::Map => gs
            .iter()
            .map(|&g| io::read_json::<MapFit>(&map_path(&dir, g)).map(|f| f.params))
            .collect::<Result<_>>()?,
        PointEstimate::Mean | PointEstimate::Median => load_chains(&dir, &gs, true)?
            .iter()
            .map(|c| if point == PointEstimate::Mean { c.posterior_mean() } else { c.posterior_median() })
            .collect(),
    };
    let report = selection_criteria(&data, &chains, &estimates, point)?;
    io::write_json(&dir.join("selection.json"), &report)?;
    io::write_csv_records(&dir.join("selection.csv"), &report.rows)?;
    println!(
        "{:>3} {:>14} {:>14} {:>14} {:>14} {:>14} {:>14}",
        "G", "DIC1", "DIC2", "BPIC1", "BPIC2", "BICM1", "BICM2"
    );
    for r in &report.rows {
        println!(
            "{:>3} {:>14.4} {:>14.4} {:>14.4} {:>14.4} {:>14.4} {:>14.4}",
            r.g, r.dic1, r.dic2, r.bpic1, r.bpic2, r.bicm1, r.bicm2
        );
    }
    Ok(())
}

/// Per-draw discrepancies, so p-values can be recomputed downstream.
#[derive(Serialize)]
struct DrawRow {
    obs_top1: f64,
    rep_top1: f64,
    obs_paired: f64,
    rep_paired: f64,
    obs_top1_cond: f64,
    rep_top1_cond: f64,
    obs_paired_cond: f64,
    rep_paired_cond: f64,
}

fn ppcheck(opts: &RunOpts, conditional: bool) -> Result<()> {
    let data = load(opts)?;
    let seed = opts.seed()?;
    let dir = opts.out_dir()?;
    let gs = opts.g_range()?;
    let chains = load_chains(&dir, &gs, false)?;
    let kind = if conditional { CheckKind::Both } else { CheckKind::Unconditional };
    let report = ppcheck_with(&data, &chains, seed, kind)?;
    io::write_json(&dir.join("ppcheck.json"), &report)?;
    io::write_csv_records(&dir.join("ppcheck.csv"), &report.rows)?;
    for (&g, draws) in gs.iter().zip(&report.draws) {
        let rows: Vec<DrawRow> = draws
            .iter()
            .map(|d| DrawRow {
                obs_top1: d.obs.top1,
                rep_top1: d.rep.top1,
                obs_paired: d.obs.paired,
                rep_paired: d.rep.paired,
                obs_top1_cond: d.obs.top1_cond,
                rep_top1_cond: d.rep.top1_cond,
                obs_paired_cond: d.obs.paired_cond,
                rep_paired_cond: d.rep.paired_cond,
            })
            .collect();
        io::write_csv_records(&dir.join(format!("ppcheck_draws_g{g}.csv")), &rows)?;
    }
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
    println!("{:>3} {:>8} {:>8} {:>11} {:>11}", "G", "top1", "paired", "top1_cond", "paired_cond");
    for r in &report.rows {
        println!(
            "{:>3} {:>8} {:>8} {:>11} {:>11}",
            r.g,
            fmt(r.post_pred_pvalue_top1),
            fmt(r.post_pred_pvalue_paired),
            fmt(r.post_pred_pvalue_top1_cond),
            fmt(r.post_pred_pvalue_paired_cond)
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct PosteriorSummary {
    g: usize,
    mean: MixtureParams,
    median: MixtureParams,
}

fn relabel(opts: &RunOpts) -> Result<()> {
    let dir = opts.out_dir()?;
    for g in opts.g_range()? {
        let chain = io::load_chain(&chain_path(&dir, g, false))?;
        let pivot: MapFit = io::read_json(&map_path(&dir, g))?;
        let out = pra_relabel(&chain, &pivot.params)?;
        io::save_chain(&chain_path(&dir, g, true), &out.chain)?;
        std::fs::write(dir.join(format!("perms_g{g}.csv")), io::format_permutations(&out.permutations))?;
        let summary = PosteriorSummary {
            g,
            mean: out.chain.posterior_mean(),
            median: out.chain.posterior_median(),
        };
        io::write_json(&dir.join(format!("posterior_g{g}.json")), &summary)?;
        let switched = out.permutations.iter().filter(|p| p.iter().enumerate().any(|(s, &h)| s != h)).count();
        println!("G = {g}: {switched} of {} draws relabeled", out.permutations.len());
        for (c, (row, w)) in summary.mean.supports_matrix().iter().zip(summary.mean.weights()).enumerate() {
            let cells: Vec<String> = row.iter().map(|p| format!("{p:.3}")).collect();
            println!("  component {}: weight {w:.3}, supports {}", c + 1, cells.join(" "));
        }
    }
    Ok(())
}
