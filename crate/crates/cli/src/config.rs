use std::path::{Path, PathBuf};

use clap::Args;
use serde::Deserialize;

use plmix::io::DataFormat;
use plmix::{Error, Result};

/// Options shared by all subcommands. Each may also come from a
/// `PLMIX_*` environment variable or from the `--config` TOML file; the
/// command line wins over the environment, which wins over the file.
#[derive(Debug, Clone, Default, Args)]
pub struct RunOpts {
    /// TOML file with defaults for any of these options (snake_case keys)
    #[arg(long, global = true, env = "PLMIX_CONFIG")]
    pub config: Option<PathBuf>,

    /// Input dataset
    #[arg(long, global = true, env = "PLMIX_INPUT")]
    pub input: Option<PathBuf>,

    /// Input layout: csv-ordering, csv-ranking or preflib
    #[arg(long, global = true, env = "PLMIX_FORMAT")]
    pub format: Option<DataFormat>,

    /// Number of items (default: inferred from the data)
    #[arg(long = "K", global = true, env = "PLMIX_K")]
    pub k: Option<usize>,

    /// Number of mixture components
    #[arg(long = "G", global = true, env = "PLMIX_G")]
    pub g: Option<usize>,

    /// Fit every G in 1..=G-max
    #[arg(long = "G-max", global = true, env = "PLMIX_G_MAX")]
    pub g_max: Option<usize>,

    /// EM starting points per G
    #[arg(long, global = true, env = "PLMIX_N_START")]
    pub n_start: Option<usize>,

    #[arg(long, global = true, env = "PLMIX_MAX_ITER")]
    pub max_iter: Option<usize>,

    /// EM stopping tolerance on the log-posterior
    #[arg(long, global = true, env = "PLMIX_TOL")]
    pub tol: Option<f64>,

    /// Gibbs sweeps, burn-in included
    #[arg(long, global = true, env = "PLMIX_N_ITER")]
    pub n_iter: Option<usize>,

    #[arg(long, global = true, env = "PLMIX_N_BURN")]
    pub n_burn: Option<usize>,

    /// Random seed (required by stochastic commands)
    #[arg(long, global = true, env = "PLMIX_SEED")]
    pub seed: Option<u64>,

    /// Gamma prior shape for every support
    #[arg(long, global = true, env = "PLMIX_SHAPE")]
    pub shape: Option<f64>,

    /// Gamma prior rate for every component
    #[arg(long, global = true, env = "PLMIX_RATE")]
    pub rate: Option<f64>,

    /// Dirichlet concentration for every weight
    #[arg(long, global = true, env = "PLMIX_ALPHA")]
    pub alpha: Option<f64>,

    /// Center EM starting supports on the top-choice frequencies
    #[arg(long, global = true, env = "PLMIX_CENTERED_START")]
    pub centered_start: Option<bool>,

    /// Worker threads (default: all cores)
    #[arg(long, global = true, env = "PLMIX_PARALLEL")]
    pub parallel: Option<usize>,

    /// Output directory (or file for convert/summarize)
    #[arg(long, global = true, env = "PLMIX_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileOpts {
    input: Option<PathBuf>,
    format: Option<String>,
    #[serde(alias = "K")]
    k: Option<usize>,
    #[serde(alias = "G")]
    g: Option<usize>,
    #[serde(alias = "G_max")]
    g_max: Option<usize>,
    n_start: Option<usize>,
    max_iter: Option<usize>,
    tol: Option<f64>,
    n_iter: Option<usize>,
    n_burn: Option<usize>,
    seed: Option<u64>,
    shape: Option<f64>,
    rate: Option<f64>,
    alpha: Option<f64>,
    centered_start: Option<bool>,
    parallel: Option<usize>,
    out: Option<PathBuf>,
}

impl RunOpts {
    /// Fills unset options from the config file, if one was given.
    pub fn merge_config(mut self) -> Result<Self> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let text = std::fs::read_to_string(&path)?;
        let file: FileOpts = toml::from_str(&text)
            .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rel = |p: PathBuf| if p.is_relative() { base.join(p) } else { p };
        macro_rules! fill {
            ($($f:ident),*) => { $( if self.$f.is_none() { self.$f = file.$f; } )* };
        }
        fill!(k, g, g_max, n_start, max_iter, tol, n_iter, n_burn, seed, shape, rate, alpha, centered_start, parallel);
        if self.input.is_none() {
            self.input = file.input.map(rel);
        }
        if self.out.is_none() {
            self.out = file.out.map(rel);
        }
        if self.format.is_none() {
            self.format = file.format.map(|f| f.parse()).transpose()?;
        }
        Ok(self)
    }

    pub fn input(&self) -> Result<&Path> {
        self.input
            .as_deref()
            .ok_or_else(|| Error::InvalidArgument("--input is required".into()))
    }

    pub fn format(&self) -> DataFormat {
        self.format.unwrap_or(DataFormat::CsvOrdering)
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::InvalidArgument("--seed is required for this command".into()))
    }

    pub fn out_dir(&self) -> Result<PathBuf> {
        let dir = self.out.clone().unwrap_or_else(|| PathBuf::from("."));
        std::fs::create_dir_all(&dir)?;
        Ok(dir)
    }

    /// Candidate numbers of components: `1..=G-max`, or `G`, or 1.
    pub fn g_range(&self) -> Result<Vec<usize>> {
        match (self.g, self.g_max) {
            (Some(_), Some(_)) => Err(Error::InvalidArgument("give either --G or --G-max, not both".into())),
            (_, Some(0)) | (Some(0), _) => Err(Error::InvalidArgument("G must be at least 1".into())),
            (_, Some(m)) => Ok((1..=m).collect()),
            (g, None) => Ok(vec![g.unwrap_or(1)]),
        }
    }
}
