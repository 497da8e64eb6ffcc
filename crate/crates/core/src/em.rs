//! MAP estimation of PL mixtures with the data-augmented EM algorithm.
//!
//! Under the conjugate setup (Gamma(c_gi, d_g) supports, Dirichlet(α) weights)
//! each iteration computes responsibilities ẑ_sg and then
//!
//! ```text
//! ω_g  = (α_g - 1 + Σ_s ẑ_sg) / (Σ_g α_g - G + N)
//! p_gi = (c_gi - 1 + Σ_s ẑ_sg u_si) / (d_g + Σ_s ẑ_sg Σ_t δ_sti / Σ_i δ_sti p_gi)
//! ```
//!
//! With c = 1, d = 0, α = 1 this is the MM algorithm for the maximum
//! likelihood estimate, and [`MapFit::bic`] is reported.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plmodel::{component_log_probs, log_sum_exp, MixtureParams, NormalizedParams};
use crate::rank_data::Dataset;

/// Supports updated below this value are clamped to it.
pub const SUPPORT_FLOOR: f64 = 1e-12;

/// Hyperparameters of the conjugate prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Gamma shapes c_gi, row-major G×K.
    pub shape: Vec<Vec<f64>>,
    /// Gamma rates d_g.
    pub rate: Vec<f64>,
    /// Dirichlet concentrations α_g.
    pub alpha: Vec<f64>,
}

impl Hyperparams {
    /// c = 1, d = 0, α = 1: the MAP estimate is the MLE.
    pub fn flat(k: usize, g: usize) -> Self {
        Self {
            shape: vec![vec![1.0; k]; g],
            rate: vec![0.0; g],
            alpha: vec![1.0; g],
        }
    }

    /// Same shape for every entry, same rate and concentration for every component.
    pub fn constant(k: usize, g: usize, shape: f64, rate: f64, alpha: f64) -> Self {
        Self {
            shape: vec![vec![shape; k]; g],
            rate: vec![rate; g],
            alpha: vec![alpha; g],
        }
    }

    pub fn is_flat(&self) -> bool {
        self.shape.iter().flatten().all(|&c| c == 1.0)
            && self.rate.iter().all(|&d| d == 0.0)
            && self.alpha.iter().all(|&a| a == 1.0)
    }

    pub fn g(&self) -> usize {
        self.alpha.len()
    }

    pub fn validate(&self, k: usize, g: usize) -> Result<()> {
        if self.shape.len() != g
            || self.shape.iter().any(|row| row.len() != k)
            || self.rate.len() != g
            || self.alpha.len() != g
        {
            return Err(Error::Dimension(format!(
                "hyperparameters do not match K = {k}, G = {g}"
            )));
        }
        let finite_nonneg = |v: &f64| v.is_finite() && *v >= 0.0;
        if !self.shape.iter().flatten().all(finite_nonneg)
            || !self.rate.iter().all(finite_nonneg)
            || !self.alpha.iter().all(finite_nonneg)
        {
            return Err(Error::InvalidArgument(
                "hyperparameters must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Log prior density up to an additive constant.
pub fn log_prior(params: &MixtureParams, hyper: &Hyperparams) -> f64 {
    let mut lp = 0.0;
    for c in 0..params.g() {
        for (&p, &shape) in params.support_row(c).iter().zip(&hyper.shape[c]) {
            if shape != 1.0 {
                lp += (shape - 1.0) * p.ln();
            }
            lp -= hyper.rate[c] * p;
        }
        if hyper.alpha[c] != 1.0 {
            lp += (hyper.alpha[c] - 1.0) * params.weights()[c].ln();
        }
    }
    lp
}

/// Responsibilities and observed-data log-likelihood at given parameters.
#[derive(Debug, Clone)]
pub struct EStep {
    /// ẑ_sg, row-major N×G.
    pub responsibilities: Vec<f64>,
    pub log_lik: f64,
}

pub fn e_step(params: &MixtureParams, data: &Dataset) -> Result<EStep> {
    let g = params.g();
    let mut resp = component_log_probs(params, data)?;
    let log_w: Vec<f64> = params.weights().iter().map(|w| w.ln()).collect();
    let mut log_lik = 0.0;
    for (s, row) in resp.chunks_mut(g).enumerate() {
        for (v, lw) in row.iter_mut().zip(&log_w) {
            *v = if *lw == f64::NEG_INFINITY { f64::NEG_INFINITY } else { *v + lw };
        }
        let norm = log_sum_exp(row);
        if !norm.is_finite() {
            return Err(Error::Numerical(format!(
                "all responsibilities of unit {} vanish",
                s + 1
            )));
        }
        log_lik += norm;
        row.iter_mut().for_each(|v| *v = (*v - norm).exp());
    }
    Ok(EStep {
        responsibilities: resp,
        log_lik,
    })
}

/// M-step given responsibilities. `previous` supplies the p^(l) entering the
/// stage denominators. Returns the new parameters and the number of clamped
/// supports.
pub fn m_step(
    responsibilities: &[f64],
    previous: &MixtureParams,
    data: &Dataset,
    hyper: &Hyperparams,
) -> Result<(MixtureParams, usize)> {
    let (k, g, n) = (previous.k(), previous.g(), data.n());
    if responsibilities.len() != n * g {
        return Err(Error::Dimension("responsibilities do not match N×G".into()));
    }
    let alpha_total: f64 = hyper.alpha.iter().sum();
    let weight_den = alpha_total - g as f64 + n as f64;
    if !(weight_den > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "Σα - G + N = {weight_den} must be positive"
        )));
    }

    let mut mass = vec![0.0; g];
    let mut gamma_hat = vec![0.0; g * k];
    let mut denom = vec![0.0; g * k];
    let mut inv_cum = vec![0.0; k];
    let nranked = data.nranked();
    for s in 0..n {
        let full = data.full_order(s);
        let depth = nranked[s];
        for c in 0..g {
            let z = responsibilities[s * g + c];
            if z == 0.0 {
                continue;
            }
            mass[c] += z;
            let p = previous.support_row(c);
            // inv_cum[t] = Σ_{t' ≤ t} 1 / R_t', R_t the stage-(t+1) rate
            let mut remaining: f64 = full[depth..].iter().map(|&i| p[i as usize - 1]).sum();
            for t in (0..depth).rev() {
                remaining += p[full[t] as usize - 1];
                inv_cum[t] = 1.0 / remaining;
            }
            for t in 1..depth {
                inv_cum[t] += inv_cum[t - 1];
            }
            let row_denom = &mut denom[c * k..(c + 1) * k];
            let row_gamma = &mut gamma_hat[c * k..(c + 1) * k];
            for (pos, &item) in full.iter().enumerate() {
                let i = item as usize - 1;
                if pos < depth {
                    row_gamma[i] += z;
                    row_denom[i] += z * inv_cum[pos];
                } else {
                    row_denom[i] += z * inv_cum[depth - 1];
                }
            }
        }
    }

    let mut weights = Vec::with_capacity(g);
    for c in 0..g {
        let num = hyper.alpha[c] - 1.0 + mass[c];
        if num < -1e-12 {
            return Err(Error::InvalidArgument(format!(
                "weight numerator α - 1 + Σẑ = {num} is negative for component {}",
                c + 1
            )));
        }
        weights.push(num.max(0.0) / weight_den);
    }
    let wsum: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= wsum);

    let mut supports = Vec::with_capacity(g * k);
    let mut clamped = 0;
    for c in 0..g {
        for i in 0..k {
            let num = hyper.shape[c][i] - 1.0 + gamma_hat[c * k + i];
            let den = hyper.rate[c] + denom[c * k + i];
            if num < -1e-12 {
                return Err(Error::InvalidArgument(format!(
                    "support numerator c - 1 + γ̂ = {num} is negative for component {}, item {}",
                    c + 1,
                    i + 1
                )));
            }
            let value = if den > 0.0 {
                num / den
            } else {
                // component carries no mass under an improper rate: nothing to update
                previous.support_row(c)[i]
            };
            if value < SUPPORT_FLOOR {
                clamped += 1;
                supports.push(SUPPORT_FLOOR);
            } else {
                supports.push(value);
            }
        }
    }
    Ok((MixtureParams::from_parts(k, supports, weights), clamped))
}

/// One EM iteration: E-step at `params`, then M-step.
#[derive(Debug, Clone)]
pub struct EmStep {
    pub params: MixtureParams,
    /// Responsibilities computed at the input parameters.
    pub responsibilities: Vec<f64>,
    /// Log-posterior of the input parameters.
    pub log_posterior: f64,
    pub clamped: usize,
}

pub fn em_step(params: &MixtureParams, data: &Dataset, hyper: &Hyperparams) -> Result<EmStep> {
    hyper.validate(params.k(), params.g())?;
    let e = e_step(params, data)?;
    let (next, clamped) = m_step(&e.responsibilities, params, data, hyper)?;
    Ok(EmStep {
        params: next,
        log_posterior: e.log_lik + log_prior(params, hyper),
        responsibilities: e.responsibilities,
        clamped,
    })
}

/// Settings shared by single and multistart MAP fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapConfig {
    pub g: usize,
    pub hyper: Hyperparams,
    pub max_iter: usize,
    pub tol: f64,
}

impl MapConfig {
    /// Flat prior, `max_iter = 400 G`, `tol = 1e-6`.
    pub fn new(k: usize, g: usize) -> Self {
        Self {
            g,
            hyper: Hyperparams::flat(k, g),
            max_iter: 400 * g,
            tol: 1e-6,
        }
    }
}

/// Result of a MAP fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapFit {
    /// Unnormalized estimate, as iterated by EM.
    pub params: MixtureParams,
    /// Support rows rescaled to sum to one, and marginal supports.
    pub normalized: NormalizedParams,
    /// ẑ_sg at the final estimate, one row per unit.
    pub z_hat: Vec<Vec<f64>>,
    /// 1-based MAP component of each unit (lowest index wins ties).
    pub class_map: Vec<usize>,
    /// Log-posterior of every iterate, starting with the initial values.
    pub log_post_trace: Vec<f64>,
    pub log_post: f64,
    pub log_lik: f64,
    pub converged: bool,
    pub n_iter: usize,
    /// Number of support updates clamped to the floor over the whole run.
    pub clamped: usize,
    /// Present for flat-prior fits only.
    pub bic: Option<f64>,
}

impl MapFit {
    pub fn p_map(&self) -> &[Vec<f64>] {
        &self.normalized.supports
    }

    pub fn w_map(&self) -> &[f64] {
        &self.normalized.weights
    }
}

/// BIC = -2 loglik + (G(K-1) + G - 1) log N.
pub fn bic(loglik: f64, k: usize, g: usize, n: usize) -> f64 {
    let free = g * (k - 1) + (g - 1);
    -2.0 * loglik + free as f64 * (n as f64).ln()
}

/// Runs EM from `init` until the absolute log-posterior change drops below
/// `tol` or `max_iter` iterations are done.
pub fn fit_map(data: &Dataset, config: &MapConfig, init: &MixtureParams) -> Result<MapFit> {
    let (k, g) = (data.k(), config.g);
    if init.k() != k || init.g() != g {
        return Err(Error::Dimension(format!(
            "initial values have K = {}, G = {}; expected K = {k}, G = {g}",
            init.k(),
            init.g()
        )));
    }
    config.hyper.validate(k, g)?;

    let mut params = init.clone();
    let mut e = e_step(&params, data)?;
    let mut log_post = e.log_lik + log_prior(&params, &config.hyper);
    if !log_post.is_finite() {
        return Err(Error::NonFiniteObjective { iteration: 0 });
    }
    let mut trace = vec![log_post];
    let mut converged = false;
    let mut n_iter = 0;
    let mut clamped = 0;
    while n_iter < config.max_iter {
        let (next, c) = m_step(&e.responsibilities, &params, data, &config.hyper)?;
        clamped += c;
        n_iter += 1;
        params = next;
        e = e_step(&params, data)?;
        let next_post = e.log_lik + log_prior(&params, &config.hyper);
        if !next_post.is_finite() {
            return Err(Error::NonFiniteObjective { iteration: n_iter });
        }
        trace.push(next_post);
        let delta = (next_post - log_post).abs();
        log_post = next_post;
        if delta < config.tol {
            converged = true;
            break;
        }
    }
    if clamped > 0 {
        log::warn!("{clamped} support updates were clamped to {SUPPORT_FLOOR:e}");
    }

    let z_hat: Vec<Vec<f64>> = e.responsibilities.chunks(g).map(<[f64]>::to_vec).collect();
    let class_map = z_hat
        .iter()
        .map(|row| {
            let mut best = 0;
            for (c, &z) in row.iter().enumerate() {
                if z > row[best] {
                    best = c;
                }
            }
            best + 1
        })
        .collect();
    let bic = config
        .hyper
        .is_flat()
        .then(|| bic(e.log_lik, k, g, data.n()));
    Ok(MapFit {
        normalized: params.normalized(),
        params,
        z_hat,
        class_map,
        log_post_trace: trace,
        log_post,
        log_lik: e.log_lik,
        converged,
        n_iter,
        clamped,
        bic,
    })
}

/// Random starting values: uniform supports on (0, 1] and weights uniform on
/// the simplex. With `centered`, supports are the smoothed first-choice
/// relative frequencies times a Uniform(0.5, 1.5) factor.
pub fn random_init<R: Rng + ?Sized>(
    data: &Dataset,
    g: usize,
    centered: bool,
    rng: &mut R,
) -> MixtureParams {
    let k = data.k();
    let center: Option<Vec<f64>> = centered.then(|| {
        let n = data.n() as f64;
        data.top_choice_counts()
            .iter()
            .map(|&r| (r as f64 + 0.5) / (n + 0.5 * k as f64))
            .collect()
    });
    let mut supports = Vec::with_capacity(g * k);
    for _ in 0..g {
        for i in 0..k {
            let u = 1.0 - rng.random::<f64>();
            supports.push(match &center {
                Some(f) => f[i] * (0.5 + u),
                None => u,
            });
        }
    }
    let mut weights: Vec<f64> = (0..g).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w: &mut f64| *w /= total);
    MixtureParams::from_parts(k, supports, weights)
}

/// Independent RNG stream for start `index` under `seed`.
pub fn start_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Best of several EM runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultistartFit {
    pub best: MapFit,
    /// 0-based index of the winning start.
    pub best_start: usize,
    /// Final log-posterior of every start, in start order.
    pub final_log_posts: Vec<f64>,
}

/// Runs `n_start` fits from random starting values, start `j` drawing its
/// initial values from [`start_rng`]`(seed, j)`, and keeps the one with the
/// highest final log-posterior (earliest start on ties).
pub fn fit_map_multistart(
    data: &Dataset,
    config: &MapConfig,
    n_start: usize,
    centered: bool,
    seed: u64,
) -> Result<MultistartFit> {
    if n_start == 0 {
        return Err(Error::InvalidArgument("n_start must be at least 1".into()));
    }
    let fits: Vec<MapFit> = (0..n_start)
        .into_par_iter()
        .map(|j| {
            let init = random_init(data, config.g, centered, &mut start_rng(seed, j));
            fit_map(data, config, &init)
        })
        .collect::<Result<_>>()?;
    let final_log_posts: Vec<f64> = fits.iter().map(|f| f.log_post).collect();
    let mut best_start = 0;
    for (j, &lp) in final_log_posts.iter().enumerate() {
        if lp > final_log_posts[best_start] {
            best_start = j;
        }
    }
    let best = fits.into_iter().nth(best_start).expect("n_start >= 1");
    Ok(MultistartFit {
        best,
        best_start,
        final_log_posts,
    })
}
