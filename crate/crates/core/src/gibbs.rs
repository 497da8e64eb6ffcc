//! Gibbs sampling of the augmented PL mixture posterior.
//!
//! Each sweep draws, in order: the weights given the memberships, the latent
//! exponential times y_st given the current component of each unit, the
//! supports from their Gamma full conditionals, and finally the memberships.
//! With G = 1 the weight and membership steps are skipped.

use itertools::Itertools;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma};
use serde::{Deserialize, Serialize};

use crate::em::{Hyperparams, MapFit};
use crate::error::{Error, Result};
use crate::plmodel::{mixture_loglik_unchecked, MixtureParams};
use crate::rank_data::{binary_group_ind, Dataset, PartialOrdering};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsConfig {
    pub g: usize,
    pub hyper: Hyperparams,
    pub n_iter: usize,
    pub n_burn: usize,
}

impl GibbsConfig {
    /// Flat prior, 22000 sweeps of which 2000 are burn-in.
    pub fn new(k: usize, g: usize) -> Self {
        Self {
            g,
            hyper: Hyperparams::flat(k, g),
            n_iter: 22_000,
            n_burn: 2_000,
        }
    }
}

/// Starting supports and one-hot memberships.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsInit {
    pub supports: Vec<Vec<f64>>,
    pub z: Vec<Vec<u8>>,
}

impl GibbsInit {
    /// Starts the chain at a MAP estimate and its classification.
    pub fn from_map(fit: &MapFit) -> Self {
        Self {
            supports: fit.params.supports_matrix(),
            z: binary_group_ind(&fit.class_map, fit.params.g()).expect("class_map within 1..=G"),
        }
    }
}

/// Post-burn-in traces of a Gibbs run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsChain {
    k: usize,
    g: usize,
    /// L×(G·K), component-major within a draw.
    supports: Vec<f64>,
    /// L×G.
    weights: Vec<f64>,
    log_lik: Vec<f64>,
    deviance: Vec<f64>,
    seed: Option<u64>,
    n_iter: usize,
    n_burn: usize,
}

impl GibbsChain {
    /// Assembles a chain from flat traces; the deviance is derived from
    /// `log_lik`.
    pub fn from_traces(
        k: usize,
        g: usize,
        supports: Vec<f64>,
        weights: Vec<f64>,
        log_lik: Vec<f64>,
        seed: Option<u64>,
        n_iter: usize,
        n_burn: usize,
    ) -> Result<Self> {
        let l = log_lik.len();
        if l == 0 || supports.len() != l * g * k || weights.len() != l * g {
            return Err(Error::Dimension(format!(
                "chain traces do not match L = {l}, G = {g}, K = {k}"
            )));
        }
        let deviance = log_lik.iter().map(|ll| -2.0 * ll).collect();
        Ok(Self {
            k,
            g,
            supports,
            weights,
            log_lik,
            deviance,
            seed,
            n_iter,
            n_burn,
        })
    }

    pub fn len(&self) -> usize {
        self.log_lik.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_lik.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn g(&self) -> usize {
        self.g
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn n_iter(&self) -> usize {
        self.n_iter
    }

    pub fn n_burn(&self) -> usize {
        self.n_burn
    }

    /// Supports of draw `l`, component-major (`g * K + i`).
    pub fn supports_at(&self, l: usize) -> &[f64] {
        let w = self.g * self.k;
        &self.supports[l * w..(l + 1) * w]
    }

    pub fn weights_at(&self, l: usize) -> &[f64] {
        &self.weights[l * self.g..(l + 1) * self.g]
    }

    pub fn supports_trace(&self) -> &[f64] {
        &self.supports
    }

    pub fn weights_trace(&self) -> &[f64] {
        &self.weights
    }

    pub fn log_lik(&self) -> &[f64] {
        &self.log_lik
    }

    pub fn deviance(&self) -> &[f64] {
        &self.deviance
    }

    pub fn params_at(&self, l: usize) -> MixtureParams {
        MixtureParams::from_parts(self.k, self.supports_at(l).to_vec(), self.weights_at(l).to_vec())
    }

    /// Posterior mean of the normalized supports and of the weights. Only
    /// meaningful once label switching has been removed.
    pub fn posterior_mean(&self) -> MixtureParams {
        let (k, g, l) = (self.k, self.g, self.len());
        let mut supports = vec![0.0; g * k];
        let mut weights = vec![0.0; g];
        for d in 0..l {
            for (c, row) in self.supports_at(d).chunks(k).enumerate() {
                let total: f64 = row.iter().sum();
                for (acc, p) in supports[c * k..(c + 1) * k].iter_mut().zip(row) {
                    *acc += p / total;
                }
            }
            for (acc, w) in weights.iter_mut().zip(self.weights_at(d)) {
                *acc += w;
            }
        }
        supports.iter_mut().for_each(|v| *v /= l as f64);
        let wsum: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|v| *v /= wsum);
        MixtureParams::from_parts(k, supports, weights)
    }

    /// Component-wise posterior median of the normalized supports and of the
    /// weights (weights renormalized). Only meaningful after relabeling.
    pub fn posterior_median(&self) -> MixtureParams {
        let (k, g, l) = (self.k, self.g, self.len());
        let median = |mut v: Vec<f64>| {
            v.sort_by(f64::total_cmp);
            if l % 2 == 1 {
                v[l / 2]
            } else {
                0.5 * (v[l / 2 - 1] + v[l / 2])
            }
        };
        let mut supports = Vec::with_capacity(g * k);
        for c in 0..g {
            for i in 0..k {
                let col = (0..l)
                    .map(|d| {
                        let row = &self.supports_at(d)[c * k..(c + 1) * k];
                        row[i] / row.iter().sum::<f64>()
                    })
                    .collect();
                supports.push(median(col));
            }
        }
        let mut weights: Vec<f64> = (0..g)
            .map(|c| median((0..l).map(|d| self.weights_at(d)[c]).collect()))
            .collect();
        let wsum: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|v| *v /= wsum);
        MixtureParams::from_parts(k, supports, weights)
    }
}

/// Exponential rates Σ_i δ_sti p_i of the stages t = 1..n_s of one ordering.
pub fn stage_rates(ordering: &PartialOrdering, p: &[f64]) -> Result<Vec<f64>> {
    if p.len() != ordering.k() {
        return Err(Error::Dimension(format!("{} supports for K = {}", p.len(), ordering.k())));
    }
    let depth = ordering.nranked();
    let ranked = ordering.ranked();
    let mut is_ranked = vec![false; p.len()];
    for &item in ranked {
        is_ranked[item as usize - 1] = true;
    }
    let mut remaining: f64 = (0..p.len()).filter(|&i| !is_ranked[i]).map(|i| p[i]).sum();
    let mut rates = vec![0.0; depth];
    for t in (0..depth).rev() {
        remaining += p[ranked[t] as usize - 1];
        rates[t] = remaining;
    }
    Ok(rates)
}

/// Cumulative latent times Y_st = Σ_{t' ≤ t} y_st' of every unit.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTimes {
    offsets: Vec<usize>,
    cum: Vec<f64>,
}

impl LatentTimes {
    pub fn new(data: &Dataset) -> Self {
        let mut offsets = Vec::with_capacity(data.n() + 1);
        offsets.push(0);
        for &n in data.nranked() {
            offsets.push(offsets.last().unwrap() + n);
        }
        let total = *offsets.last().unwrap();
        Self {
            offsets,
            cum: vec![0.0; total],
        }
    }

    /// Builds cumulative times from per-stage values `y[s][t]`.
    pub fn from_times(data: &Dataset, y: &[Vec<f64>]) -> Result<Self> {
        let mut out = Self::new(data);
        if y.len() != data.n() {
            return Err(Error::Dimension("one vector of latent times per unit required".into()));
        }
        for (s, ys) in y.iter().enumerate() {
            if ys.len() != data.nranked()[s] {
                return Err(Error::Dimension(format!(
                    "unit {} needs {} latent times",
                    s + 1,
                    data.nranked()[s]
                )));
            }
            let slot = &mut out.cum[out.offsets[s]..out.offsets[s + 1]];
            let mut acc = 0.0;
            for (c, v) in slot.iter_mut().zip(ys) {
                acc += v;
                *c = acc;
            }
        }
        Ok(out)
    }

    pub fn cumulative(&self, s: usize) -> &[f64] {
        &self.cum[self.offsets[s]..self.offsets[s + 1]]
    }
}

/// Draws y_st ~ Exp(Σ_i δ_sti p_{g(s) i}) for every unit, `labels` being
/// 0-based components and `supports` a flat G×K matrix.
pub fn sample_latent_times<R: Rng + ?Sized>(
    data: &Dataset,
    labels: &[usize],
    supports: &[f64],
    times: &mut LatentTimes,
    rng: &mut R,
) {
    let k = data.k();
    let nranked = data.nranked();
    let mut rates = vec![0.0; k];
    for s in 0..data.n() {
        let p = &supports[labels[s] * k..(labels[s] + 1) * k];
        let full = data.full_order(s);
        let depth = nranked[s];
        let mut remaining: f64 = full[depth..].iter().map(|&i| p[i as usize - 1]).sum();
        for t in (0..depth).rev() {
            remaining += p[full[t] as usize - 1];
            rates[t] = remaining;
        }
        let slot = &mut times.cum[times.offsets[s]..times.offsets[s + 1]];
        let mut acc = 0.0;
        for (c, rate) in slot.iter_mut().zip(&rates) {
            let e: f64 = Exp1.sample(rng);
            acc += e / rate;
            *c = acc;
        }
    }
}

/// Sufficient statistics of the support full conditionals.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedStats {
    pub k: usize,
    pub g: usize,
    /// Units per component.
    pub counts: Vec<f64>,
    /// γ_gi = Σ_s z_sg u_si, flat G×K.
    pub gamma: Vec<f64>,
    /// Σ_s z_sg Σ_t δ_sti y_st, flat G×K.
    pub exposure: Vec<f64>,
}

impl AugmentedStats {
    pub fn new(k: usize, g: usize) -> Self {
        Self {
            k,
            g,
            counts: vec![0.0; g],
            gamma: vec![0.0; g * k],
            exposure: vec![0.0; g * k],
        }
    }

    pub fn compute(data: &Dataset, labels: &[usize], times: &LatentTimes, g: usize) -> Self {
        let mut stats = Self::new(data.k(), g);
        stats.fill(data, labels, times);
        stats
    }

    fn fill(&mut self, data: &Dataset, labels: &[usize], times: &LatentTimes) {
        let k = self.k;
        self.counts.iter_mut().for_each(|v| *v = 0.0);
        self.gamma.iter_mut().for_each(|v| *v = 0.0);
        self.exposure.iter_mut().for_each(|v| *v = 0.0);
        let nranked = data.nranked();
        for s in 0..data.n() {
            let c = labels[s];
            self.counts[c] += 1.0;
            let cum = times.cumulative(s);
            let depth = nranked[s];
            let gamma = &mut self.gamma[c * k..(c + 1) * k];
            let exposure = &mut self.exposure[c * k..(c + 1) * k];
            for (pos, &item) in data.full_order(s).iter().enumerate() {
                let i = item as usize - 1;
                if pos < depth {
                    gamma[i] += 1.0;
                }
                exposure[i] += cum[pos.min(depth - 1)];
            }
        }
    }
}

/// ω ~ Dirichlet(α_g + n_g).
pub fn sample_weights<R: Rng + ?Sized>(counts: &[f64], alpha: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    let mut w = Vec::with_capacity(counts.len());
    for (&n, &a) in counts.iter().zip(alpha) {
        let shape = a + n;
        w.push(if shape > 0.0 {
            Gamma::new(shape, 1.0)
                .map_err(|e| Error::Numerical(format!("Dirichlet draw: {e}")))?
                .sample(rng)
        } else {
            0.0
        });
    }
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Numerical("Dirichlet full conditional is degenerate".into()));
    }
    w.iter_mut().for_each(|v| *v /= total);
    Ok(w)
}

/// p_gi ~ Gamma(c_gi + γ_gi, d_g + exposure_gi), in place. A component with
/// zero rate (empty under an improper prior) keeps its current supports.
pub fn sample_supports<R: Rng + ?Sized>(
    stats: &AugmentedStats,
    hyper: &Hyperparams,
    supports: &mut [f64],
    rng: &mut R,
) -> Result<()> {
    let k = stats.k;
    for c in 0..stats.g {
        for i in 0..k {
            let shape = hyper.shape[c][i] + stats.gamma[c * k + i];
            let rate = hyper.rate[c] + stats.exposure[c * k + i];
            if !(shape > 0.0) || !rate.is_finite() {
                return Err(Error::DegenerateConditional {
                    component: c + 1,
                    item: i + 1,
                    shape,
                    rate,
                });
            }
            if rate == 0.0 {
                continue;
            }
            let draw = Gamma::new(shape, 1.0 / rate)
                .map_err(|e| Error::Numerical(format!("Gamma draw: {e}")))?
                .sample(rng);
            supports[c * k + i] = draw.max(f64::MIN_POSITIVE);
        }
    }
    Ok(())
}

/// Draws z_s ~ Multinomial(1, m_s) with
/// m_sg ∝ ω_g Π_i p_gi^{u_si} exp(-p_gi Σ_t δ_sti y_st), in log space.
pub fn sample_memberships<R: Rng + ?Sized>(
    data: &Dataset,
    times: &LatentTimes,
    supports: &[f64],
    weights: &[f64],
    labels: &mut [usize],
    rng: &mut R,
) {
    let k = data.k();
    let g = weights.len();
    let log_p: Vec<f64> = supports.iter().map(|p| p.ln()).collect();
    let log_w: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
    let nranked = data.nranked();
    let mut logm = vec![0.0; g];
    for s in 0..data.n() {
        let full = data.full_order(s);
        let depth = nranked[s];
        let cum = times.cumulative(s);
        for (c, m) in logm.iter_mut().enumerate() {
            if log_w[c] == f64::NEG_INFINITY {
                *m = f64::NEG_INFINITY;
                continue;
            }
            let p = &supports[c * k..(c + 1) * k];
            let lp = &log_p[c * k..(c + 1) * k];
            let mut acc = log_w[c];
            for (pos, &item) in full.iter().enumerate() {
                let i = item as usize - 1;
                if pos < depth {
                    acc += lp[i];
                }
                acc -= p[i] * cum[pos.min(depth - 1)];
            }
            *m = acc;
        }
        let max = logm.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for m in logm.iter_mut() {
            *m = (*m - max).exp();
            total += *m;
        }
        let mut u = rng.random::<f64>() * total;
        let mut pick = g - 1;
        for (c, &m) in logm.iter().enumerate() {
            if u < m {
                pick = c;
                break;
            }
            u -= m;
        }
        // guard against landing on a zero-probability tail component
        while logm[pick] == 0.0 && pick > 0 {
            pick -= 1;
        }
        labels[s] = pick;
    }
}

/// Runs the sampler for `config.n_iter` sweeps and keeps the draws after the
/// first `config.n_burn`. Identical inputs and seed give identical chains.
pub fn gibbs_run(
    data: &Dataset,
    config: &GibbsConfig,
    init: Option<&GibbsInit>,
    seed: u64,
) -> Result<GibbsChain> {
    let (k, g, n) = (data.k(), config.g, data.n());
    if g == 0 {
        return Err(Error::InvalidArgument("G must be at least 1".into()));
    }
    if config.n_iter <= config.n_burn {
        return Err(Error::InvalidArgument(format!(
            "n_iter = {} must exceed n_burn = {}",
            config.n_iter, config.n_burn
        )));
    }
    config.hyper.validate(k, g)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let (mut supports, mut labels) = match init {
        Some(init) => {
            let params = MixtureParams::new(init.supports.clone(), vec![1.0 / g as f64; g])?;
            if params.k() != k || params.g() != g {
                return Err(Error::Dimension(format!(
                    "initial supports are {}×{}, expected {g}×{k}",
                    params.g(),
                    params.k()
                )));
            }
            if init.z.len() != n {
                return Err(Error::Dimension(format!(
                    "{} membership rows for {n} units",
                    init.z.len()
                )));
            }
            let labels = init
                .z
                .iter()
                .enumerate()
                .map(|(s, row)| {
                    let ones: Vec<usize> = row.iter().positions(|&v| v == 1).collect();
                    if row.len() != g || ones.len() != 1 || row.iter().any(|&v| v > 1) {
                        return Err(Error::InvalidArgument(format!(
                            "membership row {} is not one-hot over {g} components",
                            s + 1
                        )));
                    }
                    Ok(ones[0])
                })
                .collect::<Result<Vec<_>>>()?;
            (params.supports().to_vec(), labels)
        }
        None => {
            let supports = (0..g * k).map(|_| 1.0 - rng.random::<f64>()).collect();
            let labels = (0..n).map(|_| rng.random_range(0..g)).collect();
            (supports, labels)
        }
    };

    let kept = config.n_iter - config.n_burn;
    let mut trace_p = Vec::with_capacity(kept * g * k);
    let mut trace_w = Vec::with_capacity(kept * g);
    let mut trace_ll = Vec::with_capacity(kept);
    let mut times = LatentTimes::new(data);
    let mut stats = AugmentedStats::new(k, g);
    let mut weights = vec![1.0; g];
    let mut counts = vec![0.0; g];

    for sweep in 0..config.n_iter {
        if g > 1 {
            counts.iter_mut().for_each(|v| *v = 0.0);
            for &c in &labels {
                counts[c] += 1.0;
            }
            weights = sample_weights(&counts, &config.hyper.alpha, &mut rng)?;
        }
        sample_latent_times(data, &labels, &supports, &mut times, &mut rng);
        stats.fill(data, &labels, &times);
        sample_supports(&stats, &config.hyper, &mut supports, &mut rng)?;
        if g > 1 {
            sample_memberships(data, &times, &supports, &weights, &mut labels, &mut rng);
        }
        if sweep >= config.n_burn {
            let params = MixtureParams::from_parts(k, supports.clone(), weights.clone());
            trace_ll.push(mixture_loglik_unchecked(&params, data));
            trace_p.extend_from_slice(&supports);
            trace_w.extend_from_slice(&weights);
        }
    }
    GibbsChain::from_traces(
        k,
        g,
        trace_p,
        trace_w,
        trace_ll,
        Some(seed),
        config.n_iter,
        config.n_burn,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_rates_count_remaining_items() {
        let o = PartialOrdering::new(vec![2, 3, 1]).unwrap();
        assert_eq!(stage_rates(&o, &[1.0, 1.0, 1.0]).unwrap(), vec![3.0, 2.0, 1.0]);
        let o = PartialOrdering::new(vec![4, 0, 0, 0]).unwrap();
        assert_eq!(stage_rates(&o, &[0.1, 0.2, 0.3, 0.4]).unwrap()[0], 0.1 + 0.2 + 0.3 + 0.4);
    }

    #[test]
    fn chain_is_reproducible() {
        let data = Dataset::from_orderings(&[
            vec![1, 2, 3, 4],
            vec![2, 1, 0, 0],
            vec![4, 3, 1, 2],
            vec![3, 0, 0, 0],
        ])
        .unwrap();
        let cfg = GibbsConfig {
            n_iter: 200,
            n_burn: 50,
            ..GibbsConfig::new(4, 2)
        };
        let a = gibbs_run(&data, &cfg, None, 5).unwrap();
        let b = gibbs_run(&data, &cfg, None, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 150);
        for (d, ll) in a.deviance().iter().zip(a.log_lik()) {
            assert_eq!(*d, -2.0 * ll);
        }
        assert!(a.supports_trace().iter().all(|&p| p > 0.0));
        for l in 0..a.len() {
            assert!((a.weights_at(l).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_settings() {
        let data = Dataset::from_orderings(&[vec![1, 2, 3]]).unwrap();
        let cfg = GibbsConfig {
            n_iter: 10,
            n_burn: 10,
            ..GibbsConfig::new(3, 1)
        };
        assert!(gibbs_run(&data, &cfg, None, 1).is_err());
        let cfg = GibbsConfig {
            n_iter: 10,
            n_burn: 0,
            ..GibbsConfig::new(3, 2)
        };
        let bad = GibbsInit {
            supports: vec![vec![1.0; 3]; 2],
            z: vec![vec![1, 1]],
        };
        assert!(gibbs_run(&data, &cfg, Some(&bad), 1).is_err());
    }

    #[test]
    fn degenerate_shape_is_reported() {
        let data = Dataset::from_orderings(&[vec![1, 0, 0, 0]]).unwrap();
        let cfg = GibbsConfig {
            hyper: Hyperparams::constant(4, 1, 0.0, 1.0, 1.0),
            n_iter: 5,
            n_burn: 0,
            g: 1,
        };
        match gibbs_run(&data, &cfg, None, 1) {
            Err(Error::DegenerateConditional { component: 1, item, .. }) => assert_eq!(item, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
