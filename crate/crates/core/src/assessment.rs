//! Posterior predictive checks with top-choice and paired-comparison
//! chi-square discrepancies.
//!
//! Both discrepancies compare observed counts with expectations built from
//! the marginal normalized supports p̄, so they do not depend on component
//! labels. Top choices: E_i = N p̄_i. Paired comparisons: for each pair that
//! was decided n_ii' times, E_ii' = n_ii' p̄_i / (p̄_i + p̄_i'). The
//! conditional versions sum the discrepancy over the subsamples sharing the
//! same number of ranked items.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand::distr::{weighted::WeightedIndex, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::GibbsChain;
use crate::plmodel::MixtureParams;
use crate::rank_data::{accumulate_pairs, pl_shuffle, Dataset};

/// Pearson statistic of top-choice counts against N p̄.
pub fn chi2_top1(counts: &[u64], pbar: &[f64]) -> Result<f64> {
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return Ok(0.0);
    }
    let mut x2 = 0.0;
    for (i, (&r, &p)) in counts.iter().zip(pbar).enumerate() {
        let e = n as f64 * p;
        if !(e > 0.0) {
            return Err(Error::Numerical(format!(
                "expected top-choice count of item {} is {e}",
                i + 1
            )));
        }
        x2 += (r as f64 - e).powi(2) / e;
    }
    Ok(x2)
}

/// Pearson statistic of a flat K×K paired-comparison matrix against the Luce
/// pairwise law. Undecided pairs are skipped.
pub fn chi2_paired(tau: &[u64], pbar: &[f64]) -> f64 {
    let k = pbar.len();
    let mut x2 = 0.0;
    for i in 0..k {
        for j in i + 1..k {
            let (a, b) = (tau[i * k + j] as f64, tau[j * k + i] as f64);
            let n = a + b;
            if n == 0.0 {
                continue;
            }
            let pi = pbar[i] / (pbar[i] + pbar[j]);
            let (ea, eb) = (n * pi, n * (1.0 - pi));
            if ea > 0.0 {
                x2 += (a - ea).powi(2) / ea;
            }
            if eb > 0.0 {
                x2 += (b - eb).powi(2) / eb;
            }
        }
    }
    x2
}

/// Top-choice and paired-comparison counts, overall and by depth.
#[derive(Debug, Clone)]
struct Tallies {
    k: usize,
    /// Realized depths; stratum index of depth d is `slot[d]`.
    slot: Vec<usize>,
    top: Vec<Vec<u64>>,
    tau: Vec<Vec<u64>>,
}

impl Tallies {
    fn new(k: usize, depths: &[usize]) -> Self {
        let mut slot = vec![usize::MAX; k + 1];
        let mut m = 0;
        for d in 1..=k {
            if depths.contains(&d) {
                slot[d] = m;
                m += 1;
            }
        }
        Self {
            k,
            slot,
            top: vec![vec![0; k]; m],
            tau: vec![vec![0; k * k]; m],
        }
    }

    fn clear(&mut self) {
        self.top.iter_mut().flatten().for_each(|v| *v = 0);
        self.tau.iter_mut().flatten().for_each(|v| *v = 0);
    }

    fn add(&mut self, full: &[u32], depth: usize) {
        let m = self.slot[depth];
        self.top[m][full[0] as usize - 1] += 1;
        accumulate_pairs(full, depth, self.k, &mut self.tau[m]);
    }

    fn statistics(&self, pbar: &[f64]) -> Result<Discrepancies> {
        let k = self.k;
        let mut top = vec![0u64; k];
        let mut tau = vec![0u64; k * k];
        let mut top1_cond = 0.0;
        let mut paired_cond = 0.0;
        for (t, p) in self.top.iter().zip(&self.tau) {
            top1_cond += chi2_top1(t, pbar)?;
            paired_cond += chi2_paired(p, pbar);
            top.iter_mut().zip(t).for_each(|(a, b)| *a += b);
            tau.iter_mut().zip(p).for_each(|(a, b)| *a += b);
        }
        Ok(Discrepancies {
            top1: chi2_top1(&top, pbar)?,
            paired: chi2_paired(&tau, pbar),
            top1_cond,
            paired_cond,
        })
    }
}

/// The four discrepancies of one dataset at one parameter value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Discrepancies {
    pub top1: f64,
    pub paired: f64,
    pub top1_cond: f64,
    pub paired_cond: f64,
}

pub fn discrepancies(data: &Dataset, theta: &MixtureParams) -> Result<Discrepancies> {
    if theta.k() != data.k() {
        return Err(Error::Dimension(format!(
            "parameters have K = {}, data K = {}",
            theta.k(),
            data.k()
        )));
    }
    let mut tallies = Tallies::new(data.k(), data.nranked());
    for s in 0..data.n() {
        tallies.add(data.full_order(s), data.nranked()[s]);
    }
    tallies.statistics(&theta.marginal_supports())
}

/// X²₍₁₎ of the observed top choices.
pub fn top1_discrepancy(data: &Dataset, theta: &MixtureParams) -> Result<f64> {
    Ok(discrepancies(data, theta)?.top1)
}

/// X²₍₂₎ of the observed paired comparisons.
pub fn paired_discrepancy(data: &Dataset, theta: &MixtureParams) -> Result<f64> {
    Ok(discrepancies(data, theta)?.paired)
}

/// Observed and replicated discrepancies at one posterior draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrawCheck {
    pub obs: Discrepancies,
    pub rep: Discrepancies,
}

/// Share of draws whose replicated statistic is at least the observed one.
pub fn pvalue(obs: &[f64], rep: &[f64]) -> f64 {
    let hits = obs.iter().zip(rep).filter(|(o, r)| r >= o).count();
    hits as f64 / obs.len() as f64
}

/// Posterior predictive p-values for one candidate G.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpcheckRow {
    pub g: usize,
    pub post_pred_pvalue_top1: Option<f64>,
    pub post_pred_pvalue_paired: Option<f64>,
    pub post_pred_pvalue_top1_cond: Option<f64>,
    pub post_pred_pvalue_paired_cond: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpcheckReport {
    pub rows: Vec<PpcheckRow>,
    /// Per-draw statistics of every chain, in chain and draw order.
    #[serde(skip)]
    pub draws: Vec<Vec<DrawCheck>>,
}

/// RNG of draw `l` of chain `j`.
pub fn draw_rng(seed: u64, chain: usize, l: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((chain as u64) << 40) | l as u64);
    rng
}

/// Observed and replicated discrepancies for every draw of `chain`. Each
/// replicate keeps the observed depth of every unit.
pub fn check_chain(data: &Dataset, chain: &GibbsChain, chain_index: usize, seed: u64) -> Result<Vec<DrawCheck>> {
    if chain.k() != data.k() {
        return Err(Error::Dimension(format!(
            "chain has K = {}, data K = {}",
            chain.k(),
            data.k()
        )));
    }
    if chain.is_empty() {
        return Err(Error::InvalidArgument("chain has no draws".into()));
    }
    let k = data.k();
    let mut observed = Tallies::new(k, data.nranked());
    for s in 0..data.n() {
        observed.add(data.full_order(s), data.nranked()[s]);
    }
    (0..chain.len())
        .into_par_iter()
        .map_init(
            || (observed.clone(), vec![0u32; k]),
            |(rep, order), l| {
                let theta = chain.params_at(l);
                let pbar = theta.marginal_supports();
                let obs = observed.statistics(&pbar)?;
                let mut rng = draw_rng(seed, chain_index, l);
                replicate(data, &theta, rep, order, &mut rng)?;
                Ok(DrawCheck {
                    obs,
                    rep: rep.statistics(&pbar)?,
                })
            },
        )
        .collect()
}

/// Simulates one replicate row per observed unit from the mixture, keeping
/// that unit's depth, and hands each (full order, depth) to `visit`.
fn replicate_rows<R: Rng + ?Sized>(
    data: &Dataset,
    theta: &MixtureParams,
    order: &mut [u32],
    rng: &mut R,
    mut visit: impl FnMut(&[u32], usize),
) -> Result<()> {
    let picker = (theta.g() > 1)
        .then(|| WeightedIndex::new(theta.weights()))
        .transpose()
        .map_err(|e| Error::InvalidArgument(format!("mixture weights: {e}")))?;
    for &depth in data.nranked() {
        let c = picker.as_ref().map_or(0, |p| p.sample(rng));
        order.iter_mut().enumerate().for_each(|(i, v)| *v = i as u32 + 1);
        pl_shuffle(order, theta.support_row(c), rng);
        visit(order, depth);
    }
    Ok(())
}

fn replicate<R: Rng + ?Sized>(
    data: &Dataset,
    theta: &MixtureParams,
    rep: &mut Tallies,
    order: &mut [u32],
    rng: &mut R,
) -> Result<()> {
    rep.clear();
    replicate_rows(data, theta, order, rng, |full, depth| rep.add(full, depth))
}

/// The replicated dataset used for one draw: orderings simulated from
/// `theta` and truncated to the observed depths. With
/// `draw_rng(seed, j, l)` it reproduces the replicate behind draw `l` of
/// chain `j` in [`check_chain`].
pub fn replicate_dataset<R: Rng + ?Sized>(data: &Dataset, theta: &MixtureParams, rng: &mut R) -> Result<Dataset> {
    let mut rows = Vec::with_capacity(data.n());
    let mut order = vec![0u32; data.k()];
    replicate_rows(data, theta, &mut order, rng, |full, depth| {
        let mut row = full.to_vec();
        row[depth..].iter_mut().for_each(|v| *v = 0);
        rows.push(row);
    })?;
    Dataset::from_orderings(&rows)
}

/// Which discrepancies a report covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckKind {
    Unconditional,
    Conditional,
    Both,
}

/// Posterior predictive checks for several chains. Draw `l` of chain `j`
/// uses its own RNG stream derived from `seed`, so results do not depend on
/// thread scheduling.
pub fn ppcheck_with(data: &Dataset, chains: &[GibbsChain], seed: u64, kind: CheckKind) -> Result<PpcheckReport> {
    if chains.is_empty() {
        return Err(Error::InvalidArgument("no chains supplied".into()));
    }
    let draws = chains
        .iter()
        .enumerate()
        .map(|(j, chain)| check_chain(data, chain, j, seed))
        .collect::<Result<Vec<_>>>()?;
    let uncond = kind != CheckKind::Conditional;
    let cond = kind != CheckKind::Unconditional;
    let rows = chains
        .iter()
        .zip(&draws)
        .map(|(chain, d)| {
            let pv = |f: fn(&Discrepancies) -> f64| {
                let obs: Vec<f64> = d.iter().map(|x| f(&x.obs)).collect();
                let rep: Vec<f64> = d.iter().map(|x| f(&x.rep)).collect();
                pvalue(&obs, &rep)
            };
            PpcheckRow {
                g: chain.g(),
                post_pred_pvalue_top1: uncond.then(|| pv(|x| x.top1)),
                post_pred_pvalue_paired: uncond.then(|| pv(|x| x.paired)),
                post_pred_pvalue_top1_cond: cond.then(|| pv(|x| x.top1_cond)),
                post_pred_pvalue_paired_cond: cond.then(|| pv(|x| x.paired_cond)),
            }
        })
        .collect();
    Ok(PpcheckReport { rows, draws })
}

pub fn ppcheck(data: &Dataset, chains: &[GibbsChain], seed: u64) -> Result<PpcheckReport> {
    ppcheck_with(data, chains, seed, CheckKind::Unconditional)
}

pub fn ppcheck_cond(data: &Dataset, chains: &[GibbsChain], seed: u64) -> Result<PpcheckReport> {
    ppcheck_with(data, chains, seed, CheckKind::Conditional)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_item_hand_values() {
        assert!((chi2_top1(&[7, 3], &[0.5, 0.5]).unwrap() - 1.6).abs() < 1e-12);
        assert!((chi2_paired(&[0, 7, 3, 0], &[0.5, 0.5]) - 1.6).abs() < 1e-12);
    }

    #[test]
    fn perfect_fit_is_zero() {
        assert_eq!(chi2_top1(&[5, 5, 5], &[1.0 / 3.0; 3]).unwrap(), 0.0);
        assert_eq!(chi2_paired(&[0, 0, 0, 0], &[0.3, 0.7]), 0.0);
    }

    #[test]
    fn ties_count_as_exceedance() {
        assert_eq!(pvalue(&[1.5], &[1.5]), 1.0);
        assert_eq!(pvalue(&[1.0, 2.0], &[0.5, 2.5]), 0.5);
    }

    #[test]
    fn single_depth_collapses_conditional() {
        let data = Dataset::from_orderings(&[vec![1, 2, 0, 0], vec![2, 3, 0, 0], vec![1, 4, 0, 0]]).unwrap();
        let theta = MixtureParams::new(vec![vec![1.0, 2.0, 3.0, 4.0]], vec![1.0]).unwrap();
        let d = discrepancies(&data, &theta).unwrap();
        assert_eq!(d.top1, d.top1_cond);
        assert_eq!(d.paired, d.paired_cond);
    }
}
