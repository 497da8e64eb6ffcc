//! Plackett-Luce and PL mixture probabilities and random generation.

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rank_data::{pl_shuffle, Dataset, PartialOrdering};

/// Mixture of G Plackett-Luce components over K items.
///
/// Supports are stored row-major (`g * K + i`) and are only defined up to a
/// per-component scale; nothing here assumes they sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsRepr", into = "ParamsRepr")]
pub struct MixtureParams {
    k: usize,
    g: usize,
    supports: Vec<f64>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ParamsRepr {
    supports: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl TryFrom<ParamsRepr> for MixtureParams {
    type Error = Error;

    fn try_from(repr: ParamsRepr) -> Result<Self> {
        MixtureParams::new(repr.supports, repr.weights)
    }
}

impl From<MixtureParams> for ParamsRepr {
    fn from(params: MixtureParams) -> Self {
        ParamsRepr {
            supports: params.supports_matrix(),
            weights: params.weights,
        }
    }
}

const WEIGHT_SUM_TOL: f64 = 1e-9;

impl MixtureParams {
    pub fn new(supports: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let g = supports.len();
        let k = supports.first().map(Vec::len).unwrap_or(0);
        if supports.iter().any(|row| row.len() != k) {
            return Err(Error::Dimension("support rows have different lengths".into()));
        }
        Self::from_flat(k, supports.into_iter().flatten().collect(), weights).and_then(|p| {
            if p.g != g {
                Err(Error::Dimension("weights do not match support rows".into()))
            } else {
                Ok(p)
            }
        })
    }

    /// Builds parameters from row-major supports of length `G * K`.
    pub fn from_flat(k: usize, supports: Vec<f64>, mut weights: Vec<f64>) -> Result<Self> {
        let g = weights.len();
        if g == 0 || k == 0 {
            return Err(Error::Dimension("need at least one component and one item".into()));
        }
        if supports.len() != g * k {
            return Err(Error::Dimension(format!(
                "{} support values for G = {g}, K = {k}",
                supports.len()
            )));
        }
        if let Some(pos) = supports.iter().position(|&p| !(p > 0.0) || !p.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "support of component {}, item {} is not strictly positive",
                pos / k + 1,
                pos % k + 1
            )));
        }
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument("mixture weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidArgument(format!("mixture weights sum to {total}")));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Self { k, g, supports, weights })
    }

    /// Single-component model with the given supports.
    pub fn homogeneous(supports: Vec<f64>) -> Result<Self> {
        Self::from_flat(supports.len(), supports, vec![1.0])
    }

    /// Constant supports and equal weights.
    pub fn uniform(k: usize, g: usize) -> Self {
        Self {
            k,
            g,
            supports: vec![1.0; k * g],
            weights: vec![1.0 / g as f64; g],
        }
    }

    pub(crate) fn from_parts(k: usize, supports: Vec<f64>, weights: Vec<f64>) -> Self {
        debug_assert_eq!(supports.len(), k * weights.len());
        Self {
            k,
            g: weights.len(),
            supports,
            weights,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn g(&self) -> usize {
        self.g
    }

    pub fn supports(&self) -> &[f64] {
        &self.supports
    }

    pub fn support_row(&self, g: usize) -> &[f64] {
        &self.supports[g * self.k..(g + 1) * self.k]
    }

    pub fn supports_matrix(&self) -> Vec<Vec<f64>> {
        self.supports.chunks(self.k).map(<[f64]>::to_vec).collect()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Marginal supports p̄_i = Σ_g ω_g p_gi with each row normalized first.
    pub fn marginal_supports(&self) -> Vec<f64> {
        let mut marginal = vec![0.0; self.k];
        for (row, &w) in self.supports.chunks(self.k).zip(&self.weights) {
            let total: f64 = row.iter().sum();
            for (m, &p) in marginal.iter_mut().zip(row) {
                *m += w * p / total;
            }
        }
        marginal
    }

    pub fn normalized(&self) -> NormalizedParams {
        let supports = self
            .supports
            .chunks(self.k)
            .map(|row| {
                let total: f64 = row.iter().sum();
                row.iter().map(|p| p / total).collect()
            })
            .collect();
        NormalizedParams {
            supports,
            weights: self.weights.clone(),
            marginal: self.marginal_supports(),
        }
    }

    /// Relabels components: slot `g` of the result holds component `perm[g]`.
    pub fn permuted(&self, perm: &[usize]) -> MixtureParams {
        assert_eq!(perm.len(), self.g);
        let mut supports = Vec::with_capacity(self.supports.len());
        for &src in perm {
            supports.extend_from_slice(self.support_row(src));
        }
        let weights = perm.iter().map(|&src| self.weights[src]).collect();
        Self::from_parts(self.k, supports, weights)
    }
}

/// Presentation form of [`MixtureParams`]: support rows summing to one plus
/// the marginal supports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedParams {
    pub supports: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub marginal: Vec<f64>,
}

/// log P_PL of one row given as full order (ranked prefix then unranked
/// items) and depth. Stage denominators are accumulated as suffix sums so no
/// subtraction is involved.
#[inline]
pub(crate) fn log_pl_row(full: &[u32], depth: usize, p: &[f64]) -> f64 {
    let mut remaining: f64 = full[depth..].iter().map(|&i| p[i as usize - 1]).sum();
    let mut prod = 1.0;
    let mut log = 0.0;
    for &item in full[..depth].iter().rev() {
        let w = p[item as usize - 1];
        remaining += w;
        prod *= w / remaining;
        if prod < 1e-250 {
            log += prod.ln();
            prod = 1.0;
        }
    }
    log + prod.ln()
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn check_supports(p: &[f64]) -> Result<()> {
    match p.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
        Some(i) => Err(Error::InvalidArgument(format!(
            "support of item {} is not strictly positive",
            i + 1
        ))),
        None => Ok(()),
    }
}

/// Plackett-Luce probability of a partial top ordering.
pub fn pl_prob(ordering: &PartialOrdering, p: &[f64]) -> Result<f64> {
    pl_log_prob(ordering, p).map(f64::exp)
}

pub fn pl_log_prob(ordering: &PartialOrdering, p: &[f64]) -> Result<f64> {
    if p.len() != ordering.k() {
        return Err(Error::Dimension(format!(
            "{} supports for K = {}",
            p.len(),
            ordering.k()
        )));
    }
    check_supports(p)?;
    let mut ranked = vec![false; p.len()];
    let mut full: Vec<u32> = ordering.ranked().to_vec();
    for &item in &full {
        ranked[item as usize - 1] = true;
    }
    full.extend((1..=p.len() as u32).filter(|&i| !ranked[i as usize - 1]));
    Ok(log_pl_row(&full, ordering.nranked(), p))
}

fn check_dims(params: &MixtureParams, data: &Dataset) -> Result<()> {
    if params.k != data.k() {
        return Err(Error::Dimension(format!(
            "parameters have K = {} but data has K = {}",
            params.k,
            data.k()
        )));
    }
    Ok(())
}

/// ln P_PL(row_s | p_g) for every unit and component, row-major N×G.
pub fn component_log_probs(params: &MixtureParams, data: &Dataset) -> Result<Vec<f64>> {
    check_dims(params, data)?;
    let g = params.g;
    let mut out = vec![0.0; data.n() * g];
    for s in 0..data.n() {
        let full = data.full_order(s);
        let depth = data.nranked()[s];
        for c in 0..g {
            out[s * g + c] = log_pl_row(full, depth, params.support_row(c));
        }
    }
    Ok(out)
}

/// Observed-data log-likelihood Σ_s log Σ_g ω_g P_PL(row_s | p_g).
pub fn mixture_loglik(params: &MixtureParams, data: &Dataset) -> Result<f64> {
    check_dims(params, data)?;
    Ok(mixture_loglik_unchecked(params, data))
}

pub(crate) fn mixture_loglik_unchecked(params: &MixtureParams, data: &Dataset) -> f64 {
    let nranked = data.nranked();
    if params.g == 1 {
        let p = params.support_row(0);
        return (0..data.n())
            .map(|s| log_pl_row(data.full_order(s), nranked[s], p))
            .sum();
    }
    let log_w: Vec<f64> = params.weights.iter().map(|w| w.ln()).collect();
    let mut terms = vec![0.0; params.g];
    let mut total = 0.0;
    for s in 0..data.n() {
        let full = data.full_order(s);
        for (c, term) in terms.iter_mut().enumerate() {
            *term = if log_w[c] == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                log_w[c] + log_pl_row(full, nranked[s], params.support_row(c))
            };
        }
        // summing in sorted order makes the result independent of component labels
        terms.sort_unstable_by(f64::total_cmp);
        total += log_sum_exp(&terms);
    }
    total
}

/// Draws `n` complete orderings from the mixture. Returns 1-based component
/// labels alongside the data.
pub fn sample_plmix<R: Rng + ?Sized>(
    n: usize,
    params: &MixtureParams,
    rng: &mut R,
) -> Result<(Vec<usize>, Dataset)> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be at least 1".into()));
    }
    let picker = WeightedIndex::new(&params.weights)
        .map_err(|e| Error::InvalidArgument(format!("mixture weights: {e}")))?;
    let k = params.k;
    let mut labels = Vec::with_capacity(n);
    let mut data = Dataset::empty(k);
    let mut order: Vec<u32> = (1..=k as u32).collect();
    for _ in 0..n {
        let c = if params.g == 1 { 0 } else { picker.sample(rng) };
        order.iter_mut().enumerate().for_each(|(i, v)| *v = i as u32 + 1);
        pl_shuffle(&mut order, params.support_row(c), rng);
        data.push_prefix(&order);
        labels.push(c + 1);
    }
    Ok((labels, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ord(v: &[u32]) -> PartialOrdering {
        PartialOrdering::new(v.to_vec()).unwrap()
    }

    #[test]
    fn uniform_complete_ordering() {
        let pr = pl_prob(&ord(&[2, 3, 1]), &[1.0, 1.0, 1.0]).unwrap();
        assert!((pr - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn stagewise_products() {
        let p = [0.5, 0.3, 0.2];
        assert!((pl_prob(&ord(&[1, 0, 0]), &p).unwrap() - 0.5).abs() < 1e-15);
        assert!((pl_prob(&ord(&[1, 2, 3]), &p).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn rejects_nonpositive_support() {
        assert!(pl_prob(&ord(&[1, 2, 3]), &[1.0, 0.0, 1.0]).is_err());
        assert!(pl_prob(&ord(&[1, 2, 3]), &[1.0, 1.0]).is_err());
    }

    #[test]
    fn identical_components_collapse() {
        let data = Dataset::from_orderings(&[vec![1, 3, 0, 0], vec![2, 1, 4, 3]]).unwrap();
        let p = vec![0.1, 0.4, 0.2, 0.3];
        let one = MixtureParams::homogeneous(p.clone()).unwrap();
        let two = MixtureParams::new(vec![p.clone(), p], vec![0.5, 0.5]).unwrap();
        let a = mixture_loglik(&one, &data).unwrap();
        let b = mixture_loglik(&two, &data).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn uniform_loglik_of_complete_data() {
        let rows: Vec<Vec<u32>> = vec![vec![1, 2, 3, 4], vec![4, 2, 1, 3], vec![3, 1, 2, 4]];
        let data = Dataset::from_orderings(&rows).unwrap();
        let ll = mixture_loglik(&MixtureParams::uniform(4, 1), &data).unwrap();
        assert!((ll + 3.0 * 24f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn degenerate_weights_pick_first_component() {
        let params = MixtureParams::new(
            vec![vec![1.0, 2.0, 3.0], vec![3.0, 2.0, 1.0]],
            vec![1.0, 0.0],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (labels, data) = sample_plmix(200, &params, &mut rng).unwrap();
        assert!(labels.iter().all(|&c| c == 1));
        assert!(data.is_complete());
        assert!(sample_plmix(0, &params, &mut rng).is_err());
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let params = MixtureParams::uniform(5, 2);
        let a = sample_plmix(50, &params, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let b = sample_plmix(50, &params, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn params_validation_and_serde() {
        assert!(MixtureParams::new(vec![vec![1.0, 2.0]], vec![0.9]).is_err());
        assert!(MixtureParams::new(vec![vec![1.0, -2.0]], vec![1.0]).is_err());
        let p = MixtureParams::new(vec![vec![0.1, 0.2], vec![0.3, 0.4]], vec![0.25, 0.75]).unwrap();
        let json = serde_json::to_string(&p).unwrap();
        let back: MixtureParams = serde_json::from_str(&json).unwrap();
        assert_eq!(p, back);
        let perm = p.permuted(&[1, 0]);
        assert_eq!(perm.support_row(0), &[0.3, 0.4]);
        assert_eq!(perm.weights(), &[0.75, 0.25]);
    }
}
