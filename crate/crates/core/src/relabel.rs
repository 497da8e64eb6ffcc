//! Label-switching repair by pivotal reordering.
//!
//! Every draw is permuted so that its normalized supports and weights are as
//! close as possible, in squared Euclidean distance, to a pivot estimate.

use itertools::Itertools;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::GibbsChain;
use crate::plmodel::MixtureParams;

/// Largest G for which all G! permutations are searched.
pub const MAX_COMPONENTS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelabeledChain {
    pub chain: GibbsChain,
    /// `permutations[l][g]` is the raw component moved to slot `g` at draw `l`
    /// (0-based).
    pub permutations: Vec<Vec<usize>>,
}

/// Squared distance between raw component `h` of a draw and slot `g` of the
/// pivot, as a flat G×G matrix indexed `[g * G + h]`.
fn cost_matrix(supports: &[f64], weights: &[f64], k: usize, pivot: &[f64], pivot_w: &[f64]) -> Vec<f64> {
    let g = weights.len();
    let mut cost = vec![0.0; g * g];
    for h in 0..g {
        let row = &supports[h * k..(h + 1) * k];
        let total: f64 = row.iter().sum();
        for slot in 0..g {
            let target = &pivot[slot * k..(slot + 1) * k];
            let mut d: f64 = row.iter().zip(target).map(|(p, q)| (p / total - q).powi(2)).sum();
            d += (weights[h] - pivot_w[slot]).powi(2);
            cost[slot * g + h] = d;
        }
    }
    cost
}

/// Permutation minimizing the total cost; the identity wins ties and later
/// candidates replace the incumbent only on strict improvement.
fn best_permutation(cost: &[f64], g: usize) -> Vec<usize> {
    let mut best: Vec<usize> = (0..g).collect();
    let mut best_cost: f64 = (0..g).map(|s| cost[s * g + s]).sum();
    for perm in (0..g).permutations(g) {
        let c: f64 = perm.iter().enumerate().map(|(s, &h)| cost[s * g + h]).sum();
        if c < best_cost {
            best_cost = c;
            best = perm;
        }
    }
    best
}

/// Applies per-draw permutations to supports and weights; log-likelihood and
/// deviance are carried over unchanged.
pub fn apply_permutations(chain: &GibbsChain, permutations: &[Vec<usize>]) -> Result<GibbsChain> {
    let (k, g) = (chain.k(), chain.g());
    if permutations.len() != chain.len() {
        return Err(Error::Dimension(format!(
            "{} permutations for {} draws",
            permutations.len(),
            chain.len()
        )));
    }
    let mut supports = Vec::with_capacity(chain.supports_trace().len());
    let mut weights = Vec::with_capacity(chain.weights_trace().len());
    for (l, perm) in permutations.iter().enumerate() {
        if perm.len() != g || !perm.iter().all_unique() || perm.iter().any(|&h| h >= g) {
            return Err(Error::InvalidArgument(format!(
                "entry {} is not a permutation of {g} components",
                l + 1
            )));
        }
        let draw = chain.supports_at(l);
        let w = chain.weights_at(l);
        for &h in perm {
            supports.extend_from_slice(&draw[h * k..(h + 1) * k]);
            weights.push(w[h]);
        }
    }
    GibbsChain::from_traces(
        k,
        g,
        supports,
        weights,
        chain.log_lik().to_vec(),
        chain.seed(),
        chain.n_iter(),
        chain.n_burn(),
    )
}

/// Relabels every draw of `chain` towards `pivot` (typically the MAP fit).
pub fn pra_relabel(chain: &GibbsChain, pivot: &MixtureParams) -> Result<RelabeledChain> {
    let (k, g) = (chain.k(), chain.g());
    if pivot.k() != k || pivot.g() != g {
        return Err(Error::Dimension(format!(
            "pivot (K = {}, G = {}) does not match chain (K = {k}, G = {g})",
            pivot.k(),
            pivot.g()
        )));
    }
    if g > MAX_COMPONENTS {
        return Err(Error::InvalidArgument(format!(
            "G = {g} exceeds {MAX_COMPONENTS}, the limit for exhaustive relabeling"
        )));
    }
    let pn = pivot.normalized();
    let pivot_p: Vec<f64> = pn.supports.concat();
    let permutations: Vec<Vec<usize>> = (0..chain.len())
        .into_par_iter()
        .map(|l| {
            let cost = cost_matrix(chain.supports_at(l), chain.weights_at(l), k, &pivot_p, &pn.weights);
            best_permutation(&cost, g)
        })
        .collect();
    Ok(RelabeledChain {
        chain: apply_permutations(chain, &permutations)?,
        permutations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn aligned() -> GibbsChain {
        let supports = vec![
            0.7, 0.2, 0.1, 0.1, 0.3, 0.6, //
            0.6, 0.3, 0.1, 0.2, 0.2, 0.6, //
            0.8, 0.1, 0.1, 0.1, 0.4, 0.5,
        ];
        let weights = vec![0.6, 0.4, 0.7, 0.3, 0.55, 0.45];
        GibbsChain::from_traces(3, 2, supports, weights, vec![-10.0, -11.0, -9.5], None, 4, 1).unwrap()
    }

    #[test]
    fn aligned_chain_is_untouched() {
        let pivot = MixtureParams::new(vec![vec![0.7, 0.2, 0.1], vec![0.1, 0.3, 0.6]], vec![0.6, 0.4]).unwrap();
        let out = pra_relabel(&aligned(), &pivot).unwrap();
        assert!(out.permutations.iter().all(|p| p == &[0, 1]));
        assert_eq!(out.chain, aligned());
    }

    #[test]
    fn swapped_draw_is_restored() {
        let raw = aligned();
        let swapped = apply_permutations(&raw, &[vec![0, 1], vec![1, 0], vec![0, 1]]).unwrap();
        let pivot = MixtureParams::new(vec![vec![0.7, 0.2, 0.1], vec![0.1, 0.3, 0.6]], vec![0.6, 0.4]).unwrap();
        let out = pra_relabel(&swapped, &pivot).unwrap();
        assert_eq!(out.chain, raw);
        assert_eq!(out.permutations[1], vec![1, 0]);
    }

    #[test]
    fn too_many_components() {
        let g = MAX_COMPONENTS + 1;
        let chain = GibbsChain::from_traces(2, g, vec![1.0; 2 * g], vec![1.0 / g as f64; g], vec![0.0], None, 1, 0).unwrap();
        assert!(pra_relabel(&chain, &MixtureParams::uniform(2, g)).is_err());
    }
}
