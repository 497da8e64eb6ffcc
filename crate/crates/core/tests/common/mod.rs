#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;

use plmix::{Dataset, MixtureParams};

/// All permutations of 1..=k in lexicographic order.
pub fn permutations(k: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut cur: Vec<u32> = (1..=k).collect();
    loop {
        out.push(cur.clone());
        // next lexicographic permutation
        let Some(i) = (0..cur.len().saturating_sub(1)).rev().find(|&i| cur[i] < cur[i + 1]) else {
            break;
        };
        let j = (i + 1..cur.len()).rev().find(|&j| cur[j] > cur[i]).unwrap();
        cur.swap(i, j);
        cur[i + 1..].reverse();
    }
    out
}

/// Random top-t ordering rows (zero padded) of `n` units over `k` items.
pub fn random_partial_rows<R: Rng>(rng: &mut R, n: usize, k: usize) -> Vec<Vec<u32>> {
    (0..n)
        .map(|_| {
            let mut items: Vec<u32> = (1..=k as u32).collect();
            items.shuffle(rng);
            let depth = rng.random_range(1..=k);
            items[depth..].iter_mut().for_each(|v| *v = 0);
            items
        })
        .collect()
}

/// Supports spread over two orders of magnitude.
pub fn random_params<R: Rng>(rng: &mut R, k: usize, g: usize) -> MixtureParams {
    let supports = (0..g)
        .map(|_| (0..k).map(|_| rng.random_range(-2.5f64..2.5).exp()).collect())
        .collect();
    let mut weights: Vec<f64> = (0..g).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    MixtureParams::new(supports, weights).unwrap()
}

/// Plackett-Luce probability computed stage by stage from the raw ordering
/// row, without the library's prefix layout.
pub fn naive_pl_prob(row: &[u32], p: &[f64]) -> f64 {
    let mut available: Vec<usize> = (0..p.len()).collect();
    let mut prob = 1.0;
    for &item in row.iter().take_while(|&&v| v != 0) {
        let i = item as usize - 1;
        let denom: f64 = available.iter().map(|&j| p[j]).sum();
        prob *= p[i] / denom;
        available.retain(|&j| j != i);
    }
    prob
}

/// Observed-data mixture log-likelihood from [`naive_pl_prob`].
pub fn naive_mixture_loglik(rows: &[Vec<u32>], theta: &MixtureParams) -> f64 {
    rows.iter()
        .map(|row| {
            (0..theta.g())
                .map(|c| theta.weights()[c] * naive_pl_prob(row, theta.support_row(c)))
                .sum::<f64>()
                .ln()
        })
        .sum()
}

/// True when the "ranked above" relation of the data, read as a directed
/// graph on items, is strongly connected.
pub fn strongly_connected(data: &Dataset) -> bool {
    let k = data.k();
    let tau = plmix::rank_data::paired_comparisons(data);
    let reach = |forward: bool| {
        let mut seen = vec![false; k];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..k {
                let edge = if forward { tau[i][j] > 0 } else { tau[j][i] > 0 };
                if edge && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.iter().all(|&s| s)
    };
    reach(true) && reach(false)
}

/// Smallest L∞ distance between normalized supports plus weights of two
/// mixtures over all relabelings of the second.
pub fn aligned_distance(a: &MixtureParams, b: &MixtureParams) -> f64 {
    let (na, nb) = (a.normalized(), b.normalized());
    let g = a.g();
    let mut best = f64::INFINITY;
    for perm in permutations(g as u32) {
        let mut d: f64 = 0.0;
        for (slot, &src) in perm.iter().enumerate() {
            let src = src as usize - 1;
            for (x, y) in na.supports[slot].iter().zip(&nb.supports[src]) {
                d = d.max((x - y).abs());
            }
            d = d.max((na.weights[slot] - nb.weights[src]).abs());
        }
        best = best.min(d);
    }
    best
}

/// Monte Carlo variance of the mean of one chain by Geyer's initial monotone
/// sequence estimator. Unlike fixed-size batch means it follows long-range
/// autocorrelation as far as the chain supports it.
pub fn ims_variance_of_mean(xs: &[f64]) -> f64 {
    let n = xs.len();
    let m = xs.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = xs.iter().map(|x| x - m).collect();
    let acov = |lag: usize| c[..n - lag].iter().zip(&c[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
    let gamma0 = acov(0);
    let mut sigma2 = -gamma0;
    let mut prev = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = if lag == 0 { gamma0 + acov(1) } else { acov(lag) + acov(lag + 1) };
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev);
        sigma2 += 2.0 * pair;
        prev = pair;
        lag += 2;
    }
    sigma2.max(gamma0) / n as f64
}
