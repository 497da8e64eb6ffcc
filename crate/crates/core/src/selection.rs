//! Deviance-based Bayesian model comparison (DIC, BPIC, BICM).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::GibbsChain;
use crate::plmodel::{mixture_loglik, MixtureParams};
use crate::rank_data::Dataset;

/// Point estimate whose deviance enters DIC1, BPIC1 and BICM2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointEstimate {
    #[default]
    Map,
    Mean,
    Median,
}

impl std::str::FromStr for PointEstimate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "map" => Ok(Self::Map),
            "mean" => Ok(Self::Mean),
            "median" => Ok(Self::Median),
            other => Err(Error::InvalidArgument(format!("unknown point estimate {other:?}"))),
        }
    }
}

/// Criteria for one candidate number of components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriteriaRow {
    pub g: usize,
    pub d_bar: f64,
    pub d_map: f64,
    pub var_d: f64,
    pub dic1: f64,
    pub dic2: f64,
    pub bpic1: f64,
    pub bpic2: f64,
    pub bicm1: f64,
    pub bicm2: f64,
    /// Set when D̄ - D(θ̂) is clearly negative, i.e. θ̂ is not the mode.
    pub negative_complexity: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub point_estimate: PointEstimate,
    pub rows: Vec<CriteriaRow>,
}

/// The six criteria from a deviance trace, the deviance at the point
/// estimate and the sample size. The variance uses denominator L - 1.
pub fn criteria_from_trace(g: usize, deviance: &[f64], d_map: f64, n: usize) -> Result<CriteriaRow> {
    let l = deviance.len();
    if l < 2 {
        return Err(Error::InvalidArgument(format!(
            "deviance trace has {l} draws, at least 2 needed"
        )));
    }
    if let Some(pos) = deviance.iter().position(|d| !d.is_finite()) {
        return Err(Error::Numerical(format!(
            "deviance trace for G = {g} has a non-finite entry at draw {}",
            pos + 1
        )));
    }
    if !d_map.is_finite() {
        return Err(Error::Numerical(format!("deviance at the point estimate is {d_map}")));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be positive".into()));
    }
    let d_bar = deviance.iter().sum::<f64>() / l as f64;
    let var_d = deviance.iter().map(|d| (d - d_bar).powi(2)).sum::<f64>() / (l - 1) as f64;
    let log_n = (n as f64).ln();
    let pd = d_bar - d_map;
    let negative_complexity = pd < -1e-8 * d_map.abs().max(1.0);
    if negative_complexity {
        log::warn!("G = {g}: D_bar - D_map = {pd} is negative");
    }
    Ok(CriteriaRow {
        g,
        d_bar,
        d_map,
        var_d,
        dic1: d_bar + pd,
        dic2: d_bar + var_d / 2.0,
        bpic1: d_bar + 2.0 * pd,
        bpic2: d_bar + var_d,
        bicm1: d_bar + var_d / 2.0 * (log_n - 1.0),
        bicm2: d_map + var_d / 2.0 * log_n,
        negative_complexity,
    })
}

/// Criteria for every candidate G; `point[j]` is the estimate paired with
/// `chains[j]`, normally the MAP fit.
pub fn selection_criteria(
    data: &Dataset,
    chains: &[GibbsChain],
    point: &[MixtureParams],
    kind: PointEstimate,
) -> Result<SelectionReport> {
    if chains.len() != point.len() {
        return Err(Error::Dimension(format!(
            "{} chains but {} point estimates",
            chains.len(),
            point.len()
        )));
    }
    let rows = chains
        .iter()
        .zip(point)
        .map(|(chain, theta)| {
            if theta.k() != chain.k() || theta.g() != chain.g() || theta.k() != data.k() {
                return Err(Error::Dimension(format!(
                    "point estimate (K = {}, G = {}) does not match chain (K = {}, G = {})",
                    theta.k(),
                    theta.g(),
                    chain.k(),
                    chain.g()
                )));
            }
            let d_map = -2.0 * mixture_loglik(theta, data)?;
            criteria_from_trace(chain.g(), chain.deviance(), d_map, data.n())
        })
        .collect::<Result<_>>()?;
    Ok(SelectionReport {
        point_estimate: kind,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_example() {
        let r = criteria_from_trace(1, &[2.0, 4.0], 1.0, 100).unwrap();
        let ln = 100f64.ln();
        assert_eq!((r.d_bar, r.var_d), (3.0, 2.0));
        assert_eq!((r.dic1, r.dic2, r.bpic1, r.bpic2), (5.0, 4.0, 7.0, 5.0));
        assert!((r.bicm1 - (3.0 + ln - 1.0)).abs() < 1e-12);
        assert!((r.bicm2 - (1.0 + ln)).abs() < 1e-12);
        assert!(!r.negative_complexity);
    }

    #[test]
    fn constant_trace_collapses() {
        let r = criteria_from_trace(2, &[7.5; 10], 7.5, 30).unwrap();
        for v in [r.dic1, r.dic2, r.bpic1, r.bpic2, r.bicm1, r.bicm2] {
            assert_eq!(v, 7.5);
        }
    }

    #[test]
    fn rejects_short_or_nonfinite_traces() {
        assert!(criteria_from_trace(1, &[1.0], 0.0, 5).is_err());
        assert!(criteria_from_trace(1, &[1.0, f64::NAN], 0.0, 5).is_err());
        assert!(criteria_from_trace(1, &[3.0, 3.0], 4.0, 5).unwrap().negative_complexity);
    }
}
