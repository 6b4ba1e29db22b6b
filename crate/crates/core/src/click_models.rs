//! DBN exposure model and the reduction of cascade-family click models to it.
//!
//! An item at rank `r` (1-based) of ranking `π` is examined with probability
//!
//! ```text
//! E_i = γ^(r-1) · Π_{l<r} (1 − κ·ρ_{π(l)})
//! ```
//!
//! The cascade model (CM), simplified DBN (SDBN), dependent click model (DCM)
//! and click chain model (CCM) all have examination recursions of the form
//! `ε_k = ε_{k-1} · c · (1 − x_d)` and map onto `(γ', κ' = 1, ρ')`.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::caratheodory::RankingDistribution;
use crate::error::{check_len, Error, Result};

/// Parameters `(γ, κ)` of the DBN exposure model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDbnParams")]
pub struct DbnParams {
    gamma: f64,
    kappa: f64,
}

#[derive(Deserialize)]
struct RawDbnParams {
    gamma: f64,
    kappa: f64,
}

impl TryFrom<RawDbnParams> for DbnParams {
    type Error = Error;

    fn try_from(raw: RawDbnParams) -> Result<Self> {
        DbnParams::new(raw.gamma, raw.kappa)
    }
}

impl DbnParams {
    /// `gamma` must lie in `[0, 1)` and `kappa` in `[0, 1]`.
    pub fn new(gamma: f64, kappa: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidParameter(format!(
                "gamma must lie in [0, 1), got {gamma}"
            )));
        }
        if !(0.0..=1.0).contains(&kappa) {
            return Err(Error::InvalidParameter(format!(
                "kappa must lie in [0, 1], got {kappa}"
            )));
        }
        Ok(Self { gamma, kappa })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// The factor `γκ / (1 − γ)` that appears in every hyperplane normal.
    pub fn normal_scale(&self) -> f64 {
        self.gamma * self.kappa / (1.0 - self.gamma)
    }
}

impl Default for DbnParams {
    fn default() -> Self {
        Self {
            gamma: 0.5,
            kappa: 0.7,
        }
    }
}

/// Per-item relevance probabilities `ρ ∈ [0,1]^n`, `n ≥ 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct RelevanceVector(Vec<f64>);

impl RelevanceVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("relevance vector is empty".into()));
        }
        if let Some((i, r)) = values
            .iter()
            .enumerate()
            .find(|(_, r)| !(0.0..=1.0).contains(*r))
        {
            return Err(Error::InvalidParameter(format!(
                "relevance of item {} is {r}, outside [0, 1]",
                i + 1
            )));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl Deref for RelevanceVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for RelevanceVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<RelevanceVector> for Vec<f64> {
    fn from(r: RelevanceVector) -> Self {
        r.0
    }
}

/// A permutation of `n` items, stored both as item-at-rank and rank-of-item.
///
/// Items and ranks are 0-based in memory. Use [`Ranking::from_one_based`] and
/// [`Ranking::to_one_based`] at I/O boundaries.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Ranking {
    item_at_rank: Vec<usize>,
    rank_of_item: Vec<usize>,
}

impl Ranking {
    pub fn new(item_at_rank: Vec<usize>) -> Result<Self> {
        let n = item_at_rank.len();
        if n == 0 {
            return Err(Error::InvalidParameter("ranking is empty".into()));
        }
        let mut rank_of_item = vec![usize::MAX; n];
        for (rank, &item) in item_at_rank.iter().enumerate() {
            if item >= n || rank_of_item[item] != usize::MAX {
                return Err(Error::InvalidParameter(format!(
                    "{item_at_rank:?} is not a permutation of 0..{n}"
                )));
            }
            rank_of_item[item] = rank;
        }
        Ok(Self {
            item_at_rank,
            rank_of_item,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            item_at_rank: (0..n).collect(),
            rank_of_item: (0..n).collect(),
        }
    }

    pub fn from_one_based(items: &[usize]) -> Result<Self> {
        if items.contains(&0) {
            return Err(Error::InvalidParameter(
                "1-indexed permutation contains 0".into(),
            ));
        }
        Self::new(items.iter().map(|&i| i - 1).collect())
    }

    pub fn to_one_based(&self) -> Vec<usize> {
        self.item_at_rank.iter().map(|&i| i + 1).collect()
    }

    /// Orders items by decreasing score; ties keep ascending item index.
    pub fn sort_descending(scores: &[f64]) -> Self {
        let mut item_at_rank: Vec<usize> = (0..scores.len()).collect();
        item_at_rank.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
        let mut rank_of_item = vec![0; scores.len()];
        for (rank, &item) in item_at_rank.iter().enumerate() {
            rank_of_item[item] = rank;
        }
        Self {
            item_at_rank,
            rank_of_item,
        }
    }

    pub fn len(&self) -> usize {
        self.item_at_rank.len()
    }

    pub fn is_empty(&self) -> bool {
        self.item_at_rank.is_empty()
    }

    pub fn item_at_rank(&self) -> &[usize] {
        &self.item_at_rank
    }

    pub fn rank_of_item(&self) -> &[usize] {
        &self.rank_of_item
    }

    pub fn item(&self, rank: usize) -> usize {
        self.item_at_rank[rank]
    }

    pub fn rank(&self, item: usize) -> usize {
        self.rank_of_item[item]
    }
}

/// An exposure (examination probability) per item.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExposureVector(pub Vec<f64>);

impl ExposureVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ExposureVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for ExposureVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Exposure of every item under a single ranking, in one pass down the ranks.
pub fn exposure(ranking: &Ranking, params: &DbnParams, rho: &[f64]) -> Result<ExposureVector> {
    check_len(ranking.len(), rho.len())?;
    let mut out = vec![0.0; rho.len()];
    write_exposure(ranking, params, rho, &mut out);
    Ok(ExposureVector(out))
}

pub(crate) fn write_exposure(ranking: &Ranking, params: &DbnParams, rho: &[f64], out: &mut [f64]) {
    let mut examined = 1.0;
    for &item in ranking.item_at_rank() {
        out[item] = examined;
        examined *= params.gamma * (1.0 - params.kappa * rho[item]);
    }
}

/// Expected exposure of a distribution over rankings.
pub fn exposure_of_distribution(
    dist: &RankingDistribution,
    params: &DbnParams,
    rho: &[f64],
) -> Result<ExposureVector> {
    if dist.is_empty() {
        return Err(Error::EmptyDistribution);
    }
    let n = rho.len();
    let mut acc = vec![0.0; n];
    let mut single = vec![0.0; n];
    for (weight, ranking) in dist.atoms() {
        check_len(n, ranking.len())?;
        write_exposure(ranking, params, rho, &mut single);
        for (a, e) in acc.iter_mut().zip(&single) {
            *a += weight * e;
        }
    }
    Ok(ExposureVector(acc))
}

/// Click models whose examination recursion fits the generic DBN form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model")]
pub enum ClickModelSpec {
    /// Cascade model: `ε_k = ε_{k-1}(1 − α_d)`.
    #[serde(rename = "CM")]
    Cascade { attraction: Vec<f64> },
    /// Simplified DBN: `ε_k = ε_{k-1}(1 − α_d σ_d)`.
    #[serde(rename = "SDBN")]
    Sdbn {
        attraction: Vec<f64>,
        satisfaction: Vec<f64>,
    },
    /// Dependent click model: `ε_k = ε_{k-1}(1 − α_d(1 − λ))`.
    #[serde(rename = "DCM")]
    Dcm { attraction: Vec<f64>, lambda: f64 },
    /// Click chain model: `ε_k = ε_{k-1}(α_d((1 − α_d)τ₂ + α_d τ₃) + (1 − α_d)τ₁)`.
    #[serde(rename = "CCM")]
    Ccm {
        attraction: Vec<f64>,
        tau1: f64,
        tau2: f64,
        tau3: f64,
    },
}

impl ClickModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ClickModelSpec::Cascade { .. } => "CM",
            ClickModelSpec::Sdbn { .. } => "SDBN",
            ClickModelSpec::Dcm { .. } => "DCM",
            ClickModelSpec::Ccm { .. } => "CCM",
        }
    }

    pub fn attraction(&self) -> &[f64] {
        match self {
            ClickModelSpec::Cascade { attraction }
            | ClickModelSpec::Sdbn { attraction, .. }
            | ClickModelSpec::Dcm { attraction, .. }
            | ClickModelSpec::Ccm { attraction, .. } => attraction,
        }
    }
}

fn check_probability(name: &str, value: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::InvalidParameter(format!(
            "{name} = {value} is outside [0, 1]"
        )));
    }
    Ok(())
}

fn check_probabilities(name: &str, values: &[f64]) -> Result<()> {
    for (i, &v) in values.iter().enumerate() {
        check_probability(&format!("{name}[{}]", i + 1), v)?;
    }
    Ok(())
}

/// Maps a click model onto generic DBN parameters `(γ', κ' = 1)` and relevances `ρ'`.
pub fn reduce_to_dbn(spec: &ClickModelSpec) -> Result<(DbnParams, RelevanceVector)> {
    let attraction = spec.attraction();
    if attraction.is_empty() {
        return Err(Error::InvalidParameter("attraction vector is empty".into()));
    }
    check_probabilities("attraction", attraction)?;

    let stop: Vec<f64> = match spec {
        ClickModelSpec::Cascade { attraction } => attraction.clone(),
        ClickModelSpec::Sdbn {
            attraction,
            satisfaction,
        } => {
            check_len(attraction.len(), satisfaction.len())?;
            check_probabilities("satisfaction", satisfaction)?;
            attraction
                .iter()
                .zip(satisfaction)
                .map(|(a, s)| a * s)
                .collect()
        }
        ClickModelSpec::Dcm { attraction, lambda } => {
            check_probability("lambda", *lambda)?;
            attraction.iter().map(|a| a * (1.0 - lambda)).collect()
        }
        ClickModelSpec::Ccm {
            attraction,
            tau1,
            tau2,
            tau3,
        } => return reduce_ccm(attraction, *tau1, *tau2, *tau3),
    };
    reduce_stop_probabilities(&stop)
}

/// SDBN-style reduction: `ω = ½ min(x)`, `γ' = 1 − ω`, `ρ'_d = 1 − (1 − x_d)/(1 − ω)`.
fn reduce_stop_probabilities(stop: &[f64]) -> Result<(DbnParams, RelevanceVector)> {
    if let Some((i, x)) = stop
        .iter()
        .enumerate()
        .find(|(_, &x)| !(x > 0.0 && x < 1.0))
    {
        return Err(Error::InvalidParameter(format!(
            "stop probability of item {} is {x}; the reduction needs it strictly inside (0, 1)",
            i + 1
        )));
    }
    let omega = 0.5 * stop.iter().copied().fold(f64::INFINITY, f64::min);
    let params = DbnParams::new(1.0 - omega, 1.0)?;
    let rho = stop
        .iter()
        .map(|x| 1.0 - (1.0 - x) / (1.0 - omega))
        .collect();
    Ok((params, RelevanceVector::new(rho)?))
}

fn reduce_ccm(
    attraction: &[f64],
    tau1: f64,
    tau2: f64,
    tau3: f64,
) -> Result<(DbnParams, RelevanceVector)> {
    check_probability("tau1", tau1)?;
    check_probability("tau2", tau2)?;
    check_probability("tau3", tau3)?;
    if tau1 == 0.0 {
        return Err(Error::InvalidParameter("CCM tau1 must be positive".into()));
    }
    if tau1 >= 1.0 {
        return Err(Error::InvalidParameter(
            "CCM tau1 = 1 gives a continuation probability of 1".into(),
        ));
    }
    let mut rho = Vec::with_capacity(attraction.len());
    for (i, &a) in attraction.iter().enumerate() {
        let r = a * ((tau1 - tau2) / tau1 + a * (tau2 - tau3) / tau1);
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::InvalidParameter(format!(
                "reduced CCM relevance of item {} is {r}, outside [0, 1]",
                i + 1
            )));
        }
        rho.push(r);
    }
    Ok((DbnParams::new(tau1, 1.0)?, RelevanceVector::new(rho)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params() -> DbnParams {
        DbnParams::new(0.5, 0.7).unwrap()
    }

    fn one_based(items: &[usize]) -> Ranking {
        Ranking::from_one_based(items).unwrap()
    }

    #[test]
    fn three_item_vertex() {
        let e = exposure(&one_based(&[3, 2, 1]), &params(), &[0.1, 0.5, 0.9]).unwrap();
        assert_abs_diff_eq!(e[0], 0.060125, epsilon = 1e-12);
        assert_abs_diff_eq!(e[1], 0.185, epsilon = 1e-12);
        assert_abs_diff_eq!(e[2], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn two_item_vertices() {
        let rho = [0.9, 0.1];
        let a = exposure(&one_based(&[1, 2]), &params(), &rho).unwrap();
        let b = exposure(&one_based(&[2, 1]), &params(), &rho).unwrap();
        assert_abs_diff_eq!(a.as_slice(), &[1.0, 0.185][..], epsilon = 1e-12);
        assert_abs_diff_eq!(b.as_slice(), &[0.465, 1.0][..], epsilon = 1e-12);
    }

    #[test]
    fn zero_gamma_only_top_is_seen() {
        let p = DbnParams::new(0.0, 0.7).unwrap();
        let e = exposure(&one_based(&[2, 3, 1]), &p, &[0.3, 0.3, 0.3]).unwrap();
        assert_eq!(e.as_slice(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(DbnParams::new(1.0, 0.5).is_err());
        assert!(DbnParams::new(-0.1, 0.5).is_err());
        assert!(DbnParams::new(0.5, 1.1).is_err());
        assert!(RelevanceVector::new(vec![]).is_err());
        assert!(RelevanceVector::new(vec![0.2, 1.3]).is_err());
        assert!(Ranking::new(vec![0, 0]).is_err());
        assert!(Ranking::from_one_based(&[0, 1]).is_err());
    }

    #[test]
    fn dimension_mismatch() {
        let err = exposure(&Ranking::identity(3), &params(), &[0.1, 0.2]).unwrap_err();
        assert_eq!(
            err,
            Error::DimensionMismatch {
                expected: 3,
                found: 2
            }
        );
    }

    #[test]
    fn half_half_distribution() {
        let dist =
            RankingDistribution::new(vec![(0.5, one_based(&[1, 2])), (0.5, one_based(&[2, 1]))])
                .unwrap();
        let e = exposure_of_distribution(&dist, &params(), &[0.9, 0.1]).unwrap();
        assert_abs_diff_eq!(e.as_slice(), &[0.7325, 0.5925][..], epsilon = 1e-12);
    }

    #[test]
    fn cascade_reduction() {
        let spec = ClickModelSpec::Cascade {
            attraction: vec![0.5, 0.5],
        };
        let (p, rho) = reduce_to_dbn(&spec).unwrap();
        assert_abs_diff_eq!(p.gamma(), 0.75, epsilon = 1e-15);
        assert_eq!(p.kappa(), 1.0);
        assert_abs_diff_eq!(rho[0], 1.0 / 3.0, epsilon = 1e-15);
        let e = exposure(&Ranking::identity(2), &p, &rho).unwrap();
        assert_abs_diff_eq!(e[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn ccm_reduction() {
        let spec = ClickModelSpec::Ccm {
            attraction: vec![0.5, 0.5],
            tau1: 0.8,
            tau2: 0.6,
            tau3: 0.4,
        };
        let (p, rho) = reduce_to_dbn(&spec).unwrap();
        assert_abs_diff_eq!(p.gamma(), 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(rho[0], 0.1875, epsilon = 1e-15);
        assert_abs_diff_eq!(rho[1], 0.1875, epsilon = 1e-15);
    }

    #[test]
    fn reduction_errors() {
        let zero = ClickModelSpec::Cascade {
            attraction: vec![0.0, 0.5],
        };
        assert!(reduce_to_dbn(&zero).is_err());
        let dcm_full_continue = ClickModelSpec::Dcm {
            attraction: vec![0.3, 0.5],
            lambda: 1.0,
        };
        assert!(reduce_to_dbn(&dcm_full_continue).is_err());
        let ccm_zero = ClickModelSpec::Ccm {
            attraction: vec![0.3],
            tau1: 0.0,
            tau2: 0.5,
            tau3: 0.5,
        };
        assert!(reduce_to_dbn(&ccm_zero).is_err());
        // τ₂ > τ₁ with τ₃ = τ₂ drives ρ' negative
        let ccm_negative = ClickModelSpec::Ccm {
            attraction: vec![0.3, 0.9],
            tau1: 0.2,
            tau2: 0.9,
            tau3: 0.9,
        };
        let err = reduce_to_dbn(&ccm_negative).unwrap_err();
        assert!(err.to_string().contains("item 1"), "{err}");
    }
}
