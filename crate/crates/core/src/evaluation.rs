//! Utility and unfairness metrics, and the per-query delivery experiment.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::caratheodory::decompose;
use crate::click_models::{write_exposure, DbnParams, ExposureVector, Ranking, RelevanceVector};
use crate::error::{check_len, Error, Result};
use crate::expohedron::{Expohedron, MeritVector};
use crate::linalg::{distance, dot};
use crate::pareto::{build_front, select_tradeoff};
use crate::policies::{ControllerState, DeliverySchedule, PlPolicy};

/// `ρ·e`
pub fn utility(e: &[f64], rho: &[f64]) -> Result<f64> {
    check_len(rho.len(), e.len())?;
    Ok(dot(e, rho))
}

/// Utility relative to the PRP ranking.
pub fn normalized_utility(e: &[f64], eh: &Expohedron) -> Result<f64> {
    let best = eh.max_utility();
    if best <= 0.0 {
        return Err(Error::Degenerate(
            "all relevances are zero, PRP utility is 0".into(),
        ));
    }
    Ok(utility(e, eh.rho())? / best)
}

/// `‖e − 𝓔*‖₂ / ‖𝓔_PRP − 𝓔*‖₂`
pub fn normalized_unfairness(e: &[f64], target: &[f64], eh: &Expohedron) -> Result<f64> {
    check_len(eh.dim(), e.len())?;
    check_len(eh.dim(), target.len())?;
    let denominator = distance(&eh.prp_exposure(), target);
    if denominator <= eh.tolerance() {
        return Err(Error::Degenerate(
            "trivial instance: the PRP exposure is already the target".into(),
        ));
    }
    Ok(distance(e, target) / denominator)
}

/// Which merit vector defines the fair target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fairness {
    /// `μ = ρ`
    Meritocratic,
    /// `μ = 1`
    Demographic,
    /// Merits supplied with each query.
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryInstance {
    pub query_id: String,
    pub relevances: RelevanceVector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub merits: Option<MeritVector>,
}

impl QueryInstance {
    pub fn new(
        query_id: impl Into<String>,
        relevances: RelevanceVector,
        merits: Option<MeritVector>,
    ) -> Result<Self> {
        if let Some(m) = &merits {
            check_len(relevances.len(), m.len())?;
        }
        Ok(Self {
            query_id: query_id.into(),
            relevances,
            merits,
        })
    }

    pub fn merits_for(&self, fairness: Fairness) -> Result<MeritVector> {
        match fairness {
            Fairness::Meritocratic => MeritVector::new(self.relevances.to_vec()),
            Fairness::Demographic => Ok(MeritVector::uniform(self.relevances.len())),
            Fairness::Custom => self.merits.clone().ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "query {} has no merits for custom fairness",
                    self.query_id
                ))
            }),
        }
    }

    /// Expohedron and target exposure of this query.
    pub fn setup(
        &self,
        params: DbnParams,
        fairness: Fairness,
    ) -> Result<(Expohedron, ExposureVector)> {
        let eh = Expohedron::new(params, self.relevances.clone());
        let target = eh.target_exposure(&self.merits_for(fairness)?)?.exposure;
        Ok((eh, target))
    }
}

/// A delivery method and its trade-off parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", content = "param", rename_all = "lowercase")]
pub enum Method {
    Expo(f64),
    Ctrl(f64),
    Pl(f64),
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Expo(_) => "expo",
            Method::Ctrl(_) => "ctrl",
            Method::Pl(_) => "pl",
        }
    }

    pub fn param(&self) -> f64 {
        match *self {
            Method::Expo(a) | Method::Ctrl(a) | Method::Pl(a) => a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub params: DbnParams,
    pub fairness: Fairness,
    pub horizon: usize,
    pub seed: u64,
    /// Record nF after every delivered ranking.
    pub trace: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            params: DbnParams::default(),
            fairness: Fairness::Meritocratic,
            horizon: 1000,
            seed: 0,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub query_id: String,
    pub method: String,
    pub param: f64,
    #[serde(rename = "nU")]
    pub nu: f64,
    #[serde(rename = "nF")]
    pub nf: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub method: String,
    pub param: f64,
    pub queries: Vec<QueryResult>,
    /// Queries whose PRP exposure already equals the target.
    pub trivial: Vec<String>,
    #[serde(rename = "mean_nU")]
    pub mean_nu: f64,
    #[serde(rename = "mean_nF")]
    pub mean_nf: f64,
    /// Mean nF over queries after each step, when traces were recorded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_trace: Option<Vec<f64>>,
}

/// Outcome of one query: either metrics or a note that it is trivial.
enum QueryOutcome {
    Scored(QueryResult),
    Trivial(String),
}

/// Delivers `horizon` rankings per query with `method` and averages the
/// normalized metrics over the non-trivial queries.
pub fn run_experiment(
    queries: &[QueryInstance],
    method: Method,
    config: &ExperimentConfig,
) -> Result<MetricReport> {
    if config.horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    let outcomes: Vec<QueryOutcome> = queries
        .par_iter()
        .map(|q| run_query(q, stream_of(&q.query_id), method, config))
        .collect::<Result<_>>()?;

    let mut scored = Vec::new();
    let mut trivial = Vec::new();
    for outcome in outcomes {
        match outcome {
            QueryOutcome::Scored(r) => scored.push(r),
            QueryOutcome::Trivial(id) => trivial.push(id),
        }
    }
    let count = scored.len().max(1) as f64;
    let mean_nu = scored.iter().map(|r| r.nu).sum::<f64>() / count;
    let mean_nf = scored.iter().map(|r| r.nf).sum::<f64>() / count;
    let mean_trace = if config.trace && !scored.is_empty() {
        let mut acc = vec![0.0; config.horizon];
        for r in &scored {
            for (a, v) in acc.iter_mut().zip(r.trace.iter().flatten()) {
                *a += v / count;
            }
        }
        Some(acc)
    } else {
        None
    };
    Ok(MetricReport {
        method: method.name().into(),
        param: method.param(),
        queries: scored,
        trivial,
        mean_nu,
        mean_nf,
        mean_trace,
    })
}

/// FNV-1a of the query id, so a query's random stream does not depend on its position.
pub fn stream_of(query_id: &str) -> u64 {
    query_id.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

fn run_query(
    query: &QueryInstance,
    stream: u64,
    method: Method,
    config: &ExperimentConfig,
) -> Result<QueryOutcome> {
    let context = |e: Error| match e {
        Error::Infeasible(m) => Error::Infeasible(format!("query {}: {m}", query.query_id)),
        Error::Degenerate(m) => Error::Degenerate(format!("query {}: {m}", query.query_id)),
        Error::NonConvergence(m) => Error::NonConvergence(format!("query {}: {m}", query.query_id)),
        Error::InvalidParameter(m) => {
            Error::InvalidParameter(format!("query {}: {m}", query.query_id))
        }
        other => other,
    };
    let (eh, target) = query
        .setup(config.params, config.fairness)
        .map_err(context)?;
    let prp = eh.prp_exposure();
    let denominator = distance(&prp, &target);
    if denominator <= eh.tolerance() || eh.max_utility() <= 0.0 {
        return Ok(QueryOutcome::Trivial(query.query_id.clone()));
    }

    let rankings = delivered_rankings(&eh, &target, stream, method, config).map_err(context)?;
    let n = eh.dim();
    let mut mean = vec![0.0; n];
    let mut single = vec![0.0; n];
    let mut trace = config.trace.then(|| Vec::with_capacity(config.horizon));
    for (t, ranking) in rankings.iter().enumerate() {
        write_exposure(ranking, eh.params(), eh.rho(), &mut single);
        let step = (t + 1) as f64;
        for (m, x) in mean.iter_mut().zip(&single) {
            *m += (x - *m) / step;
        }
        if let Some(tr) = trace.as_mut() {
            tr.push(distance(&mean, &target) / denominator);
        }
    }
    Ok(QueryOutcome::Scored(QueryResult {
        query_id: query.query_id.clone(),
        method: method.name().into(),
        param: method.param(),
        nu: dot(eh.rho(), &mean) / eh.max_utility(),
        nf: distance(&mean, &target) / denominator,
        trace,
    }))
}

/// The `horizon` rankings a method delivers for one query.
pub fn delivered_rankings(
    eh: &Expohedron,
    target: &[f64],
    stream: u64,
    method: Method,
    config: &ExperimentConfig,
) -> Result<Vec<Ranking>> {
    match method {
        Method::Expo(alpha) => {
            let front = build_front(eh, target)?;
            let point = select_tradeoff(&front, alpha)?;
            let dist = decompose(&point, eh)?;
            DeliverySchedule::new(dist, config.horizon).map(|mut s| s.deliver())
        }
        Method::Ctrl(gain) => {
            let mut state = ControllerState::new(gain, eh.dim())?;
            (0..config.horizon)
                .map(|_| state.controller_next(eh, target))
                .collect()
        }
        Method::Pl(temperature) => {
            let mut pl = PlPolicy::with_stream(temperature, eh.rho(), config.seed, stream)?;
            Ok((0..config.horizon).map(|_| pl.pl_next()).collect())
        }
    }
}

/// Exposure averaged over a sequence of delivered rankings.
pub fn mean_exposure(rankings: &[Ranking], eh: &Expohedron) -> Result<ExposureVector> {
    let n = eh.dim();
    if rankings.is_empty() {
        return Err(Error::EmptyDistribution);
    }
    let mut acc = vec![0.0; n];
    let mut single = vec![0.0; n];
    for r in rankings {
        check_len(n, r.len())?;
        write_exposure(r, eh.params(), eh.rho(), &mut single);
        acc.iter_mut().zip(&single).for_each(|(a, x)| *a += x);
    }
    let t = rankings.len() as f64;
    Ok(ExposureVector(acc.into_iter().map(|a| a / t).collect()))
}

/// `k` values spaced evenly on `[lo, hi]`.
pub fn linear_grid(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    match k {
        0 => vec![],
        1 => vec![lo],
        _ => (0..k)
            .map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64)
            .collect(),
    }
}

/// `k` values spaced evenly in log scale on `[lo, hi]`, `lo > 0`.
pub fn log_grid(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    linear_grid(lo.ln(), hi.ln(), k)
        .into_iter()
        .map(f64::exp)
        .collect()
}

/// The trade-off values swept by `evaluate`: 21 values of α in steps of
/// 0.05, gain 0 plus gains log-spaced on `[0.001, 1]`, temperatures
/// log-spaced on `[0.001, 50]`.
pub fn default_sweep(method: &str) -> Vec<Method> {
    match method {
        "expo" => linear_grid(0.0, 1.0, 21)
            .into_iter()
            .map(Method::Expo)
            .collect(),
        "ctrl" => std::iter::once(0.0)
            .chain(log_grid(1e-3, 1.0, 20))
            .map(Method::Ctrl)
            .collect(),
        "pl" => log_grid(1e-3, 50.0, 21)
            .into_iter()
            .map(Method::Pl)
            .collect(),
        _ => vec![],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn two() -> Expohedron {
        Expohedron::new(
            DbnParams::new(0.5, 0.7).unwrap(),
            RelevanceVector::new(vec![0.9, 0.1]).unwrap(),
        )
    }

    #[test]
    fn utilities() {
        let eh = two();
        let prp = eh.prp_exposure();
        assert_abs_diff_eq!(utility(&prp, eh.rho()).unwrap(), 0.9185, epsilon = 1e-12);
        assert_eq!(utility(&[0.0, 0.0], eh.rho()).unwrap(), 0.0);
        assert!(utility(&[0.0], eh.rho()).is_err());
        assert_abs_diff_eq!(normalized_utility(&prp, &eh).unwrap(), 1.0, epsilon = 1e-15);
        let half = [0.7325, 0.5925];
        assert_abs_diff_eq!(
            normalized_utility(&half, &eh).unwrap(),
            (0.9185 * 0.5 + 0.5185 * 0.5) / 0.9185,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            normalized_utility(&half, &eh).unwrap(),
            0.78226,
            epsilon = 1e-5
        );
    }

    #[test]
    fn zero_relevance_has_no_normalized_utility() {
        let eh = Expohedron::new(
            DbnParams::default(),
            RelevanceVector::new(vec![0.0, 0.0]).unwrap(),
        );
        assert!(normalized_utility(&[1.0, 0.5], &eh).is_err());
    }

    #[test]
    fn unfairness_normalization() {
        let eh = two();
        let target = eh
            .target_exposure(&MeritVector::uniform(2))
            .unwrap()
            .exposure;
        let prp = eh.prp_exposure();
        assert_eq!(normalized_unfairness(&target, &target, &eh).unwrap(), 0.0);
        assert_abs_diff_eq!(
            normalized_unfairness(&prp, &target, &eh).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        let mid: Vec<f64> = prp
            .iter()
            .zip(target.iter())
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        assert_abs_diff_eq!(
            normalized_unfairness(&mid, &target, &eh).unwrap(),
            0.5,
            epsilon = 1e-12
        );
        assert!(matches!(
            normalized_unfairness(&prp, &prp, &eh),
            Err(Error::Degenerate(_))
        ));
    }

    fn queries() -> Vec<QueryInstance> {
        [
            vec![0.9, 0.1],
            vec![0.2, 0.7, 0.4],
            vec![0.5, 0.3, 0.8, 0.1],
        ]
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            QueryInstance::new(format!("q{i}"), RelevanceVector::new(r).unwrap(), None).unwrap()
        })
        .collect()
    }

    #[test]
    fn pure_utility_and_zero_gain_are_prp() {
        let config = ExperimentConfig {
            horizon: 50,
            ..Default::default()
        };
        for method in [Method::Expo(1.0), Method::Ctrl(0.0)] {
            let report = run_experiment(&queries(), method, &config).unwrap();
            assert_abs_diff_eq!(report.mean_nu, 1.0, epsilon = 1e-9);
            assert_abs_diff_eq!(report.mean_nf, 1.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn trivial_queries_are_reported_separately() {
        // A single item is always trivially fair. So is q0: its merit
        // ratio exceeds what two positions allow, and the shifted target
        // lands on the PRP vertex.
        let mut qs = queries();
        qs.push(
            QueryInstance::new("solo", RelevanceVector::new(vec![0.4]).unwrap(), None).unwrap(),
        );
        let config = ExperimentConfig {
            horizon: 10,
            ..Default::default()
        };
        let report = run_experiment(&qs, Method::Expo(0.5), &config).unwrap();
        assert_eq!(report.trivial, vec!["q0".to_string(), "solo".to_string()]);
        assert_eq!(report.queries.len(), 2);
    }

    #[test]
    fn aggregation_ignores_query_order() {
        let config = ExperimentConfig {
            horizon: 100,
            trace: true,
            ..Default::default()
        };
        let forward = run_experiment(&queries(), Method::Expo(0.3), &config).unwrap();
        let mut reversed_queries = queries();
        reversed_queries.reverse();
        let backward = run_experiment(&reversed_queries, Method::Expo(0.3), &config).unwrap();
        assert_abs_diff_eq!(forward.mean_nu, backward.mean_nu, epsilon = 1e-12);
        assert_abs_diff_eq!(forward.mean_nf, backward.mean_nf, epsilon = 1e-12);
        assert_eq!(forward.mean_trace.as_ref().unwrap().len(), 100);
    }

    #[test]
    fn custom_fairness_needs_merits() {
        let config = ExperimentConfig {
            fairness: Fairness::Custom,
            horizon: 5,
            ..Default::default()
        };
        assert!(run_experiment(&queries(), Method::Expo(0.0), &config).is_err());
        assert!(QueryInstance::new(
            "bad",
            RelevanceVector::new(vec![0.1, 0.2]).unwrap(),
            Some(MeritVector::uniform(3))
        )
        .is_err());
    }

    #[test]
    fn sweeps() {
        assert_eq!(default_sweep("expo").len(), 21);
        let pl = default_sweep("pl");
        assert_abs_diff_eq!(pl[0].param(), 1e-3, epsilon = 1e-15);
        assert_abs_diff_eq!(pl[20].param(), 50.0, epsilon = 1e-9);
        let ctrl = default_sweep("ctrl");
        assert_eq!(ctrl[0], Method::Ctrl(0.0));
        assert_abs_diff_eq!(ctrl.last().unwrap().param(), 1.0, epsilon = 1e-12);
    }
}
