use std::collections::HashMap;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use expohedron::evaluation::{delivered_rankings, mean_exposure, stream_of};
use expohedron::{
    build_front, decompose, default_sweep, exposure, normalized_unfairness, normalized_utility,
    reduce_to_dbn, run_experiment, select_tradeoff, Atom, ClickModelSpec, DbnParams,
    DeliverySchedule, ExperimentConfig, Expohedron, ExposureVector, Fairness, Method, MetricReport,
    QueryInstance, Ranking, RankingDistribution,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::output::{emit, num, nums, perm, OutputFormat, Table};

/// Settings shared by every command.
pub struct Settings {
    pub params: DbnParams,
    pub fairness: Fairness,
    pub alpha: Option<f64>,
    pub horizon: usize,
    pub seed: u64,
    pub out: Option<std::path::PathBuf>,
    pub format: OutputFormat,
}

impl Settings {
    fn emit(&self, doc: &impl Serialize, table: impl FnOnce() -> Table) -> Result<()> {
        emit(self.out.as_deref(), self.format, doc, table)
    }
}

/// A query's polytope, fair target and the normalizer of nF (`None` when trivial).
struct Setup {
    eh: Expohedron,
    target: ExposureVector,
    shift: f64,
    denominator: Option<f64>,
}

fn setup(q: &QueryInstance, ctx: &Settings) -> Result<Setup> {
    let eh = Expohedron::new(ctx.params, q.relevances.clone());
    let merits = q.merits_for(ctx.fairness)?;
    let t = eh.target_exposure(&merits)?;
    let gap = distance(&eh.prp_exposure(), &t.exposure);
    let denominator = (gap > eh.tolerance()).then_some(gap);
    Ok(Setup {
        eh,
        target: t.exposure,
        shift: t.shift,
        denominator,
    })
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn per_query<T: Send>(
    queries: &[QueryInstance],
    f: impl Fn(&QueryInstance) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    queries
        .par_iter()
        .map(|q| f(q).with_context(|| format!("query {}", q.query_id)))
        .collect()
}

#[derive(Serialize)]
struct VertexOut {
    exposure: Vec<f64>,
    utility: f64,
    unfairness: f64,
    #[serde(rename = "nU")]
    nu: f64,
    #[serde(rename = "nF")]
    nf: f64,
    face_dim: usize,
}

#[derive(Serialize)]
struct FrontOut {
    query_id: String,
    target: Vec<f64>,
    shift: f64,
    trivial: bool,
    vertices: Vec<VertexOut>,
}

pub fn pareto(queries: &[QueryInstance], ctx: &Settings) -> Result<()> {
    let fronts = per_query(queries, |q| {
        let s = setup(q, ctx)?;
        let front = build_front(&s.eh, &s.target)?;
        Ok(FrontOut {
            query_id: q.query_id.clone(),
            target: s.target.to_vec(),
            shift: s.shift,
            trivial: front.is_trivial(),
            vertices: front
                .vertices()
                .iter()
                .map(|v| VertexOut {
                    exposure: v.exposure.to_vec(),
                    utility: v.utility,
                    unfairness: v.unfairness,
                    nu: v.nu,
                    nf: v.nf,
                    face_dim: v.face_dim,
                })
                .collect(),
        })
    })?;
    ctx.emit(&fronts, || {
        let mut t = Table::new(&[
            "query_id",
            "vertex",
            "nU",
            "nF",
            "utility",
            "unfairness",
            "exposure",
        ]);
        for f in &fronts {
            for (i, v) in f.vertices.iter().enumerate() {
                t.push(vec![
                    f.query_id.clone(),
                    i.to_string(),
                    num(v.nu),
                    num(v.nf),
                    num(v.utility),
                    num(v.unfairness),
                    nums(&v.exposure),
                ]);
            }
        }
        t
    })
}

#[derive(Serialize, Deserialize)]
pub struct DecomposeOut {
    pub query_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub point: Vec<f64>,
    #[serde(rename = "nU", default)]
    pub nu: f64,
    #[serde(rename = "nF", default)]
    pub nf: Option<f64>,
    pub atoms: Vec<Atom>,
}

pub fn decompose_cmd(
    queries: &[QueryInstance],
    target: Option<&[f64]>,
    ctx: &Settings,
) -> Result<()> {
    if target.is_some() && queries.len() != 1 {
        bail!("--target needs exactly one query, got {}", queries.len());
    }
    let alpha = match (target, ctx.alpha) {
        (None, None) => bail!("decompose needs --alpha or --target"),
        (Some(_), _) => None,
        (None, a) => a,
    };
    let out = per_query(queries, |q| {
        let s = setup(q, ctx)?;
        let point = match (target, alpha) {
            (Some(t), _) => t.to_vec(),
            (None, Some(a)) => select_tradeoff(&build_front(&s.eh, &s.target)?, a)?.into_inner(),
            (None, None) => unreachable!("checked above"),
        };
        let dist = decompose(&point, &s.eh)?;
        Ok(DecomposeOut {
            query_id: q.query_id.clone(),
            alpha,
            nu: normalized_utility(&point, &s.eh)?,
            nf: s.denominator.map(|d| distance(&point, &s.target) / d),
            point,
            atoms: (&dist).into(),
        })
    })?;
    ctx.emit(&out, || {
        let mut t = Table::new(&["query_id", "atom", "weight", "permutation"]);
        for d in &out {
            for (i, a) in d.atoms.iter().enumerate() {
                t.push(vec![
                    d.query_id.clone(),
                    i.to_string(),
                    num(a.weight),
                    perm(&a.permutation),
                ]);
            }
        }
        t
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum MethodName {
    Expo,
    Ctrl,
    Pl,
}

impl MethodName {
    fn with(self, param: f64) -> Method {
        match self {
            MethodName::Expo => Method::Expo(param),
            MethodName::Ctrl => Method::Ctrl(param),
            MethodName::Pl => Method::Pl(param),
        }
    }

    fn key(self) -> &'static str {
        match self {
            MethodName::Expo => "expo",
            MethodName::Ctrl => "ctrl",
            MethodName::Pl => "pl",
        }
    }
}

/// Trade-off parameters pinned on the command line.
#[derive(Debug, Clone, Copy, Default)]
pub struct Knobs {
    pub alpha: Option<f64>,
    pub gain: Option<f64>,
    pub temperature: Option<f64>,
}

impl Knobs {
    fn param(&self, m: MethodName) -> Option<f64> {
        match m {
            MethodName::Expo => self.alpha,
            MethodName::Ctrl => self.gain,
            MethodName::Pl => self.temperature,
        }
    }
}

#[derive(Serialize, Deserialize)]
pub struct DeliverOut {
    pub query_id: String,
    #[serde(default)]
    pub method: String,
    #[serde(default)]
    pub param: Option<f64>,
    pub rankings: Vec<Vec<usize>>,
    #[serde(default)]
    pub mean_exposure: Vec<f64>,
    #[serde(rename = "nU", default)]
    pub nu: f64,
    #[serde(rename = "nF", default)]
    pub nf: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<f64>>,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("{}: malformed JSON", path.display()))
}

pub fn deliver(
    queries: &[QueryInstance],
    method: MethodName,
    knobs: Knobs,
    distribution: Option<&Path>,
    ctx: &Settings,
) -> Result<()> {
    let sources: Option<HashMap<String, Vec<Atom>>> = match distribution {
        Some(path) => {
            if method != MethodName::Expo {
                bail!("--distribution only applies to --method expo");
            }
            let docs: Vec<DecomposeOut> = read_json(path)?;
            Some(docs.into_iter().map(|d| (d.query_id, d.atoms)).collect())
        }
        None => None,
    };
    let param = knobs.param(method);
    if sources.is_none() && param.is_none() {
        bail!(
            "deliver --method {} needs {}",
            method.key(),
            flag_of(method)
        );
    }
    let config = ExperimentConfig {
        params: ctx.params,
        fairness: ctx.fairness,
        horizon: ctx.horizon,
        seed: ctx.seed,
        trace: true,
    };
    let out = per_query(queries, |q| {
        let s = setup(q, ctx)?;
        let rankings = match &sources {
            Some(map) => {
                let atoms = map
                    .get(&q.query_id)
                    .ok_or_else(|| anyhow!("no distribution for this query"))?;
                let dist = RankingDistribution::try_from(atoms.clone())?;
                DeliverySchedule::new(dist, ctx.horizon)?.deliver()
            }
            None => delivered_rankings(
                &s.eh,
                &s.target,
                stream_of(&q.query_id),
                method.with(param.unwrap()),
                &config,
            )?,
        };
        let (mean, trace) = running_mean(&rankings, &s)?;
        Ok(DeliverOut {
            query_id: q.query_id.clone(),
            method: method.key().into(),
            param,
            rankings: rankings.iter().map(Ranking::to_one_based).collect(),
            nu: normalized_utility(&mean, &s.eh)?,
            nf: s.denominator.map(|d| distance(&mean, &s.target) / d),
            mean_exposure: mean,
            trace,
        })
    })?;
    ctx.emit(&out, || {
        let mut t = Table::new(&["query_id", "t", "permutation", "nF_t"]);
        for d in &out {
            for (i, r) in d.rankings.iter().enumerate() {
                let nf = d.trace.as_ref().map_or(String::new(), |tr| num(tr[i]));
                t.push(vec![d.query_id.clone(), (i + 1).to_string(), perm(r), nf]);
            }
        }
        t
    })
}

fn flag_of(method: MethodName) -> &'static str {
    match method {
        MethodName::Expo => "--alpha",
        MethodName::Ctrl => "--gain",
        MethodName::Pl => "--temperature",
    }
}

/// Time-averaged exposure and, for non-trivial queries, nF after each step.
fn running_mean(rankings: &[Ranking], s: &Setup) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    let n = s.eh.dim();
    let mut mean = vec![0.0; n];
    let mut trace = s.denominator.map(|_| Vec::with_capacity(rankings.len()));
    for (t, r) in rankings.iter().enumerate() {
        let e = exposure(r, s.eh.params(), s.eh.rho())?;
        let step = (t + 1) as f64;
        mean.iter_mut()
            .zip(e.iter())
            .for_each(|(m, x)| *m += (x - *m) / step);
        if let (Some(tr), Some(d)) = (trace.as_mut(), s.denominator) {
            tr.push(distance(&mean, &s.target) / d);
        }
    }
    Ok((mean, trace))
}

pub struct EvaluateOptions<'a> {
    pub methods: Vec<MethodName>,
    pub knobs: Knobs,
    pub trace: bool,
    pub per_query: bool,
    pub rankings: Option<&'a Path>,
}

pub fn evaluate(queries: &[QueryInstance], opts: EvaluateOptions, ctx: &Settings) -> Result<()> {
    if let Some(path) = opts.rankings {
        return evaluate_delivered(queries, path, ctx);
    }
    let config = ExperimentConfig {
        params: ctx.params,
        fairness: ctx.fairness,
        horizon: ctx.horizon,
        seed: ctx.seed,
        trace: opts.trace,
    };
    let mut sweep = Vec::new();
    for m in &opts.methods {
        match opts.knobs.param(*m) {
            Some(p) => sweep.push(m.with(p)),
            None => sweep.extend(default_sweep(m.key())),
        }
    }
    let reports = sweep
        .into_iter()
        .map(|m| run_experiment(queries, m, &config))
        .collect::<expohedron::Result<Vec<MetricReport>>>()?;
    ctx.emit(&reports, || {
        if opts.per_query {
            query_table(&reports, opts.trace)
        } else {
            let mut t = Table::new(&["method", "param", "nU", "nF", "queries", "trivial"]);
            for r in &reports {
                t.push(vec![
                    r.method.clone(),
                    num(r.param),
                    num(r.mean_nu),
                    num(r.mean_nf),
                    r.queries.len().to_string(),
                    r.trivial.len().to_string(),
                ]);
            }
            t
        }
    })
}

fn query_table(reports: &[MetricReport], trace: bool) -> Table {
    let header: &[&'static str] = if trace {
        &["query_id", "method", "param", "nU", "nF", "t", "nF_t"]
    } else {
        &["query_id", "method", "param", "nU", "nF"]
    };
    let mut t = Table::new(header);
    for r in reports {
        for q in &r.queries {
            let base = vec![
                q.query_id.clone(),
                r.method.clone(),
                num(r.param),
                num(q.nu),
                num(q.nf),
            ];
            match (&q.trace, trace) {
                (Some(tr), true) => {
                    for (i, v) in tr.iter().enumerate() {
                        let mut row = base.clone();
                        row.extend([(i + 1).to_string(), num(*v)]);
                        t.push(row);
                    }
                }
                (_, true) => {
                    let mut row = base;
                    row.extend([String::new(), String::new()]);
                    t.push(row);
                }
                _ => t.push(base),
            }
        }
    }
    t
}

#[derive(Serialize)]
struct DeliveredScore {
    query_id: String,
    rankings: usize,
    #[serde(rename = "nU")]
    nu: f64,
    #[serde(rename = "nF")]
    nf: Option<f64>,
}

/// Scores sequences written by `deliver` against the queries they were made for.
fn evaluate_delivered(queries: &[QueryInstance], path: &Path, ctx: &Settings) -> Result<()> {
    let docs: Vec<DeliverOut> = read_json(path)?;
    let by_id: HashMap<&str, &QueryInstance> =
        queries.iter().map(|q| (q.query_id.as_str(), q)).collect();
    let scores = docs
        .par_iter()
        .map(|d| {
            let q = by_id
                .get(d.query_id.as_str())
                .ok_or_else(|| anyhow!("rankings for unknown query {}", d.query_id))?;
            let s = setup(q, ctx)?;
            let rankings = d
                .rankings
                .iter()
                .map(|p| Ranking::from_one_based(p))
                .collect::<expohedron::Result<Vec<_>>>()?;
            let mean = mean_exposure(&rankings, &s.eh)?;
            Ok(DeliveredScore {
                query_id: d.query_id.clone(),
                rankings: rankings.len(),
                nu: normalized_utility(&mean, &s.eh)?,
                nf: match s.denominator {
                    Some(_) => Some(normalized_unfairness(&mean, &s.target, &s.eh)?),
                    None => None,
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ctx.emit(&scores, || {
        let mut t = Table::new(&["query_id", "rankings", "nU", "nF"]);
        for s in &scores {
            t.push(vec![
                s.query_id.clone(),
                s.rankings.to_string(),
                num(s.nu),
                s.nf.map_or(String::new(), num),
            ]);
        }
        t
    })
}

#[derive(Serialize)]
struct ReduceOut {
    model: &'static str,
    gamma: f64,
    kappa: f64,
    relevances: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SpecFile {
    Many(Vec<ClickModelSpec>),
    One(ClickModelSpec),
}

pub fn reduce(path: &Path, ctx: &Settings) -> Result<()> {
    let specs = match read_json::<SpecFile>(path)? {
        SpecFile::Many(v) => v,
        SpecFile::One(s) => vec![s],
    };
    let out = specs
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let (params, rho) = reduce_to_dbn(spec).with_context(|| format!("spec {}", i + 1))?;
            Ok(ReduceOut {
                model: spec.name(),
                gamma: params.gamma(),
                kappa: params.kappa(),
                relevances: rho.to_vec(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ctx.emit(&out, || {
        let mut t = Table::new(&["model", "gamma", "kappa", "relevances"]);
        for r in &out {
            t.push(vec![
                r.model.into(),
                num(r.gamma),
                num(r.kappa),
                nums(&r.relevances),
            ]);
        }
        t
    })
}
