//! Delivery policies: balanced scheduling of a ranking distribution, the
//! exposure controller baseline and Plackett–Luce sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::caratheodory::RankingDistribution;
use crate::click_models::{write_exposure, Ranking};
use crate::error::{check_len, Error, Result};
use crate::expohedron::Expohedron;

const DEFICIT_SLACK: f64 = 1e-12;

/// Deterministic delivery of a distribution so that every prefix keeps each
/// atom's count within one of its proportional quota.
///
/// Earliest-deadline rule for `k` atoms: with `B = 1 − 1/(2k − 2)`, an atom
/// is eligible at step `t` once its deficit `w_i·t − c_i` reaches `1 − B`,
/// and the eligible atom whose deficit would exceed `B` soonest, at step
/// `(c_i + B)/w_i`, is delivered (lowest index on ties). This keeps every
/// deficit within `B < 1`.
#[derive(Debug, Clone)]
pub struct DeliverySchedule {
    source: RankingDistribution,
    horizon: usize,
    counts: Vec<u64>,
    step: u64,
}

impl DeliverySchedule {
    pub fn new(source: RankingDistribution, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidParameter("horizon must be positive".into()));
        }
        let k = source.len();
        Ok(Self {
            source,
            horizon,
            counts: vec![0; k],
            step: 0,
        })
    }

    pub fn source(&self) -> &RankingDistribution {
        &self.source
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// Index of the atom delivered next; advances the schedule.
    pub fn next_index(&mut self) -> usize {
        self.step += 1;
        let t = self.step as f64;
        let k = self.counts.len();
        let bound = if k > 1 {
            1.0 - 1.0 / (2 * k - 2) as f64
        } else {
            0.5
        };
        let mut best = None;
        let mut best_deadline = f64::INFINITY;
        for (i, ((w, _), &c)) in self.source.atoms().zip(&self.counts).enumerate() {
            if w * t - c as f64 + DEFICIT_SLACK < 1.0 - bound {
                continue;
            }
            // step at which this atom's deficit would pass the bound
            let deadline = (c as f64 + bound) / w;
            if best.is_none() || deadline < best_deadline {
                best = Some(i);
                best_deadline = deadline;
            }
        }
        // The eligible set is never empty; fall back to the largest deficit
        // only to stay total under rounding.
        let best = best.unwrap_or_else(|| self.largest_deficit(t));
        self.counts[best] += 1;
        best
    }

    fn largest_deficit(&self, t: f64) -> usize {
        self.source
            .atoms()
            .zip(&self.counts)
            .map(|((w, _), &c)| w * t - c as f64)
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |acc, (i, d)| if d > acc.1 { (i, d) } else { acc },
            )
            .0
    }

    pub fn balanced_next(&mut self) -> Ranking {
        let i = self.next_index();
        self.source.atoms().nth(i).map(|(_, r)| r.clone()).unwrap()
    }

    /// The remaining rankings up to the horizon.
    pub fn deliver(&mut self) -> Vec<Ranking> {
        let left = (self.horizon as u64).saturating_sub(self.step) as usize;
        (0..left).map(|_| self.balanced_next()).collect()
    }
}

/// Feedback controller that ranks by `ρ + g(t·𝓔* − Σ_{s≤t} 𝓔(π_s))`, the
/// gain times the exposure owed to each item so far.
#[derive(Debug, Clone)]
pub struct ControllerState {
    gain: f64,
    step: usize,
    delivered: Vec<f64>,
}

impl ControllerState {
    pub fn new(gain: f64, n: usize) -> Result<Self> {
        if !(gain.is_finite() && gain >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "gain must be non-negative, got {gain}"
            )));
        }
        Ok(Self {
            gain,
            step: 0,
            delivered: vec![0.0; n],
        })
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn step(&self) -> usize {
        self.step
    }

    /// Total exposure of everything delivered so far.
    pub fn cumulative_exposure(&self) -> &[f64] {
        &self.delivered
    }

    /// Mean exposure of everything delivered so far.
    pub fn mean_exposure(&self) -> Vec<f64> {
        let t = self.step.max(1) as f64;
        self.delivered.iter().map(|d| d / t).collect()
    }

    /// PRP on the first step, then the corrected-score ranking.
    pub fn controller_next(&mut self, eh: &Expohedron, target: &[f64]) -> Result<Ranking> {
        check_len(eh.dim(), target.len())?;
        check_len(eh.dim(), self.delivered.len())?;
        let ranking = if self.step == 0 {
            eh.prp_ranking()
        } else {
            let t = self.step as f64;
            let scores: Vec<f64> = eh
                .rho()
                .iter()
                .zip(target)
                .zip(&self.delivered)
                .map(|((r, e), d)| r + self.gain * (t * e - d))
                .collect();
            Ranking::sort_descending(&scores)
        };
        let mut e = vec![0.0; eh.dim()];
        write_exposure(&ranking, eh.params(), eh.rho(), &mut e);
        self.step += 1;
        self.delivered.iter_mut().zip(&e).for_each(|(d, x)| *d += x);
        Ok(ranking)
    }
}

/// Plackett–Luce sampler with log-scores `ρ/τ`.
#[derive(Debug, Clone)]
pub struct PlPolicy {
    temperature: f64,
    scores: Vec<f64>,
    rng: ChaCha8Rng,
}

impl PlPolicy {
    pub fn new(temperature: f64, scores: &[f64], seed: u64) -> Result<Self> {
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        if scores.is_empty() {
            return Err(Error::InvalidParameter("no items to rank".into()));
        }
        Ok(Self {
            temperature,
            scores: scores.to_vec(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// Independent stream `stream` of the generator seeded with `seed`.
    pub fn with_stream(temperature: f64, scores: &[f64], seed: u64, stream: u64) -> Result<Self> {
        let mut policy = Self::new(temperature, scores, seed)?;
        policy.rng.set_stream(stream);
        Ok(policy)
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    /// Draws items one at a time without replacement, each with probability
    /// proportional to `exp(ρ_i/τ)` among those left.
    pub fn pl_next(&mut self) -> Ranking {
        let logits: Vec<f64> = self.scores.iter().map(|s| s / self.temperature).collect();
        let mut remaining: Vec<usize> = (0..logits.len()).collect();
        let mut order = Vec::with_capacity(logits.len());
        let mut weights = vec![0.0; logits.len()];
        while remaining.len() > 1 {
            let top = remaining
                .iter()
                .map(|&i| logits[i])
                .fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for (w, &i) in weights.iter_mut().zip(&remaining) {
                *w = (logits[i] - top).exp();
                total += *w;
            }
            let mut u = self.rng.gen::<f64>() * total;
            let mut pick = remaining.len() - 1;
            for (j, w) in weights[..remaining.len()].iter().enumerate() {
                if u < *w {
                    pick = j;
                    break;
                }
                u -= w;
            }
            order.push(remaining.remove(pick));
        }
        order.extend(remaining);
        Ranking::new(order).expect("sampled order is a permutation")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::click_models::{DbnParams, RelevanceVector};
    use proptest::prelude::*;

    fn one_based(items: &[usize]) -> Ranking {
        Ranking::from_one_based(items).unwrap()
    }

    #[test]
    fn alternates_equal_weights() {
        let a = one_based(&[1, 2]);
        let b = one_based(&[2, 1]);
        let dist = RankingDistribution::new(vec![(0.5, a.clone()), (0.5, b.clone())]).unwrap();
        let mut s = DeliverySchedule::new(dist, 4).unwrap();
        assert_eq!(s.deliver(), vec![a.clone(), b.clone(), a, b]);
        assert_eq!(s.counts(), &[2, 2]);
    }

    #[test]
    fn single_atom_repeats() {
        let a = one_based(&[2, 3, 1]);
        let mut s = DeliverySchedule::new(RankingDistribution::single(a.clone()), 7).unwrap();
        assert!(s.deliver().into_iter().all(|r| r == a));
    }

    #[test]
    fn seventy_thirty_prefixes() {
        let dist =
            RankingDistribution::new(vec![(0.7, one_based(&[1, 2])), (0.3, one_based(&[2, 1]))])
                .unwrap();
        let mut s = DeliverySchedule::new(dist, 10).unwrap();
        for t in 1..=10u64 {
            s.next_index();
            assert!((s.counts()[0] as f64 - 0.7 * t as f64).abs() < 1.0);
            assert!((s.counts()[1] as f64 - 0.3 * t as f64).abs() < 1.0);
        }
        assert_eq!(s.counts(), &[7, 3]);
    }

    proptest! {
        #[test]
        fn balanced_discrepancy_below_one(raw in proptest::collection::vec(0.001f64..1.0, 1..12)) {
            let total: f64 = raw.iter().sum();
            let n = raw.len();
            let atoms = raw
                .iter()
                .enumerate()
                .map(|(i, w)| {
                    let mut perm: Vec<usize> = (0..n).collect();
                    perm.rotate_left(i);
                    (w / total, Ranking::new(perm).unwrap())
                })
                .collect();
            let dist = RankingDistribution::new(atoms).unwrap();
            let weights = dist.weights();
            let mut s = DeliverySchedule::new(dist, 2000).unwrap();
            for t in 1..=2000u64 {
                s.next_index();
                for (c, w) in s.counts().iter().zip(&weights) {
                    prop_assert!((*c as f64 - w * t as f64).abs() < 1.0);
                }
            }
        }
    }

    fn instance() -> Expohedron {
        Expohedron::new(
            DbnParams::new(0.5, 0.7).unwrap(),
            RelevanceVector::new(vec![0.9, 0.1]).unwrap(),
        )
    }

    #[test]
    fn zero_gain_is_prp() {
        let eh = instance();
        let target = [0.677, 0.677];
        let mut c = ControllerState::new(0.0, 2).unwrap();
        for _ in 0..20 {
            assert_eq!(c.controller_next(&eh, &target).unwrap(), eh.prp_ranking());
        }
        let mean = c.mean_exposure();
        assert!((mean[0] - 1.0).abs() < 1e-12 && (mean[1] - 0.185).abs() < 1e-12);
    }

    #[test]
    fn large_gain_lifts_starved_item() {
        // After one PRP step the owed exposure is (−0.323, 0.492). With g = 20
        // the scores are 0.9 − 6.46 and 0.1 + 9.84, so item 2 goes first.
        let eh = instance();
        let target = [0.677, 0.677];
        let mut c = ControllerState::new(20.0, 2).unwrap();
        assert_eq!(
            c.controller_next(&eh, &target).unwrap().to_one_based(),
            vec![1, 2]
        );
        assert_eq!(
            c.controller_next(&eh, &target).unwrap().to_one_based(),
            vec![2, 1]
        );
        let mean = c.mean_exposure();
        assert!((mean[0] - 0.7325).abs() < 1e-12 && (mean[1] - 0.5925).abs() < 1e-12);
    }

    #[test]
    fn small_gain_acts_once_the_debt_builds_up() {
        // Each PRP step moves the score gap 0.8 by 0.1·(−0.323 − 0.492) = −0.0815,
        // so the gap turns negative after ten PRP rankings.
        let eh = instance();
        let target = [0.677, 0.677];
        let mut c = ControllerState::new(0.1, 2).unwrap();
        for _ in 0..10 {
            assert_eq!(
                c.controller_next(&eh, &target).unwrap().to_one_based(),
                vec![1, 2]
            );
        }
        assert_eq!(
            c.controller_next(&eh, &target).unwrap().to_one_based(),
            vec![2, 1]
        );
        assert_eq!(c.cumulative_exposure().len(), 2);
    }

    #[test]
    fn controller_rejects_negative_gain() {
        assert!(ControllerState::new(-1.0, 2).is_err());
    }

    #[test]
    fn pl_is_reproducible() {
        let rho = [0.3, 0.8, 0.1, 0.5];
        let mut a = PlPolicy::new(0.5, &rho, 7).unwrap();
        let mut b = PlPolicy::new(0.5, &rho, 7).unwrap();
        for _ in 0..50 {
            assert_eq!(a.pl_next(), b.pl_next());
        }
    }

    #[test]
    fn cold_pl_is_prp() {
        let rho = [0.3, 0.8, 0.1, 0.5];
        let mut pl = PlPolicy::new(0.001, &rho, 1).unwrap();
        let prp = Ranking::sort_descending(&rho);
        let hits = (0..1000).filter(|_| pl.pl_next() == prp).count();
        assert!(hits >= 999);
    }

    #[test]
    fn pl_top_probability_two_items() {
        let mut pl = PlPolicy::new(0.8, &[0.9, 0.1], 11).unwrap();
        let draws = 100_000;
        let first = (0..draws).filter(|_| pl.pl_next().item(0) == 0).count() as f64 / draws as f64;
        let p = 1.125f64.exp() / (1.125f64.exp() + 0.125f64.exp());
        assert!((p - 0.731_058_578_6).abs() < 1e-9);
        let sigma = (p * (1.0 - p) / draws as f64).sqrt();
        assert!((first - p).abs() < 4.0 * sigma, "{first} vs {p}");
    }

    #[test]
    fn hot_pl_is_uniform() {
        let rho = [0.9, 0.6, 0.3, 0.0];
        let mut pl = PlPolicy::new(1e6, &rho, 3).unwrap();
        let draws = 100_000;
        let mut top = [0usize; 4];
        for _ in 0..draws {
            top[pl.pl_next().item(0)] += 1;
        }
        let p = 0.25;
        let sigma = (p * (1.0 - p) * draws as f64).sqrt();
        for c in top {
            assert!((c as f64 - p * draws as f64).abs() < 3.0 * sigma, "{top:?}");
        }
    }

    #[test]
    fn pl_rejects_bad_temperature() {
        assert!(PlPolicy::new(0.0, &[0.5], 0).is_err());
        assert!(PlPolicy::new(-1.0, &[0.5], 0).is_err());
    }
}
