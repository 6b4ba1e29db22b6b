//! Geometry of the DBN-expohedron: the convex hull of the exposure vectors
//! of all `n!` rankings.
//!
//! Every vertex lies on the hyperplane `ν·x = level` with
//! `ν = 1 + γκ/(1−γ)·ρ`. Inside the zone of a ranking `π` (the cone of
//! vectors sorted like `π`) the polytope is cut out by that hyperplane and by
//! the `n − 1` prefix constraints `ν_s·(x − 𝓔(π)) ≤ 0`, where `ν_s` keeps
//! the components of `ν` for the items at ranks `≤ s` and zeroes the rest.
//! All membership and face tests reduce to prefix sums over the zone order.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::click_models::{write_exposure, DbnParams, ExposureVector, Ranking, RelevanceVector};
use crate::error::{check_len, Error, Result};
use crate::linalg::{axpy, dot, norm};

/// Relative width of the equality band used by every hyperplane test.
pub const EQ_TOLERANCE: f64 = 1e-9;

const GRAM_SCHMIDT_DROP: f64 = 1e-10;
const BISECTION_REL_TOL: f64 = 1e-12;
const MAX_BISECTIONS: usize = 200;
const MAX_DOUBLINGS: usize = 64;
const SHIFT_CAP: f64 = 1e6;
const MULTIPLIER_TOL: f64 = 1e-12;
/// Directions shorter than this are treated as zero.
pub const ZERO_DIRECTION: f64 = 1e-12;

/// Non-negative merits `μ` that a fair exposure should be proportional to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct MeritVector(Vec<f64>);

impl MeritVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("merit vector is empty".into()));
        }
        if let Some((i, m)) = values
            .iter()
            .enumerate()
            .find(|(_, m)| !(m.is_finite() && **m >= 0.0))
        {
            return Err(Error::InvalidParameter(format!(
                "merit of item {} is {m}; merits must be finite and non-negative",
                i + 1
            )));
        }
        if values.iter().all(|&m| m == 0.0) {
            return Err(Error::InvalidParameter("merit vector is all zero".into()));
        }
        Ok(Self(values))
    }

    /// Equal merits for every item.
    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl Deref for MeritVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for MeritVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<MeritVector> for Vec<f64> {
    fn from(m: MeritVector) -> Self {
        m.0
    }
}

/// A face `(π, S)`: a zone permutation and the 1-based split positions whose
/// prefix constraints bind.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Face {
    pi: Ranking,
    splits: Vec<usize>,
}

impl Face {
    /// `splits` are 1-based; they are sorted and deduplicated.
    pub fn new(pi: Ranking, mut splits: Vec<usize>) -> Result<Self> {
        splits.sort_unstable();
        splits.dedup();
        if let Some(&s) = splits.iter().find(|&&s| s == 0 || s > pi.len()) {
            return Err(Error::InvalidParameter(format!(
                "split {s} out of range 1..={}",
                pi.len()
            )));
        }
        Ok(Self { pi, splits })
    }

    pub fn zone(&self) -> &Ranking {
        &self.pi
    }

    pub fn splits(&self) -> &[usize] {
        &self.splits
    }

    pub fn dim(&self) -> usize {
        self.pi.len() - self.splits.len()
    }

    /// Items grouped by consecutive splits, in zone order.
    fn blocks(&self) -> impl Iterator<Item = &[usize]> + '_ {
        let items = self.pi.item_at_rank();
        let mut start = 0;
        self.splits.iter().map(move |&s| {
            let block = &items[start..s];
            start = s;
            block
        })
    }
}

/// Result of [`Expohedron::target_exposure`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetExposure {
    pub exposure: ExposureVector,
    /// The constant `K` added to every merit; zero when `μ` itself is feasible.
    pub shift: f64,
}

/// Zone order of a point with its prefix slacks `ν_s·(x − 𝓔(π))` for `s = 1..=n`.
struct ZoneSlack {
    zone: Ranking,
    prefix: Vec<f64>,
}

/// The DBN-expohedron `Π(γ, κ, ρ)` with its hyperplane cached.
#[derive(Debug, Clone)]
pub struct Expohedron {
    params: DbnParams,
    rho: RelevanceVector,
    normal: Vec<f64>,
    level: f64,
    tol: f64,
}

impl Expohedron {
    pub fn new(params: DbnParams, rho: RelevanceVector) -> Self {
        let scale = params.normal_scale();
        let normal: Vec<f64> = rho.iter().map(|r| 1.0 + scale * r).collect();
        let mut vertex = vec![0.0; rho.len()];
        write_exposure(&Ranking::identity(rho.len()), &params, &rho, &mut vertex);
        let level = dot(&normal, &vertex);
        Self {
            params,
            rho,
            normal,
            level,
            tol: EQ_TOLERANCE * level.abs().max(1.0),
        }
    }

    pub fn dim(&self) -> usize {
        self.rho.len()
    }

    pub fn params(&self) -> &DbnParams {
        &self.params
    }

    pub fn rho(&self) -> &RelevanceVector {
        &self.rho
    }

    /// Normal `ν` of the hyperplane holding every vertex.
    pub fn normal(&self) -> &[f64] {
        &self.normal
    }

    /// `ν·𝓔(π)`, identical for every ranking.
    pub fn level(&self) -> f64 {
        self.level
    }

    /// Width of the equality band, `1e-9 · max(1, |level|)`.
    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    pub fn vertex(&self, ranking: &Ranking) -> ExposureVector {
        let mut out = vec![0.0; self.dim()];
        write_exposure(ranking, &self.params, &self.rho, &mut out);
        ExposureVector(out)
    }

    /// Items by decreasing relevance, ties by index.
    pub fn prp_ranking(&self) -> Ranking {
        Ranking::sort_descending(&self.rho)
    }

    pub fn prp_exposure(&self) -> ExposureVector {
        self.vertex(&self.prp_ranking())
    }

    /// Largest achievable utility `ρ·𝓔(π_PRP)`.
    pub fn max_utility(&self) -> f64 {
        dot(&self.rho, &self.prp_exposure())
    }

    fn zone_slack(&self, x: &[f64]) -> ZoneSlack {
        self.slack_in(x, zone_of(x))
    }

    fn slack_in(&self, x: &[f64], zone: Ranking) -> ZoneSlack {
        let mut examined = 1.0;
        let mut acc = 0.0;
        let mut prefix = Vec::with_capacity(x.len());
        for &item in zone.item_at_rank() {
            acc += self.normal[item] * (x[item] - examined);
            prefix.push(acc);
            examined *= self.params.gamma() * (1.0 - self.params.kappa() * self.rho[item]);
        }
        ZoneSlack { zone, prefix }
    }

    /// Normal of the prefix constraint `s` (1-based) in zone `pi`, in item coordinates.
    pub fn face_normal(&self, s: usize, pi: &Ranking) -> Result<Vec<f64>> {
        check_len(self.dim(), pi.len())?;
        if s == 0 || s > self.dim() {
            return Err(Error::InvalidParameter(format!(
                "split {s} out of range 1..={}",
                self.dim()
            )));
        }
        let mut out = vec![0.0; self.dim()];
        for &item in &pi.item_at_rank()[..s] {
            out[item] = self.normal[item];
        }
        Ok(out)
    }

    /// Membership test against the zone vertex of `x`.
    pub fn is_inside(&self, x: &[f64]) -> Result<bool> {
        check_len(self.dim(), x.len())?;
        Ok(self.contains(x))
    }

    fn contains(&self, x: &[f64]) -> bool {
        if x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        let slack = self.zone_slack(x);
        let n = x.len();
        slack.prefix[n - 1].abs() <= self.tol
            && slack.prefix[..n - 1].iter().all(|&p| p <= self.tol)
    }

    /// Smallest face containing `x`.
    pub fn face_id(&self, x: &[f64]) -> Result<Face> {
        check_len(self.dim(), x.len())?;
        if !self.contains(x) {
            return Err(Error::Infeasible(format!("{x:?}")));
        }
        Ok(self.face_from(self.zone_slack(x)))
    }

    /// [`Self::face_id`] where near-ties between coordinates (within the
    /// equality band) keep their order in `hint`, so the zone, and with it
    /// the identity of each binding prefix, does not flip on rounding noise.
    pub(crate) fn face_id_near(&self, x: &[f64], hint: &Ranking) -> Result<Face> {
        check_len(self.dim(), x.len())?;
        check_len(self.dim(), hint.len())?;
        if !self.contains(x) {
            return Err(Error::Infeasible(format!("{x:?}")));
        }
        // Adjacent swaps of clear inversions only; each swap removes one.
        let mut order = hint.item_at_rank().to_vec();
        let mut swapped = true;
        while swapped {
            swapped = false;
            for r in 1..order.len() {
                if x[order[r - 1]] < x[order[r]] - self.tol {
                    order.swap(r - 1, r);
                    swapped = true;
                }
            }
        }
        let zone = Ranking::new(order)?;
        Ok(self.face_from(self.slack_in(x, zone)))
    }

    fn face_from(&self, slack: ZoneSlack) -> Face {
        let splits = slack
            .prefix
            .iter()
            .enumerate()
            .filter(|(_, p)| p.abs() <= self.tol)
            .map(|(s, _)| s + 1)
            .collect();
        Face {
            pi: slack.zone,
            splits,
        }
    }

    /// `v − P v`, with `P` the orthogonal projector onto the span of the
    /// face normals, orthonormalized by modified Gram–Schmidt.
    pub fn project_onto_face_subspace(&self, v: &[f64], face: &Face) -> Result<Vec<f64>> {
        check_len(self.dim(), v.len())?;
        check_len(self.dim(), face.zone().len())?;
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(face.splits().len());
        for &s in face.splits() {
            let mut u = self.face_normal(s, face.zone())?;
            let original = norm(&u);
            for q in &basis {
                let c = dot(q, &u);
                axpy(-c, q, &mut u);
            }
            let residual = norm(&u);
            if residual <= GRAM_SCHMIDT_DROP * original.max(1.0) {
                continue;
            }
            u.iter_mut().for_each(|x| *x /= residual);
            basis.push(u);
        }
        let mut out = v.to_vec();
        for q in &basis {
            let c = dot(q, &out);
            axpy(-c, q, &mut out);
        }
        Ok(out)
    }

    /// Same projection as [`Self::project_onto_face_subspace`] in `O(n)`.
    ///
    /// The normals of nested prefixes span the same space as the normal
    /// restricted to each block between consecutive splits, and those block
    /// vectors have disjoint supports.
    pub(crate) fn project_out(&self, v: &[f64], face: &Face) -> Vec<f64> {
        let mut out = v.to_vec();
        for block in face.blocks() {
            let (num, den) = block.iter().fold((0.0, 0.0), |(num, den), &i| {
                (
                    num + self.normal[i] * v[i],
                    den + self.normal[i] * self.normal[i],
                )
            });
            let c = num / den;
            for &i in block {
                out[i] -= c * self.normal[i];
            }
        }
        out
    }

    /// Coefficients of `v` on the binding normals of `face`, one per split.
    ///
    /// `v − project_out(v)` is `Σ β_b ν|_b` over the blocks; since `ν_s` is the
    /// sum of the block normals up to `s`, the coefficient of split `s` is the
    /// drop in `β` across it. The last entry belongs to the hyperplane.
    pub(crate) fn split_multipliers(&self, v: &[f64], face: &Face) -> Vec<f64> {
        let betas: Vec<f64> = face
            .blocks()
            .map(|block| {
                let (num, den) = block.iter().fold((0.0, 0.0), |(num, den), &i| {
                    (
                        num + self.normal[i] * v[i],
                        den + self.normal[i] * self.normal[i],
                    )
                });
                num / den
            })
            .collect();
        let mut out: Vec<f64> = betas.windows(2).map(|w| w[0] - w[1]).collect();
        out.extend(betas.last());
        out
    }

    /// Projection of `v` onto the feasible directions at a point of `face`:
    /// stay on the hyperplane, keep the `locked` splits binding and keep every
    /// other binding prefix sum from growing. Returns the direction and the
    /// splits it stays on.
    pub(crate) fn tangent_projection(
        &self,
        v: &[f64],
        face: &Face,
        locked: &[usize],
    ) -> Result<(Vec<f64>, Face)> {
        let n = self.dim();
        let scale = norm(v).max(f64::MIN_POSITIVE);
        let mut active = face.clone();
        for _ in 0..4 * n + 4 {
            let d = self.project_out(v, &active);

            let multipliers = self.split_multipliers(v, &active);
            let last = multipliers.len() - 1;
            let most_negative = multipliers[..last]
                .iter()
                .enumerate()
                .filter(|&(j, &c)| {
                    c < -MULTIPLIER_TOL * scale && !locked.contains(&active.splits[j])
                })
                .min_by(|a, b| a.1.total_cmp(b.1));
            if let Some((j, _)) = most_negative {
                active.splits.remove(j);
                continue;
            }

            let mut acc = 0.0;
            let mut worst: Option<(usize, f64)> = None;
            for (rank, &item) in face.zone().item_at_rank().iter().enumerate() {
                acc += self.normal[item] * d[item];
                let s = rank + 1;
                if face.splits.binary_search(&s).is_ok()
                    && active.splits.binary_search(&s).is_err()
                    && acc > MULTIPLIER_TOL * scale
                    && worst.is_none_or(|(_, w)| acc > w)
                {
                    worst = Some((s, acc));
                }
            }
            match worst {
                Some((s, _)) => {
                    let at = active.splits.binary_search(&s).unwrap_err();
                    active.splits.insert(at, s);
                }
                None => return Ok((d, active)),
            }
        }
        Err(Error::NonConvergence(
            "feasible direction search cycled".into(),
        ))
    }

    /// Moves `x` onto the affine hull of `face`, which passes through the zone vertex.
    pub(crate) fn snap_to_face(&self, x: &[f64], face: &Face) -> Vec<f64> {
        let vertex = self.vertex(face.zone());
        let offset: Vec<f64> = x.iter().zip(vertex.iter()).map(|(a, b)| a - b).collect();
        let mut out = self.project_out(&offset, face);
        out.iter_mut().zip(vertex.iter()).for_each(|(o, v)| *o += v);
        out
    }

    /// Largest `λ ≥ 0` with `origin + λ·direction` inside, by doubling then bisection.
    pub(crate) fn max_step(&self, origin: &[f64], direction: &[f64]) -> Result<f64> {
        check_len(self.dim(), origin.len())?;
        check_len(self.dim(), direction.len())?;
        if !self.contains(origin) {
            return Err(Error::Infeasible(format!("ray origin {origin:?}")));
        }
        let length = norm(direction);
        if length <= ZERO_DIRECTION {
            return Err(Error::Degenerate(
                "ray direction is numerically zero".into(),
            ));
        }
        let mut point = vec![0.0; origin.len()];
        let mut at = |lambda: f64| {
            point.copy_from_slice(origin);
            axpy(lambda, direction, &mut point);
            self.contains(&point)
        };

        let mut lo = 0.0;
        let mut hi = 1.0 / length;
        let mut doublings = 0;
        while at(hi) {
            lo = hi;
            hi *= 2.0;
            doublings += 1;
            if doublings > MAX_DOUBLINGS {
                return Err(Error::NonConvergence(
                    "ray never leaves the expohedron".into(),
                ));
            }
        }
        for _ in 0..MAX_BISECTIONS {
            if hi - lo <= BISECTION_REL_TOL * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if at(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(lo)
    }

    /// The feasible exposure proportional to `μ`, or to `μ + K·1` for the
    /// smallest `K ≥ 0` that makes one feasible.
    pub fn target_exposure(&self, mu: &MeritVector) -> Result<TargetExposure> {
        check_len(self.dim(), mu.len())?;
        let candidate = |shift: f64| -> Vec<f64> {
            let shifted: Vec<f64> = mu.iter().map(|m| m + shift).collect();
            let scale = self.level / dot(&self.normal, &shifted);
            shifted.into_iter().map(|m| m * scale).collect()
        };

        let direct = candidate(0.0);
        if self.contains(&direct) {
            return Ok(TargetExposure {
                exposure: ExposureVector(direct),
                shift: 0.0,
            });
        }

        let mut lo = 0.0;
        let mut hi = 1.0;
        while !self.contains(&candidate(hi)) {
            lo = hi;
            hi *= 2.0;
            if hi > SHIFT_CAP {
                return Err(Error::NonConvergence(format!(
                    "no merit shift up to {SHIFT_CAP} yields a feasible target"
                )));
            }
        }
        for _ in 0..MAX_BISECTIONS {
            if hi - lo <= BISECTION_REL_TOL * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if self.contains(&candidate(mid)) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        // The bisection stops within tolerance of the boundary; land on it.
        let x = candidate(hi);
        let face = self.face_id(&x)?;
        Ok(TargetExposure {
            exposure: ExposureVector(self.snap_to_face(&x, &face)),
            shift: hi,
        })
    }
}

/// Ranking that sorts `x` in decreasing order; ties keep ascending item index.
pub fn zone_of(x: &[f64]) -> Ranking {
    Ranking::sort_descending(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn eh(rho: &[f64]) -> Expohedron {
        Expohedron::new(
            DbnParams::new(0.5, 0.7).unwrap(),
            RelevanceVector::new(rho.to_vec()).unwrap(),
        )
    }

    fn one_based(items: &[usize]) -> Ranking {
        Ranking::from_one_based(items).unwrap()
    }

    #[test]
    fn zone_sorting() {
        assert_eq!(zone_of(&[0.2, 0.9, 0.5]).to_one_based(), vec![2, 3, 1]);
        assert_eq!(zone_of(&[0.5, 0.5]).to_one_based(), vec![1, 2]);
    }

    #[test]
    fn face_normals() {
        let two = eh(&[0.9, 0.1]);
        let nu = two.face_normal(1, &one_based(&[1, 2])).unwrap();
        assert_abs_diff_eq!(nu.as_slice(), &[1.63, 0.0][..], epsilon = 1e-12);
        let full = two.face_normal(2, &one_based(&[2, 1])).unwrap();
        assert_abs_diff_eq!(full.as_slice(), two.normal(), epsilon = 0.0);

        let three = eh(&[0.1, 0.5, 0.9]);
        let nu = three.face_normal(2, &one_based(&[3, 2, 1])).unwrap();
        assert_abs_diff_eq!(nu.as_slice(), &[0.0, 1.35, 1.63][..], epsilon = 1e-12);
        assert!(three.face_normal(0, &one_based(&[3, 2, 1])).is_err());
        assert!(three.face_normal(4, &one_based(&[3, 2, 1])).is_err());
    }

    #[test]
    fn level_of_two_item_instance() {
        let two = eh(&[0.9, 0.1]);
        assert_abs_diff_eq!(two.level(), 1.82795, epsilon = 1e-12);
        assert!(!two.is_inside(&[1.0, 1.0]).unwrap());
        assert!(two.is_inside(&[1.0, 0.185]).unwrap());
        assert!(two.is_inside(&[0.7325, 0.5925]).unwrap());
        assert!(two.is_inside(&[1.0]).is_err());
    }

    #[test]
    fn faces_of_two_item_instance() {
        let two = eh(&[0.9, 0.1]);
        let vertex = two.face_id(&[1.0, 0.185]).unwrap();
        assert_eq!(vertex.splits(), &[1, 2]);
        assert_eq!(vertex.dim(), 0);
        let edge = two.face_id(&[0.7325, 0.5925]).unwrap();
        assert_eq!(edge.splits(), &[2]);
        assert_eq!(edge.dim(), 1);
        assert!(matches!(
            two.face_id(&[1.0, 1.0]),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn interior_point_binds_only_the_hyperplane() {
        let three = eh(&[0.1, 0.5, 0.9]);
        let verts: Vec<_> = [[1, 2, 3], [2, 3, 1], [3, 1, 2]]
            .iter()
            .map(|p| three.vertex(&one_based(p)))
            .collect();
        let centre: Vec<f64> = (0..3)
            .map(|i| verts.iter().map(|v| v[i]).sum::<f64>() / 3.0)
            .collect();
        let face = three.face_id(&centre).unwrap();
        assert_eq!(face.splits(), &[3]);
        assert_eq!(face.dim(), 2);
    }

    #[test]
    fn projection_edge_cases() {
        let three = eh(&[0.1, 0.5, 0.9]);
        let pi = one_based(&[3, 2, 1]);
        let empty = Face::new(pi.clone(), vec![]).unwrap();
        let v = vec![0.3, -0.2, 0.7];
        assert_eq!(three.project_onto_face_subspace(&v, &empty).unwrap(), v);

        let face = Face::new(pi.clone(), vec![1, 3]).unwrap();
        let nu1 = three.face_normal(1, &pi).unwrap();
        let residual = three.project_onto_face_subspace(&nu1, &face).unwrap();
        assert!(norm(&residual) < 1e-12);
        assert!(Face::new(pi, vec![4]).is_err());
    }

    #[test]
    fn demographic_target() {
        let two = eh(&[0.9, 0.1]);
        let t = two.target_exposure(&MeritVector::uniform(2)).unwrap();
        assert_eq!(t.shift, 0.0);
        assert_abs_diff_eq!(t.exposure[0], 1.82795 / 2.7, epsilon = 1e-12);
        assert_abs_diff_eq!(t.exposure[1], 1.82795 / 2.7, epsilon = 1e-12);
    }

    #[test]
    fn meritocratic_target_needs_a_shift() {
        let two = eh(&[0.9, 0.1]);
        let t = two
            .target_exposure(&MeritVector::new(vec![0.9, 0.1]).unwrap())
            .unwrap();
        assert_abs_diff_eq!(t.shift, 0.0665 / 0.815, epsilon = 1e-7);
        assert_abs_diff_eq!(t.exposure.as_slice(), &[1.0, 0.185][..], epsilon = 1e-7);
    }

    #[test]
    fn target_on_a_vertex_ray() {
        let three = eh(&[0.1, 0.5, 0.9]);
        let v = three.vertex(&one_based(&[2, 1, 3]));
        let mu = MeritVector::new(v.iter().map(|x| 3.0 * x).collect()).unwrap();
        let t = three.target_exposure(&mu).unwrap();
        assert_eq!(t.shift, 0.0);
        assert_abs_diff_eq!(t.exposure.as_slice(), v.as_slice(), epsilon = 1e-12);
    }

    #[test]
    fn merit_validation() {
        assert!(MeritVector::new(vec![0.0, 0.0]).is_err());
        assert!(MeritVector::new(vec![-1.0, 2.0]).is_err());
        assert!(MeritVector::new(vec![]).is_err());
    }

    fn instance() -> impl Strategy<Value = (Expohedron, Vec<usize>)> {
        (2usize..=8)
            .prop_flat_map(|n| {
                (
                    0.0f64..0.95,
                    0.0f64..=1.0,
                    proptest::collection::vec(0.0f64..=1.0, n),
                    Just((0..n).collect::<Vec<usize>>()).prop_shuffle(),
                )
            })
            .prop_map(|(g, k, rho, perm)| {
                (
                    Expohedron::new(
                        DbnParams::new(g, k).unwrap(),
                        RelevanceVector::new(rho).unwrap(),
                    ),
                    perm,
                )
            })
    }

    proptest! {
        #[test]
        fn vertex_sorts_into_its_own_zone((eh, perm) in instance()) {
            prop_assume!(eh.params().gamma() > 0.0);
            let pi = Ranking::new(perm).unwrap();
            let v = eh.vertex(&pi);
            // strict decrease needs γ(1 − κρ) > 0 at every rank
            prop_assume!(eh.rho().iter().all(|r| eh.params().kappa() * r < 1.0));
            prop_assert_eq!(zone_of(&v), pi);
        }

        #[test]
        fn vertices_are_on_the_hyperplane((eh, perm) in instance()) {
            let v = eh.vertex(&Ranking::new(perm).unwrap());
            let level = dot(eh.normal(), &v);
            prop_assert!((level - eh.level()).abs() <= 1e-10 * eh.level().abs());
            let face = eh.face_id(&v).unwrap();
            prop_assert_eq!(face.splits().len(), eh.dim());
        }

        #[test]
        fn projection_is_orthogonal_to_face_normals(
            (eh, perm) in instance(),
            seed in proptest::collection::vec(-1.0f64..1.0, 8),
            mask in proptest::collection::vec(any::<bool>(), 8),
        ) {
            let n = eh.dim();
            let pi = Ranking::new(perm).unwrap();
            let splits: Vec<usize> = (1..=n).filter(|s| mask[s - 1]).collect();
            let face = Face::new(pi.clone(), splits).unwrap();
            let v = &seed[..n];
            let residual = eh.project_onto_face_subspace(v, &face).unwrap();
            for &s in face.splits() {
                let nu = eh.face_normal(s, &pi).unwrap();
                prop_assert!(dot(&nu, &residual).abs() <= 1e-9);
            }
            let fast = eh.project_out(v, &face);
            for (a, b) in residual.iter().zip(&fast) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }
    }
}
