//! Carathéodory decomposition of a feasible exposure into at most `n` rankings.
//!
//! Starting from the vertex of the point's zone, shoot a ray from the vertex
//! through the current point until it leaves the polytope. The current point
//! is then a convex combination of the vertex and the exit point, and the exit
//! point sits on a face of strictly lower dimension. Repeat from the exit
//! point until it is a vertex itself.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::click_models::{ExposureVector, Ranking};
use crate::error::{check_len, Error, Result};
use crate::expohedron::{zone_of, Expohedron, ZERO_DIRECTION};
use crate::linalg::{axpy, distance, norm, sub};

const WEIGHT_SUM_TOL: f64 = 1e-9;
const PRUNE_WEIGHT: f64 = 1e-12;

/// A finite distribution over rankings of the same length.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingDistribution {
    atoms: Vec<(f64, Ranking)>,
}

impl RankingDistribution {
    /// Weights must be non-negative and sum to 1 within `1e-9`.
    pub fn new(atoms: Vec<(f64, Ranking)>) -> Result<Self> {
        let Some((_, first)) = atoms.first() else {
            return Err(Error::EmptyDistribution);
        };
        let n = first.len();
        for (w, r) in &atoms {
            check_len(n, r.len())?;
            if !(w.is_finite() && *w >= 0.0) {
                return Err(Error::InvalidParameter(format!("weight {w} is negative")));
            }
        }
        let total: f64 = atoms.iter().map(|(w, _)| w).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidParameter(format!(
                "weights sum to {total}, not 1"
            )));
        }
        Ok(Self { atoms })
    }

    pub fn single(ranking: Ranking) -> Self {
        Self {
            atoms: vec![(1.0, ranking)],
        }
    }

    /// Merges duplicate rankings, drops weights below `1e-12`, rescales to sum 1.
    fn normalized(raw: Vec<(f64, Ranking)>) -> Result<Self> {
        let mut order = Vec::new();
        let mut merged: BTreeMap<Ranking, f64> = BTreeMap::new();
        for (w, r) in raw {
            match merged.get_mut(&r) {
                Some(acc) => *acc += w,
                None => {
                    order.push(r.clone());
                    merged.insert(r, w);
                }
            }
        }
        let mut atoms: Vec<(f64, Ranking)> = order
            .into_iter()
            .map(|r| (merged[&r], r))
            .filter(|(w, _)| *w >= PRUNE_WEIGHT)
            .collect();
        let total: f64 = atoms.iter().map(|(w, _)| w).sum();
        if atoms.is_empty() || total <= 0.0 {
            return Err(Error::EmptyDistribution);
        }
        atoms.iter_mut().for_each(|(w, _)| *w /= total);
        Ok(Self { atoms })
    }

    pub fn atoms(&self) -> impl ExactSizeIterator<Item = (f64, &Ranking)> {
        self.atoms.iter().map(|(w, r)| (*w, r))
    }

    pub fn weights(&self) -> Vec<f64> {
        self.atoms.iter().map(|(w, _)| *w).collect()
    }

    pub fn rankings(&self) -> impl Iterator<Item = &Ranking> {
        self.atoms.iter().map(|(_, r)| r)
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Number of items each ranking orders.
    pub fn items(&self) -> usize {
        self.atoms.first().map_or(0, |(_, r)| r.len())
    }
}

/// Serialized form: 1-based item-at-rank permutations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub weight: f64,
    pub permutation: Vec<usize>,
}

impl From<&RankingDistribution> for Vec<Atom> {
    fn from(d: &RankingDistribution) -> Self {
        d.atoms()
            .map(|(weight, r)| Atom {
                weight,
                permutation: r.to_one_based(),
            })
            .collect()
    }
}

impl TryFrom<Vec<Atom>> for RankingDistribution {
    type Error = Error;

    fn try_from(atoms: Vec<Atom>) -> Result<Self> {
        let atoms = atoms
            .into_iter()
            .map(|a| Ok((a.weight, Ranking::from_one_based(&a.permutation)?)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(atoms)
    }
}

/// Far end of the ray from `through` via `origin`: `origin + λ*(origin − through)`
/// for the largest `λ*` keeping the point feasible.
pub fn boundary_intersection(
    origin: &[f64],
    through: &[f64],
    eh: &Expohedron,
) -> Result<ExposureVector> {
    check_len(eh.dim(), origin.len())?;
    check_len(eh.dim(), through.len())?;
    let direction = sub(origin, through);
    if norm(&direction) <= ZERO_DIRECTION {
        return Err(Error::Degenerate(
            "ray origin and pass-through point coincide".into(),
        ));
    }
    let lambda = eh.max_step(origin, &direction)?;
    let mut p = origin.to_vec();
    axpy(lambda, &direction, &mut p);
    let face = eh.face_id(&p)?;
    Ok(ExposureVector(eh.snap_to_face(&p, &face)))
}

/// Writes a feasible exposure as a convex combination of at most `n` ranking vertices.
pub fn decompose(x: &[f64], eh: &Expohedron) -> Result<RankingDistribution> {
    check_len(eh.dim(), x.len())?;
    let n = eh.dim();
    let face = eh.face_id(x)?;
    let mut point = eh.snap_to_face(x, &face);
    let mut remaining = 1.0;
    let mut atoms: Vec<(f64, Ranking)> = Vec::with_capacity(n);

    for _ in 0..n {
        let face = eh.face_id(&point)?;
        let zone = face.zone().clone();
        let vertex = eh.vertex(&zone);
        let offset = sub(&point, &vertex);
        if norm(&offset) <= ZERO_DIRECTION {
            atoms.push((remaining, zone));
            remaining = 0.0;
            break;
        }
        // Keep the ray on the current face so rounding cannot push it out early.
        let direction = eh.project_out(&offset, &face);
        let lambda = eh.max_step(&point, &direction)?;
        let mut exit = point.clone();
        axpy(lambda, &direction, &mut exit);
        let exit_face = eh.face_id(&exit)?;
        let exit = eh.snap_to_face(&exit, &exit_face);

        let span = distance(&exit, &vertex);
        if span <= ZERO_DIRECTION {
            atoms.push((remaining, zone));
            remaining = 0.0;
            break;
        }
        let ratio = (distance(&point, &exit) / span).clamp(0.0, 1.0);
        atoms.push((ratio * remaining, zone));
        remaining *= 1.0 - ratio;
        point = exit;
    }

    if remaining > 0.0 {
        // The last exit point should have been a vertex.
        let zone = zone_of(&point);
        let residual = distance(&point, &eh.vertex(&zone));
        if residual > 1e3 * eh.tolerance() {
            return Err(Error::NonConvergence(format!(
                "decomposition did not reach a vertex after {n} steps (residual {residual:e})"
            )));
        }
        atoms.push((remaining, zone));
    }
    RankingDistribution::normalized(atoms)
}
