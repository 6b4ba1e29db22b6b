//! Pareto front of the bi-objective problem
//! `max ρ·e, min ‖e − 𝓔*‖₂` over the expohedron.
//!
//! The front is the path `λ ↦ proj(𝓔* + λρ)` onto the expohedron, a polyline
//! starting at `𝓔*`. Each segment follows `ρ` projected onto the current
//! face. A segment ends when the walk hits the boundary, which adds a binding
//! split, or when the multiplier of a binding split falls to zero, which
//! releases it. Utility is maximal at the far end.

use serde::{Deserialize, Serialize};

use crate::click_models::ExposureVector;
use crate::error::{check_len, Error, Result};
use crate::expohedron::{Expohedron, ZERO_DIRECTION};
use crate::linalg::{axpy, distance, dot, norm, sub};

const DOMINANCE_TOL: f64 = 1e-6;
const INVERSE_BISECTIONS: usize = 100;
const MULTIPLIER_NOISE: f64 = 1e-7;
/// Generous cap on breakpoints; each one adds or releases a binding split.
const MAX_SEGMENTS_PER_ITEM: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontVertex {
    pub exposure: ExposureVector,
    /// `ρ·e`
    pub utility: f64,
    /// `‖e − 𝓔*‖₂`
    pub unfairness: f64,
    pub nu: f64,
    pub nf: f64,
    /// Dimension of the smallest face holding this vertex.
    pub face_dim: usize,
}

/// Vertices `v⁽⁰⁾ = 𝓔*, …, v⁽ˡ⁾` of the piecewise-linear front.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoFront {
    vertices: Vec<FrontVertex>,
    target: ExposureVector,
    rho: Vec<f64>,
    max_utility: f64,
    prp_unfairness: f64,
    tol: f64,
}

impl ParetoFront {
    pub fn vertices(&self) -> &[FrontVertex] {
        &self.vertices
    }

    pub fn target(&self) -> &ExposureVector {
        &self.target
    }

    pub fn segments(&self) -> usize {
        self.vertices.len().saturating_sub(1)
    }

    /// `‖𝓔_PRP − 𝓔*‖₂`, the unfairness normalizer.
    pub fn prp_unfairness(&self) -> f64 {
        self.prp_unfairness
    }

    pub fn max_utility(&self) -> f64 {
        self.max_utility
    }

    /// The target already has PRP exposure; both objectives are optimal there.
    pub fn is_trivial(&self) -> bool {
        self.prp_unfairness <= self.tol
    }

    pub fn normalized_utility(&self, e: &[f64]) -> f64 {
        dot(&self.rho, e) / self.max_utility
    }

    pub fn normalized_unfairness(&self, e: &[f64]) -> f64 {
        if self.is_trivial() {
            return 0.0;
        }
        distance(e, &self.target) / self.prp_unfairness
    }

    /// Point at `position ∈ [0, segments]`: the integer part picks the
    /// segment, the fraction interpolates along it.
    pub fn point_at(&self, position: f64) -> ExposureVector {
        let last = self.segments();
        if last == 0 || position <= 0.0 {
            return self.vertices[0].exposure.clone();
        }
        if position >= last as f64 {
            return self.vertices[last].exposure.clone();
        }
        let j = position.floor() as usize;
        let t = position - j as f64;
        let a = &self.vertices[j].exposure;
        let b = &self.vertices[j + 1].exposure;
        ExposureVector(
            a.iter()
                .zip(b.iter())
                .map(|(x, y)| x + t * (y - x))
                .collect(),
        )
    }

    fn metrics_at(&self, position: f64) -> (f64, f64) {
        let p = self.point_at(position);
        (self.normalized_utility(&p), self.normalized_unfairness(&p))
    }

    /// Smallest position whose metric (increasing along the front) reaches `level`.
    fn first_position(&self, level: f64, metric: impl Fn((f64, f64)) -> f64) -> f64 {
        let mut lo = 0.0;
        let mut hi = self.segments() as f64;
        for _ in 0..INVERSE_BISECTIONS {
            let mid = 0.5 * (lo + hi);
            if metric(self.metrics_at(mid)) >= level {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }
}

/// Walks from `target` to the utility-maximal boundary of the expohedron.
pub fn build_front(eh: &Expohedron, target: &[f64]) -> Result<ParetoFront> {
    check_len(eh.dim(), target.len())?;
    if !eh.is_inside(target)? {
        return Err(Error::Infeasible(format!("target {target:?}")));
    }
    let rho = eh.rho().as_slice();
    let prp = eh.prp_exposure();
    let max_utility = dot(rho, &prp);
    let prp_unfairness = distance(&prp, target);
    let tol = eh.tolerance();

    let vertex = |e: Vec<f64>, face_dim: usize| {
        let utility = dot(rho, &e);
        let unfairness = distance(&e, target);
        FrontVertex {
            nu: utility / max_utility,
            nf: if prp_unfairness <= tol {
                0.0
            } else {
                unfairness / prp_unfairness
            },
            exposure: ExposureVector(e),
            utility,
            unfairness,
            face_dim,
        }
    };

    let mut current = target.to_vec();
    let mut lambda = 0.0;
    let mut face = eh.face_id(target)?;
    let mut vertices = vec![vertex(current.clone(), face.dim())];
    let rho_norm = norm(rho);

    for _ in 0..MAX_SEGMENTS_PER_ITEM * eh.dim() {
        if dot(rho, &current) >= max_utility - tol {
            return Ok(ParetoFront {
                vertices,
                target: ExposureVector(target.to_vec()),
                rho: rho.to_vec(),
                max_utility,
                prp_unfairness,
                tol,
            });
        }
        // `𝓔* + λρ − current` is a combination of the binding normals.
        let mut residual = sub(target, &current);
        axpy(lambda, rho, &mut residual);
        let noise = MULTIPLIER_NOISE * (lambda * rho_norm + norm(&current));
        let multipliers = eh.split_multipliers(&residual, &face);
        let locked: Vec<usize> = face.splits()[..face.splits().len() - 1]
            .iter()
            .zip(&multipliers)
            .filter(|&(_, &c)| c > noise)
            .map(|(&s, _)| s)
            .collect();

        let (direction, active) = eh.tangent_projection(rho, &face, &locked)?;
        let held = eh.split_multipliers(&residual, &active);
        let rates = eh.split_multipliers(rho, &active);
        let release = held
            .iter()
            .zip(&rates)
            .take(held.len() - 1)
            .filter(|&(_, &r)| r < 0.0)
            .map(|(&c, &r)| c.max(0.0) / -r)
            .fold(f64::INFINITY, f64::min);
        if norm(&direction) <= ZERO_DIRECTION {
            // Parked on a vertex until a binding split lets go.
            if release.is_finite() {
                lambda += release;
                continue;
            }
            return Err(Error::NonConvergence(format!(
                "walk stalled at utility {} below the maximum {max_utility}",
                dot(rho, &current)
            )));
        }
        let step = eh.max_step(&current, &direction)?.min(release);

        let mut next = current.clone();
        axpy(step, &direction, &mut next);
        face = eh.face_id_near(&next, face.zone())?;
        next = eh.snap_to_face(&next, &face);
        if distance(&next, &current) > ZERO_DIRECTION {
            vertices.push(vertex(next.clone(), face.dim()));
        }
        lambda += step;
        current = next;
    }
    Err(Error::NonConvergence(format!(
        "front walk exceeded {} segments",
        MAX_SEGMENTS_PER_ITEM * eh.dim()
    )))
}

/// Front point minimizing `−α·nU + (1 − α)·nF²`.
pub fn select_tradeoff(front: &ParetoFront, alpha: f64) -> Result<ExposureVector> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in [0, 1], got {alpha}"
        )));
    }
    if front.vertices.is_empty() {
        return Err(Error::InvalidParameter("empty Pareto front".into()));
    }
    if front.is_trivial() || front.segments() == 0 {
        return Ok(front.vertices[0].exposure.clone());
    }
    let objective = |e: &[f64]| {
        let nf = front.normalized_unfairness(e);
        -alpha * front.normalized_utility(e) + (1.0 - alpha) * nf * nf
    };
    let d2 = front.prp_unfairness * front.prp_unfairness;

    let mut best = (f64::INFINITY, 0.0);
    for (j, pair) in front.vertices.windows(2).enumerate() {
        let a = &pair[0].exposure;
        let step = sub(&pair[1].exposure, a);
        let offset = sub(a, &front.target);
        // objective(t) = quad·t² + lin·t + const along the segment
        let quad = (1.0 - alpha) * dot(&step, &step) / d2;
        let lin = -alpha * dot(&front.rho, &step) / front.max_utility
            + 2.0 * (1.0 - alpha) * dot(&offset, &step) / d2;
        let mut candidates = vec![0.0, 1.0];
        if quad > 0.0 {
            candidates.push((-lin / (2.0 * quad)).clamp(0.0, 1.0));
        }
        for t in candidates {
            let position = j as f64 + t;
            let value = objective(&front.point_at(position));
            if value < best.0 {
                best = (value, position);
            }
        }
    }
    Ok(front.point_at(best.1))
}

/// `true` when no point of the front is strictly dominated by `candidate`
/// in (nU ↑, nF ↓) beyond `1e-6`: no front point is at least as bad on both
/// objectives and worse than the candidate by more than `1e-6` on one.
pub fn dominance_check(front: &ParetoFront, candidate: &[f64], eh: &Expohedron) -> Result<bool> {
    check_len(eh.dim(), candidate.len())?;
    if !eh.is_inside(candidate)? {
        return Err(Error::Infeasible(format!("candidate {candidate:?}")));
    }
    let u = front.normalized_utility(candidate);
    let f = front.normalized_unfairness(candidate);
    let last = front.segments() as f64;
    let (u_first, f_first) = front.metrics_at(0.0);
    let (u_last, f_last) = front.metrics_at(last);

    // Both metrics increase along the front, so the front points the candidate
    // weakly dominates form one contiguous stretch [lo, hi].
    if u < u_first || f > f_last {
        return Ok(true);
    }
    let hi = if u >= u_last {
        last
    } else {
        // last position with nU ≤ u
        front.first_position(u, |(nu, _)| nu)
    };
    let lo = if f <= f_first {
        0.0
    } else {
        front.first_position(f, |(_, nf)| nf)
    };
    if lo > hi {
        return Ok(true);
    }
    let (u_lo, _) = front.metrics_at(lo);
    let (_, f_hi) = front.metrics_at(hi);
    let dominated = u - u_lo > DOMINANCE_TOL || f_hi - f > DOMINANCE_TOL;
    Ok(!dominated)
}
