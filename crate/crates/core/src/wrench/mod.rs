//! Contact-level grasp stability: friction cones, the grasp wrench space,
//! force closure, sampled epsilon quality and task-wrench membership.

pub mod simplex;

use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};
use simplex::LpOutcome;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

pub const NORMAL_TOL: f64 = 1e-9;
pub const DEFAULT_CONE_EDGES: usize = 8;
pub const MIN_DIRECTION_SAMPLES: usize = 100;
pub const DEFAULT_DIRECTION_SAMPLES: usize = 2000;
/// Rank tolerance relative to the largest singular value.
const RANK_TOL: f64 = 1e-9;
/// Refinement starts are drawn from this fixed sample prefix.
const REFINE_PREFIX: usize = MIN_DIRECTION_SAMPLES;
const REFINE_STARTS: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum WrenchError {
    #[error("contact normal has norm {0}, expected 1")]
    NonUnitNormal(f64),
    #[error("friction coefficient {0} < 0")]
    NegativeFriction(f64),
    #[error("need at least {min} cone edges, got {got}")]
    ConeEdges { min: usize, got: usize },
    #[error("no contacts")]
    NoContacts,
    #[error("need at least {MIN_DIRECTION_SAMPLES} direction samples, got {0}")]
    TooFewDirections(usize),
    #[error("task wrench has {got} components, expected {expected}")]
    TaskDimension { expected: usize, got: usize },
    #[error("planar contacts must lie in the xy plane")]
    NotPlanar,
    #[error("torque scale must be > 0")]
    TorqueScale,
    #[error("simplex stalled")]
    Stalled,
    #[error("traces have no overlapping time window")]
    NoOverlap,
    #[error("trace shape mismatch: {0}")]
    TraceShape(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contact {
    #[serde(rename = "p")]
    pub point: [f64; 3],
    /// Unit normal pointing into the object.
    #[serde(rename = "n")]
    pub normal: [f64; 3],
    pub mu: f64,
    #[serde(rename = "f_n", default = "unit_force")]
    pub force_magnitude: f64,
}

fn unit_force() -> f64 {
    1.0
}

impl Contact {
    pub fn new(point: [f64; 3], normal: [f64; 3], mu: f64) -> Self {
        Contact { point, normal, mu, force_magnitude: 1.0 }
    }

    fn check(&self) -> Result<(Vector3<f64>, Vector3<f64>), WrenchError> {
        let n = Vector3::from(self.normal);
        if (n.norm() - 1.0).abs() > NORMAL_TOL {
            return Err(WrenchError::NonUnitNormal(n.norm()));
        }
        if !(self.mu >= 0.0) {
            return Err(WrenchError::NegativeFriction(self.mu));
        }
        Ok((Vector3::from(self.point), n))
    }
}

/// Spatial wrenches have six components; planar ones are `(f_x, f_y, τ_z)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WrenchDim {
    #[default]
    Spatial,
    Planar,
}

impl WrenchDim {
    #[allow(clippy::len_without_is_empty)]
    pub fn len(self) -> usize {
        match self {
            WrenchDim::Spatial => 6,
            WrenchDim::Planar => 3,
        }
    }

    /// Below this many primitives the origin cannot be interior.
    pub fn min_primitives(self) -> usize {
        self.len() + 1
    }
}

fn tangent_basis(n: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let axis = if n.x.abs() <= n.y.abs() && n.x.abs() <= n.z.abs() {
        Vector3::x()
    } else if n.y.abs() <= n.z.abs() {
        Vector3::y()
    } else {
        Vector3::z()
    };
    let t1 = n.cross(&axis).normalize();
    (t1, n.cross(&t1))
}

/// `m` unit edges evenly spaced on the cone of half-angle `atan μ`.
pub fn cone_edges(contact: &Contact, m: usize) -> Result<Vec<Vector3<f64>>, WrenchError> {
    if m < 3 {
        return Err(WrenchError::ConeEdges { min: 3, got: m });
    }
    let (_, n) = contact.check()?;
    let (t1, t2) = tangent_basis(&n);
    let half = contact.mu.atan();
    Ok((0..m)
        .map(|k| {
            let phi = std::f64::consts::TAU * k as f64 / m as f64;
            n * half.cos() + (t1 * phi.cos() + t2 * phi.sin()) * half.sin()
        })
        .collect())
}

/// The two boundary edges of a planar friction cone (exact, no linearization).
pub fn planar_cone_edges(contact: &Contact) -> Result<[Vector3<f64>; 2], WrenchError> {
    let (_, n) = contact.check()?;
    if n.z.abs() > NORMAL_TOL || contact.point[2].abs() > NORMAL_TOL {
        return Err(WrenchError::NotPlanar);
    }
    let half = contact.mu.atan();
    let t = Vector3::new(-n.y, n.x, 0.0);
    Ok([n * half.cos() + t * half.sin(), n * half.cos() - t * half.sin()])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WrenchPrimitive {
    pub force: [f64; 3],
    /// Already multiplied by the torque scale.
    pub torque: [f64; 3],
}

impl WrenchPrimitive {
    pub fn components(&self, dim: WrenchDim) -> Vec<f64> {
        match dim {
            WrenchDim::Spatial => self.force.iter().chain(&self.torque).copied().collect(),
            WrenchDim::Planar => vec![self.force[0], self.force[1], self.torque[2]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspWrenchSpace {
    pub primitives: Vec<WrenchPrimitive>,
    pub cone_edges_m: usize,
    pub torque_scale: f64,
    pub dim: WrenchDim,
}

/// One primitive per cone edge: `(e, λ·(p × e))`, normalized to unit length
/// and scaled by the contact's force magnitude. Ordered by contact, then edge.
pub fn build_gws(
    contacts: &[Contact],
    m: usize,
    torque_scale: f64,
    dim: WrenchDim,
) -> Result<GraspWrenchSpace, WrenchError> {
    if contacts.is_empty() {
        return Err(WrenchError::NoContacts);
    }
    if !(torque_scale > 0.0) {
        return Err(WrenchError::TorqueScale);
    }
    let mut primitives = Vec::new();
    for c in contacts {
        let (p, _) = c.check()?;
        let edges = match dim {
            WrenchDim::Spatial => cone_edges(c, m)?,
            WrenchDim::Planar => planar_cone_edges(c)?.to_vec(),
        };
        for e in edges {
            let tau = p.cross(&e) * torque_scale;
            let norm = (e.norm_squared() + tau.norm_squared()).sqrt();
            let s = c.force_magnitude / norm;
            primitives.push(WrenchPrimitive { force: (e * s).into(), torque: (tau * s).into() });
        }
    }
    let cone_edges_m = match dim {
        WrenchDim::Spatial => m,
        WrenchDim::Planar => 2,
    };
    Ok(GraspWrenchSpace { primitives, cone_edges_m, torque_scale, dim })
}

impl GraspWrenchSpace {
    pub fn vectors(&self) -> Vec<Vec<f64>> {
        self.primitives.iter().map(|p| p.components(self.dim)).collect()
    }

    fn unit_vectors(&self) -> Vec<Vec<f64>> {
        self.vectors()
            .into_iter()
            .filter_map(|v| {
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                (n > 0.0).then(|| v.iter().map(|x| x / n).collect())
            })
            .collect()
    }
}

const PRIMES: [u64; 6] = [2, 3, 5, 7, 11, 13];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += (i % base) as f64 * f;
        i /= base;
        f *= inv;
    }
    r
}

/// Deterministic quasi-uniform unit directions: Halton points pushed through
/// the normal quantile and normalized.
pub fn halton_directions(dim: usize, count: usize) -> Vec<Vec<f64>> {
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    let mut out = Vec::with_capacity(count);
    let mut i = 1u64;
    while out.len() < count {
        let v: Vec<f64> = PRIMES[..dim].iter().map(|&p| std.inverse_cdf(radical_inverse(i, p))).collect();
        i += 1;
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            out.push(v.iter().map(|x| x / n).collect());
        }
    }
    out
}

fn support(w: &[Vec<f64>], u: &[f64]) -> f64 {
    w.iter().map(|wi| wi.iter().zip(u).map(|(a, b)| a * b).sum::<f64>()).fold(f64::NEG_INFINITY, f64::max)
}

/// Pattern search on the sphere for a local minimum of the support function.
fn refine(w: &[Vec<f64>], start: &[f64]) -> f64 {
    let d = start.len();
    let mut u = start.to_vec();
    let mut best = support(w, &u);
    let mut step = 0.2;
    while step > 1e-7 {
        let mut improved = true;
        let mut rounds = 0;
        while improved && rounds < 200 {
            improved = false;
            rounds += 1;
            for k in 0..d {
                for l in k..d {
                    for sign in [1.0, -1.0] {
                        for sign2 in [1.0, -1.0] {
                            let mut cand = u.clone();
                            cand[k] += sign * step;
                            if l != k {
                                cand[l] += sign2 * step;
                            } else if sign2 < 0.0 {
                                continue;
                            }
                            let n = cand.iter().map(|x| x * x).sum::<f64>().sqrt();
                            cand.iter_mut().for_each(|x| *x /= n);
                            let h = support(w, &cand);
                            if h < best {
                                best = h;
                                u = cand;
                                improved = true;
                            }
                        }
                    }
                }
            }
        }
        step *= 0.5;
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityVerdict {
    pub force_closure: bool,
    /// Sampled support minimum on unit-normalized primitives; 0 without closure.
    pub epsilon_lower_bound: f64,
    pub direction_samples: usize,
    pub reason: Option<String>,
}

/// Exact test that the primitives positively span the wrench space: full
/// rank plus a strictly positive combination summing to zero.
pub fn positively_spans(w: &[Vec<f64>], dim: usize) -> Result<Result<(), String>, WrenchError> {
    if w.len() < dim + 1 {
        return Ok(Err(format!("{} primitives cannot enclose the origin in {dim}D", w.len())));
    }
    let m = DMatrix::from_fn(dim, w.len(), |r, c| w[c][r]);
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    let rank = sv.iter().filter(|s| **s > RANK_TOL * max.max(1e-300)).count();
    if rank < dim {
        return Ok(Err(format!("primitives span only {rank} of {dim} dimensions")));
    }
    // Σ (1 + β_i) w_i = 0 with β ≥ 0
    let a: Vec<Vec<f64>> = (0..dim).map(|r| w.iter().map(|wi| wi[r]).collect()).collect();
    let b: Vec<f64> = (0..dim).map(|r| -w.iter().map(|wi| wi[r]).sum::<f64>()).collect();
    Ok(match simplex::solve(&a, &b, &[]) {
        LpOutcome::Optimal { .. } => Ok(()),
        LpOutcome::Marginal { residual, .. } => {
            Err(format!("marginal: origin within {residual:.1e} of the hull boundary"))
        }
        LpOutcome::Infeasible { .. } | LpOutcome::Unbounded => Err("origin is not interior to the hull".into()),
        LpOutcome::Stalled => return Err(WrenchError::Stalled),
    })
}

/// Force-closure verdict and the sampled epsilon quality.
pub fn force_closure(gws: &GraspWrenchSpace, direction_samples: usize) -> Result<QualityVerdict, WrenchError> {
    if direction_samples < MIN_DIRECTION_SAMPLES {
        return Err(WrenchError::TooFewDirections(direction_samples));
    }
    let dim = gws.dim.len();
    let w = gws.unit_vectors();
    let verdict = |force_closure, eps, reason| QualityVerdict {
        force_closure,
        epsilon_lower_bound: eps,
        direction_samples,
        reason,
    };
    if let Err(reason) = positively_spans(&w, dim)? {
        return Ok(verdict(false, 0.0, Some(reason)));
    }
    let dirs = halton_directions(dim, direction_samples);
    let h: Vec<f64> = dirs.iter().map(|u| support(&w, u)).collect();
    let sampled = h.iter().copied().fold(f64::INFINITY, f64::min);
    let mut order: Vec<usize> = (0..REFINE_PREFIX).collect();
    order.sort_by(|&a, &b| h[a].total_cmp(&h[b]));
    let refined = order[..REFINE_STARTS].iter().map(|&i| refine(&w, &dirs[i])).fold(f64::INFINITY, f64::min);
    // the true minimum is positive under closure, so this stays > 0
    Ok(verdict(true, sampled.min(refined).max(0.0), None))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "lowercase")]
pub enum Membership {
    Feasible { alpha: Vec<f64> },
    Infeasible { residual: f64 },
    Marginal { residual: f64 },
}

impl Membership {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Membership::Feasible { .. })
    }
}

/// Whether `w_task` is a convex combination of the primitives.
pub fn task_wrench_feasible(gws: &GraspWrenchSpace, w_task: &[f64]) -> Result<Membership, WrenchError> {
    let dim = gws.dim.len();
    if w_task.len() != dim {
        return Err(WrenchError::TaskDimension { expected: dim, got: w_task.len() });
    }
    if gws.primitives.is_empty() {
        return Err(WrenchError::NoContacts);
    }
    let w = gws.vectors();
    let mut a: Vec<Vec<f64>> = (0..dim).map(|r| w.iter().map(|wi| wi[r]).collect()).collect();
    a.push(vec![1.0; w.len()]);
    let mut b = w_task.to_vec();
    b.push(1.0);
    Ok(match simplex::solve(&a, &b, &[]) {
        LpOutcome::Optimal { x, .. } => Membership::Feasible { alpha: x },
        LpOutcome::Marginal { residual, .. } => Membership::Marginal { residual },
        LpOutcome::Infeasible { residual } => Membership::Infeasible { residual },
        LpOutcome::Unbounded => Membership::Infeasible { residual: f64::INFINITY },
        LpOutcome::Stalled => return Err(WrenchError::Stalled),
    })
}

/// Per-finger force traces on one time base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerTraces {
    pub t: Vec<f64>,
    pub fingers: Vec<String>,
    /// `forces[f][i]` is finger `f` at `t[i]`.
    pub forces: Vec<Vec<f64>>,
}

impl FingerTraces {
    fn check(&self) -> Result<(), WrenchError> {
        if self.forces.len() != self.fingers.len() {
            return Err(WrenchError::TraceShape("finger names and series differ in count".into()));
        }
        if self.forces.iter().any(|f| f.len() != self.t.len()) {
            return Err(WrenchError::TraceShape("series length differs from time base".into()));
        }
        if self.t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(WrenchError::TraceShape("time stamps must increase".into()));
        }
        Ok(())
    }

    fn at(&self, f: usize, t: f64) -> f64 {
        let i = self.t.partition_point(|&ti| ti <= t);
        if i == 0 {
            return self.forces[f][0];
        }
        if i == self.t.len() {
            return self.forces[f][i - 1];
        }
        let (t0, t1) = (self.t[i - 1], self.t[i]);
        let (y0, y1) = (self.forces[f][i - 1], self.forces[f][i]);
        y0 + (y1 - y0) * (t - t0) / (t1 - t0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceMismatch {
    /// Mean relative error per finger, percent.
    pub per_finger: Vec<(String, f64)>,
    pub pooled: f64,
}

/// Sim samples below this force are skipped; relative error is undefined there.
pub const MISMATCH_FLOOR_N: f64 = 0.05;

/// Mean of `|real − sim| / |sim|` over the overlap window, with the real
/// trace linearly resampled onto the sim time stamps.
pub fn sim_real_force_compare(sim: &FingerTraces, real: &FingerTraces) -> Result<ForceMismatch, WrenchError> {
    sim.check()?;
    real.check()?;
    if sim.fingers != real.fingers {
        return Err(WrenchError::TraceShape("finger sets differ".into()));
    }
    let (Some(&r0), Some(&r1)) = (real.t.first(), real.t.last()) else {
        return Err(WrenchError::NoOverlap);
    };
    let mut per_finger = Vec::new();
    let (mut total, mut count) = (0.0, 0usize);
    for (f, name) in sim.fingers.iter().enumerate() {
        let errs: Vec<f64> = sim
            .t
            .iter()
            .zip(&sim.forces[f])
            .filter(|(t, s)| **t >= r0 && **t <= r1 && s.abs() >= MISMATCH_FLOOR_N)
            .map(|(&t, &s)| (real.at(f, t) - s).abs() / s.abs())
            .collect();
        if errs.is_empty() {
            return Err(WrenchError::NoOverlap);
        }
        total += errs.iter().sum::<f64>();
        count += errs.len();
        per_finger.push((name.clone(), 100.0 * errs.iter().sum::<f64>() / errs.len() as f64));
    }
    Ok(ForceMismatch { per_finger, pooled: 100.0 * total / count as f64 })
}

/// Reconstructed three-finger grasp traces: a smooth load-and-hold sim
/// profile, with the real one about 20 % higher plus a slow ripple.
pub fn reconstructed_fixture() -> (FingerTraces, FingerTraces) {
    let fingers: Vec<String> = ["thumb", "index", "middle"].map(String::from).to_vec();
    let t: Vec<f64> = (0..=300).map(|i| i as f64 * 0.01).collect();
    let peaks = [4.0, 2.6, 2.2];
    let sim: Vec<Vec<f64>> =
        peaks.iter().map(|&p| t.iter().map(|&ti| p * (1.0 - (-ti / 0.4).exp()) + 0.1).collect()).collect();
    let real: Vec<Vec<f64>> = sim
        .iter()
        .enumerate()
        .map(|(k, s)| {
            s.iter()
                .zip(&t)
                .map(|(v, &ti)| v * (1.2 + 0.05 * (std::f64::consts::TAU * ti / 1.5 + k as f64).sin()))
                .collect()
        })
        .collect();
    (FingerTraces { t: t.clone(), fingers: fingers.clone(), forces: sim }, FingerTraces { t, fingers, forces: real })
}

/// Contact-set input file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactSet {
    pub contacts: Vec<Contact>,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub dim: WrenchDim,
    #[serde(default)]
    pub task_wrench: Option<Vec<f64>>,
}

fn default_m() -> usize {
    DEFAULT_CONE_EDGES
}

fn default_lambda() -> f64 {
    1.0
}

/// `1 / r` for an object of characteristic radius `r` (m).
pub fn torque_scale_for_radius(r: f64) -> f64 {
    1.0 / r
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn antipodal_planar(mu: f64) -> Vec<Contact> {
        vec![Contact::new([0.03, 0.0, 0.0], [-1.0, 0.0, 0.0], mu), Contact::new([-0.03, 0.0, 0.0], [1.0, 0.0, 0.0], mu)]
    }

    fn tripod(mu: f64) -> Vec<Contact> {
        (0..3)
            .map(|k| {
                let a = std::f64::consts::TAU * k as f64 / 3.0;
                Contact::new([0.03 * a.cos(), 0.03 * a.sin(), 0.0], [-a.cos(), -a.sin(), 0.0], mu)
            })
            .collect()
    }

    #[test]
    fn frictionless_cone_collapses_to_normal() {
        let c = Contact::new([0.0; 3], [0.0, 0.0, 1.0], 0.0);
        for e in cone_edges(&c, 5).unwrap() {
            assert_abs_diff_eq!((e - Vector3::z()).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn unit_friction_four_edges() {
        let n = Vector3::new(1.0, 2.0, 2.0) / 3.0;
        let c = Contact::new([0.0; 3], n.into(), 1.0);
        let e = cone_edges(&c, 4).unwrap();
        let tang: Vec<Vector3<f64>> = e.iter().map(|x| x - n * x.dot(&n)).collect();
        for k in 0..4 {
            assert_abs_diff_eq!(e[k].dot(&n).acos().to_degrees(), 45.0, epsilon = 1e-9);
            assert_abs_diff_eq!(tang[k].dot(&tang[(k + 1) % 4]), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn cone_input_errors() {
        let c = Contact::new([0.0; 3], [0.0, 0.0, 2.0], 0.5);
        assert_eq!(cone_edges(&c, 4), Err(WrenchError::NonUnitNormal(2.0)));
        let c = Contact::new([0.0; 3], [0.0, 0.0, 1.0], 0.5);
        assert!(matches!(cone_edges(&c, 2), Err(WrenchError::ConeEdges { .. })));
        assert_eq!(build_gws(&[], 8, 1.0, WrenchDim::Spatial), Err(WrenchError::NoContacts));
    }

    #[test]
    fn gws_counts_and_antipodal_symmetry() {
        let one = build_gws(&tripod(0.5)[..1], 8, 30.0, WrenchDim::Spatial).unwrap();
        assert_eq!(one.primitives.len(), 8);
        let pair = vec![
            Contact::new([0.03, 0.0, 0.0], [-1.0, 0.0, 0.0], 0.5),
            Contact::new([-0.03, 0.0, 0.0], [1.0, 0.0, 0.0], 0.5),
        ];
        let g = build_gws(&pair, 8, 30.0, WrenchDim::Spatial).unwrap();
        // edge k of one contact mirrors an edge of the other; forces cancel in sum
        let total: Vector3<f64> = g.primitives.iter().map(|p| Vector3::from(p.force)).sum();
        assert_abs_diff_eq!(total.norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn translating_contacts_changes_torques_only() {
        let a = tripod(0.5);
        let b: Vec<Contact> =
            a.iter().map(|c| Contact { point: [c.point[0] + 0.01, c.point[1], c.point[2]], ..*c }).collect();
        let ga = build_gws(&a, 6, 30.0, WrenchDim::Spatial).unwrap();
        let gb = build_gws(&b, 6, 30.0, WrenchDim::Spatial).unwrap();
        let differs = ga.primitives.iter().zip(&gb.primitives).any(|(x, y)| x.torque != y.torque);
        assert!(differs);
        assert_eq!(gb, build_gws(&b, 6, 30.0, WrenchDim::Spatial).unwrap());
    }

    #[test]
    fn single_contact_is_not_force_closure() {
        let g = build_gws(&tripod(0.8)[..1], 8, 30.0, WrenchDim::Spatial).unwrap();
        let v = force_closure(&g, 200).unwrap();
        assert!(!v.force_closure);
        assert_eq!(v.epsilon_lower_bound, 0.0);
        assert!(v.reason.is_some());
    }

    #[test]
    fn antipodal_planar_pair_is_force_closure() {
        let g = build_gws(&antipodal_planar(0.5), 8, 1.0 / 0.03, WrenchDim::Planar).unwrap();
        let v = force_closure(&g, 500).unwrap();
        assert!(v.force_closure);
        assert!(v.epsilon_lower_bound > 0.0);
        let frictionless = build_gws(&antipodal_planar(0.0), 8, 1.0 / 0.03, WrenchDim::Planar).unwrap();
        assert!(!force_closure(&frictionless, 500).unwrap().force_closure);
    }

    #[test]
    fn spatial_antipodal_pair_cannot_resist_axial_torque() {
        let g = build_gws(&antipodal_planar(0.5), 8, 1.0 / 0.03, WrenchDim::Spatial).unwrap();
        assert!(!force_closure(&g, 500).unwrap().force_closure);
    }

    #[test]
    fn tripod_is_spatial_force_closure() {
        let g = build_gws(&tripod(0.5), 8, 1.0 / 0.03, WrenchDim::Spatial).unwrap();
        let v = force_closure(&g, 1000).unwrap();
        assert!(v.force_closure, "{v:?}");
        assert!(force_closure(&g, 99).is_err());
    }

    #[test]
    fn epsilon_is_non_increasing_under_refinement() {
        let g = build_gws(&tripod(0.7), 6, 1.0 / 0.03, WrenchDim::Spatial).unwrap();
        let eps: Vec<f64> =
            [100, 200, 400, 800, 1600].iter().map(|&n| force_closure(&g, n).unwrap().epsilon_lower_bound).collect();
        assert!(eps.windows(2).all(|w| w[1] <= w[0]), "{eps:?}");
    }

    #[test]
    fn planar_epsilon_matches_closed_form() {
        // unit-normalized primitives of a symmetric pair: the nearest facet
        // distance can be checked against a dense great-circle sweep
        let g = build_gws(&antipodal_planar(0.5), 8, 1.0 / 0.03, WrenchDim::Planar).unwrap();
        let w = g.unit_vectors();
        let mut brute = f64::INFINITY;
        for i in 0..720 {
            for j in 0..360 {
                let (th, ph) = (i as f64 * 0.5f64.to_radians(), (j as f64 * 0.5 - 90.0).to_radians());
                let u = [ph.cos() * th.cos(), ph.cos() * th.sin(), ph.sin()];
                brute = brute.min(support(&w, &u));
            }
        }
        let v = force_closure(&g, 2000).unwrap();
        assert!((v.epsilon_lower_bound - brute).abs() < 5e-3, "{} vs {brute}", v.epsilon_lower_bound);
    }

    #[test]
    fn task_membership_examples() {
        let g = build_gws(&tripod(0.5), 6, 30.0, WrenchDim::Spatial).unwrap();
        let w = g.vectors();
        match task_wrench_feasible(&g, &w[4]).unwrap() {
            Membership::Feasible { alpha } => {
                let recon: Vec<f64> = (0..6).map(|r| alpha.iter().zip(&w).map(|(a, wi)| a * wi[r]).sum()).collect();
                for (a, b) in recon.iter().zip(&w[4]) {
                    assert_abs_diff_eq!(a, b, epsilon = 1e-9);
                }
            }
            other => panic!("{other:?}"),
        }
        let mean: Vec<f64> = (0..6).map(|r| w.iter().map(|wi| wi[r]).sum::<f64>() / w.len() as f64).collect();
        assert!(task_wrench_feasible(&g, &mean).unwrap().is_feasible());
        let far = [0.0, 0.0, 2.0, 0.0, 0.0, 0.0];
        assert!(matches!(task_wrench_feasible(&g, &far).unwrap(), Membership::Infeasible { .. }));
        assert!(task_wrench_feasible(&g, &[0.0; 3]).is_err());
    }

    #[test]
    fn force_compare_examples() {
        let (sim, real) = reconstructed_fixture();
        assert_eq!(sim_real_force_compare(&sim, &sim).unwrap().pooled, 0.0);
        let scaled = FingerTraces {
            forces: sim.forces.iter().map(|f| f.iter().map(|v| 1.2 * v).collect()).collect(),
            ..sim.clone()
        };
        assert_abs_diff_eq!(sim_real_force_compare(&sim, &scaled).unwrap().pooled, 20.0, epsilon = 1e-9);
        let m = sim_real_force_compare(&sim, &real).unwrap();
        assert!((m.pooled - 20.0).abs() < 2.0, "{}", m.pooled);
        let late = FingerTraces { t: real.t.iter().map(|t| t + 10.0).collect(), ..real };
        assert_eq!(sim_real_force_compare(&sim, &late), Err(WrenchError::NoOverlap));
    }

    #[test]
    fn contact_set_json() {
        let text = r#"{"contacts":[{"p":[0.03,0,0],"n":[-1,0,0],"mu":0.5,"f_n":2.0}],"m":6,"lambda":33.3}"#;
        let set: ContactSet = serde_json::from_str(text).unwrap();
        assert_eq!((set.m, set.dim, set.contacts[0].force_magnitude), (6, WrenchDim::Spatial, 2.0));
    }

    proptest! {
        #[test]
        fn edges_lie_on_the_cone(nx in -1.0f64..1.0, ny in -1.0f64..1.0, nz in -1.0f64..1.0, mu in 0.0f64..2.0, m in 3usize..12) {
            let n = Vector3::new(nx, ny, nz);
            prop_assume!(n.norm() > 0.1);
            let n = n.normalize();
            let c = Contact::new([0.0; 3], n.into(), mu);
            for e in cone_edges(&c, m).unwrap() {
                prop_assert!((e.dot(&n) - mu.atan().cos()).abs() < 1e-9);
            }
        }

        #[test]
        fn verdict_is_rotation_and_scale_invariant(angle in 0.0f64..std::f64::consts::TAU, mu in 0.2f64..1.0, scale in 0.1f64..10.0) {
            let rot = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(Vector3::new(1.0, 1.0, 0.3)), angle);
            let base = tripod(mu);
            let moved: Vec<Contact> = base.iter().map(|c| Contact {
                point: (rot * Vector3::from(c.point)).into(),
                normal: (rot * Vector3::from(c.normal)).into(),
                force_magnitude: scale,
                ..*c
            }).collect();
            let a = force_closure(&build_gws(&base, 6, 30.0, WrenchDim::Spatial).unwrap(), 100).unwrap();
            let b = force_closure(&build_gws(&moved, 6, 30.0, WrenchDim::Spatial).unwrap(), 100).unwrap();
            prop_assert_eq!(a.force_closure, b.force_closure);
        }

        #[test]
        fn membership_is_monotone_under_hull_growth(k in 0usize..18, extra in 0usize..3) {
            let g = build_gws(&tripod(0.5), 6, 30.0, WrenchDim::Spatial).unwrap();
            let w = g.vectors();
            let target: Vec<f64> = (0..6).map(|r| 0.5 * (w[k][r] + w[(k + 5) % 18][r])).collect();
            let mut sub = g.clone();
            sub.primitives.truncate(12 + 2 * extra);
            let small = task_wrench_feasible(&sub, &target).unwrap().is_feasible();
            let big = task_wrench_feasible(&g, &target).unwrap().is_feasible();
            prop_assert!(!small || big);
        }
    }
}
