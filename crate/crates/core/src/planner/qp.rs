//! Differential-IK validation path.
//!
//! Each iteration solves `min ½‖q̇‖²` subject to the stacked tip and coupling
//! rows `J q̇ = e` in the damped least-squares sense, integrates the velocity
//! over one step and clamps the result to per-joint limits and joint ranges.

use super::{
    analytic_config, config_metrics, finger_ctrls, thumb_ctrls, GraspSolution, GraspSpec, HandConfig, PlannerError,
    Solver, TipTarget,
};
use crate::hand_model::{ClosureScalar, Finger, LinkageParams, SweepTable};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

const MM_TO_M: f64 = 1e-3;

/// Integration step of the velocity-level update `q ← q + dt·q̇`.
pub const DEFAULT_STEP_GAIN: f64 = 0.0022;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpSettings {
    /// Per-tip stopping threshold in metres.
    pub tip_tolerance: f64,
    pub max_iterations: usize,
    /// Largest joint change per iteration: thumb yaw, proximal, intermediate
    /// (rad).
    pub step_limits: [f64; 3],
    /// Tikhonov term added to the normal equations.
    pub damping: f64,
    /// Integration step applied to the solved joint velocity each iteration.
    pub step_gain: f64,
}

impl Default for QpSettings {
    fn default() -> Self {
        QpSettings {
            tip_tolerance: 5e-4,
            max_iterations: 1000,
            step_limits: [0.05; 3],
            damping: 1e-6,
            step_gain: DEFAULT_STEP_GAIN,
        }
    }
}

impl QpSettings {
    pub fn validate(&self) -> Result<(), PlannerError> {
        if !(self.tip_tolerance > 0.0) {
            return Err(PlannerError::Settings("tip_tolerance must be > 0".into()));
        }
        if self.max_iterations < 1 {
            return Err(PlannerError::Settings("max_iterations must be >= 1".into()));
        }
        if !self.step_limits.iter().all(|&l| l > 0.0) {
            return Err(PlannerError::Settings("step limits must be > 0".into()));
        }
        if !(self.step_gain > 0.0 && self.step_gain <= 1.0) {
            return Err(PlannerError::Settings("step_gain must be in (0, 1]".into()));
        }
        if !(self.damping >= 0.0) {
            return Err(PlannerError::Settings("damping must be >= 0".into()));
        }
        Ok(())
    }
}

/// Joint slots: thumb yaw, then `(proximal, intermediate)` per finger in
/// grasp-set order (thumb first). Thumb pitch only rotates the thumb's curl
/// plane onto itself, duplicating the proximal joint, so it stays at the
/// opposition pose.
struct Layout<'a> {
    fingers: &'a [Finger],
}

impl Layout<'_> {
    fn n_joints(&self) -> usize {
        1 + 2 * self.fingers.len()
    }

    fn chain(&self, k: usize) -> (usize, usize) {
        (1 + 2 * k, 2 + 2 * k)
    }

    fn pack(&self, c: &HandConfig) -> DVector<f64> {
        let mut q = DVector::zeros(self.n_joints());
        q[0] = c.thumb_yaw;
        for (k, f) in self.fingers.iter().enumerate() {
            let (p, i) = self.chain(k);
            q[p] = c.joints[f.index()][0];
            q[i] = c.joints[f.index()][1];
        }
        q
    }

    fn unpack(&self, q: &DVector<f64>, base: &HandConfig) -> HandConfig {
        let mut c = *base;
        c.thumb_yaw = q[0];
        for (k, f) in self.fingers.iter().enumerate() {
            let (p, i) = self.chain(k);
            c.joints[f.index()] = [q[p], q[i]];
        }
        c
    }
}

/// Tip positions (mm) and the stacked Jacobian (metres per rad and the
/// coupling rows) at `q`.
fn linearize(
    params: &LinkageParams,
    layout: &Layout,
    config: &HandConfig,
    targets: &[[f64; 3]],
) -> (DMatrix<f64>, DVector<f64>, Vec<f64>) {
    let n = layout.fingers.len();
    let rows = 4 * n;
    let mut jac = DMatrix::zeros(rows, layout.n_joints());
    let mut err = DVector::zeros(rows);
    let mut tip_errors = Vec::with_capacity(n);
    for (k, &f) in layout.fingers.iter().enumerate() {
        let link = params.linkage(f);
        let [prox, int] = config.joints[f.index()];
        let tip = config.tip(params, f).position;
        let (pc, ic) = layout.chain(k);
        let r = 3 * k;
        let mut sq = 0.0;
        for a in 0..3 {
            let e = (targets[k][a] - tip[a]) * MM_TO_M;
            err[r + a] = e;
            sq += e * e;
        }
        tip_errors.push(sq.sqrt());

        let (l1, l2) = (link.proximal_length, link.intermediate_length);
        let pitch = if f == Finger::Thumb { config.thumb_pitch } else { 0.0 };
        let a1 = link.base_orientation + pitch + prox;
        let a2 = a1 + int;
        // planar partials of (u, w)
        let du_a1 = l1 * a1.cos() + l2 * a2.cos();
        let dw_a1 = -l1 * a1.sin() - l2 * a2.sin();
        let du_a2 = l2 * a2.cos();
        let dw_a2 = -l2 * a2.sin();
        if f == Finger::Thumb {
            let u = l1 * a1.sin() + l2 * a2.sin();
            let (sy, cy) = config.thumb_yaw.sin_cos();
            let col = |du: f64, dw: f64| [-du * cy, -du * sy, dw];
            let cols = [(0, [u * sy, -u * cy, 0.0]), (pc, col(du_a1, dw_a1)), (ic, col(du_a2, dw_a2))];
            for (c, v) in cols {
                for a in 0..3 {
                    jac[(r + a, c)] = v[a] * MM_TO_M;
                }
            }
        } else {
            for (c, v) in [(pc, [du_a1, 0.0, dw_a1]), (ic, [du_a2, 0.0, dw_a2])] {
                for a in 0..3 {
                    jac[(r + a, c)] = v[a] * MM_TO_M;
                }
            }
        }
        // linearized coupling: q̇_int − b q̇_prox = b q_prox − q_int
        let row = 3 * n + k;
        let b = link.coupling_ratio_b;
        jac[(row, pc)] = -b;
        jac[(row, ic)] = 1.0;
        err[row] = b * prox - int;
    }
    (jac, err, tip_errors)
}

fn joint_bounds(params: &LinkageParams, layout: &Layout) -> Vec<[f64; 2]> {
    let mut b = vec![params.thumb.yaw_range];
    for &f in layout.fingers {
        let link = params.linkage(f);
        b.push(link.joint_range);
        b.push(link.intermediate_range);
    }
    b
}

fn step_limits(settings: &QpSettings, layout: &Layout) -> Vec<f64> {
    let mut l = vec![settings.step_limits[0]];
    for _ in layout.fingers {
        l.push(settings.step_limits[1]);
        l.push(settings.step_limits[2]);
    }
    l
}

/// Damped least-squares velocity with joints pinned at a bound removed from
/// the problem whenever the solution would push them further out.
fn active_set_step(
    jac: &DMatrix<f64>,
    err: &DVector<f64>,
    q: &DVector<f64>,
    bounds: &[[f64; 2]],
    damping: f64,
    regularized: &mut bool,
) -> DVector<f64> {
    let nj = q.len();
    let mut free = vec![true; nj];
    let jt = jac.transpose();
    let full_normal = &jt * jac;
    let full_rhs = &jt * err;
    let mut dq = DVector::zeros(nj);
    for _ in 0..=nj {
        let mut normal = full_normal.clone();
        let mut rhs = full_rhs.clone();
        for j in 0..nj {
            if !free[j] {
                normal.row_mut(j).fill(0.0);
                normal.column_mut(j).fill(0.0);
                normal[(j, j)] = 1.0;
                rhs[j] = 0.0;
            } else {
                normal[(j, j)] += damping;
            }
        }
        dq = match normal.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => {
                *regularized = true;
                for j in 0..nj {
                    normal[(j, j)] += 1e-9;
                }
                normal.lu().solve(&rhs).unwrap_or_else(|| DVector::zeros(nj))
            }
        };
        let mut changed = false;
        for j in 0..nj {
            let pinned_low = q[j] <= bounds[j][0] && dq[j] < 0.0;
            let pinned_high = q[j] >= bounds[j][1] && dq[j] > 0.0;
            if free[j] && (pinned_low || pinned_high) {
                free[j] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    dq
}

fn rank_deficient(jac: &DMatrix<f64>) -> bool {
    let normal = jac.transpose() * jac;
    let eig = normal.clone().symmetric_eigenvalues();
    let max = eig.iter().cloned().fold(0.0_f64, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    !(min > 1e-12 * max.max(f64::MIN_POSITIVE))
}

/// Outcome of driving the listed fingertips to `targets` from `start`.
#[derive(Debug, Clone, PartialEq)]
pub struct QpRun {
    pub config: HandConfig,
    pub iterations: usize,
    pub converged: bool,
    pub regularized: bool,
}

/// Runs the iteration for fingers in grasp-set order (thumb first).
pub fn track_targets(
    params: &LinkageParams,
    fingers: &[Finger],
    targets: &[TipTarget],
    start: &HandConfig,
    settings: &QpSettings,
) -> Result<QpRun, PlannerError> {
    settings.validate()?;
    if fingers.first() != Some(&Finger::Thumb) || fingers.len() != targets.len() {
        return Err(PlannerError::Settings("targets must list the thumb first, one per finger".into()));
    }
    let layout = Layout { fingers };
    let goal: Vec<[f64; 3]> = targets.iter().map(|t| t.position).collect();
    let bounds = joint_bounds(params, &layout);
    let limits = step_limits(settings, &layout);
    let mut q = layout.pack(start);
    let mut config = *start;
    let mut iterations = 0;
    let mut converged = false;
    let mut regularized = false;
    loop {
        let (jac, err, tip_errors) = linearize(params, &layout, &config, &goal);
        if iterations == 0 {
            regularized = rank_deficient(&jac);
        }
        if tip_errors.iter().all(|&e| e < settings.tip_tolerance) {
            converged = true;
            break;
        }
        if iterations >= settings.max_iterations {
            break;
        }
        let dq = active_set_step(&jac, &err, &q, &bounds, settings.damping, &mut regularized);
        // integrate the velocity over one step, shrinking it uniformly so the
        // direction survives the rate limits
        let step = settings.step_gain;
        let scale = (0..q.len()).map(|j| limits[j] / (step * dq[j]).abs()).fold(1.0_f64, f64::min);
        for j in 0..q.len() {
            q[j] = (q[j] + scale * step * dq[j]).clamp(bounds[j][0], bounds[j][1]);
        }
        config = layout.unpack(&q, &config);
        iterations += 1;
    }
    Ok(QpRun { config, iterations, converged, regularized })
}

/// QP solve toward the analytic fingertip targets, starting from the open hand.
pub fn solve_width_qp(
    table: &SweepTable,
    spec: &GraspSpec,
    settings: &QpSettings,
) -> Result<GraspSolution, PlannerError> {
    let params = table.params();
    let (_, _, analytic) = analytic_config(table, spec)?;
    let fingers = Finger::grasp_set(spec.n_fingers);
    let targets: Vec<TipTarget> =
        fingers.iter().map(|&f| TipTarget { finger: f, position: analytic.tip(params, f).position }).collect();
    let run = track_targets(params, fingers, &targets, &HandConfig::open(params), settings)?;
    let config = run.config;
    let scalar = |f: Finger| {
        let [lo, hi] = params.linkage(f).joint_range;
        (config.joints[f.index()][0] - lo) / (hi - lo)
    };
    let s_star = fingers[1..].iter().map(|&f| scalar(f)).sum::<f64>() / (fingers.len() - 1) as f64;
    let thumb_s = scalar(Finger::Thumb);
    let (theta_star, z_span, tip_error) = config_metrics(params, &config, fingers, &targets)?;
    Ok(GraspSolution {
        width_mm: spec.width_mm,
        n_fingers: spec.n_fingers,
        s_star: ClosureScalar::saturating(s_star),
        thumb_s,
        theta_star,
        thumb_ctrls: thumb_ctrls(params, &config, thumb_s),
        finger_ctrls: finger_ctrls(params, fingers, s_star),
        z_span,
        tip_error,
        solver: Solver::Qp,
        iterations: run.iterations,
        config,
        targets,
        regularized: run.regularized,
    })
}
