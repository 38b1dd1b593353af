//! Monte-Carlo comparison of grasp closure strategies.
//!
//! Each trial is a scripted, quasi-static sequence over the kinematic model
//! and the actuator simulator: approach, strategy-specific closure, the
//! hybrid force policy, then a 2 s lift. Failure checks run in the order the
//! events happen, so each trial has exactly one failure mode.

pub mod catalog;
pub mod stats;

pub use catalog::{default_catalog, load_catalog, parse_catalog, CatalogError, Category, ObjectSpec, DEFAULT_CATALOG};
pub use stats::{two_prop_ztest, wilson_ci, StatsError, ZTest, ALPHA_CORRECTED};

use crate::actuator::{splitmix64, trial_seed, ContactScene, SimConfig, RAW_MAX};
use crate::calibration::CalibrationModel;
use crate::hand_model::{build_sweep_table, ClosureScalar, Finger, LinkageParams, SweepTable};
use crate::hybrid::{run_closed_loop, HybridError, HybridPolicy, ONSET_SIGMA};
use crate::kv::{KvError, KvMap};
use crate::planner::{reachable_range, rotated_height, solve_width_analytic, GraspSolution, GraspSpec, PlannerError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Largest lateral offset between the hand and the true grasp point.
pub const MAX_LATERAL_OFFSET_MM: f64 = 30.0;
/// Every tenth trial of a cell is the adversarial pose.
pub const ADVERSARIAL_EVERY: usize = 10;
/// Closure samples for the ground-collision predicate.
pub const ARC_SAMPLES: usize = 64;
const GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Naive,
    Reflex,
    Iterative,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Naive, Strategy::Reflex, Strategy::Iterative];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Naive => "naive",
            Strategy::Reflex => "reflex",
            Strategy::Iterative => "iterative",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown strategy `{s}`"))
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Hybrid(#[from] HybridError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Kv(#[from] KvError),
    #[error("invalid trial: {0}")]
    Trial(String),
    #[error("invalid benchmark parameters: {0}")]
    Params(String),
    #[error("force target must be nonzero")]
    ZeroTarget,
    #[error("empty force trace")]
    EmptyTrace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureMode {
    None,
    GroundCollision,
    PreGraspObjectCollision,
    ForceExceeded,
    Slip,
    Drop,
}

impl FailureMode {
    pub const ALL: [FailureMode; 6] = [
        FailureMode::None,
        FailureMode::GroundCollision,
        FailureMode::PreGraspObjectCollision,
        FailureMode::ForceExceeded,
        FailureMode::Slip,
        FailureMode::Drop,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FailureMode::None => "none",
            FailureMode::GroundCollision => "ground_collision",
            FailureMode::PreGraspObjectCollision => "pre_grasp_object_collision",
            FailureMode::ForceExceeded => "force_exceeded",
            FailureMode::Slip => "slip",
            FailureMode::Drop => "drop",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub strategy: Strategy,
    /// Offset of the true grasp point from where the hand is centred.
    pub lateral_offset: f64,
    /// Yaw error of the object's major axis relative to the grasp plane.
    pub orientation_jitter: f64,
    /// Hand approaches level with the grasp point instead of from above.
    pub adversarial: bool,
    pub force_target: f64,
    pub n_fingers: usize,
    pub seed: u64,
}

impl TrialConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        if !(self.lateral_offset.abs() <= MAX_LATERAL_OFFSET_MM) {
            return Err(BenchError::Trial(format!("lateral offset {} mm beyond ±30 mm", self.lateral_offset)));
        }
        if !self.orientation_jitter.is_finite() {
            return Err(BenchError::Trial("orientation jitter is not finite".into()));
        }
        if !(self.force_target.is_finite() && self.force_target > 0.0) {
            return Err(BenchError::Trial(format!("force target {} N", self.force_target)));
        }
        if !(2..=5).contains(&self.n_fingers) {
            return Err(BenchError::Trial(format!("n_fingers {}", self.n_fingers)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub success: bool,
    pub failure_mode: FailureMode,
    /// Seconds from the start of the approach to the end of the lift, or to
    /// the failure.
    pub grasp_time: f64,
    /// Object displacement accumulated before opposition (mm).
    pub displacement: f64,
    /// Largest smoothed sensed force (N); zero when closure never ran.
    pub peak_force: f64,
    /// `(t, N)` from first contact to the end of the lift.
    pub force_trace: Vec<(f64, f64)>,
}

impl TrialOutcome {
    fn failed(mode: FailureMode, grasp_time: f64, displacement: f64) -> Self {
        TrialOutcome {
            success: false,
            failure_mode: mode,
            grasp_time,
            displacement,
            peak_force: 0.0,
            force_trace: Vec::new(),
        }
    }
}

/// Tunable constants of the trial model. Defaults are chosen, not measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchParams {
    pub rigid_force_n: f64,
    pub delicate_force_n: f64,
    pub approach_time_s: f64,
    pub approach_jitter_s: f64,
    /// 20 cm at 0.1 m/s.
    pub lift_time_s: f64,
    /// Share of the lateral offset left after visual centring on a top-down
    /// approach. Adversarial approaches keep all of it.
    pub centring_residual: f64,
    /// Reflex: thumb placement dwell plus lateral arm travel.
    pub thumb_place_s: f64,
    pub arm_speed_mm_s: f64,
    /// Iterative: approach aperture above the object width, step size and
    /// per-step dwell range.
    pub iterative_margin_mm: f64,
    pub iterative_step_mm: f64,
    pub iterative_dwell_s: [f64; 2],
    /// Displacement per mm of offset swept before opposition, per strategy
    /// in [`Strategy::ALL`] order.
    pub push_gain: [f64; 3],
    /// Extra push per unit of contact speed (fraction of full speed).
    pub speed_push_gain: f64,
    /// Displacement per mm of major-axis sweep, per strategy.
    pub rotation_gain: [f64; 3],
    pub hold_fraction: f64,
    pub hold_window_s: f64,
    /// Samples averaged before comparing against the fragility limit.
    pub force_smoothing: usize,
    /// Coulomb friction of the pads against the object.
    pub pad_friction: f64,
    /// Effective radius of the pad patch for torsional friction.
    pub pad_torsion_radius_mm: f64,
}

impl Default for BenchParams {
    fn default() -> Self {
        BenchParams {
            rigid_force_n: 6.0,
            delicate_force_n: 1.0,
            approach_time_s: 2.0,
            approach_jitter_s: 0.5,
            lift_time_s: 2.0,
            centring_residual: 0.2,
            thumb_place_s: 0.5,
            arm_speed_mm_s: 25.0,
            iterative_margin_mm: 40.0,
            iterative_step_mm: 10.0,
            iterative_dwell_s: [0.4, 1.2],
            push_gain: [0.6, 0.3, 0.3],
            speed_push_gain: 1.0,
            rotation_gain: [0.2, 0.05, 0.4],
            hold_fraction: 0.5,
            hold_window_s: 0.1,
            force_smoothing: 5,
            pad_friction: 0.8,
            pad_torsion_radius_mm: 6.0,
        }
    }
}

impl BenchParams {
    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: &str| Err(BenchError::Params(m.to_string()));
        let positive = [
            self.rigid_force_n,
            self.delicate_force_n,
            self.lift_time_s,
            self.arm_speed_mm_s,
            self.iterative_step_mm,
            self.hold_window_s,
            self.pad_friction,
            self.pad_torsion_radius_mm,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return bad("forces, lift time, arm speed, step, hold window and friction must be positive");
        }
        let non_negative = [
            self.approach_time_s,
            self.approach_jitter_s,
            self.centring_residual,
            self.thumb_place_s,
            self.iterative_margin_mm,
            self.speed_push_gain,
            self.hold_fraction,
        ];
        if non_negative
            .iter()
            .chain(&self.push_gain)
            .chain(&self.rotation_gain)
            .chain(&self.iterative_dwell_s)
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return bad("durations, gains and fractions must be finite and ≥ 0");
        }
        if self.iterative_dwell_s[0] > self.iterative_dwell_s[1] {
            return bad("iterative_dwell_s must be [min, max]");
        }
        if self.force_smoothing == 0 {
            return bad("force_smoothing must be ≥ 1");
        }
        Ok(())
    }

    pub fn force_target(&self, category: Category) -> f64 {
        match category {
            Category::Rigid => self.rigid_force_n,
            Category::Delicate => self.delicate_force_n,
        }
    }
}

/// Everything a trial needs besides the object and its configuration.
#[derive(Debug, Clone)]
pub struct BenchContext {
    pub table: SweepTable,
    pub sim: SimConfig,
    /// Force model of the index finger, which carries the force policy.
    pub model: CalibrationModel,
    pub params: BenchParams,
}

impl BenchContext {
    pub fn new(
        table: SweepTable,
        sim: SimConfig,
        model: CalibrationModel,
        params: BenchParams,
    ) -> Result<Self, BenchError> {
        sim.validate().map_err(HybridError::from)?;
        params.validate()?;
        Ok(BenchContext { table, sim, model, params })
    }

    /// Default hand, simulator, published index model and parameters.
    pub fn default_hand() -> Result<Self, BenchError> {
        let table = build_sweep_table(&LinkageParams::default(), 200).map_err(PlannerError::from)?;
        let model = CalibrationModel::published(Finger::Index).expect("index row present");
        BenchContext::new(table, SimConfig::default(), model, BenchParams::default())
    }
}

/// Closure fractions of each active finger over a strategy's arc, as
/// `(finger, start, end)` on the scalar.
fn closure_path(sol: &GraspSolution, strategy: Strategy, approach_s: f64) -> Vec<(Finger, f64, f64)> {
    let s_star = sol.s_star.value();
    sol.fingers()
        .iter()
        .map(|&f| {
            let end = if f == Finger::Thumb { sol.thumb_s } else { s_star };
            let start = match (strategy, f) {
                (Strategy::Naive, _) => 0.0,
                // thumb pre-set at its final pose, fingers fully extended
                (Strategy::Reflex, Finger::Thumb) => end,
                (Strategy::Reflex, _) => 0.0,
                (Strategy::Iterative, _) => approach_s.min(end),
            };
            (f, start, end)
        })
        .collect()
}

/// Depths (mm, positive toward the ground) of the active fingertips below
/// the final grasp plane at closure fraction `u` of the path.
fn tip_depths(table: &SweepTable, sol: &GraspSolution, path: &[(Finger, f64, f64)], u: f64) -> Vec<f64> {
    let plane =
        sol.targets.iter().map(|t| rotated_height(t.position, sol.theta_star)).sum::<f64>() / sol.targets.len() as f64;
    path.iter()
        .map(|&(f, a, b)| {
            let p = table.pose(f, ClosureScalar::saturating(a + u * (b - a))).position;
            rotated_height(p, sol.theta_star) - plane
        })
        .collect()
}

/// Deepest fingertip excursion below the grasp point over the closure arc.
///
/// Naive closure keeps the hand fixed at the final pose. The other strategies
/// raise the arm whenever the deepest fingertip would pass below where it
/// ends, so only the final pose can reach lower.
pub fn arc_ground_depth(table: &SweepTable, sol: &GraspSolution, strategy: Strategy, approach_s: f64) -> f64 {
    let path = closure_path(sol, strategy, approach_s);
    let deepest = |u: f64| tip_depths(table, sol, &path, u).into_iter().fold(f64::MIN, f64::max);
    let last = deepest(1.0);
    (0..=ARC_SAMPLES)
        .map(|i| {
            let d = deepest(i as f64 / ARC_SAMPLES as f64);
            match strategy {
                Strategy::Naive => d,
                _ => d.min(last),
            }
        })
        .fold(f64::MIN, f64::max)
}

/// True when some fingertip on the arc passes below the ground plane.
pub fn ground_collision(
    table: &SweepTable,
    sol: &GraspSolution,
    strategy: Strategy,
    approach_s: f64,
    grasp_height: f64,
) -> bool {
    arc_ground_depth(table, sol, strategy, approach_s) > grasp_height
}

/// Closure scalar at which the thumb–index gap equals `width`, clamped to
/// the open and closed ends.
fn scalar_at_width(table: &SweepTable, width: f64) -> f64 {
    let d = |s: f64| table.pair_distance(Finger::Index, ClosureScalar::saturating(s));
    if width >= d(0.0) {
        return 0.0;
    }
    if width <= d(1.0) {
        return 1.0;
    }
    // the gap decreases monotonically; bisection is plenty here
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if d(mid) > width {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn smoothed_peak(forces: &[f64], window: usize) -> f64 {
    if forces.len() < window {
        return forces.iter().sum::<f64>() / forces.len().max(1) as f64;
    }
    forces.windows(window).map(|w| w.iter().sum::<f64>() / window as f64).fold(0.0, f64::max)
}

/// Runs one scripted trial.
pub fn run_trial(object: &ObjectSpec, config: &TrialConfig, ctx: &BenchContext) -> Result<TrialOutcome, BenchError> {
    config.validate()?;
    let p = &ctx.params;
    let table = &ctx.table;
    let sol = solve_width_analytic(table, &GraspSpec::new(object.width, config.n_fingers))?;
    let (_, open_width) = reachable_range(table, config.n_fingers)?;
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(config.seed ^ 0x6265_6e63_6800_0000));
    let strategy = config.strategy;
    let si = strategy.index();

    let mut elapsed = p.approach_time_s + p.approach_jitter_s * rng.random::<f64>();
    let residual = if config.adversarial { 1.0 } else { p.centring_residual };
    let offset = config.lateral_offset.abs() * residual;

    // Pre-grasp aperture. Reflex keeps its fingers extended and brings the
    // thumb in as a backstop, so nothing sweeps across the object.
    let aperture = match strategy {
        Strategy::Naive => open_width,
        Strategy::Reflex => f64::INFINITY,
        Strategy::Iterative => (object.width + p.iterative_margin_mm).min(open_width),
    };
    if offset > (aperture - object.width) / 2.0 {
        return Ok(TrialOutcome::failed(FailureMode::PreGraspObjectCollision, elapsed, 0.0));
    }

    let approach_s = scalar_at_width(table, aperture.min(open_width));
    if ground_collision(table, &sol, strategy, approach_s, object.grasp_point_height) {
        return Ok(TrialOutcome::failed(FailureMode::GroundCollision, elapsed, 0.0));
    }

    let q_g = RAW_MAX * (1.0 - sol.s_star.value());
    let policy = HybridPolicy::new(config.force_target).regulated();
    let onset = Normal::new(0.0, ONSET_SIGMA).expect("positive sigma").sample(&mut rng);
    // Uncentred closure meets the object early, at the gap W + 2|e|.
    let q_contact = match strategy {
        Strategy::Naive => RAW_MAX * (1.0 - scalar_at_width(table, object.width + 2.0 * offset)),
        _ => q_g,
    } + onset;
    let q_contact = q_contact.clamp(1.0, RAW_MAX);
    let contact_speed = if q_contact > policy.switch_point(q_g).position { policy.v_fast } else { policy.v_slow };

    match strategy {
        Strategy::Naive => {}
        Strategy::Reflex => elapsed += p.thumb_place_s + config.lateral_offset.abs() / p.arm_speed_mm_s,
        Strategy::Iterative => {
            let steps = ((aperture - object.width) / p.iterative_step_mm).ceil().max(0.0) as usize;
            for _ in 0..steps {
                let [lo, hi] = p.iterative_dwell_s;
                elapsed += lo + (hi - lo) * rng.random::<f64>();
            }
        }
    }

    // Displacement swept before the opposing contact is established.
    let sweep = object.major_axis_half_length * config.orientation_jitter.abs();
    // The reflex arm carries the thumb across the whole offset to its backstop.
    let swept = if strategy == Strategy::Reflex { config.lateral_offset.abs() } else { offset };
    let push = p.push_gain[si] * swept * (1.0 + p.speed_push_gain * contact_speed / RAW_MAX);
    let displacement = push + p.rotation_gain[si] * sweep;
    if displacement > object.slip_displacement_limit {
        return Ok(TrialOutcome::failed(FailureMode::Slip, elapsed, displacement));
    }

    let scene = ContactScene::obstacle(q_contact);
    let sim_seed = rng.random::<u64>();
    let run = run_closed_loop(&policy, q_g, &scene, &ctx.sim, &ctx.model, sim_seed, p.lift_time_s)?;
    let start = run.rows.iter().position(|r| r.position <= q_contact).unwrap_or(0);
    let force_trace: Vec<(f64, f64)> = run.rows[start..].iter().map(|r| (r.t, r.sensed_force_n)).collect();
    let forces: Vec<f64> = force_trace.iter().map(|&(_, f)| f).collect();
    let peak_force = smoothed_peak(&forces, p.force_smoothing);
    elapsed += run.completion_time;

    let mut outcome = TrialOutcome {
        success: false,
        failure_mode: FailureMode::None,
        grasp_time: elapsed,
        displacement,
        peak_force,
        force_trace,
    };
    if object.fragility_limit.is_some_and(|limit| peak_force > limit) {
        outcome.failure_mode = FailureMode::ForceExceeded;
        return Ok(outcome);
    }

    // Lift: the grip must carry the weight in friction, and an off-centre
    // grasp must also resist the gravity torque about the contact axis.
    let weight = object.mass * GRAVITY;
    let torque = weight * displacement * 1e-3;
    let needed = (p.hold_fraction * config.force_target)
        .max(weight / (2.0 * p.pad_friction))
        .max(torque / (p.pad_friction * p.pad_torsion_radius_mm * 1e-3));
    let lift_start = run.completion_time;
    let window = ((p.hold_window_s / ctx.sim.tick).round() as usize).max(1);
    let lift: Vec<f64> = run.rows.iter().filter(|r| r.t >= lift_start).map(|r| r.sensed_force_n).collect();
    let dropped =
        lift.len() >= window && lift.windows(window).any(|w| w.iter().sum::<f64>() / (window as f64) < needed);
    outcome.grasp_time += p.lift_time_s;
    if dropped {
        outcome.failure_mode = FailureMode::Drop;
        return Ok(outcome);
    }
    outcome.success = true;
    Ok(outcome)
}

/// Relative force error over normalized time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceErrorProfile {
    /// `(τ, (F − F*)/F*)` with `τ ∈ [0, 1]`.
    pub points: Vec<(f64, f64)>,
    pub peak_relative_overshoot: f64,
    /// First `τ` after which the error stays within the band, if it does.
    pub settling_fraction: Option<f64>,
    pub first_quartile_mean_abs: f64,
    pub final_quartile_mean_abs: f64,
}

/// Settling band on the relative error.
pub const SETTLING_BAND: f64 = 0.10;

pub fn force_error_profile(trace: &[(f64, f64)], f_target: f64) -> Result<ForceErrorProfile, BenchError> {
    if f_target == 0.0 || !f_target.is_finite() {
        return Err(BenchError::ZeroTarget);
    }
    let (Some(first), Some(last)) = (trace.first(), trace.last()) else {
        return Err(BenchError::EmptyTrace);
    };
    let span = last.0 - first.0;
    let points: Vec<(f64, f64)> = trace
        .iter()
        .map(|&(t, f)| {
            let tau = if span > 0.0 { (t - first.0) / span } else { 0.0 };
            (tau, (f - f_target) / f_target)
        })
        .collect();
    let peak_relative_overshoot = points.iter().map(|p| p.1).fold(0.0, f64::max);
    let settling_fraction = match points.iter().rposition(|p| p.1.abs() > SETTLING_BAND) {
        None => Some(0.0),
        Some(i) if i + 1 < points.len() => Some(points[i + 1].0),
        Some(_) => None,
    };
    let quartile = |lo: f64, hi: f64| {
        let sel: Vec<f64> = points.iter().filter(|p| p.0 >= lo && p.0 <= hi).map(|p| p.1.abs()).collect();
        if sel.is_empty() {
            0.0
        } else {
            sel.iter().sum::<f64>() / sel.len() as f64
        }
    };
    Ok(ForceErrorProfile {
        first_quartile_mean_abs: quartile(0.0, 0.25),
        final_quartile_mean_abs: quartile(0.75, 1.0),
        points,
        peak_relative_overshoot,
        settling_fraction,
    })
}

/// One trial of the benchmark grid with its outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub object: String,
    pub category: Category,
    pub strategy: Strategy,
    pub trial: usize,
    pub config: TrialConfig,
    pub outcome: TrialOutcome,
}

/// Draws the trial configuration. Strategies share the draw for a given
/// object and trial index, so comparisons are paired.
pub fn sample_config(
    object: &ObjectSpec,
    strategy: Strategy,
    seed: u64,
    trial: usize,
    params: &BenchParams,
) -> TrialConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lateral_offset = rng.random_range(-MAX_LATERAL_OFFSET_MM..=MAX_LATERAL_OFFSET_MM);
    let orientation_jitter = rng.random_range(-0.3..=0.3);
    TrialConfig {
        strategy,
        lateral_offset,
        orientation_jitter,
        adversarial: trial % ADVERSARIAL_EVERY == ADVERSARIAL_EVERY - 1,
        force_target: params.force_target(object.category),
        n_fingers: object.n_fingers,
        seed,
    }
}

/// Runs every (object, strategy, trial) cell. The seed of trial `j` on
/// object `i` is `trial_seed(seed, i, j)`; results come back in grid order.
pub fn run_trials(
    objects: &[ObjectSpec],
    strategies: &[Strategy],
    trials_per_cell: usize,
    seed: u64,
    ctx: &BenchContext,
) -> Result<Vec<TrialRecord>, BenchError> {
    if trials_per_cell == 0 {
        return Err(BenchError::Params("trials_per_cell must be ≥ 1".into()));
    }
    for o in objects {
        o.validate(&ctx.table)?;
    }
    let grid: Vec<(usize, Strategy, usize)> = objects
        .iter()
        .enumerate()
        .flat_map(|(i, _)| strategies.iter().flat_map(move |&s| (0..trials_per_cell).map(move |j| (i, s, j))))
        .collect();
    grid.par_iter()
        .map(|&(i, strategy, j)| {
            let object = &objects[i];
            let config = sample_config(object, strategy, trial_seed(seed, i as u64, j as u64), j, &ctx.params);
            let outcome = run_trial(object, &config, ctx)?;
            Ok(TrialRecord {
                object: object.name.clone(),
                category: object.category,
                strategy,
                trial: j,
                config,
                outcome,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyStats {
    pub strategy: Strategy,
    pub k: u64,
    pub n: u64,
    pub rate: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    /// Grasp times of the successful trials.
    pub times: Vec<f64>,
    pub mean_time_s: f64,
    pub sd_time_s: f64,
    pub failures: BTreeMap<FailureMode, u64>,
    /// Mean peak relative overshoot of successful delicate grasps.
    pub delicate_peak_overshoot: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub a: Strategy,
    pub b: Strategy,
    pub z: f64,
    pub p_value: f64,
    pub degenerate: bool,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRate {
    pub strategy: Strategy,
    /// `rigid`, `delicate` or `all`.
    pub category: String,
    pub k: u64,
    pub n: u64,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRow {
    pub object: String,
    pub strategy: Strategy,
    pub k: u64,
    pub n: u64,
    pub failures: BTreeMap<FailureMode, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub seed: u64,
    pub trials_per_cell: usize,
    pub confidence: f64,
    pub alpha_corrected: f64,
    pub strategies: Vec<StrategyStats>,
    pub pairwise: Vec<PairwiseTest>,
    pub categories: Vec<CategoryRate>,
    pub objects: Vec<ObjectRow>,
}

pub const CONFIDENCE: f64 = 0.95;

fn mean_sd(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

fn rate_row(strategy: Strategy, category: &str, records: &[&TrialRecord]) -> Result<Option<CategoryRate>, BenchError> {
    if records.is_empty() {
        return Ok(None);
    }
    let n = records.len() as u64;
    let k = records.iter().filter(|r| r.outcome.success).count() as u64;
    let (ci_low, ci_high) = wilson_ci(k, n, CONFIDENCE)?;
    Ok(Some(CategoryRate {
        strategy,
        category: category.to_string(),
        k,
        n,
        rate: k as f64 / n as f64,
        ci_low,
        ci_high,
    }))
}

fn failure_counts<'a>(records: impl Iterator<Item = &'a TrialRecord>) -> BTreeMap<FailureMode, u64> {
    let mut m = BTreeMap::new();
    for r in records {
        *m.entry(r.outcome.failure_mode).or_insert(0) += 1;
    }
    m
}

/// Aggregates trial records into rates, intervals and pairwise tests.
pub fn summarize_trials(
    records: &[TrialRecord],
    objects: &[ObjectSpec],
    strategies: &[Strategy],
    trials_per_cell: usize,
    seed: u64,
) -> Result<StatsReport, BenchError> {
    let mut stats = Vec::new();
    let mut categories = Vec::new();
    for &s in strategies {
        let mine: Vec<&TrialRecord> = records.iter().filter(|r| r.strategy == s).collect();
        let all = rate_row(s, "all", &mine)?.ok_or_else(|| BenchError::Params(format!("no trials for {s}")))?;
        let times: Vec<f64> = mine.iter().filter(|r| r.outcome.success).map(|r| r.outcome.grasp_time).collect();
        let (mean_time_s, sd_time_s) = mean_sd(&times);
        let overshoots: Vec<f64> = mine
            .iter()
            .filter(|r| r.outcome.success && r.category == Category::Delicate)
            .filter_map(|r| force_error_profile(&r.outcome.force_trace, r.config.force_target).ok())
            .map(|p| p.peak_relative_overshoot)
            .collect();
        stats.push(StrategyStats {
            strategy: s,
            k: all.k,
            n: all.n,
            rate: all.rate,
            wilson_low: all.ci_low,
            wilson_high: all.ci_high,
            times,
            mean_time_s,
            sd_time_s,
            failures: failure_counts(mine.iter().copied()),
            delicate_peak_overshoot: (!overshoots.is_empty()).then(|| mean_sd(&overshoots).0),
        });
        for c in [Category::Rigid, Category::Delicate] {
            let sel: Vec<&TrialRecord> = mine.iter().copied().filter(|r| r.category == c).collect();
            categories.extend(rate_row(s, c.name(), &sel)?);
        }
        categories.push(all);
    }
    let mut pairwise = Vec::new();
    for (i, a) in stats.iter().enumerate() {
        for b in &stats[i + 1..] {
            let t = two_prop_ztest(a.k, a.n, b.k, b.n)?;
            pairwise.push(PairwiseTest {
                a: a.strategy,
                b: b.strategy,
                z: t.z,
                p_value: t.p_value,
                degenerate: t.degenerate,
                significant: !t.degenerate && t.p_value < ALPHA_CORRECTED,
            });
        }
    }
    let mut rows = Vec::new();
    for o in objects {
        for &s in strategies {
            let sel: Vec<&TrialRecord> = records.iter().filter(|r| r.strategy == s && r.object == o.name).collect();
            rows.push(ObjectRow {
                object: o.name.clone(),
                strategy: s,
                k: sel.iter().filter(|r| r.outcome.success).count() as u64,
                n: sel.len() as u64,
                failures: failure_counts(sel.into_iter()),
            });
        }
    }
    Ok(StatsReport {
        seed,
        trials_per_cell,
        confidence: CONFIDENCE,
        alpha_corrected: ALPHA_CORRECTED,
        strategies: stats,
        pairwise,
        categories,
        objects: rows,
    })
}

pub fn run_benchmark(
    objects: &[ObjectSpec],
    strategies: &[Strategy],
    trials_per_cell: usize,
    seed: u64,
    ctx: &BenchContext,
) -> Result<StatsReport, BenchError> {
    let records = run_trials(objects, strategies, trials_per_cell, seed, ctx)?;
    summarize_trials(&records, objects, strategies, trials_per_cell, seed)
}

impl StatsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Plot-ready rows: `strategy,category,rate,ci_low,ci_high`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("strategy,category,rate,ci_low,ci_high\n");
        for c in &self.categories {
            out.push_str(&format!("{},{},{:.6},{:.6},{:.6}\n", c.strategy, c.category, c.rate, c.ci_low, c.ci_high));
        }
        out
    }

    pub fn strategy(&self, s: Strategy) -> Option<&StrategyStats> {
        self.strategies.iter().find(|x| x.strategy == s)
    }

    pub fn pair(&self, a: Strategy, b: Strategy) -> Option<&PairwiseTest> {
        self.pairwise.iter().find(|p| (p.a, p.b) == (a, b) || (p.a, p.b) == (b, a))
    }
}

/// Key-value benchmark configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    /// Catalog CSV; the built-in catalog when absent.
    pub objects: Option<String>,
    pub strategies: Vec<Strategy>,
    pub trials_per_cell: usize,
    pub seed: u64,
    pub params: BenchParams,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            objects: None,
            strategies: Strategy::ALL.to_vec(),
            trials_per_cell: 10,
            seed: 0,
            params: BenchParams::default(),
        }
    }
}

impl BenchConfig {
    pub const KEYS: [&'static str; 7] =
        ["objects", "strategies", "trials", "seed", "rigid_force_n", "delicate_force_n", "centring_residual"];

    pub fn from_kv(text: &str) -> Result<Self, BenchError> {
        let map = KvMap::parse(text)?;
        map.reject_unknown(&Self::KEYS)?;
        let mut cfg = BenchConfig { objects: map.get("objects").map(str::to_string), ..BenchConfig::default() };
        if let Some(list) = map.get("strategies") {
            cfg.strategies =
                list.split(',').map(|s| s.parse::<Strategy>().map_err(BenchError::Params)).collect::<Result<_, _>>()?;
            if cfg.strategies.is_empty() {
                return Err(BenchError::Params("no strategies".into()));
            }
        }
        if let Some(t) = map.parse_value::<usize>("trials")? {
            cfg.trials_per_cell = t;
        }
        if let Some(s) = map.parse_value::<u64>("seed")? {
            cfg.seed = s;
        }
        map.read_f64("rigid_force_n", &mut cfg.params.rigid_force_n)?;
        map.read_f64("delicate_force_n", &mut cfg.params.delicate_force_n)?;
        map.read_f64("centring_residual", &mut cfg.params.centring_residual)?;
        cfg.params.validate()?;
        Ok(cfg)
    }
}
