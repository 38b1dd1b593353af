//! Discrete-time model of one actuator channel.
//!
//! Position runs from 1000 (open) down to 0 (closed). Commands take effect
//! one latency after they are issued and then drive the finger at a constant
//! rate with no deceleration. The firmware's force-limit stop reacts to a
//! sensed sample only after the same latency, so the finger keeps pressing
//! in for that long after contact force passes the limit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

pub const RAW_MIN: f64 = 0.0;
pub const RAW_MAX: f64 = 1000.0;
/// Fully open finger.
pub const OPEN_POSITION: f64 = RAW_MAX;

/// Speeds of the characterization sweep.
pub const SWEEP_SPEEDS: [f64; 7] = [25.0, 50.0, 100.0, 250.0, 500.0, 750.0, 1000.0];
/// Force setpoints of the characterization sweep (raw).
pub const SWEEP_SETPOINTS: [f64; 5] = [100.0, 250.0, 500.0, 750.0, 1000.0];

/// How long a trial keeps running after the finger halts.
pub const HOLD_WINDOW_S: f64 = 0.25;
/// Hard stop for a single trial.
pub const MAX_TRIAL_S: f64 = 60.0;

#[derive(Debug, Error, PartialEq)]
pub enum ActuatorError {
    #[error("{field} = {value} outside [0, 1000]")]
    OutOfRange { field: &'static str, value: f64 },
    #[error("invalid simulator config: {0}")]
    Config(String),
    #[error("no contact: {0}")]
    NoContact(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawCommand {
    pub position: f64,
    pub speed: f64,
    pub force_limit: f64,
}

impl RawCommand {
    pub fn new(position: f64, speed: f64, force_limit: f64) -> Result<Self, ActuatorError> {
        for (field, value) in [("position", position), ("speed", speed), ("force_limit", force_limit)] {
            if !(RAW_MIN..=RAW_MAX).contains(&value) {
                return Err(ActuatorError::OutOfRange { field, value });
            }
        }
        Ok(RawCommand { position, speed, force_limit })
    }
}

/// Piecewise-linear map from raw speed to raw position units per second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityGain {
    pub points: Vec<(f64, f64)>,
}

impl VelocityGain {
    pub fn linear(rate_at_1000: f64) -> Self {
        VelocityGain { points: vec![(0.0, 0.0), (1000.0, rate_at_1000)] }
    }

    pub fn validate(&self) -> Result<(), ActuatorError> {
        let bad = |why: &str| Err(ActuatorError::Config(format!("velocity_gain: {why}")));
        if self.points.len() < 2 {
            return bad("needs at least two points");
        }
        if self.points[0] != (0.0, 0.0) {
            return bad("must start at (0, 0)");
        }
        if self.points.last().map(|p| p.0) != Some(RAW_MAX) {
            return bad("must end at speed 1000");
        }
        for w in self.points.windows(2) {
            if !(w[1].0 > w[0].0 && w[1].1 > w[0].1) {
                return bad("must increase strictly in both speed and rate");
            }
        }
        Ok(())
    }

    pub fn rate(&self, speed: f64) -> f64 {
        let s = speed.clamp(RAW_MIN, RAW_MAX);
        for w in self.points.windows(2) {
            let ((s0, r0), (s1, r1)) = (w[0], w[1]);
            if s <= s1 {
                return r0 + (s - s0) / (s1 - s0) * (r1 - r0);
            }
        }
        self.points.last().map_or(0.0, |p| p.1)
    }
}

impl Default for VelocityGain {
    /// Fitted to the step-response band: 0.18 s rise at speed 1000 and
    /// 0.30 s at speed 100 for a 500-unit step; linear below speed 50.
    fn default() -> Self {
        VelocityGain { points: vec![(0.0, 0.0), (50.0, 162.0), (100.0, 1350.0), (1000.0, 2200.0)] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub latency: f64,
    pub tick: f64,
    pub velocity_gain: VelocityGain,
    /// Raw force per raw position unit of penetration.
    pub contact_stiffness: f64,
    pub sensor_noise_sigma: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            latency: 0.066,
            tick: 1.0 / 163.0,
            velocity_gain: VelocityGain::default(),
            contact_stiffness: 10.5,
            sensor_noise_sigma: 16.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), ActuatorError> {
        if !(self.latency >= 0.0 && self.latency.is_finite()) {
            return Err(ActuatorError::Config("latency must be >= 0".into()));
        }
        if !(self.tick > 0.0 && self.tick.is_finite()) {
            return Err(ActuatorError::Config("tick must be > 0".into()));
        }
        if !(self.contact_stiffness > 0.0) {
            return Err(ActuatorError::Config("contact_stiffness must be > 0".into()));
        }
        if !(self.sensor_noise_sigma >= 0.0) {
            return Err(ActuatorError::Config("sensor_noise_sigma must be >= 0".into()));
        }
        self.velocity_gain.validate()
    }

    pub fn noiseless(mut self) -> Self {
        self.sensor_noise_sigma = 0.0;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactScene {
    /// Position at which the finger touches the obstacle.
    pub contact_position: f64,
    pub obstacle_present: bool,
}

impl ContactScene {
    pub fn obstacle(contact_position: f64) -> Self {
        ContactScene { contact_position, obstacle_present: true }
    }

    pub fn free() -> Self {
        ContactScene { contact_position: RAW_MIN, obstacle_present: false }
    }

    pub fn penetration(&self, position: f64) -> f64 {
        if self.obstacle_present {
            (self.contact_position - position).max(0.0)
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseChannel {
    Free,
    Contact,
}

/// Per-tick Gaussian sensor noise addressed by (channel, index) rather than
/// drawn from one running stream. Contact ticks are indexed from the first
/// loaded tick, so two trials with the same seed but different approach
/// profiles see the same noise once the finger touches (common random
/// numbers for paired comparisons).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SensorNoise {
    pub seed: u64,
}

impl SensorNoise {
    pub fn new(seed: u64) -> Self {
        SensorNoise { seed }
    }

    pub fn draw(&self, channel: NoiseChannel, index: u64, sigma: f64) -> f64 {
        if sigma <= 0.0 {
            return 0.0;
        }
        let tag = match channel {
            NoiseChannel::Free => 0x46,
            NoiseChannel::Contact => 0x43,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(splitmix64(self.seed ^ tag) ^ index));
        Normal::new(0.0, sigma).map_or(0.0, |n| n.sample(&mut rng))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActuatorState {
    pub time: f64,
    ticks: u64,
    contact_ticks: u64,
    pub position: f64,
    pub measured_force: f64,
    /// Issued commands waiting out the latency, ordered by arrival time.
    pub pending: VecDeque<(f64, RawCommand)>,
    pub active: Option<RawCommand>,
    pub in_contact: bool,
    /// Firmware force-limit stop in effect.
    pub halted: bool,
    /// Time at which an already-sensed force-limit stop will take effect.
    pub halt_at: Option<f64>,
}

impl ActuatorState {
    pub fn new(position: f64) -> Self {
        ActuatorState {
            time: 0.0,
            ticks: 0,
            contact_ticks: 0,
            position: position.clamp(RAW_MIN, RAW_MAX),
            measured_force: 0.0,
            pending: VecDeque::new(),
            active: None,
            in_contact: false,
            halted: false,
            halt_at: None,
        }
    }

    /// Sends a command now; it takes effect one latency later.
    pub fn issue(&mut self, command: RawCommand, config: &SimConfig) {
        let arrival = self.time + config.latency;
        let idx = self.pending.partition_point(|(t, _)| *t <= arrival);
        self.pending.insert(idx, (arrival, command));
    }

    fn travel(&mut self, dt: f64, config: &SimConfig) {
        if dt <= 0.0 || self.halted {
            return;
        }
        if let Some(cmd) = self.active {
            let d = config.velocity_gain.rate(cmd.speed) * dt;
            self.position = if self.position > cmd.position {
                (self.position - d).max(cmd.position)
            } else {
                (self.position + d).min(cmd.position)
            };
        }
    }

    /// Advances one tick.
    pub fn step(&mut self, scene: &ContactScene, config: &SimConfig, noise: &SensorNoise) {
        let end_ticks = self.ticks + 1;
        let t1 = end_ticks as f64 * config.tick;
        let mut cur = self.time;
        loop {
            let arrival = self.pending.front().map(|(t, _)| *t).filter(|&t| t <= t1);
            let halt = self.halt_at.filter(|&t| t <= t1);
            // on a tie the halt was sensed before the new command arrived
            let (next, is_halt) = match (arrival, halt) {
                (Some(a), Some(h)) if h <= a => (h, true),
                (Some(a), _) => (a, false),
                (None, Some(h)) => (h, true),
                (None, None) => break,
            };
            let next = next.max(cur);
            self.travel(next - cur, config);
            cur = next;
            if is_halt {
                self.halted = true;
                self.halt_at = None;
            } else if let Some((_, cmd)) = self.pending.pop_front() {
                self.active = Some(cmd);
                self.halted = false;
                self.halt_at = None;
            }
        }
        self.travel(t1 - cur, config);
        self.ticks = end_ticks;
        self.time = t1;

        let force = config.contact_stiffness * scene.penetration(self.position);
        self.in_contact = force > 0.0;
        let sample = if self.in_contact {
            self.contact_ticks += 1;
            noise.draw(NoiseChannel::Contact, self.contact_ticks, config.sensor_noise_sigma)
        } else {
            noise.draw(NoiseChannel::Free, self.ticks, config.sensor_noise_sigma)
        };
        self.measured_force = (force + sample).max(0.0);

        if let Some(cmd) = self.active {
            let closing = cmd.position < self.position;
            if closing && !self.halted && self.halt_at.is_none() && self.measured_force >= cmd.force_limit {
                if config.latency == 0.0 {
                    self.halted = true;
                } else {
                    self.halt_at = Some(t1 + config.latency);
                }
            }
        }
    }

    /// Whether the finger is currently able to move.
    pub fn moving(&self) -> bool {
        !self.halted && self.active.is_some_and(|c| c.position != self.position && c.speed > 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub position: f64,
    pub force: f64,
    pub phase: &'static str,
}

pub fn trajectory_csv(samples: &[Sample]) -> String {
    let mut out = String::from("time_s,position_raw,force_raw,phase\n");
    for s in samples {
        out.push_str(&format!("{:.6},{:.4},{:.4},{}\n", s.t, s.position, s.force, s.phase));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResponse {
    pub samples: Vec<Sample>,
    /// First tick time at which the finger has moved.
    pub first_motion: Option<f64>,
    /// 10 % to 90 % of the travel.
    pub rise_time: Option<f64>,
    /// From command issue until the position stays within 2 % of the travel.
    pub settling_time: Option<f64>,
}

fn crossing(samples: &[Sample], start: f64, level: f64) -> Option<f64> {
    let dir = (level - start).signum();
    samples.windows(2).find_map(|w| {
        let (a, b) = (w[0], w[1]);
        let (da, db) = ((a.position - level) * dir, (b.position - level) * dir);
        (da < 0.0 && db >= 0.0).then(|| a.t + (b.t - a.t) * (-da) / (db - da))
    })
}

/// Free-space step from the open position toward `target` at `speed`.
pub fn run_step_response(target: f64, speed: f64, config: &SimConfig) -> Result<StepResponse, ActuatorError> {
    config.validate()?;
    let cmd = RawCommand::new(target, speed, RAW_MAX)?;
    let mut state = ActuatorState::new(OPEN_POSITION);
    let noise = SensorNoise::new(0);
    let scene = ContactScene::free();
    state.issue(cmd, config);
    let start = state.position;
    let mut samples = vec![Sample { t: 0.0, position: start, force: 0.0, phase: "latency" }];
    let mut arrived_at: Option<f64> = None;
    let limit = if speed > 0.0 { 20.0 } else { 1.0 };
    while state.time < limit {
        state.step(&scene, config, &noise);
        let phase = if state.active.is_none() {
            "latency"
        } else if state.position == target {
            "settled"
        } else {
            "moving"
        };
        samples.push(Sample { t: state.time, position: state.position, force: state.measured_force, phase });
        if state.position == target && arrived_at.is_none() {
            arrived_at = Some(state.time);
        }
        if arrived_at.is_some_and(|t| state.time >= t + 0.1) {
            break;
        }
    }
    let travel = target - start;
    let first_motion = samples.iter().find(|s| s.position != start).map(|s| s.t);
    let (rise_time, settling_time) = if travel == 0.0 || first_motion.is_none() {
        (None, None)
    } else {
        let lo = crossing(&samples, start, start + 0.1 * travel);
        let hi = crossing(&samples, start, start + 0.9 * travel);
        let band = 0.02 * travel.abs();
        let last_out = samples.iter().rposition(|s| (s.position - target).abs() > band);
        let settle = match last_out {
            Some(i) if i + 1 < samples.len() => {
                let (a, b) = (samples[i], samples[i + 1]);
                let edge = target - band * travel.signum();
                Some(a.t + (b.t - a.t) * (a.position - edge) / (a.position - b.position))
            }
            Some(_) => None,
            None => Some(0.0),
        };
        (lo.zip(hi).map(|(l, h)| h - l), settle)
    };
    Ok(StepResponse { samples, first_motion, rise_time, settling_time })
}

/// Speed schedule of a contact trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SpeedProfile {
    Constant(f64),
    /// Fast move to `goal + margin`, then slow closure.
    Hybrid {
        goal: f64,
        margin: f64,
        v_fast: f64,
        v_slow: f64,
    },
}

impl SpeedProfile {
    /// The default hybrid profile aimed at a known contact position.
    pub fn hybrid(goal: f64) -> Self {
        SpeedProfile::Hybrid { goal, margin: 25.0, v_fast: 1000.0, v_slow: 25.0 }
    }

    pub fn label(&self) -> String {
        match self {
            SpeedProfile::Constant(v) => format!("{v}"),
            SpeedProfile::Hybrid { .. } => "hybrid".to_string(),
        }
    }
}

/// Position tolerance for "reached the switch point".
pub const SWITCH_REACH_TOLERANCE: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ContactTrial {
    pub f_set: f64,
    pub peak_force: f64,
    /// Peak measured force minus the setpoint.
    pub delta_f: f64,
    /// Command issue to force-limit halt.
    pub completion_time: f64,
    pub samples: Vec<Sample>,
}

/// Drives the finger from open into the obstacle under `profile` with force
/// limit `f_set` (raw), holding for [`HOLD_WINDOW_S`] after the halt.
pub fn run_contact_trial(
    profile: SpeedProfile,
    f_set: f64,
    scene: &ContactScene,
    config: &SimConfig,
    seed: u64,
) -> Result<ContactTrial, ActuatorError> {
    config.validate()?;
    if !(f_set > 0.0 && f_set <= RAW_MAX) {
        return Err(ActuatorError::OutOfRange { field: "f_set", value: f_set });
    }
    let noise = SensorNoise::new(seed);
    let mut state = ActuatorState::new(OPEN_POSITION);
    let mut switch: Option<(f64, f64)> = None;
    match profile {
        SpeedProfile::Constant(v) => state.issue(RawCommand::new(RAW_MIN, v, f_set)?, config),
        SpeedProfile::Hybrid { goal, margin, v_fast, v_slow } => {
            let q_sw = (goal + margin).clamp(RAW_MIN, RAW_MAX);
            state.issue(RawCommand::new(q_sw, v_fast, f_set)?, config);
            switch = Some((q_sw, v_slow));
        }
    }
    let mut samples = Vec::new();
    let mut halted_at: Option<f64> = None;
    let mut peak: f64 = 0.0;
    while state.time < MAX_TRIAL_S {
        state.step(scene, config, &noise);
        if let Some((q_sw, v_slow)) = switch {
            if state.position <= q_sw + SWITCH_REACH_TOLERANCE {
                state.issue(RawCommand::new(RAW_MIN, v_slow, f_set)?, config);
                switch = None;
            }
        }
        peak = peak.max(state.measured_force);
        let phase = if state.halted {
            "halted"
        } else if state.in_contact {
            "contact"
        } else if state.active.is_some() {
            "moving"
        } else {
            "latency"
        };
        samples.push(Sample { t: state.time, position: state.position, force: state.measured_force, phase });
        if state.halted && halted_at.is_none() {
            halted_at = Some(state.time);
        }
        if halted_at.is_some_and(|t| state.time >= t + HOLD_WINDOW_S) {
            break;
        }
        if halted_at.is_none()
            && switch.is_none()
            && state.active.is_some()
            && state.pending.is_empty()
            && !state.moving()
        {
            return Err(ActuatorError::NoContact(format!(
                "finger stopped at {} without reaching the force limit",
                state.position
            )));
        }
    }
    let completion_time = halted_at.ok_or_else(|| ActuatorError::NoContact("trial timed out".into()))?;
    Ok(ContactTrial { f_set, peak_force: peak, delta_f: peak - f_set, completion_time, samples })
}

/// Overshoot of one trial: peak measured force minus `f_set`.
pub fn run_overshoot_trial(
    profile: SpeedProfile,
    f_set: f64,
    scene: &ContactScene,
    config: &SimConfig,
    seed: u64,
) -> Result<f64, ActuatorError> {
    run_contact_trial(profile, f_set, scene, config, seed).map(|t| t.delta_f)
}

/// Time from command issue until the force-limit stop holds the finger.
pub fn run_completion_timing(
    profile: SpeedProfile,
    f_set: f64,
    scene: &ContactScene,
    config: &SimConfig,
    seed: u64,
) -> Result<f64, ActuatorError> {
    run_contact_trial(profile, f_set, scene, config, seed).map(|t| t.completion_time)
}

/// SplitMix64 finalizer; used to derive independent per-trial seeds.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed for trial `trial` of a `(setpoint)` cell; shared across speed
/// profiles so constant and hybrid runs are paired.
pub fn trial_seed(master: u64, setpoint_idx: u64, trial: u64) -> u64 {
    splitmix64(splitmix64(master ^ splitmix64(setpoint_idx)) ^ trial)
}

/// Mean and sample variance of one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub speed: String,
    pub f_set: f64,
    pub mean: f64,
    pub variance: f64,
    pub n: usize,
}

pub fn summarize(speed: String, f_set: f64, values: &[f64]) -> CellSummary {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n.max(1) as f64;
    let variance = if n > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
    CellSummary { speed, f_set, mean, variance, n }
}

/// Obstacle position used by the characterization sweeps.
pub const GRID_CONTACT: f64 = 500.0;

/// One trial of a contact sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridTrial {
    pub speed: String,
    pub f_set: f64,
    pub trial: usize,
    pub delta_f: f64,
    pub completion_time: f64,
}

/// Runs every `(profile, setpoint, trial)` cell in parallel. Trial `j` at
/// setpoint `i` uses `trial_seed(seed, i, j)` for every profile, so the
/// profiles see the same noise. Results come back in grid order.
pub fn contact_grid(
    profiles: &[SpeedProfile],
    setpoints: &[f64],
    trials: usize,
    scene: &ContactScene,
    config: &SimConfig,
    seed: u64,
) -> Result<Vec<GridTrial>, ActuatorError> {
    use rayon::prelude::*;
    let cells: Vec<(usize, usize, usize)> = (0..profiles.len())
        .flat_map(|p| (0..setpoints.len()).flat_map(move |i| (0..trials).map(move |j| (p, i, j))))
        .collect();
    cells
        .par_iter()
        .map(|&(p, i, j)| {
            let t = run_contact_trial(profiles[p], setpoints[i], scene, config, trial_seed(seed, i as u64, j as u64))?;
            Ok(GridTrial {
                speed: profiles[p].label(),
                f_set: setpoints[i],
                trial: j,
                delta_f: t.delta_f,
                completion_time: t.completion_time,
            })
        })
        .collect()
}

/// Per-cell summaries of a grid, in first-appearance order.
pub fn summarize_grid(trials: &[GridTrial], metric: impl Fn(&GridTrial) -> f64) -> Vec<CellSummary> {
    let mut keys: Vec<(String, f64)> = Vec::new();
    for t in trials {
        if !keys.iter().any(|(s, f)| *s == t.speed && *f == t.f_set) {
            keys.push((t.speed.clone(), t.f_set));
        }
    }
    keys.into_iter()
        .map(|(speed, f_set)| {
            let values: Vec<f64> =
                trials.iter().filter(|t| t.speed == speed && t.f_set == f_set).map(&metric).collect();
            summarize(speed, f_set, &values)
        })
        .collect()
}

pub fn cells_csv(cells: &[CellSummary]) -> String {
    let mut out = String::from("speed,f_set,mean,variance,n\n");
    for c in cells {
        out.push_str(&format!("{},{},{:.6},{:.6},{}\n", c.speed, c.f_set, c.mean, c.variance, c.n));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn commands_are_range_checked() {
        assert!(RawCommand::new(500.0, 100.0, 100.0).is_ok());
        assert_eq!(
            RawCommand::new(1500.0, 100.0, 100.0),
            Err(ActuatorError::OutOfRange { field: "position", value: 1500.0 })
        );
        assert!(RawCommand::new(500.0, -1.0, 100.0).is_err());
    }

    #[test]
    fn gain_table_is_validated_and_interpolated() {
        let g = VelocityGain::default();
        g.validate().unwrap();
        assert_eq!(g.rate(0.0), 0.0);
        assert_abs_diff_eq!(g.rate(25.0), 81.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.rate(550.0), 1775.0, epsilon = 1e-9);
        assert_eq!(g.rate(1000.0), 2200.0);
        let bad = VelocityGain { points: vec![(0.0, 0.0), (500.0, 10.0), (1000.0, 5.0)] };
        assert!(bad.validate().is_err());
        assert!(VelocityGain::linear(4200.0).validate().is_ok());
    }

    #[test]
    fn free_space_setpoint_is_reached_exactly() {
        let cfg = SimConfig::default();
        for speed in [25.0, 333.0, 1000.0] {
            let r = run_step_response(500.0, speed, &cfg).unwrap();
            let last = r.samples.last().unwrap();
            assert_eq!(last.position, 500.0);
            assert!(r.samples.iter().all(|s| s.position >= 500.0));
        }
    }

    #[test]
    fn motion_starts_one_latency_after_the_command() {
        let cfg = SimConfig::default();
        let r = run_step_response(500.0, 1000.0, &cfg).unwrap();
        let first = r.first_motion.unwrap();
        assert!((first - cfg.latency).abs() <= cfg.tick, "{first}");
        // causality: nothing moves before the command lands
        assert!(r.samples.iter().filter(|s| s.t < cfg.latency).all(|s| s.position == OPEN_POSITION));
    }

    #[test]
    fn zero_speed_never_moves() {
        let r = run_step_response(500.0, 0.0, &SimConfig::default()).unwrap();
        assert!(r.samples.iter().all(|s| s.position == OPEN_POSITION));
        assert_eq!((r.rise_time, r.settling_time, r.first_motion), (None, None, None));
    }

    #[test]
    fn rise_and_settling_on_defaults() {
        let cfg = SimConfig::default();
        let fast = run_step_response(500.0, 1000.0, &cfg).unwrap();
        let slow = run_step_response(500.0, 100.0, &cfg).unwrap();
        // 400 units over the constant rate, independent of tick phase
        assert_abs_diff_eq!(fast.rise_time.unwrap(), 400.0 / 2200.0, epsilon = 1e-9);
        assert_abs_diff_eq!(slow.rise_time.unwrap(), 400.0 / 1350.0, epsilon = 1e-9);
        // the band edge can fall in the tick where motion stops, so one tick
        assert_abs_diff_eq!(fast.settling_time.unwrap(), 0.066 + 490.0 / 2200.0, epsilon = cfg.tick);
        assert_abs_diff_eq!(slow.settling_time.unwrap(), 0.066 + 490.0 / 1350.0, epsilon = cfg.tick);
    }

    #[test]
    fn doubling_speed_halves_rise_time_in_the_linear_region() {
        let cfg = SimConfig::default();
        let a = run_step_response(500.0, 25.0, &cfg).unwrap().rise_time.unwrap();
        let b = run_step_response(500.0, 50.0, &cfg).unwrap().rise_time.unwrap();
        assert!((a / b - 2.0).abs() <= 0.2);
    }

    #[test]
    fn constructed_case_has_no_overshoot() {
        // 5 units per tick and 20 force units per unit: one tick past contact
        // lands exactly on the setpoint
        let cfg = SimConfig {
            latency: 0.0,
            tick: 1.0 / 128.0,
            velocity_gain: VelocityGain::linear(1280.0),
            contact_stiffness: 20.0,
            sensor_noise_sigma: 0.0,
        };
        let trial =
            run_contact_trial(SpeedProfile::Constant(500.0), 100.0, &ContactScene::obstacle(950.0), &cfg, 3).unwrap();
        assert_eq!(trial.delta_f, 0.0);
        assert_eq!(trial.completion_time, 11.0 / 128.0);
    }

    #[test]
    fn overshoot_is_bounded_by_the_latency_window() {
        let cfg = SimConfig::default().noiseless();
        let scene = ContactScene::obstacle(500.0);
        for v in SWEEP_SPEEDS {
            let t = run_contact_trial(SpeedProfile::Constant(v), 250.0, &scene, &cfg, 0).unwrap();
            let per_s = cfg.contact_stiffness * cfg.velocity_gain.rate(v);
            assert!(t.delta_f >= per_s * cfg.latency - 1e-9, "v={v}: {}", t.delta_f);
            assert!(t.delta_f < per_s * (cfg.latency + cfg.tick) + 1e-9, "v={v}: {}", t.delta_f);
        }
    }

    #[test]
    fn worst_case_overshoot_matches_the_published_anchor() {
        // +1618 % of a 100-unit limit at full speed
        let cfg = SimConfig::default().noiseless();
        let t =
            run_contact_trial(SpeedProfile::Constant(1000.0), 100.0, &ContactScene::obstacle(500.0), &cfg, 0).unwrap();
        let pct = 100.0 * t.delta_f / 100.0;
        assert!((pct - 1618.0).abs() < 120.0, "{pct}");
    }

    #[test]
    fn missing_obstacle_is_reported() {
        let cfg = SimConfig::default();
        let r = run_contact_trial(SpeedProfile::Constant(1000.0), 100.0, &ContactScene::free(), &cfg, 0);
        assert!(matches!(r, Err(ActuatorError::NoContact(_))));
        let stalled = run_contact_trial(SpeedProfile::Constant(0.0), 100.0, &ContactScene::obstacle(500.0), &cfg, 0);
        assert!(matches!(stalled, Err(ActuatorError::NoContact(_))));
    }

    #[test]
    fn immediate_contact_completes_quickly() {
        let cfg = SimConfig::default().noiseless();
        let t =
            run_contact_trial(SpeedProfile::Constant(1000.0), 100.0, &ContactScene::obstacle(OPEN_POSITION), &cfg, 0)
                .unwrap();
        // command latency plus sensing latency plus a few ticks
        assert!(t.completion_time <= 2.0 * cfg.latency + 3.0 * cfg.tick, "{}", t.completion_time);
    }

    #[test]
    fn hybrid_switches_and_beats_constant_slow() {
        let cfg = SimConfig::default();
        let scene = ContactScene::obstacle(500.0);
        let h = run_contact_trial(SpeedProfile::hybrid(500.0), 500.0, &scene, &cfg, 9).unwrap();
        let c = run_contact_trial(SpeedProfile::Constant(25.0), 500.0, &scene, &cfg, 9).unwrap();
        assert!(h.completion_time < c.completion_time);
        // the fast leg stops exactly at the switch point
        assert!(h.samples.iter().any(|s| s.position == 525.0));
    }

    #[test]
    fn constant_speed_completion_is_monotone() {
        let cfg = SimConfig::default().noiseless();
        let scene = ContactScene::obstacle(500.0);
        let times: Vec<f64> = SWEEP_SPEEDS
            .iter()
            .map(|&v| run_completion_timing(SpeedProfile::Constant(v), 500.0, &scene, &cfg, 0).unwrap())
            .collect();
        assert!(times.windows(2).all(|w| w[1] <= w[0]), "{times:?}");
    }

    #[test]
    fn trials_are_deterministic() {
        let cfg = SimConfig::default();
        let scene = ContactScene::obstacle(500.0);
        let a = run_contact_trial(SpeedProfile::Constant(250.0), 500.0, &scene, &cfg, 42).unwrap();
        let b = run_contact_trial(SpeedProfile::Constant(250.0), 500.0, &scene, &cfg, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn grid_is_ordered_and_paired() {
        let cfg = SimConfig::default();
        let scene = ContactScene::obstacle(GRID_CONTACT);
        let profiles = [SpeedProfile::Constant(500.0), SpeedProfile::Constant(1000.0)];
        let grid = contact_grid(&profiles, &[100.0, 500.0], 3, &scene, &cfg, 1).unwrap();
        assert_eq!(grid.len(), 12);
        assert_eq!((grid[0].speed.as_str(), grid[0].f_set, grid[0].trial), ("500", 100.0, 0));
        let single = run_contact_trial(profiles[1], 500.0, &scene, &cfg, trial_seed(1, 1, 2)).unwrap();
        assert_eq!(grid[11].delta_f, single.delta_f);
        let cells = summarize_grid(&grid, |t| t.delta_f);
        assert_eq!(cells.len(), 4);
        assert!(cells.iter().all(|c| c.n == 3));
        assert!(cells_csv(&cells).starts_with("speed,f_set,mean,variance,n\n500,100,"));
    }

    #[test]
    fn summary_statistics() {
        let s = summarize("25".into(), 100.0, &[1.0, 2.0, 3.0]);
        assert_eq!((s.mean, s.variance, s.n), (2.0, 1.0, 3));
    }

    proptest::proptest! {
        #[test]
        fn free_motion_is_affine(speed in 30.0f64..1000.0, target in 0.0f64..900.0) {
            let cfg = SimConfig::default();
            let r = run_step_response(target, speed, &cfg).unwrap();
            let moving: Vec<&Sample> = r.samples.iter().filter(|s| s.phase == "moving" && s.t > cfg.latency).collect();
            proptest::prop_assume!(moving.len() >= 3);
            let rate = cfg.velocity_gain.rate(speed);
            for s in &moving {
                let expected = OPEN_POSITION - rate * (s.t - cfg.latency);
                proptest::prop_assert!((s.position - expected).abs() < 1e-6);
            }
        }

        #[test]
        fn noiseless_overshoot_is_non_negative(v in 10.0f64..1000.0, f_set in 50.0f64..1000.0, contact in 100.0f64..1000.0) {
            let cfg = SimConfig::default().noiseless();
            let t = run_contact_trial(SpeedProfile::Constant(v), f_set, &ContactScene::obstacle(contact), &cfg, 0);
            if let Ok(t) = t {
                proptest::prop_assert!(t.delta_f >= 0.0);
            }
        }
    }
}
