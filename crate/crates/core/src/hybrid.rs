//! Bimodal speed-force execution and the spike-then-drop release detector.
//!
//! The policy moves fast in free space to a switch point just short of the
//! expected contact, then closes slowly with a calibrated force limit so the
//! latency-driven overshoot stays close to that of a uniformly slow approach.

use crate::actuator::{
    self, ActuatorError, ActuatorState, ContactScene, RawCommand, SensorNoise, SimConfig, OPEN_POSITION, RAW_MAX,
    RAW_MIN,
};
use crate::calibration::CalibrationModel;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Reach tolerance for the switch point, about one tick of slow travel.
pub const SWITCH_TOLERANCE: f64 = actuator::SWITCH_REACH_TOLERANCE;
/// Onset spread of contact position (raw) used to express the margin in σ.
pub const ONSET_SIGMA: f64 = 7.5;
/// Free-space noise floors of the two force sensors (N).
pub const FINGER_SIGMA_N: f64 = 0.12;
pub const WRIST_SIGMA_N: f64 = 1.1;

#[derive(Debug, Error, PartialEq)]
pub enum HybridError {
    #[error("invalid policy: {0}")]
    Policy(String),
    #[error("calibration model missing")]
    MissingModel,
    #[error("invalid detector: {0}")]
    Detector(String),
    #[error("trace {index}: {t} time stamps but {f} force samples")]
    TraceLength { index: usize, t: usize, f: usize },
    #[error("trace {index} does not share the time base of trace 0")]
    TimeBase { index: usize },
    #[error(transparent)]
    Actuator(#[from] ActuatorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridPolicy {
    pub v_fast: f64,
    pub v_slow: f64,
    pub switch_margin: f64,
    /// F* in Newtons; converted to a raw force limit through the finger model.
    pub force_target_n: f64,
    #[serde(default)]
    pub hold: HoldMode,
    /// Assumed contact stiffness (raw force per raw position) for regulation.
    #[serde(default = "default_hold_stiffness")]
    pub hold_stiffness: f64,
}

fn default_hold_stiffness() -> f64 {
    SimConfig::default().contact_stiffness
}

/// Behaviour once the force target has been reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HoldMode {
    /// Freeze at the sensed position.
    #[default]
    Position,
    /// Back off or press in by the sensed force error over the assumed stiffness.
    Regulate,
}

impl HybridPolicy {
    pub fn new(force_target_n: f64) -> Self {
        HybridPolicy {
            v_fast: 1000.0,
            v_slow: 25.0,
            switch_margin: 25.0,
            force_target_n,
            hold: HoldMode::Position,
            hold_stiffness: default_hold_stiffness(),
        }
    }

    pub fn regulated(mut self) -> Self {
        self.hold = HoldMode::Regulate;
        self
    }

    pub fn validate(&self) -> Result<(), HybridError> {
        if !(self.v_slow > 0.0 && self.v_slow <= 25.0 && self.v_fast >= 25.0 && self.v_fast <= RAW_MAX) {
            return Err(HybridError::Policy(format!(
                "speeds must satisfy 0 < v_slow <= 25 <= v_fast <= 1000, got {} and {}",
                self.v_slow, self.v_fast
            )));
        }
        if !(self.switch_margin > 0.0) {
            return Err(HybridError::Policy("switch_margin must be > 0".into()));
        }
        if !(self.force_target_n > 0.0 && self.force_target_n.is_finite()) {
            return Err(HybridError::Policy("force target must be > 0 N".into()));
        }
        if !(self.hold_stiffness > 0.0) {
            return Err(HybridError::Policy("hold_stiffness must be > 0".into()));
        }
        Ok(())
    }

    pub fn switch_point(&self, q_g: f64) -> SwitchPoint {
        let raw = q_g + self.switch_margin;
        let position = raw.clamp(RAW_MIN, RAW_MAX);
        SwitchPoint { position, clamped: position != raw }
    }

    /// Switch margin in units of the contact-onset spread.
    pub fn margin_in_sigma(&self) -> f64 {
        self.switch_margin / ONSET_SIGMA
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchPoint {
    pub position: f64,
    pub clamped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ControllerPhase {
    FastApproach,
    SlowContact,
    Hold,
    Released,
}

impl ControllerPhase {
    pub fn name(self) -> &'static str {
        match self {
            ControllerPhase::FastApproach => "fast_approach",
            ControllerPhase::SlowContact => "slow_contact",
            ControllerPhase::Hold => "hold",
            ControllerPhase::Released => "released",
        }
    }
}

impl fmt::Display for ControllerPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One control step. `q_g` is the expected contact position. Phases only
/// move forward; `Released` is entered through [`release`].
pub fn tick(
    phase: ControllerPhase,
    policy: &HybridPolicy,
    q_g: f64,
    sensed_position: f64,
    sensed_force_n: f64,
    model: Option<&CalibrationModel>,
) -> Result<(RawCommand, ControllerPhase), HybridError> {
    let model = model.ok_or(HybridError::MissingModel)?;
    let limit = model.newtons_to_raw(policy.force_target_n).value;
    let q_sw = policy.switch_point(q_g).position;
    let slow = RawCommand::new(RAW_MIN, policy.v_slow, limit)?;
    let hold = match policy.hold {
        HoldMode::Position => RawCommand::new(sensed_position.clamp(RAW_MIN, RAW_MAX), 0.0, limit)?,
        HoldMode::Regulate => {
            // force error in raw units, positive when pressing too hard
            let excess = (sensed_force_n - policy.force_target_n) / model.a;
            let target = (sensed_position + excess / policy.hold_stiffness).round();
            RawCommand::new(target.clamp(RAW_MIN, RAW_MAX), policy.v_slow, limit)?
        }
    };
    let contact_reached = sensed_force_n >= policy.force_target_n;
    Ok(match phase {
        ControllerPhase::FastApproach if sensed_position > q_sw + SWITCH_TOLERANCE => {
            (RawCommand::new(q_sw, policy.v_fast, limit)?, ControllerPhase::FastApproach)
        }
        ControllerPhase::FastApproach | ControllerPhase::SlowContact if !contact_reached => {
            (slow, ControllerPhase::SlowContact)
        }
        ControllerPhase::FastApproach | ControllerPhase::SlowContact | ControllerPhase::Hold => {
            (hold, ControllerPhase::Hold)
        }
        ControllerPhase::Released => {
            (RawCommand::new(OPEN_POSITION, policy.v_fast, RAW_MAX)?, ControllerPhase::Released)
        }
    })
}

/// Opens the hand; valid from any phase.
pub fn release(policy: &HybridPolicy) -> (RawCommand, ControllerPhase) {
    let cmd = RawCommand { position: OPEN_POSITION, speed: policy.v_fast, force_limit: RAW_MAX };
    (cmd, ControllerPhase::Released)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub t: f64,
    pub phase: ControllerPhase,
    pub cmd_pos: f64,
    pub cmd_speed: f64,
    pub sensed_force_n: f64,
    pub position: f64,
}

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from("t_s,phase,cmd_pos,cmd_speed,sensed_force_n\n");
    for r in rows {
        out.push_str(&format!("{:.6},{},{:.3},{:.3},{:.6}\n", r.t, r.phase, r.cmd_pos, r.cmd_speed, r.sensed_force_n));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopRun {
    pub rows: Vec<TraceRow>,
    /// Peak measured raw force minus the raw force limit.
    pub delta_f: f64,
    pub completion_time: f64,
    pub force_limit_raw: f64,
}

/// Runs the policy against the simulated actuator until the finger has been
/// held for `hold_s` seconds.
pub fn run_closed_loop(
    policy: &HybridPolicy,
    q_g: f64,
    scene: &ContactScene,
    config: &SimConfig,
    model: &CalibrationModel,
    seed: u64,
    hold_s: f64,
) -> Result<ClosedLoopRun, HybridError> {
    policy.validate()?;
    config.validate()?;
    let noise = SensorNoise::new(seed);
    let mut state = ActuatorState::new(OPEN_POSITION);
    let mut phase = ControllerPhase::FastApproach;
    let mut last: Option<RawCommand> = None;
    let mut rows = Vec::new();
    let mut peak: f64 = 0.0;
    let mut halted_at: Option<f64> = None;
    let mut sensed_n = 0.0;
    loop {
        let (cmd, next) = tick(phase, policy, q_g, state.position, sensed_n, Some(model))?;
        debug_assert!(next >= phase);
        phase = next;
        // re-sending an identical command would reset the firmware stop
        let frozen =
            phase == ControllerPhase::Hold && policy.hold == HoldMode::Position && last.is_some_and(|c| c.speed == 0.0);
        if last != Some(cmd) && !frozen {
            state.issue(cmd, config);
            last = Some(cmd);
        }
        state.step(scene, config, &noise);
        sensed_n = model.raw_to_newtons(state.measured_force).value;
        peak = peak.max(state.measured_force);
        rows.push(TraceRow {
            t: state.time,
            phase,
            cmd_pos: cmd.position,
            cmd_speed: cmd.speed,
            sensed_force_n: sensed_n,
            position: state.position,
        });
        if halted_at.is_none() && (state.halted || (phase == ControllerPhase::Hold && !state.moving())) {
            halted_at = Some(state.time);
        }
        if halted_at.is_some_and(|t| state.time >= t + hold_s) {
            break;
        }
        if state.time >= actuator::MAX_TRIAL_S
            || (halted_at.is_none() && state.position <= RAW_MIN && state.pending.is_empty())
        {
            return Err(ActuatorError::NoContact(format!("closed loop ended at position {}", state.position)).into());
        }
    }
    let force_limit_raw = model.newtons_to_raw(policy.force_target_n).value;
    Ok(ClosedLoopRun {
        rows,
        delta_f: peak - force_limit_raw,
        completion_time: halted_at.unwrap_or(f64::NAN),
        force_limit_raw,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropMode {
    /// Force falls back below the spike threshold.
    Recross,
    /// Force falls k·σ below the running peak.
    PeakDrop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReleaseState {
    Armed,
    SpikeSeen,
    Triggered,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReleaseDetector {
    pub baseline: f64,
    pub sigma: f64,
    pub k: f64,
    pub state: ReleaseState,
    /// Length of the free-space window used for the baseline (s).
    pub window: f64,
    pub mode: DropMode,
    pub peak: f64,
    pub triggered_at: Option<f64>,
}

/// Default baseline window (s).
pub const BASELINE_WINDOW_S: f64 = 0.5;

impl ReleaseDetector {
    pub fn new(baseline: f64, sigma: f64, k: f64) -> Result<Self, HybridError> {
        if !(sigma > 0.0) || !(k > 0.0) {
            return Err(HybridError::Detector(format!("sigma and k must be > 0, got {sigma} and {k}")));
        }
        Ok(ReleaseDetector {
            baseline,
            sigma,
            k,
            state: ReleaseState::Armed,
            window: BASELINE_WINDOW_S,
            mode: DropMode::Recross,
            peak: f64::NEG_INFINITY,
            triggered_at: None,
        })
    }

    pub fn with_mode(mut self, mode: DropMode) -> Self {
        self.mode = mode;
        self
    }

    /// Baseline from the mean of the samples with `t < window`.
    pub fn from_trace(t: &[f64], force: &[f64], sigma: f64, k: f64) -> Result<Self, HybridError> {
        let t0 = t.first().copied().unwrap_or(0.0);
        let head: Vec<f64> =
            t.iter().zip(force).take_while(|(ti, _)| **ti - t0 < BASELINE_WINDOW_S).map(|(_, f)| *f).collect();
        if head.is_empty() {
            return Err(HybridError::Detector("empty baseline window".into()));
        }
        Self::new(head.iter().sum::<f64>() / head.len() as f64, sigma, k)
    }

    pub fn threshold(&self) -> f64 {
        self.baseline + self.k * self.sigma
    }

    /// Feeds one sample; true exactly on the SpikeSeen to Triggered transition.
    pub fn step(&mut self, force_n: f64, t: f64) -> bool {
        match self.state {
            ReleaseState::Armed => {
                if force_n > self.threshold() {
                    self.state = ReleaseState::SpikeSeen;
                    self.peak = force_n;
                }
                false
            }
            ReleaseState::SpikeSeen => {
                self.peak = self.peak.max(force_n);
                let dropped = match self.mode {
                    DropMode::Recross => force_n < self.threshold(),
                    DropMode::PeakDrop => force_n < self.peak - self.k * self.sigma,
                };
                if dropped {
                    self.state = ReleaseState::Triggered;
                    self.triggered_at = Some(t);
                }
                dropped
            }
            ReleaseState::Triggered => false,
        }
    }
}

/// A force trace with its ground-truth spike window, if any.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceTrace {
    pub t: Vec<f64>,
    pub force: Vec<f64>,
    pub spike: Option<(f64, f64)>,
}

/// Shape of the synthetic peg-in-hole traces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSpec {
    pub duration: f64,
    pub dt: f64,
    pub baseline: f64,
    pub spike_amplitude: (f64, f64),
    pub spike_width: (f64, f64),
    pub spike_start: (f64, f64),
    /// Ramp time on each side of the spike plateau.
    pub ramp: f64,
    /// Force drop below baseline after the spike.
    pub drop: (f64, f64),
}

impl Default for TraceSpec {
    fn default() -> Self {
        TraceSpec {
            duration: 3.0,
            dt: 1.0 / 163.0,
            baseline: 1.5,
            spike_amplitude: (2.0, 4.0),
            spike_width: (0.08, 0.2),
            spike_start: (1.0, 2.0),
            ramp: 0.03,
            drop: (0.5, 1.0),
        }
    }
}

fn time_base(spec: &TraceSpec) -> Vec<f64> {
    let n = (spec.duration / spec.dt).round() as usize;
    (0..n).map(|i| i as f64 * spec.dt).collect()
}

/// Noise-free traces: `n` with a spike-then-drop event when `with_spike`,
/// otherwise flat at baseline.
pub fn synthetic_traces(spec: &TraceSpec, n: usize, with_spike: bool, seed: u64) -> Vec<ForceTrace> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = time_base(spec);
    let draw = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| {
        if hi > lo {
            Uniform::new(lo, hi).map_or(lo, |u| u.sample(rng))
        } else {
            lo
        }
    };
    (0..n)
        .map(|_| {
            if !with_spike {
                return ForceTrace { t: t.clone(), force: vec![spec.baseline; t.len()], spike: None };
            }
            let amp = draw(&mut rng, spec.spike_amplitude);
            let width = draw(&mut rng, spec.spike_width);
            let start = draw(&mut rng, spec.spike_start);
            let drop = draw(&mut rng, spec.drop);
            let end = start + 2.0 * spec.ramp + width;
            let force = t
                .iter()
                .map(|&ti| {
                    let x = ti - start;
                    if x < 0.0 {
                        spec.baseline
                    } else if x < spec.ramp {
                        spec.baseline + amp * x / spec.ramp
                    } else if x < spec.ramp + width {
                        spec.baseline + amp
                    } else if x < end - start {
                        let y = (end - ti) / spec.ramp;
                        spec.baseline - drop + (amp + drop) * y
                    } else {
                        spec.baseline - drop
                    }
                })
                .collect();
            ForceTrace { t: t.clone(), force, spike: Some((start, end)) }
        })
        .collect()
}

pub fn add_noise(trace: &ForceTrace, sigma: f64, seed: u64) -> ForceTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let force = match Normal::new(0.0, sigma) {
        Ok(n) if sigma > 0.0 => trace.force.iter().map(|f| f + n.sample(&mut rng)).collect(),
        _ => trace.force.clone(),
    };
    ForceTrace { t: trace.t.clone(), force, spike: trace.spike }
}

/// Trigger times of a fresh detector over the trace (at most one).
pub fn detect(trace: &ForceTrace, sigma: f64, k: f64, mode: DropMode) -> Result<Vec<f64>, HybridError> {
    let mut det = ReleaseDetector::from_trace(&trace.t, &trace.force, sigma, k)?.with_mode(mode);
    Ok(trace.t.iter().zip(&trace.force).filter_map(|(&t, &f)| det.step(f, t).then_some(t)).collect())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModalityStats {
    pub sigma: f64,
    /// Triggered inside the spike window.
    pub correct: usize,
    /// Triggered before the spike, or on a trace without one.
    pub premature: usize,
    /// No trigger although a spike was present.
    pub missed: usize,
    /// Triggered after the spike window ended.
    pub late: usize,
    pub trigger_times: Vec<Option<f64>>,
}

impl ModalityStats {
    pub fn premature_rate(&self) -> f64 {
        self.premature as f64 / self.trigger_times.len().max(1) as f64
    }

    pub fn missed_rate(&self) -> f64 {
        self.missed as f64 / self.trigger_times.len().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityComparison {
    pub k: f64,
    pub finger: ModalityStats,
    pub wrist: ModalityStats,
}

fn modality_stats(traces: &[ForceTrace], sigma: f64, k: f64, seed: u64) -> Result<ModalityStats, HybridError> {
    let mut stats = ModalityStats { sigma, ..Default::default() };
    for (i, clean) in traces.iter().enumerate() {
        let noisy = add_noise(clean, sigma, actuator::splitmix64(seed ^ i as u64));
        let hit = detect(&noisy, sigma, k, DropMode::Recross)?.first().copied();
        match (hit, clean.spike) {
            (None, Some(_)) => stats.missed += 1,
            (None, None) => {}
            (Some(_), None) => stats.premature += 1,
            (Some(t), Some((start, end))) => {
                if t < start {
                    stats.premature += 1
                } else if t <= end + 2.0 * clean.t.get(1).map_or(0.0, |t1| t1 - clean.t[0]) {
                    stats.correct += 1
                } else {
                    stats.late += 1
                }
            }
        }
        stats.trigger_times.push(hit);
    }
    Ok(stats)
}

/// Runs both sensor modalities over the same noise-free traces. Each modality
/// adds its own noise floor and thresholds at `k` times it.
pub fn compare_release_modalities(
    finger_sigma: f64,
    wrist_sigma: f64,
    k: f64,
    traces: &[ForceTrace],
    seed: u64,
) -> Result<ModalityComparison, HybridError> {
    if let Some(first) = traces.first() {
        for (index, tr) in traces.iter().enumerate() {
            if tr.t.len() != tr.force.len() {
                return Err(HybridError::TraceLength { index, t: tr.t.len(), f: tr.force.len() });
            }
            if tr.t != first.t {
                return Err(HybridError::TimeBase { index });
            }
        }
    }
    Ok(ModalityComparison {
        k,
        finger: modality_stats(traces, finger_sigma, k, seed)?,
        wrist: modality_stats(traces, wrist_sigma, k, seed)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hand_model::Finger;
    use approx::assert_abs_diff_eq;

    fn index_model() -> CalibrationModel {
        CalibrationModel::published(Finger::Index).unwrap()
    }

    #[test]
    fn switch_point_examples() {
        let p = HybridPolicy::new(2.0);
        assert_eq!(p.switch_point(400.0), SwitchPoint { position: 425.0, clamped: false });
        assert_eq!(p.switch_point(990.0), SwitchPoint { position: 1000.0, clamped: true });
        assert_abs_diff_eq!(p.margin_in_sigma(), 3.333, epsilon = 1e-3);
    }

    #[test]
    fn policy_validation() {
        assert!(HybridPolicy::new(2.0).validate().is_ok());
        let mut p = HybridPolicy::new(2.0);
        p.v_slow = 30.0;
        assert!(p.validate().is_err());
        p = HybridPolicy::new(2.0);
        p.switch_margin = 0.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn tick_phases() {
        let p = HybridPolicy::new(2.0);
        let m = index_model();
        let (cmd, ph) = tick(ControllerPhase::FastApproach, &p, 400.0, 1000.0, 0.0, Some(&m)).unwrap();
        assert_eq!((cmd.position, cmd.speed, ph), (425.0, 1000.0, ControllerPhase::FastApproach));
        assert_eq!(cmd.force_limit, m.newtons_to_raw(2.0).value);
        let (cmd, ph) = tick(ph, &p, 400.0, 425.0, 0.0, Some(&m)).unwrap();
        assert_eq!((cmd.position, cmd.speed, ph), (0.0, 25.0, ControllerPhase::SlowContact));
        let (cmd, ph) = tick(ph, &p, 400.0, 395.0, 2.1, Some(&m)).unwrap();
        assert_eq!((cmd.position, cmd.speed, ph), (395.0, 0.0, ControllerPhase::Hold));
        // no regression even if force falls again
        let (_, ph) = tick(ph, &p, 400.0, 395.0, 0.0, Some(&m)).unwrap();
        assert_eq!(ph, ControllerPhase::Hold);
        let (cmd, ph) = release(&p);
        assert_eq!((cmd.position, ph), (OPEN_POSITION, ControllerPhase::Released));
        assert_eq!(tick(ph, &p, 400.0, 395.0, 0.0, Some(&m)).unwrap().1, ControllerPhase::Released);
        assert_eq!(tick(ControllerPhase::FastApproach, &p, 400.0, 1000.0, 0.0, None), Err(HybridError::MissingModel));
    }

    #[test]
    fn closed_loop_tracks_constant_slow_overshoot() {
        let cfg = SimConfig::default();
        let m = index_model();
        let scene = ContactScene::obstacle(500.0);
        let f_set = 500.0;
        let p = HybridPolicy::new(m.raw_to_newtons(f_set).value);
        let (mut hyb, mut slow) = (0.0, 0.0);
        for s in 0..20 {
            let run = run_closed_loop(&p, 500.0, &scene, &cfg, &m, s, actuator::HOLD_WINDOW_S).unwrap();
            let c =
                actuator::run_contact_trial(actuator::SpeedProfile::Constant(25.0), f_set, &scene, &cfg, s).unwrap();
            assert!(run.completion_time < c.completion_time);
            hyb += run.delta_f;
            slow += c.delta_f;
        }
        assert!((hyb / slow - 1.0).abs() <= 0.10, "{hyb} vs {slow}");
    }

    #[test]
    fn closed_loop_phase_order_and_speed_cap() {
        let cfg = SimConfig::default();
        let m = index_model();
        let p = HybridPolicy::new(3.0);
        let run =
            run_closed_loop(&p, 600.0, &ContactScene::obstacle(600.0), &cfg, &m, 4, actuator::HOLD_WINDOW_S).unwrap();
        assert!(run.rows.windows(2).all(|w| w[0].phase <= w[1].phase));
        let q_sw = p.switch_point(600.0).position;
        assert!(run.rows.iter().filter(|r| r.position < q_sw).all(|r| r.cmd_speed <= p.v_slow));
        assert!(trace_csv(&run.rows).starts_with("t_s,phase,cmd_pos,cmd_speed,sensed_force_n\n"));
    }

    #[test]
    fn regulated_hold_converges_to_the_target() {
        let cfg = SimConfig::default();
        let m = index_model();
        let p = HybridPolicy::new(1.0).regulated();
        let run = run_closed_loop(&p, 600.0, &ContactScene::obstacle(600.0), &cfg, &m, 2, 2.0).unwrap();
        let tail: Vec<f64> = run.rows.iter().rev().take(100).map(|r| r.sensed_force_n).collect();
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        assert!((mean - 1.0).abs() < 0.1, "{mean}");
        let peak = run.rows.iter().map(|r| r.sensed_force_n).fold(0.0, f64::max);
        assert!(peak > 1.3);
    }

    #[test]
    fn detector_threshold_and_flat_trace() {
        let d = ReleaseDetector::new(1.5, 0.12, 10.0).unwrap();
        assert_abs_diff_eq!(d.threshold(), 2.7, epsilon = 1e-12);
        assert!(ReleaseDetector::new(0.0, 0.0, 10.0).is_err());
        let flat = &synthetic_traces(&TraceSpec::default(), 1, false, 0)[0];
        assert!(detect(flat, 0.12, 10.0, DropMode::Recross).unwrap().is_empty());
    }

    /// Brute-force scan: first up-crossing, then first down-crossing after it.
    fn scan_oracle(tr: &ForceTrace, thr: f64) -> Option<f64> {
        let up = tr.force.iter().position(|&f| f > thr)?;
        tr.force[up..].iter().position(|&f| f < thr).map(|i| tr.t[up + i])
    }

    #[test]
    fn spike_then_drop_triggers_once_at_down_crossing() {
        let spec = TraceSpec::default();
        for tr in synthetic_traces(&spec, 20, true, 11) {
            let hits = detect(&tr, 0.12, 10.0, DropMode::Recross).unwrap();
            assert_eq!(hits.len(), 1);
            assert_eq!(Some(hits[0]), scan_oracle(&tr, spec.baseline + 1.2));
        }
    }

    #[test]
    fn peak_drop_mode_fires_on_the_falling_edge() {
        let tr = &synthetic_traces(&TraceSpec::default(), 1, true, 5)[0];
        let hits = detect(tr, 0.12, 10.0, DropMode::PeakDrop).unwrap();
        let (start, end) = tr.spike.unwrap();
        assert_eq!(hits.len(), 1);
        assert!(hits[0] > start && hits[0] <= end);
    }

    #[test]
    fn modalities_agree_when_noise_floors_match() {
        let traces = synthetic_traces(&TraceSpec::default(), 10, true, 2);
        let c = compare_release_modalities(0.12, 0.12, 10.0, &traces, 8).unwrap();
        assert_eq!(c.finger.trigger_times, c.wrist.trigger_times);
    }

    #[test]
    fn wrist_misses_more_than_finger() {
        let traces = synthetic_traces(&TraceSpec::default(), 200, true, 3);
        let c = compare_release_modalities(FINGER_SIGMA_N, WRIST_SIGMA_N, 10.0, &traces, 9).unwrap();
        assert!(c.wrist.missed_rate() > c.finger.missed_rate());
    }

    #[test]
    fn mismatched_traces_are_rejected() {
        let mut traces = synthetic_traces(&TraceSpec::default(), 2, true, 2);
        traces[1].force.pop();
        assert!(matches!(
            compare_release_modalities(0.12, 1.1, 10.0, &traces, 0),
            Err(HybridError::TraceLength { index: 1, .. })
        ));
    }

    proptest::proptest! {
        #[test]
        fn detector_triggers_at_most_once(seed in 0u64..500, k in 1.0f64..12.0) {
            let tr = add_noise(&synthetic_traces(&TraceSpec::default(), 1, true, seed)[0], 0.12, seed);
            let hits = detect(&tr, 0.12, k, DropMode::Recross).unwrap();
            proptest::prop_assert!(hits.len() <= 1);
        }
    }
}
