//! Parametric forward kinematics for a five-finger coupled-linkage hand.
//!
//! Every finger is a planar two-link chain whose intermediate joint is driven
//! by the proximal joint through a rigid coupling. The whole hand opening is
//! parameterized by one closure scalar `s ∈ [0, 1]` that maps affinely onto
//! each actuator's control range.
//!
//! Hand frame: the palm lies in the `yz` plane and faces `+x`; fingers extend
//! along `+z` and curl toward `+x`; the thumb sits in front of the palm and
//! curls toward `-x`. Lengths are millimetres, angles radians.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kv::{KvError, KvMap};

/// Smallest sweep resolution accepted by the planner.
pub const MIN_PLANNER_RESOLUTION: usize = 64;

/// Minimum width of the 3/4/5-finger plane grasps as listed in the width table (mm).
pub const MULTI_FINGER_MIN_WIDTH_TABLE: f64 = 0.0;
/// Minimum width of the 3/4/5-finger plane grasps as quoted in the running text (mm).
pub const MULTI_FINGER_MIN_WIDTH_TEXT: f64 = 7.0;
/// Maximum width of the 3/4/5-finger plane grasps quoted alongside the text minimum (mm).
pub const MULTI_FINGER_MAX_WIDTH_TEXT: f64 = 100.0;

#[derive(Debug, Error, PartialEq)]
pub enum HandError {
    #[error("unknown finger id `{0}`")]
    UnknownFinger(String),
    #[error("closure scalar {0} outside [0, 1]")]
    ScalarOutOfRange(f64),
    #[error("thumb {axis} {value:.4} rad outside [{min:.4}, {max:.4}]")]
    ThumbAngleOutOfRange { axis: &'static str, value: f64, min: f64, max: f64 },
    #[error("sweep resolution {0} is below 2")]
    ResolutionTooSmall(usize),
    #[error("opposing-tip distance is not strictly decreasing near s = {s:.4} ({prev:.4} -> {next:.4} mm)")]
    NonMonotone { s: f64, prev: f64, next: f64 },
    #[error("invalid linkage parameter `{key}`: {reason}")]
    InvalidParam { key: String, reason: String },
    #[error(transparent)]
    Kv(#[from] KvError),
}

/// Finger identity in fixed order; the index finger is the planning reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Finger {
    Thumb,
    Index,
    Middle,
    Ring,
    Pinky,
}

impl Finger {
    pub const ALL: [Finger; 5] = [Finger::Thumb, Finger::Index, Finger::Middle, Finger::Ring, Finger::Pinky];
    pub const NON_THUMB: [Finger; 4] = [Finger::Index, Finger::Middle, Finger::Ring, Finger::Pinky];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Finger::Thumb => "thumb",
            Finger::Index => "index",
            Finger::Middle => "middle",
            Finger::Ring => "ring",
            Finger::Pinky => "pinky",
        }
    }

    /// Thumb followed by the opposing fingers of an `n`-finger plane grasp.
    pub fn grasp_set(n_fingers: usize) -> &'static [Finger] {
        &Finger::ALL[..n_fingers.clamp(2, 5)]
    }
}

impl fmt::Display for Finger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Finger {
    type Err = HandError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "thumb" | "thumb_bend" | "thumb bend" => Ok(Finger::Thumb),
            "index" => Ok(Finger::Index),
            "middle" => Ok(Finger::Middle),
            "ring" => Ok(Finger::Ring),
            "pinky" | "little" => Ok(Finger::Pinky),
            other => Err(HandError::UnknownFinger(other.to_string())),
        }
    }
}

/// Hand-wide closure state.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct ClosureScalar(f64);

impl ClosureScalar {
    pub const OPEN: ClosureScalar = ClosureScalar(0.0);
    pub const CLOSED: ClosureScalar = ClosureScalar(1.0);

    pub fn new(s: f64) -> Result<Self, HandError> {
        if (0.0..=1.0).contains(&s) {
            Ok(Self(s))
        } else {
            Err(HandError::ScalarOutOfRange(s))
        }
    }

    /// Clamps into `[0, 1]`; NaN maps to fully open.
    pub fn saturating(s: f64) -> Self {
        if s.is_nan() {
            Self(0.0)
        } else {
            Self(s.clamp(0.0, 1.0))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for ClosureScalar {
    type Error = HandError;
    fn try_from(v: f64) -> Result<Self, Self::Error> {
        ClosureScalar::new(v)
    }
}

impl From<ClosureScalar> for f64 {
    fn from(s: ClosureScalar) -> f64 {
        s.0
    }
}

/// One planar two-link chain with a rigid proximal→intermediate coupling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerLinkage {
    pub proximal_length: f64,
    pub intermediate_length: f64,
    /// Intermediate joint rate per unit proximal joint rate.
    pub coupling_ratio_b: f64,
    /// Quadratic deviation of the linkage from a constant ratio; zero at both
    /// ends of the proximal range.
    pub coupling_curvature: f64,
    pub base_position: [f64; 3],
    /// Rest angle of the chain in its curl plane, measured from `+z`.
    pub base_orientation: f64,
    /// Proximal joint range.
    pub joint_range: [f64; 2],
    /// Hard stops of the intermediate joint.
    pub intermediate_range: [f64; 2],
    pub ctrl_range: [f64; 2],
}

impl FingerLinkage {
    pub fn proximal_angle(&self, s: ClosureScalar) -> f64 {
        let [lo, hi] = self.joint_range;
        lo + s.value() * (hi - lo)
    }

    /// Intermediate angle implied by the coupling before clamping.
    pub fn coupled_intermediate(&self, proximal: f64) -> f64 {
        let [lo, hi] = self.joint_range;
        self.coupling_ratio_b * proximal + self.coupling_curvature * (proximal - lo) * (proximal - hi)
    }

    /// Intermediate angle after applying the hard stops, plus a clamp flag.
    pub fn intermediate_angle(&self, proximal: f64) -> (f64, bool) {
        let raw = self.coupled_intermediate(proximal);
        let [lo, hi] = self.intermediate_range;
        let clamped = raw.clamp(lo, hi);
        (clamped, clamped != raw)
    }

    /// Planar tip offset `(u, w)` from the base for explicit joint angles,
    /// where `u` points toward the curl side and `w` along the rest axis.
    pub fn planar_tip(&self, orientation: f64, proximal: f64, intermediate: f64) -> (f64, f64, f64) {
        let a1 = orientation + proximal;
        let a2 = a1 + intermediate;
        let u = self.proximal_length * a1.sin() + self.intermediate_length * a2.sin();
        let w = self.proximal_length * a1.cos() + self.intermediate_length * a2.cos();
        (u, w, a2)
    }

    fn validate(&self, prefix: &str) -> Result<(), HandError> {
        let bad = |field: &str, reason: &str| HandError::InvalidParam {
            key: format!("{prefix}.{field}"),
            reason: reason.to_string(),
        };
        if !(self.proximal_length > 0.0) {
            return Err(bad("proximal_length", "must be > 0"));
        }
        if !(self.intermediate_length > 0.0) {
            return Err(bad("intermediate_length", "must be > 0"));
        }
        if !(self.coupling_ratio_b > 0.0) {
            return Err(bad("coupling_ratio_b", "must be > 0"));
        }
        if !(self.ctrl_range[0] < self.ctrl_range[1]) {
            return Err(bad("ctrl_range", "ctrl_min must be < ctrl_max"));
        }
        if !(self.joint_range[0] < self.joint_range[1]) {
            return Err(bad("joint_range", "min must be < max"));
        }
        if !(self.intermediate_range[0] <= self.intermediate_range[1]) {
            return Err(bad("intermediate_range", "min must be <= max"));
        }
        let all_finite = self
            .base_position
            .iter()
            .chain([self.base_orientation, self.coupling_curvature].iter())
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(bad("base_position", "must be finite"));
        }
        Ok(())
    }
}

/// The thumb chain plus its two positioning axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThumbLinkage {
    pub chain: FingerLinkage,
    /// Rotation of the thumb's curl plane about the hand `z` axis.
    pub yaw_range: [f64; 2],
    /// Offset added to the chain's rest orientation within its curl plane.
    pub pitch_range: [f64; 2],
    pub opposition_yaw: f64,
    pub opposition_pitch: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkageParams {
    pub thumb: ThumbLinkage,
    /// Index, middle, ring, pinky.
    pub fingers: [FingerLinkage; 4],
    /// Distance from the tip point to the contact pad surface.
    pub pad_offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FingertipPose {
    pub position: [f64; 3],
    /// Angle of the distal segment from the hand `+z` axis in the curl plane.
    pub tilt: f64,
    /// Direction of the pad normal (unit, hand frame).
    pub pad_normal: [f64; 3],
    pub intermediate_clamped: bool,
}

impl FingertipPose {
    pub fn xz_distance(&self, other: &FingertipPose) -> f64 {
        let dx = self.position[0] - other.position[0];
        let dz = self.position[2] - other.position[2];
        dx.hypot(dz)
    }

    /// Contact point on the pad surface.
    pub fn pad_point(&self, pad_offset: f64) -> [f64; 3] {
        [
            self.position[0] + pad_offset * self.pad_normal[0],
            self.position[1] + pad_offset * self.pad_normal[1],
            self.position[2] + pad_offset * self.pad_normal[2],
        ]
    }

    fn lerp(&self, other: &FingertipPose, t: f64) -> FingertipPose {
        let mix = |a: f64, b: f64| a + t * (b - a);
        let mut n = [
            mix(self.pad_normal[0], other.pad_normal[0]),
            mix(self.pad_normal[1], other.pad_normal[1]),
            mix(self.pad_normal[2], other.pad_normal[2]),
        ];
        let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        if norm > 0.0 {
            n.iter_mut().for_each(|c| *c /= norm);
        }
        FingertipPose {
            position: [
                mix(self.position[0], other.position[0]),
                mix(self.position[1], other.position[1]),
                mix(self.position[2], other.position[2]),
            ],
            tilt: mix(self.tilt, other.tilt),
            pad_normal: n,
            intermediate_clamped: self.intermediate_clamped || other.intermediate_clamped,
        }
    }
}

impl Default for LinkageParams {
    /// Parameter set tuned offline so that the opposing thumb–index pair spans
    /// 110 mm open and closes to ~1 mm, the index tip turns through 49°, the
    /// pinch centre shifts 12 mm laterally and 7 mm along the finger axis, and
    /// the middle finger limits multi-finger grasps to 100 mm.
    fn default() -> Self {
        let finger = |l1: f64, l2: f64, base: [f64; 3], orient: f64| FingerLinkage {
            proximal_length: l1,
            intermediate_length: l2,
            coupling_ratio_b: 0.8589,
            coupling_curvature: 1.5,
            base_position: base,
            base_orientation: orient,
            joint_range: [0.0, 0.4601],
            intermediate_range: [0.0, 0.45],
            ctrl_range: [0.0, 1000.0],
        };
        LinkageParams {
            thumb: ThumbLinkage {
                chain: FingerLinkage {
                    proximal_length: 56.2774,
                    intermediate_length: 42.6629,
                    coupling_ratio_b: 0.2434,
                    coupling_curvature: 0.0,
                    base_position: [74.6986, 14.0, -33.4792],
                    base_orientation: -0.3534,
                    joint_range: [0.0, 0.6162],
                    intermediate_range: [0.0, 0.3],
                    ctrl_range: [0.0, 1000.0],
                },
                yaw_range: [-0.35, 0.9],
                pitch_range: [-0.3, 0.3],
                opposition_yaw: 0.0,
                opposition_pitch: 0.0,
            },
            fingers: [
                finger(46.0, 28.551, [0.0, 27.0, 0.0], 0.0),
                finger(50.0, 32.0, [0.0, 8.0, 4.0], 0.1507),
                finger(47.0, 30.0, [0.0, -11.0, 1.0], 0.0856),
                finger(40.0, 26.0, [0.0, -29.0, -6.0], 0.0295),
            ],
            pad_offset: 4.0,
        }
    }
}

impl LinkageParams {
    pub fn validate(&self) -> Result<(), HandError> {
        self.thumb.chain.validate("thumb")?;
        for (f, link) in Finger::NON_THUMB.iter().zip(&self.fingers) {
            link.validate(f.name())?;
        }
        let t = &self.thumb;
        if !(t.yaw_range[0] <= t.opposition_yaw && t.opposition_yaw <= t.yaw_range[1]) {
            return Err(HandError::InvalidParam {
                key: "thumb.opposition_yaw".into(),
                reason: "outside yaw_range".into(),
            });
        }
        if !(t.pitch_range[0] <= t.opposition_pitch && t.opposition_pitch <= t.pitch_range[1]) {
            return Err(HandError::InvalidParam {
                key: "thumb.opposition_pitch".into(),
                reason: "outside pitch_range".into(),
            });
        }
        if !(self.pad_offset >= 0.0) {
            return Err(HandError::InvalidParam { key: "pad_offset".into(), reason: "must be >= 0".into() });
        }
        Ok(())
    }

    pub fn linkage(&self, finger: Finger) -> &FingerLinkage {
        match finger {
            Finger::Thumb => &self.thumb.chain,
            other => &self.fingers[other.index() - 1],
        }
    }

    pub fn linkage_mut(&mut self, finger: Finger) -> &mut FingerLinkage {
        match finger {
            Finger::Thumb => &mut self.thumb.chain,
            other => &mut self.fingers[other.index() - 1],
        }
    }

    /// Flat `key = value` serialization.
    pub fn to_kv(&self) -> String {
        let mut out = String::from("# coupled-linkage hand parameters (mm, rad, raw ctrl units)\n");
        for f in Finger::ALL {
            let l = self.linkage(f);
            let p = f.name();
            out.push_str(&format!("{p}.proximal_length = {}\n", l.proximal_length));
            out.push_str(&format!("{p}.intermediate_length = {}\n", l.intermediate_length));
            out.push_str(&format!("{p}.coupling_ratio_b = {}\n", l.coupling_ratio_b));
            out.push_str(&format!("{p}.coupling_curvature = {}\n", l.coupling_curvature));
            out.push_str(&format!("{p}.base_position = {}\n", join(&l.base_position)));
            out.push_str(&format!("{p}.base_orientation = {}\n", l.base_orientation));
            out.push_str(&format!("{p}.joint_range = {}\n", join(&l.joint_range)));
            out.push_str(&format!("{p}.intermediate_range = {}\n", join(&l.intermediate_range)));
            out.push_str(&format!("{p}.ctrl_range = {}\n", join(&l.ctrl_range)));
        }
        let t = &self.thumb;
        out.push_str(&format!("thumb.yaw_range = {}\n", join(&t.yaw_range)));
        out.push_str(&format!("thumb.pitch_range = {}\n", join(&t.pitch_range)));
        out.push_str(&format!("thumb.opposition_yaw = {}\n", t.opposition_yaw));
        out.push_str(&format!("thumb.opposition_pitch = {}\n", t.opposition_pitch));
        out.push_str(&format!("pad_offset = {}\n", self.pad_offset));
        out
    }

    /// Parses a key-value file; keys that are absent keep their default value.
    pub fn from_kv(text: &str) -> Result<Self, HandError> {
        let map = KvMap::parse(text)?;
        let mut params = LinkageParams::default();
        for f in Finger::ALL {
            let p = f.name();
            let l = params.linkage_mut(f);
            map.read_f64(&format!("{p}.proximal_length"), &mut l.proximal_length)?;
            map.read_f64(&format!("{p}.intermediate_length"), &mut l.intermediate_length)?;
            map.read_f64(&format!("{p}.coupling_ratio_b"), &mut l.coupling_ratio_b)?;
            map.read_f64(&format!("{p}.coupling_curvature"), &mut l.coupling_curvature)?;
            map.read_array(&format!("{p}.base_position"), &mut l.base_position)?;
            map.read_f64(&format!("{p}.base_orientation"), &mut l.base_orientation)?;
            map.read_array(&format!("{p}.joint_range"), &mut l.joint_range)?;
            map.read_array(&format!("{p}.intermediate_range"), &mut l.intermediate_range)?;
            map.read_array(&format!("{p}.ctrl_range"), &mut l.ctrl_range)?;
        }
        let t = &mut params.thumb;
        map.read_array("thumb.yaw_range", &mut t.yaw_range)?;
        map.read_array("thumb.pitch_range", &mut t.pitch_range)?;
        map.read_f64("thumb.opposition_yaw", &mut t.opposition_yaw)?;
        map.read_f64("thumb.opposition_pitch", &mut t.opposition_pitch)?;
        map.read_f64("pad_offset", &mut params.pad_offset)?;
        params.validate()?;
        Ok(params)
    }
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
}

/// Affine map of the closure scalar onto the finger's control range.
pub fn ctrl_from_scalar(params: &LinkageParams, finger: Finger, s: ClosureScalar) -> f64 {
    let [lo, hi] = params.linkage(finger).ctrl_range;
    if s.value() == 1.0 {
        return hi;
    }
    lo + s.value() * (hi - lo)
}

/// Same as [`ctrl_from_scalar`] for a finger named at runtime.
pub fn ctrl_from_scalar_named(params: &LinkageParams, finger: &str, s: ClosureScalar) -> Result<f64, HandError> {
    let f: Finger = finger.parse()?;
    Ok(ctrl_from_scalar(params, f, s))
}

/// Fingertip pose of a non-thumb finger, or of the thumb at its opposition pose.
pub fn fk_fingertip(params: &LinkageParams, finger: Finger, s: ClosureScalar) -> FingertipPose {
    match finger {
        Finger::Thumb => thumb_pose(params, params.thumb.opposition_yaw, params.thumb.opposition_pitch, s),
        _ => {
            let link = params.linkage(finger);
            let proximal = link.proximal_angle(s);
            let (intermediate, clamped) = link.intermediate_angle(proximal);
            finger_pose_from_joints(link, proximal, intermediate, clamped)
        }
    }
}

pub(crate) fn finger_pose_from_joints(
    link: &FingerLinkage,
    proximal: f64,
    intermediate: f64,
    clamped: bool,
) -> FingertipPose {
    let (u, w, tilt) = link.planar_tip(link.base_orientation, proximal, intermediate);
    let b = link.base_position;
    FingertipPose {
        position: [b[0] + u, b[1], b[2] + w],
        tilt,
        pad_normal: [tilt.cos(), 0.0, -tilt.sin()],
        intermediate_clamped: clamped,
    }
}

pub(crate) fn thumb_pose_from_joints(
    thumb: &ThumbLinkage,
    yaw: f64,
    pitch: f64,
    proximal: f64,
    intermediate: f64,
    clamped: bool,
) -> FingertipPose {
    let link = &thumb.chain;
    let (u, w, tilt) = link.planar_tip(link.base_orientation + pitch, proximal, intermediate);
    // The thumb curls toward -x; yaw swings its curl plane about z.
    let (sy, cy) = yaw.sin_cos();
    let b = link.base_position;
    let nx = -tilt.cos();
    FingertipPose {
        position: [b[0] - u * cy, b[1] - u * sy, b[2] + w],
        tilt,
        pad_normal: [nx * cy, nx * sy, -tilt.sin()],
        intermediate_clamped: clamped,
    }
}

fn thumb_pose(params: &LinkageParams, yaw: f64, pitch: f64, s: ClosureScalar) -> FingertipPose {
    let link = &params.thumb.chain;
    let proximal = link.proximal_angle(s);
    let (intermediate, clamped) = link.intermediate_angle(proximal);
    thumb_pose_from_joints(&params.thumb, yaw, pitch, proximal, intermediate, clamped)
}

/// Thumb tip pose for explicit yaw and pitch.
pub fn thumb_fk(params: &LinkageParams, yaw: f64, pitch: f64, s: ClosureScalar) -> Result<FingertipPose, HandError> {
    let t = &params.thumb;
    if !(t.yaw_range[0] <= yaw && yaw <= t.yaw_range[1]) {
        return Err(HandError::ThumbAngleOutOfRange {
            axis: "yaw",
            value: yaw,
            min: t.yaw_range[0],
            max: t.yaw_range[1],
        });
    }
    if !(t.pitch_range[0] <= pitch && pitch <= t.pitch_range[1]) {
        return Err(HandError::ThumbAngleOutOfRange {
            axis: "pitch",
            value: pitch,
            min: t.pitch_range[0],
            max: t.pitch_range[1],
        });
    }
    Ok(thumb_pose(params, yaw, pitch, s))
}

/// Axis-aligned bounds of a set of points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds3 {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Bounds3 {
    pub fn extent(&self) -> [f64; 3] {
        [self.max[0] - self.min[0], self.max[1] - self.min[1], self.max[2] - self.min[2]]
    }
}

/// Bounding box of the thumb tip over a `grid × grid × grid` lattice of
/// yaw, pitch and closure.
pub fn thumb_workspace(params: &LinkageParams, grid: usize) -> Bounds3 {
    let g = grid.max(2);
    let t = &params.thumb;
    let lerp = |r: [f64; 2], i: usize| r[0] + (r[1] - r[0]) * i as f64 / (g - 1) as f64;
    let mut min = [f64::INFINITY; 3];
    let mut max = [f64::NEG_INFINITY; 3];
    for i in 0..g {
        for j in 0..g {
            for k in 0..g {
                let s = ClosureScalar::saturating(k as f64 / (g - 1) as f64);
                let p = thumb_pose(params, lerp(t.yaw_range, i), lerp(t.pitch_range, j), s).position;
                for a in 0..3 {
                    min[a] = min[a].min(p[a]);
                    max[a] = max[a].max(p[a]);
                }
            }
        }
    }
    Bounds3 { min, max }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSample {
    pub s: f64,
    /// Poses in [`Finger::ALL`] order; the thumb is at its opposition pose.
    pub poses: [FingertipPose; 5],
}

/// Offline forward-kinematics sweep over the closure scalar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    samples: Vec<SweepSample>,
    pad_offset: f64,
    params: LinkageParams,
    /// True when the thumb–index distance decreased at every sample.
    pub monotone: bool,
}

pub fn build_sweep_table(params: &LinkageParams, resolution: usize) -> Result<SweepTable, HandError> {
    if resolution < 2 {
        return Err(HandError::ResolutionTooSmall(resolution));
    }
    let samples: Vec<SweepSample> = (0..resolution)
        .map(|i| {
            let s = if i + 1 == resolution { 1.0 } else { i as f64 / (resolution - 1) as f64 };
            let cs = ClosureScalar::saturating(s);
            SweepSample { s, poses: Finger::ALL.map(|f| fk_fingertip(params, f, cs)) }
        })
        .collect();
    let d =
        |sample: &SweepSample| sample.poses[Finger::Thumb.index()].xz_distance(&sample.poses[Finger::Index.index()]);
    for pair in samples.windows(2) {
        let (prev, next) = (d(&pair[0]), d(&pair[1]));
        if !(next < prev) {
            return Err(HandError::NonMonotone { s: pair[1].s, prev, next });
        }
    }
    Ok(SweepTable { samples, pad_offset: params.pad_offset, params: params.clone(), monotone: true })
}

impl SweepTable {
    pub fn resolution(&self) -> usize {
        self.samples.len()
    }

    pub fn samples(&self) -> &[SweepSample] {
        &self.samples
    }

    pub fn pad_offset(&self) -> f64 {
        self.pad_offset
    }

    /// Parameters the table was generated from.
    pub fn params(&self) -> &LinkageParams {
        &self.params
    }

    /// Piecewise-linear interpolation of one finger's pose.
    pub fn pose(&self, finger: Finger, s: ClosureScalar) -> FingertipPose {
        let s = s.value();
        let n = self.samples.len();
        let scaled = s * (n - 1) as f64;
        let lo = (scaled.floor() as usize).min(n - 2);
        let t = scaled - lo as f64;
        let a = &self.samples[lo].poses[finger.index()];
        let b = &self.samples[lo + 1].poses[finger.index()];
        if t == 0.0 {
            *a
        } else if t == 1.0 {
            *b
        } else {
            a.lerp(b, t)
        }
    }

    pub fn poses(&self, s: ClosureScalar) -> [FingertipPose; 5] {
        Finger::ALL.map(|f| self.pose(f, s))
    }

    /// Interpolated xz distance between the thumb and one finger at a common `s`.
    pub fn pair_distance(&self, finger: Finger, s: ClosureScalar) -> f64 {
        self.pose(Finger::Thumb, s).xz_distance(&self.pose(finger, s))
    }

    /// Writes `s, finger_id, x_mm, y_mm, z_mm, tilt_rad` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,finger_id,x_mm,y_mm,z_mm,tilt_rad\n");
        for sample in &self.samples {
            for f in Finger::ALL {
                let p = &sample.poses[f.index()];
                out.push_str(&format!(
                    "{:.6},{},{:.6},{:.6},{:.6},{:.6}\n",
                    sample.s, f, p.position[0], p.position[1], p.position[2], p.tilt
                ));
            }
        }
        out
    }
}

/// Thumb-to-finger distance in the xz plane for a finger pair, interpolated from the table.
pub fn xz_distance(table: &SweepTable, s: ClosureScalar, pair: (Finger, Finger)) -> f64 {
    table.pose(pair.0, s).xz_distance(&table.pose(pair.1, s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn s(v: f64) -> ClosureScalar {
        ClosureScalar::new(v).unwrap()
    }

    #[test]
    fn ctrl_endpoints_and_midpoint() {
        let mut p = LinkageParams::default();
        assert_eq!(ctrl_from_scalar(&p, Finger::Index, s(0.0)), 0.0);
        assert_eq!(ctrl_from_scalar(&p, Finger::Index, s(1.0)), 1000.0);
        assert_eq!(ctrl_from_scalar(&p, Finger::Index, s(0.5)), 500.0);
        p.linkage_mut(Finger::Middle).ctrl_range = [100.0, 900.0];
        // 100 + 0.25 * 800
        assert_eq!(ctrl_from_scalar(&p, Finger::Middle, s(0.25)), 300.0);
        assert_eq!(ctrl_from_scalar(&p, Finger::Middle, s(1.0)), 900.0);
    }

    #[test]
    fn unknown_finger_is_rejected() {
        let p = LinkageParams::default();
        assert_eq!(ctrl_from_scalar_named(&p, "sixth", s(0.2)), Err(HandError::UnknownFinger("sixth".into())));
        assert_eq!(ctrl_from_scalar_named(&p, "Ring", s(0.2)).unwrap(), 200.0);
    }

    #[test]
    fn closure_scalar_validates() {
        assert!(ClosureScalar::new(-0.01).is_err());
        assert!(ClosureScalar::new(1.01).is_err());
        assert!(ClosureScalar::new(f64::NAN).is_err());
        assert_eq!(ClosureScalar::saturating(3.0).value(), 1.0);
    }

    #[test]
    fn open_index_is_a_straight_chain() {
        let p = LinkageParams::default();
        let pose = fk_fingertip(&p, Finger::Index, s(0.0));
        let l = p.linkage(Finger::Index);
        let b = l.base_position;
        assert_abs_diff_eq!(pose.position[0], b[0], epsilon = 1e-12);
        assert_abs_diff_eq!(pose.position[2], b[2] + l.proximal_length + l.intermediate_length, epsilon = 1e-12);
        assert_eq!(pose.tilt, 0.0);
    }

    #[test]
    fn closed_index_moves_to_palm_side() {
        let p = LinkageParams::default();
        let open = fk_fingertip(&p, Finger::Index, s(0.0));
        let closed = fk_fingertip(&p, Finger::Index, s(1.0));
        assert!(closed.position[0] > open.position[0]);
        assert!(closed.position[2] < open.position[2]);
    }

    #[test]
    fn intermediate_clamps_at_hard_stop() {
        let mut p = LinkageParams::default();
        p.linkage_mut(Finger::Index).intermediate_range = [0.0, 0.2];
        let closed = fk_fingertip(&p, Finger::Index, s(1.0));
        assert!(closed.intermediate_clamped);
        let open = fk_fingertip(&p, Finger::Index, s(0.0));
        assert!(!open.intermediate_clamped);
    }

    #[test]
    fn thumb_reference_pose_and_range_checks() {
        let p = LinkageParams::default();
        let reference = thumb_fk(&p, 0.0, 0.0, s(0.0)).unwrap();
        // open thumb at the opposition pose, frozen from the default geometry
        assert_abs_diff_eq!(reference.position[0], 108.940_817, epsilon = 1e-5);
        assert_abs_diff_eq!(reference.position[2], 59.346_731, epsilon = 1e-5);
        assert_abs_diff_eq!(reference.position[1], 14.0, epsilon = 1e-12);
        assert!(matches!(thumb_fk(&p, 2.0, 0.0, s(0.0)), Err(HandError::ThumbAngleOutOfRange { axis: "yaw", .. })));
        assert!(matches!(thumb_fk(&p, 0.0, -0.5, s(0.0)), Err(HandError::ThumbAngleOutOfRange { axis: "pitch", .. })));
    }

    #[test]
    fn resolution_two_holds_the_endpoints() {
        let p = LinkageParams::default();
        let t = build_sweep_table(&p, 2).unwrap();
        assert_eq!(t.resolution(), 2);
        assert_eq!(t.samples()[0].poses[1], fk_fingertip(&p, Finger::Index, s(0.0)));
        assert_eq!(t.samples()[1].poses[1], fk_fingertip(&p, Finger::Index, s(1.0)));
        assert!(build_sweep_table(&p, 1).is_err());
    }

    #[test]
    fn non_monotone_geometry_is_reported() {
        let mut p = LinkageParams::default();
        // thumb curling away from the index
        p.thumb.chain.base_position = [-60.0, 14.0, -33.0];
        assert!(matches!(build_sweep_table(&p, 64), Err(HandError::NonMonotone { .. })));
    }

    #[test]
    fn kv_round_trip_preserves_params() {
        let p = LinkageParams::default();
        let back = LinkageParams::from_kv(&p.to_kv()).unwrap();
        assert_eq!(p, back);
        let partial = LinkageParams::from_kv("index.proximal_length = 50\n").unwrap();
        assert_eq!(partial.linkage(Finger::Index).proximal_length, 50.0);
        assert!(LinkageParams::from_kv("index.proximal_length = -1\n").is_err());
    }

    #[test]
    fn csv_export_has_one_row_per_finger_sample() {
        let t = build_sweep_table(&LinkageParams::default(), 4).unwrap();
        let csv = t.to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "s,finger_id,x_mm,y_mm,z_mm,tilt_rad");
        assert_eq!(lines.len(), 1 + 4 * 5);
        assert!(lines[2].starts_with("0.000000,index,"));
    }
}
