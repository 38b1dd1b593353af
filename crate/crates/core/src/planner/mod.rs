//! Width-to-grasp solving.
//!
//! The analytic path root-finds the closure scalar on the offline sweep and
//! tilts the hand so the thumb and the opposing fingers share a grasp plane.
//! The QP path re-derives the same configuration by differential IK and is
//! kept as a cross-check.

pub mod brent;
mod qp;

pub use brent::{brent_root, Root, RootError};
pub use qp::{solve_width_qp, track_targets, QpRun, QpSettings, DEFAULT_STEP_GAIN};

use crate::bench::Strategy;
use crate::hand_model::{
    ctrl_from_scalar, finger_pose_from_joints, thumb_pose_from_joints, ClosureScalar, Finger, FingertipPose, HandError,
    LinkageParams, SweepTable,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Root tolerance on the closure scalar.
pub const SCALAR_TOLERANCE: f64 = 1e-12;

/// Joint-space distance (rad, max over joints) within which the QP and the
/// analytic configuration are considered to agree.
pub const JOINT_AGREEMENT_TOLERANCE: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum PlannerError {
    #[error("width {width} mm outside the reachable range [{min:.1}, {max:.1}] mm for a {n}-finger grasp")]
    WidthOutOfRange { width: f64, n: usize, min: f64, max: f64 },
    #[error("finger count {0} outside [2, 5]")]
    FingerCount(usize),
    #[error("degenerate offset: d_x and d_z are both zero")]
    DegenerateOffset,
    #[error("invalid solver settings: {0}")]
    Settings(String),
    #[error(transparent)]
    Root(#[from] RootError),
    #[error(transparent)]
    Hand(#[from] HandError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspSpec {
    pub width_mm: f64,
    pub n_fingers: usize,
    pub force_target_n: f64,
    pub strategy: Option<Strategy>,
}

impl GraspSpec {
    /// Plain width request at the default 6 N hold target.
    pub fn new(width_mm: f64, n_fingers: usize) -> Self {
        GraspSpec { width_mm, n_fingers, force_target_n: 6.0, strategy: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Analytic,
    Qp,
}

impl std::fmt::Display for Solver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Solver::Analytic => "analytic",
            Solver::Qp => "qp",
        })
    }
}

/// Joint angles of the whole hand in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandConfig {
    pub thumb_yaw: f64,
    pub thumb_pitch: f64,
    /// `(proximal, intermediate)` per finger in [`Finger::ALL`] order.
    pub joints: [[f64; 2]; 5],
}

impl HandConfig {
    /// Fully open hand with the thumb at its opposition pose.
    pub fn open(params: &LinkageParams) -> Self {
        Self::at_scalars(params, [0.0; 5])
    }

    /// Configuration where each finger sits at its own closure scalar.
    pub fn at_scalars(params: &LinkageParams, s: [f64; 5]) -> Self {
        let joints = Finger::ALL.map(|f| {
            let link = params.linkage(f);
            let prox = link.proximal_angle(ClosureScalar::saturating(s[f.index()]));
            [prox, link.intermediate_angle(prox).0]
        });
        HandConfig { thumb_yaw: params.thumb.opposition_yaw, thumb_pitch: params.thumb.opposition_pitch, joints }
    }

    pub fn tip(&self, params: &LinkageParams, finger: Finger) -> FingertipPose {
        let [prox, int] = self.joints[finger.index()];
        match finger {
            Finger::Thumb => thumb_pose_from_joints(&params.thumb, self.thumb_yaw, self.thumb_pitch, prox, int, false),
            _ => finger_pose_from_joints(params.linkage(finger), prox, int, false),
        }
    }

    /// Largest absolute joint difference over the given fingers (thumb
    /// yaw and pitch included when the thumb is listed).
    pub fn distance(&self, other: &HandConfig, fingers: &[Finger]) -> f64 {
        let mut d: f64 = 0.0;
        for &f in fingers {
            let (a, b) = (self.joints[f.index()], other.joints[f.index()]);
            d = d.max((a[0] - b[0]).abs()).max((a[1] - b[1]).abs());
            if f == Finger::Thumb {
                d = d.max((self.thumb_yaw - other.thumb_yaw).abs()).max((self.thumb_pitch - other.thumb_pitch).abs());
            }
        }
        d
    }
}

/// Raw actuator commands for the thumb's three degrees of freedom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThumbCtrls {
    pub yaw: f64,
    pub pitch: f64,
    pub bend: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TipTarget {
    pub finger: Finger,
    pub position: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspSolution {
    pub width_mm: f64,
    pub n_fingers: usize,
    pub s_star: ClosureScalar,
    /// Closure scalar of the thumb's own solve (equals `s_star` for pinches).
    pub thumb_s: f64,
    pub theta_star: f64,
    pub thumb_ctrls: ThumbCtrls,
    /// Raw command per non-thumb finger; fingers outside the grasp stay open.
    pub finger_ctrls: [(Finger, f64); 4],
    pub z_span: f64,
    pub tip_error: f64,
    pub solver: Solver,
    pub iterations: usize,
    pub config: HandConfig,
    pub targets: Vec<TipTarget>,
    /// Set when the stacked QP matrix was rank-deficient and only the damping
    /// kept the step defined.
    pub regularized: bool,
}

impl GraspSolution {
    pub fn fingers(&self) -> &'static [Finger] {
        Finger::grasp_set(self.n_fingers)
    }

    /// Export record with the public field names.
    pub fn to_json(&self) -> serde_json::Value {
        let mut ctrls = serde_json::Map::new();
        ctrls.insert("thumb_yaw".into(), self.thumb_ctrls.yaw.into());
        ctrls.insert("thumb_pitch".into(), self.thumb_ctrls.pitch.into());
        ctrls.insert("thumb_bend".into(), self.thumb_ctrls.bend.into());
        for (f, c) in self.finger_ctrls {
            ctrls.insert(f.name().into(), c.into());
        }
        serde_json::json!({
            "W_mm": self.width_mm,
            "n": self.n_fingers,
            "s_star": self.s_star.value(),
            "theta_star_rad": self.theta_star,
            "ctrls": ctrls,
            "z_span_mm": self.z_span,
            "tip_error_mm": self.tip_error,
            "solver": self.solver,
            "iterations": self.iterations,
        })
    }
}

/// Tilt about `y` that brings `d = T − G` into the grasp plane.
pub fn tilt_from_d(d: [f64; 3]) -> Result<f64, PlannerError> {
    if d[0] == 0.0 && d[2] == 0.0 {
        return Err(PlannerError::DegenerateOffset);
    }
    Ok((-d[2]).atan2(d[0]))
}

/// Height of a point after rotating the hand frame by `theta` about `y`.
pub fn rotated_height(p: [f64; 3], theta: f64) -> f64 {
    p[0] * theta.sin() + p[2] * theta.cos()
}

/// Mean absolute deviation of `points` from the plane `z' = plane_z` in the
/// frame tilted by `theta`.
pub fn z_span(points: &[[f64; 3]], theta: f64, plane_z: f64) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    points.iter().map(|&p| (rotated_height(p, theta) - plane_z).abs()).sum::<f64>() / points.len() as f64
}

fn check_fingers(n: usize) -> Result<(), PlannerError> {
    if (2..=5).contains(&n) {
        Ok(())
    } else {
        Err(PlannerError::FingerCount(n))
    }
}

/// Widths every finger in the `n`-finger set can span against the thumb.
pub fn reachable_range(table: &SweepTable, n_fingers: usize) -> Result<(f64, f64), PlannerError> {
    check_fingers(n_fingers)?;
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for &f in Finger::grasp_set(n_fingers).iter().filter(|&&f| f != Finger::Thumb) {
        lo = lo.max(table.pair_distance(f, ClosureScalar::CLOSED));
        hi = hi.min(table.pair_distance(f, ClosureScalar::OPEN));
    }
    Ok((lo, hi))
}

fn centroid(points: impl Iterator<Item = [f64; 3]>) -> [f64; 3] {
    let mut sum = [0.0; 3];
    let mut n = 0.0;
    for p in points {
        for k in 0..3 {
            sum[k] += p[k];
        }
        n += 1.0;
    }
    sum.map(|v| v / n)
}

/// Metrics computed from a configuration: `(theta, z_span, tip_error)`.
fn config_metrics(
    params: &LinkageParams,
    config: &HandConfig,
    fingers: &[Finger],
    targets: &[TipTarget],
) -> Result<(f64, f64, f64), PlannerError> {
    let poses: Vec<(Finger, FingertipPose)> = fingers.iter().map(|&f| (f, config.tip(params, f))).collect();
    let thumb = poses[0].1.position;
    let g = centroid(poses[1..].iter().map(|(_, p)| p.position));
    let theta = tilt_from_d([thumb[0] - g[0], thumb[1] - g[1], thumb[2] - g[2]])?;
    let plane = rotated_height(thumb, theta);
    let pads: Vec<[f64; 3]> = poses.iter().map(|(_, p)| p.pad_point(params.pad_offset)).collect();
    let span = z_span(&pads, theta, plane);
    let mut err = 0.0;
    for t in targets {
        let p = poses.iter().find(|(f, _)| *f == t.finger).map(|(_, p)| p.position).unwrap_or(t.position);
        err += dist(p, t.position);
    }
    let tip_error = if targets.is_empty() { 0.0 } else { err / targets.len() as f64 };
    Ok((theta, span, tip_error))
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn thumb_ctrls(params: &LinkageParams, config: &HandConfig, thumb_s: f64) -> ThumbCtrls {
    let t = &params.thumb;
    let [c0, c1] = t.chain.ctrl_range;
    let map = |v: f64, [lo, hi]: [f64; 2]| c0 + (v - lo) / (hi - lo) * (c1 - c0);
    ThumbCtrls {
        yaw: map(config.thumb_yaw, t.yaw_range),
        pitch: map(config.thumb_pitch, t.pitch_range),
        bend: ctrl_from_scalar(params, Finger::Thumb, ClosureScalar::saturating(thumb_s)),
    }
}

fn finger_ctrls(params: &LinkageParams, fingers: &[Finger], s: f64) -> [(Finger, f64); 4] {
    Finger::NON_THUMB.map(|f| {
        let scalar = if fingers.contains(&f) { s } else { 0.0 };
        (f, ctrl_from_scalar(params, f, ClosureScalar::saturating(scalar)))
    })
}

/// The analytic configuration: shared `s*` for the opposing fingers, an
/// independent thumb closure, and the analytic fingertip targets.
fn analytic_config(table: &SweepTable, spec: &GraspSpec) -> Result<(f64, f64, HandConfig), PlannerError> {
    check_fingers(spec.n_fingers)?;
    let (min, max) = reachable_range(table, spec.n_fingers)?;
    let w = spec.width_mm;
    if !(w.is_finite() && w >= min && w <= max) {
        return Err(PlannerError::WidthOutOfRange { width: w, n: spec.n_fingers, min, max });
    }
    let fingers = Finger::grasp_set(spec.n_fingers);
    let s_star = solve_scalar(|s| table.pair_distance(Finger::Index, ClosureScalar::saturating(s)) - w)?;
    let thumb_s = if spec.n_fingers == 2 {
        s_star
    } else {
        let g = centroid(fingers[1..].iter().map(|&f| table.pose(f, ClosureScalar::saturating(s_star)).position));
        let reach = |s: f64| {
            let t = table.pose(Finger::Thumb, ClosureScalar::saturating(s)).position;
            ((t[0] - g[0]).powi(2) + (t[2] - g[2]).powi(2)).sqrt() - w
        };
        // Outside the bracket the nearest endpoint is the best the thumb can do.
        if reach(0.0) <= 0.0 {
            0.0
        } else if reach(1.0) >= 0.0 {
            1.0
        } else {
            solve_scalar(reach)?
        }
    };
    let mut scalars = [0.0; 5];
    scalars[Finger::Thumb.index()] = thumb_s;
    for &f in &fingers[1..] {
        scalars[f.index()] = s_star;
    }
    Ok((s_star, thumb_s, HandConfig::at_scalars(table.params(), scalars)))
}

/// Root of a decreasing function of the closure scalar; on a flat stretch
/// the smallest root wins.
fn solve_scalar(f: impl Fn(f64) -> f64) -> Result<f64, PlannerError> {
    let root = brent_root(&f, 0.0, 1.0, SCALAR_TOLERANCE)?;
    if root.fx != 0.0 {
        return Ok(root.x);
    }
    // Exact zero: walk left while the function stays at zero.
    let (mut lo, mut hi) = (0.0, root.x);
    if f(lo) == 0.0 {
        return Ok(lo);
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if f(mid) == 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

pub fn solve_width_analytic(table: &SweepTable, spec: &GraspSpec) -> Result<GraspSolution, PlannerError> {
    let params = table.params();
    let (s_star, thumb_s, config) = analytic_config(table, spec)?;
    let fingers = Finger::grasp_set(spec.n_fingers);
    let targets: Vec<TipTarget> =
        fingers.iter().map(|&f| TipTarget { finger: f, position: config.tip(params, f).position }).collect();
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
        solver: Solver::Analytic,
        iterations: 0,
        config,
        targets,
        regularized: false,
    })
}

/// Recomputes `(z_span, tip_error)` from forward kinematics of the solution's
/// configuration.
pub fn grasp_quality(solution: &GraspSolution, table: &SweepTable) -> Result<(f64, f64), PlannerError> {
    let (_, span, err) = config_metrics(table.params(), &solution.config, solution.fingers(), &solution.targets)?;
    Ok((span, err))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hand_model::build_sweep_table;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
    use std::sync::OnceLock;

    fn table() -> &'static SweepTable {
        static T: OnceLock<SweepTable> = OnceLock::new();
        T.get_or_init(|| build_sweep_table(&LinkageParams::default(), 512).unwrap())
    }

    #[test]
    fn tilt_examples() {
        assert_eq!(tilt_from_d([55.0, 3.0, 0.0]).unwrap(), 0.0);
        assert_abs_diff_eq!(tilt_from_d([0.0, 0.0, -55.0]).unwrap(), FRAC_PI_2, epsilon = 1e-15);
        assert_abs_diff_eq!(tilt_from_d([10.0, 0.0, -10.0]).unwrap(), FRAC_PI_4, epsilon = 1e-15);
        assert_eq!(tilt_from_d([0.0, 4.0, 0.0]), Err(PlannerError::DegenerateOffset));
    }

    #[test]
    fn tilt_levels_the_offset() {
        let d = [37.0, 0.0, -21.0];
        let theta = tilt_from_d(d).unwrap();
        assert_abs_diff_eq!(rotated_height(d, theta), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn z_span_of_synthetic_points() {
        let flat = [[0.0, 0.0, 5.0], [10.0, 3.0, 5.0], [-4.0, 1.0, 5.0]];
        assert_eq!(z_span(&flat, 0.0, 5.0), 0.0);
        let mut bumped = flat;
        bumped[1][2] += 2.0;
        assert_abs_diff_eq!(z_span(&bumped, 0.0, 5.0) - z_span(&flat, 0.0, 5.0), 2.0 / 3.0, epsilon = 1e-12);
        // deviation in both directions counts
        let mixed = [[0.0, 0.0, 4.0], [0.0, 0.0, 6.0]];
        assert_eq!(z_span(&mixed, 0.0, 5.0), 1.0);
    }

    #[test]
    fn reachable_ranges_on_defaults() {
        let t = table();
        let (lo2, hi2) = reachable_range(t, 2).unwrap();
        assert!(lo2.abs() <= 2.0 && (hi2 - 110.0).abs() <= 2.0, "{lo2} {hi2}");
        for n in 3..=5 {
            let (lo, hi) = reachable_range(t, n).unwrap();
            assert!((hi - 100.0).abs() <= 2.0, "n={n}: {hi}");
            assert!(lo2 <= lo);
        }
        assert_eq!(reachable_range(t, 1), Err(PlannerError::FingerCount(1)));
        assert_eq!(reachable_range(t, 6), Err(PlannerError::FingerCount(6)));
    }

    #[test]
    fn open_endpoint_gives_zero_scalar() {
        let t = table();
        let (_, hi) = reachable_range(t, 2).unwrap();
        let sol = solve_width_analytic(t, &GraspSpec::new(hi, 2)).unwrap();
        assert_abs_diff_eq!(sol.s_star.value(), 0.0, epsilon = 1e-9);
        assert_eq!(sol.tip_error, 0.0);
    }

    #[test]
    fn width_out_of_range_echoes_the_range() {
        let err = solve_width_analytic(table(), &GraspSpec::new(200.0, 2)).unwrap_err();
        match err {
            PlannerError::WidthOutOfRange { width, n, min, max } => {
                assert_eq!((width, n), (200.0, 2));
                assert!(min < 2.0 && (max - 110.0).abs() < 2.0);
            }
            other => panic!("{other:?}"),
        }
        assert!(solve_width_analytic(table(), &GraspSpec::new(f64::NAN, 2)).is_err());
    }

    #[test]
    fn pinch_solution_spans_the_width_in_the_plane() {
        let t = table();
        let sol = solve_width_analytic(t, &GraspSpec::new(55.0, 2)).unwrap();
        let p = t.params();
        let th = sol.config.tip(p, Finger::Thumb).position;
        let ix = sol.config.tip(p, Finger::Index).position;
        let d = [th[0] - ix[0], th[1] - ix[1], th[2] - ix[2]];
        assert_abs_diff_eq!((d[0] * d[0] + d[2] * d[2]).sqrt(), 55.0, epsilon = 1e-3);
        assert_abs_diff_eq!(rotated_height(d, sol.theta_star), 0.0, epsilon = 1e-9);
        assert!(sol.theta_star.abs() > 1e-3);
        assert!(sol.s_star.value() > 0.2 && sol.s_star.value() < 0.8);
        assert_eq!(sol.thumb_s, sol.s_star.value());
        // only the index closes for a pinch
        assert_eq!(sol.finger_ctrls[1].1, 0.0);
    }

    #[test]
    fn quality_recomputation_matches() {
        let t = table();
        for n in 2..=5 {
            let sol = solve_width_analytic(t, &GraspSpec::new(60.0, n)).unwrap();
            let (span, err) = grasp_quality(&sol, t).unwrap();
            assert_eq!(span, sol.z_span);
            assert_eq!(err, 0.0);
            assert_eq!(sol.tip_error, 0.0);
        }
    }

    #[test]
    fn multi_finger_thumb_spans_the_width_to_the_centroid() {
        let t = table();
        let p = t.params();
        for n in 3..=5 {
            let (lo, hi) = reachable_range(t, n).unwrap();
            for k in 0..=20 {
                let w = lo + (hi - lo) * k as f64 / 20.0;
                let sol = solve_width_analytic(t, &GraspSpec::new(w, n)).unwrap();
                let th = sol.config.tip(p, Finger::Thumb).position;
                let g = centroid(sol.fingers()[1..].iter().map(|&f| sol.config.tip(p, f).position));
                let reach = ((th[0] - g[0]).powi(2) + (th[2] - g[2]).powi(2)).sqrt();
                assert!((reach - w).abs() < 0.05, "n={n} w={w}: {reach}");
            }
        }
    }

    #[test]
    fn json_export_uses_public_names() {
        let sol = solve_width_analytic(table(), &GraspSpec::new(55.0, 3)).unwrap();
        let v = sol.to_json();
        for key in
            ["W_mm", "n", "s_star", "theta_star_rad", "ctrls", "z_span_mm", "tip_error_mm", "solver", "iterations"]
        {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["solver"], "analytic");
        assert!(v["ctrls"]["middle"].as_f64().unwrap() > 0.0);
    }

    proptest::proptest! {
        #[test]
        fn closure_decreases_with_width(a in 2.0f64..108.0, b in 2.0f64..108.0) {
            proptest::prop_assume!((a - b).abs() > 1e-3);
            let t = table();
            let (w1, w2) = if a < b { (a, b) } else { (b, a) };
            let s1 = solve_width_analytic(t, &GraspSpec::new(w1, 2)).unwrap().s_star.value();
            let s2 = solve_width_analytic(t, &GraspSpec::new(w2, 2)).unwrap().s_star.value();
            proptest::prop_assert!(s1 > s2);
        }

        #[test]
        fn metrics_are_non_negative(w in 15.0f64..99.0, n in 2usize..=5) {
            let sol = solve_width_analytic(table(), &GraspSpec::new(w, n)).unwrap();
            proptest::prop_assert!(sol.z_span >= 0.0);
            proptest::prop_assert!(sol.tip_error == 0.0);
            proptest::prop_assert!((0.0..=1.0).contains(&sol.s_star.value()));
        }
    }
}
