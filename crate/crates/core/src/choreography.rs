//! Stick reference trajectories built from strike and transition primitives,
//! and the nominal wrist plan derived from them.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::Vector3;
use serde::Deserialize;
use thiserror::Error;

use crate::score::{DrumId, DrumScore, ScheduledHit, ScheduledScore};

pub type Vec3 = Vector3<f64>;

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("drum {0:?} is scored but not reachable by any hand")]
    UnreachableDrum(DrumId),
    #[error("drum {0:?} is not part of the layout")]
    MissingDrum(DrumId),
    #[error("strike half-width of {steps} steps is below the 2-step minimum")]
    WindowTooNarrow { steps: usize },
    #[error("invalid drum layout: {0}")]
    BadLayout(String),
    #[error("invalid primitive parameters: {0}")]
    BadParams(String),
    #[error("plan needs {needed} hand configs, got {got}")]
    HandCount { needed: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrumPad {
    pub center: Vec3,
    pub radius: f64,
    pub normal: Vec3,
}

impl DrumPad {
    pub fn flat(x: f64, y: f64, z: f64, radius: f64) -> Self {
        Self {
            center: Vec3::new(x, y, z),
            radius,
            normal: Vec3::z(),
        }
    }

    pub fn head_height(&self) -> f64 {
        self.center.z
    }

    /// Signed distance of `p` above the drumhead plane.
    pub fn height_above(&self, p: &Vec3) -> f64 {
        self.normal.dot(&(p - self.center))
    }

    /// Distance of `p` from the drum axis, measured in the head plane.
    pub fn radial_distance(&self, p: &Vec3) -> f64 {
        let d = p - self.center;
        (d - self.normal * self.normal.dot(&d)).norm()
    }

    pub fn strike_point(&self) -> Vec3 {
        self.center
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrumLayout {
    pads: [Option<DrumPad>; DrumId::COUNT],
}

impl DrumLayout {
    pub fn new(pads: &[(DrumId, DrumPad)]) -> Result<Self, PlanError> {
        let mut out = [None; DrumId::COUNT];
        for (d, p) in pads {
            if *d == DrumId::None {
                return Err(PlanError::BadLayout("the None drum has no pad".into()));
            }
            if !(p.radius > 0.0) {
                return Err(PlanError::BadLayout(format!("{d:?} radius must be positive")));
            }
            if (p.normal.norm() - 1.0).abs() > 1e-9 {
                return Err(PlanError::BadLayout(format!("{d:?} normal is not unit length")));
            }
            out[d.index()] = Some(*p);
        }
        // Conservative check: bounding spheres of the discs must not touch.
        let present: Vec<(DrumId, DrumPad)> = pads.to_vec();
        for (i, (da, a)) in present.iter().enumerate() {
            for (db, b) in &present[i + 1..] {
                if (a.center - b.center).norm() <= a.radius + b.radius {
                    return Err(PlanError::BadLayout(format!("{da:?} and {db:?} intersect")));
                }
            }
        }
        Ok(Self { pads: out })
    }

    /// Five playable drums plus a floor kick; hi-hat and crash sit left of the midline.
    pub fn full_kit() -> Self {
        Self::new(&[
            (DrumId::Snare, DrumPad::flat(0.12, 0.40, 0.00, 0.17)),
            (DrumId::HiHat, DrumPad::flat(-0.32, 0.45, 0.08, 0.17)),
            (DrumId::Tom, DrumPad::flat(0.08, 0.76, 0.12, 0.13)),
            (DrumId::Ride, DrumPad::flat(0.50, 0.80, 0.15, 0.20)),
            (DrumId::Crash, DrumPad::flat(-0.32, 0.85, 0.20, 0.18)),
            (DrumId::Kick, DrumPad::flat(0.0, 0.55, -0.55, 0.25)),
        ])
        .expect("built-in layout is valid")
    }

    /// Snare pad and hi-hat (cymbal) side by side.
    pub fn two_drum() -> Self {
        Self::new(&[
            (DrumId::Snare, DrumPad::flat(0.12, 0.40, 0.00, 0.15)),
            (DrumId::HiHat, DrumPad::flat(-0.24, 0.45, 0.08, 0.15)),
        ])
        .expect("built-in layout is valid")
    }

    pub fn single_snare() -> Self {
        Self::new(&[(DrumId::Snare, DrumPad::flat(0.0, 0.40, 0.0, 0.17))])
            .expect("built-in layout is valid")
    }

    pub fn pad(&self, drum: DrumId) -> Option<&DrumPad> {
        if drum == DrumId::None {
            return None;
        }
        self.pads[drum.index()].as_ref()
    }

    pub fn pads(&self) -> impl Iterator<Item = (DrumId, &DrumPad)> {
        DrumId::ALL
            .into_iter()
            .filter_map(move |d| self.pads[d.index()].as_ref().map(|p| (d, p)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AssignmentRule {
    /// Drums left of the body midline (x < 0) go to hand 0.
    StaticBySide,
    ExplicitMap(Vec<(DrumId, usize)>),
}

/// Splits the scored drums between `n_hand` hands.
pub fn assign_hands(
    score: &DrumScore,
    layout: &DrumLayout,
    rule: &AssignmentRule,
    n_hand: usize,
) -> Result<crate::score::HandMap, PlanError> {
    let mut map = crate::score::HandMap::new(n_hand);
    match rule {
        AssignmentRule::StaticBySide => {
            for (drum, pad) in layout.pads() {
                let hand = if n_hand == 1 || pad.center.x < 0.0 { 0 } else { 1 };
                map.assign(drum, hand);
            }
        }
        AssignmentRule::ExplicitMap(pairs) => {
            for &(drum, hand) in pairs {
                if hand >= n_hand {
                    return Err(PlanError::HandCount {
                        needed: hand + 1,
                        got: n_hand,
                    });
                }
                map.assign(drum, hand);
            }
        }
    }
    for drum in score.drums() {
        if map.hand_of(drum).is_none() {
            return Err(PlanError::UnreachableDrum(drum));
        }
    }
    Ok(map)
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrimitiveParams {
    /// Stroke height above the drumhead, m.
    pub apex_height: f64,
    pub strike_halfwidth_s: f64,
    /// Elevation of (head - tail), rad. Negative points the head down.
    pub approach_pitch: f64,
    /// Extra lift of transitions between drums, m.
    pub rest_hover: f64,
}

impl Default for PrimitiveParams {
    fn default() -> Self {
        Self {
            apex_height: 0.06,
            strike_halfwidth_s: 0.2,
            approach_pitch: -0.15,
            rest_hover: 0.03,
        }
    }
}

impl PrimitiveParams {
    pub fn validate(&self) -> Result<(), PlanError> {
        if !(self.apex_height > 0.0) {
            return Err(PlanError::BadParams("apex_height must be positive".into()));
        }
        if !(self.strike_halfwidth_s > 0.0) {
            return Err(PlanError::BadParams("strike_halfwidth_s must be positive".into()));
        }
        if !(self.rest_hover >= 0.0) {
            return Err(PlanError::BadParams("rest_hover must be non-negative".into()));
        }
        Ok(())
    }
}

/// A run of head positions starting at control step `start` (may be negative
/// when a window hangs off the front of the episode).
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start: i64,
    pub points: Vec<Vec3>,
}

fn strike_height(apex: f64, offset: i64, halfwidth: usize) -> f64 {
    apex * (1.0 - (PI * offset as f64 / halfwidth as f64).cos()) / 2.0
}

/// Raised-cosine stroke: height 0 at the hit step, `apex_height` at both ends.
pub fn strike_primitive(
    hit_step: usize,
    pad: &DrumPad,
    params: &PrimitiveParams,
    control_rate_hz: f64,
) -> Result<Segment, PlanError> {
    let w = (params.strike_halfwidth_s * control_rate_hz).round() as usize;
    if w < 2 {
        return Err(PlanError::WindowTooNarrow { steps: w });
    }
    Ok(strike_segment(hit_step, pad, params.apex_height, w, w))
}

fn strike_segment(hit: usize, pad: &DrumPad, apex: f64, left: usize, right: usize) -> Segment {
    let base = pad.strike_point();
    let points = (-(left as i64)..=right as i64)
        .map(|k| {
            let half = if k < 0 { left } else { right };
            let h = if half == 0 { 0.0 } else { strike_height(apex, k, half) };
            base + pad.normal * h
        })
        .collect();
    Segment {
        start: hit as i64 - left as i64,
        points,
    }
}

/// Cubic ease-in-out from `from` to `to` over `n_steps` points (the last one
/// is `to`), with a half-sine lift of `hover` peaking at the midpoint.
pub fn transition_primitive(from: &Vec3, to: &Vec3, n_steps: usize, hover: f64) -> Vec<Vec3> {
    (1..=n_steps)
        .map(|i| {
            let s = i as f64 / n_steps as f64;
            let e = s * s * (3.0 - 2.0 * s);
            let mut p = from + (to - from) * e;
            p.z += hover * (PI * s).sin();
            p
        })
        .map(|mut p| {
            // sin(pi) is not exactly zero
            if (p - to).norm() < 1e-12 {
                p = *to;
            }
            p
        })
        .collect()
}

/// Per-hand geometry the planner needs beyond the primitive parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct HandGeometry {
    /// Heading of the stick in the horizontal plane, rad (pi/2 points along +y).
    pub yaw: f64,
    /// Head position used when the hand has nothing to play.
    pub rest_head: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanConfig {
    pub params: PrimitiveParams,
    pub stick_length: f64,
    /// Fulcrum position measured from the head: wrist = head + f (tail - head).
    pub grasp_fraction: f64,
    pub hands: Vec<HandGeometry>,
    pub nominal_closure: f64,
    /// Speed limit used by the continuity check, m/s.
    pub v_max: f64,
}

impl PlanConfig {
    pub fn unimanual() -> Self {
        Self {
            params: PrimitiveParams::default(),
            stick_length: 0.4,
            grasp_fraction: 2.0 / 3.0,
            hands: vec![HandGeometry {
                yaw: PI / 2.0,
                rest_head: Vec3::new(0.0, 0.40, 0.06),
            }],
            nominal_closure: 0.9,
            v_max: 2.0,
        }
    }

    pub fn bimanual() -> Self {
        Self {
            hands: vec![
                HandGeometry {
                    yaw: PI / 2.0,
                    rest_head: Vec3::new(-0.32, 0.45, 0.14),
                },
                HandGeometry {
                    yaw: PI / 2.0,
                    rest_head: Vec3::new(0.12, 0.40, 0.06),
                },
            ],
            ..Self::unimanual()
        }
    }

    /// Unit vector from tail to head for a hand at the given pitch.
    pub fn stick_axis(yaw: f64, pitch: f64) -> Vec3 {
        Vec3::new(pitch.cos() * yaw.cos(), pitch.cos() * yaw.sin(), pitch.sin())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HandTrajectory {
    pub head: Vec<Vec3>,
    pub tail: Vec<Vec3>,
}

/// Two strike windows that had to be shrunk to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Overlap {
    pub hand: usize,
    pub first_step: usize,
    pub second_step: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrajectory {
    pub hands: Vec<HandTrajectory>,
    pub control_rate_hz: f64,
    pub overlaps: Vec<Overlap>,
}

impl ReferenceTrajectory {
    pub fn len(&self) -> usize {
        self.hands.first().map_or(0, |h| h.head.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Head/tail at `step`, holding the final point past the end.
    pub fn at(&self, hand: usize, step: usize) -> (Vec3, Vec3) {
        let h = &self.hands[hand];
        let i = step.min(h.head.len() - 1);
        (h.head[i], h.tail[i])
    }

    /// Largest step-to-step head displacement over all hands.
    pub fn max_step_displacement(&self) -> f64 {
        self.hands
            .iter()
            .flat_map(|h| h.head.windows(2).map(|w| (w[1] - w[0]).norm()))
            .fold(0.0, f64::max)
    }

    pub fn is_continuous(&self, v_max: f64) -> bool {
        self.max_step_displacement() <= v_max / self.control_rate_hz
    }

    /// `step<TAB>hand<TAB>hx hy hz<TAB>tx ty tz` per line.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for step in 0..self.len() {
            for (i, h) in self.hands.iter().enumerate() {
                let (p, q) = (h.head[step], h.tail[step]);
                let _ = writeln!(
                    out,
                    "{step}\t{i}\t{:.9} {:.9} {:.9}\t{:.9} {:.9} {:.9}",
                    p.x, p.y, p.z, q.x, q.y, q.z
                );
            }
        }
        out
    }
}

/// Concatenates strike windows and transitions into a per-step stick plan of
/// `n_steps` control steps.
pub fn build_reference(
    sched: &ScheduledScore,
    layout: &DrumLayout,
    cfg: &PlanConfig,
    n_steps: usize,
) -> Result<ReferenceTrajectory, PlanError> {
    cfg.params.validate()?;
    if cfg.hands.len() < sched.n_hand() {
        return Err(PlanError::HandCount {
            needed: sched.n_hand(),
            got: cfg.hands.len(),
        });
    }
    let w = (cfg.params.strike_halfwidth_s * sched.control_rate_hz).round() as usize;
    if w < 2 {
        return Err(PlanError::WindowTooNarrow { steps: w });
    }
    let n_steps = n_steps.max(1);
    let mut hands = Vec::with_capacity(sched.n_hand());
    let mut overlaps = Vec::new();
    for (hand, hits) in sched.hands.iter().enumerate() {
        let geom = &cfg.hands[hand];
        let head = plan_hand(hand, hits, layout, &cfg.params, geom, w, n_steps, &mut overlaps)?;
        let axis = PlanConfig::stick_axis(geom.yaw, cfg.params.approach_pitch);
        let tail = head.iter().map(|p| p - axis * cfg.stick_length).collect();
        hands.push(HandTrajectory { head, tail });
    }
    Ok(ReferenceTrajectory {
        hands,
        control_rate_hz: sched.control_rate_hz,
        overlaps,
    })
}

#[allow(clippy::too_many_arguments)]
fn plan_hand(
    hand: usize,
    hits: &[ScheduledHit],
    layout: &DrumLayout,
    params: &PrimitiveParams,
    geom: &HandGeometry,
    w: usize,
    n_steps: usize,
    overlaps: &mut Vec<Overlap>,
) -> Result<Vec<Vec3>, PlanError> {
    let mut head = vec![geom.rest_head; n_steps];
    if hits.is_empty() {
        return Ok(head);
    }
    let pads: Vec<&DrumPad> = hits
        .iter()
        .map(|h| layout.pad(h.drum).ok_or(PlanError::MissingDrum(h.drum)))
        .collect::<Result<_, _>>()?;

    // (left, right) half-widths, shrunk symmetrically where neighbours overlap.
    let mut widths = vec![(w, w); hits.len()];
    for i in 0..hits.len().saturating_sub(1) {
        let gap = hits[i + 1].step - hits[i].step;
        if widths[i].1 + widths[i + 1].0 >= gap {
            overlaps.push(Overlap {
                hand,
                first_step: hits[i].step,
                second_step: hits[i + 1].step,
            });
            widths[i].1 = widths[i].1.min(gap / 2);
            widths[i + 1].0 = widths[i + 1].0.min(gap - gap / 2);
        }
    }
    let segments: Vec<Segment> = hits
        .iter()
        .zip(&pads)
        .zip(&widths)
        .map(|((h, pad), &(l, r))| strike_segment(h.step, pad, params.apex_height, l, r))
        .collect();

    let rest = pads[0].strike_point() + pads[0].normal * params.apex_height;
    let put = |head: &mut Vec<Vec3>, step: i64, p: Vec3| {
        if step >= 0 && (step as usize) < head.len() {
            head[step as usize] = p;
        }
    };
    let first = &segments[0];
    if first.start > 0 {
        head[0] = rest;
        let pts = transition_primitive(&rest, &first.points[0], first.start as usize, params.rest_hover);
        for (k, p) in pts.into_iter().enumerate() {
            put(&mut head, k as i64 + 1, p);
        }
    }
    for (i, seg) in segments.iter().enumerate() {
        for (k, p) in seg.points.iter().enumerate() {
            put(&mut head, seg.start + k as i64, *p);
        }
        let end = seg.start + seg.points.len() as i64 - 1;
        let last = *seg.points.last().unwrap();
        match segments.get(i + 1) {
            Some(next) if next.start > end + 1 => {
                let n = (next.start - end) as usize;
                let hover = if hits[i].drum == hits[i + 1].drum { 0.0 } else { params.rest_hover };
                let pts = transition_primitive(&last, &next.points[0], n, hover);
                for (k, p) in pts.into_iter().take(n - 1).enumerate() {
                    put(&mut head, end + 1 + k as i64, p);
                }
            }
            Some(_) => {}
            None => {
                for s in (end + 1).max(0)..n_steps as i64 {
                    put(&mut head, s, last);
                }
            }
        }
    }
    Ok(head)
}

/// Per-hand nominal commands along the plan.
#[derive(Debug, Clone, PartialEq)]
pub struct HandPlan {
    pub wrist: Vec<Vec3>,
    pub pitch: Vec<f64>,
    pub closure: Vec<[f64; 5]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NominalPlan {
    pub hands: Vec<HandPlan>,
}

impl NominalPlan {
    pub fn len(&self) -> usize {
        self.hands.first().map_or(0, |h| h.wrist.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Moves the plan from the stick to the wrist via the fixed grasp offset.
pub fn stick_to_wrist(reference: &ReferenceTrajectory, grasp_fraction: f64, nominal_closure: f64) -> NominalPlan {
    let hands = reference
        .hands
        .iter()
        .map(|h| {
            let wrist = h
                .head
                .iter()
                .zip(&h.tail)
                .map(|(p, q)| p + (q - p) * grasp_fraction)
                .collect();
            let pitch = h
                .head
                .iter()
                .zip(&h.tail)
                .map(|(p, q)| {
                    let d = p - q;
                    d.z.atan2((d.x * d.x + d.y * d.y).sqrt())
                })
                .collect();
            HandPlan {
                wrist,
                pitch,
                closure: vec![[nominal_closure; 5]; h.head.len()],
            }
        })
        .collect();
    NominalPlan { hands }
}
