//! Domain types shared by all pipeline stages, plus elementary trajectory
//! geometry: velocity estimation, facing direction, and inter-target
//! distance/angle.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 2D vector in image pixels.
pub type Vec2 = [f64; 2];

pub fn sub(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

pub fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub fn norm(a: Vec2) -> f64 {
    dot(a, a).sqrt()
}

/// Normalize to unit length; `None` if the vector is (numerically) zero.
pub fn normalize(a: Vec2) -> Option<Vec2> {
    let n = norm(a);
    if n < 1e-9 {
        None
    } else {
        Some([a[0] / n, a[1] / n])
    }
}

pub fn rotate(a: Vec2, radians: f64) -> Vec2 {
    let (s, c) = radians.sin_cos();
    [a[0] * c - a[1] * s, a[0] * s + a[1] * c]
}

/// Cosine of the angle between two vectors; 0 if either is zero.
pub fn cos_angle(a: Vec2, b: Vec2) -> f64 {
    let na = norm(a);
    let nb = norm(b);
    if na < 1e-9 || nb < 1e-9 {
        0.0
    } else {
        (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
    }
}

/// Angle in [0, pi] between two vectors; 0 by convention if either is zero.
pub fn angle_between(a: Vec2, b: Vec2) -> f64 {
    if norm(a) < 1e-9 || norm(b) < 1e-9 {
        0.0
    } else {
        cos_angle(a, b).acos()
    }
}

/// Axis-aligned bounding box in image pixels, (x, y) top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        debug_assert!(w > 0.0 && h > 0.0);
        BBox { x, y, w, h }
    }

    /// Bottom-center of the box: the canonical target position.
    pub fn foot_point(&self) -> Vec2 {
        [self.x + self.w / 2.0, self.y + self.h]
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let x1 = self.x.max(other.x);
        let y1 = self.y.max(other.y);
        let x2 = (self.x + self.w).min(other.x + other.w);
        let y2 = (self.y + self.h).min(other.y + other.h);
        let inter = (x2 - x1).max(0.0) * (y2 - y1).max(0.0);
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

/// One observed bounding box in one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame: u64,
    pub bbox: BBox,
    pub confidence: f64,
    pub appearance: Option<Vec<f64>>,
}

impl Detection {
    pub fn foot_point(&self) -> Vec2 {
        self.bbox.foot_point()
    }
}

/// Individual activity label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Individual {
    Standing,
    Walking,
    Running,
}

/// Pairwise interaction label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Interaction {
    /// approaching
    AP,
    /// leaving
    LV,
    /// passing-by
    PB,
    /// facing-each-other
    FE,
    /// walking-side-by-side
    WS,
    /// standing-in-a-row
    SR,
    /// standing-side-by-side
    SS,
    /// walking-in-opposite-directions
    WO,
    /// walking-one-after-the-other
    WR,
    /// running-side-by-side
    RS,
    /// running-one-after-the-other
    RR,
    /// dancing-together
    DT,
    /// no-interaction (the residual class)
    NA,
}

/// Collective (group) activity label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Collective {
    Crossing,
    Waiting,
    Queuing,
    Walking,
    Talking,
    Gathering,
    Dismissal,
    Chasing,
    Jogging,
    Dancing,
}

/// The label alphabets fixed for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityAlphabets {
    pub individual: Vec<Individual>,
    pub interaction: Vec<Interaction>,
    pub collective: Vec<Collective>,
}

impl ActivityAlphabets {
    /// The CAD alphabets: 2 individual, 8 interaction, 5 collective classes.
    pub fn cad() -> Self {
        use Collective::*;
        use Interaction::*;
        ActivityAlphabets {
            individual: vec![Individual::Standing, Individual::Walking],
            interaction: vec![AP, LV, PB, FE, WS, SR, SS, NA],
            collective: vec![Crossing, Waiting, Queuing, Walking, Talking],
        }
    }

    /// The New-CAD alphabets: 3 individual, 9 interaction, 6 collective classes.
    pub fn new_cad() -> Self {
        use Collective::*;
        use Interaction::*;
        ActivityAlphabets {
            individual: vec![Individual::Standing, Individual::Walking, Individual::Running],
            interaction: vec![AP, WO, FE, SR, WS, WR, RS, RR, NA],
            collective: vec![Gathering, Talking, Dismissal, Walking, Chasing, Queuing],
        }
    }

    /// Every class this implementation knows about; the default for synthetic runs.
    pub fn full() -> Self {
        use Collective::*;
        use Interaction::*;
        ActivityAlphabets {
            individual: vec![Individual::Standing, Individual::Walking, Individual::Running],
            interaction: vec![AP, LV, PB, FE, WS, SR, SS, WO, WR, RS, RR, DT, NA],
            collective: vec![
                Crossing, Waiting, Queuing, Walking, Talking, Gathering, Dismissal, Chasing,
                Jogging, Dancing,
            ],
        }
    }
}

/// Target status inside the tracker state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Active,
    Occluded,
    Exited,
}

/// Per-frame state of a tracked target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackState {
    pub foot: Vec2,
    pub bbox: BBox,
    pub appearance: Option<Vec<f64>>,
}

/// A time-indexed target trajectory fragment. Frames are strictly increasing
/// by construction of the `BTreeMap`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tracklet {
    pub id: u64,
    pub states: BTreeMap<u64, TrackState>,
    pub status: Status,
}

/// Facing direction plus a flag set when it had to fall back to the default.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Facing {
    pub dir: Vec2,
    pub low_confidence: bool,
}

/// Default facing for a target that never moved and carries no hint.
pub const DEFAULT_FACING: Vec2 = [1.0, 0.0];

/// Speed below which motion is treated as numerically zero, px/frame.
const MOTION_EPS: f64 = 1e-6;

/// Speed below which past motion is too noisy to define a facing, px/frame.
const FACING_SPEED_FLOOR: f64 = 1.0;
/// Half the minimum regression window used when recovering a facing from
/// past motion, frames.
const FACING_SPEED_SPAN_MIN: u64 = 5;

impl Tracklet {
    pub fn new(id: u64) -> Self {
        Tracklet {
            id,
            states: BTreeMap::new(),
            status: Status::Active,
        }
    }

    pub fn from_detections(id: u64, detections: &[Detection]) -> Self {
        let mut t = Tracklet::new(id);
        for d in detections {
            t.push(d.frame, d.bbox, d.appearance.clone());
        }
        t
    }

    pub fn push(&mut self, frame: u64, bbox: BBox, appearance: Option<Vec<f64>>) {
        self.states.insert(
            frame,
            TrackState {
                foot: bbox.foot_point(),
                bbox,
                appearance,
            },
        );
    }

    pub fn first_frame(&self) -> Option<u64> {
        self.states.keys().next().copied()
    }

    pub fn last_frame(&self) -> Option<u64> {
        self.states.keys().next_back().copied()
    }

    pub fn state_at(&self, frame: u64) -> Option<&TrackState> {
        self.states.get(&frame)
    }

    pub fn foot_at(&self, frame: u64) -> Option<Vec2> {
        self.states.get(&frame).map(|s| s.foot)
    }

    /// Mean of the appearance snapshots, or `None` if no state carries one.
    pub fn mean_appearance(&self) -> Option<Vec<f64>> {
        let mut acc: Option<Vec<f64>> = None;
        let mut n = 0usize;
        for s in self.states.values() {
            if let Some(a) = &s.appearance {
                let acc = acc.get_or_insert_with(|| vec![0.0; a.len()]);
                for (x, v) in acc.iter_mut().zip(a) {
                    *x += v;
                }
                n += 1;
            }
        }
        acc.map(|mut v| {
            for x in &mut v {
                *x /= n as f64;
            }
            v
        })
    }

    /// Velocity at `frame` as the least-squares slope of the foot points over
    /// the last `span` frames at or before `frame`. With exactly two samples
    /// this reduces to the backward finite difference.
    pub fn estimate_velocity(&self, frame: u64, span: u64) -> Result<Vec2> {
        let span = span.max(2);
        let lo = frame.saturating_sub(span - 1);
        let pts: Vec<(f64, Vec2)> = self
            .states
            .range(lo..=frame)
            .map(|(f, s)| (*f as f64, s.foot))
            .collect();
        if pts.len() < 2 {
            return Err(Error::InsufficientHistory { frame });
        }
        let n = pts.len() as f64;
        let mean_t = pts.iter().map(|(t, _)| t).sum::<f64>() / n;
        let mut sxx = 0.0;
        let mut sxy = [0.0, 0.0];
        for (t, p) in &pts {
            let dt = t - mean_t;
            sxx += dt * dt;
            sxy[0] += dt * p[0];
            sxy[1] += dt * p[1];
        }
        Ok([sxy[0] / sxx, sxy[1] / sxx])
    }

    /// Last frame at or before `frame` where the instantaneous motion was
    /// non-zero, yielding that motion direction.
    fn last_motion_direction(&self, frame: u64, span: u64) -> Option<Vec2> {
        // a longer regression window plus a speed floor keeps detector
        // jitter from masquerading as motion
        let span = span.max(2 * FACING_SPEED_SPAN_MIN);
        let frames: Vec<u64> = self.states.range(..=frame).map(|(f, _)| *f).collect();
        for f in frames.iter().rev() {
            if let Ok(v) = self.estimate_velocity(*f, span) {
                if norm(v) > FACING_SPEED_FLOOR {
                    return normalize(v);
                }
            }
        }
        None
    }

    /// Unit facing direction at `frame`. A standing target takes the
    /// orientation hint when present, otherwise its last motion direction;
    /// a moving target faces along its velocity. Falls back to
    /// [`DEFAULT_FACING`] with the low-confidence flag set.
    pub fn facing_direction(
        &self,
        frame: u64,
        individual: Individual,
        orientation_hint: Option<Vec2>,
        span: u64,
    ) -> Facing {
        if individual == Individual::Standing {
            if let Some(hint) = orientation_hint.and_then(normalize) {
                return Facing {
                    dir: hint,
                    low_confidence: false,
                };
            }
            if let Some(dir) = self.last_motion_direction(frame, span) {
                return Facing {
                    dir,
                    low_confidence: false,
                };
            }
            return Facing {
                dir: DEFAULT_FACING,
                low_confidence: true,
            };
        }
        if let Some(dir) = self
            .estimate_velocity(frame, span)
            .ok()
            .and_then(normalize)
        {
            return Facing {
                dir,
                low_confidence: false,
            };
        }
        if let Some(dir) = self.last_motion_direction(frame, span) {
            return Facing {
                dir,
                low_confidence: false,
            };
        }
        Facing {
            dir: orientation_hint.and_then(normalize).unwrap_or(DEFAULT_FACING),
            low_confidence: true,
        }
    }
}

/// Distance, facing-relative angle, and relative position of a target pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairGeometry {
    /// Euclidean foot-point distance, px.
    pub distance: f64,
    /// Angle in [0, pi] between the facing of `i` and the vector to `j`.
    pub phi: f64,
    /// foot_j - foot_i.
    pub relative: Vec2,
}

/// Geometry of the pair (i, j) at `frame`; `None` if either is undefined there.
pub fn pair_geometry(
    xi: &Tracklet,
    xj: &Tracklet,
    frame: u64,
    facing_i: Vec2,
) -> Option<PairGeometry> {
    let fi = xi.foot_at(frame)?;
    let fj = xj.foot_at(frame)?;
    let relative = sub(fj, fi);
    let distance = norm(relative);
    let phi = angle_between(facing_i, relative);
    Some(PairGeometry {
        distance,
        phi,
        relative,
    })
}
