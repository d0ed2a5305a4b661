//! Pairwise activity-correlation kernel and the social-group graph with
//! sparsification.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::types::{norm, pair_geometry, sub, Individual, Tracklet, Vec2};

/// Parameters of the proxemics kernel. Distances are image pixels, so all of
/// these are scene-dependent configuration rather than constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroupingParams {
    /// Preferred social distance, px.
    pub mu_dist: f64,
    pub sigma_dist: f64,
    /// Velocity-agreement bandwidth, px/frame.
    pub sigma_vel: f64,
    /// Strength of the side-over-front preference, in [0, 1).
    pub angle_coef: f64,
    /// Kernel factor applied when individual activities differ.
    pub activity_mismatch: f64,
    /// Edges below this weight are discarded when sparsifying.
    pub sparsify_threshold: f64,
}

impl Default for GroupingParams {
    fn default() -> Self {
        GroupingParams {
            mu_dist: 60.0,
            sigma_dist: 60.0,
            sigma_vel: 8.0,
            angle_coef: 0.15,
            activity_mismatch: 0.5,
            sparsify_threshold: 0.3,
        }
    }
}

/// Activity-correlation kernel between two targets at one frame, in [0, 1].
/// Product of distance, angle, velocity and activity factors; the angle factor
/// peaks when each target sees the other to its side.
#[allow(clippy::too_many_arguments)]
pub fn p_corr(
    dist: f64,
    phi_ij: f64,
    phi_ji: f64,
    vel_i: Vec2,
    vel_j: Vec2,
    act_i: Individual,
    act_j: Individual,
    params: &GroupingParams,
) -> f64 {
    let k_dist = (-((dist - params.mu_dist).powi(2)) / (2.0 * params.sigma_dist.powi(2))).exp();
    let c = params.angle_coef;
    let k_angle = (1.0 - c * phi_ij.cos().abs()) * (1.0 - c * phi_ji.cos().abs());
    let dv = sub(vel_i, vel_j);
    let k_vel = (-(norm(dv).powi(2)) / (2.0 * params.sigma_vel.powi(2))).exp();
    let k_act = if act_i == act_j {
        1.0
    } else {
        params.activity_mismatch
    };
    (k_dist * k_angle * k_vel * k_act).clamp(0.0, 1.0)
}

/// Kernel evaluated from tracklet state at one frame.
pub fn p_corr_at(
    xi: &Tracklet,
    xj: &Tracklet,
    act_i: Individual,
    act_j: Individual,
    frame: u64,
    span: u64,
    params: &GroupingParams,
) -> Option<f64> {
    let vi = xi.estimate_velocity(frame, span).unwrap_or([0.0, 0.0]);
    let vj = xj.estimate_velocity(frame, span).unwrap_or([0.0, 0.0]);
    let eta_i = xi.facing_direction(frame, act_i, None, span).dir;
    let eta_j = xj.facing_direction(frame, act_j, None, span).dir;
    let gij = pair_geometry(xi, xj, frame, eta_i)?;
    let gji = pair_geometry(xj, xi, frame, eta_j)?;
    Some(p_corr(
        gij.distance,
        gij.phi,
        gji.phi,
        vi,
        vj,
        act_i,
        act_j,
        params,
    ))
}

/// Kernel averaged over the frames of a window where both targets exist.
pub fn p_corr_window(
    xi: &Tracklet,
    xj: &Tracklet,
    act_i: Individual,
    act_j: Individual,
    frames: impl Iterator<Item = u64>,
    span: u64,
    params: &GroupingParams,
) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for f in frames {
        if let Some(p) = p_corr_at(xi, xj, act_i, act_j, f, span, params) {
            sum += p;
            n += 1;
        }
    }
    if n == 0 {
        None
    } else {
        Some(sum / n as f64)
    }
}

/// Undirected social-group graph over target ids with weights in [0, 1].
#[derive(Debug, Clone, Default)]
pub struct GroupGraph {
    weights: BTreeMap<(u64, u64), f64>,
    pub sparsified: bool,
}

impl GroupGraph {
    fn key(i: u64, j: u64) -> (u64, u64) {
        if i < j {
            (i, j)
        } else {
            (j, i)
        }
    }

    pub fn set(&mut self, i: u64, j: u64, w: f64) {
        if i != j {
            self.weights.insert(Self::key(i, j), w);
        }
    }

    pub fn weight(&self, i: u64, j: u64) -> Option<f64> {
        self.weights.get(&Self::key(i, j)).copied()
    }

    pub fn adjacent(&self, i: u64, j: u64) -> bool {
        i != j && self.weights.contains_key(&Self::key(i, j))
    }

    pub fn edges(&self) -> impl Iterator<Item = (u64, u64, f64)> + '_ {
        self.weights.iter().map(|(&(i, j), &w)| (i, j, w))
    }

    pub fn edge_count(&self) -> usize {
        self.weights.len()
    }

    pub fn neighbors(&self, i: u64) -> Vec<u64> {
        self.weights
            .keys()
            .filter_map(|&(a, b)| {
                if a == i {
                    Some(b)
                } else if b == i {
                    Some(a)
                } else {
                    None
                }
            })
            .collect()
    }
}

/// Build the complete group graph over `targets` with window-averaged kernel
/// weights, then drop edges below the sparsification threshold.
pub fn build_group_graph(
    targets: &[&Tracklet],
    labels: &BTreeMap<u64, Individual>,
    window_frames: (u64, u64),
    span: u64,
    params: &GroupingParams,
) -> GroupGraph {
    let mut graph = GroupGraph::default();
    for (a, xi) in targets.iter().enumerate() {
        for xj in targets.iter().skip(a + 1) {
            let act_i = labels.get(&xi.id).copied().unwrap_or(Individual::Walking);
            let act_j = labels.get(&xj.id).copied().unwrap_or(Individual::Walking);
            if let Some(w) = p_corr_window(
                xi,
                xj,
                act_i,
                act_j,
                window_frames.0..=window_frames.1,
                span,
                params,
            ) {
                if w >= params.sparsify_threshold {
                    graph.set(xi.id, xj.id, w);
                }
            }
        }
    }
    graph.sparsified = true;
    graph
}
