//! Stage 1, activity-aware tracking: candidate-tracklet generation with
//! gating, individual-activity classification from speed, construction of the
//! tracking hypergraph over linking hypotheses, and tracklet-linking
//! optimization with occlusion bookkeeping.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::eval::min_cost_assignment;
use crate::grouping::GroupGraph;
use crate::hypergraph::{
    cluster_search, select_consistent_clusters, ClusterSearchOpts, WeightedHypergraph,
};
use crate::types::{cos_angle, norm, sub, BBox, Detection, Individual, Tracklet, Vec2};

/// Logistic speed boundaries for individual-activity classification, px/frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpeedParams {
    pub stand_walk: f64,
    pub stand_walk_width: f64,
    pub walk_run: f64,
    pub walk_run_width: f64,
}

impl Default for SpeedParams {
    fn default() -> Self {
        SpeedParams {
            stand_walk: 1.0,
            stand_walk_width: 0.3,
            walk_run: 6.0,
            walk_run_width: 1.0,
        }
    }
}

/// Posterior over the three motion classes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posteriors {
    pub standing: f64,
    pub walking: f64,
    pub running: f64,
}

impl Posteriors {
    pub fn get(&self, label: Individual) -> f64 {
        match label {
            Individual::Standing => self.standing,
            Individual::Walking => self.walking,
            Individual::Running => self.running,
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Classify an individual activity from speed using two logistic boundaries.
/// With a two-class alphabet the running mass folds into walking.
pub fn classify_individual(
    speed: f64,
    params: &SpeedParams,
    alphabet: &[Individual],
) -> (Individual, Posteriors) {
    let p_stand = 1.0 - sigmoid((speed - params.stand_walk) / params.stand_walk_width);
    let p_run = sigmoid((speed - params.walk_run) / params.walk_run_width);
    let p_walk = (1.0 - p_stand - p_run).max(0.0);
    let sum = p_stand + p_walk + p_run;
    let mut post = Posteriors {
        standing: p_stand / sum,
        walking: p_walk / sum,
        running: p_run / sum,
    };
    if !alphabet.contains(&Individual::Running) {
        post.walking += post.running;
        post.running = 0.0;
    }
    let label = *alphabet
        .iter()
        .max_by(|a, b| post.get(**a).partial_cmp(&post.get(**b)).unwrap())
        .unwrap_or(&Individual::Walking);
    (label, post)
}

/// Knobs for candidate generation and linking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackingParams {
    /// Maximum frame-to-frame foot displacement when building tracklets, px.
    pub link_gate: f64,
    /// Minimum tracklet length in frames; shorter fragments are discarded.
    pub min_tracklet_len: usize,
    /// Base radius of the spatial admission gate around the motion-predicted
    /// position, px.
    pub admission_gate: f64,
    /// Gate growth per frame of prediction horizon, px/frame.
    pub admission_gate_rate: f64,
    /// Appearance-similarity admission threshold (theta_a).
    pub appearance_threshold: f64,
    /// Detector misses up to this many consecutive frames are bridged by
    /// interpolation instead of splitting the tracklet.
    pub max_gap: u64,
    /// Hyperedge enumeration cap per seed vertex.
    pub edge_cap: usize,
}

impl Default for TrackingParams {
    fn default() -> Self {
        TrackingParams {
            link_gate: 25.0,
            min_tracklet_len: 2,
            admission_gate: 30.0,
            admission_gate_rate: 0.5,
            appearance_threshold: 0.025,
            max_gap: 2,
            edge_cap: 200,
        }
    }
}

/// Build short gap-free tracklets from a window of detections by
/// frame-to-frame nearest-neighbor linking with distance gating.
pub fn build_tracklets(detections: &[Detection], params: &TrackingParams) -> Vec<Tracklet> {
    let mut by_frame: BTreeMap<u64, Vec<&Detection>> = BTreeMap::new();
    for d in detections {
        by_frame.entry(d.frame).or_default().push(d);
    }

    struct Open {
        tracklet: Tracklet,
        last_frame: u64,
    }
    let mut open: Vec<Open> = Vec::new();
    let mut closed: Vec<Tracklet> = Vec::new();
    let mut next_id = 0u64;

    for (&frame, dets) in &by_frame {
        // close tracklets whose gap grew past the bridgeable length
        let (still_open, done): (Vec<Open>, Vec<Open>) =
            open.into_iter().partition(|o| o.last_frame + 1 + params.max_gap >= frame);
        closed.extend(done.into_iter().map(|o| o.tracklet));
        open = still_open;

        let cost: Vec<Vec<f64>> = open
            .iter()
            .map(|o| {
                let last = o.tracklet.foot_at(o.last_frame).unwrap();
                let gate = params.link_gate * (frame - o.last_frame) as f64;
                dets.iter()
                    .map(|d| {
                        let dist = norm(sub(d.foot_point(), last));
                        if dist <= gate {
                            dist
                        } else {
                            1e9
                        }
                    })
                    .collect()
            })
            .collect();
        let mut taken = vec![false; dets.len()];
        if !open.is_empty() && !dets.is_empty() {
            for (row, col) in min_cost_assignment(&cost) {
                if cost[row][col] >= 1e9 {
                    continue;
                }
                let d = dets[col];
                // fill a bridged gap by linear interpolation, so tracklets
                // stay dense in frames
                let last = open[row].last_frame;
                if frame > last + 1 {
                    let prev = open[row].tracklet.state_at(last).unwrap().clone();
                    let span = (frame - last) as f64;
                    for g in (last + 1)..frame {
                        let t = (g - last) as f64 / span;
                        let lerp = |a: f64, b: f64| a + (b - a) * t;
                        let bbox = BBox::new(
                            lerp(prev.bbox.x, d.bbox.x),
                            lerp(prev.bbox.y, d.bbox.y),
                            lerp(prev.bbox.w, d.bbox.w),
                            lerp(prev.bbox.h, d.bbox.h),
                        );
                        open[row].tracklet.push(g, bbox, prev.appearance.clone());
                    }
                }
                open[row].tracklet.push(frame, d.bbox, d.appearance.clone());
                open[row].last_frame = frame;
                taken[col] = true;
            }
        }
        for (k, d) in dets.iter().enumerate() {
            if !taken[k] {
                let mut t = Tracklet::new(next_id);
                next_id += 1;
                t.push(frame, d.bbox, d.appearance.clone());
                open.push(Open {
                    tracklet: t,
                    last_frame: frame,
                });
            }
        }
    }
    closed.extend(open.into_iter().map(|o| o.tracklet));
    closed.retain(|t| t.states.len() >= params.min_tracklet_len);
    closed.sort_by_key(|t| (t.first_frame().unwrap_or(0), t.id));
    for (k, t) in closed.iter_mut().enumerate() {
        t.id = k as u64;
    }
    closed
}

/// Appearance affinity between two tracklets: exp(-||mean feature diff||),
/// or a spatial-proximity stand-in when either side has no features.
pub fn appearance_affinity(a: &Tracklet, b: &Tracklet, scale: f64) -> f64 {
    match (a.mean_appearance(), b.mean_appearance()) {
        (Some(fa), Some(fb)) => {
            let d2: f64 = fa.iter().zip(&fb).map(|(x, y)| (x - y) * (x - y)).sum();
            (-d2.sqrt()).exp()
        }
        _ => {
            // proximity of the closest endpoints, scaled by person size
            let (Some(la), Some(fb_frame)) = (a.last_frame(), b.first_frame()) else {
                return 0.0;
            };
            let pa = a.foot_at(la).unwrap();
            let pb = b.foot_at(fb_frame).unwrap();
            (-norm(sub(pb, pa)) / scale).exp()
        }
    }
}

/// Candidate tracklets for a window plus the admission structure.
#[derive(Debug, Clone, Default)]
pub struct CandidateSet {
    pub tracklets: Vec<Tracklet>,
    /// target id -> indices into `tracklets`
    pub per_target: BTreeMap<u64, Vec<usize>>,
    /// indices admitted by no target (new-target seeds before linking)
    pub unadmitted: Vec<usize>,
    /// targets dropped for having no detections within tau_a before the window
    pub exited: Vec<u64>,
}

/// Gate candidate tracklets against existing targets by appearance and by a
/// motion-predicted spatial gate; targets silent for `drop_after` frames
/// before the window are dropped.
pub fn generate_candidates(
    targets: &[&Tracklet],
    window_detections: &[Detection],
    window_start: u64,
    drop_after: u64,
    velocity_span: u64,
    person_scale: f64,
    params: &TrackingParams,
) -> CandidateSet {
    let tracklets = build_tracklets(window_detections, params);
    let mut set = CandidateSet {
        tracklets,
        ..Default::default()
    };

    let mut admitted = vec![false; set.tracklets.len()];
    for target in targets {
        let Some(last) = target.last_frame() else {
            continue;
        };
        if last + drop_after < window_start {
            set.exited.push(target.id);
            continue;
        }
        let last_foot = target.foot_at(last).unwrap();
        let vel = target.estimate_velocity(last, velocity_span).unwrap_or([0.0, 0.0]);
        let mut list = Vec::new();
        for (k, cand) in set.tracklets.iter().enumerate() {
            let first = cand.first_frame().unwrap();
            if first <= last {
                continue;
            }
            let dt = (first - last) as f64;
            let predicted = [last_foot[0] + vel[0] * dt, last_foot[1] + vel[1] * dt];
            let gate = params.admission_gate + params.admission_gate_rate * dt;
            let err = norm(sub(cand.foot_at(first).unwrap(), predicted));
            if err > gate {
                continue;
            }
            if appearance_affinity(target, cand, person_scale) <= params.appearance_threshold {
                continue;
            }
            list.push(k);
            admitted[k] = true;
        }
        if !list.is_empty() {
            set.per_target.insert(target.id, list);
        }
    }
    set.unadmitted = admitted
        .iter()
        .enumerate()
        .filter_map(|(k, &a)| if !a { Some(k) } else { None })
        .collect();
    set
}

/// A hypothesis of linking one existing target with one candidate tracklet;
/// one hypergraph vertex.
#[derive(Debug, Clone)]
pub struct LinkHypothesis {
    pub target_id: u64,
    pub candidate: usize,
    pub appearance: f64,
    pub facing_target: Vec2,
    pub facing_candidate: Vec2,
    pub pos_target: Vec2,
    pub pos_candidate: Vec2,
}

/// Combined hyperedge weight: appearance, facing-direction, and geometric
/// consistency terms with their control parameters.
pub fn edge_weight(
    hyps: &[&LinkHypothesis],
    lambda_a: f64,
    lambda_d: f64,
    lambda_g: f64,
) -> f64 {
    let w_a: f64 = hyps.iter().map(|h| h.appearance).sum();
    let w_d: f64 = hyps
        .iter()
        .map(|h| cos_angle(h.facing_target, h.facing_candidate))
        .sum();
    let mut w_g = 0.0;
    for (a, hi) in hyps.iter().enumerate() {
        for hj in &hyps[a + 1..] {
            let prev = sub(hj.pos_target, hi.pos_target);
            let cand = sub(hj.pos_candidate, hi.pos_candidate);
            w_g += cos_angle(prev, cand);
        }
    }
    (lambda_a * w_a + lambda_d * w_d + lambda_g * w_g).max(0.0)
}

/// Result of the stage-1 linking optimization.
#[derive(Debug, Clone, Default)]
pub struct LinkOutcome {
    /// target id -> linked candidate index
    pub links: BTreeMap<u64, usize>,
    /// targets with candidates or group context but no committed link
    pub occluded: Vec<u64>,
    /// candidate indices claimed by no target
    pub new_targets: Vec<usize>,
}

/// Everything `link_tracklets` needs beyond the candidate set.
pub struct LinkContext<'a> {
    pub targets: &'a [&'a Tracklet],
    pub labels: &'a BTreeMap<u64, Individual>,
    pub group_graph: &'a GroupGraph,
    pub velocity_span: u64,
    pub person_scale: f64,
    pub degree: usize,
    pub kappa_range: (usize, usize),
    pub lambda_a: f64,
    pub lambda_d: f64,
    pub lambda_g: f64,
    pub search: ClusterSearchOpts,
    pub params: &'a TrackingParams,
}

/// Stage-1 optimization: build the tracking hypergraph over admissible
/// linking hypotheses (hyperedges only across group-graph-adjacent targets,
/// never sharing a target or a candidate), search cohesive clusters per seed
/// vertex, commit a consistent subset, and fall back to bipartite assignment
/// for targets that can join no hyperedge.
pub fn link_tracklets(candidates: &CandidateSet, ctx: &LinkContext) -> LinkOutcome {
    let by_id: BTreeMap<u64, &Tracklet> = ctx.targets.iter().map(|t| (t.id, *t)).collect();

    // vertices
    let mut vertices: Vec<LinkHypothesis> = Vec::new();
    for (&tid, list) in &candidates.per_target {
        let target = by_id[&tid];
        let label = ctx.labels.get(&tid).copied().unwrap_or(Individual::Walking);
        let t_last = target.last_frame().unwrap();
        let facing_t = target
            .facing_direction(t_last, label, None, ctx.velocity_span)
            .dir;
        let pos_t = target.foot_at(t_last).unwrap();
        for &k in list {
            let cand = &candidates.tracklets[k];
            let c_last = cand.last_frame().unwrap();
            let (c_label, _) = classify_individual(
                cand.estimate_velocity(c_last, ctx.velocity_span)
                    .map(norm)
                    .unwrap_or(0.0),
                &SpeedParams::default(),
                &[Individual::Standing, Individual::Walking, Individual::Running],
            );
            let facing_c = cand
                .facing_direction(c_last, c_label, None, ctx.velocity_span)
                .dir;
            vertices.push(LinkHypothesis {
                target_id: tid,
                candidate: k,
                appearance: appearance_affinity(target, cand, ctx.person_scale),
                facing_target: facing_t,
                facing_candidate: facing_c,
                pos_target: pos_t,
                pos_candidate: cand.foot_at(c_last).unwrap(),
            });
        }
    }

    let compatible = |a: &LinkHypothesis, b: &LinkHypothesis| {
        a.target_id != b.target_id
            && a.candidate != b.candidate
            && ctx.group_graph.adjacent(a.target_id, b.target_id)
    };

    // hyperedges, enumerated per seed vertex with a cap
    let m = ctx.degree;
    let mut h = WeightedHypergraph::new(vertices.len(), m);
    if vertices.len() >= m {
        for seed in 0..vertices.len() {
            let pool: Vec<usize> = (seed + 1..vertices.len())
                .filter(|&v| compatible(&vertices[seed], &vertices[v]))
                .collect();
            let mut edges: Vec<(Vec<usize>, f64)> = Vec::new();
            enumerate_extensions(&vertices, &pool, &compatible, m - 1, &mut vec![seed], &mut edges, ctx);
            if edges.len() > ctx.params.edge_cap {
                edges.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
                edges.truncate(ctx.params.edge_cap);
            }
            for (vs, w) in edges {
                h.add_edge(&vs, w);
            }
        }
    }

    // cohesive cluster search per seed vertex
    let mut solutions = Vec::new();
    for seed in 0..vertices.len() {
        if h.incident_edges(seed).is_empty() {
            continue;
        }
        solutions.push(cluster_search(&h, seed, ctx.kappa_range, &ctx.search));
    }
    let conflict = |a: usize, b: usize| {
        let (va, vb) = (&vertices[a], &vertices[b]);
        va.target_id == vb.target_id || va.candidate == vb.candidate
    };
    let accepted = select_consistent_clusters(solutions, conflict, m);

    let mut out = LinkOutcome::default();
    for sol in &accepted {
        for &v in &sol.members {
            let hyp = &vertices[v];
            out.links.entry(hyp.target_id).or_insert(hyp.candidate);
        }
    }

    // bipartite fallback for targets the hypergraph could not serve
    let unlinked: Vec<u64> = candidates
        .per_target
        .keys()
        .copied()
        .filter(|tid| !out.links.contains_key(tid))
        .collect();
    let claimed: Vec<usize> = out.links.values().copied().collect();
    if !unlinked.is_empty() {
        let mut rows: Vec<(u64, Vec<(usize, f64)>)> = Vec::new();
        for &tid in &unlinked {
            let opts: Vec<(usize, f64)> = candidates.per_target[&tid]
                .iter()
                .copied()
                .filter(|k| !claimed.contains(k))
                .map(|k| {
                    let aff =
                        appearance_affinity(by_id[&tid], &candidates.tracklets[k], ctx.person_scale);
                    (k, aff)
                })
                .collect();
            rows.push((tid, opts));
        }
        let free: Vec<usize> = rows
            .iter()
            .flat_map(|(_, o)| o.iter().map(|&(k, _)| k))
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        if !free.is_empty() {
            let cost: Vec<Vec<f64>> = rows
                .iter()
                .map(|(_, opts)| {
                    free.iter()
                        .map(|&k| {
                            opts.iter()
                                .find(|&&(o, _)| o == k)
                                .map(|&(_, aff)| 1.0 - aff)
                                .unwrap_or(1e9)
                        })
                        .collect()
                })
                .collect();
            for (row, col) in min_cost_assignment(&cost) {
                if cost[row][col] >= 1e9 {
                    continue;
                }
                out.links.insert(rows[row].0, free[col]);
            }
        }
    }

    out.occluded = by_id
        .keys()
        .copied()
        .filter(|tid| !out.links.contains_key(tid) && !candidates.exited.contains(tid))
        .collect();
    let linked: Vec<usize> = out.links.values().copied().collect();
    out.new_targets = (0..candidates.tracklets.len())
        .filter(|k| !linked.contains(k))
        .collect();
    out
}

#[allow(clippy::too_many_arguments)]
fn enumerate_extensions(
    vertices: &[LinkHypothesis],
    pool: &[usize],
    compatible: &impl Fn(&LinkHypothesis, &LinkHypothesis) -> bool,
    need: usize,
    partial: &mut Vec<usize>,
    out: &mut Vec<(Vec<usize>, f64)>,
    ctx: &LinkContext,
) {
    if need == 0 {
        let hyps: Vec<&LinkHypothesis> = partial.iter().map(|&v| &vertices[v]).collect();
        let w = edge_weight(&hyps, ctx.lambda_a, ctx.lambda_d, ctx.lambda_g);
        out.push((partial.clone(), w));
        return;
    }
    if out.len() > ctx.params.edge_cap * 4 {
        return;
    }
    for (i, &v) in pool.iter().enumerate() {
        if partial.iter().all(|&p| compatible(&vertices[p], &vertices[v])) {
            partial.push(v);
            enumerate_extensions(vertices, &pool[i + 1..], compatible, need - 1, partial, out, ctx);
            partial.pop();
        }
    }
}
