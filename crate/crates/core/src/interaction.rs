//! Stage 2 and 3: rule-based pairwise interaction scoring, hypothetical
//! trajectories for occluded targets, per-class recognition hypergraphs with
//! a joint optimization across classes, and collective-activity inference
//! from the committed pairwise labels.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::grouping::{p_corr_window, GroupingParams};
use crate::hypergraph::{
    cluster_search, select_consistent_clusters, ClusterSearchOpts, ClusterSolution,
    WeightedHypergraph,
};
use crate::tracking::Posteriors;
use crate::types::{
    cos_angle, norm, normalize, rotate, sub, BBox, Collective, Individual, Interaction, Tracklet,
    Vec2,
};

/// Whether an interaction requires the pair to be socially connected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Connectivity {
    Connected,
    Detached,
    /// the kernel carries no signal for this class
    Either,
}

/// Expected trend of the pair distance over a window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceTrend {
    Decreasing,
    Steady,
    Increasing,
    Any,
}

/// Expected relation between the two facing directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FacingRelation {
    Same,
    Opposite,
    /// headings keep turning, as in a dance
    Swirling,
    Any,
}

/// Expected spatial arrangement relative to the facing directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arrangement {
    /// the partner lies along the facing axis
    Front,
    /// the partner lies beside
    Side,
    Any,
}

/// Descriptive rule for one interaction class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionRule {
    pub mu_dist: f64,
    pub sigma_dist: f64,
    pub connectivity: Connectivity,
    pub activities: (Individual, Individual),
    pub trend: DistanceTrend,
    pub facing: FacingRelation,
    pub arrangement: Arrangement,
}

/// Shared shape parameters of the rule components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuleShape {
    /// Half-width of the flat distance band, in sigmas.
    pub band_halfwidth: f64,
    /// Distance-trend margin separating steady from moving, px per window.
    pub trend_margin: f64,
    /// Softness of the trend boundaries, px.
    pub trend_sigma: f64,
    /// Heading angle below which two facings count as the same, degrees.
    pub same_angle_deg: f64,
    /// Heading angle above which two facings count as opposite, degrees.
    /// Low enough that three people facing a common point (pairwise 120
    /// degrees) still register.
    pub opposite_angle_deg: f64,
    /// Softness of the facing-angle boundaries, degrees.
    pub angle_sigma_deg: f64,
    /// Circular heading deviation above which a target counts as swirling,
    /// degrees.
    pub swirl_std_deg: f64,
    /// Pairs farther than `gate_mult * (mu + band_halfwidth * sigma)` are
    /// never joined in one recognition hyperedge.
    pub gate_mult: f64,
}

impl Default for RuleShape {
    fn default() -> Self {
        RuleShape {
            band_halfwidth: 2.0,
            trend_margin: 30.0,
            trend_sigma: 10.0,
            same_angle_deg: 45.0,
            opposite_angle_deg: 110.0,
            angle_sigma_deg: 10.0,
            swirl_std_deg: 30.0,
            gate_mult: 1.5,
        }
    }
}

/// The rule table: one descriptive rule per interaction class plus the map
/// from collective classes to their characteristic interactions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InteractionRuleTable {
    pub rules: BTreeMap<Interaction, InteractionRule>,
    pub collective_map: BTreeMap<Collective, Vec<Interaction>>,
    pub shape: RuleShape,
}

impl Default for InteractionRuleTable {
    fn default() -> Self {
        use Arrangement as Ar;
        use Connectivity::*;
        use DistanceTrend as Tr;
        use FacingRelation as Fc;
        use Individual::*;
        use Interaction::*;

        let rule = |mu: f64,
                    sigma: f64,
                    conn: Connectivity,
                    acts: (Individual, Individual),
                    trend: Tr,
                    facing: Fc,
                    arr: Ar| InteractionRule {
            mu_dist: mu,
            sigma_dist: sigma,
            connectivity: conn,
            activities: acts,
            trend,
            facing,
            arrangement: arr,
        };

        let mut rules = BTreeMap::new();
        rules.insert(AP, rule(90.0, 45.0, Detached, (Walking, Walking), Tr::Decreasing, Fc::Any, Ar::Front));
        // one person stays while the other walks off
        rules.insert(LV, rule(90.0, 45.0, Detached, (Standing, Walking), Tr::Increasing, Fc::Any, Ar::Front));
        rules.insert(PB, rule(90.0, 45.0, Detached, (Walking, Walking), Tr::Any, Fc::Any, Ar::Any));
        rules.insert(FE, rule(60.0, 30.0, Connected, (Standing, Standing), Tr::Steady, Fc::Opposite, Ar::Front));
        rules.insert(WS, rule(60.0, 30.0, Connected, (Walking, Walking), Tr::Steady, Fc::Same, Ar::Side));
        rules.insert(SR, rule(60.0, 30.0, Connected, (Standing, Standing), Tr::Steady, Fc::Same, Ar::Front));
        rules.insert(SS, rule(60.0, 30.0, Connected, (Standing, Standing), Tr::Steady, Fc::Same, Ar::Side));
        rules.insert(WO, rule(90.0, 45.0, Detached, (Walking, Walking), Tr::Increasing, Fc::Opposite, Ar::Front));
        rules.insert(WR, rule(60.0, 30.0, Connected, (Walking, Walking), Tr::Steady, Fc::Same, Ar::Front));
        rules.insert(RS, rule(60.0, 30.0, Connected, (Running, Running), Tr::Steady, Fc::Same, Ar::Side));
        rules.insert(RR, rule(60.0, 30.0, Connected, (Running, Running), Tr::Steady, Fc::Same, Ar::Front));
        // opposed orbiting velocities defeat the proxemics kernel, so DT
        // ignores it
        rules.insert(DT, rule(60.0, 30.0, Either, (Walking, Walking), Tr::Steady, Fc::Swirling, Ar::Any));

        let mut collective_map = BTreeMap::new();
        collective_map.insert(Collective::Crossing, vec![WS]);
        collective_map.insert(Collective::Waiting, vec![SS]);
        collective_map.insert(Collective::Queuing, vec![SR]);
        collective_map.insert(Collective::Walking, vec![WS, WR]);
        collective_map.insert(Collective::Talking, vec![FE]);
        collective_map.insert(Collective::Gathering, vec![AP]);
        collective_map.insert(Collective::Dismissal, vec![WO, LV]);
        collective_map.insert(Collective::Chasing, vec![RR]);
        collective_map.insert(Collective::Jogging, vec![RS]);
        collective_map.insert(Collective::Dancing, vec![DT]);

        InteractionRuleTable {
            rules,
            collective_map,
            shape: RuleShape::default(),
        }
    }
}

impl InteractionRuleTable {
    /// Upper distance gate for joining two targets in one hyperedge of the
    /// given class.
    pub fn distance_gate(&self, class: Interaction) -> Option<f64> {
        let r = self.rules.get(&class)?;
        Some(self.shape.gate_mult * (r.mu_dist + self.shape.band_halfwidth * r.sigma_dist))
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Window statistics of a target pair that the rules consume.
#[derive(Debug, Clone, PartialEq)]
pub struct PairFeatures {
    pub mean_distance: f64,
    /// distance at the last common frame minus at the first
    pub distance_change: f64,
    /// window-mean social-connectivity kernel
    pub connectivity: f64,
    /// circular mean headings
    pub heading_i: Vec2,
    pub heading_j: Vec2,
    /// circular standard deviations of the headings, radians
    pub heading_std_i: f64,
    pub heading_std_j: f64,
    /// mean foot_j - foot_i
    pub relative: Vec2,
}

fn circular_stats(dirs: &[Vec2]) -> (Vec2, f64) {
    if dirs.is_empty() {
        return ([1.0, 0.0], 0.0);
    }
    let mx: f64 = dirs.iter().map(|d| d[0]).sum::<f64>() / dirs.len() as f64;
    let my: f64 = dirs.iter().map(|d| d[1]).sum::<f64>() / dirs.len() as f64;
    let r = (mx * mx + my * my).sqrt();
    let mean = normalize([mx, my]).unwrap_or([1.0, 0.0]);
    let std = if r >= 1.0 { 0.0 } else { (-2.0 * r.max(1e-12).ln()).sqrt() };
    (mean, std)
}

/// Collect the pair statistics over the common frames of a window.
/// `None` when the pair never coexists there.
#[allow(clippy::too_many_arguments)]
pub fn pair_features(
    xi: &Tracklet,
    xj: &Tracklet,
    act_i: Individual,
    act_j: Individual,
    window: (u64, u64),
    span: u64,
    grouping: &GroupingParams,
) -> Option<PairFeatures> {
    let lo = window.0.max(xi.first_frame()?).max(xj.first_frame()?);
    let hi = window.1.min(xi.last_frame()?).min(xj.last_frame()?);
    if lo > hi {
        return None;
    }

    let mut dists = Vec::new();
    let mut rel_sum = [0.0, 0.0];
    let mut dirs_i = Vec::new();
    let mut dirs_j = Vec::new();
    for f in lo..=hi {
        let (Some(pi), Some(pj)) = (xi.foot_at(f), xj.foot_at(f)) else {
            continue;
        };
        let rel = sub(pj, pi);
        dists.push(norm(rel));
        rel_sum[0] += rel[0];
        rel_sum[1] += rel[1];
        dirs_i.push(xi.facing_direction(f, act_i, None, span).dir);
        dirs_j.push(xj.facing_direction(f, act_j, None, span).dir);
    }
    if dists.is_empty() {
        return None;
    }
    let n = dists.len() as f64;
    let (heading_i, heading_std_i) = circular_stats(&dirs_i);
    let (heading_j, heading_std_j) = circular_stats(&dirs_j);
    Some(PairFeatures {
        mean_distance: dists.iter().sum::<f64>() / n,
        distance_change: dists[dists.len() - 1] - dists[0],
        connectivity: p_corr_window(xi, xj, act_i, act_j, lo..=hi, span, grouping).unwrap_or(0.0),
        heading_i,
        heading_j,
        heading_std_i,
        heading_std_j,
        relative: [rel_sum[0] / n, rel_sum[1] / n],
    })
}

/// The six component probabilities of one rule evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentProbs {
    pub distance: f64,
    pub connectivity: f64,
    pub activity: f64,
    pub trend: f64,
    pub facing: f64,
    pub arrangement: f64,
}

impl ComponentProbs {
    pub fn score(&self) -> f64 {
        self.distance
            * self.connectivity
            * self.activity
            * self.trend
            * self.facing
            * self.arrangement
    }
}

/// Evaluate one interaction rule against pair features and the two
/// individual-activity posteriors. Every component lies in [0, 1].
pub fn component_probs(
    features: &PairFeatures,
    post_i: &Posteriors,
    post_j: &Posteriors,
    rule: &InteractionRule,
    shape: &RuleShape,
) -> ComponentProbs {
    // flat band of width 2b sigma around the preferred distance
    let excess = (features.mean_distance - rule.mu_dist).abs()
        - shape.band_halfwidth * rule.sigma_dist;
    let distance = if excess <= 0.0 {
        1.0
    } else {
        (-excess * excess / (2.0 * rule.sigma_dist * rule.sigma_dist)).exp()
    };

    let connectivity = match rule.connectivity {
        Connectivity::Connected => features.connectivity,
        Connectivity::Detached => 1.0 - features.connectivity,
        Connectivity::Either => 1.0,
    };

    let (a1, a2) = rule.activities;
    let activity = (post_i.get(a1) * post_j.get(a2))
        .max(post_i.get(a2) * post_j.get(a1))
        .sqrt();

    let dg = features.distance_change;
    let toward = sigmoid((dg + shape.trend_margin) / shape.trend_sigma);
    let away = sigmoid((dg - shape.trend_margin) / shape.trend_sigma);
    let trend = match rule.trend {
        DistanceTrend::Decreasing => 1.0 - toward,
        DistanceTrend::Steady => (toward - away).clamp(0.0, 1.0),
        DistanceTrend::Increasing => away,
        DistanceTrend::Any => 1.0,
    };

    let angle = crate::types::angle_between(features.heading_i, features.heading_j);
    let angle_sigma = shape.angle_sigma_deg.to_radians();
    let swirl_std = features.heading_std_i.max(features.heading_std_j);
    let p_swirl = sigmoid(
        (swirl_std - shape.swirl_std_deg.to_radians()) / shape.angle_sigma_deg.to_radians(),
    );
    let facing = match rule.facing {
        FacingRelation::Same => {
            (1.0 - p_swirl) * sigmoid((shape.same_angle_deg.to_radians() - angle) / angle_sigma)
        }
        FacingRelation::Opposite => {
            (1.0 - p_swirl)
                * sigmoid((angle - shape.opposite_angle_deg.to_radians()) / angle_sigma)
        }
        FacingRelation::Swirling => p_swirl,
        FacingRelation::Any => 1.0,
    };

    let ci = cos_angle(features.relative, features.heading_i).abs();
    let cj = cos_angle(features.relative, features.heading_j).abs();
    let arrangement = match rule.arrangement {
        Arrangement::Front => ci.max(cj),
        Arrangement::Side => 1.0 - ci.min(cj),
        Arrangement::Any => 1.0,
    };

    ComponentProbs {
        distance,
        connectivity,
        activity,
        trend,
        facing,
        arrangement,
    }
}

/// Probability that the pair performs `class`, or `None` when the run's rule
/// table has no rule for it.
pub fn interaction_score(
    features: &PairFeatures,
    post_i: &Posteriors,
    post_j: &Posteriors,
    class: Interaction,
    table: &InteractionRuleTable,
) -> Option<f64> {
    let rule = table.rules.get(&class)?;
    Some(component_probs(features, post_i, post_j, rule, &table.shape).score())
}

/// Parameters of hypothetical-trajectory generation for occluded targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecoveryParams {
    /// Heading rotations applied to the extrapolated motion, degrees.
    pub rotations_deg: Vec<f64>,
    /// Spatial grid step for standing targets, px.
    pub stand_step: f64,
    /// History length for the motion model behind the extrapolation; longer
    /// than the facing span because a whole window rides on this slope.
    pub motion_span: u64,
    pub enabled: bool,
}

impl Default for RecoveryParams {
    fn default() -> Self {
        RecoveryParams {
            rotations_deg: vec![5.0, 10.0, 15.0, 20.0],
            stand_step: 10.0,
            motion_span: 20,
            enabled: true,
        }
    }
}

/// One hypothetical continuation of an occluded target.
#[derive(Debug, Clone)]
pub struct Hypothetical {
    pub target: u64,
    pub index: usize,
    pub tracklet: Tracklet,
    /// set when the target had too little history for a motion model
    pub fallback: bool,
}

fn bbox_at(foot: Vec2, template: &BBox) -> BBox {
    BBox::new(
        foot[0] - template.w / 2.0,
        foot[1] - template.h,
        template.w,
        template.h,
    )
}

/// Generate hypothetical continuations of an occluded target across a window:
/// the straight extrapolation plus rotated variants for a moving target, a
/// spatial perturbation grid for a standing one.
pub fn generate_hypothetical(
    target: &Tracklet,
    label: Individual,
    window: (u64, u64),
    span: u64,
    params: &RecoveryParams,
) -> Vec<Hypothetical> {
    let Some(last) = target.last_frame() else {
        return Vec::new();
    };
    let origin = target.foot_at(last).unwrap();
    let state = target.state_at(last).unwrap();
    let template = state.bbox;
    let appearance = state.appearance.clone();
    let velocity = target
        .estimate_velocity(last, params.motion_span.max(span))
        .ok();

    let hold = |index: usize, offset: Vec2, fallback: bool| {
        let mut t = Tracklet::new(target.id);
        for f in window.0.max(last + 1)..=window.1 {
            let foot = [origin[0] + offset[0], origin[1] + offset[1]];
            t.push(f, bbox_at(foot, &template), appearance.clone());
        }
        Hypothetical {
            target: target.id,
            index,
            tracklet: t,
            fallback,
        }
    };

    let moving = label != Individual::Standing && velocity.map(norm).unwrap_or(0.0) > 1e-9;
    if !moving {
        if velocity.is_none() && label != Individual::Standing {
            return vec![hold(0, [0.0, 0.0], true)];
        }
        let s = params.stand_step;
        let mut out = Vec::new();
        for (index, (gx, gy)) in (-1..=1)
            .flat_map(|gx| (-1..=1).map(move |gy| (gx, gy)))
            .enumerate()
        {
            out.push(hold(index, [s * gx as f64, s * gy as f64], false));
        }
        return out;
    }

    let v = velocity.unwrap();
    let mut angles = vec![0.0];
    for &deg in &params.rotations_deg {
        angles.push(deg.to_radians());
        angles.push(-deg.to_radians());
    }
    angles
        .into_iter()
        .enumerate()
        .map(|(index, ang)| {
            let vr = rotate(v, ang);
            let mut t = Tracklet::new(target.id);
            for f in window.0.max(last + 1)..=window.1 {
                let dt = (f - last) as f64;
                let foot = [origin[0] + vr[0] * dt, origin[1] + vr[1] * dt];
                t.push(f, bbox_at(foot, &template), appearance.clone());
            }
            Hypothetical {
                target: target.id,
                index,
                tracklet: t,
                fallback: false,
            }
        })
        .collect()
}

/// A vertex of the recognition hypergraphs: an observed target or one
/// hypothetical continuation of an occluded target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RecogVertex {
    Real(u64),
    Hyp(u64, usize),
}

impl RecogVertex {
    pub fn target(&self) -> u64 {
        match *self {
            RecogVertex::Real(t) | RecogVertex::Hyp(t, _) => t,
        }
    }
}

/// Everything the recognizer needs to know about one vertex.
#[derive(Debug, Clone)]
pub struct RecogVertexData<'a> {
    pub vertex: RecogVertex,
    pub tracklet: &'a Tracklet,
    pub label: Individual,
    pub post: Posteriors,
}

/// Per-class interaction scores for every admissible vertex pair.
pub type PairScores = BTreeMap<(usize, usize), BTreeMap<Interaction, f64>>;

/// Score every vertex pair under every interaction class of the alphabet.
/// Pairs sharing a target are skipped.
pub fn score_pairs(
    verts: &[RecogVertexData],
    classes: &[Interaction],
    window: (u64, u64),
    span: u64,
    table: &InteractionRuleTable,
    grouping: &GroupingParams,
) -> PairScores {
    let mut scores = PairScores::new();
    for i in 0..verts.len() {
        for j in i + 1..verts.len() {
            if verts[i].vertex.target() == verts[j].vertex.target() {
                continue;
            }
            let Some(features) = pair_features(
                verts[i].tracklet,
                verts[j].tracklet,
                verts[i].label,
                verts[j].label,
                window,
                span,
                grouping,
            ) else {
                continue;
            };
            let mut per_class = BTreeMap::new();
            for &class in classes {
                if class == Interaction::NA {
                    continue;
                }
                if let Some(s) =
                    interaction_score(&features, &verts[i].post, &verts[j].post, class, table)
                {
                    per_class.insert(class, s);
                }
            }
            scores.insert((i, j), per_class);
        }
    }
    scores
}

fn pair_score(scores: &PairScores, i: usize, j: usize, class: Interaction) -> Option<f64> {
    let key = if i < j { (i, j) } else { (j, i) };
    scores.get(&key).and_then(|m| m.get(&class)).copied()
}

/// Build the recognition hypergraph of one class: hyperedges over `m`-subsets
/// of vertices with pairwise-distinct targets, all pairs within the class
/// distance gate; weight is the mean pairwise score.
pub fn build_recognition_hypergraph(
    verts: &[RecogVertexData],
    scores: &PairScores,
    class: Interaction,
    m: usize,
    table: &InteractionRuleTable,
) -> WeightedHypergraph {
    let mut h = WeightedHypergraph::new(verts.len(), m);
    let Some(gate) = table.distance_gate(class) else {
        return h;
    };
    // pairs admissible for this class
    let ok = |i: usize, j: usize| {
        let key = if i < j { (i, j) } else { (j, i) };
        let Some(per_class) = scores.get(&key) else {
            return false;
        };
        if !per_class.contains_key(&class) {
            return false;
        }
        // the score already penalizes distance; the hard gate just keeps the
        // enumeration sparse
        match last_common_foot(verts[i].tracklet, verts[j].tracklet) {
            Some(d) => d <= gate,
            None => false,
        }
    };

    let mut subset = Vec::with_capacity(m);
    build_edges(&mut h, verts, scores, class, m, 0, &mut subset, &ok);
    h
}

fn last_common_foot(a: &Tracklet, b: &Tracklet) -> Option<f64> {
    let lo = a.first_frame()?.max(b.first_frame()?);
    let hi = a.last_frame()?.min(b.last_frame()?);
    if lo > hi {
        return None;
    }
    Some(norm(sub(b.foot_at(hi)?, a.foot_at(hi)?)))
}

#[allow(clippy::too_many_arguments)]
fn build_edges(
    h: &mut WeightedHypergraph,
    verts: &[RecogVertexData],
    scores: &PairScores,
    class: Interaction,
    m: usize,
    from: usize,
    subset: &mut Vec<usize>,
    ok: &impl Fn(usize, usize) -> bool,
) {
    if subset.len() == m {
        let mut sum = 0.0;
        let mut n = 0usize;
        for (a, &i) in subset.iter().enumerate() {
            for &j in &subset[a + 1..] {
                sum += pair_score(scores, i, j, class).unwrap_or(0.0);
                n += 1;
            }
        }
        let w = sum / n as f64;
        if w > 1e-9 {
            h.add_edge(subset, w);
        }
        return;
    }
    for v in from..verts.len() {
        if subset.iter().all(|&u| {
            verts[u].vertex.target() != verts[v].vertex.target() && ok(u, v)
        }) {
            subset.push(v);
            build_edges(h, verts, scores, class, m, v + 1, subset, ok);
            subset.pop();
        }
    }
}

/// Result of the joint recognition optimization.
#[derive(Debug, Clone, Default)]
pub struct RecognitionOutcome {
    /// committed label and probability per real-target pair, keyed (lo, hi)
    pub pair_labels: BTreeMap<(u64, u64), (Interaction, f64)>,
    /// accepted hypothetical index per occluded target
    pub recovered: BTreeMap<u64, usize>,
    /// accepted clusters, for inspection
    pub clusters: Vec<(Interaction, Vec<RecogVertex>)>,
}

/// Jointly optimize all per-class recognition hypergraphs: search cohesive
/// clusters per class independently, then commit a globally consistent set
/// (no target appears in two clusters). Pairs left uncovered stay
/// unlabelled; the pipeline reads them as the residual class.
#[allow(clippy::too_many_arguments)]
pub fn optimize_recognition(
    verts: &[RecogVertexData],
    classes: &[Interaction],
    window: (u64, u64),
    span: u64,
    m: usize,
    kappa: (usize, usize),
    table: &InteractionRuleTable,
    grouping: &GroupingParams,
    search: &ClusterSearchOpts,
) -> RecognitionOutcome {
    let scores = score_pairs(verts, classes, window, span, table, grouping);
    let n = verts.len();

    let mut tagged: Vec<ClusterSolution> = Vec::new();
    for (ci, &class) in classes.iter().enumerate() {
        if class == Interaction::NA {
            continue;
        }
        let h = build_recognition_hypergraph(verts, &scores, class, m, table);
        if h.edge_count() == 0 {
            continue;
        }
        for seed in 0..n {
            if h.incident_edges(seed).is_empty() {
                continue;
            }
            let mut sol = cluster_search(&h, seed, kappa, search);
            // shift into a per-class index block so one selection pass can
            // arbitrate across classes
            sol.seed += ci * n;
            for v in &mut sol.members {
                *v += ci * n;
            }
            tagged.push(sol);
        }
    }

    let conflict = |a: usize, b: usize| {
        verts[a % n].vertex.target() == verts[b % n].vertex.target()
    };
    let accepted = select_consistent_clusters(tagged, conflict, m);

    let mut out = RecognitionOutcome::default();
    for sol in accepted {
        let class = classes[sol.members[0] / n];
        let members: Vec<usize> = sol.members.iter().map(|&v| v % n).collect();
        out.clusters.push((
            class,
            members.iter().map(|&v| verts[v].vertex).collect(),
        ));
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                let p = pair_score(&scores, i, j, class).unwrap_or(0.0);
                if let (RecogVertex::Real(ti), RecogVertex::Real(tj)) =
                    (verts[i].vertex, verts[j].vertex)
                {
                    let key = if ti < tj { (ti, tj) } else { (tj, ti) };
                    out.pair_labels.insert(key, (class, p));
                }
            }
        }
        for &v in &members {
            if let RecogVertex::Hyp(t, idx) = verts[v].vertex {
                out.recovered.insert(t, idx);
            }
        }
    }
    out
}

/// Probability that a target joins a collective activity, given the
/// probabilities of its characteristic interactions with the others:
/// one confirmed partner suffices, more only help.
pub fn collective_prob(partner_probs: &[f64]) -> f64 {
    1.0 - partner_probs.iter().map(|p| 1.0 - p).product::<f64>()
}

/// Per-target posterior over the collective classes of the run.
pub fn collective_posteriors(
    target_ids: &[u64],
    pair_labels: &BTreeMap<(u64, u64), (Interaction, f64)>,
    classes: &[Collective],
    table: &InteractionRuleTable,
) -> BTreeMap<u64, BTreeMap<Collective, f64>> {
    let mut out = BTreeMap::new();
    for &t in target_ids {
        let mut per_class = BTreeMap::new();
        for &c in classes {
            let Some(characteristic) = table.collective_map.get(&c) else {
                continue;
            };
            let probs: Vec<f64> = pair_labels
                .iter()
                .filter(|(&(a, b), &(label, _))| {
                    (a == t || b == t) && characteristic.contains(&label)
                })
                .map(|(_, &(_, p))| p)
                .collect();
            let p = collective_prob(&probs);
            if p > 0.0 {
                per_class.insert(c, p);
            }
        }
        out.insert(t, per_class);
    }
    out
}

/// Scene-level label: the collective class with the most participants, where
/// a target participates in its maximum-posterior class. Ties go to the
/// class listed first in the run alphabet; `None` when nobody participates.
pub fn scene_label(
    posteriors: &BTreeMap<u64, BTreeMap<Collective, f64>>,
    classes: &[Collective],
) -> Option<Collective> {
    let mut counts: BTreeMap<Collective, usize> = BTreeMap::new();
    for per_class in posteriors.values() {
        let best = classes
            .iter()
            .filter_map(|&c| per_class.get(&c).map(|&p| (c, p)))
            .fold(None::<(Collective, f64)>, |acc, (c, p)| match acc {
                Some((_, bp)) if bp >= p => acc,
                _ => Some((c, p)),
            });
        if let Some((c, _)) = best {
            *counts.entry(c).or_insert(0) += 1;
        }
    }
    classes
        .iter()
        .copied()
        .filter_map(|c| counts.get(&c).map(|&n| (c, n)))
        .max_by_key(|&(c, n)| {
            // stable tie-break: earlier alphabet position wins
            let pos = classes.iter().position(|&x| x == c).unwrap();
            (n, usize::MAX - pos)
        })
        .map(|(c, _)| c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn features(
        mean_distance: f64,
        distance_change: f64,
        connectivity: f64,
        heading_i: Vec2,
        heading_j: Vec2,
        relative: Vec2,
    ) -> PairFeatures {
        PairFeatures {
            mean_distance,
            distance_change,
            connectivity,
            heading_i,
            heading_j,
            heading_std_i: 0.0,
            heading_std_j: 0.0,
            relative,
        }
    }

    fn post(label: Individual) -> Posteriors {
        match label {
            Individual::Standing => Posteriors { standing: 0.98, walking: 0.02, running: 0.0 },
            Individual::Walking => Posteriors { standing: 0.01, walking: 0.97, running: 0.02 },
            Individual::Running => Posteriors { standing: 0.0, walking: 0.03, running: 0.97 },
        }
    }

    #[test]
    fn face_to_face_pair_scores_high() {
        let table = InteractionRuleTable::default();
        let f = features(55.0, 0.0, 0.9, [1.0, 0.0], [-1.0, 0.0], [55.0, 0.0]);
        let s = interaction_score(
            &f,
            &post(Individual::Standing),
            &post(Individual::Standing),
            Interaction::FE,
            &table,
        )
        .unwrap();
        assert!(s > 0.7, "FE score {s}");
        // and clearly beats side-by-side standing for this geometry
        let ss = interaction_score(
            &f,
            &post(Individual::Standing),
            &post(Individual::Standing),
            Interaction::SS,
            &table,
        )
        .unwrap();
        assert!(s > 5.0 * ss, "FE {s} vs SS {ss}");
    }

    #[test]
    fn side_by_side_walkers_score_high() {
        let table = InteractionRuleTable::default();
        let f = features(55.0, 0.0, 0.9, [1.0, 0.0], [1.0, 0.0], [0.0, 55.0]);
        let ws = interaction_score(
            &f,
            &post(Individual::Walking),
            &post(Individual::Walking),
            Interaction::WS,
            &table,
        )
        .unwrap();
        assert!(ws > 0.7, "WS score {ws}");
        let wr = interaction_score(
            &f,
            &post(Individual::Walking),
            &post(Individual::Walking),
            Interaction::WR,
            &table,
        )
        .unwrap();
        assert!(ws > 5.0 * wr, "WS {ws} vs WR {wr}");
    }

    #[test]
    fn queue_geometry_prefers_row_over_side() {
        let table = InteractionRuleTable::default();
        // both face along the queue axis; partner ahead
        let f = features(55.0, 0.0, 0.9, [0.0, 1.0], [0.0, 1.0], [0.0, 55.0]);
        let sr = interaction_score(&f, &post(Individual::Standing), &post(Individual::Standing), Interaction::SR, &table).unwrap();
        let ss = interaction_score(&f, &post(Individual::Standing), &post(Individual::Standing), Interaction::SS, &table).unwrap();
        assert!(sr > 5.0 * ss, "SR {sr} vs SS {ss}");
    }

    #[test]
    fn approach_needs_shrinking_distance() {
        let table = InteractionRuleTable::default();
        let approaching = features(100.0, -60.0, 0.6, [1.0, 0.0], [-1.0, 0.0], [100.0, 0.0]);
        let steady = features(100.0, 0.0, 0.6, [1.0, 0.0], [-1.0, 0.0], [100.0, 0.0]);
        let p = post(Individual::Walking);
        let a = interaction_score(&approaching, &p, &p, Interaction::AP, &table).unwrap();
        let b = interaction_score(&steady, &p, &p, Interaction::AP, &table).unwrap();
        assert!(a > 10.0 * b, "AP approach {a} vs steady {b}");
    }

    #[test]
    fn swirling_headings_activate_dancing() {
        let table = InteractionRuleTable::default();
        let mut f = features(55.0, 0.0, 0.9, [1.0, 0.0], [-1.0, 0.0], [55.0, 0.0]);
        f.heading_std_i = 50f64.to_radians();
        f.heading_std_j = 50f64.to_radians();
        let p = post(Individual::Walking);
        let dt = interaction_score(&f, &p, &p, Interaction::DT, &table).unwrap();
        assert!(dt > 0.6, "DT score {dt}");
        // swirl suppresses the fixed-relation classes
        let fe = interaction_score(&f, &post(Individual::Standing), &post(Individual::Standing), Interaction::FE, &table).unwrap();
        assert!(dt > 5.0 * fe);
    }

    #[test]
    fn components_stay_in_unit_interval() {
        use rand::Rng;
        let table = InteractionRuleTable::default();
        let mut rng = rand::thread_rng();
        for _ in 0..100_000 {
            let f = PairFeatures {
                mean_distance: rng.gen_range(0.0..500.0),
                distance_change: rng.gen_range(-200.0..200.0),
                connectivity: rng.gen_range(0.0..1.0),
                heading_i: rotate([1.0, 0.0], rng.gen_range(0.0..std::f64::consts::TAU)),
                heading_j: rotate([1.0, 0.0], rng.gen_range(0.0..std::f64::consts::TAU)),
                heading_std_i: rng.gen_range(0.0..2.0),
                heading_std_j: rng.gen_range(0.0..2.0),
                relative: [rng.gen_range(-300.0..300.0), rng.gen_range(-300.0..300.0)],
            };
            let s = rng.gen_range(0.0..1.0f64);
            let w = rng.gen_range(0.0..1.0 - s);
            let p = Posteriors { standing: s, walking: w, running: 1.0 - s - w };
            for (&class, rule) in &table.rules {
                let c = component_probs(&f, &p, &p, rule, &table.shape);
                for v in [c.distance, c.connectivity, c.activity, c.trend, c.facing, c.arrangement, c.score()] {
                    assert!((0.0..=1.0 + 1e-12).contains(&v), "{class:?} component {v}");
                }
            }
        }
    }

    #[test]
    fn circular_stats_constant_heading() {
        let dirs = vec![[0.0, 1.0]; 20];
        let (mean, std) = circular_stats(&dirs);
        assert_relative_eq!(mean[1], 1.0, epsilon = 1e-12);
        assert_relative_eq!(std, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn circular_stats_oscillating_heading_has_spread() {
        let dirs: Vec<Vec2> = (0..60)
            .map(|k| {
                let phase = (k as f64 / 8.0 * std::f64::consts::TAU).sin();
                rotate([1.0, 0.0], 50f64.to_radians() * phase)
            })
            .collect();
        let (_, std) = circular_stats(&dirs);
        assert!(std > 30f64.to_radians(), "std {}", std.to_degrees());
    }

    fn straight(id: u64, frames: std::ops::Range<u64>, x0: f64, y0: f64, v: Vec2) -> Tracklet {
        let mut t = Tracklet::new(id);
        for f in frames {
            let dt = f as f64;
            t.push(
                f,
                BBox::new(x0 + v[0] * dt - 12.0, y0 + v[1] * dt - 60.0, 24.0, 60.0),
                None,
            );
        }
        t
    }

    #[test]
    fn hypothetical_count_for_walker() {
        let t = straight(1, 0..10, 0.0, 100.0, [2.0, 0.0]);
        let hyps = generate_hypothetical(&t, Individual::Walking, (10, 20), 5, &RecoveryParams::default());
        assert_eq!(hyps.len(), 9);
        assert!(hyps.iter().all(|h| !h.fallback));
        // the straight hypothesis extrapolates the motion exactly
        let foot = hyps[0].tracklet.foot_at(20).unwrap();
        assert_relative_eq!(foot[0], 40.0, epsilon = 1e-9);
        // indices are distinct
        let mut idx: Vec<usize> = hyps.iter().map(|h| h.index).collect();
        idx.sort_unstable();
        idx.dedup();
        assert_eq!(idx.len(), 9);
    }

    #[test]
    fn hypothetical_grid_for_stander() {
        let t = straight(1, 0..10, 50.0, 100.0, [0.0, 0.0]);
        let hyps = generate_hypothetical(&t, Individual::Standing, (10, 20), 5, &RecoveryParams::default());
        assert_eq!(hyps.len(), 9);
        let mut feet: Vec<(i64, i64)> = hyps
            .iter()
            .map(|h| {
                let f = h.tracklet.foot_at(15).unwrap();
                (f[0].round() as i64, f[1].round() as i64)
            })
            .collect();
        feet.sort_unstable();
        feet.dedup();
        assert_eq!(feet.len(), 9);
    }

    #[test]
    fn hypothetical_fallback_for_short_history() {
        let t = straight(1, 0..1, 50.0, 100.0, [2.0, 0.0]);
        let hyps = generate_hypothetical(&t, Individual::Walking, (1, 10), 5, &RecoveryParams::default());
        assert_eq!(hyps.len(), 1);
        assert!(hyps[0].fallback);
    }

    fn walker_pair_verts(gap: f64) -> (Tracklet, Tracklet, Tracklet) {
        let a = straight(1, 0..20, 0.0, 100.0, [2.0, 0.0]);
        let b = straight(2, 0..20, 0.0, 100.0 + gap, [2.0, 0.0]);
        let c = straight(3, 0..20, 0.0, 100.0 + 2.0 * gap, [2.0, 0.0]);
        (a, b, c)
    }

    #[test]
    fn recognition_groups_three_side_by_side_walkers() {
        let (a, b, c) = walker_pair_verts(55.0);
        let verts: Vec<RecogVertexData> = [&a, &b, &c]
            .iter()
            .map(|t| RecogVertexData {
                vertex: RecogVertex::Real(t.id),
                tracklet: t,
                label: Individual::Walking,
                post: post(Individual::Walking),
            })
            .collect();
        let table = InteractionRuleTable::default();
        let grouping = GroupingParams::default();
        let out = optimize_recognition(
            &verts,
            &[Interaction::WS, Interaction::FE, Interaction::NA],
            (0, 19),
            5,
            3,
            (3, 3),
            &table,
            &grouping,
            &ClusterSearchOpts::default(),
        );
        assert_eq!(out.clusters.len(), 1);
        assert_eq!(out.clusters[0].0, Interaction::WS);
        assert_eq!(out.pair_labels.len(), 3);
        assert!(out.pair_labels.values().all(|&(l, p)| l == Interaction::WS && p > 0.5));
    }

    #[test]
    fn recognition_class_order_is_irrelevant() {
        let (a, b, c) = walker_pair_verts(55.0);
        let verts: Vec<RecogVertexData> = [&a, &b, &c]
            .iter()
            .map(|t| RecogVertexData {
                vertex: RecogVertex::Real(t.id),
                tracklet: t,
                label: Individual::Walking,
                post: post(Individual::Walking),
            })
            .collect();
        let table = InteractionRuleTable::default();
        let grouping = GroupingParams::default();
        let run = |classes: &[Interaction]| {
            optimize_recognition(
                &verts,
                classes,
                (0, 19),
                5,
                3,
                (3, 3),
                &table,
                &grouping,
                &ClusterSearchOpts::default(),
            )
            .pair_labels
        };
        let forward = run(&[Interaction::WS, Interaction::WR, Interaction::FE, Interaction::NA]);
        let backward = run(&[Interaction::FE, Interaction::WR, Interaction::WS, Interaction::NA]);
        assert_eq!(forward, backward);
    }

    #[test]
    fn recovered_hypothesis_fills_occlusion() {
        // two real walkers plus hypotheses of a third whose straight
        // extrapolation stays in formation
        let a = straight(1, 0..20, 0.0, 100.0, [2.0, 0.0]);
        let b = straight(2, 0..20, 0.0, 155.0, [2.0, 0.0]);
        let occluded = straight(3, 0..10, 0.0, 210.0, [2.0, 0.0]);
        let hyps = generate_hypothetical(
            &occluded,
            Individual::Walking,
            (10, 19),
            5,
            &RecoveryParams::default(),
        );
        let mut verts: Vec<RecogVertexData> = vec![
            RecogVertexData {
                vertex: RecogVertex::Real(1),
                tracklet: &a,
                label: Individual::Walking,
                post: post(Individual::Walking),
            },
            RecogVertexData {
                vertex: RecogVertex::Real(2),
                tracklet: &b,
                label: Individual::Walking,
                post: post(Individual::Walking),
            },
        ];
        for h in &hyps {
            verts.push(RecogVertexData {
                vertex: RecogVertex::Hyp(h.target, h.index),
                tracklet: &h.tracklet,
                label: Individual::Walking,
                post: post(Individual::Walking),
            });
        }
        let out = optimize_recognition(
            &verts,
            &[Interaction::WS, Interaction::NA],
            (10, 19),
            5,
            3,
            (3, 3),
            &InteractionRuleTable::default(),
            &GroupingParams::default(),
            &ClusterSearchOpts::default(),
        );
        assert_eq!(out.recovered.get(&3), Some(&0), "straight hypothesis wins");
        assert_eq!(out.pair_labels.len(), 1, "one real-real pair");
    }

    #[test]
    fn collective_prob_matches_complement_product() {
        use rand::Rng;
        let mut rng = rand::thread_rng();
        for _ in 0..1000 {
            let n = rng.gen_range(0..6);
            let ps: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let expect = 1.0 - ps.iter().map(|p| 1.0 - p).product::<f64>();
            assert_relative_eq!(collective_prob(&ps), expect, epsilon = 1e-15);
        }
    }

    #[test]
    fn collective_prob_monotone_in_partners() {
        let base = vec![0.3, 0.5];
        let more = vec![0.3, 0.5, 0.2];
        assert!(collective_prob(&more) > collective_prob(&base));
        assert_eq!(collective_prob(&[]), 0.0);
    }

    #[test]
    fn scene_label_counts_participants() {
        let table = InteractionRuleTable::default();
        let mut pairs = BTreeMap::new();
        pairs.insert((1u64, 2u64), (Interaction::FE, 0.9));
        pairs.insert((3u64, 4u64), (Interaction::WS, 0.8));
        pairs.insert((4u64, 5u64), (Interaction::WS, 0.8));
        let classes = [Collective::Walking, Collective::Talking];
        let post = collective_posteriors(&[1, 2, 3, 4, 5], &pairs, &classes, &table);
        assert_eq!(scene_label(&post, &classes), Some(Collective::Walking));
        assert!(post[&4][&Collective::Walking] > post[&3][&Collective::Walking]);
    }

    #[test]
    fn scene_label_empty_scene_is_none() {
        let post = BTreeMap::new();
        assert_eq!(scene_label(&post, &[Collective::Walking]), None);
    }
}
