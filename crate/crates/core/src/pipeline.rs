//! The streaming engine: consumes detections frame by frame, and at every
//! window boundary runs the three-stage inference — tracklet linking on the
//! tracking hypergraph, joint interaction recognition with occlusion
//! recovery, and collective-activity labeling.

use std::collections::BTreeMap;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::eval::TrackSet;
use crate::grouping::build_group_graph;
use crate::interaction::{
    collective_posteriors, generate_hypothetical, optimize_recognition, scene_label, RecogVertex,
    RecogVertexData,
};
use crate::tracking::{
    classify_individual, generate_candidates, link_tracklets, LinkContext, Posteriors,
};
use crate::types::{
    norm, BBox, Collective, Detection, Individual, Interaction, Status, Tracklet,
};

/// Everything inferred for one window.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct WindowOutput {
    /// inclusive frame range
    pub window: (u64, u64),
    /// (frame, target id, box) rows covering the window, recovered frames
    /// included
    pub rows: Vec<(u64, u64, BBox)>,
    pub individual: BTreeMap<u64, Individual>,
    /// committed pairwise labels; absent pairs are the residual class
    pub interactions: BTreeMap<(u64, u64), (Interaction, f64)>,
    pub collective: BTreeMap<u64, BTreeMap<Collective, f64>>,
    pub scene: Option<Collective>,
}

/// Streaming tracker and activity recognizer. Feed frames in order with
/// [`Pipeline::push_frame`]; a [`WindowOutput`] appears at each window
/// boundary. Call [`Pipeline::finish`] to flush a trailing partial window.
pub struct Pipeline {
    cfg: PipelineConfig,
    targets: BTreeMap<u64, Tracklet>,
    status: BTreeMap<u64, Status>,
    labels: BTreeMap<u64, Individual>,
    posteriors: BTreeMap<u64, Posteriors>,
    next_id: u64,
    buffer: Vec<Detection>,
    window_start: Option<u64>,
    last_frame: Option<u64>,
    scene: Option<Collective>,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Pipeline {
            cfg,
            targets: BTreeMap::new(),
            status: BTreeMap::new(),
            labels: BTreeMap::new(),
            posteriors: BTreeMap::new(),
            next_id: 0,
            buffer: Vec::new(),
            window_start: None,
            last_frame: None,
            scene: None,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    /// All tracked boxes so far, keyed target id -> frame.
    pub fn track_set(&self) -> TrackSet {
        self.targets
            .iter()
            .map(|(&id, t)| {
                (
                    id,
                    t.states
                        .iter()
                        .map(|(&f, s)| (f, s.bbox))
                        .collect::<BTreeMap<u64, BBox>>(),
                )
            })
            .collect()
    }

    /// Feed one frame's detections (possibly none). Frames must be strictly
    /// increasing; every detection must carry the given frame number.
    pub fn push_frame(
        &mut self,
        frame: u64,
        detections: &[Detection],
    ) -> Result<Option<WindowOutput>> {
        if let Some(last) = self.last_frame {
            if frame <= last {
                return Err(Error::OutOfOrderFrame { frame, line: 0 });
            }
        }
        self.last_frame = Some(frame);
        let start = *self.window_start.get_or_insert(frame);
        for d in detections {
            if d.frame != frame {
                return Err(Error::OutOfOrderFrame {
                    frame: d.frame,
                    line: 0,
                });
            }
            self.buffer.push(d.clone());
        }
        if frame + 1 >= start + self.cfg.window {
            let out = self.process_window(start, frame)?;
            self.window_start = Some(frame + 1);
            self.buffer.clear();
            return Ok(Some(out));
        }
        Ok(None)
    }

    /// Process a trailing partial window, if it holds at least two frames.
    pub fn finish(&mut self) -> Result<Option<WindowOutput>> {
        let (Some(start), Some(last)) = (self.window_start, self.last_frame) else {
            return Ok(None);
        };
        if last <= start {
            return Ok(None);
        }
        let out = self.process_window(start, last)?;
        self.window_start = Some(last + 1);
        self.buffer.clear();
        Ok(Some(out))
    }

    fn process_window(&mut self, lo: u64, hi: u64) -> Result<WindowOutput> {
        let cfg = self.cfg.clone();

        // ---- stage 1: candidate tracklets and linking ----
        // Iterate until no target claims another fragment: a short occlusion
        // splits a trajectory into several candidates inside one window, and
        // a target may need to absorb them in sequence.
        let mut remaining: Vec<Detection> = self.buffer.clone();
        let mut linked_ids: Vec<u64> = Vec::new();
        loop {
            let live_ids: Vec<u64> = self
                .status
                .iter()
                .filter(|(_, &s)| s != Status::Exited)
                .map(|(&id, _)| id)
                .collect();
            let live: Vec<&Tracklet> = live_ids.iter().map(|id| &self.targets[id]).collect();

            let candidates = generate_candidates(
                &live,
                &remaining,
                lo,
                cfg.drop_after_frames(),
                cfg.span,
                cfg.person_scale,
                &cfg.tracking,
            );

            let group_graph = build_group_graph(
                &live,
                &self.labels,
                (lo.saturating_sub(cfg.window), lo.saturating_sub(1)),
                cfg.span,
                &cfg.grouping,
            );

            let outcome = {
                let ctx = LinkContext {
                    targets: &live,
                    labels: &self.labels,
                    group_graph: &group_graph,
                    velocity_span: cfg.span,
                    person_scale: cfg.person_scale,
                    degree: cfg.degree,
                    kappa_range: (cfg.kappa_min, cfg.kappa_max),
                    lambda_a: cfg.lambda_a,
                    lambda_d: cfg.lambda_d,
                    lambda_g: cfg.lambda_g,
                    search: cfg.search.clone(),
                    params: &cfg.tracking,
                };
                link_tracklets(&candidates, &ctx)
            };

            for id in &candidates.exited {
                self.status.insert(*id, Status::Exited);
            }
            for (&id, &cand) in &outcome.links {
                let states: Vec<(u64, crate::types::TrackState)> = candidates.tracklets[cand]
                    .states
                    .iter()
                    .map(|(&f, s)| (f, s.clone()))
                    .collect();
                let target = self.targets.get_mut(&id).unwrap();
                for (f, s) in states {
                    target.push(f, s.bbox, s.appearance);
                }
                self.status.insert(id, Status::Active);
                linked_ids.push(id);
            }

            if outcome.links.is_empty() {
                for &id in &outcome.occluded {
                    if !linked_ids.contains(&id) {
                        self.status.insert(id, Status::Occluded);
                    }
                }
                for &cand in &outcome.new_targets {
                    let id = self.next_id;
                    self.next_id += 1;
                    let mut t = Tracklet::new(id);
                    for (&f, s) in &candidates.tracklets[cand].states {
                        t.push(f, s.bbox, s.appearance.clone());
                    }
                    self.targets.insert(id, t);
                    self.status.insert(id, Status::Active);
                }
                break;
            }

            // strip the detections the linked candidates consumed and rerun
            let linked: Vec<&Tracklet> = outcome
                .links
                .values()
                .map(|&cand| &candidates.tracklets[cand])
                .collect();
            remaining.retain(|d| {
                !linked
                    .iter()
                    .any(|t| t.states.get(&d.frame).map_or(false, |s| s.bbox == d.bbox))
            });
        }

        self.reclassify();

        // ---- stage 2: joint interaction recognition ----
        let mut hyps = Vec::new();
        if cfg.recovery.enabled {
            for (&id, &status) in &self.status {
                if status != Status::Occluded {
                    continue;
                }
                let label = self.labels.get(&id).copied().unwrap_or(Individual::Walking);
                hyps.extend(generate_hypothetical(
                    &self.targets[&id],
                    label,
                    (lo, hi),
                    cfg.span,
                    &cfg.recovery,
                ));
            }
        }
        let mut verts: Vec<RecogVertexData> = Vec::new();
        for (&id, &status) in &self.status {
            if status != Status::Active {
                continue;
            }
            let t = &self.targets[&id];
            if t.last_frame().map_or(true, |f| f < lo) {
                continue;
            }
            verts.push(RecogVertexData {
                vertex: RecogVertex::Real(id),
                tracklet: t,
                label: self.labels[&id],
                post: self.posteriors[&id],
            });
        }
        for h in &hyps {
            let label = self.labels.get(&h.target).copied().unwrap_or(Individual::Walking);
            verts.push(RecogVertexData {
                vertex: RecogVertex::Hyp(h.target, h.index),
                tracklet: &h.tracklet,
                label,
                post: self
                    .posteriors
                    .get(&h.target)
                    .copied()
                    .unwrap_or(Posteriors {
                        standing: 0.0,
                        walking: 1.0,
                        running: 0.0,
                    }),
            });
        }

        let recognition = optimize_recognition(
            &verts,
            &cfg.alphabets.interaction,
            (lo, hi),
            cfg.span,
            cfg.degree,
            (cfg.kappa_min, cfg.kappa_max),
            &cfg.rules,
            &cfg.grouping,
            &cfg.search,
        );

        // adopt the committed hypothesis of each recovered target
        for (&id, &index) in &recognition.recovered {
            let Some(h) = hyps.iter().find(|h| h.target == id && h.index == index) else {
                continue;
            };
            let states: Vec<(u64, crate::types::TrackState)> = h
                .tracklet
                .states
                .iter()
                .map(|(&f, s)| (f, s.clone()))
                .collect();
            let target = self.targets.get_mut(&id).unwrap();
            for (f, s) in states {
                target.push(f, s.bbox, s.appearance);
            }
        }
        self.reclassify();

        let interactions: BTreeMap<(u64, u64), (Interaction, f64)> = recognition
            .pair_labels
            .iter()
            .filter(|(_, &(_, p))| p >= cfg.pair_min_prob)
            .map(|(&k, &v)| (k, v))
            .collect();

        // ---- stage 3: collective activity ----
        let present: Vec<u64> = self
            .status
            .iter()
            .filter(|(_, &s)| s != Status::Exited)
            .map(|(&id, _)| id)
            .collect();
        let collective = collective_posteriors(
            &present,
            &interactions,
            &cfg.alphabets.collective,
            &cfg.rules,
        );
        if let Some(label) = scene_label(&collective, &cfg.alphabets.collective) {
            self.scene = Some(label);
        }

        let mut rows = Vec::new();
        for (&id, t) in &self.targets {
            for (&f, s) in t.states.range(lo..=hi) {
                rows.push((f, id, s.bbox));
            }
        }
        rows.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let individual = self
            .status
            .iter()
            .filter(|(_, &s)| s != Status::Exited)
            .filter_map(|(&id, _)| self.labels.get(&id).map(|&l| (id, l)))
            .collect();

        Ok(WindowOutput {
            window: (lo, hi),
            rows,
            individual,
            interactions,
            collective,
            scene: self.scene,
        })
    }

    fn reclassify(&mut self) {
        let cfg = &self.cfg;
        for (&id, t) in &self.targets {
            if self.status.get(&id) == Some(&Status::Exited) {
                continue;
            }
            let Some(last) = t.last_frame() else { continue };
            let speed = t
                .estimate_velocity(last, cfg.span)
                .map(norm)
                .unwrap_or(0.0);
            let (label, post) =
                classify_individual(speed, &cfg.speed, &cfg.alphabets.individual);
            self.labels.insert(id, label);
            self.posteriors.insert(id, post);
        }
    }
}

/// Convenience driver: run a whole detection list through the pipeline,
/// frame by frame, and collect every window output.
pub fn run_offline(
    cfg: PipelineConfig,
    detections: &[Detection],
) -> Result<(Vec<WindowOutput>, TrackSet)> {
    let mut by_frame: BTreeMap<u64, Vec<Detection>> = BTreeMap::new();
    let mut max_frame = 0;
    for d in detections {
        max_frame = max_frame.max(d.frame);
        by_frame.entry(d.frame).or_default().push(d.clone());
    }
    let mut pipeline = Pipeline::new(cfg)?;
    let mut outputs = Vec::new();
    let empty = Vec::new();
    for frame in 0..=max_frame {
        let dets = by_frame.get(&frame).unwrap_or(&empty);
        if let Some(out) = pipeline.push_frame(frame, dets)? {
            outputs.push(out);
        }
    }
    if let Some(out) = pipeline.finish()? {
        outputs.push(out);
    }
    Ok((outputs, pipeline.track_set()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::clear_mot;
    use crate::sim::{preset, preset_alphabets, synthesize, Occlusion};

    fn preset_config(class: Collective) -> PipelineConfig {
        PipelineConfig {
            alphabets: preset_alphabets(class),
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn walkers_are_tracked_perfectly_without_noise() {
        let scenario = preset(Collective::Walking, 3, 100);
        let out = synthesize(&scenario).unwrap();
        let (outputs, tracks) =
            run_offline(preset_config(Collective::Walking), &out.detections).unwrap();
        assert!(!outputs.is_empty());
        let report = clear_mot(&out.truth.tracks, &tracks, 0.5).unwrap();
        assert_eq!(report.id_switches, 0);
        assert!(report.mota > 0.99, "MOTA {}", report.mota);
    }

    #[test]
    fn scene_label_emerges_and_holds() {
        let scenario = preset(Collective::Queuing, 3, 160);
        let out = synthesize(&scenario).unwrap();
        let (outputs, _) =
            run_offline(preset_config(Collective::Queuing), &out.detections).unwrap();
        let last = outputs.last().unwrap();
        assert_eq!(last.scene, Some(Collective::Queuing));
        // once set, the label persists through quiet windows
        let first_set = outputs.iter().position(|o| o.scene.is_some()).unwrap();
        assert!(outputs[first_set..].iter().all(|o| o.scene.is_some()));
    }

    #[test]
    fn out_of_order_frames_are_rejected() {
        let mut p = Pipeline::new(PipelineConfig::default()).unwrap();
        p.push_frame(5, &[]).unwrap();
        assert!(matches!(
            p.push_frame(5, &[]),
            Err(Error::OutOfOrderFrame { frame: 5, .. })
        ));
        assert!(matches!(
            p.push_frame(3, &[]),
            Err(Error::OutOfOrderFrame { frame: 3, .. })
        ));
    }

    #[test]
    fn occluded_walker_is_recovered() {
        let mut scenario = preset(Collective::Walking, 3, 120);
        scenario.occlusions.push(Occlusion {
            agent: 1,
            from: 45,
            until: 59,
        });
        let out = synthesize(&scenario).unwrap();
        let (_, tracks) =
            run_offline(preset_config(Collective::Walking), &out.detections).unwrap();
        let report = clear_mot(&out.truth.tracks, &tracks, 0.5).unwrap();
        assert_eq!(report.id_switches, 0, "{report}");
    }

    #[test]
    fn streaming_matches_offline() {
        let scenario = preset(Collective::Walking, 9, 100);
        let out = synthesize(&scenario).unwrap();
        let cfg = preset_config(Collective::Walking);
        let (a_out, a_tracks) = run_offline(cfg.clone(), &out.detections).unwrap();
        let (b_out, b_tracks) = run_offline(cfg, &out.detections).unwrap();
        assert_eq!(a_out, b_out);
        assert_eq!(a_tracks, b_tracks);
    }
}
