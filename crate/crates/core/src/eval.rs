//! Tracking metrics (CLEAR MOT family) and activity classification accuracy.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::hash::Hash;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::types::BBox;

/// Tracks indexed as id -> frame -> box.
pub type TrackSet = BTreeMap<u64, BTreeMap<u64, BBox>>;

pub fn track_set_from_rows(rows: impl IntoIterator<Item = (u64, u64, BBox)>) -> TrackSet {
    let mut set = TrackSet::new();
    for (frame, id, bbox) in rows {
        set.entry(id).or_default().insert(frame, bbox);
    }
    set
}

/// CLEAR MOT summary for one sequence.
#[derive(Debug, Clone, Serialize)]
pub struct MotReport {
    pub recall: f64,
    pub precision: f64,
    pub far: f64,
    pub mostly_tracked_pct: f64,
    pub mostly_lost_pct: f64,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub id_switches: u64,
    pub fragmentations: u64,
    pub mota: f64,
    pub motp: f64,
}

impl fmt::Display for MotReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "Rcll {:.3}  Prcn {:.3}  FAR {:.3}  MT {:.1}%  ML {:.1}%",
            self.recall, self.precision, self.far, self.mostly_tracked_pct, self.mostly_lost_pct
        )?;
        write!(
            f,
            "FP {}  FN {}  IDs {}  FM {}  MOTA {:.3}  MOTP {:.3}",
            self.false_positives,
            self.false_negatives,
            self.id_switches,
            self.fragmentations,
            self.mota,
            self.motp
        )
    }
}

/// Frame-wise CLEAR MOT evaluation with match persistence: an existing
/// correspondence is kept while its overlap stays above the threshold, the
/// rest are matched by optimal bipartite assignment on IoU.
pub fn clear_mot(gt: &TrackSet, hyp: &TrackSet, iou_threshold: f64) -> Result<MotReport> {
    if gt.values().all(|t| t.is_empty()) {
        return Err(Error::NoGroundTruth);
    }
    let mut frames: Vec<u64> = gt
        .values()
        .flat_map(|t| t.keys().copied())
        .chain(hyp.values().flat_map(|t| t.keys().copied()))
        .collect();
    frames.sort_unstable();
    frames.dedup();

    let mut correspondence: HashMap<u64, u64> = HashMap::new(); // gt id -> hyp id
    // per gt id: (frame, matched hyp) history for FM / coverage
    let mut history: HashMap<u64, Vec<(u64, Option<u64>)>> = HashMap::new();

    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut fn_ = 0u64;
    let mut ids = 0u64;
    let mut gt_total = 0u64;
    let mut iou_sum = 0.0;

    for &frame in &frames {
        let gt_now: Vec<(u64, BBox)> = gt
            .iter()
            .filter_map(|(&id, t)| t.get(&frame).map(|&b| (id, b)))
            .collect();
        let hyp_now: Vec<(u64, BBox)> = hyp
            .iter()
            .filter_map(|(&id, t)| t.get(&frame).map(|&b| (id, b)))
            .collect();
        gt_total += gt_now.len() as u64;

        let mut matched_gt: HashMap<u64, u64> = HashMap::new();
        let mut used_hyp: Vec<u64> = Vec::new();

        // keep persistent correspondences that still overlap
        for &(gid, gbox) in &gt_now {
            if let Some(&hid) = correspondence.get(&gid) {
                if let Some(&(_, hbox)) = hyp_now.iter().find(|&&(id, _)| id == hid) {
                    let iou = gbox.iou(&hbox);
                    if iou >= iou_threshold {
                        matched_gt.insert(gid, hid);
                        used_hyp.push(hid);
                        tp += 1;
                        iou_sum += iou;
                    }
                }
            }
        }

        // optimal assignment for the rest
        let free_gt: Vec<(u64, BBox)> = gt_now
            .iter()
            .copied()
            .filter(|(id, _)| !matched_gt.contains_key(id))
            .collect();
        let free_hyp: Vec<(u64, BBox)> = hyp_now
            .iter()
            .copied()
            .filter(|(id, _)| !used_hyp.contains(id))
            .collect();
        if !free_gt.is_empty() && !free_hyp.is_empty() {
            let cost: Vec<Vec<f64>> = free_gt
                .iter()
                .map(|(_, g)| {
                    free_hyp
                        .iter()
                        .map(|(_, h)| {
                            let iou = g.iou(h);
                            if iou >= iou_threshold {
                                1.0 - iou
                            } else {
                                FORBIDDEN
                            }
                        })
                        .collect()
                })
                .collect();
            for (row, col) in min_cost_assignment(&cost) {
                if cost[row][col] >= FORBIDDEN {
                    continue;
                }
                let (gid, gbox) = free_gt[row];
                let (hid, hbox) = free_hyp[col];
                if let Some(&prev) = correspondence.get(&gid) {
                    if prev != hid {
                        ids += 1;
                    }
                }
                matched_gt.insert(gid, hid);
                used_hyp.push(hid);
                tp += 1;
                iou_sum += gbox.iou(&hbox);
            }
        }

        fn_ += (gt_now.len() - matched_gt.len()) as u64;
        fp += (hyp_now.len() - used_hyp.len()) as u64;

        for (gid, hid) in &matched_gt {
            correspondence.insert(*gid, *hid);
        }
        for &(gid, _) in &gt_now {
            history
                .entry(gid)
                .or_default()
                .push((frame, matched_gt.get(&gid).copied()));
        }
    }

    // fragmentations: a gap in coverage, or the matched hypothesis changing
    // between consecutive matched frames
    let mut fm = 0u64;
    let mut mostly_tracked = 0usize;
    let mut mostly_lost = 0usize;
    for states in history.values() {
        let mut last: Option<Option<u64>> = None;
        for &(_, cur) in states {
            if let Some(prev) = last {
                match (prev, cur) {
                    (Some(a), Some(b)) if a != b => fm += 1,
                    (None, Some(_)) => fm += 1,
                    _ => {}
                }
            }
            last = Some(cur);
        }
        let covered = states.iter().filter(|(_, m)| m.is_some()).count();
        let coverage = covered as f64 / states.len() as f64;
        if coverage >= 0.8 {
            mostly_tracked += 1;
        } else if coverage <= 0.2 {
            mostly_lost += 1;
        }
    }
    // do not count initial-miss as fragmentation twice: the (None, Some) rule
    // above also fires when a track starts unmatched; subtract those openings
    let mut openings = 0u64;
    for states in history.values() {
        if states.first().map(|(_, m)| m.is_none()).unwrap_or(false)
            && states.iter().any(|(_, m)| m.is_some())
        {
            openings += 1;
        }
    }
    fm = fm.saturating_sub(openings);

    let track_count = history.len().max(1);
    Ok(MotReport {
        recall: tp as f64 / gt_total.max(1) as f64,
        precision: if tp + fp == 0 {
            0.0
        } else {
            tp as f64 / (tp + fp) as f64
        },
        far: fp as f64 / frames.len().max(1) as f64,
        mostly_tracked_pct: 100.0 * mostly_tracked as f64 / track_count as f64,
        mostly_lost_pct: 100.0 * mostly_lost as f64 / track_count as f64,
        false_positives: fp,
        false_negatives: fn_,
        id_switches: ids,
        fragmentations: fm,
        mota: 1.0 - (fp + fn_ + ids) as f64 / gt_total.max(1) as f64,
        motp: if tp == 0 { 0.0 } else { iou_sum / tp as f64 },
    })
}

const FORBIDDEN: f64 = 1e9;

/// Min-cost bipartite assignment (Hungarian algorithm with potentials).
/// Returns (row, col) pairs; every row of an n<=m matrix is assigned.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let m = cost[0].len();
    if m == 0 {
        return Vec::new();
    }
    if n > m {
        // transpose so rows <= cols
        let t: Vec<Vec<f64>> = (0..m).map(|j| (0..n).map(|i| cost[i][j]).collect()).collect();
        return min_cost_assignment(&t)
            .into_iter()
            .map(|(r, c)| (c, r))
            .collect();
    }

    // 1-based potentials formulation
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut p = vec![0usize; m + 1]; // p[j] = row matched to column j

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut out = Vec::new();
    for j in 1..=m {
        if p[j] != 0 {
            out.push((p[j] - 1, j - 1));
        }
    }
    out.sort_unstable();
    out
}

/// OCA/MCA plus a confusion matrix over aligned (ground truth, prediction)
/// label samples. MCA averages per-class recall over classes present in the
/// ground truth.
#[derive(Debug, Clone)]
pub struct AccuracyReport<L> {
    pub oca: f64,
    pub mca: f64,
    pub confusion: BTreeMap<(L, L), u64>,
}

pub fn activity_accuracy<L: Eq + Hash + Copy + Ord>(
    samples: &[(L, L)],
) -> Result<AccuracyReport<L>> {
    if samples.is_empty() {
        return Err(Error::NoSamples);
    }
    let mut confusion: BTreeMap<(L, L), u64> = BTreeMap::new();
    let mut per_class: HashMap<L, (u64, u64)> = HashMap::new(); // class -> (correct, total)
    let mut correct = 0u64;
    for &(gt, pred) in samples {
        *confusion.entry((gt, pred)).or_insert(0) += 1;
        let entry = per_class.entry(gt).or_insert((0, 0));
        entry.1 += 1;
        if gt == pred {
            entry.0 += 1;
            correct += 1;
        }
    }
    let oca = correct as f64 / samples.len() as f64;
    let mca = per_class
        .values()
        .map(|&(c, t)| c as f64 / t as f64)
        .sum::<f64>()
        / per_class.len() as f64;
    Ok(AccuracyReport {
        oca,
        mca,
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn boxed(x: f64, y: f64) -> BBox {
        BBox::new(x, y, 10.0, 20.0)
    }

    fn straight_track(id: u64, frames: std::ops::Range<u64>, x0: f64, y0: f64, dx: f64) -> Vec<(u64, u64, BBox)> {
        frames
            .map(|f| (f, id, boxed(x0 + dx * f as f64, y0)))
            .collect()
    }

    #[test]
    fn perfect_hypothesis_scores_one() {
        let rows: Vec<_> = straight_track(1, 0..50, 0.0, 0.0, 2.0)
            .into_iter()
            .chain(straight_track(2, 0..50, 100.0, 100.0, -1.0))
            .collect();
        let gt = track_set_from_rows(rows.clone());
        let hyp = track_set_from_rows(rows.into_iter().map(|(f, id, b)| (f, id + 10, b)));
        let r = clear_mot(&gt, &hyp, 0.5).unwrap();
        assert_relative_eq!(r.mota, 1.0, epsilon = 1e-12);
        assert_eq!(r.id_switches, 0);
        assert_eq!(r.false_positives, 0);
        assert_eq!(r.false_negatives, 0);
        assert_relative_eq!(r.motp, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn one_false_positive_per_frame() {
        // 10 gt boxes/frame x 100 frames; hypothesis adds 1 FP/frame
        let mut gt_rows = Vec::new();
        for id in 0..10u64 {
            gt_rows.extend(straight_track(id, 0..100, 60.0 * id as f64, 0.0, 0.0));
        }
        let mut hyp_rows = gt_rows.clone();
        hyp_rows.extend(straight_track(99, 0..100, 5000.0, 5000.0, 0.0));
        let gt = track_set_from_rows(gt_rows);
        let hyp = track_set_from_rows(hyp_rows);
        let r = clear_mot(&gt, &hyp, 0.5).unwrap();
        assert_relative_eq!(r.mota, 0.9, epsilon = 1e-12);
        assert_eq!(r.false_positives, 100);
    }

    #[test]
    fn identity_swap_counts_two_switches_and_fragments() {
        // two far-apart stationary gt targets; hypothesis ids swap at frame 25
        let mut gt_rows = Vec::new();
        gt_rows.extend(straight_track(1, 0..50, 0.0, 0.0, 0.0));
        gt_rows.extend(straight_track(2, 0..50, 500.0, 0.0, 0.0));
        let mut hyp_rows = Vec::new();
        for f in 0..50u64 {
            let (a, b) = if f < 25 { (11, 12) } else { (12, 11) };
            hyp_rows.push((f, a, boxed(0.0, 0.0)));
            hyp_rows.push((f, b, boxed(500.0, 0.0)));
        }
        let gt = track_set_from_rows(gt_rows);
        let hyp = track_set_from_rows(hyp_rows);
        let r = clear_mot(&gt, &hyp, 0.5).unwrap();
        assert_eq!(r.id_switches, 2);
        assert_eq!(r.fragmentations, 2);
    }

    #[test]
    fn empty_ground_truth_errors() {
        let hyp = track_set_from_rows(straight_track(1, 0..5, 0.0, 0.0, 0.0));
        assert!(matches!(
            clear_mot(&TrackSet::new(), &hyp, 0.5),
            Err(Error::NoGroundTruth)
        ));
    }

    #[test]
    fn id_switch_count_invariant_under_hyp_relabeling() {
        let mut gt_rows = Vec::new();
        gt_rows.extend(straight_track(1, 0..30, 0.0, 0.0, 1.0));
        gt_rows.extend(straight_track(2, 0..30, 300.0, 0.0, -1.0));
        let mut hyp_rows = Vec::new();
        for f in 0..30u64 {
            let (a, b) = if f < 15 { (7, 8) } else { (8, 7) };
            hyp_rows.push((f, a, boxed(f as f64, 0.0)));
            hyp_rows.push((f, b, boxed(300.0 - f as f64, 0.0)));
        }
        let gt = track_set_from_rows(gt_rows);
        let hyp1 = track_set_from_rows(hyp_rows.clone());
        let hyp2 = track_set_from_rows(hyp_rows.into_iter().map(|(f, id, b)| (f, id + 100, b)));
        let r1 = clear_mot(&gt, &hyp1, 0.5).unwrap();
        let r2 = clear_mot(&gt, &hyp2, 0.5).unwrap();
        assert_eq!(r1.id_switches, r2.id_switches);
    }

    #[test]
    fn hungarian_small_cases() {
        let cost = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]];
        let assign = min_cost_assignment(&cost);
        let total: f64 = assign.iter().map(|&(r, c)| cost[r][c]).sum();
        assert_relative_eq!(total, 5.0, epsilon = 1e-12);

        // rectangular: more columns than rows
        let cost = vec![vec![10.0, 1.0], vec![1.0, 10.0]];
        let assign = min_cost_assignment(&cost);
        assert_eq!(assign, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn accuracy_perfect_predictions() {
        let samples: Vec<(u8, u8)> = (0..100).map(|i| (i % 3, i % 3)).collect();
        let r = activity_accuracy(&samples).unwrap();
        assert_relative_eq!(r.oca, 1.0);
        assert_relative_eq!(r.mca, 1.0);
    }

    #[test]
    fn accuracy_class_imbalance_arithmetic() {
        // two classes split 90/10; recalls 1.0 and 0.5
        let mut samples: Vec<(u8, u8)> = Vec::new();
        samples.extend(std::iter::repeat((0u8, 0u8)).take(90));
        samples.extend(std::iter::repeat((1u8, 1u8)).take(5));
        samples.extend(std::iter::repeat((1u8, 0u8)).take(5));
        let r = activity_accuracy(&samples).unwrap();
        assert_relative_eq!(r.oca, 0.95, epsilon = 1e-12);
        assert_relative_eq!(r.mca, 0.75, epsilon = 1e-12);

        // MCA is invariant to imbalance at fixed per-class recalls; OCA is not
        let mut balanced: Vec<(u8, u8)> = Vec::new();
        balanced.extend(std::iter::repeat((0u8, 0u8)).take(50));
        balanced.extend(std::iter::repeat((1u8, 1u8)).take(25));
        balanced.extend(std::iter::repeat((1u8, 0u8)).take(25));
        let rb = activity_accuracy(&balanced).unwrap();
        assert_relative_eq!(rb.mca, r.mca, epsilon = 1e-12);
        assert!((rb.oca - r.oca).abs() > 1e-6);
    }

    #[test]
    fn accuracy_random_labels_approach_chance() {
        let k = 4u64;
        let mut state = 99u64;
        let mut rand = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 33) % k
        };
        let samples: Vec<(u64, u64)> = (0..200_000).map(|_| (rand(), rand())).collect();
        let r = activity_accuracy(&samples).unwrap();
        assert!((r.oca - 1.0 / k as f64).abs() < 0.05);
    }

    #[test]
    fn accuracy_empty_errors() {
        assert!(matches!(
            activity_accuracy::<u8>(&[]),
            Err(Error::NoSamples)
        ));
    }
}
