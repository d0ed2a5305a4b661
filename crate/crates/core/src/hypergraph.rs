//! Generic m-uniform weighted hypergraph and the cohesive-cluster search used
//! by both the tracking and the recognition stages, plus an exhaustive oracle
//! for desk-scale verification and a greedy consistency sweep over cluster
//! candidates.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// m-uniform hypergraph with nonnegative hyperedge weights. Immutable after
/// construction; cluster searches for different seeds can run independently.
#[derive(Debug, Clone)]
pub struct WeightedHypergraph {
    vertex_count: usize,
    degree: usize,
    edges: Vec<(Vec<u32>, f64)>,
    incidence: Vec<Vec<u32>>,
    edge_index: HashMap<Vec<u32>, usize>,
}

impl WeightedHypergraph {
    pub fn new(vertex_count: usize, degree: usize) -> Self {
        assert!(degree >= 2, "hyperedge degree must be >= 2");
        WeightedHypergraph {
            vertex_count,
            degree,
            edges: Vec::new(),
            incidence: vec![Vec::new(); vertex_count],
            edge_index: HashMap::new(),
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (&[u32], f64)> {
        self.edges.iter().map(|(v, w)| (v.as_slice(), *w))
    }

    /// Add an unordered hyperedge over `vertices` (must be `degree` distinct
    /// vertices). Weights are clamped to >= 0; re-adding an existing edge
    /// accumulates its weight.
    pub fn add_edge(&mut self, vertices: &[usize], weight: f64) {
        assert_eq!(vertices.len(), self.degree, "edge arity mismatch");
        let mut key: Vec<u32> = vertices.iter().map(|&v| v as u32).collect();
        key.sort_unstable();
        assert!(
            key.windows(2).all(|w| w[0] != w[1]),
            "edge has a repeated vertex"
        );
        assert!((key[key.len() - 1] as usize) < self.vertex_count);
        let weight = weight.max(0.0);
        if let Some(&idx) = self.edge_index.get(&key) {
            self.edges[idx].1 += weight;
            return;
        }
        let idx = self.edges.len();
        for &v in &key {
            self.incidence[v as usize].push(idx as u32);
        }
        self.edge_index.insert(key.clone(), idx);
        self.edges.push((key, weight));
    }

    pub fn incident_edges(&self, vertex: usize) -> &[u32] {
        &self.incidence[vertex]
    }

    /// Total weight of hyperedges fully enclosed by `members`, divided by
    /// `|members|^m`; each unordered hyperedge counted once.
    pub fn normalized_weight(&self, members: &[usize]) -> f64 {
        if members.is_empty() {
            return 0.0;
        }
        let mut inside = vec![false; self.vertex_count];
        for &v in members {
            inside[v] = true;
        }
        let total: f64 = self
            .edges
            .iter()
            .filter(|(vs, _)| vs.iter().all(|&v| inside[v as usize]))
            .map(|(_, w)| w)
            .sum();
        total / (members.len() as f64).powi(self.degree as i32)
    }

    /// The continuous relaxation of the cluster weight: each unordered edge
    /// contributes `w * m! * prod(delta_v)`, so that at a uniform point on a
    /// support the value equals `m! * normalized_weight(support)`.
    pub fn relaxed_objective(&self, delta: &[f64]) -> Result<f64> {
        assert_eq!(delta.len(), self.vertex_count);
        let sum: f64 = delta.iter().sum();
        let mut violation = (sum - 1.0).abs();
        for &d in delta {
            if d < 0.0 {
                violation = violation.max(-d);
            }
        }
        if violation > 1e-6 {
            return Err(Error::InfeasiblePoint { violation });
        }
        Ok(self.relaxed_objective_unchecked(delta))
    }

    fn relaxed_objective_unchecked(&self, delta: &[f64]) -> f64 {
        let mfac = factorial(self.degree);
        self.edges
            .iter()
            .map(|(vs, w)| w * mfac * vs.iter().map(|&v| delta[v as usize]).product::<f64>())
            .sum()
    }

    /// Gradient of the relaxed objective.
    fn gradient(&self, delta: &[f64]) -> Vec<f64> {
        let mfac = factorial(self.degree);
        let mut g = vec![0.0; self.vertex_count];
        for (vs, w) in &self.edges {
            for (slot, &v) in vs.iter().enumerate() {
                let prod: f64 = vs
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| *k != slot)
                    .map(|(_, &u)| delta[u as usize])
                    .product();
                g[v as usize] += w * mfac * prod;
            }
        }
        g
    }

    /// Line-oriented debug dump: `edge v1 .. vm weight`, edges in sorted order.
    pub fn dump(&self) -> String {
        let mut keys: Vec<&(Vec<u32>, f64)> = self.edges.iter().collect();
        keys.sort_by(|a, b| a.0.cmp(&b.0));
        let mut out = String::new();
        for (vs, w) in keys {
            out.push_str("edge");
            for v in vs {
                let _ = write!(out, " {v}");
            }
            let _ = writeln!(out, " {w}");
        }
        out
    }
}

fn factorial(m: usize) -> f64 {
    (1..=m).map(|k| k as f64).product()
}

/// A seeded cluster candidate: the relaxed membership vector, the rounded
/// member set, and its normalized score.
#[derive(Debug, Clone)]
pub struct ClusterSolution {
    pub seed: usize,
    pub delta: Vec<f64>,
    pub kappa: usize,
    pub members: Vec<usize>,
    pub score: f64,
}

/// Knobs for [`cluster_search`].
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ClusterSearchOpts {
    pub rng_seed: u64,
    /// Random restarts per kappa in addition to the neighbor-ranked start.
    pub restarts: usize,
    pub max_sweeps: usize,
    pub tolerance: f64,
}

impl Default for ClusterSearchOpts {
    fn default() -> Self {
        ClusterSearchOpts {
            rng_seed: 0,
            restarts: 3,
            max_sweeps: 500,
            tolerance: 1e-9,
        }
    }
}

/// Cohesive-cluster search around `seed`: for each cluster size in
/// `kappa_range`, ascend the relaxed objective on the constrained simplex by
/// pairwise mass transfers, round to the top-kappa coordinates, and keep the
/// size whose rounded member set scores highest.
pub fn cluster_search(
    h: &WeightedHypergraph,
    seed: usize,
    kappa_range: (usize, usize),
    opts: &ClusterSearchOpts,
) -> ClusterSolution {
    let m = h.degree();
    let n = h.vertex_count();
    let kappa_min = kappa_range.0.max(m);
    let kappa_max = kappa_range.1.min(n);

    if h.incident_edges(seed).is_empty() || kappa_min > kappa_max {
        return ClusterSolution {
            seed,
            delta: singleton_delta(n, seed, kappa_min.min(n).max(1)),
            kappa: kappa_min.min(n).max(1),
            members: vec![seed],
            score: 0.0,
        };
    }

    let ranked = rank_by_seed_affinity(h, seed);
    let mut best: Option<ClusterSolution> = None;

    for kappa in kappa_min..=kappa_max {
        let eps = 1.0 / kappa as f64;
        let mut starts: Vec<Vec<f64>> = Vec::new();
        starts.push(uniform_start(n, seed, eps, kappa, &ranked));
        let mut rng = ChaCha8Rng::seed_from_u64(opts.rng_seed ^ (kappa as u64).wrapping_mul(0x9e3779b97f4a7c15));
        for _ in 0..opts.restarts {
            let mut others: Vec<usize> = (0..n).filter(|&v| v != seed).collect();
            others.shuffle(&mut rng);
            starts.push(uniform_start(n, seed, eps, kappa, &others));
        }

        for mut delta in starts {
            ascend(h, seed, eps, &mut delta, opts.max_sweeps, opts.tolerance);
            let members = round_top_kappa(&delta, seed, kappa);
            let score = h.normalized_weight(&members);
            let better = match &best {
                None => true,
                Some(b) => score > b.score + 1e-15,
            };
            if better {
                best = Some(ClusterSolution {
                    seed,
                    delta,
                    kappa,
                    members,
                    score,
                });
            }
        }
    }
    best.unwrap()
}

fn singleton_delta(n: usize, seed: usize, kappa: usize) -> Vec<f64> {
    let eps = 1.0 / kappa as f64;
    let mut delta = vec![0.0; n];
    delta[seed] = eps;
    let mut left = 1.0 - eps;
    for v in 0..n {
        if v == seed || left <= 0.0 {
            continue;
        }
        let d = eps.min(left);
        delta[v] = d;
        left -= d;
    }
    delta
}

/// Vertices ordered by total shared-edge weight with the seed, descending.
fn rank_by_seed_affinity(h: &WeightedHypergraph, seed: usize) -> Vec<usize> {
    let mut affinity = vec![0.0f64; h.vertex_count()];
    for &e in h.incident_edges(seed) {
        let (vs, w) = &h.edges[e as usize];
        for &v in vs {
            if v as usize != seed {
                affinity[v as usize] += w;
            }
        }
    }
    let mut order: Vec<usize> = (0..h.vertex_count()).filter(|&v| v != seed).collect();
    order.sort_by(|&a, &b| {
        affinity[b]
            .partial_cmp(&affinity[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    order
}

fn uniform_start(n: usize, seed: usize, eps: f64, kappa: usize, order: &[usize]) -> Vec<f64> {
    let mut delta = vec![0.0; n];
    delta[seed] = eps;
    for &v in order.iter().take(kappa - 1) {
        delta[v] = eps;
    }
    delta
}

/// Pairwise-update ascent with the seed coordinate pinned at eps. The
/// objective restricted to a mass transfer between two coordinates is an exact
/// quadratic (each edge has distinct vertices), maximized analytically on the
/// feasible interval. Monotone by construction; returns the objective trace.
pub(crate) fn ascend(
    h: &WeightedHypergraph,
    seed: usize,
    eps: f64,
    delta: &mut [f64],
    max_sweeps: usize,
    tolerance: f64,
) -> Vec<f64> {
    let mfac = factorial(h.degree());
    let mut trace = vec![h.relaxed_objective_unchecked(delta)];

    for _ in 0..max_sweeps {
        let g = h.gradient(delta);
        let mut receiver: Option<usize> = None;
        let mut donor: Option<usize> = None;
        for v in 0..delta.len() {
            if v == seed {
                continue;
            }
            if delta[v] < eps - 1e-15
                && receiver.map_or(true, |r| g[v] > g[r])
            {
                receiver = Some(v);
            }
            if delta[v] > 1e-15 && donor.map_or(true, |d| g[v] < g[d]) {
                donor = Some(v);
            }
        }
        let (Some(p), Some(q)) = (receiver, donor) else {
            break;
        };
        if p == q {
            break;
        }
        let b = g[p] - g[q];
        if b <= tolerance {
            break;
        }
        // curvature from edges containing both p and q
        let mut k = 0.0;
        for &e in h.incident_edges(p) {
            let (vs, w) = &h.edges[e as usize];
            if vs.contains(&(q as u32)) {
                let prod: f64 = vs
                    .iter()
                    .filter(|&&v| v as usize != p && v as usize != q)
                    .map(|&v| delta[v as usize])
                    .product();
                k += w * mfac * prod;
            }
        }
        let t_max = delta[q].min(eps - delta[p]);
        let t = if k > 0.0 {
            (b / (2.0 * k)).min(t_max)
        } else {
            t_max
        };
        let gain = b * t - k * t * t;
        if gain <= tolerance {
            break;
        }
        delta[p] = (delta[p] + t).min(eps);
        delta[q] = (delta[q] - t).max(0.0);
        let obj = h.relaxed_objective_unchecked(delta);
        debug_assert!(obj + 1e-9 >= *trace.last().unwrap(), "ascent not monotone");
        trace.push(obj);
    }
    trace
}

/// Round the relaxed membership to its kappa largest coordinates (ties by
/// vertex index), forcing the seed in.
fn round_top_kappa(delta: &[f64], seed: usize, kappa: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..delta.len()).filter(|&v| v != seed).collect();
    order.sort_by(|&a, &b| delta[b].partial_cmp(&delta[a]).unwrap().then(a.cmp(&b)));
    let mut members = vec![seed];
    members.extend(order.into_iter().take(kappa - 1));
    members.sort_unstable();
    members
}

/// Exhaustive maximum of the normalized weight over seed-containing subsets
/// with size in `kappa_range`. Guarded to small instances.
pub fn brute_force_best(
    h: &WeightedHypergraph,
    seed: usize,
    kappa_range: (usize, usize),
) -> Result<(Vec<usize>, f64)> {
    const MAX_VERTICES: usize = 20;
    let n = h.vertex_count();
    if n > MAX_VERTICES {
        return Err(Error::OracleTooLarge {
            vertices: n,
            max: MAX_VERTICES,
        });
    }
    let kappa_min = kappa_range.0.max(h.degree());
    let kappa_max = kappa_range.1.min(n);
    let others: Vec<usize> = (0..n).filter(|&v| v != seed).collect();

    let mut best_members = vec![seed];
    let mut best_score = 0.0;
    let mut chosen = Vec::new();
    for kappa in kappa_min..=kappa_max {
        combinations(&others, kappa - 1, 0, &mut chosen, &mut |subset| {
            let mut members = vec![seed];
            members.extend_from_slice(subset);
            members.sort_unstable();
            let score = h.normalized_weight(&members);
            if score > best_score {
                best_score = score;
                best_members = members;
            }
        });
    }
    Ok((best_members, best_score))
}

fn combinations(
    pool: &[usize],
    k: usize,
    start: usize,
    chosen: &mut Vec<usize>,
    visit: &mut impl FnMut(&[usize]),
) {
    if chosen.len() == k {
        visit(chosen);
        return;
    }
    let need = k - chosen.len();
    for i in start..=pool.len().saturating_sub(need) {
        chosen.push(pool[i]);
        combinations(pool, k, i + 1, chosen, visit);
        chosen.pop();
    }
}

/// Greedy sweep over cluster candidates in descending score. Vertices already
/// committed (or conflicting with committed ones) are stripped from later
/// clusters; clusters left with an internal conflict, nothing new, or fewer
/// than `min_size` members are dropped.
pub fn select_consistent_clusters(
    mut solutions: Vec<ClusterSolution>,
    conflicts: impl Fn(usize, usize) -> bool,
    min_size: usize,
) -> Vec<ClusterSolution> {
    solutions.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap()
            .then(a.seed.cmp(&b.seed))
            .then(a.members.cmp(&b.members))
    });
    let mut committed: Vec<usize> = Vec::new();
    let mut accepted = Vec::new();
    'outer: for mut sol in solutions {
        let remaining: Vec<usize> = sol
            .members
            .iter()
            .copied()
            .filter(|&v| !committed.contains(&v) && !committed.iter().any(|&c| conflicts(v, c)))
            .collect();
        if remaining.is_empty() || remaining.len() < min_size {
            continue;
        }
        for (a, &va) in remaining.iter().enumerate() {
            for &vb in &remaining[a + 1..] {
                if conflicts(va, vb) {
                    continue 'outer;
                }
            }
        }
        committed.extend_from_slice(&remaining);
        sol.members = remaining;
        accepted.push(sol);
    }
    accepted
}
