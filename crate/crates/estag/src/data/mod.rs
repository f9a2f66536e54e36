//! Trajectories, windowed samples, and neighbor graphs.

pub mod io;
pub mod simulate;

pub use simulate::{simulate, SimConfig};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Simulation provenance carried by generated trajectories.
#[derive(Clone, Debug, PartialEq)]
pub struct SimMeta {
    pub step_size: f64,
    pub seed: u64,
    pub hidden: usize,
    pub topology: String,
}

/// A full simulated time series. Positions hold every node, visible
/// nodes first; only the first `visible` nodes are ever exported into
/// samples or dataset files, so hidden dynamics stay hidden.
#[derive(Clone, Debug)]
pub struct Trajectory {
    /// `[F, N_total, C, 3]`.
    pub positions: Tensor,
    /// Number of observable nodes, `<= N_total`.
    pub visible: usize,
    /// `[visible, c]` static node features.
    pub node_feats: Tensor,
    /// Present for simulated trajectories, absent for ingested ones.
    pub meta: Option<SimMeta>,
}

impl Trajectory {
    pub fn frames(&self) -> usize {
        self.positions.shape()[0]
    }

    pub fn total_nodes(&self) -> usize {
        self.positions.shape()[1]
    }

    pub fn channels(&self) -> usize {
        self.positions.shape()[2]
    }

    pub fn feat_dim(&self) -> usize {
        self.node_feats.shape()[1]
    }

    /// Position of one node in one frame and channel.
    pub fn pos(&self, frame: usize, node: usize, channel: usize) -> [f64; 3] {
        let (n, c) = (self.total_nodes(), self.channels());
        let base = ((frame * n + node) * c + channel) * 3;
        let d = self.positions.data();
        [d[base], d[base + 1], d[base + 2]]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Hop {
    One,
    Two,
}

/// Undirected neighbor structure with 1-hop/2-hop typing, built once per
/// sample from its first input frame and reused across frames.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborGraph {
    n: usize,
    /// Unordered pairs `a < b` with hop type and the distance at build time.
    edges: Vec<(usize, usize, Hop, f64)>,
}

impl NeighborGraph {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize, Hop, f64)] {
        &self.edges
    }

    /// Directed edge list (both orientations), lexicographically sorted by
    /// (dst, src) so per-node aggregation order is deterministic.
    pub fn directed_edges(&self) -> Vec<(usize, usize, Hop, f64)> {
        let mut out = Vec::with_capacity(self.edges.len() * 2);
        for &(a, b, hop, d) in &self.edges {
            out.push((a, b, hop, d));
            out.push((b, a, hop, d));
        }
        out.sort_by_key(|&(dst, src, _, _)| (dst, src));
        out
    }

    pub fn degree(&self, i: usize) -> usize {
        self.edges
            .iter()
            .filter(|&&(a, b, _, _)| a == i || b == i)
            .count()
    }

    pub fn isolated_nodes(&self) -> Vec<usize> {
        (0..self.n).filter(|&i| self.degree(i) == 0).collect()
    }

    pub fn neighbors(&self, i: usize) -> Vec<(usize, Hop)> {
        let mut out: Vec<(usize, Hop)> = self
            .edges
            .iter()
            .filter_map(|&(a, b, hop, _)| {
                if a == i {
                    Some((b, hop))
                } else if b == i {
                    Some((a, hop))
                } else {
                    None
                }
            })
            .collect();
        out.sort_by_key(|&(j, _)| j);
        out
    }

    /// Relabel nodes by a permutation (new index = perm[old index]).
    pub fn permuted(&self, perm: &[usize]) -> NeighborGraph {
        let mut edges: Vec<(usize, usize, Hop, f64)> = self
            .edges
            .iter()
            .map(|&(a, b, hop, d)| {
                let (pa, pb) = (perm[a], perm[b]);
                (pa.min(pb), pa.max(pb), hop, d)
            })
            .collect();
        edges.sort_by_key(|&(a, b, _, _)| (a, b));
        NeighborGraph { n: self.n, edges }
    }
}

/// One training instance: `T` input frames, one label frame, static
/// features, and the neighbor graph from the first input frame.
#[derive(Clone, Debug)]
pub struct Sample {
    /// `[T, N, C, 3]`.
    pub input: Tensor,
    /// `[N, C, 3]`.
    pub label: Tensor,
    /// `[N, c]`.
    pub feats: Tensor,
    pub graph: NeighborGraph,
}

impl Sample {
    pub fn t_frames(&self) -> usize {
        self.input.shape()[0]
    }

    pub fn n_nodes(&self) -> usize {
        self.input.shape()[1]
    }

    pub fn channels(&self) -> usize {
        self.input.shape()[2]
    }

    pub fn feat_dim(&self) -> usize {
        self.feats.shape()[1]
    }
}

/// Build the 1-hop/2-hop neighbor graph from one frame of positions
/// (`[N, 3]`, typically the reference channel of the first input frame).
///
/// 1-hop: pairwise distance strictly below `lambda`. 2-hop: reachable in
/// exactly two 1-hop edges and not already 1-hop (hop sets are disjoint).
pub fn build_neighbors(positions: &Tensor, lambda: f64, use_2hop: bool) -> Result<NeighborGraph> {
    if !(lambda > 0.0) {
        return Err(Error::Config(format!(
            "neighbor cutoff must be positive, got {lambda}"
        )));
    }
    if positions.rank() != 2 || positions.cols() != 3 {
        return Err(Error::ShapeMismatch {
            op: "build_neighbors",
            lhs: positions.shape().to_vec(),
            rhs: vec![0, 3],
        });
    }
    let n = positions.rows();
    let dist = |i: usize, j: usize| -> f64 {
        let (pi, pj) = (positions.row(i), positions.row(j));
        ((pi[0] - pj[0]).powi(2) + (pi[1] - pj[1]).powi(2) + (pi[2] - pj[2]).powi(2)).sqrt()
    };

    let mut one_hop = vec![vec![false; n]; n];
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let d = dist(i, j);
            if d < lambda {
                one_hop[i][j] = true;
                one_hop[j][i] = true;
                edges.push((i, j, Hop::One, d));
            }
        }
    }
    if use_2hop {
        for i in 0..n {
            for j in (i + 1)..n {
                if one_hop[i][j] {
                    continue;
                }
                let reachable = (0..n).any(|m| m != i && m != j && one_hop[i][m] && one_hop[m][j]);
                if reachable {
                    edges.push((i, j, Hop::Two, dist(i, j)));
                }
            }
        }
    }
    edges.sort_by_key(|&(a, b, _, _)| (a, b));
    Ok(NeighborGraph { n, edges })
}

/// Slide a window of `t` frames spaced `dt` apart over the trajectory.
///
/// Start index `s` yields input frames `s, s+dt, ..., s+(t-1)·dt` and the
/// label frame `s + t·dt`; valid starts are `0 ..= F-1-t·dt`, giving
/// `F - t·dt` samples. Returns an empty list (with a warning) when the
/// trajectory is too short. Only visible nodes are exported.
pub fn window(
    traj: &Trajectory,
    t: usize,
    dt: usize,
    lambda: f64,
    use_2hop: bool,
) -> Result<Vec<Sample>> {
    if t == 0 || dt == 0 {
        return Err(Error::Config(format!(
            "window needs t >= 1 and dt >= 1, got t={t}, dt={dt}"
        )));
    }
    let f = traj.frames();
    let span = t * dt;
    if f < span + 1 {
        log::warn!("trajectory too short for windowing: F={f} < t*dt+1={}", span + 1);
        return Ok(Vec::new());
    }
    let n = traj.visible;
    let c = traj.channels();
    let mut samples = Vec::with_capacity(f - span);
    for s in 0..=(f - 1 - span) {
        let mut input = Vec::with_capacity(t * n * c * 3);
        for j in 0..t {
            let frame = s + j * dt;
            for node in 0..n {
                for ch in 0..c {
                    input.extend_from_slice(&traj.pos(frame, node, ch));
                }
            }
        }
        let mut label = Vec::with_capacity(n * c * 3);
        for node in 0..n {
            for ch in 0..c {
                label.extend_from_slice(&traj.pos(s + span, node, ch));
            }
        }
        // Reference-channel coordinates of the first input frame.
        let mut frame0 = Vec::with_capacity(n * 3);
        for node in 0..n {
            frame0.extend_from_slice(&traj.pos(s, node, 0));
        }
        let graph = build_neighbors(&Tensor::new(vec![n, 3], frame0)?, lambda, use_2hop)?;
        samples.push(Sample {
            input: Tensor::new(vec![t, n, c, 3], input)?,
            label: Tensor::new(vec![n, c, 3], label)?,
            feats: traj.node_feats.clone(),
            graph,
        });
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_traj(f: usize, n: usize) -> Trajectory {
        // Node i sits at (i, 0, 0) and drifts +x by 0.01 per frame.
        let mut data = Vec::new();
        for frame in 0..f {
            for node in 0..n {
                data.extend_from_slice(&[node as f64 + 0.01 * frame as f64, 0.0, 0.0]);
            }
        }
        Trajectory {
            positions: Tensor::new(vec![f, n, 1, 3], data).unwrap(),
            visible: n,
            node_feats: Tensor::filled(vec![n, 1], 1.0),
            meta: None,
        }
    }

    #[test]
    fn window_count_formula() {
        // F=25, T=2, dt=5 -> 15 samples.
        let traj = line_traj(25, 2);
        let samples = window(&traj, 2, 5, 1.5, true).unwrap();
        assert_eq!(samples.len(), 15);
    }

    #[test]
    fn window_minimal_length_gives_one_sample() {
        let traj = line_traj(11, 2);
        let samples = window(&traj, 2, 5, 1.5, true).unwrap();
        assert_eq!(samples.len(), 1);
    }

    #[test]
    fn window_too_short_is_empty() {
        let traj = line_traj(10, 2);
        assert!(window(&traj, 2, 5, 1.5, true).unwrap().is_empty());
    }

    #[test]
    fn window_frame_indices() {
        // Sample 0 of (T=3, dt=2) uses frames {0,2,4}, label 6.
        let traj = line_traj(8, 1);
        let samples = window(&traj, 3, 2, 1.5, false).unwrap();
        let s0 = &samples[0];
        let xs: Vec<f64> = s0.input.data().iter().step_by(3).cloned().collect();
        assert_eq!(xs, vec![0.0, 0.02, 0.04]);
        assert_eq!(s0.label.data()[0], 0.06);
    }

    #[test]
    fn window_never_leaks_label_or_later_frames() {
        let traj = line_traj(30, 2);
        let (t, dt) = (3, 4);
        let samples = window(&traj, t, dt, 1.5, true).unwrap();
        for (s, sample) in samples.iter().enumerate() {
            let max_input_frame = s + (t - 1) * dt;
            let label_frame = s + t * dt;
            assert!(max_input_frame < label_frame);
            // Last input frame x-coordinate matches the expected frame.
            let last = sample.input.data()[(t - 1) * 2 * 3];
            assert!((last - (0.0 + 0.01 * max_input_frame as f64)).abs() < 1e-15);
        }
    }

    #[test]
    fn hidden_nodes_never_reach_samples() {
        let mut traj = line_traj(12, 3);
        traj.visible = 2;
        traj.node_feats = Tensor::filled(vec![2, 1], 1.0);
        let samples = window(&traj, 2, 5, 1.5, true).unwrap();
        assert!(samples.iter().all(|s| s.n_nodes() == 2));
    }

    #[test]
    fn neighbor_cutoff_examples() {
        // Two nodes at distance 1.0 with lambda 0.5: no edges.
        let pos = Tensor::new(vec![2, 3], vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let g = build_neighbors(&pos, 0.5, true).unwrap();
        assert!(g.edges().is_empty());
        assert_eq!(g.isolated_nodes(), vec![0, 1]);

        // Chain A-B-C with |AB|=|BC|=1, |AC|=2, lambda=1.5: AC is 2-hop.
        let pos = Tensor::new(
            vec![3, 3],
            vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 2.0, 0.0, 0.0],
        )
        .unwrap();
        let g = build_neighbors(&pos, 1.5, true).unwrap();
        assert_eq!(
            g.edges(),
            &[
                (0, 1, Hop::One, 1.0),
                (0, 2, Hop::Two, 2.0),
                (1, 2, Hop::One, 1.0)
            ]
        );
    }

    #[test]
    fn large_cutoff_gives_complete_one_hop_graph() {
        let pos = Tensor::new(
            vec![3, 3],
            vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0],
        )
        .unwrap();
        let g = build_neighbors(&pos, 10.0, true).unwrap();
        assert_eq!(g.edges().len(), 3);
        assert!(g.edges().iter().all(|&(_, _, hop, _)| hop == Hop::One));
    }

    #[test]
    fn graph_symmetry_and_hop_disjointness() {
        let mut rng = crate::rng::Rng::new(99);
        for _ in 0..20 {
            let n = 2 + rng.below(6);
            let data: Vec<f64> = (0..n * 3).map(|_| rng.uniform_in(-2.0, 2.0)).collect();
            let pos = Tensor::new(vec![n, 3], data).unwrap();
            let g = build_neighbors(&pos, 1.7, true).unwrap();
            for i in 0..n {
                for (j, hop) in g.neighbors(i) {
                    assert_ne!(i, j, "self loop");
                    let back = g.neighbors(j);
                    assert!(back.iter().any(|&(k, h)| k == i && h == hop), "asymmetric");
                }
                // A node never appears under both hop types.
                let nbrs = g.neighbors(i);
                for w in nbrs.windows(2) {
                    assert_ne!(w[0].0, w[1].0, "duplicate neighbor with two hop types");
                }
            }
        }
    }
}
