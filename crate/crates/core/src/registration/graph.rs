use std::cmp::Ordering;

use super::RegistrationError;
use crate::geom::Pose;
use crate::marker::MarkerObservation;

/// Smallest edge weight; keeps noiseless observations from forming
/// zero-cost paths.
pub const WEIGHT_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub scan: usize,
    /// Index into [`FirstLevelGraph::markers`].
    pub marker: usize,
    pub weight: f64,
    /// Marker → scan.
    pub pose: Pose,
}

/// Bipartite scan–marker graph. Node `k < scans` is scan `k`; node
/// `scans + m` is marker `markers[m]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FirstLevelGraph {
    pub scans: usize,
    /// Marker ids, ascending.
    pub markers: Vec<usize>,
    pub edges: Vec<Edge>,
    pub anchor: usize,
}

impl FirstLevelGraph {
    pub fn node_count(&self) -> usize {
        self.scans + self.markers.len()
    }

    pub fn marker_node(&self, m: usize) -> usize {
        self.scans + m
    }

    pub fn marker_index(&self, id: usize) -> Option<usize> {
        self.markers.binary_search(&id).ok()
    }

    pub fn edge(&self, scan: usize, marker: usize) -> Option<&Edge> {
        self.edges.iter().find(|e| e.scan == scan && e.marker == marker)
    }

    /// `(neighbor, weight)` per node, neighbors ascending.
    pub fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.node_count()];
        for e in &self.edges {
            let m = self.marker_node(e.marker);
            adj[e.scan].push((m, e.weight));
            adj[m].push((e.scan, e.weight));
        }
        for a in &mut adj {
            a.sort_by(|x, y| x.0.cmp(&y.0));
        }
        adj
    }
}

/// One scan node per entry of `observations`, one marker node per distinct
/// id, one edge per (scan, marker) pair. Repeated pairs keep the lowest
/// `e_pp`.
pub fn build_first_level(observations: &[Vec<MarkerObservation>], anchor: usize) -> Result<FirstLevelGraph, RegistrationError> {
    if observations.iter().all(|o| o.is_empty()) {
        return Err(RegistrationError::NoObservations);
    }
    if anchor >= observations.len() {
        return Err(RegistrationError::BadAnchor(anchor, observations.len()));
    }
    let mut markers: Vec<usize> = observations.iter().flatten().map(|o| o.id).collect();
    markers.sort_unstable();
    markers.dedup();
    let mut edges: Vec<Edge> = Vec::new();
    for (scan, obs) in observations.iter().enumerate() {
        for o in obs {
            let marker = markers.binary_search(&o.id).expect("collected above");
            let weight = o.e_pp.max(WEIGHT_FLOOR);
            match edges.iter_mut().find(|e| e.scan == scan && e.marker == marker) {
                Some(e) if weight < e.weight => {
                    e.weight = weight;
                    e.pose = o.pose;
                }
                Some(_) => {}
                None => edges.push(Edge { scan, marker, weight, pose: o.pose }),
            }
        }
    }
    Ok(FirstLevelGraph { scans: observations.len(), markers, edges, anchor })
}

/// Minimum-weight paths from `source`: `(cost, node sequence)` per node,
/// `None` when unreachable. Equal costs prefer the lexicographically smaller
/// node sequence.
pub fn shortest_paths(adj: &[Vec<(usize, f64)>], source: usize) -> Vec<Option<(f64, Vec<usize>)>> {
    let n = adj.len();
    let mut best: Vec<Option<(f64, Vec<usize>)>> = vec![None; n];
    let mut done = vec![false; n];
    best[source] = Some((0.0, vec![source]));
    loop {
        let next = (0..n)
            .filter(|&v| !done[v] && best[v].is_some())
            .min_by(|&a, &b| path_order(best[a].as_ref().unwrap(), best[b].as_ref().unwrap()));
        let Some(u) = next else { break };
        done[u] = true;
        let (du, pu) = best[u].clone().unwrap();
        for &(v, w) in &adj[u] {
            if done[v] {
                continue;
            }
            let mut path = pu.clone();
            path.push(v);
            let cand = (du + w, path);
            if best[v].as_ref().is_none_or(|cur| path_order(&cand, cur) == Ordering::Less) {
                best[v] = Some(cand);
            }
        }
    }
    best
}

fn path_order(a: &(f64, Vec<usize>), b: &(f64, Vec<usize>)) -> Ordering {
    a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1))
}

/// Scan poses in the anchor frame, chained along shortest paths, plus
/// the scans no path reaches.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialPoses {
    /// Scan → anchor frame; `None` for unreachable scans.
    pub poses: Vec<Option<Pose>>,
    /// Node sequences used for chaining.
    pub paths: Vec<Option<Vec<usize>>>,
    pub costs: Vec<Option<f64>>,
    pub unreachable: Vec<usize>,
}

/// Each hop scan `a` → marker `j` → scan `b` composes
/// `T_b = T_a · T_a^j · (T_b^j)⁻¹`.
pub fn initial_poses(g: &FirstLevelGraph) -> InitialPoses {
    let sp = shortest_paths(&g.adjacency(), g.anchor);
    let mut out = InitialPoses {
        poses: vec![None; g.scans],
        paths: vec![None; g.scans],
        costs: vec![None; g.scans],
        unreachable: Vec::new(),
    };
    for scan in 0..g.scans {
        let Some((cost, path)) = &sp[scan] else {
            out.unreachable.push(scan);
            continue;
        };
        let mut pose = Pose::identity();
        for k in (1..path.len()).step_by(2) {
            let (from, marker, to) = (path[k - 1], path[k] - g.scans, path[k + 1]);
            let e_from = g.edge(from, marker).expect("path edge");
            let e_to = g.edge(to, marker).expect("path edge");
            pose = pose * e_from.pose * e_to.pose.inverse();
        }
        out.poses[scan] = Some(pose);
        out.paths[scan] = Some(path.clone());
        out.costs[scan] = Some(*cost);
    }
    out
}
