//! Finite weighted graphs with exact integer vertex coordinates.
//!
//! Vertex identity is always an exact integer pair in units of `1/den`,
//! so gluing cells at shared points is exact and rebuilding a graph is
//! bit-for-bit deterministic.

mod build;
mod io;

pub use build::{
    build_blowup, build_cable, build_compact, build_prefractal, BlowupSpec, BuildOptions,
};
pub use io::{graph_from_json, graph_to_json};

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The built-in self-similar families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FractalFamily {
    Interval,
    Gasket,
    Carpet,
    Vicsek,
}

impl FractalFamily {
    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "interval" => Ok(Self::Interval),
            "gasket" => Ok(Self::Gasket),
            "carpet" => Ok(Self::Carpet),
            "vicsek" => Ok(Self::Vicsek),
            other => Err(Error::UnknownFamily(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Interval => "interval",
            Self::Gasket => "gasket",
            Self::Carpet => "carpet",
            Self::Vicsek => "vicsek",
        }
    }

    /// Number of contractions N.
    pub fn contraction_count(&self) -> usize {
        match self {
            Self::Interval => 2,
            Self::Gasket => 3,
            Self::Carpet => 8,
            Self::Vicsek => 5,
        }
    }

    /// Linear scale factor L.
    pub fn scale_factor(&self) -> i64 {
        match self {
            Self::Interval | Self::Gasket => 2,
            Self::Carpet | Self::Vicsek => 3,
        }
    }

    /// Fixed points of the contractions, doubled so that they are exact
    /// integers (the raw points have denominator dividing 2).
    pub(crate) fn base_points(&self) -> &'static [(i64, i64)] {
        match self {
            Self::Interval => &[(0, 0), (2, 0)],
            // right-isoceles realization keeps all coordinates rational
            Self::Gasket => &[(0, 0), (2, 0), (0, 2)],
            Self::Carpet => &[
                (0, 0),
                (1, 0),
                (2, 0),
                (2, 1),
                (2, 2),
                (1, 2),
                (0, 2),
                (0, 1),
            ],
            Self::Vicsek => &[(0, 0), (2, 0), (2, 2), (0, 2), (1, 1)],
        }
    }

    /// Which base-point pairs are joined by an edge inside every cell.
    pub(crate) fn cell_edges(&self) -> &'static [(usize, usize)] {
        match self {
            Self::Interval => &[(0, 1)],
            Self::Gasket => &[(0, 1), (0, 2), (1, 2)],
            // boundary ring: consecutive points at distance half a side
            Self::Carpet => &[
                (0, 1),
                (1, 2),
                (2, 3),
                (3, 4),
                (4, 5),
                (5, 6),
                (6, 7),
                (7, 0),
            ],
            // center joined to the four corners
            Self::Vicsek => &[(4, 0), (4, 1), (4, 2), (4, 3)],
        }
    }
}

/// Distance mode for balls and verification windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricMode {
    Geodesic,
    Euclidean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    /// conductance
    pub c: f64,
    /// length
    pub len: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphMeta {
    pub family: String,
    pub level: u32,
    /// coordinate scale: real position = (x, y) / den
    pub scale: f64,
    pub kind: String,
}

/// A finite weighted graph: exact integer coordinates, vertex measures,
/// conductance- and length-weighted edges. Immutable once built.
#[derive(Debug, Clone)]
pub struct WeightedGraph {
    pub den: i64,
    coords: Vec<(i64, i64)>,
    measure: Vec<f64>,
    edges: Vec<Edge>,
    adj: Vec<Vec<(usize, usize)>>,
    pub meta: GraphMeta,
    fingerprint: u64,
}

impl WeightedGraph {
    pub(crate) fn assemble(
        den: i64,
        coords: Vec<(i64, i64)>,
        measure: Vec<f64>,
        edges: Vec<Edge>,
        meta: GraphMeta,
    ) -> Result<Self> {
        let n = coords.len();
        if n == 0 {
            return Err(Error::InvalidArgument("empty vertex set".into()));
        }
        let mut adj = vec![Vec::new(); n];
        for (idx, e) in edges.iter().enumerate() {
            if e.u == e.v {
                return Err(Error::InvalidArgument(format!("self-loop at {}", e.u)));
            }
            if e.u >= n || e.v >= n {
                return Err(Error::UnknownVertex(e.u.max(e.v)));
            }
            if !(e.c > 0.0) || !(e.len > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "edge ({}, {}) needs positive conductance and length",
                    e.u, e.v
                )));
            }
            adj[e.u].push((e.v, idx));
            adj[e.v].push((e.u, idx));
        }
        for (v, &m) in measure.iter().enumerate() {
            if !(m > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "vertex {v} has non-positive measure {m}"
                )));
            }
        }
        let mut g = WeightedGraph {
            den,
            coords,
            measure,
            edges,
            adj,
            meta,
            fingerprint: 0,
        };
        if !g.is_connected() {
            return Err(Error::InvalidArgument("graph is not connected".into()));
        }
        g.fingerprint = g.compute_fingerprint();
        Ok(g)
    }

    fn compute_fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.den.hash(&mut h);
        for &(x, y) in &self.coords {
            x.hash(&mut h);
            y.hash(&mut h);
        }
        for &m in &self.measure {
            m.to_bits().hash(&mut h);
        }
        for e in &self.edges {
            e.u.hash(&mut h);
            e.v.hash(&mut h);
            e.c.to_bits().hash(&mut h);
            e.len.to_bits().hash(&mut h);
        }
        h.finish()
    }

    pub fn vertex_count(&self) -> usize {
        self.coords.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, usize)] {
        &self.adj[v]
    }

    pub fn measure(&self, v: usize) -> f64 {
        self.measure[v]
    }

    pub fn measures(&self) -> &[f64] {
        &self.measure
    }

    pub fn total_measure(&self) -> f64 {
        self.measure.iter().sum()
    }

    pub fn coord_int(&self, v: usize) -> (i64, i64) {
        self.coords[v]
    }

    /// Real position of a vertex.
    pub fn position(&self, v: usize) -> (f64, f64) {
        let (x, y) = self.coords[v];
        (x as f64 / self.den as f64, y as f64 / self.den as f64)
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn euclidean_distance(&self, u: usize, v: usize) -> f64 {
        let (ux, uy) = self.position(u);
        let (vx, vy) = self.position(v);
        ((ux - vx).powi(2) + (uy - vy).powi(2)).sqrt()
    }

    /// Single-source shortest path along edge lengths.
    pub fn geodesic_distances(&self, source: usize) -> Vec<f64> {
        use std::cmp::Reverse;
        use std::collections::BinaryHeap;

        #[derive(PartialEq)]
        struct Item(f64, usize);
        impl Eq for Item {}
        impl PartialOrd for Item {
            fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
                Some(self.cmp(other))
            }
        }
        impl Ord for Item {
            fn cmp(&self, other: &Self) -> std::cmp::Ordering {
                self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
            }
        }

        let n = self.vertex_count();
        let mut dist = vec![f64::INFINITY; n];
        dist[source] = 0.0;
        let mut heap = BinaryHeap::new();
        heap.push(Reverse(Item(0.0, source)));
        while let Some(Reverse(Item(d, v))) = heap.pop() {
            if d > dist[v] {
                continue;
            }
            for &(w, ei) in &self.adj[v] {
                let nd = d + self.edges[ei].len;
                if nd < dist[w] {
                    dist[w] = nd;
                    heap.push(Reverse(Item(nd, w)));
                }
            }
        }
        dist
    }

    pub fn distance(&self, u: usize, v: usize, mode: MetricMode) -> f64 {
        match mode {
            MetricMode::Euclidean => self.euclidean_distance(u, v),
            MetricMode::Geodesic => self.geodesic_distances(u)[v],
        }
    }

    /// Open ball: vertices with d(center, .) < r.
    pub fn ball(&self, center: usize, r: f64, mode: MetricMode) -> Result<Vec<usize>> {
        if center >= self.vertex_count() {
            return Err(Error::UnknownVertex(center));
        }
        if !(r > 0.0) {
            return Err(Error::Domain(format!("radius must be positive, got {r}")));
        }
        let members = match mode {
            MetricMode::Euclidean => (0..self.vertex_count())
                .filter(|&v| self.euclidean_distance(center, v) < r)
                .collect(),
            MetricMode::Geodesic => {
                let dist = self.geodesic_distances(center);
                (0..self.vertex_count()).filter(|&v| dist[v] < r).collect()
            }
        };
        Ok(members)
    }

    /// Measure of the open ball.
    pub fn volume(&self, center: usize, r: f64, mode: MetricMode) -> Result<f64> {
        Ok(self
            .ball(center, r, mode)?
            .iter()
            .map(|&v| self.measure[v])
            .sum())
    }

    pub fn is_connected(&self) -> bool {
        let n = self.vertex_count();
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &(w, _) in &self.adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        count == n
    }

    pub fn min_edge_len(&self) -> f64 {
        self.edges.iter().map(|e| e.len).fold(f64::INFINITY, f64::min)
    }

    /// Geodesic diameter estimate via a double sweep.
    pub fn diameter_estimate(&self) -> f64 {
        let d0 = self.geodesic_distances(0);
        let far = (0..self.vertex_count())
            .max_by(|&a, &b| d0[a].total_cmp(&d0[b]))
            .unwrap_or(0);
        let d1 = self.geodesic_distances(far);
        d1.iter().cloned().fold(0.0, f64::max)
    }

    /// Vertices whose position lies in the bounding box shrunk by `margin`
    /// (fraction of each side) on every side. Used for boundary mitigation.
    pub fn central_vertices(&self, margin: f64) -> Vec<usize> {
        let (mut xmin, mut xmax) = (i64::MAX, i64::MIN);
        let (mut ymin, mut ymax) = (i64::MAX, i64::MIN);
        for &(x, y) in &self.coords {
            xmin = xmin.min(x);
            xmax = xmax.max(x);
            ymin = ymin.min(y);
            ymax = ymax.max(y);
        }
        let w = (xmax - xmin) as f64;
        let h = (ymax - ymin) as f64;
        let (xlo, xhi) = (xmin as f64 + margin * w, xmax as f64 - margin * w);
        // degenerate (1-D) boxes keep the full transverse extent
        let (ylo, yhi) = if h > 0.0 {
            (ymin as f64 + margin * h, ymax as f64 - margin * h)
        } else {
            (ymin as f64, ymax as f64)
        };
        (0..self.vertex_count())
            .filter(|&v| {
                let (x, y) = (self.coords[v].0 as f64, self.coords[v].1 as f64);
                x >= xlo && x <= xhi && y >= ylo && y <= yhi
            })
            .collect()
    }

    /// New graph with one edge's conductance replaced. Used for Rayleigh
    /// monotonicity checks.
    pub fn with_conductance(&self, edge_idx: usize, c: f64) -> Result<WeightedGraph> {
        if edge_idx >= self.edges.len() {
            return Err(Error::InvalidArgument(format!(
                "edge index {edge_idx} out of range"
            )));
        }
        let mut edges = self.edges.clone();
        edges[edge_idx].c = c;
        WeightedGraph::assemble(
            self.den,
            self.coords.clone(),
            self.measure.clone(),
            edges,
            self.meta.clone(),
        )
    }

    /// New graph with every conductance multiplied by `lambda`. Used for
    /// normalization-invariance checks.
    pub fn scaled_conductances(&self, lambda: f64) -> Result<WeightedGraph> {
        let edges = self
            .edges
            .iter()
            .map(|e| Edge {
                c: e.c * lambda,
                ..*e
            })
            .collect();
        WeightedGraph::assemble(
            self.den,
            self.coords.clone(),
            self.measure.clone(),
            edges,
            self.meta.clone(),
        )
    }

    /// Induced subgraph on `keep` (must be connected); returns the subgraph
    /// and the map from new ids to original ids.
    pub fn induced_subgraph(&self, keep: &[usize]) -> Result<(WeightedGraph, Vec<usize>)> {
        let mut new_id = vec![usize::MAX; self.vertex_count()];
        let mut order: Vec<usize> = keep.to_vec();
        order.sort_unstable();
        order.dedup();
        for (i, &v) in order.iter().enumerate() {
            new_id[v] = i;
        }
        let coords = order.iter().map(|&v| self.coords[v]).collect();
        let measure = order.iter().map(|&v| self.measure[v]).collect();
        let edges = self
            .edges
            .iter()
            .filter(|e| new_id[e.u] != usize::MAX && new_id[e.v] != usize::MAX)
            .map(|e| Edge {
                u: new_id[e.u],
                v: new_id[e.v],
                ..*e
            })
            .collect();
        let meta = GraphMeta {
            kind: format!("{}-sub", self.meta.kind),
            ..self.meta.clone()
        };
        let g = WeightedGraph::assemble(self.den, coords, measure, edges, meta)?;
        Ok((g, order))
    }
}
