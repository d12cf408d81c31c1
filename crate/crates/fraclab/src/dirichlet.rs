//! Graph Dirichlet form: energy, Laplacian, harmonic extension, Poisson
//! problems and the trace (Schur complement) form on a subset of vertices.
//!
//! Conventions: the energy is E(u, v) = sum_e c_e (u(x)-u(y))(v(x)-v(y)),
//! the Laplacian is (Lu)(x) = (1/m_x) sum_{y~x} c_xy (u(x)-u(y)), so
//! E(u, v) = <Lu, v>_m and L is non-negative with constant kernel.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::linalg::{SolveDiagnostics, SparseSym};

/// A function on the vertices of a specific graph. Carries the graph
/// fingerprint so a potential cannot silently be evaluated on the wrong
/// graph.
#[derive(Debug, Clone)]
pub struct Potential {
    values: Vec<f64>,
    graph_fp: u64,
}

impl Potential {
    pub fn new(graph: &WeightedGraph, values: Vec<f64>) -> Result<Self> {
        if values.len() != graph.vertex_count() {
            return Err(Error::InvalidArgument(format!(
                "potential has {} values for a graph with {} vertices",
                values.len(),
                graph.vertex_count()
            )));
        }
        Ok(Potential {
            values,
            graph_fp: graph.fingerprint(),
        })
    }

    pub fn check_domain(&self, graph: &WeightedGraph) -> Result<()> {
        if self.graph_fp != graph.fingerprint() {
            return Err(Error::DomainMismatch);
        }
        Ok(())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, v: usize) -> f64 {
        self.values[v]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Bilinear Dirichlet energy E(u, v).
pub fn energy(graph: &WeightedGraph, u: &Potential, v: &Potential) -> Result<f64> {
    u.check_domain(graph)?;
    v.check_domain(graph)?;
    Ok(graph
        .edges()
        .iter()
        .map(|e| e.c * (u.value(e.u) - u.value(e.v)) * (v.value(e.u) - v.value(e.v)))
        .sum())
}

/// Pointwise Laplacian (Lu)(x) = (1/m_x) sum c_xy (u(x) - u(y)).
pub fn laplacian_apply(graph: &WeightedGraph, u: &Potential) -> Result<Vec<f64>> {
    u.check_domain(graph)?;
    let mut out = vec![0.0; graph.vertex_count()];
    for e in graph.edges() {
        let d = e.c * (u.value(e.u) - u.value(e.v));
        out[e.u] += d;
        out[e.v] -= d;
    }
    for (x, o) in out.iter_mut().enumerate() {
        *o /= graph.measure(x);
    }
    Ok(out)
}

fn interior_system(
    graph: &WeightedGraph,
    boundary: &BTreeMap<usize, f64>,
) -> Result<(Vec<usize>, Vec<usize>, SparseSym, Vec<f64>)> {
    let n = graph.vertex_count();
    for &b in boundary.keys() {
        if b >= n {
            return Err(Error::UnknownVertex(b));
        }
    }
    if boundary.is_empty() {
        return Err(Error::InvalidArgument(
            "boundary condition set must be non-empty".into(),
        ));
    }
    let mut idx = vec![usize::MAX; n];
    let mut interior = Vec::new();
    for v in 0..n {
        if !boundary.contains_key(&v) {
            idx[v] = interior.len();
            interior.push(v);
        }
    }
    let mut a = SparseSym::new(interior.len());
    let mut rhs = vec![0.0; interior.len()];
    for e in graph.edges() {
        match (idx[e.u], idx[e.v]) {
            (usize::MAX, usize::MAX) => {}
            (i, usize::MAX) => {
                a.add_diag(i, e.c);
                rhs[i] += e.c * boundary[&e.v];
            }
            (usize::MAX, j) => {
                a.add_diag(j, e.c);
                rhs[j] += e.c * boundary[&e.u];
            }
            (i, j) => {
                a.add_diag(i, e.c);
                a.add_diag(j, e.c);
                a.add_sym(i, j, -e.c);
            }
        }
    }
    Ok((interior, idx, a, rhs))
}

/// Solve the Dirichlet problem: u given on `boundary`, Lu = 0 elsewhere.
pub fn solve_harmonic(
    graph: &WeightedGraph,
    boundary: &BTreeMap<usize, f64>,
) -> Result<(Potential, SolveDiagnostics)> {
    solve_poisson(graph, None, boundary)
}

/// Solve Lu = f on the interior with prescribed boundary values. `f` is a
/// density with respect to the vertex measure; `None` means zero.
pub fn solve_poisson(
    graph: &WeightedGraph,
    f: Option<&[f64]>,
    boundary: &BTreeMap<usize, f64>,
) -> Result<(Potential, SolveDiagnostics)> {
    if let Some(f) = f {
        if f.len() != graph.vertex_count() {
            return Err(Error::InvalidArgument(format!(
                "source term has {} values for a graph with {} vertices",
                f.len(),
                graph.vertex_count()
            )));
        }
    }
    let (interior, _idx, a, mut rhs) = interior_system(graph, boundary)?;
    if let Some(f) = f {
        for (i, &v) in interior.iter().enumerate() {
            rhs[i] += graph.measure(v) * f[v];
        }
    }
    let (x, diag) = a.solve(&rhs)?;
    let mut values = vec![0.0; graph.vertex_count()];
    for (&v, &val) in boundary {
        values[v] = val;
    }
    for (i, &v) in interior.iter().enumerate() {
        values[v] = x[i];
    }
    Ok((Potential::new(graph, values)?, diag))
}

/// Trace of the Dirichlet form onto `keep`: the Schur complement matrix T
/// with E(Hphi) = phi^T T phi, where Hphi is the harmonic extension of phi.
/// Row/column order follows the sorted, deduplicated `keep` list (also
/// returned).
pub fn trace_form(graph: &WeightedGraph, keep: &[usize]) -> Result<(DMatrix<f64>, Vec<usize>)> {
    let mut order: Vec<usize> = keep.to_vec();
    order.sort_unstable();
    order.dedup();
    if order.len() < 2 {
        return Err(Error::InvalidArgument(
            "trace form needs at least two vertices".into(),
        ));
    }
    let k = order.len();
    let mut t = DMatrix::zeros(k, k);
    for (col, &b) in order.iter().enumerate() {
        let boundary: BTreeMap<usize, f64> = order
            .iter()
            .map(|&v| (v, if v == b { 1.0 } else { 0.0 }))
            .collect();
        let (h, _) = solve_harmonic(graph, &boundary)?;
        // column of T = net current into the kept vertices
        let mut flux = vec![0.0; graph.vertex_count()];
        for e in graph.edges() {
            let d = e.c * (h.value(e.u) - h.value(e.v));
            flux[e.u] += d;
            flux[e.v] -= d;
        }
        for (row, &v) in order.iter().enumerate() {
            t[(row, col)] = flux[v];
        }
    }
    // enforce exact symmetry (solves introduce ~1e-12 asymmetry)
    for i in 0..k {
        for j in (i + 1)..k {
            let avg = 0.5 * (t[(i, j)] + t[(j, i)]);
            t[(i, j)] = avg;
            t[(j, i)] = avg;
        }
    }
    Ok((t, order))
}

/// Energy of a vector through a trace-form matrix.
pub fn trace_energy(t: &DMatrix<f64>, phi: &[f64]) -> f64 {
    let k = phi.len();
    let mut acc = 0.0;
    for i in 0..k {
        for j in 0..k {
            acc += phi[i] * t[(i, j)] * phi[j];
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_compact, BuildOptions, FractalFamily};
    use approx::assert_relative_eq;

    fn interval(n: u32) -> WeightedGraph {
        build_compact(FractalFamily::Interval, n, &BuildOptions::default()).unwrap()
    }

    #[test]
    fn harmonic_on_interval_is_linear() {
        let g = interval(5);
        let left = (0..g.vertex_count())
            .find(|&v| g.position(v).0 == 0.0)
            .unwrap();
        let right = (0..g.vertex_count())
            .find(|&v| g.position(v).0 == 1.0)
            .unwrap();
        let boundary: BTreeMap<usize, f64> = [(left, 0.0), (right, 3.0)].into();
        let (u, _) = solve_harmonic(&g, &boundary).unwrap();
        for v in 0..g.vertex_count() {
            assert_relative_eq!(u.value(v), 3.0 * g.position(v).0, epsilon = 1e-10);
        }
    }

    #[test]
    fn laplacian_annihilates_constants_and_matches_energy() {
        let g = build_compact(FractalFamily::Gasket, 3, &BuildOptions::default()).unwrap();
        let ones = Potential::new(&g, vec![1.0; g.vertex_count()]).unwrap();
        for l in laplacian_apply(&g, &ones).unwrap() {
            assert_eq!(l, 0.0);
        }
        // E(u, v) == <Lu, v>_m for arbitrary u, v
        let u = Potential::new(
            &g,
            (0..g.vertex_count()).map(|v| (v as f64).sin()).collect(),
        )
        .unwrap();
        let v = Potential::new(
            &g,
            (0..g.vertex_count()).map(|v| (v as f64 * 0.7).cos()).collect(),
        )
        .unwrap();
        let lu = laplacian_apply(&g, &u).unwrap();
        let pairing: f64 = (0..g.vertex_count())
            .map(|x| lu[x] * v.value(x) * g.measure(x))
            .sum();
        assert_relative_eq!(
            energy(&g, &u, &v).unwrap(),
            pairing,
            max_relative = 1e-12
        );
    }

    #[test]
    fn poisson_residual_vanishes_on_interior() {
        let g = build_compact(FractalFamily::Vicsek, 2, &BuildOptions::default()).unwrap();
        let f: Vec<f64> = (0..g.vertex_count()).map(|v| (v % 5) as f64 - 2.0).collect();
        let boundary: BTreeMap<usize, f64> = [(0usize, 0.0), (3usize, 1.0)].into();
        let (u, _) = solve_poisson(&g, Some(&f), &boundary).unwrap();
        let lu = laplacian_apply(&g, &u).unwrap();
        for v in 0..g.vertex_count() {
            if !boundary.contains_key(&v) {
                assert_relative_eq!(lu[v], f[v], max_relative = 1e-8, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn trace_of_series_path_is_series_conductance() {
        // 3-vertex path with conductances 2 and 3: series value 6/5
        let g = WeightedGraph::assemble(
            2,
            vec![(0, 0), (1, 0), (2, 0)],
            vec![1.0, 1.0, 1.0],
            vec![
                crate::graph::Edge { u: 0, v: 1, c: 2.0, len: 0.5 },
                crate::graph::Edge { u: 1, v: 2, c: 3.0, len: 0.5 },
            ],
            crate::graph::GraphMeta {
                family: "interval".into(),
                level: 1,
                scale: 1.0,
                kind: "test".into(),
            },
        )
        .unwrap();
        let (t, order) = trace_form(&g, &[0, 2]).unwrap();
        assert_eq!(order, vec![0, 2]);
        assert_relative_eq!(t[(0, 0)], 1.2, max_relative = 1e-12);
        assert_relative_eq!(t[(0, 1)], -1.2, max_relative = 1e-12);
        assert_relative_eq!(t[(1, 1)], 1.2, max_relative = 1e-12);
        // energy through the trace equals energy of the harmonic extension
        let boundary: BTreeMap<usize, f64> = [(0usize, 0.0), (2usize, 1.0)].into();
        let (h, _) = solve_harmonic(&g, &boundary).unwrap();
        assert_relative_eq!(
            trace_energy(&t, &[0.0, 1.0]),
            energy(&g, &h, &h).unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn wrong_graph_is_rejected() {
        let g1 = interval(2);
        let g2 = interval(3);
        let u = Potential::new(&g1, vec![0.0; g1.vertex_count()]).unwrap();
        assert!(matches!(
            laplacian_apply(&g2, &u),
            Err(Error::DomainMismatch)
        ));
    }
}
