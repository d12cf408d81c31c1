//! Heat semigroup on a weighted graph.
//!
//! The primary path is spectral: diagonalize the symmetrized operator
//! A = M^{-1/2} C M^{-1/2}, map eigenvectors back to m-orthonormal
//! eigenfunctions of L = M^{-1} C, and evaluate
//! p_t(x, y) = sum_k exp(-lambda_k t) phi_k(x) phi_k(y).
//! Conservation holds because lambda_0 = 0 with constant eigenfunction.
//! A Crank-Nicolson stepper provides an independent cross-check and a
//! fallback when the graph is too large to diagonalize.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::linalg::SparseSym;

/// Dense diagonalization refuses graphs above this size.
pub const SPECTRUM_CAP: usize = 6000;

#[derive(Debug, Clone)]
pub struct Spectrum {
    graph_fp: u64,
    /// ascending; the first entry is exactly 0
    eigenvalues: Vec<f64>,
    /// phi[(x, k)]: k-th eigenfunction, m-orthonormal
    phi: DMatrix<f64>,
    measure: Vec<f64>,
}

impl Spectrum {
    pub fn compute(graph: &WeightedGraph) -> Result<Self> {
        let n = graph.vertex_count();
        if n > SPECTRUM_CAP {
            return Err(Error::SpectrumCap {
                size: n,
                cap: SPECTRUM_CAP,
            });
        }
        let sqrt_m: Vec<f64> = (0..n).map(|v| graph.measure(v).sqrt()).collect();
        let mut a = faer::Mat::<f64>::zeros(n, n);
        for e in graph.edges() {
            let w = e.c / (sqrt_m[e.u] * sqrt_m[e.v]);
            a[(e.u, e.v)] -= w;
            a[(e.v, e.u)] -= w;
            a[(e.u, e.u)] += e.c / graph.measure(e.u);
            a[(e.v, e.v)] += e.c / graph.measure(e.v);
        }
        let eig = a
            .self_adjoint_eigen(faer::Side::Lower)
            .map_err(|e| Error::SingularSystem(format!("eigendecomposition failed: {e:?}")))?;
        let s = eig.S();
        let u = eig.U();
        let raw: Vec<f64> = (0..n).map(|k| s[k]).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| raw[i].total_cmp(&raw[j]));
        let mut eigenvalues = Vec::with_capacity(n);
        let mut phi = DMatrix::zeros(n, n);
        for (k, &src) in order.iter().enumerate() {
            let lam = raw[src];
            if lam < -1e-8 {
                return Err(Error::SingularSystem(format!(
                    "negative eigenvalue {lam:.3e} in a non-negative operator"
                )));
            }
            eigenvalues.push(lam.max(0.0));
            for x in 0..n {
                phi[(x, k)] = u[(x, src)] / sqrt_m[x];
            }
        }
        // the kernel of L is exactly the constants on a connected graph;
        // replacing the numerical ground state makes conservation exact
        eigenvalues[0] = 0.0;
        let c0 = 1.0 / graph.total_measure().sqrt();
        for x in 0..n {
            phi[(x, 0)] = c0;
        }
        Ok(Spectrum {
            graph_fp: graph.fingerprint(),
            eigenvalues,
            phi,
            measure: graph.measures().to_vec(),
        })
    }

    pub fn check_domain(&self, graph: &WeightedGraph) -> Result<()> {
        if self.graph_fp != graph.fingerprint() {
            return Err(Error::DomainMismatch);
        }
        Ok(())
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenfunction(&self, k: usize, x: usize) -> f64 {
        self.phi[(x, k)]
    }

    pub fn heat_kernel(&self, t: f64, x: usize, y: usize) -> f64 {
        let n = self.eigenvalues.len();
        let mut acc = 0.0;
        for k in 0..n {
            acc += (-self.eigenvalues[k] * t).exp() * self.phi[(x, k)] * self.phi[(y, k)];
        }
        acc
    }

    /// Time derivative of the heat kernel.
    pub fn dt_heat_kernel(&self, t: f64, x: usize, y: usize) -> f64 {
        let n = self.eigenvalues.len();
        let mut acc = 0.0;
        for k in 0..n {
            acc -= self.eigenvalues[k]
                * (-self.eigenvalues[k] * t).exp()
                * self.phi[(x, k)]
                * self.phi[(y, k)];
        }
        acc
    }

    /// Full kernel row p_t(x, .).
    pub fn heat_row(&self, t: f64, x: usize) -> Vec<f64> {
        let n = self.eigenvalues.len();
        let weights: Vec<f64> = (0..n)
            .map(|k| (-self.eigenvalues[k] * t).exp() * self.phi[(x, k)])
            .collect();
        (0..n)
            .map(|y| (0..n).map(|k| weights[k] * self.phi[(y, k)]).sum())
            .collect()
    }

    /// Spectral semigroup action (P_t f)(x).
    pub fn apply(&self, t: f64, f: &[f64]) -> Result<Vec<f64>> {
        let n = self.eigenvalues.len();
        if f.len() != n {
            return Err(Error::InvalidArgument(format!(
                "function has {} values, spectrum has {n}",
                f.len()
            )));
        }
        let fv = DVector::from_column_slice(f);
        // coefficients <phi_k, f>_m
        let mut coeffs = vec![0.0; n];
        for k in 0..n {
            coeffs[k] = (0..n)
                .map(|x| self.phi[(x, k)] * fv[x] * self.measure[x])
                .sum();
        }
        Ok((0..n)
            .map(|x| {
                (0..n)
                    .map(|k| (-self.eigenvalues[k] * t).exp() * coeffs[k] * self.phi[(x, k)])
                    .sum()
            })
            .collect())
    }
}

/// Crank-Nicolson time stepping for P_t f: repeatedly solves
/// (M + dt/2 C) u' = (M - dt/2 C) u. The step count doubles until two
/// consecutive refinements agree to `tol` in the sup norm.
pub fn crank_nicolson(
    graph: &WeightedGraph,
    f: &[f64],
    t: f64,
    tol: f64,
) -> Result<Vec<f64>> {
    let n = graph.vertex_count();
    if f.len() != n {
        return Err(Error::InvalidArgument(format!(
            "function has {} values for a graph with {n} vertices",
            f.len()
        )));
    }
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("time must be >= 0, got {t}")));
    }
    if t == 0.0 {
        return Ok(f.to_vec());
    }
    // resolve the fastest mode a few times per step to start in the
    // asymptotic second-order regime
    let lam_max_est = (0..n)
        .map(|x| {
            2.0 * graph
                .neighbors(x)
                .iter()
                .map(|&(_, ei)| graph.edges()[ei].c)
                .sum::<f64>()
                / graph.measure(x)
        })
        .fold(0.0, f64::max);
    let mut steps = ((t * lam_max_est / 4.0).ceil() as usize).clamp(8, 1 << 20);
    let mut prev = cn_fixed_steps(graph, f, t, steps)?;
    for _ in 0..16 {
        steps *= 2;
        let cur = cn_fixed_steps(graph, f, t, steps)?;
        let diff = prev
            .iter()
            .zip(&cur)
            .map(|(&a, &b)| (a - b).abs())
            .fold(0.0, f64::max);
        if diff <= tol {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(Error::NoConvergence {
        residual: f64::NAN,
        iterations: steps,
    })
}

fn cn_fixed_steps(graph: &WeightedGraph, f: &[f64], t: f64, steps: usize) -> Result<Vec<f64>> {
    let n = graph.vertex_count();
    let dt = t / steps as f64;
    let half = dt / 2.0;
    let mut lhs = SparseSym::new(n);
    for v in 0..n {
        lhs.add_diag(v, graph.measure(v));
    }
    for e in graph.edges() {
        lhs.add_diag(e.u, half * e.c);
        lhs.add_diag(e.v, half * e.c);
        lhs.add_sym(e.u, e.v, -half * e.c);
    }
    let mut u = f.to_vec();
    let mut rhs = vec![0.0; n];
    for _ in 0..steps {
        for v in 0..n {
            rhs[v] = graph.measure(v) * u[v];
        }
        for e in graph.edges() {
            let d = half * e.c * (u[e.u] - u[e.v]);
            rhs[e.u] -= d;
            rhs[e.v] += d;
        }
        let (next, _) = lhs.solve(&rhs)?;
        u = next;
    }
    Ok(u)
}

/// Sampled heat kernel values over a grid of times and vertex pairs, with a
/// CSV view and a compact binary cache format.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatKernelTable {
    pub graph_fp: u64,
    pub times: Vec<f64>,
    pub pairs: Vec<(usize, usize)>,
    /// row-major: values[ti * pairs.len() + pi]
    pub values: Vec<f64>,
}

impl HeatKernelTable {
    pub fn compute(spectrum: &Spectrum, times: &[f64], pairs: &[(usize, usize)]) -> Self {
        let values = times
            .iter()
            .flat_map(|&t| {
                pairs
                    .iter()
                    .map(move |&(x, y)| spectrum.heat_kernel(t, x, y))
            })
            .collect();
        HeatKernelTable {
            graph_fp: spectrum.graph_fp,
            times: times.to_vec(),
            pairs: pairs.to_vec(),
            values,
        }
    }

    pub fn value(&self, ti: usize, pi: usize) -> f64 {
        self.values[ti * self.pairs.len() + pi]
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["t", "x", "y", "p"])
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        for (ti, &t) in self.times.iter().enumerate() {
            for (pi, &(x, y)) in self.pairs.iter().enumerate() {
                wtr.write_record(&[
                    format!("{t:.17e}"),
                    x.to_string(),
                    y.to_string(),
                    format!("{:.17e}", self.value(ti, pi)),
                ])
                .map_err(|e| Error::Io(std::io::Error::other(e)))?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    const MAGIC: u32 = 0x484b_5431; // "HKT1"

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_u32::<LittleEndian>(Self::MAGIC)?;
        w.write_u64::<LittleEndian>(self.graph_fp)?;
        w.write_u64::<LittleEndian>(self.times.len() as u64)?;
        w.write_u64::<LittleEndian>(self.pairs.len() as u64)?;
        for &t in &self.times {
            w.write_f64::<LittleEndian>(t)?;
        }
        for &(x, y) in &self.pairs {
            w.write_u64::<LittleEndian>(x as u64)?;
            w.write_u64::<LittleEndian>(y as u64)?;
        }
        for &v in &self.values {
            w.write_f64::<LittleEndian>(v)?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        if r.read_u32::<LittleEndian>()? != Self::MAGIC {
            return Err(Error::Config("not a heat kernel table".into()));
        }
        let graph_fp = r.read_u64::<LittleEndian>()?;
        let nt = r.read_u64::<LittleEndian>()? as usize;
        let np = r.read_u64::<LittleEndian>()? as usize;
        let mut times = Vec::with_capacity(nt);
        for _ in 0..nt {
            times.push(r.read_f64::<LittleEndian>()?);
        }
        let mut pairs = Vec::with_capacity(np);
        for _ in 0..np {
            let x = r.read_u64::<LittleEndian>()? as usize;
            let y = r.read_u64::<LittleEndian>()? as usize;
            pairs.push((x, y));
        }
        let mut values = Vec::with_capacity(nt * np);
        for _ in 0..nt * np {
            values.push(r.read_f64::<LittleEndian>()?);
        }
        Ok(HeatKernelTable {
            graph_fp,
            times,
            pairs,
            values,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_compact, BuildOptions, Edge, FractalFamily, GraphMeta};
    use approx::assert_relative_eq;

    fn two_vertex() -> WeightedGraph {
        WeightedGraph::assemble(
            2,
            vec![(0, 0), (2, 0)],
            vec![1.0, 1.0],
            vec![Edge { u: 0, v: 1, c: 1.0, len: 1.0 }],
            GraphMeta {
                family: "interval".into(),
                level: 0,
                scale: 1.0,
                kind: "test".into(),
            },
        )
        .unwrap()
    }

    #[test]
    fn two_vertex_kernel_closed_form() {
        // eigenvalues 0 and 2; p_t(x,x) = (1 + e^{-2t})/2
        let g = two_vertex();
        let s = Spectrum::compute(&g).unwrap();
        assert_relative_eq!(s.eigenvalues()[1], 2.0, max_relative = 1e-12);
        for t in [0.01f64, 0.3, 1.0, 5.0] {
            let on = 0.5 * (1.0 + (-2.0 * t).exp());
            let off = 0.5 * (1.0 - (-2.0 * t).exp());
            assert_relative_eq!(s.heat_kernel(t, 0, 0), on, epsilon = 1e-12);
            assert_relative_eq!(s.heat_kernel(t, 0, 1), off, epsilon = 1e-12);
        }
    }

    #[test]
    fn conservation_symmetry_chapman_kolmogorov() {
        let g = build_compact(FractalFamily::Gasket, 3, &BuildOptions::default()).unwrap();
        let s = Spectrum::compute(&g).unwrap();
        let n = g.vertex_count();
        for &t in &[0.001, 0.1, 2.0] {
            for &x in &[0usize, n / 2, n - 1] {
                let row = s.heat_row(t, x);
                let mass: f64 = (0..n).map(|y| row[y] * g.measure(y)).sum();
                assert_relative_eq!(mass, 1.0, epsilon = 1e-10);
                for &y in &[1usize, n / 3] {
                    assert_relative_eq!(
                        s.heat_kernel(t, x, y),
                        s.heat_kernel(t, y, x),
                        epsilon = 1e-12
                    );
                }
            }
        }
        // p_{t+s} = integral p_t p_s dm
        let (t, u) = (0.05, 0.13);
        let x = 2;
        let y = n - 3;
        let row_t = s.heat_row(t, x);
        let row_u = s.heat_row(u, y);
        let composed: f64 = (0..n).map(|z| row_t[z] * row_u[z] * g.measure(z)).sum();
        assert_relative_eq!(s.heat_kernel(t + u, x, y), composed, epsilon = 1e-10);
    }

    #[test]
    fn crank_nicolson_matches_spectral() {
        let g = build_compact(FractalFamily::Gasket, 2, &BuildOptions::default()).unwrap();
        let s = Spectrum::compute(&g).unwrap();
        let n = g.vertex_count();
        let f: Vec<f64> = (0..n).map(|v| if v == 0 { 1.0 / g.measure(0) } else { 0.0 }).collect();
        for &t in &[0.01, 0.2, 1.0] {
            let spectral = s.apply(t, &f).unwrap();
            let stepped = crank_nicolson(&g, &f, t, 1e-8).unwrap();
            for v in 0..n {
                assert_relative_eq!(spectral[v], stepped[v], epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn time_derivative_matches_finite_difference() {
        let g = build_compact(FractalFamily::Vicsek, 1, &BuildOptions::default()).unwrap();
        let s = Spectrum::compute(&g).unwrap();
        let (x, y) = (0, 3);
        for &t in &[0.05, 0.5, 2.0] {
            let h = 1e-5 * t;
            let fd = (s.heat_kernel(t + h, x, y) - s.heat_kernel(t - h, x, y)) / (2.0 * h);
            assert_relative_eq!(s.dt_heat_kernel(t, x, y), fd, max_relative = 1e-6, epsilon = 1e-9);
        }
    }

    #[test]
    fn table_binary_round_trip() {
        let g = two_vertex();
        let s = Spectrum::compute(&g).unwrap();
        let table = HeatKernelTable::compute(&s, &[0.1, 1.0], &[(0, 0), (0, 1)]);
        let mut buf = Vec::new();
        table.write_binary(&mut buf).unwrap();
        let back = HeatKernelTable::read_binary(buf.as_slice()).unwrap();
        assert_eq!(table, back);
        let mut csv_out = Vec::new();
        table.write_csv(&mut csv_out).unwrap();
        assert!(String::from_utf8(csv_out).unwrap().starts_with("t,x,y,p\n"));
    }
}
