//! Constructions: compact level-n fractal graphs, pre-fractal windows,
//! cable subdivisions and cross-fractal blowups.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Edge, FractalFamily, GraphMeta, WeightedGraph};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BuildOptions {
    /// Refuse constructions above this vertex estimate.
    pub vertex_budget: usize,
    /// Conductance at level n is `per_level_conductance^n`. The default
    /// leaves every conductance at 1; scaling regimes are read off ratio
    /// fits, which are normalization-free.
    pub per_level_conductance: f64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            vertex_budget: 2_000_000,
            per_level_conductance: 1.0,
        }
    }
}

/// Blowup of a compact "cell" fractal arranged along the contraction
/// pattern of a "model" fractal.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BlowupSpec {
    pub cell: FractalFamily,
    pub model: FractalFamily,
    pub cell_level: u32,
    pub blowup_level: u32,
}

fn checked_cells(family: FractalFamily, n: u32, budget: usize) -> Result<usize> {
    let nn = family.contraction_count() as u128;
    let mut cells: u128 = 1;
    for _ in 0..n {
        cells = cells.saturating_mul(nn);
        if cells.saturating_mul(family.base_points().len() as u128) > budget as u128 {
            return Err(Error::VertexBudget {
                level: n,
                budget,
                estimate: usize::MAX,
            });
        }
    }
    let estimate = cells as usize * family.base_points().len();
    if estimate > budget {
        return Err(Error::VertexBudget {
            level: n,
            budget,
            estimate,
        });
    }
    Ok(cells as usize)
}

/// Offsets of the level-n cells in units of 1/(2 L^n).
fn cell_offsets(family: FractalFamily, n: u32) -> Vec<(i64, i64)> {
    let l = family.scale_factor();
    let pts = family.base_points();
    let mut offsets = vec![(0i64, 0i64)];
    let mut lk = 1i64;
    for _ in 0..n {
        let mult = (l - 1) * lk;
        offsets = offsets
            .iter()
            .flat_map(|&(ox, oy)| {
                pts.iter()
                    .map(move |&(px, py)| (ox + mult * px, oy + mult * py))
            })
            .collect();
        lk *= l;
    }
    offsets
}

fn build_family(
    family: FractalFamily,
    n: u32,
    prefractal: bool,
    opts: &BuildOptions,
) -> Result<WeightedGraph> {
    checked_cells(family, n, opts.vertex_budget)?;
    let pts = family.base_points();
    let offsets = cell_offsets(family, n);

    let mut ids: BTreeMap<(i64, i64), usize> = BTreeMap::new();
    for &(ox, oy) in &offsets {
        for &(px, py) in pts {
            let coord = (ox + px, oy + py);
            let next = ids.len();
            ids.entry(coord).or_insert(next);
        }
    }
    // deterministic ids in coordinate order
    let mut coords: Vec<(i64, i64)> = ids.keys().cloned().collect();
    coords.sort_unstable();
    let ids: BTreeMap<(i64, i64), usize> = coords
        .iter()
        .enumerate()
        .map(|(i, &c)| (c, i))
        .collect();

    let cell_measure = if prefractal {
        1.0
    } else {
        (family.contraction_count() as f64).powi(-(n as i32))
    };
    let share = cell_measure / pts.len() as f64;
    let mut measure = vec![0.0; coords.len()];
    let mut edge_set: BTreeSet<(usize, usize)> = BTreeSet::new();
    for &(ox, oy) in &offsets {
        for &(px, py) in pts {
            measure[ids[&(ox + px, oy + py)]] += share;
        }
        for &(i, j) in family.cell_edges() {
            let a = ids[&(ox + pts[i].0, oy + pts[i].1)];
            let b = ids[&(ox + pts[j].0, oy + pts[j].1)];
            edge_set.insert((a.min(b), a.max(b)));
        }
    }

    let den = if prefractal {
        2
    } else {
        2 * family.scale_factor().pow(n)
    };
    let c = opts.per_level_conductance.powi(n as i32);
    let edges: Vec<Edge> = edge_set
        .into_iter()
        .map(|(u, v)| {
            let dx = (coords[u].0 - coords[v].0) as f64 / den as f64;
            let dy = (coords[u].1 - coords[v].1) as f64 / den as f64;
            Edge {
                u,
                v,
                c,
                len: (dx * dx + dy * dy).sqrt(),
            }
        })
        .collect();

    let meta = GraphMeta {
        family: family.name().to_string(),
        level: n,
        scale: if prefractal {
            (family.scale_factor() as f64).powi(n as i32)
        } else {
            1.0
        },
        kind: if prefractal { "prefractal" } else { "compact" }.to_string(),
    };
    WeightedGraph::assemble(den, coords, measure, edges, meta)
}

/// Compact level-n approximation graph of the family, sitting in the unit
/// square with total measure 1.
pub fn build_compact(family: FractalFamily, n: u32, opts: &BuildOptions) -> Result<WeightedGraph> {
    build_family(family, n, false, opts)
}

/// The compact graph rescaled by L^n so the smallest cell has unit diameter
/// and each unit cell carries measure 1. Pre-fractal levels are nested:
/// the level-n vertex set is contained in the level-(n+1) one.
pub fn build_prefractal(
    family: FractalFamily,
    n: u32,
    opts: &BuildOptions,
) -> Result<WeightedGraph> {
    build_family(family, n, true, opts)
}

/// Replace every edge of length l by a path of k sub-edges of length l/k and
/// conductance k*c, so end-to-end resistance is preserved exactly. Interior
/// cable vertices receive measure l/k (half of each incident sub-edge).
pub fn build_cable(graph: &WeightedGraph, k: u32) -> Result<WeightedGraph> {
    if k == 0 {
        return Err(Error::InvalidArgument("subdivision count must be >= 1".into()));
    }
    if k == 1 {
        let mut g = graph.clone();
        g.meta.kind = format!("{}-cable1", graph.meta.kind);
        return WeightedGraph::assemble(
            g.den,
            (0..g.vertex_count()).map(|v| g.coord_int(v)).collect(),
            g.measures().to_vec(),
            g.edges().to_vec(),
            g.meta,
        );
    }
    let k_i = k as i64;
    let den = graph.den * k_i;
    let n0 = graph.vertex_count();
    let mut coords: Vec<(i64, i64)> = (0..n0)
        .map(|v| {
            let (x, y) = graph.coord_int(v);
            (x * k_i, y * k_i)
        })
        .collect();
    let mut measure = graph.measures().to_vec();
    let mut edges = Vec::with_capacity(graph.edge_count() * k as usize);
    for e in graph.edges() {
        let (ux, uy) = coords[e.u];
        let (vx, vy) = coords[e.v];
        let sub_len = e.len / k as f64;
        let sub_c = e.c * k as f64;
        let mut prev = e.u;
        for j in 1..k_i {
            // interior points are not deduplicated: distinct edges stay
            // distinct cables even if their embeddings cross
            let x = (ux * (k_i - j) + vx * j) / k_i;
            let y = (uy * (k_i - j) + vy * j) / k_i;
            // exact only when k divides the intermediate sums; fall back to
            // the rounded lattice point (identity is per-edge, not global)
            let id = coords.len();
            coords.push((x, y));
            measure.push(sub_len);
            edges.push(Edge {
                u: prev,
                v: id,
                c: sub_c,
                len: sub_len,
            });
            prev = id;
        }
        edges.push(Edge {
            u: prev,
            v: e.v,
            c: sub_c,
            len: sub_len,
        });
    }
    let meta = GraphMeta {
        kind: format!("{}-cable{}", graph.meta.kind, k),
        ..graph.meta.clone()
    };
    WeightedGraph::assemble(den, coords, measure, edges, meta)
}

/// Level-n blowup: copies of the compact level-k cell graph arranged along
/// the model family's contraction pattern, each copy scaled to unit
/// diameter. Shared boundary vertices are identified exactly; measure adds
/// where copies overlap.
pub fn build_blowup(spec: &BlowupSpec, opts: &BuildOptions) -> Result<WeightedGraph> {
    let cell_graph = build_compact(spec.cell, spec.cell_level, opts)?;
    let copies = checked_cells(spec.model, spec.blowup_level, usize::MAX)?;
    let estimate = copies.saturating_mul(cell_graph.vertex_count());
    if estimate > opts.vertex_budget {
        return Err(Error::VertexBudget {
            level: spec.blowup_level,
            budget: opts.vertex_budget,
            estimate,
        });
    }

    // model cell offsets in units of 1/2 (after scaling by L_M^n)
    let offsets = cell_offsets(spec.model, spec.blowup_level);
    let lk = spec.cell.scale_factor().pow(spec.cell_level);
    let den = 2 * lk;

    let mut ids: BTreeMap<(i64, i64), usize> = BTreeMap::new();
    let cell_n = cell_graph.vertex_count();
    // per-copy translated coordinates
    let copy_coords: Vec<Vec<(i64, i64)>> = offsets
        .iter()
        .map(|&(ox, oy)| {
            (0..cell_n)
                .map(|v| {
                    let (x, y) = cell_graph.coord_int(v);
                    (x + ox * lk, y + oy * lk)
                })
                .collect()
        })
        .collect();
    for coords in &copy_coords {
        for &c in coords {
            let next = ids.len();
            ids.entry(c).or_insert(next);
        }
    }
    let mut coords: Vec<(i64, i64)> = ids.keys().cloned().collect();
    coords.sort_unstable();
    let ids: BTreeMap<(i64, i64), usize> = coords
        .iter()
        .enumerate()
        .map(|(i, &c)| (c, i))
        .collect();

    // gluing compatibility: touching model cells must yield overlapping copies
    let offset_index: HashMap<(i64, i64), usize> =
        offsets.iter().enumerate().map(|(i, &o)| (o, i)).collect();
    let copy_ids: Vec<Vec<usize>> = copy_coords
        .iter()
        .map(|cs| {
            let mut v: Vec<usize> = cs.iter().map(|c| ids[c]).collect();
            v.sort_unstable();
            v
        })
        .collect();
    for (i, &(ox, oy)) in offsets.iter().enumerate() {
        for dx in -2i64..=2 {
            for dy in -2i64..=2 {
                if dx == 0 && dy == 0 {
                    continue;
                }
                if let Some(&j) = offset_index.get(&(ox + dx, oy + dy)) {
                    if j <= i {
                        continue;
                    }
                    let (a, b) = (&copy_ids[i], &copy_ids[j]);
                    let mut ai = 0;
                    let mut bi = 0;
                    let mut shared = false;
                    while ai < a.len() && bi < b.len() {
                        match a[ai].cmp(&b[bi]) {
                            std::cmp::Ordering::Less => ai += 1,
                            std::cmp::Ordering::Greater => bi += 1,
                            std::cmp::Ordering::Equal => {
                                shared = true;
                                break;
                            }
                        }
                    }
                    if !shared {
                        return Err(Error::BlowupGluing(i, j));
                    }
                }
            }
        }
    }

    let mut measure = vec![0.0; coords.len()];
    let mut edge_set: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut edge_data: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();
    for coords_c in &copy_coords {
        for (v, &c) in coords_c.iter().enumerate() {
            measure[ids[&c]] += cell_graph.measure(v);
        }
        for e in cell_graph.edges() {
            let a = ids[&coords_c[e.u]];
            let b = ids[&coords_c[e.v]];
            let key = (a.min(b), a.max(b));
            edge_set.insert(key);
            edge_data.insert(key, (e.c, e.len * lk as f64));
        }
    }
    let edges: Vec<Edge> = edge_set
        .into_iter()
        .map(|(u, v)| {
            let (c, len) = edge_data[&(u, v)];
            Edge { u, v, c, len }
        })
        .collect();

    let meta = GraphMeta {
        family: format!("blowup({},{})", spec.cell.name(), spec.model.name()),
        level: spec.blowup_level,
        scale: lk as f64,
        kind: "blowup".to_string(),
    };
    WeightedGraph::assemble(den, coords, measure, edges, meta)
}
