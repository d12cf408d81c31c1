//! Graph serialization. The JSON layout is stable so cached artifacts stay
//! valid across runs; vertex order in the file is the vertex id order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Edge, GraphMeta, WeightedGraph};

#[derive(Serialize, Deserialize)]
struct VertexRecord {
    id: usize,
    x: i64,
    y: i64,
    m: f64,
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    den: i64,
    meta: GraphMeta,
    vertices: Vec<VertexRecord>,
    edges: Vec<Edge>,
}

pub fn graph_to_json(g: &WeightedGraph) -> String {
    let file = GraphFile {
        den: g.den,
        meta: g.meta.clone(),
        vertices: (0..g.vertex_count())
            .map(|v| {
                let (x, y) = g.coord_int(v);
                VertexRecord {
                    id: v,
                    x,
                    y,
                    m: g.measure(v),
                }
            })
            .collect(),
        edges: g.edges().to_vec(),
    };
    serde_json::to_string_pretty(&file).expect("graph serialization cannot fail")
}

pub fn graph_from_json(text: &str) -> Result<WeightedGraph> {
    let file: GraphFile = serde_json::from_str(text)?;
    let n = file.vertices.len();
    let mut coords = vec![(0i64, 0i64); n];
    let mut measure = vec![0.0; n];
    let mut seen = vec![false; n];
    for rec in &file.vertices {
        if rec.id >= n || seen[rec.id] {
            return Err(Error::Config(format!("bad vertex id {}", rec.id)));
        }
        seen[rec.id] = true;
        coords[rec.id] = (rec.x, rec.y);
        measure[rec.id] = rec.m;
    }
    WeightedGraph::assemble(file.den, coords, measure, file.edges, file.meta)
}
