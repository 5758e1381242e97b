//! JSON documents for economies, transport paths and plans.
//!
//! Structural problems are reported as [`Error::Schema`] with a JSON pointer
//! to the offending value. Graph documents name vertices by id; indices never
//! appear on disk. Floats are written in shortest round-trip form.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize, Serializer};

use crate::economy::{Consumer, Economy, Good};
use crate::error::{Error, Result};
use crate::plan_polytope::TransportPlan;
use crate::tolerance::Tolerances;
use crate::transport_graph::{Edge, Terminal, TransportPath, Vertex};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EconomyFile {
    pub dimension: usize,
    pub goods: Vec<Good>,
    pub consumers: Vec<Consumer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeEntry {
    pub tail: String,
    pub head: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerminalEntry {
    pub vertex: String,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    pub vertices: Vec<Vertex>,
    pub edges: Vec<EdgeEntry>,
    pub sources: Vec<TerminalEntry>,
    pub sinks: Vec<TerminalEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanFile {
    pub q: Vec<Vec<f64>>,
}

fn schema(path: impl Into<String>, detail: impl Into<String>) -> Error {
    Error::Schema {
        path: path.into(),
        detail: detail.into(),
    }
}

/// Deserializes `bytes`, reporting failures at a JSON pointer.
fn decode<T: DeserializeOwned>(bytes: &[u8]) -> Result<T> {
    let mut de = serde_json::Deserializer::from_slice(bytes);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|err| {
        let mut pointer = String::new();
        for segment in err.path().iter() {
            use serde_path_to_error::Segment;
            match segment {
                Segment::Seq { index } => pointer.push_str(&format!("/{index}")),
                Segment::Map { key } => {
                    pointer.push('/');
                    pointer.push_str(&key.replace('~', "~0").replace('/', "~1"));
                }
                Segment::Enum { .. } | Segment::Unknown => {}
            }
        }
        schema(pointer, err.inner().to_string())
    })?;
    de.end().map_err(|e| schema("", e.to_string()))?;
    Ok(value)
}

fn encode<T: Serialize>(value: &T, pretty: bool) -> String {
    let out = if pretty {
        serde_json::to_string_pretty(value)
    } else {
        serde_json::to_string(value)
    };
    out.expect("documents contain only finite numbers and strings")
}

fn check_coordinates(path: String, location: &[f64], dimension: usize) -> Result<()> {
    if location.len() != dimension {
        return Err(schema(path, format!("expected {dimension} coordinates, found {}", location.len())));
    }
    if let Some(c) = location.iter().position(|x| !x.is_finite()) {
        return Err(schema(format!("{path}/{c}"), "coordinate must be finite"));
    }
    Ok(())
}

impl EconomyFile {
    /// Range checks with pointers, then the economy's own invariants.
    pub fn into_economy(self) -> Result<Economy> {
        let k = self.goods.len();
        if k == 0 {
            return Err(schema("/goods", "at least one good is required"));
        }
        if self.consumers.is_empty() {
            return Err(schema("/consumers", "at least one consumer is required"));
        }
        for (i, g) in self.goods.iter().enumerate() {
            check_coordinates(format!("/goods/{i}/location"), &g.location, self.dimension)?;
        }
        for (j, c) in self.consumers.iter().enumerate() {
            let at = |field: &str| format!("/consumers/{j}/{field}");
            check_coordinates(at("location"), &c.location, self.dimension)?;
            if !(c.wealth.is_finite() && c.wealth > 0.0) {
                return Err(schema(at("wealth"), format!("wealth must be positive, found {}", c.wealth)));
            }
            if c.prices.len() != k {
                return Err(schema(at("prices"), format!("expected {k} prices, found {}", c.prices.len())));
            }
            if let Some(i) = c.prices.iter().position(|p| !(p.is_finite() && *p > 0.0)) {
                return Err(schema(format!("{}/{i}", at("prices")), "price must be positive"));
            }
            c.utility.validate(k).map_err(|msg| schema(at("utility"), msg))?;
        }
        Economy::new(self.dimension, self.goods, self.consumers)
    }

    pub fn from_economy(economy: &Economy) -> Self {
        EconomyFile {
            dimension: economy.dimension(),
            goods: economy.goods().to_vec(),
            consumers: economy.consumers().to_vec(),
        }
    }
}

pub fn parse_economy(bytes: &[u8]) -> Result<Economy> {
    decode::<EconomyFile>(bytes)?.into_economy()
}

pub fn emit_economy(economy: &Economy, pretty: bool) -> String {
    encode(&EconomyFile::from_economy(economy), pretty)
}

impl GraphFile {
    /// Resolves ids and builds the path; balance is checked at `tol.balance`.
    pub fn into_path(self, tol: &Tolerances) -> Result<TransportPath> {
        let index = |id: &str, path: String| {
            self.vertices
                .iter()
                .position(|v| v.id == id)
                .ok_or_else(|| schema(path, format!("unknown vertex id `{id}`")))
        };
        let Some(first) = self.vertices.first() else {
            return Err(schema("/vertices", "at least one vertex is required"));
        };
        let dimension = first.location.len();
        for (v, vertex) in self.vertices.iter().enumerate() {
            check_coordinates(format!("/vertices/{v}/location"), &vertex.location, dimension)?;
        }
        let mut edges = Vec::with_capacity(self.edges.len());
        for (e, entry) in self.edges.iter().enumerate() {
            if !(entry.weight.is_finite() && entry.weight > 0.0) {
                return Err(schema(format!("/edges/{e}/weight"), "weight must be positive"));
            }
            edges.push(Edge {
                tail: index(&entry.tail, format!("/edges/{e}/tail"))?,
                head: index(&entry.head, format!("/edges/{e}/head"))?,
                weight: entry.weight,
            });
        }
        let terminals = |list: &[TerminalEntry], name: &str| -> Result<Vec<Terminal>> {
            list.iter()
                .enumerate()
                .map(|(t, entry)| {
                    if !(entry.mass.is_finite() && entry.mass >= 0.0) {
                        return Err(schema(format!("/{name}/{t}/mass"), "mass must be nonnegative"));
                    }
                    Ok(Terminal {
                        vertex: index(&entry.vertex, format!("/{name}/{t}/vertex"))?,
                        mass: entry.mass,
                    })
                })
                .collect()
        };
        let sources = terminals(&self.sources, "sources")?;
        let sinks = terminals(&self.sinks, "sinks")?;
        let path = TransportPath::new(self.vertices, edges, sources, sinks)?;
        let report = path.balance_report(tol.balance);
        if !report.valid {
            return Err(Error::InvalidGraph(format!(
                "mass balance violated by {:e} (tolerance {:e})",
                report.max_residual, tol.balance
            )));
        }
        Ok(path)
    }

    pub fn from_path(path: &TransportPath) -> Self {
        let id = |v: usize| path.vertices()[v].id.clone();
        let terminals = |list: &[Terminal]| {
            list.iter()
                .map(|t| TerminalEntry { vertex: id(t.vertex), mass: t.mass })
                .collect()
        };
        GraphFile {
            vertices: path.vertices().to_vec(),
            edges: path
                .edges()
                .iter()
                .map(|e| EdgeEntry { tail: id(e.tail), head: id(e.head), weight: e.weight })
                .collect(),
            sources: terminals(path.sources()),
            sinks: terminals(path.sinks()),
        }
    }
}

impl Serialize for TransportPath {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        GraphFile::from_path(self).serialize(serializer)
    }
}

pub fn parse_graph(bytes: &[u8], tol: &Tolerances) -> Result<TransportPath> {
    decode::<GraphFile>(bytes)?.into_path(tol)
}

pub fn emit_graph(path: &TransportPath, pretty: bool) -> String {
    encode(&GraphFile::from_path(path), pretty)
}

pub fn parse_plan(bytes: &[u8]) -> Result<TransportPlan> {
    let file: PlanFile = decode(bytes)?;
    if file.q.is_empty() || file.q[0].is_empty() {
        return Err(schema("/q", "plan must have at least one row and one column"));
    }
    let width = file.q[0].len();
    for (i, row) in file.q.iter().enumerate() {
        if row.len() != width {
            return Err(schema(format!("/q/{i}"), format!("expected {width} entries, found {}", row.len())));
        }
        if let Some(j) = row.iter().position(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(schema(format!("/q/{i}/{j}"), "entry must be finite and nonnegative"));
        }
    }
    TransportPlan::from_rows(file.q)
}

pub fn emit_plan(plan: &TransportPlan, pretty: bool) -> String {
    encode(&PlanFile { q: plan.to_rows() }, pretty)
}

/// Graphviz text for `path`.
pub fn export_dot(path: &TransportPath) -> String {
    path.to_dot()
}
