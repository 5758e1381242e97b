//! Weighted directed graphs carrying mass from sources to sinks.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

fn same_point(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12)
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub location: Vec<f64>,
    pub mass: f64,
}

/// Finite sum of point masses.
///
/// Atoms with zero mass are kept so that atom indices stay aligned with goods
/// and consumers; a good nobody buys yields a zero-mass source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicMeasure {
    atoms: Vec<Atom>,
}

impl AtomicMeasure {
    pub fn new(atoms: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidGraph("measure has no atoms".into()));
        }
        for (idx, (loc, m)) in atoms.iter().enumerate() {
            if !(m.is_finite() && *m >= 0.0) {
                return Err(Error::InvalidGraph(format!("atom {idx} has invalid mass {m}")));
            }
            if atoms[idx + 1..].iter().any(|(other, _)| same_point(loc, other)) {
                return Err(Error::InvalidGraph(format!("atom {idx} shares its location")));
            }
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if !(total > 0.0) {
            return Err(Error::InvalidGraph("measure has zero total mass".into()));
        }
        Ok(AtomicMeasure {
            atoms: atoms
                .into_iter()
                .map(|(location, mass)| Atom { location, mass })
                .collect(),
        })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn masses(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.mass).collect()
    }

    pub fn total(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    pub id: String,
    pub location: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub tail: usize,
    pub head: usize,
    pub weight: f64,
}

/// A source or sink designation: vertex index plus the mass it emits or absorbs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Terminal {
    pub vertex: usize,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BalanceReport {
    /// `outflow - inflow - supply` per vertex (supply is `-n_j` at sinks).
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    pub valid: bool,
}

/// Unique directed path from one source to one sink.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Route {
    pub vertices: Vec<usize>,
    pub edges: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RouteMatrix {
    k: usize,
    l: usize,
    routes: Vec<Option<Route>>,
}

impl RouteMatrix {
    pub fn shape(&self) -> (usize, usize) {
        (self.k, self.l)
    }

    pub fn get(&self, i: usize, j: usize) -> Option<&Route> {
        self.routes[i * self.l + j].as_ref()
    }

    pub fn is_present(&self, i: usize, j: usize) -> bool {
        self.get(i, j).is_some()
    }

    /// `N(G)`, the number of source/sink pairs joined by a route.
    pub fn present_count(&self) -> usize {
        self.routes.iter().filter(|r| r.is_some()).count()
    }

    /// Pairs `(i, j)` whose route uses edge `e`, in row-major order.
    pub fn pairs_through_edge(&self, e: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.k {
            for j in 0..self.l {
                if let Some(r) = self.get(i, j) {
                    if r.edges.contains(&e) {
                        out.push((i, j));
                    }
                }
            }
        }
        out
    }

    /// First vertex shared by the routes `(i1, j1)` and `(i2, j2)`, if any.
    pub fn shared_vertex(&self, a: (usize, usize), b: (usize, usize)) -> Option<usize> {
        let ra = self.get(a.0, a.1)?;
        let rb = self.get(b.0, b.1)?;
        ra.vertices.iter().copied().find(|v| rb.vertices.contains(v))
    }
}

/// Transport path: a weighted digraph with designated sources and sinks.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPath {
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    sources: Vec<Terminal>,
    sinks: Vec<Terminal>,
}

impl TransportPath {
    /// Builds a path after checking its structural invariants. Mass balance
    /// is checked separately by [`TransportPath::balance_report`].
    pub fn new(
        vertices: Vec<Vertex>,
        edges: Vec<Edge>,
        sources: Vec<Terminal>,
        sinks: Vec<Terminal>,
    ) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidGraph(msg));
        let n = vertices.len();
        if n == 0 {
            return bad("graph has no vertices".into());
        }
        let dim = vertices[0].location.len();
        for (idx, v) in vertices.iter().enumerate() {
            if v.location.len() != dim || v.location.iter().any(|x| !x.is_finite()) {
                return bad(format!("vertex `{}` has malformed coordinates", v.id));
            }
            if vertices[idx + 1..].iter().any(|w| w.id == v.id) {
                return bad(format!("duplicate vertex id `{}`", v.id));
            }
        }
        for (idx, e) in edges.iter().enumerate() {
            if e.tail >= n || e.head >= n {
                return bad(format!("edge {idx} references a missing vertex"));
            }
            if e.tail == e.head {
                return bad(format!("edge {idx} is a self-loop"));
            }
            if !(e.weight.is_finite() && e.weight > 0.0) {
                return bad(format!("edge {idx} must have positive weight"));
            }
            if same_point(&vertices[e.tail].location, &vertices[e.head].location) {
                return bad(format!("edge {idx} has zero length"));
            }
            if edges[idx + 1..]
                .iter()
                .any(|f| f.tail == e.tail && f.head == e.head)
            {
                return bad(format!("edge {idx} duplicates an ordered vertex pair"));
            }
        }
        if sources.is_empty() || sinks.is_empty() {
            return bad("at least one source and one sink are required".into());
        }
        let mut seen = vec![false; n];
        for t in sources.iter().chain(&sinks) {
            if t.vertex >= n {
                return bad("terminal references a missing vertex".into());
            }
            if seen[t.vertex] {
                return bad(format!("vertex `{}` is designated twice", vertices[t.vertex].id));
            }
            seen[t.vertex] = true;
            if !(t.mass.is_finite() && t.mass >= 0.0) {
                return bad(format!("terminal `{}` has invalid mass", vertices[t.vertex].id));
            }
        }
        Ok(TransportPath {
            vertices,
            edges,
            sources,
            sinks,
        })
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn sources(&self) -> &[Terminal] {
        &self.sources
    }

    pub fn sinks(&self) -> &[Terminal] {
        &self.sinks
    }

    pub fn num_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn num_sinks(&self) -> usize {
        self.sinks.len()
    }

    pub fn dimension(&self) -> usize {
        self.vertices[0].location.len()
    }

    pub fn vertex_index(&self, id: &str) -> Option<usize> {
        self.vertices.iter().position(|v| v.id == id)
    }

    /// Vertices that are neither sources nor sinks.
    pub fn interior_vertices(&self) -> Vec<usize> {
        let mut terminal = vec![false; self.vertices.len()];
        for t in self.sources.iter().chain(&self.sinks) {
            terminal[t.vertex] = true;
        }
        (0..self.vertices.len()).filter(|&v| !terminal[v]).collect()
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let edge = &self.edges[e];
        distance(
            &self.vertices[edge.tail].location,
            &self.vertices[edge.head].location,
        )
    }

    /// Replaces vertex coordinates, keeping the combinatorics.
    pub fn with_locations(&self, locations: Vec<Vec<f64>>) -> Result<Self> {
        if locations.len() != self.vertices.len() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} locations", self.vertices.len()),
                found: format!("{}", locations.len()),
            });
        }
        let vertices = self
            .vertices
            .iter()
            .zip(locations)
            .map(|(v, location)| Vertex {
                id: v.id.clone(),
                location,
            })
            .collect();
        TransportPath::new(vertices, self.edges.clone(), self.sources.clone(), self.sinks.clone())
    }

    fn residuals(&self, supply: &[f64]) -> BalanceReport {
        let mut residuals: Vec<f64> = supply.iter().map(|s| -s).collect();
        for e in &self.edges {
            residuals[e.tail] += e.weight;
            residuals[e.head] -= e.weight;
        }
        let max_residual = residuals.iter().fold(0.0_f64, |m, r| m.max(r.abs()));
        BalanceReport {
            residuals,
            max_residual,
            valid: false,
        }
    }

    /// Balance residuals using the masses stored on the terminals.
    pub fn balance_report(&self, tol: f64) -> BalanceReport {
        let mut supply = vec![0.0; self.vertices.len()];
        for t in &self.sources {
            supply[t.vertex] += t.mass;
        }
        for t in &self.sinks {
            supply[t.vertex] -= t.mass;
        }
        let mut report = self.residuals(&supply);
        report.valid = report.max_residual <= tol;
        report
    }

    /// Balance residuals against measures `a` (sources) and `b` (sinks), whose
    /// atoms are matched to graph vertices by location.
    pub fn validate_balance(
        &self,
        a: &AtomicMeasure,
        b: &AtomicMeasure,
        tol: f64,
    ) -> Result<BalanceReport> {
        let locate = |atom: &Atom| {
            self.vertices
                .iter()
                .position(|v| same_point(&v.location, &atom.location))
                .ok_or_else(|| Error::UnknownVertex {
                    location: atom.location.clone(),
                })
        };
        let mut supply = vec![0.0; self.vertices.len()];
        for atom in a.atoms() {
            supply[locate(atom)?] += atom.mass;
        }
        for atom in b.atoms() {
            supply[locate(atom)?] -= atom.mass;
        }
        let mut report = self.residuals(&supply);
        report.valid = report.max_residual <= tol;
        Ok(report)
    }

    /// Finds the directed path from every source to every sink by depth-first
    /// search, continuing after the first hit so a second path is detected.
    pub fn route_matrix(&self) -> Result<RouteMatrix> {
        let n = self.vertices.len();
        let mut out_edges: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (idx, e) in self.edges.iter().enumerate() {
            out_edges[e.tail].push(idx);
        }
        let mut sink_of = vec![None; n];
        for (j, t) in self.sinks.iter().enumerate() {
            sink_of[t.vertex] = Some(j);
        }
        let (k, l) = (self.sources.len(), self.sinks.len());
        let mut routes = vec![None; k * l];

        struct Walk<'a> {
            edges: &'a [Edge],
            out_edges: &'a [Vec<usize>],
            sink_of: &'a [Option<usize>],
            on_path: Vec<bool>,
            vertices: Vec<usize>,
            path_edges: Vec<usize>,
        }

        fn visit(
            w: &mut Walk<'_>,
            v: usize,
            found: &mut [Option<Route>],
        ) -> std::result::Result<(), usize> {
            if let Some(j) = w.sink_of[v] {
                if found[j].is_some() {
                    return Err(j);
                }
                found[j] = Some(Route {
                    vertices: w.vertices.clone(),
                    edges: w.path_edges.clone(),
                });
            }
            for &e in &w.out_edges[v] {
                let next = w.edges[e].head;
                if w.on_path[next] {
                    continue;
                }
                w.on_path[next] = true;
                w.vertices.push(next);
                w.path_edges.push(e);
                visit(w, next, found)?;
                w.vertices.pop();
                w.path_edges.pop();
                w.on_path[next] = false;
            }
            Ok(())
        }

        for (i, src) in self.sources.iter().enumerate() {
            let mut walk = Walk {
                edges: &self.edges,
                out_edges: &out_edges,
                sink_of: &sink_of,
                on_path: vec![false; n],
                vertices: vec![src.vertex],
                path_edges: Vec::new(),
            };
            walk.on_path[src.vertex] = true;
            let mut found = vec![None; l];
            visit(&mut walk, src.vertex, &mut found)
                .map_err(|j| Error::AmbiguousRoute { source_index: i, sink: j })?;
            for (j, r) in found.into_iter().enumerate() {
                routes[i * l + j] = r;
            }
        }
        Ok(RouteMatrix { k, l, routes })
    }

    /// `|V(G)| - |E(G)|`.
    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edges.len() as i64
    }

    /// `sum_e w(e)^alpha * length(e)`.
    pub fn m_alpha_cost(&self, alpha: f64) -> f64 {
        (0..self.edges.len())
            .map(|e| self.edges[e].weight.powf(alpha) * self.edge_length(e))
            .sum()
    }

    /// Location-free code of the weighted route structure.
    pub fn combinatorial_signature(&self) -> Result<Signature> {
        self.signature_impl(true)
    }

    /// Like [`combinatorial_signature`](Self::combinatorial_signature) but
    /// ignoring edge weights.
    pub fn structural_signature(&self) -> Result<Signature> {
        self.signature_impl(false)
    }

    fn signature_impl(&self, with_weights: bool) -> Result<Signature> {
        let routes = self.route_matrix()?;
        let (k, l) = routes.shape();
        let mut code = format!("k={k};l={l};routes=");
        for i in 0..k {
            for j in 0..l {
                if routes.is_present(i, j) {
                    let _ = write!(code, "{i}.{j},");
                }
            }
        }
        let mut edges: Vec<String> = (0..self.edges.len())
            .map(|e| {
                let pairs = routes.pairs_through_edge(e);
                let mut s = String::from("[");
                for (i, j) in pairs {
                    let _ = write!(s, "{i}.{j},");
                }
                if with_weights {
                    let _ = write!(s, "|{:.9}", self.edges[e].weight);
                }
                s.push(']');
                s
            })
            .collect();
        edges.sort();
        code.push_str(";edges=");
        code.push_str(&edges.join(""));
        Ok(Signature::from_code(code))
    }

    /// Graphviz digraph with `w=<weight>` edge labels.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph transport {\n");
        let mut terminal = BTreeMap::new();
        for t in &self.sources {
            terminal.insert(t.vertex, "source");
        }
        for t in &self.sinks {
            terminal.insert(t.vertex, "sink");
        }
        for (idx, v) in self.vertices.iter().enumerate() {
            let coords: Vec<String> = v.location.iter().map(|x| x.to_string()).collect();
            let shape = match terminal.get(&idx) {
                Some(&"source") => "box",
                Some(_) => "doublecircle",
                None => "point",
            };
            let _ = writeln!(
                out,
                "  \"{}\" [shape={shape}, pos=\"{}\"];",
                escape(&v.id),
                coords.join(",")
            );
        }
        for e in &self.edges {
            let _ = writeln!(
                out,
                "  \"{}\" -> \"{}\" [label=\"w={}\"];",
                escape(&self.vertices[e.tail].id),
                escape(&self.vertices[e.head].id),
                e.weight
            );
        }
        out.push_str("}\n");
        out
    }
}

fn escape(id: &str) -> String {
    id.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Canonical text code plus a short digest of it.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Signature {
    pub code: String,
    pub digest: String,
}

impl Signature {
    fn from_code(code: String) -> Self {
        let hash = Sha256::digest(code.as_bytes());
        let digest = hash[..8].iter().map(|b| format!("{b:02x}")).collect();
        Signature { code, digest }
    }
}

/// Star-shaped path through a single hub: `x_i -> hub` carries `m_i` and
/// `hub -> y_j` carries `n_j`. Zero-mass atoms stay as isolated terminals.
pub fn hub_path(a: &AtomicMeasure, b: &AtomicMeasure, hub: &[f64]) -> Result<TransportPath> {
    if (a.total() - b.total()).abs() > 1e-9 {
        return Err(Error::InvalidGraph(format!(
            "source mass {} differs from sink mass {}",
            a.total(),
            b.total()
        )));
    }
    let mut vertices = Vec::new();
    let mut sources = Vec::new();
    let mut sinks = Vec::new();
    for (i, atom) in a.atoms().iter().enumerate() {
        let id = format!("x{}", i + 1);
        if same_point(&atom.location, hub) {
            return Err(Error::HubCollision(id));
        }
        sources.push(Terminal { vertex: vertices.len(), mass: atom.mass });
        vertices.push(Vertex { id, location: atom.location.clone() });
    }
    for (j, atom) in b.atoms().iter().enumerate() {
        let id = format!("y{}", j + 1);
        if same_point(&atom.location, hub) {
            return Err(Error::HubCollision(id));
        }
        sinks.push(Terminal { vertex: vertices.len(), mass: atom.mass });
        vertices.push(Vertex { id, location: atom.location.clone() });
    }
    let center = vertices.len();
    vertices.push(Vertex {
        id: "hub".into(),
        location: hub.to_vec(),
    });
    let mut edges = Vec::new();
    for t in &sources {
        if t.mass > 0.0 {
            edges.push(Edge { tail: t.vertex, head: center, weight: t.mass });
        }
    }
    for t in &sinks {
        if t.mass > 0.0 {
            edges.push(Edge { tail: center, head: t.vertex, weight: t.mass });
        }
    }
    TransportPath::new(vertices, edges, sources, sinks)
}
