//! Topology search for `H = M_alpha - sigma * V`.
//!
//! Templates are directed forests over the active sources, the active sinks
//! and at most two branching vertices, plus every direct bipartite pairing.
//! Each template inherits its edge weights from the reference plan; only the
//! branching vertices move. Their positions minimize `M_alpha`, which is
//! convex in them, and the exchange value is evaluated once per resulting
//! structure because it does not depend on coordinates.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::economy::Economy;
use crate::error::{Error, Result};
use crate::exchange_value::exchange_value;
use crate::plan_polytope::TransportPlan;
use crate::tolerance::Tolerances;
use crate::transport_graph::{distance, AtomicMeasure, Edge, Signature, Terminal, TransportPath, Vertex};

/// Largest number of sources or sinks accepted by the enumeration.
pub const MAX_TERMINALS: usize = 3;
/// Largest number of branching vertices accepted by the enumeration.
pub const MAX_INTERIOR: usize = 2;

/// Combinatorial shape of a candidate, before weights and coordinates.
///
/// Vertices `0..sources` are sources, the next `sinks` are sinks and the last
/// `interior` are branching vertices.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopologyTemplate {
    pub sources: usize,
    pub sinks: usize,
    pub interior: usize,
    pub edges: Vec<(usize, usize)>,
    /// Route incidence code; two templates with equal codes are the same shape.
    pub signature: Signature,
}

impl TopologyTemplate {
    fn vertex_count(&self) -> usize {
        self.sources + self.sinks + self.interior
    }

    /// Edge indices of the directed path from source `s` to sink `t`, if any.
    fn route(&self, s: usize, t: usize) -> Option<Vec<usize>> {
        let target = self.sources + t;
        let mut stack = vec![(s, Vec::new())];
        let mut seen = vec![false; self.vertex_count()];
        while let Some((v, path)) = stack.pop() {
            if v == target {
                return Some(path);
            }
            if seen[v] {
                continue;
            }
            seen[v] = true;
            for (e, &(a, b)) in self.edges.iter().enumerate() {
                if a == v {
                    let mut next = path.clone();
                    next.push(e);
                    stack.push((b, next));
                }
            }
        }
        None
    }
}

/// A template placed in space with weights induced by a reference plan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopologyCandidate {
    pub template: TopologyTemplate,
    /// Ids and locations of every vertex; terminals first, branching vertices last.
    pub vertices: Vec<Vertex>,
    /// Number of leading vertices with fixed locations.
    pub fixed: usize,
    pub edges: Vec<Edge>,
    pub sources: Vec<Terminal>,
    pub sinks: Vec<Terminal>,
}

impl TopologyCandidate {
    /// The candidate at its current coordinates.
    pub fn to_path(&self) -> Result<TransportPath> {
        TransportPath::new(self.vertices.clone(), self.edges.clone(), self.sources.clone(), self.sinks.clone())
    }
}

/// Outcome of the coordinate descent for one candidate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeometryResult {
    pub path: TransportPath,
    pub m_alpha: f64,
    /// `M_alpha` at the initial layout.
    pub initial_m_alpha: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
    /// False when the iteration cap was hit; `path` is then the best iterate.
    pub converged: bool,
    /// Ids of branching vertices merged into a neighbour.
    pub collapsed: Vec<String>,
}

/// One evaluated structure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateResult {
    pub signature: Signature,
    pub path: TransportPath,
    #[serde(rename = "M_alpha")]
    pub m_alpha: f64,
    #[serde(rename = "V")]
    pub value: f64,
    #[serde(rename = "H")]
    pub h: f64,
    pub converged: bool,
    pub iterations: usize,
    pub collapsed: Vec<String>,
}

/// Ranked candidates for one `(alpha, sigma)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HResult {
    pub alpha: f64,
    pub sigma: f64,
    /// Sorted by `H`, ties by signature.
    pub candidates: Vec<CandidateResult>,
    /// Index into `candidates` of the minimizer.
    pub argmin: usize,
    /// Which family of paths the minimum ranges over.
    pub family: String,
}

impl HResult {
    pub fn best(&self) -> &CandidateResult {
        &self.candidates[self.argmin]
    }
}

fn check_alpha_sigma(alpha: f64, sigma: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!("alpha = {alpha} is outside [0, 1]")));
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::InvalidParameter(format!("sigma = {sigma} must be finite and nonnegative")));
    }
    Ok(())
}

/// `M_alpha(g) - sigma * V(g)`.
pub fn h_cost(
    economy: &Economy,
    g: &TransportPath,
    q_bar: &TransportPlan,
    alpha: f64,
    sigma: f64,
    tol: &Tolerances,
) -> Result<f64> {
    check_alpha_sigma(alpha, sigma)?;
    let value = exchange_value(economy, g, q_bar, tol)?.value;
    Ok(g.m_alpha_cost(alpha) - sigma * value)
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, v: usize) -> usize {
        let mut r = v;
        while self.0[r] != r {
            r = self.0[r];
        }
        self.0[v] = r;
        r
    }
}

/// Every template with `k` sources, `l` sinks and at most `max_interior`
/// branching vertices, deduplicated by signature and sorted by it.
pub fn enumerate_topologies(k: usize, l: usize, max_interior: usize) -> Result<Vec<TopologyTemplate>> {
    if k > MAX_TERMINALS || l > MAX_TERMINALS || max_interior > MAX_INTERIOR {
        return Err(Error::SizeLimit { k, l, interior: max_interior });
    }
    if k == 0 || l == 0 {
        return Err(Error::InvalidParameter("at least one source and one sink are required".into()));
    }
    let mut found: BTreeMap<Signature, TopologyTemplate> = BTreeMap::new();
    let mut keep = |edges: Vec<(usize, usize)>, interior: usize| -> Result<()> {
        if let Some(t) = make_template(k, l, interior, edges)? {
            found.entry(t.signature.clone()).or_insert(t);
        }
        Ok(())
    };

    // direct pairings, cycles allowed: every route is a single edge
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (0..l).map(move |j| (i, k + j))).collect();
    for mask in 1u32..(1 << pairs.len()) {
        let edges = (0..pairs.len()).filter(|b| mask >> b & 1 == 1).map(|b| pairs[b]).collect();
        keep(edges, 0)?;
    }

    for m in 1..=max_interior {
        let n = k + l + m;
        let mut candidates = pairs.clone();
        for s in 0..m {
            let v = k + l + s;
            candidates.extend((0..k).map(|i| (i, v)));
            candidates.extend((0..l).map(|j| (v, k + j)));
            candidates.extend((k + l..v).flat_map(|u| [(u, v), (v, u)]));
        }
        let mut chosen = Vec::new();
        forests(&candidates, 0, &mut chosen, &UnionFind((0..n).collect()), &mut |edges| {
            keep(edges.to_vec(), m)
        })?;
    }
    Ok(found.into_values().collect())
}

/// Callback receiving each forest as a list of candidate edges.
type ForestVisitor<'a> = dyn FnMut(&[(usize, usize)]) -> Result<()> + 'a;

fn forests(
    candidates: &[(usize, usize)],
    start: usize,
    chosen: &mut Vec<(usize, usize)>,
    uf: &UnionFind,
    visit: &mut ForestVisitor,
) -> Result<()> {
    for idx in start..candidates.len() {
        let (a, b) = candidates[idx];
        let mut next = UnionFind(uf.0.clone());
        let (ra, rb) = (next.find(a), next.find(b));
        if ra == rb {
            continue;
        }
        next.0[ra] = rb;
        chosen.push((a, b));
        visit(chosen)?;
        forests(candidates, idx + 1, chosen, &next, visit)?;
        chosen.pop();
    }
    Ok(())
}

/// Accepts an edge set if every terminal and edge lies on a route and every
/// branching vertex has in-degree, out-degree and degree at least 1, 1, 3.
fn make_template(k: usize, l: usize, interior: usize, edges: Vec<(usize, usize)>) -> Result<Option<TopologyTemplate>> {
    let n = k + l + interior;
    let mut indeg = vec![0; n];
    let mut outdeg = vec![0; n];
    for &(a, b) in &edges {
        outdeg[a] += 1;
        indeg[b] += 1;
    }
    if (k + l..n).any(|v| indeg[v] == 0 || outdeg[v] == 0 || indeg[v] + outdeg[v] < 3) {
        return Ok(None);
    }
    let mut template = TopologyTemplate {
        sources: k,
        sinks: l,
        interior,
        edges,
        signature: Signature::default(),
    };
    let mut used = vec![false; template.edges.len()];
    let mut terminal_used = vec![false; k + l];
    for s in 0..k {
        for t in 0..l {
            if let Some(route) = template.route(s, t) {
                route.iter().for_each(|&e| used[e] = true);
                terminal_used[s] = true;
                terminal_used[k + t] = true;
            }
        }
    }
    if used.contains(&false) || terminal_used.contains(&false) {
        return Ok(None);
    }
    template.signature = skeleton(&template)?.structural_signature()?;
    Ok(Some(template))
}

fn vertex_id(template: &TopologyTemplate, v: usize) -> String {
    if v < template.sources {
        format!("x{}", v + 1)
    } else if v < template.sources + template.sinks {
        format!("y{}", v - template.sources + 1)
    } else {
        format!("s{}", v - template.sources - template.sinks + 1)
    }
}

/// The template on generic placeholder coordinates, for signing.
fn skeleton(template: &TopologyTemplate) -> Result<TransportPath> {
    let vertices = (0..template.vertex_count())
        .map(|v| Vertex {
            id: vertex_id(template, v),
            location: vec![v as f64, (v * v) as f64],
        })
        .collect();
    let edges = template
        .edges
        .iter()
        .map(|&(tail, head)| Edge { tail, head, weight: 1.0 })
        .collect();
    let terminal = |v: usize| Terminal { vertex: v, mass: 1.0 };
    TransportPath::new(
        vertices,
        edges,
        (0..template.sources).map(terminal).collect(),
        (template.sources..template.sources + template.sinks).map(terminal).collect(),
    )
}

/// Places `template` between the atoms of `a` and `b`, mapping its sources
/// and sinks onto the atoms of positive mass in order. Returns `None` when
/// the template misses a route that carries mass under `q_bar`, induces a
/// zero-weight edge, or joins two terminals at the same location.
pub fn instantiate(
    template: &TopologyTemplate,
    a: &AtomicMeasure,
    b: &AtomicMeasure,
    q_bar: &TransportPlan,
) -> Result<Option<TopologyCandidate>> {
    let (k, l) = q_bar.shape();
    if a.len() != k || b.len() != l {
        return Err(Error::DimensionMismatch {
            expected: format!("measures with {k} and {l} atoms"),
            found: format!("{} and {}", a.len(), b.len()),
        });
    }
    let active_a: Vec<usize> = (0..k).filter(|&i| a.atoms()[i].mass > 0.0).collect();
    let active_b: Vec<usize> = (0..l).filter(|&j| b.atoms()[j].mass > 0.0).collect();
    if active_a.len() != template.sources || active_b.len() != template.sinks {
        return Err(Error::DimensionMismatch {
            expected: format!("{} active sources and {} active sinks", template.sources, template.sinks),
            found: format!("{} and {}", active_a.len(), active_b.len()),
        });
    }

    let mut weights = vec![0.0; template.edges.len()];
    for (s, &i) in active_a.iter().enumerate() {
        for (t, &j) in active_b.iter().enumerate() {
            let mass = q_bar.get(i, j);
            match template.route(s, t) {
                Some(route) => route.iter().for_each(|&e| weights[e] += mass),
                None if mass > 0.0 => return Ok(None),
                None => {}
            }
        }
    }
    if weights.iter().any(|&w| w <= 0.0) {
        return Ok(None);
    }

    // all terminals keep their places; inactive ones stay isolated
    let mut vertices = Vec::with_capacity(k + l + template.interior);
    for (i, atom) in a.atoms().iter().enumerate() {
        vertices.push(Vertex { id: format!("x{}", i + 1), location: atom.location.clone() });
    }
    for (j, atom) in b.atoms().iter().enumerate() {
        vertices.push(Vertex { id: format!("y{}", j + 1), location: atom.location.clone() });
    }
    let total = a.total() + b.total();
    let dim = vertices[0].location.len();
    let mut centroid = vec![0.0; dim];
    for atom in a.atoms().iter().chain(b.atoms()) {
        for (c, x) in centroid.iter_mut().zip(&atom.location) {
            *c += atom.mass * x / total;
        }
    }
    for s in 0..template.interior {
        vertices.push(Vertex { id: format!("s{}", s + 1), location: centroid.clone() });
    }
    let place = |v: usize| {
        if v < template.sources {
            active_a[v]
        } else if v < template.sources + template.sinks {
            k + active_b[v - template.sources]
        } else {
            k + l + (v - template.sources - template.sinks)
        }
    };
    let mut edges = Vec::with_capacity(template.edges.len());
    for (&(t, h), &weight) in template.edges.iter().zip(&weights) {
        let (tail, head) = (place(t), place(h));
        if tail < k + l && head < k + l && distance(&vertices[tail].location, &vertices[head].location) <= 1e-12 {
            return Ok(None);
        }
        edges.push(Edge { tail, head, weight });
    }
    Ok(Some(TopologyCandidate {
        template: template.clone(),
        vertices,
        fixed: k + l,
        edges,
        sources: (0..k).map(|i| Terminal { vertex: i, mass: a.atoms()[i].mass }).collect(),
        sinks: (0..l).map(|j| Terminal { vertex: k + j, mass: b.atoms()[j].mass }).collect(),
    }))
}

/// Mutable layout used by the descent. Edges are `(tail, head, weight)`.
struct Layout {
    points: Vec<Vec<f64>>,
    fixed: usize,
    alive: Vec<bool>,
    edges: Vec<(usize, usize, f64)>,
    alpha: f64,
}

const ZERO_LENGTH: f64 = 1e-14;

impl Layout {
    fn coef(&self, w: f64) -> f64 {
        w.powf(self.alpha)
    }

    fn cost(&self) -> f64 {
        self.edges
            .iter()
            .map(|&(a, b, w)| self.coef(w) * distance(&self.points[a], &self.points[b]))
            .sum()
    }

    fn free(&self) -> Vec<usize> {
        (self.fixed..self.points.len()).filter(|&v| self.alive[v]).collect()
    }

    /// Gradient per vertex; edges of length zero contribute nothing.
    fn gradient(&self) -> Vec<Vec<f64>> {
        let dim = self.points[0].len();
        let mut g = vec![vec![0.0; dim]; self.points.len()];
        for &(a, b, w) in &self.edges {
            let len = distance(&self.points[a], &self.points[b]);
            if len <= ZERO_LENGTH {
                continue;
            }
            let c = self.coef(w) / len;
            for (d, (x, y)) in self.points[a].iter().zip(&self.points[b]).enumerate() {
                let diff = c * (x - y);
                g[a][d] += diff;
                g[b][d] -= diff;
            }
        }
        for row in g.iter_mut().take(self.fixed) {
            row.iter_mut().for_each(|x| *x = 0.0);
        }
        g
    }

    fn norm(g: &[Vec<f64>]) -> f64 {
        g.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
    }

    fn neighbours(&self, u: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().enumerate().filter_map(move |(e, &(a, b, _))| {
            if a == u {
                Some((e, b))
            } else if b == u {
                Some((e, a))
            } else {
                None
            }
        })
    }

    /// Gauss-Seidel sweeps placing each free vertex at the weighted mean of
    /// its neighbours.
    fn smooth(&mut self, sweeps: usize) {
        let dim = self.points[0].len();
        for _ in 0..sweeps {
            for u in self.free() {
                let mut acc = vec![0.0; dim];
                let mut total = 0.0;
                for (e, v) in self.neighbours(u).collect::<Vec<_>>() {
                    let c = self.coef(self.edges[e].2);
                    total += c;
                    acc.iter_mut().zip(&self.points[v]).for_each(|(s, x)| *s += c * x);
                }
                if total > 0.0 {
                    self.points[u] = acc.into_iter().map(|s| s / total).collect();
                }
            }
        }
    }

    /// Merges free vertex `u` into `v`, dropping the edges between them.
    fn contract(&mut self, u: usize, v: usize) {
        self.edges.retain(|&(a, b, _)| !((a == u && b == v) || (a == v && b == u)));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(self.edges.len());
        for &(a, b, w) in &self.edges {
            let a = if a == u { v } else { a };
            let b = if b == u { v } else { b };
            match merged.iter_mut().find(|(x, y, _)| *x == a && *y == b) {
                Some(edge) => edge.2 += w,
                None => merged.push((a, b, w)),
            }
        }
        self.edges = merged;
        self.alive[u] = false;
    }

    /// Merges the free endpoint of any edge shorter than `merge`.
    fn collapse_short(&mut self, merge: f64) -> Option<usize> {
        for &(a, b, _) in &self.edges {
            if distance(&self.points[a], &self.points[b]) < merge {
                let (u, v) = if a >= self.fixed && (b < self.fixed || a > b) { (a, b) } else { (b, a) };
                if u >= self.fixed {
                    self.contract(u, v);
                    return Some(u);
                }
            }
        }
        None
    }

    /// Moving free `u` onto neighbour `v` is optimal for `u` when the pull of
    /// its other edges, evaluated at `v`, is no larger than the weight of the
    /// edge `uv`. Contracts the first such pair that does not raise the cost.
    fn collapse_kink(&mut self) -> Option<usize> {
        let base = self.cost();
        for u in self.free() {
            for (e, v) in self.neighbours(u).collect::<Vec<_>>() {
                let target = self.points[v].clone();
                let mut pull = vec![0.0; target.len()];
                for (f, x) in self.neighbours(u) {
                    let len = distance(&target, &self.points[x]);
                    if f == e || len <= ZERO_LENGTH {
                        continue;
                    }
                    let c = self.coef(self.edges[f].2) / len;
                    pull.iter_mut()
                        .zip(target.iter().zip(&self.points[x]))
                        .for_each(|(p, (t, y))| *p += c * (t - y));
                }
                let pull = pull.iter().map(|x| x * x).sum::<f64>().sqrt();
                if pull > self.coef(self.edges[e].2) * (1.0 + 1e-12) {
                    continue;
                }
                let saved = std::mem::replace(&mut self.points[u], target);
                if self.cost() <= base + 1e-12 * (1.0 + base) {
                    self.contract(u, v);
                    return Some(u);
                }
                self.points[u] = saved;
            }
        }
        None
    }

    /// Newton direction over the free coordinates. The cost is convex in
    /// them, with Hessian `c / len * (I - u u^T)` per edge and direction `u`;
    /// a small ridge keeps straight chains solvable.
    fn newton_direction(&self, g: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
        let dim = self.points[0].len();
        let free = self.free();
        if free.is_empty() {
            return None;
        }
        let slot = |v: usize| free.iter().position(|&u| u == v);
        let n = free.len() * dim;
        let mut h = DMatrix::<f64>::zeros(n, n);
        for &(a, b, w) in &self.edges {
            let len = distance(&self.points[a], &self.points[b]);
            if len <= ZERO_LENGTH {
                continue;
            }
            let c = self.coef(w) / len;
            let u: Vec<f64> = (0..dim).map(|d| (self.points[a][d] - self.points[b][d]) / len).collect();
            let block = |r: usize, s: usize| c * (if r == s { 1.0 } else { 0.0 } - u[r] * u[s]);
            let (sa, sb) = (slot(a), slot(b));
            for r in 0..dim {
                for s in 0..dim {
                    let k = block(r, s);
                    if let Some(i) = sa {
                        h[(i * dim + r, i * dim + s)] += k;
                    }
                    if let Some(j) = sb {
                        h[(j * dim + r, j * dim + s)] += k;
                    }
                    if let (Some(i), Some(j)) = (sa, sb) {
                        h[(i * dim + r, j * dim + s)] -= k;
                        h[(j * dim + r, i * dim + s)] -= k;
                    }
                }
            }
        }
        let scale = (0..n).map(|i| h[(i, i)]).fold(0.0, f64::max);
        if scale <= 0.0 {
            return None;
        }
        for i in 0..n {
            h[(i, i)] += 1e-10 * scale;
        }
        let rhs = DVector::from_fn(n, |i, _| g[free[i / dim]][i % dim]);
        let x = h.cholesky()?.solve(&rhs);
        if !x.iter().all(|v| v.is_finite()) {
            return None;
        }
        let mut d = vec![vec![0.0; dim]; self.points.len()];
        for (i, &v) in free.iter().enumerate() {
            d[v].copy_from_slice(&x.as_slice()[i * dim..(i + 1) * dim]);
        }
        Some(d)
    }

    fn step(&self, g: &[Vec<f64>], t: f64) -> Vec<Vec<f64>> {
        self.points
            .iter()
            .zip(g)
            .map(|(p, d)| p.iter().zip(d).map(|(x, y)| x - t * y).collect())
            .collect()
    }
}

/// Minimizes `M_alpha` over the branching-vertex coordinates of `candidate`.
///
/// Starts from the mass-weighted centroid of the terminals, smooths by
/// neighbour averaging when that lowers the cost, then takes Newton steps,
/// or gradient steps where those fail, with Armijo backtracking until the
/// gradient norm is at most
/// `tol.geometry`. A vertex whose optimal position is a neighbour, or which
/// comes within `tol.merge` of one, is merged into it.
pub fn optimize_geometry(candidate: &TopologyCandidate, alpha: f64, tol: &Tolerances) -> Result<GeometryResult> {
    check_alpha_sigma(alpha, 0.0)?;
    let n = candidate.vertices.len();
    let mut layout = Layout {
        points: candidate.vertices.iter().map(|v| v.location.clone()).collect(),
        fixed: candidate.fixed,
        alive: vec![true; n],
        edges: candidate.edges.iter().map(|e| (e.tail, e.head, e.weight)).collect(),
        alpha,
    };
    let initial = layout.cost();
    let start = layout.points.clone();
    layout.smooth(200);
    if layout.cost() > initial {
        layout.points = start;
    }

    let mut collapsed = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut t = 1.0;
    while iterations < tol.max_iter_geometry {
        if let Some(u) = layout.collapse_short(tol.merge) {
            collapsed.push(u);
            continue;
        }
        let g = layout.gradient();
        let norm = Layout::norm(&g);
        if norm <= tol.geometry || iterations % 25 == 24 {
            if let Some(u) = layout.collapse_kink() {
                collapsed.push(u);
                iterations += 1;
                continue;
            }
            if norm <= tol.geometry {
                converged = true;
                break;
            }
        }
        iterations += 1;
        let f = layout.cost();
        if let Some(d) = layout.newton_direction(&g) {
            let slope: f64 = g.iter().flatten().zip(d.iter().flatten()).map(|(a, b)| a * b).sum();
            let mut s = 1.0;
            let mut accepted = false;
            while slope > 0.0 && s > 1e-10 {
                let trial = layout.step(&d, s);
                let saved = std::mem::replace(&mut layout.points, trial);
                if layout.cost() <= f - 1e-4 * s * slope {
                    accepted = true;
                    break;
                }
                layout.points = saved;
                s *= 0.5;
            }
            if accepted {
                continue;
            }
        }
        t *= 2.0;
        let mut accepted = false;
        while t > 1e-18 {
            let trial = layout.step(&g, t);
            let saved = std::mem::replace(&mut layout.points, trial);
            if layout.cost() <= f - 1e-4 * t * norm * norm {
                accepted = true;
                break;
            }
            layout.points = saved;
            t *= 0.5;
        }
        if !accepted {
            // no descent along the gradient: either a kink or numerical floor
            if let Some(u) = layout.collapse_kink() {
                collapsed.push(u);
                t = 1.0;
                continue;
            }
            break;
        }
    }
    let gradient_norm = Layout::norm(&layout.gradient());
    converged |= gradient_norm <= tol.geometry;

    let index: Vec<Option<usize>> = layout
        .alive
        .iter()
        .scan(0, |next, &alive| {
            Some(alive.then(|| {
                *next += 1;
                *next - 1
            }))
        })
        .collect();
    let vertices = (0..n)
        .filter(|&v| layout.alive[v])
        .map(|v| Vertex { id: candidate.vertices[v].id.clone(), location: layout.points[v].clone() })
        .collect();
    let edges = layout
        .edges
        .iter()
        .map(|&(a, b, weight)| Edge { tail: index[a].unwrap(), head: index[b].unwrap(), weight })
        .collect();
    let path = TransportPath::new(vertices, edges, candidate.sources.clone(), candidate.sinks.clone())?;
    Ok(GeometryResult {
        m_alpha: path.m_alpha_cost(alpha),
        path,
        initial_m_alpha: initial,
        iterations,
        gradient_norm,
        converged,
        collapsed: collapsed.into_iter().map(|u| candidate.vertices[u].id.clone()).collect(),
    })
}

/// Every distinct structure reachable from the template family, with its
/// optimized geometry and exchange value. `h` is set to `M_alpha`.
pub fn evaluate_family(
    economy: &Economy,
    alpha: f64,
    max_interior: usize,
    tol: &Tolerances,
) -> Result<Vec<CandidateResult>> {
    check_alpha_sigma(alpha, 0.0)?;
    let (k, l) = (economy.num_goods(), economy.num_consumers());
    if k > MAX_TERMINALS || l > MAX_TERMINALS || max_interior > MAX_INTERIOR {
        return Err(Error::SizeLimit { k, l, interior: max_interior });
    }
    let profile = economy.demand_profile()?;
    let q_bar = &profile.plan;
    let active_k = profile.sources.masses().iter().filter(|&&m| m > 0.0).count();
    let active_l = profile.sinks.masses().iter().filter(|&&m| m > 0.0).count();
    let templates = enumerate_topologies(active_k, active_l, max_interior)?;
    let candidates: Vec<TopologyCandidate> = templates
        .iter()
        .map(|t| instantiate(t, &profile.sources, &profile.sinks, q_bar))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    if candidates.is_empty() {
        return Err(Error::EmptyCandidateSet);
    }

    let shaped: Vec<(Signature, GeometryResult)> = candidates
        .par_iter()
        .map(|c| {
            let geometry = optimize_geometry(c, alpha, tol)?;
            Ok((geometry.path.structural_signature()?, geometry))
        })
        .collect::<Result<_>>()?;
    let mut best: BTreeMap<Signature, GeometryResult> = BTreeMap::new();
    for (signature, geometry) in shaped {
        match best.get(&signature) {
            Some(kept) if kept.m_alpha <= geometry.m_alpha => {}
            _ => {
                best.insert(signature, geometry);
            }
        }
    }

    best.into_par_iter()
        .map(|(signature, geometry)| {
            let value = exchange_value(economy, &geometry.path, q_bar, tol)?.value;
            Ok(CandidateResult {
                signature,
                m_alpha: geometry.m_alpha,
                value,
                h: geometry.m_alpha,
                converged: geometry.converged,
                iterations: geometry.iterations,
                collapsed: geometry.collapsed,
                path: geometry.path,
            })
        })
        .collect()
}

fn family_note(max_interior: usize) -> String {
    format!(
        "minimum over directed forests with at most {max_interior} branching vertices \
         and all direct source-sink pairings"
    )
}

/// Ranks evaluated candidates for one `sigma`. The minimizer is the smallest
/// signature among candidates within `tol.opt` of the least `H`.
pub fn rank(candidates: &[CandidateResult], alpha: f64, sigma: f64, max_interior: usize, tol: &Tolerances) -> Result<HResult> {
    check_alpha_sigma(alpha, sigma)?;
    if candidates.is_empty() {
        return Err(Error::EmptyCandidateSet);
    }
    let mut ranked: Vec<CandidateResult> = candidates
        .iter()
        .cloned()
        .map(|mut c| {
            c.h = c.m_alpha - sigma * c.value;
            c
        })
        .collect();
    ranked.sort_by(|a, b| a.h.total_cmp(&b.h).then_with(|| a.signature.cmp(&b.signature)));
    let least = ranked[0].h;
    let argmin = (0..ranked.len())
        .filter(|&c| ranked[c].h <= least + tol.opt)
        .min_by(|&a, &b| ranked[a].signature.cmp(&ranked[b].signature))
        .unwrap_or(0);
    Ok(HResult {
        alpha,
        sigma,
        candidates: ranked,
        argmin,
        family: family_note(max_interior),
    })
}

/// Minimizes `H` over the template family.
pub fn optimize_h(economy: &Economy, alpha: f64, sigma: f64, max_interior: usize, tol: &Tolerances) -> Result<HResult> {
    check_alpha_sigma(alpha, sigma)?;
    let evaluated = evaluate_family(economy, alpha, max_interior, tol)?;
    rank(&evaluated, alpha, sigma, max_interior, tol)
}

/// [`optimize_h`] for several `sigma`, sharing geometry and valuations.
pub fn sigma_sweep(
    economy: &Economy,
    alpha: f64,
    sigmas: &[f64],
    max_interior: usize,
    tol: &Tolerances,
) -> Result<Vec<HResult>> {
    for &sigma in sigmas {
        check_alpha_sigma(alpha, sigma)?;
    }
    let evaluated = evaluate_family(economy, alpha, max_interior, tol)?;
    sigmas.iter().map(|&s| rank(&evaluated, alpha, s, max_interior, tol)).collect()
}
