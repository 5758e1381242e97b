//! Generators, fixtures and brute-force oracles shared by the integration
//! tests and the acceptance runner.
#![allow(dead_code)]

use std::collections::HashMap;
use std::path::PathBuf;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::Rng;

use ramex::transport_graph::{Edge, Terminal, Vertex};
use ramex::{
    enumerate_topologies, expenditure, hub_path, instantiate, parse_economy, parse_graph, Consumer, DemandProfile,
    Economy, Good, QuantityTransform, Tolerances, TopologyTemplate, TransportPath, TransportPlan, UtilityFn,
};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn load_economy(name: &str) -> Economy {
    parse_economy(&std::fs::read(fixture(name)).unwrap()).unwrap()
}

pub fn load_graph(name: &str) -> TransportPath {
    parse_graph(&std::fs::read(fixture(name)).unwrap(), &Tolerances::default()).unwrap()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    Linear,
    CobbDouglas,
    Ces,
    QuantityOnly,
}

pub fn random_utility(rng: &mut StdRng, family: Family, k: usize) -> UtilityFn {
    let mut draw = |lo: f64, hi: f64| -> Vec<f64> { (0..k).map(|_| rng.random_range(lo..hi)).collect() };
    match family {
        Family::Linear => UtilityFn::linear(draw(0.2, 3.0)),
        Family::CobbDouglas => UtilityFn::cobb_douglas(draw(0.2, 1.0)),
        Family::Ces => {
            let weights = draw(0.2, 2.0);
            UtilityFn::ces(weights, rng.random_range(0.2..0.8), rng.random_range(0.5..1.5))
        }
        Family::QuantityOnly => {
            if rng.random_bool(0.5) {
                UtilityFn::quantity_only(QuantityTransform::Identity)
            } else {
                UtilityFn::quantity_only(QuantityTransform::Power { exponent: rng.random_range(0.3..1.0) })
            }
        }
    }
}

/// Goods on the line `x = 0`, consumers on `x = 2`, jittered vertically.
pub fn economy_with(rng: &mut StdRng, prices: Vec<Vec<f64>>, utilities: Vec<UtilityFn>) -> Economy {
    let k = prices[0].len();
    let goods = (0..k)
        .map(|i| Good {
            id: format!("x{}", i + 1),
            location: vec![0.0, 3.0 * i as f64 + rng.random_range(-0.5..0.5)],
        })
        .collect();
    let consumers = prices
        .into_iter()
        .zip(utilities)
        .enumerate()
        .map(|(j, (prices, utility))| Consumer {
            id: format!("y{}", j + 1),
            location: vec![2.0, 3.0 * j as f64 + rng.random_range(-0.5..0.5)],
            wealth: rng.random_range(0.5..2.0),
            prices,
            utility,
        })
        .collect();
    Economy::new(2, goods, consumers).unwrap()
}

pub fn random_prices(rng: &mut StdRng, k: usize) -> Vec<f64> {
    (0..k).map(|_| rng.random_range(0.5..3.0)).collect()
}

pub fn random_economy(rng: &mut StdRng, k: usize, l: usize, families: &[Family]) -> Economy {
    let prices = (0..l).map(|_| random_prices(rng, k)).collect();
    let utilities = (0..l)
        .map(|_| {
            let f = families[rng.random_range(0..families.len())];
            random_utility(rng, f, k)
        })
        .collect();
    economy_with(rng, prices, utilities)
}

/// Every consumer quotes a positive multiple of one price vector.
pub fn collinear_economy(rng: &mut StdRng, k: usize, l: usize) -> Economy {
    let base = random_prices(rng, k);
    let prices = (0..l)
        .map(|_| {
            let lambda = rng.random_range(0.3..3.0);
            base.iter().map(|p| lambda * p).collect()
        })
        .collect();
    let families = [Family::Linear, Family::CobbDouglas, Family::Ces, Family::QuantityOnly];
    let utilities = (0..l)
        .map(|_| {
            let f = families[rng.random_range(0..families.len())];
            random_utility(rng, f, k)
        })
        .collect();
    economy_with(rng, prices, utilities)
}

pub fn quantity_only_economy(rng: &mut StdRng, k: usize, l: usize) -> Economy {
    random_economy(rng, k, l, &[Family::QuantityOnly])
}

/// Two goods, two Cobb-Douglas consumers, with good 2 dearer than good 1
/// for consumer 1 and good 1 dearer than good 2 for consumer 2.
pub fn crossing_cobb_douglas(rng: &mut StdRng) -> Economy {
    let p11 = rng.random_range(0.5..2.0);
    let p21 = p11 + rng.random_range(0.2..2.0);
    let p22 = rng.random_range(0.5..2.0);
    let p12 = p22 + rng.random_range(0.2..2.0);
    let utilities = (0..2).map(|_| random_utility(rng, Family::CobbDouglas, 2)).collect();
    economy_with(rng, vec![vec![p11, p21], vec![p12, p22]], utilities)
}

pub fn random_hub(rng: &mut StdRng, profile: &DemandProfile) -> TransportPath {
    loop {
        let hub = [rng.random_range(0.3..1.7), rng.random_range(-0.5..6.5)];
        if let Ok(g) = hub_path(&profile.sources, &profile.sinks, &hub) {
            return g;
        }
    }
}

/// The two-leg trunk of `g` with weights induced by `q`.
pub fn trunk_weighted(g: &TransportPath, q: &TransportPlan) -> TransportPath {
    let (rows, cols) = (q.row_sums(), q.col_sums());
    let weights = [rows[0], rows[1], q.total(), cols[0], cols[1]];
    let edges = g.edges().iter().zip(weights).map(|(e, weight)| Edge { weight, ..*e }).collect();
    let sources = g.sources().iter().zip(&rows).map(|(t, &mass)| Terminal { mass, ..*t }).collect();
    let sinks = g.sinks().iter().zip(&cols).map(|(t, &mass)| Terminal { mass, ..*t }).collect();
    TransportPath::new(g.vertices().to_vec(), edges, sources, sinks).unwrap()
}

/// Copy of `e` with goods and consumers on the terminals of `g`.
pub fn relocate(e: &Economy, g: &TransportPath) -> Economy {
    let mut goods = e.goods().to_vec();
    let mut consumers = e.consumers().to_vec();
    for (i, t) in g.sources().iter().enumerate() {
        goods[i].location = g.vertices()[t.vertex].location.clone();
    }
    for (j, t) in g.sinks().iter().enumerate() {
        consumers[j].location = g.vertices()[t.vertex].location.clone();
    }
    Economy::new(e.dimension(), goods, consumers).unwrap()
}

/// Templates with at most one branching vertex, cached by active counts.
pub struct TemplateCache(HashMap<(usize, usize), Vec<TopologyTemplate>>);

impl TemplateCache {
    pub fn new() -> Self {
        TemplateCache(HashMap::new())
    }

    /// Up to `count` paths compatible with the demand plan, drawn from the
    /// template family with branching vertices at random positions.
    pub fn compatible_paths(&mut self, rng: &mut StdRng, profile: &DemandProfile, count: usize) -> Vec<TransportPath> {
        let ka = profile.sources.masses().iter().filter(|&&m| m > 0.0).count();
        let la = profile.sinks.masses().iter().filter(|&&m| m > 0.0).count();
        let templates = self
            .0
            .entry((ka, la))
            .or_insert_with(|| enumerate_topologies(ka, la, 1).unwrap());
        let mut order: Vec<usize> = (0..templates.len()).collect();
        order.shuffle(rng);
        let mut out = Vec::new();
        for t in order {
            if out.len() == count {
                break;
            }
            let Some(mut c) = instantiate(&templates[t], &profile.sources, &profile.sinks, &profile.plan).unwrap()
            else {
                continue;
            };
            for v in c.fixed..c.vertices.len() {
                c.vertices[v].location = vec![rng.random_range(-1.0..3.0), rng.random_range(-1.0..7.0)];
            }
            if let Ok(g) = c.to_path() {
                out.push(g);
            }
        }
        out
    }
}

/// Random transport path with unique routes: edges are offered in random
/// order along a random topological order and kept only while no pair of
/// vertices gains a second directed path. Unused branching vertices are
/// dropped and weights come from a random positive plan on the routes.
pub fn random_route_unique_path(rng: &mut StdRng, k: usize, l: usize, interior: usize) -> (TransportPath, TransportPlan) {
    loop {
        let n = k + l + interior;
        let mut order: Vec<usize> = (k + l..n).collect();
        order.shuffle(rng);
        let mut rank = vec![0usize; n];
        for (r, &v) in order.iter().enumerate() {
            rank[v] = r + 1;
        }
        (k..k + l).for_each(|v| rank[v] = n + 1);
        let mut offers = Vec::new();
        for a in 0..n {
            for b in 0..n {
                let is_source = |v: usize| v < k;
                let is_sink = |v: usize| (k..k + l).contains(&v);
                if a != b && !is_sink(a) && !is_source(b) && rank[a] < rank[b] {
                    offers.push((a, b));
                }
            }
        }
        offers.shuffle(rng);
        let budget = rng.random_range(1..=offers.len().min(n + 4));
        let mut edges: Vec<(usize, usize)> = Vec::new();
        for &e in &offers {
            if edges.len() == budget {
                break;
            }
            edges.push(e);
            if max_path_count(n, &edges) > 1 {
                edges.pop();
            }
        }
        // keep only edges on some source-to-sink path
        let reach_from_source = closure(n, &edges, &(0..k).collect::<Vec<_>>(), false);
        let reach_to_sink = closure(n, &edges, &(k..k + l).collect::<Vec<_>>(), true);
        edges.retain(|&(a, b)| reach_from_source[a] && reach_to_sink[b]);
        let routes = route_pairs(k, l, &edges);
        if routes.is_empty() {
            continue;
        }
        let mut q = TransportPlan::zeros(k, l);
        for &((i, j), _) in &routes {
            q.set(i, j, rng.random_range(0.1..1.0));
        }
        let q = q.scaled(1.0 / q.total());
        let mut weight = vec![0.0; edges.len()];
        for ((i, j), path) in &routes {
            path.iter().for_each(|&e| weight[e] += q.get(*i, *j));
        }
        let used: Vec<usize> = (0..n)
            .filter(|&v| v < k + l || edges.iter().any(|&(a, b)| a == v || b == v))
            .collect();
        let index = |v: usize| used.iter().position(|&u| u == v).unwrap();
        let vertices = used
            .iter()
            .map(|&v| Vertex {
                id: format!("v{v}"),
                location: vec![v as f64 + rng.random_range(0.0..0.5), rng.random_range(0.0..10.0)],
            })
            .collect();
        let path_edges = edges
            .iter()
            .zip(&weight)
            .map(|(&(a, b), &w)| Edge { tail: index(a), head: index(b), weight: w })
            .collect();
        let sources = (0..k).map(|i| Terminal { vertex: index(i), mass: q.row_sums()[i] }).collect();
        let sinks = (0..l).map(|j| Terminal { vertex: index(k + j), mass: q.col_sums()[j] }).collect();
        return (TransportPath::new(vertices, path_edges, sources, sinks).unwrap(), q);
    }
}

/// Largest number of directed paths between any ordered vertex pair.
fn max_path_count(n: usize, edges: &[(usize, usize)]) -> usize {
    fn count(v: usize, t: usize, edges: &[(usize, usize)]) -> usize {
        if v == t {
            return 1;
        }
        edges.iter().filter(|&&(a, _)| a == v).map(|&(_, b)| count(b, t, edges)).sum()
    }
    (0..n)
        .flat_map(|s| (0..n).filter(move |&t| t != s).map(move |t| (s, t)))
        .map(|(s, t)| count(s, t, edges))
        .max()
        .unwrap_or(0)
}

fn closure(n: usize, edges: &[(usize, usize)], seeds: &[usize], backwards: bool) -> Vec<bool> {
    let mut seen = vec![false; n];
    let mut stack = seeds.to_vec();
    while let Some(v) = stack.pop() {
        if seen[v] {
            continue;
        }
        seen[v] = true;
        for &(a, b) in edges {
            let (from, to) = if backwards { (b, a) } else { (a, b) };
            if from == v {
                stack.push(to);
            }
        }
    }
    seen
}

/// Edge indices of the directed path from each source to each sink, if any.
fn route_pairs(k: usize, l: usize, edges: &[(usize, usize)]) -> Vec<((usize, usize), Vec<usize>)> {
    fn walk(v: usize, t: usize, edges: &[(usize, usize)], path: &mut Vec<usize>) -> bool {
        if v == t {
            return true;
        }
        for (e, &(a, b)) in edges.iter().enumerate() {
            if a == v {
                path.push(e);
                if walk(b, t, edges, path) {
                    return true;
                }
                path.pop();
            }
        }
        false
    }
    let mut out = Vec::new();
    for i in 0..k {
        for j in 0..l {
            let mut path = Vec::new();
            if walk(i, k + j, edges, &mut path) {
                out.push(((i, j), path));
            }
        }
    }
    out
}

/// Brute-force maximization of total expenditure over the plans compatible
/// with `g` that keep every consumer at least as well off as under `q_bar`.
///
/// The plan polytope is parameterized by an orthonormal null-space basis of
/// the route and edge equations, computed here from scratch. The feasible
/// set is convex and contains the reference plan, so it is searched along
/// rays: a grid of directions, then local grids around the best directions.
pub struct GridOracle<'a> {
    economy: &'a Economy,
    q_bar: Vec<f64>,
    basis: Vec<Vec<f64>>,
    floors: Vec<f64>,
    k: usize,
    l: usize,
}

impl<'a> GridOracle<'a> {
    pub fn new(economy: &'a Economy, g: &TransportPath, q_bar: &TransportPlan) -> Self {
        let (k, l) = q_bar.shape();
        let n = k * l;
        let vertex_of_source: Vec<usize> = g.sources().iter().map(|t| t.vertex).collect();
        let vertex_of_sink: Vec<usize> = g.sinks().iter().map(|t| t.vertex).collect();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut edge_rows = vec![vec![0.0; n]; g.edges().len()];
        for i in 0..k {
            for j in 0..l {
                match graph_route(g, vertex_of_source[i], vertex_of_sink[j]) {
                    Some(path) => path.into_iter().for_each(|e| edge_rows[e][i * l + j] = 1.0),
                    None => {
                        let mut r = vec![0.0; n];
                        r[i * l + j] = 1.0;
                        rows.push(r);
                    }
                }
            }
        }
        rows.extend(edge_rows);
        let a = DMatrix::from_fn(rows.len(), n, |r, c| rows[r][c]);
        let gram = a.transpose() * &a;
        let eig = SymmetricEigen::new(gram);
        let basis = (0..n)
            .filter(|&c| eig.eigenvalues[c].abs() < 1e-9)
            .map(|c| eig.eigenvectors.column(c).iter().copied().collect())
            .collect();
        let floors = economy.utility_levels(q_bar);
        GridOracle { economy, q_bar: q_bar.as_slice().to_vec(), basis, floors, k, l }
    }

    pub fn dimension(&self) -> usize {
        self.basis.len()
    }

    fn plan(&self, z: &[f64]) -> Vec<f64> {
        let mut q = self.q_bar.clone();
        for (b, &t) in self.basis.iter().zip(z) {
            q.iter_mut().zip(b).for_each(|(x, y)| *x += t * y);
        }
        q
    }

    /// Total expenditure at the plan for `z`, if it is feasible.
    fn objective(&self, z: &[f64]) -> Option<f64> {
        let q = self.plan(z);
        if q.iter().any(|&x| x < -1e-13) {
            return None;
        }
        let mut total = 0.0;
        for (j, c) in self.economy.consumers().iter().enumerate() {
            let column: Vec<f64> = (0..self.k).map(|i| q[i * self.l + j].max(0.0)).collect();
            let level = c.utility.eval(&column);
            if level < self.floors[j] - 1e-13 * (1.0 + self.floors[j].abs()) {
                return None;
            }
            total += expenditure(&c.utility, &c.prices, level.max(0.0)).ok()?;
        }
        Some(total)
    }

    fn feasible(&self, z: &[f64]) -> bool {
        self.objective(z).is_some()
    }

    /// Best objective along the ray `r * dir`, `r >= 0`. The feasible set is
    /// convex and contains the origin, so feasible radii form an interval
    /// found by bisection; the objective is concave along the ray.
    fn ray(&self, dir: &[f64]) -> Option<f64> {
        let at = |r: f64| -> Vec<f64> { dir.iter().map(|x| r * x).collect() };
        if !self.feasible(&at(1e-9)) {
            return None;
        }
        let (mut lo, mut hi) = (1e-9, 2.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.feasible(&at(mid)) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let f = |r: f64| self.objective(&at(r)).unwrap_or(f64::NEG_INFINITY);
        let golden = 0.5 * (5f64.sqrt() - 1.0);
        let (mut a, mut b) = (0.0, lo);
        let (mut c, mut d) = (b - golden * (b - a), a + golden * (b - a));
        let (mut fc, mut fd) = (f(c), f(d));
        while b - a > 1e-14 {
            if fc >= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - golden * (b - a);
                fc = f(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + golden * (b - a);
                fd = f(d);
            }
        }
        Some(f(0.0).max(fc).max(fd).max(f(lo)))
    }

    /// Normals, in parameter coordinates, of the linear constraints active at
    /// the reference plan: vanishing entries and floors of linear and quantity-only
    /// utilities.
    fn active_linear_normals(&self) -> Vec<Vec<f64>> {
        let d = self.dimension();
        let project = |weights: &[(usize, f64)]| -> Vec<f64> {
            (0..d).map(|c| weights.iter().map(|&(e, w)| w * self.basis[c][e]).sum()).collect()
        };
        let mut normals = Vec::new();
        for (e, &x) in self.q_bar.iter().enumerate() {
            if x.abs() <= 1e-12 {
                normals.push(project(&[(e, 1.0)]));
            }
        }
        for (j, c) in self.economy.consumers().iter().enumerate() {
            // a monotone function of the column sum has a linear level set
            let coefficients = match &c.utility {
                UtilityFn::Linear { coefficients } => coefficients.clone(),
                UtilityFn::QuantityOnly { .. } => vec![1.0; self.k],
                _ => continue,
            };
            let weights: Vec<(usize, f64)> = coefficients.iter().enumerate().map(|(i, &a)| (i * self.l + j, a)).collect();
            normals.push(project(&weights));
        }
        let mut unique: Vec<Vec<f64>> = Vec::new();
        for n in normals {
            let norm = n.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-9 {
                continue;
            }
            let n: Vec<f64> = n.iter().map(|x| x / norm).collect();
            let parallel = unique.iter().any(|u| u.iter().zip(&n).map(|(a, b)| a * b).sum::<f64>().abs() > 1.0 - 1e-9);
            if !parallel {
                unique.push(n);
            }
        }
        unique
    }

    /// Orthonormal bases of the subspaces searched: the whole space and every
    /// nonzero intersection of hyperplanes orthogonal to active linear
    /// normals. An optimum on a lower-dimensional face has no neighbourhood of
    /// feasible generic directions, so each face is scanned in its own right.
    fn faces(&self) -> Vec<Vec<Vec<f64>>> {
        let d = self.dimension();
        let normals = self.active_linear_normals();
        let mut subsets: Vec<Vec<usize>> = vec![vec![]];
        for size in 1..d {
            let mut next = Vec::new();
            for s in subsets.iter().filter(|s| s.len() == size - 1) {
                let from = s.last().map_or(0, |&x| x + 1);
                for n in from..normals.len() {
                    let mut t = s.clone();
                    t.push(n);
                    next.push(t);
                }
            }
            subsets.extend(next);
        }
        let mut faces: Vec<Vec<Vec<f64>>> = Vec::new();
        for subset in subsets {
            let m = subset.len();
            let a = DMatrix::from_fn(m.max(1), d, |r, c| if m == 0 { 0.0 } else { normals[subset[r]][c] });
            let eig = SymmetricEigen::new(a.transpose() * &a);
            let face: Vec<Vec<f64>> = (0..d)
                .filter(|&c| eig.eigenvalues[c].abs() < 1e-9)
                .map(|c| eig.eigenvectors.column(c).iter().copied().collect())
                .collect();
            if face.is_empty() || faces.iter().any(|f| same_span(f, &face)) {
                continue;
            }
            faces.push(face);
        }
        faces
    }

    /// Oracle exchange value, or `None` above dimension 3.
    ///
    /// On each face, scans a fine grid of directions from the reference plan
    /// and refines around the best few with local grids of shrinking spacing.
    pub fn value(&self) -> Option<f64> {
        let d = self.dimension();
        let origin = vec![0.0; d];
        let base = self.objective(&origin).expect("reference plan is feasible");
        if d == 0 {
            return Some(0.0);
        }
        if d > 3 {
            return None;
        }
        let best = self
            .faces()
            .iter()
            .map(|face| self.face_value(face))
            .fold(base, f64::max);
        Some(best - base)
    }

    fn face_value(&self, face: &[Vec<f64>]) -> f64 {
        let m = face.len();
        let lift = |w: &[f64]| -> Vec<f64> {
            let mut z = vec![0.0; self.dimension()];
            for (f, &c) in face.iter().zip(w) {
                z.iter_mut().zip(f).for_each(|(x, y)| *x += c * y);
            }
            z
        };
        let mut scored: Vec<(f64, Vec<f64>)> = sphere_grid(m)
            .into_iter()
            .filter_map(|w| self.ray(&lift(&w)).map(|v| (v, w)))
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0));
        scored.truncate(4);
        let mut best = f64::NEG_INFINITY;
        let spacing = if m == 3 { 4e-2 } else { 2e-3 };
        for (v, mut dir) in scored {
            let mut current = v;
            let mut h = if m == 1 { 0.0 } else { spacing };
            while h > 1e-10 {
                let frame = tangent_frame(&dir);
                let steps: Vec<f64> = (-4..=4).map(|s| s as f64 * h / 2.0).collect();
                let offsets: Vec<Vec<f64>> = if m == 2 {
                    steps.iter().map(|&a| vec![a]).collect()
                } else {
                    steps.iter().flat_map(|&a| steps.iter().map(move |&b| vec![a, b])).collect()
                };
                for off in offsets {
                    let mut cand = dir.clone();
                    for (t, o) in frame.iter().zip(&off) {
                        cand.iter_mut().zip(t).for_each(|(c, x)| *c += o * x);
                    }
                    let norm = cand.iter().map(|x| x * x).sum::<f64>().sqrt();
                    cand.iter_mut().for_each(|c| *c /= norm);
                    if let Some(w) = self.ray(&lift(&cand)) {
                        if w > current {
                            current = w;
                            dir = cand;
                        }
                    }
                }
                h /= 3.0;
            }
            best = best.max(current);
        }
        best
    }
}

/// Unit directions covering the sphere of dimension `m - 1`.
fn sphere_grid(m: usize) -> Vec<Vec<f64>> {
    match m {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..4_000)
            .map(|n| {
                let t = std::f64::consts::TAU * n as f64 / 4_000.0;
                vec![t.cos(), t.sin()]
            })
            .collect(),
        _ => {
            // Fibonacci sphere
            let count = 20_000;
            let turn = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|n| {
                    let y = 1.0 - 2.0 * (n as f64 + 0.5) / count as f64;
                    let r = (1.0 - y * y).sqrt();
                    let t = turn * n as f64;
                    vec![r * t.cos(), y, r * t.sin()]
                })
                .collect()
        }
    }
}

/// Whether two orthonormal families span the same subspace.
fn same_span(a: &[Vec<f64>], b: &[Vec<f64>]) -> bool {
    a.len() == b.len()
        && b.iter().all(|v| {
            let captured: f64 = a.iter().map(|u| u.iter().zip(v).map(|(x, y)| x * y).sum::<f64>().powi(2)).sum();
            captured > 1.0 - 1e-9
        })
}

/// Orthonormal vectors spanning the complement of unit `dir` (dimension 2 or 3).
fn tangent_frame(dir: &[f64]) -> Vec<Vec<f64>> {
    if dir.len() == 2 {
        return vec![vec![-dir[1], dir[0]]];
    }
    let pick = if dir[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let dot: f64 = pick.iter().zip(dir).map(|(a, b)| a * b).sum();
    let mut u: Vec<f64> = pick.iter().zip(dir).map(|(a, b)| a - dot * b).collect();
    let n = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    u.iter_mut().for_each(|x| *x /= n);
    let v = vec![
        dir[1] * u[2] - dir[2] * u[1],
        dir[2] * u[0] - dir[0] * u[2],
        dir[0] * u[1] - dir[1] * u[0],
    ];
    vec![u, v]
}

fn graph_route(g: &TransportPath, from: usize, to: usize) -> Option<Vec<usize>> {
    fn walk(g: &TransportPath, v: usize, to: usize, path: &mut Vec<usize>) -> bool {
        if v == to {
            return true;
        }
        for (e, edge) in g.edges().iter().enumerate() {
            if edge.tail == v && !path.contains(&e) {
                path.push(e);
                if walk(g, edge.head, to, path) {
                    return true;
                }
                path.pop();
            }
        }
        false
    }
    let mut path = Vec::new();
    walk(g, from, to, &mut path).then_some(path)
}

/// Numeric expenditure: minimizes `p . x * (level / u(x))^(1/beta)` over the
/// simplex of directions by a barycentric grid and local refinement.
pub fn expenditure_oracle(u: &UtilityFn, prices: &[f64], level: f64) -> f64 {
    let k = prices.len();
    let beta = u.degree();
    let cost = |x: &[f64]| -> f64 {
        let ux = u.eval(x);
        if ux <= 0.0 {
            return f64::INFINITY;
        }
        let px: f64 = prices.iter().zip(x).map(|(p, y)| p * y).sum();
        px * (level / ux).powf(1.0 / beta)
    };
    if k == 1 {
        return cost(&[1.0]);
    }
    // coarse barycentric grid
    let n = match k {
        2 => 2000,
        3 => 200,
        _ => 60,
    };
    let mut best = (f64::INFINITY, vec![1.0 / k as f64; k]);
    let mut counts = vec![0usize; k - 1];
    loop {
        let used: usize = counts.iter().sum();
        if used <= n {
            let mut x: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
            x.push((n - used) as f64 / n as f64);
            let c = cost(&x);
            if c < best.0 {
                best = (c, x);
            }
        }
        let mut c = 0;
        loop {
            if c == k - 1 {
                break;
            }
            counts[c] += 1;
            if counts[..=c].iter().sum::<usize>() <= n {
                break;
            }
            counts[c] = 0;
            c += 1;
        }
        if c == k - 1 {
            break;
        }
    }
    // local refinement along pairwise transfers that stay on the simplex
    let mut h = 1.0 / n as f64;
    while h > 1e-12 {
        let mut improved = true;
        while improved {
            improved = false;
            for a in 0..k {
                for b in 0..k {
                    if a == b || best.1[b] < h {
                        continue;
                    }
                    let mut x = best.1.clone();
                    x[a] += h;
                    x[b] -= h;
                    let c = cost(&x);
                    if c < best.0 {
                        best = (c, x);
                        improved = true;
                    }
                }
            }
        }
        h /= 2.0;
    }
    best.0
}
