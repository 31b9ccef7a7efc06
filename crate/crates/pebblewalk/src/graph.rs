//! Port-labeled undirected graphs.
//!
//! Vertex ids exist for the harness only; agents see degrees, back-labels and pebbles.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;
use thiserror::Error;

/// One undirected edge with the port number at each endpoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub pu: usize,
    pub pv: usize,
}

impl Edge {
    pub fn new(u: usize, v: usize, pu: usize, pv: usize) -> Self {
        Edge { u, v, pu, pv }
    }

    /// Orientation with `u <= v`.
    fn normalized(self) -> Self {
        if self.u <= self.v {
            self
        } else {
            Edge { u: self.v, v: self.u, pu: self.pv, pv: self.pu }
        }
    }
}

/// Where a port leads: the neighbor, the port number there, and the edge index.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Half {
    pub to: usize,
    pub port: usize,
    pub edge: usize,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("edge {edge}: vertex {vertex} out of range (vertex_count {n})")]
    VertexOutOfRange { edge: usize, vertex: usize, n: usize },
    #[error("edge {edge}: self-loop at vertex {vertex}")]
    SelfLoop { edge: usize, vertex: usize },
    #[error("duplicate port {port} at vertex {vertex}")]
    DuplicatePort { vertex: usize, port: usize },
    #[error("port {port} at vertex {vertex} exceeds degree {degree}")]
    PortOutOfRange { vertex: usize, port: usize, degree: usize },
    #[error("{0}")]
    Precondition(String),
    #[error("syntax error: {0}")]
    Syntax(String),
}

/// A single invariant violation; `validate` collects these as data.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    VertexOutOfRange { edge: usize, vertex: usize },
    SelfLoop { edge: usize, vertex: usize },
    DuplicatePort { vertex: usize, port: usize },
    PortOutOfRange { vertex: usize, port: usize, degree: usize },
    MissingPort { vertex: usize, port: usize },
    Disconnected { components: usize },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::VertexOutOfRange { edge, vertex } => {
                write!(f, "edge {edge}: vertex {vertex} out of range")
            }
            Violation::SelfLoop { edge, vertex } => write!(f, "edge {edge}: self-loop at vertex {vertex}"),
            Violation::DuplicatePort { vertex, port } => write!(f, "duplicate port {port} at vertex {vertex}"),
            Violation::PortOutOfRange { vertex, port, degree } => {
                write!(f, "port {port} at vertex {vertex} exceeds degree {degree}")
            }
            Violation::MissingPort { vertex, port } => write!(f, "missing port {port} at vertex {vertex}"),
            Violation::Disconnected { components } => write!(f, "disconnected ({components} components)"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Local checks only (ranges, self-loops, port contiguity); connectivity is separate.
fn local_violations(n: usize, edges: &[Edge]) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut ports: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, e) in edges.iter().enumerate() {
        let mut ok = true;
        for w in [e.u, e.v] {
            if w >= n {
                out.push(Violation::VertexOutOfRange { edge: i, vertex: w });
                ok = false;
            }
        }
        if !ok {
            continue;
        }
        if e.u == e.v {
            out.push(Violation::SelfLoop { edge: i, vertex: e.u });
        }
        ports[e.u].push(e.pu);
        ports[e.v].push(e.pv);
    }
    for (w, ps) in ports.iter_mut().enumerate() {
        let deg = ps.len();
        ps.sort_unstable();
        let mut seen = BTreeSet::new();
        for &p in ps.iter() {
            if !seen.insert(p) {
                out.push(Violation::DuplicatePort { vertex: w, port: p });
            }
            if p >= deg {
                out.push(Violation::PortOutOfRange { vertex: w, port: p, degree: deg });
            }
        }
        for p in 0..deg {
            if !seen.contains(&p) {
                out.push(Violation::MissingPort { vertex: w, port: p });
            }
        }
    }
    out
}

fn component_count(n: usize, edges: &[Edge]) -> usize {
    let mut adj = vec![Vec::new(); n];
    for e in edges {
        if e.u < n && e.v < n {
            adj[e.u].push(e.v);
            adj[e.v].push(e.u);
        }
    }
    let mut seen = vec![false; n];
    let mut comps = 0;
    for s in 0..n {
        if seen[s] {
            continue;
        }
        comps += 1;
        seen[s] = true;
        let mut q = VecDeque::from([s]);
        while let Some(x) = q.pop_front() {
            for &y in &adj[x] {
                if !seen[y] {
                    seen[y] = true;
                    q.push_back(y);
                }
            }
        }
    }
    comps
}

/// Validate raw parts without building a graph.
pub fn validate_parts(n: usize, edges: &[Edge]) -> ValidationReport {
    let mut violations = local_violations(n, edges);
    let comps = component_count(n, edges);
    if comps > 1 {
        violations.push(Violation::Disconnected { components: comps });
    }
    ValidationReport { violations }
}

pub fn validate(g: &PortLabeledGraph) -> ValidationReport {
    validate_parts(g.n, &g.edges)
}

/// Undirected multigraph with locally contiguous port labels.
///
/// Edges are stored normalized (`u <= v`) and sorted by `(u, v, pu)`; an edge's
/// index in that order is its identity in walks and traces.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PortLabeledGraph {
    n: usize,
    edges: Vec<Edge>,
    rot: Vec<Vec<Half>>,
}

impl PortLabeledGraph {
    /// Builds a graph; rejects local invariant violations but not disconnection.
    pub fn new(n: usize, edges: Vec<Edge>) -> Result<Self, GraphError> {
        if let Some(v) = local_violations(n, &edges).into_iter().next() {
            return Err(match v {
                Violation::VertexOutOfRange { edge, vertex } => GraphError::VertexOutOfRange { edge, vertex, n },
                Violation::SelfLoop { edge, vertex } => GraphError::SelfLoop { edge, vertex },
                Violation::DuplicatePort { vertex, port } => GraphError::DuplicatePort { vertex, port },
                Violation::PortOutOfRange { vertex, port, degree } => {
                    GraphError::PortOutOfRange { vertex, port, degree }
                }
                Violation::MissingPort { vertex, port } => GraphError::PortOutOfRange { vertex, port, degree: port },
                Violation::Disconnected { .. } => unreachable!("local check"),
            });
        }
        let mut edges: Vec<Edge> = edges.into_iter().map(Edge::normalized).collect();
        edges.sort_unstable();
        let mut deg = vec![0usize; n];
        for e in &edges {
            deg[e.u] += 1;
            deg[e.v] += 1;
        }
        let mut rot: Vec<Vec<Half>> = deg.iter().map(|&d| vec![Half { to: 0, port: 0, edge: 0 }; d]).collect();
        for (i, e) in edges.iter().enumerate() {
            rot[e.u][e.pu] = Half { to: e.v, port: e.pv, edge: i };
            rot[e.v][e.pv] = Half { to: e.u, port: e.pu, edge: i };
        }
        Ok(PortLabeledGraph { n, edges, rot })
    }

    /// Builds an edge-symmetric graph from `(u, v, label)` triples.
    pub fn from_labeled(n: usize, edges: &[(usize, usize, usize)]) -> Result<Self, GraphError> {
        Self::new(n, edges.iter().map(|&(u, v, l)| Edge::new(u, v, l, l)).collect())
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn degree(&self, v: usize) -> usize {
        self.rot[v].len()
    }

    pub fn max_degree(&self) -> usize {
        self.rot.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn min_degree(&self) -> usize {
        self.rot.iter().map(Vec::len).min().unwrap_or(0)
    }

    /// Where port `port` of `v` leads.
    #[inline]
    pub fn half(&self, v: usize, port: usize) -> Half {
        self.rot[v][port]
    }

    pub fn is_connected(&self) -> bool {
        component_count(self.n, &self.edges) <= 1
    }

    pub fn is_cubic(&self) -> bool {
        self.rot.iter().all(|r| r.len() == 3)
    }

    pub fn is_edge_symmetric(&self) -> bool {
        self.edges.iter().all(|e| e.pu == e.pv)
    }

    /// Edge-symmetric and 3-regular.
    pub fn is_symmetric_cubic(&self) -> bool {
        self.is_cubic() && self.is_edge_symmetric()
    }

    /// Label of an edge in an edge-symmetric graph.
    pub fn label(&self, edge: usize) -> usize {
        self.edges[edge].pu
    }

    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.rot[v].iter().map(|h| h.to)
    }
}

/// Edge-symmetric labeled graph with degrees at most 3, used while assembling constructions.
///
/// Invariant: no vertex carries the same label twice.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PartialCubic {
    pub n: usize,
    pub edges: Vec<(usize, usize, usize)>,
}

impl PartialCubic {
    pub fn new(n: usize) -> Self {
        PartialCubic { n, edges: Vec::new() }
    }

    pub fn from_graph(g: &PortLabeledGraph) -> Result<Self, GraphError> {
        if !g.is_edge_symmetric() {
            return Err(GraphError::Precondition("graph is not edge-symmetric".into()));
        }
        Ok(PartialCubic { n: g.vertex_count(), edges: g.edges().iter().map(|e| (e.u, e.v, e.pu)).collect() })
    }

    pub fn add_vertex(&mut self) -> usize {
        self.n += 1;
        self.n - 1
    }

    pub fn add_edge(&mut self, u: usize, v: usize, label: usize) {
        self.edges.push((u, v, label));
    }

    /// Removes one edge `{u, v}` with the given label; returns whether it existed.
    pub fn remove_edge(&mut self, u: usize, v: usize, label: usize) -> bool {
        let pos = self
            .edges
            .iter()
            .position(|&(a, b, l)| l == label && ((a, b) == (u, v) || (a, b) == (v, u)));
        match pos {
            Some(i) => {
                self.edges.remove(i);
                true
            }
            None => false,
        }
    }

    /// Appends a disjoint copy; returns the vertex offset of the copy.
    pub fn append(&mut self, other: &PartialCubic) -> usize {
        let off = self.n;
        self.n += other.n;
        self.edges.extend(other.edges.iter().map(|&(u, v, l)| (u + off, v + off, l)));
        off
    }

    pub fn labels_at(&self, v: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .edges
            .iter()
            .filter_map(|&(a, b, l)| if a == v || b == v { Some(l) } else { None })
            .collect();
        out.sort_unstable();
        out
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n];
        for &(u, v, _) in &self.edges {
            d[u] += 1;
            d[v] += 1;
        }
        d
    }

    /// Checks labels in {0,1,2}, no self-loops, and label-distinctness at each vertex.
    pub fn check(&self) -> Result<(), GraphError> {
        let mut seen = vec![[false; 3]; self.n];
        for (i, &(u, v, l)) in self.edges.iter().enumerate() {
            if u >= self.n || v >= self.n {
                return Err(GraphError::VertexOutOfRange { edge: i, vertex: u.max(v), n: self.n });
            }
            if u == v {
                return Err(GraphError::SelfLoop { edge: i, vertex: u });
            }
            if l > 2 {
                return Err(GraphError::PortOutOfRange { vertex: u, port: l, degree: 3 });
            }
            for w in [u, v] {
                if seen[w][l] {
                    return Err(GraphError::DuplicatePort { vertex: w, port: l });
                }
                seen[w][l] = true;
            }
        }
        Ok(())
    }

    /// Converts a 3-regular result into a graph.
    pub fn finish(&self) -> Result<PortLabeledGraph, GraphError> {
        self.check()?;
        if let Some(v) = self.degrees().iter().position(|&d| d != 3) {
            return Err(GraphError::Precondition(format!("vertex {v} does not have degree 3")));
        }
        PortLabeledGraph::from_labeled(self.n, &self.edges)
    }
}

/// Which transformation produced a vertex map.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    Koucky,
    Extension,
    Gadget,
}

/// Original vertex to image vertices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct VertexMap {
    pub forward: Vec<Vec<usize>>,
    pub kind: MapKind,
}

impl VertexMap {
    /// Inverse lookup; `None` for vertices outside every image.
    pub fn inverse(&self, image_count: usize) -> Vec<Option<usize>> {
        let mut inv = vec![None; image_count];
        for (v, imgs) in self.forward.iter().enumerate() {
            for &w in imgs {
                inv[w] = Some(v);
            }
        }
        inv
    }
}

/// Replaces each vertex of degree d by a 3d-cycle (ports 0 forward, 1 backward) and
/// each edge by three label-2 cross edges at offsets 0, d, 2d.
///
/// The result is 3-regular; cycle edges carry 0 at one end and 1 at the other.
pub fn koucky_regularize(g: &PortLabeledGraph) -> Result<(PortLabeledGraph, VertexMap), GraphError> {
    let report = validate(g);
    if !report.is_valid() {
        return Err(GraphError::Precondition(format!("invalid input graph: {}", report.violations[0])));
    }
    if let Some(v) = (0..g.vertex_count()).find(|&v| g.degree(v) < 2) {
        return Err(GraphError::Precondition(format!(
            "vertex {v} has degree {}; regularization needs degree >= 2",
            g.degree(v)
        )));
    }
    let n = g.vertex_count();
    let mut offset = Vec::with_capacity(n);
    let mut total = 0;
    for v in 0..n {
        offset.push(total);
        total += 3 * g.degree(v);
    }
    let mut edges = Vec::with_capacity(total * 3 / 2);
    for (v, &base) in offset.iter().enumerate() {
        let len = 3 * g.degree(v);
        for i in 0..len {
            edges.push(Edge::new(base + i, base + (i + 1) % len, 0, 1));
        }
    }
    for e in g.edges() {
        let (du, dv) = (g.degree(e.u), g.degree(e.v));
        for k in 0..3 {
            edges.push(Edge::new(offset[e.u] + e.pu + k * du, offset[e.v] + e.pv + k * dv, 2, 2));
        }
    }
    let forward = (0..n).map(|v| (offset[v]..offset[v] + 3 * g.degree(v)).collect()).collect();
    Ok((PortLabeledGraph::new(total, edges)?, VertexMap { forward, kind: MapKind::Koucky }))
}

/// Two copies of `g`; each degree-2 vertex joined to its copy by its missing label.
pub fn regular_extension(g: &PartialCubic) -> Result<(PortLabeledGraph, VertexMap), GraphError> {
    g.check()?;
    let n = g.n;
    let mut out = PartialCubic::new(2 * n);
    for &(u, v, l) in &g.edges {
        out.add_edge(u, v, l);
        out.add_edge(u + n, v + n, l);
    }
    for (v, d) in g.degrees().into_iter().enumerate() {
        match d {
            3 => {}
            2 => {
                let labels = g.labels_at(v);
                let missing: Vec<usize> = (0..3).filter(|l| !labels.contains(l)).collect();
                if missing.len() != 1 {
                    return Err(GraphError::Precondition(format!("missing label at vertex {v} is not unique")));
                }
                out.add_edge(v, v + n, missing[0]);
            }
            _ => return Err(GraphError::Precondition(format!("vertex {v} has degree {d}, expected 2 or 3"))),
        }
    }
    let forward = (0..n).map(|v| vec![v, v + n]).collect();
    Ok((out.finish()?, VertexMap { forward, kind: MapKind::Extension }))
}

/// Generator families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GenKind {
    K4,
    Prism,
    Random3Regular { n: usize },
    DiamondGadget,
    /// Hamiltonian cycle plus `extra` random chords, randomly permuted ports.
    RandomGeneral { n: usize, extra: usize },
}

/// K4 with its unique 1-factorization as labels.
pub fn k4() -> PortLabeledGraph {
    PortLabeledGraph::from_labeled(4, &[(0, 1, 0), (2, 3, 0), (0, 2, 1), (1, 3, 1), (0, 3, 2), (1, 2, 2)])
        .expect("fixed graph")
}

/// Triangular prism, edge-symmetric.
pub fn prism() -> PortLabeledGraph {
    PortLabeledGraph::from_labeled(
        6,
        &[(0, 1, 0), (1, 2, 1), (2, 0, 2), (0, 3, 1), (1, 4, 2), (2, 5, 0), (3, 4, 0), (4, 5, 1), (5, 3, 2)],
    )
    .expect("fixed graph")
}

/// K4 minus the edge {0,1}; vertices 0 and 1 have degree 2.
pub fn diamond() -> PortLabeledGraph {
    PortLabeledGraph::new(
        4,
        vec![Edge::new(0, 2, 0, 0), Edge::new(0, 3, 1, 0), Edge::new(1, 2, 0, 1), Edge::new(1, 3, 1, 1), Edge::new(2, 3, 2, 2)],
    )
    .expect("fixed graph")
}

/// Cycle with port 0 forward and port 1 backward.
pub fn cycle(n: usize) -> PortLabeledGraph {
    assert!(n >= 3);
    PortLabeledGraph::new(n, (0..n).map(|i| Edge::new(i, (i + 1) % n, 0, 1)).collect()).expect("cycle")
}

/// Path 0-1-…-(n-1) with the smallest free port at each endpoint.
pub fn path(n: usize) -> PortLabeledGraph {
    let edges = (1..n).map(|i| Edge::new(i - 1, i, usize::from(i > 1), 0)).collect();
    PortLabeledGraph::new(n, edges).expect("path")
}

fn random_perfect_matching(n: usize, rng: &mut ChaCha8Rng, taken: &BTreeSet<(usize, usize)>) -> Option<Vec<(usize, usize)>> {
    for _ in 0..200 {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(rng);
        let m: Vec<(usize, usize)> = perm.chunks(2).map(|c| (c[0].min(c[1]), c[0].max(c[1]))).collect();
        if m.iter().all(|e| !taken.contains(e)) {
            return Some(m);
        }
    }
    None
}

/// Simple connected edge-symmetric cubic graph: label-0 matching {2i, 2i+1} plus two random matchings.
pub fn random_3regular(n: usize, seed: u64) -> Result<PortLabeledGraph, GraphError> {
    if n < 4 || n % 2 == 1 {
        return Err(GraphError::Precondition(format!("random_3regular needs even n >= 4, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..1000 {
        let mut taken: BTreeSet<(usize, usize)> = (0..n / 2).map(|i| (2 * i, 2 * i + 1)).collect();
        let Some(m1) = random_perfect_matching(n, &mut rng, &taken) else { continue };
        taken.extend(m1.iter().copied());
        let Some(m2) = random_perfect_matching(n, &mut rng, &taken) else { continue };
        let mut edges: Vec<(usize, usize, usize)> = (0..n / 2).map(|i| (2 * i, 2 * i + 1, 0)).collect();
        edges.extend(m1.iter().map(|&(a, b)| (a, b, 1)));
        edges.extend(m2.iter().map(|&(a, b)| (a, b, 2)));
        let g = PortLabeledGraph::from_labeled(n, &edges)?;
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(GraphError::Precondition(format!("no connected cubic sample found for n = {n}")))
}

/// Connected graph: Hamiltonian cycle plus `extra` distinct chords, ports permuted per vertex.
/// n = 1 is a single vertex; n = 2 is a double edge.
pub fn random_general(n: usize, extra: usize, seed: u64) -> Result<PortLabeledGraph, GraphError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs: Vec<(usize, usize)> = match n {
        0 => return Err(GraphError::Precondition("random_general needs n >= 1".into())),
        1 => Vec::new(),
        2 => vec![(0, 1), (0, 1)],
        _ => {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            (0..n).map(|i| (perm[i], perm[(i + 1) % n])).collect()
        }
    };
    if n >= 3 {
        let max_chords = n * (n - 1) / 2 - n;
        if extra > max_chords {
            return Err(GraphError::Precondition(format!("{extra} chords do not fit on {n} vertices")));
        }
        let mut present: BTreeSet<(usize, usize)> = pairs.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
        let mut added = 0;
        while added < extra {
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            if a != b && present.insert((a.min(b), a.max(b))) {
                pairs.push((a, b));
                added += 1;
            }
        }
    } else if extra > 0 {
        return Err(GraphError::Precondition(format!("no chords possible on {n} vertices")));
    }
    let mut deg = vec![0usize; n];
    for &(a, b) in &pairs {
        deg[a] += 1;
        deg[b] += 1;
    }
    let ports: Vec<Vec<usize>> = deg
        .iter()
        .map(|&d| {
            let mut p: Vec<usize> = (0..d).collect();
            p.shuffle(&mut rng);
            p
        })
        .collect();
    let mut next = vec![0usize; n];
    let edges = pairs
        .iter()
        .map(|&(a, b)| {
            let pa = ports[a][next[a]];
            next[a] += 1;
            let pb = ports[b][next[b]];
            next[b] += 1;
            Edge::new(a, b, pa, pb)
        })
        .collect();
    PortLabeledGraph::new(n, edges)
}

/// Deterministic in `(kind, seed)`; fixed kinds ignore the seed.
pub fn generate(kind: GenKind, seed: u64) -> Result<PortLabeledGraph, GraphError> {
    match kind {
        GenKind::K4 => Ok(k4()),
        GenKind::Prism => Ok(prism()),
        GenKind::Random3Regular { n } => random_3regular(n, seed),
        GenKind::DiamondGadget => Ok(diamond()),
        GenKind::RandomGeneral { n, extra } => random_general(n, extra, seed),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphDoc {
    vertex_count: usize,
    edges: Vec<Edge>,
}

/// Parses the canonical JSON document; invariant violations name the edge and vertex.
pub fn parse(bytes: &[u8]) -> Result<PortLabeledGraph, GraphError> {
    let doc: GraphDoc = serde_json::from_slice(bytes)
        .map_err(|e| GraphError::Syntax(format!("line {} column {}: {e}", e.line(), e.column())))?;
    PortLabeledGraph::new(doc.vertex_count, doc.edges)
}

/// Canonical document: one edge per line, sorted by `(u, v, pu)` with `u <= v`.
pub fn serialize(g: &PortLabeledGraph) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{{");
    let _ = writeln!(s, "  \"vertex_count\": {},", g.vertex_count());
    if g.edges().is_empty() {
        let _ = writeln!(s, "  \"edges\": []");
    } else {
        let _ = writeln!(s, "  \"edges\": [");
        for (i, e) in g.edges().iter().enumerate() {
            let comma = if i + 1 < g.edge_count() { "," } else { "" };
            let _ = writeln!(s, "    {{\"u\": {}, \"v\": {}, \"pu\": {}, \"pv\": {}}}{comma}", e.u, e.v, e.pu, e.pv);
        }
        let _ = writeln!(s, "  ]");
    }
    let _ = writeln!(s, "}}");
    s
}

/// DOT export with ports as tail/head labels; `highlight` vertices are filled.
pub fn to_dot(g: &PortLabeledGraph, highlight: &[usize]) -> String {
    let mut s = String::from("graph G {\n  node [shape=circle, fontsize=10];\n");
    for &v in highlight {
        let _ = writeln!(s, "  {v} [style=filled, fillcolor=lightblue];");
    }
    for e in g.edges() {
        let _ = writeln!(s, "  {} -- {} [taillabel=\"{}\", headlabel=\"{}\"];", e.u, e.v, e.pu, e.pv);
    }
    s.push_str("}\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k4_is_valid_cubic_symmetric() {
        let g = k4();
        assert!(validate(&g).is_valid());
        assert!(g.is_symmetric_cubic());
        assert_eq!(g.edge_count(), 6);
    }

    #[test]
    fn duplicate_port_reported() {
        let edges = vec![Edge::new(0, 1, 0, 0), Edge::new(0, 2, 0, 0), Edge::new(0, 3, 1, 0)];
        let r = validate_parts(4, &edges);
        assert!(r.violations.contains(&Violation::DuplicatePort { vertex: 0, port: 0 }));
    }

    #[test]
    fn disconnected_reported() {
        let edges = vec![Edge::new(0, 1, 0, 0), Edge::new(2, 3, 0, 0)];
        let r = validate_parts(4, &edges);
        assert_eq!(r.violations, vec![Violation::Disconnected { components: 2 }]);
    }

    #[test]
    fn koucky_shapes() {
        let c = cycle(4);
        let (r, map) = koucky_regularize(&c).unwrap();
        assert_eq!(map.forward[0].len(), 6);
        assert_eq!(r.vertex_count(), 24);
        assert!(r.is_cubic());
        assert!(validate(&r).is_valid());
        let cross = r.edges().iter().filter(|e| e.pu == 2).count();
        assert_eq!(cross, 3 * c.edge_count());
        let (r4, _) = koucky_regularize(&k4()).unwrap();
        assert_eq!(r4.vertex_count(), 36);
        assert!(r4.is_cubic());
    }

    #[test]
    fn koucky_rejects_leaves() {
        assert!(koucky_regularize(&path(3)).is_err());
    }

    #[test]
    fn extension_of_cubic_is_two_copies() {
        let (g, _) = regular_extension(&PartialCubic::from_graph(&k4()).unwrap()).unwrap();
        assert_eq!(g.vertex_count(), 8);
        assert_eq!(g.edge_count(), 12);
        assert!(!g.is_connected());
    }

    #[test]
    fn extension_of_square_is_cube() {
        let mut sq = PartialCubic::new(4);
        for i in 0..4 {
            sq.add_edge(i, (i + 1) % 4, i % 2);
        }
        let (g, _) = regular_extension(&sq).unwrap();
        assert!(g.is_symmetric_cubic());
        assert_eq!(g.vertex_count(), 8);
        let cross: Vec<_> = g.edges().iter().filter(|e| e.v == e.u + 4).collect();
        assert_eq!(cross.len(), 4);
        assert!(cross.iter().all(|e| e.pu == 2));
    }

    #[test]
    fn extension_fills_missing_label() {
        let mut p = PartialCubic::new(3);
        p.add_edge(0, 1, 0);
        p.add_edge(1, 2, 2);
        p.add_edge(2, 0, 1);
        // vertex 1 has {0,2}, so its copy edge is labeled 1
        let (g, _) = regular_extension(&p).unwrap();
        let e = g.edges().iter().find(|e| e.u == 1 && e.v == 4).unwrap();
        assert_eq!(e.pu, 1);
    }

    #[test]
    fn diamond_shape() {
        let d = diamond();
        assert_eq!(d.vertex_count(), 4);
        assert_eq!(d.edge_count(), 5);
        assert_eq!((0..4).filter(|&v| d.degree(v) == 2).count(), 2);
    }

    #[test]
    fn generate_is_deterministic() {
        let a = generate(GenKind::Random3Regular { n: 10 }, 1).unwrap();
        let b = generate(GenKind::Random3Regular { n: 10 }, 1).unwrap();
        assert_eq!(a, b);
        assert!(a.is_symmetric_cubic() && a.is_connected());
    }

    #[test]
    fn serialize_roundtrip_is_byte_identical() {
        let s = serialize(&k4());
        let g = parse(s.as_bytes()).unwrap();
        assert_eq!(serialize(&g), s);
    }

    #[test]
    fn parse_rejects_port_overflow() {
        let doc = r#"{"vertex_count": 4, "edges": [
            {"u":0,"v":1,"pu":0,"pv":0},{"u":0,"v":2,"pu":1,"pv":0},{"u":0,"v":3,"pu":3,"pv":0}]}"#;
        let err = parse(doc.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("vertex 0"), "{err}");
    }

    #[test]
    fn single_vertex_parses() {
        let g = parse(br#"{"vertex_count": 1, "edges": []}"#).unwrap();
        assert!(validate(&g).is_valid());
    }

    #[test]
    fn dot_has_port_labels() {
        let d = to_dot(&k4(), &[0]);
        assert!(d.contains("taillabel=\"0\""));
        assert_eq!(d.matches(" -- ").count(), 6);
    }
}
