//! Exploration and traversal sequences, universal-sequence certificates, and the
//! closed-walk and lifted-walk constructions.

use crate::corpus::{cubic_exhaustive, general_corpus, NamedGraph};
use crate::graph::{koucky_regularize, PortLabeledGraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::path::PathBuf;
use std::sync::{Mutex, OnceLock};
use thiserror::Error;

/// Walker vertex, walker entry label and transducer back-label.
type SearchKey = (u16, u16, u8);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SeqError {
    #[error("traversal label {label} at step {step} is not below degree {degree}")]
    LabelOutOfRange { step: usize, label: usize, degree: usize },
    #[error("offset {value} at position {pos} outside alphabet {alphabet:?}")]
    OutsideAlphabet { pos: usize, value: i64, alphabet: Alphabet },
    #[error("search budget exhausted at frontier depth {depth} after {nodes} nodes")]
    BudgetExhausted { depth: usize, nodes: u64 },
    #[error("provider cannot supply a prefix of length {requested} (has {available})")]
    ProviderTooShort { requested: usize, available: usize },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alphabet {
    /// {0,1,2}, for 3-regular graphs.
    Ternary,
    /// {-1,0,1}, for general graphs.
    Signed,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplorationSequence {
    pub offsets: Vec<i64>,
    pub alphabet: Alphabet,
}

impl ExplorationSequence {
    pub fn new(offsets: Vec<i64>, alphabet: Alphabet) -> Result<Self, SeqError> {
        let ok = |x: i64| match alphabet {
            Alphabet::Ternary => (0..=2).contains(&x),
            Alphabet::Signed => (-1..=1).contains(&x),
        };
        if let Some(pos) = offsets.iter().position(|&x| !ok(x)) {
            return Err(SeqError::OutsideAlphabet { pos, value: offsets[pos], alphabet });
        }
        Ok(ExplorationSequence { offsets, alphabet })
    }

    pub fn ternary(offsets: &[u8]) -> Self {
        ExplorationSequence { offsets: offsets.iter().map(|&x| x as i64).collect(), alphabet: Alphabet::Ternary }
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }
}

/// Absolute labels, followed in edge-symmetric graphs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraversalSequence {
    pub labels: Vec<usize>,
}

#[derive(Clone, Copy, Debug)]
pub enum SeqRef<'a> {
    Exploration(&'a ExplorationSequence),
    Traversal(&'a TraversalSequence),
}

/// A followed walk. `vertices[i]` is the position after `i` steps and
/// `back_labels[i]` the back-label there; `edges` lists actual traversals.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Walk {
    pub vertices: Vec<usize>,
    pub back_labels: Vec<usize>,
    pub edges: Vec<usize>,
    pub distinct: usize,
}

impl Walk {
    pub fn end(&self) -> usize {
        *self.vertices.last().expect("walk has a start")
    }

    pub fn is_closed(&self) -> bool {
        self.end() == self.vertices[0]
    }
}

/// Exit port for back-label `l` and offset `e` at a vertex of degree `d`.
#[inline]
pub fn exit_port(l: usize, e: i64, d: usize) -> usize {
    (l as i64 + e).rem_euclid(d as i64) as usize
}

/// Follows a sequence from `start` for at most `limit` steps.
/// Exploration semantics start with back-label 0; a degree-0 vertex makes every step a stay.
pub fn follow(g: &PortLabeledGraph, start: usize, seq: SeqRef<'_>, limit: usize) -> Result<Walk, SeqError> {
    let mut seen = vec![false; g.vertex_count()];
    seen[start] = true;
    let mut w = Walk { vertices: vec![start], back_labels: vec![0], edges: Vec::new(), distinct: 1 };
    let (mut v, mut l) = (start, 0usize);
    let len = match seq {
        SeqRef::Exploration(s) => s.offsets.len(),
        SeqRef::Traversal(t) => t.labels.len(),
    };
    for step in 0..len.min(limit) {
        let d = g.degree(v);
        if d > 0 {
            let port = match seq {
                SeqRef::Exploration(s) => exit_port(l, s.offsets[step], d),
                SeqRef::Traversal(t) => {
                    let p = t.labels[step];
                    if p >= d {
                        return Err(SeqError::LabelOutOfRange { step, label: p, degree: d });
                    }
                    p
                }
            };
            let h = g.half(v, port);
            v = h.to;
            l = h.port;
            w.edges.push(h.edge);
            if !seen[v] {
                seen[v] = true;
                w.distinct += 1;
            }
        }
        w.vertices.push(v);
        w.back_labels.push(l);
    }
    Ok(w)
}

/// Distinct vertices and end vertex of an offset walk, without recording it.
pub fn walk_summary<T: Copy + Into<i64>>(g: &PortLabeledGraph, start: usize, offsets: &[T]) -> (usize, usize) {
    let mut seen = vec![false; g.vertex_count()];
    seen[start] = true;
    let (mut v, mut l, mut distinct) = (start, 0usize, 1usize);
    for &e in offsets {
        let d = g.degree(v);
        if d == 0 {
            continue;
        }
        let h = g.half(v, exit_port(l, e.into(), d));
        v = h.to;
        l = h.port;
        if !seen[v] {
            seen[v] = true;
            distinct += 1;
        }
    }
    (distinct, v)
}

/// e_1..e_a, 0, -e_a, ..., -e_2 (mod 3); empty for an empty prefix.
pub fn closed_walk_sequence(prefix: &[u8]) -> Vec<u8> {
    if prefix.is_empty() {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(2 * prefix.len());
    out.extend_from_slice(prefix);
    out.push(0);
    out.extend(prefix[1..].iter().rev().map(|&e| (3 - e % 3) % 3));
    out
}

/// Absolute labels taken in a regularized graph by an offset stream.
///
/// Only the back-label matters: a 0-exit arrives on port 1, a 1-exit on port 0, a 2-exit on port 2.
pub fn regular_labels(offsets: &[u8]) -> Vec<u8> {
    let mut b = 0u8;
    offsets
        .iter()
        .map(|&e| {
            let l = (b + e) % 3;
            b = [1, 0, 2][l as usize];
            l
        })
        .collect()
}

/// The general-graph emission for a regularized label stream, starting with 0,0.
pub fn lift_labels(labels: &[u8]) -> Vec<i8> {
    let mut out = vec![0i8, 0];
    for &l in labels {
        match l {
            0 => out.extend_from_slice(&[1, 0]),
            1 => out.extend_from_slice(&[-1, 0]),
            _ => out.push(0),
        }
    }
    out
}

pub fn lift(offsets: &[u8]) -> Vec<i8> {
    lift_labels(&regular_labels(offsets))
}

/// Where the regularized walk disagreed with the lifted one.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LiftViolation {
    pub iteration: usize,
    pub reg_vertex: usize,
    pub lifted_vertex: usize,
    pub expected_back: usize,
    pub lifted_back: usize,
}

/// Co-simulates a 3-regular agent on the regularization of `g` with the lifted agent
/// on `g`, checking after every iteration that the lifted agent sits at the first
/// coordinate of the regularized position with back-label equal to its cycle index mod degree.
pub fn check_lift_invariants(g: &PortLabeledGraph, start: usize, reg_offsets: &[u8]) -> Result<usize, LiftViolation> {
    let (reg, map) = koucky_regularize(g).expect("lift check needs a graph with minimum degree 2");
    let inv = map.inverse(reg.vertex_count());
    let base: Vec<usize> = map.forward.iter().map(|f| f[0]).collect();
    let (mut rv, mut rb) = (base[start], 0usize);
    let (mut gv, mut gb) = (start, 0usize);
    let gstep = |gv: &mut usize, gb: &mut usize, e: i64| {
        let h = g.half(*gv, exit_port(*gb, e, g.degree(*gv)));
        *gv = h.to;
        *gb = h.port;
    };
    gstep(&mut gv, &mut gb, 0);
    gstep(&mut gv, &mut gb, 0);
    for (i, &e) in reg_offsets.iter().enumerate() {
        let l = (rb + e as usize) % 3;
        let h = reg.half(rv, l);
        rv = h.to;
        rb = h.port;
        match l {
            0 => {
                gstep(&mut gv, &mut gb, 1);
                gstep(&mut gv, &mut gb, 0);
            }
            1 => {
                gstep(&mut gv, &mut gb, -1);
                gstep(&mut gv, &mut gb, 0);
            }
            _ => gstep(&mut gv, &mut gb, 0),
        }
        let v = inv[rv].expect("every regularized vertex has a preimage");
        let expected_back = (rv - base[v]) % g.degree(v);
        if v != gv || expected_back != gb {
            return Err(LiftViolation { iteration: i + 1, reg_vertex: rv, lifted_vertex: gv, expected_back, lifted_back: gb });
        }
    }
    Ok(reg_offsets.len())
}

/// Sequence budget: target z, half-length a, generator configuration count.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorBudget {
    pub z: usize,
    pub a: usize,
    pub c_gen: u64,
}

impl GeneratorBudget {
    /// a = 12·z·c_gen + 1.
    pub fn nominal(z: usize, c_gen: u64) -> Self {
        GeneratorBudget { z, a: (12 * z as u64 * c_gen + 1) as usize, c_gen }
    }

    /// a = the provider's certified length; may be 0 when the empty prefix is certified.
    pub fn desk(z: usize, provider: &dyn UxsProvider) -> Self {
        GeneratorBudget { z, a: provider.available(), c_gen: provider.configuration_count() }
    }
}

/// Source of universal exploration sequence prefixes.
pub trait UxsProvider: Send + Sync {
    fn prefix(&self, len: usize) -> Result<Vec<u8>, SeqError>;
    fn configuration_count(&self) -> u64;
    /// Longest prefix this provider can supply.
    fn available(&self) -> usize;
    fn describe(&self) -> String;
}

fn take_prefix(offsets: &[u8], len: usize) -> Result<Vec<u8>, SeqError> {
    offsets
        .get(..len)
        .map(<[u8]>::to_vec)
        .ok_or(SeqError::ProviderTooShort { requested: len, available: offsets.len() })
}

/// Backed by a search certificate; the generator's configurations are its positions.
#[derive(Clone, Debug)]
pub struct CertifiedProvider(pub UxsCertificate);

impl UxsProvider for CertifiedProvider {
    fn prefix(&self, len: usize) -> Result<Vec<u8>, SeqError> {
        take_prefix(&self.0.offsets, len)
    }
    fn configuration_count(&self) -> u64 {
        self.0.offsets.len().max(1) as u64
    }
    fn available(&self) -> usize {
        self.0.offsets.len()
    }
    fn describe(&self) -> String {
        format!("certified:{}", self.0.corpus_descriptor)
    }
}

/// Externally supplied offsets.
#[derive(Clone, Debug)]
pub struct FileProvider {
    pub offsets: Vec<u8>,
    pub source: String,
}

impl UxsProvider for FileProvider {
    fn prefix(&self, len: usize) -> Result<Vec<u8>, SeqError> {
        take_prefix(&self.offsets, len)
    }
    fn configuration_count(&self) -> u64 {
        self.offsets.len().max(1) as u64
    }
    fn available(&self) -> usize {
        self.offsets.len()
    }
    fn describe(&self) -> String {
        format!("file:{}", self.source)
    }
}

/// Uncertified pseudo-random offsets; used only where no certificate is practical.
#[derive(Clone, Debug)]
pub struct SeededProvider {
    pub seed: u64,
    pub len: usize,
}

impl UxsProvider for SeededProvider {
    fn prefix(&self, len: usize) -> Result<Vec<u8>, SeqError> {
        if len > self.len {
            return Err(SeqError::ProviderTooShort { requested: len, available: self.len });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        Ok((0..len).map(|_| rng.gen_range(0..3u8)).collect())
    }
    fn configuration_count(&self) -> u64 {
        self.len.max(1) as u64
    }
    fn available(&self) -> usize {
        self.len
    }
    fn describe(&self) -> String {
        format!("seeded:{}:{}", self.seed, self.len)
    }
}

/// The doubled closed-walk sequence over the first `budget.a` provider offsets.
pub fn closed_walk_sequence_3regular(budget: &GeneratorBudget, provider: &dyn UxsProvider) -> Result<ExplorationSequence, SeqError> {
    Ok(ExplorationSequence::ternary(&closed_walk_sequence(&provider.prefix(budget.a)?)))
}

/// The lifted general-graph sequence of the doubled walk.
pub fn general_graph_sequence(budget: &GeneratorBudget, provider: &dyn UxsProvider) -> Result<ExplorationSequence, SeqError> {
    let doubled = closed_walk_sequence(&provider.prefix(budget.a)?);
    Ok(ExplorationSequence { offsets: lift(&doubled).into_iter().map(i64::from).collect(), alphabet: Alphabet::Signed })
}

/// A graph family against which universality is certified.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum CorpusDescriptor {
    /// Every edge-symmetric cubic graph on exactly `n` vertices; the sequence must visit all of them.
    CubicExhaustive { n: usize },
    /// The general corpus up to `max_n`; the lifted doubled walk must visit min(z, n) vertices.
    GeneralLifted { max_n: usize, z: usize, seed: u64 },
    /// A caller-supplied general family with its own name.
    NamedLifted { name: String, z: usize },
}

impl CorpusDescriptor {
    pub fn key(&self) -> String {
        match self {
            CorpusDescriptor::CubicExhaustive { n } => format!("cubic-exhaustive:n={n}"),
            CorpusDescriptor::GeneralLifted { max_n, z, seed } => format!("general-lifted:max_n={max_n}:z={z}:seed={seed}"),
            CorpusDescriptor::NamedLifted { name, z } => format!("named-lifted:{name}:z={z}"),
        }
    }

    pub fn is_lifted(&self) -> bool {
        !matches!(self, CorpusDescriptor::CubicExhaustive { .. })
    }

    /// Graphs of the family; `NamedLifted` has none of its own.
    pub fn graphs(&self) -> Vec<NamedGraph> {
        match self {
            CorpusDescriptor::CubicExhaustive { n } => cubic_exhaustive(*n)
                .into_iter()
                .enumerate()
                .map(|(i, g)| NamedGraph::new(format!("cubic-n{n}-{i}"), g))
                .collect(),
            CorpusDescriptor::GeneralLifted { max_n, seed, .. } => general_corpus(*max_n, *seed),
            CorpusDescriptor::NamedLifted { .. } => Vec::new(),
        }
    }

    /// Required distinct count on a graph with `n` vertices.
    pub fn target(&self, n: usize) -> usize {
        match self {
            CorpusDescriptor::CubicExhaustive { .. } => n,
            CorpusDescriptor::GeneralLifted { z, .. } | CorpusDescriptor::NamedLifted { z, .. } => (*z).min(n),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchStrategy {
    /// Iterative deepening with an admissible bound; returns a shortest certificate.
    ShortestFirst,
    /// Lookahead-greedy; for targets beyond exhaustive reach.
    Greedy,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UxsCertificate {
    pub n: usize,
    pub d: usize,
    pub corpus_descriptor: String,
    pub descriptor: CorpusDescriptor,
    pub strategy: SearchStrategy,
    pub offsets: Vec<u8>,
    pub verified: bool,
}

/// Per-graph outcome of a universality check.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GraphCoverage {
    pub name: String,
    pub n: usize,
    pub min_distinct: usize,
    pub closed: bool,
}

/// Graph name, prefix length and start vertex of a walk that fails to close.
type Counterexample = (String, usize, usize);

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct UniversalReport {
    pub success: bool,
    /// First failing (graph, start vertex, distinct count).
    pub first_failure: Option<(String, usize, usize)>,
    pub per_graph: Vec<GraphCoverage>,
}

/// Follows `offsets` from every start of every graph and requires `target(n)` distinct vertices.
pub fn verify_universal<T: Copy + Into<i64> + Sync>(
    offsets: &[T],
    corpus: &[NamedGraph],
    target: impl Fn(usize) -> usize + Sync,
) -> UniversalReport {
    use rayon::prelude::*;
    let per: Vec<(GraphCoverage, Option<Counterexample>)> = corpus
        .par_iter()
        .map(|ng| {
            let n = ng.graph.vertex_count();
            let mut cov = GraphCoverage { name: ng.name.clone(), n, min_distinct: usize::MAX, closed: true };
            let mut fail = None;
            for s in 0..n {
                let (distinct, end) = walk_summary(&ng.graph, s, offsets);
                cov.min_distinct = cov.min_distinct.min(distinct);
                cov.closed &= end == s;
                if distinct < target(n) && fail.is_none() {
                    fail = Some((ng.name.clone(), s, distinct));
                }
            }
            (cov, fail)
        })
        .collect();
    let first_failure = per.iter().find_map(|(_, f)| f.clone());
    UniversalReport { success: first_failure.is_none(), first_failure, per_graph: per.into_iter().map(|(c, _)| c).collect() }
}

/// The walk a certificate prefix induces on its family: the doubled prefix, lifted for general families.
pub fn certificate_walk(prefix: &[u8], lifted: bool) -> Vec<i64> {
    let doubled = closed_walk_sequence(prefix);
    if lifted {
        lift(&doubled).into_iter().map(i64::from).collect()
    } else {
        doubled.into_iter().map(i64::from).collect()
    }
}

/// Re-checks a prefix against an explicit family; coverage and closure are both required.
pub fn verify_prefix(prefix: &[u8], descriptor: &CorpusDescriptor, corpus: &[NamedGraph]) -> UniversalReport {
    let walk = certificate_walk(prefix, descriptor.is_lifted());
    let mut rep = verify_universal(&walk, corpus, |n| descriptor.target(n));
    if let Some(c) = rep.per_graph.iter().find(|c| !c.closed) {
        rep.success = false;
        rep.first_failure.get_or_insert((c.name.clone(), 0, c.min_distinct));
    }
    rep
}

/// Visited set over at most 256 vertices.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
struct Seen([u64; 4]);

impl Seen {
    fn single(v: usize) -> Self {
        let mut s = Seen([0; 4]);
        s.insert(v);
        s
    }
    #[inline]
    fn insert(&mut self, v: usize) {
        self.0[v >> 6] |= 1 << (v & 63);
    }
    #[inline]
    fn count_ones(&self) -> u32 {
        self.0.iter().map(|w| w.count_ones()).sum()
    }
    fn has_outside(&self, other: &Seen) -> bool {
        self.0.iter().zip(&other.0).any(|(a, b)| a & !b != 0)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
struct Walker {
    v: u16,
    l: u16,
    seen: Seen,
}

struct Instance<'a> {
    g: &'a PortLabeledGraph,
    target: u32,
}

/// Search state: unfinished walkers plus the transducer back-label (lifted families only).
#[derive(Clone)]
struct Node {
    walkers: Vec<Walker>,
    idx: Vec<u32>,
    b: u8,
}

struct Searcher<'a> {
    inst: Vec<Instance<'a>>,
    lifted: bool,
}

impl<'a> Searcher<'a> {
    fn new(corpus: &'a [NamedGraph], descriptor: &CorpusDescriptor) -> Result<(Self, Node), SeqError> {
        let lifted = descriptor.is_lifted();
        let mut inst = Vec::new();
        let mut node = Node { walkers: Vec::new(), idx: Vec::new(), b: 0 };
        for ng in corpus {
            let n = ng.graph.vertex_count();
            if n > 256 {
                return Err(SeqError::Invalid(format!("search supports n <= 256, got {n}")));
            }
            if !lifted && !ng.graph.is_cubic() {
                return Err(SeqError::Invalid(format!("{} is not cubic", ng.name)));
            }
            for s in 0..n {
                inst.push(Instance { g: &ng.graph, target: descriptor.target(n) as u32 });
                node.walkers.push(Walker { v: s as u16, l: 0, seen: Seen::single(s) });
                node.idx.push((inst.len() - 1) as u32);
            }
        }
        let me = Searcher { inst, lifted };
        if lifted {
            for k in 0..node.walkers.len() {
                let g = me.inst[node.idx[k] as usize].g;
                let w = &mut node.walkers[k];
                Self::advance(g, w, 0);
                Self::advance(g, w, 0);
            }
        }
        me.prune(&mut node);
        Ok((me, node))
    }

    #[inline]
    fn advance(g: &PortLabeledGraph, w: &mut Walker, e: i64) {
        let d = g.degree(w.v as usize);
        if d == 0 {
            return;
        }
        let h = g.half(w.v as usize, exit_port(w.l as usize, e, d));
        w.v = h.to as u16;
        w.l = h.port as u16;
        w.seen.insert(h.to);
    }

    fn prune(&self, node: &mut Node) {
        let mut k = 0;
        while k < node.walkers.len() {
            if node.walkers[k].seen.count_ones() >= self.inst[node.idx[k] as usize].target {
                node.walkers.swap_remove(k);
                node.idx.swap_remove(k);
            } else {
                k += 1;
            }
        }
    }

    fn child(&self, node: &Node, e: u8) -> Node {
        let mut c = node.clone();
        if self.lifted {
            let l = (node.b + e) % 3;
            c.b = [1, 0, 2][l as usize];
            let emit: &[i64] = match l {
                0 => &[1, 0],
                1 => &[-1, 0],
                _ => &[0],
            };
            for k in 0..c.walkers.len() {
                let g = self.inst[c.idx[k] as usize].g;
                for &x in emit {
                    Self::advance(g, &mut c.walkers[k], x);
                }
            }
        } else {
            for k in 0..c.walkers.len() {
                let g = self.inst[c.idx[k] as usize].g;
                Self::advance(g, &mut c.walkers[k], e as i64);
            }
        }
        self.prune(&mut c);
        c
    }

    /// Each symbol adds at most one vertex per walker, so the largest deficit is admissible.
    fn h(&self, node: &Node) -> usize {
        node.walkers
            .iter()
            .zip(&node.idx)
            .map(|(w, &i)| (self.inst[i as usize].target - w.seen.count_ones()) as usize)
            .max()
            .unwrap_or(0)
    }

    /// Shortest symbol string that takes the neediest walker to an unseen vertex.
    /// Any port can be forced, so one always exists in a connected graph.
    fn escape(&self, node: &Node) -> Vec<u8> {
        let k = (0..node.walkers.len())
            .max_by_key(|&k| (self.inst[node.idx[k] as usize].target - node.walkers[k].seen.count_ones(), std::cmp::Reverse(k)))
            .expect("called with unfinished walkers");
        let g = self.inst[node.idx[k] as usize].g;
        let seen = node.walkers[k].seen;
        let start = (node.walkers[k], node.b);
        let mut prev: HashMap<SearchKey, (SearchKey, u8)> = HashMap::new();
        let mut queue = std::collections::VecDeque::from([start]);
        let skey = |w: &Walker, b: u8| (w.v, w.l, b);
        prev.insert(skey(&start.0, start.1), (skey(&start.0, start.1), 3));
        while let Some((w, b)) = queue.pop_front() {
            for e in 0..3u8 {
                let mut w2 = w;
                let b2 = if self.lifted {
                    let l = (b + e) % 3;
                    let emit: &[i64] = match l {
                        0 => &[1, 0],
                        1 => &[-1, 0],
                        _ => &[0],
                    };
                    for &x in emit {
                        Self::advance(g, &mut w2, x);
                    }
                    [1, 0, 2][l as usize]
                } else {
                    Self::advance(g, &mut w2, e as i64);
                    b
                };
                let key = skey(&w2, b2);
                if prev.contains_key(&key) {
                    continue;
                }
                prev.insert(key, (skey(&w, b), e));
                if w2.seen.has_outside(&seen) {
                    let mut path = Vec::new();
                    let mut cur = key;
                    while cur != skey(&start.0, start.1) {
                        let (p, e) = prev[&cur];
                        path.push(e);
                        cur = p;
                    }
                    path.reverse();
                    return path;
                }
                queue.push_back((Walker { seen, ..w2 }, b2));
            }
        }
        unreachable!("graph is connected")
    }

    fn gain(&self, node: &Node) -> u64 {
        node.walkers.iter().map(|w| w.seen.count_ones() as u64).sum::<u64>() + 1000 * (self.inst.len() - node.walkers.len()) as u64
    }

    fn key(node: &Node) -> (u64, u64) {
        let mut h1 = DefaultHasher::new();
        let mut h2 = DefaultHasher::new();
        0xA5u8.hash(&mut h2);
        for (w, i) in node.walkers.iter().zip(&node.idx) {
            (w, i).hash(&mut h1);
            (i, w).hash(&mut h2);
        }
        node.b.hash(&mut h1);
        node.b.hash(&mut h2);
        (h1.finish(), h2.finish())
    }
}

/// Shortest-first search for a prefix certified on the described family.
pub fn find_uxs_bruteforce(n: usize, d: usize, descriptor: &CorpusDescriptor, budget: u64) -> Result<UxsCertificate, SeqError> {
    search_certificate(n, d, descriptor, SearchStrategy::ShortestFirst, budget)
}

fn cache() -> &'static Mutex<HashMap<String, UxsCertificate>> {
    static CACHE: OnceLock<Mutex<HashMap<String, UxsCertificate>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Environment variable naming an on-disk certificate cache directory.
pub const CACHE_ENV: &str = "PEBBLEWALK_CACHE_DIR";

fn cache_file(key: &str) -> Option<PathBuf> {
    let dir = std::env::var_os(CACHE_ENV)?;
    let name: String = key.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect();
    Some(PathBuf::from(dir).join(format!("{name}.json")))
}

/// Searches (or recalls) a certificate; the result is re-verified before being returned.
pub fn search_certificate(
    n: usize,
    d: usize,
    descriptor: &CorpusDescriptor,
    strategy: SearchStrategy,
    budget: u64,
) -> Result<UxsCertificate, SeqError> {
    if d != 3 {
        return Err(SeqError::Invalid(format!("only d = 3 is supported, got {d}")));
    }
    let corpus = descriptor.graphs();
    if let CorpusDescriptor::CubicExhaustive { n: dn } = descriptor {
        if *dn != n {
            return Err(SeqError::Invalid(format!("descriptor is for n = {dn}, asked for n = {n}")));
        }
    }
    search_on(n, descriptor, &corpus, strategy, budget)
}

/// Like [`search_certificate`] over an explicit family.
pub fn search_on(
    n: usize,
    descriptor: &CorpusDescriptor,
    corpus: &[NamedGraph],
    strategy: SearchStrategy,
    budget: u64,
) -> Result<UxsCertificate, SeqError> {
    let key = format!("{n}:3:{}:{strategy:?}", descriptor.key());
    if let Some(c) = cache().lock().expect("cache lock").get(&key) {
        return Ok(c.clone());
    }
    if let Some(path) = cache_file(&key) {
        if let Ok(bytes) = std::fs::read(&path) {
            if let Ok(c) = serde_json::from_slice::<UxsCertificate>(&bytes) {
                if c.verified && verify_prefix(&c.offsets, descriptor, corpus).success {
                    cache().lock().expect("cache lock").insert(key, c.clone());
                    return Ok(c);
                }
            }
        }
    }
    let offsets = match strategy {
        SearchStrategy::ShortestFirst => shortest_first(corpus, descriptor, budget)?,
        SearchStrategy::Greedy => greedy(corpus, descriptor, budget)?,
    };
    let verified = verify_prefix(&offsets, descriptor, corpus).success;
    if !verified {
        return Err(SeqError::Invalid("search result failed re-verification".into()));
    }
    let cert = UxsCertificate { n, d: 3, corpus_descriptor: descriptor.key(), descriptor: descriptor.clone(), strategy, offsets, verified };
    if let Some(path) = cache_file(&key) {
        if let Ok(json) = serde_json::to_vec_pretty(&cert) {
            let _ = std::fs::create_dir_all(path.parent().expect("file in dir"));
            let _ = std::fs::write(path, json);
        }
    }
    cache().lock().expect("cache lock").insert(key, cert.clone());
    Ok(cert)
}

fn shortest_first(corpus: &[NamedGraph], descriptor: &CorpusDescriptor, budget: u64) -> Result<Vec<u8>, SeqError> {
    let (s, root) = Searcher::new(corpus, descriptor)?;
    // remaining depth already searched without success, per state
    let mut table: HashMap<(u64, u64), usize> = HashMap::new();
    let mut nodes = 0u64;
    let mut bound = s.h(&root);
    let mut path = Vec::new();
    fn dfs(
        s: &Searcher<'_>,
        node: &Node,
        rem: usize,
        path: &mut Vec<u8>,
        table: &mut HashMap<(u64, u64), usize>,
        nodes: &mut u64,
        budget: u64,
    ) -> Option<bool> {
        if node.walkers.is_empty() {
            return Some(true);
        }
        if s.h(node) > rem {
            return Some(false);
        }
        let key = Searcher::key(node);
        if table.get(&key).is_some_and(|&r| r >= rem) {
            return Some(false);
        }
        *nodes += 1;
        if *nodes > budget {
            return None;
        }
        for e in 0..3u8 {
            let c = s.child(node, e);
            path.push(e);
            if dfs(s, &c, rem - 1, path, table, nodes, budget)? {
                return Some(true);
            }
            path.pop();
        }
        table.insert(key, rem);
        Some(false)
    }
    loop {
        match dfs(&s, &root, bound, &mut path, &mut table, &mut nodes, budget) {
            Some(true) => return Ok(path),
            Some(false) => bound += 1,
            None => return Err(SeqError::BudgetExhausted { depth: bound, nodes }),
        }
    }
}

/// Lookahead-greedy: pick the symbol whose best depth-3 continuation gains most; `budget` caps length.
fn greedy(corpus: &[NamedGraph], descriptor: &CorpusDescriptor, budget: u64) -> Result<Vec<u8>, SeqError> {
    const LOOKAHEAD: usize = 3;
    let (s, mut node) = Searcher::new(corpus, descriptor)?;
    let mut out = Vec::new();
    fn best(s: &Searcher<'_>, node: &Node, depth: usize) -> u64 {
        // cumulative along the path, so earlier gains win over deferred ones
        let here = s.gain(node);
        if depth == 0 || node.walkers.is_empty() {
            return here * (depth as u64 + 1);
        }
        here + (0..3u8).map(|e| best(s, &s.child(node, e), depth - 1)).max().unwrap_or(0)
    }
    let mut idle = 0usize;
    while !node.walkers.is_empty() {
        if out.len() as u64 >= budget {
            return Err(SeqError::BudgetExhausted { depth: out.len(), nodes: out.len() as u64 });
        }
        let now = s.gain(&node);
        let flat = now * LOOKAHEAD as u64;
        let scored: Vec<(u64, u8)> = (0..3u8).map(|e| (best(&s, &s.child(&node, e), LOOKAHEAD - 1), e)).collect();
        let top = scored.iter().map(|x| x.0).max().unwrap_or(0);
        let step = if top > flat && idle < LOOKAHEAD {
            vec![scored.iter().find(|x| x.0 == top).map(|x| x.1).unwrap_or(0)]
        } else {
            s.escape(&node)
        };
        for e in step {
            node = s.child(&node, e);
            out.push(e);
        }
        // no real gain for LOOKAHEAD symbols forces an escape next round
        idle = if s.gain(&node) > now { 0 } else { idle + 1 };
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{k4, path, prism};

    #[test]
    fn exit_port_arithmetic() {
        assert_eq!(exit_port(1, 2, 3), 0);
        assert_eq!(exit_port(0, -1, 4), 3);
    }

    #[test]
    fn zero_offsets_oscillate() {
        let g = prism();
        let s = ExplorationSequence::ternary(&[0; 9]);
        let w = follow(&g, 0, SeqRef::Exploration(&s), usize::MAX).unwrap();
        assert_eq!(w.distinct, 2);
    }

    #[test]
    fn ones_explore_a_path() {
        let g = path(4);
        let s = ExplorationSequence::ternary(&[1; 8]);
        for start in 0..4 {
            let w = follow(&g, start, SeqRef::Exploration(&s), usize::MAX).unwrap();
            assert_eq!(w.distinct, 4);
        }
    }

    #[test]
    fn traversal_label_checked() {
        let t = TraversalSequence { labels: vec![0, 3] };
        assert!(matches!(follow(&k4(), 0, SeqRef::Traversal(&t), 10), Err(SeqError::LabelOutOfRange { step: 1, .. })));
    }

    #[test]
    fn closed_walk_formula() {
        assert_eq!(closed_walk_sequence(&[1, 2]), vec![1, 2, 0, 1]);
        assert_eq!(closed_walk_sequence(&[0]), vec![0, 0]);
    }

    #[test]
    fn lift_mapping() {
        assert_eq!(lift_labels(&[0, 1, 2]), vec![0, 0, 1, 0, -1, 0, 0]);
        assert_eq!(lift_labels(&[]), vec![0, 0]);
    }

    #[test]
    fn transducer_tracks_regularized_labels() {
        // oracle: walk the actual regularized graph and read off the exit ports
        let g = crate::graph::random_general(7, 3, 5).unwrap();
        let (reg, _) = koucky_regularize(&g).unwrap();
        let offsets: Vec<u8> = (0..200u32).map(|i| ((i * 7 + i / 3) % 3) as u8).collect();
        let (mut v, mut l) = (0usize, 0usize);
        let mut ports = Vec::new();
        for &e in &offsets {
            let p = (l + e as usize) % 3;
            ports.push(p as u8);
            let h = reg.half(v, p);
            v = h.to;
            l = h.port;
        }
        assert_eq!(regular_labels(&offsets), ports);
    }

    #[test]
    fn lift_invariants_hold() {
        let g = crate::graph::random_general(9, 4, 2).unwrap();
        let offsets: Vec<u8> = (0..300u32).map(|i| ((i * i + 1) % 3) as u8).collect();
        for s in 0..9 {
            assert_eq!(check_lift_invariants(&g, s, &offsets), Ok(300));
        }
    }

    #[test]
    fn full_cycle_visits_all_neighbors() {
        let g = crate::graph::random_general(8, 6, 1).unwrap();
        let v = 3;
        let d = g.degree(v);
        // 3d label-0 steps walk the whole vertex cycle of v
        let labels = vec![0u8; 3 * d];
        let offsets = lift_labels(&labels);
        let mut seen = std::collections::BTreeSet::new();
        let (mut x, mut l) = (v, 0usize);
        for e in offsets {
            let h = g.half(x, exit_port(l, e as i64, g.degree(x)));
            x = h.to;
            l = h.port;
            seen.insert(x);
        }
        for w in g.neighbors(v) {
            assert!(seen.contains(&w));
        }
    }

    #[test]
    fn k4_certificate_and_cache() {
        let desc = CorpusDescriptor::CubicExhaustive { n: 4 };
        let c = find_uxs_bruteforce(4, 3, &desc, 1_000_000).unwrap();
        assert!(c.verified);
        let again = find_uxs_bruteforce(4, 3, &desc, 1_000_000).unwrap();
        assert_eq!(c, again);
        let rep = verify_prefix(&c.offsets, &desc, &desc.graphs());
        assert!(rep.success);
    }

    #[test]
    fn single_vertex_needs_nothing() {
        let g = crate::graph::random_general(1, 0, 0).unwrap();
        let corpus = vec![NamedGraph::new("one", g)];
        let desc = CorpusDescriptor::NamedLifted { name: "one".into(), z: 4 };
        let c = search_on(1, &desc, &corpus, SearchStrategy::ShortestFirst, 10).unwrap();
        assert!(c.offsets.is_empty() && c.verified);
    }

    #[test]
    fn all_zero_fails_universality() {
        let corpus = vec![NamedGraph::new("k4", k4())];
        let rep = verify_universal(&[0i64; 12], &corpus, |n| n);
        assert!(!rep.success);
        assert_eq!(rep.first_failure.unwrap().2, 2);
    }

    #[test]
    fn ones_are_universal_for_small_trees() {
        for n in 2..=6 {
            let corpus = vec![NamedGraph::new("path", path(n))];
            let ones = vec![1i64; 2 * n];
            assert!(verify_universal(&ones, &corpus, |m| m).success);
        }
    }
}
