//! Lower-bound machinery: certified non-cooperative traps, 1-barriers, gadget
//! substitution, macro traces, derived macro agents, r-barriers, trap assembly and
//! the pigeonhole verifiers that certify all of them on finite probes.
//!
//! Every graph here is edge-symmetric and 3-regular. Agents are pebble-free
//! cooperating agents whose tables are keyed at degree 3.

use crate::agent::{
    AgentConf, AgentSpec, CoopAgent, CoopKey, CooperativeAgentSpec, Move, Observation, Action, Slot,
};
use crate::corpus::cubic_exhaustive_upto;
use crate::graph::{k4, prism, random_3regular, regular_extension, GraphError, MapKind, PartialCubic, PortLabeledGraph, VertexMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, VecDeque};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TrapError {
    #[error("no certified non-cooperative trap within {0} candidate graphs")]
    SearchExhausted(usize),
    #[error("undefined transition for agent {agent}: {key}")]
    Undefined { agent: usize, key: String },
    #[error("{0} configurations exceed the cap of {1}")]
    CapExceeded(usize, usize),
    #[error("step cap of {0} reached before the run became periodic")]
    StepCap(u64),
    #[error("macro transition is not base-independent: {0}")]
    NotDeterministic(String),
    #[error("precondition: {0}")]
    Precondition(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("{0}")]
    Document(String),
}

/// Caps that turn desk-scale infeasibility into an explicit verdict.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrapConfig {
    pub max_alpha: usize,
    /// Candidate graphs tried by the trap search.
    pub search_budget: usize,
    /// Steps per simulated run before giving up.
    pub step_cap: u64,
    /// Attach verifier evidence to every barrier built.
    pub verify: bool,
}

impl Default for TrapConfig {
    fn default() -> Self {
        TrapConfig { max_alpha: 64, search_budget: 400, step_cap: 4_000_000, verify: true }
    }
}

// ---------------------------------------------------------------------------
// Agents

/// Every visible vector for agent `i` given the state counts of all agents.
fn visible_vectors(counts: &[usize], i: usize) -> Vec<Vec<Option<usize>>> {
    let mut out = vec![Vec::new()];
    for (j, &c) in counts.iter().enumerate() {
        if j == i {
            continue;
        }
        out = out
            .into_iter()
            .flat_map(|v| {
                (0..=c).map(move |x| {
                    let mut w = v.clone();
                    w.push(x.checked_sub(1));
                    w
                })
            })
            .collect();
    }
    out
}

/// Agents that ignore each other: `rules[i][state][back] = (next, move)`.
pub fn blind_agents(rules: &[Vec<[(usize, Move); 3]>]) -> CooperativeAgentSpec {
    let counts: Vec<usize> = rules.iter().map(Vec::len).collect();
    let agents = rules
        .iter()
        .enumerate()
        .map(|(i, rule)| {
            let mut table = HashMap::new();
            for visible in visible_vectors(&counts, i) {
                for (state, row) in rule.iter().enumerate() {
                    for (back, &(next, mv)) in row.iter().enumerate() {
                        table.insert(CoopKey { state, visible: visible.clone(), degree: 3, back }, (next, mv));
                    }
                }
            }
            CoopAgent { states: (0..rule.len()).map(|s| format!("q{s}")).collect(), halting: vec![false; rule.len()], start: 0, table }
        })
        .collect();
    CooperativeAgentSpec { agents }
}

/// One agent leaving by port 0 forever.
pub fn oscillator() -> CooperativeAgentSpec {
    blind_agents(&[vec![[(0, Move::Port(0)); 3]]])
}

/// Every one-state agent on cubic graphs: exit port as a function of the back-label.
pub fn one_state_agents() -> Vec<CooperativeAgentSpec> {
    let mut out = Vec::new();
    for code in 0..27 {
        let ports = [code % 3, code / 3 % 3, code / 9];
        out.push(blind_agents(&[vec![[0, 1, 2].map(|b| (0, Move::Port(ports[b])))]]));
    }
    out
}

/// Seeded agents with `states` states each whose moves depend on who is co-located.
pub fn random_cooperative(k: usize, states: usize, seed: u64) -> CooperativeAgentSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts = vec![states; k];
    let agents = (0..k)
        .map(|i| {
            let mut table = HashMap::new();
            for visible in visible_vectors(&counts, i) {
                for state in 0..states {
                    for back in 0..3 {
                        table.insert(CoopKey { state, visible: visible.clone(), degree: 3, back }, (rng.gen_range(0..states), Move::Port(rng.gen_range(0..3))));
                    }
                }
            }
            CoopAgent { states: (0..states).map(|s| format!("q{s}")).collect(), halting: vec![false; states], start: 0, table }
        })
        .collect();
    CooperativeAgentSpec { agents }
}

/// The agent as it behaves alone: rows whose visible vector is empty.
pub fn solo_projection(a: &CoopAgent, k: usize) -> AgentSpec {
    let mut spec = AgentSpec::new(a.states.clone(), a.halting.clone(), a.start, 0);
    let alone = vec![None; k.saturating_sub(1)];
    for state in 0..a.states.len() {
        for back in 0..3 {
            if let Some(&(next, mv)) = a.table.get(&CoopKey { state, visible: alone.clone(), degree: 3, back }) {
                spec.table.insert(
                    Observation { state, degree: 3, back, carried: 0, at_vertex: 0 },
                    Action { state: next, mv, carried: 0, at_vertex: 0 },
                );
            }
        }
    }
    spec
}

/// The state closure: each agent alone, once per starting state.
pub fn state_closure(agents: &CooperativeAgentSpec) -> Vec<AgentSpec> {
    let k = agents.len();
    agents
        .agents
        .iter()
        .flat_map(|a| {
            let base = solo_projection(a, k);
            (0..a.states.len()).map(move |s| AgentSpec { start: s, ..base.clone() })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoopRowDoc {
    pub state: String,
    /// States of the other agents in index order; `null` entries mean elsewhere.
    /// Omitted means every visible vector.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visible: Option<Vec<Option<String>>>,
    pub back: Slot,
    pub next: String,
    #[serde(rename = "move")]
    pub mv: Move,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoopAgentDoc {
    pub states: Vec<String>,
    #[serde(default)]
    pub halting: Vec<String>,
    pub start: String,
    pub transitions: Vec<CoopRowDoc>,
}

/// File format for cooperating agents on cubic graphs. Later rows override earlier ones.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoopAgentsDoc {
    pub agents: Vec<CoopAgentDoc>,
}

impl CoopAgentsDoc {
    pub fn load(&self) -> Result<CooperativeAgentSpec, TrapError> {
        let counts: Vec<usize> = self.agents.iter().map(|a| a.states.len()).collect();
        let index = |a: &CoopAgentDoc, s: &str| {
            a.states.iter().position(|x| x == s).ok_or_else(|| TrapError::Document(format!("unknown state `{s}`")))
        };
        let mut agents = Vec::new();
        for (i, doc) in self.agents.iter().enumerate() {
            let mut table = HashMap::new();
            for h in &doc.halting {
                index(doc, h)?;
            }
            for row in &doc.transitions {
                let state = index(doc, &row.state)?;
                let next = index(doc, &row.next)?;
                if matches!(row.mv, Move::Port(p) if p >= 3) {
                    return Err(TrapError::Document(format!("agent {i}: port out of range in {row:?}")));
                }
                let visibles = match &row.visible {
                    None => visible_vectors(&counts, i),
                    Some(v) => {
                        if v.len() + 1 != self.agents.len() {
                            return Err(TrapError::Document(format!("agent {i}: visible vector needs {} entries", self.agents.len() - 1)));
                        }
                        let others: Vec<usize> = (0..self.agents.len()).filter(|&j| j != i).collect();
                        let mut out = Vec::new();
                        for (slot, &j) in v.iter().zip(&others) {
                            out.push(match slot {
                                None => None,
                                Some(s) => Some(index(&self.agents[j], s)?),
                            });
                        }
                        vec![out]
                    }
                };
                let backs: Vec<usize> = match row.back {
                    Slot::Exact(b) if b < 3 => vec![b],
                    Slot::Exact(b) => return Err(TrapError::Document(format!("agent {i}: back-label {b} on a cubic graph"))),
                    Slot::Any(_) => vec![0, 1, 2],
                };
                for visible in visibles {
                    for &back in &backs {
                        table.insert(CoopKey { state, visible: visible.clone(), degree: 3, back }, (next, row.mv));
                    }
                }
            }
            agents.push(CoopAgent {
                states: doc.states.clone(),
                halting: doc.states.iter().map(|s| doc.halting.contains(s)).collect(),
                start: index(doc, &doc.start)?,
                table,
            });
        }
        Ok(CooperativeAgentSpec { agents })
    }

    pub fn from_spec(spec: &CooperativeAgentSpec) -> Self {
        let agents = spec
            .agents
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let others: Vec<&CoopAgent> = spec.agents.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, b)| b).collect();
                let mut rows: Vec<(&CoopKey, &(usize, Move))> = a.table.iter().collect();
                rows.sort_by(|x, y| x.0.cmp(y.0));
                CoopAgentDoc {
                    states: a.states.clone(),
                    halting: a.states.iter().zip(&a.halting).filter(|(_, &h)| h).map(|(s, _)| s.clone()).collect(),
                    start: a.states[a.start].clone(),
                    transitions: rows
                        .into_iter()
                        .map(|(key, &(next, mv))| CoopRowDoc {
                            state: a.states[key.state].clone(),
                            visible: Some(key.visible.iter().zip(&others).map(|(v, b)| v.map(|s| b.states[s].clone())).collect()),
                            back: Slot::Exact(key.back),
                            next: a.states[next].clone(),
                            mv,
                        })
                        .collect(),
                }
            })
            .collect();
        CoopAgentsDoc { agents }
    }
}

// ---------------------------------------------------------------------------
// Lockstep simulation

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Mode {
    Active,
    /// Present and visible but never moves.
    Frozen,
    Absent,
}

/// Cooperative stepping with pre-step snapshots; halting agents stay put.
struct Sys<'a> {
    g: &'a PortLabeledGraph,
    agents: &'a [CoopAgent],
    mode: Vec<Mode>,
    confs: Vec<AgentConf>,
}

impl<'a> Sys<'a> {
    fn step(&mut self) -> Result<(), TrapError> {
        let snap = self.confs.clone();
        let n = snap.len();
        for i in 0..n {
            let c = snap[i];
            if self.mode[i] != Mode::Active || self.agents[i].halting[c.state] {
                continue;
            }
            let visible = (0..n)
                .filter(|&j| j != i)
                .map(|j| (self.mode[j] != Mode::Absent && snap[j].pos == c.pos).then_some(snap[j].state))
                .collect();
            let key = CoopKey { state: c.state, visible, degree: self.g.degree(c.pos), back: c.back };
            let &(state, mv) = self.agents[i].table.get(&key).ok_or_else(|| TrapError::Undefined { agent: i, key: format!("{key:?}") })?;
            let next = &mut self.confs[i];
            next.state = state;
            if let Move::Port(p) = mv {
                let h = self.g.half(c.pos, p);
                next.pos = h.to;
                next.back = h.port;
            }
        }
        Ok(())
    }

    fn halted(&self) -> bool {
        self.confs.iter().zip(&self.mode).zip(self.agents).all(|((c, &m), a)| m != Mode::Active || a.halting[c.state])
    }

    fn key(&self) -> Vec<u64> {
        self.confs
            .iter()
            .zip(&self.mode)
            .filter(|(_, &m)| m != Mode::Absent)
            .map(|(c, _)| (c.state as u64) << 48 | (c.pos as u64) << 8 | c.back as u64)
            .collect()
    }
}

/// Edges a single pebble-free agent traverses from `(start, state)` with back-label 0
/// until its configuration repeats or it halts.
fn solo_edges(a: &AgentSpec, g: &PortLabeledGraph, start: usize, state: usize, used: &mut [bool]) -> Result<usize, TrapError> {
    let s = a.state_count();
    let mut seen = vec![false; s * g.vertex_count() * 3];
    let (mut q, mut pos, mut back) = (state, start, 0);
    let mut steps = 0;
    loop {
        let idx = (q * g.vertex_count() + pos) * 3 + back;
        if a.halting[q] || seen[idx] {
            return Ok(steps);
        }
        seen[idx] = true;
        let act = a
            .step(&Observation { state: q, degree: g.degree(pos), back, carried: 0, at_vertex: 0 })
            .map_err(|e| TrapError::Undefined { agent: 0, key: e.to_string() })?;
        q = act.state;
        if let Move::Port(p) = act.mv {
            let h = g.half(pos, p);
            used[h.edge] = true;
            pos = h.to;
            back = h.port;
        }
        steps += 1;
    }
}

// ---------------------------------------------------------------------------
// Non-cooperative traps

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct NonCoopTrap {
    #[serde(skip)]
    pub graph: PortLabeledGraph,
    pub source: String,
    /// The 0-labeled edge `{v1, v2}` every run starts from.
    pub enter: (usize, usize),
    /// The edge `{v3, v4}` no run traverses.
    pub unused: (usize, usize),
    pub unused_label: usize,
    pub candidates_tried: usize,
    /// Longest run before its configuration repeated.
    pub max_run: usize,
}

/// Edges touched by any agent started at either end of `enter`, and the longest run.
fn used_edges(agents: &[AgentSpec], g: &PortLabeledGraph, enter: (usize, usize)) -> Result<(Vec<bool>, usize), TrapError> {
    let mut used = vec![false; g.edge_count()];
    let mut longest = 0;
    for a in agents {
        for v in [enter.0, enter.1] {
            longest = longest.max(solo_edges(a, g, v, a.start, &mut used)?);
        }
    }
    Ok((used, longest))
}

/// First unused edge other than `enter`, preferring labels 1 and 2.
fn pick_unused(g: &PortLabeledGraph, used: &[bool], enter: (usize, usize)) -> Option<usize> {
    let free: Vec<usize> = (0..g.edge_count())
        .filter(|&e| !used[e])
        .filter(|&e| {
            let x = &g.edges()[e];
            (x.u.min(x.v), x.u.max(x.v)) != (enter.0.min(enter.1), enter.0.max(enter.1))
        })
        .collect();
    free.iter().copied().find(|&e| g.label(e) != 0).or_else(|| free.first().copied())
}

/// Re-runs the certificate of a returned trap.
pub fn certify_noncooperative_trap(agents: &[AgentSpec], t: &NonCoopTrap) -> Result<bool, TrapError> {
    let (used, _) = used_edges(agents, &t.graph, t.enter)?;
    Ok(t.graph.edges().iter().enumerate().all(|(i, e)| {
        let same = (e.u.min(e.v), e.u.max(e.v)) == (t.unused.0.min(t.unused.1), t.unused.0.max(t.unused.1));
        !same || !used[i]
    }))
}

/// Searches the exhaustive cubic family (n <= 8) and then seeded random cubic graphs
/// of growing size for a 0-edge whose runs all avoid some other edge. Each agent is
/// started in its own `start` state, so callers pass the state closure.
pub fn find_noncooperative_trap(agents: &[AgentSpec], budget: usize) -> Result<NonCoopTrap, TrapError> {
    let mut tried = 0;
    let try_graph = |name: String, g: PortLabeledGraph, tried: usize| -> Result<Option<NonCoopTrap>, TrapError> {
        for e in g.edges().iter().filter(|e| e.pu == 0) {
            let enter = (e.u, e.v);
            let (used, max_run) = used_edges(agents, &g, enter)?;
            if let Some(x) = pick_unused(&g, &used, enter) {
                let edge = g.edges()[x];
                return Ok(Some(NonCoopTrap {
                    unused: (edge.u, edge.v),
                    unused_label: edge.pu,
                    graph: g,
                    source: name,
                    enter,
                    candidates_tried: tried,
                    max_run,
                }));
            }
        }
        Ok(None)
    };
    for named in cubic_exhaustive_upto(8) {
        if tried >= budget {
            return Err(TrapError::SearchExhausted(budget));
        }
        tried += 1;
        if let Some(t) = try_graph(named.name, named.graph, tried)? {
            return Ok(t);
        }
    }
    let mut n = 10;
    while tried < budget {
        for seed in 0..8u64 {
            if tried >= budget {
                break;
            }
            tried += 1;
            let g = random_3regular(n, seed)?;
            if let Some(t) = try_graph(format!("random-3regular-n{n}-s{seed}"), g, tried)? {
                return Ok(t);
            }
        }
        n += 2;
    }
    Err(TrapError::SearchExhausted(budget))
}

// ---------------------------------------------------------------------------
// Barriers

/// A barrier copy embedded in a larger graph.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EmbeddedCopy {
    pub first: usize,
    pub len: usize,
    /// Images of the inner `u, v`.
    pub near: [usize; 2],
    /// Images of the inner `u', v'`.
    pub far: [usize; 2],
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ChainLink {
    pub subset: Vec<usize>,
    pub alpha: usize,
    pub trap_source: String,
    pub trap_vertices: usize,
    pub h_vertices: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Construction {
    OneBarrier {
        trap: NonCoopTrap,
        h_vertices: usize,
        /// The unused edge carried label 0, so the distinguished edges sit between the
        /// two diamond vertices not adjacent to the copies.
        zero_case: bool,
    },
    Chain {
        inner_vertices: usize,
        links: Vec<ChainLink>,
        chain_vertices: usize,
        chain_edges: usize,
        embedded: Vec<EmbeddedCopy>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Barrier {
    #[serde(skip)]
    pub graph: PortLabeledGraph,
    pub vertices: usize,
    pub rank: usize,
    pub u: usize,
    pub v: usize,
    pub u2: usize,
    pub v2: usize,
    pub construction: Construction,
    pub evidence: Option<BarrierEvidence>,
    /// Inner barrier, for rank >= 2.
    #[serde(skip)]
    pub inner: Option<Box<Barrier>>,
}

impl Barrier {
    fn check_distinguished(&self) -> Result<(), TrapError> {
        for (a, b) in [(self.u, self.v), (self.u2, self.v2)] {
            let h = self.graph.half(a, 0);
            if h.to != b || h.port != 0 {
                return Err(TrapError::Precondition(format!("{{{a},{b}}} is not a 0-labeled edge")));
            }
        }
        Ok(())
    }
}

/// Diamond replacing one side of the cut label-`l` edge; returns `(u, v)`.
fn add_diamond(pc: &mut PartialCubic, v3: usize, v4: usize, l: usize) -> (usize, usize) {
    let a: Vec<usize> = (0..4).map(|_| pc.add_vertex()).collect();
    if l == 0 {
        pc.add_edge(a[0], v3, 0);
        pc.add_edge(a[1], v4, 0);
        pc.add_edge(a[0], a[2], 1);
        pc.add_edge(a[0], a[3], 2);
        pc.add_edge(a[1], a[2], 2);
        pc.add_edge(a[1], a[3], 1);
        pc.add_edge(a[2], a[3], 0);
        (a[2], a[3])
    } else {
        let other = 3 - l;
        pc.add_edge(a[0], a[3], 0);
        pc.add_edge(a[0], v3, l);
        pc.add_edge(a[0], a[2], other);
        pc.add_edge(a[1], v4, l);
        pc.add_edge(a[1], a[2], 0);
        pc.add_edge(a[1], a[3], other);
        pc.add_edge(a[2], a[3], l);
        (a[3], a[0])
    }
}

/// Two copies of the trap graph cross-wired at the entry edge, with a diamond on each
/// copy in place of the unused edge.
pub fn assemble_1barrier(t: &NonCoopTrap) -> Result<Barrier, TrapError> {
    let h = t.graph.vertex_count();
    let base = PartialCubic::from_graph(&t.graph)?;
    let mut pc = PartialCubic::new(0);
    pc.append(&base);
    pc.append(&base);
    let (v1, v2) = t.enter;
    let (v3, v4) = t.unused;
    let l = t.unused_label;
    for off in [0, h] {
        pc.remove_edge(v1 + off, v2 + off, 0);
        pc.remove_edge(v3 + off, v4 + off, l);
    }
    pc.add_edge(v1, v1 + h, 0);
    pc.add_edge(v2, v2 + h, 0);
    let (u, v) = add_diamond(&mut pc, v3, v4, l);
    let (u2, v2d) = add_diamond(&mut pc, v3 + h, v4 + h, l);
    let graph = pc.finish()?;
    let b = Barrier {
        vertices: graph.vertex_count(),
        graph,
        rank: 1,
        u,
        v,
        u2,
        v2: v2d,
        construction: Construction::OneBarrier { trap: t.clone(), h_vertices: h, zero_case: l == 0 },
        evidence: None,
        inner: None,
    };
    b.check_distinguished()?;
    Ok(b)
}

/// A 1-barrier for every agent alone, from every starting state.
pub fn build_1barrier(agents: &CooperativeAgentSpec, cfg: &TrapConfig) -> Result<Barrier, TrapError> {
    let closure = state_closure(agents);
    let t = find_noncooperative_trap(&closure, cfg.search_budget)?;
    let mut b = assemble_1barrier(&t)?;
    if cfg.verify {
        b.evidence = Some(verify_barrier(&b, agents, 1, cfg)?);
    }
    Ok(b)
}

/// `g` with a barrier wired in place of its two least 0-edges.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Attached {
    pub graph: PortLabeledGraph,
    /// Barrier vertex `x` is `x + offset`.
    pub offset: usize,
    pub near: [usize; 2],
    pub far: [usize; 2],
    /// The cut 0-edges of `g`.
    pub cut: [(usize, usize); 2],
}

impl Attached {
    pub fn in_barrier(&self, x: usize) -> bool {
        x >= self.offset
    }
}

pub fn attach(g: &PortLabeledGraph, b: &Barrier) -> Result<Attached, TrapError> {
    let mut zero: Vec<(usize, usize)> =
        g.edges().iter().filter(|e| e.pu == 0 && e.pv == 0).map(|e| (e.u.min(e.v), e.u.max(e.v))).collect();
    zero.sort_unstable();
    if zero.len() < 2 {
        return Err(TrapError::Precondition("the host graph needs two 0-labeled edges".into()));
    }
    let mut pc = PartialCubic::from_graph(g)?;
    let offset = pc.append(&PartialCubic::from_graph(&b.graph)?);
    let (e1, e2) = (zero[0], zero[1]);
    pc.remove_edge(e1.0, e1.1, 0);
    pc.remove_edge(e2.0, e2.1, 0);
    pc.remove_edge(b.u + offset, b.v + offset, 0);
    pc.remove_edge(b.u2 + offset, b.v2 + offset, 0);
    pc.add_edge(b.u + offset, e1.0, 0);
    pc.add_edge(b.v + offset, e1.1, 0);
    pc.add_edge(b.u2 + offset, e2.0, 0);
    pc.add_edge(b.v2 + offset, e2.1, 0);
    Ok(Attached {
        graph: pc.finish()?,
        offset,
        near: [b.u + offset, b.v + offset],
        far: [b.u2 + offset, b.v2 + offset],
        cut: [e1, e2],
    })
}

// ---------------------------------------------------------------------------
// Gadget graphs

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GadgetGraph {
    pub graph: PortLabeledGraph,
    pub macro_map: VertexMap,
    pub base: PortLabeledGraph,
    /// Vertices per extension copy.
    pub half: usize,
    /// Base edge owning each vertex of one copy; `None` on macro vertices.
    pub gadget_of: Vec<Option<usize>>,
    /// Barrier copies in both extension copies.
    pub embedded: Vec<EmbeddedCopy>,
}

impl GadgetGraph {
    /// Macro vertex at `x`, with copies identified.
    pub fn macro_at(&self, x: usize) -> Option<usize> {
        let m = x % self.half;
        (m < self.base.vertex_count()).then_some(m)
    }
}

/// Every base edge replaced by its gadget, then doubled by the 3-regular extension.
pub fn build_gadget_graph(g: &PortLabeledGraph, b: &Barrier) -> Result<GadgetGraph, TrapError> {
    gadget_graph_keeping(g, b, &[])
}

/// Gadget graph in which the base edges in `keep` stay plain edges.
fn gadget_graph_keeping(g: &PortLabeledGraph, b: &Barrier, keep: &[usize]) -> Result<GadgetGraph, TrapError> {
    if !g.is_symmetric_cubic() {
        return Err(TrapError::Precondition("base graph must be edge-symmetric and 3-regular".into()));
    }
    let n = g.vertex_count();
    let inner = PartialCubic::from_graph(&b.graph)?;
    let mut pc = PartialCubic::new(n);
    let mut gadget_of = vec![None; n];
    let mut copies = Vec::new();
    for (idx, e) in g.edges().iter().enumerate() {
        let l = e.pu;
        if keep.contains(&idx) {
            pc.add_edge(e.u, e.v, l);
            continue;
        }
        let off = pc.append(&inner);
        pc.remove_edge(b.u + off, b.v + off, 0);
        pc.remove_edge(b.u2 + off, b.v2 + off, 0);
        // Left 4-cycle w1..w4 with w2 the entry, right 4-cycle u1..u4 with u2 the entry.
        let w: Vec<usize> = (0..4).map(|_| pc.add_vertex()).collect();
        let r: Vec<usize> = (0..4).map(|_| pc.add_vertex()).collect();
        gadget_of.resize(pc.n, Some(idx));
        for (side, end, bu, bv) in [(&w, e.u, b.u, b.v), (&r, e.v, b.u2, b.v2)] {
            pc.add_edge(bu + off, side[0], 0);
            pc.add_edge(bv + off, side[2], 0);
            pc.add_edge(side[3], side[2], 1);
            pc.add_edge(side[0], side[3], 2);
            for (x, y, dl) in [(side[1], side[0], 1), (side[2], side[1], 2), (side[1], side[3], 0)] {
                if dl != l {
                    pc.add_edge(x, y, dl);
                }
            }
            pc.add_edge(end, side[1], l);
        }
        copies.push(EmbeddedCopy { first: off, len: b.vertices, near: [b.u + off, b.v + off], far: [b.u2 + off, b.v2 + off] });
    }
    let half = pc.n;
    let (graph, ext) = regular_extension(&pc)?;
    let mut embedded = copies.clone();
    embedded.extend(copies.iter().map(|c| EmbeddedCopy {
        first: c.first + half,
        len: c.len,
        near: c.near.map(|x| x + half),
        far: c.far.map(|x| x + half),
    }));
    let macro_map = VertexMap { forward: ext.forward[..n].to_vec(), kind: MapKind::Gadget };
    Ok(GadgetGraph { graph, macro_map, base: g.clone(), half, gadget_of, embedded })
}

// ---------------------------------------------------------------------------
// Macro traces

/// Per agent: state, back-label and the least shortest label path from the reference
/// vertex (`None` at the reference itself).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct RelativeConfiguration {
    pub agents: Vec<(usize, usize, Option<Vec<u8>>)>,
}

/// BFS in port order: the first discovery of a vertex is along its least shortest path.
fn least_paths(g: &PortLabeledGraph, from: usize, targets: &[usize]) -> Vec<Option<Vec<u8>>> {
    let mut parent: HashMap<usize, (usize, u8)> = HashMap::new();
    let mut pending: Vec<usize> = targets.iter().copied().filter(|&t| t != from).collect();
    pending.sort_unstable();
    pending.dedup();
    let mut q = VecDeque::from([from]);
    parent.insert(from, (from, 0));
    while let Some(x) = q.pop_front() {
        if pending.is_empty() {
            break;
        }
        for p in 0..g.degree(x) {
            let y = g.half(x, p).to;
            if let std::collections::hash_map::Entry::Vacant(slot) = parent.entry(y) {
                slot.insert((x, p as u8));
                pending.retain(|&t| t != y);
                q.push_back(y);
            }
        }
    }
    targets
        .iter()
        .map(|&t| {
            (t != from).then(|| {
                let mut path = Vec::new();
                let mut x = t;
                while x != from {
                    let (px, l) = parent[&x];
                    path.push(l);
                    x = px;
                }
                path.reverse();
                path
            })
        })
        .collect()
}

fn relative(gg: &GadgetGraph, confs: &[AgentConf], members: &[usize], reference: usize) -> RelativeConfiguration {
    let targets: Vec<usize> = members.iter().map(|&i| confs[i].pos).collect();
    let paths = least_paths(&gg.graph, reference, &targets);
    RelativeConfiguration { agents: members.iter().zip(paths).map(|(&i, p)| (confs[i].state, confs[i].back, p)).collect() }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceEnd {
    Halted,
    Periodic { preperiod: u64, period: u64 },
    Budget,
    /// Stopped on a configuration seen at an earlier macro event.
    KnownConfiguration,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MacroTrace {
    pub vertices: Vec<usize>,
    pub labels: Vec<usize>,
    pub times: Vec<u64>,
    pub configs: Vec<RelativeConfiguration>,
    /// Steps at which some agent was outside the last macro vertex's gadgets.
    pub locality_violations: u64,
    pub steps: u64,
    pub end: TraceEnd,
}

/// Macro events of the given members, who start together at `start` (any copy) in
/// `confs`; the others are absent. `stop` ends the trace after an event whose
/// configuration it accepts.
fn trace_members(
    agents: &CooperativeAgentSpec,
    gg: &GadgetGraph,
    members: &[usize],
    init: Vec<AgentConf>,
    budget: u64,
    mut stop: impl FnMut(&RelativeConfiguration) -> bool,
) -> Result<MacroTrace, TrapError> {
    let mode = (0..agents.len()).map(|i| if members.contains(&i) { Mode::Active } else { Mode::Absent }).collect();
    let start = init[members[0]].pos;
    let mut sys = Sys { g: &gg.graph, agents: &agents.agents, mode, confs: init };
    let v0 = gg.macro_at(start).ok_or_else(|| TrapError::Precondition("start is not a macro vertex".into()))?;
    let mut t = MacroTrace {
        vertices: vec![v0],
        labels: Vec::new(),
        times: vec![0],
        configs: vec![relative(gg, &sys.confs, members, start)],
        locality_violations: 0,
        steps: 0,
        end: TraceEnd::Budget,
    };
    if stop(&t.configs[0]) {
        t.end = TraceEnd::KnownConfiguration;
        return Ok(t);
    }
    let mut seen: HashMap<Vec<u64>, u64> = HashMap::new();
    let mut last = v0;
    loop {
        if sys.halted() {
            t.end = TraceEnd::Halted;
            return Ok(t);
        }
        if let Some(&first) = seen.get(&sys.key()) {
            t.end = TraceEnd::Periodic { preperiod: first, period: t.steps - first };
            return Ok(t);
        }
        if t.steps >= budget {
            return Ok(t);
        }
        seen.insert(sys.key(), t.steps);
        let before = sys.confs.clone();
        sys.step()?;
        t.steps += 1;
        let arrival = members.iter().copied().find(|&i| gg.macro_at(sys.confs[i].pos).is_some_and(|m| m != last));
        if let Some(i) = arrival {
            let m = gg.macro_at(sys.confs[i].pos).expect("checked");
            let e = gg.gadget_of[before[i].pos % gg.half].expect("macro vertices are only adjacent to gadgets");
            last = m;
            t.vertices.push(m);
            t.labels.push(gg.base.label(e));
            t.times.push(t.steps);
            t.configs.push(relative(gg, &sys.confs, members, sys.confs[i].pos));
            seen.clear();
            if stop(t.configs.last().expect("pushed")) {
                t.end = TraceEnd::KnownConfiguration;
                return Ok(t);
            }
        }
        for &i in members {
            let x = sys.confs[i].pos % gg.half;
            let near = match gg.gadget_of[x] {
                None => x == last,
                Some(e) => {
                    let edge = gg.base.edges()[e];
                    edge.u == last || edge.v == last
                }
            };
            if !near {
                t.locality_violations += 1;
            }
        }
    }
}

/// Macro traversal of the whole agent set started together at macro vertex `start`.
pub fn macro_trace(agents: &CooperativeAgentSpec, gg: &GadgetGraph, start: usize, budget: u64) -> Result<MacroTrace, TrapError> {
    let members: Vec<usize> = (0..agents.len()).collect();
    let init = agents.agents.iter().map(|a| AgentConf { state: a.start, pos: start, back: 0 }).collect();
    trace_members(agents, gg, &members, init, budget, |_| false)
}

// ---------------------------------------------------------------------------
// Macro agents

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MacroAgentSpec {
    #[serde(skip)]
    pub agent: AgentSpec,
    pub subset: Vec<usize>,
    pub alpha: usize,
    pub configs: Vec<RelativeConfiguration>,
    /// Macro label and successor per configuration; `None` is absorbing.
    pub transitions: Vec<Option<(usize, usize)>>,
    pub probes: Vec<String>,
}

type Table = BTreeMap<RelativeConfiguration, Option<(usize, RelativeConfiguration)>>;

/// Tabulates macro transitions of `subset` from every seed configuration: all members
/// at a macro vertex with every combination of states and back-labels.
fn tabulate(agents: &CooperativeAgentSpec, subset: &[usize], gg: &GadgetGraph, cfg: &TrapConfig) -> Result<Table, TrapError> {
    let mut table: Table = BTreeMap::new();
    let mut seeds: Vec<Vec<(usize, usize)>> = vec![Vec::new()];
    for &i in subset {
        let s = agents.agents[i].states.len();
        seeds = seeds.into_iter().flat_map(|v| (0..s * 3).map(move |x| [v.clone(), vec![(x / 3, x % 3)]].concat())).collect();
    }
    let start = gg.macro_map.forward[0][0];
    for seed in seeds {
        let mut init: Vec<AgentConf> = agents.agents.iter().map(|a| AgentConf { state: a.start, pos: start, back: 0 }).collect();
        for (&i, &(state, back)) in subset.iter().zip(&seed) {
            init[i] = AgentConf { state, pos: start, back };
        }
        let known: Vec<RelativeConfiguration> = table.keys().cloned().collect();
        let t = trace_members(agents, gg, subset, init, cfg.step_cap, |c| known.binary_search(c).is_ok())?;
        for (h, c) in t.configs.iter().enumerate() {
            let next = t.configs.get(h + 1).map(|n| (t.labels[h], n.clone()));
            let last_known = h + 1 == t.configs.len() && t.end == TraceEnd::KnownConfiguration;
            if next.is_none() && (last_known || table.contains_key(c)) {
                continue;
            }
            if next.is_none() && t.end == TraceEnd::Budget {
                return Err(TrapError::StepCap(cfg.step_cap));
            }
            if let Some(prev) = table.get(c) {
                if *prev != next {
                    return Err(TrapError::NotDeterministic(format!("{c:?}: {prev:?} vs {next:?}")));
                }
            }
            table.insert(c.clone(), next);
        }
        if table.len() > cfg.max_alpha {
            return Err(TrapError::CapExceeded(table.len(), cfg.max_alpha));
        }
    }
    Ok(table)
}

/// The single agent whose states are the subset's configurations at macro events.
/// The table is built on K4 and cross-checked on the prism.
pub fn derive_macro_agent(agents: &CooperativeAgentSpec, subset: &[usize], b: &Barrier, cfg: &TrapConfig) -> Result<MacroAgentSpec, TrapError> {
    if subset.is_empty() {
        return Err(TrapError::Precondition("empty subset".into()));
    }
    let probe = build_gadget_graph(&k4(), b)?;
    let table = tabulate(agents, subset, &probe, cfg)?;
    let check = tabulate(agents, subset, &build_gadget_graph(&prism(), b)?, cfg)?;
    for (c, t) in &check {
        if let Some(x) = table.get(c) {
            if x != t {
                return Err(TrapError::NotDeterministic(format!("{c:?}: {x:?} on K4, {t:?} on the prism")));
            }
        }
    }
    let configs: Vec<RelativeConfiguration> = table.keys().cloned().collect();
    let index = |c: &RelativeConfiguration| configs.binary_search(c).expect("successors are tabulated");
    let transitions: Vec<Option<(usize, usize)>> = table.values().map(|t| t.as_ref().map(|(l, c)| (*l, index(c)))).collect();
    let alpha = configs.len();
    let mut agent = AgentSpec::new(
        (0..alpha).map(|h| format!("x{h}")).collect(),
        transitions.iter().map(Option::is_none).collect(),
        0,
        0,
    );
    for (h, t) in transitions.iter().enumerate() {
        if let Some((l, next)) = *t {
            for back in 0..3 {
                agent.table.insert(
                    Observation { state: h, degree: 3, back, carried: 0, at_vertex: 0 },
                    Action { state: next, mv: Move::Port(l), carried: 0, at_vertex: 0 },
                );
            }
        }
    }
    Ok(MacroAgentSpec { agent, subset: subset.to_vec(), alpha, configs, transitions, probes: vec!["K4".into(), "prism".into()] })
}

fn combinations(k: usize, r: usize) -> Vec<Vec<usize>> {
    if r == 0 {
        return vec![Vec::new()];
    }
    if r > k {
        return Vec::new();
    }
    let mut out = combinations(k - 1, r);
    for mut c in combinations(k - 1, r - 1) {
        c.push(k - 1);
        out.push(c);
    }
    out.sort();
    out
}

/// Rank-`r` barrier for the whole set; rank 1 is the plain 1-barrier.
pub fn build_rbarrier(agents: &CooperativeAgentSpec, r: usize, cfg: &TrapConfig) -> Result<Barrier, TrapError> {
    if r == 0 || r > agents.len() {
        return Err(TrapError::Precondition(format!("rank {r} for {} agents", agents.len())));
    }
    if r == 1 {
        return build_1barrier(agents, cfg);
    }
    let inner = build_rbarrier(agents, r - 1, cfg)?;
    let mut hs = Vec::new();
    let mut links = Vec::new();
    for subset in combinations(agents.len(), r) {
        let m = derive_macro_agent(agents, &subset, &inner, cfg)?;
        let closure: Vec<AgentSpec> = (0..m.alpha).map(|s| AgentSpec { start: s, ..m.agent.clone() }).collect();
        let t = find_noncooperative_trap(&closure, cfg.search_budget)?;
        let h = assemble_1barrier(&t)?;
        links.push(ChainLink { subset, alpha: m.alpha, trap_source: t.source.clone(), trap_vertices: t.graph.vertex_count(), h_vertices: h.vertices });
        hs.push(h);
    }
    let (chain, keep, ends) = chain_graph(&hs)?;
    let chain_vertices = chain.vertex_count();
    let chain_edges = chain.edge_count();
    let gg = gadget_graph_keeping(&chain, &inner, &keep)?;
    let mut b = Barrier {
        vertices: gg.graph.vertex_count(),
        graph: gg.graph,
        rank: r,
        u: ends[0],
        v: ends[1],
        u2: ends[2],
        v2: ends[3],
        construction: Construction::Chain { inner_vertices: inner.vertices, links, chain_vertices, chain_edges, embedded: gg.embedded },
        evidence: None,
        inner: Some(Box::new(inner)),
    };
    b.check_distinguished()?;
    if cfg.verify {
        b.evidence = Some(verify_barrier(&b, agents, r, cfg)?);
    }
    Ok(b)
}

/// The 1-barriers chained between two end diamonds. Returns the chain graph, the
/// indices of the two end edges kept plain, and `[u, v, u', v']`.
fn chain_graph(hs: &[Barrier]) -> Result<(PortLabeledGraph, Vec<usize>, [usize; 4]), TrapError> {
    let mut pc = PartialCubic::new(0);
    let left: Vec<usize> = (0..4).map(|_| pc.add_vertex()).collect();
    let mut ends = Vec::new();
    for h in hs {
        let off = pc.append(&PartialCubic::from_graph(&h.graph)?);
        pc.remove_edge(h.u + off, h.v + off, 0);
        pc.remove_edge(h.u2 + off, h.v2 + off, 0);
        ends.push(([h.u + off, h.v + off], [h.u2 + off, h.v2 + off]));
    }
    let right: Vec<usize> = (0..4).map(|_| pc.add_vertex()).collect();
    // Diamond a1..a4: a4-a1 is the kept end edge, a2 and a3 bridge into the chain.
    for a in [&left, &right] {
        pc.add_edge(a[0], a[3], 0);
        pc.add_edge(a[0], a[1], 1);
        pc.add_edge(a[0], a[2], 2);
        pc.add_edge(a[3], a[1], 2);
        pc.add_edge(a[3], a[2], 1);
    }
    pc.add_edge(left[2], ends[0].0[0], 0);
    pc.add_edge(left[1], ends[0].0[1], 0);
    for w in ends.windows(2) {
        pc.add_edge(w[0].1[0], w[1].0[0], 0);
        pc.add_edge(w[0].1[1], w[1].0[1], 0);
    }
    let last = ends.last().expect("at least one subset");
    pc.add_edge(last.1[0], right[2], 0);
    pc.add_edge(last.1[1], right[1], 0);
    let g = pc.finish()?;
    let find = |a: usize, b: usize| {
        g.edges().iter().position(|e| (e.u, e.v) == (a, b) || (e.u, e.v) == (b, a)).expect("end edge present")
    };
    let keep = vec![find(left[0], left[3]), find(right[0], right[3])];
    Ok((g, keep, [left[3], left[0], right[0], right[3]]))
}

/// Fewest embedded barrier copies crossed by any path between the two distinguished
/// edges, with each copy contracted to a near node and a far node one apart.
pub fn min_barrier_crossings(b: &Barrier) -> Option<usize> {
    let Construction::Chain { embedded, .. } = &b.construction else { return None };
    let n = b.vertices;
    let mut copy_of = vec![usize::MAX; n];
    for (i, c) in embedded.iter().enumerate() {
        copy_of[c.first..c.first + c.len].iter_mut().for_each(|x| *x = i);
    }
    // Nodes: vertices, then near and far node per copy.
    let node = |x: usize| -> usize {
        match copy_of[x] {
            usize::MAX => x,
            i if embedded[i].near.contains(&x) => n + 2 * i,
            i if embedded[i].far.contains(&x) => n + 2 * i + 1,
            _ => usize::MAX,
        }
    };
    let total = n + 2 * embedded.len();
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); total];
    for e in b.graph.edges() {
        let (a, c) = (node(e.u), node(e.v));
        if a != usize::MAX && c != usize::MAX && a != c {
            adj[a].push((c, 0));
            adj[c].push((a, 0));
        }
    }
    for i in 0..embedded.len() {
        adj[n + 2 * i].push((n + 2 * i + 1, 1));
        adj[n + 2 * i + 1].push((n + 2 * i, 1));
    }
    let mut dist = vec![usize::MAX; total];
    let mut q = VecDeque::new();
    for s in [b.u, b.v] {
        dist[s] = 0;
        q.push_back(s);
    }
    while let Some(x) = q.pop_front() {
        for &(y, w) in &adj[x] {
            if dist[x] + w < dist[y] {
                dist[y] = dist[x] + w;
                if w == 0 {
                    q.push_front(y);
                } else {
                    q.push_back(y);
                }
            }
        }
    }
    Some(dist[b.u2].min(dist[b.v2]))
}

// ---------------------------------------------------------------------------
// Traps

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trap {
    #[serde(skip)]
    pub graph: PortLabeledGraph,
    pub vertices: usize,
    pub start: usize,
    /// The endpoints `u1', v1'` beyond the first barrier copy.
    pub beyond: [usize; 2],
    pub barrier: Barrier,
}

/// Two copies of the rank-k barrier around a four-vertex block holding the start.
pub fn assemble_trap(b: &Barrier) -> Result<Trap, TrapError> {
    let nb = b.vertices;
    let inner = PartialCubic::from_graph(&b.graph)?;
    let mut pc = PartialCubic::new(0);
    pc.append(&inner);
    pc.append(&inner);
    for off in [0, nb] {
        pc.remove_edge(b.u + off, b.v + off, 0);
        pc.remove_edge(b.u2 + off, b.v2 + off, 0);
    }
    let a: Vec<usize> = (0..4).map(|_| pc.add_vertex()).collect();
    pc.add_edge(a[0], a[1], 1);
    pc.add_edge(a[0], a[2], 2);
    pc.add_edge(a[1], a[3], 2);
    pc.add_edge(a[2], a[3], 1);
    pc.add_edge(b.u, a[2], 0);
    pc.add_edge(b.v, a[3], 0);
    pc.add_edge(a[0], b.v + nb, 0);
    pc.add_edge(a[1], b.u + nb, 0);
    pc.add_edge(b.u2, b.v2 + nb, 0);
    pc.add_edge(b.v2, b.u2 + nb, 0);
    let graph = pc.finish()?;
    Ok(Trap { vertices: graph.vertex_count(), graph, start: a[2], beyond: [b.u2, b.v2], barrier: b.clone() })
}

pub fn build_trap(agents: &CooperativeAgentSpec, cfg: &TrapConfig) -> Result<Trap, TrapError> {
    assemble_trap(&build_rbarrier(agents, agents.len(), cfg)?)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TrapEvidence {
    pub trapped: bool,
    pub preperiod: u64,
    pub period: u64,
    pub visited: usize,
    pub unvisited: Vec<usize>,
    /// The visited set did not grow while running twice past the period.
    pub reconfirmed: bool,
}

/// Runs all agents from `start` until the system configuration repeats; the graph is a
/// trap iff some vertex is unvisited by then.
pub fn verify_trap(g: &PortLabeledGraph, agents: &CooperativeAgentSpec, start: usize, step_cap: u64) -> Result<TrapEvidence, TrapError> {
    let confs = agents.agents.iter().map(|a| AgentConf { state: a.start, pos: start, back: 0 }).collect();
    let mut sys = Sys { g, agents: &agents.agents, mode: vec![Mode::Active; agents.len()], confs };
    let mut visited = vec![false; g.vertex_count()];
    visited[start] = true;
    let mut seen: HashMap<Vec<u64>, u64> = HashMap::new();
    let mut step = 0u64;
    let (preperiod, period) = loop {
        if sys.halted() {
            break (step, 0);
        }
        if let Some(&first) = seen.get(&sys.key()) {
            break (first, step - first);
        }
        if step >= step_cap {
            return Err(TrapError::StepCap(step_cap));
        }
        seen.insert(sys.key(), step);
        sys.step()?;
        step += 1;
        for c in &sys.confs {
            visited[c.pos] = true;
        }
    };
    let count = visited.iter().filter(|&&v| v).count();
    let mut reconfirmed = true;
    for _ in 0..2 * period {
        sys.step()?;
        reconfirmed &= sys.confs.iter().all(|c| visited[c.pos]);
    }
    let unvisited: Vec<usize> = (0..g.vertex_count()).filter(|&v| !visited[v]).collect();
    Ok(TrapEvidence { trapped: !unvisited.is_empty(), preperiod, period, visited: count, unvisited, reconfirmed })
}

// ---------------------------------------------------------------------------
// Barrier verification

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BarrierVerdict {
    Verified,
    /// An agent entered at one side and left at the other without leaving in between.
    Crossing { subset: Vec<usize>, states: Vec<usize>, entry: usize, agent: usize, step: u64 },
    /// An episode ended with agents exiting on both sides.
    Split { subset: Vec<usize>, states: Vec<usize>, entry: usize, step: u64 },
    Inconclusive { subset: Vec<usize>, states: Vec<usize>, entry: usize, cap: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SubsetRecord {
    pub subset: Vec<usize>,
    pub starts: usize,
    pub max_steps: u64,
    /// Pigeonhole bound on the steps before a repeat.
    pub bound: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BarrierEvidence {
    pub probe: String,
    pub rank: usize,
    pub verdict: BarrierVerdict,
    pub subsets: Vec<SubsetRecord>,
    /// The definition quantifies over all host graphs; this record covers only the probe.
    pub scope: String,
}

enum RunResult {
    Clean(u64),
    Bad(BarrierVerdict),
}

/// Side of a barrier entry vertex: 0 near, 1 far.
fn side(at: &Attached, x: usize) -> Option<u8> {
    if at.near.contains(&x) {
        Some(0)
    } else if at.far.contains(&x) {
        Some(1)
    } else {
        None
    }
}

/// One probe run: members start at `entry` just inside the barrier, the rest are frozen
/// at `park`. Tracks crossings (property 1) or split exits (property 2).
#[allow(clippy::too_many_arguments)]
fn probe_run(
    agents: &CooperativeAgentSpec,
    at: &Attached,
    park: usize,
    subset: &[usize],
    states: &[usize],
    entry: usize,
    split_check: bool,
    cap: u64,
) -> Result<RunResult, TrapError> {
    let k = agents.len();
    let mut confs: Vec<AgentConf> = (0..k).map(|i| AgentConf { state: agents.agents[i].start, pos: park, back: 0 }).collect();
    let mut mode = vec![Mode::Frozen; k];
    for (&i, &s) in subset.iter().zip(states) {
        confs[i] = AgentConf { state: s, pos: entry, back: 0 };
        mode[i] = Mode::Active;
    }
    let mut sys = Sys { g: &at.graph, agents: &agents.agents, mode, confs };
    let entry_side = side(at, entry).expect("entry vertex");
    // Per member: side of the last entry (2 when outside), side of the last exit.
    let mut entered: Vec<u8> = vec![entry_side; subset.len()];
    let mut exits: u8 = 0;
    let mut seen: HashMap<(Vec<u64>, Vec<u8>, u8), u64> = HashMap::new();
    let mut step = 0u64;
    let fail = |step| {
        if split_check {
            BarrierVerdict::Split { subset: subset.to_vec(), states: states.to_vec(), entry, step }
        } else {
            BarrierVerdict::Crossing { subset: subset.to_vec(), states: states.to_vec(), entry, agent: 0, step }
        }
    };
    loop {
        let key = (sys.key(), entered.clone(), exits);
        if sys.halted() || seen.contains_key(&key) {
            return Ok(RunResult::Clean(step));
        }
        if step >= cap {
            return Ok(RunResult::Bad(BarrierVerdict::Inconclusive { subset: subset.to_vec(), states: states.to_vec(), entry, cap }));
        }
        seen.insert(key, step);
        let before: Vec<usize> = subset.iter().map(|&i| sys.confs[i].pos).collect();
        sys.step()?;
        step += 1;
        for (m, &i) in subset.iter().enumerate() {
            let (x, y) = (before[m], sys.confs[i].pos);
            match (at.in_barrier(x), at.in_barrier(y)) {
                (true, false) => {
                    let s = side(at, x).expect("bridges leave from entry vertices");
                    if !split_check && entered[m] != s {
                        return Ok(RunResult::Bad(BarrierVerdict::Crossing {
                            subset: subset.to_vec(),
                            states: states.to_vec(),
                            entry,
                            agent: i,
                            step,
                        }));
                    }
                    entered[m] = 2;
                    exits |= 1 << s;
                }
                (false, true) => entered[m] = side(at, y).expect("bridges enter at entry vertices"),
                _ => {}
            }
        }
        if split_check && entered.iter().all(|&e| e == 2) {
            if exits == 3 {
                return Ok(RunResult::Bad(fail(step)));
            }
            exits = 0;
        }
    }
}

/// Checks the barrier properties on K4 with the barrier attached: every subset of at
/// most `r` agents, from every state vector and every entry vertex, never crosses; every
/// subset of `r + 1` agents never exits on both sides within one episode.
pub fn verify_barrier(b: &Barrier, agents: &CooperativeAgentSpec, r: usize, cfg: &TrapConfig) -> Result<BarrierEvidence, TrapError> {
    let at = attach(&k4(), b)?;
    let park = 3;
    let entries = [at.near[0], at.near[1], at.far[0], at.far[1]];
    let mut subsets: Vec<(Vec<usize>, bool)> = Vec::new();
    for size in 1..=r.min(agents.len()) {
        subsets.extend(combinations(agents.len(), size).into_iter().map(|s| (s, false)));
    }
    subsets.extend(combinations(agents.len(), r + 1).into_iter().map(|s| (s, true)));
    let mut records = Vec::new();
    let mut verdict = BarrierVerdict::Verified;
    for (subset, split) in subsets {
        let mut vectors: Vec<Vec<usize>> = vec![Vec::new()];
        for &i in &subset {
            let s = agents.agents[i].states.len();
            vectors = vectors.into_iter().flat_map(|v| (0..s).map(move |x| [v.clone(), vec![x]].concat())).collect();
        }
        let starts: Vec<(Vec<usize>, usize)> = vectors.iter().flat_map(|v| entries.iter().map(move |&e| (v.clone(), e))).collect();
        let results: Vec<Result<RunResult, TrapError>> =
            starts.par_iter().map(|(v, e)| probe_run(agents, &at, park, &subset, v, *e, split, cfg.step_cap)).collect();
        let mut max_steps = 0;
        for res in results {
            match res? {
                RunResult::Clean(s) => max_steps = max_steps.max(s),
                RunResult::Bad(v) => {
                    if verdict == BarrierVerdict::Verified {
                        verdict = v;
                    }
                }
            }
        }
        let per_agent: Vec<String> =
            subset.iter().map(|&i| format!("{}", agents.agents[i].states.len() * 3 * at.graph.vertex_count())).collect();
        records.push(SubsetRecord { subset, starts: starts.len(), max_steps, bound: format!("{}+1", per_agent.join("*")) });
    }
    Ok(BarrierEvidence {
        probe: format!("K4 with the barrier on its two least 0-edges ({} vertices)", at.graph.vertex_count()),
        rank: r,
        verdict,
        subsets: records,
        scope: "verified on the named probe only; other host graphs are not covered".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> TrapConfig {
        TrapConfig { max_alpha: 64, search_budget: 200, step_cap: 200_000, verify: true }
    }

    #[test]
    fn oscillator_is_trapped_in_k4() {
        let ev = verify_trap(&k4(), &oscillator(), 0, 1000).unwrap();
        assert!(ev.trapped);
        assert_eq!(ev.unvisited.len(), 2);
        assert_eq!(ev.period, 2);
    }

    #[test]
    fn oscillator_explores_a_single_edge() {
        let g = PortLabeledGraph::from_labeled(2, &[(0, 1, 0)]).unwrap();
        let osc = blind_agents(&[vec![[(0, Move::Port(0)); 3]]]);
        // Degree-1 keys are absent from cubic tables, so the run reports the gap.
        assert!(verify_trap(&g, &osc, 0, 10).is_err());
    }

    #[test]
    fn oscillator_trap_is_found_in_k4() {
        let closure = state_closure(&oscillator());
        let t = find_noncooperative_trap(&closure, 10).unwrap();
        assert_eq!(t.graph.vertex_count(), 4);
        assert!(certify_noncooperative_trap(&closure, &t).unwrap());
        assert_ne!(t.unused_label, 0);
    }

    #[test]
    fn one_barrier_counts_and_distinguished_edges() {
        let b = build_1barrier(&oscillator(), &quick()).unwrap();
        let Construction::OneBarrier { h_vertices, .. } = b.construction else { panic!() };
        assert_eq!(b.vertices, 2 * h_vertices + 8);
        assert!(b.graph.is_symmetric_cubic());
        assert_eq!(b.evidence.unwrap().verdict, BarrierVerdict::Verified);
    }

    #[test]
    fn zero_label_diamond_is_valid() {
        let g = k4();
        let t = NonCoopTrap { graph: g, source: "K4".into(), enter: (0, 1), unused: (2, 3), unused_label: 0, candidates_tried: 0, max_run: 0 };
        let b = assemble_1barrier(&t).unwrap();
        assert!(b.graph.is_symmetric_cubic() && b.graph.is_connected());
        assert_eq!(b.vertices, 16);
    }

    #[test]
    fn attach_keeps_degrees_and_is_deterministic() {
        let b = build_1barrier(&oscillator(), &TrapConfig { verify: false, ..quick() }).unwrap();
        let a = attach(&k4(), &b).unwrap();
        assert!(a.graph.is_symmetric_cubic());
        assert_eq!(a.cut, [(0, 1), (2, 3)]);
        assert_eq!(attach(&k4(), &b).unwrap(), a);
    }

    #[test]
    fn gadget_graph_count_and_macro_entries() {
        let b = build_1barrier(&oscillator(), &TrapConfig { verify: false, ..quick() }).unwrap();
        for g in [k4(), prism()] {
            let n = g.vertex_count();
            let gg = build_gadget_graph(&g, &b).unwrap();
            assert_eq!(gg.graph.vertex_count(), 2 * (n + 3 * n / 2 * (b.vertices + 8)));
            assert!(gg.graph.is_symmetric_cubic());
            for v in 0..n {
                let x = gg.macro_map.forward[v][0];
                for p in 0..3 {
                    let h = gg.graph.half(x, p);
                    assert_eq!(h.port, p);
                    assert!(gg.gadget_of[h.to].is_some());
                }
            }
        }
    }

    #[test]
    fn halted_agents_give_an_empty_macro_trace() {
        let mut spec = oscillator();
        spec.agents[0].halting = vec![true];
        let b = build_1barrier(&oscillator(), &TrapConfig { verify: false, ..quick() }).unwrap();
        let gg = build_gadget_graph(&k4(), &b).unwrap();
        let t = macro_trace(&spec, &gg, 0, 100).unwrap();
        assert!(t.labels.is_empty());
        assert_eq!(t.end, TraceEnd::Halted);
    }

    #[test]
    fn least_paths_prefer_small_labels() {
        let g = k4();
        let p = least_paths(&g, 0, &[0, 1, 3]);
        assert_eq!(p, vec![None, Some(vec![0]), Some(vec![2])]);
        let c = crate::graph::cycle(6);
        assert_eq!(least_paths(&c, 0, &[3]), vec![Some(vec![0, 0, 0])]);
    }

    #[test]
    fn non_moving_subset_gives_one_absorbing_state() {
        let stay = blind_agents(&[vec![[(0, Move::Stay); 3]]]);
        let b = build_1barrier(&oscillator(), &TrapConfig { verify: false, ..quick() }).unwrap();
        let m = derive_macro_agent(&stay, &[0], &b, &quick()).unwrap();
        // Three back-labels give three configurations, none of which moves.
        assert!(m.transitions.iter().all(Option::is_none));
        assert_eq!(m.alpha, 3);
    }

    #[test]
    fn trap_for_the_oscillator() {
        let t = build_trap(&oscillator(), &quick()).unwrap();
        assert_eq!(t.vertices, 2 * t.barrier.vertices + 4);
        let ev = verify_trap(&t.graph, &oscillator(), t.start, 100_000).unwrap();
        assert!(ev.trapped && ev.reconfirmed);
        assert!(ev.unvisited.contains(&t.beyond[0]) && ev.unvisited.contains(&t.beyond[1]));
    }

    #[test]
    fn block_labels_follow_the_picture() {
        let t = build_trap(&oscillator(), &TrapConfig { verify: false, ..quick() }).unwrap();
        let s = t.start;
        let labels: Vec<usize> = (0..3).map(|p| t.graph.half(s, p).port).collect();
        assert_eq!(labels, vec![0, 1, 2]);
        let a1 = t.graph.half(s, 2).to;
        assert!(t.graph.half(a1, 0).to < 2 * t.barrier.vertices);
    }

    #[test]
    fn combinations_are_lexicographic() {
        assert_eq!(combinations(3, 2), vec![vec![0, 1], vec![0, 2], vec![1, 2]]);
        assert_eq!(combinations(2, 3), Vec::<Vec<usize>>::new());
    }

    #[test]
    fn document_round_trip() {
        let spec = random_cooperative(2, 2, 5);
        let doc = CoopAgentsDoc::from_spec(&spec);
        let json = serde_json::to_string(&doc).unwrap();
        let back: CoopAgentsDoc = serde_json::from_str(&json).unwrap();
        assert_eq!(back.load().unwrap(), spec);
    }
}
