//! Execution semantics for single agents (with pebbles), synchronous cooperating
//! agent sets and pebble machines, with traces and period detection.
//!
//! Pebble sets are bitmasks: bit `j` is pebble `j + 1` in documents.

use crate::graph::PortLabeledGraph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use thiserror::Error;

pub type PebbleSet = u32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AgentError {
    #[error("undefined transition for {0}")]
    Undefined(String),
    #[error("invalid transition {0}")]
    InvalidRow(String),
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("compute watchdog exceeded ({0} steps) in state {1}")]
    Watchdog(u64, String),
    #[error("{0}")]
    Document(String),
}

/// An exit port or staying put.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Move {
    Port(usize),
    Stay,
}

impl Move {
    pub fn port(self) -> Option<usize> {
        match self {
            Move::Port(p) => Some(p),
            Move::Stay => None,
        }
    }
}

impl Serialize for Move {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Move::Port(p) => s.serialize_u64(*p as u64),
            Move::Stay => s.serialize_str("stay"),
        }
    }
}

impl<'de> Deserialize<'de> for Move {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Port(usize),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Port(p) => Ok(Move::Port(p)),
            Raw::Word(w) if w == "stay" => Ok(Move::Stay),
            Raw::Word(w) => Err(serde::de::Error::custom(format!("expected a port or \"stay\", got `{w}`"))),
        }
    }
}

/// Transition input; no vertex identity can appear here.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Observation {
    pub state: usize,
    pub degree: usize,
    pub back: usize,
    pub carried: PebbleSet,
    pub at_vertex: PebbleSet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Action {
    pub state: usize,
    pub mv: Move,
    pub carried: PebbleSet,
    pub at_vertex: PebbleSet,
}

pub fn pebble_list(set: PebbleSet) -> Vec<usize> {
    (0..32).filter(|j| set >> j & 1 == 1).map(|j| j + 1).collect()
}

fn pebble_mask(list: &[usize], pebbles: usize) -> Result<PebbleSet, AgentError> {
    list.iter().try_fold(0, |m, &p| {
        if p == 0 || p > pebbles {
            Err(AgentError::Document(format!("pebble {p} outside 1..={pebbles}")))
        } else {
            Ok(m | 1 << (p - 1))
        }
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AgentSpec {
    pub states: Vec<String>,
    pub halting: Vec<bool>,
    pub start: usize,
    pub pebbles: usize,
    pub table: HashMap<Observation, Action>,
}

impl AgentSpec {
    pub fn new(states: Vec<String>, halting: Vec<bool>, start: usize, pebbles: usize) -> Self {
        assert_eq!(states.len(), halting.len());
        assert!(pebbles <= 32);
        AgentSpec { states, halting, start, pebbles, table: HashMap::new() }
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn all_pebbles(&self) -> PebbleSet {
        if self.pebbles == 32 {
            u32::MAX
        } else {
            (1u32 << self.pebbles) - 1
        }
    }

    pub fn state_index(&self, name: &str) -> Result<usize, AgentError> {
        self.states.iter().position(|s| s == name).ok_or_else(|| AgentError::UnknownState(name.into()))
    }

    /// Adds a row after checking disjointness, conservation and the port range.
    pub fn insert(&mut self, o: Observation, a: Action) -> Result<(), AgentError> {
        let all = self.all_pebbles();
        let bad = o.carried & o.at_vertex != 0
            || (o.carried | o.at_vertex) & !all != 0
            || a.carried & a.at_vertex != 0
            || a.carried | a.at_vertex != o.carried | o.at_vertex
            || o.state >= self.states.len()
            || a.state >= self.states.len()
            || o.back >= o.degree.max(1)
            || matches!(a.mv, Move::Port(p) if p >= o.degree);
        if bad {
            return Err(AgentError::InvalidRow(format!("{o:?} -> {a:?}")));
        }
        self.table.insert(o, a);
        Ok(())
    }

    pub fn step(&self, o: &Observation) -> Result<Action, AgentError> {
        self.table.get(o).copied().ok_or_else(|| AgentError::Undefined(self.describe(o)))
    }

    fn describe(&self, o: &Observation) -> String {
        format!(
            "(state {}, degree {}, back {}, carried {:?}, at vertex {:?})",
            self.states[o.state],
            o.degree,
            o.back,
            pebble_list(o.carried),
            pebble_list(o.at_vertex)
        )
    }

    /// Degrees appearing in the table.
    pub fn degrees(&self) -> Vec<usize> {
        let mut d: Vec<usize> = self.table.keys().map(|o| o.degree).collect();
        d.sort_unstable();
        d.dedup();
        d
    }
}

/// Wildcard-capable integer in documents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Slot {
    Exact(usize),
    Any(AnyWord),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnyWord {
    Any,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RowDoc {
    pub state: String,
    pub degree: Slot,
    pub back: Slot,
    #[serde(default)]
    pub carried: Vec<usize>,
    #[serde(default)]
    pub at_vertex: Vec<usize>,
    pub next: String,
    #[serde(rename = "move")]
    pub mv: Move,
    #[serde(default)]
    pub carried_out: Vec<usize>,
    #[serde(default)]
    pub at_vertex_out: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentDoc {
    pub states: Vec<String>,
    #[serde(default)]
    pub halting: Vec<String>,
    pub start: String,
    #[serde(default)]
    pub pebbles: usize,
    pub transitions: Vec<RowDoc>,
}

impl AgentDoc {
    /// Expands wildcard rows for degrees `1..=max_degree`; a wildcard row skips degrees
    /// its port move does not fit. Later rows override earlier ones.
    pub fn load(&self, max_degree: usize) -> Result<AgentSpec, AgentError> {
        let halting = self.states.iter().map(|s| self.halting.contains(s)).collect();
        let mut spec = AgentSpec::new(self.states.clone(), halting, 0, self.pebbles);
        spec.start = spec.state_index(&self.start)?;
        for h in &self.halting {
            spec.state_index(h)?;
        }
        for row in &self.transitions {
            let state = spec.state_index(&row.state)?;
            let next = spec.state_index(&row.next)?;
            let degrees: Vec<usize> = match row.degree {
                Slot::Exact(d) => vec![d],
                Slot::Any(_) => (1..=max_degree).filter(|&d| row.mv.port().is_none_or(|p| p < d)).collect(),
            };
            for d in degrees {
                let backs: Vec<usize> = match row.back {
                    Slot::Exact(b) => vec![b],
                    Slot::Any(_) => (0..d.max(1)).collect(),
                };
                for back in backs {
                    let o = Observation {
                        state,
                        degree: d,
                        back,
                        carried: pebble_mask(&row.carried, self.pebbles)?,
                        at_vertex: pebble_mask(&row.at_vertex, self.pebbles)?,
                    };
                    let a = Action {
                        state: next,
                        mv: row.mv,
                        carried: pebble_mask(&row.carried_out, self.pebbles)?,
                        at_vertex: pebble_mask(&row.at_vertex_out, self.pebbles)?,
                    };
                    spec.insert(o, a)?;
                }
            }
        }
        Ok(spec)
    }

    /// Explicit rows in a canonical order.
    pub fn from_spec(spec: &AgentSpec) -> Self {
        let mut rows: Vec<(&Observation, &Action)> = spec.table.iter().collect();
        rows.sort_by_key(|(o, _)| **o);
        AgentDoc {
            states: spec.states.clone(),
            halting: spec.states.iter().zip(&spec.halting).filter(|(_, &h)| h).map(|(s, _)| s.clone()).collect(),
            start: spec.states[spec.start].clone(),
            pebbles: spec.pebbles,
            transitions: rows
                .into_iter()
                .map(|(o, a)| RowDoc {
                    state: spec.states[o.state].clone(),
                    degree: Slot::Exact(o.degree),
                    back: Slot::Exact(o.back),
                    carried: pebble_list(o.carried),
                    at_vertex: pebble_list(o.at_vertex),
                    next: spec.states[a.state].clone(),
                    mv: a.mv,
                    carried_out: pebble_list(a.carried),
                    at_vertex_out: pebble_list(a.at_vertex),
                })
                .collect(),
        }
    }
}

/// A random agent whose table is total for degrees `1..=max_degree`.
/// State `s - 1` is halting when `with_halting` is set.
pub fn random_agent(states: usize, pebbles: usize, max_degree: usize, with_halting: bool, seed: u64) -> AgentSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names = (0..states).map(|i| format!("s{i}")).collect();
    let halting = (0..states).map(|i| with_halting && states > 1 && i == states - 1).collect();
    let mut spec = AgentSpec::new(names, halting, 0, pebbles);
    let all = spec.all_pebbles();
    for state in 0..states {
        for degree in 1..=max_degree {
            for back in 0..degree {
                for carried in 0..=all {
                    // at_vertex ranges over subsets of the pebbles not carried
                    let rest = all & !carried;
                    let mut at = rest;
                    loop {
                        let here = carried | at;
                        let keep: PebbleSet = rng.gen::<u32>() & here;
                        let mv = if rng.gen_bool(0.15) { Move::Stay } else { Move::Port(rng.gen_range(0..degree)) };
                        let o = Observation { state, degree, back, carried, at_vertex: at };
                        let a = Action { state: rng.gen_range(0..states), mv, carried: keep, at_vertex: here & !keep };
                        spec.insert(o, a).expect("generated rows are well formed");
                        if at == 0 {
                            break;
                        }
                        at = (at - 1) & rest;
                    }
                }
            }
        }
    }
    spec
}

/// A random pebble machine, total for degrees `0..=max_degree`. Halting states `h0..`
/// (the last one terminal) precede compute states `c0..`; δ_TM only moves to a later
/// compute state or to a halting state, so every computation phase ends within `compute` steps.
pub fn random_pebble_machine(halting: usize, compute: usize, pebbles: usize, tape_len: usize, max_degree: usize, seed: u64) -> PebbleMachine {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let halting = halting.max(2);
    let states: Vec<String> = (0..halting).map(|i| format!("h{i}")).chain((0..compute).map(|i| format!("c{i}"))).collect();
    let total = states.len();
    let terminal: Vec<bool> = (0..total).map(|i| i == halting - 1).collect();
    let mut t = PebbleMachine {
        states,
        halting: (0..total).map(|i| i < halting).collect(),
        terminal,
        start: 0,
        pebbles,
        tape_len,
        delta_in: HashMap::new(),
        delta_tm: HashMap::new(),
        delta_out: HashMap::new(),
    };
    let all: PebbleSet = if pebbles == 0 { 0 } else { (1 << pebbles) - 1 };
    let resting = |rng: &mut ChaCha8Rng| if rng.gen_bool(0.15) { halting - 1 } else { rng.gen_range(0..halting - 1) };
    for c in 0..compute {
        for a in [false, true] {
            let next = if c + 1 < compute && rng.gen_bool(0.6) { halting + rng.gen_range(c + 1..compute) } else { resting(&mut rng) };
            let dir = if rng.gen_bool(0.5) { HeadMove::Left } else { HeadMove::Right };
            t.delta_tm.insert((halting + c, a), (next, rng.gen(), dir));
        }
    }
    for state in 0..halting {
        for degree in 0..=max_degree {
            for back in 0..degree.max(1) {
                for carried in 0..=all {
                    let rest = all & !carried;
                    let mut at = rest;
                    loop {
                        let o = Observation { state, degree, back, carried, at_vertex: at };
                        if state != halting - 1 {
                            let q = if compute > 0 && rng.gen_bool(0.8) { halting + rng.gen_range(0..compute) } else { resting(&mut rng) };
                            t.delta_in.insert(o, q);
                        }
                        let here = carried | at;
                        let keep: PebbleSet = rng.gen::<u32>() & here;
                        let mv = if degree == 0 || rng.gen_bool(0.15) { Move::Stay } else { Move::Port(rng.gen_range(0..degree)) };
                        t.delta_out.insert(o, Action { state, mv, carried: keep, at_vertex: here & !keep });
                        if at == 0 {
                            break;
                        }
                        at = (at - 1) & rest;
                    }
                }
            }
        }
    }
    t
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Move,
    Stay,
    Compute,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub agent: usize,
    pub vertex: usize,
    pub state: usize,
    pub back: usize,
    pub kind: ActionKind,
    pub edge: Option<usize>,
    /// Bitmask of pebbles carried after the step.
    pub carried: PebbleSet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
pub struct AgentConf {
    pub state: usize,
    pub pos: usize,
    pub back: usize,
}

/// Pigeonhole key: every agent's (state, position, back-label) in index order,
/// the pebble placement (`None` = carried) and any machine-internal bytes.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SystemConfiguration {
    pub agents: Vec<AgentConf>,
    pub pebbles: Vec<Option<usize>>,
    pub extra: Vec<u8>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub records: Vec<StepRecord>,
    /// Configuration before step 0 and after every synchronous step.
    pub configs: Vec<SystemConfiguration>,
    pub edge_traversals: u64,
    pub computation_steps: u64,
    pub halted: bool,
    pub head_clamps: u64,
}

impl Trace {
    /// Edge sequence of one agent.
    pub fn edges_of(&self, agent: usize) -> Vec<usize> {
        self.records.iter().filter(|r| r.agent == agent).filter_map(|r| r.edge).collect()
    }

    pub fn visited(&self, n: usize) -> Vec<bool> {
        let mut seen = vec![false; n];
        for c in &self.configs {
            for a in &c.agents {
                seen[a.pos] = true;
            }
        }
        seen
    }

    pub fn final_config(&self) -> &SystemConfiguration {
        self.configs.last().expect("trace has an initial configuration")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,agent,vertex,state,back,kind,edge,carried\n");
        for r in &self.records {
            let kind = match r.kind {
                ActionKind::Move => "move",
                ActionKind::Stay => "stay",
                ActionKind::Compute => "compute",
            };
            let edge = r.edge.map(|e| e.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{},{},{},{},{},{}\n", r.step, r.agent, r.vertex, r.state, r.back, kind, edge, r.carried));
        }
        out
    }
}

/// Pebbles at `v` according to a placement.
pub fn pebbles_at(placement: &[Option<usize>], v: usize) -> PebbleSet {
    placement.iter().enumerate().filter(|(_, p)| **p == Some(v)).fold(0, |m, (j, _)| m | 1 << j)
}

fn carried_set(placement: &[Option<usize>]) -> PebbleSet {
    placement.iter().enumerate().filter(|(_, p)| p.is_none()).fold(0, |m, (j, _)| m | 1 << j)
}

fn apply_pebbles(placement: &mut [Option<usize>], v: usize, a_carried: PebbleSet, a_at: PebbleSet) {
    for (j, p) in placement.iter_mut().enumerate() {
        if a_carried >> j & 1 == 1 {
            *p = None;
        } else if a_at >> j & 1 == 1 {
            *p = Some(v);
        }
    }
}

/// Runs one agent from `start` with every pebble carried and back-label 0.
/// Stops before stepping from a halting state, or after `max_steps` steps.
pub fn run_single(agent: &AgentSpec, g: &PortLabeledGraph, start: usize, max_steps: u64) -> Result<Trace, AgentError> {
    let mut placement: Vec<Option<usize>> = vec![None; agent.pebbles];
    let mut conf = AgentConf { state: agent.start, pos: start, back: 0 };
    let snapshot = |c: AgentConf, p: &[Option<usize>]| SystemConfiguration { agents: vec![c], pebbles: p.to_vec(), extra: Vec::new() };
    let mut t = Trace { configs: vec![snapshot(conf, &placement)], ..Trace::default() };
    for step in 0..max_steps {
        if agent.halting[conf.state] {
            t.halted = true;
            break;
        }
        let o = Observation {
            state: conf.state,
            degree: g.degree(conf.pos),
            back: conf.back,
            carried: carried_set(&placement),
            at_vertex: pebbles_at(&placement, conf.pos),
        };
        let a = agent.step(&o)?;
        apply_pebbles(&mut placement, conf.pos, a.carried, a.at_vertex);
        conf.state = a.state;
        let edge = a.mv.port().map(|p| {
            let h = g.half(conf.pos, p);
            conf.pos = h.to;
            conf.back = h.port;
            t.edge_traversals += 1;
            h.edge
        });
        t.records.push(StepRecord {
            step,
            agent: 0,
            vertex: conf.pos,
            state: conf.state,
            back: conf.back,
            kind: if edge.is_some() { ActionKind::Move } else { ActionKind::Stay },
            edge,
            carried: carried_set(&placement),
        });
        t.configs.push(snapshot(conf, &placement));
    }
    if agent.halting[conf.state] {
        t.halted = true;
    }
    Ok(t)
}

/// Input of a cooperating agent: own state, the co-located states of the others
/// (`None` when elsewhere, index order without self), degree and back-label.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CoopKey {
    pub state: usize,
    pub visible: Vec<Option<usize>>,
    pub degree: usize,
    pub back: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoopAgent {
    pub states: Vec<String>,
    pub halting: Vec<bool>,
    pub start: usize,
    pub table: HashMap<CoopKey, (usize, Move)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CooperativeAgentSpec {
    pub agents: Vec<CoopAgent>,
}

impl CooperativeAgentSpec {
    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }
}

/// Visible vector of agent `i` in a pre-step snapshot.
pub fn visible_vector(confs: &[AgentConf], i: usize) -> Vec<Option<usize>> {
    confs.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, c)| (c.pos == confs[i].pos).then_some(c.state)).collect()
}

/// Runs a cooperating set, all starting at `start` with back-label 0. Every agent
/// observes the pre-step snapshot, then all transition; stops when all are halting.
pub fn run_cooperative(spec: &CooperativeAgentSpec, g: &PortLabeledGraph, start: usize, max_steps: u64) -> Result<Trace, AgentError> {
    let mut confs: Vec<AgentConf> = spec.agents.iter().map(|a| AgentConf { state: a.start, pos: start, back: 0 }).collect();
    let snapshot = |c: &[AgentConf]| SystemConfiguration { agents: c.to_vec(), pebbles: Vec::new(), extra: Vec::new() };
    let mut t = Trace { configs: vec![snapshot(&confs)], ..Trace::default() };
    let all_halting = |c: &[AgentConf]| c.iter().zip(&spec.agents).all(|(c, a)| a.halting[c.state]);
    for step in 0..max_steps {
        if all_halting(&confs) {
            break;
        }
        let mut next = confs.clone();
        for (i, a) in spec.agents.iter().enumerate() {
            let c = confs[i];
            let key = CoopKey { state: c.state, visible: visible_vector(&confs, i), degree: g.degree(c.pos), back: c.back };
            let &(state, mv) = a.table.get(&key).ok_or_else(|| AgentError::Undefined(format!("agent {i}: {key:?}")))?;
            let n = &mut next[i];
            n.state = state;
            let edge = match mv {
                Move::Port(p) if p < key.degree => {
                    let h = g.half(c.pos, p);
                    n.pos = h.to;
                    n.back = h.port;
                    t.edge_traversals += 1;
                    Some(h.edge)
                }
                Move::Port(p) => return Err(AgentError::InvalidRow(format!("agent {i}: port {p} at degree {}", key.degree))),
                Move::Stay => None,
            };
            t.records.push(StepRecord {
                step,
                agent: i,
                vertex: n.pos,
                state,
                back: n.back,
                kind: if edge.is_some() { ActionKind::Move } else { ActionKind::Stay },
                edge,
                carried: 0,
            });
        }
        confs = next;
        t.configs.push(snapshot(&confs));
    }
    t.halted = all_halting(&confs);
    Ok(t)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadMove {
    Left,
    Right,
}

/// Pebble machine: Turing states, tape of `tape_len` bits, and the three transition maps.
/// The machine stops before a macro step whose current state is `terminal`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PebbleMachine {
    pub states: Vec<String>,
    pub halting: Vec<bool>,
    pub terminal: Vec<bool>,
    pub start: usize,
    pub pebbles: usize,
    pub tape_len: usize,
    pub delta_in: HashMap<Observation, usize>,
    pub delta_tm: HashMap<(usize, bool), (usize, bool, HeadMove)>,
    /// Keyed by (halting state, degree, back, carried, at vertex); the output state field is unused.
    pub delta_out: HashMap<Observation, Action>,
}

/// Turing part of a pebble machine configuration.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MachineTape {
    pub bits: Vec<bool>,
    pub head: usize,
}

impl PebbleMachine {
    /// |Q|·m·2^m, saturating.
    pub fn watchdog(&self) -> u64 {
        let m = self.tape_len as u32;
        (self.states.len() as u64).saturating_mul(self.tape_len.max(1) as u64).saturating_mul(1u64.checked_shl(m).unwrap_or(u64::MAX))
    }

    /// The machine that terminates immediately.
    pub fn trivial(tape_len: usize) -> Self {
        PebbleMachine {
            states: vec!["done".into()],
            halting: vec![true],
            terminal: vec![true],
            start: 0,
            pebbles: 0,
            tape_len,
            delta_in: HashMap::new(),
            delta_tm: HashMap::new(),
            delta_out: HashMap::new(),
        }
    }

    /// δ_TM from `q` until a halting state; returns the final state and the step count.
    /// A left move at cell 0 or a right move at the last cell clamps and is counted in `clamps`.
    pub fn compute(&self, q: usize, tape: &mut MachineTape, clamps: &mut u64) -> Result<(usize, u64), AgentError> {
        let mut q = q;
        let mut steps = 0u64;
        let limit = self.watchdog();
        while !self.halting[q] {
            if steps >= limit {
                return Err(AgentError::Watchdog(steps, self.states[q].clone()));
            }
            let a = tape.bits[tape.head];
            let &(q2, b, d) = self
                .delta_tm
                .get(&(q, a))
                .ok_or_else(|| AgentError::Undefined(format!("delta_tm({}, {})", self.states[q], a as u8)))?;
            tape.bits[tape.head] = b;
            match d {
                HeadMove::Left if tape.head == 0 => *clamps += 1,
                HeadMove::Left => tape.head -= 1,
                HeadMove::Right if tape.head + 1 >= self.tape_len => *clamps += 1,
                HeadMove::Right => tape.head += 1,
            }
            q = q2;
            steps += 1;
        }
        Ok((q, steps))
    }

    pub fn input(&self, o: &Observation) -> Result<usize, AgentError> {
        self.delta_in.get(o).copied().ok_or_else(|| AgentError::Undefined(format!("delta_in{o:?}")))
    }

    pub fn output(&self, o: &Observation) -> Result<Action, AgentError> {
        self.delta_out.get(o).copied().ok_or_else(|| AgentError::Undefined(format!("delta_out{o:?}")))
    }
}

fn tape_bytes(t: &MachineTape) -> Vec<u8> {
    let mut v: Vec<u8> = t.bits.iter().map(|&b| b as u8).collect();
    v.extend_from_slice(&(t.head as u64).to_le_bytes());
    v
}

/// Runs a pebble machine: each macro step is δ_in, a maximal δ_TM run and δ_out.
/// `max_work` bounds edge traversals plus computation steps.
pub fn run_pebble_machine(t: &PebbleMachine, g: &PortLabeledGraph, start: usize, max_work: u64) -> Result<Trace, AgentError> {
    let mut placement: Vec<Option<usize>> = vec![None; t.pebbles];
    let mut tape = MachineTape { bits: vec![false; t.tape_len], head: 0 };
    let mut conf = AgentConf { state: t.start, pos: start, back: 0 };
    let snap = |c: AgentConf, p: &[Option<usize>], tape: &MachineTape| SystemConfiguration { agents: vec![c], pebbles: p.to_vec(), extra: tape_bytes(tape) };
    let mut tr = Trace { configs: vec![snap(conf, &placement, &tape)], ..Trace::default() };
    let mut step = 0u64;
    while tr.edge_traversals + tr.computation_steps < max_work {
        if t.terminal[conf.state] {
            tr.halted = true;
            break;
        }
        let mut o = Observation {
            state: conf.state,
            degree: g.degree(conf.pos),
            back: conf.back,
            carried: carried_set(&placement),
            at_vertex: pebbles_at(&placement, conf.pos),
        };
        let q = t.input(&o)?;
        let before = tr.computation_steps;
        let (q, n) = t.compute(q, &mut tape, &mut tr.head_clamps)?;
        tr.computation_steps += n;
        for k in 0..n {
            tr.records.push(StepRecord {
                step: before + k,
                agent: 0,
                vertex: conf.pos,
                state: q,
                back: conf.back,
                kind: ActionKind::Compute,
                edge: None,
                carried: o.carried,
            });
        }
        o.state = q;
        let a = t.output(&o)?;
        apply_pebbles(&mut placement, conf.pos, a.carried, a.at_vertex);
        conf.state = q;
        let edge = a.mv.port().map(|p| {
            let h = g.half(conf.pos, p);
            conf.pos = h.to;
            conf.back = h.port;
            tr.edge_traversals += 1;
            h.edge
        });
        tr.records.push(StepRecord {
            step,
            agent: 0,
            vertex: conf.pos,
            state: q,
            back: conf.back,
            kind: if edge.is_some() { ActionKind::Move } else { ActionKind::Stay },
            edge,
            carried: carried_set(&placement),
        });
        step += 1;
        tr.configs.push(snap(conf, &placement, &tape));
    }
    if t.terminal[conf.state] {
        tr.halted = true;
    }
    Ok(tr)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Period {
    pub preperiod: usize,
    pub period: usize,
}

/// Least (preperiod, period) with configs[pre] == configs[pre + period].
pub fn detect_period(trace: &Trace) -> Option<Period> {
    let mut first: HashMap<&SystemConfiguration, usize> = HashMap::new();
    for (i, c) in trace.configs.iter().enumerate() {
        if let Some(&j) = first.get(c) {
            return Some(Period { preperiod: j, period: i - j });
        }
        first.insert(c, i);
    }
    None
}

/// Table-row document for pebble machines.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineDoc {
    pub states: Vec<String>,
    pub halting: Vec<String>,
    #[serde(default)]
    pub terminal: Vec<String>,
    pub start: String,
    #[serde(default)]
    pub pebbles: usize,
    pub tape_len: usize,
    pub delta_in: Vec<MachineInRow>,
    pub delta_tm: Vec<MachineTmRow>,
    pub delta_out: Vec<MachineOutRow>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineInRow {
    pub state: String,
    pub degree: Slot,
    pub back: Slot,
    #[serde(default)]
    pub carried: Vec<usize>,
    #[serde(default)]
    pub at_vertex: Vec<usize>,
    pub next: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineTmRow {
    pub state: String,
    pub read: u8,
    pub next: String,
    pub write: u8,
    pub head: HeadMove,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineOutRow {
    pub state: String,
    pub degree: Slot,
    pub back: Slot,
    #[serde(default)]
    pub carried: Vec<usize>,
    #[serde(default)]
    pub at_vertex: Vec<usize>,
    #[serde(rename = "move")]
    pub mv: Move,
    #[serde(default)]
    pub carried_out: Vec<usize>,
    #[serde(default)]
    pub at_vertex_out: Vec<usize>,
}

fn expand(degree: Slot, back: Slot, mv: Option<Move>, max_degree: usize) -> Vec<(usize, usize)> {
    let degrees: Vec<usize> = match degree {
        Slot::Exact(d) => vec![d],
        Slot::Any(_) => (1..=max_degree).filter(|&d| mv.and_then(Move::port).is_none_or(|p| p < d)).collect(),
    };
    degrees
        .into_iter()
        .flat_map(|d| {
            let backs: Vec<usize> = match back {
                Slot::Exact(b) => vec![b],
                Slot::Any(_) => (0..d.max(1)).collect(),
            };
            backs.into_iter().map(move |b| (d, b))
        })
        .collect()
}

impl MachineDoc {
    pub fn load(&self, max_degree: usize) -> Result<PebbleMachine, AgentError> {
        let idx = |s: &str| self.states.iter().position(|x| x == s).ok_or_else(|| AgentError::UnknownState(s.into()));
        let flag = |list: &[String]| -> Result<Vec<bool>, AgentError> {
            for s in list {
                idx(s)?;
            }
            Ok(self.states.iter().map(|s| list.contains(s)).collect())
        };
        let halting = flag(&self.halting)?;
        let terminal = flag(&self.terminal)?;
        let mut m = PebbleMachine {
            states: self.states.clone(),
            halting,
            terminal,
            start: idx(&self.start)?,
            pebbles: self.pebbles,
            tape_len: self.tape_len,
            delta_in: HashMap::new(),
            delta_tm: HashMap::new(),
            delta_out: HashMap::new(),
        };
        if m.tape_len == 0 {
            return Err(AgentError::Document("tape_len must be positive".into()));
        }
        for r in &self.delta_in {
            for (degree, back) in expand(r.degree, r.back, None, max_degree) {
                let o = Observation {
                    state: idx(&r.state)?,
                    degree,
                    back,
                    carried: pebble_mask(&r.carried, m.pebbles)?,
                    at_vertex: pebble_mask(&r.at_vertex, m.pebbles)?,
                };
                m.delta_in.insert(o, idx(&r.next)?);
            }
        }
        for r in &self.delta_tm {
            m.delta_tm.insert((idx(&r.state)?, r.read != 0), (idx(&r.next)?, r.write != 0, r.head));
        }
        for r in &self.delta_out {
            let q = idx(&r.state)?;
            if !m.halting[q] {
                return Err(AgentError::Document(format!("delta_out row for non-halting state {}", r.state)));
            }
            for (degree, back) in expand(r.degree, r.back, Some(r.mv), max_degree) {
                let o = Observation {
                    state: q,
                    degree,
                    back,
                    carried: pebble_mask(&r.carried, m.pebbles)?,
                    at_vertex: pebble_mask(&r.at_vertex, m.pebbles)?,
                };
                let a = Action {
                    state: q,
                    mv: r.mv,
                    carried: pebble_mask(&r.carried_out, m.pebbles)?,
                    at_vertex: pebble_mask(&r.at_vertex_out, m.pebbles)?,
                };
                if a.carried & a.at_vertex != 0 || a.carried | a.at_vertex != o.carried | o.at_vertex {
                    return Err(AgentError::InvalidRow(format!("delta_out {o:?} -> {a:?}")));
                }
                m.delta_out.insert(o, a);
            }
        }
        Ok(m)
    }
}

/// Counts of a run by action kind; handy for summaries.
pub fn kind_counts(trace: &Trace) -> BTreeMap<&'static str, u64> {
    let mut m = BTreeMap::new();
    for r in &trace.records {
        let k = match r.kind {
            ActionKind::Move => "move",
            ActionKind::Stay => "stay",
            ActionKind::Compute => "compute",
        };
        *m.entry(k).or_insert(0) += 1;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{k4, prism};

    fn port0() -> AgentSpec {
        let doc: AgentDoc = serde_json::from_str(
            r#"{"states":["go"],"start":"go","transitions":[
                {"state":"go","degree":"any","back":"any","next":"go","move":0}]}"#,
        )
        .unwrap();
        doc.load(3).unwrap()
    }

    #[test]
    fn port0_oscillates_on_k4() {
        let t = run_single(&port0(), &k4(), 2, 50).unwrap();
        assert_eq!(t.visited(4).iter().filter(|&&b| b).count(), 2);
        assert_eq!(detect_period(&t), Some(Period { preperiod: 0, period: 2 }));
    }

    #[test]
    fn immediate_halt_has_no_moves() {
        let doc: AgentDoc = serde_json::from_str(r#"{"states":["h"],"halting":["h"],"start":"h","transitions":[]}"#).unwrap();
        let t = run_single(&doc.load(3).unwrap(), &k4(), 0, 10).unwrap();
        assert!(t.halted && t.records.is_empty());
    }

    #[test]
    fn pebble_is_seen_on_return() {
        let doc: AgentDoc = serde_json::from_str(
            r#"{"states":["drop","back","look","done"],"halting":["done"],"start":"drop","pebbles":1,"transitions":[
              {"state":"drop","degree":3,"back":0,"carried":[1],"next":"back","move":0,"at_vertex_out":[1]},
              {"state":"back","degree":3,"back":"any","next":"look","move":0},
              {"state":"look","degree":3,"back":0,"at_vertex":[1],"next":"done","move":"stay","at_vertex_out":[1]}]}"#,
        )
        .unwrap();
        let a = doc.load(3).unwrap();
        let t = run_single(&a, &prism(), 0, 10).unwrap();
        assert!(t.halted);
        let last = t.final_config();
        assert_eq!(last.agents[0].pos, 0);
        assert_eq!(pebbles_at(&last.pebbles, 0), 1);
    }

    #[test]
    fn undefined_transition_names_inputs() {
        let doc: AgentDoc = serde_json::from_str(r#"{"states":["a"],"start":"a","transitions":[]}"#).unwrap();
        let e = run_single(&doc.load(3).unwrap(), &k4(), 0, 3).unwrap_err();
        assert!(e.to_string().contains("degree 3"));
    }

    #[test]
    fn rejects_nonconserving_row() {
        let doc: AgentDoc = serde_json::from_str(
            r#"{"states":["a"],"start":"a","pebbles":1,"transitions":[
              {"state":"a","degree":3,"back":0,"carried":[1],"next":"a","move":0}]}"#,
        )
        .unwrap();
        assert!(matches!(doc.load(3), Err(AgentError::InvalidRow(_))));
    }

    #[test]
    fn doc_roundtrip() {
        let a = random_agent(3, 2, 3, true, 9);
        let doc = AgentDoc::from_spec(&a);
        let json = serde_json::to_string(&doc).unwrap();
        let back: AgentDoc = serde_json::from_str(&json).unwrap();
        assert_eq!(back.load(3).unwrap(), a);
    }

    fn stayers(k: usize) -> CooperativeAgentSpec {
        let agents = (0..k)
            .map(|_| {
                let mut table = HashMap::new();
                let slots: Vec<Vec<Option<usize>>> = vec![vec![Some(0); k - 1]];
                for visible in slots {
                    for back in 0..3 {
                        table.insert(CoopKey { state: 0, visible: visible.clone(), degree: 3, back }, (0, Move::Stay));
                    }
                }
                CoopAgent { states: vec!["s".into()], halting: vec![false], start: 0, table }
            })
            .collect();
        CooperativeAgentSpec { agents }
    }

    #[test]
    fn stayers_have_period_one() {
        let t = run_cooperative(&stayers(3), &k4(), 1, 5).unwrap();
        assert!(t.configs.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(detect_period(&t), Some(Period { preperiod: 0, period: 1 }));
    }

    #[test]
    fn stayer_sees_mover_only_when_colocated() {
        // agent 0 alternates "out" (port 0) and "home" (back-label), agent 1 stays
        let mut mover = HashMap::new();
        let mut stayer = HashMap::new();
        for back in 0..3 {
            for vis in [None, Some(0)] {
                mover.insert(CoopKey { state: 0, visible: vec![vis], degree: 3, back }, (1, Move::Port(0)));
                mover.insert(CoopKey { state: 1, visible: vec![vis], degree: 3, back }, (0, Move::Port(back)));
            }
            for vis in [None, Some(0), Some(1)] {
                stayer.insert(CoopKey { state: 0, visible: vec![vis], degree: 3, back }, (0, Move::Stay));
            }
        }
        let spec = CooperativeAgentSpec {
            agents: vec![
                CoopAgent { states: vec!["out".into(), "home".into()], halting: vec![false; 2], start: 0, table: mover },
                CoopAgent { states: vec!["s".into()], halting: vec![false], start: 0, table: stayer },
            ],
        };
        let t = run_cooperative(&spec, &prism(), 0, 6).unwrap();
        for (i, c) in t.configs.iter().enumerate() {
            let vis = visible_vector(&c.agents, 1);
            if i % 2 == 0 {
                assert_eq!(vis, vec![Some(0)]);
            } else {
                assert_eq!(vis, vec![None]);
            }
        }
    }

    /// Binary counter (LSB at cell 0) incremented once per vertex; head returns to 0.
    /// States: inc_i with head at i, ret_i walking back from i, ret_0 = "out".
    fn counter(m: usize) -> PebbleMachine {
        let mut states: Vec<String> = (0..m).map(|i| format!("inc{i}")).collect();
        states.push("out".into());
        states.extend((1..m).map(|i| format!("ret{i}")));
        let out = m;
        let ret = |i: usize| if i == 0 { out } else { m + i };
        let mut halting = vec![false; states.len()];
        halting[out] = true;
        let mut tm = HashMap::new();
        for i in 0..m {
            if i + 1 < m {
                tm.insert((i, true), (i + 1, false, HeadMove::Right));
            } else {
                tm.insert((i, true), (ret(i - 1), false, HeadMove::Left));
            }
            if i == 0 {
                tm.insert((0, false), (ret(1), true, HeadMove::Right));
            } else {
                tm.insert((i, false), (ret(i - 1), true, HeadMove::Left));
            }
        }
        for i in 1..m {
            for b in [false, true] {
                tm.insert((ret(i), b), (ret(i - 1), b, HeadMove::Left));
            }
        }
        let mut delta_in = HashMap::new();
        let mut delta_out = HashMap::new();
        for back in 0..3 {
            let o = Observation { state: out, degree: 3, back, carried: 0, at_vertex: 0 };
            delta_in.insert(o, 0);
            delta_out.insert(o, Action { state: out, mv: Move::Port(0), carried: 0, at_vertex: 0 });
        }
        PebbleMachine {
            states,
            halting,
            terminal: vec![false; 2 * m],
            start: out,
            pebbles: 0,
            tape_len: m,
            delta_in,
            delta_tm: tm,
            delta_out,
        }
    }

    #[test]
    fn counter_wraps_after_two_to_the_m() {
        let m = 3;
        let tr = run_pebble_machine(&counter(m), &k4(), 0, 400).unwrap();
        let tapes: Vec<Vec<u8>> = tr.configs.iter().map(|c| c.extra[..m].to_vec()).collect();
        assert_eq!(tapes[1], vec![1, 0, 0]);
        assert_eq!(tapes[6], vec![0, 1, 1]);
        assert_eq!(tapes[1 << m], vec![0; m]);
        assert!(tr.configs.iter().all(|c| c.extra[m] == 0));
        assert_eq!(tr.head_clamps, 0);
    }

    #[test]
    fn oscillating_machine_computes_nothing() {
        let doc: MachineDoc = serde_json::from_str(
            r#"{"states":["q"],"halting":["q"],"start":"q","tape_len":2,
                "delta_in":[{"state":"q","degree":"any","back":"any","next":"q"}],
                "delta_tm":[],
                "delta_out":[{"state":"q","degree":"any","back":"any","move":0}]}"#,
        )
        .unwrap();
        let t = run_pebble_machine(&doc.load(3).unwrap(), &k4(), 0, 20).unwrap();
        assert_eq!(t.computation_steps, 0);
        assert_eq!(t.edge_traversals, 20);
        assert_eq!(detect_period(&t).unwrap().period, 2);
    }

    #[test]
    fn watchdog_catches_loops() {
        let doc: MachineDoc = serde_json::from_str(
            r#"{"states":["q","h"],"halting":["h"],"start":"h","tape_len":2,
                "delta_in":[{"state":"h","degree":"any","back":"any","next":"q"}],
                "delta_tm":[{"state":"q","read":0,"next":"q","write":0,"head":"right"}],
                "delta_out":[]}"#,
        )
        .unwrap();
        assert!(matches!(run_pebble_machine(&doc.load(3).unwrap(), &k4(), 0, 1000), Err(AgentError::Watchdog(..))));
    }
}
