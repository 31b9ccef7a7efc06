//! Tape-halving simulation of pebble machines and the iterative-deepening explorer.
//!
//! A [`Machine`] runs against a [`Host`]: the physical [`World`] or the virtual
//! host a [`Simulator`] level presents to its inner machine. A real level stores
//! the inner tape in the ω-ids of its cell pebbles and keeps every register on its
//! own host tape; a fold level keeps the inner tape in its finite control. Both
//! first count distinct vertices along ω to decide whether the graph is already explored.

use crate::agent::{AgentError, HeadMove, Move, Observation, PebbleMachine};
use crate::corpus::NamedGraph;
use crate::graph::PortLabeledGraph;
use crate::sequences::{certificate_walk, exit_port, search_on, CorpusDescriptor, SearchStrategy};
use serde::Serialize;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("work budget of {0} exceeded")]
    Budget(u64),
    #[error("pebble {0} not found within two passes of the walk")]
    PebbleNotFound(usize),
    #[error("walk exhausted before a new vertex")]
    WalkExhausted,
    #[error("value {value} does not fit a {width}-bit register")]
    Overflow { value: u64, width: usize },
    #[error("layout: {0}")]
    Layout(String),
    #[error("pebble misuse: {0}")]
    Pebble(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

pub type SimResult<T> = Result<T, SimError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointKind {
    Compute,
    Macro,
}

/// What a machine perceives and can do; pebble ids are global to the physical world.
pub trait Host {
    fn degree(&mut self) -> SimResult<usize>;
    fn back(&mut self) -> SimResult<usize>;
    fn observe(&mut self, p: usize) -> SimResult<bool>;
    fn carrying(&mut self, p: usize) -> SimResult<bool>;
    fn drop_pebble(&mut self, p: usize) -> SimResult<()>;
    fn pick_pebble(&mut self, p: usize) -> SimResult<()>;
    fn traverse(&mut self, port: usize) -> SimResult<()>;
    fn read(&mut self, cell: usize) -> SimResult<bool>;
    fn write(&mut self, cell: usize, b: bool) -> SimResult<()>;
    fn tape_len(&self) -> usize;
    /// One finite-control computation step.
    fn tick(&mut self) -> SimResult<()>;
    fn checkpoint(&mut self, kind: CheckpointKind);
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Checkpoint {
    pub kind: CheckpointKind,
    pub pos: usize,
    pub placement: Vec<Option<usize>>,
    pub tape: Vec<bool>,
    pub edges_so_far: usize,
}

/// The physical graph, agent position, pebble placement (`None` = carried) and the
/// outermost machine's tape. Tape accesses and ticks are computation steps.
pub struct World<'g> {
    pub g: &'g PortLabeledGraph,
    pub start: usize,
    pub pos: usize,
    pub back_label: usize,
    pub placement: Vec<Option<usize>>,
    pub tape: Vec<bool>,
    pub edge_traversals: u64,
    pub computation_steps: u64,
    pub budget: u64,
    pub visited: Vec<bool>,
    pub edge_log: Option<Vec<usize>>,
    pub checkpoints: Option<Vec<Checkpoint>>,
}

impl<'g> World<'g> {
    pub fn new(g: &'g PortLabeledGraph, start: usize, pebbles: usize, tape_len: usize, budget: u64) -> Self {
        let mut visited = vec![false; g.vertex_count()];
        visited[start] = true;
        World {
            g,
            start,
            pos: start,
            back_label: 0,
            placement: vec![None; pebbles],
            tape: vec![false; tape_len],
            edge_traversals: 0,
            computation_steps: 0,
            budget,
            visited,
            edge_log: None,
            checkpoints: None,
        }
    }

    pub fn with_logs(mut self) -> Self {
        self.edge_log = Some(Vec::new());
        self.checkpoints = Some(Vec::new());
        self
    }

    pub fn work(&self) -> u64 {
        self.edge_traversals + self.computation_steps
    }

    fn charge_compute(&mut self) -> SimResult<()> {
        self.computation_steps += 1;
        if self.work() > self.budget {
            return Err(SimError::Budget(self.budget));
        }
        Ok(())
    }

    pub fn all_carried(&self) -> bool {
        self.placement.iter().all(Option::is_none)
    }

    pub fn all_carried_from(&self, first: usize) -> bool {
        self.placement[first..].iter().all(Option::is_none)
    }

    pub fn visited_count(&self) -> usize {
        self.visited.iter().filter(|&&b| b).count()
    }

    fn pebble(&self, p: usize) -> SimResult<Option<usize>> {
        self.placement.get(p).copied().ok_or_else(|| SimError::Pebble(format!("no pebble {p}")))
    }
}

impl Host for World<'_> {
    fn degree(&mut self) -> SimResult<usize> {
        Ok(self.g.degree(self.pos))
    }
    fn back(&mut self) -> SimResult<usize> {
        Ok(self.back_label)
    }
    fn observe(&mut self, p: usize) -> SimResult<bool> {
        Ok(self.pebble(p)? == Some(self.pos))
    }
    fn carrying(&mut self, p: usize) -> SimResult<bool> {
        Ok(self.pebble(p)?.is_none())
    }
    fn drop_pebble(&mut self, p: usize) -> SimResult<()> {
        if self.pebble(p)?.is_some() {
            return Err(SimError::Pebble(format!("drop of uncarried pebble {p}")));
        }
        self.placement[p] = Some(self.pos);
        Ok(())
    }
    fn pick_pebble(&mut self, p: usize) -> SimResult<()> {
        if self.pebble(p)? != Some(self.pos) {
            return Err(SimError::Pebble(format!("pebble {p} is not here")));
        }
        self.placement[p] = None;
        Ok(())
    }
    fn traverse(&mut self, port: usize) -> SimResult<()> {
        let d = self.g.degree(self.pos);
        if port >= d {
            return Err(SimError::Pebble(format!("port {port} at degree {d}")));
        }
        let h = self.g.half(self.pos, port);
        self.pos = h.to;
        self.back_label = h.port;
        self.visited[h.to] = true;
        self.edge_traversals += 1;
        if let Some(log) = &mut self.edge_log {
            log.push(h.edge);
        }
        if self.work() > self.budget {
            return Err(SimError::Budget(self.budget));
        }
        Ok(())
    }
    fn read(&mut self, cell: usize) -> SimResult<bool> {
        self.charge_compute()?;
        self.tape.get(cell).copied().ok_or_else(|| SimError::Layout(format!("cell {cell} outside tape {}", self.tape.len())))
    }
    fn write(&mut self, cell: usize, b: bool) -> SimResult<()> {
        self.charge_compute()?;
        let len = self.tape.len();
        *self.tape.get_mut(cell).ok_or_else(|| SimError::Layout(format!("cell {cell} outside tape {len}")))? = b;
        Ok(())
    }
    fn tape_len(&self) -> usize {
        self.tape.len()
    }
    fn tick(&mut self) -> SimResult<()> {
        self.charge_compute()
    }
    fn checkpoint(&mut self, kind: CheckpointKind) {
        if let Some(c) = &mut self.checkpoints {
            c.push(Checkpoint {
                kind,
                pos: self.pos,
                placement: self.placement.clone(),
                tape: self.tape.clone(),
                edges_so_far: self.edge_log.as_ref().map_or(0, Vec::len),
            });
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    ExploredAndReturned,
    ReproducedHostWalk,
}

pub trait Machine {
    fn tape_len(&self) -> usize;
    /// Pebbles used by this machine and everything it simulates.
    fn pebble_count(&self) -> usize;
    fn run(&mut self, host: &mut dyn Host) -> SimResult<Outcome>;
    fn as_simulator(&self) -> Option<&Simulator> {
        None
    }
}

/// A table pebble machine; its pebble `j` is world pebble `ids[j]`.
pub struct TableMachine {
    pub machine: PebbleMachine,
    pub ids: Vec<usize>,
    /// Stop after this many macro steps as if terminal; bounds non-terminating test machines.
    pub macro_limit: Option<u64>,
}

impl TableMachine {
    pub fn new(machine: PebbleMachine, ids: Vec<usize>) -> Self {
        TableMachine { machine, ids, macro_limit: None }
    }
}

impl Machine for TableMachine {
    fn tape_len(&self) -> usize {
        self.machine.tape_len
    }

    fn pebble_count(&self) -> usize {
        self.machine.pebbles
    }

    fn run(&mut self, host: &mut dyn Host) -> SimResult<Outcome> {
        let m = &self.machine;
        let mut q = m.start;
        let mut head = 0usize;
        let mut macros = 0u64;
        loop {
            if m.terminal[q] || self.macro_limit.is_some_and(|l| macros >= l) {
                return Ok(Outcome::ReproducedHostWalk);
            }
            let degree = host.degree()?;
            let back = host.back()?;
            let (mut carried, mut at_vertex) = (0u32, 0u32);
            for (j, &id) in self.ids.iter().enumerate() {
                if host.carrying(id)? {
                    carried |= 1 << j;
                } else if host.observe(id)? {
                    at_vertex |= 1 << j;
                }
            }
            let mut o = Observation { state: q, degree, back, carried, at_vertex };
            q = m.input(&o)?;
            let limit = m.watchdog();
            let mut steps = 0u64;
            while !m.halting[q] {
                if steps >= limit {
                    return Err(AgentError::Watchdog(steps, m.states[q].clone()).into());
                }
                let a = host.read(head)?;
                let &(q2, b, dir) =
                    m.delta_tm.get(&(q, a)).ok_or_else(|| AgentError::Undefined(format!("delta_tm({}, {})", m.states[q], a as u8)))?;
                host.write(head, b)?;
                head = match dir {
                    HeadMove::Left => head.saturating_sub(1),
                    HeadMove::Right => (head + 1).min(m.tape_len - 1),
                };
                q = q2;
                steps += 1;
                host.tick()?;
                host.checkpoint(CheckpointKind::Compute);
            }
            o.state = q;
            let act = m.output(&o)?;
            for (j, &id) in self.ids.iter().enumerate() {
                let (was, will) = (carried >> j & 1 == 1, act.carried >> j & 1 == 1);
                if was && !will {
                    host.drop_pebble(id)?;
                } else if !was && will {
                    host.pick_pebble(id)?;
                }
            }
            if let Move::Port(p) = act.mv {
                host.traverse(p)?;
            }
            host.checkpoint(CheckpointKind::Macro);
            macros += 1;
        }
    }
}

/// Host registers, each `width` bits on the level's own tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(usize)]
pub enum Reg {
    Walk,
    Steps,
    Id,
    Head,
    Steps2,
    Walk2,
    WBack,
    WBack2,
    Id2,
    Back,
    MoveLabel,
    Tmp,
}

/// Number of registers, i.e. tape blocks per level.
pub const REGISTER_COUNT: usize = 12;

/// World pebble ids of a level's role pebbles.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RolePebbles {
    pub start: usize,
    pub temp: usize,
    pub next: usize,
    /// p_0..p_{K-1}; empty for a fold level.
    pub cells: Vec<usize>,
}

impl RolePebbles {
    pub fn count(&self) -> usize {
        if self.cells.is_empty() {
            2
        } else {
            3 + self.cells.len()
        }
    }
}

/// Layout of one simulation level.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TapeLayout {
    /// Bits encoded per cell pebble; ω must reach 2^m1 distinct vertices.
    pub m1: usize,
    /// Simulated (inner) tape length.
    pub inner_tape: usize,
    /// ω as offsets.
    pub walk: Vec<i8>,
    /// Register width in bits.
    pub width: usize,
    /// Inner tape kept in finite control instead of pebbles.
    pub fold: bool,
    pub roles: RolePebbles,
}

impl TapeLayout {
    /// Register width covering walk positions, head positions, ids and ports up to 255.
    pub fn needed_width(walk_len: usize, inner_tape: usize, m1: usize) -> usize {
        let bits = |x: usize| (usize::BITS - x.leading_zeros()) as usize;
        bits(walk_len).max(bits(inner_tape)).max(m1 + 1).max(8)
    }

    pub fn tape_len(&self) -> usize {
        REGISTER_COUNT * self.width
    }

    /// `first_pebble` is the world id of p_start; the rest follow consecutively.
    pub fn new(m1: usize, inner_tape: usize, walk: Vec<i8>, fold: bool, first_pebble: usize) -> Self {
        let width = Self::needed_width(walk.len(), inner_tape, m1);
        let k = if fold { 0 } else { inner_tape.div_ceil(m1) };
        let roles = RolePebbles {
            start: first_pebble,
            temp: first_pebble + 1,
            next: first_pebble + 2,
            cells: (0..k).map(|i| first_pebble + 3 + i).collect(),
        };
        TapeLayout { m1, inner_tape, walk, width, fold, roles }
    }

    fn check(&self) -> SimResult<()> {
        if self.m1 == 0 || self.m1 >= 63 {
            return Err(SimError::Layout(format!("m1 = {} out of range", self.m1)));
        }
        if !self.fold && self.roles.cells.len() * self.m1 < self.inner_tape {
            return Err(SimError::Layout(format!("{} cell pebbles × {} bits < tape {}", self.roles.cells.len(), self.m1, self.inner_tape)));
        }
        if self.walk.len() >= 1 << self.width || self.inner_tape >= 1 << self.width {
            return Err(SimError::Layout("registers too narrow".into()));
        }
        Ok(())
    }
}

/// The Alg. 3–6 procedures of one level, operating on its host.
pub struct Level<'a> {
    pub host: &'a mut dyn Host,
    pub layout: &'a TapeLayout,
}

impl Level<'_> {
    fn cap(&self) -> u64 {
        (1u64 << self.layout.m1) - 1
    }

    pub fn get(&mut self, r: Reg) -> SimResult<u64> {
        let w = self.layout.width;
        let base = r as usize * w;
        let mut v = 0u64;
        for k in 0..w {
            if self.host.read(base + k)? {
                v |= 1 << k;
            }
        }
        Ok(v)
    }

    pub fn set(&mut self, r: Reg, v: u64) -> SimResult<()> {
        let w = self.layout.width;
        if v >> w != 0 {
            return Err(SimError::Overflow { value: v, width: w });
        }
        let base = r as usize * w;
        for k in 0..w {
            self.host.write(base + k, v >> k & 1 == 1)?;
        }
        Ok(())
    }

    /// One step along ω using the stored walk back-label; false at the end of ω.
    pub fn step(&mut self) -> SimResult<bool> {
        let cur = self.get(Reg::Walk)?;
        if cur as usize == self.layout.walk.len() {
            return Ok(false);
        }
        let e = self.layout.walk[cur as usize] as i64;
        self.host.tick()?;
        let d = self.host.degree()?;
        if d > 0 {
            let wb = self.get(Reg::WBack)? as usize;
            self.host.traverse(exit_port(wb, e, d))?;
            let b = self.host.back()?;
            self.set(Reg::WBack, b as u64)?;
        }
        self.set(Reg::Walk, cur + 1)?;
        let s = self.get(Reg::Steps)?;
        self.set(Reg::Steps, s + 1)
            .map(|_| true)
    }

    fn rewind(&mut self) -> SimResult<()> {
        self.set(Reg::Walk, 0)?;
        self.set(Reg::Steps, 0)?;
        self.set(Reg::WBack, 0)
    }

    /// Walks ω until `p` is here, wrapping at the end (ω is closed).
    pub fn find_pebble(&mut self, p: usize) -> SimResult<()> {
        let mut wraps = 0;
        while !self.host.observe(p)? {
            if !self.step()? {
                wraps += 1;
                if wraps > 2 {
                    return Err(SimError::PebbleNotFound(p));
                }
                self.rewind()?;
            }
        }
        Ok(())
    }

    /// Back to the marker, registers zeroed.
    pub fn restart(&mut self, marker: usize) -> SimResult<()> {
        self.find_pebble(marker)?;
        self.rewind()?;
        self.set(Reg::Id, 0)
    }

    /// Advances to the next vertex of ω not seen before on ω from the marker.
    /// R_id survives the inner restarts (saved in R_id′) and the walk back-label is restored with R_walk.
    pub fn next_distinct_vertex(&mut self, marker: usize) -> SimResult<()> {
        let id = self.get(Reg::Id)?;
        if id == self.cap() {
            return self.restart(marker);
        }
        self.set(Reg::Id, id + 1)?;
        let s = self.get(Reg::Steps)?;
        self.set(Reg::Steps2, s)?;
        let temp = self.layout.roles.temp;
        loop {
            if !self.step()? {
                return Err(SimError::WalkExhausted);
            }
            let s2 = self.get(Reg::Steps2)?;
            self.set(Reg::Steps2, s2 + 1)?;
            self.host.drop_pebble(temp)?;
            for (from, to) in [(Reg::Walk, Reg::Walk2), (Reg::WBack, Reg::WBack2), (Reg::Id, Reg::Id2)] {
                let v = self.get(from)?;
                self.set(to, v)?;
            }
            self.restart(marker)?;
            self.find_pebble(temp)?;
            self.host.pick_pebble(temp)?;
            for (from, to) in [(Reg::Walk2, Reg::Walk), (Reg::WBack2, Reg::WBack), (Reg::Id2, Reg::Id)] {
                let v = self.get(from)?;
                self.set(to, v)?;
            }
            if self.get(Reg::Steps)? == self.get(Reg::Steps2)? {
                return Ok(());
            }
        }
    }

    /// Number of distinct ω vertices strictly before `p`'s vertex.
    pub fn get_pebble_id(&mut self, p: usize, marker: usize) -> SimResult<u64> {
        self.restart(marker)?;
        let mut guard = 0u64;
        while !self.host.observe(p)? {
            self.next_distinct_vertex(marker)?;
            guard += 1;
            if guard > self.cap() + 1 {
                return Err(SimError::PebbleNotFound(p));
            }
        }
        self.get(Reg::Id)
    }

    /// Moves `p` to the vertex whose id is in R_tmp.
    pub fn put_pebble_at_id(&mut self, p: usize, marker: usize) -> SimResult<()> {
        self.find_pebble(p)?;
        self.host.pick_pebble(p)?;
        self.restart(marker)?;
        loop {
            let id = self.get(Reg::Tmp)?;
            if id == 0 {
                break;
            }
            self.set(Reg::Tmp, id - 1)?;
            self.next_distinct_vertex(marker)?;
        }
        self.host.drop_pebble(p)
    }

    fn head_split(&mut self) -> SimResult<(usize, usize)> {
        let h = self.get(Reg::Head)? as usize;
        self.host.tick()?;
        let m1 = self.layout.m1;
        Ok((h / m1, h % m1))
    }

    /// Bit R_head: bit j (weight 2^j) of the id of p_i.
    pub fn read_bit(&mut self) -> SimResult<bool> {
        let (i, j) = self.head_split()?;
        let p = *self.layout.roles.cells.get(i).ok_or_else(|| SimError::Layout(format!("no cell pebble {i}")))?;
        let id = self.get_pebble_id(p, self.layout.roles.start)?;
        Ok(id >> j & 1 == 1)
    }

    pub fn write_bit(&mut self, b: bool) -> SimResult<()> {
        let (i, j) = self.head_split()?;
        let p = *self.layout.roles.cells.get(i).ok_or_else(|| SimError::Layout(format!("no cell pebble {i}")))?;
        let start = self.layout.roles.start;
        let id = self.get_pebble_id(p, start)?;
        self.set(Reg::Tmp, id)?;
        let current = self.read_bit()?;
        let id = self.get(Reg::Tmp)?;
        if b && !current {
            self.set(Reg::Tmp, id + (1 << j))?;
        } else if !b && current {
            self.set(Reg::Tmp, id - (1 << j))?;
        }
        self.put_pebble_at_id(p, start)
    }

    /// Simulated cell read; ends at p_start.
    pub fn read(&mut self, cell: usize) -> SimResult<bool> {
        self.set(Reg::Head, cell as u64)?;
        let b = self.read_bit()?;
        self.find_pebble(self.layout.roles.start)?;
        Ok(b)
    }

    pub fn write(&mut self, cell: usize, b: bool) -> SimResult<()> {
        self.set(Reg::Head, cell as u64)?;
        self.write_bit(b)?;
        self.find_pebble(self.layout.roles.start)
    }

    /// Counts distinct ω vertices from here. Returns Some(count) when ω has fewer than
    /// 2^m1 (the walk explored the graph; the agent is back on p_start with it carried),
    /// None otherwise (p_start stays, agent on it).
    pub fn count_phase(&mut self) -> SimResult<Option<u64>> {
        let start = self.layout.roles.start;
        self.host.drop_pebble(start)?;
        self.restart(start)?;
        loop {
            if self.get(Reg::Id)? == self.cap() {
                self.restart(start)?;
                return Ok(None);
            }
            match self.next_distinct_vertex(start) {
                Ok(()) => {}
                Err(SimError::WalkExhausted) => {
                    // the failed attempt already counted the vertex it did not find
                    let count = self.get(Reg::Id)?;
                    self.find_pebble(start)?;
                    self.host.pick_pebble(start)?;
                    return Ok(Some(count));
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// Places every cell pebble at id 0 (the all-zero tape); agent at p_start.
    pub fn init_cells(&mut self) -> SimResult<()> {
        for i in 0..self.layout.roles.cells.len() {
            self.host.drop_pebble(self.layout.roles.cells[i])?;
        }
        self.set(Reg::Back, 0)
    }

    /// Moves the inner machine across `port`, carrying ω's encoded tape to the walk from the new vertex.
    pub fn relocate_walk(&mut self, port: usize) -> SimResult<()> {
        let RolePebbles { start, next, .. } = self.layout.roles;
        self.set(Reg::MoveLabel, port as u64)?;
        self.host.traverse(port)?;
        let b = self.host.back()?;
        self.set(Reg::Back, b as u64)?;
        self.host.drop_pebble(next)?;
        let b = self.get(Reg::Back)? as usize;
        self.host.traverse(b)?;
        self.restart(start)?;
        for i in 0..self.layout.roles.cells.len() {
            let p = self.layout.roles.cells[i];
            let id = self.get_pebble_id(p, start)?;
            self.set(Reg::Tmp, id)?;
            self.host.pick_pebble(p)?;
            self.find_pebble(start)?;
            let mv = self.get(Reg::MoveLabel)? as usize;
            self.host.traverse(mv)?;
            self.restart(next)?;
            loop {
                let id = self.get(Reg::Tmp)?;
                if id == 0 {
                    break;
                }
                self.set(Reg::Tmp, id - 1)?;
                self.next_distinct_vertex(next)?;
            }
            self.host.drop_pebble(p)?;
            self.find_pebble(next)?;
            let b = self.get(Reg::Back)? as usize;
            self.host.traverse(b)?;
            self.restart(start)?;
        }
        self.host.pick_pebble(start)?;
        let mv = self.get(Reg::MoveLabel)? as usize;
        self.host.traverse(mv)?;
        self.host.drop_pebble(start)?;
        self.host.pick_pebble(next)?;
        self.restart(start)
    }

    /// Picks up every cell pebble, then p_start; ends on p_start's vertex.
    pub fn collect(&mut self) -> SimResult<()> {
        for i in 0..self.layout.roles.cells.len() {
            let p = self.layout.roles.cells[i];
            self.find_pebble(p)?;
            self.host.pick_pebble(p)?;
        }
        let start = self.layout.roles.start;
        self.find_pebble(start)?;
        self.host.pick_pebble(start)
    }
}

/// The host a real level presents to its inner machine.
struct LevelHost<'a> {
    level: Level<'a>,
}

impl Host for LevelHost<'_> {
    fn degree(&mut self) -> SimResult<usize> {
        self.level.host.degree()
    }
    fn back(&mut self) -> SimResult<usize> {
        Ok(self.level.get(Reg::Back)? as usize)
    }
    fn observe(&mut self, p: usize) -> SimResult<bool> {
        self.level.host.observe(p)
    }
    fn carrying(&mut self, p: usize) -> SimResult<bool> {
        self.level.host.carrying(p)
    }
    fn drop_pebble(&mut self, p: usize) -> SimResult<()> {
        self.level.host.drop_pebble(p)
    }
    fn pick_pebble(&mut self, p: usize) -> SimResult<()> {
        self.level.host.pick_pebble(p)
    }
    fn traverse(&mut self, port: usize) -> SimResult<()> {
        self.level.relocate_walk(port)
    }
    fn read(&mut self, cell: usize) -> SimResult<bool> {
        self.level.read(cell)
    }
    fn write(&mut self, cell: usize, b: bool) -> SimResult<()> {
        self.level.write(cell, b)
    }
    fn tape_len(&self) -> usize {
        self.level.layout.inner_tape
    }
    fn tick(&mut self) -> SimResult<()> {
        self.level.host.tick()
    }
    fn checkpoint(&mut self, kind: CheckpointKind) {
        self.level.host.checkpoint(kind)
    }
}

/// The host a fold level presents: moves and pebbles pass through, the tape is local.
struct FoldHost<'a> {
    host: &'a mut dyn Host,
    tape: &'a mut Vec<bool>,
    moved: bool,
}

impl Host for FoldHost<'_> {
    fn degree(&mut self) -> SimResult<usize> {
        self.host.degree()
    }
    fn back(&mut self) -> SimResult<usize> {
        // the counting walk disturbed the physical back-label; the inner machine starts with 0
        if self.moved {
            self.host.back()
        } else {
            Ok(0)
        }
    }
    fn observe(&mut self, p: usize) -> SimResult<bool> {
        self.host.observe(p)
    }
    fn carrying(&mut self, p: usize) -> SimResult<bool> {
        self.host.carrying(p)
    }
    fn drop_pebble(&mut self, p: usize) -> SimResult<()> {
        self.host.drop_pebble(p)
    }
    fn pick_pebble(&mut self, p: usize) -> SimResult<()> {
        self.host.pick_pebble(p)
    }
    fn traverse(&mut self, port: usize) -> SimResult<()> {
        self.moved = true;
        self.host.traverse(port)
    }
    fn read(&mut self, cell: usize) -> SimResult<bool> {
        self.host.tick()?;
        let len = self.tape.len();
        self.tape.get(cell).copied().ok_or_else(|| SimError::Layout(format!("cell {cell} outside tape {len}")))
    }
    fn write(&mut self, cell: usize, b: bool) -> SimResult<()> {
        self.host.tick()?;
        let len = self.tape.len();
        *self.tape.get_mut(cell).ok_or_else(|| SimError::Layout(format!("cell {cell} outside tape {len}")))? = b;
        Ok(())
    }
    fn tape_len(&self) -> usize {
        self.tape.len()
    }
    fn tick(&mut self) -> SimResult<()> {
        self.host.tick()
    }
    fn checkpoint(&mut self, kind: CheckpointKind) {
        self.host.checkpoint(kind)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LevelStats {
    /// Distinct ω vertices when the count phase found fewer than 2^m1.
    pub distinct_on_walk: Option<u64>,
}

/// T′: simulates `inner` (tape `layout.inner_tape`) with a tape of `layout.tape_len()`.
pub struct Simulator {
    pub layout: TapeLayout,
    pub inner: Box<dyn Machine>,
    pub stats: LevelStats,
}

/// T′ for `inner` under `layout`.
pub fn build_simulator(inner: Box<dyn Machine>, layout: TapeLayout) -> SimResult<Simulator> {
    layout.check()?;
    if inner.tape_len() > layout.inner_tape {
        return Err(SimError::Layout(format!("inner tape {} exceeds layout {}", inner.tape_len(), layout.inner_tape)));
    }
    Ok(Simulator { layout, inner, stats: LevelStats::default() })
}

impl Machine for Simulator {
    fn tape_len(&self) -> usize {
        self.layout.tape_len()
    }

    fn pebble_count(&self) -> usize {
        self.layout.roles.count() + self.inner.pebble_count()
    }

    fn as_simulator(&self) -> Option<&Simulator> {
        Some(self)
    }

    fn run(&mut self, host: &mut dyn Host) -> SimResult<Outcome> {
        if host.tape_len() < self.layout.tape_len() {
            return Err(SimError::Layout(format!("host tape {} < {}", host.tape_len(), self.layout.tape_len())));
        }
        let mut level = Level { host, layout: &self.layout };
        if let Some(count) = level.count_phase()? {
            self.stats.distinct_on_walk = Some(count);
            return Ok(Outcome::ExploredAndReturned);
        }
        if self.layout.fold {
            level.host.pick_pebble(self.layout.roles.start)?;
            let mut tape = vec![false; self.layout.inner_tape];
            let mut fh = FoldHost { host: level.host, tape: &mut tape, moved: false };
            return self.inner.run(&mut fh);
        }
        level.init_cells()?;
        let mut lh = LevelHost { level };
        let outcome = self.inner.run(&mut lh)?;
        lh.level.collect()?;
        Ok(outcome)
    }
}

/// The constants table, computed from the walks actually used.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Constants {
    /// Tape blocks (registers) per level.
    pub c0: usize,
    /// Walk-generator constant: every ω for 2^r targets has length ≤ 2^(c1·r).
    pub c1: usize,
    /// c0·c1.
    pub c_prime: usize,
    /// Least m with c1 ≤ 2^(m/c0) and 2^(m/c0) > 2m.
    pub m0: usize,
    /// log2 of max{2^(2·m0), 2·c0·c1 + 3, c_alg}; the first term dominates.
    pub c_log2: f64,
    /// Role pebbles of a real level: 3 + 2·c0·c1.
    pub c_effective: usize,
}

pub fn compute_constants(walk_lengths: &[(usize, usize)]) -> Constants {
    let c0 = REGISTER_COUNT;
    let c1 = walk_lengths
        .iter()
        .map(|&(m1, len)| {
            let mut c = 1;
            while (len as f64).log2() > (c * m1) as f64 {
                c += 1;
            }
            c
        })
        .max()
        .unwrap_or(1);
    let m0 = (1usize..)
        .find(|&m| {
            let x = 2f64.powf(m as f64 / c0 as f64);
            c1 as f64 <= x && x > 2.0 * m as f64
        })
        .expect("exists");
    let c_alg = 64usize;
    let c_log2 = (2.0 * m0 as f64).max(((2 * c0 * c1 + 3) as f64).log2()).max((c_alg as f64).log2());
    Constants { c0, c1, c_prime: c0 * c1, m0, c_log2, c_effective: 3 + 2 * c0 * c1 }
}

/// Per-iteration measurements of the explorer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct IterationReport {
    pub r: usize,
    pub outcome: Option<Outcome>,
    pub edge_traversals: u64,
    pub computation_steps: u64,
    pub pebbles: usize,
    pub fold_levels: Vec<bool>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulatorReport {
    pub outcome: Option<Outcome>,
    pub terminating_r: Option<usize>,
    pub pebbles_used: usize,
    pub edge_traversals: u64,
    pub computation_steps: u64,
    pub distinct_vertices_on_walk: Option<u64>,
    pub final_vertex: usize,
    pub all_pebbles_carried: bool,
    pub visited: usize,
    pub iterations: Vec<IterationReport>,
    pub constants: Constants,
    pub error: Option<String>,
}

/// Walks for the explorer's levels: level i targets z = 2^(2^i) on `family`.
#[derive(Clone, Debug)]
pub struct ExplorerWalks {
    pub levels: Vec<Vec<i8>>,
    pub family: String,
}

impl ExplorerWalks {
    /// Greedy certificates for levels `0..=max_level` on the family (n ≤ 256).
    pub fn certify(family: &[NamedGraph], family_name: &str, max_level: usize) -> SimResult<Self> {
        let mut levels = Vec::new();
        for i in 0..=max_level {
            let z = 1usize << (1usize << i);
            let desc = CorpusDescriptor::NamedLifted { name: family_name.to_string(), z };
            let max_n = family.iter().map(|g| g.graph.vertex_count()).max().unwrap_or(1);
            let cert = search_on(max_n, &desc, family, SearchStrategy::Greedy, 1 << 22).map_err(|e| SimError::Layout(e.to_string()))?;
            levels.push(certificate_walk(&cert.offsets, true).into_iter().map(|x| x as i8).collect());
        }
        Ok(ExplorerWalks { levels, family: family_name.to_string() })
    }

    pub fn constants(&self) -> Constants {
        let lens: Vec<(usize, usize)> = self.levels.iter().enumerate().map(|(i, w)| (1 << i, w.len())).collect();
        compute_constants(&lens)
    }
}

/// Iteration r's chain T_0 ← … ← T_r ← trivial, with level i at m1 = 2^i; level i folds
/// when its nominal tape c′·2^i is below m0.
pub fn build_chain(walks: &ExplorerWalks, r: usize) -> SimResult<Simulator> {
    let k = walks.constants();
    if r >= walks.levels.len() {
        return Err(SimError::Layout(format!("no walk certified for level {r}")));
    }
    let fold = |i: usize| k.c_prime << i < k.m0;
    // pebble ids: level i's roles after those of levels < i
    let mut first = vec![0usize; r + 2];
    let mut inner_tapes = vec![0usize; r + 1];
    // tapes are sized innermost-first
    let mut tape = k.c_prime << (r + 1);
    for i in (0..=r).rev() {
        inner_tapes[i] = tape;
        let w = TapeLayout::needed_width(walks.levels[i].len(), tape, 1 << i);
        tape = REGISTER_COUNT * w;
    }
    for i in 0..=r {
        let roles = if fold(i) { 2 } else { 3 + inner_tapes[i].div_ceil(1 << i) };
        first[i + 1] = first[i] + roles;
    }
    let mut machine: Box<dyn Machine> = Box::new(TableMachine::new(PebbleMachine::trivial(inner_tapes[r]), Vec::new()));
    for i in (1..=r).rev() {
        let layout = TapeLayout::new(1 << i, inner_tapes[i], walks.levels[i].clone(), fold(i), first[i]);
        machine = Box::new(build_simulator(machine, layout)?);
    }
    build_simulator(machine, TapeLayout::new(1, inner_tapes[0], walks.levels[0].clone(), fold(0), first[0]))
}

/// Iterative deepening over r = 1, 2, … until an iteration reports the graph explored.
/// `budget` bounds total work (edge traversals plus computation steps) across iterations.
pub fn explore_loglog(g: &PortLabeledGraph, start: usize, walks: &ExplorerWalks, budget: u64) -> SimulatorReport {
    let constants = walks.constants();
    let mut report = SimulatorReport {
        outcome: None,
        terminating_r: None,
        pebbles_used: 0,
        edge_traversals: 0,
        computation_steps: 0,
        distinct_vertices_on_walk: None,
        final_vertex: start,
        all_pebbles_carried: true,
        visited: 1,
        iterations: Vec::new(),
        constants,
        error: None,
    };
    let mut visited = vec![false; g.vertex_count()];
    visited[start] = true;
    for r in 1..walks.levels.len() {
        let mut sim = match build_chain(walks, r) {
            Ok(s) => s,
            Err(e) => {
                report.error = Some(e.to_string());
                break;
            }
        };
        let pebbles = sim.pebble_count();
        let remaining = budget.saturating_sub(report.edge_traversals + report.computation_steps);
        let mut world = World::new(g, start, pebbles, sim.tape_len(), remaining);
        let result = sim.run(&mut world);
        report.edge_traversals += world.edge_traversals;
        report.computation_steps += world.computation_steps;
        report.pebbles_used = report.pebbles_used.max(pebbles);
        for (v, seen) in world.visited.iter().enumerate() {
            visited[v] |= seen;
        }
        report.final_vertex = world.pos;
        report.all_pebbles_carried = world.all_carried();
        let mut folds = Vec::new();
        let mut level: Option<&Simulator> = Some(&sim);
        let mut distinct = None;
        let mut depth = 0;
        while let Some(l) = level {
            folds.push(l.layout.fold);
            if distinct.is_none() {
                distinct = l.stats.distinct_on_walk;
            }
            depth += 1;
            level = if depth <= r { nested(l) } else { None };
        }
        report.iterations.push(IterationReport {
            r,
            outcome: result.as_ref().ok().copied(),
            edge_traversals: world.edge_traversals,
            computation_steps: world.computation_steps,
            pebbles,
            fold_levels: folds,
            error: result.as_ref().err().map(|e| e.to_string()),
        });
        match result {
            Ok(Outcome::ExploredAndReturned) => {
                report.outcome = Some(Outcome::ExploredAndReturned);
                report.terminating_r = Some(r);
                report.distinct_vertices_on_walk = distinct;
                break;
            }
            Ok(Outcome::ReproducedHostWalk) => {}
            Err(e) => {
                report.error = Some(e.to_string());
                break;
            }
        }
    }
    if report.outcome.is_none() && report.error.is_none() {
        report.error = Some(format!("no certified walk beyond level {}", walks.levels.len() - 1));
    }
    report.visited = visited.iter().filter(|&&b| b).count();
    report
}

/// The next inner simulator, when the inner machine is one.
fn nested(s: &Simulator) -> Option<&Simulator> {
    s.inner.as_simulator()
}

/// Decodes the simulated tape from physical pebble positions by walking ω from p_start.
/// Independent of the simulator's own procedures: uses the plain walk follower.
pub fn decode_tape(g: &PortLabeledGraph, layout: &TapeLayout, placement: &[Option<usize>]) -> Option<Vec<bool>> {
    let start = placement[layout.roles.start]?;
    let seq = crate::sequences::ExplorationSequence { offsets: layout.walk.iter().map(|&x| x as i64).collect(), alphabet: crate::sequences::Alphabet::Signed };
    let walk = crate::sequences::follow(g, start, crate::sequences::SeqRef::Exploration(&seq), usize::MAX).ok()?;
    let mut ids: HashMap<usize, u64> = HashMap::new();
    for &v in &walk.vertices {
        let k = ids.len() as u64;
        ids.entry(v).or_insert(k);
    }
    let mut tape = vec![false; layout.inner_tape];
    for (i, &p) in layout.roles.cells.iter().enumerate() {
        let id = *ids.get(&placement[p]?)?;
        for j in 0..layout.m1 {
            let cell = i * layout.m1 + j;
            if cell < tape.len() {
                tape[cell] = id >> j & 1 == 1;
            }
        }
    }
    Some(tape)
}

/// T′ for a table machine: T's pebbles keep ids 0..p, role pebbles follow.
pub fn standalone_simulator(t: PebbleMachine, m1: usize, walk: Vec<i8>, macro_limit: Option<u64>) -> SimResult<Simulator> {
    let p = t.pebbles;
    let layout = TapeLayout::new(m1, t.tape_len, walk, false, p);
    let inner = TableMachine { machine: t, ids: (0..p).collect(), macro_limit };
    build_simulator(Box::new(inner), layout)
}

/// Result of running T directly and T′ on the same graph.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SimulationCheck {
    pub n: usize,
    pub outcome: Outcome,
    pub direct_edges: usize,
    pub simulated_edges: usize,
    pub simulated_work: u64,
    pub checkpoints: usize,
    /// Case 2: T's edge sequence is a subsequence of T′'s.
    pub subsequence: bool,
    /// Case 2: decoded tape, T's pebbles and T's position agree at every checkpoint.
    pub mismatches: Vec<String>,
    /// Case 1: back at start, every pebble carried, every vertex visited.
    pub explored_ok: bool,
    pub pebbles: usize,
    pub host_tape: usize,
}

impl SimulationCheck {
    pub fn passed(&self) -> bool {
        match self.outcome {
            Outcome::ExploredAndReturned => self.explored_ok,
            Outcome::ReproducedHostWalk => self.subsequence && self.mismatches.is_empty(),
        }
    }
}

fn is_subsequence(small: &[usize], big: &[usize]) -> bool {
    let mut it = big.iter();
    small.iter().all(|x| it.any(|y| y == x))
}

/// Runs T on a direct tape and T′ on the pebble-encoded tape, comparing them
/// checkpoint by checkpoint; the tape is decoded from pebble positions independently.
pub fn check_simulation(t: &PebbleMachine, g: &PortLabeledGraph, start: usize, m1: usize, walk: &[i8], macro_limit: u64, budget: u64) -> SimResult<SimulationCheck> {
    let mut direct_m = TableMachine { machine: t.clone(), ids: (0..t.pebbles).collect(), macro_limit: Some(macro_limit) };
    let mut direct = World::new(g, start, t.pebbles, t.tape_len, budget).with_logs();
    direct_m.run(&mut direct)?;
    let mut sim = standalone_simulator(t.clone(), m1, walk.to_vec(), Some(macro_limit))?;
    let pebbles = sim.pebble_count();
    let mut world = World::new(g, start, pebbles, sim.tape_len(), budget).with_logs();
    let outcome = sim.run(&mut world)?;
    let d_edges = direct.edge_log.take().unwrap_or_default();
    let s_edges = world.edge_log.take().unwrap_or_default();
    let d_cps = direct.checkpoints.take().unwrap_or_default();
    let s_cps = world.checkpoints.take().unwrap_or_default();
    let mut check = SimulationCheck {
        n: g.vertex_count(),
        outcome,
        direct_edges: d_edges.len(),
        simulated_edges: s_edges.len(),
        simulated_work: world.work(),
        checkpoints: s_cps.len(),
        subsequence: false,
        mismatches: Vec::new(),
        explored_ok: false,
        pebbles,
        host_tape: sim.tape_len(),
    };
    match outcome {
        Outcome::ExploredAndReturned => {
            check.explored_ok = world.pos == start && world.all_carried() && world.visited_count() == g.vertex_count() && s_cps.is_empty();
        }
        Outcome::ReproducedHostWalk => {
            check.subsequence = is_subsequence(&d_edges, &s_edges);
            if d_cps.len() != s_cps.len() {
                check.mismatches.push(format!("{} direct checkpoints, {} simulated", d_cps.len(), s_cps.len()));
            }
            for (k, (d, s)) in d_cps.iter().zip(&s_cps).enumerate() {
                if d.pos != s.pos {
                    check.mismatches.push(format!("checkpoint {k}: position {} vs {}", d.pos, s.pos));
                }
                if d.placement[..] != s.placement[..t.pebbles] {
                    check.mismatches.push(format!("checkpoint {k}: pebbles differ"));
                }
                match decode_tape(g, &sim.layout, &s.placement) {
                    Some(tape) if tape == d.tape => {}
                    Some(_) => check.mismatches.push(format!("checkpoint {k}: tape differs")),
                    None => check.mismatches.push(format!("checkpoint {k}: tape undecodable")),
                }
            }
            if !(world.all_carried_from(t.pebbles) && world.pos == direct.pos) {
                check.mismatches.push("role pebbles not collected at T's final vertex".into());
            }
        }
    }
    Ok(check)
}

/// Outcome of exercising ReadBit/WriteBit/GetPebbleId on one graph.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PrimitiveReport {
    pub operations: usize,
    pub failures: Vec<String>,
}

/// Writes every cell to 1, 0, 1 in turn, reading back after each write and comparing
/// the independently decoded tape and pebble ids. Needs n ≥ 2^m1 on `layout`'s walk.
pub fn check_primitives(g: &PortLabeledGraph, start: usize, layout: &TapeLayout, budget: u64) -> SimResult<PrimitiveReport> {
    let pebbles = layout.roles.start + layout.roles.count();
    let mut world = World::new(g, start, pebbles, layout.tape_len(), budget);
    {
        let mut level = Level { host: &mut world, layout };
        if level.count_phase()?.is_some() {
            return Err(SimError::Layout(format!("n = {} is below 2^{}", g.vertex_count(), layout.m1)));
        }
        level.init_cells()?;
    }
    let mut rep = PrimitiveReport::default();
    let mut expect = vec![false; layout.inner_tape];
    for cell in 0..layout.inner_tape {
        for b in [true, false, true] {
            let got = {
                let mut level = Level { host: &mut world, layout };
                level.write(cell, b)?;
                level.read(cell)?
            };
            expect[cell] = b;
            rep.operations += 2;
            if got != b {
                rep.failures.push(format!("cell {cell}: wrote {b}, read {got}"));
            }
            if decode_tape(g, layout, &world.placement).as_deref() != Some(&expect[..]) {
                rep.failures.push(format!("cell {cell}: decoded tape differs after writing {b}"));
            }
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::random_pebble_machine;
    use crate::corpus::general_corpus;
    use crate::graph::{cycle, random_general};

    fn walk_for(corpus: &[NamedGraph], z: usize) -> Vec<i8> {
        let desc = CorpusDescriptor::NamedLifted { name: "unit".into(), z };
        let max_n = corpus.iter().map(|g| g.graph.vertex_count()).max().unwrap();
        let cert = search_on(max_n, &desc, corpus, SearchStrategy::Greedy, 1 << 20).unwrap();
        certificate_walk(&cert.offsets, true).into_iter().map(|x| x as i8).collect()
    }

    fn small_family() -> Vec<NamedGraph> {
        general_corpus(12, 3)
    }

    #[test]
    fn registers_round_trip_on_the_host_tape() {
        let g = cycle(4);
        let layout = TapeLayout::new(2, 8, vec![0, 0], false, 0);
        let mut w = World::new(&g, 0, layout.roles.count(), layout.tape_len(), 1 << 20);
        let mut l = Level { host: &mut w, layout: &layout };
        l.set(Reg::Tmp, 173).unwrap();
        l.set(Reg::Walk, 5).unwrap();
        assert_eq!(l.get(Reg::Tmp).unwrap(), 173);
        assert_eq!(l.get(Reg::Walk).unwrap(), 5);
        assert!(matches!(l.set(Reg::Id, 1 << layout.width), Err(SimError::Overflow { .. })));
    }

    #[test]
    fn small_graphs_are_explored_by_the_count_phase() {
        let fam = small_family();
        let walk = walk_for(&fam, 8);
        for ng in fam.iter().filter(|g| g.graph.vertex_count() < 8) {
            let layout = TapeLayout::new(3, 12, walk.clone(), false, 0);
            let mut w = World::new(&ng.graph, 0, layout.roles.count(), layout.tape_len(), 1 << 26);
            let got = Level { host: &mut w, layout: &layout }.count_phase().unwrap();
            assert_eq!(got, Some(ng.graph.vertex_count() as u64), "{}", ng.name);
            assert_eq!(w.pos, 0);
            assert!(w.all_carried());
            assert_eq!(w.visited_count(), ng.graph.vertex_count());
        }
    }

    #[test]
    fn pebble_ids_follow_first_visits() {
        let fam = small_family();
        let walk = walk_for(&fam, 8);
        let g = &fam.iter().find(|g| g.name == "general-n10-c5").unwrap().graph;
        let layout = TapeLayout::new(3, 12, walk.clone(), false, 0);
        let mut w = World::new(g, 0, layout.roles.count(), layout.tape_len(), 1 << 26);
        let mut l = Level { host: &mut w, layout: &layout };
        assert_eq!(l.count_phase().unwrap(), None);
        l.init_cells().unwrap();
        // move p_0 to every id and read it back
        let p0 = layout.roles.cells[0];
        for id in 0..8 {
            l.set(Reg::Tmp, id).unwrap();
            l.put_pebble_at_id(p0, layout.roles.start).unwrap();
            assert_eq!(l.get_pebble_id(p0, layout.roles.start).unwrap(), id);
        }
    }

    #[test]
    fn reference_tape_decodes_least_significant_bit_first() {
        // tape 010 110 100 011 with three bits per pebble
        let bits = [0, 1, 0, 1, 1, 0, 1, 0, 0, 0, 1, 1];
        let g = cycle(12);
        let fam = vec![NamedGraph::new("c12", g.clone())];
        let layout = TapeLayout::new(3, 12, walk_for(&fam, 8), false, 0);
        let mut w = World::new(&g, 0, layout.roles.count(), layout.tape_len(), 1 << 26);
        let mut l = Level { host: &mut w, layout: &layout };
        assert_eq!(l.count_phase().unwrap(), None);
        l.init_cells().unwrap();
        for (c, &b) in bits.iter().enumerate() {
            l.write(c, b == 1).unwrap();
        }
        let ids: Vec<u64> = layout.roles.cells.iter().map(|&p| l.get_pebble_id(p, layout.roles.start).unwrap()).collect();
        assert_eq!(ids, vec![2, 3, 1, 6]);
    }

    #[test]
    fn read_after_write_on_small_graphs() {
        let fam = small_family();
        let walk = walk_for(&fam, 4);
        for ng in fam.iter().filter(|g| g.graph.vertex_count() >= 4).step_by(5) {
            let layout = TapeLayout::new(2, 8, walk.clone(), false, 0);
            let rep = check_primitives(&ng.graph, 0, &layout, 1 << 28).unwrap();
            assert!(rep.failures.is_empty(), "{}: {:?}", ng.name, rep.failures);
        }
    }

    #[test]
    fn random_machines_are_reproduced() {
        let fam = small_family();
        let walk = walk_for(&fam, 4);
        for seed in 0..12u64 {
            let g = random_general(5 + (seed as usize % 6), 2, seed).unwrap();
            let t = random_pebble_machine(3, 3, (seed % 3) as usize, 8, g.max_degree(), seed);
            let fam_has = fam.iter().any(|ng| ng.graph == g);
            let walk = if fam_has { walk.clone() } else { walk_for(&[NamedGraph::new("g", g.clone())], 4) };
            let c = check_simulation(&t, &g, 0, 2, &walk, 6, 1 << 30).unwrap();
            assert!(c.passed(), "seed {seed}: {c:?}");
        }
    }

    #[test]
    fn explorer_terminates_at_the_expected_iteration() {
        let fam = small_family();
        let walks = ExplorerWalks::certify(&fam, "unit", 2).unwrap();
        for ng in fam.iter().step_by(3) {
            let n = ng.graph.vertex_count();
            let rep = explore_loglog(&ng.graph, 0, &walks, 1 << 28);
            let expected = if n < 4 { 1 } else { 2 };
            assert_eq!(rep.terminating_r, Some(expected), "{}", ng.name);
            assert_eq!(rep.visited, n);
            assert_eq!(rep.final_vertex, 0);
            assert!(rep.all_pebbles_carried);
            assert!(rep.pebbles_used <= (expected + 1) * rep.constants.c_effective);
        }
    }

    #[test]
    fn constants_follow_their_defining_inequalities() {
        let k = compute_constants(&[(1, 2), (2, 20), (4, 272)]);
        assert_eq!(k.c1, 3);
        assert_eq!(k.c_prime, 36);
        let ok = |m: usize| {
            let x = 2f64.powf(m as f64 / k.c0 as f64);
            k.c1 as f64 <= x && x > 2.0 * m as f64
        };
        assert!(ok(k.m0) && !ok(k.m0 - 1));
    }
}
