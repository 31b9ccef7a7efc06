use pebblewalk::agent::{run_cooperative, CooperativeAgentSpec};
use pebblewalk::graph::{k4, Edge, PortLabeledGraph};
use pebblewalk::traps::*;

fn cfg() -> TrapConfig {
    TrapConfig { step_cap: 400_000, ..TrapConfig::default() }
}

/// Swaps labels `a` and `b` on the alternating `{a, b}` component through edge `start`;
/// the result is again edge-symmetric.
fn kempe_swap(g: &PortLabeledGraph, start: usize, a: usize, b: usize) -> PortLabeledGraph {
    let mut edges: Vec<Edge> = g.edges().to_vec();
    let on = |e: &Edge| e.pu == e.pv && (e.pu == a || e.pu == b);
    let mut chain = vec![false; edges.len()];
    let mut stack = vec![start];
    while let Some(i) = stack.pop() {
        if chain[i] || !on(&edges[i]) {
            continue;
        }
        chain[i] = true;
        let (u, v) = (edges[i].u, edges[i].v);
        stack.extend(edges.iter().enumerate().filter(|(j, f)| !chain[*j] && on(f) && [f.u, f.v].iter().any(|&x| x == u || x == v)).map(|(j, _)| j));
    }
    for (e, _) in edges.iter_mut().zip(&chain).filter(|(_, c)| **c) {
        let l = if e.pu == a { b } else { a };
        e.pu = l;
        e.pv = l;
    }
    PortLabeledGraph::new(g.vertex_count(), edges).unwrap()
}

/// Replays a claimed crossing with the reference runner: the single agent, started at
/// `entry`, must first leave the barrier from the opposite side.
fn replay_crossing(b: &Barrier, agent: &CooperativeAgentSpec, state: usize, entry: usize, step: u64) {
    let at = attach(&k4(), b).unwrap();
    let mut a = agent.clone();
    a.agents[0].start = state;
    let opposite = if at.near.contains(&entry) { at.far } else { at.near };
    let trace = run_cooperative(&a, &at.graph, entry, step + 1).unwrap();
    let pos: Vec<usize> = trace.configs.iter().map(|c| c.agents[0].pos).collect();
    let exit = pos.iter().position(|&x| !at.in_barrier(x)).expect("the agent leaves the barrier");
    assert!(opposite.contains(&pos[exit - 1]), "left from {} (opposite side {:?})", pos[exit - 1], opposite);
}

fn crossing(ev: &BarrierEvidence) -> Option<(usize, usize, u64)> {
    match &ev.verdict {
        BarrierVerdict::Crossing { states, entry, step, .. } => Some((states[0], *entry, *step)),
        _ => None,
    }
}

#[test]
fn relabeled_diamond_is_crossed() {
    let agent = random_cooperative(1, 2, 13);
    let b = build_1barrier(&agent, &cfg()).unwrap();
    assert_eq!(b.evidence.as_ref().unwrap().verdict, BarrierVerdict::Verified);
    let h = b.vertices - 8;
    let (i, e) = b.graph.edges().iter().enumerate().find(|(_, e)| e.u >= h && e.v >= h && e.pu != 0).unwrap();
    let mut broken = b.clone();
    broken.graph = kempe_swap(&b.graph, i, e.pu, 3 - e.pu);
    assert!(broken.graph.is_symmetric_cubic());
    let ev = verify_barrier(&broken, &agent, 1, &cfg()).unwrap();
    let (state, entry, step) = crossing(&ev).expect("the relabeled barrier is crossed");
    replay_crossing(&broken, &agent, state, entry, step);
}

#[test]
fn a_barrier_does_not_stop_other_agents() {
    let own = random_cooperative(1, 2, 2);
    let b = build_1barrier(&own, &cfg()).unwrap();
    assert_eq!(b.evidence.as_ref().unwrap().verdict, BarrierVerdict::Verified);
    let other = random_cooperative(1, 2, 1);
    let ev = verify_barrier(&b, &other, 1, &cfg()).unwrap();
    let (state, entry, step) = crossing(&ev).expect("a foreign agent crosses");
    replay_crossing(&b, &other, state, entry, step);
}

#[test]
fn no_agents_is_a_vacuous_pass() {
    let b = build_1barrier(&oscillator(), &cfg()).unwrap();
    let none = CooperativeAgentSpec { agents: Vec::new() };
    assert_eq!(verify_barrier(&b, &none, 0, &cfg()).unwrap().verdict, BarrierVerdict::Verified);
}

#[test]
fn trap_search_is_deterministic() {
    let closure = state_closure(&random_cooperative(1, 2, 4));
    let t = find_noncooperative_trap(&closure, 400).unwrap();
    assert!(certify_noncooperative_trap(&closure, &t).unwrap());
    let again = find_noncooperative_trap(&closure, 400).unwrap();
    assert_eq!(t, again);
    assert!(certify_noncooperative_trap(&closure, &again).unwrap());
}

#[test]
fn rank_one_with_one_agent_is_a_one_barrier() {
    let b = build_rbarrier(&oscillator(), 1, &cfg()).unwrap();
    assert!(matches!(b.construction, Construction::OneBarrier { .. }));
    assert_eq!(b.rank, 1);
}

#[test]
fn oscillator_trap_leaves_the_far_copy_unvisited() {
    let t = build_trap(&oscillator(), &cfg()).unwrap();
    assert_eq!(t.vertices, 2 * t.barrier.vertices + 4);
    let ev = verify_trap(&t.graph, &oscillator(), t.start, 1_000_000).unwrap();
    assert!(ev.trapped && ev.reconfirmed);
    for x in t.beyond {
        assert!(ev.unvisited.contains(&x));
    }
}

#[test]
fn pair_of_one_state_agents() {
    let agents = random_cooperative(2, 1, 1);
    let b = build_rbarrier(&agents, 2, &cfg()).unwrap();
    let Construction::Chain { inner_vertices, links, chain_vertices, chain_edges, .. } = &b.construction else {
        panic!("rank 2 is a chain")
    };
    assert_eq!(links.len(), 1);
    assert_eq!(b.vertices, 2 * (chain_vertices + (chain_edges - 2) * (inner_vertices + 8)));
    assert!(min_barrier_crossings(&b).unwrap() >= 3);
    assert_eq!(b.evidence.as_ref().unwrap().verdict, BarrierVerdict::Verified);

    let inner = b.inner.as_deref().unwrap();
    let m = derive_macro_agent(&agents, &[0, 1], inner, &cfg()).unwrap();
    assert_eq!(m.alpha, derive_macro_agent(&agents, &[0, 1], inner, &cfg()).unwrap().alpha);

    let t = assemble_trap(&b).unwrap();
    let ev = verify_trap(&t.graph, &agents, t.start, 4_000_000).unwrap();
    assert!(ev.trapped && ev.reconfirmed);
}

#[test]
fn macro_traces_stay_near_the_last_macro_vertex() {
    let agents = random_cooperative(2, 1, 3);
    let b = build_1barrier(&agents, &cfg()).unwrap();
    let gg = build_gadget_graph(&k4(), &b).unwrap();
    let mt = macro_trace(&agents, &gg, 0, 200_000).unwrap();
    assert_eq!(mt.locality_violations, 0);
    assert_eq!(mt.labels.len() + 1, mt.vertices.len());
}
