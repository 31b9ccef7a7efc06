use pebblewalk::agent::{random_agent, run_single};
use pebblewalk::graph::{parse, random_3regular, random_general, serialize, validate};
use pebblewalk::reductions::{check_pebbles_to_agents_staged, check_states_to_pebbles};
use pebblewalk::sequences::{check_lift_invariants, closed_walk_sequence, lift, walk_summary};
use pebblewalk::traps::{attach, build_1barrier, oscillator, TrapConfig};
use proptest::prelude::*;
use std::collections::HashSet;

fn general() -> impl Strategy<Value = pebblewalk::graph::PortLabeledGraph> {
    (3usize..30, 0usize..10, any::<u64>()).prop_map(|(n, extra, seed)| {
        let extra = extra.min(n * (n - 1) / 2 - n);
        random_general(n, extra, seed).unwrap()
    })
}

fn cubic() -> impl Strategy<Value = pebblewalk::graph::PortLabeledGraph> {
    (2usize..25, any::<u64>()).prop_map(|(h, seed)| random_3regular(2 * h, seed).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn documents_round_trip(g in general()) {
        let text = serialize(&g);
        let back = parse(text.as_bytes()).unwrap();
        prop_assert_eq!(&back, &g);
        prop_assert_eq!(serialize(&back), text);
        prop_assert!(validate(&g).is_valid());
    }

    #[test]
    fn doubled_sequences_close(g in cubic(), prefix in prop::collection::vec(0u8..3, 0..40)) {
        let seq = closed_walk_sequence(&prefix);
        prop_assert_eq!(seq.len(), 2 * prefix.len());
        for s in 0..g.vertex_count() {
            prop_assert_eq!(walk_summary(&g, s, &seq).1, s);
        }
    }

    #[test]
    fn lifted_doubled_sequences_close(g in general(), prefix in prop::collection::vec(0u8..3, 0..30)) {
        let walk = lift(&closed_walk_sequence(&prefix));
        for s in 0..g.vertex_count() {
            prop_assert_eq!(walk_summary(&g, s, &walk).1, s);
        }
    }

    #[test]
    fn lift_invariants_hold(g in general(), offsets in prop::collection::vec(0u8..3, 0..200), start in any::<prop::sample::Index>()) {
        let start = start.index(g.vertex_count());
        prop_assert!(check_lift_invariants(&g, start, &offsets).is_ok());
    }

    #[test]
    fn attaching_keeps_graphs_cubic(g in cubic()) {
        let b = build_1barrier(&oscillator(), &TrapConfig { verify: false, ..TrapConfig::default() }).unwrap();
        if g.edges().iter().filter(|e| e.pu == 0).count() >= 2 {
            let a = attach(&g, &b).unwrap();
            prop_assert!(a.graph.is_symmetric_cubic());
            prop_assert_eq!(a.graph.vertex_count(), g.vertex_count() + b.vertices);
        }
    }

    #[test]
    fn single_agents_repeat_within_the_pigeonhole_bound(g in cubic(), states in 1usize..5, seed in any::<u64>()) {
        let a = random_agent(states, 0, 3, false, seed);
        let bound = states * 3 * g.vertex_count();
        let t = run_single(&a, &g, 0, bound as u64 + 1).unwrap();
        let mut seen = HashSet::new();
        let repeated = t.configs.iter().any(|c| !seen.insert((c.agents[0].state, c.agents[0].pos, c.agents[0].back)));
        prop_assert!(repeated || t.halted);
    }

    #[test]
    fn memory_compiles_to_pebbles(g in general(), states in 1usize..9, pebbles in 0usize..3, seed in any::<u64>()) {
        let a = random_agent(states, pebbles, g.max_degree(), true, seed);
        let r = check_states_to_pebbles(&a, &g, 0, 150).unwrap();
        prop_assert!(r.reproduced);
        prop_assert!(r.max_step_ratio <= 3);
    }

    #[test]
    fn staged_pebbles_compile_to_agents(g in general(), states in 1usize..9, pebbles in 0usize..3, seed in any::<u64>()) {
        let a = random_agent(states, pebbles, g.max_degree(), true, seed);
        let r = check_pebbles_to_agents_staged(&a, &g, 0, 150).unwrap();
        prop_assert!(r.reproduced);
        prop_assert!(r.max_step_ratio <= 1);
        prop_assert!(r.invariant.is_none());
    }
}
