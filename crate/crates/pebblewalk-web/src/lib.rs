//! Browser demo bindings: build and certify a trap, lift a sequence, run the explorer.
//! Each export wraps a plain function so the logic is testable off the browser.

use pebblewalk::corpus::general_corpus;
use pebblewalk::graph::{self, GenKind};
use pebblewalk::pebble_sim::{explore_loglog, ExplorerWalks};
use pebblewalk::sequences::{certificate_walk, walk_summary};
use pebblewalk::traps::{build_trap, random_cooperative, verify_trap, TrapConfig};
use serde_json::{json, Value};
use std::cell::OnceCell;
use wasm_bindgen::prelude::*;

/// Largest agent set the page offers; beyond this the construction leaves desk scale.
const MAX_AGENTS: usize = 2;

pub fn trap_report(k: usize, states: usize, seed: u64) -> Result<Value, String> {
    if !(1..=MAX_AGENTS).contains(&k) || !(1..=3).contains(&states) {
        return Err(format!("choose 1..={MAX_AGENTS} agents with 1..=3 states"));
    }
    let agents = random_cooperative(k, states, seed);
    let cfg = TrapConfig::default();
    let trap = build_trap(&agents, &cfg).map_err(|e| e.to_string())?;
    let ev = verify_trap(&trap.graph, &agents, trap.start, cfg.step_cap).map_err(|e| e.to_string())?;
    Ok(json!({
        "vertices": trap.vertices,
        "barrier_vertices": trap.barrier.vertices,
        "rank": trap.barrier.rank,
        "trapped": ev.trapped,
        "preperiod": ev.preperiod,
        "period": ev.period,
        "visited": ev.visited,
        "unvisited": ev.unvisited.len(),
        "barrier_verdict": trap.barrier.evidence.as_ref().map(|e| &e.verdict),
    }))
}

/// Doubled (and optionally lifted) walk; reports distinct vertices and closure on a sample graph.
pub fn lift_report(offsets: &str, general: bool, n: usize, seed: u64) -> Result<Value, String> {
    let prefix: Vec<u8> = offsets
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<u8>().ok().filter(|&o| o <= 2).ok_or(format!("offset {s:?} is not 0, 1 or 2")))
        .collect::<Result<_, _>>()?;
    let walk = certificate_walk(&prefix, general);
    let kind = if general { GenKind::RandomGeneral { n, extra: n / 2 } } else { GenKind::Random3Regular { n } };
    let g = graph::generate(kind, seed).map_err(|e| e.to_string())?;
    let starts: Vec<Value> = (0..g.vertex_count())
        .map(|s| {
            let (distinct, end) = walk_summary(&g, s, &walk);
            json!({"start": s, "distinct": distinct, "closed": end == s})
        })
        .collect();
    Ok(json!({"walk": walk, "graph": graph::serialize(&g), "starts": starts}))
}

thread_local! {
    static WALKS: OnceCell<Result<ExplorerWalks, String>> = const { OnceCell::new() };
}

pub fn explore_report(n: usize, extra: usize, seed: u64, budget: u64) -> Result<Value, String> {
    let g = graph::generate(GenKind::RandomGeneral { n, extra }, seed).map_err(|e| e.to_string())?;
    WALKS.with(|w| {
        let walks = w.get_or_init(|| ExplorerWalks::certify(&general_corpus(200, 1), "explore", 3).map_err(|e| e.to_string()));
        let walks = walks.as_ref().map_err(Clone::clone)?;
        let rep = explore_loglog(&g, 0, walks, budget);
        Ok(json!({
            "n": n,
            "terminating_r": rep.terminating_r,
            "pebbles_used": rep.pebbles_used,
            "edge_traversals": rep.edge_traversals,
            "computation_steps": rep.computation_steps,
            "visited": rep.visited,
            "final_vertex": rep.final_vertex,
            "all_pebbles_carried": rep.all_pebbles_carried,
            "error": rep.error,
        }))
    })
}

fn to_js(r: Result<Value, String>) -> Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn trap(k: usize, states: usize, seed: u64) -> Result<String, JsError> {
    to_js(trap_report(k, states, seed))
}

#[wasm_bindgen]
pub fn lift(offsets: &str, general: bool, n: usize, seed: u64) -> Result<String, JsError> {
    to_js(lift_report(offsets, general, n, seed))
}

#[wasm_bindgen]
pub fn explore(n: usize, extra: usize, seed: u64, budget: u64) -> Result<String, JsError> {
    to_js(explore_report(n, extra, seed, budget))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_state_trap_is_certified() {
        let r = trap_report(1, 1, 5).unwrap();
        assert_eq!(r["trapped"], json!(true));
        assert!(r["unvisited"].as_u64().unwrap() > 0);
    }

    #[test]
    fn bad_inputs_are_rejected() {
        assert!(trap_report(3, 1, 0).is_err());
        assert!(lift_report("0,3", false, 8, 0).is_err());
    }

    #[test]
    fn doubled_walks_close() {
        let r = lift_report("0 1 2 1", false, 10, 2).unwrap();
        assert!(r["starts"].as_array().unwrap().iter().all(|s| s["closed"] == json!(true)));
        let r = lift_report("0,1,2,1", true, 9, 2).unwrap();
        assert!(r["starts"].as_array().unwrap().iter().all(|s| s["closed"] == json!(true)));
    }

    #[test]
    fn small_graphs_are_explored() {
        let r = explore_report(6, 3, 1, 100_000_000).unwrap();
        assert_eq!(r["visited"], json!(6));
        assert_eq!(r["final_vertex"], json!(0));
        assert_eq!(r["error"], Value::Null);
    }
}
