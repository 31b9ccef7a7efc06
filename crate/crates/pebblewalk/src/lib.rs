//! Port-labeled graph exploration by finite agents with pebbles: universal
//! sequences, pebble machines, a log-log space exploration simulator,
//! agent/pebble reductions and traps for cooperating agents.

pub mod corpus;
pub mod graph;
pub mod reductions;
pub mod agent;
pub mod pebble_sim;
pub mod sequences;
pub mod suite;
pub mod traps;
