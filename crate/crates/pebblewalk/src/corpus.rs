//! Deterministic graph families used for certification and verification.

use crate::graph::{cycle, random_3regular, random_general, serialize, PortLabeledGraph};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet, VecDeque};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NamedGraph {
    pub name: String,
    pub graph: PortLabeledGraph,
}

impl NamedGraph {
    pub fn new(name: impl Into<String>, graph: PortLabeledGraph) -> Self {
        NamedGraph { name: name.into(), graph }
    }
}

/// Label-preserving canonical code of a connected edge-symmetric cubic graph:
/// the least BFS-in-label-order neighbor table over all start vertices.
pub fn cubic_canonical_code(g: &PortLabeledGraph) -> Vec<u8> {
    let n = g.vertex_count();
    let mut best: Option<Vec<u8>> = None;
    for s in 0..n {
        let mut num = vec![usize::MAX; n];
        let mut order = Vec::with_capacity(n);
        num[s] = 0;
        order.push(s);
        let mut q = VecDeque::from([s]);
        while let Some(x) = q.pop_front() {
            for l in 0..3 {
                let y = g.half(x, l).to;
                if num[y] == usize::MAX {
                    num[y] = order.len();
                    order.push(y);
                    q.push_back(y);
                }
            }
        }
        let code: Vec<u8> = order.iter().flat_map(|&x| (0..3).map(move |l| (x, l))).map(|(x, l)| num[g.half(x, l).to] as u8).collect();
        if best.as_ref().is_none_or(|b| code < *b) {
            best = Some(code);
        }
    }
    best.unwrap_or_default()
}

fn graph_from_code(code: &[u8]) -> PortLabeledGraph {
    let n = code.len() / 3;
    let mut edges = Vec::new();
    for x in 0..n {
        for l in 0..3 {
            let y = code[3 * x + l] as usize;
            if x < y {
                edges.push((x, y, l));
            }
        }
    }
    PortLabeledGraph::from_labeled(n, &edges).expect("canonical code describes a cubic graph")
}

fn matchings(n: usize, forbidden: &BTreeSet<(usize, usize)>) -> Vec<Vec<(usize, usize)>> {
    fn rec(used: &mut Vec<bool>, cur: &mut Vec<(usize, usize)>, forbidden: &BTreeSet<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
        let Some(a) = used.iter().position(|&u| !u) else {
            out.push(cur.clone());
            return;
        };
        used[a] = true;
        for b in a + 1..used.len() {
            if !used[b] && !forbidden.contains(&(a, b)) {
                used[b] = true;
                cur.push((a, b));
                rec(used, cur, forbidden, out);
                cur.pop();
                used[b] = false;
            }
        }
        used[a] = false;
    }
    let mut out = Vec::new();
    rec(&mut vec![false; n], &mut Vec::new(), forbidden, &mut out);
    out
}

/// Every connected simple edge-symmetric cubic graph on `n` vertices, one per
/// label-preserving isomorphism class, in canonical vertex numbering.
///
/// Label-preserving classes are finer than classes up to label permutation, so a
/// sequence certified on this family is certified on every labeling.
pub fn cubic_exhaustive(n: usize) -> Vec<PortLabeledGraph> {
    if n < 4 || n % 2 == 1 {
        return Vec::new();
    }
    let m0: Vec<(usize, usize)> = (0..n / 2).map(|i| (2 * i, 2 * i + 1)).collect();
    let f0: BTreeSet<(usize, usize)> = m0.iter().copied().collect();
    let mut codes = BTreeSet::new();
    for m1 in matchings(n, &f0) {
        let mut f1 = f0.clone();
        f1.extend(m1.iter().copied());
        for m2 in matchings(n, &f1) {
            let mut edges: Vec<(usize, usize, usize)> = m0.iter().map(|&(a, b)| (a, b, 0)).collect();
            edges.extend(m1.iter().map(|&(a, b)| (a, b, 1)));
            edges.extend(m2.iter().map(|&(a, b)| (a, b, 2)));
            let g = PortLabeledGraph::from_labeled(n, &edges).expect("matchings are disjoint");
            if g.is_connected() {
                codes.insert(cubic_canonical_code(&g));
            }
        }
    }
    codes.into_iter().map(|c| graph_from_code(&c)).collect()
}

/// The exhaustive family for every even n in `4..=max_n`.
pub fn cubic_exhaustive_upto(max_n: usize) -> Vec<NamedGraph> {
    let mut out = Vec::new();
    for n in (4..=max_n).step_by(2) {
        for (i, g) in cubic_exhaustive(n).into_iter().enumerate() {
            out.push(NamedGraph::new(format!("cubic-n{n}-{i}"), g));
        }
    }
    out
}

/// `count` seeded cubic samples with sizes cycling through even n in 12..=200.
pub fn cubic_samples(count: usize, seed: u64) -> Vec<NamedGraph> {
    (0..count)
        .map(|i| {
            let n = 12 + 2 * (i % 95);
            let s = seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
            NamedGraph::new(format!("cubic-sample-{i}-n{n}"), random_3regular(n, s).expect("even n >= 12"))
        })
        .collect()
}

/// Sizes above 12 in the general corpus.
pub const GENERAL_LARGE_SIZES: [usize; 8] = [16, 20, 32, 50, 64, 100, 128, 200];

/// General connected graphs with minimum degree 2 (except n = 1): for each n up to
/// `max_n` a cycle and two seeded chorded cycles, plus one chorded cycle per large size.
pub fn general_corpus(max_n: usize, seed: u64) -> Vec<NamedGraph> {
    let mut out = Vec::new();
    for n in 1..=max_n.min(12) {
        match n {
            1 | 2 => out.push(NamedGraph::new(format!("general-n{n}"), random_general(n, 0, seed).expect("small"))),
            _ => {
                out.push(NamedGraph::new(format!("cycle-n{n}"), cycle(n)));
                let max_chords = n * (n - 1) / 2 - n;
                for (k, extra) in [1usize, n / 2].into_iter().enumerate() {
                    if extra <= max_chords && extra > 0 {
                        let g = random_general(n, extra, seed.wrapping_add((100 * n + k) as u64)).expect("fits");
                        out.push(NamedGraph::new(format!("general-n{n}-c{extra}"), g));
                    }
                }
            }
        }
    }
    for &n in GENERAL_LARGE_SIZES.iter().filter(|&&n| n <= max_n) {
        let g = random_general(n, n / 2, seed.wrapping_add((100 * n) as u64)).expect("fits");
        out.push(NamedGraph::new(format!("general-n{n}-c{}", n / 2), g));
    }
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub file: String,
    pub vertex_count: usize,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub description: String,
    pub counts_per_n: BTreeMap<usize, usize>,
    pub entries: Vec<ManifestEntry>,
}

/// Manifest for a family; files are named `<name>.json` and hashed over their canonical document.
pub fn manifest(description: &str, graphs: &[NamedGraph]) -> Manifest {
    let mut counts_per_n = BTreeMap::new();
    let entries = graphs
        .iter()
        .map(|ng| {
            *counts_per_n.entry(ng.graph.vertex_count()).or_insert(0) += 1;
            ManifestEntry {
                name: ng.name.clone(),
                file: format!("{}.json", ng.name),
                vertex_count: ng.graph.vertex_count(),
                sha256: sha256_hex(serialize(&ng.graph).as_bytes()),
            }
        })
        .collect();
    Manifest { description: description.to_string(), counts_per_n, entries }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k4_family_matches_hand_count() {
        // K4 has three perfect matchings; with M0 fixed the other two can be labeled 1/2 in 2 ways,
        // and the two are label-preserving isomorphic, giving a single class.
        let fam = cubic_exhaustive(4);
        assert_eq!(fam.len(), 1);
        assert!(fam[0].is_symmetric_cubic());
    }

    #[test]
    fn families_are_canonical_and_distinct() {
        for n in [6, 8] {
            let fam = cubic_exhaustive(n);
            let codes: BTreeSet<_> = fam.iter().map(cubic_canonical_code).collect();
            assert_eq!(codes.len(), fam.len());
            for g in &fam {
                assert!(g.is_symmetric_cubic() && g.is_connected());
            }
        }
    }

    #[test]
    fn canonical_code_is_relabeling_invariant() {
        let g = crate::graph::prism();
        let perm = [3usize, 5, 0, 2, 4, 1];
        let edges: Vec<_> = g.edges().iter().map(|e| (perm[e.u], perm[e.v], e.pu)).collect();
        let h = PortLabeledGraph::from_labeled(6, &edges).unwrap();
        assert_eq!(cubic_canonical_code(&g), cubic_canonical_code(&h));
    }

    #[test]
    fn general_corpus_is_valid() {
        for ng in general_corpus(12, 7) {
            assert!(crate::graph::validate(&ng.graph).is_valid(), "{}", ng.name);
            if ng.graph.vertex_count() > 1 {
                assert!(ng.graph.min_degree() >= 2, "{}", ng.name);
            }
        }
    }

    #[test]
    fn manifest_is_deterministic() {
        let a = manifest("x", &cubic_exhaustive_upto(6));
        let b = manifest("x", &cubic_exhaustive_upto(6));
        assert_eq!(a, b);
        assert_eq!(a.counts_per_n.values().sum::<usize>(), a.entries.len());
    }
}
