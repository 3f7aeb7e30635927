//! Weisfeiler-Lehman label-refinement fingerprints over typed PDGs.
//!
//! Deterministic stand-in for a learned graph embedding: initial labels are
//! opcode categories, each round folds the multiset of (edge type, direction,
//! neighbor label) into a new label, and the fingerprint is the sparse
//! histogram of every label seen across all rounds. Isomorphic PDGs get
//! identical histograms; cosine similarity over histograms is the F6 backend.

use std::collections::{BTreeMap, HashMap};

use crate::bytecode::opcodes;
use crate::ir::{Pdg, SsaOp, SsaProgram, ValueId};

const EDGE_DATA: u8 = 0;
const EDGE_CONTROL: u8 = 1;
const DIR_OUT: u8 = 0;
const DIR_IN: u8 = 1;

/// Sparse label histogram; keys are stable 64-bit label hashes.
pub type Fingerprint = BTreeMap<u64, u64>;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn initial_label(program: &SsaProgram, id: ValueId) -> u64 {
    let v = program.value(id);
    let tag: [u8; 2] = match v.op {
        SsaOp::Phi => [0xff, 0],
        SsaOp::Op(op) => [opcodes::opcode_info(op).category as u8, 1],
    };
    fnv1a(&tag)
}

/// Run `iterations` refinement rounds and histogram all labels.
pub fn wl_fingerprint(program: &SsaProgram, pdg: &Pdg, iterations: usize) -> Fingerprint {
    let mut histogram = Fingerprint::new();
    if pdg.nodes.is_empty() {
        return histogram;
    }

    // Typed, directed adjacency.
    let mut adj: HashMap<ValueId, Vec<(u8, u8, ValueId)>> = HashMap::new();
    let mut push = |from: ValueId, to: ValueId, kind: u8| {
        adj.entry(from).or_default().push((kind, DIR_OUT, to));
        adj.entry(to).or_default().push((kind, DIR_IN, from));
    };
    for &(a, b) in &pdg.data_edges {
        push(a, b, EDGE_DATA);
    }
    for &(a, b) in &pdg.control_edges {
        push(a, b, EDGE_CONTROL);
    }

    let mut labels: HashMap<ValueId, u64> = pdg
        .nodes
        .iter()
        .map(|&id| (id, initial_label(program, id)))
        .collect();
    for &label in labels.values() {
        *histogram.entry(label).or_default() += 1;
    }

    for _ in 0..iterations {
        let mut next = HashMap::with_capacity(labels.len());
        for &id in &pdg.nodes {
            let mut neighborhood: Vec<(u8, u8, u64)> = adj
                .get(&id)
                .into_iter()
                .flatten()
                .map(|&(kind, dir, nb)| (kind, dir, labels[&nb]))
                .collect();
            neighborhood.sort_unstable();
            let mut bytes = Vec::with_capacity(8 + neighborhood.len() * 10);
            bytes.extend_from_slice(&labels[&id].to_le_bytes());
            for (kind, dir, label) in neighborhood {
                bytes.push(kind);
                bytes.push(dir);
                bytes.extend_from_slice(&label.to_le_bytes());
            }
            next.insert(id, fnv1a(&bytes));
        }
        labels = next;
        for &label in labels.values() {
            *histogram.entry(label).or_default() += 1;
        }
    }
    histogram
}

/// Cosine similarity of two sparse histograms in [0, 1]. Two empty
/// fingerprints share no evidence and score 0.
pub fn cosine(a: &Fingerprint, b: &Fingerprint) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let mut dot = 0.0f64;
    for (label, &ca) in a {
        if let Some(&cb) = b.get(label) {
            dot += ca as f64 * cb as f64;
        }
    }
    let na: f64 = a.values().map(|&c| (c as f64) * (c as f64)).sum();
    let nb: f64 = b.values().map(|&c| (c as f64) * (c as f64)).sum();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb).sqrt()
}
