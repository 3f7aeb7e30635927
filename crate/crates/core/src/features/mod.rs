//! The seven transfer-obfuscation features.
//!
//! Per-site signals: F1 counts derivation steps behind the recipient address
//! (linear arithmetic runs inside one block consolidate to a single step),
//! F2 counts string/byte manipulation in the same slice, F3 marks external
//! calls feeding recipient or amount, F4 is the conditional nesting depth
//! above the call, F5 is the transfer-related instruction ratio of the owning
//! function. Contract-level signals: F6 is the maximum pairwise similarity
//! among transfer-containing functions (WL fingerprint cosine) and F7 marks
//! log events that co-occur with a transfer but have nothing to do with it.

pub mod logs;
pub mod wl;

use std::collections::{BTreeSet, HashSet};

use primitive_types::U256;
use serde::{Deserialize, Serialize};

use crate::bytecode::{opcodes, OpCategory};
use crate::error::{Error, Result};
use crate::flags::{Flag, FlagSet};
use crate::ir::{
    backward_slice, branch_height, build_pdg, ControlDeps, Pdg, Slice, SsaProgram, ValueId,
};
use crate::transfer::{decompose, Decomposition, TransferSite};
use crate::AnalyzedContract;

use logs::{
    ExternalClassifier, HeuristicClassifier, LogClassifier, LogRelation, LogRequest, ReviewEntry,
    SignatureSet, SiteSummary,
};
pub use wl::{cosine, wl_fingerprint, Fingerprint};

/// The seven scalars for one contract.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub f1_addr_steps: u32,
    pub f2_string_ops: u32,
    pub f3_external_call: u8,
    pub f4_branch_height: u32,
    pub f5_tir: f64,
    pub f6_similarity: f64,
    pub f7_irrelevant_logs: u8,
    pub site_count: u32,
    pub flags: FlagSet,
}

impl FeatureVector {
    /// F1..F7 as an array, in feature order.
    pub fn as_array(&self) -> [f64; 7] {
        [
            self.f1_addr_steps as f64,
            self.f2_string_ops as f64,
            self.f3_external_call as f64,
            self.f4_branch_height as f64,
            self.f5_tir,
            self.f6_similarity,
            self.f7_irrelevant_logs as f64,
        ]
    }

    pub fn from_array(values: [f64; 7]) -> Self {
        Self {
            f1_addr_steps: values[0] as u32,
            f2_string_ops: values[1] as u32,
            f3_external_call: (values[2] != 0.0) as u8,
            f4_branch_height: values[3] as u32,
            f5_tir: values[4],
            f6_similarity: values[5],
            f7_irrelevant_logs: (values[6] != 0.0) as u8,
            site_count: 0,
            flags: FlagSet::new(),
        }
    }

    pub fn has_transfers(&self) -> bool {
        !self.flags.contains(&Flag::NoTransfer)
    }
}

/// Which backend answers F7 classification requests.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum ClassifierKind {
    #[default]
    Heuristic,
    External(String),
}

/// Extraction knobs. Defaults follow the conservative readings: SLOAD counts
/// as an F1 step and SELFDESTRUCT sweeps count as sites.
#[derive(Debug, Clone)]
pub struct FeatureConfig {
    pub sload_steps: bool,
    pub selfdestruct_sites: bool,
    pub wl_iterations: usize,
    pub classifier: ClassifierKind,
    pub signatures: SignatureSet,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            sload_steps: true,
            selfdestruct_sites: true,
            wl_iterations: 3,
            classifier: ClassifierKind::Heuristic,
            signatures: SignatureSet::default(),
        }
    }
}

/// Per-site feature row for human-readable reports.
#[derive(Debug, Clone, Serialize)]
pub struct SiteFeatures {
    pub call_offset: usize,
    pub selector: Option<String>,
    pub f1: u32,
    pub f2: u32,
    pub f3: u8,
    pub f4: u32,
    pub f5: f64,
    pub f7: u8,
    pub flags: String,
}

/// Extraction result: the aggregated vector plus per-site rows and any
/// ambiguous-log review entries.
#[derive(Debug, Clone)]
pub struct FeatureOutcome {
    pub vector: FeatureVector,
    pub per_site: Vec<SiteFeatures>,
    pub reviews: Vec<ReviewEntry>,
}

/// Linear operations that consolidate inside one basic block for F1.
/// EXP joins the set only with a constant exponent.
fn is_linear(program: &SsaProgram, id: ValueId) -> bool {
    let v = program.value(id);
    match v.opcode() {
        Some(opcodes::ADD)
        | Some(opcodes::SUB)
        | Some(opcodes::MUL)
        | Some(opcodes::DIV)
        | Some(opcodes::SDIV)
        | Some(opcodes::MOD) => true,
        Some(opcodes::EXP) => v
            .operands
            .get(1)
            .is_some_and(|&e| program.value(e).constant.is_some()),
        _ => false,
    }
}

/// Whether a slice member counts as an F1 step at all.
fn is_step(program: &SsaProgram, id: ValueId, sload_steps: bool) -> bool {
    let Some(op) = program.value(id).opcode() else {
        return false;
    };
    if op == opcodes::SLOAD {
        return sload_steps;
    }
    if is_call_op(op) {
        return true;
    }
    matches!(
        opcodes::opcode_info(op).category,
        OpCategory::Arithmetic | OpCategory::Bitwise | OpCategory::Hash
    )
}

fn is_call_op(op: u8) -> bool {
    matches!(
        op,
        opcodes::CALL | opcodes::CALLCODE | opcodes::DELEGATECALL | opcodes::STATICCALL
    )
}

/// F1: derivation steps behind the recipient. Maximal runs of linear
/// operations within one basic block collapse to one step; hash, bitwise and
/// call operations always count individually. Runs are taken over the
/// slice's step members in code order; non-step slice members in between do
/// not break a run.
pub fn f1_address_steps(program: &SsaProgram, slice: &Slice, sload_steps: bool) -> u32 {
    let mut steps: Vec<(usize, usize, bool)> = slice
        .members
        .iter()
        .filter(|&&id| is_step(program, id, sload_steps))
        .map(|&id| {
            let v = program.value(id);
            (v.block, v.offset.unwrap_or(usize::MAX), is_linear(program, id))
        })
        .collect();
    steps.sort_unstable();

    let mut count = 0u32;
    let mut run_block: Option<usize> = None;
    for (block, _, linear) in steps {
        if linear {
            if run_block != Some(block) {
                count += 1;
                run_block = Some(block);
            }
        } else {
            count += 1;
            run_block = None;
        }
    }
    count
}

/// A 256-bit constant whose set bits form one contiguous run of whole bytes
/// (an alignment/extraction mask rather than arithmetic).
fn is_byte_mask(c: U256) -> bool {
    if c.is_zero() {
        return false;
    }
    let bytes = c.to_big_endian();
    let mut i = 0;
    while i < 32 && bytes[i] == 0 {
        i += 1;
    }
    let mut j = 31;
    while j > 0 && bytes[j] == 0 {
        j -= 1;
    }
    (i..=j).all(|k| bytes[k] == 0xff)
}

/// F2: string/byte manipulation in the address derivation — hashes, byte
/// extraction and shifts, byte-aligned masks, and memory traffic feeding the
/// slice.
pub fn f2_string_ops(program: &SsaProgram, slice: &Slice) -> u32 {
    slice
        .members
        .iter()
        .filter(|&&id| {
            let v = program.value(id);
            match v.opcode() {
                Some(opcodes::KECCAK256)
                | Some(opcodes::BYTE)
                | Some(opcodes::SHL)
                | Some(opcodes::SHR)
                | Some(opcodes::SAR)
                | Some(opcodes::MLOAD)
                | Some(opcodes::CALLDATACOPY)
                | Some(opcodes::CODECOPY) => true,
                Some(opcodes::AND) | Some(opcodes::OR) => v.operands.iter().any(|&o| {
                    program
                        .value(o)
                        .constant
                        .is_some_and(is_byte_mask)
                }),
                _ => false,
            }
        })
        .count() as u32
}

/// F3: 1 iff either slice's frontier contains a call-family operation.
pub fn f3_external_call(program: &SsaProgram, addr: &Slice, value: &Slice) -> u8 {
    let hit = addr
        .members
        .iter()
        .chain(value.members.iter())
        .any(|&id| program.value(id).opcode().is_some_and(is_call_op));
    hit as u8
}

/// F4: maximum nesting depth of JUMPI decisions governing the call.
pub fn f4_branch_height(program: &SsaProgram, deps: &ControlDeps, site: &TransferSite) -> u32 {
    branch_height(program, deps, site.call) as u32
}

/// F5: transfer-related instruction ratio |C ∪ S| / |T| over the owning
/// unit, where C is the PDG-backward closure from the call (data + control),
/// S the SSTOREs whose key or stored value shares dataflow with the
/// recipient/amount slices, and T the unit's operation nodes. Phis are
/// traversed but not counted on either side.
pub fn f5_tir(
    program: &SsaProgram,
    pdg: &Pdg,
    site: &TransferSite,
    decomposition: &Decomposition,
) -> Result<f64> {
    let countable = |id: ValueId| program.value(id).offset.is_some();
    let total = pdg.nodes.iter().filter(|&&id| countable(id)).count();
    if total == 0 {
        return Err(Error::DegenerateUnit);
    }

    // C: backward closure over PDG data + control edges from the call.
    let mut closure: BTreeSet<ValueId> = BTreeSet::new();
    let mut queue = vec![site.call];
    let mut adjacency: std::collections::HashMap<ValueId, Vec<ValueId>> =
        std::collections::HashMap::new();
    for &(a, b) in pdg.data_edges.iter().chain(pdg.control_edges.iter()) {
        adjacency.entry(a).or_default().push(b);
    }
    while let Some(id) = queue.pop() {
        if !closure.insert(id) {
            continue;
        }
        if let Some(nexts) = adjacency.get(&id) {
            queue.extend(nexts.iter().copied());
        }
    }

    // S: state writes parameterized by transfer data.
    let relevant: HashSet<ValueId> = decomposition
        .addr_slice
        .members
        .iter()
        .chain(decomposition.value_slice.members.iter())
        .copied()
        .collect();
    let mut union = closure;
    for &id in &pdg.nodes {
        let v = program.value(id);
        if v.opcode() != Some(opcodes::SSTORE) {
            continue;
        }
        let touches = v.operands.iter().any(|&operand| {
            let s = backward_slice(program, operand, false, None);
            s.members.iter().any(|m| relevant.contains(m))
        });
        if touches {
            union.insert(id);
        }
    }

    let used = union.iter().filter(|&&id| countable(id)).count();
    Ok(used as f64 / total as f64)
}

/// F6: maximum pairwise WL-cosine similarity across transfer-containing
/// functions, as a percentage. Single-unit contracts score 0 (no pair).
pub fn f6_similarity(fingerprints: &[Fingerprint]) -> f64 {
    if fingerprints.len() < 2 {
        return 0.0;
    }
    let mut best = 0.0f64;
    for i in 0..fingerprints.len() {
        for j in i + 1..fingerprints.len() {
            best = best.max(cosine(&fingerprints[i], &fingerprints[j]));
        }
    }
    best * 100.0
}

/// F7 for one site: classify each co-occurring log; 1 iff at least one is
/// unrelated. Ambiguous logs are treated as related and returned for review.
pub fn f7_log_relevance(
    program: &SsaProgram,
    analysis: &AnalyzedContract,
    site: &TransferSite,
    decomposition: &Decomposition,
    config: &FeatureConfig,
    reviews: &mut Vec<ReviewEntry>,
    flags: &mut FlagSet,
) -> u8 {
    let heuristic = HeuristicClassifier {
        signatures: config.signatures.clone(),
    };
    let external = match &config.classifier {
        ClassifierKind::External(url) => Some(ExternalClassifier { url: url.clone() }),
        ClassifierKind::Heuristic => None,
    };

    let relevant: HashSet<ValueId> = decomposition
        .addr_slice
        .members
        .iter()
        .chain(decomposition.value_slice.members.iter())
        .copied()
        .collect();

    let mut any_unrelated = false;
    for info in &decomposition.logs {
        let log_value = program.value(info.node);
        let overlap = log_value.operands.iter().any(|&operand| {
            let s = backward_slice(program, operand, false, None);
            s.members.iter().any(|m| relevant.contains(m))
        });
        let request = LogRequest {
            topic0: info.topic0.map(|t| format!("0x{t:064x}")),
            topics: info
                .topics
                .iter()
                .map(|t| t.map(|v| format!("0x{v:064x}")))
                .collect(),
            mnemonic: log_value
                .opcode()
                .map(|op| opcodes::opcode_info(op).mnemonic.to_string())
                .unwrap_or_default(),
            slice_overlap: overlap,
            site: SiteSummary {
                call_offset: program.value(site.call).offset.unwrap_or_default(),
                selector: analysis
                    .units
                    .get(site.unit)
                    .and_then(|u| u.selector_hex()),
                flags: crate::flags::render_flags(&site.flags),
            },
        };
        let verdict = match &external {
            Some(clf) => match clf.classify(&request) {
                Ok(v) => v,
                Err(_) => {
                    flags.insert(Flag::F7HeuristicOnly);
                    heuristic.classify(&request).unwrap_or(logs::LogVerdict {
                        relation: LogRelation::Ambiguous,
                        confidence: 0.0,
                    })
                }
            },
            None => heuristic.classify(&request).unwrap_or(logs::LogVerdict {
                relation: LogRelation::Ambiguous,
                confidence: 0.0,
            }),
        };
        match verdict.relation {
            LogRelation::Unrelated => any_unrelated = true,
            LogRelation::Ambiguous => reviews.push(ReviewEntry {
                contract: String::new(),
                log_offset: log_value.offset.unwrap_or_default(),
                topics: request.topics.clone(),
                verdict: LogRelation::Ambiguous,
                treated_as: LogRelation::Related,
            }),
            LogRelation::Related => {}
        }
    }
    any_unrelated as u8
}

/// Extract the full vector for one analyzed contract. Per-site F1..F4
/// aggregate by max, F5 by min over transfer-containing units, F6/F7 are
/// contract-level. Contracts without sites return the flagged zero vector.
pub fn extract_features(analysis: &AnalyzedContract, config: &FeatureConfig) -> FeatureOutcome {
    let program = &analysis.program;
    let mut vector = FeatureVector::default();
    let mut reviews = Vec::new();
    let mut per_site = Vec::new();

    vector.flags.extend(program.flags.iter().copied());
    vector.site_count = analysis.sites.len() as u32;
    if analysis.sites.is_empty() {
        vector.flags.insert(Flag::NoTransfer);
        return FeatureOutcome {
            vector,
            per_site,
            reviews,
        };
    }
    if !program.unresolved_jumps.is_empty() {
        vector.flags.insert(Flag::F4Floor);
    }

    // PDGs for every unit that owns at least one site.
    let transfer_units: BTreeSet<usize> = analysis.sites.iter().map(|s| s.unit).collect();
    let pdgs: std::collections::HashMap<usize, Pdg> = transfer_units
        .iter()
        .map(|&u| (u, build_pdg(program, &analysis.units[u], &analysis.deps)))
        .collect();

    let mut f5_min: Option<f64> = None;
    for site in &analysis.sites {
        vector.flags.extend(site.flags.iter().copied());
        let decomposition = decompose(program, site);
        let f1 = f1_address_steps(program, &decomposition.addr_slice, config.sload_steps);
        let f2 = f2_string_ops(program, &decomposition.addr_slice);
        let f3 = f3_external_call(program, &decomposition.addr_slice, &decomposition.value_slice);
        let f4 = f4_branch_height(program, &analysis.deps, site);
        let f5 = pdgs
            .get(&site.unit)
            .and_then(|pdg| f5_tir(program, pdg, site, &decomposition).ok());
        let f7 = f7_log_relevance(
            program,
            analysis,
            site,
            &decomposition,
            config,
            &mut reviews,
            &mut vector.flags,
        );

        vector.f1_addr_steps = vector.f1_addr_steps.max(f1);
        vector.f2_string_ops = vector.f2_string_ops.max(f2);
        vector.f3_external_call = vector.f3_external_call.max(f3);
        vector.f4_branch_height = vector.f4_branch_height.max(f4);
        if let Some(f5) = f5 {
            f5_min = Some(match f5_min {
                Some(existing) => existing.min(f5),
                None => f5,
            });
        }
        vector.f7_irrelevant_logs = vector.f7_irrelevant_logs.max(f7);

        per_site.push(SiteFeatures {
            call_offset: program.value(site.call).offset.unwrap_or_default(),
            selector: analysis
                .units
                .get(site.unit)
                .and_then(|u| u.selector_hex()),
            f1,
            f2,
            f3,
            f4,
            f5: f5.unwrap_or(0.0),
            f7,
            flags: crate::flags::render_flags(&site.flags),
        });
    }
    vector.f5_tir = f5_min.unwrap_or(0.0);

    let fingerprints: Vec<Fingerprint> = transfer_units
        .iter()
        .map(|u| wl_fingerprint(program, &pdgs[u], config.wl_iterations))
        .collect();
    vector.f6_similarity = f6_similarity(&fingerprints);

    FeatureOutcome {
        vector,
        per_site,
        reviews,
    }
}
