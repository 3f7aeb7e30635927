//! Function-unit recovery from the selector dispatcher idiom.
//!
//! Solidity's dispatcher loads the first calldata word, shifts or masks it
//! down to 4 bytes and compares it against each public selector with
//! EQ + JUMPI. Each matched constant opens a selector unit; the no-match path
//! becomes the fallback unit. Contracts that branch on calldata without the
//! canonical compare chain (hand-rolled routers, shortened selectors) get a
//! fallback-only partition flagged `dispatch-atypical`.

use std::collections::{BTreeSet, HashSet, VecDeque};

use primitive_types::U256;

use crate::bytecode::opcodes;
use crate::flags::{Flag, FlagSet};

use super::{BlockId, FunctionUnit, SsaOp, SsaProgram, ValueId};

/// Cap on the operand walk when deciding whether a value derives from the
/// first calldata word. Dispatcher chains route the selector through one phi
/// per compare block, so the walk must cover the longest realistic selector
/// chain (large routers exceed 200 entries).
const SELECTOR_WALK: usize = 4096;

pub fn identify_functions(program: &SsaProgram) -> (Vec<FunctionUnit>, FlagSet) {
    let mut flags = FlagSet::new();
    if program.blocks.is_empty() {
        return (Vec::new(), flags);
    }

    // Selector compares: JUMPI whose condition is EQ(selector-like, const<=u32).
    let mut dispatcher_blocks: BTreeSet<BlockId> = BTreeSet::new();
    let mut entries: Vec<([u8; 4], BlockId)> = Vec::new();
    let mut calldata_branching = false;

    for block in &program.blocks {
        let Some(term) = program.terminator_node(block.id) else {
            continue;
        };
        let term_value = program.value(term);
        if term_value.opcode() != Some(opcodes::JUMPI) || term_value.operands.len() < 2 {
            continue;
        }
        let cond = program.value(term_value.operands[1]);
        if derives_from_selector_load(program, cond.id) {
            calldata_branching = true;
        }
        let Some(selector) = match_selector_compare(program, cond) else {
            continue;
        };
        // Taken edge: the successor whose entry offset equals the jump target.
        let target = program.value(term_value.operands[0]).constant;
        let Some(target) = target else { continue };
        if target > U256::from(usize::MAX) {
            continue;
        }
        let Some(entry) = program.block_at_entry(target.as_usize()) else {
            continue;
        };
        dispatcher_blocks.insert(block.id);
        entries.push((selector, entry));
    }

    if entries.is_empty() {
        // No canonical dispatcher: one fallback unit spanning everything.
        let all: BTreeSet<BlockId> = (0..program.blocks.len()).collect();
        if calldata_branching {
            flags.insert(Flag::DispatchAtypical);
        }
        let unit = FunctionUnit {
            selector: None,
            entry: program.entry,
            blocks: all,
            shared: BTreeSet::new(),
            contains_transfer: false,
        };
        return (vec![unit], flags);
    }

    let selector_entries: HashSet<BlockId> = entries.iter().map(|&(_, e)| e).collect();

    // Fallback entries: dispatcher successors that match no selector and are
    // not part of the compare chain (covers both the short-calldata guard
    // target and the end-of-chain no-match path).
    let mut fallback_entries: BTreeSet<BlockId> = BTreeSet::new();
    for &d in &dispatcher_blocks {
        for &s in &program.blocks[d].successors {
            if !selector_entries.contains(&s) && !dispatcher_blocks.contains(&s) {
                fallback_entries.insert(s);
            }
        }
    }

    let mut units = Vec::new();
    for &(selector, entry) in &entries {
        units.push(FunctionUnit {
            selector: Some(selector),
            entry,
            blocks: reachable(program, [entry], &dispatcher_blocks),
            shared: BTreeSet::new(),
            contains_transfer: false,
        });
    }

    // Blocks no unit reaches (usually edges lost to unresolved jumps) join
    // the fallback partition rather than silently dropping out of analysis.
    let mut fallback_blocks =
        reachable(program, fallback_entries.iter().copied(), &dispatcher_blocks);
    let covered: BTreeSet<BlockId> = units
        .iter()
        .flat_map(|u| u.blocks.iter().copied())
        .chain(dispatcher_blocks.iter().copied())
        .chain(fallback_blocks.iter().copied())
        .collect();
    for b in 0..program.blocks.len() {
        if !covered.contains(&b) {
            fallback_blocks.insert(b);
        }
    }
    if !fallback_blocks.is_empty() {
        let entry = fallback_entries
            .iter()
            .next()
            .copied()
            .unwrap_or_else(|| *fallback_blocks.iter().next().unwrap());
        units.push(FunctionUnit {
            selector: None,
            entry,
            blocks: fallback_blocks,
            shared: BTreeSet::new(),
            contains_transfer: false,
        });
    }

    mark_shared(&mut units);
    (units, flags)
}

fn reachable<I: IntoIterator<Item = BlockId>>(
    program: &SsaProgram,
    roots: I,
    stop: &BTreeSet<BlockId>,
) -> BTreeSet<BlockId> {
    let mut seen = BTreeSet::new();
    let mut queue: VecDeque<BlockId> = roots.into_iter().collect();
    while let Some(b) = queue.pop_front() {
        if stop.contains(&b) || !seen.insert(b) {
            continue;
        }
        for &s in &program.blocks[b].successors {
            if !seen.contains(&s) {
                queue.push_back(s);
            }
        }
    }
    seen
}

/// Blocks claimed by more than one unit are shared internal subroutines;
/// every owner keeps them, flagged, so per-function metrics never
/// double-count silently.
fn mark_shared(units: &mut [FunctionUnit]) {
    let mut counts: std::collections::HashMap<BlockId, usize> = std::collections::HashMap::new();
    for unit in units.iter() {
        for &b in &unit.blocks {
            *counts.entry(b).or_default() += 1;
        }
    }
    for unit in units.iter_mut() {
        unit.shared = unit
            .blocks
            .iter()
            .copied()
            .filter(|b| counts[b] > 1)
            .collect();
    }
}

/// EQ against a constant that fits in 4 bytes, with the other side derived
/// from the first calldata word.
fn match_selector_compare(program: &SsaProgram, cond: &super::SsaValue) -> Option<[u8; 4]> {
    if cond.opcode() != Some(opcodes::EQ) || cond.operands.len() != 2 {
        return None;
    }
    let (a, b) = (
        program.value(cond.operands[0]),
        program.value(cond.operands[1]),
    );
    for (konst, other) in [(a, b), (b, a)] {
        let Some(c) = konst.constant else { continue };
        if c > U256::from(u32::MAX) {
            continue;
        }
        if derives_from_selector_load(program, other.id) {
            let bytes = c.to_big_endian();
            let mut sel = [0u8; 4];
            sel.copy_from_slice(&bytes[28..32]);
            return Some(sel);
        }
    }
    None
}

/// Bounded operand walk looking for CALLDATALOAD of offset 0 (the selector
/// word) reached through shift/mask/div arithmetic.
fn derives_from_selector_load(program: &SsaProgram, root: ValueId) -> bool {
    let mut seen = HashSet::new();
    let mut queue = VecDeque::from([root]);
    while let Some(id) = queue.pop_front() {
        if !seen.insert(id) || seen.len() > SELECTOR_WALK {
            continue;
        }
        let v = program.value(id);
        if v.opcode() == Some(opcodes::CALLDATALOAD) {
            let offset_const = v
                .operands
                .first()
                .and_then(|&o| program.value(o).constant);
            if offset_const == Some(U256::zero()) {
                return true;
            }
        }
        // Walking past other frontier reads would wander into unrelated
        // dataflow; the selector word only ever passes through pure ops.
        let traverse = match v.op {
            SsaOp::Phi => true,
            SsaOp::Op(op) => {
                use crate::bytecode::OpCategory::*;
                matches!(
                    opcodes::opcode_info(op).category,
                    Arithmetic | Bitwise | Stack
                )
            }
        };
        if traverse {
            queue.extend(v.operands.iter().copied());
        }
    }
    false
}
