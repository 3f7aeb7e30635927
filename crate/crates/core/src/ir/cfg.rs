//! Basic-block recovery and jump-target resolution.

use std::collections::BTreeSet;
use std::time::Instant;

use primitive_types::U256;

use crate::bytecode::{opcodes, InstructionStream, OpCategory};
use crate::error::{Error, Result};
use crate::flags::Flag;

use super::{fold, BasicBlock, SsaProgram, Terminator};

/// Depth of the abstract stack we track per block. Jump targets and selector
/// traffic live near the top; deeper slots degrade to opaque.
const TRACKED_DEPTH: usize = 64;

/// Partition the stream into basic blocks with static (fallthrough) edges.
/// Dynamic jump edges are deferred to [`resolve_jumps`].
pub fn build_cfg(stream: InstructionStream) -> SsaProgram {
    let mut program = SsaProgram {
        entry: 0,
        ..Default::default()
    };
    if stream.truncated_push {
        program.flags.insert(Flag::TruncatedPush);
    }
    if !stream.post_shanghai.is_empty() {
        program.flags.insert(Flag::VersionWarning);
    }

    let insns = &stream.instructions;
    if insns.is_empty() {
        program.stream = stream;
        return program;
    }

    // Leaders: first instruction, every JUMPDEST, and whatever follows a
    // control transfer or halt.
    let mut leader = vec![false; insns.len()];
    leader[0] = true;
    for (i, insn) in insns.iter().enumerate() {
        if insn.opcode == opcodes::JUMPDEST {
            leader[i] = true;
        }
        let meta = opcodes::opcode_info(insn.opcode);
        let transfers = matches!(insn.opcode, opcodes::JUMP | opcodes::JUMPI)
            || meta.halts
            || meta.category == OpCategory::Invalid;
        if transfers && i + 1 < insns.len() {
            leader[i + 1] = true;
        }
    }

    let mut start = 0usize;
    for i in 0..insns.len() {
        let is_last = i + 1 == insns.len();
        if !is_last && !leader[i + 1] {
            continue;
        }
        let end = i + 1;
        let last = &insns[i];
        let meta = opcodes::opcode_info(last.opcode);
        let terminator = match last.opcode {
            opcodes::JUMP => Terminator::Jump,
            opcodes::JUMPI => Terminator::Jumpi,
            _ if meta.category == OpCategory::Invalid => Terminator::Invalid,
            _ if meta.halts => Terminator::Halt,
            _ => Terminator::Fallthrough,
        };
        let id = program.blocks.len();
        program.blocks.push(BasicBlock {
            id,
            entry_offset: insns[start].offset,
            insn_start: start,
            insn_end: end,
            terminator,
            successors: Vec::new(),
        });
        start = end;
    }

    // Static fallthrough edges.
    for id in 0..program.blocks.len() {
        let has_next = id + 1 < program.blocks.len();
        let term = program.blocks[id].terminator;
        if has_next && matches!(term, Terminator::Fallthrough | Terminator::Jumpi) {
            program.blocks[id].successors.push(id + 1);
        }
    }

    program.stream = stream;
    program.block_nodes = vec![Vec::new(); program.blocks.len()];
    program
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Abstract {
    Const(U256),
    Opaque,
}

impl Abstract {
    fn constant(self) -> Option<U256> {
        match self {
            Abstract::Const(v) => Some(v),
            Abstract::Opaque => None,
        }
    }
}

/// Abstract stack with the top at index 0 so merges align on recency.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
struct AbsStack {
    slots: Vec<Abstract>,
}

impl AbsStack {
    fn push(&mut self, v: Abstract) {
        self.slots.insert(0, v);
        self.slots.truncate(TRACKED_DEPTH);
    }

    fn pop(&mut self) -> Abstract {
        if self.slots.is_empty() {
            Abstract::Opaque
        } else {
            self.slots.remove(0)
        }
    }

    /// Path-insensitive join: equal constants survive, everything else is
    /// opaque; depth shrinks to the shorter stack.
    fn merge(&self, other: &AbsStack) -> AbsStack {
        let len = self.slots.len().min(other.slots.len());
        let slots = (0..len)
            .map(|i| match (self.slots[i], other.slots[i]) {
                (Abstract::Const(a), Abstract::Const(b)) if a == b => Abstract::Const(a),
                _ => Abstract::Opaque,
            })
            .collect();
        AbsStack { slots }
    }
}

fn exec_block(program: &SsaProgram, block: &BasicBlock, entry: &AbsStack) -> (AbsStack, JumpInfo) {
    let mut stack = entry.clone();
    let mut jump = JumpInfo::None;
    for insn in &program.stream.instructions[block.insn_start..block.insn_end] {
        let op = insn.opcode;
        if let Some(v) = insn.push_value() {
            stack.push(Abstract::Const(v));
            continue;
        }
        if opcodes::is_dup(op) {
            let n = (op - opcodes::DUP1) as usize;
            let v = stack.slots.get(n).copied().unwrap_or(Abstract::Opaque);
            stack.push(v);
            continue;
        }
        if opcodes::is_swap(op) {
            let n = (op - opcodes::SWAP1) as usize + 1;
            while stack.slots.len() <= n {
                stack.slots.push(Abstract::Opaque);
            }
            stack.slots.swap(0, n);
            continue;
        }
        match op {
            opcodes::JUMP | opcodes::JUMPI => {
                let target = stack.pop();
                if op == opcodes::JUMPI {
                    stack.pop();
                }
                jump = match target.constant() {
                    Some(t) => JumpInfo::Resolved(t),
                    None => JumpInfo::Dynamic,
                };
            }
            _ => {
                let meta = opcodes::opcode_info(op);
                let mut args = Vec::with_capacity(meta.stack_inputs as usize);
                for _ in 0..meta.stack_inputs {
                    args.push(stack.pop().constant());
                }
                if meta.stack_outputs > 0 {
                    let folded = fold::eval(op, &args);
                    stack.push(match folded {
                        Some(v) => Abstract::Const(v),
                        None => Abstract::Opaque,
                    });
                }
            }
        }
    }
    (stack, jump)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum JumpInfo {
    None,
    Resolved(U256),
    Dynamic,
}

/// Constant-propagated stack simulation to a fixpoint, bounded by
/// `max(4, 2 * block count)` sweeps. Exhausting the budget flags the program
/// `incomplete` instead of aborting; only the wall-clock deadline errors.
pub fn resolve_jumps(program: &mut SsaProgram, deadline: Option<Instant>) -> Result<()> {
    if program.blocks.is_empty() {
        return Ok(());
    }
    let n = program.blocks.len();
    let budget = 4.max(2 * n);
    let entry_map: std::collections::HashMap<usize, usize> = program
        .blocks
        .iter()
        .map(|b| (b.entry_offset, b.id))
        .collect();

    let mut entries: Vec<Option<AbsStack>> = vec![None; n];
    entries[program.entry] = Some(AbsStack::default());
    let mut resolved: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    let mut dynamic: Vec<bool> = vec![false; n];

    let mut passes = 0usize;
    let mut changed = true;
    while changed {
        if passes >= budget {
            program.flags.insert(Flag::Incomplete);
            break;
        }
        if let Some(d) = deadline {
            if Instant::now() > d {
                return Err(Error::BudgetExceeded);
            }
        }
        passes += 1;
        changed = false;

        for id in 0..n {
            let Some(entry) = entries[id].clone() else {
                continue;
            };
            let block = program.blocks[id].clone();
            let (exit, jump) = exec_block(program, &block, &entry);

            match jump {
                JumpInfo::Resolved(target) => {
                    if target <= U256::from(usize::MAX) {
                        let offset = target.as_usize();
                        if program.stream.jumpdests.contains(&offset) && resolved[id].insert(offset)
                        {
                            changed = true;
                        }
                    }
                }
                JumpInfo::Dynamic => {
                    if !dynamic[id] {
                        dynamic[id] = true;
                        changed = true;
                    }
                }
                JumpInfo::None => {}
            }

            // Current successor view: static edges plus resolved targets.
            let mut succs = program.blocks[id].successors.clone();
            for offset in &resolved[id] {
                if let Some(&tid) = entry_map.get(offset) {
                    if !succs.contains(&tid) {
                        succs.push(tid);
                    }
                }
            }
            for s in succs {
                let merged = match &entries[s] {
                    Some(existing) => existing.merge(&exit),
                    None => exit.clone(),
                };
                if entries[s].as_ref() != Some(&merged) {
                    entries[s] = Some(merged);
                    changed = true;
                }
            }
        }
    }

    // Commit resolved edges and record what stayed dynamic.
    for id in 0..n {
        let offsets: Vec<usize> = resolved[id].iter().copied().collect();
        for offset in offsets {
            if let Some(&tid) = entry_map.get(&offset) {
                if !program.blocks[id].successors.contains(&tid) {
                    program.blocks[id].successors.push(tid);
                }
            }
        }
        if dynamic[id] {
            let block = &program.blocks[id];
            let last = &program.stream.instructions[block.insn_end - 1];
            program.unresolved_jumps.insert(last.offset);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bytecode::decode_hex;

    fn program(hex: &str) -> SsaProgram {
        let mut p = build_cfg(decode_hex(hex).unwrap());
        resolve_jumps(&mut p, None).unwrap();
        p
    }

    #[test]
    fn straight_line_single_block() {
        // PUSH1 1 PUSH1 2 ADD STOP
        let p = program("0x600160020100");
        assert_eq!(p.blocks.len(), 1);
        assert!(p.blocks[0].successors.is_empty());
        assert_eq!(p.blocks[0].terminator, Terminator::Halt);
    }

    #[test]
    fn jumpi_block_has_two_successors() {
        // Hand-built 10-byte fixture, CFG checked manually:
        // 0: PUSH1 1, 2: PUSH1 8, 4: JUMPI, 5..7: STOP, 8: JUMPDEST, 9: STOP
        let p = program("0x60016008570000005b00");
        let b0 = &p.blocks[0];
        assert_eq!(b0.terminator, Terminator::Jumpi);
        assert_eq!(b0.successors.len(), 2);
        let dest = p.block_at_entry(8).unwrap();
        let fall = p.block_at_entry(5).unwrap();
        assert!(b0.successors.contains(&dest));
        assert!(b0.successors.contains(&fall));
    }

    #[test]
    fn calldata_target_stays_unresolved() {
        // 0: PUSH1 0, 2: CALLDATALOAD, 3: JUMP, 4: STOP, 5: JUMPDEST, 6: STOP
        let p = program("0x60003556005b00");
        assert_eq!(p.unresolved_jumps.len(), 1);
        assert!(p.unresolved_jumps.contains(&3));
        assert!(p.blocks[0].successors.is_empty());
    }

    #[test]
    fn constant_folded_target_resolves() {
        // target = 3 + 4 = 7, where offset 7 is a JUMPDEST:
        // 0: PUSH1 3, 2: PUSH1 4, 4: ADD, 5: JUMP, 6: STOP, 7: JUMPDEST, 8: STOP
        let p = program("0x600360040156005b00");
        let dest_block = p.block_at_entry(7).unwrap();
        assert!(p.blocks[0].successors.contains(&dest_block));
        assert!(p.unresolved_jumps.is_empty());
    }

    #[test]
    fn partition_covers_every_instruction() {
        let p = program("0x6001600757005b6000540160005500");
        let total: usize = p.blocks.iter().map(|b| b.len()).sum();
        assert_eq!(total, p.stream.instructions.len());
    }

    #[test]
    fn jump_to_non_jumpdest_adds_no_edge() {
        // PUSH1 4 JUMP STOP STOP — offset 4 is not a JUMPDEST
        let p = program("0x600456000000");
        assert!(p.blocks[0].successors.is_empty());
        assert!(p.unresolved_jumps.is_empty());
    }
}
