//! Backward slicing over SSA operand edges.
//!
//! The closure follows use-def edges only; it never matches a load back to
//! the stores that might feed it, so externally sourced reads (calldata,
//! storage, memory, call returns, environment probes) stay in the slice as
//! frontier leaves whose own address operands are still traced.

use std::collections::{BTreeSet, HashSet, VecDeque};

use crate::bytecode::{opcodes, OpCategory};

use super::{ControlDeps, SsaOp, SsaProgram, ValueId};

/// Operations transitively contributing to one value.
#[derive(Debug, Clone)]
pub struct Slice {
    pub root: ValueId,
    pub members: BTreeSet<ValueId>,
}

impl Slice {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, id: ValueId) -> bool {
        self.members.contains(&id)
    }

    /// Members whose value enters from outside the program's dataflow.
    pub fn frontier<'a>(&'a self, program: &'a SsaProgram) -> impl Iterator<Item = ValueId> + 'a {
        self.members.iter().copied().filter(|&id| {
            program
                .value(id)
                .opcode()
                .is_some_and(is_frontier_op)
        })
    }
}

/// External-source operations: their result exists outside the static value
/// graph even though their operands are ordinary dataflow.
pub fn is_frontier_op(op: u8) -> bool {
    if opcodes::is_call_family(op) {
        return true;
    }
    let meta = opcodes::opcode_info(op);
    match meta.category {
        OpCategory::Environment => true,
        OpCategory::Storage => op == opcodes::SLOAD,
        OpCategory::Memory => op == opcodes::MLOAD,
        _ => false,
    }
}

/// Transitive closure over operand edges from `root`. With `include_control`
/// the conditions of governing JUMPIs join the closure as extra roots.
pub fn backward_slice(
    program: &SsaProgram,
    root: ValueId,
    include_control: bool,
    deps: Option<&ControlDeps>,
) -> Slice {
    let mut members = BTreeSet::new();
    let mut queue = VecDeque::from([root]);
    let mut seen_blocks: HashSet<usize> = HashSet::new();

    while let Some(id) = queue.pop_front() {
        if !members.insert(id) {
            continue;
        }
        let value = program.value(id);
        for &operand in &value.operands {
            if !members.contains(&operand) {
                queue.push_back(operand);
            }
        }
        if include_control {
            if let Some(deps) = deps {
                if seen_blocks.insert(value.block) {
                    for parent in deps.parents_of(value.block) {
                        if let Some(jumpi) = program.terminator_node(parent) {
                            let jumpi_value = program.value(jumpi);
                            if jumpi_value.op == SsaOp::Op(opcodes::JUMPI) {
                                if let Some(&cond) = jumpi_value.operands.get(1) {
                                    if !members.contains(&cond) {
                                        queue.push_back(cond);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    Slice { root, members }
}
