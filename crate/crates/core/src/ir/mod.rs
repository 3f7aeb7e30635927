//! Control-flow recovery, SSA lowering, function identification, program
//! dependence graphs and backward slices over EVM bytecode.
//!
//! Stack-machine bytecode hides both control flow (jump targets are stack
//! values) and data flow (everything is stack traffic). The passes here
//! recover both: [`build_cfg`] partitions instructions into basic blocks,
//! [`resolve_jumps`] runs a constant-propagating abstract stack to a fixpoint
//! to find jump edges, and [`lower_to_ssa`] replays each block symbolically so
//! every pushed value gets a single-assignment identity, with block
//! parameters acting as phis at join points.

mod cfg;
mod dump;
mod fold;
mod functions;
mod pdg;
mod slice;
mod ssa;

use std::collections::BTreeSet;

use primitive_types::U256;

use crate::bytecode::{opcodes, InstructionStream};
use crate::flags::FlagSet;

pub use cfg::{build_cfg, resolve_jumps};
pub use dump::{cfg_dot, pdg_dot, ssa_listing};
pub use functions::identify_functions;
pub use pdg::{build_pdg, branch_height, control_dependence, guard_chain, ControlDeps, Pdg};
pub use slice::{backward_slice, is_frontier_op, Slice};
pub use ssa::lower_to_ssa;

pub type BlockId = usize;
pub type ValueId = u32;

/// How a basic block hands off control.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Terminator {
    Jump,
    Jumpi,
    Fallthrough,
    Halt,
    Invalid,
}

/// A maximal straight-line instruction run.
#[derive(Debug, Clone)]
pub struct BasicBlock {
    pub id: BlockId,
    pub entry_offset: usize,
    /// Index range into the instruction stream (end exclusive).
    pub insn_start: usize,
    pub insn_end: usize,
    pub terminator: Terminator,
    pub successors: Vec<BlockId>,
}

impl BasicBlock {
    pub fn len(&self) -> usize {
        self.insn_end - self.insn_start
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Defining operation of an SSA value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsaOp {
    /// Executes the instruction with this opcode byte.
    Op(u8),
    /// Block-boundary join of predecessor stack values.
    Phi,
}

/// A single-assignment value or effect node.
///
/// Every instruction that consumes or produces data gets a node; pure stack
/// shuffling (PUSH-less DUP/SWAP/POP) and structural opcodes (JUMPDEST, STOP,
/// unassigned bytes) do not. Operand order follows pop order, so operand 0 is
/// what was on top of the stack.
#[derive(Debug, Clone)]
pub struct SsaValue {
    pub id: ValueId,
    pub op: SsaOp,
    pub operands: Vec<ValueId>,
    pub block: BlockId,
    /// Instruction offset; None for phis.
    pub offset: Option<usize>,
    /// Statically known 256-bit result, when constant folding reached one.
    pub constant: Option<U256>,
    /// Whether the node leaves a value on the stack.
    pub has_output: bool,
}

impl SsaValue {
    pub fn opcode(&self) -> Option<u8> {
        match self.op {
            SsaOp::Op(b) => Some(b),
            SsaOp::Phi => None,
        }
    }
}

/// CFG plus (after lowering) the SSA value graph for one contract.
#[derive(Debug, Clone, Default)]
pub struct SsaProgram {
    pub stream: InstructionStream,
    pub blocks: Vec<BasicBlock>,
    pub values: Vec<SsaValue>,
    pub entry: BlockId,
    /// Offsets of JUMP/JUMPI instructions whose target never resolved.
    pub unresolved_jumps: BTreeSet<usize>,
    /// Blocks whose predecessors disagreed on stack height.
    pub mismatched_blocks: BTreeSet<BlockId>,
    pub flags: FlagSet,
    /// Per-block node ids: phis first, then operation nodes in offset order.
    pub block_nodes: Vec<Vec<ValueId>>,
}

impl SsaProgram {
    pub fn value(&self, id: ValueId) -> &SsaValue {
        &self.values[id as usize]
    }

    pub fn block_of_offset(&self, offset: usize) -> Option<BlockId> {
        self.blocks
            .iter()
            .position(|b| {
                let first = &self.stream.instructions[b.insn_start];
                let last = &self.stream.instructions[b.insn_end - 1];
                offset >= first.offset && offset <= last.offset
            })
    }

    /// Entry block id for a jump target offset, if the offset is a block leader.
    pub fn block_at_entry(&self, offset: usize) -> Option<BlockId> {
        self.blocks.iter().position(|b| b.entry_offset == offset)
    }

    /// Operation node defined at an instruction offset.
    pub fn node_at_offset(&self, offset: usize) -> Option<ValueId> {
        self.values
            .iter()
            .find(|v| v.offset == Some(offset))
            .map(|v| v.id)
    }

    pub fn predecessors(&self, block: BlockId) -> Vec<BlockId> {
        self.blocks
            .iter()
            .filter(|b| b.successors.contains(&block))
            .map(|b| b.id)
            .collect()
    }

    /// Terminator node (JUMP/JUMPI/...) of a block, when one was lowered.
    pub fn terminator_node(&self, block: BlockId) -> Option<ValueId> {
        let b = &self.blocks[block];
        if b.is_empty() {
            return None;
        }
        let last_offset = self.stream.instructions[b.insn_end - 1].offset;
        self.block_nodes[block]
            .iter()
            .rev()
            .copied()
            .find(|&id| self.value(id).offset == Some(last_offset))
    }
}

/// A contiguous region of blocks entered through one dispatcher target (or
/// the fallback path). Distinct units may overlap only on shared internal
/// subroutines, which are listed in `shared`.
#[derive(Debug, Clone)]
pub struct FunctionUnit {
    pub selector: Option<[u8; 4]>,
    pub entry: BlockId,
    pub blocks: BTreeSet<BlockId>,
    pub shared: BTreeSet<BlockId>,
    pub contains_transfer: bool,
}

impl FunctionUnit {
    pub fn selector_hex(&self) -> Option<String> {
        self.selector.map(|s| {
            format!("0x{:02x}{:02x}{:02x}{:02x}", s[0], s[1], s[2], s[3])
        })
    }
}

/// True when the opcode can still consume or produce data worth a node.
pub(crate) fn makes_node(op: u8) -> bool {
    if op == opcodes::JUMPDEST || op == opcodes::POP || op == opcodes::STOP {
        return false;
    }
    if opcodes::is_dup(op) || opcodes::is_swap(op) {
        return false;
    }
    let meta = opcodes::opcode_info(op);
    if meta.category == crate::bytecode::OpCategory::Invalid {
        return false;
    }
    true
}
