//! EVM opcode metadata through the Shanghai fork.

use serde::{Deserialize, Serialize};

// Opcode byte constants referenced by the analysis passes.
pub const STOP: u8 = 0x00;
pub const ADD: u8 = 0x01;
pub const MUL: u8 = 0x02;
pub const SUB: u8 = 0x03;
pub const DIV: u8 = 0x04;
pub const SDIV: u8 = 0x05;
pub const MOD: u8 = 0x06;
pub const SMOD: u8 = 0x07;
pub const ADDMOD: u8 = 0x08;
pub const MULMOD: u8 = 0x09;
pub const EXP: u8 = 0x0a;
pub const SIGNEXTEND: u8 = 0x0b;
pub const LT: u8 = 0x10;
pub const GT: u8 = 0x11;
pub const SLT: u8 = 0x12;
pub const SGT: u8 = 0x13;
pub const EQ: u8 = 0x14;
pub const ISZERO: u8 = 0x15;
pub const AND: u8 = 0x16;
pub const OR: u8 = 0x17;
pub const XOR: u8 = 0x18;
pub const NOT: u8 = 0x19;
pub const BYTE: u8 = 0x1a;
pub const SHL: u8 = 0x1b;
pub const SHR: u8 = 0x1c;
pub const SAR: u8 = 0x1d;
pub const KECCAK256: u8 = 0x20;
pub const ADDRESS: u8 = 0x30;
pub const BALANCE: u8 = 0x31;
pub const ORIGIN: u8 = 0x32;
pub const CALLER: u8 = 0x33;
pub const CALLVALUE: u8 = 0x34;
pub const CALLDATALOAD: u8 = 0x35;
pub const CALLDATASIZE: u8 = 0x36;
pub const CALLDATACOPY: u8 = 0x37;
pub const CODECOPY: u8 = 0x39;
pub const EXTCODESIZE: u8 = 0x3b;
pub const EXTCODECOPY: u8 = 0x3c;
pub const RETURNDATACOPY: u8 = 0x3e;
pub const EXTCODEHASH: u8 = 0x3f;
pub const TIMESTAMP: u8 = 0x42;
pub const POP: u8 = 0x50;
pub const MLOAD: u8 = 0x51;
pub const MSTORE: u8 = 0x52;
pub const MSTORE8: u8 = 0x53;
pub const SLOAD: u8 = 0x54;
pub const SSTORE: u8 = 0x55;
pub const JUMP: u8 = 0x56;
pub const JUMPI: u8 = 0x57;
pub const JUMPDEST: u8 = 0x5b;
pub const PUSH0: u8 = 0x5f;
pub const PUSH1: u8 = 0x60;
pub const PUSH4: u8 = 0x63;
pub const PUSH20: u8 = 0x73;
pub const PUSH32: u8 = 0x7f;
pub const DUP1: u8 = 0x80;
pub const DUP3: u8 = 0x82;
pub const DUP16: u8 = 0x8f;
pub const SWAP1: u8 = 0x90;
pub const SWAP16: u8 = 0x9f;
pub const LOG0: u8 = 0xa0;
pub const LOG1: u8 = 0xa1;
pub const LOG3: u8 = 0xa3;
pub const LOG4: u8 = 0xa4;
pub const CREATE: u8 = 0xf0;
pub const CALL: u8 = 0xf1;
pub const CALLCODE: u8 = 0xf2;
pub const RETURN: u8 = 0xf3;
pub const DELEGATECALL: u8 = 0xf4;
pub const CREATE2: u8 = 0xf5;
pub const STATICCALL: u8 = 0xfa;
pub const REVERT: u8 = 0xfd;
pub const INVALID: u8 = 0xfe;
pub const SELFDESTRUCT: u8 = 0xff;

/// Coarse behavioural class of an opcode. Category drives the feature
/// counting rules, so every defined opcode lives in exactly one class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OpCategory {
    Arithmetic,
    Bitwise,
    Hash,
    Memory,
    Storage,
    Control,
    Call,
    Log,
    Environment,
    Stack,
    Invalid,
}

/// Static metadata for one opcode byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OpcodeMeta {
    pub mnemonic: &'static str,
    pub stack_inputs: u8,
    pub stack_outputs: u8,
    pub category: OpCategory,
    pub halts: bool,
}

/// Number of immediate bytes following the opcode (nonzero only for PUSH1..PUSH32).
pub fn immediate_len(op: u8) -> usize {
    if (PUSH1..=PUSH32).contains(&op) {
        (op - PUSH1) as usize + 1
    } else {
        0
    }
}

pub fn is_push(op: u8) -> bool {
    (PUSH0..=PUSH32).contains(&op)
}

pub fn is_dup(op: u8) -> bool {
    (DUP1..=DUP16).contains(&op)
}

pub fn is_swap(op: u8) -> bool {
    (SWAP1..=SWAP16).contains(&op)
}

pub fn is_log(op: u8) -> bool {
    (LOG0..=LOG4).contains(&op)
}

/// CALL-family opcodes, i.e. anything that transfers control to external code.
pub fn is_call_family(op: u8) -> bool {
    matches!(
        op,
        CALL | CALLCODE | DELEGATECALL | STATICCALL | CREATE | CREATE2
    )
}

/// Opcodes defined by later forks than Shanghai. They decode as INVALID but
/// are reported separately so callers can warn instead of silently mangling
/// newer bytecode.
pub fn is_post_shanghai(op: u8) -> bool {
    // Cancun: BLOBHASH, BLOBBASEFEE, TLOAD, TSTORE, MCOPY.
    matches!(op, 0x49 | 0x4a | 0x5c | 0x5d | 0x5e)
}

/// Total opcode lookup. Undefined bytes come back as category Invalid with
/// halts=true, matching EVM execution semantics for unassigned opcodes.
pub fn opcode_info(op: u8) -> OpcodeMeta {
    use OpCategory::*;
    let m = |mnemonic, inputs, outputs, category, halts| OpcodeMeta {
        mnemonic,
        stack_inputs: inputs,
        stack_outputs: outputs,
        category,
        halts,
    };
    match op {
        0x00 => m("STOP", 0, 0, Control, true),
        0x01 => m("ADD", 2, 1, Arithmetic, false),
        0x02 => m("MUL", 2, 1, Arithmetic, false),
        0x03 => m("SUB", 2, 1, Arithmetic, false),
        0x04 => m("DIV", 2, 1, Arithmetic, false),
        0x05 => m("SDIV", 2, 1, Arithmetic, false),
        0x06 => m("MOD", 2, 1, Arithmetic, false),
        0x07 => m("SMOD", 2, 1, Arithmetic, false),
        0x08 => m("ADDMOD", 3, 1, Arithmetic, false),
        0x09 => m("MULMOD", 3, 1, Arithmetic, false),
        0x0a => m("EXP", 2, 1, Arithmetic, false),
        0x0b => m("SIGNEXTEND", 2, 1, Arithmetic, false),
        0x10 => m("LT", 2, 1, Arithmetic, false),
        0x11 => m("GT", 2, 1, Arithmetic, false),
        0x12 => m("SLT", 2, 1, Arithmetic, false),
        0x13 => m("SGT", 2, 1, Arithmetic, false),
        0x14 => m("EQ", 2, 1, Arithmetic, false),
        0x15 => m("ISZERO", 1, 1, Arithmetic, false),
        0x16 => m("AND", 2, 1, Bitwise, false),
        0x17 => m("OR", 2, 1, Bitwise, false),
        0x18 => m("XOR", 2, 1, Bitwise, false),
        0x19 => m("NOT", 1, 1, Bitwise, false),
        0x1a => m("BYTE", 2, 1, Bitwise, false),
        0x1b => m("SHL", 2, 1, Bitwise, false),
        0x1c => m("SHR", 2, 1, Bitwise, false),
        0x1d => m("SAR", 2, 1, Bitwise, false),
        0x20 => m("KECCAK256", 2, 1, Hash, false),
        0x30 => m("ADDRESS", 0, 1, Environment, false),
        0x31 => m("BALANCE", 1, 1, Environment, false),
        0x32 => m("ORIGIN", 0, 1, Environment, false),
        0x33 => m("CALLER", 0, 1, Environment, false),
        0x34 => m("CALLVALUE", 0, 1, Environment, false),
        0x35 => m("CALLDATALOAD", 1, 1, Environment, false),
        0x36 => m("CALLDATASIZE", 0, 1, Environment, false),
        0x37 => m("CALLDATACOPY", 3, 0, Memory, false),
        0x38 => m("CODESIZE", 0, 1, Environment, false),
        0x39 => m("CODECOPY", 3, 0, Memory, false),
        0x3a => m("GASPRICE", 0, 1, Environment, false),
        0x3b => m("EXTCODESIZE", 1, 1, Environment, false),
        0x3c => m("EXTCODECOPY", 4, 0, Memory, false),
        0x3d => m("RETURNDATASIZE", 0, 1, Environment, false),
        0x3e => m("RETURNDATACOPY", 3, 0, Memory, false),
        0x3f => m("EXTCODEHASH", 1, 1, Environment, false),
        0x40 => m("BLOCKHASH", 1, 1, Environment, false),
        0x41 => m("COINBASE", 0, 1, Environment, false),
        0x42 => m("TIMESTAMP", 0, 1, Environment, false),
        0x43 => m("NUMBER", 0, 1, Environment, false),
        0x44 => m("PREVRANDAO", 0, 1, Environment, false),
        0x45 => m("GASLIMIT", 0, 1, Environment, false),
        0x46 => m("CHAINID", 0, 1, Environment, false),
        0x47 => m("SELFBALANCE", 0, 1, Environment, false),
        0x48 => m("BASEFEE", 0, 1, Environment, false),
        0x50 => m("POP", 1, 0, Stack, false),
        0x51 => m("MLOAD", 1, 1, Memory, false),
        0x52 => m("MSTORE", 2, 0, Memory, false),
        0x53 => m("MSTORE8", 2, 0, Memory, false),
        0x54 => m("SLOAD", 1, 1, Storage, false),
        0x55 => m("SSTORE", 2, 0, Storage, false),
        0x56 => m("JUMP", 1, 0, Control, false),
        0x57 => m("JUMPI", 2, 0, Control, false),
        0x58 => m("PC", 0, 1, Environment, false),
        0x59 => m("MSIZE", 0, 1, Memory, false),
        0x5a => m("GAS", 0, 1, Environment, false),
        0x5b => m("JUMPDEST", 0, 0, Control, false),
        0x5f => m("PUSH0", 0, 1, Stack, false),
        0x60..=0x7f => m(PUSH_MNEMONICS[(op - PUSH1) as usize], 0, 1, Stack, false),
        0x80..=0x8f => {
            let n = op - DUP1 + 1;
            m(DUP_MNEMONICS[(n - 1) as usize], n, n + 1, Stack, false)
        }
        0x90..=0x9f => {
            let n = op - SWAP1 + 1;
            m(SWAP_MNEMONICS[(n - 1) as usize], n + 1, n + 1, Stack, false)
        }
        0xa0..=0xa4 => {
            let n = op - LOG0;
            m(LOG_MNEMONICS[n as usize], n + 2, 0, Log, false)
        }
        0xf0 => m("CREATE", 3, 1, Call, false),
        0xf1 => m("CALL", 7, 1, Call, false),
        0xf2 => m("CALLCODE", 7, 1, Call, false),
        0xf3 => m("RETURN", 2, 0, Control, true),
        0xf4 => m("DELEGATECALL", 6, 1, Call, false),
        0xf5 => m("CREATE2", 4, 1, Call, false),
        0xfa => m("STATICCALL", 6, 1, Call, false),
        0xfd => m("REVERT", 2, 0, Control, true),
        0xff => m("SELFDESTRUCT", 1, 0, Call, true),
        // 0xfe is the designated INVALID opcode; every other unassigned byte
        // behaves the same way at execution time.
        _ => m("INVALID", 0, 0, Invalid, true),
    }
}

static PUSH_MNEMONICS: [&str; 32] = [
    "PUSH1", "PUSH2", "PUSH3", "PUSH4", "PUSH5", "PUSH6", "PUSH7", "PUSH8", "PUSH9", "PUSH10",
    "PUSH11", "PUSH12", "PUSH13", "PUSH14", "PUSH15", "PUSH16", "PUSH17", "PUSH18", "PUSH19",
    "PUSH20", "PUSH21", "PUSH22", "PUSH23", "PUSH24", "PUSH25", "PUSH26", "PUSH27", "PUSH28",
    "PUSH29", "PUSH30", "PUSH31", "PUSH32",
];

static DUP_MNEMONICS: [&str; 16] = [
    "DUP1", "DUP2", "DUP3", "DUP4", "DUP5", "DUP6", "DUP7", "DUP8", "DUP9", "DUP10", "DUP11",
    "DUP12", "DUP13", "DUP14", "DUP15", "DUP16",
];

static SWAP_MNEMONICS: [&str; 16] = [
    "SWAP1", "SWAP2", "SWAP3", "SWAP4", "SWAP5", "SWAP6", "SWAP7", "SWAP8", "SWAP9", "SWAP10",
    "SWAP11", "SWAP12", "SWAP13", "SWAP14", "SWAP15", "SWAP16",
];

static LOG_MNEMONICS: [&str; 5] = ["LOG0", "LOG1", "LOG2", "LOG3", "LOG4"];
