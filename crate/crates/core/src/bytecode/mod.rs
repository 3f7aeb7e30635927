//! Decoding of raw EVM runtime bytecode into a validated instruction stream.
//!
//! The decoder never rejects a contract the chain would accept: undefined
//! opcodes become INVALID instructions and a push truncated by the end of
//! code is zero-padded and flagged, mirroring execution semantics.

pub mod opcodes;

use std::collections::BTreeSet;
use std::fmt::Write as _;

use primitive_types::U256;

use crate::error::Error;

pub use opcodes::{immediate_len, opcode_info, OpCategory, OpcodeMeta};

/// One decoded instruction. `immediate` holds the push payload zero-padded to
/// the full width the opcode declares; `present` is how many of those bytes
/// actually existed in the code (less than the declared width only for a
/// truncated trailing push).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instruction {
    pub offset: usize,
    pub opcode: u8,
    pub immediate: Vec<u8>,
    pub present: usize,
}

impl Instruction {
    pub fn mnemonic(&self) -> &'static str {
        opcode_info(self.opcode).mnemonic
    }

    /// Bytes this instruction occupies in the original code.
    pub fn size(&self) -> usize {
        1 + self.present
    }

    pub fn is_truncated(&self) -> bool {
        self.present < self.immediate.len()
    }

    /// Value pushed on the stack, for PUSH0..PUSH32.
    pub fn push_value(&self) -> Option<U256> {
        if opcodes::is_push(self.opcode) {
            Some(U256::from_big_endian(&self.immediate))
        } else {
            None
        }
    }
}

/// Decoded form of one contract's runtime bytecode.
#[derive(Debug, Clone, Default)]
pub struct InstructionStream {
    pub instructions: Vec<Instruction>,
    pub code_length: usize,
    /// Offsets of JUMPDEST instructions (push data can never hide one here
    /// because decoding consumes it as immediates).
    pub jumpdests: BTreeSet<usize>,
    /// Set when the final push ran past the end of code.
    pub truncated_push: bool,
    /// Offsets of opcodes assigned by forks later than Shanghai; they decode
    /// as INVALID and this list carries the version warning.
    pub post_shanghai: Vec<usize>,
}

impl InstructionStream {
    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }
}

/// Strip an optional `0x` prefix and surrounding whitespace, then decode hex.
/// Errors identify the first offending byte position in the cleaned text.
pub fn parse_hex(text: &str) -> Result<Vec<u8>, Error> {
    let cleaned = text.trim();
    let cleaned = cleaned.strip_prefix("0x").or_else(|| cleaned.strip_prefix("0X")).unwrap_or(cleaned);
    if cleaned.len() % 2 != 0 {
        return Err(Error::Decode {
            position: cleaned.len() - 1,
            reason: "odd number of hex digits".into(),
        });
    }
    let mut out = Vec::with_capacity(cleaned.len() / 2);
    let bytes = cleaned.as_bytes();
    for i in (0..bytes.len()).step_by(2) {
        let hi = hex_val(bytes[i]).ok_or_else(|| Error::Decode {
            position: i,
            reason: format!("non-hex character {:?}", bytes[i] as char),
        })?;
        let lo = hex_val(bytes[i + 1]).ok_or_else(|| Error::Decode {
            position: i + 1,
            reason: format!("non-hex character {:?}", bytes[i + 1] as char),
        })?;
        out.push((hi << 4) | lo);
    }
    Ok(out)
}

fn hex_val(b: u8) -> Option<u8> {
    match b {
        b'0'..=b'9' => Some(b - b'0'),
        b'a'..=b'f' => Some(b - b'a' + 10),
        b'A'..=b'F' => Some(b - b'A' + 10),
        _ => None,
    }
}

pub fn to_hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(2 + bytes.len() * 2);
    s.push_str("0x");
    for b in bytes {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Decode hex text ("0x"-prefixed or bare) into an instruction stream.
pub fn decode_hex(text: &str) -> Result<InstructionStream, Error> {
    Ok(decode(&parse_hex(text)?))
}

/// Decode raw runtime bytecode. Total over all byte sequences: undefined
/// opcodes are kept as INVALID instructions and truncated trailing push data
/// is zero-padded and flagged.
pub fn decode(code: &[u8]) -> InstructionStream {
    let mut stream = InstructionStream {
        code_length: code.len(),
        ..Default::default()
    };
    let mut offset = 0usize;
    while offset < code.len() {
        let opcode = code[offset];
        let want = immediate_len(opcode);
        let avail = code.len() - offset - 1;
        let present = want.min(avail);
        let mut immediate = vec![0u8; want];
        immediate[..present].copy_from_slice(&code[offset + 1..offset + 1 + present]);
        if present < want {
            stream.truncated_push = true;
        }
        if opcode == opcodes::JUMPDEST {
            stream.jumpdests.insert(offset);
        }
        if opcodes::is_post_shanghai(opcode) {
            stream.post_shanghai.push(offset);
        }
        stream.instructions.push(Instruction {
            offset,
            opcode,
            immediate,
            present,
        });
        offset += 1 + present;
    }
    stream
}

/// Reassemble the exact original bytes (round-trip inverse of [`decode`]).
pub fn reencode(stream: &InstructionStream) -> Vec<u8> {
    let mut out = Vec::with_capacity(stream.code_length);
    for insn in &stream.instructions {
        out.push(insn.opcode);
        out.extend_from_slice(&insn.immediate[..insn.present]);
    }
    out
}

/// Canonical text disassembly, one instruction per line:
/// `<hex offset>: <MNEMONIC> [<hex immediate>]`.
pub fn disassemble(stream: &InstructionStream) -> String {
    let mut out = String::new();
    for insn in &stream.instructions {
        let _ = write!(out, "{:04x}: {}", insn.offset, insn.mnemonic());
        if !insn.immediate.is_empty() {
            let _ = write!(out, " 0x");
            for b in &insn.immediate {
                let _ = write!(out, "{b:02x}");
            }
            if insn.is_truncated() {
                let _ = write!(out, " (truncated)");
            }
        }
        out.push('\n');
    }
    out
}
