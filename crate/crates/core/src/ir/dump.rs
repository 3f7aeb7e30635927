//! Debug dumps: Graphviz text for CFG and PDG, plain text SSA listing.
//! These exist for fixture authoring and audits, not for machine parsing.

use std::fmt::Write as _;

use super::{Pdg, SsaOp, SsaProgram, Terminator};

pub fn cfg_dot(program: &SsaProgram) -> String {
    let mut out = String::from("digraph cfg {\n  node [shape=box fontname=monospace];\n");
    for block in &program.blocks {
        let term = match block.terminator {
            Terminator::Jump => "jump",
            Terminator::Jumpi => "jumpi",
            Terminator::Fallthrough => "fall",
            Terminator::Halt => "halt",
            Terminator::Invalid => "invalid",
        };
        let _ = writeln!(
            out,
            "  b{} [label=\"b{} @{:#06x} ({} insns, {})\"];",
            block.id,
            block.id,
            block.entry_offset,
            block.len(),
            term
        );
        for succ in &block.successors {
            let _ = writeln!(out, "  b{} -> b{};", block.id, succ);
        }
    }
    out.push_str("}\n");
    out
}

pub fn pdg_dot(program: &SsaProgram, pdg: &Pdg) -> String {
    let mut out = String::from("digraph pdg {\n  node [shape=ellipse fontname=monospace];\n");
    for &id in &pdg.nodes {
        let v = program.value(id);
        let label = match v.op {
            SsaOp::Phi => "phi".to_string(),
            SsaOp::Op(op) => crate::bytecode::opcode_info(op).mnemonic.to_string(),
        };
        let _ = writeln!(out, "  v{id} [label=\"v{id} {label}\"];");
    }
    for (a, b) in &pdg.data_edges {
        let _ = writeln!(out, "  v{a} -> v{b} [label=data];");
    }
    for (a, b) in &pdg.control_edges {
        let _ = writeln!(out, "  v{a} -> v{b} [label=control style=dashed];");
    }
    out.push_str("}\n");
    out
}

pub fn ssa_listing(program: &SsaProgram) -> String {
    let mut out = String::new();
    for block in &program.blocks {
        let _ = writeln!(
            out,
            "block b{} @{:#06x} -> {:?}",
            block.id, block.entry_offset, block.successors
        );
        for &id in &program.block_nodes[block.id] {
            let v = program.value(id);
            let op = match v.op {
                SsaOp::Phi => "phi".to_string(),
                SsaOp::Op(opcode) => crate::bytecode::opcode_info(opcode).mnemonic.to_string(),
            };
            let operands: Vec<String> = v.operands.iter().map(|o| format!("v{o}")).collect();
            let konst = v
                .constant
                .map(|c| format!(" = {c:#x}"))
                .unwrap_or_default();
            let _ = writeln!(out, "  v{} <- {}({}){}", v.id, op, operands.join(", "), konst);
        }
    }
    out
}
