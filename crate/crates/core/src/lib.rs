//! Static analysis of funds-transfer logic in EVM bytecode.
//!
//! The pipeline decodes raw runtime bytecode, recovers a control-flow graph
//! and SSA value graph, locates value-bearing external calls, derives seven
//! obfuscation features per contract, and scores contracts against corpus
//! statistics with a standardized-sum model. An evaluation harness covers
//! threshold derivation, classification metrics, drop-column ablation and
//! ranking-stability checks.

pub mod bytecode;
pub mod error;
pub mod eval;
pub mod features;
pub mod flags;
pub mod ingest;
pub mod ir;
pub mod rng;
pub mod scoring;
pub mod transfer;

pub use error::{Error, Result};
pub use flags::{Flag, FlagSet};

use std::time::Instant;

/// Everything the feature extractors need for one contract.
#[derive(Debug, Clone)]
pub struct AnalyzedContract {
    pub program: ir::SsaProgram,
    pub units: Vec<ir::FunctionUnit>,
    pub sites: Vec<transfer::TransferSite>,
    pub deps: ir::ControlDeps,
}

/// Run decode, CFG recovery, jump resolution, SSA lowering, function
/// identification and transfer discovery over raw bytecode.
pub fn analyze_bytecode(code: &[u8], deadline: Option<Instant>) -> Result<AnalyzedContract> {
    analyze_bytecode_with(code, deadline, true)
}

/// [`analyze_bytecode`] with the SELFDESTRUCT-sweep site toggle exposed.
pub fn analyze_bytecode_with(
    code: &[u8],
    deadline: Option<Instant>,
    selfdestruct_sites: bool,
) -> Result<AnalyzedContract> {
    let stream = bytecode::decode(code);
    let mut program = ir::build_cfg(stream);
    ir::resolve_jumps(&mut program, deadline)?;
    ir::lower_to_ssa(&mut program, deadline)?;
    let (mut units, flags) = ir::identify_functions(&program);
    program.flags.extend(flags);
    let deps = ir::control_dependence(&program);
    let sites = transfer::find_transfer_sites(&program, &units, &deps, selfdestruct_sites);
    for site in &sites {
        if let Some(unit) = units.get_mut(site.unit) {
            unit.contains_transfer = true;
        }
    }
    Ok(AnalyzedContract {
        program,
        units,
        sites,
        deps,
    })
}

/// Hex-text convenience wrapper around [`analyze_bytecode`].
pub fn analyze_hex(text: &str, deadline: Option<Instant>) -> Result<AnalyzedContract> {
    let code = bytecode::parse_hex(text)?;
    analyze_bytecode(&code, deadline)
}
