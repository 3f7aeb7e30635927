//! Transfer-site discovery and decomposition.
//!
//! A transfer is a value-bearing external call: CALL or CALLCODE whose value
//! operand is not provably zero. Unknown values are kept (flagged) rather
//! than dropped, and SELFDESTRUCT balance sweeps are reported as distinctly
//! flagged sites so strict replications can exclude them.

use primitive_types::U256;
use serde::Serialize;

use crate::bytecode::opcodes;
use crate::flags::{Flag, FlagSet};
use crate::ir::{
    backward_slice, guard_chain, ControlDeps, FunctionUnit, Slice, SsaProgram, ValueId,
};

/// One value-bearing external call, decomposed into recipient / amount /
/// context / log handles.
#[derive(Debug, Clone)]
pub struct TransferSite {
    /// The CALL-family (or SELFDESTRUCT) operation node.
    pub call: ValueId,
    /// Recipient operand.
    pub addr_value: ValueId,
    /// Amount operand; None only for SELFDESTRUCT sweeps, which move the
    /// whole balance and have no value operand.
    pub wei_value: Option<ValueId>,
    /// Index into the unit list.
    pub unit: usize,
    /// LOG0..LOG4 operations in the owning unit.
    pub logs: Vec<ValueId>,
    /// Governing JUMPI decisions, entry first.
    pub guard_chain: Vec<ValueId>,
    pub flags: FlagSet,
}

/// Definition-style decomposition of one site.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub addr_slice: Slice,
    pub value_slice: Slice,
    pub context: Context,
    pub logs: Vec<LogInfo>,
}

#[derive(Debug, Clone)]
pub struct Context {
    pub unit: usize,
    pub guard_chain: Vec<ValueId>,
}

#[derive(Debug, Clone)]
pub struct LogInfo {
    pub node: ValueId,
    /// Event signature hash when statically constant (absent for LOG0).
    pub topic0: Option<U256>,
    /// All topic operands in order, constants where static.
    pub topics: Vec<Option<U256>>,
}

/// Flat JSON shape for site listings.
#[derive(Debug, Clone, Serialize)]
pub struct SiteRecord {
    pub offset: usize,
    pub opcode: String,
    pub selector: Option<String>,
    pub flags: String,
}

/// Scan the lowered program for transfer sites. `selfdestruct_sites` controls
/// whether balance sweeps are reported.
pub fn find_transfer_sites(
    program: &SsaProgram,
    units: &[FunctionUnit],
    deps: &ControlDeps,
    selfdestruct_sites: bool,
) -> Vec<TransferSite> {
    let mut sites = Vec::new();
    for value in &program.values {
        let Some(op) = value.opcode() else { continue };
        let site = match op {
            opcodes::CALL | opcodes::CALLCODE => {
                // operands in pop order: gas, to, value, in_off, in_len, out_off, out_len
                let addr = value.operands.get(1).copied();
                let wei = value.operands.get(2).copied();
                let (Some(addr), Some(wei)) = (addr, wei) else {
                    continue;
                };
                match program.value(wei).constant {
                    Some(c) if c.is_zero() => None,
                    Some(_) => Some((addr, Some(wei), FlagSet::new())),
                    None => {
                        let mut flags = FlagSet::new();
                        flags.insert(Flag::ValueUnknown);
                        Some((addr, Some(wei), flags))
                    }
                }
            }
            opcodes::SELFDESTRUCT if selfdestruct_sites => {
                let Some(&addr) = value.operands.first() else {
                    continue;
                };
                let mut flags = FlagSet::new();
                flags.insert(Flag::Sweep);
                Some((addr, None, flags))
            }
            _ => None,
        };
        let Some((addr_value, wei_value, flags)) = site else {
            continue;
        };
        let Some(unit) = owning_unit(units, program, value.id) else {
            continue;
        };
        let logs = unit_logs(program, &units[unit]);
        let chain = guard_chain(program, deps, value.id);
        sites.push(TransferSite {
            call: value.id,
            addr_value,
            wei_value,
            unit,
            logs,
            guard_chain: chain,
            flags,
        });
    }
    sites
}

fn owning_unit(units: &[FunctionUnit], program: &SsaProgram, value: ValueId) -> Option<usize> {
    let block = program.value(value).block;
    // Prefer a unit that owns the block exclusively; fall back to any owner.
    units
        .iter()
        .position(|u| u.blocks.contains(&block) && !u.shared.contains(&block))
        .or_else(|| units.iter().position(|u| u.blocks.contains(&block)))
}

fn unit_logs(program: &SsaProgram, unit: &FunctionUnit) -> Vec<ValueId> {
    let mut logs: Vec<ValueId> = unit
        .blocks
        .iter()
        .flat_map(|&b| program.block_nodes[b].iter().copied())
        .filter(|&id| {
            program
                .value(id)
                .opcode()
                .is_some_and(opcodes::is_log)
        })
        .collect();
    logs.sort_unstable();
    logs
}

/// Split a site into the Definition-1 handles: backward slices for recipient
/// and amount, the execution context, and the unit's decoded log set.
///
/// Memory stays opaque in the IR, but the compiled fetch-address-from-
/// another-contract idiom always reads a call's return data back from a
/// constant scratch offset. An MLOAD in a slice whose address matches the
/// output offset of an earlier call is therefore linked to that call so the
/// external dependency stays visible.
pub fn decompose(program: &SsaProgram, site: &TransferSite) -> Decomposition {
    let addr_slice = returndata_augment(
        program,
        backward_slice(program, site.addr_value, false, None),
    );
    let value_slice = match site.wei_value {
        Some(wei) => returndata_augment(program, backward_slice(program, wei, false, None)),
        None => Slice {
            root: site.addr_value,
            members: Default::default(),
        },
    };
    let logs = site
        .logs
        .iter()
        .map(|&node| decode_log(program, node))
        .collect();
    Decomposition {
        addr_slice,
        value_slice,
        context: Context {
            unit: site.unit,
            guard_chain: site.guard_chain.clone(),
        },
        logs,
    }
}

/// Fold call return data into a slice: for every MLOAD member reading a
/// constant offset, pull in the nearest preceding call-family operation whose
/// constant output region starts there, together with that call's own
/// backward closure (the callee-address derivation is part of the recipient
/// generation). Iterates because the pulled-in closure may contain further
/// reads.
fn returndata_augment(program: &SsaProgram, slice: Slice) -> Slice {
    let mut slice = slice;
    let mut linked: std::collections::HashSet<ValueId> = Default::default();
    loop {
        let mut additions: Vec<ValueId> = Vec::new();
        for &id in &slice.members {
            let v = program.value(id);
            if v.opcode() != Some(opcodes::MLOAD) {
                continue;
            }
            let Some(read_at) = v.operands.first().and_then(|&o| program.value(o).constant)
            else {
                continue;
            };
            let Some(read_offset) = v.offset else { continue };
            let call = program
                .values
                .iter()
                .filter(|c| {
                    matches!(
                        c.opcode(),
                        Some(opcodes::CALL)
                            | Some(opcodes::CALLCODE)
                            | Some(opcodes::DELEGATECALL)
                            | Some(opcodes::STATICCALL)
                    ) && c.offset.is_some_and(|o| o < read_offset)
                        && !linked.contains(&c.id)
                })
                .filter(|c| {
                    let (out_off, out_len) = match c.opcode() {
                        Some(opcodes::CALL) | Some(opcodes::CALLCODE) => (5, 6),
                        _ => (4, 5),
                    };
                    let off = c.operands.get(out_off).and_then(|&o| program.value(o).constant);
                    let len = c.operands.get(out_len).and_then(|&o| program.value(o).constant);
                    off == Some(read_at) && len.is_some_and(|l| !l.is_zero())
                })
                .max_by_key(|c| c.offset);
            if let Some(call) = call {
                linked.insert(call.id);
                additions.push(call.id);
            }
        }
        if additions.is_empty() {
            break;
        }
        for id in additions {
            let sub = backward_slice(program, id, false, None);
            slice.members.extend(sub.members);
        }
    }
    slice
}

fn decode_log(program: &SsaProgram, node: ValueId) -> LogInfo {
    let value = program.value(node);
    // LOGn operands in pop order: offset, length, topic1..topicn
    let topics: Vec<Option<U256>> = value
        .operands
        .iter()
        .skip(2)
        .map(|&t| program.value(t).constant)
        .collect();
    LogInfo {
        node,
        topic0: topics.first().copied().flatten(),
        topics,
    }
}

/// Site listing for the JSON export surface.
pub fn site_records(
    program: &SsaProgram,
    units: &[FunctionUnit],
    sites: &[TransferSite],
) -> Vec<SiteRecord> {
    sites
        .iter()
        .map(|site| {
            let value = program.value(site.call);
            SiteRecord {
                offset: value.offset.unwrap_or_default(),
                opcode: value
                    .opcode()
                    .map(|op| crate::bytecode::opcode_info(op).mnemonic.to_string())
                    .unwrap_or_default(),
                selector: units.get(site.unit).and_then(|u| u.selector_hex()),
                flags: crate::flags::render_flags(&site.flags),
            }
        })
        .collect()
}

/// True when the site's opcode satisfies the strict reading (value-bearing
/// CALL/CALLCODE only, no sweeps).
pub fn is_strict_site(program: &SsaProgram, site: &TransferSite) -> bool {
    matches!(
        program.value(site.call).opcode(),
        Some(opcodes::CALL) | Some(opcodes::CALLCODE)
    )
}
