//! Property tests over random bytecode: decode/reencode identity, CFG
//! partition and SSA single-assignment invariants, jump-resolution
//! soundness and termination, and the corpus-statistics merge law.

use std::collections::HashSet;

use proptest::prelude::*;

use obfuscan_core::bytecode::{decode, reencode};
use obfuscan_core::ir::{build_cfg, lower_to_ssa, resolve_jumps};
use obfuscan_core::scoring::{CorpusStats, FEATURE_COUNT};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn decode_reencode_round_trip(bytes in proptest::collection::vec(any::<u8>(), 0..512)) {
        let stream = decode(&bytes);
        prop_assert_eq!(reencode(&stream), bytes);
    }

    #[test]
    fn coverage_matches_code_length(bytes in proptest::collection::vec(any::<u8>(), 0..512)) {
        let stream = decode(&bytes);
        let total: usize = stream.instructions.iter().map(|i| i.size()).sum();
        prop_assert_eq!(total, stream.code_length);
    }

    #[test]
    fn cfg_partition_and_ssa_single_assignment(bytes in proptest::collection::vec(any::<u8>(), 0..512)) {
        let mut program = build_cfg(decode(&bytes));
        resolve_jumps(&mut program, None).expect("no deadline set");
        lower_to_ssa(&mut program, None).expect("no deadline set");

        // every instruction in exactly one block
        let block_total: usize = program.blocks.iter().map(|b| b.len()).sum();
        prop_assert_eq!(block_total, program.stream.instructions.len());
        let mut covered = vec![false; program.stream.instructions.len()];
        for block in &program.blocks {
            for idx in block.insn_start..block.insn_end {
                prop_assert!(!covered[idx], "instruction in two blocks");
                covered[idx] = true;
            }
        }

        // ids are unique and dense
        let mut seen = HashSet::new();
        for (i, v) in program.values.iter().enumerate() {
            prop_assert_eq!(v.id as usize, i);
            prop_assert!(seen.insert(v.id));
            // operands reference defined values
            for &operand in &v.operands {
                prop_assert!((operand as usize) < program.values.len());
            }
        }

        // resolved successors only target jumpdests or the fallthrough block
        for block in &program.blocks {
            for &succ in &block.successors {
                let entry = program.blocks[succ].entry_offset;
                let is_fallthrough = succ == block.id + 1;
                prop_assert!(
                    is_fallthrough || program.stream.jumpdests.contains(&entry),
                    "edge to non-jumpdest {entry:#x}"
                );
            }
        }
    }

    #[test]
    fn corpus_stats_merge_law(
        rows in proptest::collection::vec(
            proptest::array::uniform7(-1e3f64..1e3f64),
            2..64,
        ),
        split_seed in any::<u64>(),
    ) {
        let split = (split_seed as usize) % (rows.len() + 1);
        let mut whole = CorpusStats::default();
        let mut left = CorpusStats::default();
        let mut right = CorpusStats::default();
        for (i, row) in rows.iter().enumerate() {
            whole.push_row(*row);
            if i < split {
                left.push_row(*row);
            } else {
                right.push_row(*row);
            }
        }
        let merged = left.merge(&right);
        for i in 0..FEATURE_COUNT {
            let rel = |a: f64, b: f64| {
                let denom = a.abs().max(b.abs()).max(1e-9);
                (a - b).abs() / denom
            };
            prop_assert!(rel(merged.features[i].mean, whole.features[i].mean) < 1e-9);
            prop_assert!(rel(merged.features[i].m2, whole.features[i].m2) < 1e-9);
            prop_assert_eq!(merged.features[i].n, whole.features[i].n);
        }
    }
}

/// Jump resolution terminates inside its pass budget on adversarial inputs;
/// run outside proptest so a hang would be caught by the harness timeout.
#[test]
fn resolution_terminates_on_dense_jump_soup() {
    // alternating PUSH/JUMP/JUMPDEST soup with self-referential targets
    let mut bytes = Vec::new();
    for i in 0..200u8 {
        bytes.extend_from_slice(&[0x60, i.wrapping_mul(3), 0x56, 0x5b]);
    }
    let mut program = build_cfg(decode(&bytes));
    resolve_jumps(&mut program, None).unwrap();
    lower_to_ssa(&mut program, None).unwrap();
}
