//! Acceptance suite: one test per release criterion, each printing a
//! PASS line when its assertions hold. Run with
//! `cargo test -p obfuscan-cli --test acceptance -- --nocapture`.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;

use obfuscan_core::eval::{
    ablated_scores, drop_column, logistic_cv, metrics_from_counts, ranking_overlap, roc_auc,
    LabeledSet,
};
use obfuscan_core::rng::SplitMix64;
use obfuscan_core::scoring::{threshold, z_score, CorpusStats, StatsSnapshot};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_obfuscan"))
}

fn pass(n: u32, what: &str) {
    println!("ACCEPTANCE {n:02} PASS: {what}");
}

#[test]
fn criterion_01_threshold_replication() {
    let got = threshold(4.571, 0.641, 361, 0.95).unwrap();
    assert!(
        (got - 4.637).abs() <= 0.001,
        "threshold(4.571, 0.641, 361, 0.95) = {got}, want 4.637 +- 0.001"
    );
    pass(1, "threshold(4.571, 0.641, 361, 0.95) replicates 4.637 within 0.001");
}

#[test]
fn criterion_02_metric_replication() {
    let r = metrics_from_counts(287, 0, 74, 0);
    assert!((r.precision - 1.00).abs() <= 0.005);
    assert!((r.recall - 0.80).abs() <= 0.005);
    assert!((r.f1 - 0.89).abs() <= 0.005);
    let r = metrics_from_counts(11, 0, 81, 0);
    assert!((r.precision - 1.00).abs() <= 0.005);
    assert!((r.recall - 0.12).abs() <= 0.005);
    assert!((r.f1 - 0.21).abs() <= 0.005);
    pass(2, "confusion arithmetic reproduces both published precision/recall/F1 rows");
}

#[test]
fn criterion_03_prevalence_arithmetic() {
    // synthetic score file: exactly 739,763 of 1,042,923 above the cutoff
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scores.csv");
    {
        let file = std::fs::File::create(&path).unwrap();
        let mut out = std::io::BufWriter::new(file);
        writeln!(out, "id,f1,f2,f3,f4,f5,f6,f7,z,flags").unwrap();
        for i in 0..739_763u32 {
            writeln!(out, "a{i:07},0,0,0,0,0,0,0,5.0,").unwrap();
        }
        for i in 0..303_160u32 {
            writeln!(out, "b{i:07},0,0,0,0,0,0,0,4.0,").unwrap();
        }
    }
    let output = bin()
        .args(["rank", "--records"])
        .arg(&path)
        .args(["--cutoff", "4.637", "--top", "10"])
        .output()
        .unwrap();
    assert!(output.status.success(), "rank failed: {output:?}");
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(
        stdout.contains("above=739763 below=303160 pct=70.93%"),
        "rank output missing the 70.93% prevalence line:\n{stdout}"
    );
    pass(3, "rank prints 70.93% for 739,763 of 1,042,923 above the cutoff");
}

#[test]
fn criterion_04_z_score_properties() {
    let mu = [3.0; 7];
    let sigma = [1.5; 7];
    let (z, _, _) = z_score(&mu, &mu, &sigma);
    assert_eq!(z, 0.0, "mean vector must score 0");
    let plus_one: [f64; 7] = std::array::from_fn(|i| mu[i] + sigma[i]);
    let (z, _, _) = z_score(&plus_one, &mu, &sigma);
    assert!((z - 7.0).abs() <= 1e-9, "one sigma everywhere must score 7, got {z}");

    let mut rng = SplitMix64::new(404);
    for _ in 0..1000 {
        let base: [f64; 7] = std::array::from_fn(|_| rng.next_f64() * 10.0);
        let i = rng.next_below(7);
        let k = (rng.next_f64() - 0.5) * 8.0;
        let (z0, _, _) = z_score(&base, &mu, &sigma);
        let mut shifted = base;
        shifted[i] += k * sigma[i];
        let (z1, _, _) = z_score(&shifted, &mu, &sigma);
        assert!(
            (z1 - z0 - k).abs() <= 1e-9,
            "affine response violated: delta {} for k {k}",
            z1 - z0
        );
    }
    pass(4, "z-score zero-at-mean, 7-at-one-sigma, affine response over 1000 random vectors");
}

fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

fn parse_expect(value: &str) -> f64 {
    match value.split_once('/') {
        Some((n, d)) => n.trim().parse::<f64>().unwrap() / d.trim().parse::<f64>().unwrap(),
        None => value.trim().parse().unwrap(),
    }
}

#[test]
fn criterion_05_feature_fixtures() {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(fixtures_dir())
        .expect("fixture corpus present")
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    paths.sort();
    assert!(paths.len() >= 14, "need >= 14 fixtures, found {}", paths.len());

    let mut per_pattern = std::collections::BTreeMap::new();
    let mut tir = std::collections::BTreeMap::new();
    for path in &paths {
        let text = std::fs::read_to_string(path).unwrap();
        let name = path.file_stem().unwrap().to_string_lossy().to_string();
        *per_pattern.entry(name.chars().nth(1).unwrap()).or_insert(0) += 1;

        let mut expect = std::collections::BTreeMap::new();
        let mut hex = String::new();
        for line in text.lines() {
            let line = line.trim();
            if let Some(rest) = line.strip_prefix("# expect:") {
                for part in rest.split_whitespace() {
                    let (k, v) = part.split_once('=').unwrap();
                    expect.insert(k.to_string(), parse_expect(v));
                }
            } else if !line.starts_with('#') && !line.is_empty() {
                hex = line.to_string();
            }
        }
        let analysis = obfuscan_core::analyze_hex(&hex, None).unwrap();
        let vector = obfuscan_core::features::extract_features(
            &analysis,
            &obfuscan_core::features::FeatureConfig::default(),
        )
        .vector;
        let got: std::collections::BTreeMap<&str, f64> = [
            ("f1", vector.f1_addr_steps as f64),
            ("f2", vector.f2_string_ops as f64),
            ("f3", vector.f3_external_call as f64),
            ("f4", vector.f4_branch_height as f64),
            ("f5", vector.f5_tir),
            ("f6", vector.f6_similarity),
            ("f7", vector.f7_irrelevant_logs as f64),
            ("sites", vector.site_count as f64),
        ]
        .into_iter()
        .collect();
        for (key, want) in &expect {
            let actual = got[key.as_str()];
            assert!(
                (actual - want).abs() < 1e-9,
                "{name}: {key} = {actual}, walkthrough documents {want}"
            );
        }
        tir.insert(name, vector.f5_tir);
    }
    for pattern in '1'..='7' {
        assert!(per_pattern.get(&pattern).copied().unwrap_or(0) >= 2);
    }
    assert!(tir["t5_junk_padding"] < tir["t5_clean_idiom"], "T5 pair must strictly lower TIR");
    pass(5, "all 14 fixtures match their documented walkthroughs exactly (T5 strict, T6 = 100)");
}

#[test]
fn criterion_06_ir_soundness() {
    let started = std::time::Instant::now();
    let mut rng = SplitMix64::new(606);
    for _ in 0..1000 {
        let len = rng.next_below(384);
        let bytes: Vec<u8> = (0..len).map(|_| (rng.next_u64() & 0xff) as u8).collect();
        let stream = obfuscan_core::bytecode::decode(&bytes);
        assert_eq!(obfuscan_core::bytecode::reencode(&stream), bytes);

        let mut program = obfuscan_core::ir::build_cfg(stream);
        obfuscan_core::ir::resolve_jumps(&mut program, None).unwrap();
        obfuscan_core::ir::lower_to_ssa(&mut program, None).unwrap();
        let block_total: usize = program.blocks.iter().map(|b| b.len()).sum();
        assert_eq!(block_total, program.stream.instructions.len());
        let mut seen = std::collections::HashSet::new();
        for value in &program.values {
            assert!(seen.insert(value.id), "duplicate SSA id");
        }
    }
    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs() < 30,
        "soundness sweep took {elapsed:?}, budget is 30s"
    );
    pass(6, "1000 random inputs: round-trip, CFG partition, single assignment, bounded resolution");
}

#[test]
fn criterion_07_statistics_oracles() {
    // merge law on random splits
    let mut rng = SplitMix64::new(707);
    let rows: Vec<[f64; 7]> = (0..512)
        .map(|_| std::array::from_fn(|_| rng.next_f64() * 100.0))
        .collect();
    for _ in 0..16 {
        let split = 1 + rng.next_below(rows.len() - 2);
        let (mut whole, mut left, mut right) =
            (CorpusStats::default(), CorpusStats::default(), CorpusStats::default());
        for (i, row) in rows.iter().enumerate() {
            whole.push_row(*row);
            if i < split {
                left.push_row(*row);
            } else {
                right.push_row(*row);
            }
        }
        let merged = left.merge(&right);
        for i in 0..7 {
            let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-12);
            assert!(rel(merged.features[i].mean, whole.features[i].mean) < 1e-9);
            assert!(rel(merged.features[i].m2, whole.features[i].m2) < 1e-9);
        }
    }

    // ROC-AUC near 1/2 for label-independent scores at n = 10^4
    let labels: Vec<u8> = (0..10_000).map(|_| (rng.next_f64() < 0.3) as u8).collect();
    let scores: Vec<f64> = (0..10_000).map(|_| rng.next_f64()).collect();
    let auc = roc_auc(&labels, &scores).unwrap();
    assert!((auc - 0.5).abs() <= 0.02, "independent-score AUC {auc}");

    // separable synthetic set reaches a perfect out-of-fold AUC
    let mut set = LabeledSet {
        ids: Vec::new(),
        matrix: Vec::new(),
        labels: Vec::new(),
    };
    for i in 0..300 {
        let label = (rng.next_f64() < 0.4) as u8;
        let mut row: [f64; 7] = std::array::from_fn(|_| rng.next_gaussian());
        row[4] += 15.0 * label as f64;
        set.ids.push(format!("s{i}"));
        set.matrix.push(row);
        set.labels.push(label);
    }
    let outcome = logistic_cv(&set, 5, 9).unwrap();
    assert_eq!(outcome.report.roc_auc, Some(1.0));

    // drop-column puts the engineered feature first
    let mut weak = set.clone();
    for (row, &label) in weak.matrix.iter_mut().zip(&weak.labels) {
        row[4] -= 12.0 * label as f64; // keep it informative but not separable
    }
    let drops = drop_column(&weak, 5, 9).unwrap();
    assert_eq!(drops[0].feature, 4, "informative feature must rank first: {drops:?}");
    pass(7, "merge law, independent-score AUC, separable CV, drop-column identification");
}

#[test]
fn criterion_08_ranking_stability() {
    let n = 20_000usize;
    let k = 500usize;
    let mut rng = SplitMix64::new(808);
    let mut ids = Vec::with_capacity(n);
    let mut matrix: Vec<[f64; 7]> = Vec::with_capacity(n);
    // One feature alone creates the tail: feature 3 carries the planted
    // signal, feature 1 is independent noise, the rest stay constant.
    // (Standardization caps a planted term at sqrt((1-p)/p) ~ 6.25 sigma for
    // p = 2.5%, so stacking several unit-variance noise features would let
    // noise breach the tail and the construction would no longer satisfy
    // the premise.)
    let mut planted: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut planted);
    let planted: std::collections::HashSet<usize> = planted.into_iter().take(k).collect();
    for i in 0..n {
        let mut row = [0.0f64; 7];
        row[0] = rng.next_f64(); // noise feature
        // near-equal planted magnitudes: a wide value spread would inflate
        // the feature's own sigma and push low-value tail members back into
        // the noise band
        row[2] = if planted.contains(&i) {
            1000.0 + i as f64 * 1e-3
        } else {
            rng.next_f64()
        };
        ids.push(format!("c{i:05}"));
        matrix.push(row);
    }
    let stats = obfuscan_core::scoring::corpus_stats_rows(&matrix).unwrap();
    let snapshot = StatsSnapshot::from_stats("stability", &stats);
    let full: Vec<_> = ids
        .iter()
        .zip(&matrix)
        .map(|(id, row)| obfuscan_core::scoring::score_contract(id.clone(), *row, &snapshot))
        .collect();

    let without_signal = ablated_scores(&ids, &matrix, 2).unwrap();
    let signal_overlap = ranking_overlap(&full, &without_signal, k).unwrap();
    let base_rate = k as f64 / n as f64;
    assert!(
        (signal_overlap - base_rate).abs() <= 0.05,
        "ablating the tail feature should drop overlap to ~{base_rate}, got {signal_overlap}"
    );

    let without_noise = ablated_scores(&ids, &matrix, 0).unwrap();
    let noise_overlap = ranking_overlap(&full, &without_noise, k).unwrap();
    assert!(
        noise_overlap >= 0.95,
        "ablating a noise feature should keep overlap >= 0.95, got {noise_overlap}"
    );
    pass(8, "tail-feature ablation collapses overlap to the base rate; noise ablation keeps >= 0.95");
}

fn synthetic_corpus(path: &Path, count: usize) {
    // deterministic mix of transfer shapes with varying constants
    let file = std::fs::File::create(path).unwrap();
    let mut out = std::io::BufWriter::new(file);
    let mut rng = SplitMix64::new(909);
    for i in 0..count {
        let kind = i % 5;
        let a = (rng.next_u64() & 0xff) as u8;
        let b = 1 + (rng.next_u64() % 200) as u8;
        let addr: String = (0..20).map(|_| format!("{:02x}", a)).collect();
        let idiom = format!("60006000600060006005 73{addr} 6108fc f1 50", addr = addr);
        let hex: String = match kind {
            // plain transfer
            0 => format!("{idiom} 00"),
            // guarded transfer
            1 => format!("34 61000A 57 00 0000 0000 5b {idiom} 00"),
            // hashed recipient
            2 => "600060006000600060056020600020".to_string()
                + &format!("60{b:02x}1c6108fcf15000", b = b % 32),
            // storage recipient
            3 => format!("60006000600060006005 60{b:02x} 54 6108fc f1 50 00"),
            // no transfer at all
            _ => format!("60{b:02x}60005500"),
        };
        let hex: String = hex.split_whitespace().collect();
        writeln!(
            out,
            r#"{{"id":"c{i:04}","bytecode":"0x{hex}","created_at":{ts}}}"#,
            ts = 1_660_000_000 + (i as i64) * 86_400
        )
        .unwrap();
    }
}

#[test]
fn criterion_09_batch_score_determinism() {
    let started = std::time::Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    synthetic_corpus(&corpus, 1000);

    let run_batch = |records: &Path| {
        let status = bin()
            .args(["batch", "--corpus"])
            .arg(&corpus)
            .args(["--out"])
            .arg(records)
            .args(["--workers", "4"])
            .status()
            .unwrap();
        assert!(status.success());
    };
    let records1 = dir.path().join("records1.jsonl");
    let records2 = dir.path().join("records2.jsonl");
    run_batch(&records1);
    run_batch(&records2);

    let snapshot = dir.path().join("stats.json");
    let status = bin()
        .args(["stats", "--records"])
        .arg(&records1)
        .args(["--out"])
        .arg(&snapshot)
        .args(["--snapshot-id", "acceptance"])
        .status()
        .unwrap();
    assert!(status.success());

    let score = |records: &Path, out: &Path| {
        let status = bin()
            .args(["score", "--records"])
            .arg(records)
            .args(["--stats"])
            .arg(&snapshot)
            .args(["--out"])
            .arg(out)
            .args(["--format", "csv"])
            .status()
            .unwrap();
        assert!(status.success());
    };
    let scored1 = dir.path().join("scored1.csv");
    let scored2 = dir.path().join("scored2.csv");
    score(&records1, &scored1);
    score(&records2, &scored2);

    let bytes1 = std::fs::read(&scored1).unwrap();
    let bytes2 = std::fs::read(&scored2).unwrap();
    assert_eq!(bytes1, bytes2, "scored CSV must be byte-identical across runs");
    assert!(!bytes1.is_empty());
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 60, "determinism run took {elapsed:?}, budget 60s");
    pass(9, "batch + score over 1000 synthetic contracts is byte-identical across runs");
}

#[test]
fn criterion_10_declared_out_of_scope() {
    // The corpus-scale statistics (mean 5.867, max 46.264), the 70.93% real
    // prevalence, the labeled-set evaluation numbers (0.2921 precision etc.)
    // and the financial-impact analysis depend on datasets that are not
    // redistributable at desk scale. Criteria 3-8 replicate the arithmetic
    // those numbers come from on synthetic oracles instead.
    pass(10, "corpus-scale statistics declared not reproducible; arithmetic covered by 3-8");
}
