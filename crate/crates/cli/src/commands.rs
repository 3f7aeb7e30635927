use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::time::Duration;

use anyhow::{bail, Context};

use obfuscan_core::features::logs::SignatureSet;
use obfuscan_core::features::{
    extract_features, ClassifierKind, FeatureConfig, FeatureOutcome, SiteFeatures,
};
use obfuscan_core::flags::{render_flags, Flag};
use obfuscan_core::ingest::{
    self, AnalysisRecord, CorpusEntry, CorpusFormat, CorpusReader, ReportFormat,
};
use obfuscan_core::scoring::{
    self, score_contract, threshold, CorpusStats, ScoredContract, StatsSnapshot,
};
use obfuscan_core::{analyze_bytecode_with, eval as eval_mod, transfer};

use crate::{
    AnalyzeArgs, BatchArgs, CorpusFormatArg, EvalArgs, FeatureFlags, FetchArgs, OutputFormat,
    RankArgs, ScoreArgs, StatsArgs,
};

pub type ExitCode = i32;

fn feature_config(flags: &FeatureFlags) -> anyhow::Result<FeatureConfig> {
    let classifier = match flags.f7_classifier.as_str() {
        "heuristic" => ClassifierKind::Heuristic,
        other => match other.strip_prefix("external:") {
            Some(url) if !url.is_empty() => ClassifierKind::External(url.to_string()),
            _ => bail!("--f7-classifier must be `heuristic` or `external:<url>`"),
        },
    };
    let signatures = match &flags.signatures {
        Some(path) => SignatureSet::from_file(path)
            .with_context(|| format!("loading signatures from {}", path.display()))?,
        None => SignatureSet::default(),
    };
    Ok(FeatureConfig {
        sload_steps: flags.sload_steps.into(),
        selfdestruct_sites: flags.selfdestruct_sites.into(),
        wl_iterations: 3,
        classifier,
        signatures,
    })
}

fn append_reviews(path: &Path, records: &[AnalysisRecord]) -> anyhow::Result<usize> {
    let mut out = fs::OpenOptions::new().create(true).append(true).open(path)?;
    let mut written = 0;
    for record in records {
        for review in &record.reviews {
            serde_json::to_writer(&mut out, review)?;
            out.write_all(b"\n")?;
            written += 1;
        }
    }
    Ok(written)
}

fn read_bytecode_input(args: &AnalyzeArgs) -> anyhow::Result<Vec<u8>> {
    if let Some(hex) = &args.hex {
        return Ok(obfuscan_core::bytecode::parse_hex(hex)?);
    }
    let raw = match &args.input {
        Some(path) => {
            fs::read(path).with_context(|| format!("reading {}", path.display()))?
        }
        None => {
            let mut buf = Vec::new();
            std::io::stdin().read_to_end(&mut buf)?;
            buf
        }
    };
    // Hex text or raw binary: treat as hex when it parses as such.
    match std::str::from_utf8(&raw)
        .ok()
        .and_then(|text| obfuscan_core::bytecode::parse_hex(text).ok())
    {
        Some(bytes) => Ok(bytes),
        None => Ok(raw),
    }
}

pub fn analyze(args: AnalyzeArgs) -> anyhow::Result<ExitCode> {
    let config = feature_config(&args.features)?;
    let code = read_bytecode_input(&args)?;
    let analysis = analyze_bytecode_with(&code, None, config.selfdestruct_sites)?;
    let outcome = extract_features(&analysis, &config);

    if let Some(what) = &args.dump {
        match what.as_str() {
            "disasm" => print!(
                "{}",
                obfuscan_core::bytecode::disassemble(&analysis.program.stream)
            ),
            "cfg" => print!("{}", obfuscan_core::ir::cfg_dot(&analysis.program)),
            "ssa" => print!("{}", obfuscan_core::ir::ssa_listing(&analysis.program)),
            "pdg" => {
                if let Some(site) = analysis.sites.first() {
                    let pdg = obfuscan_core::ir::build_pdg(
                        &analysis.program,
                        &analysis.units[site.unit],
                        &analysis.deps,
                    );
                    print!("{}", obfuscan_core::ir::pdg_dot(&analysis.program, &pdg));
                } else {
                    eprintln!("no transfer-containing function to dump");
                }
            }
            other => bail!("unknown dump kind {other:?} (expected disasm, cfg, ssa or pdg)"),
        }
    }

    let snapshot = args
        .stats
        .as_ref()
        .map(|p| load_snapshot(p))
        .transpose()?;
    let scored = snapshot
        .as_ref()
        .map(|s| score_contract("input", outcome.vector.as_array(), s));

    match args.format {
        OutputFormat::Text => print_text_report(&analysis, &outcome, scored.as_ref()),
        OutputFormat::Jsonl | OutputFormat::Csv => {
            let sites = transfer::site_records(&analysis.program, &analysis.units, &analysis.sites);
            let report = serde_json::json!({
                "vector": outcome.vector,
                "sites": sites,
                "per_site": outcome.per_site,
                "z": scored.as_ref().map(|s| s.z),
                "terms": scored.as_ref().map(|s| s.terms),
                "flags": render_flags(&outcome.vector.flags),
            });
            println!("{}", serde_json::to_string(&report)?);
        }
    }

    if let Some(path) = &args.features.review_out {
        let record = fake_record_for_reviews(outcome);
        append_reviews(path, &[record])?;
    }

    if analysis.program.flags.contains(&Flag::Incomplete) {
        return Ok(2);
    }
    Ok(0)
}

fn fake_record_for_reviews(outcome: FeatureOutcome) -> AnalysisRecord {
    AnalysisRecord {
        id: "input".into(),
        vector: outcome.vector,
        z: None,
        flags: Default::default(),
        duration_secs: 0.0,
        version: ingest::PIPELINE_VERSION.to_string(),
        created_at: None,
        reviews: outcome.reviews,
    }
}

fn print_text_report(
    analysis: &obfuscan_core::AnalyzedContract,
    outcome: &FeatureOutcome,
    scored: Option<&ScoredContract>,
) {
    let v = &outcome.vector;
    println!(
        "contract: {} instructions, {} blocks, {} function units, {} transfer sites",
        analysis.program.stream.instructions.len(),
        analysis.program.blocks.len(),
        analysis.units.len(),
        analysis.sites.len()
    );
    for (i, site) in outcome.per_site.iter().enumerate() {
        let SiteFeatures {
            call_offset,
            selector,
            f1,
            f2,
            f3,
            f4,
            f5,
            f7,
            flags,
        } = site;
        println!(
            "site {i}: call@{call_offset:#06x} selector={} f1={f1} f2={f2} f3={f3} f4={f4} f5={f5:.4} f7={f7} flags=[{flags}]",
            selector.as_deref().unwrap_or("-")
        );
    }
    println!(
        "features: f1={} f2={} f3={} f4={} f5={:.4} f6={:.2} f7={}",
        v.f1_addr_steps,
        v.f2_string_ops,
        v.f3_external_call,
        v.f4_branch_height,
        v.f5_tir,
        v.f6_similarity,
        v.f7_irrelevant_logs
    );
    println!("flags: [{}]", render_flags(&v.flags));
    if let Some(s) = scored {
        let terms = s
            .terms
            .iter()
            .enumerate()
            .map(|(i, t)| format!("z{}={:+.3}", i + 1, t))
            .collect::<Vec<_>>()
            .join(" ");
        println!("score: z={:.4} ({terms})", s.z);
    }
}

fn corpus_format(path: &Path, arg: Option<CorpusFormatArg>) -> CorpusFormat {
    match arg {
        Some(CorpusFormatArg::HexDir) => CorpusFormat::HexDir,
        Some(CorpusFormatArg::Jsonl) => CorpusFormat::Jsonl,
        None if path.is_dir() => CorpusFormat::HexDir,
        None => CorpusFormat::Jsonl,
    }
}

pub fn batch(args: BatchArgs) -> anyhow::Result<ExitCode> {
    let config = feature_config(&args.features)?;
    let format = corpus_format(&args.corpus, args.corpus_format);
    let budget = match args.budget_secs {
        0 => None,
        secs => Some(Duration::from_secs(secs)),
    };
    let report_format = match args.format {
        OutputFormat::Csv => ReportFormat::Csv,
        _ => ReportFormat::Jsonl,
    };

    // pass 1: stream the corpus through the pool into a temp JSONL file
    let pass1_path = args.out.with_extension("pass1.tmp");
    let mut reader = CorpusReader::open(&args.corpus, format)
        .with_context(|| format!("opening corpus {}", args.corpus.display()))?;
    let outcome = {
        let pass1 = fs::File::create(&pass1_path)?;
        let mut out = std::io::BufWriter::new(pass1);
        let outcome = ingest::run_batch_streaming(
            reader.by_ref(),
            &config,
            args.workers,
            budget,
            |record| {
                serde_json::to_writer(&mut out, &record)?;
                out.write_all(b"\n")?;
                Ok(())
            },
        );
        out.flush()?;
        outcome?
    };
    let mut summary = outcome.summary;
    summary.skipped = reader.skipped;
    summary.duplicates = reader.duplicates;

    // pass 2: rerun budget casualties uncapped (diagnose-and-rerun protocol)
    let mut patched: std::collections::HashMap<String, AnalysisRecord> = Default::default();
    if !outcome.failed_ids.is_empty() {
        let failed: std::collections::HashSet<&String> = outcome.failed_ids.iter().collect();
        let rerun_reader = CorpusReader::open(&args.corpus, format)?;
        for entry in rerun_reader.filter(|e| failed.contains(&e.id)) {
            let record = ingest::analyze_entry(&entry, &config, None);
            if !record.flags.contains(&Flag::BudgetExceeded) {
                summary.rerun_recovered += 1;
            }
            patched.insert(entry.id.clone(), record);
        }
    }

    // finalize: stream temp records into the requested format, substituting
    // rerun results, then rename into place
    let final_tmp = args.out.with_extension("final.tmp");
    {
        let mut out = std::io::BufWriter::new(fs::File::create(&final_tmp)?);
        if report_format == ReportFormat::Csv {
            writeln!(out, "{}", ingest::REPORT_CSV_HEADER)?;
        }
        let pass1 = std::io::BufReader::new(fs::File::open(&pass1_path)?);
        for line in std::io::BufRead::lines(pass1) {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: AnalysisRecord = serde_json::from_str(&line)?;
            let record = patched.remove(&record.id).unwrap_or(record);
            match report_format {
                ReportFormat::Jsonl => {
                    serde_json::to_writer(&mut out, &record)?;
                    out.write_all(b"\n")?;
                }
                ReportFormat::Csv => writeln!(out, "{}", ingest::record_csv_row(&record))?,
            }
            if let Some(path) = &args.features.review_out {
                append_reviews(path, std::slice::from_ref(&record))?;
            }
        }
        out.flush()?;
    }
    fs::rename(&final_tmp, &args.out)?;
    fs::remove_file(&pass1_path)?;

    let throughput = if summary.elapsed_secs > 0.0 {
        summary.analyzed as f64 / summary.elapsed_secs
    } else {
        0.0
    };
    println!(
        "analyzed={} budget_failures={} recovered={} skipped={} duplicates={} elapsed={:.2}s throughput={:.1}/s",
        summary.analyzed,
        summary.budget_failures,
        summary.rerun_recovered,
        summary.skipped,
        summary.duplicates,
        summary.elapsed_secs,
        throughput
    );
    Ok(0)
}

fn load_snapshot(path: &Path) -> anyhow::Result<StatsSnapshot> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading snapshot {}", path.display()))?;
    Ok(StatsSnapshot::from_json(&text)?)
}

pub fn stats(args: StatsArgs) -> anyhow::Result<ExitCode> {
    let records = ingest::read_reports(&args.records)?;
    let mut stats = CorpusStats::default();
    for record in &records {
        stats.push(&record.vector);
    }
    if stats.n() < 2 {
        bail!(
            "need at least 2 transfer-bearing records to estimate deviations, got {}",
            stats.n()
        );
    }
    let snapshot = StatsSnapshot::from_stats(args.snapshot_id, &stats);
    fs::write(&args.out, snapshot.to_json()?)?;
    println!(
        "snapshot {} over n={} transfer-bearing contracts ({} records total)",
        args.out.display(),
        snapshot.n,
        records.len()
    );
    Ok(0)
}

pub fn score(args: ScoreArgs) -> anyhow::Result<ExitCode> {
    let snapshot = load_snapshot(&args.stats)?;
    let mut records = ingest::read_reports(&args.records)?;
    for record in records.iter_mut() {
        if !record.vector.has_transfers() {
            continue;
        }
        let scored = score_contract(record.id.clone(), record.vector.as_array(), &snapshot);
        record.z = Some(scored.z);
        record.flags.extend(scored.flags.iter().copied());
    }
    let format = match args.format {
        OutputFormat::Jsonl => ReportFormat::Jsonl,
        _ => ReportFormat::Csv,
    };
    let written = ingest::write_reports(&records, &args.out, format)?;
    println!("scored={written} snapshot={}", snapshot.snapshot_id);
    Ok(0)
}

fn load_scored(path: &Path) -> anyhow::Result<Vec<AnalysisRecord>> {
    let records = if path.extension().is_some_and(|e| e == "csv") {
        ingest::read_csv_reports(path)?
    } else {
        ingest::read_reports(path)?
    };
    Ok(records)
}

pub fn rank(args: RankArgs) -> anyhow::Result<ExitCode> {
    let records = load_scored(&args.records)?;
    let mut created_at: Vec<Option<i64>> = Vec::new();
    let mut scored: Vec<ScoredContract> = Vec::new();
    for r in records.iter().filter(|r| r.z.is_some()) {
        created_at.push(r.created_at);
        scored.push(ScoredContract {
            id: r.id.clone(),
            values: r.vector.as_array(),
            z: r.z.unwrap(),
            terms: [0.0; 7],
            flags: r.flags.clone(),
        });
    }
    if scored.is_empty() {
        bail!("no scored records in {}", args.records.display());
    }

    let cutoff = match (args.cutoff, args.confidence) {
        (Some(c), _) => c,
        (None, confidence) => {
            let confidence = confidence.unwrap_or(0.95);
            let zs: Vec<f64> = scored.iter().map(|s| s.z).collect();
            let n = zs.len() as u64;
            let mean = zs.iter().sum::<f64>() / zs.len() as f64;
            let var = zs.iter().map(|z| (z - mean) * (z - mean)).sum::<f64>()
                / (zs.len() as f64 - 1.0).max(1.0);
            threshold(mean, var.sqrt(), n.max(2), confidence)?
        }
    };

    let prevalence = scoring::prevalence(scored.iter().map(|s| s.z), cutoff);
    println!(
        "prevalence cutoff={:.4} above={} below={} pct={:.2}%",
        cutoff, prevalence.above, prevalence.below, prevalence.pct_above
    );

    let k = args.top.min(scored.len());
    let top = scoring::top_k(&scored, k);
    if let Some(first) = top.first() {
        let last = top.last().unwrap();
        let median = top[top.len() / 2].z;
        println!(
            "top-k k={} min={:.3} median={:.3} max={:.3}",
            k, last.z, median, first.z
        );
        let at_least = |m: usize| {
            top.iter()
                .filter(|s| s.values.iter().filter(|&&x| x > 0.0).count() >= m)
                .count()
        };
        let ge2 = at_least(2);
        let ge3 = at_least(3);
        println!(
            "top-k features>=2 {} ({:.1}%) features>=3 {} ({:.1}%)",
            ge2,
            100.0 * ge2 as f64 / k.max(1) as f64,
            ge3,
            100.0 * ge3 as f64 / k.max(1) as f64
        );
        // width-5 score bins over the top listing
        let lo = (last.z / 5.0).floor() * 5.0;
        let hi = (first.z / 5.0).floor() * 5.0;
        let mut bin = lo;
        while bin <= hi {
            let count = top
                .iter()
                .filter(|s| s.z >= bin && s.z < bin + 5.0)
                .count();
            if count > 0 {
                println!(
                    "top-k bin {:.0}-{:.0} {} ({:.1}%)",
                    bin,
                    bin + 5.0,
                    count,
                    100.0 * count as f64 / k.max(1) as f64
                );
            }
            bin += 5.0;
        }
    }

    let matrix: Vec<[f64; 7]> = scored.iter().map(|s| s.values).collect();
    let quantiles = scoring::feature_quantiles(&matrix);
    for (i, q) in quantiles.iter().enumerate() {
        println!(
            "quantiles f{} nonzero={:.2}% median={:.2} p90={:.2} p99={:.2}",
            i + 1,
            q.nonzero_rate,
            q.median,
            q.p90,
            q.p99
        );
    }

    // contribution shares need the standardized terms; re-derive from the set
    let stats = scoring::corpus_stats_rows(&matrix);
    if let Ok(stats) = stats {
        let snapshot = StatsSnapshot::from_stats("rank", &stats);
        let rescored: Vec<ScoredContract> = scored
            .iter()
            .map(|s| score_contract(s.id.clone(), s.values, &snapshot))
            .collect();
        let shares = scoring::contribution_shares(&rescored);
        let parts: Vec<String> = shares
            .iter()
            .enumerate()
            .map(|(i, s)| format!("f{}={:.2}%", i + 1, s))
            .collect();
        println!("shares {}", parts.join(" "));
    }

    // monthly aggregation when timestamps are present (JSONL records)
    let timestamped: Vec<(i64, &ScoredContract)> = created_at
        .iter()
        .zip(&scored)
        .filter_map(|(ts, s)| ts.map(|ts| (ts, s)))
        .collect();
    if !timestamped.is_empty() {
        for month in scoring::monthly_aggregate(&timestamped) {
            println!(
                "monthly {}-{:02} count={} median_z={:.3}",
                month.year, month.month, month.count, month.median_z
            );
        }
    }

    if let Some(out) = &args.out {
        let mut text = String::new();
        for s in &top {
            text.push_str(&format!("{} {}\n", s.id, s.z));
        }
        fs::write(out, text)?;
    }
    Ok(0)
}

pub fn eval(args: EvalArgs) -> anyhow::Result<ExitCode> {
    let text = fs::read_to_string(&args.labeled)
        .with_context(|| format!("reading {}", args.labeled.display()))?;
    let set = eval_mod::LabeledSet::from_csv(&text)?;
    if set.positives() == 0 || set.positives() == set.len() {
        bail!("labeled set contains a single class; need both");
    }

    // z-scores against statistics over the whole labeled set
    let stats = scoring::corpus_stats_rows(&set.matrix)?;
    let snapshot = StatsSnapshot::from_stats(&args.name, &stats);
    let scored: Vec<ScoredContract> = set
        .ids
        .iter()
        .zip(&set.matrix)
        .map(|(id, row)| score_contract(id.clone(), *row, &snapshot))
        .collect();
    let zs: Vec<f64> = scored.iter().map(|s| s.z).collect();

    // cutoff from the labeled negatives: upper confidence bound of their mean
    let negatives: Vec<f64> = zs
        .iter()
        .zip(&set.labels)
        .filter(|(_, &l)| l == 0)
        .map(|(&z, _)| z)
        .collect();
    let neg_mean = negatives.iter().sum::<f64>() / negatives.len() as f64;
    let neg_var = negatives
        .iter()
        .map(|z| (z - neg_mean) * (z - neg_mean))
        .sum::<f64>()
        / (negatives.len() as f64 - 1.0).max(1.0);
    let cutoff = threshold(
        neg_mean,
        neg_var.sqrt(),
        negatives.len() as u64,
        args.confidence,
    )?;

    // thresholded metrics at z >= cutoff, AUCs over raw z
    let predictions: Vec<u8> = zs.iter().map(|&z| (z >= cutoff) as u8).collect();
    let mut z_report = eval_mod::confusion_metrics(&set.labels, &predictions)?;
    z_report.roc_auc = Some(eval_mod::roc_auc(&set.labels, &zs)?);
    z_report.pr_auc = Some(eval_mod::pr_auc(&set.labels, &zs)?);

    let logistic = eval_mod::logistic_cv(&set, args.folds, args.seed)?;
    let drops = eval_mod::drop_column(&set, args.folds, args.seed)?;

    let k = args.overlap_k.unwrap_or((set.len() / 10).max(1));
    let full: Vec<ScoredContract> = set
        .ids
        .iter()
        .zip(&set.matrix)
        .map(|(id, row)| score_contract(id.clone(), *row, &snapshot))
        .collect();
    let mut overlaps = Vec::new();
    for feature in 0..7 {
        let ablated = eval_mod::ablated_scores(&set.ids, &set.matrix, feature)?;
        let overlap = eval_mod::ranking_overlap(&full, &ablated, k)?;
        overlaps.push(serde_json::json!({
            "feature": format!("f{}", feature + 1),
            "overlap": overlap,
            "drop": 1.0 - overlap,
        }));
    }

    let report = serde_json::json!({
        "experiment": args.name,
        "seed": args.seed,
        "folds": args.folds,
        "n": set.len(),
        "positives": set.positives(),
        "derived_cutoff": cutoff,
        "z_cutoff": z_report,
        "logistic": logistic.report,
        "logistic_converged": logistic.converged,
        "drop_column": drops
            .iter()
            .map(|d| serde_json::json!({
                "feature": format!("f{}", d.feature + 1),
                "delta_pr_auc": d.delta_pr_auc,
                "delta_f1": d.delta_f1,
            }))
            .collect::<Vec<_>>(),
        "overlap_k": k,
        "ranking_overlap": overlaps,
    });
    let text = serde_json::to_string_pretty(&report)?;
    match &args.out {
        Some(path) => fs::write(path, &text)?,
        None => println!("{text}"),
    }
    Ok(0)
}

pub fn fetch(args: FetchArgs) -> anyhow::Result<ExitCode> {
    let endpoint = args
        .endpoint
        .or_else(|| std::env::var("ETH_RPC_URL").ok())
        .context("no endpoint: pass --endpoint or set ETH_RPC_URL")?;
    let text = fs::read_to_string(&args.addresses)?;
    let mut seen = std::collections::HashSet::new();
    let mut addresses = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if seen.insert(line.to_lowercase()) {
            addresses.push(line.to_string());
        }
    }
    let deduped = text
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.trim().starts_with('#'))
        .count()
        - addresses.len();

    let format = corpus_format(&args.out, args.corpus_format);
    let mut fetched = 0u64;
    let mut skipped_empty = 0u64;
    let mut jsonl_out = match format {
        CorpusFormat::Jsonl => Some(
            fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(&args.out)?,
        ),
        CorpusFormat::HexDir => {
            fs::create_dir_all(&args.out)?;
            None
        }
    };
    for address in &addresses {
        let code = ingest::fetch_code(&endpoint, address, &args.block_tag).with_context(|| {
            format!("fetching {address} (partial progress is preserved in {})", args.out.display())
        })?;
        if code.is_empty() {
            skipped_empty += 1;
            continue;
        }
        let entry = CorpusEntry {
            id: address.to_lowercase(),
            bytecode: code,
            created_at: None,
            source: obfuscan_core::ingest::EntrySource::Rpc,
        };
        match (&mut jsonl_out, format) {
            (Some(out), _) => {
                serde_json::to_writer(&mut *out, &entry)?;
                out.write_all(b"\n")?;
            }
            (None, _) => {
                let path = args.out.join(format!("{}.hex", entry.id));
                fs::write(path, obfuscan_core::bytecode::to_hex(&entry.bytecode))?;
            }
        }
        fetched += 1;
    }
    println!("fetched={fetched} skipped_empty={skipped_empty} deduped={deduped}");
    Ok(0)
}
