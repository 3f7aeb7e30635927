//! Corpus I/O: load bytecode datasets, fetch live code over JSON-RPC, run
//! the batch analysis pool, and persist reports.
//!
//! Loading streams entries one at a time so memory stays flat regardless of
//! corpus size; report writes go through a temp file and rename so a crashed
//! run never leaves a half-written file behind.

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha3::{Digest, Keccak256};

use crate::error::{Error, Result};
use crate::features::logs::ReviewEntry;
use crate::features::{extract_features, FeatureConfig, FeatureVector};
use crate::flags::{render_flags, Flag, FlagSet};

pub const PIPELINE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Default per-contract wall budget for the first pass, in seconds.
pub const DEFAULT_BUDGET_SECS: u64 = 20;

/// One contract in a corpus. Entries loaded without an id (bytecode-only
/// corpora) get a content-digest id so identical runtime code dedupes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusEntry {
    #[serde(default)]
    pub id: String,
    #[serde(with = "hex_bytes")]
    pub bytecode: Vec<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub created_at: Option<i64>,
    #[serde(default)]
    pub source: EntrySource,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntrySource {
    #[default]
    File,
    Rpc,
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str(&crate::bytecode::to_hex(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(de)?;
        crate::bytecode::parse_hex(&text).map_err(serde::de::Error::custom)
    }
}

/// Content id for bytecode-only corpora: keccak of the runtime code, so
/// identical deployments dedupe.
pub fn content_digest(bytecode: &[u8]) -> String {
    let hash = Keccak256::digest(bytecode);
    let mut out = String::with_capacity(66);
    out.push_str("0x");
    for b in hash {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    /// Directory of `<id>.hex` files.
    HexDir,
    /// One JSON object per line: {"id", "bytecode", "created_at"?}.
    Jsonl,
}

/// Streaming corpus reader. Duplicate ids after the first are skipped;
/// malformed entries are counted and skipped without stopping the stream.
pub struct CorpusReader {
    inner: ReaderInner,
    seen: HashSet<String>,
    pub skipped: u64,
    pub duplicates: u64,
}

enum ReaderInner {
    HexDir(std::vec::IntoIter<PathBuf>),
    Jsonl(std::io::Lines<BufReader<File>>),
}

impl CorpusReader {
    pub fn open(path: &Path, format: CorpusFormat) -> Result<Self> {
        let inner = match format {
            CorpusFormat::HexDir => {
                let mut files: Vec<PathBuf> = fs::read_dir(path)?
                    .filter_map(|e| e.ok())
                    .map(|e| e.path())
                    .filter(|p| p.extension().is_some_and(|ext| ext == "hex"))
                    .collect();
                files.sort();
                ReaderInner::HexDir(files.into_iter())
            }
            CorpusFormat::Jsonl => ReaderInner::Jsonl(BufReader::new(File::open(path)?).lines()),
        };
        Ok(Self {
            inner,
            seen: HashSet::new(),
            skipped: 0,
            duplicates: 0,
        })
    }

    fn next_raw(&mut self) -> Option<CorpusEntry> {
        loop {
            match &mut self.inner {
                ReaderInner::HexDir(files) => {
                    let path = files.next()?;
                    let id = path
                        .file_stem()
                        .map(|s| s.to_string_lossy().to_string())
                        .unwrap_or_default();
                    match fs::read_to_string(&path)
                        .map_err(Error::from)
                        .and_then(|text| crate::bytecode::parse_hex(&text))
                    {
                        Ok(bytecode) => {
                            return Some(CorpusEntry {
                                id,
                                bytecode,
                                created_at: None,
                                source: EntrySource::File,
                            })
                        }
                        Err(_) => {
                            self.skipped += 1;
                            continue;
                        }
                    }
                }
                ReaderInner::Jsonl(lines) => {
                    let line = match lines.next()? {
                        Ok(line) => line,
                        Err(_) => {
                            self.skipped += 1;
                            continue;
                        }
                    };
                    if line.trim().is_empty() {
                        continue;
                    }
                    match serde_json::from_str::<CorpusEntry>(&line) {
                        Ok(mut entry) => {
                            if entry.id.is_empty() {
                                entry.id = content_digest(&entry.bytecode);
                            }
                            return Some(entry);
                        }
                        Err(_) => {
                            self.skipped += 1;
                            continue;
                        }
                    }
                }
            }
        }
    }
}

impl Iterator for CorpusReader {
    type Item = CorpusEntry;

    fn next(&mut self) -> Option<CorpusEntry> {
        loop {
            let entry = self.next_raw()?;
            if !self.seen.insert(entry.id.clone()) {
                self.duplicates += 1;
                continue;
            }
            return Some(entry);
        }
    }
}

/// Fetch runtime code for an address over the standard get-code RPC, with
/// three attempts and exponential backoff on transport errors. The result
/// is empty for addresses with no code.
pub fn fetch_code(endpoint: &str, address: &str, block_tag: &str) -> Result<Vec<u8>> {
    validate_address(address)?;
    let body = serde_json::json!({
        "jsonrpc": "2.0",
        "method": "eth_getCode",
        "params": [address, block_tag],
        "id": 1,
    });
    let mut delay = Duration::from_millis(250);
    let mut last_err = None;
    for attempt in 0..3 {
        if attempt > 0 {
            std::thread::sleep(delay);
            delay *= 2;
        }
        match ureq::post(endpoint).send_json(&body) {
            Ok(mut response) => {
                let value: serde_json::Value = response
                    .body_mut()
                    .read_json()
                    .map_err(|e| Error::Transport(e.to_string()))?;
                if let Some(err) = value.get("error") {
                    return Err(Error::Rpc {
                        code: err.get("code").and_then(|c| c.as_i64()).unwrap_or(0),
                        message: err
                            .get("message")
                            .and_then(|m| m.as_str())
                            .unwrap_or("unknown")
                            .to_string(),
                    });
                }
                let result = value
                    .get("result")
                    .and_then(|r| r.as_str())
                    .ok_or_else(|| Error::Transport("missing result field".into()))?;
                return crate::bytecode::parse_hex(result);
            }
            Err(e) => last_err = Some(Error::Transport(e.to_string())),
        }
    }
    Err(last_err.unwrap_or_else(|| Error::Transport("unreachable".into())))
}

pub fn validate_address(address: &str) -> Result<()> {
    let bare = address
        .strip_prefix("0x")
        .ok_or_else(|| Error::InvalidAddress(address.to_string()))?;
    if bare.len() != 40 || !bare.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(Error::InvalidAddress(address.to_string()));
    }
    Ok(())
}

/// Result row for one analyzed contract.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisRecord {
    pub id: String,
    pub vector: FeatureVector,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
    pub flags: FlagSet,
    /// Wall seconds spent analyzing (not part of deterministic CSV output).
    pub duration_secs: f64,
    pub version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub created_at: Option<i64>,
    /// Ambiguous-log review entries produced by F7 (empty when none).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reviews: Vec<ReviewEntry>,
}

/// Analyze one entry under an optional wall budget.
pub fn analyze_entry(
    entry: &CorpusEntry,
    config: &FeatureConfig,
    budget: Option<Duration>,
) -> AnalysisRecord {
    let start = Instant::now();
    let deadline = budget.map(|b| start + b);
    let mut flags = FlagSet::new();
    let analyzed =
        crate::analyze_bytecode_with(&entry.bytecode, deadline, config.selfdestruct_sites);
    let (vector, mut reviews) = match analyzed {
        Ok(analysis) => {
            let outcome = extract_features(&analysis, config);
            (outcome.vector, outcome.reviews)
        }
        Err(Error::BudgetExceeded) => {
            flags.insert(Flag::BudgetExceeded);
            (FeatureVector::default(), Vec::new())
        }
        Err(_) => {
            flags.insert(Flag::DecodeError);
            (FeatureVector::default(), Vec::new())
        }
    };
    for review in reviews.iter_mut() {
        review.contract = entry.id.clone();
    }
    flags.extend(vector.flags.iter().copied());
    AnalysisRecord {
        id: entry.id.clone(),
        vector,
        z: None,
        flags,
        duration_secs: start.elapsed().as_secs_f64(),
        version: PIPELINE_VERSION.to_string(),
        created_at: entry.created_at,
        reviews,
    }
}

/// Batch summary counters.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct BatchSummary {
    pub analyzed: u64,
    pub budget_failures: u64,
    pub rerun_recovered: u64,
    pub skipped: u64,
    pub duplicates: u64,
    pub elapsed_secs: f64,
}

fn parallel_analyze(
    entries: impl Iterator<Item = CorpusEntry>,
    config: &FeatureConfig,
    workers: usize,
    budget: Option<Duration>,
) -> Vec<AnalysisRecord> {
    let (work_tx, work_rx) = mpsc::channel::<(usize, CorpusEntry)>();
    let work_rx = std::sync::Arc::new(std::sync::Mutex::new(work_rx));
    let (done_tx, done_rx) = mpsc::channel::<(usize, AnalysisRecord)>();

    std::thread::scope(|scope| {
        for _ in 0..workers.max(1) {
            let work_rx = work_rx.clone();
            let done_tx = done_tx.clone();
            let config = config.clone();
            scope.spawn(move || loop {
                let job = work_rx.lock().unwrap().recv();
                match job {
                    Ok((seq, entry)) => {
                        let record = analyze_entry(&entry, &config, budget);
                        if done_tx.send((seq, record)).is_err() {
                            break;
                        }
                    }
                    Err(_) => break,
                }
            });
        }
        drop(done_tx);

        let mut count = 0usize;
        for (seq, entry) in entries.enumerate() {
            work_tx.send((seq, entry)).expect("workers alive");
            count += 1;
        }
        drop(work_tx);

        let mut slots: Vec<Option<AnalysisRecord>> = (0..count).map(|_| None).collect();
        for (seq, record) in done_rx {
            slots[seq] = Some(record);
        }
        slots
            .into_iter()
            .map(|s| s.expect("all jobs done"))
            .collect()
    })
}

/// Two-pass batch: a budgeted parallel first pass, then an uncapped rerun of
/// anything that hit the budget (mirroring the diagnose-and-rerun protocol).
/// Output order matches input order regardless of completion order.
pub fn run_batch_with_rerun(
    entries: &[CorpusEntry],
    config: &FeatureConfig,
    workers: usize,
    budget: Option<Duration>,
) -> (Vec<AnalysisRecord>, BatchSummary) {
    let started = Instant::now();
    let mut records = parallel_analyze(entries.iter().cloned(), config, workers, budget);
    let mut summary = BatchSummary {
        analyzed: records.len() as u64,
        ..Default::default()
    };
    for (record, entry) in records.iter_mut().zip(entries) {
        if record.flags.contains(&Flag::BudgetExceeded) {
            summary.budget_failures += 1;
            let rerun = analyze_entry(entry, config, None);
            if !rerun.flags.contains(&Flag::BudgetExceeded) {
                summary.rerun_recovered += 1;
                *record = rerun;
            }
        }
    }
    summary.elapsed_secs = started.elapsed().as_secs_f64();
    (records, summary)
}

/// Outcome of a streaming batch pass.
#[derive(Debug, Clone, Default)]
pub struct StreamOutcome {
    pub summary: BatchSummary,
    /// Ids that hit the budget and need an uncapped rerun.
    pub failed_ids: Vec<String>,
    /// High-water mark of the in-order delivery buffer; bounded by the work
    /// queue depth, which is what keeps memory flat on huge corpora.
    pub max_reorder_buffer: usize,
}

/// Work queue depth per worker; bounds producer lead and therefore the
/// reorder buffer.
const QUEUE_DEPTH_PER_WORKER: usize = 4;

/// Stream a corpus through the worker pool, delivering records to `sink` in
/// input order. Memory use is independent of corpus size: at most
/// `workers * QUEUE_DEPTH_PER_WORKER + workers` entries are in flight.
pub fn run_batch_streaming(
    entries: impl Iterator<Item = CorpusEntry>,
    config: &FeatureConfig,
    workers: usize,
    budget: Option<Duration>,
    mut sink: impl FnMut(AnalysisRecord) -> Result<()>,
) -> Result<StreamOutcome> {
    let started = Instant::now();
    let workers = workers.max(1);
    let (work_tx, work_rx) =
        mpsc::sync_channel::<(usize, CorpusEntry)>(workers * QUEUE_DEPTH_PER_WORKER);
    let work_rx = std::sync::Arc::new(std::sync::Mutex::new(work_rx));
    let (done_tx, done_rx) = mpsc::channel::<(usize, AnalysisRecord)>();

    let mut outcome = StreamOutcome::default();
    let mut pending: std::collections::BTreeMap<usize, AnalysisRecord> = Default::default();
    let mut next_seq = 0usize;

    std::thread::scope(|scope| -> Result<()> {
        // owned by the closure so any early return drops it and unblocks the
        // workers before the scope joins them
        let work_tx = work_tx;
        for _ in 0..workers {
            let work_rx = work_rx.clone();
            let done_tx = done_tx.clone();
            let config = config.clone();
            scope.spawn(move || loop {
                let job = work_rx.lock().unwrap().recv();
                match job {
                    Ok((seq, entry)) => {
                        let record = analyze_entry(&entry, &config, budget);
                        if done_tx.send((seq, record)).is_err() {
                            break;
                        }
                    }
                    Err(_) => break,
                }
            });
        }
        drop(done_tx);

        let drain = |pending: &mut std::collections::BTreeMap<usize, AnalysisRecord>,
                         next_seq: &mut usize,
                         outcome: &mut StreamOutcome,
                         sink: &mut dyn FnMut(AnalysisRecord) -> Result<()>|
         -> Result<()> {
            outcome.max_reorder_buffer = outcome.max_reorder_buffer.max(pending.len());
            while let Some(record) = pending.remove(next_seq) {
                if record.flags.contains(&Flag::BudgetExceeded) {
                    outcome.summary.budget_failures += 1;
                    outcome.failed_ids.push(record.id.clone());
                }
                outcome.summary.analyzed += 1;
                sink(record)?;
                *next_seq += 1;
            }
            Ok(())
        };

        // Producer stalls once it runs `window` sequences ahead of emission;
        // a bounded work queue alone would not cap the reorder buffer when
        // one slow job lets everything behind it complete out of order.
        let window = workers * QUEUE_DEPTH_PER_WORKER * 2;
        for (seq, entry) in entries.enumerate() {
            while seq - next_seq >= window {
                let (done_seq, record) = done_rx.recv().expect("workers alive");
                pending.insert(done_seq, record);
                drain(&mut pending, &mut next_seq, &mut outcome, &mut sink)?;
            }
            work_tx.send((seq, entry)).expect("workers alive");
            while let Ok((done_seq, record)) = done_rx.try_recv() {
                pending.insert(done_seq, record);
            }
            drain(&mut pending, &mut next_seq, &mut outcome, &mut sink)?;
        }
        drop(work_tx);
        for (done_seq, record) in done_rx.iter() {
            pending.insert(done_seq, record);
            drain(&mut pending, &mut next_seq, &mut outcome, &mut sink)?;
        }
        Ok(())
    })?;

    outcome.summary.elapsed_secs = started.elapsed().as_secs_f64();
    Ok(outcome)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Jsonl,
    Csv,
}

/// CSV schema for report files.
pub const REPORT_CSV_HEADER: &str = "id,f1,f2,f3,f4,f5,f6,f7,z,flags";

fn format_float(x: f64) -> String {
    if x == x.trunc() && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

pub fn record_csv_row(record: &AnalysisRecord) -> String {
    let v = record.vector.as_array();
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        record.id,
        format_float(v[0]),
        format_float(v[1]),
        format_float(v[2]),
        format_float(v[3]),
        format_float(v[4]),
        format_float(v[5]),
        format_float(v[6]),
        record.z.map(format_float).unwrap_or_default(),
        render_flags(&record.flags),
    )
}

/// Write records atomically (temp file + rename). Returns the count written.
pub fn write_reports(
    records: &[AnalysisRecord],
    path: &Path,
    format: ReportFormat,
) -> Result<usize> {
    let tmp = path.with_extension("tmp");
    let result = (|| -> Result<usize> {
        let mut out = BufWriter::new(File::create(&tmp)?);
        match format {
            ReportFormat::Jsonl => {
                for record in records {
                    serde_json::to_writer(&mut out, record)?;
                    out.write_all(b"\n")?;
                }
            }
            ReportFormat::Csv => {
                writeln!(out, "{REPORT_CSV_HEADER}")?;
                for record in records {
                    writeln!(out, "{}", record_csv_row(record))?;
                }
            }
        }
        out.flush()?;
        Ok(records.len())
    })();
    match result {
        Ok(count) => {
            fs::rename(&tmp, path)?;
            Ok(count)
        }
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(e)
        }
    }
}

/// Read back a CSV report file written by [`write_reports`].
pub fn read_csv_reports(path: &Path) -> Result<Vec<AnalysisRecord>> {
    let mut records = Vec::new();
    let mut lines = BufReader::new(File::open(path)?).lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::Invalid("empty report csv".into()))?;
    if header.trim() != REPORT_CSV_HEADER {
        return Err(Error::Invalid(format!(
            "report csv header must be {REPORT_CSV_HEADER:?}, got {header:?}"
        )));
    }
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            return Err(Error::Invalid(format!(
                "report csv line {}: expected 10 fields",
                lineno + 2
            )));
        }
        let mut values = [0.0f64; 7];
        for (i, field) in fields[1..8].iter().enumerate() {
            values[i] = field.trim().parse().map_err(|_| {
                Error::Invalid(format!("report csv line {}: bad number", lineno + 2))
            })?;
        }
        let z: Option<f64> = if fields[8].trim().is_empty() {
            None
        } else {
            Some(fields[8].trim().parse().map_err(|_| {
                Error::Invalid(format!("report csv line {}: bad z", lineno + 2))
            })?)
        };
        let flags = crate::flags::parse_flags(fields[9].trim());
        let mut vector = FeatureVector::from_array(values);
        vector.f5_tir = values[4];
        vector.f6_similarity = values[5];
        vector.flags = flags.clone();
        records.push(AnalysisRecord {
            id: fields[0].trim().to_string(),
            vector,
            z,
            flags,
            duration_secs: 0.0,
            version: PIPELINE_VERSION.to_string(),
            created_at: None,
            reviews: Vec::new(),
        });
    }
    Ok(records)
}

/// Read back a JSONL report file.
pub fn read_reports(path: &Path) -> Result<Vec<AnalysisRecord>> {
    let mut records = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line)?);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    // drain one HTTP request (headers + small JSON body) from a mock socket
    fn read_request(stream: &mut std::net::TcpStream) {
        use std::io::Read;
        let mut raw = Vec::new();
        let mut chunk = [0u8; 1024];
        loop {
            let n = stream.read(&mut chunk).unwrap_or(0);
            raw.extend_from_slice(&chunk[..n]);
            let text = String::from_utf8_lossy(&raw);
            if n == 0 || (text.contains("\r\n\r\n") && text.trim_end().ends_with('}')) {
                break;
            }
        }
    }

    fn sample_entry(id: &str, code: &[u8]) -> CorpusEntry {
        CorpusEntry {
            id: id.into(),
            bytecode: code.to_vec(),
            created_at: Some(1_700_000_000),
            source: EntrySource::File,
        }
    }

    #[test]
    fn hex_dir_loader_skips_bad_files() {
        let dir = tempfile::tempdir().unwrap();
        for (name, content) in [
            ("0xaaa.hex", "0x6001600201"),
            ("0xbbb.hex", "600160020100"),
            ("0xccc.hex", "zzzz"),
            ("notes.txt", "ignored"),
        ] {
            let mut f = File::create(dir.path().join(name)).unwrap();
            f.write_all(content.as_bytes()).unwrap();
        }
        let mut reader = CorpusReader::open(dir.path(), CorpusFormat::HexDir).unwrap();
        let entries: Vec<_> = reader.by_ref().collect();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[0].id, "0xaaa");
        assert_eq!(reader.skipped, 1);
    }

    #[test]
    fn jsonl_bad_lines_and_duplicates_counted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        let mut f = File::create(&path).unwrap();
        writeln!(f, r#"{{"id":"a","bytecode":"0x6001"}}"#).unwrap();
        writeln!(f, "not json").unwrap();
        writeln!(f, r#"{{"id":"b","bytecode":"0x6002","created_at":123}}"#).unwrap();
        writeln!(f, r#"{{"id":"a","bytecode":"0x6003"}}"#).unwrap();
        let mut reader = CorpusReader::open(&path, CorpusFormat::Jsonl).unwrap();
        let entries: Vec<_> = reader.by_ref().collect();
        assert_eq!(entries.len(), 2);
        assert_eq!(reader.skipped, 1);
        assert_eq!(reader.duplicates, 1);
        assert_eq!(entries[1].created_at, Some(123));
    }

    #[test]
    fn idless_entries_get_content_digest_ids_and_dedupe() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        let mut f = File::create(&path).unwrap();
        writeln!(f, r#"{{"bytecode":"0x6001"}}"#).unwrap();
        writeln!(f, r#"{{"bytecode":"0x6001"}}"#).unwrap();
        writeln!(f, r#"{{"bytecode":"0x6002"}}"#).unwrap();
        let mut reader = CorpusReader::open(&path, CorpusFormat::Jsonl).unwrap();
        let entries: Vec<_> = reader.by_ref().collect();
        assert_eq!(entries.len(), 2, "identical bytecode dedupes by digest");
        assert_eq!(reader.duplicates, 1);
        assert_eq!(entries[0].id, content_digest(&[0x60, 0x01]));
    }

    #[test]
    fn address_validation() {
        assert!(validate_address("0x123").is_err());
        assert!(validate_address("1234567890123456789012345678901234567890").is_err());
        assert!(validate_address(&format!("0x{}", "ab".repeat(20))).is_ok());
        assert!(validate_address(&format!("0x{}", "zz".repeat(20))).is_err());
    }

    #[test]
    fn fetch_code_mock_server_with_retry() {
        // mock endpoint: first connection gets 503, the retry gets the code
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            for (i, stream) in listener.incoming().enumerate() {
                let mut stream = stream.unwrap();
                read_request(&mut stream);
                let response = if i == 0 {
                    "HTTP/1.1 503 Service Unavailable\r\ncontent-length: 0\r\n\r\n".to_string()
                } else {
                    let body = r#"{"jsonrpc":"2.0","id":1,"result":"0x6001600201"}"#;
                    format!(
                        "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\n\r\n{}",
                        body.len(),
                        body
                    )
                };
                stream.write_all(response.as_bytes()).unwrap();
                if i >= 1 {
                    break;
                }
            }
        });
        let endpoint = format!("http://{addr}");
        let address = format!("0x{}", "ab".repeat(20));
        let code = fetch_code(&endpoint, &address, "latest").unwrap();
        assert_eq!(code, vec![0x60, 0x01, 0x60, 0x02, 0x01]);
        handle.join().unwrap();
    }

    #[test]
    fn fetch_code_surfaces_rpc_errors() {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            read_request(&mut stream);
            let body = r#"{"jsonrpc":"2.0","id":1,"error":{"code":-32000,"message":"pruned"}}"#;
            let response = format!(
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\n\r\n{}",
                body.len(),
                body
            );
            stream.write_all(response.as_bytes()).unwrap();
        });
        let endpoint = format!("http://{addr}");
        let address = format!("0x{}", "cd".repeat(20));
        match fetch_code(&endpoint, &address, "latest") {
            Err(Error::Rpc { code, message }) => {
                assert_eq!(code, -32000);
                assert_eq!(message, "pruned");
            }
            other => panic!("expected rpc error, got {other:?}"),
        }
        handle.join().unwrap();
    }

    #[test]
    fn invalid_address_fails_before_network() {
        assert!(matches!(
            fetch_code("http://127.0.0.1:1", "0x123", "latest"),
            Err(Error::InvalidAddress(_))
        ));
    }

    #[test]
    fn report_round_trip_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("reports.jsonl");
        let entry = sample_entry("c1", &crate::bytecode::parse_hex("0x600160005500").unwrap());
        let record = analyze_entry(&entry, &FeatureConfig::default(), None);
        let written = write_reports(&[record.clone()], &path, ReportFormat::Jsonl).unwrap();
        assert_eq!(written, 1);
        let back = read_reports(&path).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].id, record.id);
        assert_eq!(back[0].vector, record.vector);
        assert_eq!(back[0].created_at, record.created_at);
    }

    #[test]
    fn empty_csv_keeps_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("reports.csv");
        write_reports(&[], &path, ReportFormat::Csv).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, format!("{REPORT_CSV_HEADER}\n"));
    }

    #[test]
    fn batch_output_order_matches_input() {
        let entries: Vec<CorpusEntry> = (0..40)
            .map(|i| sample_entry(&format!("c{i:02}"), &[0x60, i as u8, 0x60, 0x00, 0x55, 0x00]))
            .collect();
        let (records, summary) = run_batch_with_rerun(&entries, &FeatureConfig::default(), 4, None);
        assert_eq!(records.len(), 40);
        assert_eq!(summary.analyzed, 40);
        for (i, record) in records.iter().enumerate() {
            assert_eq!(record.id, format!("c{i:02}"));
        }
    }

    #[test]
    fn zero_budget_flags_then_rerun_recovers() {
        let entry = sample_entry(
            "slow",
            &crate::bytecode::parse_hex("0x6001600a5700000000005b600160005500").unwrap(),
        );
        let record = analyze_entry(&entry, &FeatureConfig::default(), Some(Duration::ZERO));
        assert!(record.flags.contains(&Flag::BudgetExceeded));
        let (records, summary) =
            run_batch_with_rerun(&[entry], &FeatureConfig::default(), 2, Some(Duration::ZERO));
        assert_eq!(summary.budget_failures, 1);
        assert_eq!(summary.rerun_recovered, 1);
        assert!(!records[0].flags.contains(&Flag::BudgetExceeded));
    }

    #[test]
    fn streaming_batch_is_ordered_with_bounded_buffer() {
        // 10^5 generated entries, never materialized as a whole: the
        // reorder buffer must stay within the work-queue bound
        let workers = 4usize;
        let count = 100_000usize;
        let entries = (0..count).map(|i| CorpusEntry {
            id: format!("c{i:06}"),
            bytecode: vec![0x60, (i % 251) as u8, 0x60, 0x00, 0x55, 0x00],
            created_at: None,
            source: EntrySource::File,
        });
        let mut seen = 0usize;
        let outcome = run_batch_streaming(
            entries,
            &FeatureConfig::default(),
            workers,
            None,
            |record| {
                assert_eq!(record.id, format!("c{seen:06}"), "in-order delivery");
                seen += 1;
                Ok(())
            },
        )
        .unwrap();
        assert_eq!(seen, count);
        assert_eq!(outcome.summary.analyzed as usize, count);
        let bound = workers * super::QUEUE_DEPTH_PER_WORKER * 2 + 1;
        assert!(
            outcome.max_reorder_buffer <= bound,
            "reorder buffer {} exceeded bound {}",
            outcome.max_reorder_buffer,
            bound
        );
    }

    #[test]
    fn streaming_batch_reports_budget_failures() {
        let entries = vec![
            sample_entry("ok", &[0x60, 0x01, 0x60, 0x00, 0x55, 0x00]),
            sample_entry(
                "slow",
                &crate::bytecode::parse_hex("0x6001600a5700000000005b600160005500").unwrap(),
            ),
        ];
        let mut records = Vec::new();
        let outcome = run_batch_streaming(
            entries.into_iter(),
            &FeatureConfig::default(),
            2,
            Some(Duration::ZERO),
            |r| {
                records.push(r);
                Ok(())
            },
        )
        .unwrap();
        assert_eq!(outcome.summary.budget_failures, 2);
        assert_eq!(outcome.failed_ids, vec!["ok".to_string(), "slow".to_string()]);
    }

    #[test]
    fn content_digest_is_stable() {
        let a = content_digest(&[0x60, 0x01]);
        let b = content_digest(&[0x60, 0x01]);
        assert_eq!(a, b);
        assert!(a.starts_with("0x"));
        assert_eq!(a.len(), 66);
        assert_ne!(a, content_digest(&[0x60, 0x02]));
    }
}
