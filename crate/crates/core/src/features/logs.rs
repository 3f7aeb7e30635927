//! Log relevance classification for F7.
//!
//! The default backend is a signature-set heuristic: a log is
//! transfer-related when its topic0 is a known transfer-semantic event hash
//! or when its operands share dataflow with the transfer's recipient/amount
//! slices. Logs with statically unknown topic0 and no shared dataflow are
//! ambiguous; they go to a review file and count as related so the feature
//! stays conservative. An external classifier can be plugged in over HTTP
//! with the same request/response contract; if it is unreachable the
//! heuristic answers and the result is flagged.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use primitive_types::U256;
use serde::{Deserialize, Serialize};
use sha3::{Digest, Keccak256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogRelation {
    Related,
    Unrelated,
    Ambiguous,
}

impl fmt::Display for LogRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LogRelation::Related => "related",
            LogRelation::Unrelated => "unrelated",
            LogRelation::Ambiguous => "ambiguous",
        };
        f.write_str(s)
    }
}

impl FromStr for LogRelation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "related" => Ok(LogRelation::Related),
            "unrelated" => Ok(LogRelation::Unrelated),
            "ambiguous" => Ok(LogRelation::Ambiguous),
            other => Err(format!("unknown relation {other:?}")),
        }
    }
}

/// One classification request: the decoded log plus a summary of the site it
/// co-occurs with. This struct is the wire format for external classifiers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogRequest {
    /// Event signature hash as 0x-hex, when statically known.
    pub topic0: Option<String>,
    /// All topics, constants as 0x-hex, unknown as null.
    pub topics: Vec<Option<String>>,
    /// LOG0..LOG4.
    pub mnemonic: String,
    /// Whether any log operand shares dataflow with the addr/value slices.
    pub slice_overlap: bool,
    pub site: SiteSummary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SiteSummary {
    pub call_offset: usize,
    pub selector: Option<String>,
    pub flags: String,
}

/// Classifier verdict (response wire format).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogVerdict {
    pub relation: LogRelation,
    pub confidence: f64,
}

pub trait LogClassifier {
    fn classify(&self, request: &LogRequest) -> Result<LogVerdict>;
}

/// Known event signatures with their transfer relation. The set ships as an
/// editable text file of `event-signature-hash: relation` lines.
#[derive(Debug, Clone)]
pub struct SignatureSet {
    map: HashMap<U256, LogRelation>,
}

/// Transfer-semantic event signatures recognized out of the box.
const DEFAULT_RELATED: &[&str] = &[
    "Transfer(address,address,uint256)",
    "Withdrawal(address,uint256)",
    "Withdraw(address,uint256)",
    "Deposit(address,uint256)",
    "Sent(address,uint256)",
    "EtherPaid(address,uint256)",
    "Payout(address,uint256)",
    "Claimed(address,uint256)",
    "Refund(address,uint256)",
];

pub fn event_topic0(signature: &str) -> U256 {
    U256::from_big_endian(&Keccak256::digest(signature.as_bytes()))
}

impl Default for SignatureSet {
    fn default() -> Self {
        let map = DEFAULT_RELATED
            .iter()
            .map(|sig| (event_topic0(sig), LogRelation::Related))
            .collect();
        Self { map }
    }
}

impl SignatureSet {
    pub fn lookup(&self, topic0: U256) -> Option<LogRelation> {
        self.map.get(&topic0).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Parse `hash: relation` lines; `#` starts a comment (whole line or
    /// trailing) and blank lines are skipped.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut map = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let (hash, relation) = line.split_once(':').ok_or_else(|| {
                Error::Invalid(format!("signature line {} missing ':'", lineno + 1))
            })?;
            let hash = hash.trim().trim_start_matches("0x");
            let bytes = crate::bytecode::parse_hex(hash)?;
            if bytes.len() != 32 {
                return Err(Error::Invalid(format!(
                    "signature line {}: hash must be 32 bytes",
                    lineno + 1
                )));
            }
            let relation: LogRelation = relation
                .trim()
                .parse()
                .map_err(Error::Invalid)?;
            map.insert(U256::from_big_endian(&bytes), relation);
        }
        Ok(Self { map })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut entries: Vec<(U256, LogRelation)> =
            self.map.iter().map(|(&k, &v)| (k, v)).collect();
        entries.sort_by_key(|&(k, _)| k);
        entries
            .into_iter()
            .map(|(hash, relation)| format!("0x{hash:064x}: {relation}\n"))
            .collect()
    }
}

/// Default classifier: signature set membership or slice overlap means
/// related; unknown constant topic0 means unrelated; statically unknown
/// topic0 means ambiguous.
pub struct HeuristicClassifier {
    pub signatures: SignatureSet,
}

impl LogClassifier for HeuristicClassifier {
    fn classify(&self, request: &LogRequest) -> Result<LogVerdict> {
        if let Some(topic0) = &request.topic0 {
            let bytes = crate::bytecode::parse_hex(topic0)?;
            let hash = U256::from_big_endian(&bytes);
            if let Some(relation) = self.signatures.lookup(hash) {
                return Ok(LogVerdict {
                    relation,
                    confidence: 1.0,
                });
            }
        }
        if request.slice_overlap {
            return Ok(LogVerdict {
                relation: LogRelation::Related,
                confidence: 0.8,
            });
        }
        if request.topic0.is_none() {
            return Ok(LogVerdict {
                relation: LogRelation::Ambiguous,
                confidence: 0.0,
            });
        }
        Ok(LogVerdict {
            relation: LogRelation::Unrelated,
            confidence: 0.6,
        })
    }
}

/// HTTP classifier speaking the [`LogRequest`]/[`LogVerdict`] JSON contract.
pub struct ExternalClassifier {
    pub url: String,
}

impl LogClassifier for ExternalClassifier {
    fn classify(&self, request: &LogRequest) -> Result<LogVerdict> {
        let mut response = ureq::post(&self.url)
            .send_json(request)
            .map_err(|e| Error::Transport(e.to_string()))?;
        let verdict: LogVerdict = response
            .body_mut()
            .read_json()
            .map_err(|e| Error::Transport(e.to_string()))?;
        Ok(verdict)
    }
}

/// Ambiguity review record, one JSONL line per ambiguous log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReviewEntry {
    pub contract: String,
    pub log_offset: usize,
    pub topics: Vec<Option<String>>,
    pub verdict: LogRelation,
    pub treated_as: LogRelation,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(topic0: Option<&str>, overlap: bool) -> LogRequest {
        LogRequest {
            topic0: topic0.map(String::from),
            topics: vec![],
            mnemonic: "LOG1".into(),
            slice_overlap: overlap,
            site: SiteSummary {
                call_offset: 0,
                selector: None,
                flags: String::new(),
            },
        }
    }

    #[test]
    fn canonical_transfer_hash_matches_public_value() {
        // keccak256("Transfer(address,address,uint256)") is a well-known constant
        let h = event_topic0("Transfer(address,address,uint256)");
        assert_eq!(
            format!("0x{h:064x}"),
            "0xddf252ad1be2c89b69c2b068fc378daa952ba7f163c4a11628f55a4df523b3ef"
        );
    }

    #[test]
    fn heuristic_verdicts() {
        let clf = HeuristicClassifier {
            signatures: SignatureSet::default(),
        };
        let transfer = format!(
            "0x{:064x}",
            event_topic0("Transfer(address,address,uint256)")
        );
        let v = clf.classify(&request(Some(&transfer), false)).unwrap();
        assert_eq!(v.relation, LogRelation::Related);

        let decoy = format!("0x{:064x}", event_topic0("Info(string)"));
        let v = clf.classify(&request(Some(&decoy), false)).unwrap();
        assert_eq!(v.relation, LogRelation::Unrelated);

        let v = clf.classify(&request(Some(&decoy), true)).unwrap();
        assert_eq!(v.relation, LogRelation::Related);

        let v = clf.classify(&request(None, false)).unwrap();
        assert_eq!(v.relation, LogRelation::Ambiguous);
    }

    #[test]
    fn signature_file_round_trip() {
        let set = SignatureSet::default();
        let text = set.to_text();
        let parsed = SignatureSet::from_text(&text).unwrap();
        assert_eq!(parsed.len(), set.len());
        let custom = "# comment\n0xddf252ad1be2c89b69c2b068fc378daa952ba7f163c4a11628f55a4df523b3ef: unrelated\n";
        let parsed = SignatureSet::from_text(custom).unwrap();
        let h = event_topic0("Transfer(address,address,uint256)");
        assert_eq!(parsed.lookup(h), Some(LogRelation::Unrelated));
    }

    #[test]
    fn shipped_signature_file_matches_builtin_set() {
        let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("../../data/transfer_event_signatures.txt");
        let shipped = SignatureSet::from_file(&path).unwrap();
        let builtin = SignatureSet::default();
        assert_eq!(shipped.len(), builtin.len());
        for sig in super::DEFAULT_RELATED {
            assert_eq!(
                shipped.lookup(event_topic0(sig)),
                Some(LogRelation::Related),
                "{sig} missing from the shipped file"
            );
        }
    }
}
