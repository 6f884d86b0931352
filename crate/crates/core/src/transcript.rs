//! Ordered record of protocol flows and channel events.
//!
//! Serialized as JSON lines, one [`TranscriptEntry`] per line, every field
//! value in canonical bit-string text. A file may start with a
//! [`TranscriptHeader`] line naming the protocol.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::hash::HASH_ID;
use crate::session::{Outcome, Party, ProtocolKind, SessionVerdict};

pub const TRANSCRIPT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sender {
    Reader,
    Tag,
    Adversary,
    /// Secrets disclosed for fixture verification; never part of a real run.
    Disclosure,
}

impl From<Party> for Sender {
    fn from(p: Party) -> Self {
        match p {
            Party::Reader => Sender::Reader,
            Party::Tag => Sender::Tag,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryKind {
    #[default]
    Message,
    /// The adversary replaced the preceding message; fields are what was delivered.
    Tampered,
    Blocked,
    Verdict,
}

fn is_message(kind: &EntryKind) -> bool {
    *kind == EntryKind::Message
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub session: u64,
    pub flow: u8,
    pub sender: Sender,
    #[serde(default, skip_serializing_if = "is_message")]
    pub kind: EntryKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<String>,
    #[serde(default)]
    pub fields: BTreeMap<String, BitString>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptHeader {
    pub protocol: ProtocolKind,
    pub hash: String,
    pub version: u32,
}

impl TranscriptHeader {
    pub fn new(protocol: ProtocolKind) -> Self {
        Self {
            protocol,
            hash: HASH_ID.to_string(),
            version: TRANSCRIPT_VERSION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
enum Line {
    Header(TranscriptHeader),
    Entry(TranscriptEntry),
}

#[derive(Debug, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct TranscriptParseError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, entry: TranscriptEntry) {
        self.entries.push(entry);
    }

    pub fn extend(&mut self, other: Transcript) {
        self.entries.extend(other.entries);
    }

    pub fn message(&mut self, session: u64, flow: u8, sender: Sender, fields: BTreeMap<String, BitString>) {
        self.push(TranscriptEntry {
            session,
            flow,
            sender,
            kind: EntryKind::Message,
            outcome: None,
            fields,
        });
    }

    pub fn tampered(&mut self, session: u64, flow: u8, fields: BTreeMap<String, BitString>) {
        self.push(TranscriptEntry {
            session,
            flow,
            sender: Sender::Adversary,
            kind: EntryKind::Tampered,
            outcome: None,
            fields,
        });
    }

    pub fn blocked(&mut self, session: u64, flow: u8) {
        self.push(TranscriptEntry {
            session,
            flow,
            sender: Sender::Adversary,
            kind: EntryKind::Blocked,
            outcome: None,
            fields: BTreeMap::new(),
        });
    }

    pub fn verdict(&mut self, session: u64, flow: u8, verdict: SessionVerdict) {
        self.push(TranscriptEntry {
            session,
            flow,
            sender: verdict.party.into(),
            kind: EntryKind::Verdict,
            outcome: Some(verdict.outcome.label()),
            fields: BTreeMap::new(),
        });
    }

    /// Verdict entry with a free-form outcome label such as `accept:old`.
    pub fn verdict_labeled(&mut self, session: u64, flow: u8, sender: Sender, label: String) {
        self.push(TranscriptEntry {
            session,
            flow,
            sender,
            kind: EntryKind::Verdict,
            outcome: Some(label),
            fields: BTreeMap::new(),
        });
    }

    /// Message entries only, in order.
    pub fn messages(&self) -> impl Iterator<Item = &TranscriptEntry> {
        self.entries.iter().filter(|e| e.kind == EntryKind::Message)
    }

    /// Field `name` of the honest message for `flow` in `session`.
    pub fn field(&self, session: u64, flow: u8, name: &str) -> Option<&BitString> {
        self.messages()
            .find(|e| e.session == session && e.flow == flow)
            .and_then(|e| e.fields.get(name))
    }

    /// Field of the first message for `flow`, any session.
    pub fn first_field(&self, flow: u8, name: &str) -> Option<&BitString> {
        self.messages()
            .find(|e| e.flow == flow)
            .and_then(|e| e.fields.get(name))
    }

    pub fn outcomes(&self) -> impl Iterator<Item = (Sender, &str)> {
        self.entries
            .iter()
            .filter(|e| e.kind == EntryKind::Verdict)
            .filter_map(|e| e.outcome.as_deref().map(|o| (e.sender, o)))
    }

    pub fn accepted_by(&self, sender: Sender) -> bool {
        let accept = Outcome::Accept.label();
        self.outcomes().any(|(s, o)| s == sender && o.starts_with(&accept))
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for entry in &self.entries {
            out.push_str(&serde_json::to_string(entry).expect("entry serializes"));
            out.push('\n');
        }
        out
    }

    pub fn to_jsonl_with_header(&self, header: &TranscriptHeader) -> String {
        let mut out = serde_json::to_string(header).expect("header serializes");
        out.push('\n');
        out.push_str(&self.to_jsonl());
        out
    }

    /// Parses JSON lines. Blank lines are skipped; line numbers are 1-based.
    pub fn from_jsonl(text: &str) -> Result<(Option<TranscriptHeader>, Self), TranscriptParseError> {
        let mut header = None;
        let mut transcript = Transcript::new();
        for (i, raw) in text.lines().enumerate() {
            if raw.trim().is_empty() {
                continue;
            }
            let line: Line = serde_json::from_str(raw).map_err(|e| TranscriptParseError {
                line: i + 1,
                message: e.to_string(),
            })?;
            match line {
                Line::Header(h) if header.is_none() && transcript.entries.is_empty() => header = Some(h),
                Line::Header(_) => {
                    return Err(TranscriptParseError {
                        line: i + 1,
                        message: "header must be the first line".to_string(),
                    })
                }
                Line::Entry(e) => transcript.push(e),
            }
        }
        Ok((header, transcript))
    }
}
