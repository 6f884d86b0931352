//! Types shared by both protocol state machines.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolKind {
    Fwcfp,
    Lwjx,
}

impl ProtocolKind {
    /// Number of protocol flows in one complete session.
    pub fn flow_count(self) -> usize {
        match self {
            ProtocolKind::Fwcfp => 4,
            ProtocolKind::Lwjx => 3,
        }
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProtocolKind::Fwcfp => "fwcfp",
            ProtocolKind::Lwjx => "lwjx",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Party {
    Tag,
    Reader,
}

/// Internal reason for a rejection. On the wire every rejection looks the
/// same; the reason is only visible in transcripts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    UnknownIdt,
    BadH1,
    BadH2,
    AliasMismatch,
    NoMatch,
    BadKeyHash,
    WarnLimit,
    BadHkt,
    NoSession,
    Malformed,
}

impl RejectReason {
    pub fn code(self) -> &'static str {
        match self {
            RejectReason::UnknownIdt => "unknown-idt",
            RejectReason::BadH1 => "bad-h1",
            RejectReason::BadH2 => "bad-h2",
            RejectReason::AliasMismatch => "alias-mismatch",
            RejectReason::NoMatch => "no-match",
            RejectReason::BadKeyHash => "bad-key-hash",
            RejectReason::WarnLimit => "warn-limit",
            RejectReason::BadHkt => "bad-hkt",
            RejectReason::NoSession => "no-session",
            RejectReason::Malformed => "malformed",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Accept,
    Reject(RejectReason),
}

impl Outcome {
    pub fn is_accept(self) -> bool {
        matches!(self, Outcome::Accept)
    }

    pub fn label(self) -> String {
        match self {
            Outcome::Accept => "accept".to_string(),
            Outcome::Reject(r) => format!("reject:{r}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionVerdict {
    pub party: Party,
    pub outcome: Outcome,
}

impl SessionVerdict {
    pub fn accept(party: Party) -> Self {
        Self {
            party,
            outcome: Outcome::Accept,
        }
    }

    pub fn reject(party: Party, reason: RejectReason) -> Self {
        Self {
            party,
            outcome: Outcome::Reject(reason),
        }
    }

    pub fn is_accept(&self) -> bool {
        self.outcome.is_accept()
    }
}

/// What the channel does with an in-flight message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Relay<M> {
    Deliver(M),
    Block,
}

/// A channel that forwards every message untouched.
pub fn honest_channel<M: Clone>(message: &M) -> Relay<M> {
    Relay::Deliver(message.clone())
}
