//! The LWJX mutual-authentication protocol.
//!
//! ```text
//! Reader {ID, H(ID_new), H(ID_old), K_new, K_old, M}        Tag (ID, K)
//!   Rr                       ──────────────▶
//!                            ◀──────────────  H(ID), H(K∥Rr), Rt
//!   match H(ID) against H(ID_new) / H(ID_old), verify H(K_x∥Rr)
//!   H(K_x∥Rt)                ──────────────▶
//!                                             ID ← G(ID); K ← ID ⊕ Rr ⊕ Rt
//! ```
//!
//! On a new-match the reader rotates `ID ← G(ID)`, shifts the new pair into
//! the old slot and sets `K_new ← ID ⊕ Rr ⊕ Rt`. On an old-match it only
//! bumps `M` and answers with `K_old`. Every value is `n` bits wide.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::hash::{hash, HashParams};
use crate::session::{honest_channel, Party, RejectReason, Relay, SessionVerdict};
use crate::transcript::{Sender, Transcript};

pub const DEFAULT_M_LIMIT: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LwjxParams {
    /// Common width of IDs, keys, nonces and hash outputs.
    pub width: usize,
    pub m_limit: u32,
    #[serde(default)]
    pub salt: u64,
}

impl Default for LwjxParams {
    fn default() -> Self {
        Self {
            width: 96,
            m_limit: DEFAULT_M_LIMIT,
            salt: 0,
        }
    }
}

impl LwjxParams {
    pub fn with_width(width: usize) -> Self {
        Self {
            width,
            ..Self::default()
        }
    }

    pub fn h(&self) -> HashParams {
        HashParams::h(self.width).with_salt(self.salt)
    }

    pub fn g(&self) -> HashParams {
        HashParams::g(self.width).with_salt(self.salt)
    }

    pub fn hash_id(&self, id: &BitString) -> BitString {
        hash(&self.h(), id)
    }

    pub fn keyed_hash(&self, key: &BitString, nonce: &BitString) -> BitString {
        hash(&self.h(), &key.concat(nonce))
    }

    /// `ID ⊕ Rr ⊕ Rt`.
    pub fn next_key(&self, id: &BitString, rr: &BitString, rt: &BitString) -> BitString {
        id.xor(rr).and_then(|x| x.xor(rt)).expect("uniform width")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LwjxError {
    #[error("width must be positive")]
    ZeroWidth,
    #[error("{field} has {got} bits, expected {expected}")]
    Width {
        field: &'static str,
        got: usize,
        expected: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LwjxMessage {
    Flow1 {
        rr: BitString,
    },
    Flow2 {
        hid: BitString,
        hk: BitString,
        rt: BitString,
    },
    Flow3 {
        hkt: BitString,
    },
}

impl LwjxMessage {
    pub fn flow(&self) -> u8 {
        match self {
            LwjxMessage::Flow1 { .. } => 1,
            LwjxMessage::Flow2 { .. } => 2,
            LwjxMessage::Flow3 { .. } => 3,
        }
    }

    pub fn sender(&self) -> Party {
        match self {
            LwjxMessage::Flow2 { .. } => Party::Tag,
            _ => Party::Reader,
        }
    }

    pub fn fields(&self) -> std::collections::BTreeMap<String, BitString> {
        let pairs: Vec<(&str, &BitString)> = match self {
            LwjxMessage::Flow1 { rr } => vec![("rr", rr)],
            LwjxMessage::Flow2 { hid, hk, rt } => vec![("hid", hid), ("hk", hk), ("rt", rt)],
            LwjxMessage::Flow3 { hkt } => vec![("hkt", hkt)],
        };
        pairs.into_iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    pub fn from_fields(flow: u8, fields: &std::collections::BTreeMap<String, BitString>) -> Option<Self> {
        let get = |k: &str| fields.get(k).cloned();
        Some(match flow {
            1 => LwjxMessage::Flow1 { rr: get("rr")? },
            2 => LwjxMessage::Flow2 {
                hid: get("hid")?,
                hk: get("hk")?,
                rt: get("rt")?,
            },
            3 => LwjxMessage::Flow3 { hkt: get("hkt")? },
            _ => return None,
        })
    }

    fn widths_ok(&self, n: usize) -> bool {
        self.fields().values().all(|v| v.width() == n)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LwjxSecrets {
    pub id: BitString,
    pub key: BitString,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LwjxTag {
    params: LwjxParams,
    id: BitString,
    key: BitString,
    session: Option<(BitString, BitString)>,
}

impl LwjxTag {
    pub fn new(params: LwjxParams, id: BitString, key: BitString) -> Result<Self, LwjxError> {
        check_width("id", &id, params.width)?;
        check_width("key", &key, params.width)?;
        Ok(Self {
            params,
            id,
            key,
            session: None,
        })
    }

    pub fn secrets(&self) -> LwjxSecrets {
        LwjxSecrets {
            id: self.id.clone(),
            key: self.key.clone(),
        }
    }

    pub fn set_secrets(&mut self, secrets: LwjxSecrets) -> Result<(), LwjxError> {
        check_width("id", &secrets.id, self.params.width)?;
        check_width("key", &secrets.key, self.params.width)?;
        self.id = secrets.id;
        self.key = secrets.key;
        Ok(())
    }

    pub fn params(&self) -> &LwjxParams {
        &self.params
    }

    /// Answers `Rr` with `{H(ID), H(K∥Rr), Rt}`; `(ID, K)` is not touched.
    pub fn respond<R: RngCore + ?Sized>(
        &mut self,
        flow1: &LwjxMessage,
        rng: &mut R,
    ) -> Result<LwjxMessage, RejectReason> {
        let LwjxMessage::Flow1 { rr } = flow1 else {
            return Err(RejectReason::Malformed);
        };
        if !flow1.widths_ok(self.params.width) {
            return Err(RejectReason::Malformed);
        }
        let rt = BitString::random(self.params.width, rng);
        let reply = LwjxMessage::Flow2 {
            hid: self.params.hash_id(&self.id),
            hk: self.params.keyed_hash(&self.key, rr),
            rt: rt.clone(),
        };
        self.session = Some((rr.clone(), rt));
        Ok(reply)
    }

    /// Verifies `H(K_x∥Rt)` against its own key and, if it matches, updates
    /// `ID ← G(ID)` then `K ← ID ⊕ Rr ⊕ Rt`.
    pub fn finalize(&mut self, flow3: &LwjxMessage) -> Result<(), RejectReason> {
        let LwjxMessage::Flow3 { hkt } = flow3 else {
            return Err(RejectReason::Malformed);
        };
        if !flow3.widths_ok(self.params.width) {
            return Err(RejectReason::Malformed);
        }
        let Some((rr, rt)) = self.session.take() else {
            return Err(RejectReason::NoSession);
        };
        if *hkt != self.params.keyed_hash(&self.key, &rt) {
            return Err(RejectReason::BadHkt);
        }
        self.id = hash(&self.params.g(), &self.id);
        self.key = self.params.next_key(&self.id, &rr, &rt);
        Ok(())
    }
}

fn check_width(field: &'static str, value: &BitString, expected: usize) -> Result<(), LwjxError> {
    if value.width() != expected {
        return Err(LwjxError::Width {
            field,
            got: value.width(),
            expected,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LwjxRecord {
    pub id: BitString,
    pub h_id_new: BitString,
    pub h_id_old: Option<BitString>,
    pub k_new: BitString,
    pub k_old: Option<BitString>,
    pub m: u32,
}

impl LwjxRecord {
    pub fn provision(params: &LwjxParams, id: BitString, key: BitString) -> Self {
        Self {
            h_id_new: params.hash_id(&id),
            id,
            h_id_old: None,
            k_new: key,
            k_old: None,
            m: 0,
        }
    }

    /// Whether either key pair matches the tag's `(H(ID), K)`.
    pub fn synchronized_with(&self, params: &LwjxParams, tag: &LwjxSecrets) -> bool {
        let hid = params.hash_id(&tag.id);
        let new = self.h_id_new == hid && self.k_new == tag.key;
        let old = self.h_id_old.as_ref() == Some(&hid) && self.k_old.as_ref() == Some(&tag.key);
        new || old
    }
}

/// Which key pair authenticated the tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuthBranch {
    New,
    Old,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Authenticated {
    pub record: usize,
    pub branch: AuthBranch,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LwjxReaderSession {
    rr: BitString,
}

impl LwjxReaderSession {
    pub fn rr(&self) -> &BitString {
        &self.rr
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LwjxReader {
    params: LwjxParams,
    records: Vec<LwjxRecord>,
}

impl LwjxReader {
    pub fn new(params: LwjxParams) -> Result<Self, LwjxError> {
        if params.width == 0 {
            return Err(LwjxError::ZeroWidth);
        }
        Ok(Self {
            params,
            records: Vec::new(),
        })
    }

    pub fn from_records(params: LwjxParams, records: Vec<LwjxRecord>) -> Result<Self, LwjxError> {
        let mut reader = Self::new(params)?;
        for r in &records {
            for (field, v) in [("id", &r.id), ("h_id_new", &r.h_id_new), ("k_new", &r.k_new)] {
                check_width(field, v, params.width)?;
            }
            for (field, v) in [("h_id_old", &r.h_id_old), ("k_old", &r.k_old)] {
                if let Some(v) = v {
                    check_width(field, v, params.width)?;
                }
            }
        }
        reader.records = records;
        Ok(reader)
    }

    pub fn params(&self) -> &LwjxParams {
        &self.params
    }

    pub fn records(&self) -> &[LwjxRecord] {
        &self.records
    }

    /// Adds a record for `(ID, K)` and returns the matching tag.
    pub fn provision(&mut self, id: BitString, key: BitString) -> Result<LwjxTag, LwjxError> {
        let tag = LwjxTag::new(self.params, id.clone(), key.clone())?;
        self.records.push(LwjxRecord::provision(&self.params, id, key));
        Ok(tag)
    }

    pub fn begin<R: RngCore + ?Sized>(&self, rng: &mut R) -> (LwjxReaderSession, LwjxMessage) {
        let rr = BitString::random(self.params.width, rng);
        (LwjxReaderSession { rr: rr.clone() }, LwjxMessage::Flow1 { rr })
    }

    /// Looks the tag up and answers with `H(K_x∥Rt)`.
    ///
    /// New-matches are tried before old-matches, each in provisioning order,
    /// and the first record whose key hash verifies wins. An old-match first
    /// checks `M` against the limit, then increments it, then verifies.
    pub fn authenticate(
        &mut self,
        session: &LwjxReaderSession,
        flow2: &LwjxMessage,
    ) -> Result<(LwjxMessage, Authenticated), RejectReason> {
        let LwjxMessage::Flow2 { hid, hk, rt } = flow2 else {
            return Err(RejectReason::Malformed);
        };
        let p = self.params;
        if !flow2.widths_ok(p.width) {
            return Err(RejectReason::Malformed);
        }
        let rr = &session.rr;
        let mut failure = RejectReason::NoMatch;

        for (index, record) in self.records.iter_mut().enumerate() {
            if record.h_id_new != *hid {
                continue;
            }
            if p.keyed_hash(&record.k_new, rr) != *hk {
                failure = RejectReason::BadKeyHash;
                continue;
            }
            let reply = p.keyed_hash(&record.k_new, rt);
            record.m = 0;
            record.id = hash(&p.g(), &record.id);
            record.h_id_old = Some(std::mem::replace(&mut record.h_id_new, p.hash_id(&record.id)));
            record.k_old = Some(record.k_new.clone());
            record.k_new = p.next_key(&record.id, rr, rt);
            return Ok((
                LwjxMessage::Flow3 { hkt: reply },
                Authenticated {
                    record: index,
                    branch: AuthBranch::New,
                },
            ));
        }

        for (index, record) in self.records.iter_mut().enumerate() {
            if record.h_id_old.as_ref() != Some(hid) {
                continue;
            }
            if record.m >= p.m_limit {
                failure = RejectReason::WarnLimit;
                continue;
            }
            record.m += 1;
            let k_old = record.k_old.as_ref().expect("old id hash implies old key");
            if p.keyed_hash(k_old, rr) != *hk {
                if failure != RejectReason::WarnLimit {
                    failure = RejectReason::BadKeyHash;
                }
                continue;
            }
            return Ok((
                LwjxMessage::Flow3 {
                    hkt: p.keyed_hash(k_old, rt),
                },
                Authenticated {
                    record: index,
                    branch: AuthBranch::Old,
                },
            ));
        }
        Err(failure)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LwjxSessionRun {
    pub transcript: Transcript,
    pub reader: Option<SessionVerdict>,
    pub tag: Option<SessionVerdict>,
    pub authenticated: Option<Authenticated>,
}

impl LwjxSessionRun {
    pub fn both_accept(&self) -> bool {
        self.reader.is_some_and(|v| v.is_accept()) && self.tag.is_some_and(|v| v.is_accept())
    }

    pub fn reader_accepted(&self) -> bool {
        self.reader.is_some_and(|v| v.is_accept())
    }
}

pub fn run_session<R, C>(
    tag: &mut LwjxTag,
    reader: &mut LwjxReader,
    rng: &mut R,
    session_id: u64,
    mut channel: C,
) -> LwjxSessionRun
where
    R: RngCore + ?Sized,
    C: FnMut(&LwjxMessage) -> Relay<LwjxMessage>,
{
    let mut run = LwjxSessionRun {
        transcript: Transcript::new(),
        reader: None,
        tag: None,
        authenticated: None,
    };
    let (reader_session, flow1) = reader.begin(rng);
    let Some(flow1) = relay(&mut run.transcript, session_id, &flow1, &mut channel) else {
        return run;
    };
    let flow2 = match tag.respond(&flow1, rng) {
        Ok(m) => m,
        Err(reason) => {
            decide(&mut run, session_id, 1, SessionVerdict::reject(Party::Tag, reason));
            return run;
        }
    };
    let Some(flow2) = relay(&mut run.transcript, session_id, &flow2, &mut channel) else {
        return run;
    };
    let flow3 = match reader.authenticate(&reader_session, &flow2) {
        Ok((m, auth)) => {
            run.authenticated = Some(auth);
            let label = match auth.branch {
                AuthBranch::New => "accept:new",
                AuthBranch::Old => "accept:old",
            };
            run.transcript
                .verdict_labeled(session_id, 2, Sender::Reader, label.to_string());
            run.reader = Some(SessionVerdict::accept(Party::Reader));
            m
        }
        Err(reason) => {
            decide(&mut run, session_id, 2, SessionVerdict::reject(Party::Reader, reason));
            return run;
        }
    };
    let Some(flow3) = relay(&mut run.transcript, session_id, &flow3, &mut channel) else {
        return run;
    };
    let verdict = match tag.finalize(&flow3) {
        Ok(()) => SessionVerdict::accept(Party::Tag),
        Err(reason) => SessionVerdict::reject(Party::Tag, reason),
    };
    decide(&mut run, session_id, 3, verdict);
    run
}

/// Honest run; with `drop_flow3` the last message is lost and the tag never
/// updates.
pub fn run_honest_session<R: RngCore + ?Sized>(
    tag: &mut LwjxTag,
    reader: &mut LwjxReader,
    rng: &mut R,
    session_id: u64,
    drop_flow3: bool,
) -> LwjxSessionRun {
    run_session(tag, reader, rng, session_id, |m: &LwjxMessage| {
        if drop_flow3 && m.flow() == 3 {
            Relay::Block
        } else {
            honest_channel(m)
        }
    })
}

fn decide(run: &mut LwjxSessionRun, session: u64, flow: u8, verdict: SessionVerdict) {
    run.transcript.verdict(session, flow, verdict);
    match verdict.party {
        Party::Reader => run.reader = Some(verdict),
        Party::Tag => run.tag = Some(verdict),
    }
}

fn relay<C>(transcript: &mut Transcript, session: u64, message: &LwjxMessage, channel: &mut C) -> Option<LwjxMessage>
where
    C: FnMut(&LwjxMessage) -> Relay<LwjxMessage>,
{
    let flow = message.flow();
    transcript.message(session, flow, Sender::from(message.sender()), message.fields());
    match channel(message) {
        Relay::Deliver(delivered) => {
            if delivered != *message {
                transcript.tampered(session, flow, delivered.fields());
            }
            Some(delivered)
        }
        Relay::Block => {
            transcript.blocked(session, flow);
            None
        }
    }
}
