//! The FWCFP mutual-authentication protocol.
//!
//! ```text
//! Reader                                   Tag (K, IDTA)
//!   rand1                 ──────────────▶
//!                         ◀──────────────  IDTA, H(K∥rand1), rand2
//!   IDT ∥ rand0 = E⁻¹(IDTA)
//!   IDTA' = E(IDT ∥ rand0')
//!   A = IDTA' ⊕ H(K∥rand1∥rand2)
//!   B = IDTA' ⊕ H(K∥rand2∥rand1)
//!   H(K∥rand2), A, B      ──────────────▶
//!                                          IDTA1 = A ⊕ H(K∥rand1∥rand2)
//!                                          IDTA2 = B ⊕ H(K∥rand2∥rand1)
//!                         ◀──────────────  OK   (if IDTA1 = IDTA2)
//! ```
//!
//! The reader keeps no per-tag alias: it recovers `IDT` by decrypting
//! whatever alias the tag presents. The masks are counter-mode expansions of
//! `H` to the alias width.

use std::collections::BTreeMap;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::feistel::{PermError, PermKey};
use crate::hash::{expand_mask, hash, HashParams};
use crate::session::{honest_channel, Party, RejectReason, Relay, SessionVerdict};
use crate::transcript::{Sender, Transcript};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FwcfpParams {
    pub id_bits: usize,
    pub key_bits: usize,
    pub nonce_bits: usize,
    pub hash_bits: usize,
    pub rand0_bits: usize,
    #[serde(default)]
    pub salt: u64,
}

impl Default for FwcfpParams {
    fn default() -> Self {
        Self {
            id_bits: 96,
            key_bits: 96,
            nonce_bits: 96,
            hash_bits: 96,
            rand0_bits: 32,
            salt: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FwcfpError {
    #[error("all widths must be positive")]
    ZeroWidth,
    #[error("alias width {0} (id_bits + rand0_bits) must be even")]
    OddAlias(usize),
    #[error("tag identifier {0} is already registered")]
    DuplicateIdt(BitString),
    #[error("{field} has {got} bits, expected {expected}")]
    Width {
        field: &'static str,
        got: usize,
        expected: usize,
    },
    #[error(transparent)]
    Perm(#[from] PermError),
}

impl FwcfpParams {
    /// Width of the alias `IDTA` and of the masks `A`, `B`.
    pub fn alias_bits(&self) -> usize {
        self.id_bits + self.rand0_bits
    }

    pub fn validate(&self) -> Result<(), FwcfpError> {
        let widths = [
            self.id_bits,
            self.key_bits,
            self.nonce_bits,
            self.hash_bits,
            self.rand0_bits,
        ];
        if widths.contains(&0) {
            return Err(FwcfpError::ZeroWidth);
        }
        if self.alias_bits() % 2 == 1 {
            return Err(FwcfpError::OddAlias(self.alias_bits()));
        }
        Ok(())
    }

    pub fn h(&self) -> HashParams {
        HashParams::h(self.hash_bits).with_salt(self.salt)
    }

    /// `H(K ∥ x)`.
    pub fn keyed_hash(&self, key: &BitString, x: &BitString) -> BitString {
        hash(&self.h(), &key.concat(x))
    }

    /// `H(K ∥ x ∥ y)` expanded to the alias width.
    pub fn mask(&self, key: &BitString, x: &BitString, y: &BitString) -> BitString {
        expand_mask(&self.h(), &key.concat(x).concat(y), self.alias_bits())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum FwcfpMessage {
    Flow1 {
        rand1: BitString,
    },
    Flow2 {
        alias: BitString,
        h1: BitString,
        rand2: BitString,
    },
    Flow3 {
        h2: BitString,
        a: BitString,
        b: BitString,
    },
    Flow4 {
        ok: bool,
    },
}

impl FwcfpMessage {
    pub fn flow(&self) -> u8 {
        match self {
            FwcfpMessage::Flow1 { .. } => 1,
            FwcfpMessage::Flow2 { .. } => 2,
            FwcfpMessage::Flow3 { .. } => 3,
            FwcfpMessage::Flow4 { .. } => 4,
        }
    }

    pub fn sender(&self) -> Party {
        match self {
            FwcfpMessage::Flow1 { .. } | FwcfpMessage::Flow3 { .. } => Party::Reader,
            FwcfpMessage::Flow2 { .. } | FwcfpMessage::Flow4 { .. } => Party::Tag,
        }
    }

    /// Fields as they appear in transcripts.
    pub fn fields(&self) -> BTreeMap<String, BitString> {
        let pairs: Vec<(&str, BitString)> = match self {
            FwcfpMessage::Flow1 { rand1 } => vec![("rand1", rand1.clone())],
            FwcfpMessage::Flow2 { alias, h1, rand2 } => {
                vec![("idta", alias.clone()), ("h1", h1.clone()), ("rand2", rand2.clone())]
            }
            FwcfpMessage::Flow3 { h2, a, b } => {
                vec![("h2", h2.clone()), ("a", a.clone()), ("b", b.clone())]
            }
            FwcfpMessage::Flow4 { ok } => vec![("ok", BitString::from_u64(1, u64::from(*ok)).unwrap())],
        };
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    /// Inverse of [`FwcfpMessage::fields`].
    pub fn from_fields(flow: u8, fields: &BTreeMap<String, BitString>) -> Option<Self> {
        let get = |k: &str| fields.get(k).cloned();
        Some(match flow {
            1 => FwcfpMessage::Flow1 { rand1: get("rand1")? },
            2 => FwcfpMessage::Flow2 {
                alias: get("idta")?,
                h1: get("h1")?,
                rand2: get("rand2")?,
            },
            3 => FwcfpMessage::Flow3 {
                h2: get("h2")?,
                a: get("a")?,
                b: get("b")?,
            },
            4 => FwcfpMessage::Flow4 {
                ok: get("ok")?.to_u64()? == 1,
            },
            _ => return None,
        })
    }
}

/// Secret tag memory as returned by a corruption.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FwcfpSecrets {
    pub key: BitString,
    pub alias: BitString,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct TagSession {
    rand1: BitString,
    rand2: BitString,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FwcfpTag {
    params: FwcfpParams,
    key: BitString,
    alias: BitString,
    /// Test bookkeeping only; the protocol logic never reads it.
    idt: BitString,
    session: Option<TagSession>,
}

impl FwcfpTag {
    pub fn key(&self) -> &BitString {
        &self.key
    }

    pub fn alias(&self) -> &BitString {
        &self.alias
    }

    pub fn bookkeeping_idt(&self) -> &BitString {
        &self.idt
    }

    pub fn params(&self) -> &FwcfpParams {
        &self.params
    }

    pub fn secrets(&self) -> FwcfpSecrets {
        FwcfpSecrets {
            key: self.key.clone(),
            alias: self.alias.clone(),
        }
    }

    /// Overwrites the tag memory.
    pub fn set_secrets(&mut self, secrets: FwcfpSecrets) -> Result<(), FwcfpError> {
        check_width("key", &secrets.key, self.params.key_bits)?;
        check_width("alias", &secrets.alias, self.params.alias_bits())?;
        self.key = secrets.key;
        self.alias = secrets.alias;
        Ok(())
    }

    /// Answers `rand1` with `{IDTA, H(K∥rand1), rand2}`. Only the volatile
    /// session nonces change.
    pub fn respond<R: RngCore + ?Sized>(
        &mut self,
        flow1: &FwcfpMessage,
        rng: &mut R,
    ) -> Result<FwcfpMessage, RejectReason> {
        let FwcfpMessage::Flow1 { rand1 } = flow1 else {
            return Err(RejectReason::Malformed);
        };
        if rand1.width() != self.params.nonce_bits {
            return Err(RejectReason::Malformed);
        }
        let rand2 = BitString::random(self.params.nonce_bits, rng);
        let h1 = self.params.keyed_hash(&self.key, rand1);
        self.session = Some(TagSession {
            rand1: rand1.clone(),
            rand2: rand2.clone(),
        });
        Ok(FwcfpMessage::Flow2 {
            alias: self.alias.clone(),
            h1,
            rand2,
        })
    }

    /// Checks `H(K∥rand2)`, recovers both alias candidates and stores the new
    /// alias if they agree. Any rejection leaves `(K, IDTA)` untouched.
    pub fn finalize(&mut self, flow3: &FwcfpMessage) -> Result<FwcfpMessage, RejectReason> {
        let FwcfpMessage::Flow3 { h2, a, b } = flow3 else {
            return Err(RejectReason::Malformed);
        };
        let p = self.params;
        if h2.width() != p.hash_bits || a.width() != p.alias_bits() || b.width() != p.alias_bits() {
            return Err(RejectReason::Malformed);
        }
        let Some(session) = self.session.take() else {
            return Err(RejectReason::NoSession);
        };
        if *h2 != p.keyed_hash(&self.key, &session.rand2) {
            return Err(RejectReason::BadH2);
        }
        let alias1 = a
            .xor(&p.mask(&self.key, &session.rand1, &session.rand2))
            .expect("widths checked");
        let alias2 = b
            .xor(&p.mask(&self.key, &session.rand2, &session.rand1))
            .expect("widths checked");
        if alias1 != alias2 {
            return Err(RejectReason::AliasMismatch);
        }
        self.alias = alias1;
        Ok(FwcfpMessage::Flow4 { ok: true })
    }
}

fn check_width(field: &'static str, value: &BitString, expected: usize) -> Result<(), FwcfpError> {
    if value.width() != expected {
        return Err(FwcfpError::Width {
            field,
            got: value.width(),
            expected,
        });
    }
    Ok(())
}

/// Per-session reader cache.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReaderSession {
    rand1: BitString,
    rand2: Option<BitString>,
    pending_alias: Option<BitString>,
}

impl ReaderSession {
    pub fn rand1(&self) -> &BitString {
        &self.rand1
    }

    pub fn pending_alias(&self) -> Option<&BitString> {
        self.pending_alias.as_ref()
    }
}

/// Reader and back-end database: the master key `ks` and the `IDT → K` table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FwcfpReader {
    params: FwcfpParams,
    ks: PermKey,
    registry: BTreeMap<BitString, BitString>,
}

impl FwcfpReader {
    pub fn new(params: FwcfpParams, ks: PermKey) -> Result<Self, FwcfpError> {
        params.validate()?;
        if ks.block_width() != params.alias_bits() {
            return Err(FwcfpError::Width {
                field: "ks",
                got: ks.block_width(),
                expected: params.alias_bits(),
            });
        }
        Ok(Self {
            params,
            ks,
            registry: BTreeMap::new(),
        })
    }

    pub fn with_random_key<R: RngCore + ?Sized>(params: FwcfpParams, rng: &mut R) -> Result<Self, FwcfpError> {
        params.validate()?;
        let ks = PermKey::random(params.alias_bits(), rng)?;
        Self::new(params, ks)
    }

    pub fn params(&self) -> &FwcfpParams {
        &self.params
    }

    pub fn master_key(&self) -> &PermKey {
        &self.ks
    }

    pub fn registry(&self) -> &BTreeMap<BitString, BitString> {
        &self.registry
    }

    /// Registers `(IDT, K)` and issues the tag with a fresh alias.
    pub fn register<R: RngCore + ?Sized>(
        &mut self,
        idt: BitString,
        key: BitString,
        rng: &mut R,
    ) -> Result<FwcfpTag, FwcfpError> {
        check_width("idt", &idt, self.params.id_bits)?;
        check_width("key", &key, self.params.key_bits)?;
        if self.registry.contains_key(&idt) {
            return Err(FwcfpError::DuplicateIdt(idt));
        }
        let alias = self.fresh_alias(&idt, rng);
        self.registry.insert(idt.clone(), key.clone());
        Ok(FwcfpTag {
            params: self.params,
            key,
            alias,
            idt,
            session: None,
        })
    }

    /// Inserts a registry row without issuing a tag (used when loading snapshots).
    pub fn insert_record(&mut self, idt: BitString, key: BitString) -> Result<(), FwcfpError> {
        check_width("idt", &idt, self.params.id_bits)?;
        check_width("key", &key, self.params.key_bits)?;
        if self.registry.insert(idt.clone(), key).is_some() {
            return Err(FwcfpError::DuplicateIdt(idt));
        }
        Ok(())
    }

    fn fresh_alias<R: RngCore + ?Sized>(&self, idt: &BitString, rng: &mut R) -> BitString {
        let rand0 = BitString::random(self.params.rand0_bits, rng);
        self.ks.permute(&idt.concat(&rand0)).expect("alias width")
    }

    /// Decrypts an alias into `(IDT, rand0)`.
    pub fn open_alias(&self, alias: &BitString) -> Result<(BitString, BitString), FwcfpError> {
        let plain = self.ks.invert(alias)?;
        Ok(plain.split_at(self.params.id_bits).expect("alias width"))
    }

    pub fn begin<R: RngCore + ?Sized>(&self, rng: &mut R) -> (ReaderSession, FwcfpMessage) {
        let rand1 = BitString::random(self.params.nonce_bits, rng);
        let session = ReaderSession {
            rand1: rand1.clone(),
            rand2: None,
            pending_alias: None,
        };
        (session, FwcfpMessage::Flow1 { rand1 })
    }

    /// Verifies the tag's response and produces the third flow.
    pub fn authenticate<R: RngCore + ?Sized>(
        &self,
        session: &mut ReaderSession,
        flow2: &FwcfpMessage,
        rng: &mut R,
    ) -> Result<FwcfpMessage, RejectReason> {
        let FwcfpMessage::Flow2 { alias, h1, rand2 } = flow2 else {
            return Err(RejectReason::Malformed);
        };
        let p = self.params;
        if alias.width() != p.alias_bits() || h1.width() != p.hash_bits || rand2.width() != p.nonce_bits {
            return Err(RejectReason::Malformed);
        }
        let (idt, _rand0) = self.open_alias(alias).map_err(|_| RejectReason::Malformed)?;
        let key = self.registry.get(&idt).ok_or(RejectReason::UnknownIdt)?;
        if *h1 != p.keyed_hash(key, &session.rand1) {
            return Err(RejectReason::BadH1);
        }
        let next_alias = self.fresh_alias(&idt, rng);
        let a = next_alias
            .xor(&p.mask(key, &session.rand1, rand2))
            .expect("alias width");
        let b = next_alias
            .xor(&p.mask(key, rand2, &session.rand1))
            .expect("alias width");
        let h2 = p.keyed_hash(key, rand2);
        session.rand2 = Some(rand2.clone());
        session.pending_alias = Some(next_alias);
        Ok(FwcfpMessage::Flow3 { h2, a, b })
    }
}

/// Everything observable about one driven session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionRun {
    pub transcript: Transcript,
    /// `None` when the session stopped before the reader decided.
    pub reader: Option<SessionVerdict>,
    /// `None` when the session stopped before the tag decided.
    pub tag: Option<SessionVerdict>,
    /// The alias the reader issued in flow 3, if it got that far.
    pub issued_alias: Option<BitString>,
}

impl SessionRun {
    pub fn both_accept(&self) -> bool {
        self.reader.is_some_and(|v| v.is_accept()) && self.tag.is_some_and(|v| v.is_accept())
    }
}

/// Drives one session through `channel`, which sees every message before
/// delivery and may replace or block it.
pub fn run_session<R, C>(
    tag: &mut FwcfpTag,
    reader: &FwcfpReader,
    rng: &mut R,
    session_id: u64,
    mut channel: C,
) -> SessionRun
where
    R: RngCore + ?Sized,
    C: FnMut(&FwcfpMessage) -> Relay<FwcfpMessage>,
{
    let mut run = SessionRun {
        transcript: Transcript::new(),
        reader: None,
        tag: None,
        issued_alias: None,
    };

    let (mut reader_session, flow1) = reader.begin(rng);
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

    let flow3 = match reader.authenticate(&mut reader_session, &flow2, rng) {
        Ok(m) => {
            decide(&mut run, session_id, 2, SessionVerdict::accept(Party::Reader));
            run.issued_alias = reader_session.pending_alias.clone();
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

    match tag.finalize(&flow3) {
        Ok(flow4) => {
            decide(&mut run, session_id, 3, SessionVerdict::accept(Party::Tag));
            // the reader takes no action on OK; flow 4 is only logged
            let _ = relay(&mut run.transcript, session_id, &flow4, &mut channel);
        }
        Err(reason) => decide(&mut run, session_id, 3, SessionVerdict::reject(Party::Tag, reason)),
    }
    run
}

/// One session over an honest channel.
pub fn run_honest_session<R: RngCore + ?Sized>(
    tag: &mut FwcfpTag,
    reader: &FwcfpReader,
    rng: &mut R,
    session_id: u64,
) -> SessionRun {
    run_session(tag, reader, rng, session_id, honest_channel)
}

fn decide(run: &mut SessionRun, session: u64, flow: u8, verdict: SessionVerdict) {
    run.transcript.verdict(session, flow, verdict);
    match verdict.party {
        Party::Reader => run.reader = Some(verdict),
        Party::Tag => run.tag = Some(verdict),
    }
}

fn relay<C>(transcript: &mut Transcript, session: u64, message: &FwcfpMessage, channel: &mut C) -> Option<FwcfpMessage>
where
    C: FnMut(&FwcfpMessage) -> Relay<FwcfpMessage>,
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamRng;
    use crate::session::Outcome;

    fn small() -> FwcfpParams {
        FwcfpParams {
            id_bits: 24,
            key_bits: 32,
            nonce_bits: 16,
            hash_bits: 8,
            rand0_bits: 8,
            salt: 0,
        }
    }

    fn setup(params: FwcfpParams, seed: u64) -> (FwcfpReader, FwcfpTag, StreamRng) {
        let mut rng = StreamRng::new(seed, 0);
        let mut reader = FwcfpReader::with_random_key(params, &mut rng).unwrap();
        let idt = BitString::random(params.id_bits, &mut rng);
        let key = BitString::random(params.key_bits, &mut rng);
        let tag = reader.register(idt, key, &mut rng).unwrap();
        (reader, tag, rng)
    }

    #[test]
    fn begin_draws_fresh_nonces() {
        let (reader, _, _) = setup(FwcfpParams::default(), 7);
        let mut rng = StreamRng::new(7, 1);
        let (_, m1) = reader.begin(&mut rng);
        let (_, m2) = reader.begin(&mut rng);
        assert_ne!(m1, m2);
        let FwcfpMessage::Flow1 { rand1 } = &m1 else { panic!() };
        assert_eq!(rand1.width(), 96);
        let (_, again) = reader.begin(&mut StreamRng::new(7, 1));
        assert_eq!(again, m1);
    }

    #[test]
    fn respond_fields() {
        let (reader, mut tag, mut rng) = setup(FwcfpParams::default(), 1);
        let before = tag.secrets();
        let (_, flow1) = reader.begin(&mut rng);
        let FwcfpMessage::Flow2 { alias, h1, rand2 } = tag.respond(&flow1, &mut rng).unwrap() else {
            panic!()
        };
        let FwcfpMessage::Flow1 { rand1 } = flow1 else { panic!() };
        assert_eq!(alias, before.alias);
        let reference = hash(&HashParams::h(96), &before.key.concat(&rand1));
        assert_eq!(h1, reference);
        assert_eq!(rand2.width(), 96);
        assert_eq!(tag.secrets(), before);
    }

    #[test]
    fn h1_differs_across_nonces() {
        let params = FwcfpParams {
            hash_bits: 64,
            ..FwcfpParams::default()
        };
        let (reader, mut tag, mut rng) = setup(params, 2);
        let mut seen = std::collections::HashSet::new();
        for _ in 0..1000 {
            let (_, flow1) = reader.begin(&mut rng);
            let FwcfpMessage::Flow2 { h1, .. } = tag.respond(&flow1, &mut rng).unwrap() else {
                panic!()
            };
            seen.insert(h1);
        }
        assert_eq!(seen.len(), 1000);
    }

    #[test]
    fn masks_cancel_in_honest_flow3() {
        let (reader, mut tag, mut rng) = setup(FwcfpParams::default(), 3);
        let (mut rs, flow1) = reader.begin(&mut rng);
        let flow2 = tag.respond(&flow1, &mut rng).unwrap();
        let FwcfpMessage::Flow3 { a, b, .. } = reader.authenticate(&mut rs, &flow2, &mut rng).unwrap() else {
            panic!()
        };
        let FwcfpMessage::Flow2 { rand2, .. } = &flow2 else {
            panic!()
        };
        let p = reader.params();
        let m1 = p.mask(tag.key(), rs.rand1(), rand2);
        let m2 = p.mask(tag.key(), rand2, rs.rand1());
        assert_eq!(a.xor(&b).unwrap(), m1.xor(&m2).unwrap());
    }

    #[test]
    fn random_h1_is_rejected() {
        let (reader, mut tag, mut rng) = setup(small(), 4);
        let mut rejected = 0;
        for _ in 0..2000 {
            let (mut rs, flow1) = reader.begin(&mut rng);
            let FwcfpMessage::Flow2 { alias, rand2, .. } = tag.respond(&flow1, &mut rng).unwrap() else {
                panic!()
            };
            let forged = FwcfpMessage::Flow2 {
                alias,
                h1: BitString::random(8, &mut rng),
                rand2,
            };
            match reader.authenticate(&mut rs, &forged, &mut rng) {
                Err(RejectReason::BadH1) => rejected += 1,
                Ok(_) => {}
                Err(other) => panic!("{other}"),
            }
        }
        // expected 2000 * (1 - 2^-8) = 1992.2, sd ~ 2.8
        assert!((1980..=2000).contains(&rejected), "{rejected}");
    }

    #[test]
    fn unknown_alias_is_rejected() {
        let (reader, _, mut rng) = setup(FwcfpParams::default(), 5);
        let (mut rs, _) = reader.begin(&mut rng);
        let forged = FwcfpMessage::Flow2 {
            alias: BitString::random(128, &mut rng),
            h1: BitString::random(96, &mut rng),
            rand2: BitString::random(96, &mut rng),
        };
        assert_eq!(
            reader.authenticate(&mut rs, &forged, &mut rng),
            Err(RejectReason::UnknownIdt)
        );
    }

    #[test]
    fn honest_flow3_rotates_alias_to_same_idt() {
        let (reader, mut tag, mut rng) = setup(FwcfpParams::default(), 6);
        let old = tag.alias().clone();
        let run = run_honest_session(&mut tag, &reader, &mut rng, 0);
        assert!(run.both_accept());
        assert_ne!(*tag.alias(), old);
        assert_eq!(Some(tag.alias()), run.issued_alias.as_ref());
        let (idt, _) = reader.open_alias(tag.alias()).unwrap();
        assert_eq!(&idt, tag.bookkeeping_idt());
        assert_eq!(run.transcript.messages().count(), 4);
    }

    fn flow3_for(tag: &mut FwcfpTag, reader: &FwcfpReader, rng: &mut StreamRng) -> FwcfpMessage {
        let (mut rs, flow1) = reader.begin(rng);
        let flow2 = tag.respond(&flow1, rng).unwrap();
        reader.authenticate(&mut rs, &flow2, rng).unwrap()
    }

    #[test]
    fn corrupted_h2_rejected_without_mutation() {
        let (reader, mut tag, mut rng) = setup(FwcfpParams::default(), 8);
        let before = tag.secrets();
        let FwcfpMessage::Flow3 { mut h2, a, b } = flow3_for(&mut tag, &reader, &mut rng) else {
            panic!()
        };
        h2.flip_bit(0);
        let got = tag.finalize(&FwcfpMessage::Flow3 { h2, a, b });
        assert_eq!(got, Err(RejectReason::BadH2));
        assert_eq!(tag.secrets(), before);
    }

    #[test]
    fn corrupted_a_alone_is_alias_mismatch() {
        let (reader, mut tag, mut rng) = setup(FwcfpParams::default(), 9);
        for _ in 0..50 {
            let before = tag.secrets();
            let FwcfpMessage::Flow3 { h2, a, b } = flow3_for(&mut tag, &reader, &mut rng) else {
                panic!()
            };
            let noise = BitString::random_nonzero(128, &mut rng);
            let a = a.xor(&noise).unwrap();
            let got = tag.finalize(&FwcfpMessage::Flow3 { h2, a, b });
            assert_eq!(got, Err(RejectReason::AliasMismatch));
            assert_eq!(tag.secrets(), before);
        }
    }

    #[test]
    fn finalize_without_session() {
        let (_, mut tag, mut rng) = setup(FwcfpParams::default(), 10);
        let flow3 = FwcfpMessage::Flow3 {
            h2: BitString::random(96, &mut rng),
            a: BitString::random(128, &mut rng),
            b: BitString::random(128, &mut rng),
        };
        assert_eq!(tag.finalize(&flow3), Err(RejectReason::NoSession));
    }

    #[test]
    fn malformed_widths_are_rejected() {
        let (reader, mut tag, mut rng) = setup(FwcfpParams::default(), 11);
        let bad = FwcfpMessage::Flow1 {
            rand1: BitString::zeros(8),
        };
        assert_eq!(tag.respond(&bad, &mut rng), Err(RejectReason::Malformed));
        let (mut rs, _) = reader.begin(&mut rng);
        assert_eq!(
            reader.authenticate(&mut rs, &bad, &mut rng),
            Err(RejectReason::Malformed)
        );
    }

    #[test]
    fn consecutive_sessions_stay_consistent() {
        let (reader, mut tag, mut rng) = setup(FwcfpParams::default(), 12);
        for i in 0..200 {
            let run = run_honest_session(&mut tag, &reader, &mut rng, i);
            assert!(run.both_accept(), "session {i}");
            let (idt, _) = reader.open_alias(tag.alias()).unwrap();
            assert_eq!(&idt, tag.bookkeeping_idt());
        }
    }

    #[test]
    fn dropping_flow4_is_harmless() {
        let (reader, mut tag, mut rng) = setup(FwcfpParams::default(), 13);
        let run = run_session(&mut tag, &reader, &mut rng, 0, |m: &FwcfpMessage| {
            if m.flow() == 4 {
                Relay::Block
            } else {
                Relay::Deliver(m.clone())
            }
        });
        assert!(run.both_accept());
        assert!(run_honest_session(&mut tag, &reader, &mut rng, 1).both_accept());
    }

    #[test]
    fn unregistered_tag_is_rejected() {
        let (reader, _, mut rng) = setup(FwcfpParams::default(), 14);
        let mut other = FwcfpReader::with_random_key(FwcfpParams::default(), &mut rng).unwrap();
        let mut stranger = other
            .register(
                BitString::random(96, &mut rng),
                BitString::random(96, &mut rng),
                &mut rng,
            )
            .unwrap();
        let run = run_honest_session(&mut stranger, &reader, &mut rng, 0);
        assert_eq!(run.reader.unwrap().outcome, Outcome::Reject(RejectReason::UnknownIdt));
        assert!(run.tag.is_none());
    }

    #[test]
    fn duplicate_registration_fails() {
        let (mut reader, tag, mut rng) = setup(small(), 15);
        let idt = tag.bookkeeping_idt().clone();
        assert!(matches!(
            reader.register(idt, BitString::random(32, &mut rng), &mut rng),
            Err(FwcfpError::DuplicateIdt(_))
        ));
    }

    #[test]
    fn message_fields_round_trip() {
        let (reader, mut tag, mut rng) = setup(small(), 16);
        let (mut rs, f1) = reader.begin(&mut rng);
        let f2 = tag.respond(&f1, &mut rng).unwrap();
        let f3 = reader.authenticate(&mut rs, &f2, &mut rng).unwrap();
        let f4 = tag.finalize(&f3).unwrap();
        for m in [f1, f2, f3, f4] {
            assert_eq!(FwcfpMessage::from_fields(m.flow(), &m.fields()), Some(m));
        }
    }
}
