//! Offline verification of transcripts that carry disclosed secrets.
//!
//! Every derivable field is recomputed from the disclosure entry and the
//! nonces in the transcript, and the parties' state is rolled forward
//! session by session.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::bits::BitString;
use crate::feistel::PermKey;
use crate::fwcfp::FwcfpParams;
use crate::hash::{hash, HASH_ID};
use crate::lwjx::LwjxParams;
use crate::session::ProtocolKind;
use crate::transcript::{EntryKind, Sender, Transcript, TranscriptEntry, TranscriptParseError, TRANSCRIPT_VERSION};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", rename_all = "lowercase")]
pub enum ReplayVerdict {
    Pass {
        protocol: ProtocolKind,
        sessions: u64,
        fields_checked: u64,
    },
    Fail {
        session: u64,
        flow: u8,
        field: String,
        detail: String,
    },
}

impl ReplayVerdict {
    pub fn is_pass(&self) -> bool {
        matches!(self, ReplayVerdict::Pass { .. })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error(transparent)]
    Parse(#[from] TranscriptParseError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("transcript has no header line")]
    NoHeader,
    #[error("unsupported transcript version {0}")]
    Version(u32),
    #[error("unsupported hash {0}")]
    Hash(String),
    #[error("transcript discloses no secrets to verify against")]
    NoDisclosure,
    #[error("disclosure lacks {0}")]
    DisclosureField(&'static str),
    #[error("disclosed {0} is invalid")]
    DisclosureInvalid(&'static str),
}

pub fn replay_file(path: &Path) -> Result<ReplayVerdict, ReplayError> {
    let text = std::fs::read_to_string(path).map_err(|source| ReplayError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    replay_transcript(&text)
}

pub fn replay_transcript(text: &str) -> Result<ReplayVerdict, ReplayError> {
    let (header, transcript) = Transcript::from_jsonl(text)?;
    let header = header.ok_or(ReplayError::NoHeader)?;
    if header.version != TRANSCRIPT_VERSION {
        return Err(ReplayError::Version(header.version));
    }
    if header.hash != HASH_ID {
        return Err(ReplayError::Hash(header.hash));
    }
    let disclosed = transcript
        .entries
        .iter()
        .find(|e| e.sender == Sender::Disclosure)
        .ok_or(ReplayError::NoDisclosure)?;
    let sessions = group(&transcript);
    let mut checker = Checker::default();
    let result = match header.protocol {
        ProtocolKind::Fwcfp => FwcfpReplay::new(&disclosed.fields)?.run(&sessions, &mut checker),
        ProtocolKind::Lwjx => LwjxReplay::new(&disclosed.fields)?.run(&sessions, &mut checker),
    };
    Ok(match result {
        Ok(()) => ReplayVerdict::Pass {
            protocol: header.protocol,
            sessions: sessions.len() as u64,
            fields_checked: checker.checked,
        },
        Err(m) => ReplayVerdict::Fail {
            session: m.session,
            flow: m.flow,
            field: m.field,
            detail: m.detail,
        },
    })
}

fn disclosed<'a>(fields: &'a BTreeMap<String, BitString>, name: &'static str) -> Result<&'a BitString, ReplayError> {
    fields.get(name).ok_or(ReplayError::DisclosureField(name))
}

fn disclosed_salt(fields: &BTreeMap<String, BitString>) -> Result<u64, ReplayError> {
    disclosed(fields, "salt")?
        .to_u64()
        .ok_or(ReplayError::DisclosureInvalid("salt"))
}

/// Protocol entries of one session, in order.
struct SessionView<'a> {
    id: u64,
    entries: Vec<&'a TranscriptEntry>,
}

impl SessionView<'_> {
    fn sent(&self, flow: u8) -> Option<&BTreeMap<String, BitString>> {
        self.entries
            .iter()
            .find(|e| e.flow == flow && e.kind == EntryKind::Message)
            .map(|e| &e.fields)
    }

    /// What the receiver got: the replacement if tampered, nothing if blocked.
    fn delivered(&self, flow: u8) -> Option<&BTreeMap<String, BitString>> {
        let mut fields = self.sent(flow)?;
        for e in self.entries.iter().filter(|e| e.flow == flow) {
            match e.kind {
                EntryKind::Tampered => fields = &e.fields,
                EntryKind::Blocked => return None,
                _ => {}
            }
        }
        Some(fields)
    }

    fn verdict(&self, sender: Sender) -> Option<&str> {
        self.entries
            .iter()
            .find(|e| e.kind == EntryKind::Verdict && e.sender == sender)
            .and_then(|e| e.outcome.as_deref())
    }
}

fn group(transcript: &Transcript) -> Vec<SessionView<'_>> {
    let mut order: Vec<SessionView<'_>> = Vec::new();
    for e in transcript.entries.iter().filter(|e| e.sender != Sender::Disclosure) {
        match order.iter_mut().find(|s| s.id == e.session) {
            Some(s) => s.entries.push(e),
            None => order.push(SessionView {
                id: e.session,
                entries: vec![e],
            }),
        }
    }
    order
}

struct Mismatch {
    session: u64,
    flow: u8,
    field: String,
    detail: String,
}

#[derive(Default)]
struct Checker {
    checked: u64,
}

fn field<'a>(
    session: u64,
    flow: u8,
    fields: &'a BTreeMap<String, BitString>,
    name: &str,
) -> Result<&'a BitString, Mismatch> {
    fields.get(name).ok_or_else(|| Mismatch {
        session,
        flow,
        field: name.to_string(),
        detail: "missing".to_string(),
    })
}

impl Checker {
    fn expect(
        &mut self,
        session: u64,
        flow: u8,
        name: &str,
        recorded: &BitString,
        expected: &BitString,
    ) -> Result<(), Mismatch> {
        self.checked += 1;
        if recorded == expected {
            return Ok(());
        }
        Err(Mismatch {
            session,
            flow,
            field: name.to_string(),
            detail: format!("recorded {recorded}, derived {expected}"),
        })
    }

    fn expect_verdict(
        &mut self,
        session: &SessionView<'_>,
        flow: u8,
        sender: Sender,
        accept: bool,
    ) -> Result<(), Mismatch> {
        self.checked += 1;
        let recorded = session.verdict(sender);
        if recorded.is_some_and(|v| v.starts_with("accept") == accept) {
            return Ok(());
        }
        Err(Mismatch {
            session: session.id,
            flow,
            field: "verdict".to_string(),
            detail: format!(
                "recorded {}, derived {}",
                recorded.unwrap_or("none"),
                if accept { "accept" } else { "reject" }
            ),
        })
    }
}

struct FwcfpReplay {
    ks: BitString,
    key: BitString,
    idt: BitString,
    alias: Option<BitString>,
    salt: u64,
}

impl FwcfpReplay {
    fn new(fields: &BTreeMap<String, BitString>) -> Result<Self, ReplayError> {
        Ok(Self {
            ks: disclosed(fields, "ks")?.clone(),
            key: disclosed(fields, "key")?.clone(),
            idt: disclosed(fields, "idt")?.clone(),
            alias: fields.get("alias").cloned(),
            salt: disclosed_salt(fields)?,
        })
    }

    fn run(&mut self, sessions: &[SessionView<'_>], c: &mut Checker) -> Result<(), Mismatch> {
        for s in sessions {
            self.session(s, c)?;
        }
        Ok(())
    }

    fn session(&mut self, s: &SessionView<'_>, c: &mut Checker) -> Result<(), Mismatch> {
        let id = s.id;
        let Some(flow1) = s.sent(1) else { return Ok(()) };
        let rand1 = field(id, 1, flow1, "rand1")?;
        let Some(tag_rand1) = s.delivered(1).map(|f| field(id, 1, f, "rand1")).transpose()? else {
            return Ok(());
        };
        let Some(flow2) = s.sent(2) else { return Ok(()) };
        let idta = field(id, 2, flow2, "idta")?;
        let h1 = field(id, 2, flow2, "h1")?;
        let tag_rand2 = field(id, 2, flow2, "rand2")?;
        let alias_bits = idta.width();
        let id_bits = self.idt.width();
        let params = FwcfpParams {
            id_bits,
            key_bits: self.key.width(),
            nonce_bits: rand1.width(),
            hash_bits: h1.width(),
            rand0_bits: alias_bits.saturating_sub(id_bits),
            salt: self.salt,
        };
        let ks = PermKey::new(self.ks.clone(), alias_bits).map_err(|e| Mismatch {
            session: id,
            flow: 2,
            field: "idta".to_string(),
            detail: e.to_string(),
        })?;
        let open = |alias: &BitString| ks.invert(alias).ok().map(|p| p.prefix(id_bits).expect("alias width"));

        if let Some(alias) = &self.alias {
            c.expect(id, 2, "idta", idta, alias)?;
        } else {
            c.checked += 1;
            if open(idta).as_ref() != Some(&self.idt) {
                return Err(fail(id, 2, "idta", "does not decrypt to the disclosed IDT"));
            }
        }
        c.expect(id, 2, "h1", h1, &params.keyed_hash(&self.key, tag_rand1))?;

        let Some(at_reader) = s.delivered(2) else { return Ok(()) };
        let reader_rand2 = field(id, 2, at_reader, "rand2")?;
        let reader_ok = open(field(id, 2, at_reader, "idta")?).as_ref() == Some(&self.idt)
            && *field(id, 2, at_reader, "h1")? == params.keyed_hash(&self.key, rand1);
        c.expect_verdict(s, 2, Sender::Reader, reader_ok)?;
        let Some(flow3) = s.sent(3) else { return Ok(()) };
        let h2 = field(id, 3, flow3, "h2")?;
        c.expect(id, 3, "h2", h2, &params.keyed_hash(&self.key, reader_rand2))?;
        let issued_a = field(id, 3, flow3, "a")?
            .xor(&params.mask(&self.key, rand1, reader_rand2))
            .map_err(|_| fail(id, 3, "a", "wrong width"))?;
        let issued_b = field(id, 3, flow3, "b")?
            .xor(&params.mask(&self.key, reader_rand2, rand1))
            .map_err(|_| fail(id, 3, "b", "wrong width"))?;
        c.checked += 2;
        if open(&issued_a).as_ref() != Some(&self.idt) {
            return Err(fail(id, 3, "a", "issued alias does not decrypt to the disclosed IDT"));
        }
        if issued_b != issued_a {
            return Err(fail(id, 3, "b", "carries a different alias than a"));
        }

        let Some(at_tag) = s.delivered(3) else { return Ok(()) };
        let alias1 = field(id, 3, at_tag, "a")?.xor(&params.mask(&self.key, tag_rand1, tag_rand2));
        let alias2 = field(id, 3, at_tag, "b")?.xor(&params.mask(&self.key, tag_rand2, tag_rand1));
        let tag_ok = *field(id, 3, at_tag, "h2")? == params.keyed_hash(&self.key, tag_rand2)
            && alias1.is_ok()
            && alias1 == alias2;
        c.expect_verdict(s, 3, Sender::Tag, tag_ok)?;
        if tag_ok {
            self.alias = alias1.ok();
            if let Some(flow4) = s.sent(4) {
                let ok = field(id, 4, flow4, "ok")?;
                c.expect(id, 4, "ok", ok, &BitString::from_u64(1, 1).expect("1 bit"))?;
            }
        }
        Ok(())
    }
}

fn fail(session: u64, flow: u8, field: &str, detail: &str) -> Mismatch {
    Mismatch {
        session,
        flow,
        field: field.to_string(),
        detail: detail.to_string(),
    }
}

struct LwjxReplay {
    params: LwjxParams,
    tag_id: BitString,
    tag_key: BitString,
    reader_id: BitString,
    k_new: BitString,
    old: Option<(BitString, BitString)>,
}

impl LwjxReplay {
    fn new(fields: &BTreeMap<String, BitString>) -> Result<Self, ReplayError> {
        let id = disclosed(fields, "id")?.clone();
        let key = disclosed(fields, "key")?.clone();
        if key.width() != id.width() {
            return Err(ReplayError::DisclosureInvalid("key"));
        }
        let params = LwjxParams {
            salt: disclosed_salt(fields)?,
            ..LwjxParams::with_width(id.width())
        };
        Ok(Self {
            params,
            tag_id: id.clone(),
            tag_key: key.clone(),
            reader_id: id,
            k_new: key,
            old: None,
        })
    }

    fn run(&mut self, sessions: &[SessionView<'_>], c: &mut Checker) -> Result<(), Mismatch> {
        for s in sessions {
            self.session(s, c)?;
        }
        Ok(())
    }

    fn session(&mut self, s: &SessionView<'_>, c: &mut Checker) -> Result<(), Mismatch> {
        let (id, p) = (s.id, self.params);
        let Some(flow1) = s.sent(1) else { return Ok(()) };
        let rr = field(id, 1, flow1, "rr")?;
        let Some(tag_rr) = s.delivered(1).map(|f| field(id, 1, f, "rr")).transpose()? else {
            return Ok(());
        };
        let Some(flow2) = s.sent(2) else { return Ok(()) };
        c.expect(id, 2, "hid", field(id, 2, flow2, "hid")?, &p.hash_id(&self.tag_id))?;
        c.expect(
            id,
            2,
            "hk",
            field(id, 2, flow2, "hk")?,
            &p.keyed_hash(&self.tag_key, tag_rr),
        )?;
        let tag_rt = field(id, 2, flow2, "rt")?;

        let Some(at_reader) = s.delivered(2) else { return Ok(()) };
        let hid = field(id, 2, at_reader, "hid")?;
        let hk = field(id, 2, at_reader, "hk")?;
        let rt = field(id, 2, at_reader, "rt")?;
        let new_match = *hid == p.hash_id(&self.reader_id) && *hk == p.keyed_hash(&self.k_new, rr);
        let old_key = self
            .old
            .as_ref()
            .filter(|(h_old, k_old)| hid == h_old && *hk == p.keyed_hash(k_old, rr))
            .map(|(_, k)| k.clone());
        let Some(flow3) = s.sent(3) else {
            // the reader may still refuse a valid old-key match at its limit
            if new_match {
                return Err(fail(id, 2, "verdict", "reader rejected a valid new-key response"));
            }
            return Ok(());
        };
        let hkt = field(id, 3, flow3, "hkt")?;
        if new_match {
            c.expect(id, 3, "hkt", hkt, &p.keyed_hash(&self.k_new, rt))?;
            let next_id = hash(&p.g(), &self.reader_id);
            let previous = std::mem::replace(&mut self.reader_id, next_id);
            let k_old = std::mem::replace(&mut self.k_new, p.next_key(&self.reader_id, rr, rt));
            self.old = Some((p.hash_id(&previous), k_old));
        } else if let Some(k_old) = old_key {
            c.expect(id, 3, "hkt", hkt, &p.keyed_hash(&k_old, rt))?;
        } else {
            return Err(fail(id, 2, "hid", "matches neither key pair"));
        }

        let Some(at_tag) = s.delivered(3) else { return Ok(()) };
        let tag_ok = *field(id, 3, at_tag, "hkt")? == p.keyed_hash(&self.tag_key, tag_rt);
        c.expect_verdict(s, 3, Sender::Tag, tag_ok)?;
        if tag_ok {
            self.tag_id = hash(&p.g(), &self.tag_id);
            self.tag_key = p.next_key(&self.tag_id, tag_rr, tag_rt);
        }
        Ok(())
    }
}
