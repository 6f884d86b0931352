use std::collections::BTreeMap;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::fwcfp::{self, FwcfpMessage, FwcfpReader, FwcfpTag, SessionRun};
use crate::session::Relay;
use crate::transcript::Transcript;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DesyncError {
    #[error("mask must be nonzero")]
    ZeroMask,
    #[error("mask is {got} bits, alias is {expected}")]
    Width { got: usize, expected: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesyncOutcome {
    pub mask: BitString,
    pub tampered_session: Transcript,
    pub tag_accepted: bool,
    pub tag_alias_before: BitString,
    /// Alias the reader sent, masked, in the tampered session.
    pub issued_alias: Option<BitString>,
    pub tag_alias_after: BitString,
    pub post_attack_attempts: u64,
    /// Reader rejections among the honest sessions after the attack.
    pub rejects: u64,
    pub reject_reasons: BTreeMap<String, u64>,
}

impl DesyncOutcome {
    /// Whether the stored alias is exactly the issued alias XOR the mask.
    pub fn alias_shifted_by_mask(&self) -> bool {
        self.issued_alias
            .as_ref()
            .and_then(|a| a.xor(&self.mask).ok())
            .is_some_and(|expected| expected == self.tag_alias_after)
    }
}

fn check_mask(tag: &FwcfpTag, mask: &BitString) -> Result<(), DesyncError> {
    let expected = tag.params().alias_bits();
    if mask.width() != expected {
        return Err(DesyncError::Width {
            got: mask.width(),
            expected,
        });
    }
    if mask.is_zero() {
        return Err(DesyncError::ZeroMask);
    }
    Ok(())
}

/// Relays one session honestly except for flow 3, whose `A` and `B` are
/// both XORed with `mask`, then drives `attempts` honest sessions.
pub fn fwcfp_desync_attack<R: RngCore + ?Sized>(
    tag: &mut FwcfpTag,
    reader: &FwcfpReader,
    mask: &BitString,
    attempts: u64,
    rng: &mut R,
) -> Result<DesyncOutcome, DesyncError> {
    check_mask(tag, mask)?;
    let tag_alias_before = tag.alias().clone();
    let run = fwcfp::run_session(tag, reader, rng, 0, |m| match m {
        FwcfpMessage::Flow3 { h2, a, b } => Relay::Deliver(FwcfpMessage::Flow3 {
            h2: h2.clone(),
            a: a.xor(mask).expect("checked width"),
            b: b.xor(mask).expect("checked width"),
        }),
        other => Relay::Deliver(other.clone()),
    });
    let tag_accepted = run.tag.is_some_and(|v| v.is_accept());
    let tag_alias_after = tag.alias().clone();

    let mut rejects = 0;
    let mut reject_reasons = BTreeMap::new();
    for i in 0..attempts {
        let after: SessionRun = fwcfp::run_honest_session(tag, reader, rng, i + 1);
        if let Some(v) = after.reader.filter(|v| !v.is_accept()) {
            rejects += 1;
            *reject_reasons.entry(v.outcome.label()).or_insert(0) += 1;
        }
    }
    Ok(DesyncOutcome {
        mask: mask.clone(),
        tampered_session: run.transcript,
        tag_accepted,
        tag_alias_before,
        issued_alias: run.issued_alias,
        tag_alias_after,
        post_attack_attempts: attempts,
        rejects,
        reject_reasons,
    })
}

/// Undoes a desynchronization: XORs `mask` into the alias of flow 2 so the
/// reader recognises the tag again and issues it a fresh alias.
pub fn fwcfp_restore<R: RngCore + ?Sized>(
    tag: &mut FwcfpTag,
    reader: &FwcfpReader,
    mask: &BitString,
    rng: &mut R,
) -> Result<SessionRun, DesyncError> {
    check_mask(tag, mask)?;
    Ok(fwcfp::run_session(tag, reader, rng, 0, |m| match m {
        FwcfpMessage::Flow2 { alias, h1, rand2 } => Relay::Deliver(FwcfpMessage::Flow2 {
            alias: alias.xor(mask).expect("checked width"),
            h1: h1.clone(),
            rand2: rand2.clone(),
        }),
        other => Relay::Deliver(other.clone()),
    }))
}
