use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::fwcfp::FwcfpMessage;
use crate::game::{
    exact_advantage, published_advantage, Adversary, ChallengeHandle, Game, GameError, Message, ProtocolParams,
    Secrets, SendOutcome, TagRef, Target,
};
use crate::lwjx::LwjxMessage;
use crate::rng::StreamRng;

fn references(hash_bits: usize) -> (Option<f64>, Option<f64>) {
    (Some(published_advantage(hash_bits)), Some(exact_advantage(hash_bits)))
}

/// Sends a lone flow 1 to `tag` on a fresh session and returns its reply.
fn probe(game: &mut Game, tag: TagRef, flow1: Message) -> Result<Message, GameError> {
    let session = game.open_session();
    match game.send(Target::Tag(tag), session, Some(flow1))? {
        SendOutcome::Reply(m) => Ok(m),
        _ => Err(GameError::Aborted("tag refused flow 1")),
    }
}

/// Replays the reader's `rand2` from an eavesdropped `T0` session as the
/// `rand1` of a new session with `T_b`; the reply's `h1` then equals the
/// recorded `h2` exactly when `b = 0`.
#[derive(Debug, Default)]
pub struct FwcfpTrace {
    rand2: Option<BitString>,
    h2: Option<BitString>,
    guess: bool,
}

impl Adversary for FwcfpTrace {
    fn name(&self) -> &'static str {
        "fwcfp-trace"
    }

    fn learning(&mut self, game: &mut Game, _rng: &mut StreamRng) -> Result<(), GameError> {
        let (session, transcript) = game.execute(TagRef::Candidate(0))?;
        self.rand2 = transcript.field(session.0, 2, "rand2").cloned();
        self.h2 = transcript.field(session.0, 3, "h2").cloned();
        Ok(())
    }

    fn challenge(&mut self, game: &mut Game, handle: ChallengeHandle, _rng: &mut StreamRng) -> Result<(), GameError> {
        let (Some(rand2), Some(h2)) = (&self.rand2, &self.h2) else {
            return Err(GameError::Aborted("learning session incomplete"));
        };
        let flow1 = Message::Fwcfp(FwcfpMessage::Flow1 { rand1: rand2.clone() });
        let Message::Fwcfp(FwcfpMessage::Flow2 { h1, .. }) = probe(game, TagRef::Challenge(handle), flow1)? else {
            return Err(GameError::Aborted("unexpected reply"));
        };
        self.guess = h1 != *h2;
        Ok(())
    }

    fn guess(&mut self) -> bool {
        self.guess
    }

    fn reference_advantage(&self, hash_bits: usize) -> (Option<f64>, Option<f64>) {
        references(hash_bits)
    }
}

/// Lets the environment run one session per candidate, corrupts `T0`
/// afterwards and checks the archived `h1` of `T_b` against `H(K0∥rand1)`.
#[derive(Debug, Default)]
pub struct FwcfpBackTrace {
    key0: Option<BitString>,
    guess: bool,
}

impl Adversary for FwcfpBackTrace {
    fn name(&self) -> &'static str {
        "fwcfp-backtrace"
    }

    fn warmup_sessions(&self) -> usize {
        1
    }

    fn learning(&mut self, game: &mut Game, _rng: &mut StreamRng) -> Result<(), GameError> {
        match game.corrupt(TagRef::Candidate(0), None)? {
            Secrets::Fwcfp(s) => self.key0 = Some(s.key),
            Secrets::Lwjx(_) => return Err(GameError::Malformed),
        }
        Ok(())
    }

    fn challenge(&mut self, game: &mut Game, handle: ChallengeHandle, _rng: &mut StreamRng) -> Result<(), GameError> {
        let ProtocolParams::Fwcfp(params) = *game.protocol() else {
            return Err(GameError::Malformed);
        };
        let key0 = self.key0.as_ref().ok_or(GameError::Aborted("no corrupted key"))?;
        let history = game.challenge_history(handle)?;
        let past = history
            .iter()
            .find_map(|s| {
                let rand1 = s.transcript.first_field(1, "rand1")?;
                let h1 = s.transcript.first_field(2, "h1")?;
                Some((rand1, h1))
            })
            .ok_or(GameError::Aborted("no archived session"))?;
        self.guess = params.keyed_hash(key0, past.0) != *past.1;
        Ok(())
    }

    fn guess(&mut self) -> bool {
        self.guess
    }

    fn reference_advantage(&self, hash_bits: usize) -> (Option<f64>, Option<f64>) {
        references(hash_bits)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LwjxGuessMode {
    #[default]
    ByIdHash,
    ByKeyHash,
}

/// Sends the same `Rr` to `T0` and to `T_b`, abandoning both sessions
/// before flow 3 so no tag updates, and compares the replies.
#[derive(Debug, Default)]
pub struct LwjxTrace {
    pub mode: LwjxGuessMode,
    rr: Option<BitString>,
    learned: Option<(BitString, BitString)>,
    observed: Option<(BitString, BitString)>,
}

impl LwjxTrace {
    pub fn new(mode: LwjxGuessMode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    /// Guesses under `(by id hash, by key hash)`, once the challenge ran.
    pub fn guesses(&self) -> Option<(bool, bool)> {
        let (hid0, hk0) = self.learned.as_ref()?;
        let (hid, hk) = self.observed.as_ref()?;
        Some((hid != hid0, hk != hk0))
    }

    fn reply(game: &mut Game, tag: TagRef, rr: &BitString) -> Result<(BitString, BitString), GameError> {
        let flow1 = Message::Lwjx(LwjxMessage::Flow1 { rr: rr.clone() });
        match probe(game, tag, flow1)? {
            Message::Lwjx(LwjxMessage::Flow2 { hid, hk, .. }) => Ok((hid, hk)),
            _ => Err(GameError::Aborted("unexpected reply")),
        }
    }
}

impl Adversary for LwjxTrace {
    fn name(&self) -> &'static str {
        match self.mode {
            LwjxGuessMode::ByIdHash => "lwjx-trace-by-id-hash",
            LwjxGuessMode::ByKeyHash => "lwjx-trace-by-key-hash",
        }
    }

    fn learning(&mut self, game: &mut Game, rng: &mut StreamRng) -> Result<(), GameError> {
        let ProtocolParams::Lwjx(params) = *game.protocol() else {
            return Err(GameError::Malformed);
        };
        let rr = BitString::random(params.width, rng);
        self.learned = Some(Self::reply(game, TagRef::Candidate(0), &rr)?);
        self.rr = Some(rr);
        Ok(())
    }

    fn challenge(&mut self, game: &mut Game, handle: ChallengeHandle, _rng: &mut StreamRng) -> Result<(), GameError> {
        let rr = self
            .rr
            .clone()
            .ok_or(GameError::Aborted("learning session incomplete"))?;
        self.observed = Some(Self::reply(game, TagRef::Challenge(handle), &rr)?);
        Ok(())
    }

    fn guess(&mut self) -> bool {
        let (by_id, by_key) = self.guesses().unwrap_or_default();
        match self.mode {
            LwjxGuessMode::ByIdHash => by_id,
            LwjxGuessMode::ByKeyHash => by_key,
        }
    }

    fn reference_advantage(&self, hash_bits: usize) -> (Option<f64>, Option<f64>) {
        references(hash_bits)
    }
}
