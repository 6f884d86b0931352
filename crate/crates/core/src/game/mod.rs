//! The untraceable-privacy game.
//!
//! A [`Game`] owns one reader, two candidate tags `T0`/`T1` and optionally
//! some bystander tags. The adversary talks to them only through the four
//! queries: [`Game::execute`], [`Game::send`], [`Game::corrupt`] and
//! [`Game::test`]. The game moves through three phases:
//!
//! * learning: every query is allowed, `test` ends the phase;
//! * challenge: `execute` and `send` continue, candidates may no longer be
//!   corrupted, and the challenge handle routes to the hidden `T_b`;
//! * guess: after [`Game::guess`] nothing is allowed.
//!
//! Sessions the environment ran before the game started ("warm-up") are kept
//! in the append-only archive and can be read through the challenge handle.

mod estimate;
mod parallel;

pub use estimate::{
    estimate_advantage, exact_advantage, published_advantage, AdvantageReport, CiMethod, ReportParams,
    REPORT_SCHEMA_VERSION,
};
pub use parallel::{run_trials, Execution};

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::fwcfp::{self, FwcfpMessage, FwcfpParams, FwcfpReader, FwcfpSecrets, FwcfpTag};
use crate::lwjx::{self, LwjxMessage, LwjxParams, LwjxReader, LwjxSecrets, LwjxTag};
use crate::rng::StreamRng;
use crate::session::{Party, ProtocolKind, RejectReason, Relay, SessionVerdict};
use crate::transcript::Transcript;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "protocol", rename_all = "lowercase")]
pub enum ProtocolParams {
    Fwcfp(FwcfpParams),
    Lwjx(LwjxParams),
}

impl ProtocolParams {
    pub fn kind(&self) -> ProtocolKind {
        match self {
            ProtocolParams::Fwcfp(_) => ProtocolKind::Fwcfp,
            ProtocolParams::Lwjx(_) => ProtocolKind::Lwjx,
        }
    }

    pub fn hash_bits(&self) -> usize {
        match self {
            ProtocolParams::Fwcfp(p) => p.hash_bits,
            ProtocolParams::Lwjx(p) => p.width,
        }
    }

    fn with_salt(self, salt: u64) -> Self {
        match self {
            ProtocolParams::Fwcfp(p) => ProtocolParams::Fwcfp(FwcfpParams { salt, ..p }),
            ProtocolParams::Lwjx(p) => ProtocolParams::Lwjx(LwjxParams { salt, ..p }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GameConfig {
    pub protocol: ProtocolParams,
    /// Tags besides the two candidates.
    pub bystanders: usize,
    /// Honest sessions per candidate run before the learning phase.
    pub warmup_sessions: usize,
    pub query_budget: usize,
}

impl GameConfig {
    pub fn new(protocol: ProtocolParams) -> Self {
        Self {
            protocol,
            bystanders: 0,
            warmup_sessions: 0,
            query_budget: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Learning,
    Challenge,
    Guess,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Learning => "learning",
            Phase::Challenge => "challenge",
            Phase::Guess => "guess",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum GameError {
    #[error("{query} is not allowed in the {phase} phase")]
    Phase { query: &'static str, phase: Phase },
    #[error("test was already invoked")]
    TestRepeated,
    #[error("challenge candidates cannot be corrupted after the test query")]
    CorruptCandidate,
    #[error("unknown challenge handle")]
    UnknownHandle,
    #[error("no such tag")]
    UnknownTag,
    #[error("no open reader session {0}")]
    UnknownSession(u64),
    #[error("message or secret does not fit the protocol")]
    Malformed,
    #[error("query budget of {0} exhausted")]
    BudgetExceeded(usize),
    #[error("strategy aborted: {0}")]
    Aborted(&'static str),
}

/// Opaque handle to `T_b`. Its only content is a random token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChallengeHandle(u64);

impl ChallengeHandle {
    pub fn token(&self) -> u64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TagRef {
    /// `T0` or `T1`.
    Candidate(u8),
    Bystander(usize),
    Challenge(ChallengeHandle),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Tag(TagRef),
    Reader,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Message {
    Fwcfp(FwcfpMessage),
    Lwjx(LwjxMessage),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Secrets {
    Fwcfp(FwcfpSecrets),
    Lwjx(LwjxSecrets),
}

/// What the adversary sees after a send.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SendOutcome {
    Reply(Message),
    /// Uniform on-wire rejection; the reason only appears in the archive.
    Rejected,
    /// Delivered, no reply expected.
    Ack,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SessionId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Origin {
    Environment,
    Adversary,
}

#[derive(Debug, Clone)]
struct Archived {
    time: u64,
    origin: Origin,
    tag: Option<usize>,
    transcript: Transcript,
}

/// A session from the archive, as handed to the adversary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchivedSession {
    pub id: SessionId,
    pub time: u64,
    pub transcript: Transcript,
}

enum World {
    Fwcfp {
        reader: FwcfpReader,
        tags: Vec<FwcfpTag>,
        open: HashMap<u64, fwcfp::ReaderSession>,
    },
    Lwjx {
        reader: LwjxReader,
        tags: Vec<LwjxTag>,
        open: HashMap<u64, lwjx::LwjxReaderSession>,
    },
}

impl World {
    fn tag_count(&self) -> usize {
        match self {
            World::Fwcfp { tags, .. } => tags.len(),
            World::Lwjx { tags, .. } => tags.len(),
        }
    }

    fn secrets(&self, index: usize) -> Secrets {
        match self {
            World::Fwcfp { tags, .. } => Secrets::Fwcfp(tags[index].secrets()),
            World::Lwjx { tags, .. } => Secrets::Lwjx(tags[index].secrets()),
        }
    }
}

struct Challenge {
    bit: bool,
    handle: ChallengeHandle,
    secrets_at_test: Vec<Secrets>,
}

pub struct Game {
    config: GameConfig,
    phase: Phase,
    world: World,
    rng: StreamRng,
    clock: u64,
    queries: usize,
    archive: BTreeMap<SessionId, Archived>,
    corruptions: Vec<(u64, usize)>,
    challenge: Option<Challenge>,
    guess: Option<bool>,
    routed: Vec<u64>,
    initial_secrets: Vec<Secrets>,
}

impl fmt::Debug for Game {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Game")
            .field("phase", &self.phase)
            .field("queries", &self.queries)
            .field("archived", &self.archive.len())
            .finish_non_exhaustive()
    }
}

fn distinct_pair<R: RngCore>(width: usize, rng: &mut R) -> (BitString, BitString) {
    assert!(width >= 1);
    let a = BitString::random(width, rng);
    loop {
        let b = BitString::random(width, rng);
        if b != a {
            return (a, b);
        }
    }
}

impl Game {
    /// Fresh game: fresh hash salt, master key and tag secrets, with
    /// `K0 ≠ K1` (and `ID0 ≠ ID1` for LWJX). Bystander secrets are only
    /// required to keep identifiers distinct.
    pub fn new(config: GameConfig, mut rng: StreamRng) -> Self {
        let protocol = config.protocol.with_salt(rng.next_u64());
        let tag_count = 2 + config.bystanders;
        let world = match protocol {
            ProtocolParams::Fwcfp(p) => {
                let mut reader = FwcfpReader::with_random_key(p, &mut rng).expect("validated params");
                let (k0, k1) = distinct_pair(p.key_bits, &mut rng);
                let keys = [k0, k1];
                let mut tags = Vec::with_capacity(tag_count);
                for i in 0..tag_count {
                    let key = keys
                        .get(i)
                        .cloned()
                        .unwrap_or_else(|| BitString::random(p.key_bits, &mut rng));
                    let tag = loop {
                        let idt = BitString::random(p.id_bits, &mut rng);
                        if let Ok(tag) = reader.register(idt, key.clone(), &mut rng) {
                            break tag;
                        }
                    };
                    tags.push(tag);
                }
                World::Fwcfp {
                    reader,
                    tags,
                    open: HashMap::new(),
                }
            }
            ProtocolParams::Lwjx(p) => {
                assert!(
                    tag_count as u128 <= 1u128 << p.width.min(64),
                    "not enough distinct identifiers"
                );
                let mut reader = LwjxReader::new(p).expect("validated params");
                let (k0, k1) = distinct_pair(p.width, &mut rng);
                let (id0, id1) = distinct_pair(p.width, &mut rng);
                let mut ids = vec![id0, id1];
                while ids.len() < tag_count {
                    let id = BitString::random(p.width, &mut rng);
                    if !ids.contains(&id) {
                        ids.push(id);
                    }
                }
                let mut tags = Vec::with_capacity(tag_count);
                for (i, id) in ids.into_iter().enumerate() {
                    let key = match i {
                        0 => k0.clone(),
                        1 => k1.clone(),
                        _ => BitString::random(p.width, &mut rng),
                    };
                    tags.push(reader.provision(id, key).expect("width"));
                }
                World::Lwjx {
                    reader,
                    tags,
                    open: HashMap::new(),
                }
            }
        };
        let initial_secrets = (0..tag_count).map(|i| world.secrets(i)).collect();
        let mut game = Self {
            config: GameConfig { protocol, ..config },
            phase: Phase::Learning,
            world,
            rng,
            clock: 0,
            queries: 0,
            archive: BTreeMap::new(),
            corruptions: Vec::new(),
            challenge: None,
            guess: None,
            routed: vec![0; tag_count],
            initial_secrets,
        };
        game.warm_up();
        game
    }

    fn warm_up(&mut self) {
        let mut order: Vec<usize> = (0..2)
            .flat_map(|t| std::iter::repeat_n(t, self.config.warmup_sessions))
            .collect();
        // random order so archive position does not reveal the tag
        for i in (1..order.len()).rev() {
            let j = (self.rng.next_u64() % (i as u64 + 1)) as usize;
            order.swap(i, j);
        }
        for tag in order {
            let transcript = self.drive(tag, |m| Relay::Deliver(m.clone()));
            self.archive_session(Origin::Environment, Some(tag), transcript);
        }
        // learning starts after the warm-up
        self.clock += 1;
        // the environment's own sessions do not count against the adversary
        self.routed.iter_mut().for_each(|r| *r = 0);
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn protocol(&self) -> &ProtocolParams {
        &self.config.protocol
    }

    /// Logical time, advanced by every query.
    pub fn clock(&self) -> u64 {
        self.clock
    }

    fn charge(&mut self, query: &'static str, allowed: &[Phase]) -> Result<(), GameError> {
        if !allowed.contains(&self.phase) {
            return Err(GameError::Phase {
                query,
                phase: self.phase,
            });
        }
        if self.queries >= self.config.query_budget {
            return Err(GameError::BudgetExceeded(self.config.query_budget));
        }
        self.queries += 1;
        self.clock += 1;
        Ok(())
    }

    fn resolve(&self, tag: TagRef) -> Result<usize, GameError> {
        let index = match tag {
            TagRef::Candidate(i) if i < 2 => usize::from(i),
            TagRef::Candidate(_) => return Err(GameError::UnknownTag),
            TagRef::Bystander(i) => 2 + i,
            TagRef::Challenge(h) => match &self.challenge {
                Some(c) if c.handle == h => usize::from(c.bit),
                _ => return Err(GameError::UnknownHandle),
            },
        };
        if index >= self.world.tag_count() {
            return Err(GameError::UnknownTag);
        }
        Ok(index)
    }

    fn new_session_id(&mut self) -> SessionId {
        loop {
            let id = SessionId(self.rng.next_u64());
            if !self.archive.contains_key(&id) {
                return id;
            }
        }
    }

    fn archive_session(&mut self, origin: Origin, tag: Option<usize>, transcript: Transcript) -> SessionId {
        let id = self.new_session_id();
        let transcript = renumber(transcript, id.0);
        self.archive.insert(
            id,
            Archived {
                time: self.clock,
                origin,
                tag,
                transcript,
            },
        );
        id
    }

    fn drive<C>(&mut self, tag: usize, mut channel: C) -> Transcript
    where
        C: FnMut(&Message) -> Relay<Message>,
    {
        self.routed[tag] += 1;
        match &mut self.world {
            World::Fwcfp { reader, tags, .. } => {
                let run = fwcfp::run_session(
                    &mut tags[tag],
                    reader,
                    &mut self.rng,
                    0,
                    |m: &FwcfpMessage| match channel(&Message::Fwcfp(m.clone())) {
                        Relay::Deliver(Message::Fwcfp(x)) => Relay::Deliver(x),
                        _ => Relay::Block,
                    },
                );
                run.transcript
            }
            World::Lwjx { reader, tags, .. } => {
                let run = lwjx::run_session(
                    &mut tags[tag],
                    reader,
                    &mut self.rng,
                    0,
                    |m: &LwjxMessage| match channel(&Message::Lwjx(m.clone())) {
                        Relay::Deliver(Message::Lwjx(x)) => Relay::Deliver(x),
                        _ => Relay::Block,
                    },
                );
                run.transcript
            }
        }
    }

    /// Passive eavesdropping on one honest session.
    pub fn execute(&mut self, tag: TagRef) -> Result<(SessionId, Transcript), GameError> {
        self.execute_intercepted(tag, |m| Relay::Deliver(m.clone()))
    }

    /// An otherwise honest session in which the adversary may block or alter
    /// any message in flight.
    pub fn execute_intercepted<C>(&mut self, tag: TagRef, channel: C) -> Result<(SessionId, Transcript), GameError>
    where
        C: FnMut(&Message) -> Relay<Message>,
    {
        self.charge("execute", &[Phase::Learning, Phase::Challenge])?;
        let index = self.resolve(tag)?;
        let transcript = self.drive(index, channel);
        let id = self.archive_session(Origin::Adversary, Some(index), transcript);
        Ok((id, self.archive[&id].transcript.clone()))
    }

    /// Opens an adversary-driven session id for use with [`Game::send`].
    pub fn open_session(&mut self) -> SessionId {
        let id = self.new_session_id();
        self.archive.insert(
            id,
            Archived {
                time: self.clock,
                origin: Origin::Adversary,
                tag: None,
                transcript: Transcript::new(),
            },
        );
        id
    }

    /// Delivers an adversary-chosen message. `None` to the reader starts a
    /// reader instance for `session`.
    pub fn send(
        &mut self,
        target: Target,
        session: SessionId,
        message: Option<Message>,
    ) -> Result<SendOutcome, GameError> {
        self.charge("send", &[Phase::Learning, Phase::Challenge])?;
        if !self.archive.contains_key(&session) {
            return Err(GameError::UnknownSession(session.0));
        }
        let tag_index = match target {
            Target::Tag(t) => Some(self.resolve(t)?),
            Target::Reader => None,
        };
        if let Some(i) = tag_index {
            self.routed[i] += 1;
        }
        let mut log = Transcript::new();
        let sid = session.0;
        let outcome = match (&mut self.world, tag_index, message) {
            (World::Fwcfp { reader, open, .. }, None, None) => {
                let (rs, flow1) = reader.begin(&mut self.rng);
                open.insert(sid, rs);
                log.message(sid, 1, Party::Reader.into(), flow1.fields());
                SendOutcome::Reply(Message::Fwcfp(flow1))
            }
            (World::Fwcfp { reader, open, .. }, None, Some(Message::Fwcfp(m))) => {
                log_incoming(&mut log, sid, m.flow(), m.fields());
                match m {
                    FwcfpMessage::Flow2 { .. } => {
                        let rs = open.get_mut(&sid).ok_or(GameError::UnknownSession(sid))?;
                        match reader.authenticate(rs, &m, &mut self.rng) {
                            Ok(flow3) => {
                                log.verdict(sid, 2, SessionVerdict::accept(Party::Reader));
                                log.message(sid, 3, Party::Reader.into(), flow3.fields());
                                SendOutcome::Reply(Message::Fwcfp(flow3))
                            }
                            Err(r) => reject(&mut log, sid, 2, Party::Reader, r),
                        }
                    }
                    FwcfpMessage::Flow4 { .. } => SendOutcome::Ack,
                    _ => reject(&mut log, sid, m.flow(), Party::Reader, RejectReason::Malformed),
                }
            }
            (World::Fwcfp { tags, .. }, Some(t), Some(Message::Fwcfp(m))) => {
                log_incoming(&mut log, sid, m.flow(), m.fields());
                let tag = &mut tags[t];
                match m {
                    FwcfpMessage::Flow1 { .. } => match tag.respond(&m, &mut self.rng) {
                        Ok(flow2) => {
                            log.message(sid, 2, Party::Tag.into(), flow2.fields());
                            SendOutcome::Reply(Message::Fwcfp(flow2))
                        }
                        Err(r) => reject(&mut log, sid, 1, Party::Tag, r),
                    },
                    FwcfpMessage::Flow3 { .. } => match tag.finalize(&m) {
                        Ok(flow4) => {
                            log.verdict(sid, 3, SessionVerdict::accept(Party::Tag));
                            log.message(sid, 4, Party::Tag.into(), flow4.fields());
                            SendOutcome::Reply(Message::Fwcfp(flow4))
                        }
                        Err(r) => reject(&mut log, sid, 3, Party::Tag, r),
                    },
                    _ => reject(&mut log, sid, m.flow(), Party::Tag, RejectReason::Malformed),
                }
            }
            (World::Lwjx { reader, open, .. }, None, None) => {
                let (rs, flow1) = reader.begin(&mut self.rng);
                open.insert(sid, rs);
                log.message(sid, 1, Party::Reader.into(), flow1.fields());
                SendOutcome::Reply(Message::Lwjx(flow1))
            }
            (World::Lwjx { reader, open, .. }, None, Some(Message::Lwjx(m))) => {
                log_incoming(&mut log, sid, m.flow(), m.fields());
                match m {
                    LwjxMessage::Flow2 { .. } => {
                        let rs = open.get(&sid).ok_or(GameError::UnknownSession(sid))?;
                        match reader.authenticate(rs, &m) {
                            Ok((flow3, _)) => {
                                log.verdict(sid, 2, SessionVerdict::accept(Party::Reader));
                                log.message(sid, 3, Party::Reader.into(), flow3.fields());
                                SendOutcome::Reply(Message::Lwjx(flow3))
                            }
                            Err(r) => reject(&mut log, sid, 2, Party::Reader, r),
                        }
                    }
                    _ => reject(&mut log, sid, m.flow(), Party::Reader, RejectReason::Malformed),
                }
            }
            (World::Lwjx { tags, .. }, Some(t), Some(Message::Lwjx(m))) => {
                log_incoming(&mut log, sid, m.flow(), m.fields());
                let tag = &mut tags[t];
                match m {
                    LwjxMessage::Flow1 { .. } => match tag.respond(&m, &mut self.rng) {
                        Ok(flow2) => {
                            log.message(sid, 2, Party::Tag.into(), flow2.fields());
                            SendOutcome::Reply(Message::Lwjx(flow2))
                        }
                        Err(r) => reject(&mut log, sid, 1, Party::Tag, r),
                    },
                    LwjxMessage::Flow3 { .. } => match tag.finalize(&m) {
                        Ok(()) => {
                            log.verdict(sid, 3, SessionVerdict::accept(Party::Tag));
                            SendOutcome::Ack
                        }
                        Err(r) => reject(&mut log, sid, 3, Party::Tag, r),
                    },
                    _ => reject(&mut log, sid, m.flow(), Party::Tag, RejectReason::Malformed),
                }
            }
            (_, Some(_), None) => SendOutcome::Rejected,
            // message for the other protocol
            (_, tag, Some(_)) => {
                let party = if tag.is_some() { Party::Tag } else { Party::Reader };
                reject(&mut log, sid, 0, party, RejectReason::Malformed)
            }
        };
        let entry = self.archive.get_mut(&session).expect("checked above");
        if entry.tag.is_none() {
            entry.tag = tag_index;
        }
        entry.transcript.extend(log);
        Ok(outcome)
    }

    /// Reads the tag's memory and, if `replacement` is given, overwrites it.
    pub fn corrupt(&mut self, tag: TagRef, replacement: Option<Secrets>) -> Result<Secrets, GameError> {
        self.charge("corrupt", &[Phase::Learning, Phase::Challenge])?;
        let index = self.resolve(tag)?;
        if self.phase == Phase::Challenge && index < 2 {
            return Err(GameError::CorruptCandidate);
        }
        let current = self.world.secrets(index);
        if let Some(new) = replacement {
            match (&mut self.world, new) {
                (World::Fwcfp { tags, .. }, Secrets::Fwcfp(s)) => {
                    tags[index].set_secrets(s).map_err(|_| GameError::Malformed)?
                }
                (World::Lwjx { tags, .. }, Secrets::Lwjx(s)) => {
                    tags[index].set_secrets(s).map_err(|_| GameError::Malformed)?
                }
                _ => return Err(GameError::Malformed),
            }
        }
        self.corruptions.push((self.clock, index));
        Ok(current)
    }

    /// Draws the hidden bit and hands out the handle to `T_b`.
    pub fn test(&mut self) -> Result<ChallengeHandle, GameError> {
        if self.challenge.is_some() {
            return Err(GameError::TestRepeated);
        }
        self.charge("test", &[Phase::Learning])?;
        let bit = self.rng.bit();
        let handle = ChallengeHandle(self.rng.next_u64());
        let secrets_at_test = (0..self.world.tag_count()).map(|i| self.world.secrets(i)).collect();
        self.challenge = Some(Challenge {
            bit,
            handle,
            secrets_at_test,
        });
        self.phase = Phase::Challenge;
        Ok(handle)
    }

    /// Environment sessions of `T_b` that predate the test query.
    pub fn challenge_history(&self, handle: ChallengeHandle) -> Result<Vec<ArchivedSession>, GameError> {
        let index = self.resolve(TagRef::Challenge(handle))?;
        Ok(self
            .archive
            .iter()
            .filter(|(_, a)| a.origin == Origin::Environment && a.tag == Some(index))
            .map(|(id, a)| ArchivedSession {
                id: *id,
                time: a.time,
                transcript: a.transcript.clone(),
            })
            .collect())
    }

    /// Any archived session the adversary knows the id of.
    pub fn archived(&self, id: SessionId) -> Option<ArchivedSession> {
        self.archive.get(&id).map(|a| ArchivedSession {
            id,
            time: a.time,
            transcript: a.transcript.clone(),
        })
    }

    /// Ends the game with the adversary's guess; returns `(b, b')`.
    pub fn guess(&mut self, bit: bool) -> Result<(bool, bool), GameError> {
        if self.phase != Phase::Challenge {
            return Err(GameError::Phase {
                query: "guess",
                phase: self.phase,
            });
        }
        self.phase = Phase::Guess;
        self.guess = Some(bit);
        let b = self.challenge.as_ref().expect("challenge phase").bit;
        Ok((b, bit))
    }

    /// Harness-side view of hidden state. Strategies must not use it.
    pub fn audit(&self) -> GameAudit<'_> {
        GameAudit { game: self }
    }
}

/// Adversary-supplied messages are logged as injected.
fn log_incoming(log: &mut Transcript, sid: u64, flow: u8, fields: BTreeMap<String, BitString>) {
    log.tampered(sid, flow, fields);
}

fn reject(log: &mut Transcript, sid: u64, flow: u8, party: Party, reason: RejectReason) -> SendOutcome {
    log.verdict(sid, flow, SessionVerdict::reject(party, reason));
    SendOutcome::Rejected
}

fn renumber(mut transcript: Transcript, id: u64) -> Transcript {
    for e in &mut transcript.entries {
        e.session = id;
    }
    transcript
}

/// Read-only access to what the adversary cannot see.
pub struct GameAudit<'a> {
    game: &'a Game,
}

impl GameAudit<'_> {
    pub fn hidden_bit(&self) -> Option<bool> {
        self.game.challenge.as_ref().map(|c| c.bit)
    }

    /// Number of adversary sessions and sends routed to each tag.
    pub fn routed(&self) -> &[u64] {
        &self.game.routed
    }

    pub fn initial_secrets(&self, index: usize) -> &Secrets {
        &self.game.initial_secrets[index]
    }

    pub fn secrets_at_test(&self, index: usize) -> Option<&Secrets> {
        self.game.challenge.as_ref().map(|c| &c.secrets_at_test[index])
    }

    pub fn current_secrets(&self, index: usize) -> Secrets {
        self.game.world.secrets(index)
    }

    /// `(time, tag index)` of every corruption.
    pub fn corruptions(&self) -> &[(u64, usize)] {
        &self.game.corruptions
    }

    /// Time of every environment session of tag `index`.
    pub fn environment_times(&self, index: usize) -> Vec<u64> {
        self.game
            .archive
            .values()
            .filter(|a| a.origin == Origin::Environment && a.tag == Some(index))
            .map(|a| a.time)
            .collect()
    }

    pub fn guess(&self) -> Option<bool> {
        self.game.guess
    }
}

/// An adversary in the privacy game. One instance plays one trial.
pub trait Adversary {
    fn name(&self) -> &'static str;

    /// Honest sessions per candidate the environment should run beforehand.
    fn warmup_sessions(&self) -> usize {
        0
    }

    fn learning(&mut self, game: &mut Game, rng: &mut StreamRng) -> Result<(), GameError>;

    fn challenge(&mut self, game: &mut Game, handle: ChallengeHandle, rng: &mut StreamRng) -> Result<(), GameError>;

    fn guess(&mut self) -> bool;

    /// `(published, exact)` success advantage, when known in closed form.
    fn reference_advantage(&self, _hash_bits: usize) -> (Option<f64>, Option<f64>) {
        (None, None)
    }
}

/// Guesses uniformly at random without querying anything.
#[derive(Debug, Default)]
pub struct CoinFlip {
    bit: bool,
}

impl Adversary for CoinFlip {
    fn name(&self) -> &'static str {
        "coin-flip"
    }

    fn learning(&mut self, _game: &mut Game, _rng: &mut StreamRng) -> Result<(), GameError> {
        Ok(())
    }

    fn challenge(&mut self, _game: &mut Game, _h: ChallengeHandle, rng: &mut StreamRng) -> Result<(), GameError> {
        self.bit = rng.bit();
        Ok(())
    }

    fn guess(&mut self) -> bool {
        self.bit
    }

    fn reference_advantage(&self, _hash_bits: usize) -> (Option<f64>, Option<f64>) {
        (None, Some(0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialOutcome {
    pub bit: bool,
    pub guess: bool,
}

impl TrialOutcome {
    pub fn correct(&self) -> bool {
        self.bit == self.guess
    }
}

/// Stream ids for trial `index`: one for the game, one for the adversary.
pub fn trial_streams(seed: u64, index: u64) -> (StreamRng, StreamRng) {
    (StreamRng::new(seed, 2 * index), StreamRng::new(seed, 2 * index + 1))
}

/// Plays one trial and hands back the finished game for inspection.
pub fn play_trial<A: Adversary>(
    adversary: &mut A,
    config: GameConfig,
    seed: u64,
    index: u64,
) -> (Result<TrialOutcome, GameError>, Game) {
    let (game_rng, mut adv_rng) = trial_streams(seed, index);
    let config = GameConfig {
        warmup_sessions: config.warmup_sessions.max(adversary.warmup_sessions()),
        ..config
    };
    let mut game = Game::new(config, game_rng);
    let result = (|| {
        adversary.learning(&mut game, &mut adv_rng)?;
        let handle = game.test()?;
        adversary.challenge(&mut game, handle, &mut adv_rng)?;
        let guess = adversary.guess();
        let (bit, guess) = game.guess(guess)?;
        Ok(TrialOutcome { bit, guess })
    })();
    (result, game)
}

/// Learning, challenge and guess for one trial; returns `(b, b')`.
pub fn run_upriv_game<A: Adversary>(
    adversary: &mut A,
    config: GameConfig,
    seed: u64,
    index: u64,
) -> Result<TrialOutcome, GameError> {
    play_trial(adversary, config, seed, index).0
}

#[cfg(test)]
mod tests;
