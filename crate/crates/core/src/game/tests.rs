use proptest::prelude::*;

use super::*;
use crate::transcript::Sender;

fn fwcfp_config() -> GameConfig {
    GameConfig::new(ProtocolParams::Fwcfp(FwcfpParams::default()))
}

fn lwjx_config() -> GameConfig {
    GameConfig::new(ProtocolParams::Lwjx(LwjxParams::with_width(32)))
}

fn game(config: GameConfig, stream: u64) -> Game {
    Game::new(config, StreamRng::new(7, stream))
}

#[test]
fn execute_runs_full_sessions() {
    for (config, flows) in [(fwcfp_config(), 4), (lwjx_config(), 3)] {
        let mut g = game(config, 0);
        let (id, t) = g.execute(TagRef::Candidate(0)).unwrap();
        assert_eq!(t.messages().count(), flows);
        assert!(t.accepted_by(Sender::Reader) && t.accepted_by(Sender::Tag));
        assert!(t.entries.iter().all(|e| e.session == id.0));
        assert_eq!(g.archived(id).unwrap().transcript, t);
    }
}

#[test]
fn phase_rules() {
    let mut g = game(fwcfp_config(), 1);
    assert!(matches!(g.guess(false), Err(GameError::Phase { .. })));
    g.corrupt(TagRef::Candidate(0), None).unwrap();
    let h = g.test().unwrap();
    assert_eq!(g.phase(), Phase::Challenge);
    assert_eq!(g.test(), Err(GameError::TestRepeated));
    assert_eq!(g.corrupt(TagRef::Candidate(1), None), Err(GameError::CorruptCandidate));
    assert_eq!(g.corrupt(TagRef::Challenge(h), None), Err(GameError::CorruptCandidate));
    g.execute(TagRef::Challenge(h)).unwrap();
    g.guess(true).unwrap();
    assert!(matches!(g.execute(TagRef::Candidate(0)), Err(GameError::Phase { .. })));
    assert!(matches!(g.guess(true), Err(GameError::Phase { .. })));
}

#[test]
fn bystanders_may_be_corrupted_during_challenge() {
    let mut g = game(
        GameConfig {
            bystanders: 2,
            ..fwcfp_config()
        },
        2,
    );
    g.test().unwrap();
    assert!(g.corrupt(TagRef::Bystander(1), None).is_ok());
    assert_eq!(g.corrupt(TagRef::Bystander(2), None), Err(GameError::UnknownTag));
}

#[test]
fn forged_handle_is_rejected() {
    let mut g = game(fwcfp_config(), 3);
    let h = g.test().unwrap();
    let forged = ChallengeHandle(h.token().wrapping_add(1));
    assert_eq!(
        g.execute(TagRef::Challenge(forged)).unwrap_err(),
        GameError::UnknownHandle
    );
}

#[test]
fn handle_routes_to_hidden_tag() {
    for stream in 0..40 {
        let mut g = game(lwjx_config(), stream);
        let h = g.test().unwrap();
        g.execute(TagRef::Challenge(h)).unwrap();
        let b = g.audit().hidden_bit().unwrap();
        let mut expected = [0, 0];
        expected[usize::from(b)] = 1;
        assert_eq!(g.audit().routed(), expected);
    }
}

#[test]
fn hidden_bit_is_balanced() {
    let n = 4000;
    let ones = (0..n)
        .filter(|&i| {
            let mut g = game(lwjx_config(), i);
            g.test().unwrap();
            g.audit().hidden_bit().unwrap()
        })
        .count() as f64;
    // 4 sigma
    assert!((ones - n as f64 / 2.0).abs() < 4.0 * (n as f64 / 4.0).sqrt());
}

#[test]
fn handle_token_is_independent_of_bit() {
    let mut tokens = [Vec::new(), Vec::new()];
    for i in 0..400 {
        let mut g = game(fwcfp_config(), i);
        let h = g.test().unwrap();
        tokens[usize::from(g.audit().hidden_bit().unwrap())].push(h.token() & 1);
    }
    for side in tokens {
        let ones = side.iter().sum::<u64>() as f64;
        let n = side.len() as f64;
        assert!((ones - n / 2.0).abs() < 4.0 * (n / 4.0).sqrt());
    }
}

#[test]
fn corrupt_reads_and_overwrites() {
    let mut g = game(lwjx_config(), 4);
    let before = g.corrupt(TagRef::Candidate(1), None).unwrap();
    assert_eq!(before, g.audit().current_secrets(1));
    assert_eq!(&before, g.audit().initial_secrets(1));
    let Secrets::Lwjx(s) = &before else { panic!() };
    let replaced = LwjxSecrets {
        id: s.id.clone(),
        key: BitString::zeros(32),
    };
    g.corrupt(TagRef::Candidate(1), Some(Secrets::Lwjx(replaced.clone())))
        .unwrap();
    assert_eq!(g.audit().current_secrets(1), Secrets::Lwjx(replaced));
    let bad = LwjxSecrets {
        id: BitString::zeros(8),
        key: BitString::zeros(8),
    };
    assert_eq!(
        g.corrupt(TagRef::Candidate(1), Some(Secrets::Lwjx(bad))),
        Err(GameError::Malformed)
    );
    assert_eq!(g.audit().corruptions().len(), 2);
}

#[test]
fn candidates_have_distinct_secrets() {
    for i in 0..50 {
        for config in [fwcfp_config(), lwjx_config()] {
            let g = game(config, i);
            assert_ne!(g.audit().initial_secrets(0), g.audit().initial_secrets(1));
            match (g.audit().initial_secrets(0), g.audit().initial_secrets(1)) {
                (Secrets::Fwcfp(a), Secrets::Fwcfp(b)) => assert_ne!(a.key, b.key),
                (Secrets::Lwjx(a), Secrets::Lwjx(b)) => {
                    assert_ne!(a.key, b.key);
                    assert_ne!(a.id, b.id);
                }
                _ => unreachable!(),
            }
        }
    }
}

#[test]
fn history_holds_only_environment_sessions_of_hidden_tag() {
    let config = GameConfig {
        warmup_sessions: 3,
        ..fwcfp_config()
    };
    let mut g = game(config, 5);
    assert_eq!(g.audit().routed(), [0, 0]);
    g.execute(TagRef::Candidate(0)).unwrap();
    g.execute(TagRef::Candidate(1)).unwrap();
    let h = g.test().unwrap();
    let b = usize::from(g.audit().hidden_bit().unwrap());
    let history = g.challenge_history(h).unwrap();
    assert_eq!(history.len(), 3);
    assert!(history.iter().all(|s| s.time == 0));
    assert_eq!(g.audit().environment_times(b), vec![0, 0, 0]);
    let Secrets::Fwcfp(initial) = g.audit().initial_secrets(b).clone() else {
        panic!()
    };
    let aliases: Vec<_> = history
        .iter()
        .filter_map(|s| s.transcript.first_field(2, "idta").cloned())
        .collect();
    // one of the archived sessions used the provisioned alias
    assert!(aliases.contains(&initial.alias));
}

#[test]
fn send_drives_sessions_step_by_step() {
    let mut g = game(fwcfp_config(), 6);
    let s = g.open_session();
    let SendOutcome::Reply(flow1) = g.send(Target::Reader, s, None).unwrap() else {
        panic!()
    };
    let SendOutcome::Reply(flow2) = g.send(Target::Tag(TagRef::Candidate(0)), s, Some(flow1)).unwrap() else {
        panic!()
    };
    let SendOutcome::Reply(flow3) = g.send(Target::Reader, s, Some(flow2.clone())).unwrap() else {
        panic!()
    };
    let SendOutcome::Reply(flow4) = g.send(Target::Tag(TagRef::Candidate(0)), s, Some(flow3)).unwrap() else {
        panic!()
    };
    assert_eq!(g.send(Target::Reader, s, Some(flow4)).unwrap(), SendOutcome::Ack);
    // replaying the same flow 2 is accepted again: the reader is stateless
    assert!(matches!(
        g.send(Target::Reader, s, Some(flow2)),
        Ok(SendOutcome::Reply(_))
    ));
    let t = g.archived(s).unwrap().transcript;
    assert!(t.accepted_by(Sender::Tag));
}

#[test]
fn wrong_protocol_message_is_rejected() {
    let mut g = game(lwjx_config(), 7);
    let s = g.open_session();
    let msg = Message::Fwcfp(FwcfpMessage::Flow4 { ok: true });
    assert_eq!(g.send(Target::Reader, s, Some(msg)).unwrap(), SendOutcome::Rejected);
    assert_eq!(
        g.send(Target::Reader, SessionId(s.0 ^ 1), None),
        Err(GameError::UnknownSession(s.0 ^ 1))
    );
}

#[test]
fn query_budget_is_enforced() {
    let mut g = game(
        GameConfig {
            query_budget: 2,
            ..lwjx_config()
        },
        8,
    );
    g.execute(TagRef::Candidate(0)).unwrap();
    g.execute(TagRef::Candidate(0)).unwrap();
    assert_eq!(
        g.execute(TagRef::Candidate(0)).unwrap_err(),
        GameError::BudgetExceeded(2)
    );
}

#[test]
fn coin_flip_is_near_zero_advantage() {
    let report = estimate_advantage(CoinFlip::default, lwjx_config(), 2000, 11, Execution::Sequential);
    assert_eq!(report.trials, 2000);
    assert_eq!(report.exact_within_ci, Some(true));
}

#[test]
fn parallel_and_sequential_agree() {
    let seq = estimate_advantage(CoinFlip::default, lwjx_config(), 300, 12, Execution::Sequential);
    let par = estimate_advantage(CoinFlip::default, lwjx_config(), 300, 12, Execution::Parallel);
    assert_eq!(seq, par);
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Execute(u8),
    Corrupt(u8),
    Test,
    ExecuteChallenge,
    Guess,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0u8..3).prop_map(Op::Execute),
        (0u8..3).prop_map(Op::Corrupt),
        Just(Op::Test),
        Just(Op::ExecuteChallenge),
        Just(Op::Guess),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn phase_machine(ops in prop::collection::vec(op(), 0..12), stream in 0u64..1000) {
        let mut g = game(GameConfig { bystanders: 1, ..lwjx_config() }, stream);
        let mut phase = Phase::Learning;
        let mut handle = None;
        for op in ops {
            let ok = match op {
                Op::Execute(t) => {
                    let r = g.execute(if t < 2 { TagRef::Candidate(t) } else { TagRef::Bystander(0) });
                    r.is_ok()
                }
                Op::Corrupt(t) => {
                    let r = g.corrupt(if t < 2 { TagRef::Candidate(t) } else { TagRef::Bystander(0) }, None);
                    let expect = phase == Phase::Learning || (phase == Phase::Challenge && t == 2);
                    prop_assert_eq!(r.is_ok(), expect);
                    continue;
                }
                Op::Test => {
                    let r = g.test();
                    if let Ok(h) = r {
                        handle = Some(h);
                    }
                    let ok = r.is_ok();
                    prop_assert_eq!(ok, phase == Phase::Learning);
                    if ok {
                        phase = Phase::Challenge;
                    }
                    continue;
                }
                Op::ExecuteChallenge => match handle {
                    Some(h) => g.execute(TagRef::Challenge(h)).is_ok(),
                    None => continue,
                },
                Op::Guess => {
                    let ok = g.guess(false).is_ok();
                    prop_assert_eq!(ok, phase == Phase::Challenge);
                    if ok {
                        phase = Phase::Guess;
                    }
                    continue;
                }
            };
            prop_assert_eq!(ok, phase != Phase::Guess);
            prop_assert_eq!(g.phase(), phase);
        }
    }
}
