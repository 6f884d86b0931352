//! Monte Carlo estimation of an adversary's advantage.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{run_trials, run_upriv_game, Adversary, Execution, GameConfig, ProtocolParams};
use crate::hash::HASH_ID;
use crate::session::ProtocolKind;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

const Z_95: f64 = 1.959_963_984_540_054;

/// `½ − 2⁻ⁿ`: the advantage obtained by counting every hash collision as a
/// lost trial.
pub fn published_advantage(hash_bits: usize) -> f64 {
    0.5 - 0.5f64.powi(hash_bits as i32)
}

/// `½ − 2⁻⁽ⁿ⁺¹⁾`: with `b` uniform a collision only misleads the adversary
/// when `b = 1`, so `Pr[b' = b] = 1 − 2⁻ⁿ/2`.
pub fn exact_advantage(hash_bits: usize) -> f64 {
    0.5 - 0.5f64.powi(hash_bits as i32 + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CiMethod {
    Normal,
    /// `p` within `10/N` of 0 or 1: half-width widened to at least `3/N`.
    RuleOfThree,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportParams {
    pub hash_bits: usize,
    pub id_bits: usize,
    pub key_bits: usize,
    pub nonce_bits: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rand0_bits: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_limit: Option<u32>,
    pub seed: u64,
    pub trials_requested: u64,
}

impl ReportParams {
    pub fn new(protocol: &ProtocolParams, seed: u64, trials_requested: u64) -> Self {
        match protocol {
            ProtocolParams::Fwcfp(p) => Self {
                hash_bits: p.hash_bits,
                id_bits: p.id_bits,
                key_bits: p.key_bits,
                nonce_bits: p.nonce_bits,
                rand0_bits: Some(p.rand0_bits),
                m_limit: None,
                seed,
                trials_requested,
            },
            ProtocolParams::Lwjx(p) => Self {
                hash_bits: p.width,
                id_bits: p.width,
                key_bits: p.width,
                nonce_bits: p.width,
                rand0_bits: None,
                m_limit: Some(p.m_limit),
                seed,
                trials_requested,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvantageReport {
    pub schema_version: u32,
    pub hash: String,
    pub protocol: ProtocolKind,
    pub strategy: String,
    pub params: ReportParams,
    /// Completed trials.
    pub trials: u64,
    pub discarded: u64,
    pub discard_reasons: BTreeMap<String, u64>,
    pub correct: u64,
    /// Trials in which the hidden bit was 0.
    pub bit_zero: u64,
    pub empirical_p: f64,
    pub empirical_adv: f64,
    pub ci95: f64,
    pub ci_method: CiMethod,
    pub published_adv: Option<f64>,
    pub exact_adv: Option<f64>,
    pub exact_within_ci: Option<bool>,
    pub published_outside_ci: Option<bool>,
}

impl AdvantageReport {
    /// Builds the report from per-trial `(correct, b)` pairs and discard reasons.
    pub fn from_outcomes(
        protocol: &ProtocolParams,
        strategy: &str,
        seed: u64,
        trials_requested: u64,
        references: (Option<f64>, Option<f64>),
        outcomes: &[Result<(bool, bool), String>],
    ) -> Self {
        let mut discard_reasons = BTreeMap::new();
        let (mut trials, mut correct, mut bit_zero) = (0u64, 0u64, 0u64);
        for outcome in outcomes {
            match outcome {
                Ok((won, bit)) => {
                    trials += 1;
                    correct += u64::from(*won);
                    bit_zero += u64::from(!*bit);
                }
                Err(reason) => *discard_reasons.entry(reason.clone()).or_insert(0) += 1,
            }
        }
        let discarded = outcomes.len() as u64 - trials;
        let (empirical_p, ci95, ci_method) = if trials == 0 {
            (0.5, 0.5, CiMethod::Normal)
        } else {
            let n = trials as f64;
            let p = correct as f64 / n;
            let normal = Z_95 * (p * (1.0 - p) / n).sqrt();
            if p >= 1.0 - 10.0 / n || p <= 10.0 / n {
                (p, normal.max(3.0 / n), CiMethod::RuleOfThree)
            } else {
                (p, normal, CiMethod::Normal)
            }
        };
        let empirical_adv = (empirical_p - 0.5).abs();
        let (published_adv, exact_adv) = references;
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            hash: HASH_ID.to_string(),
            protocol: protocol.kind(),
            strategy: strategy.to_string(),
            params: ReportParams::new(protocol, seed, trials_requested),
            trials,
            discarded,
            discard_reasons,
            correct,
            bit_zero,
            empirical_p,
            empirical_adv,
            ci95,
            ci_method,
            published_adv,
            exact_adv,
            exact_within_ci: exact_adv.map(|e| (e - empirical_adv).abs() <= ci95),
            published_outside_ci: published_adv.map(|v| (v - empirical_adv).abs() > ci95),
        }
    }

    pub fn summary(&self) -> String {
        let fmt_opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.5}"));
        let mut line = format!(
            "{} {} n={}: p={:.5} adv={:.5} ±{:.5} published={} exact={} trials={} discarded={}",
            self.protocol,
            self.strategy,
            self.params.hash_bits,
            self.empirical_p,
            self.empirical_adv,
            self.ci95,
            fmt_opt(self.published_adv),
            fmt_opt(self.exact_adv),
            self.trials,
            self.discarded,
        );
        if self.published_outside_ci == Some(true) {
            line.push_str(" [published value outside CI]");
        }
        line
    }
}

/// Runs `trials` independent games, each with fresh tags and its own
/// adversary from `factory`. Output does not depend on `execution`.
pub fn estimate_advantage<A, F>(
    factory: F,
    config: GameConfig,
    trials: u64,
    seed: u64,
    execution: Execution,
) -> AdvantageReport
where
    A: Adversary,
    F: Fn() -> A + Sync + Send,
{
    assert!(trials >= 1, "at least one trial");
    let probe = factory();
    let references = probe.reference_advantage(config.protocol.hash_bits());
    let name = probe.name();
    let outcomes = run_trials(trials, execution, |index| {
        let mut adversary = factory();
        run_upriv_game(&mut adversary, config, seed, index)
            .map(|o| (o.correct(), o.bit))
            .map_err(|e| e.to_string())
    });
    AdvantageReport::from_outcomes(&config.protocol, name, seed, trials, references, &outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fwcfp::FwcfpParams;

    #[test]
    fn closed_forms() {
        assert_eq!(published_advantage(1), 0.0);
        assert_eq!(published_advantage(8), 0.49609375);
        assert_eq!(exact_advantage(8), 0.498046875);
        assert_eq!(published_advantage(2), 0.25);
    }

    #[test]
    fn exact_advantage_by_enumeration() {
        // b uniform, the collision event has probability 2^-n and only
        // matters when b = 1; enumerate the four (b, collision) cells
        for n in 1..=12 {
            let c = 0.5f64.powi(n as i32);
            let mut p_correct = 0.0;
            for b in [0, 1] {
                for collide in [false, true] {
                    let weight = 0.5 * if collide { c } else { 1.0 - c };
                    let guess = if b == 0 || collide { 0 } else { 1 };
                    if guess == b {
                        p_correct += weight;
                    }
                }
            }
            assert!((exact_advantage(n) - (p_correct - 0.5)).abs() < 1e-15);
        }
        assert_eq!(exact_advantage(2), 0.375);
    }

    #[test]
    fn ci_switches_near_one() {
        let protocol = ProtocolParams::Fwcfp(FwcfpParams::default());
        let all: Vec<_> = (0..1000).map(|i| Ok((true, i % 2 == 0))).collect();
        let r = AdvantageReport::from_outcomes(&protocol, "x", 1, 1000, (None, None), &all);
        assert_eq!(r.ci_method, CiMethod::RuleOfThree);
        assert!((r.ci95 - 0.003).abs() < 1e-12);
        assert_eq!(r.bit_zero, 500);

        let half: Vec<_> = (0..1000).map(|i| Ok((i % 2 == 0, true))).collect();
        let r = AdvantageReport::from_outcomes(&protocol, "x", 1, 1000, (None, Some(0.0)), &half);
        assert_eq!(r.ci_method, CiMethod::Normal);
        assert!((r.ci95 - Z_95 * (0.25f64 / 1000.0).sqrt()).abs() < 1e-12);
        assert_eq!(r.exact_within_ci, Some(true));
    }

    #[test]
    fn discards_are_counted() {
        let protocol = ProtocolParams::Fwcfp(FwcfpParams::default());
        let outcomes = vec![Ok((true, false)), Err("budget".to_string()), Err("budget".to_string())];
        let r = AdvantageReport::from_outcomes(&protocol, "x", 1, 3, (None, None), &outcomes);
        assert_eq!((r.trials, r.discarded, r.correct), (1, 2, 1));
        assert_eq!(r.discard_reasons["budget"], 2);
    }
}
