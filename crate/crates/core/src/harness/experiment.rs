use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::config::{ConfigError, Experiment, ExperimentConfig, OutputFormat};
use crate::attacks::{fwcfp_desync_attack, DesyncOutcome, FwcfpBackTrace, FwcfpTrace, LwjxTrace};
use crate::bits::BitString;
use crate::fwcfp::{self, FwcfpParams, FwcfpReader, FwcfpTag};
use crate::game::{
    estimate_advantage, AdvantageReport, GameConfig, ProtocolParams, ReportParams, REPORT_SCHEMA_VERSION,
};
use crate::hash::HASH_ID;
use crate::lwjx::{self, AuthBranch, LwjxParams, LwjxReader, LwjxTag};
use crate::rng::StreamRng;
use crate::session::ProtocolKind;
use crate::transcript::{EntryKind, Sender, Transcript, TranscriptEntry, TranscriptHeader};

/// Largest accepted gap between measured and exact advantage.
pub const ADVANTAGE_TOLERANCE: f64 = 0.01;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HonestReport {
    pub schema_version: u32,
    pub hash: String,
    pub protocol: ProtocolKind,
    pub experiment: Experiment,
    pub params: ReportParams,
    pub sessions: u64,
    /// Sessions the reader eventually accepted.
    pub authenticated: u64,
    /// Sessions that ended with both parties accepting.
    pub both_accept: u64,
    pub failures: u64,
    pub first_failure: Option<u64>,
    pub reject_reasons: BTreeMap<String, u64>,
    /// Sessions after which tag and database disagreed.
    pub invariant_violations: u64,
    pub first_invariant_violation: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drop_flow3_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dropped_flow3: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub new_branch_accepts: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub old_branch_accepts: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_m: Option<u32>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesyncReport {
    pub schema_version: u32,
    pub hash: String,
    pub protocol: ProtocolKind,
    pub experiment: Experiment,
    pub params: ReportParams,
    pub runs: u64,
    pub attempts_per_run: u64,
    pub tag_accepts: u64,
    pub alias_shift_matches: u64,
    pub rejects: u64,
    pub passed: bool,
    pub outcomes: Vec<DesyncOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Report {
    Advantage(AdvantageReport),
    Desync(DesyncReport),
    Honest(HonestReport),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub report: Report,
    pub summary: String,
    pub passed: bool,
    /// Rendered report in the configured format.
    pub rendered: String,
}

/// Runs the configured experiment and writes the report (and transcript,
/// if requested). Nothing is written when the configuration is invalid.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult, HarnessError> {
    let params = config.validate()?;
    let (report, transcript) = match config.experiment {
        Experiment::Honest => {
            let (r, t) = match params {
                ProtocolParams::Fwcfp(p) => honest_fwcfp(config, p),
                ProtocolParams::Lwjx(p) => honest_lwjx(config, p),
            };
            (Report::Honest(r), Some(t))
        }
        Experiment::Desync => {
            let ProtocolParams::Fwcfp(p) = params else {
                unreachable!("validated")
            };
            (Report::Desync(desync(config, p)), None)
        }
        Experiment::Trace | Experiment::Backtrace => (Report::Advantage(advantage(config, params)), None),
    };
    let (summary, passed) = assess(&report);
    let rendered = render(&report, config.format)?;
    if let Some(path) = &config.output {
        write(path, &rendered)?;
    }
    if let (Some(path), Some(t)) = (&config.transcript, transcript) {
        write(path, &t)?;
    }
    Ok(ExperimentResult {
        report,
        summary,
        passed,
        rendered,
    })
}

fn write(path: &Path, text: &str) -> Result<(), HarnessError> {
    fs::write(path, text).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn assess(report: &Report) -> (String, bool) {
    match report {
        Report::Advantage(r) => {
            let passed = r
                .exact_adv
                .is_some_and(|e| (r.empirical_adv - e).abs() <= ADVANTAGE_TOLERANCE);
            (r.summary(), passed)
        }
        Report::Desync(r) => (
            format!(
                "{} desync: runs={} tag_accepts={} alias_shift={} rejects={}/{}",
                r.protocol,
                r.runs,
                r.tag_accepts,
                r.alias_shift_matches,
                r.rejects,
                r.runs * r.attempts_per_run
            ),
            r.passed,
        ),
        Report::Honest(r) => {
            let mut line = format!(
                "{} honest: sessions={} authenticated={} both_accept={} invariant_violations={}",
                r.protocol, r.sessions, r.authenticated, r.both_accept, r.invariant_violations
            );
            if let (Some(dropped), Some(old), Some(max_m)) = (r.dropped_flow3, r.old_branch_accepts, r.max_m) {
                line.push_str(&format!(" dropped_flow3={dropped} old_branch={old} max_m={max_m}"));
            }
            if let Some(first) = r.first_failure {
                line.push_str(&format!(" first_failure={first}"));
            }
            (line, r.passed)
        }
    }
}

fn honest_report(protocol: &ProtocolParams, config: &ExperimentConfig) -> HonestReport {
    HonestReport {
        schema_version: REPORT_SCHEMA_VERSION,
        hash: HASH_ID.to_string(),
        protocol: protocol.kind(),
        experiment: Experiment::Honest,
        params: ReportParams::new(protocol, config.seed, config.trials),
        sessions: config.trials,
        authenticated: 0,
        both_accept: 0,
        failures: 0,
        first_failure: None,
        reject_reasons: BTreeMap::new(),
        invariant_violations: 0,
        first_invariant_violation: None,
        drop_flow3_rate: None,
        dropped_flow3: None,
        new_branch_accepts: None,
        old_branch_accepts: None,
        max_m: None,
        passed: false,
    }
}

fn note_reject(report: &mut HonestReport, transcript: &Transcript) {
    for (_, outcome) in transcript.outcomes().filter(|(_, o)| o.starts_with("reject")) {
        *report.reject_reasons.entry(outcome.to_string()).or_insert(0) += 1;
    }
}

fn disclosure(fields: &[(&str, BitString)]) -> TranscriptEntry {
    TranscriptEntry {
        session: 0,
        flow: 0,
        sender: Sender::Disclosure,
        kind: EntryKind::Message,
        outcome: None,
        fields: fields.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
    }
}

fn salt_bits(salt: u64) -> BitString {
    BitString::from_u64(64, salt).expect("64 bits")
}

/// Provisions one FWCFP tag for honest or attack runs.
pub fn provision_fwcfp<R: RngCore + ?Sized>(params: FwcfpParams, rng: &mut R) -> (FwcfpTag, FwcfpReader) {
    let mut reader = FwcfpReader::with_random_key(params, rng).expect("validated params");
    let idt = BitString::random(params.id_bits, rng);
    let key = BitString::random(params.key_bits, rng);
    let tag = reader.register(idt, key, rng).expect("empty registry");
    (tag, reader)
}

fn fwcfp_consistent(tag: &FwcfpTag, reader: &FwcfpReader) -> bool {
    reader
        .open_alias(tag.alias())
        .is_ok_and(|(idt, _)| idt == *tag.bookkeeping_idt() && reader.registry().get(&idt) == Some(tag.key()))
}

fn honest_fwcfp(config: &ExperimentConfig, params: FwcfpParams) -> (HonestReport, String) {
    let protocol = ProtocolParams::Fwcfp(params);
    let mut rng = StreamRng::new(config.seed, 0);
    let (mut tag, reader) = provision_fwcfp(params, &mut rng);
    let mut report = honest_report(&protocol, config);
    let mut log = Transcript::new();
    log.push(disclosure(&[
        ("ks", reader.master_key().material().clone()),
        ("key", tag.key().clone()),
        ("idt", tag.bookkeeping_idt().clone()),
        ("alias", tag.alias().clone()),
        ("salt", salt_bits(params.salt)),
    ]));
    for i in 0..config.trials {
        let run = fwcfp::run_honest_session(&mut tag, &reader, &mut rng, i + 1);
        if run.reader.is_some_and(|v| v.is_accept()) {
            report.authenticated += 1;
        }
        if run.both_accept() {
            report.both_accept += 1;
        } else {
            report.failures += 1;
            report.first_failure.get_or_insert(i);
            note_reject(&mut report, &run.transcript);
        }
        if !fwcfp_consistent(&tag, &reader) {
            report.invariant_violations += 1;
            report.first_invariant_violation.get_or_insert(i);
        }
        log.extend(run.transcript);
    }
    report.passed = report.both_accept == report.sessions && report.invariant_violations == 0;
    let text = log.to_jsonl_with_header(&TranscriptHeader::new(ProtocolKind::Fwcfp));
    (report, text)
}

/// Provisions one LWJX tag.
pub fn provision_lwjx<R: RngCore + ?Sized>(params: LwjxParams, rng: &mut R) -> (LwjxTag, LwjxReader) {
    let mut reader = LwjxReader::new(params).expect("validated params");
    let id = BitString::random(params.width, rng);
    let key = BitString::random(params.width, rng);
    let tag = reader.provision(id, key).expect("width");
    (tag, reader)
}

fn honest_lwjx(config: &ExperimentConfig, params: LwjxParams) -> (HonestReport, String) {
    let protocol = ProtocolParams::Lwjx(params);
    let mut rng = StreamRng::new(config.seed, 0);
    let mut loss = StreamRng::new(config.seed, 1);
    let (mut tag, mut reader) = provision_lwjx(params, &mut rng);
    let mut report = honest_report(&protocol, config);
    let (mut dropped, mut new_branch, mut old_branch, mut max_m) = (0, 0, 0, 0);
    let mut log = Transcript::new();
    let secrets = tag.secrets();
    log.push(disclosure(&[
        ("id", secrets.id),
        ("key", secrets.key),
        ("salt", salt_bits(params.salt)),
    ]));
    let mut session_id = 0;
    for i in 0..config.trials {
        let mut authenticated = false;
        let mut completed = false;
        for _ in 0..=config.retries {
            session_id += 1;
            let drop = loss.gen_bool(config.drop_flow3_rate);
            let run = lwjx::run_honest_session(&mut tag, &mut reader, &mut rng, session_id, drop);
            if drop && run.reader_accepted() {
                dropped += 1;
            }
            match run.authenticated.map(|a| a.branch) {
                Some(AuthBranch::New) => new_branch += 1,
                Some(AuthBranch::Old) => old_branch += 1,
                None => note_reject(&mut report, &run.transcript),
            }
            max_m = max_m.max(reader.records()[0].m);
            authenticated = run.reader_accepted();
            completed = run.both_accept();
            log.extend(run.transcript);
            if authenticated {
                break;
            }
        }
        if authenticated {
            report.authenticated += 1;
        } else {
            report.failures += 1;
            report.first_failure.get_or_insert(i);
        }
        if completed {
            report.both_accept += 1;
        }
        if !reader.records()[0].synchronized_with(&params, &tag.secrets()) {
            report.invariant_violations += 1;
            report.first_invariant_violation.get_or_insert(i);
        }
    }
    report.drop_flow3_rate = Some(config.drop_flow3_rate);
    report.dropped_flow3 = Some(dropped);
    report.new_branch_accepts = Some(new_branch);
    report.old_branch_accepts = Some(old_branch);
    report.max_m = Some(max_m);
    report.passed =
        report.authenticated == report.sessions && max_m <= params.m_limit && report.invariant_violations == 0;
    let text = log.to_jsonl_with_header(&TranscriptHeader::new(ProtocolKind::Lwjx));
    (report, text)
}

fn desync(config: &ExperimentConfig, params: FwcfpParams) -> DesyncReport {
    let protocol = ProtocolParams::Fwcfp(params);
    let outcomes: Vec<DesyncOutcome> = (0..config.trials)
        .map(|i| {
            let mut rng = StreamRng::new(config.seed, i);
            let (mut tag, reader) = provision_fwcfp(params, &mut rng);
            let mask = config
                .mask
                .clone()
                .unwrap_or_else(|| BitString::random_nonzero(params.alias_bits(), &mut rng));
            fwcfp_desync_attack(&mut tag, &reader, &mask, config.attempts, &mut rng).expect("validated mask")
        })
        .collect();
    let tag_accepts = outcomes.iter().filter(|o| o.tag_accepted).count() as u64;
    let alias_shift_matches = outcomes.iter().filter(|o| o.alias_shifted_by_mask()).count() as u64;
    let rejects = outcomes.iter().map(|o| o.rejects).sum();
    let runs = config.trials;
    DesyncReport {
        schema_version: REPORT_SCHEMA_VERSION,
        hash: HASH_ID.to_string(),
        protocol: ProtocolKind::Fwcfp,
        experiment: Experiment::Desync,
        params: ReportParams::new(&protocol, config.seed, runs),
        runs,
        attempts_per_run: config.attempts,
        tag_accepts,
        alias_shift_matches,
        rejects,
        passed: tag_accepts == runs && alias_shift_matches == runs && rejects == runs * config.attempts,
        outcomes,
    }
}

fn advantage(config: &ExperimentConfig, params: ProtocolParams) -> AdvantageReport {
    let game = GameConfig::new(params);
    let (trials, seed, exec) = (config.trials, config.seed, config.execution);
    match (params, config.experiment) {
        (ProtocolParams::Fwcfp(_), Experiment::Trace) => {
            estimate_advantage(FwcfpTrace::default, game, trials, seed, exec)
        }
        (ProtocolParams::Fwcfp(_), Experiment::Backtrace) => {
            estimate_advantage(FwcfpBackTrace::default, game, trials, seed, exec)
        }
        (ProtocolParams::Lwjx(_), Experiment::Trace) => {
            let mode = config.mode;
            estimate_advantage(move || LwjxTrace::new(mode), game, trials, seed, exec)
        }
        _ => unreachable!("validated"),
    }
}

#[derive(Serialize)]
struct AdvantageRow<'a> {
    schema_version: u32,
    hash: &'a str,
    protocol: ProtocolKind,
    strategy: &'a str,
    hash_bits: usize,
    seed: u64,
    trials: u64,
    discarded: u64,
    correct: u64,
    bit_zero: u64,
    empirical_p: f64,
    empirical_adv: f64,
    ci95: f64,
    ci_method: crate::game::CiMethod,
    published_adv: Option<f64>,
    exact_adv: Option<f64>,
    exact_within_ci: Option<bool>,
    published_outside_ci: Option<bool>,
}

#[derive(Serialize)]
struct DesyncRow<'a> {
    run: usize,
    mask: &'a BitString,
    tag_accepted: bool,
    alias_shifted_by_mask: bool,
    attempts: u64,
    rejects: u64,
}

#[derive(Serialize)]
struct HonestRow {
    schema_version: u32,
    protocol: ProtocolKind,
    seed: u64,
    sessions: u64,
    authenticated: u64,
    both_accept: u64,
    failures: u64,
    first_failure: Option<u64>,
    invariant_violations: u64,
    first_invariant_violation: Option<u64>,
    dropped_flow3: Option<u64>,
    new_branch_accepts: Option<u64>,
    old_branch_accepts: Option<u64>,
    max_m: Option<u32>,
    passed: bool,
}

/// Serializes a report as pretty JSON or as CSV rows.
pub fn render(report: &Report, format: OutputFormat) -> Result<String, HarnessError> {
    if format == OutputFormat::Json {
        let mut text = serde_json::to_string_pretty(report).expect("report serializes");
        text.push('\n');
        return Ok(text);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    match report {
        Report::Advantage(r) => w.serialize(AdvantageRow {
            schema_version: r.schema_version,
            hash: &r.hash,
            protocol: r.protocol,
            strategy: &r.strategy,
            hash_bits: r.params.hash_bits,
            seed: r.params.seed,
            trials: r.trials,
            discarded: r.discarded,
            correct: r.correct,
            bit_zero: r.bit_zero,
            empirical_p: r.empirical_p,
            empirical_adv: r.empirical_adv,
            ci95: r.ci95,
            ci_method: r.ci_method,
            published_adv: r.published_adv,
            exact_adv: r.exact_adv,
            exact_within_ci: r.exact_within_ci,
            published_outside_ci: r.published_outside_ci,
        })?,
        Report::Desync(r) => {
            for (run, o) in r.outcomes.iter().enumerate() {
                w.serialize(DesyncRow {
                    run,
                    mask: &o.mask,
                    tag_accepted: o.tag_accepted,
                    alias_shifted_by_mask: o.alias_shifted_by_mask(),
                    attempts: o.post_attack_attempts,
                    rejects: o.rejects,
                })?;
            }
        }
        Report::Honest(r) => w.serialize(HonestRow {
            schema_version: r.schema_version,
            protocol: r.protocol,
            seed: r.params.seed,
            sessions: r.sessions,
            authenticated: r.authenticated,
            both_accept: r.both_accept,
            failures: r.failures,
            first_failure: r.first_failure,
            invariant_violations: r.invariant_violations,
            first_invariant_violation: r.first_invariant_violation,
            dropped_flow3: r.dropped_flow3,
            new_branch_accepts: r.new_branch_accepts,
            old_branch_accepts: r.old_branch_accepts,
            max_m: r.max_m,
            passed: r.passed,
        })?,
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(protocol: ProtocolKind, experiment: Experiment) -> ExperimentConfig {
        ExperimentConfig {
            trials: 50,
            attempts: 5,
            ..ExperimentConfig::new(protocol, experiment)
        }
    }

    #[test]
    fn honest_fwcfp_passes() {
        let r = run_experiment(&config(ProtocolKind::Fwcfp, Experiment::Honest)).unwrap();
        assert!(r.passed, "{}", r.summary);
    }

    #[test]
    fn honest_lwjx_without_loss_passes() {
        let r = run_experiment(&config(ProtocolKind::Lwjx, Experiment::Honest)).unwrap();
        assert!(r.passed, "{}", r.summary);
        let Report::Honest(h) = r.report else { panic!() };
        assert_eq!(h.new_branch_accepts, Some(50));
        assert_eq!(h.max_m, Some(0));
    }

    #[test]
    fn desync_rejects_everything() {
        let r = run_experiment(&config(ProtocolKind::Fwcfp, Experiment::Desync)).unwrap();
        assert!(r.passed, "{}", r.summary);
        let Report::Desync(d) = r.report else { panic!() };
        assert_eq!(d.rejects, 250);
        let reason = format!("reject:{}", crate::session::RejectReason::UnknownIdt.code());
        assert!(d.outcomes.iter().all(|o| o.reject_reasons[&reason] == 5));
    }

    #[test]
    fn csv_and_json_agree() {
        let mut c = config(ProtocolKind::Fwcfp, Experiment::Trace);
        c.hash_bits = Some(4);
        let json = run_experiment(&c).unwrap();
        c.format = OutputFormat::Csv;
        let csv_text = run_experiment(&c).unwrap().rendered;
        let Report::Advantage(r) = json.report else { panic!() };
        let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
        let headers = reader.headers().unwrap().clone();
        let row = reader.records().next().unwrap().unwrap();
        let get = |name: &str| row.get(headers.iter().position(|h| h == name).unwrap()).unwrap();
        assert_eq!(get("empirical_p").parse::<f64>().unwrap(), r.empirical_p);
        assert_eq!(get("ci95").parse::<f64>().unwrap(), r.ci95);
        assert_eq!(get("exact_adv").parse::<f64>().unwrap(), r.exact_adv.unwrap());
        assert_eq!(get("trials").parse::<u64>().unwrap(), r.trials);
    }

    #[test]
    fn invalid_config_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("report.json");
        let mut c = config(ProtocolKind::Lwjx, Experiment::Backtrace);
        c.output = Some(out.clone());
        assert!(matches!(run_experiment(&c), Err(HarnessError::Config(_))));
        assert!(!out.exists());
    }

    #[test]
    fn reports_are_reproducible() {
        let mut c = config(ProtocolKind::Lwjx, Experiment::Trace);
        c.hash_bits = Some(4);
        let a = run_experiment(&c).unwrap().rendered;
        c.execution = crate::game::Execution::Sequential;
        let b = run_experiment(&c).unwrap().rendered;
        assert_eq!(a, b);
    }
}
