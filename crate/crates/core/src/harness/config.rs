use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::attacks::LwjxGuessMode;
use crate::bits::BitString;
use crate::fwcfp::FwcfpParams;
use crate::game::{Execution, ProtocolParams};
use crate::lwjx::{LwjxParams, DEFAULT_M_LIMIT};
use crate::rng::DEFAULT_SEED;
use crate::session::ProtocolKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Honest,
    Desync,
    Trace,
    Backtrace,
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Experiment::Honest => "honest",
            Experiment::Desync => "desync",
            Experiment::Trace => "trace",
            Experiment::Backtrace => "backtrace",
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("{0} is not defined for {1}")]
    Unsupported(Experiment, ProtocolKind),
    #[error("{0} must be positive")]
    ZeroWidth(&'static str),
    #[error("LWJX uses a single width for identifiers, keys, nonces and hashes; got {0}")]
    MixedWidths(String),
    #[error("FWCFP alias width id_bits + rand0_bits = {0} must be even")]
    OddAlias(usize),
    #[error("trials must be at least 1")]
    NoTrials,
    #[error("m_limit only applies to LWJX")]
    MLimitWithoutLwjx,
    #[error("drop rate {0} is outside [0, 1]")]
    DropRate(f64),
    #[error("mask has {got} bits, alias is {expected}")]
    MaskWidth { got: usize, expected: usize },
    #[error("mask must be nonzero")]
    ZeroMask,
    #[error("{0}")]
    Invalid(String),
}

/// One experiment run. Widths left as `None` take the protocol default.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub protocol: ProtocolKind,
    pub experiment: Experiment,
    pub trials: u64,
    pub id_bits: Option<usize>,
    pub key_bits: Option<usize>,
    pub nonce_bits: Option<usize>,
    pub hash_bits: Option<usize>,
    pub rand0_bits: Option<usize>,
    pub m_limit: Option<u32>,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub format: OutputFormat,
    pub execution: Execution,
    /// LWJX trace guess rule.
    pub mode: LwjxGuessMode,
    /// Desync: honest sessions after each attack.
    pub attempts: u64,
    /// Desync: fixed mask instead of a fresh one per run.
    pub mask: Option<BitString>,
    /// Honest LWJX: probability that flow 3 is lost.
    pub drop_flow3_rate: f64,
    /// Honest LWJX: extra attempts for a session the reader rejected.
    pub retries: u32,
    /// Honest runs: JSON-lines transcript with disclosed secrets.
    pub transcript: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(protocol: ProtocolKind, experiment: Experiment) -> Self {
        Self {
            protocol,
            experiment,
            trials: 1000,
            id_bits: None,
            key_bits: None,
            nonce_bits: None,
            hash_bits: None,
            rand0_bits: None,
            m_limit: None,
            seed: DEFAULT_SEED,
            output: None,
            format: OutputFormat::Json,
            execution: Execution::Parallel,
            mode: LwjxGuessMode::ByIdHash,
            attempts: 100,
            mask: None,
            drop_flow3_rate: 0.0,
            retries: 3,
            transcript: None,
        }
    }

    /// Checks the configuration and resolves the protocol parameters.
    pub fn validate(&self) -> Result<ProtocolParams, ConfigError> {
        if self.trials == 0 {
            return Err(ConfigError::NoTrials);
        }
        if !(0.0..=1.0).contains(&self.drop_flow3_rate) {
            return Err(ConfigError::DropRate(self.drop_flow3_rate));
        }
        let widths = [
            ("id_bits", self.id_bits),
            ("key_bits", self.key_bits),
            ("nonce_bits", self.nonce_bits),
            ("hash_bits", self.hash_bits),
            ("rand0_bits", self.rand0_bits),
        ];
        if let Some((name, _)) = widths.iter().find(|(_, w)| *w == Some(0)) {
            return Err(ConfigError::ZeroWidth(name));
        }
        let params = match self.protocol {
            ProtocolKind::Fwcfp => {
                if self.experiment == Experiment::Honest && self.drop_flow3_rate > 0.0 {
                    return Err(ConfigError::Invalid("drop_flow3_rate only applies to LWJX".to_string()));
                }
                if self.m_limit.is_some() {
                    return Err(ConfigError::MLimitWithoutLwjx);
                }
                let d = FwcfpParams::default();
                let p = FwcfpParams {
                    id_bits: self.id_bits.unwrap_or(d.id_bits),
                    key_bits: self.key_bits.unwrap_or(d.key_bits),
                    nonce_bits: self.nonce_bits.unwrap_or(d.nonce_bits),
                    hash_bits: self.hash_bits.unwrap_or(d.hash_bits),
                    rand0_bits: self.rand0_bits.unwrap_or(d.rand0_bits),
                    salt: 0,
                };
                if p.alias_bits() % 2 == 1 {
                    return Err(ConfigError::OddAlias(p.alias_bits()));
                }
                if let Some(mask) = &self.mask {
                    if mask.width() != p.alias_bits() {
                        return Err(ConfigError::MaskWidth {
                            got: mask.width(),
                            expected: p.alias_bits(),
                        });
                    }
                    if mask.is_zero() {
                        return Err(ConfigError::ZeroMask);
                    }
                }
                ProtocolParams::Fwcfp(p)
            }
            ProtocolKind::Lwjx => {
                match self.experiment {
                    Experiment::Desync | Experiment::Backtrace => {
                        return Err(ConfigError::Unsupported(self.experiment, self.protocol))
                    }
                    Experiment::Honest | Experiment::Trace => {}
                }
                if self.rand0_bits.is_some() {
                    return Err(ConfigError::Invalid("rand0_bits only applies to FWCFP".to_string()));
                }
                let given: Vec<(&str, usize)> = widths.iter().filter_map(|(name, w)| w.map(|w| (*name, w))).collect();
                let width = given.first().map_or(LwjxParams::default().width, |(_, w)| *w);
                if given.iter().any(|(_, w)| *w != width) {
                    let listed: Vec<String> = given.iter().map(|(n, w)| format!("{n}={w}")).collect();
                    return Err(ConfigError::MixedWidths(listed.join(", ")));
                }
                ProtocolParams::Lwjx(LwjxParams {
                    width,
                    m_limit: self.m_limit.unwrap_or(DEFAULT_M_LIMIT),
                    salt: 0,
                })
            }
        };
        if self.mask.is_some() && self.experiment != Experiment::Desync {
            return Err(ConfigError::Invalid("mask only applies to desync".to_string()));
        }
        Ok(params)
    }
}
