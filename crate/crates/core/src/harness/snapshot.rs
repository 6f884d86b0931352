//! Versioned JSON snapshots of the reader database.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::feistel::PermKey;
use crate::fwcfp::{FwcfpError, FwcfpParams, FwcfpReader};
use crate::hash::HASH_ID;
use crate::lwjx::{LwjxError, LwjxParams, LwjxReader, LwjxRecord};

pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum SnapshotError {
    #[error("malformed snapshot: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("snapshot version {found} is not supported (expected {SNAPSHOT_VERSION})")]
    Version { found: u32 },
    #[error("snapshot was taken with hash {0}")]
    Hash(String),
    #[error("snapshot has no master key; it was taken without --include-master-key")]
    Redacted,
    #[error("snapshot holds a {0} database")]
    WrongProtocol(&'static str),
    #[error(transparent)]
    Fwcfp(#[from] FwcfpError),
    #[error(transparent)]
    Lwjx(#[from] LwjxError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FwcfpRow {
    pub idt: BitString,
    pub key: BitString,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "protocol", rename_all = "lowercase")]
pub enum Database {
    Fwcfp {
        params: FwcfpParams,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        master_key: Option<PermKey>,
        records: Vec<FwcfpRow>,
    },
    Lwjx {
        params: LwjxParams,
        records: Vec<LwjxRecord>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub version: u32,
    pub hash: String,
    #[serde(flatten)]
    pub database: Database,
}

impl Snapshot {
    /// The master key is left out unless `include_master_key` is set.
    pub fn of_fwcfp(reader: &FwcfpReader, include_master_key: bool) -> Self {
        Self::wrap(Database::Fwcfp {
            params: *reader.params(),
            master_key: include_master_key.then(|| reader.master_key().clone()),
            records: reader
                .registry()
                .iter()
                .map(|(idt, key)| FwcfpRow {
                    idt: idt.clone(),
                    key: key.clone(),
                })
                .collect(),
        })
    }

    pub fn of_lwjx(reader: &LwjxReader) -> Self {
        Self::wrap(Database::Lwjx {
            params: *reader.params(),
            records: reader.records().to_vec(),
        })
    }

    fn wrap(database: Database) -> Self {
        Self {
            version: SNAPSHOT_VERSION,
            hash: HASH_ID.to_string(),
            database,
        }
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("snapshot serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self, SnapshotError> {
        let raw: serde_json::Value = serde_json::from_str(text)?;
        let found = raw.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if found != SNAPSHOT_VERSION {
            return Err(SnapshotError::Version { found });
        }
        let snapshot: Snapshot = serde_json::from_value(raw)?;
        if snapshot.hash != HASH_ID {
            return Err(SnapshotError::Hash(snapshot.hash));
        }
        Ok(snapshot)
    }

    pub fn into_fwcfp(self) -> Result<FwcfpReader, SnapshotError> {
        let Database::Fwcfp {
            params,
            master_key,
            records,
        } = self.database
        else {
            return Err(SnapshotError::WrongProtocol("lwjx"));
        };
        let mut reader = FwcfpReader::new(params, master_key.ok_or(SnapshotError::Redacted)?)?;
        for row in records {
            reader.insert_record(row.idt, row.key)?;
        }
        Ok(reader)
    }

    pub fn into_lwjx(self) -> Result<LwjxReader, SnapshotError> {
        match self.database {
            Database::Lwjx { params, records } => Ok(LwjxReader::from_records(params, records)?),
            Database::Fwcfp { .. } => Err(SnapshotError::WrongProtocol("fwcfp")),
        }
    }
}

/// Top-level JSON fields that differ between two LWJX snapshots, per record.
pub fn lwjx_record_diff(before: &LwjxRecord, after: &LwjxRecord) -> Vec<&'static str> {
    let a = serde_json::to_value(before).expect("record serializes");
    let b = serde_json::to_value(after).expect("record serializes");
    let (a, b): (BTreeMap<String, _>, BTreeMap<String, _>) = (
        serde_json::from_value(a).expect("object"),
        serde_json::from_value::<BTreeMap<String, serde_json::Value>>(b).expect("object"),
    );
    ["id", "h_id_new", "h_id_old", "k_new", "k_old", "m"]
        .into_iter()
        .filter(|k| a.get(*k) != b.get(*k))
        .collect()
}
