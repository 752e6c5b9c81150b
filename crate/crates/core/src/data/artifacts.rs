//! `curve.csv` and `run.json`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{derive_seed, initial_draw_seed, RepeatRecord, RoundRecord, RunConfig, RunRecord, SeedPurpose};
use crate::error::{Error, Result};

pub const CURVE_HEADER: [&str; 7] =
    ["repeat", "round", "labeled_count", "test_acc", "val_acc", "train_seconds", "acq_seconds"];
pub const RUN_ARTIFACT_SCHEMA_VERSION: u32 = 1;

/// One `curve.csv` line.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub repeat: u32,
    pub round: RoundRecord,
}

/// 17 significant digits, enough to parse back the identical `f64`.
fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn curve_rows(repeats: &[RepeatRecord]) -> Vec<CurveRow> {
    repeats
        .iter()
        .flat_map(|r| r.rounds.iter().map(move |round| CurveRow { repeat: r.repeat, round: round.clone() }))
        .collect()
}

pub fn write_curve_csv<W: Write>(repeats: &[RepeatRecord], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(CURVE_HEADER)?;
    for row in curve_rows(repeats) {
        let r = &row.round;
        wtr.write_record([
            row.repeat.to_string(),
            r.round.to_string(),
            r.labeled_count.to_string(),
            fmt_float(r.test_accuracy),
            r.validation_accuracy.map(fmt_float).unwrap_or_default(),
            fmt_float(r.train_seconds),
            fmt_float(r.acquisition_seconds),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_curve_csv<R: Read>(reader: R) -> Result<Vec<CurveRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().ne(CURVE_HEADER) {
        return Err(Error::Parse { offset: 0, message: format!("unexpected curve header `{}`", header.iter().collect::<Vec<_>>().join(",")) });
    }
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let offset = record.position().map_or(0, |p| p.byte() as usize);
        let field = |i: usize| -> Result<&str> {
            record.get(i).ok_or_else(|| Error::Parse { offset, message: format!("missing column {}", CURVE_HEADER[i]) })
        };
        fn num<T: std::str::FromStr>(s: &str, offset: usize, name: &str) -> Result<T> {
            s.parse().map_err(|_| Error::Parse { offset, message: format!("bad {name} value `{s}`") })
        }
        let val = field(4)?;
        rows.push(CurveRow {
            repeat: num(field(0)?, offset, "repeat")?,
            round: RoundRecord {
                round: num(field(1)?, offset, "round")?,
                labeled_count: num(field(2)?, offset, "labeled_count")?,
                test_accuracy: num(field(3)?, offset, "test_acc")?,
                validation_accuracy: if val.is_empty() { None } else { Some(num(val, offset, "val_acc")?) },
                train_seconds: num(field(5)?, offset, "train_seconds")?,
                acquisition_seconds: num(field(6)?, offset, "acq_seconds")?,
            },
        });
    }
    Ok(rows)
}

/// Where a run was produced. No timestamps, so reruns write identical bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvironmentStamp {
    pub engine_version: String,
    pub os: String,
    pub arch: String,
}

impl EnvironmentStamp {
    pub fn current() -> Self {
        Self {
            engine_version: env!("CARGO_PKG_VERSION").to_string(),
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStamp {
    pub source: String,
    pub checksum: String,
    pub fingerprint: String,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

impl DatasetStamp {
    pub fn of(ds: &super::Dataset) -> Self {
        Self {
            source: ds.provenance.source.clone(),
            checksum: ds.provenance.checksum.clone(),
            fingerprint: ds.fingerprint(),
            train: ds.split.train.len(),
            validation: ds.split.validation.len(),
            test: ds.split.test.len(),
        }
    }
}

/// Seeds used by one repeat, listed for reproduction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepeatSeeds {
    pub repeat: u32,
    pub initial_draw: u64,
    pub model_init: Vec<u64>,
    pub shuffle: Vec<u64>,
    pub acquisition: Vec<u64>,
}

impl RepeatSeeds {
    /// Model and shuffle seeds for rounds `0..=num_rounds`, acquisition seeds for `1..=num_rounds`.
    pub fn derive(config: &RunConfig, repeat: u32, num_rounds: usize) -> Self {
        let per_round = |purpose, rounds: std::ops::RangeInclusive<usize>| -> Vec<u64> {
            rounds.map(|t| derive_seed(config.base_seed, repeat, t, purpose)).collect()
        };
        Self {
            repeat,
            initial_draw: initial_draw_seed(config, repeat),
            model_init: per_round(SeedPurpose::ModelInit, 0..=num_rounds),
            shuffle: per_round(SeedPurpose::Shuffle, 0..=num_rounds),
            acquisition: per_round(SeedPurpose::Acquisition, 1..=num_rounds),
        }
    }
}

/// Contents of `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArtifact {
    pub schema_version: u32,
    pub config: RunConfig,
    pub dataset: DatasetStamp,
    pub seeds: Vec<RepeatSeeds>,
    pub environment: EnvironmentStamp,
    pub record: RunRecord,
}

pub fn write_run_json<W: Write>(artifact: &RunArtifact, mut writer: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut writer, artifact)?;
    writer.write_all(b"\n")?;
    Ok(())
}

pub fn read_run_json<R: Read>(reader: R) -> Result<RunArtifact> {
    let value: serde_json::Value = serde_json::from_reader(reader)?;
    let found = value.get("schema_version").and_then(|v| v.as_u64());
    match found {
        Some(v) if v == RUN_ARTIFACT_SCHEMA_VERSION as u64 => Ok(serde_json::from_value(value)?),
        other => Err(Error::SchemaVersion {
            found: other.map_or(0, |v| v.min(u32::MAX as u64) as u32),
            expected: RUN_ARTIFACT_SCHEMA_VERSION,
        }),
    }
}

/// Write to a sibling temporary file, then rename over `path`.
pub fn write_atomically(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or_default()
    ));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
