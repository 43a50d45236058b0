//! Output files and the run manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::LabError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub seconds: f64,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
    /// Column descriptions for CSV files.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub columns: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Pass,
    Fail,
    Inconclusive,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            Self::Pass => 0,
            Self::Fail => 1,
            Self::Inconclusive => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    /// `(crate, version)`.
    pub versions: Vec<(String, String)>,
    pub status: RunStatus,
    pub stages: Vec<StageRecord>,
    pub artifacts: Vec<Artifact>,
}

impl RunManifest {
    /// Equal up to stage timings.
    pub fn same_outputs(&self, other: &RunManifest) -> bool {
        let strip = |m: &RunManifest| {
            let mut m = m.clone();
            m.stages.iter_mut().for_each(|s| s.seconds = 0.0);
            m
        };
        strip(self) == strip(other)
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }
}

/// Collects stage records and files for one run in `dir`.
#[derive(Debug)]
pub struct Recorder {
    dir: PathBuf,
    command: String,
    config_hash: String,
    stages: Vec<StageRecord>,
    artifacts: Vec<Artifact>,
}

impl Recorder {
    pub fn new(dir: &Path, command: &str, config_hash: String) -> Result<Self, LabError> {
        std::fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            command: command.into(),
            config_hash,
            stages: Vec::new(),
            artifacts: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Run `f` as stage `name`; errors are tagged with the stage.
    pub fn stage<T>(
        &mut self,
        name: &str,
        f: impl FnOnce() -> Result<(T, bool, String), drift_core::Error>,
    ) -> Result<T, LabError> {
        let t = Instant::now();
        match f() {
            Ok((v, passed, detail)) => {
                self.push(name, t.elapsed().as_secs_f64(), passed, detail);
                Ok(v)
            }
            Err(e) => {
                self.push(name, t.elapsed().as_secs_f64(), false, e.to_string());
                Err(LabError::Stage {
                    stage: name.into(),
                    source: e,
                })
            }
        }
    }

    pub fn all_passed(&self) -> bool {
        self.stages.iter().all(|s| s.passed)
    }

    pub fn push(&mut self, name: &str, seconds: f64, passed: bool, detail: String) {
        self.stages.push(StageRecord {
            name: name.into(),
            seconds,
            passed,
            detail,
        });
    }

    fn add(&mut self, name: &str, bytes: Vec<u8>, columns: Vec<String>) -> Result<(), LabError> {
        let path = self.dir.join(name);
        std::fs::write(&path, &bytes).map_err(|e| LabError::io(&path, e))?;
        self.artifacts.push(Artifact {
            path: name.into(),
            sha256: hex::encode(Sha256::digest(&bytes)),
            bytes: bytes.len(),
            columns,
        });
        Ok(())
    }

    pub fn json(&mut self, name: &str, value: &impl Serialize) -> Result<(), LabError> {
        let mut bytes =
            serde_json::to_vec_pretty(value).map_err(|e| LabError::Output(e.to_string()))?;
        bytes.push(b'\n');
        self.add(name, bytes, Vec::new())
    }

    /// `columns` are `(header, description)` pairs.
    pub fn csv<R: AsRef<[f64]>>(
        &mut self,
        name: &str,
        columns: &[(&str, &str)],
        rows: &[R],
    ) -> Result<(), LabError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let fail = |e: csv::Error| LabError::Output(e.to_string());
        w.write_record(columns.iter().map(|c| c.0)).map_err(fail)?;
        for r in rows {
            w.write_record(r.as_ref().iter().map(|v| v.to_string()))
                .map_err(fail)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| LabError::Output(e.to_string()))?;
        let cols = columns.iter().map(|(h, d)| format!("{h}: {d}")).collect();
        self.add(name, bytes, cols)
    }

    /// CSV with string cells.
    pub fn table(
        &mut self,
        name: &str,
        columns: &[(&str, &str)],
        rows: &[Vec<String>],
    ) -> Result<(), LabError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let fail = |e: csv::Error| LabError::Output(e.to_string());
        w.write_record(columns.iter().map(|c| c.0)).map_err(fail)?;
        for r in rows {
            w.write_record(r).map_err(fail)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| LabError::Output(e.to_string()))?;
        let cols = columns.iter().map(|(h, d)| format!("{h}: {d}")).collect();
        self.add(name, bytes, cols)
    }

    /// Write `manifest.json` and return the manifest.
    pub fn finish(self, status: RunStatus) -> Result<RunManifest, LabError> {
        let manifest = RunManifest {
            command: self.command,
            config_hash: self.config_hash,
            versions: vec![
                ("drift-core".into(), drift_core::VERSION.into()),
                ("drift-lab".into(), env!("CARGO_PKG_VERSION").into()),
            ],
            status,
            stages: self.stages,
            artifacts: self.artifacts,
        };
        let path = self.dir.join("manifest.json");
        let text =
            serde_json::to_string_pretty(&manifest).map_err(|e| LabError::Output(e.to_string()))?;
        std::fs::write(&path, text + "\n").map_err(|e| LabError::io(&path, e))?;
        Ok(manifest)
    }
}

/// Recompute the checksum of every artifact listed in `manifest`.
pub fn verify_artifacts(dir: &Path, manifest: &RunManifest) -> Vec<String> {
    manifest
        .artifacts
        .iter()
        .filter_map(|a| match std::fs::read(dir.join(&a.path)) {
            Ok(bytes) if hex::encode(Sha256::digest(&bytes)) == a.sha256 => None,
            Ok(_) => Some(format!("{}: checksum mismatch", a.path)),
            Err(e) => Some(format!("{}: {e}", a.path)),
        })
        .collect()
}

/// Read a numeric CSV written by [`Recorder::csv`].
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), LabError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| LabError::Output(e.to_string()))?;
    let header = r
        .headers()
        .map_err(|e| LabError::Output(e.to_string()))?
        .iter()
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| LabError::Output(e.to_string()))?;
        let row = rec
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|e| LabError::Output(format!("{s}: {e}")))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}
