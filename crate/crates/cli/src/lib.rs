//! Pipeline orchestration behind the `affect` binary.
//!
//! Every command writes below one run directory:
//!
//! ```text
//! <run>/encoders/<name>/      checkpoint, config.json, history.tsv, evaluation.json,
//!                             representations_{train,validation}.json (after `extract`)
//! <run>/fusion/<combo>/       model.json, support vectors, evaluation.json, row.json
//! <run>/report/               single_modal.txt, multi_modal.txt, report.json,
//!                             pcc_arousal.csv, pcc_valence.csv
//! ```
//!
//! Combination directories use the member names joined by `+`
//! (`VisModel2+AudModel2`). Commands are deterministic given the seed and
//! inputs; `--jobs` only changes wall-clock time.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use affect_core::Error;
use serde::{Deserialize, Serialize};

pub mod ablation;
mod commands;
pub mod report;

pub use commands::{cmd_extract, cmd_fuse, cmd_report, cmd_selftest, cmd_train, cmd_validate, EncoderEvaluation, FusionEvaluation};

pub const ENCODERS_DIR: &str = "encoders";
pub const FUSION_DIR: &str = "fusion";
pub const REPORT_DIR: &str = "report";
pub const EVALUATION_FILE: &str = "evaluation.json";
pub const ROW_FILE: &str = "row.json";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("self-test failed: {0}")]
    Selftest(String),
}

impl CliError {
    /// 0 is success; 2 marks numerical failures (divergence, SMO
    /// non-convergence, undefined statistics); everything else is 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numerical() => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

/// Everything a command needs besides its own arguments.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    pub manifest: Option<PathBuf>,
    /// Run directory.
    pub out: PathBuf,
    /// Encoder configuration files (`train`).
    pub encoder_configs: Vec<PathBuf>,
    /// Fusion specs such as `"VisModel2+AudModel2"` (`fuse`).
    pub combinations: Vec<String>,
    /// SVR settings file (`fuse`); defaults apply when absent.
    pub fusion_config: Option<PathBuf>,
    /// Global seed. When set, each encoder and fusion derives its own seed
    /// from it by name; otherwise the seeds in the config files are used.
    pub seed: Option<u64>,
    pub precision: Precision,
}

impl RunConfig {
    pub fn manifest_path(&self) -> CliResult<&Path> {
        self.manifest.as_deref().ok_or_else(|| CliError::Usage("--manifest is required".into()))
    }

    pub fn encoder_dir(&self, name: &str) -> PathBuf {
        self.out.join(ENCODERS_DIR).join(name)
    }

    pub fn fusion_dir(&self, members: &[String]) -> PathBuf {
        self.out.join(FUSION_DIR).join(members.join("+"))
    }
}

pub(crate) fn io_err(path: &Path, source: io::Error) -> CliError {
    CliError::Core(Error::Io { path: path.to_path_buf(), source })
}

pub(crate) fn write_file(path: &Path, body: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, body).map_err(|e| io_err(path, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(Error::from)?;
    s.push('\n');
    write_file(path, &s)
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let s = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&s).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// Subdirectories of `dir` in name order; a missing `dir` yields nothing.
pub(crate) fn sorted_subdirs(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let entries = match fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(dir, e)),
    };
    let mut out = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| io_err(dir, e))?;
        if entry.path().is_dir() {
            out.push(entry.path());
        }
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fusion_dirs_join_members_with_plus() {
        let run = RunConfig { out: PathBuf::from("r"), ..RunConfig::default() };
        assert_eq!(run.fusion_dir(&["A".into(), "B".into()]), Path::new("r/fusion/A+B"));
        assert_eq!(run.encoder_dir("A"), Path::new("r/encoders/A"));
        assert!(matches!(run.manifest_path(), Err(CliError::Usage(_))));
    }

    #[test]
    fn sorted_subdirs_ignores_files_and_missing_dirs() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(sorted_subdirs(&tmp.path().join("nope")).unwrap().is_empty());
        for d in ["b", "a"] {
            fs::create_dir(tmp.path().join(d)).unwrap();
        }
        fs::write(tmp.path().join("c"), "").unwrap();
        let names: Vec<_> = sorted_subdirs(tmp.path()).unwrap().iter().map(|p| p.file_name().unwrap().to_owned()).collect();
        assert_eq!(names, ["a", "b"]);
    }
}
