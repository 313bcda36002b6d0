use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::feature::{read_feature_tensor, FeatureSequence};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Visual,
    AudioVec,
    AudioWave,
    TextEmb,
}

impl Modality {
    pub const ALL: [Modality; 4] = [Modality::Visual, Modality::AudioVec, Modality::AudioWave, Modality::TextEmb];

    pub fn name(self) -> &'static str {
        match self {
            Modality::Visual => "visual",
            Modality::AudioVec => "audio_vec",
            Modality::AudioWave => "audio_wave",
            Modality::TextEmb => "text_emb",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One labeled utterance. Modality paths are relative to the manifest's
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtteranceRecord {
    pub utterance_id: String,
    pub video_id: String,
    pub arousal: f64,
    pub valence: f64,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visual: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_vec: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_wave: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_emb: Option<PathBuf>,
}

impl UtteranceRecord {
    pub fn path(&self, m: Modality) -> Option<&Path> {
        match m {
            Modality::Visual => self.visual.as_deref(),
            Modality::AudioVec => self.audio_vec.as_deref(),
            Modality::AudioWave => self.audio_wave.as_deref(),
            Modality::TextEmb => self.text_emb.as_deref(),
        }
    }

    pub fn has(&self, m: Modality) -> bool {
        self.path(m).is_some()
    }

    pub fn label(&self, target: usize) -> f64 {
        if target == 0 {
            self.arousal
        } else {
            self.valence
        }
    }
}

/// Inclusive label bounds. Defaults: arousal in [0, 1], valence in [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelRanges {
    pub arousal: (f64, f64),
    pub valence: (f64, f64),
}

impl Default for LabelRanges {
    fn default() -> Self {
        LabelRanges { arousal: (0.0, 1.0), valence: (-1.0, 1.0) }
    }
}

impl LabelRanges {
    fn check(&self, r: &UtteranceRecord) -> Result<()> {
        for (label, value, (min, max)) in
            [("arousal", r.arousal, self.arousal), ("valence", r.valence, self.valence)]
        {
            if !(value >= min && value <= max) {
                return Err(Error::LabelOutOfRange { id: r.utterance_id.clone(), label, value, min, max });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    label_ranges: [f64; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    /// Directory that record paths are resolved against.
    pub root: PathBuf,
    pub label_ranges: LabelRanges,
    pub records: Vec<UtteranceRecord>,
}

impl DatasetManifest {
    pub fn resolve(&self, rel: &Path) -> PathBuf {
        self.root.join(rel)
    }

    pub fn load(&self, record: &UtteranceRecord, m: Modality) -> Result<FeatureSequence> {
        let rel = record
            .path(m)
            .ok_or_else(|| Error::MissingModality { id: record.utterance_id.clone(), modality: m.name() })?;
        read_feature_tensor(&self.resolve(rel))
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &UtteranceRecord> + '_ {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn get(&self, id: &str) -> Option<&UtteranceRecord> {
        self.records.iter().find(|r| r.utterance_id == id)
    }
}

/// Parses a JSON-lines manifest and validates every record. Tensor payloads
/// are not read; only their existence is checked.
pub fn parse_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let line_err = |line: usize, msg: String| Error::ManifestLine { path: path.to_path_buf(), line, msg };

    let mut label_ranges = LabelRanges::default();
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    let mut first = true;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        if first {
            first = false;
            let value: serde_json::Value = serde_json::from_str(line).map_err(|e| line_err(lineno, e.to_string()))?;
            if value.get("label_ranges").is_some() {
                let h: Header = serde_json::from_value(value).map_err(|e| line_err(lineno, e.to_string()))?;
                let [a0, a1, v0, v1] = h.label_ranges;
                if !(a0 <= a1 && v0 <= v1) || h.label_ranges.iter().any(|x| !x.is_finite()) {
                    return Err(line_err(lineno, format!("invalid label_ranges {:?}", h.label_ranges)));
                }
                label_ranges = LabelRanges { arousal: (a0, a1), valence: (v0, v1) };
                continue;
            }
        }
        let rec: UtteranceRecord = serde_json::from_str(line).map_err(|e| line_err(lineno, e.to_string()))?;
        if rec.utterance_id.is_empty() {
            return Err(line_err(lineno, "empty utterance_id".into()));
        }
        if !Modality::ALL.iter().any(|&m| rec.has(m)) {
            return Err(line_err(lineno, format!("record `{}` references no modality", rec.utterance_id)));
        }
        if !seen.insert(rec.utterance_id.clone()) {
            return Err(Error::DuplicateId(rec.utterance_id));
        }
        label_ranges.check(&rec)?;
        for m in Modality::ALL {
            if let Some(rel) = rec.path(m) {
                let full = root.join(rel);
                if !full.is_file() {
                    return Err(Error::MissingFile { id: rec.utterance_id.clone(), path: full });
                }
            }
        }
        records.push(rec);
    }
    Ok(DatasetManifest { root, label_ranges, records })
}

/// Writes the manifest as JSON lines, header first.
pub fn write_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    let r = manifest.label_ranges;
    let mut out = serde_json::to_string(&Header { label_ranges: [r.arousal.0, r.arousal.1, r.valence.0, r.valence.1] })?;
    out.push('\n');
    for rec in &manifest.records {
        out.push_str(&serde_json::to_string(rec)?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::write_feature_tensor;

    fn touch(dir: &Path, name: &str) {
        let seq = FeatureSequence::from_rows(2, 2, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        write_feature_tensor(&dir.join(name), &seq).unwrap();
    }

    fn rec_line(id: &str, arousal: f64) -> String {
        format!(r#"{{"utterance_id":"{id}","video_id":"v","arousal":{arousal},"valence":0.0,"split":"train","visual":"f.aff"}}"#)
    }

    #[test]
    fn parses_two_records() {
        let dir = tempfile::tempdir().unwrap();
        touch(dir.path(), "f.aff");
        let p = dir.path().join("m.jsonl");
        fs::write(&p, format!("{}\n{}\n", rec_line("a", 0.1), rec_line("b", 0.2))).unwrap();
        let m = parse_manifest(&p).unwrap();
        assert_eq!(m.records.len(), 2);
        assert_eq!(m.label_ranges, LabelRanges::default());
    }

    #[test]
    fn duplicate_id_is_named() {
        let dir = tempfile::tempdir().unwrap();
        touch(dir.path(), "f.aff");
        let p = dir.path().join("m.jsonl");
        fs::write(&p, format!("{}\n{}\n", rec_line("a", 0.1), rec_line("a", 0.2))).unwrap();
        match parse_manifest(&p) {
            Err(Error::DuplicateId(id)) => assert_eq!(id, "a"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_overrides_ranges_and_out_of_range_fails() {
        let dir = tempfile::tempdir().unwrap();
        touch(dir.path(), "f.aff");
        let p = dir.path().join("m.jsonl");
        fs::write(&p, format!("{{\"label_ranges\":[-1,1,-1,1]}}\n{}\n", rec_line("a", -0.5))).unwrap();
        assert!(parse_manifest(&p).is_ok());
        fs::write(&p, format!("{}\n", rec_line("a", -0.5))).unwrap();
        assert!(matches!(parse_manifest(&p), Err(Error::LabelOutOfRange { label: "arousal", .. })));
    }

    #[test]
    fn malformed_line_reports_number() {
        let dir = tempfile::tempdir().unwrap();
        touch(dir.path(), "f.aff");
        let p = dir.path().join("m.jsonl");
        fs::write(&p, format!("{}\n{{not json\n", rec_line("a", 0.1))).unwrap();
        assert!(matches!(parse_manifest(&p), Err(Error::ManifestLine { line: 2, .. })));
    }

    #[test]
    fn missing_file_and_missing_modality() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        fs::write(&p, format!("{}\n", rec_line("a", 0.1))).unwrap();
        assert!(matches!(parse_manifest(&p), Err(Error::MissingFile { .. })));
        fs::write(&p, r#"{"utterance_id":"a","video_id":"v","arousal":0.1,"valence":0.0,"split":"train"}"#).unwrap();
        assert!(matches!(parse_manifest(&p), Err(Error::ManifestLine { line: 1, .. })));
    }

    #[test]
    fn three_modality_manifest_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        for f in ["v.aff", "a.aff", "t.aff"] {
            touch(dir.path(), f);
        }
        let records = (0..5)
            .map(|i| UtteranceRecord {
                utterance_id: format!("u{i}"),
                video_id: format!("vid{}", i / 2),
                arousal: 0.1 + i as f64 / 7.0,
                valence: -0.3 + i as f64 / 11.0,
                split: if i % 2 == 0 { Split::Train } else { Split::Validation },
                visual: Some("v.aff".into()),
                audio_vec: Some("a.aff".into()),
                audio_wave: None,
                text_emb: Some("t.aff".into()),
            })
            .collect();
        let m = DatasetManifest {
            root: dir.path().to_path_buf(),
            label_ranges: LabelRanges { arousal: (0.0, 1.0), valence: (-1.0, 1.0) },
            records,
        };
        let p = dir.path().join("m.jsonl");
        write_manifest(&p, &m).unwrap();
        let back = parse_manifest(&p).unwrap();
        assert_eq!(back.records.len(), m.records.len());
        for (a, b) in back.records.iter().zip(&m.records) {
            assert_eq!(a.utterance_id, b.utterance_id);
            assert_eq!(a.video_id, b.video_id);
            assert_eq!(a.arousal.to_bits(), b.arousal.to_bits());
            assert_eq!(a.valence.to_bits(), b.valence.to_bits());
            assert_eq!(a.split, b.split);
            for md in Modality::ALL {
                assert_eq!(a.path(md), b.path(md));
            }
        }
        assert_eq!(back.label_ranges, m.label_ranges);
    }
}
