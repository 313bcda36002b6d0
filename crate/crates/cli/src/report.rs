//! Aggregation of a run directory into result tables and PCC matrices.

use std::fmt::Write as _;
use std::path::Path;

use affect_core::metrics::{pcc_matrix, PccMatrix, ReportRow};
use serde::{Deserialize, Serialize};

use crate::commands::EncoderEvaluation;
use crate::{read_json, sorted_subdirs, write_file, write_json, CliError, CliResult, ENCODERS_DIR, EVALUATION_FILE, FUSION_DIR, REPORT_DIR, ROW_FILE};

pub const SINGLE_TABLE_FILE: &str = "single_modal.txt";
pub const MULTI_TABLE_FILE: &str = "multi_modal.txt";
pub const REPORT_FILE: &str = "report.json";
pub const PCC_FILES: [&str; 2] = ["pcc_arousal.csv", "pcc_valence.csv"];

/// Validation CCC of one encoder's own head; a target the head does not
/// predict is `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleRow {
    pub name: String,
    pub arousal_ccc: Option<f64>,
    pub valence_ccc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// One row per trained encoder, by name.
    pub single: Vec<SingleRow>,
    /// One row per fused combination, best mean CCC first.
    pub multi: Vec<ReportRow>,
    /// Pearson correlations between encoders' validation predictions, per
    /// target (arousal, valence). Encoders not predicting a target are left
    /// out of that target's matrix.
    pub pcc: [Option<PccMatrix>; 2],
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.3}"))
}

fn table(title: &str, header: &str, rows: &[(String, Vec<String>)], columns: &[&str]) -> String {
    let width = rows.iter().map(|r| r.0.len()).chain([header.len()]).max().unwrap_or(0);
    let mut s = format!("{title}\n{header:<width$}");
    for c in columns {
        let _ = write!(s, "  {c:>8}");
    }
    s.push('\n');
    for (name, cells) in rows {
        let _ = write!(s, "{name:<width$}");
        for c in cells {
            let _ = write!(s, "  {c:>8}");
        }
        s.push('\n');
    }
    s
}

/// Aligned text table: first column `header`, then arousal/valence CCC and,
/// when `mean` is set, their mean.
pub fn format_rows(title: &str, header: &str, rows: &[(String, Option<f64>, Option<f64>)], mean: bool) -> String {
    let body: Vec<(String, Vec<String>)> = rows
        .iter()
        .map(|(n, a, v)| {
            let mut cells = vec![cell(*a), cell(*v)];
            if mean {
                cells.push(cell(a.zip(*v).map(|(a, v)| (a + v) / 2.0)));
            }
            (n.clone(), cells)
        })
        .collect();
    let columns: &[&str] = if mean { &["Arousal", "Valence", "Mean"] } else { &["Arousal", "Valence"] };
    table(title, header, &body, columns)
}

impl RunReport {
    pub fn single_table(&self) -> String {
        let rows: Vec<_> = self.single.iter().map(|r| (r.name.clone(), r.arousal_ccc, r.valence_ccc)).collect();
        format_rows("Single-modal validation CCC", "Single Modal", &rows, false)
    }

    pub fn multi_table(&self) -> String {
        let rows: Vec<_> = self.multi.iter().map(|r| (r.name.clone(), Some(r.arousal_ccc), Some(r.valence_ccc))).collect();
        format_rows("Multi-modal CCC (grouped 5-fold CV)", "Multi Modal", &rows, true)
    }
}

/// Collects every encoder evaluation and fusion row under `run_dir`.
pub fn aggregate(run_dir: &Path) -> CliResult<RunReport> {
    let mut evals: Vec<EncoderEvaluation> = Vec::new();
    for dir in sorted_subdirs(&run_dir.join(ENCODERS_DIR))? {
        let p = dir.join(EVALUATION_FILE);
        if p.is_file() {
            evals.push(read_json(&p)?);
        }
    }
    let mut multi: Vec<ReportRow> = Vec::new();
    for dir in sorted_subdirs(&run_dir.join(FUSION_DIR))? {
        let p = dir.join(ROW_FILE);
        if p.is_file() {
            multi.push(read_json(&p)?);
        }
    }
    if evals.is_empty() && multi.is_empty() {
        return Err(CliError::Usage(format!("no evaluations found in {}", run_dir.display())));
    }
    multi.sort_by(|a, b| b.mean_ccc.total_cmp(&a.mean_ccc).then_with(|| a.name.cmp(&b.name)));
    if let Some(e) = evals.iter().find(|e| e.ids != evals[0].ids) {
        return Err(CliError::Usage(format!("encoder `{}` was evaluated on different utterances than `{}`", e.encoder, evals[0].encoder)));
    }
    let matrix = |t: usize| -> CliResult<Option<PccMatrix>> {
        let preds: Vec<(String, Vec<f64>)> =
            evals.iter().filter_map(|e| e.predictions[t].clone().map(|p| (e.encoder.clone(), p))).collect();
        if preds.is_empty() || preds[0].1.len() < 2 {
            return Ok(None);
        }
        Ok(Some(pcc_matrix(&preds)?))
    };
    let pcc = [matrix(0)?, matrix(1)?];
    let single = evals
        .iter()
        .map(|e| SingleRow { name: e.encoder.clone(), arousal_ccc: e.validation_ccc[0], valence_ccc: e.validation_ccc[1] })
        .collect();
    Ok(RunReport { single, multi, pcc })
}

/// Writes tables, JSON and PCC CSVs under `<run_dir>/report/`. Output
/// depends only on the report, so re-running is idempotent.
pub fn write(run_dir: &Path, report: &RunReport) -> CliResult<()> {
    let dir = run_dir.join(REPORT_DIR);
    write_file(&dir.join(SINGLE_TABLE_FILE), &report.single_table())?;
    write_file(&dir.join(MULTI_TABLE_FILE), &report.multi_table())?;
    write_json(&dir.join(REPORT_FILE), report)?;
    for (m, f) in report.pcc.iter().zip(PCC_FILES) {
        let p = dir.join(f);
        match m {
            Some(m) => write_file(&p, &m.to_csv())?,
            None => {
                if p.exists() {
                    std::fs::remove_file(&p).map_err(|e| crate::io_err(&p, e))?;
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tables_have_title_header_and_one_line_per_row() {
        let rows = vec![("A".to_string(), Some(0.5), None), ("Longer name".to_string(), Some(0.25), Some(-0.125))];
        let t = format_rows("T", "Name", &rows, true);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[1].split_whitespace().collect::<Vec<_>>(), ["Name", "Arousal", "Valence", "Mean"]);
        assert_eq!(lines[2].split_whitespace().collect::<Vec<_>>(), ["A", "0.500", "-", "-"]);
        assert!(lines[3].ends_with("0.250    -0.125     0.062"), "{t}");
    }

    #[test]
    fn multi_table_takes_rows_in_stored_order() {
        let r = RunReport {
            single: vec![],
            multi: vec![ReportRow::new("B + C", 0.9, 0.7), ReportRow::new("A", 0.1, 0.3)],
            pcc: [None, None],
        };
        let t = r.multi_table();
        let names: Vec<&str> = t.lines().skip(2).map(|l| l.split("  ").next().unwrap()).collect();
        assert_eq!(names, ["B + C", "A"]);
    }
}
