//! Agreement and error metrics.
//!
//! All moments are population moments (divide by N). Undefined correlations
//! are errors, never silent zeros.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const TARGETS: [&str; 2] = ["arousal", "valence"];

struct Moments {
    mean_x: f64,
    mean_y: f64,
    var_x: f64,
    var_y: f64,
    cov: f64,
}

fn moments(x: &[f64], y: &[f64]) -> Result<Moments> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("length {} vs {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::UndefinedCorrelation(format!("need at least 2 samples, got {}", x.len())));
    }
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let (mut var_x, mut var_y, mut cov) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let dx = a - mean_x;
        let dy = b - mean_y;
        var_x += dx * dx;
        var_y += dy * dy;
        cov += dx * dy;
    }
    Ok(Moments { mean_x, mean_y, var_x: var_x / n, var_y: var_y / n, cov: cov / n })
}

/// Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let m = moments(x, y)?;
    if m.var_x == 0.0 || m.var_y == 0.0 {
        return Err(Error::UndefinedCorrelation("constant input to pearson".into()));
    }
    Ok((m.cov / (m.var_x.sqrt() * m.var_y.sqrt())).clamp(-1.0, 1.0))
}

/// Lin's concordance correlation coefficient,
/// `2·cov / (σx² + σy² + (μx − μy)²)`.
pub fn ccc(x: &[f64], y: &[f64]) -> Result<f64> {
    let m = moments(x, y)?;
    let gap = m.mean_x - m.mean_y;
    let den = m.var_x + m.var_y + gap * gap;
    if den == 0.0 {
        return Err(Error::UndefinedCorrelation("both inputs constant and equal".into()));
    }
    Ok((2.0 * m.cov / den).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub mse: f64,
    pub mae: f64,
}

pub fn error_metrics(x: &[f64], y: &[f64]) -> Result<ErrorMetrics> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("length {} vs {}", x.len(), y.len())));
    }
    if x.is_empty() {
        return Err(Error::Invalid("empty input".into()));
    }
    let n = x.len() as f64;
    let mse = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
    let mae = x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
    Ok(ErrorMetrics { mse, mae })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetMetrics {
    pub ccc: f64,
    pub pcc: f64,
    pub mse: f64,
    pub mae: f64,
}

impl TargetMetrics {
    pub fn compute(pred: &[f64], truth: &[f64]) -> Result<Self> {
        let e = error_metrics(pred, truth)?;
        Ok(TargetMetrics { ccc: ccc(pred, truth)?, pcc: pearson(pred, truth)?, mse: e.mse, mae: e.mae })
    }
}

/// Per-target metrics for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub targets: BTreeMap<String, TargetMetrics>,
}

/// Pearson correlations between the prediction vectors of several models.
/// Cells involving a constant prediction vector are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PccMatrix {
    pub labels: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

pub fn pcc_matrix(predictions: &[(String, Vec<f64>)]) -> Result<PccMatrix> {
    let n = predictions.first().map_or(0, |p| p.1.len());
    if predictions.iter().any(|p| p.1.len() != n) {
        return Err(Error::Shape("prediction vectors differ in length".into()));
    }
    if n < 2 {
        return Err(Error::Invalid("pcc matrix needs vectors of length >= 2".into()));
    }
    let k = predictions.len();
    let mut values = vec![vec![None; k]; k];
    for i in 0..k {
        for j in i..k {
            let v = match pearson(&predictions[i].1, &predictions[j].1) {
                Ok(r) => Some(if i == j { 1.0 } else { r }),
                Err(Error::UndefinedCorrelation(_)) => None,
                Err(e) => return Err(e),
            };
            values[i][j] = v;
            values[j][i] = v;
        }
    }
    Ok(PccMatrix { labels: predictions.iter().map(|p| p.0.clone()).collect(), values })
}

impl PccMatrix {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("model");
        for l in &self.labels {
            let _ = write!(s, ",{l}");
        }
        s.push('\n');
        for (l, row) in self.labels.iter().zip(&self.values) {
            s.push_str(l);
            for v in row {
                match v {
                    Some(x) => {
                        let _ = write!(s, ",{x:.6}");
                    }
                    None => s.push_str(",undefined"),
                }
            }
            s.push('\n');
        }
        s
    }
}

/// One row of a modality-combination result table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub name: String,
    pub arousal_ccc: f64,
    pub valence_ccc: f64,
    pub mean_ccc: f64,
}

impl ReportRow {
    pub fn new(name: impl Into<String>, arousal_ccc: f64, valence_ccc: f64) -> Self {
        ReportRow { name: name.into(), arousal_ccc, valence_ccc, mean_ccc: (arousal_ccc + valence_ccc) / 2.0 }
    }
}

/// Aligned text table with columns model, arousal CCC, valence CCC, mean.
pub fn format_table(title: &str, rows: &[ReportRow]) -> String {
    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max(5);
    let mut s = format!("{title}\n");
    let _ = writeln!(s, "{:<width$}  {:>8}  {:>8}  {:>8}", "Model", "Arousal", "Valence", "Mean");
    for r in rows {
        let _ = writeln!(
            s,
            "{:<width$}  {:>8.3}  {:>8.3}  {:>8.3}",
            r.name, r.arousal_ccc, r.valence_ccc, r.mean_ccc
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 3.0];
        assert_eq!(pearson(&x, &x).unwrap(), 1.0);
        assert_eq!(pearson(&x, &[-1.0, -2.0, -3.0]).unwrap(), -1.0);
        // cov = 1/3, var = 2/3 each
        assert!((pearson(&x, &[1.0, 3.0, 2.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(pearson(&x, &[2.0, 2.0, 2.0]), Err(Error::UndefinedCorrelation(_))));
    }

    #[test]
    fn ccc_examples() {
        let x = [1.0, 2.0, 3.0];
        assert_eq!(ccc(&x, &x).unwrap(), 1.0);
        assert_eq!(ccc(&[-1.0, 0.0, 1.0], &[1.0, 0.0, -1.0]).unwrap(), -1.0);
        // cov = 2/3, var = 2/3 each, mean gap 1: (4/3) / (7/3)
        assert!((ccc(&x, &[2.0, 3.0, 4.0]).unwrap() - 4.0 / 7.0).abs() < 1e-15);
        assert!(ccc(&[1.0, 1.0], &[1.0, 1.0]).is_err());
        // one constant side is still defined
        assert_eq!(ccc(&[1.0, 1.0], &[0.0, 2.0]).unwrap(), 0.0);
    }

    #[test]
    fn error_metric_examples() {
        assert_eq!(error_metrics(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), ErrorMetrics { mse: 0.0, mae: 0.0 });
        assert_eq!(error_metrics(&[0.0, 1.0], &[1.0, 3.0]).unwrap(), ErrorMetrics { mse: 2.5, mae: 1.5 });
        let e = error_metrics(&[1.0, 2.0, 3.0], &[1.5, 2.5, 3.5]).unwrap();
        assert!((e.mse - 0.25).abs() < 1e-15 && (e.mae - 0.5).abs() < 1e-15);
    }

    #[test]
    fn pcc_matrix_shapes() {
        let one = pcc_matrix(&[("a".into(), vec![1.0, 2.0, 4.0])]).unwrap();
        assert_eq!(one.values, vec![vec![Some(1.0)]]);
        let v = vec![0.3, -1.0, 2.0];
        let two = pcc_matrix(&[("a".into(), v.clone()), ("b".into(), v)]).unwrap();
        assert!(two.values.iter().flatten().all(|x| (x.unwrap() - 1.0).abs() < 1e-15));
        let flat = pcc_matrix(&[("a".into(), vec![1.0, 2.0]), ("b".into(), vec![3.0, 3.0])]).unwrap();
        assert_eq!(flat.values[0][1], None);
        assert_eq!(flat.values[1][1], None);
    }

    #[test]
    fn pcc_matrix_matches_pairwise_pearson() {
        let vs = [vec![0.1, 0.5, -0.2, 0.9], vec![1.0, 0.2, 0.3, -0.4], vec![0.0, 0.7, 0.7, 0.1]];
        let named: Vec<(String, Vec<f64>)> = vs.iter().enumerate().map(|(i, v)| (format!("m{i}"), v.clone())).collect();
        let m = pcc_matrix(&named).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let oracle = if i == j { 1.0 } else { pearson(&vs[i], &vs[j]).unwrap() };
                assert!((m.values[i][j].unwrap() - oracle).abs() <= 1e-12);
            }
        }
    }

    fn vec_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (2usize..40).prop_flat_map(|n| {
            (prop::collection::vec(-10.0f64..10.0, n), prop::collection::vec(-10.0f64..10.0, n))
        })
    }

    proptest! {
        #[test]
        fn ccc_properties((x, y) in vec_strategy(), a in 0.1f64..5.0, b in -3.0f64..3.0, c in 0.01f64..3.0) {
            prop_assume!(pearson(&x, &y).is_ok());
            let cxy = ccc(&x, &y).unwrap();
            prop_assert_eq!(cxy, ccc(&y, &x).unwrap());
            prop_assert!(cxy.abs() <= pearson(&x, &y).unwrap().abs() + 1e-12);
            // pearson is invariant under positive affine maps of one argument
            let ax: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            prop_assert!((pearson(&ax, &y).unwrap() - pearson(&x, &y).unwrap()).abs() < 1e-9);
            // ccc is invariant when both arguments get the same map
            let ay: Vec<f64> = y.iter().map(|v| a * v + b).collect();
            prop_assert!((ccc(&ax, &ay).unwrap() - cxy).abs() < 1e-9);
            // a shift strictly lowers concordance
            let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
            prop_assert!(ccc(&x, &shifted).unwrap() < 1.0);
        }

        #[test]
        fn mse_mae_constant_offset(x in prop::collection::vec(-5.0f64..5.0, 1..20), c in -3.0f64..3.0) {
            let y: Vec<f64> = x.iter().map(|v| v + c).collect();
            let e = error_metrics(&x, &y).unwrap();
            prop_assert!((e.mse - c * c).abs() < 1e-9);
            prop_assert!((e.mae - c.abs()).abs() < 1e-9);
        }
    }
}
