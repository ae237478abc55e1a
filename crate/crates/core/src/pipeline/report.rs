use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::error::{Error, Result};
use crate::repr::Embedding;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub demos: usize,
    pub demos_emitted: usize,
    pub segments: usize,
    pub positives: usize,
    pub negatives: usize,
    pub optimized: usize,
    pub original_steps: usize,
    pub emitted_steps: usize,
}

/// Outcome for one segment of the mixed dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub demo_id: String,
    pub start: usize,
    pub end: usize,
    /// Voting score; absent when no classification ran.
    pub score: Option<f64>,
    /// Decision after the selection level is applied.
    pub label: Option<Label>,
    pub optimized: bool,
    pub dropped: bool,
    pub retained: Option<Vec<usize>>,
    /// Length of the polyline through the original action targets.
    pub original_length: f64,
    /// Length of the polyline through the emitted action targets.
    pub emitted_length: f64,
    pub truth: Option<Label>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PathLengthStats {
    pub segments: usize,
    pub mean_original: f64,
    pub mean_emitted: f64,
    pub mean_reduction: f64,
    pub max_reduction: f64,
}

impl PathLengthStats {
    pub fn over<'a>(records: impl IntoIterator<Item = &'a SegmentRecord>) -> Self {
        let mut stats = PathLengthStats::default();
        for r in records {
            stats.segments += 1;
            stats.mean_original += r.original_length;
            stats.mean_emitted += r.emitted_length;
            let reduction = r.original_length - r.emitted_length;
            stats.mean_reduction += reduction;
            stats.max_reduction = stats.max_reduction.max(reduction);
        }
        if stats.segments > 0 {
            let n = stats.segments as f64;
            stats.mean_original /= n;
            stats.mean_emitted /= n;
            stats.mean_reduction /= n;
        }
        stats
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ClassMetrics {
    fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        ClassMetrics {
            precision,
            recall,
            f1,
        }
    }
}

/// Segment classification quality against ground truth; `positive` treats
/// high quality as the target class.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub positive: ClassMetrics,
    pub negative: ClassMetrics,
    pub accuracy: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
}

impl ClassificationMetrics {
    /// From `(predicted, truth)` pairs.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Label, Label)>) -> Self {
        let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
        for (pred, truth) in pairs {
            match (pred, truth) {
                (Label::Positive, Label::Positive) => tp += 1,
                (Label::Positive, Label::Negative) => fp += 1,
                (Label::Negative, Label::Negative) => tn += 1,
                (Label::Negative, Label::Positive) => fn_ += 1,
            }
        }
        let total = tp + fp + tn + fn_;
        ClassificationMetrics {
            positive: ClassMetrics::from_counts(tp, fp, fn_),
            negative: ClassMetrics::from_counts(tn, fn_, fp),
            accuracy: if total == 0 {
                0.0
            } else {
                (tp + tn) as f64 / total as f64
            },
            true_positives: tp,
            false_positives: fp,
            true_negatives: tn,
            false_negatives: fn_,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CurationReport {
    pub counts: Counts,
    /// Emitted timesteps over original timesteps.
    pub utilization: f64,
    pub segments: Vec<SegmentRecord>,
    /// Over segments that went through optimization.
    pub path_length: PathLengthStats,
    /// Over segments whose ground-truth label is negative, when known.
    pub corrupted_path_length: Option<PathLengthStats>,
    pub metrics: Option<ClassificationMetrics>,
    pub loss_trace: Vec<f64>,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
}

impl CurationReport {
    /// The report with wall-clock fields cleared, for reproducibility checks.
    pub fn without_timings(&self) -> Self {
        CurationReport {
            timings: BTreeMap::new(),
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Projects embeddings onto their two leading principal components.
///
/// Component signs are fixed so that the largest-magnitude coordinate of
/// each axis is positive. Fewer than two points project to the origin.
pub fn pca_2d(points: &[&[f64]]) -> Vec<[f64; 2]> {
    let n = points.len();
    if n < 2 {
        return vec![[0.0, 0.0]; n];
    }
    let d = points[0].len();
    let mean: Vec<f64> = (0..d)
        .map(|j| points.iter().map(|p| p[j]).sum::<f64>() / n as f64)
        .collect();
    let centered = DMatrix::from_fn(n, d, |i, j| points[i][j] - mean[j]);
    let cov = centered.transpose() * &centered / (n - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let axes: Vec<Vec<f64>> = order
        .iter()
        .take(2)
        .map(|&c| {
            let col: Vec<f64> = eig.eigenvectors.column(c).iter().copied().collect();
            let pivot = col
                .iter()
                .copied()
                .fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
            col.into_iter().map(|v| v * sign).collect()
        })
        .collect();
    (0..n)
        .map(|i| {
            let mut out = [0.0; 2];
            for (slot, axis) in out.iter_mut().zip(&axes) {
                *slot = (0..d).map(|j| centered[(i, j)] * axis[j]).sum();
            }
            out
        })
        .collect()
}

/// Location of the projection CSV written next to a report file.
pub fn pca_csv_path(report_path: &Path) -> PathBuf {
    report_path.with_extension("pca.csv")
}

/// Writes the report JSON to `path` and a `pc1,pc2,label` CSV beside it.
pub fn report_export(
    report: &CurationReport,
    embeddings: &[(Embedding, Label)],
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, report.to_json() + "\n").map_err(|e| Error::io(path, e))?;
    let csv_path = pca_csv_path(path);
    let zs: Vec<&[f64]> = embeddings.iter().map(|(z, _)| z.z.as_slice()).collect();
    if zs.windows(2).any(|w| w[0].len() != w[1].len()) {
        return Err(Error::Shape {
            expected: "embeddings of one dimension".into(),
            actual: "mixed dimensions".into(),
        });
    }
    let projected = pca_2d(&zs);
    let write = || -> std::io::Result<()> {
        let mut w = BufWriter::new(File::create(&csv_path)?);
        writeln!(w, "pc1,pc2,label")?;
        for (p, (_, label)) in projected.iter().zip(embeddings) {
            writeln!(w, "{},{},{}", p[0], p[1], label.symbol())?;
        }
        w.flush()
    };
    write().map_err(|e| Error::io(&csv_path, e))
}
