use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;

use super::config::{CurationConfig, SelectionLevel};
use super::report::{ClassificationMetrics, Counts, CurationReport, PathLengthStats, SegmentRecord};
use crate::data::frames::steps_to_absolute;
use crate::data::{polyline_length, Dataset, DatasetRole, Demonstration, Label, Segment, Step};
use crate::error::{Error, Result};
use crate::optimize::{optimize_negatives, OptimizedSegment};
use crate::render::{augment_expert, canonical_view, render_segment, Augmented, CameraRig, TrajRaster, View};
use crate::repr::{encode, train, Embedding, EncoderParams, TrainConfig, TrainOutcome};
use crate::segmentation::{segment_demo, SegmentationConfig};
use crate::select::{classify_segments, LabeledEmbeddingSet};
use crate::synth::GroundTruth;

/// Everything a curation run produces besides the dataset and report.
#[derive(Debug, Clone)]
pub struct CurationOutput {
    pub dataset: Dataset,
    pub report: CurationReport,
    /// One embedding per classified mixed segment, with its decided label.
    pub embeddings: Vec<(Embedding, Label)>,
    pub params: Option<EncoderParams>,
    pub reference: Option<LabeledEmbeddingSet>,
}

/// All segments of a dataset, demo by demo in timestep order.
pub fn segment_dataset(ds: &Dataset, cfg: &SegmentationConfig) -> Vec<Segment> {
    ds.demos
        .par_iter()
        .map(|d| segment_demo(d, cfg))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

/// Trains the segment encoder on augmented expert segments.
pub fn train_encoder(aug: &Augmented, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train(&aug.positives, &aug.negatives, cfg)
}

/// Expert segments rendered from `view`.
pub fn render_canonical(segs: &[Segment], view: &View, rig: &CameraRig) -> Vec<TrajRaster> {
    segs.par_iter()
        .map(|seg| render_segment(seg, &view.camera_for(&seg.positions(), rig)))
        .collect()
}

/// Labeled reference embeddings: the expert segments themselves seen from
/// the canonical view, plus every augmented pair.
pub fn reference_set(
    params: &EncoderParams,
    expert_segments: &[Segment],
    aug: &Augmented,
    view: &View,
    rig: &CameraRig,
) -> Result<LabeledEmbeddingSet> {
    reference_from_rasters(params, &render_canonical(expert_segments, view, rig), aug)
}

/// Reference embeddings from pre-rendered expert rasters (paired with blank
/// endings) and augmented pairs.
pub fn reference_from_rasters(
    params: &EncoderParams,
    originals: &[TrajRaster],
    aug: &Augmented,
) -> Result<LabeledEmbeddingSet> {
    let blank = TrajRaster::blank(params.arch.input_width, params.arch.input_height);
    let labeled = originals
        .iter()
        .map(|r| (r, &blank, Label::Positive))
        .chain(aug.positives.iter().map(|p| (&p.start, &p.end, Label::Positive)))
        .chain(aug.negatives.iter().map(|p| (&p.start, &p.end, Label::Negative)))
        .collect::<Vec<_>>();
    let entries: Vec<(Embedding, Label)> = labeled
        .par_iter()
        .map(|(start, end, label)| Ok((encode(start, end, params)?, *label)))
        .collect::<Result<_>>()?;
    LabeledEmbeddingSet::new(entries)
}

/// Length of the polyline through the absolute action targets of `steps`.
pub fn action_path_length(steps: &[Step]) -> f64 {
    let targets: Vec<[f64; 3]> = steps_to_absolute(steps)
        .iter()
        .map(|s| s.act.target_pose.position)
        .collect();
    polyline_length(&targets)
}

struct Timer {
    timings: BTreeMap<String, f64>,
}

impl Timer {
    fn run<T>(&mut self, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f().map_err(|e| e.in_stage(stage))?;
        *self.timings.entry(stage.to_string()).or_default() += start.elapsed().as_secs_f64();
        Ok(out)
    }
}

enum Treatment {
    Keep,
    Optimize,
    Drop,
}

/// Runs segmentation, representation learning, classification, optimization
/// and relabeling, and stitches the result back into demonstrations.
///
/// `truth` only feeds the report's metrics; it never influences curation.
pub fn curate(
    mixed: &Dataset,
    expert: &Dataset,
    cfg: &CurationConfig,
    truth: Option<&GroundTruth>,
) -> Result<CurationOutput> {
    let mut timer = Timer {
        timings: BTreeMap::new(),
    };
    timer.run("config", || {
        cfg.validate()?;
        if expert.role != DatasetRole::ExpertReference {
            return Err(Error::Config(
                "the expert dataset must be tagged as an expert reference set".into(),
            ));
        }
        expert.validate()?;
        mixed.validate()
    })?;
    let switches = cfg.switches;
    let classify = switches.selection_level != SelectionLevel::None;

    let segments = timer.run("segment", || Ok(segment_dataset(mixed, &cfg.segmentation)))?;

    let mut params = None;
    let mut reference = None;
    let mut loss_trace = Vec::new();
    let mut scores: Vec<Option<f64>> = vec![None; segments.len()];
    let mut labels: Vec<Option<Label>> = vec![None; segments.len()];
    let mut embeddings = Vec::new();
    if classify {
        let expert_segments =
            timer.run("segment", || Ok(segment_dataset(expert, &cfg.segmentation)))?;
        let aug = timer.run("augment", || {
            Ok(augment_expert(&expert_segments, &cfg.rig, &cfg.augment))
        })?;
        let outcome = timer.run("train", || train_encoder(&aug, &cfg.train))?;
        loss_trace = outcome.loss_trace;
        let view = canonical_view(&cfg.augment);
        let refs = timer.run("reference", || {
            reference_set(&outcome.params, &expert_segments, &aug, &view, &cfg.rig)
        })?;
        let result = timer.run("classify", || {
            classify_segments(&segments, &outcome.params, &refs, &view, &cfg.rig, &cfg.vote)
        })?;
        for (i, score) in result.scores.iter().enumerate() {
            scores[i] = Some(*score);
            labels[i] = Some(result.labels[i]);
        }
        if switches.selection_level == SelectionLevel::Demonstration {
            let mut i = 0;
            while i < segments.len() {
                let j = (i..segments.len())
                    .find(|&j| segments[j].demo_id != segments[i].demo_id)
                    .unwrap_or(segments.len());
                let mean = result.scores[i..j].iter().sum::<f64>() / (j - i) as f64;
                let label = if mean >= cfg.vote.delta_c {
                    Label::Positive
                } else {
                    Label::Negative
                };
                labels[i..j].iter_mut().for_each(|l| *l = Some(label));
                i = j;
            }
        }
        embeddings = result
            .embeddings
            .into_iter()
            .zip(&labels)
            .map(|(z, l)| (z, l.expect("classified")))
            .collect();
        params = Some(outcome.params);
        reference = Some(refs);
    }

    let treatments: Vec<Treatment> = labels
        .iter()
        .map(|label| match (label, switches.trajectory_optimization) {
            (Some(Label::Positive), _) => Treatment::Keep,
            (_, true) => Treatment::Optimize,
            (Some(Label::Negative), false) => Treatment::Drop,
            (None, false) => Treatment::Keep,
        })
        .collect();

    let optimized: Vec<Option<OptimizedSegment>> = timer.run("optimize", || {
        Ok(segments
            .par_iter()
            .zip(&treatments)
            .map(|(seg, treatment)| match treatment {
                Treatment::Optimize => Some(
                    optimize_negatives(std::slice::from_ref(seg), &cfg.optimize, seg.action_kind())
                        .remove(0),
                ),
                _ => None,
            })
            .collect())
    })?;

    let (dataset, records, emitted_steps) = timer.run("reassemble", || {
        let mut records = Vec::with_capacity(segments.len());
        let mut per_demo: BTreeMap<&str, Vec<Step>> = BTreeMap::new();
        for (i, seg) in segments.iter().enumerate() {
            let emitted: Vec<Step> = match (&treatments[i], &optimized[i]) {
                (Treatment::Keep, _) => seg.steps.clone(),
                (Treatment::Drop, _) => Vec::new(),
                (Treatment::Optimize, Some(o)) if switches.action_relabeling => {
                    o.relabeled_steps.clone()
                }
                (Treatment::Optimize, Some(o)) => o.retained_steps(),
                (Treatment::Optimize, None) => unreachable!("optimized above"),
            };
            records.push(SegmentRecord {
                demo_id: seg.demo_id.clone(),
                start: seg.start,
                end: seg.end,
                score: scores[i],
                label: labels[i],
                optimized: optimized[i].is_some(),
                dropped: matches!(treatments[i], Treatment::Drop),
                retained: optimized[i].as_ref().map(|o| o.retained.clone()),
                original_length: action_path_length(&seg.steps),
                emitted_length: action_path_length(&emitted),
                truth: truth.and_then(|t| t.segment_label(seg)),
            });
            per_demo.entry(seg.demo_id.as_str()).or_default().extend(emitted);
        }
        let mut demos = Vec::new();
        let mut emitted_steps = 0;
        for demo in &mixed.demos {
            let Some(steps) = per_demo.remove(demo.id.as_str()) else {
                continue;
            };
            if steps.len() < 2 {
                continue;
            }
            emitted_steps += steps.len();
            demos.push(Demonstration::new(
                demo.id.clone(),
                demo.dt,
                steps,
                *demo.source_quality.reveal(),
            )?);
        }
        Ok((Dataset::new(demos, DatasetRole::Mixed)?, records, emitted_steps))
    })?;

    let original_steps = mixed.total_steps();
    let counts = Counts {
        demos: mixed.demos.len(),
        demos_emitted: dataset.demos.len(),
        segments: segments.len(),
        positives: labels.iter().filter(|l| **l == Some(Label::Positive)).count(),
        negatives: labels.iter().filter(|l| **l == Some(Label::Negative)).count(),
        optimized: optimized.iter().filter(|o| o.is_some()).count(),
        original_steps,
        emitted_steps,
    };
    let metrics = truth.filter(|_| classify).map(|_| {
        ClassificationMetrics::from_pairs(
            records
                .iter()
                .filter_map(|r| Some((r.label?, r.truth?))),
        )
    });
    let corrupted_path_length = truth.map(|_| {
        PathLengthStats::over(records.iter().filter(|r| r.truth == Some(Label::Negative)))
    });
    let report = CurationReport {
        counts,
        utilization: if original_steps == 0 {
            1.0
        } else {
            emitted_steps as f64 / original_steps as f64
        },
        path_length: PathLengthStats::over(records.iter().filter(|r| r.optimized)),
        corrupted_path_length,
        segments: records,
        metrics,
        loss_trace,
        timings: timer.timings,
    };
    Ok(CurationOutput {
        dataset,
        report,
        embeddings,
        params,
        reference,
    })
}
