use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use segcurate_core::data::{load_dataset, save_dataset, Dataset, Label};
use segcurate_core::optimize::{optimize_negatives, write_optimized};
use segcurate_core::pipeline::{
    curate, reference_from_rasters, render_canonical, report_export, segment_dataset,
    train_encoder, CurationConfig, CurationReport,
};
use segcurate_core::render::{augment_expert, canonical_view};
use segcurate_core::repr::{load_params, save_params};
use segcurate_core::select::{classify_segments, load_embeddings, save_embeddings, LabeledEmbeddingSet};
use segcurate_core::synth::{generate, GroundTruth, SynthConfig};
use segcurate_core::Error;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::records::{read_segment_lines, resolve, write_lines, SegmentLine};
use crate::{augdir, Cli, Command};

/// 2 for configuration problems, 3 for everything else.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_config() => 2,
        _ => 3,
    }
}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    Error::Config(msg.into()).into()
}

fn read_json<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| config_error(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| config_error(format!("invalid config {}: {e}", path.display())))
}

fn curation_config(cli: &Cli) -> Result<CurationConfig> {
    let mut cfg: CurationConfig = read_json(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_pretty<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).map_err(|e| {
        Error::Io {
            path: path.into(),
            source: e,
        }
        .into()
    })
}

/// `<out>.config.json` beside a file output.
fn beside(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".config.json");
    out.with_file_name(name)
}

fn load_expert(path: &Path) -> Result<Dataset> {
    Ok(load_dataset(path)?.into_reference()?)
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth { out, truth } => {
            let mut cfg: SynthConfig = read_json(cli.config.as_deref())?;
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            cfg.validate()?;
            let (ds, gt) = generate(&cfg)?;
            save_dataset(&ds, out)?;
            if let Some(path) = truth {
                write_pretty(path, &gt)?;
            }
            write_pretty(&beside(out), &cfg)?;
            println!("wrote {} demonstrations ({} steps) to {}", ds.demos.len(), ds.total_steps(), out.display());
        }
        Command::Segment { input, out } => {
            let cfg = curation_config(cli)?;
            let ds = load_dataset(input)?;
            let segs = segment_dataset(&ds, &cfg.segmentation);
            let lines: Vec<SegmentLine> = segs.iter().map(SegmentLine::of).collect();
            write_lines(out, &lines)?;
            write_pretty(&beside(out), &cfg)?;
            println!("wrote {} segments to {}", lines.len(), out.display());
        }
        Command::Augment { expert, out } => {
            let cfg = curation_config(cli)?;
            let ds = load_expert(expert)?;
            let segs = segment_dataset(&ds, &cfg.segmentation);
            let aug = augment_expert(&segs, &cfg.rig, &cfg.augment);
            let originals = render_canonical(&segs, &canonical_view(&cfg.augment), &cfg.rig);
            augdir::write(out, &aug, &originals, cfg.rig.width, cfg.rig.height)?;
            write_pretty(&out.join("config.json"), &cfg)?;
            println!(
                "wrote {} positive and {} negative pairs from {} expert segments to {}",
                aug.positives.len(),
                aug.negatives.len(),
                segs.len(),
                out.display()
            );
        }
        Command::TrainRepr { aug, out, ref_out } => {
            let cfg = curation_config(cli)?;
            let (augmented, originals) = augdir::read(aug)?;
            let outcome = train_encoder(&augmented, &cfg.train)?;
            save_params(&outcome.params, out)?;
            let reference = reference_from_rasters(&outcome.params, &originals, &augmented)?;
            let ref_path = ref_out.clone().unwrap_or_else(|| out.with_file_name("ref.bin"));
            let meta = serde_json::json!({ "loss_trace": outcome.loss_trace });
            save_embeddings(reference.entries(), &meta, &ref_path)?;
            write_pretty(&beside(out), &cfg)?;
            let (p, n) = reference.counts();
            println!(
                "trained encoder ({} epochs, final loss {:.6}); reference set {p}+/{n}- at {}",
                outcome.loss_trace.len(),
                outcome.loss_trace.last().copied().unwrap_or(f64::NAN),
                ref_path.display()
            );
        }
        Command::Classify {
            input,
            segments,
            params,
            reference,
            out,
        } => {
            let cfg = curation_config(cli)?;
            let ds = load_dataset(input)?;
            let lines = read_segment_lines(segments)?;
            let segs = resolve(&ds, &lines)?;
            let params = load_params(params)?;
            let (entries, _) = load_embeddings(reference)?;
            let reference = LabeledEmbeddingSet::new(entries)?;
            let view = canonical_view(&cfg.augment);
            let result = classify_segments(&segs, &params, &reference, &view, &cfg.rig, &cfg.vote)?;
            let labeled: Vec<SegmentLine> = segs
                .iter()
                .zip(result.scores.iter().zip(&result.labels))
                .map(|(seg, (&score, &label))| SegmentLine {
                    score: Some(score),
                    label: Some(label),
                    ..SegmentLine::of(seg)
                })
                .collect();
            write_lines(out, &labeled)?;
            write_pretty(&beside(out), &cfg)?;
            println!(
                "{} segments: {} positive, {} negative",
                labeled.len(),
                result.positives.len(),
                result.negatives.len()
            );
        }
        Command::Optimize {
            input,
            segments,
            out,
        } => {
            let cfg = curation_config(cli)?;
            let ds = load_dataset(input)?;
            let lines: Vec<SegmentLine> = read_segment_lines(segments)?
                .into_iter()
                .filter(|l| l.label != Some(Label::Positive))
                .collect();
            let segs = resolve(&ds, &lines)?;
            let optimized: Vec<_> = segs
                .iter()
                .flat_map(|seg| {
                    optimize_negatives(std::slice::from_ref(seg), &cfg.optimize, seg.action_kind())
                })
                .collect();
            let file = File::create(out).map_err(|e| Error::Io {
                path: out.clone(),
                source: e,
            })?;
            write_optimized(&optimized, BufWriter::new(file))
                .with_context(|| format!("writing {}", out.display()))?;
            write_pretty(&beside(out), &cfg)?;
            let discarded: usize = optimized
                .iter()
                .map(|o| o.original.len() - o.retained.len())
                .sum();
            println!(
                "optimized {} segments; {discarded} timesteps relabeled onto later waypoints",
                optimized.len()
            );
        }
        Command::Curate {
            mixed,
            expert,
            truth,
            out_dir,
        } => {
            let cfg = curation_config(cli)?;
            let pick = |flag: &Option<PathBuf>, fallback: &Option<PathBuf>, name: &str| {
                flag.clone()
                    .or_else(|| fallback.clone())
                    .ok_or_else(|| config_error(format!("missing --{name} (or paths.{name} in the config)")))
            };
            let mixed_path = pick(mixed, &cfg.paths.mixed, "mixed")?;
            let expert_path = pick(expert, &cfg.paths.expert, "expert")?;
            let out_dir = pick(out_dir, &cfg.paths.out_dir, "out_dir")?;
            let truth_path = truth.clone().or_else(|| cfg.paths.truth.clone());

            let mixed = load_dataset(&mixed_path)?;
            let expert = load_expert(&expert_path)?;
            let truth: Option<GroundTruth> = match &truth_path {
                Some(p) => {
                    let text = fs::read_to_string(p).map_err(|e| Error::Io {
                        path: p.clone(),
                        source: e,
                    })?;
                    Some(serde_json::from_str(&text).map_err(|e| Error::Format {
                        path: p.clone(),
                        message: e.to_string(),
                    })?)
                }
                None => None,
            };
            let out = curate(&mixed, &expert, &cfg, truth.as_ref())?;

            fs::create_dir_all(&out_dir).map_err(|e| Error::Io {
                path: out_dir.clone(),
                source: e,
            })?;
            save_dataset(&out.dataset, out_dir.join("curated.jsonl"))?;
            report_export(&out.report, &out.embeddings, out_dir.join("report.json"))?;
            save_embeddings(&out.embeddings, &serde_json::Value::Null, out_dir.join("embeddings.bin"))?;
            if let Some(params) = &out.params {
                save_params(params, out_dir.join("params.bin"))?;
            }
            if let Some(reference) = &out.reference {
                save_embeddings(reference.entries(), &serde_json::Value::Null, out_dir.join("ref.bin"))?;
            }
            write_pretty(&out_dir.join("config.json"), &cfg)?;
            print_summary(&out.report);
        }
        Command::Report {
            report,
            embeddings,
            out,
        } => {
            let text = fs::read_to_string(report).map_err(|e| Error::Io {
                path: report.clone(),
                source: e,
            })?;
            let parsed: CurationReport = serde_json::from_str(&text).map_err(|e| Error::Format {
                path: report.clone(),
                message: e.to_string(),
            })?;
            if let Some(out) = out {
                let entries = match embeddings {
                    Some(p) => load_embeddings(p)?.0,
                    None => Vec::new(),
                };
                report_export(&parsed, &entries, out)?;
            }
            print_summary(&parsed);
        }
    }
    Ok(())
}

fn print_summary(r: &CurationReport) {
    let c = &r.counts;
    println!("demonstrations   {} in, {} out", c.demos, c.demos_emitted);
    println!(
        "segments         {} ({} positive, {} negative, {} optimized)",
        c.segments, c.positives, c.negatives, c.optimized
    );
    println!(
        "utilization      {:.2}% ({} of {} timesteps)",
        100.0 * r.utilization,
        c.emitted_steps,
        c.original_steps
    );
    println!(
        "path length      mean {:.4} -> {:.4} m over {} optimized segments",
        r.path_length.mean_original, r.path_length.mean_emitted, r.path_length.segments
    );
    if let Some(m) = &r.metrics {
        println!(
            "classification   precision {:.3} recall {:.3} F1 {:.3} accuracy {:.3}",
            m.positive.precision, m.positive.recall, m.positive.f1, m.accuracy
        );
    }
    for (stage, secs) in &r.timings {
        println!("time {stage:<11} {secs:.3}s");
    }
}
