use segcurate_core::data::{write_dataset, Dataset, Label};
use segcurate_core::optimize::{greedy_optimize, optimize_negatives, write_optimized, OptimizeConfig};
use segcurate_core::pipeline::{curate, segment_dataset, CurationConfig, SelectionLevel, Switches};
use segcurate_core::render::{AugmentConfig, CameraRig};
use segcurate_core::repr::TrainConfig;
use segcurate_core::synth::{generate, GroundTruth, SynthConfig};
use segcurate_core::Error;

fn small_config(seed: u64) -> CurationConfig {
    CurationConfig {
        rig: CameraRig {
            width: 32,
            height: 32,
            focal: 40.0,
        },
        augment: AugmentConfig {
            n_positive: 24,
            n_negative: 24,
            ..AugmentConfig::default()
        },
        train: TrainConfig {
            epochs: 3,
            embed_dim: 16,
            hidden: vec![32],
            batch_size: 32,
            ..TrainConfig::default()
        },
        ..CurationConfig::default()
    }
    .with_seed(seed)
}

fn with_switches(level: SelectionLevel, opt: bool, relabel: bool) -> CurationConfig {
    CurationConfig {
        switches: Switches::new(level, opt, relabel),
        ..small_config(0)
    }
}

fn data(seed: u64) -> (Dataset, Dataset, GroundTruth) {
    let (mixed, truth) = generate(&SynthConfig {
        n_expert: 4,
        n_suboptimal: 6,
        seed,
        ..SynthConfig::default()
    })
    .unwrap();
    let (expert, _) = generate(&SynthConfig {
        n_expert: 2,
        n_suboptimal: 0,
        seed: seed + 100,
        ..SynthConfig::default()
    })
    .unwrap();
    (mixed, expert.into_reference().unwrap(), truth)
}

fn bytes(ds: &Dataset) -> Vec<u8> {
    let mut buf = Vec::new();
    write_dataset(ds, &mut buf).unwrap();
    buf
}

#[test]
fn relabeling_keeps_every_timestep() {
    let (mixed, expert, truth) = data(1);
    let out = curate(&mixed, &expert, &small_config(1), Some(&truth)).unwrap();
    assert_eq!(out.report.utilization, 1.0);
    assert_eq!(out.dataset.total_steps(), mixed.total_steps());
    assert_eq!(out.dataset.demos.len(), mixed.demos.len());
    for (a, b) in out.dataset.demos.iter().zip(&mixed.demos) {
        assert_eq!(a.id, b.id);
        for (sa, sb) in a.steps.iter().zip(&b.steps) {
            assert_eq!(sa.obs, sb.obs);
        }
    }
    assert!(out.report.metrics.is_some());
    assert_eq!(out.embeddings.len(), out.report.counts.segments);
}

#[test]
fn without_relabeling_only_retained_waypoints_are_emitted() {
    let (mixed, expert, _) = data(2);
    let out = curate(&mixed, &expert, &with_switches(SelectionLevel::Segment, true, false), None).unwrap();
    let r = &out.report;
    let expected: usize = r
        .segments
        .iter()
        .map(|s| match &s.retained {
            Some(kept) => kept.len(),
            None => s.end - s.start + 1,
        })
        .sum();
    assert_eq!(r.counts.emitted_steps, expected);
    let discarded = r
        .segments
        .iter()
        .any(|s| s.retained.as_ref().is_some_and(|k| k.len() < s.end - s.start + 1));
    assert!(discarded, "corrupted data should lose some waypoints");
    assert!(r.utilization < 1.0);
}

#[test]
fn all_switches_off_is_the_identity() {
    let (mixed, expert, _) = data(3);
    let out = curate(&mixed, &expert, &with_switches(SelectionLevel::None, false, false), None).unwrap();
    assert_eq!(bytes(&out.dataset), bytes(&mixed));
    assert!(out.params.is_none() && out.reference.is_none());
    assert!(out.report.segments.iter().all(|s| s.label.is_none() && s.score.is_none()));
}

#[test]
fn selection_without_optimization_drops_negatives() {
    let (mixed, expert, _) = data(4);
    let out = curate(&mixed, &expert, &with_switches(SelectionLevel::Segment, false, false), None).unwrap();
    let r = &out.report;
    for s in &r.segments {
        assert_eq!(s.dropped, s.label == Some(Label::Negative));
        assert!(!s.optimized);
    }
    let kept: usize = r
        .segments
        .iter()
        .filter(|s| !s.dropped)
        .map(|s| s.end - s.start + 1)
        .sum();
    assert!(r.counts.emitted_steps <= kept);
}

#[test]
fn demonstration_level_labels_whole_demos() {
    let (mixed, expert, _) = data(5);
    let cfg = with_switches(SelectionLevel::Demonstration, true, true);
    let out = curate(&mixed, &expert, &cfg, None).unwrap();
    for demo in &mixed.demos {
        let recs: Vec<_> = out.report.segments.iter().filter(|s| s.demo_id == demo.id).collect();
        let mean = recs.iter().map(|s| s.score.unwrap()).sum::<f64>() / recs.len() as f64;
        let expected = if mean >= cfg.vote.delta_c { Label::Positive } else { Label::Negative };
        assert!(recs.iter().all(|s| s.label == Some(expected)), "{}", demo.id);
    }
    assert_eq!(out.report.utilization, 1.0);
}

#[test]
fn runs_repeat_exactly() {
    let (mixed, expert, truth) = data(6);
    let a = curate(&mixed, &expert, &small_config(6), Some(&truth)).unwrap();
    let b = curate(&mixed, &expert, &small_config(6), Some(&truth)).unwrap();
    assert_eq!(bytes(&a.dataset), bytes(&b.dataset));
    assert_eq!(a.report.without_timings().to_json(), b.report.without_timings().to_json());
    assert!(!a.report.timings.is_empty());
}

#[test]
fn expert_set_must_be_tagged() {
    let (mixed, _, _) = data(7);
    let err = curate(&mixed, &mixed, &small_config(7), None).unwrap_err();
    assert!(err.is_config());
    assert!(err.to_string().contains("config"), "{err}");
}

#[test]
fn invalid_configuration_is_reported_as_config_error() {
    let (mixed, expert, _) = data(8);
    let mut cfg = small_config(8);
    cfg.vote.delta_c = 1.5;
    let err = curate(&mixed, &expert, &cfg, None).unwrap_err();
    assert!(err.is_config(), "{err:?}");
    assert!(matches!(err, Error::Stage { .. }));
}

#[test]
fn optimized_segments_serialize_one_per_line() {
    let (mixed, _, _) = data(9);
    let segs = segment_dataset(&mixed, &CurationConfig::default().segmentation);
    let cfg = OptimizeConfig::default();
    let optimized = optimize_negatives(&segs, &cfg, mixed.demos[0].action_kind());
    let mut buf = Vec::new();
    write_optimized(&optimized, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), segs.len());
    for ((line, seg), opt) in lines.iter().zip(&segs).zip(&optimized) {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["demo_id"], seg.demo_id.as_str());
        assert_eq!(v["start"], seg.start);
        assert_eq!(v["end"], seg.end);
        assert_eq!(v["steps"].as_array().unwrap().len(), seg.len());
        let retained: Vec<usize> = serde_json::from_value(v["retained"].clone()).unwrap();
        assert_eq!(retained, opt.retained);
        assert_eq!(retained, greedy_optimize(seg, &cfg));
    }
}
