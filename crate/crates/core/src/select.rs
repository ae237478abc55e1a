//! Segment quality labels by distance-weighted k-nearest-neighbor voting.
//!
//! A segment's score is the share of `exp(-distance)` weight that its `k`
//! nearest labeled embeddings assign to the positive class; the segment is
//! high quality when the score reaches `delta_c`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Label, Segment};
use crate::error::{Error, Result};
use crate::render::{render_segment, CameraRig, TrajRaster, View};
use crate::repr::{Embedding, EncoderParams, SparseInput};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VoteConfig {
    pub k: usize,
    pub delta_c: f64,
}

impl Default for VoteConfig {
    fn default() -> Self {
        VoteConfig { k: 64, delta_c: 0.5 }
    }
}

impl VoteConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::Config("vote.k must be >= 1".into()));
        }
        if !(self.delta_c > 0.0 && self.delta_c < 1.0) {
            return Err(Error::Config("vote.delta_c must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Labeled reference embeddings: expert segments plus their augmentations.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledEmbeddingSet {
    entries: Vec<(Embedding, Label)>,
}

impl LabeledEmbeddingSet {
    /// Requires at least one entry of each label and a common dimension.
    pub fn new(entries: Vec<(Embedding, Label)>) -> Result<Self> {
        let (pos, neg) = count_labels(&entries);
        if pos == 0 || neg == 0 {
            return Err(Error::Config(format!(
                "reference set needs both labels (found {pos} positive, {neg} negative)"
            )));
        }
        let dim = entries[0].0.dim();
        if let Some((e, _)) = entries.iter().find(|(e, _)| e.dim() != dim) {
            return Err(Error::Shape {
                expected: format!("{dim}-dimensional embedding"),
                actual: format!("{}", e.dim()),
            });
        }
        Ok(LabeledEmbeddingSet { entries })
    }

    pub fn entries(&self) -> &[(Embedding, Label)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.entries[0].0.dim()
    }

    /// `(positive, negative)` entry counts.
    pub fn counts(&self) -> (usize, usize) {
        count_labels(&self.entries)
    }

    pub fn into_entries(self) -> Vec<(Embedding, Label)> {
        self.entries
    }
}

fn count_labels(entries: &[(Embedding, Label)]) -> (usize, usize) {
    let pos = entries.iter().filter(|(_, l)| l.is_positive()).count();
    (pos, entries.len() - pos)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vote {
    pub label: Label,
    /// Positive share of the neighbor weight, in `[0, 1]`.
    pub score: f64,
}

/// Votes over the `k` nearest entries (fewer if the set is smaller); distance
/// ties go to the lower entry index.
pub fn vote(z: &Embedding, reference: &LabeledEmbeddingSet, cfg: &VoteConfig) -> Vote {
    let mut dist: Vec<(f64, usize)> = reference
        .entries
        .iter()
        .enumerate()
        .map(|(i, (e, _))| (z.distance(e), i))
        .collect();
    let k = cfg.k.min(dist.len());
    let by_distance = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < dist.len() {
        dist.select_nth_unstable_by(k - 1, by_distance);
        dist.truncate(k);
    }
    dist.sort_unstable_by(by_distance);
    let nearest = dist[0].0;
    let (mut pos, mut all) = (0.0, 0.0);
    for &(d, i) in &dist {
        // Shifted by the nearest distance; the ratio is unchanged.
        let w = (-(d - nearest)).exp();
        all += w;
        if reference.entries[i].1.is_positive() {
            pos += w;
        }
    }
    let score = pos / all;
    let label = if score >= cfg.delta_c {
        Label::Positive
    } else {
        Label::Negative
    };
    Vote { label, score }
}

#[derive(Debug, Clone, Default)]
pub struct Classification {
    pub positives: Vec<Segment>,
    pub negatives: Vec<Segment>,
    /// Per input segment, in input order.
    pub scores: Vec<f64>,
    pub labels: Vec<Label>,
    pub embeddings: Vec<Embedding>,
}

/// Embeds a segment rendered from `view`, with a blank ending raster.
pub fn embed_segment(
    seg: &Segment,
    params: &EncoderParams,
    view: &View,
    rig: &CameraRig,
) -> Result<Embedding> {
    let cam = view.camera_for(&seg.positions(), rig);
    let start = render_segment(seg, &cam);
    params.check_input(&start)?;
    let end = TrajRaster::blank(rig.width, rig.height);
    Ok(params.encode_sparse(&SparseInput::from_raster(&start), &SparseInput::from_raster(&end)))
}

/// Renders, embeds and votes on each segment; partitions them by label.
pub fn classify_segments(
    segs: &[Segment],
    params: &EncoderParams,
    reference: &LabeledEmbeddingSet,
    view: &View,
    rig: &CameraRig,
    cfg: &VoteConfig,
) -> Result<Classification> {
    if !segs.is_empty() && reference.dim() != params.embed_dim() {
        return Err(Error::Shape {
            expected: format!("{}-dimensional reference set", params.embed_dim()),
            actual: format!("{}", reference.dim()),
        });
    }
    let results: Vec<(Embedding, Vote)> = segs
        .par_iter()
        .map(|seg| {
            let z = embed_segment(seg, params, view, rig)?;
            let v = vote(&z, reference, cfg);
            Ok((z, v))
        })
        .collect::<Result<_>>()?;
    let mut out = Classification::default();
    for (seg, (z, v)) in segs.iter().zip(results) {
        match v.label {
            Label::Positive => out.positives.push(seg.clone()),
            Label::Negative => out.negatives.push(seg.clone()),
        }
        out.scores.push(v.score);
        out.labels.push(v.label);
        out.embeddings.push(z);
    }
    Ok(out)
}

const EMBEDDINGS_FORMAT: &str = "segcurate-embeddings";

#[derive(Serialize, Deserialize)]
struct EmbeddingsHeader {
    format: String,
    version: u32,
    dim: usize,
    /// One `+` or `-` per entry.
    labels: String,
    #[serde(default)]
    meta: serde_json::Value,
}

/// Writes labeled embeddings: `u64` LE header length, JSON header, then
/// `f64` LE values entry by entry.
pub fn write_embeddings<W: Write>(
    entries: &[(Embedding, Label)],
    meta: &serde_json::Value,
    mut w: W,
) -> std::io::Result<()> {
    let dim = entries.first().map_or(0, |(e, _)| e.dim());
    let header = EmbeddingsHeader {
        format: EMBEDDINGS_FORMAT.into(),
        version: 1,
        dim,
        labels: entries.iter().map(|(_, l)| l.symbol()).collect(),
        meta: meta.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for (e, _) in entries {
        for v in &e.z {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()
}

pub fn read_embeddings<R: Read>(
    mut r: R,
    path: &Path,
) -> Result<(Vec<(Embedding, Label)>, serde_json::Value)> {
    let bad = |message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };
    let io = |e: std::io::Error| Error::io(path, e);
    let mut len = [0u8; 8];
    r.read_exact(&mut len).map_err(io)?;
    let len = u64::from_le_bytes(len) as usize;
    if len > 1 << 28 {
        return Err(bad(format!("header length {len} is implausible")));
    }
    let mut json = vec![0u8; len];
    r.read_exact(&mut json).map_err(io)?;
    let header: EmbeddingsHeader =
        serde_json::from_slice(&json).map_err(|e| bad(format!("header: {e}")))?;
    if header.format != EMBEDDINGS_FORMAT {
        return Err(bad(format!("unexpected format `{}`", header.format)));
    }
    let mut entries = Vec::with_capacity(header.labels.len());
    let mut buf = vec![0u8; header.dim * 8];
    for c in header.labels.chars() {
        let label = match c {
            '+' => Label::Positive,
            '-' => Label::Negative,
            other => return Err(bad(format!("unknown label `{other}`"))),
        };
        r.read_exact(&mut buf).map_err(io)?;
        let z: Vec<f64> = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        let normalized = (norm - 1.0).abs() <= 1e-6;
        entries.push((Embedding { z, normalized }, label));
    }
    Ok((entries, header.meta))
}

pub fn save_embeddings(
    entries: &[(Embedding, Label)],
    meta: &serde_json::Value,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_embeddings(entries, meta, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn load_embeddings(
    path: impl AsRef<Path>,
) -> Result<(Vec<(Embedding, Label)>, serde_json::Value)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_embeddings(BufReader::new(file), path)
}
