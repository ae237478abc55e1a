//! Plain mini-batch SGD on the contrastive loss.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::encoder::{Architecture, Branch, EncoderParams, Input, SparseInput};
use super::loss::supcon;
use crate::data::Label;
use crate::error::{Error, Result};
use crate::render::RasterPair;
use crate::rng::stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub temperature: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub embed_dim: usize,
    /// Hidden layer widths of each raster branch.
    pub hidden: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            temperature: 0.1,
            learning_rate: 0.005,
            batch_size: 64,
            epochs: 10,
            seed: 0,
            embed_dim: 256,
            hidden: vec![512, 256],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(Error::Config("train.temperature must be > 0".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("train.learning_rate must be finite and >= 0".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("train.batch_size must be >= 2".into()));
        }
        if self.embed_dim < 2 || !self.embed_dim.is_multiple_of(2) {
            return Err(Error::Config("train.embed_dim must be even and >= 2".into()));
        }
        Ok(())
    }

    pub fn architecture(&self, width: usize, height: usize) -> Architecture {
        Architecture {
            input_width: width,
            input_height: height,
            hidden: self.hidden.clone(),
            projection: self.embed_dim / 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: EncoderParams,
    /// Mean batch loss per epoch.
    pub loss_trace: Vec<f64>,
}

/// Gradient buffers; rows of each weight matrix are tracked so that only
/// touched rows are updated and cleared.
struct LayerGrad {
    w: Vec<f32>,
    b: Vec<f32>,
    touched: Vec<bool>,
    rows: Vec<usize>,
}

struct BranchGrad {
    layers: Vec<LayerGrad>,
}

impl BranchGrad {
    fn new(branch: &Branch) -> Self {
        BranchGrad {
            layers: branch
                .layers
                .iter()
                .map(|l| LayerGrad {
                    w: vec![0.0; l.weights.len()],
                    b: vec![0.0; l.bias.len()],
                    touched: vec![false; l.inputs],
                    rows: Vec::new(),
                })
                .collect(),
        }
    }

    fn apply(&mut self, branch: &mut Branch, lr: f32) {
        for (layer, g) in branch.layers.iter_mut().zip(&mut self.layers) {
            let out = layer.outputs;
            g.rows.sort_unstable();
            for &r in &g.rows {
                let w = &mut layer.weights[r * out..(r + 1) * out];
                let gw = &mut g.w[r * out..(r + 1) * out];
                for (wi, gi) in w.iter_mut().zip(gw.iter_mut()) {
                    *wi -= lr * *gi;
                    *gi = 0.0;
                }
                g.touched[r] = false;
            }
            g.rows.clear();
            for (bi, gi) in layer.bias.iter_mut().zip(&mut g.b) {
                *bi -= lr * *gi;
                *gi = 0.0;
            }
        }
    }
}

/// Dot product with independent partial sums so it vectorizes.
fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut lanes = [0.0f32; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f32 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            lanes[k] += x[k] * y[k];
        }
    }
    lanes.iter().sum::<f32>() + tail
}

/// Accumulates parameter gradients of one branch given `d_out` at its output.
fn backward(branch: &Branch, input: &SparseInput, acts: &[Vec<f32>], d_out: Vec<f32>, g: &mut BranchGrad) {
    let mut d = d_out;
    for l in (0..branch.layers.len()).rev() {
        let layer = &branch.layers[l];
        let lg = &mut g.layers[l];
        let out = layer.outputs;
        if l + 1 != branch.layers.len() {
            for (di, &a) in d.iter_mut().zip(&acts[l]) {
                if a <= 0.0 {
                    *di = 0.0;
                }
            }
        }
        for (gb, &di) in lg.b.iter_mut().zip(&d) {
            *gb += di;
        }
        let x = if l == 0 {
            Input::Sparse(input)
        } else {
            Input::Dense(&acts[l - 1])
        };
        x.for_each_nonzero(|i, xi| {
            if !lg.touched[i] {
                lg.touched[i] = true;
                lg.rows.push(i);
            }
            for (gw, &di) in lg.w[i * out..(i + 1) * out].iter_mut().zip(&d) {
                *gw += xi * di;
            }
        });
        if l > 0 {
            let prev = &acts[l - 1];
            d = (0..layer.inputs)
                .map(|i| {
                    if prev[i] <= 0.0 {
                        return 0.0;
                    }
                    dot(&layer.weights[i * out..(i + 1) * out], &d)
                })
                .collect();
        }
    }
}

/// Splits shuffled class indices into batches holding both classes.
fn stratified_batches(pos: &[usize], neg: &[usize], batch_size: usize) -> Vec<Vec<usize>> {
    let total = pos.len() + neg.len();
    let mut count = total.div_ceil(batch_size).max(1);
    if pos.len() >= 2 && neg.len() >= 2 {
        count = count.min(pos.len() / 2).min(neg.len() / 2).max(1);
    }
    let share = |items: &[usize], b: usize| {
        let lo = b * items.len() / count;
        let hi = (b + 1) * items.len() / count;
        items[lo..hi].to_vec()
    };
    (0..count)
        .map(|b| {
            let mut batch = share(pos, b);
            batch.extend(share(neg, b));
            batch
        })
        .collect()
}

/// Trains an encoder; deterministic for a fixed seed.
pub fn train(
    positives: &[RasterPair],
    negatives: &[RasterPair],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let first = positives
        .first()
        .or(negatives.first())
        .ok_or_else(|| Error::Config("training needs at least one sample".into()))?;
    let arch = cfg.architecture(first.start.width, first.start.height);
    let mut params = EncoderParams::init(arch, &mut stream(cfg.seed, 0));
    for pair in positives.iter().chain(negatives) {
        params.check_input(&pair.start)?;
        params.check_input(&pair.end)?;
    }

    let inputs: Vec<(SparseInput, SparseInput)> = positives
        .iter()
        .chain(negatives)
        .map(|p| (SparseInput::from_raster(&p.start), SparseInput::from_raster(&p.end)))
        .collect();
    let labels: Vec<Label> = std::iter::repeat_n(Label::Positive, positives.len())
        .chain(std::iter::repeat_n(Label::Negative, negatives.len()))
        .collect();

    let mut shuffle_rng = stream(cfg.seed, 1);
    let mut grad_start = BranchGrad::new(&params.start);
    let mut grad_end = BranchGrad::new(&params.end);
    let half = params.arch.projection;
    let lr = cfg.learning_rate as f32;
    let mut loss_trace = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        let mut pos: Vec<usize> = (0..positives.len()).collect();
        let mut neg: Vec<usize> = (positives.len()..inputs.len()).collect();
        pos.shuffle(&mut shuffle_rng);
        neg.shuffle(&mut shuffle_rng);
        let batches = stratified_batches(&pos, &neg, cfg.batch_size);
        let mut epoch_loss = 0.0;
        for batch in &batches {
            // Blank ending rasters share one forward pass per batch; their
            // gradients are summed and pushed through the branch once.
            let mut blank: Option<(usize, Vec<Vec<f32>>)> = None;
            let mut blank_d = vec![0.0f32; half];
            let mut caches = Vec::with_capacity(batch.len());
            let mut zs = Vec::with_capacity(batch.len());
            for &i in batch {
                let (start, end) = &inputs[i];
                let a = params.start.forward(start);
                let b = if end.is_empty() {
                    if blank.is_none() {
                        blank = Some((i, params.end.forward(end)));
                    }
                    None
                } else {
                    Some(params.end.forward(end))
                };
                let b_out = match &b {
                    Some(acts) => acts.last().unwrap(),
                    None => blank.as_ref().unwrap().1.last().unwrap(),
                };
                let raw: Vec<f64> = a
                    .last()
                    .unwrap()
                    .iter()
                    .chain(b_out)
                    .map(|&v| f64::from(v))
                    .collect();
                let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
                let z = super::Embedding::normalize(raw).z;
                caches.push((a, b, norm));
                zs.push(z);
            }
            let z_refs: Vec<&[f64]> = zs.iter().map(Vec::as_slice).collect();
            let batch_labels: Vec<Label> = batch.iter().map(|&i| labels[i]).collect();
            let (loss, dz) = supcon(&z_refs, &batch_labels, cfg.temperature);
            epoch_loss += loss;

            for (k, &i) in batch.iter().enumerate() {
                let (a, b, norm) = &caches[k];
                if *norm == 0.0 || !norm.is_finite() {
                    continue;
                }
                // Through z = raw / |raw|.
                let z = &zs[k];
                let along: f64 = z.iter().zip(&dz[k]).map(|(x, g)| x * g).sum();
                let d_raw: Vec<f32> = z
                    .iter()
                    .zip(&dz[k])
                    .map(|(x, g)| ((g - x * along) / norm) as f32)
                    .collect();
                backward(&params.start, &inputs[i].0, a, d_raw[..half].to_vec(), &mut grad_start);
                match b {
                    Some(b) => {
                        backward(&params.end, &inputs[i].1, b, d_raw[half..].to_vec(), &mut grad_end)
                    }
                    None => {
                        for (acc, d) in blank_d.iter_mut().zip(&d_raw[half..]) {
                            *acc += d;
                        }
                    }
                }
            }
            if let Some((i, acts)) = &blank {
                backward(&params.end, &inputs[*i].1, acts, blank_d, &mut grad_end);
            }
            grad_start.apply(&mut params.start, lr);
            grad_end.apply(&mut params.end, lr);
        }
        loss_trace.push(epoch_loss / batches.len() as f64);
    }
    Ok(TrainOutcome { params, loss_trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::TrajRaster;
    use rand::Rng;

    fn arch_cfg(epochs: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs,
            seed,
            embed_dim: 8,
            hidden: vec![16],
            batch_size: 16,
            ..Default::default()
        }
    }

    fn stripe(row: usize, noise: f32, rng: &mut rand_chacha::ChaCha8Rng) -> RasterPair {
        let mut px = vec![0.0f32; 100];
        for u in 0..10 {
            let wobble = if noise > 0.0 { rng.random_range(0..3) } else { 1 };
            let r = (row + wobble).min(9);
            px[r * 10 + u] = 0.2 + 0.08 * u as f32;
        }
        RasterPair {
            start: TrajRaster::from_pixels(10, 10, px),
            end: TrajRaster::blank(10, 10),
            source: 0,
        }
    }

    #[test]
    fn batches_keep_both_classes() {
        let pos: Vec<usize> = (0..10).collect();
        let neg: Vec<usize> = (10..13).collect();
        let batches = stratified_batches(&pos, &neg, 4);
        assert_eq!(batches.len(), 1);
        let pos: Vec<usize> = (0..40).collect();
        let neg: Vec<usize> = (40..80).collect();
        let batches = stratified_batches(&pos, &neg, 16);
        assert_eq!(batches.len(), 5);
        for b in &batches {
            assert_eq!(b.iter().filter(|&&i| i < 40).count(), 8);
        }
        let all: usize = batches.iter().map(Vec::len).sum();
        assert_eq!(all, 80);
    }

    #[test]
    fn zero_epochs_return_the_initialization() {
        let mut rng = stream(0, 9);
        let pos: Vec<RasterPair> = (0..4).map(|_| stripe(3, 0.0, &mut rng)).collect();
        let neg: Vec<RasterPair> = (0..4).map(|_| stripe(3, 1.0, &mut rng)).collect();
        let cfg = arch_cfg(0, 4);
        let out = train(&pos, &neg, &cfg).unwrap();
        let init = EncoderParams::init(cfg.architecture(10, 10), &mut stream(4, 0));
        assert_eq!(out.params, init);
        assert!(out.loss_trace.is_empty());
    }

    #[test]
    fn identical_inputs_stay_finite() {
        let mut rng = stream(0, 9);
        let same = stripe(3, 0.0, &mut rng);
        let pos = vec![same.clone(); 6];
        let neg = vec![same; 6];
        let out = train(&pos, &neg, &arch_cfg(3, 1)).unwrap();
        assert!(out.params.is_finite());
        assert!(out.loss_trace.iter().all(|l| l.is_finite()));
    }

    #[test]
    fn training_is_deterministic() {
        let mut rng = stream(0, 9);
        let pos: Vec<RasterPair> = (0..20).map(|_| stripe(3, 0.0, &mut rng)).collect();
        let neg: Vec<RasterPair> = (0..20).map(|_| stripe(3, 1.0, &mut rng)).collect();
        let a = train(&pos, &neg, &arch_cfg(2, 3)).unwrap();
        let b = train(&pos, &neg, &arch_cfg(2, 3)).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.loss_trace, b.loss_trace);
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = TrainConfig {
            batch_size: 1,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        assert!(train(&[], &[], &TrainConfig::default()).is_err());
    }
}
