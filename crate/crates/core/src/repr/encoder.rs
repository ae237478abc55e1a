use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::render::TrajRaster;

/// Layer sizes of one raster branch; both branches share the descriptor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_width: usize,
    pub input_height: usize,
    pub hidden: Vec<usize>,
    /// Output size of each branch's projection head.
    pub projection: usize,
}

impl Architecture {
    pub fn reference(width: usize, height: usize) -> Self {
        Architecture {
            input_width: width,
            input_height: height,
            hidden: vec![512, 256],
            projection: 128,
        }
    }

    pub fn inputs(&self) -> usize {
        self.input_width * self.input_height
    }

    pub fn embed_dim(&self) -> usize {
        2 * self.projection
    }

    /// `(inputs, outputs)` of every layer in a branch, projection last.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::new();
        let mut prev = self.inputs();
        for &h in self.hidden.iter().chain(std::iter::once(&self.projection)) {
            dims.push((prev, h));
            prev = h;
        }
        dims
    }
}

/// Fully connected layer; weights are stored input-major (`inputs x outputs`).
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

impl Dense {
    fn init(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (inputs as f32).sqrt();
        let mut draw = || rng.random_range(-bound..=bound);
        let weights = (0..inputs * outputs).map(|_| draw()).collect();
        let bias = (0..outputs).map(|_| draw()).collect();
        Dense {
            inputs,
            outputs,
            weights,
            bias,
        }
    }

    fn row(&self, i: usize) -> &[f32] {
        &self.weights[i * self.outputs..(i + 1) * self.outputs]
    }

    fn forward(&self, input: Input<'_>, out: &mut Vec<f32>) {
        out.clear();
        out.extend_from_slice(&self.bias);
        input.for_each_nonzero(|i, x| {
            for (o, w) in out.iter_mut().zip(self.row(i)) {
                *o += x * w;
            }
        });
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub layers: Vec<Dense>,
}

impl Branch {
    /// Layer outputs: ReLU activations for hidden layers, raw projection last.
    pub(crate) fn forward(&self, input: &SparseInput) -> Vec<Vec<f32>> {
        let mut acts: Vec<Vec<f32>> = Vec::with_capacity(self.layers.len());
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::with_capacity(layer.outputs);
            match acts.last() {
                None => layer.forward(Input::Sparse(input), &mut out),
                Some(prev) => layer.forward(Input::Dense(prev), &mut out),
            }
            if l != last {
                for v in &mut out {
                    *v = v.max(0.0);
                }
            }
            acts.push(out);
        }
        acts
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub arch: Architecture,
    pub start: Branch,
    pub end: Branch,
}

impl EncoderParams {
    /// Uniform initialization in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn init(arch: Architecture, rng: &mut ChaCha8Rng) -> Self {
        let branch = |rng: &mut ChaCha8Rng| Branch {
            layers: arch
                .layer_dims()
                .into_iter()
                .map(|(i, o)| Dense::init(i, o, rng))
                .collect(),
        };
        let start = branch(rng);
        let end = branch(rng);
        EncoderParams { arch, start, end }
    }

    /// All-zero parameters of the given shape.
    pub fn zeros(arch: Architecture) -> Self {
        let branch = Branch {
            layers: arch
                .layer_dims()
                .into_iter()
                .map(|(i, o)| Dense {
                    inputs: i,
                    outputs: o,
                    weights: vec![0.0; i * o],
                    bias: vec![0.0; o],
                })
                .collect(),
        };
        EncoderParams {
            arch,
            start: branch.clone(),
            end: branch,
        }
    }

    pub fn embed_dim(&self) -> usize {
        self.arch.embed_dim()
    }

    pub fn is_finite(&self) -> bool {
        [&self.start, &self.end].iter().all(|b| {
            b.layers
                .iter()
                .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
        })
    }

    pub(crate) fn check_input(&self, r: &TrajRaster) -> Result<()> {
        if r.width != self.arch.input_width || r.height != self.arch.input_height {
            return Err(Error::Shape {
                expected: format!("{}x{} raster", self.arch.input_width, self.arch.input_height),
                actual: format!("{}x{}", r.width, r.height),
            });
        }
        Ok(())
    }

    /// Unnormalized concatenation of both projections, with layer caches.
    pub(crate) fn forward(
        &self,
        start: &SparseInput,
        end: &SparseInput,
    ) -> (Vec<f64>, Vec<Vec<f32>>, Vec<Vec<f32>>) {
        let a = self.start.forward(start);
        let b = self.end.forward(end);
        let raw = a
            .last()
            .unwrap()
            .iter()
            .chain(b.last().unwrap())
            .map(|&v| f64::from(v))
            .collect();
        (raw, a, b)
    }

    pub(crate) fn encode_sparse(&self, start: &SparseInput, end: &SparseInput) -> Embedding {
        Embedding::normalize(self.forward(start, end).0)
    }
}

/// Nonzero pixels of a raster.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseInput {
    pub idx: Vec<u32>,
    pub val: Vec<f32>,
}

impl SparseInput {
    pub fn from_raster(r: &TrajRaster) -> Self {
        let mut s = SparseInput::default();
        for (i, &v) in r.pixels().iter().enumerate() {
            if v != 0.0 {
                s.idx.push(i as u32);
                s.val.push(v);
            }
        }
        s
    }

    /// True for a blank raster.
    pub fn is_empty(&self) -> bool {
        self.idx.is_empty()
    }
}

#[derive(Clone, Copy)]
pub(crate) enum Input<'a> {
    Sparse(&'a SparseInput),
    Dense(&'a [f32]),
}

impl Input<'_> {
    pub(crate) fn for_each_nonzero(&self, mut f: impl FnMut(usize, f32)) {
        match self {
            Input::Sparse(s) => {
                for (&i, &v) in s.idx.iter().zip(&s.val) {
                    f(i as usize, v);
                }
            }
            Input::Dense(d) => {
                for (i, &v) in d.iter().enumerate() {
                    if v != 0.0 {
                        f(i, v);
                    }
                }
            }
        }
    }
}

/// Segment representation.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub z: Vec<f64>,
    pub normalized: bool,
}

impl Embedding {
    /// L2-normalizes `raw`. A zero vector maps to the first basis vector.
    pub fn normalize(raw: Vec<f64>) -> Self {
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        let z = if norm > 0.0 && norm.is_finite() {
            raw.into_iter().map(|v| v / norm).collect()
        } else {
            let mut e = vec![0.0; raw.len()];
            if let Some(first) = e.first_mut() {
                *first = 1.0;
            }
            e
        };
        Embedding {
            z,
            normalized: true,
        }
    }

    pub fn raw(z: Vec<f64>) -> Self {
        Embedding {
            z,
            normalized: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.z.len()
    }

    pub fn distance(&self, other: &Embedding) -> f64 {
        self.z
            .iter()
            .zip(&other.z)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Embeds a raster pair.
pub fn encode(start: &TrajRaster, end: &TrajRaster, params: &EncoderParams) -> Result<Embedding> {
    params.check_input(start)?;
    params.check_input(end)?;
    Ok(params.encode_sparse(&SparseInput::from_raster(start), &SparseInput::from_raster(end)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn small_arch() -> Architecture {
        Architecture {
            input_width: 8,
            input_height: 8,
            hidden: vec![16, 12],
            projection: 5,
        }
    }

    fn random_raster(rng: &mut ChaCha8Rng) -> TrajRaster {
        let px = (0..64)
            .map(|_| if rng.random_bool(0.3) { rng.random::<f32>() } else { 0.0 })
            .collect();
        TrajRaster::from_pixels(8, 8, px)
    }

    #[test]
    fn zero_parameters_give_the_first_basis_vector() {
        let p = EncoderParams::zeros(small_arch());
        let mut rng = stream(0, 0);
        let e = encode(&random_raster(&mut rng), &random_raster(&mut rng), &p).unwrap();
        let (raw, _, _) = p.forward(
            &SparseInput::from_raster(&random_raster(&mut rng)),
            &SparseInput::default(),
        );
        assert!(raw.iter().all(|&v| v == 0.0));
        assert_eq!(e.z[0], 1.0);
        assert!(e.z[1..].iter().all(|&v| v == 0.0));
        assert_eq!(e.dim(), 10);
    }

    #[test]
    fn encoding_is_deterministic_and_unit_norm() {
        let mut rng = stream(1, 0);
        for _ in 0..100 {
            let p = EncoderParams::init(small_arch(), &mut rng);
            let a = random_raster(&mut rng);
            let b = random_raster(&mut rng);
            let e = encode(&a, &b, &p).unwrap();
            assert_eq!(e, encode(&a, &b, &p).unwrap());
            let n = e.z.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let p = EncoderParams::zeros(small_arch());
        let big = TrajRaster::blank(9, 8);
        assert!(matches!(
            encode(&big, &TrajRaster::blank(8, 8), &p),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn reference_architecture_embeds_to_256() {
        let a = Architecture::reference(64, 64);
        assert_eq!(a.embed_dim(), 256);
        assert_eq!(a.layer_dims(), vec![(4096, 512), (512, 256), (256, 128)]);
    }
}
