use rand::Rng;
use segcurate_core::render::{RasterPair, TrajRaster};
use segcurate_core::repr::{encode, train, TrainConfig};
use segcurate_core::rng::stream;

/// A diagonal stroke, optionally with per-column vertical jitter.
fn stroke(jitter: bool, rng: &mut rand_chacha::ChaCha8Rng) -> RasterPair {
    let side = 16;
    let mut px = vec![0.0f32; side * side];
    let offset = rng.random_range(0..4);
    for u in 0..side {
        let shake = if jitter { rng.random_range(0..5) as isize - 2 } else { 0 };
        let v = ((u / 2 + offset) as isize + shake).clamp(0, side as isize - 1) as usize;
        px[v * side + u] = 0.2 + 0.8 * u as f32 / (side - 1) as f32;
    }
    RasterPair {
        start: TrajRaster::from_pixels(side, side, px),
        end: TrajRaster::blank(side, side),
        source: 0,
    }
}

fn pairs(seed: u64) -> (Vec<RasterPair>, Vec<RasterPair>) {
    let mut rng = stream(seed, 42);
    let pos = (0..100).map(|_| stroke(false, &mut rng)).collect();
    let neg = (0..100).map(|_| stroke(true, &mut rng)).collect();
    (pos, neg)
}

fn config(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 8,
        embed_dim: 16,
        hidden: vec![64],
        batch_size: 32,
        seed,
        ..TrainConfig::default()
    }
}

#[test]
fn loss_decreases_on_separable_pairs() {
    let decreasing = (0..10)
        .filter(|&seed| {
            let (pos, neg) = pairs(seed);
            let trace = train(&pos, &neg, &config(seed)).unwrap().loss_trace;
            trace.last().unwrap() < trace.first().unwrap()
        })
        .count();
    assert!(decreasing >= 9, "loss decreased on {decreasing}/10 seeds");
}

#[test]
fn trained_encoder_separates_the_classes() {
    let (pos, neg) = pairs(0);
    let params = train(&pos, &neg, &config(0)).unwrap().params;
    let embed = |p: &RasterPair| encode(&p.start, &p.end, &params).unwrap();
    let zp: Vec<_> = pos.iter().map(embed).collect();
    let zn: Vec<_> = neg.iter().map(embed).collect();
    let mean_distance = |a: &[segcurate_core::repr::Embedding], b: &[segcurate_core::repr::Embedding]| {
        let mut total = 0.0;
        for x in a {
            for y in b {
                total += x.distance(y);
            }
        }
        total / (a.len() * b.len()) as f64
    };
    let within = (mean_distance(&zp, &zp) + mean_distance(&zn, &zn)) / 2.0;
    let across = mean_distance(&zp, &zn);
    assert!(across > within, "across {across} within {within}");
}
