//! Supervised contrastive loss over a labeled batch.
//!
//! For each class `c` with batch members `B_c`, anchors `a` in `B_c`
//! contribute `-(1/|B_c|) * sum_{b in B_c, b != a} log softmax_a(b)`, where the
//! softmax of `z_a . z_b / t` runs over every other batch member. Anchors
//! without a same-label partner contribute nothing.

use super::Embedding;
use crate::data::Label;

/// Loss and its gradient with respect to each embedding.
pub fn supcon_loss(batch: &[(Embedding, Label)], temperature: f64) -> (f64, Vec<Vec<f64>>) {
    let z: Vec<&[f64]> = batch.iter().map(|(e, _)| e.z.as_slice()).collect();
    let labels: Vec<Label> = batch.iter().map(|(_, l)| *l).collect();
    supcon(&z, &labels, temperature)
}

pub(crate) fn supcon(z: &[&[f64]], labels: &[Label], temperature: f64) -> (f64, Vec<Vec<f64>>) {
    assert!(temperature > 0.0, "temperature must be positive");
    let n = z.len();
    let dim = z.first().map_or(0, |v| v.len());
    let mut grads = vec![vec![0.0; dim]; n];
    if n < 2 {
        return (0.0, grads);
    }
    let class_size = |l: Label| labels.iter().filter(|&&m| m == l).count();
    let sizes = [class_size(Label::Positive), class_size(Label::Negative)];
    let size_of = |l: Label| sizes[usize::from(l == Label::Negative)];

    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let sim: Vec<Vec<f64>> = (0..n)
        .map(|a| (0..n).map(|b| dot(z[a], z[b]) / temperature).collect())
        .collect();

    let mut loss = 0.0;
    for a in 0..n {
        let partners = size_of(labels[a]) - 1;
        if partners == 0 {
            continue;
        }
        let weight = 1.0 / size_of(labels[a]) as f64;
        let max = (0..n)
            .filter(|&b| b != a)
            .map(|b| sim[a][b])
            .fold(f64::NEG_INFINITY, f64::max);
        let lse = max
            + (0..n)
                .filter(|&b| b != a)
                .map(|b| (sim[a][b] - max).exp())
                .sum::<f64>()
                .ln();
        for b in (0..n).filter(|&b| b != a) {
            let same = labels[b] == labels[a];
            if same {
                loss -= weight * (sim[a][b] - lse);
            }
            // d loss / d sim[a][b]
            let p = (sim[a][b] - lse).exp();
            let coeff = -weight * (f64::from(u8::from(same)) - partners as f64 * p) / temperature;
            for k in 0..dim {
                grads[a][k] += coeff * z[b][k];
                grads[b][k] += coeff * z[a][k];
            }
        }
    }
    (loss, grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn emb(v: &[f64]) -> Embedding {
        Embedding::normalize(v.to_vec())
    }

    #[test]
    fn identical_positive_pair_has_zero_loss() {
        let batch = [(emb(&[1.0, 0.0]), Label::Positive), (emb(&[1.0, 0.0]), Label::Positive)];
        let (loss, _) = supcon_loss(&batch, 1.0);
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn three_point_reference_value() {
        // Independent scalar evaluation of the formula: log(e + 1/e) - 1.
        let batch = [
            (emb(&[1.0, 0.0]), Label::Positive),
            (emb(&[1.0, 0.0]), Label::Positive),
            (emb(&[-1.0, 0.0]), Label::Negative),
        ];
        let (loss, _) = supcon_loss(&batch, 1.0);
        assert!((loss - 0.12692801104297252).abs() < 1e-12, "{loss}");
    }

    #[test]
    fn no_partners_means_no_loss() {
        let batch = [(emb(&[1.0, 0.0]), Label::Positive), (emb(&[0.0, 1.0]), Label::Negative)];
        let (loss, grads) = supcon_loss(&batch, 0.1);
        assert_eq!(loss, 0.0);
        assert!(grads.iter().flatten().all(|&g| g == 0.0));
    }

    #[test]
    fn permutation_invariance() {
        let mut rng = stream(5, 0);
        let mut batch: Vec<(Embedding, Label)> = (0..9)
            .map(|i| {
                let v: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
                let l = if i % 3 == 0 { Label::Negative } else { Label::Positive };
                (emb(&v), l)
            })
            .collect();
        let (before, _) = supcon_loss(&batch, 0.1);
        batch.shuffle(&mut rng);
        let (after, _) = supcon_loss(&batch, 0.1);
        assert!((before - after).abs() < 1e-12);
        assert!(before >= 0.0);
    }
}
