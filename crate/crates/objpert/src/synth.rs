//! Synthetic data generation and holdout scoring for experiments.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::glm::{DataPoint, Dataset};

/// Label model for generated data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    /// `y = X theta` rescaled into `[0, 1]`.
    Linear,
    /// `y = 1` iff `sigmoid(x' theta) > 1/2`.
    Logistic,
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Draws `n` unit-norm feature vectors and a hidden parameter, both standard
/// normal, and labels them per `kind`. Deterministic given the RNG state.
pub fn gen_synthetic<R: Rng + ?Sized>(
    kind: SyntheticKind,
    n: usize,
    d: usize,
    rng: &mut R,
) -> Dataset {
    let theta = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut xs = Vec::with_capacity(n);
    for _ in 0..n {
        let mut x = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = x.norm();
        if norm > 0.0 {
            x /= norm;
        }
        xs.push(x);
    }
    let raw: Vec<f64> = xs.iter().map(|x| x.dot(&theta)).collect();

    let points = match kind {
        SyntheticKind::Logistic => xs
            .into_iter()
            .zip(raw)
            .map(|(x, t)| DataPoint::new(x, f64::from(sigmoid(t) > 0.5)))
            .collect(),
        SyntheticKind::Linear => {
            let lo = raw.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let span = hi - lo;
            xs.into_iter()
                .zip(raw)
                .map(|(x, t)| {
                    let y = if span > 0.0 { (t - lo) / span } else { 0.5 };
                    DataPoint::new(x, y)
                })
                .collect()
        }
    };
    Dataset::new(d, points).expect("generated points share dimension d")
}

/// Fraction of holdout points misclassified by thresholding `x' theta` at 0.
pub fn zero_one_loss(theta: &DVector<f64>, data: &Dataset) -> f64 {
    if data.n() == 0 {
        return 0.0;
    }
    let mistakes = data
        .points()
        .iter()
        .filter(|p| f64::from(p.x.dot(theta) > 0.0) != p.y)
        .count();
    mistakes as f64 / data.n() as f64
}
