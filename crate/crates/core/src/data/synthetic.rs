use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{Dataset, Provenance};
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;

/// Fixed seed for class centers: centers depend only on (class, dim), so a
/// training set and a test set drawn with different seeds share them.
const CENTER_SEED: u64 = 0x5EED_CE47_E125;

fn class_center(class: usize, dim: usize) -> Vec<f64> {
    let mut rng = rng::stream(CENTER_SEED, class as u64, "center");
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

/// Gaussian blobs: `per_class` points around each class center with
/// standard deviation `spread`, globally shuffled.
pub fn make_synthetic<T: Scalar>(
    classes: usize,
    per_class: usize,
    dim: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset<T>> {
    if classes == 0 || per_class == 0 || dim == 0 {
        return Err(Error::Config(
            "classes, per_class and dim must all be positive".into(),
        ));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(Error::Config(format!("spread must be finite and >= 0, got {spread}")));
    }
    let mut rng = rng::stream(seed, 0, "synthetic");
    let mut rows: Vec<(Vec<f64>, usize)> = Vec::with_capacity(classes * per_class);
    for c in 0..classes {
        let center = class_center(c, dim);
        for _ in 0..per_class {
            let x = center
                .iter()
                .map(|&mu| mu + spread * rng.sample::<f64, _>(StandardNormal))
                .collect();
            rows.push((x, c));
        }
    }
    rows.shuffle(&mut rng);

    let mut inputs = Vec::with_capacity(rows.len() * dim);
    let mut labels = Vec::with_capacity(rows.len());
    for (x, y) in rows {
        inputs.extend(x.into_iter().map(T::lit));
        labels.push(y);
    }
    Dataset::new(inputs, dim, labels, classes, Provenance::Synthetic)
}
