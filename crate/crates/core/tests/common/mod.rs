#![allow(dead_code)]

use rand::Rng;
use rand_distr::StandardNormal;

use perfspace::complexity::MetaFeatureVector;
use perfspace::meta::{MetaInstance, Provenance};
use perfspace::rng::rng_from_seed;

/// Meta-instances with features loosely tied to the labels, so learners have
/// something to find without the task being trivial.
pub fn random_meta(n: usize, provenance: Provenance, seed: u64) -> Vec<MetaInstance> {
    let mut rng = rng_from_seed(seed);
    (0..n)
        .map(|i| {
            let sx: f64 = rng.random_range(-0.2..1.0);
            let sy: f64 = rng.random_range(-0.2..1.0);
            let mut f = [0.0; 12];
            for (j, v) in f.iter_mut().enumerate() {
                let noise: f64 = rng.sample(StandardNormal);
                *v = (0.4 * if j % 2 == 0 { sx } else { sy } + 0.1 * noise).abs();
            }
            f[11] = rng.random_range(5.0..50.0);
            let continuous = [
                sy,
                sx,
                sy + 0.05 * rng.sample::<f64, _>(StandardNormal),
                sy + 0.03 * rng.sample::<f64, _>(StandardNormal),
                0.5 * (sx + sy),
            ];
            let best = continuous.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let binary = continuous.map(|v| best - v < 0.1);
            MetaInstance {
                name: format!("{provenance}_{i:03}"),
                provenance,
                features: MetaFeatureVector::from_array(f),
                continuous,
                binary,
                friedman_p: 0.01,
                cd: Some(0.61),
            }
        })
        .collect()
}

/// Pool rows placed at given performance-space coordinates.
pub fn pool_at(coords: &[(f64, f64)]) -> Vec<MetaInstance> {
    coords
        .iter()
        .enumerate()
        .map(|(i, &(sx, sy))| MetaInstance {
            name: format!("p{i}"),
            provenance: Provenance::Synthetic,
            features: MetaFeatureVector::from_array([0.5; 12]),
            continuous: [sy, sx, sy, sy, sy],
            binary: [true; 5],
            friedman_p: 1.0,
            cd: None,
        })
        .collect()
}
