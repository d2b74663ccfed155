//! Fold construction: shuffled K-fold and totally stratified cross-validation.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Fold membership for every observation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub fold_of: Vec<usize>,
    pub k: usize,
    pub seed: u64,
}

impl FoldAssignment {
    pub fn n(&self) -> usize {
        self.fold_of.len()
    }

    /// Indices in fold `f`, ascending.
    pub fn test_indices(&self, f: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.fold_of[i] == f).collect()
    }

    /// Indices outside fold `f`, ascending.
    pub fn train_indices(&self, f: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.fold_of[i] != f).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &f in &self.fold_of {
            s[f] += 1;
        }
        s
    }

    /// `(train, test)` index pairs in fold order.
    pub fn splits(&self) -> Vec<(Vec<usize>, Vec<usize>)> {
        (0..self.k)
            .map(|f| (self.train_indices(f), self.test_indices(f)))
            .collect()
    }
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k < 2 || k > n {
        return Err(Error::Parameter(format!("fold count {k} must satisfy 2 ≤ k ≤ n = {n}")));
    }
    Ok(())
}

/// Seeded permutation cut into `k` contiguous blocks; the first `n mod k`
/// folds hold one extra element.
pub fn kfold_shuffled(n: usize, k: usize, seed: u64) -> Result<FoldAssignment> {
    check_k(n, k)?;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng_from_seed(seed));
    let (base, extra) = (n / k, n % k);
    let mut fold_of = vec![0; n];
    let mut pos = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        for &i in &perm[pos..pos + size] {
            fold_of[i] = f;
        }
        pos += size;
    }
    Ok(FoldAssignment { fold_of, k, seed })
}

/// Totally stratified cross-validation.
///
/// Observations are visited in ascending target order (ties by original
/// index) and each one joins a fold with the fewest members so far; ties among
/// equally small folds are broken by a seeded uniform draw.
pub fn tscv_assign(y: &[f64], k: usize, seed: u64) -> Result<FoldAssignment> {
    let n = y.len();
    check_k(n, k)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]).then(a.cmp(&b)));
    let mut rng = rng_from_seed(seed);
    let mut sizes = vec![0usize; k];
    let mut fold_of = vec![0; n];
    let mut smallest = Vec::with_capacity(k);
    for &i in &order {
        let min = *sizes.iter().min().expect("k ≥ 2");
        smallest.clear();
        smallest.extend((0..k).filter(|&f| sizes[f] == min));
        let f = smallest[rng.random_range(0..smallest.len())];
        fold_of[i] = f;
        sizes[f] += 1;
    }
    Ok(FoldAssignment { fold_of, k, seed })
}

/// Fold count of the generator's evaluation harness.
pub const HARNESS_FOLDS: usize = 5;
/// Fixed seed of the generator's evaluation harness.
pub const HARNESS_SEED: u64 = 0;

/// The fixed five-fold stratified splitter used to score generated datasets.
pub fn eval_harness_splitter(y: &[f64]) -> Result<FoldAssignment> {
    if y.len() < HARNESS_FOLDS {
        return Err(Error::InsufficientData(format!(
            "the evaluation splitter needs at least {HARNESS_FOLDS} rows, got {}",
            y.len()
        )));
    }
    tscv_assign(y, HARNESS_FOLDS, HARNESS_SEED)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kfold_sizes() {
        assert_eq!(kfold_shuffled(10, 5, 3).unwrap().fold_sizes(), vec![2; 5]);
        assert_eq!(kfold_shuffled(7, 3, 3).unwrap().fold_sizes(), vec![3, 2, 2]);
        assert_eq!(kfold_shuffled(7, 3, 9).unwrap(), kfold_shuffled(7, 3, 9).unwrap());
        assert!(kfold_shuffled(3, 4, 0).is_err());
        assert!(kfold_shuffled(3, 1, 0).is_err());
    }

    #[test]
    fn tscv_two_folds_on_ramp() {
        let y: Vec<f64> = (1..=10).map(f64::from).collect();
        for seed in 0..20 {
            let a = tscv_assign(&y, 2, seed).unwrap();
            assert_eq!(a.fold_sizes(), vec![5, 5]);
            let m = |f: usize| a.test_indices(f).iter().map(|&i| y[i]).sum::<f64>() / 5.0;
            assert!((m(0) - m(1)).abs() <= 1.0);
        }
    }

    #[test]
    fn tscv_singletons_when_k_equals_n() {
        let a = tscv_assign(&[3.0, 1.0, 2.0], 3, 5).unwrap();
        assert_eq!(a.fold_sizes(), vec![1, 1, 1]);
        let h = eval_harness_splitter(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(h.fold_sizes(), vec![1; 5]);
        assert!(eval_harness_splitter(&[1.0; 4]).is_err());
    }
}
