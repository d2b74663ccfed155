use super::{Dataset, Matrix};

/// Maps every feature column and the target to `[0, 1]` with
/// `(v - min) / (max - min)`. Constant columns become all zeros.
pub fn minmax_normalize(d: &Dataset) -> Dataset {
    let scaler = MinMaxScaler::fit(d.features());
    let features = scaler.transform(d.features());
    let target = minmax_vec(d.target());
    Dataset {
        features,
        target,
        column_names: d.column_names().to_vec(),
        name: d.name().to_string(),
    }
}

fn minmax_vec(v: &[f64]) -> Vec<f64> {
    let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
        (lo.min(x), hi.max(x))
    });
    let range = hi - lo;
    v.iter()
        .map(|&x| if range > 0.0 { (x - lo) / range } else { 0.0 })
        .collect()
}

/// Per-column min-max scaler fitted on one matrix and applied to others.
#[derive(Debug, Clone, PartialEq)]
pub struct MinMaxScaler {
    pub mins: Vec<f64>,
    pub ranges: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit(m: &Matrix) -> Self {
        let d = m.ncols();
        let mut mins = vec![f64::INFINITY; d];
        let mut maxs = vec![f64::NEG_INFINITY; d];
        for row in m.rows_iter() {
            for j in 0..d {
                mins[j] = mins[j].min(row[j]);
                maxs[j] = maxs[j].max(row[j]);
            }
        }
        let ranges = mins.iter().zip(&maxs).map(|(lo, hi)| hi - lo).collect();
        MinMaxScaler { mins, ranges }
    }

    pub fn transform(&self, m: &Matrix) -> Matrix {
        let mut out = m.clone();
        for i in 0..out.nrows() {
            let row = out.row_mut(i);
            for ((v, lo), range) in row.iter_mut().zip(&self.mins).zip(&self.ranges) {
                *v = if *range > 0.0 { (*v - lo) / range } else { 0.0 };
            }
        }
        out
    }
}

/// Per-column standardisation with population standard deviation.
/// Zero-variance columns are centred and scaled by 1.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardScaler {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl StandardScaler {
    pub fn fit(m: &Matrix) -> Self {
        let n = m.nrows() as f64;
        let d = m.ncols();
        let mut means = vec![0.0; d];
        for row in m.rows_iter() {
            for j in 0..d {
                means[j] += row[j];
            }
        }
        means.iter_mut().for_each(|v| *v /= n);
        let mut vars = vec![0.0; d];
        for row in m.rows_iter() {
            for j in 0..d {
                let c = row[j] - means[j];
                vars[j] += c * c;
            }
        }
        let scales = vars
            .iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        StandardScaler { means, scales }
    }

    pub fn transform(&self, m: &Matrix) -> Matrix {
        let mut out = m.clone();
        for i in 0..out.nrows() {
            let row = out.row_mut(i);
            for ((v, m), s) in row.iter_mut().zip(&self.means).zip(&self.scales) {
                *v = (*v - m) / s;
            }
        }
        out
    }
}

/// Standardises `train` column-wise and applies the same parameters to `apply_to`.
pub fn standardize_fit_transform(train: &Matrix, apply_to: &Matrix) -> (Matrix, StandardScaler) {
    let scaler = StandardScaler::fit(train);
    (scaler.transform(apply_to), scaler)
}

/// Scalar standardisation for a target vector, with the inverse map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetScaler {
    pub mean: f64,
    pub scale: f64,
}

impl TargetScaler {
    pub fn fit(y: &[f64]) -> Self {
        let mean = super::mean(y);
        let sd = super::variance(y).sqrt();
        TargetScaler {
            mean,
            scale: if sd > 0.0 { sd } else { 1.0 },
        }
    }

    pub fn transform(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|v| (v - self.mean) / self.scale).collect()
    }

    pub fn inverse(&self, z: &[f64]) -> Vec<f64> {
        z.iter().map(|v| v * self.scale + self.mean).collect()
    }
}
