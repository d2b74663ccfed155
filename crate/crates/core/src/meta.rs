//! Meta-dataset rows and their CSV representation.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::complexity::MetaFeatureVector;
use crate::data::Matrix;
use crate::error::{Error, Result};
use crate::labels::{Algorithm, MetaLabels};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Real,
    Synthetic,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Real => "real",
            Provenance::Synthetic => "synthetic",
        })
    }
}

impl FromStr for Provenance {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "real" => Ok(Provenance::Real),
            "synthetic" => Ok(Provenance::Synthetic),
            other => Err(Error::Schema(format!("unknown provenance {other:?}"))),
        }
    }
}

/// One row of the meta-dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaInstance {
    pub name: String,
    pub provenance: Provenance,
    pub features: MetaFeatureVector,
    /// Mean outer R² per algorithm, in [`Algorithm::ALL`] order.
    pub continuous: [f64; 5],
    pub binary: [bool; 5],
    pub friedman_p: f64,
    pub cd: Option<f64>,
}

impl MetaInstance {
    pub fn new(name: &str, provenance: Provenance, features: MetaFeatureVector, labels: &MetaLabels) -> Result<Self> {
        let continuous: [f64; 5] = labels
            .continuous
            .as_slice()
            .try_into()
            .map_err(|_| Error::LengthMismatch {
                expected: 5,
                actual: labels.continuous.len(),
            })?;
        let binary: [bool; 5] = labels.binary.as_slice().try_into().map_err(|_| Error::LengthMismatch {
            expected: 5,
            actual: labels.binary.len(),
        })?;
        Ok(MetaInstance {
            name: name.to_string(),
            provenance,
            features,
            continuous,
            binary,
            friedman_p: labels.friedman_p,
            cd: labels.cd,
        })
    }

    /// Performance-space position: (KNN label, linear-regression label).
    pub fn coordinates(&self) -> (f64, f64) {
        (
            self.continuous[Algorithm::Knn.index()],
            self.continuous[Algorithm::Lr.index()],
        )
    }
}

/// Column names of the meta-dataset CSV, in order.
pub fn meta_header() -> Vec<String> {
    let mut h = vec!["name".to_string(), "provenance".to_string()];
    h.extend(MetaFeatureVector::NAMES.iter().map(|s| s.to_string()));
    h.extend(Algorithm::ALL.iter().map(|a| format!("r2_{}", a.name())));
    h.extend(Algorithm::ALL.iter().map(|a| format!("meta_{}", a.name())));
    h.push("friedman_p".into());
    h.push("cd".into());
    h
}

/// Column names of the features-only CSV.
pub fn feature_header() -> Vec<String> {
    let mut h = vec!["name".to_string(), "provenance".to_string()];
    h.extend(MetaFeatureVector::NAMES.iter().map(|s| s.to_string()));
    h
}

fn meta_record(m: &MetaInstance) -> Vec<String> {
    let mut r = vec![m.name.clone(), m.provenance.to_string()];
    r.extend(m.features.to_array().iter().map(|v| v.to_string()));
    r.extend(m.continuous.iter().map(|v| v.to_string()));
    r.extend(m.binary.iter().map(|b| u8::from(*b).to_string()));
    r.push(m.friedman_p.to_string());
    r.push(m.cd.map(|v| v.to_string()).unwrap_or_default());
    r
}

pub fn write_meta_csv(path: &Path, rows: &[MetaInstance]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(meta_header())?;
    for m in rows {
        w.write_record(meta_record(m))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `name, provenance, c1..t2` rows.
pub fn write_feature_csv(path: &Path, rows: &[(String, Provenance, MetaFeatureVector)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(feature_header())?;
    for (name, prov, f) in rows {
        let mut r = vec![name.clone(), prov.to_string()];
        r.extend(f.to_array().iter().map(|v| v.to_string()));
        w.write_record(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn num(field: &str, col: &str, line: usize) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::Schema(format!("row {line}: column {col} holds {field:?}, not a number")))
}

fn bit(field: &str, col: &str, line: usize) -> Result<bool> {
    match field.trim() {
        "1" | "true" => Ok(true),
        "0" | "false" => Ok(false),
        other => Err(Error::Schema(format!(
            "row {line}: column {col} holds {other:?}, not a 0/1 bit"
        ))),
    }
}

/// Reads a meta-dataset written by [`write_meta_csv`]. The header must match exactly.
pub fn read_meta_csv(path: &Path) -> Result<Vec<MetaInstance>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let expected = meta_header();
    if header != expected {
        return Err(Error::Schema(format!(
            "{}: expected columns {:?}, found {:?}",
            path.display(),
            expected,
            header
        )));
    }
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = line + 2;
        let f = |i: usize| rec.get(i).unwrap_or("");
        let mut feats = [0.0; 12];
        for (k, v) in feats.iter_mut().enumerate() {
            *v = num(f(2 + k), &expected[2 + k], line)?;
        }
        let mut continuous = [0.0; 5];
        let mut binary = [false; 5];
        for k in 0..5 {
            continuous[k] = num(f(14 + k), &expected[14 + k], line)?;
            binary[k] = bit(f(19 + k), &expected[19 + k], line)?;
        }
        let cd = match f(25).trim() {
            "" => None,
            s => Some(num(s, "cd", line)?),
        };
        rows.push(MetaInstance {
            name: f(0).to_string(),
            provenance: f(1).parse()?,
            features: MetaFeatureVector::from_array(feats),
            continuous,
            binary,
            friedman_p: num(f(24), "friedman_p", line)?,
            cd,
        });
    }
    Ok(rows)
}

/// Real and synthetic meta-instances sharing one representation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetaDataset {
    pub rows: Vec<MetaInstance>,
}

impl MetaDataset {
    pub fn new(rows: Vec<MetaInstance>) -> Self {
        MetaDataset { rows }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(MetaDataset::new(read_meta_csv(path)?))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn with_provenance(&self, p: Provenance) -> MetaDataset {
        MetaDataset::new(self.rows.iter().filter(|r| r.provenance == p).cloned().collect())
    }

    /// The 12 meta-features as a matrix.
    pub fn feature_matrix(&self) -> Matrix {
        let rows: Vec<Vec<f64>> = self.rows.iter().map(|r| r.features.to_array().to_vec()).collect();
        Matrix::from_rows(&rows).unwrap_or_else(|_| Matrix::zeros(0, 12))
    }

    pub fn continuous_target(&self, a: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.continuous[a]).collect()
    }

    pub fn binary_labels(&self) -> Vec<Vec<bool>> {
        self.rows.iter().map(|r| r.binary.to_vec()).collect()
    }

    pub fn coordinates(&self) -> Vec<(f64, f64)> {
        self.rows.iter().map(MetaInstance::coordinates).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(name: &str, p: Provenance, cd: Option<f64>) -> MetaInstance {
        MetaInstance {
            name: name.into(),
            provenance: p,
            features: MetaFeatureVector::from_array([0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 17.5]),
            continuous: [0.5, 0.25, -0.125, 1.0 / 3.0, 0.7],
            binary: [true, false, true, true, false],
            friedman_p: 1e-7,
            cd,
        }
    }

    #[test]
    fn csv_round_trip() {
        let dir = std::env::temp_dir().join(format!("meta_rt_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("meta.csv");
        let rows = vec![
            row("a", Provenance::Real, Some(0.61)),
            row("b,c", Provenance::Synthetic, None),
        ];
        write_meta_csv(&path, &rows).unwrap();
        assert_eq!(read_meta_csv(&path).unwrap(), rows);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn coordinates_are_knn_then_lr() {
        assert_eq!(row("a", Provenance::Real, None).coordinates(), (0.25, 0.5));
    }
}
