use std::collections::{BTreeSet, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{Dataset, Matrix};
use crate::error::{Error, Result};

/// How categorical columns are chosen during ingestion.
///
/// Listed columns are always one-hot encoded. In either mode any remaining
/// feature column with a cell that does not parse as a number is also
/// treated as categorical.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum CategoricalColumns {
    #[default]
    Auto,
    Listed(Vec<String>),
}

/// Cleaning instructions for one raw CSV file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreprocessSpec {
    pub target_column: String,
    pub drop_columns: Vec<String>,
    pub categorical_columns: CategoricalColumns,
}

impl Default for PreprocessSpec {
    fn default() -> Self {
        PreprocessSpec {
            target_column: "target".into(),
            drop_columns: Vec::new(),
            categorical_columns: CategoricalColumns::Auto,
        }
    }
}

impl PreprocessSpec {
    pub fn with_target(target: impl Into<String>) -> Self {
        PreprocessSpec {
            target_column: target.into(),
            ..Default::default()
        }
    }
}

const MISSING_TOKENS: [&str; 5] = ["na", "n/a", "nan", "null", "?"];

fn is_missing(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || MISSING_TOKENS.iter().any(|m| t.eq_ignore_ascii_case(m))
}

fn parse_number(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Loads and cleans a CSV file. The dataset is named after the file stem.
pub fn load_csv(path: impl AsRef<Path>, spec: &PreprocessSpec) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    load_csv_from_reader(file, &name, spec)
}

/// Loads and cleans CSV text from any reader.
///
/// Rows with any missing cell are dropped, then `drop_columns` are removed,
/// then categorical columns are expanded in place into indicator columns
/// named `col=level` with the lexicographically first level dropped.
pub fn load_csv_from_reader<R: Read>(reader: R, name: &str, spec: &PreprocessSpec) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let col_index = |c: &str| header.iter().position(|h| h == c);

    let target_idx = col_index(&spec.target_column)
        .ok_or_else(|| Error::Schema(format!("target column {:?} not found", spec.target_column)))?;
    if spec.drop_columns.contains(&spec.target_column) {
        return Err(Error::Schema("drop_columns may not contain the target column".into()));
    }
    let mut dropped = HashSet::new();
    for c in &spec.drop_columns {
        let i = col_index(c).ok_or_else(|| Error::Schema(format!("drop column {c:?} not found")))?;
        dropped.insert(i);
    }
    let mut listed = HashSet::new();
    if let CategoricalColumns::Listed(cols) = &spec.categorical_columns {
        for c in cols {
            let i = col_index(c).ok_or_else(|| Error::Schema(format!("categorical column {c:?} not found")))?;
            if i == target_idx {
                return Err(Error::Schema("the target column cannot be categorical".into()));
            }
            listed.insert(i);
        }
    }

    let mut rows: Vec<Vec<String>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::Schema(format!(
                "row has {} cells but the header has {}",
                rec.len(),
                header.len()
            )));
        }
        if rec.iter().any(is_missing) {
            continue;
        }
        rows.push(rec.iter().map(|c| c.trim().to_string()).collect());
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset(name.to_string()));
    }

    let target = rows
        .iter()
        .map(|r| {
            parse_number(&r[target_idx])
                .ok_or_else(|| Error::Encoding(format!("non-numeric target value {:?}", r[target_idx])))
        })
        .collect::<Result<Vec<f64>>>()?;

    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut names: Vec<String> = Vec::new();
    for (j, col_name) in header.iter().enumerate() {
        if j == target_idx || dropped.contains(&j) {
            continue;
        }
        let parsed: Option<Vec<f64>> = rows.iter().map(|r| parse_number(&r[j])).collect();
        match parsed {
            Some(values) if !listed.contains(&j) => {
                columns.push(values);
                names.push(col_name.clone());
            }
            _ => {
                let levels: BTreeSet<&str> = rows.iter().map(|r| r[j].as_str()).collect();
                for level in levels.iter().skip(1) {
                    columns.push(rows.iter().map(|r| f64::from(r[j] == *level)).collect());
                    names.push(format!("{col_name}={level}"));
                }
            }
        }
    }
    if columns.is_empty() {
        return Err(Error::Encoding(format!(
            "{name}: no feature columns remain after encoding"
        )));
    }
    Dataset::new(name, Matrix::from_columns(&columns)?, target, names)
}

/// Writes the dataset with its column names followed by a `target` column.
/// Values use the shortest round-trip decimal representation.
pub fn write_csv(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_csv_to(d, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_csv_to<W: Write>(d: &Dataset, w: &mut W) -> std::io::Result<()> {
    let mut header = d.column_names().join(",");
    header.push_str(",target\n");
    w.write_all(header.as_bytes())?;
    let mut line = String::new();
    for (i, row) in d.features().rows_iter().enumerate() {
        line.clear();
        for v in row {
            line.push_str(&format!("{v},"));
        }
        line.push_str(&format!("{}\n", d.target()[i]));
        w.write_all(line.as_bytes())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str, spec: &PreprocessSpec) -> Result<Dataset> {
        load_csv_from_reader(text.as_bytes(), "t", spec)
    }

    #[test]
    fn one_hot_drops_first_level() {
        let text = "color,x,target\nred,1,1\nblue,2,2\ngreen,3,3\nred,4,4\n";
        let d = load(text, &PreprocessSpec::default()).unwrap();
        assert_eq!(d.column_names(), &["color=green", "color=red", "x"]);
        assert_eq!(d.features().column(0), vec![0.0, 0.0, 1.0, 0.0]);
        assert_eq!(d.features().column(1), vec![1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn missing_rows_are_dropped() {
        let text = "a,b,target\n1,2,3\n4,,6\n7,8,9\n1,NA,2\n5,5,5\n";
        let d = load(text, &PreprocessSpec::default()).unwrap();
        assert_eq!(d.n_rows(), 3);
        assert_eq!(d.target(), &[3.0, 9.0, 5.0]);
    }

    #[test]
    fn numeric_passthrough() {
        let text = "a,b,target\n1,2,3\n4,5,6\n";
        let d = load(text, &PreprocessSpec::default()).unwrap();
        assert_eq!(d.features().as_slice(), &[1.0, 2.0, 4.0, 5.0]);
        assert_eq!(d.target(), &[3.0, 6.0]);
    }

    #[test]
    fn schema_and_empty_errors() {
        let text = "a,b\n1,2\n";
        assert!(matches!(load(text, &PreprocessSpec::default()), Err(Error::Schema(_))));
        let spec = PreprocessSpec {
            target_column: "b".into(),
            drop_columns: vec!["b".into()],
            ..Default::default()
        };
        assert!(matches!(load(text, &spec), Err(Error::Schema(_))));
        let empty = "a,target\n,1\n";
        assert!(matches!(
            load(empty, &PreprocessSpec::default()),
            Err(Error::EmptyDataset(_))
        ));
        let bad_target = "a,target\n1,x\n";
        assert!(matches!(
            load(bad_target, &PreprocessSpec::default()),
            Err(Error::Encoding(_))
        ));
    }

    #[test]
    fn listed_numeric_column_is_encoded() {
        let text = "id,code,target\n1,10,1\n2,20,2\n3,10,3\n";
        let spec = PreprocessSpec {
            target_column: "target".into(),
            drop_columns: vec!["id".into()],
            categorical_columns: CategoricalColumns::Listed(vec!["code".into()]),
        };
        let d = load(text, &spec).unwrap();
        assert_eq!(d.column_names(), &["code=20"]);
    }

    #[test]
    fn round_trip_is_exact() {
        let x = Matrix::from_rows(&[[0.1, 1e-300], [2.0 / 3.0, -5.5]]).unwrap();
        let d = Dataset::with_default_names("r", x, vec![std::f64::consts::PI, 0.0]).unwrap();
        let mut buf = Vec::new();
        write_csv_to(&d, &mut buf).unwrap();
        let back = load_csv_from_reader(buf.as_slice(), "r", &PreprocessSpec::default()).unwrap();
        assert_eq!(back, d);
    }
}
