//! Batch drivers shared by the command-line tool and the end-to-end tests:
//! corpus discovery, meta-feature extraction and meta-labelling.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::complexity::{compute_meta_features, MetaFeatureVector};
use crate::data::{load_csv, PreprocessSpec};
use crate::error::{Error, Result};
use crate::labels::{label_dataset, LabelingConfig};
use crate::meta::{MetaInstance, Provenance};

/// A CSV file found under a corpus root, with the name it is reported under.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusEntry {
    pub name: String,
    pub path: PathBuf,
}

fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    for p in entries {
        let hidden = p
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.starts_with('.'));
        if hidden {
            continue;
        }
        if p.is_dir() {
            walk(&p, out)?;
        } else if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            out.push(p);
        }
    }
    Ok(())
}

/// Finds every CSV under `root` (or `root` itself when it is a file).
///
/// A file called `data.csv` is named after its directory, any other file
/// after its path without extension; path separators become `__`. Generator
/// output such as `cell_00_01/ds_002/data.csv` is therefore reported as
/// `cell_00_01__ds_002`.
pub fn discover(root: &Path) -> Result<Vec<CorpusEntry>> {
    if root.is_file() {
        let name = root
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::Parameter(format!("{}: unusable file name", root.display())))?;
        return Ok(vec![CorpusEntry {
            name: name.to_string(),
            path: root.to_path_buf(),
        }]);
    }
    if !root.is_dir() {
        return Err(Error::io(root, std::io::Error::from(std::io::ErrorKind::NotFound)));
    }
    let mut files = Vec::new();
    walk(root, &mut files)?;
    let entries: Vec<CorpusEntry> = files
        .into_iter()
        .map(|path| {
            let rel = path.strip_prefix(root).unwrap_or(&path);
            let named = if rel.file_name().is_some_and(|n| n == "data.csv") {
                rel.parent().map(Path::to_path_buf).unwrap_or_default()
            } else {
                rel.with_extension("")
            };
            let parts: Vec<String> = named
                .components()
                .map(|c| c.as_os_str().to_string_lossy().into_owned())
                .collect();
            let name = if parts.is_empty() {
                "data".to_string()
            } else {
                parts.join("__")
            };
            CorpusEntry { name, path }
        })
        .collect();
    if entries.is_empty() {
        return Err(Error::EmptyDataset(format!("no CSV files under {}", root.display())));
    }
    Ok(entries)
}

/// Meta-features of every dataset in the corpus, in discovery order.
pub fn batch_metafeatures(
    root: &Path,
    spec: &PreprocessSpec,
    provenance: Provenance,
) -> Result<Vec<(String, Provenance, MetaFeatureVector)>> {
    discover(root)?
        .par_iter()
        .map(|e| {
            let d = load_csv(&e.path, spec)?;
            let f = compute_meta_features(&d).map_err(|err| annotate(&e.name, err))?;
            Ok((e.name.clone(), provenance, f))
        })
        .collect()
}

/// Meta-features plus performance labels of every dataset in the corpus.
pub fn batch_metalabels(
    root: &Path,
    spec: &PreprocessSpec,
    provenance: Provenance,
    cfg: &LabelingConfig,
) -> Result<Vec<MetaInstance>> {
    discover(root)?
        .par_iter()
        .map(|e| {
            let d = load_csv(&e.path, spec)?;
            let f = compute_meta_features(&d).map_err(|err| annotate(&e.name, err))?;
            let report = label_dataset(&d, cfg).map_err(|err| annotate(&e.name, err))?;
            MetaInstance::new(&e.name, provenance, f, &report.labels)
        })
        .collect()
}

fn annotate(name: &str, e: Error) -> Error {
    match e {
        Error::InsufficientData(m) => Error::InsufficientData(format!("{name}: {m}")),
        Error::InvalidDataset(m) => Error::InvalidDataset(format!("{name}: {m}")),
        Error::Parameter(m) => Error::Parameter(format!("{name}: {m}")),
        other => other,
    }
}
