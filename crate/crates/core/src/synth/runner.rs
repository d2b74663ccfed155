//! The propose, execute, evaluate, repair loop and accepted-dataset persistence.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::dsl::MechanismSpec;
use super::executor::{execute_mechanism, Scores};
use super::grid::{PerformanceGrid, TargetCell};
use super::proposer::{ProposeFailure, Proposer, TokenUsage};
use crate::data::{write_csv, Dataset};
use crate::error::{Error, Result};
use crate::rng::mix_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub bins: usize,
    pub witnesses: usize,
    pub budget: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            bins: 7,
            witnesses: 10,
            budget: 84,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        PerformanceGrid::new(self.bins)?;
        if self.witnesses == 0 || self.witnesses > self.budget {
            return Err(Error::Parameter(format!(
                "need 1 ≤ witnesses ≤ budget, got w = {}, b = {}",
                self.witnesses, self.budget
            )));
        }
        Ok(())
    }
}

/// Execution seed of a cell, shared by all its retries.
pub fn cell_seed(base: u64, cell: &TargetCell) -> u64 {
    mix_seed(base, &[cell.ii as u64, cell.jj as u64])
}

/// Seed used while filling witness slot `slot` of a cell.
pub fn slot_seed(base: u64, cell: &TargetCell, slot: usize) -> u64 {
    mix_seed(cell_seed(base, cell), &[slot as u64])
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Timings {
    pub propose_ms: f64,
    pub execute_ms: f64,
}

/// One trip around the loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub cell: String,
    pub target: TargetCell,
    /// 1-based attempt counter within the cell.
    pub attempt: usize,
    /// Witness slot this attempt was trying to fill.
    pub slot: usize,
    pub seed: u64,
    pub mechanism_brief: String,
    pub spec: Option<MechanismSpec>,
    pub params: IndexMap<String, f64>,
    pub achieved: Option<Scores>,
    pub accepted: bool,
    pub error: Option<String>,
    pub timings: Timings,
    pub tokens: Option<TokenUsage>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Complete,
    Exhausted,
    Aborted { reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellRun {
    pub cell: TargetCell,
    pub records: Vec<AttemptRecord>,
    pub accepted: Vec<(AttemptRecord, Dataset)>,
    pub status: CellStatus,
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Runs the loop for one cell. Accepted datasets are persisted under
/// `run_dir` as soon as they are found, when a directory is given.
pub fn run_cell(
    cell: &TargetCell,
    cfg: &RunConfig,
    proposer: &dyn Proposer,
    run_dir: Option<&Path>,
) -> Result<CellRun> {
    cfg.validate()?;
    let mut session = proposer.session(cell);
    let mut records: Vec<AttemptRecord> = Vec::new();
    let mut accepted = Vec::new();
    let mut status = CellStatus::Exhausted;
    for attempt in 1..=cfg.budget {
        if accepted.len() == cfg.witnesses {
            break;
        }
        let slot = accepted.len();
        let seed = slot_seed(cfg.seed, cell, slot);
        let mut rec = AttemptRecord {
            cell: cell.id(),
            target: *cell,
            attempt,
            slot,
            seed,
            mechanism_brief: String::new(),
            spec: None,
            params: IndexMap::new(),
            achieved: None,
            accepted: false,
            error: None,
            timings: Timings::default(),
            tokens: None,
        };
        let t0 = Instant::now();
        let proposal = session.propose(attempt, &records);
        rec.timings.propose_ms = ms(t0);
        match proposal {
            Err(ProposeFailure::Fatal(e)) => {
                status = CellStatus::Aborted { reason: e.to_string() };
                break;
            }
            Err(ProposeFailure::Invalid { reason, tokens }) => {
                rec.error = Some(reason);
                rec.tokens = tokens;
            }
            Ok(p) => {
                rec.mechanism_brief = p.brief;
                rec.tokens = p.tokens;
                let t1 = Instant::now();
                let outcome = execute_mechanism(&p.spec, seed, cell);
                rec.timings.execute_ms = ms(t1);
                rec.spec = Some(p.spec);
                match outcome {
                    Err(e) => rec.error = Some(e.to_string()),
                    Ok(exec) => {
                        rec.achieved = Some(exec.scores);
                        rec.params = exec.params;
                        rec.accepted = exec.in_box;
                        if rec.accepted {
                            let name = format!("{}__ds_{slot:03}", cell.id());
                            let dataset = exec.dataset.renamed(name);
                            if let Some(dir) = run_dir {
                                persist_accepted(dir, &rec, &dataset)?;
                            }
                            accepted.push((rec.clone(), dataset));
                        }
                    }
                }
            }
        }
        records.push(rec);
    }
    if accepted.len() == cfg.witnesses {
        status = CellStatus::Complete;
    }
    Ok(CellRun {
        cell: *cell,
        records,
        accepted,
        status,
    })
}

/// Runs every cell of the grid in parallel, in row-major order of results.
pub fn run_grid(cfg: &RunConfig, proposer: &dyn Proposer, run_dir: Option<&Path>) -> Result<Vec<CellRun>> {
    cfg.validate()?;
    let cells = PerformanceGrid::new(cfg.bins)?.cells();
    if let Some(dir) = run_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    cells.par_iter().map(|c| run_cell(c, cfg, proposer, run_dir)).collect()
}

/// `run_dir/cell_ii_jj/ds_slot`
pub fn slot_dir(run_dir: &Path, ii: usize, jj: usize, slot: usize) -> PathBuf {
    run_dir
        .join(format!("cell_{ii:02}_{jj:02}"))
        .join(format!("ds_{slot:03}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Bounds {
    x_lo: f64,
    x_hi: f64,
    y_lo: f64,
    y_hi: f64,
    x_center: f64,
    y_center: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CellRef {
    ii: usize,
    jj: usize,
    bounds: Bounds,
}

/// On-disk metadata of an accepted dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Meta {
    cell: CellRef,
    slot: usize,
    attempt: usize,
    achieved: Scores,
    brief: String,
    seed: u64,
    params: IndexMap<String, f64>,
    timings_ms: Timings,
    tokens: Option<TokenUsage>,
}

/// Writes `data.csv`, `meta.json` and `mechanism.json` for an accepted
/// attempt. Files are staged in a sibling directory and moved into place, so
/// a failure never leaves a partial slot behind. Existing slots are never
/// overwritten.
pub fn persist_accepted(run_dir: &Path, rec: &AttemptRecord, dataset: &Dataset) -> Result<PathBuf> {
    let (Some(achieved), Some(spec), true) = (rec.achieved, rec.spec.as_ref(), rec.accepted) else {
        return Err(Error::Invariant(format!(
            "attempt {} of {} was not accepted",
            rec.attempt, rec.cell
        )));
    };
    let target = slot_dir(run_dir, rec.target.ii, rec.target.jj, rec.slot);
    if target.exists() {
        return Err(Error::AlreadyExists(target));
    }
    let parent = target.parent().expect("slot dirs have a parent");
    fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    let staging = parent.join(format!(".ds_{:03}.partial", rec.slot));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    }
    fs::create_dir(&staging).map_err(|e| Error::io(&staging, e))?;

    let t = &rec.target;
    let meta = Meta {
        cell: CellRef {
            ii: t.ii,
            jj: t.jj,
            bounds: Bounds {
                x_lo: t.x_lo,
                x_hi: t.x_hi,
                y_lo: t.y_lo,
                y_hi: t.y_hi,
                x_center: t.x_center,
                y_center: t.y_center,
            },
        },
        slot: rec.slot,
        attempt: rec.attempt,
        achieved,
        brief: rec.mechanism_brief.clone(),
        seed: rec.seed,
        params: rec.params.clone(),
        timings_ms: rec.timings,
        tokens: rec.tokens,
    };
    let write = || -> Result<()> {
        write_csv(dataset, staging.join("data.csv"))?;
        let meta_path = staging.join("meta.json");
        fs::write(&meta_path, serde_json::to_string_pretty(&meta)? + "\n").map_err(|e| Error::io(&meta_path, e))?;
        let mech_path = staging.join("mechanism.json");
        fs::write(&mech_path, spec.to_json_pretty() + "\n").map_err(|e| Error::io(&mech_path, e))?;
        fs::rename(&staging, &target).map_err(|e| Error::io(&target, e))
    };
    if let Err(e) = write() {
        let _ = fs::remove_dir_all(&staging);
        return Err(e);
    }
    Ok(target)
}

/// Reads an accepted slot back into its attempt record.
pub fn load_accepted(slot_dir: &Path) -> Result<AttemptRecord> {
    let read = |name: &str| {
        let p = slot_dir.join(name);
        fs::read_to_string(&p).map_err(|e| Error::io(&p, e))
    };
    let meta: Meta = serde_json::from_str(&read("meta.json")?)?;
    let spec = MechanismSpec::from_json(&read("mechanism.json")?)?;
    let b = meta.cell.bounds;
    let target = TargetCell {
        ii: meta.cell.ii,
        jj: meta.cell.jj,
        x_lo: b.x_lo,
        x_hi: b.x_hi,
        y_lo: b.y_lo,
        y_hi: b.y_hi,
        x_center: b.x_center,
        y_center: b.y_center,
    };
    Ok(AttemptRecord {
        cell: target.id(),
        target,
        attempt: meta.attempt,
        slot: meta.slot,
        seed: meta.seed,
        mechanism_brief: meta.brief,
        spec: Some(spec),
        params: meta.params,
        achieved: Some(meta.achieved),
        accepted: true,
        error: None,
        timings: meta.timings_ms,
        tokens: meta.tokens,
    })
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub slot: usize,
    pub attempt: usize,
    pub x_score: f64,
    pub y_score: f64,
    pub data_sha256: String,
    pub mechanism_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestCell {
    pub cell: String,
    pub status: CellStatus,
    pub attempts: usize,
    pub accepted: Vec<ManifestEntry>,
}

/// Timing-free summary of a run: identical runs give byte-identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: RunConfig,
    pub proposer: String,
    pub total_attempts: usize,
    pub total_accepted: usize,
    pub hit_rate: f64,
    pub filled_cells: usize,
    pub cells: Vec<ManifestCell>,
}

pub fn build_manifest(cfg: &RunConfig, proposer: &str, runs: &[CellRun]) -> Result<Manifest> {
    let mut cells = Vec::with_capacity(runs.len());
    for run in runs {
        let mut accepted = Vec::new();
        for (rec, d) in &run.accepted {
            let mut csv = Vec::new();
            crate::data::write_csv_to(d, &mut csv).map_err(|e| Error::io("<memory>", e))?;
            let spec = rec.spec.as_ref().expect("accepted records carry a spec");
            let s = rec.achieved.expect("accepted records carry scores");
            accepted.push(ManifestEntry {
                slot: rec.slot,
                attempt: rec.attempt,
                x_score: s.x_score,
                y_score: s.y_score,
                data_sha256: sha256_hex(&csv),
                mechanism_sha256: sha256_hex((spec.to_json_pretty() + "\n").as_bytes()),
            });
        }
        cells.push(ManifestCell {
            cell: run.cell.id(),
            status: run.status.clone(),
            attempts: run.records.len(),
            accepted,
        });
    }
    let total_attempts: usize = cells.iter().map(|c| c.attempts).sum();
    let total_accepted: usize = cells.iter().map(|c| c.accepted.len()).sum();
    Ok(Manifest {
        config: cfg.clone(),
        proposer: proposer.to_string(),
        total_attempts,
        total_accepted,
        hit_rate: if total_attempts == 0 {
            0.0
        } else {
            total_accepted as f64 / total_attempts as f64
        },
        filled_cells: cells.iter().filter(|c| !c.accepted.is_empty()).count(),
        cells,
    })
}

/// Runs the grid into `run_dir` and writes `manifest.json` plus the full
/// attempt log `attempts.jsonl`.
pub fn generate(cfg: &RunConfig, proposer: &dyn Proposer, run_dir: &Path) -> Result<Manifest> {
    if run_dir.exists()
        && fs::read_dir(run_dir)
            .map_err(|e| Error::io(run_dir, e))?
            .next()
            .is_some()
    {
        return Err(Error::AlreadyExists(run_dir.to_path_buf()));
    }
    let runs = run_grid(cfg, proposer, Some(run_dir))?;
    let manifest = build_manifest(cfg, &proposer.id(), &runs)?;
    let mp = run_dir.join("manifest.json");
    fs::write(&mp, serde_json::to_string_pretty(&manifest)? + "\n").map_err(|e| Error::io(&mp, e))?;
    let mut log = String::new();
    for r in runs.iter().flat_map(|r| &r.records) {
        log.push_str(&serde_json::to_string(r)?);
        log.push('\n');
    }
    let lp = run_dir.join("attempts.jsonl");
    fs::write(&lp, log).map_err(|e| Error::io(&lp, e))?;
    Ok(manifest)
}
