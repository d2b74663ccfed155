//! Mechanism proposers: the pluggable "propose" step of the generation loop.

use serde::{Deserialize, Serialize};

use super::dsl::MechanismSpec;
use super::families::{build, Dials, Family};
use super::grid::TargetCell;
use super::runner::AttemptRecord;
use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenUsage {
    #[serde(rename = "in")]
    pub input: u64,
    #[serde(rename = "out")]
    pub output: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub spec: MechanismSpec,
    pub brief: String,
    pub tokens: Option<TokenUsage>,
}

/// Why a proposal could not be produced.
#[derive(Debug)]
pub enum ProposeFailure {
    /// The response was unusable; the attempt is spent and the loop continues.
    Invalid { reason: String, tokens: Option<TokenUsage> },
    /// The proposer cannot continue; the cell is aborted.
    Fatal(Error),
}

/// Per-cell proposing state (for example a conversation thread).
pub trait CellSession: Send {
    /// Proposes the next mechanism given every earlier attempt of this cell.
    fn propose(&mut self, attempt: usize, history: &[AttemptRecord]) -> Result<Proposal, ProposeFailure>;
}

/// A proposer backend. Sessions for different cells must be independent so
/// cells can run in parallel.
pub trait Proposer: Sync {
    fn id(&self) -> String;
    fn session(&self, cell: &TargetCell) -> Box<dyn CellSession + '_>;
}

/// Region-driven family choice followed by two-dial repair. Pure function of
/// the cell and the attempt history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeterministicProposer {
    pub n_rows: usize,
    /// Consecutive misses after which the next family of the region is tried.
    pub switch_after: usize,
}

impl Default for DeterministicProposer {
    fn default() -> Self {
        DeterministicProposer {
            n_rows: 200,
            switch_after: 4,
        }
    }
}

/// Families suited to a cell, most natural first.
pub fn families_for(cell: &TargetCell) -> Vec<Family> {
    let (tx, ty) = (cell.x_center, cell.y_center);
    if tx < 0.25 && ty < 0.25 {
        vec![Family::M5, Family::M10, Family::M3]
    } else if tx - ty >= 0.2 {
        if ty < 0.2 && tx > 0.6 {
            vec![Family::M6, Family::M2, Family::M4]
        } else {
            vec![Family::M2, Family::M4, Family::M6]
        }
    } else if ty - tx >= 0.2 {
        vec![Family::M3, Family::M8, Family::M9]
    } else {
        vec![Family::M1, Family::M7, Family::M10]
    }
}

/// Moves the dials one step according to where the last attempt landed.
pub fn repair(f: Family, dials: Dials, cell: &TargetCell, x: f64, y: f64) -> Dials {
    let mut next = dials;
    let step = f.distractor_step();
    if x > cell.x_hi {
        next.distractors += step;
    } else if x < cell.x_lo {
        if next.distractors >= step {
            next.distractors -= step;
        } else {
            next.curvature /= 1.25;
        }
    }
    if y > cell.y_hi {
        next.curvature *= 1.35;
    } else if y < cell.y_lo {
        next.curvature /= 1.35;
    }
    next
}

impl DeterministicProposer {
    /// Family and dial position for the next attempt. `issued[i]` is what was
    /// proposed for `history[i]`.
    pub fn plan(&self, cell: &TargetCell, history: &[AttemptRecord], issued: &[(Family, Dials)]) -> (Family, Dials) {
        if let (Some(last), Some(&prev)) = (history.last(), issued.last()) {
            if last.accepted {
                // Keep a mechanism that worked; the next slot has a fresh seed.
                return prev;
            }
        }
        let families = families_for(cell);
        let misses = history.iter().filter(|r| !r.accepted).count();
        let family = families[(misses / self.switch_after.max(1)) % families.len()];
        let last_same = issued.iter().rposition(|(f, _)| *f == family);
        let dials = match last_same {
            None => Dials::initial(family),
            Some(i) => {
                let (_, d) = issued[i];
                match history.get(i) {
                    Some(r) if r.accepted => d,
                    Some(AttemptRecord { achieved: Some(s), .. }) => repair(family, d, cell, s.x_score, s.y_score),
                    _ => Dials {
                        distractors: d.distractors + family.distractor_step(),
                        ..d
                    },
                }
            }
        };
        (family, dials)
    }
}

struct DeterministicSession {
    proposer: DeterministicProposer,
    cell: TargetCell,
    issued: Vec<(Family, Dials)>,
}

impl CellSession for DeterministicSession {
    fn propose(&mut self, _attempt: usize, history: &[AttemptRecord]) -> Result<Proposal, ProposeFailure> {
        let (family, dials) = self.proposer.plan(
            &self.cell,
            history,
            &self.issued[..history.len().min(self.issued.len())],
        );
        self.issued.push((family, dials));
        let (spec, brief) = build(family, dials, self.proposer.n_rows);
        Ok(Proposal {
            spec,
            brief: format!(
                "[{}] {brief}; dials: curvature={:.4}, distractors={}",
                family.label(),
                dials.curvature,
                dials.distractors
            ),
            tokens: None,
        })
    }
}

impl Proposer for DeterministicProposer {
    fn id(&self) -> String {
        format!("det(n_rows={})", self.n_rows)
    }

    fn session(&self, cell: &TargetCell) -> Box<dyn CellSession + '_> {
        Box::new(DeterministicSession {
            proposer: *self,
            cell: *cell,
            issued: Vec::new(),
        })
    }
}
