use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// B×B partition of the unit performance square.
/// x is the KNN landmarker score, y the linear-regression score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerformanceGrid {
    pub bins: usize,
}

/// One box of the grid. `ii` indexes the y (linear) bin, `jj` the x (KNN) bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetCell {
    pub ii: usize,
    pub jj: usize,
    pub x_lo: f64,
    pub x_hi: f64,
    pub y_lo: f64,
    pub y_hi: f64,
    pub x_center: f64,
    pub y_center: f64,
}

impl PerformanceGrid {
    pub fn new(bins: usize) -> Result<Self> {
        if bins < 2 {
            return Err(Error::Parameter(format!(
                "grid needs at least 2 bins per axis, got {bins}"
            )));
        }
        Ok(PerformanceGrid { bins })
    }

    pub fn cell(&self, ii: usize, jj: usize) -> TargetCell {
        let b = self.bins as f64;
        TargetCell {
            ii,
            jj,
            x_lo: jj as f64 / b,
            x_hi: (jj + 1) as f64 / b,
            y_lo: ii as f64 / b,
            y_hi: (ii + 1) as f64 / b,
            x_center: (jj as f64 + 0.5) / b,
            y_center: (ii as f64 + 0.5) / b,
        }
    }

    /// All cells in row-major `(ii, jj)` order.
    pub fn cells(&self) -> Vec<TargetCell> {
        (0..self.bins)
            .flat_map(|ii| (0..self.bins).map(move |jj| (ii, jj)))
            .map(|(ii, jj)| self.cell(ii, jj))
            .collect()
    }

    fn bin_of(&self, v: f64) -> Option<usize> {
        if !(0.0..=1.0).contains(&v) {
            return None;
        }
        let b = self.bins as f64;
        (0..self.bins).find(|&j| v <= (j + 1) as f64 / b)
    }

    /// The unique cell owning a score pair; boundaries belong to the lower cell.
    pub fn locate(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        Some((self.bin_of(y)?, self.bin_of(x)?))
    }
}

/// `grid_cells(B)`: every cell of a B×B grid.
pub fn grid_cells(bins: usize) -> Result<Vec<TargetCell>> {
    Ok(PerformanceGrid::new(bins)?.cells())
}

impl TargetCell {
    /// Closed-interval box test.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.x_lo <= x && x <= self.x_hi && self.y_lo <= y && y <= self.y_hi
    }

    pub fn id(&self) -> String {
        format!("cell_{:02}_{:02}", self.ii, self.jj)
    }

    /// Human-readable target with all six numbers at six decimals.
    pub fn describe(&self) -> String {
        format!(
            "x_score (KNN mean R²) in [{:.6}, {:.6}]; y_score (linear regression mean R²) in [{:.6}, {:.6}]; center x={:.6}, y={:.6}",
            self.x_lo, self.x_hi, self.y_lo, self.y_hi, self.x_center, self.y_center
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seven_bin_bounds() {
        let g = PerformanceGrid::new(7).unwrap();
        let c = g.cell(0, 6);
        assert_eq!(format!("{:.6} {:.6}", c.x_lo, c.x_hi), "0.857143 1.000000");
        let c = g.cell(2, 3);
        assert_eq!(format!("{:.6} {:.6}", c.x_center, c.y_center), "0.500000 0.357143");
        assert_eq!(g.cells().len(), 49);
    }

    #[test]
    fn two_bin_centers() {
        let cells = grid_cells(2).unwrap();
        let centers: Vec<(f64, f64)> = cells.iter().map(|c| (c.x_center, c.y_center)).collect();
        assert_eq!(centers, vec![(0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75)]);
        assert!(grid_cells(1).is_err());
    }

    #[test]
    fn locate_boundaries() {
        let g = PerformanceGrid::new(2).unwrap();
        assert_eq!(g.locate(0.5, 0.5), Some((0, 0)));
        assert_eq!(g.locate(1.0, 0.51), Some((1, 1)));
        assert_eq!(g.locate(-0.1, 0.5), None);
    }

    #[test]
    fn description_has_six_decimals() {
        let c = PerformanceGrid::new(7).unwrap().cell(2, 3);
        let d = c.describe();
        for s in ["0.428571", "0.571429", "0.285714", "0.428571", "0.500000", "0.357143"] {
            assert!(d.contains(s), "{d}");
        }
    }
}
