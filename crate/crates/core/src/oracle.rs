//! Brute-force Euler characteristic curves for testing the fast path.
//!
//! Every cell of the cubical complex is materialized on the doubled grid: a
//! cell has coordinate `y` with extent `2w + 1` per axis, and axis `i`
//! spans a unit interval when `y_i` is odd and a degenerate one when even.
//! Each cell takes the minimum value of the voxels containing it, and χ at
//! a threshold is the alternating sum of the cell counts per dimension.
//! Nothing here knows which voxel introduces a cell, so ties need no rule.

use crate::curve::{EccCurve, EccPoint};
use crate::grid::Image;
use crate::index::Threshold;

#[derive(Clone, Debug, PartialEq)]
pub struct CellGrid {
    rank: usize,
    shape: [usize; 3],
    values: Vec<f32>,
}

impl CellGrid {
    /// 2 for images with `w2 == 1`, else 3.
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Doubled-grid extents; axis 2 is 1 for 2D images.
    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn cell_count(&self) -> usize {
        self.values.len()
    }

    fn offset(&self, y: [usize; 3]) -> usize {
        (y[0] * self.shape[1] + y[1]) * self.shape[2] + y[2]
    }

    pub fn value(&self, y: [usize; 3]) -> f32 {
        self.values[self.offset(y)]
    }

    pub fn cell_dim(y: [usize; 3]) -> usize {
        y.iter().filter(|&&c| c % 2 == 1).count()
    }

    /// All cells as `(coordinate, value)`.
    pub fn cells(&self) -> impl Iterator<Item = ([usize; 3], f32)> + '_ {
        let [s0, s1, s2] = self.shape;
        (0..s0).flat_map(move |a| {
            (0..s1).flat_map(move |b| (0..s2).map(move |c| ([a, b, c], self.value([a, b, c]))))
        })
    }

    /// Cells of the grid directly containing `y`: one step along an axis
    /// where `y` is degenerate.
    pub fn cofaces(&self, y: [usize; 3]) -> Vec<[usize; 3]> {
        let mut out = Vec::new();
        for axis in 0..self.rank {
            if y[axis].is_multiple_of(2) {
                if y[axis] > 0 {
                    let mut z = y;
                    z[axis] -= 1;
                    out.push(z);
                }
                if y[axis] + 1 < self.shape[axis] {
                    let mut z = y;
                    z[axis] += 1;
                    out.push(z);
                }
            }
        }
        out
    }

    /// Number of cells of each dimension with value `<= t`.
    pub fn counts_at(&self, t: f32) -> [usize; 4] {
        let mut counts = [0; 4];
        for (y, v) in self.cells() {
            if v <= t {
                counts[Self::cell_dim(y)] += 1;
            }
        }
        counts
    }

    /// χ of the sublevel complex at `t`.
    pub fn euler_characteristic_at(&self, t: f32) -> i64 {
        alternating_sum(self.counts_at(t))
    }
}

fn alternating_sum(counts: [usize; 4]) -> i64 {
    counts
        .iter()
        .enumerate()
        .map(|(j, &c)| if j % 2 == 0 { c as i64 } else { -(c as i64) })
        .sum()
}

/// Voxel indices along one axis containing doubled coordinate `y`.
fn containing(y: usize, w: usize) -> std::ops::Range<usize> {
    if y % 2 == 1 {
        let k = (y - 1) / 2;
        k..k + 1
    } else {
        let k = y / 2;
        k.saturating_sub(1)..k.min(w - 1) + 1
    }
}

pub fn build_cell_grid(image: &Image) -> CellGrid {
    let dims = image.dims();
    let [w0, w1, w2] = dims.extents();
    let rank = if dims.is_2d() { 2 } else { 3 };
    let shape = [2 * w0 + 1, 2 * w1 + 1, if rank == 3 { 2 * w2 + 1 } else { 1 }];
    let mut values = Vec::with_capacity(shape.iter().product());
    for y0 in 0..shape[0] {
        for y1 in 0..shape[1] {
            for y2 in 0..shape[2] {
                // For 2D images every cell lies in the single plane x2 = 0.
                let r2 = if rank == 3 { containing(y2, w2) } else { 0..1 };
                let mut min = f32::INFINITY;
                for x0 in containing(y0, w0) {
                    for x1 in containing(y1, w1) {
                        for x2 in r2.clone() {
                            let v = image.value_f32((x0 * w1 + x1) * w2 + x2);
                            if v < min {
                                min = v;
                            }
                        }
                    }
                }
                values.push(min);
            }
        }
    }
    CellGrid { rank, shape, values }
}

/// ECC by explicit cell counting at every distinct image value.
pub fn naive_ecc(image: &Image) -> EccCurve {
    let grid = build_cell_grid(image);
    let mut thresholds: Vec<Threshold> = image.to_f32_vec().into_iter().map(Threshold::new).collect();
    thresholds.sort();
    thresholds.dedup();

    // Sweep cells in value order so each threshold's counts build on the
    // previous one's.
    let mut cells: Vec<(f32, usize)> = grid.cells().map(|(y, v)| (v, CellGrid::cell_dim(y))).collect();
    cells.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut counts = [0usize; 4];
    let mut next = 0;
    let points = thresholds
        .into_iter()
        .map(|t| {
            let t = t.get();
            while next < cells.len() && cells[next].0 <= t {
                counts[cells[next].1] += 1;
                next += 1;
            }
            EccPoint {
                threshold: t,
                chi: alternating_sum(counts),
            }
        })
        .collect();
    EccCurve::from_points(points).expect("distinct sorted thresholds")
}
