use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::DDGrid;
use crate::params::SystemParams;

/// Cell classification within a pilot frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Pilot,
    Guard,
    Data,
}

/// Placement of the pilot block, its guard band, and the derived
/// measurement dimensions.
///
/// The pilot occupies the contiguous index sets
/// rows `[row_start, row_start + n_rows)` (Doppler) and
/// cols `[col_start, col_start + n_cols)` (delay). Nulls are forced on
/// `2*k_max + eta` Doppler rows on each side of the pilot block and
/// `l_max` delay columns on each side. The receiver observes
/// `Q = (2*k_max + n_rows) * (l_max + n_cols)` cells; the unknown tap grid
/// has `R = (2*k_max + n_rows + 2*eta) * (l_max + n_cols)` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotLayout {
    pub row_start: usize,
    pub n_rows: usize,
    pub col_start: usize,
    pub n_cols: usize,
    pub amplitude: Complex64,
    // Cached copies of the channel extents the layout was sized against.
    k_max: usize,
    l_max: usize,
    eta: usize,
    n: usize,
    m: usize,
}

impl PilotLayout {
    pub fn new(
        params: &SystemParams,
        row_start: usize,
        n_rows: usize,
        col_start: usize,
        n_cols: usize,
        amplitude: Complex64,
    ) -> Result<Self> {
        if n_rows == 0 || n_cols == 0 {
            return Err(Error::Layout("pilot block must be non-empty".into()));
        }
        let guard_k = 2 * params.k_max + params.eta;
        let guard_l = params.l_max;
        let row_end = row_start + n_rows - 1;
        let col_end = col_start + n_cols - 1;
        if row_start < guard_k || row_end + guard_k >= params.n {
            return Err(Error::Layout(format!(
                "Doppler guard [{}-{guard_k}, {}+{guard_k}] leaves the 0..{} grid",
                row_start, row_end, params.n
            )));
        }
        if col_start < guard_l || col_end + guard_l >= params.m {
            return Err(Error::Layout(format!(
                "delay guard [{}-{guard_l}, {}+{guard_l}] leaves the 0..{} grid",
                col_start, col_end, params.m
            )));
        }
        Ok(Self {
            row_start,
            n_rows,
            col_start,
            n_cols,
            amplitude,
            k_max: params.k_max,
            l_max: params.l_max,
            eta: params.eta,
            n: params.n,
            m: params.m,
        })
    }

    /// Single pilot cell at the grid center.
    pub fn centered(params: &SystemParams, amplitude: Complex64) -> Result<Self> {
        Self::new(params, params.n / 2, 1, params.m / 2, 1, amplitude)
    }

    /// Observation count Q = (2*k_max + |Np|) * (l_max + |Mp|).
    pub fn q_dim(&self) -> usize {
        (2 * self.k_max + self.n_rows) * (self.l_max + self.n_cols)
    }

    /// Unknown count R = (2*k_max + |Np| + 2*eta) * (l_max + |Mp|).
    pub fn r_dim(&self) -> usize {
        (2 * self.k_max + self.n_rows + 2 * self.eta) * (self.l_max + self.n_cols)
    }

    /// Doppler rows of the observation window, `2*k_max + n_rows` of them.
    pub fn obs_rows(&self) -> std::ops::Range<usize> {
        (self.row_start - self.k_max)..(self.row_start + self.n_rows + self.k_max)
    }

    /// Delay columns of the observation window, `l_max + n_cols` of them;
    /// spreading is causal so the window only extends toward larger delay.
    pub fn obs_cols(&self) -> std::ops::Range<usize> {
        self.col_start..(self.col_start + self.n_cols + self.l_max)
    }

    /// Doppler shifts spanned by the unknown tap grid, relative to
    /// `row_start`: `-(k_max + eta) ..= k_max + eta + n_rows - 1`.
    pub fn tap_doppler_shifts(&self) -> std::ops::RangeInclusive<i64> {
        let half = (self.k_max + self.eta) as i64;
        -half..=(half + self.n_rows as i64 - 1)
    }

    /// Delay shifts spanned by the unknown tap grid: `0 ..= l_max + n_cols - 1`.
    pub fn tap_delay_shifts(&self) -> std::ops::RangeInclusive<usize> {
        0..=(self.l_max + self.n_cols - 1)
    }

    pub fn is_pilot(&self, k: usize, l: usize) -> bool {
        k >= self.row_start
            && k < self.row_start + self.n_rows
            && l >= self.col_start
            && l < self.col_start + self.n_cols
    }

    pub fn region(&self, k: usize, l: usize) -> Region {
        if self.is_pilot(k, l) {
            return Region::Pilot;
        }
        let guard_k = 2 * self.k_max + self.eta;
        let in_guard_rows =
            k + guard_k >= self.row_start && k < self.row_start + self.n_rows + guard_k;
        let in_guard_cols =
            l + self.l_max >= self.col_start && l < self.col_start + self.n_cols + self.l_max;
        if in_guard_rows && in_guard_cols {
            Region::Guard
        } else {
            Region::Data
        }
    }

    /// Data-cell coordinates in k-major order.
    pub fn data_cells(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for k in 0..self.n {
            for l in 0..self.m {
                if self.region(k, l) == Region::Data {
                    out.push((k, l));
                }
            }
        }
        out
    }

    pub fn data_cell_count(&self) -> usize {
        let guard_rows = 2 * (2 * self.k_max + self.eta) + self.n_rows;
        let guard_cols = 2 * self.l_max + self.n_cols;
        self.n * self.m - guard_rows * guard_cols
    }
}

/// Assemble a transmit frame: pilot block, zero guard band, data elsewhere.
///
/// `data_symbols`, when given, must hold exactly one symbol per data cell
/// (k-major order); otherwise the data region is left at zero.
pub fn make_pilot_frame(
    params: &SystemParams,
    layout: &PilotLayout,
    data_symbols: Option<&[Complex64]>,
) -> Result<DDGrid> {
    if layout.n != params.n || layout.m != params.m {
        return Err(Error::Dimension("layout was built for different grid dims".into()));
    }
    let mut grid = DDGrid::zeros(params);
    for k in layout.row_start..layout.row_start + layout.n_rows {
        for l in layout.col_start..layout.col_start + layout.n_cols {
            grid.set(k, l, layout.amplitude);
        }
    }
    if let Some(data) = data_symbols {
        let cells = layout.data_cells();
        if data.len() != cells.len() {
            return Err(Error::Dimension(format!(
                "{} data symbols for {} data cells",
                data.len(),
                cells.len()
            )));
        }
        for (&(k, l), &sym) in cells.iter().zip(data) {
            grid.set(k, l, sym);
        }
    }
    Ok(grid)
}
