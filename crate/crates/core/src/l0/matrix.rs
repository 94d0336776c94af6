use rand::Rng;

use super::{add_mod, lsb, scaled_residue, L0Config};
use crate::error::{Result, SketchError};
use crate::hashing::{sample_prime, KWiseHash, SketchRng};
use crate::stream::Update;

/// `ln(1 - t/k) / ln(1 - 1/k)`: the item count that leaves `t` of `k` bins
/// occupied in expectation. `None` when every bin is occupied.
pub fn invert_occupancy(t: u64, k: u64) -> Option<f64> {
    if t >= k {
        return None;
    }
    let (t, k) = (t as f64, k as f64);
    Some((-t / k).ln_1p() / (-1.0 / k).ln_1p())
}

/// Column and weight of an index in a row of cells mod `p`:
/// column `h3(h2(i))`, weight `u[h4(h2(i))]`.
#[derive(Debug, Clone)]
pub(crate) struct CellHash {
    h2: KWiseHash,
    h3: KWiseHash,
    h4: KWiseHash,
    u: Vec<u64>,
    p: u64,
}

impl CellHash {
    /// `k` weights, `width` columns, `k_ind`-wise columns over a `k^3` domain.
    pub(crate) fn new(k: u64, width: u64, k_ind: usize, p: u64, rng: &mut SketchRng) -> Self {
        let cube = k.saturating_pow(3);
        Self {
            h2: KWiseHash::new(2, cube, rng),
            h3: KWiseHash::new(k_ind, width, rng),
            h4: KWiseHash::new(2, k, rng),
            u: (0..k).map(|_| rng.random_range(1..p)).collect(),
            p,
        }
    }

    pub(crate) fn p(&self) -> u64 {
        self.p
    }

    #[inline]
    pub(crate) fn locate(&self, index: u64) -> (usize, u64) {
        let x = self.h2.eval(index);
        (self.h3.eval(x) as usize, self.u[self.h4.eval(x) as usize])
    }

    #[inline]
    pub(crate) fn apply(&self, cells: &mut [u64], u: Update) {
        let (col, w) = self.locate(u.index);
        let add = scaled_residue(u.delta, w, self.p);
        cells[col] = add_mod(cells[col], add, self.p);
    }
}

#[derive(Debug, Clone)]
struct Row {
    birth: u64,
    cells: Vec<u64>,
}

#[derive(Debug, Clone)]
enum RowState {
    Pending,
    Live(Row),
    Retired,
}

/// Subsampled bin matrix: row `lsb(h1(i))` receives index `i`.
///
/// Only rows inside a window around `log2(16 L / K)` (with `L` the rough
/// support estimate) and the permanent band are stored. A row is created
/// zeroed when it first enters the window and never returns after leaving.
#[derive(Debug, Clone)]
pub struct L0Matrix {
    log_n: u32,
    k: u64,
    half_width: u32,
    band_floor: u32,
    h1: KWiseHash,
    cells: CellHash,
    rows: Vec<RowState>,
    center: Option<i64>,
    last_bar: f64,
    position: u64,
    live: usize,
    peak_live: usize,
}

impl L0Matrix {
    pub fn new(config: &L0Config, rng: &mut SketchRng) -> Result<Self> {
        config.validate()?;
        let k = config.k();
        let (lo, hi) = config.matrix_primes();
        let p = sample_prime(lo, hi, rng)?.value;
        let log_n = config.log_n();
        let mut m = Self {
            log_n,
            k,
            half_width: config.window(),
            band_floor: config.band_floor(),
            h1: KWiseHash::new(2, config.n, rng),
            cells: CellHash::new(k, k, config.k_ind(), p, rng),
            rows: vec![RowState::Pending; log_n as usize + 1],
            center: None,
            last_bar: f64::NAN,
            position: 0,
            live: 0,
            peak_live: 0,
        };
        m.slide(config.l0_floor());
        Ok(m)
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn prime(&self) -> u64 {
        self.cells.p()
    }

    /// Bits needed for a stored residue.
    pub fn counter_bits(&self) -> u32 {
        64 - (self.cells.p() - 1).leading_zeros()
    }

    /// Row that index `i` is routed to.
    pub fn row_of(&self, index: u64) -> u32 {
        lsb(self.h1.eval(index), self.log_n)
    }

    /// Column of index `i` within its row.
    pub fn column_of(&self, index: u64) -> usize {
        self.cells.locate(index).0
    }

    /// Rows in the window for rough estimate `l0_bar`, as an inclusive range.
    pub fn window_for(&self, l0_bar: f64) -> (u32, u32) {
        let c = (16.0 * l0_bar / self.k as f64).log2().floor() as i64;
        let w = self.half_width as i64;
        let lo = (c - w).clamp(0, self.log_n as i64) as u32;
        let hi = (c + w).clamp(0, self.log_n as i64) as u32;
        (lo, hi)
    }

    fn wanted(&self, j: u32, window: (u32, u32)) -> bool {
        j >= self.band_floor || (window.0..=window.1).contains(&j)
    }

    /// Moves the window to follow `l0_bar`; the estimate must not decrease.
    pub fn slide(&mut self, l0_bar: f64) {
        if l0_bar == self.last_bar {
            return;
        }
        self.last_bar = l0_bar;
        let c = (16.0 * l0_bar / self.k as f64).log2().floor() as i64;
        if self.center == Some(c) {
            return;
        }
        self.center = Some(c);
        let window = self.window_for(l0_bar);
        for j in 0..=self.log_n {
            let wanted = self.wanted(j, window);
            let slot = &mut self.rows[j as usize];
            match slot {
                RowState::Pending if wanted => {
                    *slot = RowState::Live(Row {
                        birth: self.position,
                        cells: vec![0; self.k as usize],
                    });
                    self.live += 1;
                }
                RowState::Live(_) if !wanted => {
                    *slot = RowState::Retired;
                    self.live -= 1;
                }
                _ => {}
            }
        }
        self.peak_live = self.peak_live.max(self.live);
    }

    pub fn update(&mut self, u: Update, l0_bar: f64) {
        self.slide(l0_bar);
        self.position += 1;
        let row = self.row_of(u.index);
        if let RowState::Live(r) = &mut self.rows[row as usize] {
            self.cells.apply(&mut r.cells, u);
        }
    }

    pub fn row(&self, j: u32) -> Option<&[u64]> {
        match self.rows.get(j as usize) {
            Some(RowState::Live(r)) => Some(&r.cells),
            _ => None,
        }
    }

    /// Number of updates processed before row `j` was created.
    pub fn birth(&self, j: u32) -> Option<u64> {
        match self.rows.get(j as usize) {
            Some(RowState::Live(r)) => Some(r.birth),
            _ => None,
        }
    }

    pub fn is_retired(&self, j: u32) -> bool {
        matches!(self.rows.get(j as usize), Some(RowState::Retired))
    }

    pub fn live_rows(&self) -> Vec<u32> {
        (0..=self.log_n)
            .filter(|&j| self.row(j).is_some())
            .collect()
    }

    /// Most rows held at once over the stream.
    pub fn peak_rows(&self) -> usize {
        self.peak_live
    }

    /// Row read for constant-factor estimate `r`: `max(0, floor(log2(16 r / K)))`.
    pub fn read_row(&self, r: f64) -> u32 {
        let x = (16.0 * r / self.k as f64).log2().floor();
        x.clamp(0.0, self.log_n as f64) as u32
    }

    /// `(1 ± eps)` estimate from row `read_row(r)`, scaled by the inverse of
    /// that row's sampling rate.
    pub fn estimate(&self, r: f64) -> Result<f64> {
        let row = self.read_row(r);
        let cells = self.row(row).ok_or(SketchError::MissingRow { row })?;
        let t = cells.iter().filter(|&&c| c != 0).count() as u64;
        let bins = invert_occupancy(t, self.k).ok_or(SketchError::SaturatedRow { row })?;
        let scale = (1u64 << (row + 1).min(self.log_n)) as f64;
        Ok(scale * bins)
    }
}
