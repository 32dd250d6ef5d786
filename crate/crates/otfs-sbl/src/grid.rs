use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::params::SystemParams;

/// A delay-Doppler frame: complex symbols on the N x M lattice, indexed
/// `[k, l]` with `k` the Doppler row (0..N) and `l` the delay column (0..M).
///
/// Stored row-major in `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct DDGrid {
    n_doppler: usize,
    m_delay: usize,
    values: Vec<Complex64>,
}

impl DDGrid {
    pub fn zeros(params: &SystemParams) -> Self {
        Self::zeros_dims(params.n, params.m)
    }

    pub fn zeros_dims(n_doppler: usize, m_delay: usize) -> Self {
        Self { n_doppler, m_delay, values: vec![Complex64::ZERO; n_doppler * m_delay] }
    }

    /// Doppler-bin count N.
    pub fn n_doppler(&self) -> usize {
        self.n_doppler
    }

    /// Delay-bin count M.
    pub fn m_delay(&self) -> usize {
        self.m_delay
    }

    #[inline]
    pub fn get(&self, k: usize, l: usize) -> Complex64 {
        debug_assert!(k < self.n_doppler && l < self.m_delay);
        self.values[k * self.m_delay + l]
    }

    #[inline]
    pub fn set(&mut self, k: usize, l: usize, v: Complex64) {
        debug_assert!(k < self.n_doppler && l < self.m_delay);
        self.values[k * self.m_delay + l] = v;
    }

    /// Access with modular wrap-around on both axes.
    #[inline]
    pub fn get_mod(&self, k: i64, l: i64) -> Complex64 {
        let kk = k.rem_euclid(self.n_doppler as i64) as usize;
        let ll = l.rem_euclid(self.m_delay as i64) as usize;
        self.get(kk, ll)
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    /// Sum of |entry|^2 over the whole frame.
    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn dims_match(&self, params: &SystemParams) -> bool {
        self.n_doppler == params.n && self.m_delay == params.m
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// Serialize as CSV: a header line `doppler_bins,delay_bins` followed by
    /// one `re,im` line per cell in k-major order.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 24 + 16);
        out.push_str(&format!("{},{}\n", self.n_doppler, self.m_delay));
        for v in &self.values {
            out.push_str(&format!("{:e},{:e}\n", v.re, v.im));
        }
        out
    }

    /// Parse the CSV form produced by [`DDGrid::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty grid dump".into()))?;
        let mut dims = header.split(',');
        let n: usize = dims
            .next()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::Parse("bad doppler_bins field".into()))?;
        let m: usize = dims
            .next()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::Parse("bad delay_bins field".into()))?;
        if dims.next().is_some() {
            return Err(Error::Parse("trailing fields in grid header".into()));
        }
        let cells = n
            .checked_mul(m)
            .filter(|&c| c > 0 && c <= 1 << 26)
            .ok_or_else(|| Error::Parse(format!("unreasonable grid dims {n}x{m}")))?;
        let mut values = Vec::with_capacity(cells);
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let re: f64 = parts
                .next()
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Parse(format!("bad re field: {line:?}")))?;
            let im: f64 = parts
                .next()
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Parse(format!("bad im field: {line:?}")))?;
            if parts.next().is_some() {
                return Err(Error::Parse(format!("trailing fields in row: {line:?}")));
            }
            if !re.is_finite() || !im.is_finite() {
                return Err(Error::Parse("non-finite grid entry".into()));
            }
            if values.len() == cells {
                return Err(Error::Parse("more rows than doppler_bins*delay_bins".into()));
            }
            values.push(Complex64::new(re, im));
        }
        if values.len() != cells {
            return Err(Error::Parse(format!(
                "expected {} cells, found {}",
                cells,
                values.len()
            )));
        }
        Ok(Self { n_doppler: n, m_delay: m, values })
    }
}
