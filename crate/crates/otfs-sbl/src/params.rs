use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Static OTFS grid and channel-extent parameters.
///
/// The delay-Doppler lattice has `m` delay bins (subcarriers) and `n`
/// Doppler bins (symbols). `l_max` and `k_max` bound the channel's delay
/// and Doppler taps; `eta` is the half-width of the window used to
/// approximate fractional Doppler leakage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Delay bins (number of subcarriers), M.
    pub m: usize,
    /// Doppler bins (number of symbols per frame), N.
    pub n: usize,
    /// Subcarrier spacing in Hz.
    pub delta_f_hz: f64,
    /// Carrier frequency in Hz.
    pub fc_hz: f64,
    /// Fractional-Doppler window half-width.
    pub eta: usize,
    /// Maximum delay tap.
    pub l_max: usize,
    /// Maximum Doppler tap.
    pub k_max: usize,
}

impl SystemParams {
    pub fn new(
        m: usize,
        n: usize,
        delta_f_hz: f64,
        fc_hz: f64,
        eta: usize,
        l_max: usize,
        k_max: usize,
    ) -> Result<Self> {
        let p = Self { m, n, delta_f_hz, fc_hz, eta, l_max, k_max };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::Dimension("M and N must be >= 1".into()));
        }
        if self.l_max >= self.m {
            return Err(Error::Dimension(format!(
                "l_max = {} must be < M = {}",
                self.l_max, self.m
            )));
        }
        if 2 * self.k_max >= self.n {
            return Err(Error::Dimension(format!(
                "k_max = {} must be < N/2 = {}",
                self.k_max,
                self.n as f64 / 2.0
            )));
        }
        if !(self.delta_f_hz > 0.0) {
            return Err(Error::Dimension("delta_f must be > 0".into()));
        }
        Ok(())
    }

    /// Symbol period T = 1/Δf in seconds.
    pub fn symbol_period(&self) -> f64 {
        1.0 / self.delta_f_hz
    }

    /// Reduced-scale parameter set used for desk-size experiments.
    pub fn desk() -> Self {
        Self { m: 32, n: 32, delta_f_hz: 15e3, fc_hz: 4e9, eta: 3, l_max: 8, k_max: 6 }
    }

    /// Full-scale parameter set (128 x 128 grid).
    pub fn paper() -> Self {
        Self { m: 128, n: 128, delta_f_hz: 15e3, fc_hz: 4e9, eta: 5, l_max: 20, k_max: 16 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        SystemParams::desk().validate().unwrap();
        SystemParams::paper().validate().unwrap();
    }

    #[test]
    fn rejects_bad_extents() {
        assert!(SystemParams::new(16, 16, 15e3, 4e9, 2, 16, 4).is_err()); // l_max >= M
        assert!(SystemParams::new(16, 16, 15e3, 4e9, 2, 4, 8).is_err()); // k_max >= N/2
        assert!(SystemParams::new(0, 16, 15e3, 4e9, 2, 4, 3).is_err());
        assert!(SystemParams::new(16, 16, 0.0, 4e9, 2, 4, 3).is_err());
    }
}
