use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::channel::{phi_coeff, psi_coeff, ChannelSpec};
use crate::error::{Error, Result};
use crate::grid::DDGrid;
use crate::params::SystemParams;
use crate::pilot::PilotLayout;

/// The linear estimation model `y = Phi h + w` extracted from a received
/// frame, plus the layout it was built against when it came from a frame
/// (generic compressed-sensing measurements carry no layout).
#[derive(Debug, Clone)]
pub struct Measurement {
    pub y: DVector<Complex64>,
    pub phi: DMatrix<Complex64>,
    pub context: Option<OtfsContext>,
}

#[derive(Debug, Clone)]
pub struct OtfsContext {
    pub layout: PilotLayout,
    pub params: SystemParams,
}

impl Measurement {
    pub fn from_parts(y: DVector<Complex64>, phi: DMatrix<Complex64>) -> Result<Self> {
        if y.len() != phi.nrows() {
            return Err(Error::Dimension(format!(
                "y has {} entries but Phi has {} rows",
                y.len(),
                phi.nrows()
            )));
        }
        Ok(Self { y, phi, context: None })
    }

    pub fn q_dim(&self) -> usize {
        self.phi.nrows()
    }

    pub fn r_dim(&self) -> usize {
        self.phi.ncols()
    }

    /// Columns with no support in the observation window. These only arise
    /// from the extended Doppler edge of the tap grid when eta > 0.
    pub fn zero_column_count(&self) -> usize {
        (0..self.phi.ncols())
            .filter(|&c| self.phi.column(c).iter().all(|v| *v == Complex64::ZERO))
            .count()
    }
}

/// Vectorize the observation window of a frame in k-major order.
pub fn extract_window(rx: &DDGrid, layout: &PilotLayout) -> DVector<Complex64> {
    let rows = layout.obs_rows();
    let cols = layout.obs_cols();
    let mut y = Vec::with_capacity(layout.q_dim());
    for k in rows {
        for l in cols.clone() {
            y.push(rx.get_mod(k as i64, l as i64));
        }
    }
    DVector::from_vec(y)
}

/// Flat index of the virtual tap (delay shift `l_shift`, Doppler shift
/// `k_shift`) in the unknown vector; `None` when outside the tap grid.
pub fn tap_index(layout: &PilotLayout, l_shift: usize, k_shift: i64) -> Option<usize> {
    let dops = layout.tap_doppler_shifts();
    let dels = layout.tap_delay_shifts();
    if !dels.contains(&l_shift) || !dops.contains(&k_shift) {
        return None;
    }
    let l_ext = *dels.end() + 1;
    let k_idx = (k_shift - dops.start()) as usize;
    Some(k_idx * l_ext + l_shift)
}

/// Build the measurement model from a received frame.
///
/// Row order matches [`extract_window`]. Column r of `Phi` is the response
/// of a unit on-grid virtual tap at delay shift `l'` and Doppler shift
/// `k''`: the pilot cell mapped through `([k - k'']_N, [l - l']_M)` times
/// the rectangular-pulse phase terms (fractional leakage lives in the
/// unknown vector, so the dictionary itself is evaluated at kappa = 0).
/// Tap shifts beyond `+-k_max` can only be reached by fractional leakage,
/// so their columns have no support inside the printed observation window.
pub fn build_measurement(
    rx: &DDGrid,
    tx: &DDGrid,
    layout: &PilotLayout,
    params: &SystemParams,
) -> Result<Measurement> {
    if !rx.dims_match(params) || !tx.dims_match(params) {
        return Err(Error::Dimension("rx/tx grids do not match system params".into()));
    }
    for k in layout.row_start..layout.row_start + layout.n_rows {
        for l in layout.col_start..layout.col_start + layout.n_cols {
            if tx.get(k, l) == Complex64::ZERO {
                return Err(Error::Dimension(format!(
                    "tx frame has no pilot energy at ({k}, {l})"
                )));
            }
        }
    }
    let q = layout.q_dim();
    let r = layout.r_dim();
    let y = extract_window(rx, layout);

    let dops = layout.tap_doppler_shifts();
    let dels = layout.tap_delay_shifts();
    let l_ext = *dels.end() + 1;
    let mut phi = DMatrix::<Complex64>::zeros(q, r);
    let mut row = 0usize;
    for k in layout.obs_rows() {
        for l in layout.obs_cols() {
            for k_shift in dops.clone() {
                let kp = (k as i64 - k_shift).rem_euclid(params.n as i64) as usize;
                if kp < layout.row_start || kp >= layout.row_start + layout.n_rows {
                    continue;
                }
                for l_shift in dels.clone() {
                    let lp = (l as i64 - l_shift as i64).rem_euclid(params.m as i64) as usize;
                    if lp < layout.col_start || lp >= layout.col_start + layout.n_cols {
                        continue;
                    }
                    let col = ((k_shift - dops.start()) as usize) * l_ext + l_shift;
                    let lead = Complex64::from_polar(
                        1.0,
                        TAU * (l as f64 - l_shift as f64) * k_shift as f64
                            / (params.m as f64 * params.n as f64),
                    );
                    let coeff = phi_coeff(k, l, 0, l_shift, k_shift, 0.0, params);
                    phi[(row, col)] = tx.get(kp, lp) * lead * coeff;
                }
            }
            row += 1;
        }
    }
    debug_assert_eq!(row, q);
    Ok(Measurement {
        y,
        phi,
        context: Some(OtfsContext { layout: layout.clone(), params: *params }),
    })
}

/// Project a channel onto the virtual tap grid: the ground truth the
/// estimators are scored against.
///
/// On-grid paths land on a single tap. A fractional path spreads over the
/// leakage window, tap `(l_tau, k_nu - q)` receiving `h * Psi(q)`; the
/// residual delay-dependent phase of the true response is not representable
/// on the grid and is left out (it is the model's linearization error).
pub fn virtual_truth(
    channel: &ChannelSpec,
    layout: &PilotLayout,
    params: &SystemParams,
) -> DVector<Complex64> {
    let mut h = DVector::from_element(layout.r_dim(), Complex64::ZERO);
    for p in &channel.paths {
        if p.kappa == 0.0 {
            if let Some(idx) = tap_index(layout, p.l_tau, p.k_nu) {
                h[idx] += p.gain;
            }
        } else {
            for q in -(params.eta as i64)..=(params.eta as i64) {
                if let Some(idx) = tap_index(layout, p.l_tau, p.k_nu - q) {
                    h[idx] += p.gain * psi_coeff(q, p.kappa, params.n);
                }
            }
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{gen_channel, synthesize_rx, PowerDelayProfile};
    use crate::pilot::make_pilot_frame;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn desk_layout() -> (SystemParams, PilotLayout) {
        let params = SystemParams::desk();
        let layout = PilotLayout::centered(&params, Complex64::new(8.0, 0.0)).unwrap();
        (params, layout)
    }

    #[test]
    fn dims_follow_formulas() {
        let (params, layout) = desk_layout();
        let tx = make_pilot_frame(&params, &layout, None).unwrap();
        let m = build_measurement(&tx, &tx, &layout, &params).unwrap();
        assert_eq!(m.q_dim(), 117);
        assert_eq!(m.r_dim(), 171);
        // The 2*eta Doppler-edge blocks cannot be observed at kappa = 0.
        assert_eq!(m.zero_column_count(), 2 * params.eta * (params.l_max + 1));
    }

    #[test]
    fn no_zero_columns_when_eta_zero() {
        let params = SystemParams::new(32, 32, 15e3, 4e9, 0, 8, 6).unwrap();
        let layout = PilotLayout::centered(&params, Complex64::new(1.0, 0.0)).unwrap();
        let tx = make_pilot_frame(&params, &layout, None).unwrap();
        let m = build_measurement(&tx, &tx, &layout, &params).unwrap();
        assert_eq!(m.q_dim(), m.r_dim());
        assert_eq!(m.zero_column_count(), 0);
    }

    #[test]
    fn noise_only_frame_extracts_window() {
        let (params, layout) = desk_layout();
        let tx = make_pilot_frame(&params, &layout, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut rx = DDGrid::zeros(&params);
        for v in rx.values_mut() {
            *v = Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
        }
        let m = build_measurement(&rx, &tx, &layout, &params).unwrap();
        let mut idx = 0usize;
        for k in layout.obs_rows() {
            for l in layout.obs_cols() {
                assert_eq!(m.y[idx], rx.get(k, l));
                idx += 1;
            }
        }
    }

    #[test]
    fn dictionary_consistency_on_grid() {
        let (params, layout) = desk_layout();
        let tx = make_pilot_frame(&params, &layout, None).unwrap();
        for seed in 0..8u64 {
            let ch = gen_channel(&params, 4, false, PowerDelayProfile::Exponential, seed).unwrap();
            let rx = synthesize_rx(&tx, &ch, 0.0, &params, 0).unwrap();
            let m = build_measurement(&rx, &tx, &layout, &params).unwrap();
            let h_true = virtual_truth(&ch, &layout, &params);
            let resid = (&m.y - &m.phi * &h_true).norm() / m.y.norm();
            assert!(resid < 1e-10, "seed {seed}: residual {resid}");
        }
    }

    #[test]
    fn exactly_p_nonzero_window_cells_on_grid() {
        let (params, layout) = desk_layout();
        let tx = make_pilot_frame(&params, &layout, None).unwrap();
        let ch = gen_channel(&params, 4, false, PowerDelayProfile::Exponential, 5).unwrap();
        let rx = synthesize_rx(&tx, &ch, 0.0, &params, 0).unwrap();
        let y = extract_window(&rx, &layout);
        let nonzero = y.iter().filter(|v| v.norm() > 1e-12).count();
        assert_eq!(nonzero, 4);
    }

    #[test]
    fn rejects_mismatched_grids() {
        let (params, layout) = desk_layout();
        let tx = make_pilot_frame(&params, &layout, None).unwrap();
        let other = DDGrid::zeros_dims(16, 16);
        assert!(build_measurement(&other, &tx, &layout, &params).is_err());
        // tx without pilot energy is rejected too.
        let blank = DDGrid::zeros(&params);
        assert!(build_measurement(&tx, &blank, &layout, &params).is_err());
    }

    #[test]
    fn fractional_truth_reduces_residual_energy() {
        // The on-grid dictionary cannot represent a fractional channel
        // exactly, but the projected truth should capture most of the
        // received energy.
        let (params, layout) = desk_layout();
        let tx = make_pilot_frame(&params, &layout, None).unwrap();
        let ch = gen_channel(&params, 4, true, PowerDelayProfile::Exponential, 2).unwrap();
        let rx = synthesize_rx(&tx, &ch, 0.0, &params, 0).unwrap();
        let m = build_measurement(&rx, &tx, &layout, &params).unwrap();
        let h_true = virtual_truth(&ch, &layout, &params);
        let resid = (&m.y - &m.phi * &h_true).norm_squared() / m.y.norm_squared();
        assert!(resid < 0.05, "fractional model error fraction {resid}");
    }
}
