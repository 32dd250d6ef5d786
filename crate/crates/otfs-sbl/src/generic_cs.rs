//! Synthetic compressed-sensing instances for the solver benchmarks that
//! do not need a full OTFS frame: dense complex Gaussian dictionaries with
//! unit-norm columns and exactly sparse ground truth.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::measurement::Measurement;

#[derive(Debug, Clone)]
pub struct GenericCsProblem {
    pub measurement: Measurement,
    pub h_true: DVector<Complex64>,
    pub noise_var: f64,
}

fn cplx_std(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) / 2f64.sqrt()
}

/// Draw one instance: `n_meas x signal_len` Gaussian dictionary,
/// `sparsity` nonzeros at distinct positions, and measurement noise sized
/// to the requested SNR (noiseless when `snr_db` is `None`).
pub fn generic_cs_problem(
    signal_len: usize,
    n_meas: usize,
    sparsity: usize,
    snr_db: Option<f64>,
    seed: u64,
) -> Result<GenericCsProblem> {
    if signal_len == 0 || n_meas == 0 {
        return Err(Error::Dimension("empty problem".into()));
    }
    if sparsity == 0 || sparsity > signal_len {
        return Err(Error::Infeasible(format!(
            "sparsity {sparsity} outside 1..={signal_len}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut phi = DMatrix::from_fn(n_meas, signal_len, |_, _| cplx_std(&mut rng));
    for c in 0..signal_len {
        let norm = phi.column(c).norm();
        for i in 0..n_meas {
            phi[(i, c)] /= Complex64::new(norm, 0.0);
        }
    }

    let mut h = DVector::from_element(signal_len, Complex64::ZERO);
    let mut placed = 0usize;
    while placed < sparsity {
        let idx = (rng.random::<u64>() % signal_len as u64) as usize;
        if h[idx] == Complex64::ZERO {
            h[idx] = cplx_std(&mut rng);
            placed += 1;
        }
    }

    let clean = &phi * &h;
    let noise_var = match snr_db {
        Some(snr) => clean.norm_squared() / (n_meas as f64 * 10f64.powf(snr / 10.0)),
        None => 0.0,
    };
    let mut y = clean;
    if noise_var > 0.0 {
        let sigma = noise_var.sqrt();
        for v in y.iter_mut() {
            *v += cplx_std(&mut rng) * sigma;
        }
    }
    Ok(GenericCsProblem {
        measurement: Measurement::from_parts(y, phi)?,
        h_true: h,
        noise_var,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_sized() {
        let a = generic_cs_problem(40, 30, 5, Some(10.0), 7).unwrap();
        let b = generic_cs_problem(40, 30, 5, Some(10.0), 7).unwrap();
        assert_eq!(a.h_true, b.h_true);
        assert_eq!(a.measurement.y, b.measurement.y);
        assert_eq!(a.measurement.q_dim(), 30);
        assert_eq!(a.measurement.r_dim(), 40);
        let nnz = a.h_true.iter().filter(|v| v.norm() > 0.0).count();
        assert_eq!(nnz, 5);
        // Columns unit norm.
        for c in 0..40 {
            assert!((a.measurement.phi.column(c).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn snr_calibration() {
        let p = generic_cs_problem(60, 50, 8, Some(10.0), 3).unwrap();
        assert!(p.noise_var > 0.0);
        let noiseless = generic_cs_problem(60, 50, 8, None, 3).unwrap();
        assert_eq!(noiseless.noise_var, 0.0);
        let clean = &noiseless.measurement.phi * &noiseless.h_true;
        assert_eq!(noiseless.measurement.y, clean);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(generic_cs_problem(0, 10, 1, None, 0).is_err());
        assert!(generic_cs_problem(10, 10, 0, None, 0).is_err());
        assert!(generic_cs_problem(10, 10, 11, None, 0).is_err());
    }
}
