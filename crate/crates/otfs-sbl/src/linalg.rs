use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Largest eigenvalue of the Gram matrix `Phi^H Phi` by power iteration.
///
/// Runs on matrix-vector products with `Phi` only (no Gram formation),
/// with a deterministic start vector, a relative Rayleigh-quotient
/// tolerance of 1e-10 and an iteration cap of `10 * R`.
pub fn gram_lambda_max(phi: &DMatrix<Complex64>) -> f64 {
    let r = phi.ncols();
    assert!(r > 0 && phi.nrows() > 0, "empty matrix");
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed ^ (r as u64) ^ ((phi.nrows() as u64) << 32));
    let mut v = DVector::from_fn(r, |_, _| {
        Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
    });
    let norm = v.norm();
    v /= Complex64::new(norm, 0.0);
    let mut lambda = 0.0f64;
    for _ in 0..(10 * r) {
        let w = phi * &v; // Q
        let lam = w.norm_squared(); // v unit: Rayleigh quotient of Phi^H Phi
        let mut gv = phi.adjoint() * w; // R
        let gn = gv.norm();
        if gn == 0.0 {
            return 0.0; // Phi == 0
        }
        gv /= Complex64::new(gn, 0.0);
        let done = (lam - lambda).abs() <= 1e-10 * lam.max(f64::MIN_POSITIVE);
        lambda = lam;
        v = gv;
        if done {
            break;
        }
    }
    lambda
}

/// The majorizer's Lipschitz constant, V = 2 * lambda_max(Phi^H Phi).
pub fn lipschitz_v(phi: &DMatrix<Complex64>) -> f64 {
    2.0 * gram_lambda_max(phi)
}

/// Cholesky factor of a Hermitian positive-definite matrix, stored row-major
/// so that the forward/backward sweeps and the inverse-diagonal extraction
/// walk contiguous memory.
pub struct HermCholesky {
    n: usize,
    l: Vec<Complex64>,
}

impl HermCholesky {
    /// Factor `A = L L^H` from the row-major lower triangle in `a`
    /// (a full n*n buffer; the upper triangle is ignored).
    pub fn factor(a: &[Complex64], n: usize) -> Result<Self> {
        assert_eq!(a.len(), n * n);
        let mut l = a.to_vec();
        for j in 0..n {
            let mut d = l[j * n + j].re;
            for k in 0..j {
                d -= l[j * n + k].norm_sqr();
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::Singular(format!("leading minor {j} not positive ({d})")));
            }
            let djj = d.sqrt();
            l[j * n + j] = Complex64::new(djj, 0.0);
            for i in (j + 1)..n {
                let mut s = l[i * n + j];
                let (ri, rj) = (i * n, j * n);
                for k in 0..j {
                    s -= l[ri + k] * l[rj + k].conj();
                }
                l[i * n + j] = s / djj;
            }
        }
        // Zero the stale upper triangle so the factor is self-contained.
        for i in 0..n {
            for j in (i + 1)..n {
                l[i * n + j] = Complex64::ZERO;
            }
        }
        Ok(Self { n, l })
    }

    /// Solve `A x = b` via the two triangular sweeps.
    pub fn solve(&self, b: &DVector<Complex64>) -> DVector<Complex64> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut x: Vec<Complex64> = b.iter().copied().collect();
        // L y = b
        for i in 0..n {
            let ri = i * n;
            let mut s = x[i];
            for k in 0..i {
                s -= self.l[ri + k] * x[k];
            }
            x[i] = s / self.l[ri + i];
        }
        // L^H z = y, column-sweep form to keep row access contiguous.
        for i in (0..n).rev() {
            let ri = i * n;
            let xi = x[i] / self.l[ri + i].conj();
            x[i] = xi;
            for k in 0..i {
                x[k] -= self.l[ri + k].conj() * xi;
            }
        }
        DVector::from_vec(x)
    }

    /// Diagonal of `A^{-1}`: column i of `L^{-1}` has squared norm equal to
    /// `(A^{-1})_{ii}`.
    pub fn inverse_diag(&self) -> Vec<f64> {
        let n = self.n;
        let mut diag = vec![0.0f64; n];
        let mut t = vec![Complex64::ZERO; n];
        for i in 0..n {
            t[i] = Complex64::new(1.0, 0.0) / self.l[i * n + i];
            let mut acc = t[i].norm_sqr();
            for k in (i + 1)..n {
                let rk = k * n;
                let mut s = Complex64::ZERO;
                for m in i..k {
                    s += self.l[rk + m] * t[m];
                }
                let v = -s / self.l[rk + k];
                t[k] = v;
                acc += v.norm_sqr();
            }
            diag[i] = acc;
        }
        diag
    }
}

/// Row-major copy of a Hermitian nalgebra matrix (column-major storage):
/// row i of the output is the conjugate of column i.
pub fn hermitian_to_rowmajor(a: &DMatrix<Complex64>) -> Vec<Complex64> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let mut out = vec![Complex64::ZERO; n * n];
    for i in 0..n {
        let col = a.column(i);
        for j in 0..n {
            out[i * n + j] = col[j].conj();
        }
    }
    out
}
