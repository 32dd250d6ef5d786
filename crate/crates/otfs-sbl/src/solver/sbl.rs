use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::HermCholesky;
use crate::measurement::Measurement;
use crate::solver::{nmse_db, RecoveryResult, SblHyper, Trace};

/// One E-step of classic SBL: the exact Gaussian posterior
/// `Sigma = (gamma Phi^H Phi + Lambda)^{-1}`, `mu = gamma Sigma Phi^H y`
/// for fixed hyperparameters. Returns the mean and the covariance diagonal.
pub fn sbl_posterior(
    m: &Measurement,
    alpha: &DVector<f64>,
    gamma: f64,
) -> Result<(DVector<Complex64>, DVector<f64>)> {
    let r = m.r_dim();
    if alpha.len() != r {
        return Err(Error::Dimension("alpha length != R".into()));
    }
    let gram = m.phi.adjoint() * &m.phi;
    let f = m.phi.adjoint() * &m.y;
    let (mu, sigma, _) = posterior_from_cached(&gram, &f, alpha, gamma, &mut 0)?;
    Ok((mu, sigma))
}

/// Posterior solve on cached `G`, `f`. Adds diagonal jitter on
/// factorization failure (counting each rescue) rather than aborting.
fn posterior_from_cached(
    gram: &DMatrix<Complex64>,
    f: &DVector<Complex64>,
    alpha: &DVector<f64>,
    gamma: f64,
    jitter_fallbacks: &mut usize,
) -> Result<(DVector<Complex64>, DVector<f64>, HermCholesky)> {
    let r = f.len();
    let mut a_rm = vec![Complex64::ZERO; r * r];
    for i in 0..r {
        let col = gram.column(i);
        for j in 0..r {
            // Row-major Hermitian copy: row i is conj of column i.
            a_rm[i * r + j] = col[j].conj() * gamma;
        }
        a_rm[i * r + i] += alpha[i];
    }
    let factor = match HermCholesky::factor(&a_rm, r) {
        Ok(f) => f,
        Err(_) => {
            *jitter_fallbacks += 1;
            let trace: f64 = (0..r).map(|i| a_rm[i * r + i].re).sum();
            let jitter = 1e-12 * trace / r as f64;
            for i in 0..r {
                a_rm[i * r + i] += jitter;
            }
            HermCholesky::factor(&a_rm, r)
                .map_err(|e| Error::Singular(format!("after jitter: {e}")))?
        }
    };
    let mut mu = factor.solve(f);
    mu *= Complex64::new(gamma, 0.0);
    let sigma = DVector::from_vec(factor.inverse_diag());
    Ok((mu, sigma, factor))
}

/// Classic sparse Bayesian learning with the full covariance solve.
pub struct SblSolver {
    hyper: SblHyper,
    pub alpha: DVector<f64>,
    pub gamma: f64,
    pub mu: DVector<Complex64>,
    pub sigma_diag: DVector<f64>,
    pub a_tilde: f64,
    pub b_tilde: DVector<f64>,
    pub c_tilde: f64,
    pub d_tilde: f64,
    pub iter: usize,
    phi: DMatrix<Complex64>,
    y: DVector<Complex64>,
    gram: DMatrix<Complex64>,
    f: DVector<Complex64>,
    r_dim: usize,
    truth: Option<DVector<Complex64>>,
    trace: Trace,
    converged: bool,
    jitter_fallbacks: usize,
}

impl SblSolver {
    pub fn new(m: &Measurement, hyper: &SblHyper) -> Result<Self> {
        hyper.validate()?;
        let r = m.r_dim();
        let gamma0 = hyper.gamma_init.initial(hyper.c, hyper.d, m.q_dim(), m.y.norm_squared());
        Ok(Self {
            hyper: *hyper,
            alpha: DVector::from_element(r, hyper.a / hyper.b),
            gamma: gamma0,
            mu: DVector::from_element(r, Complex64::ZERO),
            sigma_diag: DVector::from_element(r, hyper.b / hyper.a),
            a_tilde: hyper.a + 0.5,
            b_tilde: DVector::from_element(r, hyper.b),
            c_tilde: hyper.c + r as f64 / 2.0,
            d_tilde: hyper.d,
            iter: 0,
            phi: m.phi.clone(),
            y: m.y.clone(),
            gram: m.phi.adjoint() * &m.phi,
            f: m.phi.adjoint() * &m.y,
            r_dim: r,
            truth: None,
            trace: Trace::default(),
            converged: false,
            jitter_fallbacks: 0,
        })
    }

    pub fn set_truth(&mut self, truth: DVector<Complex64>) {
        assert_eq!(truth.len(), self.r_dim);
        self.truth = Some(truth);
    }

    /// One EM cycle: exact posterior from the current hyperparameters,
    /// then the Gamma refreshes. Returns the relative change of the mean.
    pub fn step(&mut self) -> Result<f64> {
        let r = self.r_dim;
        let (mu_new, sigma_new, _) = posterior_from_cached(
            &self.gram,
            &self.f,
            &self.alpha,
            self.gamma,
            &mut self.jitter_fallbacks,
        )?;

        let num = (&mu_new - &self.mu).norm_squared();
        let den = self.mu.norm_squared();
        let rel = if den > 0.0 {
            num / den
        } else if num > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };

        // tr(Phi^H Phi Sigma) = (R - sum alpha_n Sigma_nn) / gamma for the
        // alpha/gamma that built Sigma.
        let mut lam_sigma = 0.0;
        for i in 0..r {
            lam_sigma += self.alpha[i] * sigma_new[i];
        }
        let tr_gram_sigma = (r as f64 - lam_sigma) / self.gamma;
        let resid = &self.y - &self.phi * &mu_new;
        let resid_sq = resid.norm_squared();

        self.mu = mu_new;
        self.sigma_diag = sigma_new;

        self.a_tilde = self.hyper.a + 0.5;
        self.c_tilde = self.hyper.c + r as f64 / 2.0;
        for i in 0..r {
            let h2 = self.mu[i].norm_sqr() + self.sigma_diag[i];
            self.b_tilde[i] = self.hyper.b + 0.5 * h2;
            self.alpha[i] = self.a_tilde / self.b_tilde[i];
        }
        self.d_tilde = self.hyper.d + 0.5 * (resid_sq + tr_gram_sigma);
        self.gamma = self.c_tilde / self.d_tilde;
        self.iter += 1;

        if !self.mu.iter().all(|v| v.re.is_finite() && v.im.is_finite())
            || !self.gamma.is_finite()
        {
            return Err(Error::Diverged { iter: self.iter });
        }

        self.trace.rel_change.push(rel);
        if let Some(t) = &self.truth {
            self.trace.nmse_db.push(nmse_db(t, &self.mu)?);
        }
        Ok(rel)
    }

    pub fn run(&mut self) -> Result<RecoveryResult> {
        while self.iter < self.hyper.max_iter {
            let rel = self.step()?;
            if rel < self.hyper.epsilon {
                self.converged = true;
                break;
            }
        }
        Ok(self.result())
    }

    pub fn result(&self) -> RecoveryResult {
        RecoveryResult {
            h_hat: self.mu.clone(),
            iterations: self.iter,
            converged: self.converged,
            trace: self.trace.clone(),
            support: None,
            rho: None,
            guard_triggers: 0,
            jitter_fallbacks: self.jitter_fallbacks,
        }
    }
}

/// Classic SBL estimate with the default EM loop.
pub fn sbl_estimate(m: &Measurement, hyper: &SblHyper) -> Result<RecoveryResult> {
    SblSolver::new(m, hyper)?.run()
}
