mod ifsbl;
mod omp;
mod sbl;

pub use ifsbl::{ifsbl_estimate, ifsblt_estimate, threshold_increment, IfsblSolver, SblState};
pub use omp::{omp_estimate, OmpStop};
pub use sbl::{sbl_estimate, sbl_posterior, SblSolver};

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::Measurement;

/// Recovery algorithms the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Omp,
    Sbl,
    Ifsbl,
    Ifsblt,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] =
        [Algorithm::Omp, Algorithm::Sbl, Algorithm::Ifsbl, Algorithm::Ifsblt];

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Omp => "omp",
            Algorithm::Sbl => "sbl",
            Algorithm::Ifsbl => "ifsbl",
            Algorithm::Ifsblt => "ifsblt",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "omp" => Ok(Algorithm::Omp),
            "sbl" => Ok(Algorithm::Sbl),
            "ifsbl" => Ok(Algorithm::Ifsbl),
            "ifsblt" | "ifsbl-t" => Ok(Algorithm::Ifsblt),
            other => Err(Error::Config(format!("unknown algorithm {other:?}"))),
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Noise-precision initialization policy.
///
/// The first posterior update runs under this value; the Gamma refreshes
/// take over from the second iteration on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum GammaInit {
    /// Prior mean c/d.
    PriorMean,
    /// `scale * Q / ||y||^2`: treat a `1/scale` fraction of the mean
    /// received power as the initial noise floor.
    DataScaled(f64),
}

impl GammaInit {
    pub fn initial(&self, c: f64, d: f64, q: usize, y_norm_sq: f64) -> f64 {
        match self {
            GammaInit::PriorMean => c / d,
            GammaInit::DataScaled(scale) => {
                if y_norm_sq > 0.0 {
                    scale * q as f64 / y_norm_sq
                } else {
                    c / d
                }
            }
        }
    }
}

/// Gamma hyper-prior shapes/scales and the iteration controls shared by the
/// Bayesian solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SblHyper {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    /// Precision inflation factor applied to thresholded-out entries (> 1).
    pub varsigma: f64,
    /// Relative-change stopping tolerance.
    pub epsilon: f64,
    pub max_iter: usize,
    pub gamma_init: GammaInit,
}

impl Default for SblHyper {
    fn default() -> Self {
        Self {
            a: 1e-5,
            b: 1e-5,
            c: 1e-5,
            d: 1e-5,
            varsigma: 10.0,
            epsilon: 1e-8,
            max_iter: 1000,
            gamma_init: GammaInit::DataScaled(100.0),
        }
    }
}

impl SblHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.b > 0.0 && self.c > 0.0 && self.d > 0.0) {
            return Err(Error::Config("hyper shapes a, b, c, d must be > 0".into()));
        }
        if !(self.varsigma > 1.0) {
            return Err(Error::Config("varsigma must be > 1".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("epsilon must be > 0".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be >= 1".into()));
        }
        if let GammaInit::DataScaled(s) = self.gamma_init {
            if !(s > 0.0) {
                return Err(Error::Config("gamma_init scale must be > 0".into()));
            }
        }
        Ok(())
    }
}

/// Per-iteration history of a solver run.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    /// The stopping statistic ||z_i - z_{i-1}||^2 / ||z_{i-1}||^2 (for OMP,
    /// the relative residual energy after each selection).
    pub rel_change: Vec<f64>,
    /// NMSE against the supplied truth, when one was supplied.
    pub nmse_db: Vec<f64>,
}

/// Outcome of a recovery run.
#[derive(Debug, Clone)]
pub struct RecoveryResult {
    pub h_hat: DVector<Complex64>,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Trace,
    /// Entries the embedded threshold kept as nonzero hypotheses
    /// (thresholded solver only).
    pub support: Option<Vec<usize>>,
    /// Final log-odds, when the solver maintains them.
    pub rho: Option<DVector<f64>>,
    /// Times a numerical guard clipped a value; zero on healthy runs.
    pub guard_triggers: usize,
    /// Times the dense solver needed diagonal jitter to factorize.
    pub jitter_fallbacks: usize,
}

impl RecoveryResult {
    /// Serialize the estimate as `index,re,im,rho` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,re,im,rho\n");
        for (i, v) in self.h_hat.iter().enumerate() {
            let rho = self.rho.as_ref().map_or(0.0, |r| r[i]);
            out.push_str(&format!("{i},{:e},{:e},{:e}\n", v.re, v.im, rho));
        }
        out
    }

    /// Serialize the trace as `iter,rel_change,nmse_db` rows; the NMSE
    /// column is empty when the run was not scored against a truth.
    pub fn trace_to_csv(&self) -> String {
        let mut out = String::from("iter,rel_change,nmse_db\n");
        for (i, rc) in self.trace.rel_change.iter().enumerate() {
            match self.trace.nmse_db.get(i) {
                Some(nm) => out.push_str(&format!("{},{:e},{:e}\n", i + 1, rc, nm)),
                None => out.push_str(&format!("{},{:e},\n", i + 1, rc)),
            }
        }
        out
    }
}

/// Floor reported by [`nmse_db`] for exact recovery.
pub const NMSE_FLOOR_DB: f64 = -300.0;

/// Normalized mean square error in decibels, floored at -300 dB so exact
/// recovery stays finite in CSV output.
pub fn nmse_db(h_true: &DVector<Complex64>, h_hat: &DVector<Complex64>) -> Result<f64> {
    if h_true.len() != h_hat.len() {
        return Err(Error::Dimension(format!(
            "truth has {} entries, estimate {}",
            h_true.len(),
            h_hat.len()
        )));
    }
    let den = h_true.norm_squared();
    if den == 0.0 {
        return Err(Error::ZeroTruth);
    }
    let num = (h_hat - h_true).norm_squared();
    if num == 0.0 {
        return Ok(NMSE_FLOOR_DB);
    }
    Ok((10.0 * (num / den).log10()).max(NMSE_FLOOR_DB))
}

/// Run the selected algorithm on a measurement. `truth`, when given, adds a
/// per-iteration NMSE trace; `omp_stop` only applies to OMP.
pub fn estimate(
    algo: Algorithm,
    m: &Measurement,
    hyper: &SblHyper,
    omp_stop: &OmpStop,
    truth: Option<&DVector<Complex64>>,
) -> Result<RecoveryResult> {
    match algo {
        Algorithm::Omp => omp::omp_estimate_traced(m, omp_stop, truth),
        Algorithm::Sbl => {
            let mut s = SblSolver::new(m, hyper)?;
            if let Some(t) = truth {
                s.set_truth(t.clone());
            }
            s.run()
        }
        Algorithm::Ifsbl => {
            let mut s = IfsblSolver::new(m, hyper, false)?;
            if let Some(t) = truth {
                s.set_truth(t.clone());
            }
            s.run()
        }
        Algorithm::Ifsblt => {
            let mut s = IfsblSolver::new(m, hyper, true)?;
            if let Some(t) = truth {
                s.set_truth(t.clone());
            }
            s.run()
        }
    }
}
