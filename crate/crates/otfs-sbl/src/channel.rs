use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::DDGrid;
use crate::params::SystemParams;

/// One propagation path on the delay-Doppler lattice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathParams {
    /// Complex gain h_i.
    pub gain: Complex64,
    /// Integer delay tap.
    pub l_tau: usize,
    /// Integer Doppler tap (may be negative).
    pub k_nu: i64,
    /// Fractional Doppler offset, in (-0.5, 0.5).
    pub kappa: f64,
}

impl PathParams {
    pub fn validate(&self, params: &SystemParams) -> Result<()> {
        if self.l_tau > params.l_max {
            return Err(Error::Dimension(format!(
                "path delay tap {} exceeds l_max {}",
                self.l_tau, params.l_max
            )));
        }
        if self.k_nu.unsigned_abs() as usize > params.k_max {
            return Err(Error::Dimension(format!(
                "path Doppler tap {} exceeds k_max {}",
                self.k_nu, params.k_max
            )));
        }
        if !(self.kappa > -0.5 && self.kappa < 0.5) {
            return Err(Error::Dimension(format!(
                "fractional Doppler {} outside (-0.5, 0.5)",
                self.kappa
            )));
        }
        Ok(())
    }

    /// Physical delay in seconds, tau_i = l_tau / (M * delta_f).
    pub fn delay_s(&self, params: &SystemParams) -> f64 {
        self.l_tau as f64 / (params.m as f64 * params.delta_f_hz)
    }

    /// Physical Doppler shift in Hz, nu_i = (k_nu + kappa) / (N * T).
    pub fn doppler_hz(&self, params: &SystemParams) -> f64 {
        (self.k_nu as f64 + self.kappa) / (params.n as f64 * params.symbol_period())
    }
}

/// A sparse multipath channel: a set of paths with distinct (delay, Doppler)
/// tap pairs and unit total power.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpec {
    pub paths: Vec<PathParams>,
}

impl ChannelSpec {
    pub fn new(paths: Vec<PathParams>, params: &SystemParams) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::Dimension("channel needs at least one path".into()));
        }
        for p in &paths {
            p.validate(params)?;
        }
        for i in 0..paths.len() {
            for j in (i + 1)..paths.len() {
                if paths[i].l_tau == paths[j].l_tau && paths[i].k_nu == paths[j].k_nu {
                    return Err(Error::Dimension(format!(
                        "paths {i} and {j} share tap ({}, {})",
                        paths[i].l_tau, paths[i].k_nu
                    )));
                }
            }
        }
        Ok(Self { paths })
    }

    pub fn total_power(&self) -> f64 {
        self.paths.iter().map(|p| p.gain.norm_sqr()).sum()
    }
}

/// Power-delay profile used when drawing path delays and gain weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerDelayProfile {
    /// Exponential decay with constant l_max/3; the sparse, power-decaying
    /// shape of vehicular channel models.
    Exponential,
    /// All delay taps equally likely and equally weighted.
    Uniform,
}

/// Fractional-Doppler leakage window.
///
/// Closed form of (1/N) * sum_{n=0}^{N-1} exp(j*(2*pi/N)*n*(-q - kappa)).
/// At the removable singularity (-q - kappa = 0 mod N) the value is 1 by
/// continuity; for kappa = 0 and q not a multiple of N it is exactly 0.
pub fn psi_coeff(q: i64, kappa: f64, n: usize) -> Complex64 {
    debug_assert!(n >= 1);
    debug_assert!(kappa > -0.5 && kappa < 0.5);
    let nf = n as f64;
    if kappa == 0.0 {
        // -q - kappa is an integer: the geometric sum collapses.
        return if q.rem_euclid(n as i64) == 0 {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::ZERO
        };
    }
    let x = -(q as f64) - kappa;
    let num = Complex64::from_polar(1.0, TAU * x) - 1.0;
    let den = Complex64::from_polar(nf, TAU * x / nf) - nf;
    num / den
}

/// Per-cell coefficient of the rectangular-pulse input-output relation.
///
/// The first branch applies when the delayed symbol does not wrap the delay
/// axis (l >= l_tau); the wrapped branch carries an extra phase ramp and a
/// -1/N amplitude correction.
pub fn phi_coeff(
    k: usize,
    l: usize,
    q: i64,
    l_tau: usize,
    k_nu: i64,
    kappa: f64,
    params: &SystemParams,
) -> Complex64 {
    let m = params.m as f64;
    let n = params.n as f64;
    let psi = psi_coeff(q, kappa, params.n);
    let doppler = k_nu as f64 + kappa;
    let base = Complex64::from_polar(1.0, TAU * (l as f64 - l_tau as f64) * doppler / (m * n));
    if l >= l_tau {
        psi * base
    } else {
        let wrapped = (k as i64 - k_nu + q).rem_euclid(params.n as i64) as f64;
        let ramp = Complex64::from_polar(1.0, -TAU * wrapped / n);
        (psi - 1.0 / n) * base * ramp
    }
}

/// Draw a random sparse channel.
///
/// Delay taps come from the chosen power-delay profile (distinct taps when
/// P <= l_max + 1, otherwise distinct (delay, Doppler) pairs by rejection);
/// Doppler taps follow k_nu = round(k_max * cos(theta)) with theta uniform;
/// gains are circular Gaussian weighted by the profile and normalized to
/// unit total power.
pub fn gen_channel(
    params: &SystemParams,
    n_paths: usize,
    fractional: bool,
    pdp: PowerDelayProfile,
    rng_seed: u64,
) -> Result<ChannelSpec> {
    let slots = (params.l_max + 1) * (2 * params.k_max + 1);
    if n_paths == 0 {
        return Err(Error::Infeasible("need at least one path".into()));
    }
    if n_paths > slots {
        return Err(Error::Infeasible(format!(
            "{} paths do not fit {} distinct (delay, Doppler) slots",
            n_paths, slots
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);

    let weight = |l: usize| -> f64 {
        match pdp {
            PowerDelayProfile::Exponential => {
                let decay = (params.l_max as f64 / 3.0).max(1e-12);
                (-(l as f64) / decay).exp()
            }
            PowerDelayProfile::Uniform => 1.0,
        }
    };

    let draw_doppler = |rng: &mut ChaCha8Rng| -> i64 {
        let theta: f64 = rng.random::<f64>() * TAU;
        (params.k_max as f64 * theta.cos()).round() as i64
    };

    let mut taps: Vec<(usize, i64)> = Vec::with_capacity(n_paths);
    if n_paths <= params.l_max + 1 {
        // Weighted sampling of delays without replacement, then one Doppler
        // tap per delay; distinct delays make the pairs distinct.
        let mut pool: Vec<usize> = (0..=params.l_max).collect();
        for _ in 0..n_paths {
            let total: f64 = pool.iter().map(|&l| weight(l)).sum();
            let mut u = rng.random::<f64>() * total;
            let mut chosen = pool.len() - 1;
            for (idx, &l) in pool.iter().enumerate() {
                u -= weight(l);
                if u <= 0.0 {
                    chosen = idx;
                    break;
                }
            }
            let l = pool.swap_remove(chosen);
            taps.push((l, draw_doppler(&mut rng)));
        }
    } else {
        // More paths than delay bins: fall back to rejection on pairs.
        let totals: f64 = (0..=params.l_max).map(weight).sum();
        while taps.len() < n_paths {
            let mut u = rng.random::<f64>() * totals;
            let mut l = params.l_max;
            for cand in 0..=params.l_max {
                u -= weight(cand);
                if u <= 0.0 {
                    l = cand;
                    break;
                }
            }
            let k = draw_doppler(&mut rng);
            if !taps.iter().any(|&(tl, tk)| tl == l && tk == k) {
                taps.push((l, k));
            }
        }
    }

    let mut paths: Vec<PathParams> = taps
        .into_iter()
        .map(|(l_tau, k_nu)| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            let w = weight(l_tau).sqrt();
            let kappa = if fractional { rng.random::<f64>() - 0.5 } else { 0.0 };
            PathParams {
                gain: Complex64::new(re, im) * w,
                l_tau,
                k_nu,
                kappa,
            }
        })
        .collect();

    let power: f64 = paths.iter().map(|p| p.gain.norm_sqr()).sum();
    let scale = 1.0 / power.sqrt();
    for p in &mut paths {
        p.gain *= scale;
    }
    ChannelSpec::new(paths, params)
}

/// Push a frame through the doubly-dispersive channel and add circular
/// complex Gaussian noise of the given per-entry variance.
pub fn synthesize_rx(
    tx: &DDGrid,
    channel: &ChannelSpec,
    noise_var: f64,
    params: &SystemParams,
    rng_seed: u64,
) -> Result<DDGrid> {
    if !tx.dims_match(params) {
        return Err(Error::Dimension(format!(
            "tx grid {}x{} does not match params {}x{}",
            tx.n_doppler(),
            tx.m_delay(),
            params.n,
            params.m
        )));
    }
    if noise_var < 0.0 {
        return Err(Error::Dimension("noise variance must be >= 0".into()));
    }
    let mut rx = DDGrid::zeros(params);
    let eta = params.eta as i64;
    let mn = (params.m * params.n) as f64;
    for k in 0..params.n {
        for l in 0..params.m {
            let mut acc = Complex64::ZERO;
            for path in &channel.paths {
                let doppler = path.k_nu as f64 + path.kappa;
                let lead = Complex64::from_polar(
                    1.0,
                    TAU * (l as f64 - path.l_tau as f64) * doppler / mn,
                );
                // On-grid paths leak nothing outside q = 0 in the first
                // branch; the wrapped-delay branch keeps its -1/N terms.
                let (q_lo, q_hi) = if path.kappa == 0.0 && l >= path.l_tau {
                    (0, 0)
                } else {
                    (-eta, eta)
                };
                for q in q_lo..=q_hi {
                    let phi = phi_coeff(k, l, q, path.l_tau, path.k_nu, path.kappa, params);
                    if phi == Complex64::ZERO {
                        continue;
                    }
                    let x = tx.get_mod(k as i64 - path.k_nu + q, l as i64 - path.l_tau as i64);
                    acc += path.gain * lead * phi * x;
                }
            }
            rx.set(k, l, acc);
        }
    }
    if noise_var > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let sigma = (noise_var / 2.0).sqrt();
        for v in rx.values_mut() {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            *v += Complex64::new(re * sigma, im * sigma);
        }
    }
    Ok(rx)
}
