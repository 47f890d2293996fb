//! Recovery of sinusoid mixtures from compressive measurements.
//!
//! The signal `x_n = Σ_k d_k e^{-jω_k n}` is observed through `y = Φx + w`
//! with `Φ` real `M × N`. Each iteration takes a gradient step in the
//! Nyquist domain, estimates the frequencies with root-MUSIC, and refits
//! the amplitudes either by least squares against `y` (nested LS) or by
//! correlation with the gradient-step signal (SIHT).

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::numerics::{
    hermitian_eig, least_squares, poly_roots, poly_roots_aberth, ComplexMatrix, NumericsError,
    RealMatrix, C64,
};
use crate::rng::complex_normal_vec;
use crate::{Error, Result};

/// Frequencies and amplitudes of a line spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct LineSpectrumModel {
    frequencies: Vec<f64>,
    amplitudes: Vec<C64>,
}

impl LineSpectrumModel {
    pub fn new(frequencies: Vec<f64>, amplitudes: Vec<C64>) -> Result<Self> {
        if frequencies.len() != amplitudes.len() {
            return Err(Error::Config(format!(
                "{} frequencies but {} amplitudes",
                frequencies.len(),
                amplitudes.len()
            )));
        }
        for (i, &w) in frequencies.iter().enumerate() {
            if !(0.0..TAU).contains(&w) {
                return Err(Error::Config(format!("frequency {w} outside [0, 2π)")));
            }
            if frequencies[..i].contains(&w) {
                return Err(Error::Config(format!("frequency {w} repeated")));
            }
        }
        Ok(Self {
            frequencies,
            amplitudes,
        })
    }

    /// `K` frequencies uniform on `[0, 2π)` at circular spacing at least
    /// `min_spacing`, magnitudes uniform on `[1, 2]`, phases zero unless
    /// `random_phase`.
    pub fn random(
        k: usize,
        min_spacing: f64,
        random_phase: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if k as f64 * min_spacing >= TAU {
            return Err(Error::Config(format!(
                "{k} frequencies cannot be spaced {min_spacing} apart"
            )));
        }
        let mut frequencies: Vec<f64> = Vec::with_capacity(k);
        let mut attempts = 0usize;
        while frequencies.len() < k {
            attempts += 1;
            if attempts > 1_000_000 {
                return Err(Error::Config(
                    "could not place frequencies at the requested spacing".into(),
                ));
            }
            let w = rng.random_range(0.0..TAU);
            if frequencies
                .iter()
                .all(|&f| circular_distance(f, w) >= min_spacing)
            {
                frequencies.push(w);
            }
        }
        let amplitudes = (0..k)
            .map(|_| {
                let mag = rng.random_range(1.0..=2.0);
                let phase = if random_phase {
                    rng.random_range(0.0..TAU)
                } else {
                    0.0
                };
                C64::from_polar(mag, phase)
            })
            .collect();
        Ok(Self {
            frequencies,
            amplitudes,
        })
    }

    pub fn order(&self) -> usize {
        self.frequencies.len()
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }
}

/// Distance on the circle `[0, 2π)`.
pub fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// `N × K` matrix with columns `a(ω) = [1, e^{-jω}, …, e^{-j(N-1)ω}]ᵀ`.
pub fn vandermonde(frequencies: &[f64], n: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(n, frequencies.len(), |i, k| {
        C64::from_polar(1.0, -frequencies[k] * i as f64)
    })
}

pub fn synthesize_signal(model: &LineSpectrumModel, n: usize) -> Vec<C64> {
    vandermonde(&model.frequencies, n).mul_vec(&model.amplitudes)
}

pub fn energy(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum()
}

/// Real Gaussian measurement matrix and complex noise level.
#[derive(Debug, Clone)]
pub struct MeasurementSystem {
    pub phi: RealMatrix,
    /// Standard deviation of each complex noise sample (`E|w_i|^2 = σ²`).
    pub noise_sigma: f64,
}

impl MeasurementSystem {
    pub fn new(phi: RealMatrix, noise_sigma: f64) -> Result<Self> {
        if phi.rows() >= phi.cols() {
            return Err(Error::Config(format!(
                "measurement matrix must be compressive, got {}x{}",
                phi.rows(),
                phi.cols()
            )));
        }
        if phi.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(
                "measurement matrix has non-finite entries".into(),
            ));
        }
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(Error::Config(format!("invalid noise level {noise_sigma}")));
        }
        Ok(Self { phi, noise_sigma })
    }

    /// Entries drawn i.i.d. from `N(0, 1/M)`.
    pub fn gaussian(m: usize, n: usize, noise_sigma: f64, rng: &mut impl Rng) -> Result<Self> {
        let scale = 1.0 / (m as f64).sqrt();
        let phi = RealMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal) * scale);
        Self::new(phi, noise_sigma)
    }

    pub fn m(&self) -> usize {
        self.phi.rows()
    }

    pub fn n(&self) -> usize {
        self.phi.cols()
    }

    pub fn measure(&self, x: &[C64], rng: &mut impl Rng) -> Vec<C64> {
        measure(x, &self.phi, self.noise_sigma, rng)
    }
}

/// `y = Φx + w`, `w` circular complex Gaussian with variance `σ²` per entry.
pub fn measure(x: &[C64], phi: &RealMatrix, noise_sigma: f64, rng: &mut impl Rng) -> Vec<C64> {
    let clean = phi.mul_complex_vec(x);
    if noise_sigma == 0.0 {
        return clean;
    }
    let w = complex_normal_vec(rng, clean.len(), noise_sigma * noise_sigma);
    clean.iter().zip(&w).map(|(a, b)| a + b).collect()
}

/// `x^e = x̂ + λ Φᵀ (y - Φ x̂)`.
pub fn outer_ls_step(x_prev: &[C64], y: &[C64], phi: &RealMatrix, lambda: f64) -> Vec<C64> {
    let fit = phi.mul_complex_vec(x_prev);
    let resid: Vec<C64> = y.iter().zip(&fit).map(|(a, b)| a - b).collect();
    let grad = phi.transpose_mul_complex_vec(&resid);
    x_prev
        .iter()
        .zip(&grad)
        .map(|(x, g)| x + g * lambda)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RootSolver {
    Companion,
    Aberth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RootMusicConfig {
    pub window: usize,
    pub order: usize,
    pub forward_backward: bool,
    pub solver: RootSolver,
}

impl RootMusicConfig {
    pub const DEFAULT_WINDOW: usize = 200;

    pub fn new(window: usize, order: usize) -> Result<Self> {
        if window <= 2 * order {
            return Err(Error::Config(format!(
                "window {window} must exceed twice the model order {order}"
            )));
        }
        if order == 0 {
            return Err(Error::Config("model order must be positive".into()));
        }
        Ok(Self {
            window,
            order,
            forward_backward: false,
            solver: RootSolver::Aberth,
        })
    }

    pub fn with_default_window(order: usize) -> Result<Self> {
        Self::new(Self::DEFAULT_WINDOW.max(2 * order + 12), order)
    }
}

/// `[R̂_x]_{a,b} = (1/(N-W+1)) Σ_{t=W-1}^{N-1} conj(x[t-a]) x[t-b]`,
/// filled diagonal by diagonal from the first row.
pub fn windowed_autocorrelation(x: &[C64], window: usize) -> Result<ComplexMatrix> {
    let n = x.len();
    if window == 0 || window > n {
        return Err(Error::Config(format!(
            "window {window} must lie in 1..={n}"
        )));
    }
    let w = window;
    let mut r = ComplexMatrix::zeros(w, w);
    for b in 0..w {
        let s: C64 = (w - 1..n).map(|t| x[t].conj() * x[t - b]).sum();
        r[(0, b)] = s;
        r[(b, 0)] = s.conj();
    }
    for a in 0..w - 1 {
        for b in a..w - 1 {
            let next =
                r[(a, b)] + x[w - 2 - a].conj() * x[w - 2 - b] - x[n - 1 - a].conj() * x[n - 1 - b];
            r[(a + 1, b + 1)] = next;
            r[(b + 1, a + 1)] = next.conj();
        }
    }
    let scale = 1.0 / (n - w + 1) as f64;
    for a in 0..w {
        r[(a, a)] = C64::new(r[(a, a)].re, 0.0);
    }
    Ok(r.scale(scale))
}

/// Root-MUSIC polynomial from the signal subspace: the coefficient of
/// `z^{l+W-1}` is `Σ_a [I - E_s E_s^H]_{a,a+l}`.
fn music_polynomial(signal: &ComplexMatrix, k: usize) -> Vec<C64> {
    let w = signal.rows();
    let mut coeffs = vec![C64::new(0.0, 0.0); 2 * w - 1];
    for lag in 0..w {
        let mut s = C64::new(0.0, 0.0);
        for col in 0..k {
            for a in 0..w - lag {
                s += signal[(a, col)] * signal[(a + lag, col)].conj();
            }
        }
        let diag = if lag == 0 { w as f64 } else { 0.0 };
        let c_pos = C64::new(diag, 0.0) - s;
        coeffs[w - 1 + lag] = c_pos;
        coeffs[w - 1 - lag] = c_pos.conj();
    }
    coeffs
}

const ADMISSIBLE_RADIUS: f64 = 1.0 + 1e-7;
const TIE_BAND: f64 = 1e-7;
const DUPLICATE_PHASE: f64 = 1e-6;

/// Up to `order` frequencies from the roots nearest the unit circle. Fewer
/// are returned when not enough distinct admissible roots exist.
pub fn root_music_candidates(x_e: &[C64], config: &RootMusicConfig) -> Result<Vec<f64>> {
    if config.window <= 2 * config.order {
        return Err(Error::Config(format!(
            "window {} must exceed twice the model order {}",
            config.window, config.order
        )));
    }
    let mut r = windowed_autocorrelation(x_e, config.window)?;
    if config.forward_backward {
        let w = config.window;
        let flipped = ComplexMatrix::from_fn(w, w, |a, b| r[(w - 1 - a, w - 1 - b)].conj());
        r = ComplexMatrix::from_fn(w, w, |a, b| (r[(a, b)] + flipped[(a, b)]) * 0.5);
    }
    let eig = hermitian_eig(&r)?;
    let coeffs = music_polynomial(&eig.eigenvectors, config.order);
    let roots = match config.solver {
        RootSolver::Companion => poly_roots(&coeffs)?,
        RootSolver::Aberth => poly_roots_aberth(&coeffs)?,
    }
    .roots;
    Ok(select_roots(&roots, config.order))
}

fn select_roots(roots: &[C64], k: usize) -> Vec<f64> {
    let mut pool: Vec<(f64, f64)> = roots
        .iter()
        .filter(|z| z.is_finite() && z.norm() <= ADMISSIBLE_RADIUS)
        .map(|z| ((1.0 - z.norm()).abs(), (-z.arg()).rem_euclid(TAU)))
        .collect();
    pool.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut chosen: Vec<f64> = Vec::with_capacity(k);
    while chosen.len() < k && !pool.is_empty() {
        let best = pool[0].0;
        let separation = |w: f64| {
            chosen
                .iter()
                .map(|&c| circular_distance(c, w))
                .fold(f64::INFINITY, f64::min)
        };
        let pick = (0..pool.len())
            .take_while(|&i| pool[i].0 - best <= TIE_BAND)
            .max_by(|&i, &j| {
                separation(pool[i].1)
                    .total_cmp(&separation(pool[j].1))
                    .then(j.cmp(&i))
            })
            .unwrap_or(0);
        let (_, w) = pool.remove(pick);
        if separation(w) > DUPLICATE_PHASE {
            chosen.push(w);
        }
    }
    chosen
}

/// Exactly `order` frequency estimates, or a degenerate-subspace error.
pub fn root_music(x_e: &[C64], config: &RootMusicConfig) -> Result<Vec<f64>> {
    let found = root_music_candidates(x_e, config)?;
    if found.len() < config.order {
        return Err(Error::DegenerateSubspace {
            found: found.len(),
            required: config.order,
        });
    }
    Ok(found)
}

const MERGE_SPACING: f64 = 1e-9;

/// Amplitudes fitted for a frequency set after merging near-duplicates.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeFit {
    pub frequencies: Vec<f64>,
    pub amplitudes: Vec<C64>,
    /// Frequencies dropped to keep the system well posed.
    pub merged: usize,
}

fn merge_close(frequencies: &[f64], spacing: f64) -> Vec<f64> {
    let mut kept: Vec<f64> = Vec::with_capacity(frequencies.len());
    for &w in frequencies {
        if kept.iter().all(|&k| circular_distance(k, w) > spacing) {
            kept.push(w);
        }
    }
    kept
}

/// `d̂ = argmin ‖y - Φ Â d‖` with `Â` the Vandermonde matrix of the
/// estimates. Frequencies within 1e-9 are merged; if the system is still
/// singular the closest pair is collapsed until it is not.
pub fn inner_ls_amplitudes(
    y: &[C64],
    phi: &RealMatrix,
    frequencies: &[f64],
) -> Result<AmplitudeFit> {
    let mut freqs = merge_close(frequencies, MERGE_SPACING);
    loop {
        let b = phi.mul_complex(&vandermonde(&freqs, phi.cols()));
        match least_squares(&b, y) {
            Ok(amplitudes) => {
                return Ok(AmplitudeFit {
                    merged: frequencies.len() - freqs.len(),
                    frequencies: freqs,
                    amplitudes,
                })
            }
            Err(NumericsError::Singular { .. }) if freqs.len() > 1 => {
                let (mut worst, mut drop) = (f64::INFINITY, 1);
                for i in 0..freqs.len() {
                    for j in i + 1..freqs.len() {
                        let d = circular_distance(freqs[i], freqs[j]);
                        if d < worst {
                            worst = d;
                            drop = j;
                        }
                    }
                }
                freqs.remove(drop);
            }
            Err(e) => return Err(e.into()),
        }
    }
}

/// `d̂ = Â^H x^e / N`.
pub fn siht_amplitudes(x_e: &[C64], frequencies: &[f64]) -> Vec<C64> {
    let n = x_e.len() as f64;
    vandermonde(frequencies, x_e.len())
        .adjoint_mul_vec(x_e)
        .into_iter()
        .map(|d| d / n)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    Iterations(usize),
    /// Stop once `‖y - Φx̂‖² / ‖y‖²` falls to `tolerance`, or after
    /// `max_iterations`.
    Threshold {
        tolerance: f64,
        max_iterations: usize,
    },
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule::Iterations(10)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmplitudeMethod {
    NestedLs,
    Siht,
}

#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub x_hat: Vec<C64>,
    pub omega_hat: Vec<f64>,
    pub d_hat: Vec<C64>,
    /// `‖y - Φx̂‖`.
    pub residual_norm: f64,
    /// `‖y - Φx̂‖² / ‖y‖²`.
    pub normalized_error: f64,
    /// Admissible roots found, when fewer than the model order.
    pub degenerate: Option<usize>,
    pub merged: usize,
}

#[derive(Debug, Clone)]
pub struct RecoveryTrace {
    pub step_size_lambda: f64,
    pub method: AmplitudeMethod,
    pub iterations: Vec<IterationRecord>,
}

impl RecoveryTrace {
    pub fn iterations_run(&self) -> usize {
        self.iterations.len()
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.iterations.last()
    }
}

#[derive(Debug, Clone)]
pub struct RecoveryConfig {
    pub lambda: f64,
    pub music: RootMusicConfig,
    pub stop: StopRule,
    pub method: AmplitudeMethod,
}

impl RecoveryConfig {
    pub fn new(order: usize) -> Result<Self> {
        Ok(Self {
            lambda: 1.0,
            music: RootMusicConfig::with_default_window(order)?,
            stop: StopRule::default(),
            method: AmplitudeMethod::NestedLs,
        })
    }
}

/// Fills a short frequency list from the previous iterate, skipping values
/// already (nearly) present.
fn pad_frequencies(found: &mut Vec<f64>, previous: &[f64], k: usize) {
    for &w in previous {
        if found.len() >= k {
            break;
        }
        if found
            .iter()
            .all(|&f| circular_distance(f, w) > DUPLICATE_PHASE)
        {
            found.push(w);
        }
    }
}

/// Iterative recovery starting from `x̂₀ = 0`.
pub fn recover(y: &[C64], phi: &RealMatrix, config: &RecoveryConfig) -> Result<RecoveryTrace> {
    if y.len() != phi.rows() {
        return Err(Error::Config(format!(
            "{} measurements for a {}-row matrix",
            y.len(),
            phi.rows()
        )));
    }
    if !(config.lambda > 0.0) {
        return Err(Error::Config(format!(
            "step size must be positive, got {}",
            config.lambda
        )));
    }
    let n = phi.cols();
    let k = config.music.order;
    let (max_iter, tolerance) = match config.stop {
        StopRule::Iterations(i) => (i, None),
        StopRule::Threshold {
            tolerance,
            max_iterations,
        } => (max_iterations, Some(tolerance)),
    };
    let y_energy = energy(y);
    let mut x_hat = vec![C64::new(0.0, 0.0); n];
    let mut previous: Vec<f64> = Vec::new();
    let mut trace = RecoveryTrace {
        step_size_lambda: config.lambda,
        method: config.method,
        iterations: Vec::with_capacity(max_iter),
    };
    for _ in 0..max_iter {
        let x_e = outer_ls_step(&x_hat, y, phi, config.lambda);
        let mut omega = root_music_candidates(&x_e, &config.music)?;
        let degenerate = (omega.len() < k).then_some(omega.len());
        if degenerate.is_some() {
            pad_frequencies(&mut omega, &previous, k);
        }
        let (omega, d_hat, merged) = match config.method {
            AmplitudeMethod::NestedLs => {
                let fit = inner_ls_amplitudes(y, phi, &omega)?;
                (fit.frequencies, fit.amplitudes, fit.merged)
            }
            AmplitudeMethod::Siht => {
                let d = siht_amplitudes(&x_e, &omega);
                (omega, d, 0)
            }
        };
        x_hat = vandermonde(&omega, n).mul_vec(&d_hat);
        let fit = phi.mul_complex_vec(&x_hat);
        let resid_sq: f64 = y.iter().zip(&fit).map(|(a, b)| (a - b).norm_sqr()).sum();
        let normalized_error = if y_energy > 0.0 {
            resid_sq / y_energy
        } else {
            0.0
        };
        previous.clone_from(&omega);
        trace.iterations.push(IterationRecord {
            x_hat: x_hat.clone(),
            omega_hat: omega,
            d_hat,
            residual_norm: resid_sq.sqrt(),
            normalized_error,
            degenerate,
            merged,
        });
        if tolerance.is_some_and(|t| normalized_error <= t) {
            break;
        }
    }
    Ok(trace)
}

/// Miss radius used for scoring, `5π/N`.
pub fn miss_radius(n: usize) -> f64 {
    5.0 * PI / n as f64
}

/// True frequencies with no estimate strictly closer than `radius`.
pub fn missed_frequencies(truth: &[f64], estimates: &[f64], radius: f64) -> usize {
    truth
        .iter()
        .filter(|&&w| estimates.iter().all(|&e| circular_distance(w, e) >= radius))
        .count()
}

/// `‖x - x̂‖² / ‖x‖²`.
pub fn normalized_squared_error(x: &[C64], x_hat: &[C64]) -> f64 {
    let err: f64 = x.iter().zip(x_hat).map(|(a, b)| (a - b).norm_sqr()).sum();
    err / energy(x)
}
