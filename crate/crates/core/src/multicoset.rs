//! Multi-coset sampling and the correlogram power estimate.
//!
//! A Nyquist-grid signal `x[n]` (rate `W`) is split into `L` cosets; `q` of
//! them, at offsets `c_i`, are kept. Each channel is passed through a
//! fractional delay filter so that all channels line up, the channel
//! cross-correlations form `R_z`, and a least-squares inversion of the
//! known mixing gives the average power in each of the `L` spectral
//! segments.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::Rng;

use crate::numerics::{real_pseudoinverse, ComplexMatrix, NumericsError, RealMatrix, C64};
use crate::{Error, Result};

const MAX_OFFSET_DRAWS: usize = 1000;

/// Sampler geometry plus the cached pseudoinverse of the stacked
/// real/imaginary system matrix.
#[derive(Debug, Clone)]
pub struct MultiCosetConfig {
    nyquist_rate: f64,
    segments: usize,
    offsets: Vec<usize>,
    filter_len: usize,
    integer_delay: usize,
    samples_per_channel: usize,
    pinv: Arc<RealMatrix>,
}

impl MultiCosetConfig {
    /// Validates the geometry. The integer delay defaults to
    /// `floor((N_h - 1) / 2)`.
    pub fn new(
        nyquist_rate: f64,
        segments: usize,
        offsets: Vec<usize>,
        filter_len: usize,
        samples_per_channel: usize,
    ) -> Result<Self> {
        let delay = filter_len.saturating_sub(1) / 2;
        Self::with_integer_delay(
            nyquist_rate,
            segments,
            offsets,
            filter_len,
            delay,
            samples_per_channel,
        )
    }

    pub fn with_integer_delay(
        nyquist_rate: f64,
        segments: usize,
        offsets: Vec<usize>,
        filter_len: usize,
        integer_delay: usize,
        samples_per_channel: usize,
    ) -> Result<Self> {
        check_geometry(nyquist_rate, segments, &offsets)?;
        if filter_len == 0 {
            return Err(Error::Config("filter length must be positive".into()));
        }
        if samples_per_channel == 0 {
            return Err(Error::Config("samples per channel must be positive".into()));
        }
        let psi = psi_breve_from_parts(nyquist_rate, segments, &offsets);
        let pinv = real_pseudoinverse(&psi).map_err(|e| match e {
            NumericsError::Singular { condition } => Error::Config(format!(
                "offsets {offsets:?} with L={segments} give a rank-deficient system \
                 (condition {condition:.3e}); choose different offsets"
            )),
            other => Error::Numerics(other),
        })?;
        Ok(Self {
            nyquist_rate,
            segments,
            offsets,
            filter_len,
            integer_delay,
            samples_per_channel,
            pinv: Arc::new(pinv),
        })
    }

    /// Draws `q` distinct offsets from `0..L` (sorted), redrawing until the
    /// system matrix has full column rank.
    pub fn random(
        nyquist_rate: f64,
        segments: usize,
        channels: usize,
        filter_len: usize,
        samples_per_channel: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if channels == 0 || channels >= segments {
            return Err(Error::Config(format!(
                "need 0 < q < L, got q={channels}, L={segments}"
            )));
        }
        let mut last = None;
        for _ in 0..MAX_OFFSET_DRAWS {
            let mut offsets = sample(rng, segments, channels).into_vec();
            offsets.sort_unstable();
            match Self::new(
                nyquist_rate,
                segments,
                offsets,
                filter_len,
                samples_per_channel,
            ) {
                Ok(cfg) => return Ok(cfg),
                Err(e @ Error::Config(_)) => last = Some(e),
                Err(e) => return Err(e),
            }
        }
        Err(last.unwrap_or_else(|| Error::Config("no valid offsets found".into())))
    }

    /// Same geometry and filters with a different per-channel length.
    pub fn with_samples_per_channel(&self, samples_per_channel: usize) -> Result<Self> {
        if samples_per_channel == 0 {
            return Err(Error::Config("samples per channel must be positive".into()));
        }
        Ok(Self {
            samples_per_channel,
            ..self.clone()
        })
    }

    pub fn nyquist_rate(&self) -> f64 {
        self.nyquist_rate
    }

    pub fn segments(&self) -> usize {
        self.segments
    }

    pub fn channels(&self) -> usize {
        self.offsets.len()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn filter_len(&self) -> usize {
        self.filter_len
    }

    pub fn integer_delay(&self) -> usize {
        self.integer_delay
    }

    pub fn samples_per_channel(&self) -> usize {
        self.samples_per_channel
    }

    /// Nyquist-grid length covered by `N` samples per channel, `N·L`.
    pub fn nyquist_len(&self) -> usize {
        self.samples_per_channel * self.segments
    }

    /// Number of distinct correlation pairs kept, `q(q-1)/2 + 1`.
    pub fn pair_count(&self) -> usize {
        pair_count(self.channels())
    }

    pub fn average_sampling_rate(&self) -> f64 {
        self.channels() as f64 * self.nyquist_rate / self.segments as f64
    }

    /// `(Ψ̆ᵀΨ̆)^{-1}Ψ̆ᵀ`, `L × 2Q`.
    pub fn psi_pinv(&self) -> &RealMatrix {
        &self.pinv
    }

    /// Shortest Nyquist sequence that `sample_signal` accepts.
    pub fn required_signal_len(&self) -> usize {
        let max_c = self.offsets.iter().copied().max().unwrap_or(0);
        (self.samples_per_channel - 1) * self.segments + max_c + 1
    }
}

fn check_geometry(w: f64, l: usize, offsets: &[usize]) -> Result<()> {
    if !(w.is_finite() && w > 0.0) {
        return Err(Error::Config(format!(
            "Nyquist rate must be positive, got {w}"
        )));
    }
    if l.is_multiple_of(2) {
        return Err(Error::Config(format!("L must be odd, got {l}")));
    }
    let q = offsets.len();
    if q == 0 || q >= l {
        return Err(Error::Config(format!("need 0 < q < L, got q={q}, L={l}")));
    }
    let mut seen = vec![false; l];
    for &c in offsets {
        if c >= l {
            return Err(Error::Config(format!("offset {c} is outside 0..{l}")));
        }
        if seen[c] {
            return Err(Error::Config(format!("offset {c} repeated")));
        }
        seen[c] = true;
    }
    if 2 * pair_count(q) < l {
        return Err(Error::Config(format!(
            "2Q = {} < L = {l}: too few channels",
            2 * pair_count(q)
        )));
    }
    Ok(())
}

pub fn pair_count(q: usize) -> usize {
    q * (q.saturating_sub(1)) / 2 + 1
}

/// `(0,0)` followed by the strict upper triangle in row-major order.
pub fn channel_pairs(q: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(pair_count(q));
    pairs.push((0, 0));
    for a in 0..q {
        for b in a + 1..q {
            pairs.push((a, b));
        }
    }
    pairs
}

/// Segment centre index `m_l = -(L+1)/2 + l` for `l = 1..=L`.
fn segment_index(l: usize, segments: usize) -> f64 {
    l as f64 + 1.0 - (segments as f64 + 1.0) / 2.0
}

/// `[Γ]_{i,l} = (W/L) exp(-j 2π c_i m_l / L)`.
pub fn gamma_from_parts(w: f64, segments: usize, offsets: &[usize]) -> ComplexMatrix {
    let lf = segments as f64;
    ComplexMatrix::from_fn(offsets.len(), segments, |i, l| {
        let phase = -2.0 * PI * offsets[i] as f64 * segment_index(l, segments) / lf;
        C64::from_polar(w / lf, phase)
    })
}

pub fn build_gamma(config: &MultiCosetConfig) -> ComplexMatrix {
    gamma_from_parts(config.nyquist_rate, config.segments, &config.offsets)
}

/// Rows of `Ψ`, one per channel pair: `(W/L)^2 exp(-j 2π (c_a - c_b) m_l / L)`.
pub fn psi_from_parts(w: f64, segments: usize, offsets: &[usize]) -> ComplexMatrix {
    let lf = segments as f64;
    let pairs = channel_pairs(offsets.len());
    let amp = (w / lf) * (w / lf);
    ComplexMatrix::from_fn(pairs.len(), segments, |k, l| {
        let (a, b) = pairs[k];
        let diff = offsets[a] as f64 - offsets[b] as f64;
        C64::from_polar(amp, -2.0 * PI * diff * segment_index(l, segments) / lf)
    })
}

/// `Ψ̆ = [Re Ψ; Im Ψ]`, `2Q × L`.
pub fn psi_breve_from_parts(w: f64, segments: usize, offsets: &[usize]) -> RealMatrix {
    let psi = psi_from_parts(w, segments, offsets);
    let q = psi.rows();
    RealMatrix::from_fn(2 * q, segments, |k, l| {
        if k < q {
            psi[(k, l)].re
        } else {
            psi[(k - q, l)].im
        }
    })
}

pub fn build_psi_breve(config: &MultiCosetConfig) -> RealMatrix {
    psi_breve_from_parts(config.nyquist_rate, config.segments, &config.offsets)
}

/// Per-channel Lagrange fractional delay filters, unit ℓ2 norm.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayFilterBank {
    /// `taps[a][m] = h_a(m)`.
    pub taps: Vec<Vec<f64>>,
    /// Total delay `c_a/L + D` realised by each filter.
    pub delays: Vec<f64>,
    /// `H_a` for the configured `N`.
    pub energy: Vec<f64>,
}

impl DelayFilterBank {
    pub fn filter_len(&self) -> usize {
        self.taps.first().map_or(0, Vec::len)
    }

    /// `H_a` recomputed for another per-channel length.
    pub fn energy_for(&self, samples_per_channel: usize) -> Vec<f64> {
        self.taps
            .iter()
            .map(|h| filter_energy(h, samples_per_channel))
            .collect()
    }

    /// `H_1`, the energy of the first channel filter.
    pub fn h1(&self) -> f64 {
        self.energy[0]
    }
}

/// Lagrange interpolator taps `h[n] = Π_{k≠n} (d-k)/(n-k)`, `n = 0..len`.
pub fn lagrange_taps(delay: f64, len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| {
            (0..len)
                .filter(|&k| k != n)
                .map(|k| (delay - k as f64) / (n as f64 - k as f64))
                .product()
        })
        .collect()
}

/// `H = (1/N) Σ_m max(N-m, 0) h(m)^2`; the clamp only matters when `N < N_h`.
pub fn filter_energy(taps: &[f64], samples_per_channel: usize) -> f64 {
    let n = samples_per_channel as f64;
    taps.iter()
        .enumerate()
        .map(|(m, h)| (n - m as f64).max(0.0) * h * h)
        .sum::<f64>()
        / n
}

pub fn design_delay_filters(config: &MultiCosetConfig) -> Result<DelayFilterBank> {
    let len = config.filter_len;
    let span = (len - 1) as f64;
    let mut taps = Vec::with_capacity(config.channels());
    let mut delays = Vec::with_capacity(config.channels());
    for &c in &config.offsets {
        let d = c as f64 / config.segments as f64 + config.integer_delay as f64;
        if !(0.0..=span).contains(&d) {
            return Err(Error::Config(format!(
                "total delay {d:.4} for offset {c} lies outside the filter span [0, {span}]"
            )));
        }
        let mut h = lagrange_taps(d, len);
        let norm = h.iter().map(|v| v * v).sum::<f64>().sqrt();
        h.iter_mut().for_each(|v| *v /= norm);
        taps.push(h);
        delays.push(d);
    }
    let energy = taps
        .iter()
        .map(|h| filter_energy(h, config.samples_per_channel))
        .collect();
    Ok(DelayFilterBank {
        taps,
        delays,
        energy,
    })
}

/// `y_i(n) = x[nL + c_i]`, one row per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSamples {
    pub channels: Vec<Vec<C64>>,
}

impl ChannelSamples {
    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Decimates a Nyquist-grid sequence into the configured cosets.
pub fn sample_signal<T: Copy + Into<C64>>(
    x: &[T],
    config: &MultiCosetConfig,
) -> Result<ChannelSamples> {
    let required = config.required_signal_len();
    if x.len() < required {
        return Err(Error::Bounds {
            required,
            actual: x.len(),
        });
    }
    let (n, l) = (config.samples_per_channel, config.segments);
    Ok(ChannelSamples {
        channels: config
            .offsets
            .iter()
            .map(|&c| (0..n).map(|i| x[i * l + c].into()).collect())
            .collect(),
    })
}

/// Causal FIR filtering from the first sample, no warm-up discard.
pub fn delay_channel(y: &[C64], h: &[f64]) -> Vec<C64> {
    (0..y.len())
        .map(|n| {
            let lo = (n + 1).saturating_sub(h.len());
            (lo..=n).map(|m| y[m] * h[n - m]).sum()
        })
        .collect()
}

/// `[R̂_z]_{a,b} = (2πW/NL) Σ_n y_a^d(n) conj(y_b^d(n))`.
pub fn estimate_rz(
    samples: &ChannelSamples,
    filters: &DelayFilterBank,
    config: &MultiCosetConfig,
) -> Result<ComplexMatrix> {
    let q = config.channels();
    if samples.channel_count() != q || filters.taps.len() != q {
        return Err(Error::Config(format!(
            "expected {q} channels, got {} sample rows and {} filters",
            samples.channel_count(),
            filters.taps.len()
        )));
    }
    let n = samples.len();
    if samples.channels.iter().any(|c| c.len() != n) {
        return Err(Error::Config("channels have unequal lengths".into()));
    }
    let delayed: Vec<Vec<C64>> = samples
        .channels
        .iter()
        .zip(&filters.taps)
        .map(|(y, h)| delay_channel(y, h))
        .collect();
    let scale = 2.0 * PI * config.nyquist_rate / (n as f64 * config.segments as f64);
    let mut rz = ComplexMatrix::zeros(q, q);
    for a in 0..q {
        for b in a..q {
            let s: C64 = delayed[a]
                .iter()
                .zip(&delayed[b])
                .map(|(x, y)| x * y.conj())
                .sum::<C64>()
                * scale;
            rz[(a, b)] = s;
            rz[(b, a)] = s.conj();
        }
        rz[(a, a)] = C64::new(rz[(a, a)].re, 0.0);
    }
    Ok(rz)
}

/// Per-segment average power estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerEstimate {
    pub p_hat: Vec<f64>,
    pub v_hat: Vec<f64>,
    pub u_breve_hat: Vec<f64>,
    pub rz_hat: ComplexMatrix,
}

/// `ŭ = [Re u; Im u]` with `u_k = [R̂_z]_{a,b}` over [`channel_pairs`].
pub fn stack_u(rz: &ComplexMatrix) -> Vec<f64> {
    let pairs = channel_pairs(rz.rows());
    let u: Vec<C64> = pairs.iter().map(|&(a, b)| rz[(a, b)]).collect();
    u.iter()
        .map(|z| z.re)
        .chain(u.iter().map(|z| z.im))
        .collect()
}

pub fn estimate_power(
    rz_hat: &ComplexMatrix,
    config: &MultiCosetConfig,
    filters: &DelayFilterBank,
) -> Result<PowerEstimate> {
    let q = config.channels();
    if rz_hat.rows() != q || rz_hat.cols() != q {
        return Err(Error::Config(format!(
            "R_z must be {q}x{q}, got {}x{}",
            rz_hat.rows(),
            rz_hat.cols()
        )));
    }
    if !rz_hat.is_hermitian(1e-10) {
        return Err(Error::Config("R_z estimate is not Hermitian".into()));
    }
    let u_breve_hat = stack_u(rz_hat);
    let v_hat = config.pinv.mul_vec(&u_breve_hat);
    let gain = config.nyquist_rate / (2.0 * PI * filters.h1());
    let p_hat = v_hat.iter().map(|v| v * gain).collect();
    Ok(PowerEstimate {
        p_hat,
        v_hat,
        u_breve_hat,
        rz_hat: rz_hat.clone(),
    })
}

/// Configuration plus filters, bundled for repeated estimation.
#[derive(Debug, Clone)]
pub struct PowerEstimator {
    pub config: MultiCosetConfig,
    pub filters: DelayFilterBank,
}

impl PowerEstimator {
    pub fn new(config: MultiCosetConfig) -> Result<Self> {
        let filters = design_delay_filters(&config)?;
        Ok(Self { config, filters })
    }

    pub fn estimate<T: Copy + Into<C64>>(&self, x: &[T]) -> Result<PowerEstimate> {
        let samples = sample_signal(x, &self.config)?;
        let rz = estimate_rz(&samples, &self.filters, &self.config)?;
        estimate_power(&rz, &self.config, &self.filters)
    }
}

/// White circular complex Gaussian Nyquist-grid signal with power `sigma2`.
pub fn white_signal(len: usize, sigma2: f64, rng: &mut impl Rng) -> Vec<C64> {
    crate::rng::complex_normal_vec(rng, len, sigma2)
}
