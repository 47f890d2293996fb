//! Mean and covariance of the correlogram power estimate for a white
//! circular Gaussian input, plus a seeded Monte Carlo counterpart.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::multicoset::{
    channel_pairs, filter_energy, DelayFilterBank, MultiCosetConfig, PowerEstimator,
};
use crate::numerics::RealMatrix;
use crate::rng::{complex_normal_vec, stream};
use crate::{Error, Result};

/// Analytical moments of the estimator for one configuration.
#[derive(Debug, Clone)]
pub struct CorrelogramStats {
    pub expected_p: Vec<f64>,
    pub cov_p: RealMatrix,
    /// Diagonal of `U = E{ŭŭᵀ}`.
    pub u_diag: Vec<f64>,
    /// `G_k` and `Σ_k` per channel pair.
    pub g: Vec<f64>,
    pub sigma: Vec<f64>,
    /// `H_a` per channel.
    pub h: Vec<f64>,
}

/// `E{p̂} = σ² 1_L`.
pub fn expected_power(config: &MultiCosetConfig, sigma2: f64) -> Vec<f64> {
    vec![sigma2; config.segments()]
}

/// `E{v̂} = (2π/W) H_1 σ² 1_L`.
pub fn expected_v(config: &MultiCosetConfig, filters: &DelayFilterBank, sigma2: f64) -> Vec<f64> {
    let h1 = filter_energy(&filters.taps[0], config.samples_per_channel());
    vec![2.0 * PI / config.nyquist_rate() * h1 * sigma2; config.segments()]
}

/// `(h * rev h)[g]` for `g = 0..2N_h-1`, with taps beyond index `keep` zeroed
/// in the first operand.
fn self_correlation(h: &[f64], keep: usize) -> Vec<f64> {
    let nh = h.len();
    let mut out = vec![0.0; 2 * nh - 1];
    for (i, &hi) in h.iter().enumerate().take(keep + 1) {
        for (j, out_g) in out[i..i + nh].iter_mut().enumerate() {
            *out_g += hi * h[nh - 1 - j];
        }
    }
    out
}

fn dot_prefix(a: &[f64], b: &[f64], last: usize) -> f64 {
    a.iter().zip(b).take(last + 1).map(|(x, y)| x * y).sum()
}

/// Closed-form `S_k(n)` for one row, valid when `N >= 2N_h - 1`.
pub fn window_term(ha: &[f64], hb: &[f64], n: usize, samples: usize) -> f64 {
    let nh = ha.len();
    if n + 1 < nh {
        let ca = self_correlation(ha, n);
        let cb = self_correlation(hb, n);
        dot_prefix(&ca, &cb, n + nh - 1)
    } else {
        let ca = self_correlation(ha, nh - 1);
        let cb = self_correlation(hb, nh - 1);
        if n + nh > samples {
            dot_prefix(&ca, &cb, samples + nh - 2 - n)
        } else {
            dot_prefix(&ca, &cb, 2 * nh - 2)
        }
    }
}

/// `S_k(n)` straight from its defining sum, valid for every `N`.
pub fn window_term_direct(ha: &[f64], hb: &[f64], n: usize, samples: usize) -> f64 {
    let nh = ha.len();
    let lo = |t: usize| (t + 1).saturating_sub(nh);
    (0..samples)
        .map(|u| {
            let r0 = lo(n).max(lo(u));
            let r1 = n.min(u);
            if r0 > r1 {
                return 0.0;
            }
            let (mut ra, mut rb) = (0.0, 0.0);
            for r in r0..=r1 {
                ra += ha[n - r] * ha[u - r];
                rb += hb[n - r] * hb[u - r];
            }
            ra * rb
        })
        .sum()
}

/// `(G_k, Σ_k)` for the `k`-th channel pair (zero-based, pair 0 is `(1,1)`).
pub fn compute_g_sigma(
    filters: &DelayFilterBank,
    config: &MultiCosetConfig,
    k: usize,
) -> Result<(f64, f64)> {
    let n = config.samples_per_channel();
    let nh = filters.filter_len();
    if n + 1 < 2 * nh {
        return Err(Error::Config(format!(
            "closed forms need N >= 2N_h - 1 = {}, got N = {n}",
            2 * nh - 1
        )));
    }
    let pairs = channel_pairs(config.channels());
    let &(a, b) = pairs
        .get(k)
        .ok_or_else(|| Error::Config(format!("pair index {k} out of range 0..{}", pairs.len())))?;
    let (ha, hb) = (&filters.taps[a], &filters.taps[b]);
    let g = window_term(ha, hb, nh - 1, n);
    let sigma = (0..nh - 1)
        .chain(n + 1 - nh..n)
        .map(|i| window_term(ha, hb, i, n))
        .sum();
    Ok((g, sigma))
}

/// `Σ_n S_k(n)`: the closed form when the central window is nonempty,
/// the defining sum otherwise.
fn pair_total(
    filters: &DelayFilterBank,
    config: &MultiCosetConfig,
    k: usize,
) -> Result<(f64, f64, f64)> {
    let n = config.samples_per_channel();
    let nh = filters.filter_len();
    match compute_g_sigma(filters, config, k) {
        Ok((g, sigma)) => {
            Ok(((n + 2) as f64 - 2.0 * nh as f64) * g + sigma).map(|total| (total, g, sigma))
        }
        Err(Error::Config(_)) if n + 1 < 2 * nh => {
            let (a, b) = channel_pairs(config.channels())[k];
            let (ha, hb) = (&filters.taps[a], &filters.taps[b]);
            let total = (0..n).map(|i| window_term_direct(ha, hb, i, n)).sum();
            Ok((total, f64::NAN, f64::NAN))
        }
        Err(e) => Err(e),
    }
}

fn check_filters(config: &MultiCosetConfig, filters: &DelayFilterBank) -> Result<()> {
    if filters.taps.len() != config.channels() {
        return Err(Error::Config(format!(
            "filter bank has {} channels, configuration has {}",
            filters.taps.len(),
            config.channels()
        )));
    }
    Ok(())
}

struct UParts {
    u: Vec<f64>,
    /// `[U]_{1,1}` minus the squared mean of `ŭ_1`.
    u1_centred: f64,
    g: Vec<f64>,
    sigma: Vec<f64>,
}

/// Diagonal of `U`, with the per-pair `G_k`, `Σ_k` used to build it.
fn u_parts(config: &MultiCosetConfig, filters: &DelayFilterBank, sigma2: f64) -> Result<UParts> {
    check_filters(config, filters)?;
    let n = config.samples_per_channel() as f64;
    let q = config.pair_count();
    let scale = 2.0 * PI * config.nyquist_rate() / (n * config.segments() as f64);
    let pre = sigma2 * sigma2 * scale * scale;
    let h1 = filter_energy(&filters.taps[0], config.samples_per_channel());
    let mut u = vec![0.0; 2 * q];
    let (mut gs, mut sigmas) = (Vec::with_capacity(q), Vec::with_capacity(q));
    let mut u1_centred = 0.0;
    for k in 0..q {
        let (total, g, sigma) = pair_total(filters, config, k)?;
        gs.push(g);
        sigmas.push(sigma);
        if k == 0 {
            u[0] = pre * (n * n * h1 * h1 + total);
            u1_centred = pre * total;
        } else {
            u[k] = 0.5 * pre * total;
            u[q + k] = u[k];
        }
    }
    Ok(UParts {
        u,
        u1_centred,
        g: gs,
        sigma: sigmas,
    })
}

/// `U = E{ŭŭᵀ}`, a `2Q × 2Q` diagonal matrix.
pub fn compute_u(
    config: &MultiCosetConfig,
    filters: &DelayFilterBank,
    sigma2: f64,
) -> Result<RealMatrix> {
    let u = u_parts(config, filters, sigma2)?.u;
    let m = u.len();
    Ok(RealMatrix::from_fn(
        m,
        m,
        |i, j| if i == j { u[i] } else { 0.0 },
    ))
}

/// `C_p̂ = (W/2πH_1)^2 P U Pᵀ - σ⁴ 11ᵀ` with `P` the pseudoinverse of `Ψ̆`.
///
/// The `σ⁴ 11ᵀ` term is exactly the image of the `N²H_1²` part of
/// `[U]_{1,1}`, so it is dropped from `U` up front instead of subtracted.
pub fn compute_cov_p(
    config: &MultiCosetConfig,
    filters: &DelayFilterBank,
    sigma2: f64,
) -> Result<RealMatrix> {
    Ok(cov_from_parts(
        config,
        filters,
        &u_parts(config, filters, sigma2)?,
    ))
}

fn cov_from_parts(
    config: &MultiCosetConfig,
    filters: &DelayFilterBank,
    parts: &UParts,
) -> RealMatrix {
    let h1 = filter_energy(&filters.taps[0], config.samples_per_channel());
    let w = config.nyquist_rate();
    let mut centred = parts.u.clone();
    centred[0] = parts.u1_centred;
    let p = config.psi_pinv();
    let gain = w / (2.0 * PI * h1);
    let l = config.segments();
    let mut c = RealMatrix::from_fn(l, l, |i, j| {
        let s: f64 = (0..centred.len())
            .map(|k| p[(i, k)] * centred[k] * p[(j, k)])
            .sum();
        gain * gain * s
    });
    for i in 0..l {
        for j in 0..i {
            let avg = 0.5 * (c[(i, j)] + c[(j, i)]);
            c[(i, j)] = avg;
            c[(j, i)] = avg;
        }
    }
    c
}

pub fn correlogram_stats(
    config: &MultiCosetConfig,
    filters: &DelayFilterBank,
    sigma2: f64,
) -> Result<CorrelogramStats> {
    let parts = u_parts(config, filters, sigma2)?;
    let cov_p = cov_from_parts(config, filters, &parts);
    Ok(CorrelogramStats {
        expected_p: expected_power(config, sigma2),
        cov_p,
        u_diag: parts.u,
        g: parts.g,
        sigma: parts.sigma,
        h: filters.energy_for(config.samples_per_channel()),
    })
}

/// Sample moments of `p̂` and `ŭ` over independent white-noise trials.
#[derive(Debug, Clone)]
pub struct MonteCarloMoments {
    pub trials: usize,
    pub mean_p: Vec<f64>,
    pub cov_p: RealMatrix,
    pub mean_u: Vec<f64>,
    /// Diagonal of `E{ŭŭᵀ}` (raw second moment, not centred).
    pub second_moment_u: Vec<f64>,
}

#[derive(Clone)]
struct Accum {
    sum_p: Vec<f64>,
    sum_pp: Vec<f64>,
    sum_u: Vec<f64>,
    sum_uu: Vec<f64>,
}

impl Accum {
    fn new(l: usize, m: usize) -> Self {
        Self {
            sum_p: vec![0.0; l],
            sum_pp: vec![0.0; l * l],
            sum_u: vec![0.0; m],
            sum_uu: vec![0.0; m],
        }
    }

    fn add(&mut self, p: &[f64], u: &[f64]) {
        outer_add(&mut self.sum_p, &mut self.sum_pp, p);
        for ((s, ss), v) in self.sum_u.iter_mut().zip(self.sum_uu.iter_mut()).zip(u) {
            *s += v;
            *ss += v * v;
        }
    }

    fn merge(&mut self, other: &Accum) {
        for (a, b) in [
            (&mut self.sum_p, &other.sum_p),
            (&mut self.sum_pp, &other.sum_pp),
            (&mut self.sum_u, &other.sum_u),
            (&mut self.sum_uu, &other.sum_uu),
        ] {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }
}

fn outer_add(sum: &mut [f64], sum_sq: &mut [f64], v: &[f64]) {
    let n = v.len();
    for i in 0..n {
        sum[i] += v[i];
        for j in 0..n {
            sum_sq[i * n + j] += v[i] * v[j];
        }
    }
}

const MC_CHUNK: usize = 256;

/// Runs `trials` independent estimates on CN(0, σ²) input. Trials are
/// summed in fixed-size chunks combined in index order, so the result is
/// the same for any thread count.
pub fn monte_carlo_moments(
    estimator: &PowerEstimator,
    sigma2: f64,
    trials: usize,
    seed: u64,
    tag: &str,
) -> Result<MonteCarloMoments> {
    if trials < 2 {
        return Err(Error::Config("Monte Carlo needs at least 2 trials".into()));
    }
    let l = estimator.config.segments();
    let m = 2 * estimator.config.pair_count();
    let len = estimator.config.nyquist_len();
    let chunks: Vec<Result<Accum>> = (0..trials.div_ceil(MC_CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = Accum::new(l, m);
            for t in c * MC_CHUNK..((c + 1) * MC_CHUNK).min(trials) {
                let mut rng = stream(seed, tag, 0, t as u64);
                let x = complex_normal_vec(&mut rng, len, sigma2);
                let est = estimator.estimate(&x)?;
                acc.add(&est.p_hat, &est.u_breve_hat);
            }
            Ok(acc)
        })
        .collect();
    let mut total = Accum::new(l, m);
    for c in chunks {
        total.merge(&c?);
    }
    let tf = trials as f64;
    let mean_p: Vec<f64> = total.sum_p.iter().map(|s| s / tf).collect();
    let cov_p = RealMatrix::from_fn(l, l, |i, j| {
        (total.sum_pp[i * l + j] - tf * mean_p[i] * mean_p[j]) / (tf - 1.0)
    });
    let mean_u = total.sum_u.iter().map(|s| s / tf).collect();
    let second_moment_u = total.sum_uu.iter().map(|s| s / tf).collect();
    Ok(MonteCarloMoments {
        trials,
        mean_p,
        cov_p,
        mean_u,
        second_moment_u,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multicoset::design_delay_filters;
    use proptest::prelude::*;

    fn bank(taps: Vec<Vec<f64>>) -> DelayFilterBank {
        let n = taps.len();
        DelayFilterBank {
            taps,
            delays: vec![0.0; n],
            energy: vec![1.0; n],
        }
    }

    /// Quintuple sum over `u, r, p, s, m` for fixed `n`, with every index
    /// constrained to the causal filter windows.
    fn brute_force(ha: &[f64], hb: &[f64], n: usize, samples: usize) -> f64 {
        let nh = ha.len() as isize;
        let win = |t: usize| ((t as isize - nh + 1).max(0) as usize)..=t;
        let h = |f: &[f64], i: isize| {
            if (0..nh).contains(&i) {
                f[i as usize]
            } else {
                0.0
            }
        };
        let mut total = 0.0;
        for u in 0..samples {
            for r in win(n) {
                for p in win(n) {
                    for s in win(u) {
                        for m in win(u) {
                            if r == s && p == m {
                                total += h(ha, n as isize - r as isize)
                                    * h(hb, n as isize - p as isize)
                                    * h(ha, u as isize - s as isize)
                                    * h(hb, u as isize - m as isize);
                            }
                        }
                    }
                }
            }
        }
        total
    }

    #[test]
    fn impulse_filter_terms() {
        let cfg = MultiCosetConfig::new(1.0, 5, vec![0, 1, 3], 1, 8).unwrap();
        let b = bank(vec![vec![1.0]; 3]);
        for k in 0..cfg.pair_count() {
            assert_eq!(compute_g_sigma(&b, &cfg, k).unwrap(), (1.0, 0.0));
        }
    }

    #[test]
    fn two_tap_self_term() {
        let cfg = MultiCosetConfig::new(1.0, 5, vec![0, 1, 3], 2, 8).unwrap();
        let b = bank(vec![vec![0.6, 0.8]; 3]);
        let (g, _) = compute_g_sigma(&b, &cfg, 0).unwrap();
        assert!((g - 1.4608).abs() < 1e-12);
    }

    #[test]
    fn closed_forms_match_brute_force() {
        let cfg = MultiCosetConfig::new(1000.0, 5, vec![0, 2, 3], 3, 12).unwrap();
        let f = design_delay_filters(&cfg).unwrap();
        for (a, b) in channel_pairs(3).into_iter().chain([(1, 1), (2, 1)]) {
            for n in 0..12 {
                let bf = brute_force(&f.taps[a], &f.taps[b], n, 12);
                assert!((window_term(&f.taps[a], &f.taps[b], n, 12) - bf).abs() <= 1e-12);
                assert!((window_term_direct(&f.taps[a], &f.taps[b], n, 12) - bf).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn short_records_rejected_by_closed_form() {
        let cfg = MultiCosetConfig::new(1.0, 5, vec![0, 1, 3], 4, 6).unwrap();
        let f = design_delay_filters(&cfg).unwrap();
        assert!(matches!(
            compute_g_sigma(&f, &cfg, 0),
            Err(Error::Config(_))
        ));
        // U still available through the direct sums
        let u = compute_u(&cfg, &f, 1.0).unwrap();
        assert!(u[(0, 0)] > 0.0);
    }

    #[test]
    fn expected_values() {
        let cfg = MultiCosetConfig::new(1000.0, 5, vec![0, 1, 3], 4, 64).unwrap();
        let f = design_delay_filters(&cfg).unwrap();
        assert_eq!(expected_power(&cfg, 4.0), vec![4.0; 5]);
        assert_eq!(expected_power(&cfg, 0.0), vec![0.0; 5]);
        let v = expected_v(&cfg, &f, 4.0);
        let h1 = f.energy[0];
        assert!((v[0] - 2.0 * PI / 1000.0 * h1 * 4.0).abs() < 1e-15);
    }

    #[test]
    fn u_structure() {
        let cfg = MultiCosetConfig::new(1000.0, 5, vec![0, 1, 3], 4, 64).unwrap();
        let f = design_delay_filters(&cfg).unwrap();
        let u = compute_u(&cfg, &f, 4.0).unwrap();
        let q = cfg.pair_count();
        assert_eq!(u[(q, q)], 0.0);
        for i in 0..2 * q {
            for j in 0..2 * q {
                if i != j {
                    assert_eq!(u[(i, j)], 0.0);
                }
            }
        }
        assert!(compute_u(&cfg, &f, 0.0).unwrap().max_abs() == 0.0);
    }

    #[test]
    fn u_large_n_limit() {
        let cfg = MultiCosetConfig::new(1000.0, 5, vec![0, 1, 3], 4, 1 << 22).unwrap();
        let f = design_delay_filters(&cfg).unwrap();
        let u = compute_u(&cfg, &f, 2.0).unwrap();
        let limit = 4.0 * (2.0 * PI * 1000.0 / 5.0f64).powi(2);
        assert!((u[(0, 0)] - limit).abs() < 1e-5 * limit);
        for k in 1..u.rows() {
            assert!(u[(k, k)] < 1e-5 * limit);
        }
    }

    #[test]
    fn covariance_vanishes_with_n() {
        let cfg = MultiCosetConfig::new(1000.0, 5, vec![0, 1, 3], 4, 64).unwrap();
        let mut prev = f64::INFINITY;
        for n in [64, 1 << 10, 1 << 14, 1 << 20] {
            let c = cfg.with_samples_per_channel(n).unwrap();
            let cov = compute_cov_p(&c, &design_delay_filters(&c).unwrap(), 4.0).unwrap();
            let norm = cov.frobenius_norm();
            assert!(norm < prev);
            prev = norm;
        }
        assert!(prev < 1e-3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn closed_forms_equal_definition(n in 7usize..=16, nh in 1usize..=4, c1 in 1usize..5, seed in any::<u64>()) {
            prop_assume!(n + 1 >= 2 * nh);
            let cfg = MultiCosetConfig::new(1.0, 5, vec![0, c1, (c1 + 2) % 5], nh, n);
            prop_assume!(cfg.is_ok());
            let cfg = cfg.unwrap();
            // arbitrary taps exercise the algebra beyond Lagrange shapes
            let mut s = seed;
            let taps = (0..3)
                .map(|_| {
                    (0..nh)
                        .map(|_| {
                            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
                        })
                        .collect()
                })
                .collect();
            let f = bank(taps);
            for k in 0..cfg.pair_count() {
                let (a, b) = channel_pairs(3)[k];
                let (g, sigma) = compute_g_sigma(&f, &cfg, k).unwrap();
                let total: f64 = (0..n).map(|i| brute_force(&f.taps[a], &f.taps[b], i, n)).sum();
                prop_assert!(((n + 2 - 2 * nh) as f64 * g + sigma - total).abs() <= 1e-12);
            }
        }

        #[test]
        fn cov_is_symmetric_psd(seed in any::<u64>(), n in 8usize..200) {
            let mut rng = stream(seed, "cov", 0, 0);
            let cfg = MultiCosetConfig::random(1000.0, 11, 5, 4, n, &mut rng).unwrap();
            let f = design_delay_filters(&cfg).unwrap();
            let c = compute_cov_p(&cfg, &f, 4.0).unwrap();
            prop_assert!(c.is_symmetric(1e-12));
            let eig = crate::numerics::symmetric_eigenvalues(&c).unwrap();
            prop_assert!(eig.iter().all(|&e| e >= -1e-8 * c.max_abs()));
        }
    }
}
