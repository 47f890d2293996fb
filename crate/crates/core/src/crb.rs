//! Fisher information and Cramér–Rao bound for `y = ΦA(ω)d + w`.
//!
//! Parameters are ordered `θ = [Re d; Im d; ω]`. The noise is circular
//! complex Gaussian with variance `σ²` per entry, so
//! `I(θ) = (2/σ²) Re{(∂μ/∂θ)^H (∂μ/∂θ)}`.

use crate::numerics::{
    invert_symmetric, symmetric_eigenvalues, ComplexMatrix, NumericsError, RealMatrix, C64,
};
use crate::spectralcs::{
    circular_distance, energy, synthesize_signal, vandermonde, LineSpectrumModel,
};
use crate::{Error, Result};

/// `A`, `G = dA/dω` (columnwise) and `diag(d)`.
#[derive(Debug, Clone)]
pub struct DerivativeMatrices {
    pub a: ComplexMatrix,
    pub g: ComplexMatrix,
    pub amplitude_diag: ComplexMatrix,
}

impl DerivativeMatrices {
    /// `GD`: column `k` is `d_k g(ω_k)`.
    pub fn gd(&self) -> ComplexMatrix {
        let k = self.g.cols();
        ComplexMatrix::from_fn(self.g.rows(), k, |i, j| {
            self.g[(i, j)] * self.amplitude_diag[(j, j)]
        })
    }
}

pub fn build_derivative_matrices(
    frequencies: &[f64],
    amplitudes: &[C64],
    n: usize,
) -> DerivativeMatrices {
    let a = vandermonde(frequencies, n);
    let g = ComplexMatrix::from_fn(n, frequencies.len(), |i, k| {
        a[(i, k)] * C64::new(0.0, -(i as f64))
    });
    DerivativeMatrices {
        a,
        g,
        amplitude_diag: ComplexMatrix::diagonal(amplitudes),
    }
}

#[derive(Debug, Clone)]
pub struct FisherAssembly {
    pub f: ComplexMatrix,
    pub delta: ComplexMatrix,
    pub lambda: RealMatrix,
    pub i_theta: RealMatrix,
}

/// `B = ΦA` and `C = ΦGD`.
fn projected(
    model: &LineSpectrumModel,
    phi: &RealMatrix,
) -> (DerivativeMatrices, ComplexMatrix, ComplexMatrix) {
    let der = build_derivative_matrices(model.frequencies(), model.amplitudes(), phi.cols());
    let b = phi.mul_complex(&der.a);
    let c = phi.mul_complex(&der.gd());
    (der, b, c)
}

pub fn fisher_information(
    model: &LineSpectrumModel,
    phi: &RealMatrix,
    sigma2: f64,
) -> Result<FisherAssembly> {
    if !(sigma2 > 0.0) {
        return Err(Error::Config(format!(
            "noise variance must be positive, got {sigma2}"
        )));
    }
    let (_, b, c) = projected(model, phi);
    Ok(assemble(&b, &c, sigma2))
}

fn assemble(b: &ComplexMatrix, c: &ComplexMatrix, sigma2: f64) -> FisherAssembly {
    let s = 2.0 / sigma2;
    let f = b.adjoint_mul(b).scale(s);
    let delta = b.adjoint_mul(c).scale(s);
    let lambda = c.adjoint_mul(c).real_part().scale(s);
    let k = b.cols();
    let i_theta = RealMatrix::from_fn(3 * k, 3 * k, |i, j| {
        let (bi, bj, ii, jj) = (i / k, j / k, i % k, j % k);
        match (bi, bj) {
            (0, 0) | (1, 1) => f[(ii, jj)].re,
            (0, 1) => -f[(ii, jj)].im,
            (1, 0) => f[(ii, jj)].im,
            (0, 2) => delta[(ii, jj)].re,
            (1, 2) => delta[(ii, jj)].im,
            (2, 0) => delta[(jj, ii)].re,
            (2, 1) => delta[(jj, ii)].im,
            _ => lambda[(ii, jj)],
        }
    });
    FisherAssembly {
        f,
        delta,
        lambda,
        i_theta,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrbResult {
    /// Lower bound on `E‖x - x̂‖²`.
    pub crb: f64,
    /// `10 log10(crb / ‖x‖²)`.
    pub ncrb_db: f64,
    pub signal_energy: f64,
}

fn closest_pair(freqs: &[f64]) -> Option<(f64, f64)> {
    let mut best: Option<(f64, f64, f64)> = None;
    for i in 0..freqs.len() {
        for j in i + 1..freqs.len() {
            let d = circular_distance(freqs[i], freqs[j]);
            if best.is_none_or(|b| d < b.2) {
                best = Some((freqs[i], freqs[j], d));
            }
        }
    }
    best.map(|(a, b, _)| (a, b))
}

/// `Tr{(∂x/∂θ) I(θ)^{-1} (∂x/∂θ)^H}` with `∂x/∂θ = [A, jA, GD]`.
pub fn crb_trace(model: &LineSpectrumModel, phi: &RealMatrix, sigma2: f64) -> Result<CrbResult> {
    if !(sigma2 > 0.0) {
        return Err(Error::Config(format!(
            "noise variance must be positive, got {sigma2}"
        )));
    }
    let (der, b, c) = projected(model, phi);
    let fisher = assemble(&b, &c, sigma2);
    let inv = invert_symmetric(&fisher.i_theta).map_err(|e| match e {
        NumericsError::Singular { condition } => {
            let pair = closest_pair(model.frequencies())
                .map(|(a, b)| format!("; closest frequencies {a:.6} and {b:.6}"))
                .unwrap_or_default();
            Error::BoundUnavailable(format!(
                "Fisher information condition {condition:.3e}{pair}"
            ))
        }
        other => Error::Numerics(other),
    })?;
    let n = phi.cols();
    let k = model.order();
    let gd = der.gd();
    let jac = ComplexMatrix::from_fn(n, 3 * k, |i, j| match j / k {
        0 => der.a[(i, j % k)],
        1 => der.a[(i, j % k)] * C64::new(0.0, 1.0),
        _ => gd[(i, j % k)],
    });
    let gram = jac.adjoint_mul(&jac);
    let mut crb = 0.0;
    for i in 0..3 * k {
        for j in 0..3 * k {
            crb += inv[(i, j)] * gram[(j, i)].re;
        }
    }
    let signal_energy = energy(&synthesize_signal(model, n));
    Ok(CrbResult {
        crb,
        ncrb_db: 10.0 * (crb / signal_energy).log10(),
        signal_energy,
    })
}

/// Splits `θ = [Re d; Im d; ω]`.
fn unpack(theta: &[f64]) -> (Vec<f64>, Vec<C64>) {
    let k = theta.len() / 3;
    let amps = (0..k).map(|i| C64::new(theta[i], theta[k + i])).collect();
    (theta[2 * k..].to_vec(), amps)
}

pub fn pack(model: &LineSpectrumModel) -> Vec<f64> {
    let d = model.amplitudes();
    d.iter()
        .map(|z| z.re)
        .chain(d.iter().map(|z| z.im))
        .chain(model.frequencies().iter().copied())
        .collect()
}

fn residual(theta: &[f64], y: &[C64], phi: &RealMatrix) -> Vec<C64> {
    let (freqs, amps) = unpack(theta);
    let mu = phi.mul_complex_vec(&vandermonde(&freqs, phi.cols()).mul_vec(&amps));
    y.iter().zip(&mu).map(|(a, b)| a - b).collect()
}

/// `ln L(θ)` up to its additive constant: `-(1/σ²) ‖y - ΦA(ω)d‖²`.
pub fn log_likelihood(theta: &[f64], y: &[C64], phi: &RealMatrix, sigma2: f64) -> f64 {
    -energy(&residual(theta, y, phi)) / sigma2
}

/// `∂ ln L / ∂θ = (2/σ²) [Re(B^H r); Im(B^H r); Re((ΦGD)^H r)]`.
pub fn score(theta: &[f64], y: &[C64], phi: &RealMatrix, sigma2: f64) -> Vec<f64> {
    let r = residual(theta, y, phi);
    let (freqs, amps) = unpack(theta);
    let der = build_derivative_matrices(&freqs, &amps, phi.cols());
    let b = phi.mul_complex(&der.a);
    let c = phi.mul_complex(&der.gd());
    let br = b.adjoint_mul_vec(&r);
    let cr = c.adjoint_mul_vec(&r);
    let s = 2.0 / sigma2;
    br.iter()
        .map(|z| s * z.re)
        .chain(br.iter().map(|z| s * z.im))
        .chain(cr.iter().map(|z| s * z.re))
        .collect()
}

/// Smallest eigenvalue of `I(θ)` relative to its largest.
pub fn fisher_min_eigen_ratio(f: &FisherAssembly) -> Result<f64> {
    let e = symmetric_eigenvalues(&f.i_theta)?;
    Ok(e.last().copied().unwrap_or(0.0) / e.first().copied().unwrap_or(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{complex_normal_vec, stream};
    use crate::spectralcs::MeasurementSystem;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn derivative_at_zero_frequency() {
        let der = build_derivative_matrices(&[0.0], &[c(2.0, 1.0)], 5);
        for i in 0..5 {
            assert_eq!(der.a[(i, 0)], c(1.0, 0.0));
            assert!((der.g[(i, 0)] - c(0.0, -(i as f64))).norm() < 1e-15);
        }
        assert_eq!(der.amplitude_diag[(0, 0)], c(2.0, 1.0));
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let freqs = [0.4, 2.2, 5.9];
        let der = build_derivative_matrices(&freqs, &[c(1.0, 0.0); 3], 32);
        let h = 1e-6;
        for k in 0..3 {
            let mut up = freqs;
            let mut dn = freqs;
            up[k] += h;
            dn[k] -= h;
            let (au, ad) = (vandermonde(&up, 32), vandermonde(&dn, 32));
            for i in 0..32 {
                let fd = (au[(i, k)] - ad[(i, k)]) / (2.0 * h);
                let g = der.g[(i, k)];
                assert!((fd - g).norm() <= 1e-6 * g.norm().max(1.0));
            }
        }
    }

    #[test]
    fn single_tone_closed_form() {
        let n = 16;
        let model = LineSpectrumModel::new(vec![0.7], vec![c(1.0, 0.0)]).unwrap();
        let f = fisher_information(&model, &RealMatrix::identity(n), 0.5).unwrap();
        let s = 2.0 / 0.5;
        let sum_n: f64 = (0..n).map(|i| i as f64).sum();
        let sum_n2: f64 = (0..n).map(|i| (i * i) as f64).sum();
        assert!((f.f[(0, 0)] - c(s * n as f64, 0.0)).norm() < 1e-10);
        assert!((f.lambda[(0, 0)] - s * sum_n2).abs() < 1e-8);
        // a^H (−jn a) = −jΣn
        assert!((f.delta[(0, 0)] - c(0.0, -s * sum_n)).norm() < 1e-9);
    }

    #[test]
    fn fisher_structure_and_scaling() {
        let mut rng = stream(11, "fisher", 0, 0);
        let model = LineSpectrumModel::random(3, 0.5, true, &mut rng).unwrap();
        let sys = MeasurementSystem::gaussian(16, 32, 0.0, &mut rng).unwrap();
        let f1 = fisher_information(&model, &sys.phi, 1.0).unwrap();
        let f2 = fisher_information(&model, &sys.phi, 2.0).unwrap();
        assert!(f1.i_theta.is_symmetric(1e-8));
        assert!(f1.i_theta.scale(0.5).sub(&f2.i_theta).max_abs() <= 1e-12 * f1.i_theta.max_abs());
        let e = symmetric_eigenvalues(&f1.i_theta).unwrap();
        assert!(e.iter().all(|&v| v >= -1e-8 * f1.i_theta.max_abs()));
    }

    #[test]
    fn crb_scales_with_noise() {
        let mut rng = stream(12, "crb-scale", 0, 0);
        let model = LineSpectrumModel::random(2, 0.5, false, &mut rng).unwrap();
        let sys = MeasurementSystem::gaussian(20, 40, 0.0, &mut rng).unwrap();
        let base = crb_trace(&model, &sys.phi, 1.0).unwrap();
        assert!(base.crb > 0.0);
        for s in [0.25, 2.0, 7.0] {
            let r = crb_trace(&model, &sys.phi, s).unwrap();
            assert!((r.crb - s * base.crb).abs() <= 1e-9 * s * base.crb);
        }
    }

    #[test]
    fn near_collinear_frequencies_are_reported() {
        let model = LineSpectrumModel::new(vec![1.0, 1.0 + 1e-9], vec![c(1.0, 0.0); 2]).unwrap();
        match crb_trace(&model, &RealMatrix::identity(16), 1.0) {
            Err(Error::BoundUnavailable(msg)) => assert!(msg.contains("closest frequencies")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn score_is_zero_mean_at_truth_without_noise() {
        let mut rng = stream(13, "score0", 0, 0);
        let model = LineSpectrumModel::random(2, 0.5, true, &mut rng).unwrap();
        let sys = MeasurementSystem::gaussian(12, 24, 0.0, &mut rng).unwrap();
        let y = sys.phi.mul_complex_vec(&synthesize_signal(&model, 24));
        assert!(score(&pack(&model), &y, &sys.phi, 1.0)
            .iter()
            .all(|v| v.abs() < 1e-10));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn score_matches_finite_differences(seed in any::<u64>(), k in 1usize..=3, n in 12usize..=32) {
            let mut rng = stream(seed, "score-fd", 0, 0);
            let m = (n / 2).min(16);
            let model = LineSpectrumModel::random(k, 0.6, true, &mut rng).unwrap();
            let sys = MeasurementSystem::gaussian(m, n, 0.7, &mut rng).unwrap();
            let y = sys.measure(&synthesize_signal(&model, n), &mut rng);
            let theta = pack(&model);
            let g = score(&theta, &y, &sys.phi, 0.49);
            let h = 1e-6;
            for i in 0..theta.len() {
                let mut up = theta.clone();
                let mut dn = theta.clone();
                up[i] += h;
                dn[i] -= h;
                let fd = (log_likelihood(&up, &y, &sys.phi, 0.49) - log_likelihood(&dn, &y, &sys.phi, 0.49)) / (2.0 * h);
                let scale = g.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
                prop_assert!((fd - g[i]).abs() <= 1e-5 * scale, "param {i}: fd {fd} vs {}", g[i]);
            }
        }

        #[test]
        fn more_rows_never_raise_the_bound(seed in any::<u64>()) {
            let mut rng = stream(seed, "nested", 0, 0);
            let n = 32;
            let model = LineSpectrumModel::random(2, 0.6, true, &mut rng).unwrap();
            let full = MeasurementSystem::gaussian(24, n, 0.0, &mut rng).unwrap().phi;
            let mut prev = f64::INFINITY;
            for m in [8, 12, 16, 20, 24] {
                let r = crb_trace(&model, &full.top_rows(m), 1.0).unwrap();
                prop_assert!(r.crb <= prev * (1.0 + 1e-9));
                prev = r.crb;
            }
        }
    }

    #[test]
    fn fisher_matches_score_covariance() {
        let mut rng = stream(14, "score-cov", 0, 0);
        let (n, m, sigma2) = (24, 12, 0.8);
        let model = LineSpectrumModel::random(2, 0.6, true, &mut rng).unwrap();
        let sys = MeasurementSystem::gaussian(m, n, 0.0, &mut rng).unwrap();
        let x = synthesize_signal(&model, n);
        let clean = sys.phi.mul_complex_vec(&x);
        let theta = pack(&model);
        let p = theta.len();
        let trials = 20_000;
        let mut acc = vec![0.0; p * p];
        for t in 0..trials {
            let mut r = stream(14, "score-cov", 1, t);
            let w = complex_normal_vec(&mut r, m, sigma2);
            let y: Vec<C64> = clean.iter().zip(&w).map(|(a, b)| a + b).collect();
            let s = score(&theta, &y, &sys.phi, sigma2);
            for i in 0..p {
                for j in 0..p {
                    acc[i * p + j] += s[i] * s[j];
                }
            }
        }
        let emp = RealMatrix::from_fn(p, p, |i, j| acc[i * p + j] / trials as f64);
        let fi = fisher_information(&model, &sys.phi, sigma2)
            .unwrap()
            .i_theta;
        let rel = emp.sub(&fi).frobenius_norm() / fi.frobenius_norm();
        assert!(rel < 0.05, "relative Frobenius error {rel}");
    }
}
