//! Closed-form accuracy model of a classifier under the boundary defense.
//!
//! The model treats the true-class confidence `s` as a random variable with a
//! half-normal density peaked at 1, and the `N - 1` other confidences as iid
//! `U(0, a)` with `a = (1 - s) / (N - 1)`. A sample is classified correctly
//! when the largest wrong confidence stays below `s`, which reduces to the sum
//! `Y` of the remaining `N - 2` wrong confidences exceeding `1 - 2s`.
//!
//! `Y` is Irwin-Hall distributed. For `N <= 60` the exact CDF is used; above
//! that the alternating sum loses precision in `f64` and the normal
//! approximation takes over. Defense noise widens the normal by `(N + 2)
//! sigma^2`.
//!
//! The half-normal density is integrated over `[0, 1]` exactly as written,
//! without renormalizing the mass that falls below zero.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from;

/// Largest class count for which the exact Irwin-Hall CDF is used.
pub const EXACT_IRWIN_HALL_MAX_N: usize = 60;

/// Inputs of the accuracy model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryParams {
    pub n_classes: usize,
    pub nu: f64,
    pub theta: f64,
    pub sigma: f64,
}

impl TheoryParams {
    pub fn validate(&self) -> Result<()> {
        check_n(self.n_classes)?;
        check_nu(self.nu)?;
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::invalid("theta must lie in [0,1]"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid("sigma must be >= 0"));
        }
        Ok(())
    }
}

/// Trapezoid rule on a fixed grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub points: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { points: 2001 }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.points < 3 || self.points.is_multiple_of(2) {
            return Err(Error::invalid("quadrature needs an odd number of points >= 3"));
        }
        Ok(())
    }

    /// Integral of `f` over `[lo, hi]`; zero for an empty interval.
    pub fn integrate(&self, lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        let n = self.points - 1;
        let h = (hi - lo) / n as f64;
        let mut sum = 0.5 * (f(lo) + f(hi));
        for i in 1..n {
            sum += f(lo + h * i as f64);
        }
        sum * h
    }
}

fn check_n(n: usize) -> Result<()> {
    if n < 3 {
        return Err(Error::invalid("the accuracy model needs N >= 3"));
    }
    Ok(())
}

fn check_nu(nu: f64) -> Result<()> {
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(Error::invalid("nu must be positive"));
    }
    Ok(())
}

/// Complementary error function (Chebyshev fit, fractional error < 1.2e-7).
pub fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let poly = -z * z - 1.265_512_23
        + t * (1.000_023_68
            + t * (0.374_091_96
                + t * (0.096_784_18
                    + t * (-0.186_288_06
                        + t * (0.278_868_07
                            + t * (-1.135_203_98 + t * (1.488_515_87 + t * (-0.822_152_23 + t * 0.170_872_77))))))));
    let r = t * poly.exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}

/// Standard normal CDF.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// CDF of `N(mean, var)` at `x`. A zero variance is a point mass.
pub fn normal_cdf(x: f64, mean: f64, var: f64) -> f64 {
    if var <= 0.0 {
        return if x >= mean { 1.0 } else { 0.0 };
    }
    std_normal_cdf((x - mean) / var.sqrt())
}

fn ln_factorial(k: usize) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

/// CDF of the sum of `k` iid `U(0, a)` variables.
///
/// Up to `k = 58` this is the closed alternating sum
/// `(1/k!) sum_j (-1)^j C(k,j) (x/a - j)^k`; beyond that the sum cancels
/// catastrophically and [`irwin_hall_cdf_recursive`] is used instead.
pub fn irwin_hall_cdf(x: f64, k: usize, a: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::invalid("uniform width a must be positive"));
    }
    if k < 1 {
        return Err(Error::invalid("irwin-hall needs k >= 1"));
    }
    let t = x / a;
    if k + 2 <= EXACT_IRWIN_HALL_MAX_N {
        Ok(irwin_hall_unit(t, k))
    } else {
        Ok(irwin_hall_recurrence(t, k))
    }
}

/// Irwin-Hall CDF through `F_j(t) = (t F_{j-1}(t) + (j - t) F_{j-1}(t - 1)) / j`.
///
/// Every step is a convex combination, so it is stable for any `k`, at
/// `O(k^2)` cost per evaluation.
pub fn irwin_hall_cdf_recursive(x: f64, k: usize, a: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::invalid("uniform width a must be positive"));
    }
    if k < 1 {
        return Err(Error::invalid("irwin-hall needs k >= 1"));
    }
    Ok(irwin_hall_recurrence(x / a, k))
}

fn irwin_hall_recurrence(t: f64, k: usize) -> f64 {
    let kf = k as f64;
    if t <= 0.0 {
        return 0.0;
    }
    if t >= kf {
        return 1.0;
    }
    // g[i] holds F_j(t - i)
    let mut g: Vec<f64> = (0..k).map(|i| (t - i as f64).clamp(0.0, 1.0)).collect();
    for j in 2..=k {
        let jf = j as f64;
        for i in 0..=(k - j) {
            let y = t - i as f64;
            g[i] = if y <= 0.0 {
                0.0
            } else if y >= jf {
                1.0
            } else {
                (y * g[i] + (jf - y) * g[i + 1]) / jf
            };
        }
    }
    g[0].clamp(0.0, 1.0)
}

/// Unit-width Irwin-Hall CDF at `t`, reflected about `k/2` so the alternating
/// sum always runs over the shorter tail.
fn irwin_hall_unit(t: f64, k: usize) -> f64 {
    let kf = k as f64;
    if t <= 0.0 {
        return 0.0;
    }
    if t >= kf {
        return 1.0;
    }
    if t > 0.5 * kf {
        return (1.0 - irwin_hall_unit(kf - t, k)).clamp(0.0, 1.0);
    }
    let ln_kfact = ln_factorial(k);
    let mut ln_binom = 0.0; // ln C(k, 0)
    let mut sum = 0.0;
    let top = t.floor() as usize;
    for j in 0..=top.min(k) {
        if j > 0 {
            ln_binom += ((k - j + 1) as f64).ln() - (j as f64).ln();
        }
        let base = t - j as f64;
        if base <= 0.0 {
            continue;
        }
        let mag = (ln_binom + kf * base.ln() - ln_kfact).exp();
        if j % 2 == 0 {
            sum += mag;
        } else {
            sum -= mag;
        }
    }
    sum.clamp(0.0, 1.0)
}

fn wrong_sum_moments(s: f64, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let a = (1.0 - s) / (nf - 1.0);
    let mean = (1.0 - s) * (nf - 2.0) / (2.0 * (nf - 1.0));
    let var = a * a * (nf - 2.0) / 12.0;
    (mean, var)
}

/// `P[ACC | s]`: probability that a sample with true-class confidence `s` is
/// classified correctly.
pub fn p_acc_given_s(s: f64, n: usize, exact: bool) -> Result<f64> {
    check_n(n)?;
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::invalid("s must lie in [0,1]"));
    }
    if s >= 0.5 {
        return Ok(1.0);
    }
    let threshold = 1.0 - 2.0 * s;
    if exact {
        let a = (1.0 - s) / (n as f64 - 1.0);
        Ok(1.0 - irwin_hall_cdf(threshold, n - 2, a)?)
    } else {
        let (mean, var) = wrong_sum_moments(s, n);
        Ok(1.0 - normal_cdf(threshold, mean, var))
    }
}

/// [`p_acc_given_s`] with the exact CDF for small `N` and the normal
/// approximation otherwise.
pub fn p_acc_auto(s: f64, n: usize) -> Result<f64> {
    p_acc_given_s(s, n, n <= EXACT_IRWIN_HALL_MAX_N)
}

/// `P[ACC | s, sigma]` when every confidence carries `N(0, sigma^2)` noise.
pub fn p_acc_noisy(s: f64, sigma: f64, n: usize) -> Result<f64> {
    check_n(n)?;
    if !(sigma >= 0.0) {
        return Err(Error::invalid("sigma must be >= 0"));
    }
    let (mean, var) = wrong_sum_moments(s, n);
    let var = var + (n as f64 + 2.0) * sigma * sigma;
    Ok(1.0 - normal_cdf(1.0 - 2.0 * s, mean, var))
}

/// Half-normal density of the true-class confidence, peaked at `s = 1`.
pub fn half_normal_pdf(s: f64, nu: f64) -> Result<f64> {
    check_nu(nu)?;
    Ok(half_normal_unchecked(s, nu))
}

fn half_normal_unchecked(s: f64, nu: f64) -> f64 {
    if s > 1.0 {
        return 0.0;
    }
    let d = 1.0 - s;
    std::f64::consts::SQRT_2 / (nu * std::f64::consts::PI.sqrt()) * (-d * d / (2.0 * nu * nu)).exp()
}

/// Accuracy with neither attack nor defense.
pub fn clean_acc(nu: f64, n: usize, quad: QuadratureSpec) -> Result<f64> {
    check_nu(nu)?;
    check_n(n)?;
    quad.validate()?;
    let exact = n <= EXACT_IRWIN_HALL_MAX_N;
    let v = quad.integrate(0.0, 1.0, |s| {
        p_acc_given_s(s, n, exact).expect("validated") * half_normal_unchecked(s, nu)
    });
    Ok(v.clamp(0.0, 1.0))
}

/// Accuracy under `BD(theta, sigma)`: noisy accuracy below `theta`, clean
/// accuracy above. With `sigma = 0` the noisy branch falls back to the clean
/// one, so the result equals [`clean_acc`] up to quadrature.
pub fn defended_acc(params: TheoryParams, quad: QuadratureSpec) -> Result<f64> {
    params.validate()?;
    quad.validate()?;
    let TheoryParams {
        n_classes: n,
        nu,
        theta,
        sigma,
    } = params;
    let exact = n <= EXACT_IRWIN_HALL_MAX_N;
    let clean = |s: f64| p_acc_given_s(s, n, exact).expect("validated") * half_normal_unchecked(s, nu);
    let noisy = |s: f64| {
        if sigma > 0.0 {
            p_acc_noisy(s, sigma, n).expect("validated") * half_normal_unchecked(s, nu)
        } else {
            clean(s)
        }
    };
    let v = quad.integrate(0.0, theta, noisy) + quad.integrate(theta, 1.0, clean);
    Ok(v.clamp(0.0, 1.0))
}

const NU_MIN: f64 = 1e-3;
const NU_MAX: f64 = 10.0;

/// Finds `nu` such that `clean_acc(nu, n)` hits `target`.
///
/// `clean_acc` decreases monotonically in `nu`, so bisection on
/// `[1e-3, 10]` suffices.
pub fn calibrate_nu(target: f64, n: usize) -> Result<f64> {
    check_n(n)?;
    let quad = QuadratureSpec::default();
    let f = |nu: f64| clean_acc(nu, n, quad).expect("validated");
    let (hi_acc, lo_acc) = (f(NU_MIN), f(NU_MAX));
    if !(target > 0.0 && target < 1.0) || target > hi_acc || target < lo_acc {
        return Err(Error::OutOfRange {
            target,
            lo: lo_acc,
            hi: hi_acc,
        });
    }
    let (mut lo, mut hi) = (NU_MIN, NU_MAX);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Monte-Carlo estimate of the defended accuracy under the model's own
/// generative assumptions. Returns `(estimate, standard_error)`.
///
/// Each trial draws `s = 1 - nu |Z|` (the untruncated half-normal). Trials
/// with `s < 0` score zero, matching the closed form's integration over
/// `[0, 1]` only. Otherwise `Y` is a sum of `N - 2` uniforms on `[0, a]`,
/// perturbed by `N(0, (N + 2) sigma^2)` when `s <= theta`, and the trial
/// scores one when `Y > 1 - 2s`.
pub fn mc_defended_acc(params: TheoryParams, trials: u64, seed: u64) -> Result<(f64, f64)> {
    params.validate()?;
    if trials < 1 {
        return Err(Error::invalid("trials must be >= 1"));
    }
    let TheoryParams {
        n_classes: n,
        nu,
        theta,
        sigma,
    } = params;
    let k = n - 2;
    let noise_sd = ((n as f64 + 2.0) * sigma * sigma).sqrt();
    let mut rng = rng_from(&[seed, 0x4D43]);
    let mut hits = 0u64;
    for _ in 0..trials {
        let z: f64 = rng.sample(StandardNormal);
        let s = 1.0 - nu * z.abs();
        if s < 0.0 {
            continue;
        }
        let noisy = s <= theta && sigma > 0.0;
        let threshold = 1.0 - 2.0 * s;
        if !noisy && threshold < 0.0 {
            // Y >= 0 > 1 - 2s: correct whatever Y turns out to be
            hits += 1;
            continue;
        }
        let a = (1.0 - s) / (n as f64 - 1.0);
        let mut y = a * sum_uniforms(&mut rng, k);
        if noisy {
            let v: f64 = rng.sample(StandardNormal);
            y += noise_sd * v;
        }
        if y > threshold {
            hits += 1;
        }
    }
    let p = hits as f64 / trials as f64;
    let se = (p * (1.0 - p) / trials as f64).sqrt();
    Ok((p, se))
}

/// Sum of `k` iid `U(0, 1)` draws, two 32-bit uniforms per 64-bit word.
fn sum_uniforms(rng: &mut crate::rng::Rng, k: usize) -> f64 {
    let mut acc: u64 = 0;
    for _ in 0..k / 2 {
        let w: u64 = rng.random();
        acc += (w >> 32) + (w & 0xFFFF_FFFF);
    }
    if k % 2 == 1 {
        let w: u64 = rng.random();
        acc += w >> 32;
    }
    (acc as f64 + 0.5 * k as f64) / 4_294_967_296.0
}

/// `(s, P[ACC|s])` pairs on an even grid over `[0, 1]`.
pub fn accuracy_curve(n: usize, points: usize) -> Result<Vec<(f64, f64)>> {
    check_n(n)?;
    let points = points.max(2);
    (0..points)
        .map(|i| {
            let s = i as f64 / (points - 1) as f64;
            Ok((s, p_acc_auto(s, n)?))
        })
        .collect()
}

/// `(theta, sigma, acc)` rows of the defended accuracy surface.
pub fn defended_surface(n: usize, nu: f64, thetas: &[f64], sigmas: &[f64]) -> Result<Vec<(f64, f64, f64)>> {
    let mut rows = Vec::with_capacity(thetas.len() * sigmas.len());
    for &sigma in sigmas {
        for &theta in thetas {
            let acc = defended_acc(
                TheoryParams {
                    n_classes: n,
                    nu,
                    theta,
                    sigma,
                },
                QuadratureSpec::default(),
            )?;
            rows.push((theta, sigma, acc));
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erfc_reference_values() {
        // erfc(0.5) = 0.4795001221869535, erfc(1) = 0.15729920705028513
        assert!((erfc(0.5) - 0.479_500_122_186_953_5).abs() < 1e-7);
        assert!((erfc(1.0) - 0.157_299_207_050_285_13).abs() < 1e-7);
        assert!((erfc(-1.0) - 1.842_700_792_949_715).abs() < 1e-7);
        assert!((std_normal_cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-7);
    }

    #[test]
    fn irwin_hall_support_edges() {
        assert_eq!(irwin_hall_cdf(0.0, 5, 0.3).unwrap(), 0.0);
        assert_eq!(irwin_hall_cdf(-1.0, 5, 0.3).unwrap(), 0.0);
        assert_eq!(irwin_hall_cdf(1.5, 5, 0.3).unwrap(), 1.0);
        assert!(irwin_hall_cdf(0.1, 3, 0.0).is_err());
    }

    #[test]
    fn irwin_hall_triangular_midpoint() {
        assert!((irwin_hall_cdf(1.0, 2, 1.0).unwrap() - 0.5).abs() < 1e-15);
        // triangular: F(t) = t^2/2 on [0,1]
        assert!((irwin_hall_cdf(0.6, 2, 1.0).unwrap() - 0.18).abs() < 1e-15);
    }

    #[test]
    fn irwin_hall_k1_is_uniform() {
        for i in 0..=20 {
            let x = i as f64 * 0.05;
            assert!((irwin_hall_cdf(x, 1, 1.0).unwrap() - x).abs() < 1e-15);
        }
    }

    #[test]
    fn p_acc_is_one_above_half() {
        for n in [3, 10, 1000] {
            for s in [0.5, 0.6, 0.99, 1.0] {
                assert_eq!(p_acc_given_s(s, n, false).unwrap(), 1.0);
                assert_eq!(p_acc_given_s(s, n, true).unwrap(), 1.0);
            }
        }
        assert!(p_acc_given_s(0.3, 2, false).is_err());
        assert!(p_acc_given_s(1.2, 10, false).is_err());
    }

    #[test]
    fn half_normal_peak_and_support() {
        let peak = half_normal_pdf(1.0, 0.41).unwrap();
        let want = std::f64::consts::SQRT_2 / (0.41 * std::f64::consts::PI.sqrt());
        assert!((peak - want).abs() < 1e-12);
        assert!((peak - 1.9462).abs() < 1e-3);
        assert_eq!(half_normal_pdf(1.5, 0.41).unwrap(), 0.0);
        assert!(half_normal_pdf(0.5, 0.0).is_err());
        for d in [0.0, 0.1, 0.7, 2.0] {
            let e = (-d * d / (2.0 * 0.41 * 0.41_f64)).exp();
            assert!((half_normal_pdf(1.0 - d, 0.41).unwrap() - want * e).abs() < 1e-12);
        }
    }

    #[test]
    fn noisy_reduces_to_approximation_without_noise() {
        for s in [0.1, 0.3, 0.45, 0.8] {
            let a = p_acc_noisy(s, 0.0, 50).unwrap();
            let b = p_acc_given_s(s, 50, false).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn huge_noise_is_a_coin_flip() {
        let p = p_acc_noisy(0.3, 100.0, 1000).unwrap();
        assert!((0.45..=0.55).contains(&p), "{p}");
    }

    #[test]
    fn noisy_value_from_independent_cdf() {
        // s=0.9, sigma=0.1, N=10: mean = 0.1*8/18, var = (0.1/9)^2*8/12 + 12*0.01
        let mean: f64 = 0.1 * 8.0 / 18.0;
        let var: f64 = (0.1f64 / 9.0).powi(2) * 8.0 / 12.0 + 0.12;
        let z = (1.0 - 1.8 - mean) / var.sqrt();
        let want = 1.0 - 0.5 * erfc(-z / std::f64::consts::SQRT_2);
        assert!((p_acc_noisy(0.9, 0.1, 10).unwrap() - want).abs() < 1e-15);
        assert!(want > 0.98 && want < 0.995);
    }

    #[test]
    fn quadrature_checks() {
        assert!(QuadratureSpec { points: 4 }.validate().is_err());
        assert!(QuadratureSpec { points: 1 }.validate().is_err());
        let q = QuadratureSpec::default();
        assert!((q.integrate(0.0, 1.0, |x| x * x) - 1.0 / 3.0).abs() < 1e-6);
        assert_eq!(q.integrate(0.5, 0.5, |_| 1.0), 0.0);
    }

    #[test]
    fn tiny_nu_gives_perfect_accuracy() {
        let v = clean_acc(1e-3, 1000, QuadratureSpec::default()).unwrap();
        assert!(v >= 0.999, "{v}");
    }

    #[test]
    fn defended_equals_clean_at_theta_zero() {
        let q = QuadratureSpec::default();
        for n in [10, 1000] {
            let c = clean_acc(0.4, n, q).unwrap();
            let d = defended_acc(
                TheoryParams {
                    n_classes: n,
                    nu: 0.4,
                    theta: 0.0,
                    sigma: 0.3,
                },
                q,
            )
            .unwrap();
            assert_eq!(c, d);
        }
    }

    #[test]
    fn mc_single_trial_is_binary() {
        let p = TheoryParams {
            n_classes: 10,
            nu: 0.4,
            theta: 0.5,
            sigma: 0.1,
        };
        for seed in 0..20 {
            let (e, _) = mc_defended_acc(p, 1, seed).unwrap();
            assert!(e == 0.0 || e == 1.0);
        }
        assert!(mc_defended_acc(p, 0, 0).is_err());
    }

    #[test]
    fn calibrate_rejects_unreachable_targets() {
        assert!(matches!(calibrate_nu(1.0, 10), Err(Error::OutOfRange { .. })));
        assert!(matches!(calibrate_nu(0.0001, 10), Err(Error::OutOfRange { .. })));
    }
}
