//! Distributions the full conditionals need.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::erf::erfc;

/// Normal distribution N(mean, var) described by its moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalParams {
    pub mean: f64,
    pub var: f64,
}

impl NormalParams {
    /// Posterior for a normal mean from prior precision/mean and data sums.
    ///
    /// `prior_precision * prior_mean` and the likelihood's `Σ c r / σ²` are
    /// combined into the canonical form and inverted.
    pub fn from_canonical(precision: f64, linear: f64) -> Self {
        Self {
            mean: linear / precision,
            var: 1.0 / precision,
        }
    }

    pub fn sd(&self) -> f64 {
        self.var.sqrt()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.mean + self.sd() * z
    }
}

/// Draws from N(mean, sd²) restricted to `[lo, hi]`; `hi` may be `+∞`.
pub fn truncated_normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    debug_assert!(lo <= hi, "empty truncation interval [{lo}, {hi}]");
    if hi <= lo {
        return lo;
    }
    if sd <= 0.0 {
        return mean.clamp(lo, hi);
    }
    let a = (lo - mean) / sd;
    let b = (hi - mean) / sd;
    mean + sd * standard_truncated(rng, a, b)
}

/// Standard normal restricted to `[a, b]`, after Robert (1995).
fn standard_truncated<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    if b <= 0.0 && a.is_finite() {
        return -standard_truncated(rng, -b, -a);
    }
    if b < 0.0 {
        // a = -inf, b < 0
        return -standard_truncated(rng, -b, f64::INFINITY);
    }
    if a <= 0.0 {
        // interval straddles zero
        if b - a >= 2.5 || !b.is_finite() || !a.is_finite() {
            loop {
                let z: f64 = StandardNormal.sample(rng);
                if z >= a && z <= b {
                    return z;
                }
            }
        }
        loop {
            let z = rng.random_range(a..=b);
            if rng.random::<f64>() <= (-0.5 * z * z).exp() {
                return z;
            }
        }
    }
    // 0 < a < b
    let width = b - a;
    if width * a.max(1.0) < 1.0 {
        loop {
            let z = rng.random_range(a..=b);
            if rng.random::<f64>() <= (0.5 * (a * a - z * z)).exp() {
                return z;
            }
        }
    }
    let rate = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let u: f64 = rng.random();
        let z = a - (1.0 - u).ln() / rate;
        if z > b {
            continue;
        }
        if rng.random::<f64>() <= (-0.5 * (z - rate).powi(2)).exp() {
            return z;
        }
    }
}

/// Unnormalized log density of a half-t(df, scale) at `x > 0`.
pub fn half_t_log_density(x: f64, df: f64, scale: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let z = x / scale;
    -0.5 * (df + 1.0) * (z * z / df).ln_1p()
}

/// ln P(Z > x) for standard normal Z, accurate far into the tail.
pub fn log_upper_tail(x: f64) -> f64 {
    if x == f64::INFINITY {
        return f64::NEG_INFINITY;
    }
    if x < 30.0 {
        (0.5 * erfc(x / std::f64::consts::SQRT_2)).ln()
    } else {
        let x2 = x * x;
        -0.5 * x2 - x.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() + (1.0 - 1.0 / x2 + 3.0 / (x2 * x2)).ln()
    }
}

/// ln P(a ≤ Z ≤ b) for standard normal Z.
pub fn log_normal_mass(a: f64, b: f64) -> f64 {
    if b <= a {
        return f64::NEG_INFINITY;
    }
    if b <= 0.0 {
        return log_normal_mass(-b, -a);
    }
    if a >= 0.0 {
        let la = log_upper_tail(a);
        let lb = log_upper_tail(b);
        la + (-(lb - la).exp()).ln_1p()
    } else {
        (-(log_upper_tail(b).exp() + log_upper_tail(-a).exp())).ln_1p()
    }
}

/// Log density of N(mean, var) at x, up to the 2π constant.
pub fn normal_log_density(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * var.ln() - 0.5 * (x - mean).powi(2) / var
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{Continuous, ContinuousCDF, Normal};

    // Moments of a truncated standard normal from the closed form.
    fn truncated_moments(a: f64, b: f64) -> (f64, f64) {
        let n = Normal::new(0.0, 1.0).unwrap();
        let z = n.cdf(b) - n.cdf(a);
        let (pa, pb) = (n.pdf(a), if b.is_finite() { n.pdf(b) } else { 0.0 });
        let mean = (pa - pb) / z;
        let bpb = if b.is_finite() { b * pb } else { 0.0 };
        let var = 1.0 + (a * pa - bpb) / z - mean * mean;
        (mean, var)
    }

    #[test]
    fn truncated_normal_matches_closed_form_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(a, b) in &[
            (-1.0, 1.0),
            (0.0, f64::INFINITY),
            (2.0, f64::INFINITY),
            (6.0, 6.5),
            (0.3, 0.8),
            (-0.4, 0.6),
            (1.5, 4.0),
            (-3.0, -2.0),
            (-1.0, f64::INFINITY),
        ] {
            let n = 200_000;
            let draws: Vec<f64> = (0..n).map(|_| standard_truncated(&mut rng, a, b)).collect();
            assert!(draws.iter().all(|&z| z >= a && z <= b));
            let mean = draws.iter().sum::<f64>() / n as f64;
            let var = draws.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / n as f64;
            let (m, v) = truncated_moments(a, b);
            let se = (v / n as f64).sqrt();
            assert!(
                (mean - m).abs() < 5.0 * se + 1e-9,
                "[{a},{b}] mean {mean} vs {m}"
            );
            assert!(
                (var - v).abs() < 0.02 * v + 1e-6,
                "[{a},{b}] var {var} vs {v}"
            );
        }
    }

    #[test]
    fn truncated_normal_respects_bounds_and_degenerate_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let x = truncated_normal(&mut rng, 50.0, 2.0, 1.0, 3.0);
            assert!((1.0..=3.0).contains(&x));
        }
        assert_eq!(truncated_normal(&mut rng, 0.0, 1.0, 2.0, 2.0), 2.0);
        assert_eq!(truncated_normal(&mut rng, 5.0, 0.0, 0.0, 1.0), 1.0);
    }

    #[test]
    fn half_t_density_shape() {
        assert_eq!(half_t_log_density(-1.0, 3.0, 1.0), f64::NEG_INFINITY);
        assert!(half_t_log_density(0.5, 3.0, 1.0) > half_t_log_density(2.0, 3.0, 1.0));
        assert!(half_t_log_density(1e-9, 3.0, 1.0).abs() < 1e-12);
    }

    #[test]
    fn normal_mass_matches_cdf_differences() {
        let n = Normal::new(0.0, 1.0).unwrap();
        for &(a, b) in &[(-1.0, 2.0), (0.5, 3.0), (-4.0, -0.2), (1.0, f64::INFINITY), (f64::NEG_INFINITY, 0.3)] {
            let expect = (n.cdf(b) - n.cdf(a)).ln();
            assert!((log_normal_mass(a, b) - expect).abs() < 1e-10, "[{a}, {b}]");
        }
        // far tail: ratio of successive upper tails ~ exp(-x dx) asymptotically
        let l = log_normal_mass(40.0, f64::INFINITY);
        assert!(l.is_finite() && (l - (-800.0 - 40f64.ln() - 0.918_938_533)).abs() < 1e-3);
        assert_eq!(log_normal_mass(2.0, 2.0), f64::NEG_INFINITY);
    }
}
