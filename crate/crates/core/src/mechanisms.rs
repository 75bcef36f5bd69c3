//! Noise samplers, randomized response, and budget bookkeeping.
//!
//! Passing `epsilon = f64::INFINITY` to any sampler yields a zero-scale
//! distribution. The protocols use that as their noise-free mode.

use std::fmt;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Result};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mechanism {
    Laplace,
    Gaussian,
    None,
}

/// One noisy release: mechanism, ℓ-sensitivity and per-query budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub mechanism: Mechanism,
    pub sensitivity: f64,
    pub epsilon: f64,
    pub delta: f64,
}

impl NoiseSpec {
    pub fn laplace(sensitivity: f64, epsilon: f64) -> Result<Self> {
        let spec = Self {
            mechanism: Mechanism::Laplace,
            sensitivity,
            epsilon,
            delta: 0.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn gaussian(sensitivity: f64, epsilon: f64, delta: f64) -> Result<Self> {
        let spec = Self {
            mechanism: Mechanism::Gaussian,
            sensitivity,
            epsilon,
            delta,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn none() -> Self {
        Self {
            mechanism: Mechanism::None,
            sensitivity: 0.0,
            epsilon: f64::INFINITY,
            delta: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mechanism == Mechanism::None {
            return Ok(());
        }
        if !(self.epsilon > 0.0) {
            return Err(invalid(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if !(self.sensitivity > 0.0 && self.sensitivity.is_finite()) {
            return Err(invalid(format!(
                "sensitivity must be finite and > 0, got {}",
                self.sensitivity
            )));
        }
        match self.mechanism {
            Mechanism::Laplace if self.delta != 0.0 => {
                Err(invalid("Laplace mechanism requires delta = 0"))
            }
            Mechanism::Gaussian if !(self.delta > 0.0 && self.delta < 1.0) => Err(invalid(
                format!("Gaussian mechanism requires delta in (0, 1), got {}", self.delta),
            )),
            _ => Ok(()),
        }
    }

    /// Laplace scale `b = Δ/ε`, Gaussian `σ = Δ·sqrt(2 ln(1.25/δ))/ε`, or 0.
    pub fn scale(&self) -> f64 {
        match self.mechanism {
            Mechanism::Laplace => self.sensitivity / self.epsilon,
            Mechanism::Gaussian => {
                self.sensitivity * (2.0 * (1.25 / self.delta).ln()).sqrt() / self.epsilon
            }
            Mechanism::None => 0.0,
        }
    }

    /// Theoretical variance of one draw.
    pub fn variance(&self) -> f64 {
        let s = self.scale();
        match self.mechanism {
            Mechanism::Laplace => 2.0 * s * s,
            Mechanism::Gaussian => s * s,
            Mechanism::None => 0.0,
        }
    }

    /// One draw of noise. `Mechanism::None` returns 0 without touching `rng`.
    pub fn sample(&self, rng: &mut SeededRng) -> Result<f64> {
        match self.mechanism {
            Mechanism::Laplace => laplace_sample(self, rng),
            Mechanism::Gaussian => gaussian_sample(self, rng),
            Mechanism::None => Ok(0.0),
        }
    }
}

/// Laplace(0, Δ/ε) by inverse CDF on one open-interval uniform:
/// `x = −b·sgn(u − ½)·ln(1 − 2|u − ½|)`.
pub fn laplace_sample(spec: &NoiseSpec, rng: &mut SeededRng) -> Result<f64> {
    if spec.mechanism != Mechanism::Laplace {
        return Err(invalid("laplace_sample called with a non-Laplace spec"));
    }
    spec.validate()?;
    Ok(laplace_inverse_cdf(spec.scale(), rng.uniform_open01()))
}

pub(crate) fn laplace_inverse_cdf(scale: f64, u: f64) -> f64 {
    let centred = u - 0.5;
    if scale == 0.0 {
        return 0.0;
    }
    -scale * centred.signum() * (1.0 - 2.0 * centred.abs()).ln()
}

pub fn gaussian_sample(spec: &NoiseSpec, rng: &mut SeededRng) -> Result<f64> {
    if spec.mechanism != Mechanism::Gaussian {
        return Err(invalid("gaussian_sample called with a non-Gaussian spec"));
    }
    spec.validate()?;
    let z: f64 = StandardNormal.sample(rng);
    Ok(spec.scale() * z)
}

/// Symmetric binary randomized response with budget ε.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RrSpec {
    epsilon: f64,
}

impl RrSpec {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0) {
            return Err(invalid(format!("randomized response needs epsilon >= 0, got {epsilon}")));
        }
        Ok(Self { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `e^ε / (1 + e^ε)`, evaluated as `1 / (1 + e^−ε)` so ε = ∞ gives 1.
    pub fn keep_prob(&self) -> f64 {
        1.0 / (1.0 + (-self.epsilon).exp())
    }

    /// `1 / (1 + e^ε)`.
    pub fn flip_prob(&self) -> f64 {
        1.0 / (1.0 + self.epsilon.exp())
    }
}

/// Keeps `label` with probability `keep_prob`, otherwise returns its
/// complement. Consumes exactly one uniform draw.
pub fn rr_flip(label: u8, spec: &RrSpec, rng: &mut SeededRng) -> u8 {
    if rng.uniform_open01() < spec.keep_prob() {
        label
    } else {
        1 - label
    }
}

/// Sequential-composition ledger of ε spends.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BudgetAccountant {
    ledger: Vec<(String, f64)>,
}

impl BudgetAccountant {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn spend(&mut self, label: impl Into<String>, epsilon: f64) -> Result<()> {
        if !(epsilon > 0.0) {
            return Err(invalid(format!("budget entries must be > 0, got {epsilon}")));
        }
        self.ledger.push((label.into(), epsilon));
        Ok(())
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.ledger
    }

    /// Neumaier-compensated sum of the ledger, so the total does not drift
    /// with the number or order of entries.
    pub fn total(&self) -> f64 {
        let mut sum = 0.0f64;
        let mut comp = 0.0f64;
        for &(_, x) in &self.ledger {
            let t = sum + x;
            if sum.abs() >= x.abs() {
                comp += (sum - t) + x;
            } else {
                comp += (x - t) + sum;
            }
            sum = t;
        }
        sum + comp
    }
}

impl fmt::Display for BudgetAccountant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} releases, total epsilon {}", self.ledger.len(), self.total())
    }
}

/// Ledger for the per-threshold protocol: four statistics per threshold,
/// each spending `eps_per_stat`.
pub fn threshold_ledger(grid_size: usize, eps_per_stat: f64) -> Result<BudgetAccountant> {
    if grid_size == 0 {
        return Err(invalid("grid size must be at least 1"));
    }
    let mut acct = BudgetAccountant::new();
    for j in 0..grid_size {
        for stat in ["tp", "fp", "tn", "fn"] {
            acct.spend(format!("{stat}@{j}"), eps_per_stat)?;
        }
    }
    Ok(acct)
}

/// Total budget `4·|Θ|·ε′` of the per-threshold protocol.
pub fn threshold_budget(grid_size: usize, eps_per_stat: f64) -> Result<f64> {
    Ok(threshold_ledger(grid_size, eps_per_stat)?.total())
}

/// Per-statistic budget that makes the per-threshold protocol spend `total`.
pub fn eps_per_stat(grid_size: usize, total: f64) -> f64 {
    total / (4.0 * grid_size as f64)
}

/// Splits ε into `(α·ε, (1−α)·ε)` for the rank-sum and positive-count releases.
pub fn split_budget(total_eps: f64, alpha: f64) -> Result<(f64, f64)> {
    if !(total_eps > 0.0) {
        return Err(invalid(format!("total epsilon must be > 0, got {total_eps}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("alpha must be in (0, 1), got {alpha}")));
    }
    if total_eps.is_infinite() {
        return Ok((total_eps, total_eps));
    }
    let eps_sum = alpha * total_eps;
    Ok((eps_sum, total_eps - eps_sum))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn moments(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn laplace_scale_and_variance() {
        let spec = NoiseSpec::laplace(1.0, 0.01).unwrap();
        assert_relative_eq!(spec.scale(), 100.0);
        assert_relative_eq!(spec.variance(), 20_000.0);
        let a = NoiseSpec::laplace(2.0, 1.0).unwrap();
        let b = NoiseSpec::laplace(1.0, 0.5).unwrap();
        assert_eq!(a.scale(), b.scale());
        let mut r1 = SeededRng::new(3);
        let mut r2 = SeededRng::new(3);
        for _ in 0..100 {
            assert_eq!(a.sample(&mut r1).unwrap(), b.sample(&mut r2).unwrap());
        }
    }

    #[test]
    fn laplace_empirical_moments() {
        let spec = NoiseSpec::laplace(1.0, 1.0).unwrap();
        let mut rng = SeededRng::new(2024);
        let xs: Vec<f64> = (0..1_000_000).map(|_| spec.sample(&mut rng).unwrap()).collect();
        let (mean, var) = moments(&xs);
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 2.0).abs() / 2.0 < 0.03, "var {var}");
    }

    #[test]
    fn laplace_rejects_bad_parameters() {
        assert!(NoiseSpec::laplace(1.0, 0.0).is_err());
        assert!(NoiseSpec::laplace(0.0, 1.0).is_err());
        assert!(NoiseSpec::laplace(1.0, -2.0).is_err());
        let bad = NoiseSpec { mechanism: Mechanism::Laplace, sensitivity: 1.0, epsilon: 0.0, delta: 0.0 };
        assert!(laplace_sample(&bad, &mut SeededRng::new(0)).is_err());
    }

    #[test]
    fn infinite_epsilon_is_noise_free() {
        let spec = NoiseSpec::laplace(5.0, f64::INFINITY).unwrap();
        let mut rng = SeededRng::new(1);
        assert!((0..100).all(|_| spec.sample(&mut rng).unwrap() == 0.0));
        let mut rng = SeededRng::new(1);
        assert_eq!(NoiseSpec::none().sample(&mut rng).unwrap(), 0.0);
    }

    #[test]
    fn inverse_cdf_is_symmetric() {
        assert_eq!(laplace_inverse_cdf(1.0, 0.5), 0.0);
        assert_relative_eq!(laplace_inverse_cdf(2.0, 0.25), -laplace_inverse_cdf(2.0, 0.75));
        // F(-b ln 2) = 1/4
        assert_relative_eq!(laplace_inverse_cdf(1.0, 0.25), -(2.0f64).ln());
    }

    #[test]
    fn gaussian_calibration() {
        let spec = NoiseSpec::gaussian(1.0, 1.0, 0.25).unwrap();
        assert_relative_eq!(spec.scale(), 1.794_122_577_994_101_5, max_relative = 1e-14);
        assert!(NoiseSpec::gaussian(1.0, 1.0, 0.0).is_err());
        assert!(NoiseSpec::gaussian(1.0, 1.0, 1.0).is_err());

        let mut rng = SeededRng::new(99);
        let xs: Vec<f64> = (0..1_000_000).map(|_| spec.sample(&mut rng).unwrap()).collect();
        let (_, var) = moments(&xs);
        assert!((var.sqrt() - spec.scale()).abs() / spec.scale() < 0.03);
    }

    #[test]
    fn rr_keep_probabilities() {
        assert_eq!(RrSpec::new(0.0).unwrap().keep_prob(), 0.5);
        assert!(RrSpec::new(50.0).unwrap().keep_prob() >= 1.0 - 1e-15);
        assert!(RrSpec::new(50.0).unwrap().flip_prob() > 0.0);
        assert_eq!(RrSpec::new(f64::INFINITY).unwrap().keep_prob(), 1.0);
        assert!(RrSpec::new(-1.0).is_err());
        let spec = RrSpec::new(1.0).unwrap();
        assert_relative_eq!(spec.keep_prob() + spec.flip_prob(), 1.0);
    }

    #[test]
    fn rr_empirical_keep_rate() {
        let spec = RrSpec::new(1.0).unwrap();
        let mut rng = SeededRng::new(17);
        let n = 1_000_000;
        let kept = (0..n).filter(|_| rr_flip(1, &spec, &mut rng) == 1).count();
        let rate = kept as f64 / n as f64;
        assert!((rate - 0.731_058_578_630_004_9).abs() < 0.002, "rate {rate}");
    }

    #[test]
    fn rr_large_epsilon_keeps_labels() {
        let spec = RrSpec::new(50.0).unwrap();
        let mut rng = SeededRng::new(5);
        assert!((0..10_000).all(|i| rr_flip((i % 2) as u8, &spec, &mut rng) == (i % 2) as u8));
    }

    #[test]
    fn threshold_budget_matches_table_headers() {
        assert_eq!(threshold_budget(100, 0.02).unwrap(), 8.0);
        assert_eq!(threshold_budget(100, 0.0025).unwrap(), 1.0);
        assert_eq!(threshold_budget(1, 0.25).unwrap(), 1.0);
        assert_eq!(threshold_ledger(3, 0.1).unwrap().entries().len(), 12);
        assert!(threshold_budget(0, 0.1).is_err());
        assert!(threshold_budget(10, 0.0).is_err());
    }

    #[test]
    fn split_examples() {
        assert_eq!(split_budget(1.0, 0.5).unwrap(), (0.5, 0.5));
        let (a, b) = split_budget(4.0, 0.9).unwrap();
        assert_relative_eq!(a, 3.6);
        assert_relative_eq!(b, 0.4, max_relative = 1e-12);
        assert!(split_budget(1.0, 0.0).is_err());
        assert!(split_budget(1.0, 1.0).is_err());
        assert!(split_budget(0.0, 0.5).is_err());
        assert_eq!(split_budget(f64::INFINITY, 0.3).unwrap(), (f64::INFINITY, f64::INFINITY));
    }

    proptest! {
        #[test]
        fn split_conserves_total(eps in 1e-3f64..100.0, alpha in 0.001f64..0.999) {
            let (a, b) = split_budget(eps, alpha).unwrap();
            prop_assert!((a + b - eps).abs() <= 4.0 * f64::EPSILON * eps);
        }

        #[test]
        fn threshold_budget_is_linear(size in 1usize..300, eps in 1e-4f64..1.0) {
            let one = threshold_budget(size, eps).unwrap();
            let two = threshold_budget(2 * size, eps).unwrap();
            let dbl = threshold_budget(size, 2.0 * eps).unwrap();
            prop_assert!((two - 2.0 * one).abs() <= 1e-12 * two);
            prop_assert!((dbl - 2.0 * one).abs() <= 1e-12 * dbl);
        }

        #[test]
        fn accountant_total_is_order_free(mut xs in prop::collection::vec(1e-6f64..10.0, 1..50)) {
            let mut a = BudgetAccountant::new();
            for (i, x) in xs.iter().enumerate() {
                a.spend(format!("q{i}"), *x).unwrap();
            }
            xs.reverse();
            let mut b = BudgetAccountant::new();
            for (i, x) in xs.iter().enumerate() {
                b.spend(format!("q{i}"), *x).unwrap();
            }
            prop_assert!((a.total() - b.total()).abs() <= 1e-12 * a.total());
        }
    }

    #[test]
    fn determinism() {
        let spec = NoiseSpec::laplace(1.0, 1.0).unwrap();
        let mut a = SeededRng::new(77);
        let mut b = SeededRng::new(77);
        let xs: Vec<u64> = (0..1000).map(|_| spec.sample(&mut a).unwrap().to_bits()).collect();
        let ys: Vec<u64> = (0..1000).map(|_| spec.sample(&mut b).unwrap().to_bits()).collect();
        assert_eq!(xs, ys);
    }
}
