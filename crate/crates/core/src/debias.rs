//! Recovering the clean AUC from an AUC computed on flipped labels.
//!
//! With class-conditional flip rates `ρ₊`, `ρ₋` and base rate `π`, the AUC
//! on corrupted labels is an affine function of the clean AUC:
//! `AUC_noisy = (1 − α − β)·AUC_clean + (α + β)/2`. The server knows `ρ`
//! from ε and estimates `π` from the flipped label counts.

use crate::error::{invalid, Result};

/// Label flip probabilities for positives (`rho_plus`) and negatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlipRates {
    pub rho_plus: f64,
    pub rho_minus: f64,
}

impl FlipRates {
    pub fn new(rho_plus: f64, rho_minus: f64) -> Result<Self> {
        let ok = |r: f64| (0.0..0.5).contains(&r);
        if !ok(rho_plus) || !ok(rho_minus) {
            return Err(invalid(format!(
                "flip rates must lie in [0, 0.5), got ({rho_plus}, {rho_minus})"
            )));
        }
        Ok(Self { rho_plus, rho_minus })
    }

    /// Randomized response with budget ε flips either class with
    /// probability `1/(1+e^ε)`.
    pub fn symmetric(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(invalid(format!(
                "debiasing needs epsilon > 0 (flip rate 0.5 is not invertible), got {epsilon}"
            )));
        }
        let r = 1.0 / (1.0 + epsilon.exp());
        Self::new(r, r)
    }

    fn margin(&self) -> Result<f64> {
        let m = 1.0 - self.rho_plus - self.rho_minus;
        if m > 0.0 {
            Ok(m)
        } else {
            Err(invalid(format!("1 - rho_plus - rho_minus = {m} is not positive")))
        }
    }
}

/// Lower and upper clamp applied to the estimated base rate.
pub const PI_CLAMP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaseRateEstimate {
    pub p_est: f64,
    pub n_est: f64,
    pub pi_est: f64,
    /// Set when `pi_est` had to be clamped into `[1e-6, 1 − 1e-6]`.
    pub clamped: bool,
}

/// Solves `P' + N' = P̄ + N̄`, `P'(1 − ρ₊) + N'ρ₋ = P̄` for the clean class
/// counts given the observed (flipped) counts `p_bar`, `n_bar`.
pub fn estimate_base_rate(p_bar: f64, n_bar: f64, rates: &FlipRates) -> Result<BaseRateEstimate> {
    let total = p_bar + n_bar;
    if !(total > 0.0) {
        return Err(invalid(format!("observed counts sum to {total}, need > 0")));
    }
    let margin = rates.margin()?;
    let p_est = (p_bar * (1.0 - rates.rho_minus) - n_bar * rates.rho_minus) / margin;
    let n_est = total - p_est;
    let raw = p_est / total;
    let pi_est = raw.clamp(PI_CLAMP, 1.0 - PI_CLAMP);
    Ok(BaseRateEstimate {
        p_est,
        n_est,
        pi_est,
        clamped: pi_est != raw,
    })
}

/// Corruption coefficients `(α, β)`:
///
/// ```text
/// α = (1−π)ρ₋ / (π(1−ρ₊) + (1−π)ρ₋)
/// β = πρ₊ / (πρ₊ + (1−π)(1−ρ₋))
/// ```
pub fn alpha_beta(pi: f64, rates: &FlipRates) -> Result<(f64, f64)> {
    if !(pi > 0.0 && pi < 1.0) {
        return Err(invalid(format!("base rate must be in (0, 1), got {pi}")));
    }
    rates.margin()?;
    let (rp, rm) = (rates.rho_plus, rates.rho_minus);
    let alpha_den = pi * (1.0 - rp) + (1.0 - pi) * rm;
    let beta_den = pi * rp + (1.0 - pi) * (1.0 - rm);
    debug_assert!(alpha_den > 0.0 && beta_den > 0.0);
    Ok(((1.0 - pi) * rm / alpha_den, pi * rp / beta_den))
}

/// `(AUC_noisy − (α+β)/2) / (1 − α − β)`. Not clamped to `[0, 1]`.
pub fn debias_auc(noisy_auc: f64, alpha: f64, beta: f64) -> Result<f64> {
    let margin = 1.0 - alpha - beta;
    if !(margin > 0.0) {
        return Err(invalid(format!("1 - alpha - beta = {margin} is not positive")));
    }
    Ok((noisy_auc - (alpha + beta) / 2.0) / margin)
}

/// Clean-AUC estimate from the server's view of a randomized-response run:
/// the noisy AUC, the flipped label totals, and ε. Uses the estimated base
/// rate unless `known_pi` is supplied.
pub fn clean_auc(
    noisy_auc: f64,
    p_bar: f64,
    n_bar: f64,
    epsilon: f64,
    known_pi: Option<f64>,
) -> Result<f64> {
    let rates = FlipRates::symmetric(epsilon)?;
    let pi = match known_pi {
        Some(pi) => pi,
        None => estimate_base_rate(p_bar, n_bar, &rates)?.pi_est,
    };
    let (alpha, beta) = alpha_beta(pi, &rates)?;
    debias_auc(noisy_auc, alpha, beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::{rr_flip, RrSpec};
    use crate::rng::SeededRng;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn base_rate_identity_at_zero_flip() {
        let rates = FlipRates::new(0.0, 0.0).unwrap();
        let est = estimate_base_rate(30.0, 70.0, &rates).unwrap();
        assert_eq!(est.p_est, 30.0);
        assert_eq!(est.n_est, 70.0);
        assert_relative_eq!(est.pi_est, 0.3);
        assert!(!est.clamped);
    }

    #[test]
    fn base_rate_symmetry() {
        for r in [0.0, 0.1, 0.3, 0.49] {
            let rates = FlipRates::new(r, r).unwrap();
            let est = estimate_base_rate(500.0, 500.0, &rates).unwrap();
            assert_relative_eq!(est.pi_est, 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn base_rate_clamps_and_flags() {
        let rates = FlipRates::symmetric(1.0).unwrap();
        let est = estimate_base_rate(5.0, 995.0, &rates).unwrap();
        assert!(est.p_est < 0.0);
        assert_eq!(est.pi_est, PI_CLAMP);
        assert!(est.clamped);
        assert_relative_eq!(est.p_est + est.n_est, 1000.0);
    }

    #[test]
    fn base_rate_errors() {
        let rates = FlipRates::new(0.1, 0.1).unwrap();
        assert!(estimate_base_rate(0.0, 0.0, &rates).is_err());
        let degenerate = FlipRates { rho_plus: 0.5, rho_minus: 0.5 };
        assert!(estimate_base_rate(10.0, 10.0, &degenerate).is_err());
        assert!(FlipRates::new(0.5, 0.1).is_err());
        assert!(FlipRates::symmetric(0.0).is_err());
    }

    #[test]
    fn base_rate_unbiased_over_flips() {
        // P=2000, N=8000, ε=1, 1000 independent flip rounds
        let spec = RrSpec::new(1.0).unwrap();
        let rates = FlipRates::symmetric(1.0).unwrap();
        let labels: Vec<u8> = (0..10_000).map(|i| u8::from(i < 2000)).collect();
        let rounds = 1000;
        let mut sum = 0.0;
        for round in 0..rounds {
            let mut rng = SeededRng::new(500 + round);
            let p_bar = labels.iter().filter(|&&y| rr_flip(y, &spec, &mut rng) == 1).count() as f64;
            sum += estimate_base_rate(p_bar, 10_000.0 - p_bar, &rates).unwrap().p_est;
        }
        let mean = sum / rounds as f64;
        // Var(P̄) = M r (1−r); P' = (P̄ − M r)/(1 − 2r)
        let r = rates.rho_plus;
        let sd_p_est = (10_000.0 * r * (1.0 - r)).sqrt() / (1.0 - 2.0 * r);
        let bound = 4.0 * sd_p_est / (rounds as f64).sqrt();
        assert!((mean - 2000.0).abs() < bound, "mean {mean}, bound {bound}");
    }

    #[test]
    fn alpha_beta_examples() {
        let zero = FlipRates::new(0.0, 0.0).unwrap();
        assert_eq!(alpha_beta(0.3, &zero).unwrap(), (0.0, 0.0));

        for r in [0.05, 0.2, 0.45] {
            let rates = FlipRates::new(r, r).unwrap();
            let (a, b) = alpha_beta(0.5, &rates).unwrap();
            assert_relative_eq!(a, r, max_relative = 1e-14);
            assert_relative_eq!(b, r, max_relative = 1e-14);
        }

        // 40-digit reference evaluation of the same closed form
        let rates = FlipRates::symmetric(1.0).unwrap();
        let (a, b) = alpha_beta(0.2, &rates).unwrap();
        assert_relative_eq!(a, 0.595_390_324_808_310_3, max_relative = 1e-13);
        assert_relative_eq!(b, 0.084_223_808_400_897_4, max_relative = 1e-13);

        assert!(alpha_beta(0.0, &rates).is_err());
        assert!(alpha_beta(1.0, &rates).is_err());
    }

    #[test]
    fn debias_examples() {
        assert_eq!(debias_auc(0.73, 0.0, 0.0).unwrap(), 0.73);
        assert_eq!(debias_auc(0.25, 0.2, 0.3).unwrap(), 0.0);
        assert!(debias_auc(0.6, 0.5, 0.5).is_err());
        // unclamped output
        assert!(debias_auc(0.99, 0.3, 0.3).unwrap() > 1.0);
    }

    #[test]
    fn clean_auc_inverts_corruption() {
        let rates = FlipRates::symmetric(2.0).unwrap();
        let (a, b) = alpha_beta(0.3, &rates).unwrap();
        let noisy = (1.0 - a - b) * 0.82 + (a + b) / 2.0;
        let clean = clean_auc(noisy, 0.0, 0.0, 2.0, Some(0.3)).unwrap();
        assert_relative_eq!(clean, 0.82, max_relative = 1e-12);
    }

    proptest! {
        #[test]
        fn identity_at_zero_corruption(x in -2.0f64..3.0) {
            prop_assert_eq!(debias_auc(x, 0.0, 0.0).unwrap(), x);
        }

        #[test]
        fn debias_strictly_increasing(x in 0.0f64..1.0, dx in 1e-6f64..0.5,
                                      a in 0.0f64..0.45, b in 0.0f64..0.45) {
            let lo = debias_auc(x, a, b).unwrap();
            let hi = debias_auc(x + dx, a, b).unwrap();
            prop_assert!(hi > lo);
        }

        #[test]
        fn alpha_plus_beta_below_one(pi in 0.001f64..0.999, rp in 0.0f64..0.4999, rm in 0.0f64..0.4999) {
            let rates = FlipRates::new(rp, rm).unwrap();
            let (a, b) = alpha_beta(pi, &rates).unwrap();
            prop_assert!((0.0..1.0).contains(&a) && (0.0..1.0).contains(&b));
            prop_assert!(a + b < 1.0);
        }
    }
}
