//! Closed-form variance predictors, the Monte Carlo harness that checks
//! them, and label-leakage analyses (top-k attack, score perturbation).

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::federation::{run_protocol, PartitionMode, Protocol, ProtocolConfig, SensitivityMode};
use crate::mechanisms::NoiseSpec;
use crate::metrics::{Dataset, Sample};
use crate::rng::{SeededRng, BOOTSTRAP_STREAM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FormulaId {
    LocalLaplace,
    GlobalLaplace,
    RrNoisy,
}

impl fmt::Display for FormulaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FormulaId::LocalLaplace => "local-laplace",
            FormulaId::GlobalLaplace => "global-laplace",
            FormulaId::RrNoisy => "rr-noisy",
        })
    }
}

impl FromStr for FormulaId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "local-laplace" => Ok(FormulaId::LocalLaplace),
            "global-laplace" => Ok(FormulaId::GlobalLaplace),
            "rr-noisy" | "rr" => Ok(FormulaId::RrNoisy),
            other => Err(invalid(format!("unknown formula `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariancePrediction {
    pub formula: FormulaId,
    pub variance: f64,
    pub std: f64,
}

impl VariancePrediction {
    fn new(formula: FormulaId, variance: f64) -> Self {
        Self {
            formula,
            variance,
            std: variance.sqrt(),
        }
    }
}

fn check_classes(p: usize, n: usize) -> Result<()> {
    if p == 0 || n == 0 {
        return Err(invalid(format!("need P >= 1 and N >= 1, got P={p}, N={n}")));
    }
    Ok(())
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0) {
        return Err(invalid(format!("epsilon must be > 0, got {eps}")));
    }
    Ok(())
}

/// One sample per client, exact class totals, client `i` using its own rank
/// `i` as sensitivity: `K(K−1)(2K−1) / (3 P² N² ε²)`.
pub fn var_local_laplace(k: usize, p: usize, n: usize, eps: f64) -> Result<VariancePrediction> {
    if k < 2 {
        return Err(invalid(format!("need K >= 2, got {k}")));
    }
    check_classes(p, n)?;
    check_eps(eps)?;
    let (k, p, n) = (k as f64, p as f64, n as f64);
    let variance = k * (k - 1.0) * (2.0 * k - 1.0) / (3.0 * p * p * n * n * eps * eps);
    Ok(VariancePrediction::new(FormulaId::LocalLaplace, variance))
}

/// Every client adds `Lap((M−1)/ε)` to its rank sum, exact class totals:
/// `2K(M−1)² / (P² N² ε²)`.
pub fn var_global_laplace(k: usize, m: usize, p: usize, n: usize, eps: f64) -> Result<VariancePrediction> {
    if k == 0 {
        return Err(invalid("need K >= 1"));
    }
    if m != p + n {
        return Err(invalid(format!("M={m} must equal P+N={}", p + n)));
    }
    check_classes(p, n)?;
    check_eps(eps)?;
    let (k, m, p, n) = (k as f64, m as f64, p as f64, n as f64);
    let variance = 2.0 * k * (m - 1.0).powi(2) / (p * p * n * n * eps * eps);
    Ok(VariancePrediction::new(FormulaId::GlobalLaplace, variance))
}

/// Variance of the AUC computed on randomized-response labels (before
/// debiasing) with exact class totals: `r(1−r)·M(M−1)(2M−1)/6 / (P² N²)`
/// where `r = 1/(1+e^ε)`.
pub fn var_rr_noisy(m: usize, p: usize, n: usize, eps: f64) -> Result<VariancePrediction> {
    if m != p + n || m < 2 {
        return Err(invalid(format!("need M = P+N >= 2, got M={m}, P={p}, N={n}")));
    }
    check_classes(p, n)?;
    if !(eps >= 0.0) {
        return Err(invalid(format!("epsilon must be >= 0, got {eps}")));
    }
    let r = 1.0 / (1.0 + eps.exp());
    let (m, p, n) = (m as f64, p as f64, n as f64);
    let variance = r * (1.0 - r) * m * (m - 1.0) * (2.0 * m - 1.0) / 6.0 / (p * p * n * n);
    Ok(VariancePrediction::new(FormulaId::RrNoisy, variance))
}

/// Outcome of repeated seeded trials. `mean` and `std` (n−1 denominator)
/// cover the successful trials only; `std` is 0 with fewer than two.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub trials: usize,
    pub estimates: Vec<f64>,
    pub failures: usize,
    pub mean: f64,
    pub std: f64,
    pub last_error: Option<String>,
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs `trials` independent trials of `config`, trial `i` seeded with
/// `base_seed + i`. Trials run in parallel; results keep trial order.
pub fn monte_carlo(
    config: &ProtocolConfig,
    dataset: &Dataset,
    trials: usize,
    base_seed: u64,
) -> Result<ExperimentResult> {
    if trials == 0 {
        return Err(invalid("trials must be at least 1"));
    }
    config.validate()?;
    let outcomes: Vec<Result<f64>> = (0..trials as u64)
        .into_par_iter()
        .map(|i| run_protocol(config, dataset, &mut SeededRng::for_trial(base_seed, i)))
        .collect();

    let mut estimates = Vec::with_capacity(trials);
    let mut last_error = None;
    for outcome in outcomes {
        match outcome {
            Ok(auc) => estimates.push(auc),
            Err(e) => last_error = Some(e.to_string()),
        }
    }
    if estimates.is_empty() {
        return Err(Error::AllTrialsFailed {
            trials,
            last: last_error.unwrap_or_default(),
        });
    }
    let (mean, std) = mean_std(&estimates);
    Ok(ExperimentResult {
        trials,
        failures: trials - estimates.len(),
        estimates,
        mean,
        std,
        last_error,
    })
}

/// Percentile bootstrap interval for the sample standard deviation.
pub fn bootstrap_std_interval(xs: &[f64], resamples: usize, level: f64, seed: u64) -> Result<(f64, f64)> {
    if xs.len() < 2 || resamples == 0 {
        return Err(invalid("bootstrap needs at least two values and one resample"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(invalid(format!("confidence level must be in (0, 1), got {level}")));
    }
    let mut rng = SeededRng::with_stream(seed, BOOTSTRAP_STREAM);
    let mut buf = vec![0.0; xs.len()];
    let mut stds: Vec<f64> = (0..resamples)
        .map(|_| {
            for b in buf.iter_mut() {
                let idx = (rng.uniform_open01() * xs.len() as f64) as usize;
                *b = xs[idx.min(xs.len() - 1)];
            }
            mean_std(&buf).1
        })
        .collect();
    stds.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let at = |q: f64| stds[((q * (resamples - 1) as f64).round() as usize).min(resamples - 1)];
    Ok((at(tail), at(1.0 - tail)))
}

/// Parameters of one closed-form prediction, with the regime its Monte
/// Carlo check simulates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PredictionParams {
    /// One sample per client, so `k == p + n`.
    LocalLaplace { k: usize, p: usize, n: usize, eps: f64 },
    GlobalLaplace { k: usize, m: usize, p: usize, n: usize, eps: f64 },
    RrNoisy { m: usize, p: usize, n: usize, eps: f64 },
}

impl PredictionParams {
    pub fn formula(&self) -> FormulaId {
        match self {
            PredictionParams::LocalLaplace { .. } => FormulaId::LocalLaplace,
            PredictionParams::GlobalLaplace { .. } => FormulaId::GlobalLaplace,
            PredictionParams::RrNoisy { .. } => FormulaId::RrNoisy,
        }
    }

    pub fn predict(&self) -> Result<VariancePrediction> {
        match *self {
            PredictionParams::LocalLaplace { k, p, n, eps } => var_local_laplace(k, p, n, eps),
            PredictionParams::GlobalLaplace { k, m, p, n, eps } => var_global_laplace(k, m, p, n, eps),
            PredictionParams::RrNoisy { m, p, n, eps } => var_rr_noisy(m, p, n, eps),
        }
    }

    /// `(K, M, P, N, ε)`; `K` is reported as 1 for the RR formula, which
    /// does not depend on the client count.
    pub fn values(&self) -> (usize, usize, usize, usize, f64) {
        match *self {
            PredictionParams::LocalLaplace { k, p, n, eps } => (k, p + n, p, n, eps),
            PredictionParams::GlobalLaplace { k, m, p, n, eps } => (k, m, p, n, eps),
            PredictionParams::RrNoisy { m, p, n, eps } => (1, m, p, n, eps),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionCheck {
    pub params: PredictionParams,
    pub predicted_std: f64,
    pub empirical_std: f64,
    pub relative_error: f64,
    pub trials: usize,
    pub failures: usize,
}

/// `p + n` samples with distinct scores `(i + ½)/M` and the positives
/// spread evenly over the ranks.
pub fn spread_dataset(p: usize, n: usize) -> Result<Dataset> {
    let m = p + n;
    let samples = (0..m)
        .map(|i| {
            let label = u8::from((i + 1) * p / m > i * p / m);
            Sample { score: (i as f64 + 0.5) / m as f64, label }
        })
        .collect();
    Dataset::new(samples)
}

/// Simulates the exact regime a predictor assumes and compares the
/// empirical standard deviation with the closed form.
///
/// For `LocalLaplace` the client holding rank 0 has its sensitivity clamped
/// to 1, which adds `2/ε²` to the rank-sum variance outside the formula's
/// `i = 1..K−1` range; that term is subtracted before comparing.
pub fn check_prediction(params: PredictionParams, trials: usize, base_seed: u64) -> Result<PredictionCheck> {
    let predicted = params.predict()?;
    let (k, m, p, n, eps) = params.values();
    if m != p + n {
        return Err(invalid(format!("M={m} must equal P+N={}", p + n)));
    }
    let dataset = spread_dataset(p, n)?;
    let (protocol, clients) = match params {
        PredictionParams::LocalLaplace { .. } => {
            if k != m {
                return Err(invalid(format!("one sample per client needs K = P+N, got K={k}, M={m}")));
            }
            (
                Protocol::RankLaplace { eps_total: eps, alpha: 0.5, sensitivity: SensitivityMode::LocalMaxRank },
                k,
            )
        }
        PredictionParams::GlobalLaplace { .. } => (
            Protocol::RankLaplace { eps_total: eps, alpha: 0.5, sensitivity: SensitivityMode::GlobalMminus1 },
            k,
        ),
        PredictionParams::RrNoisy { .. } => (Protocol::RankRr { epsilon: eps, debias: false }, 1),
    };
    let config = ProtocolConfig {
        protocol,
        clients,
        partition: PartitionMode::Iid,
        use_exact_pn: true,
    };
    let result = monte_carlo(&config, &dataset, trials, base_seed)?;
    let mut variance = result.std * result.std;
    if params.formula() == FormulaId::LocalLaplace {
        let clamp_var = NoiseSpec::laplace(1.0, eps)?.variance();
        variance -= clamp_var / ((p * p) as f64 * (n * n) as f64);
    }
    let empirical_std = variance.max(0.0).sqrt();
    Ok(PredictionCheck {
        params,
        predicted_std: predicted.std,
        empirical_std,
        relative_error: (predicted.std - empirical_std).abs() / predicted.std,
        trials,
        failures: result.failures,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackResult {
    pub k: usize,
    pub true_positives_in_topk: usize,
    pub precision: f64,
    /// 0 when the dataset has no positives.
    pub recall: f64,
}

/// Guesses the `k` highest-scored samples as positives. Ties at the cut
/// keep input order.
pub fn topk_attack(samples: &[Sample], k: usize) -> Result<AttackResult> {
    if k == 0 || k > samples.len() {
        return Err(invalid(format!("need 1 <= k <= M, got k={k}, M={}", samples.len())));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    // stable sort: equal scores stay in input order
    order.sort_by(|&a, &b| samples[b].score.total_cmp(&samples[a].score));
    let hits = order[..k].iter().filter(|&&i| samples[i].is_positive()).count();
    let positives = samples.iter().filter(|s| s.is_positive()).count();
    Ok(AttackResult {
        k,
        true_positives_in_topk: hits,
        precision: hits as f64 / k as f64,
        recall: if positives == 0 { 0.0 } else { hits as f64 / positives as f64 },
    })
}

/// Adds independent `Lap(1/ε)` noise to every score (sensitivity 1 for a
/// sigmoid output). Perturbed scores are left unclamped.
pub fn perturb_scores(dataset: &Dataset, eps: f64, rng: &mut SeededRng) -> Result<Dataset> {
    let noise = NoiseSpec::laplace(1.0, eps)?;
    let samples = dataset
        .iter()
        .map(|s| Ok(Sample { score: s.score + noise.sample(rng)?, label: s.label }))
        .collect::<Result<Vec<_>>>()?;
    Dataset::with_unbounded_scores(samples)
}

/// Per-class score histograms over `[0, 1]`, each normalized to sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreDensity {
    pub bins: usize,
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
    /// Set when a class has no samples; its histogram is all zeros.
    pub positive_empty: bool,
    pub negative_empty: bool,
}

impl ScoreDensity {
    pub fn bin_edges(&self, bin: usize) -> (f64, f64) {
        (bin as f64 / self.bins as f64, (bin + 1) as f64 / self.bins as f64)
    }
}

pub fn score_density(samples: &[Sample], bins: usize) -> Result<ScoreDensity> {
    if bins == 0 {
        return Err(invalid("bins must be at least 1"));
    }
    let mut pos = vec![0.0; bins];
    let mut neg = vec![0.0; bins];
    for s in samples {
        // 1.0 falls into the last bin; out-of-range scores go to the ends
        let bin = ((s.score * bins as f64).floor().max(0.0) as usize).min(bins - 1);
        if s.is_positive() {
            pos[bin] += 1.0;
        } else {
            neg[bin] += 1.0;
        }
    }
    let normalize = |h: &mut Vec<f64>| {
        let total: f64 = h.iter().sum();
        if total > 0.0 {
            h.iter_mut().for_each(|x| *x /= total);
        }
        total == 0.0
    };
    let positive_empty = normalize(&mut pos);
    let negative_empty = normalize(&mut neg);
    Ok(ScoreDensity {
        bins,
        positive: pos,
        negative: neg,
        positive_empty,
        negative_empty,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_synthetic, ScoreFamily, SyntheticSpec};
    use crate::federation::ThresholdMechanism;
    use crate::metrics::{auc_rank, ThresholdGrid};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn local_laplace_examples() {
        assert_relative_eq!(var_local_laplace(2, 1, 1, 1.0).unwrap().variance, 2.0);
        assert_relative_eq!(var_local_laplace(2, 1, 1, 1.0).unwrap().std, 2f64.sqrt());
        assert_relative_eq!(var_local_laplace(10, 5, 5, 1.0).unwrap().variance, 0.912, max_relative = 1e-14);
        assert!(var_local_laplace(1, 1, 1, 1.0).is_err());
        assert!(var_local_laplace(4, 0, 4, 1.0).is_err());
    }

    #[test]
    fn local_laplace_matches_index_sum() {
        // Σ_{i=1}^{K−1} 2 i² / ε² over P²N²
        for k in [2usize, 7, 100] {
            let direct: f64 = (1..k).map(|i| 2.0 * (i * i) as f64).sum::<f64>() / (9.0 * 16.0 * 0.25);
            let closed = var_local_laplace(k, 3, 4, 0.5).unwrap().variance;
            assert_relative_eq!(closed, direct, max_relative = 1e-12);
        }
    }

    #[test]
    fn global_laplace_examples() {
        assert_relative_eq!(var_global_laplace(1, 2, 1, 1, 1.0).unwrap().variance, 2.0);
        assert_relative_eq!(
            var_global_laplace(10, 100, 50, 50, 2.0).unwrap().variance,
            0.007_840_8,
            max_relative = 1e-12
        );
        assert!(var_global_laplace(10, 99, 50, 50, 1.0).is_err());
    }

    #[test]
    fn rr_noisy_examples() {
        let v0 = var_rr_noisy(4, 2, 2, 0.0).unwrap().variance;
        assert_relative_eq!(v0, 0.25 * 14.0 / 16.0);
        assert_relative_eq!(var_rr_noisy(4, 2, 2, 1.0).unwrap().variance, 0.172_035_441_586_296_6, max_relative = 1e-13);
        for eps in [0.1, 1.0, 5.0] {
            assert!(var_rr_noisy(100, 30, 70, eps).unwrap().variance < var_rr_noisy(100, 30, 70, 0.0).unwrap().variance);
        }
    }

    proptest! {
        #[test]
        fn laplace_predictors_scale_inverse_square(k in 2usize..500, p in 1usize..300, n in 1usize..300, eps in 0.01f64..10.0) {
            let a = var_local_laplace(k, p, n, eps).unwrap().variance;
            let b = var_local_laplace(k, p, n, 2.0 * eps).unwrap().variance;
            prop_assert!((a / b - 4.0).abs() < 1e-12);
            let a = var_global_laplace(k, p + n, p, n, eps).unwrap().variance;
            let b = var_global_laplace(k, p + n, p, n, 2.0 * eps).unwrap().variance;
            prop_assert!((a / b - 4.0).abs() < 1e-12);
        }

        #[test]
        fn prediction_std_squares_to_variance(k in 2usize..100, eps in 0.1f64..4.0) {
            let v = var_local_laplace(k, 3, 5, eps).unwrap();
            prop_assert!((v.std * v.std - v.variance).abs() <= 1e-12 * v.variance);
        }
    }

    fn small_dataset() -> Dataset {
        let spec = SyntheticSpec { m: 2000, base_rate: 0.3, separation: 1.5, family: ScoreFamily::LogitGaussian };
        gen_synthetic(&spec, &mut SeededRng::new(1)).unwrap()
    }

    #[test]
    fn noise_free_monte_carlo_has_zero_spread() {
        let d = small_dataset();
        let cfg = ProtocolConfig {
            protocol: Protocol::RankLaplace { eps_total: f64::INFINITY, alpha: 0.5, sensitivity: SensitivityMode::LocalMaxRank },
            clients: 5,
            partition: PartitionMode::Iid,
            use_exact_pn: false,
        };
        let r = monte_carlo(&cfg, &d, 10, 3).unwrap();
        assert!(r.std < 1e-12, "{}", r.std);
        assert_eq!(r.estimates.len() + r.failures, r.trials);
        assert_relative_eq!(r.mean, auc_rank(&d).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn monte_carlo_is_deterministic_and_seed_consistent() {
        let d = small_dataset();
        let cfg = ProtocolConfig {
            protocol: Protocol::Threshold {
                grid: ThresholdGrid::uniform(50).unwrap(),
                eps_total: 4.0,
                mechanism: ThresholdMechanism::Laplace,
            },
            clients: 10,
            partition: PartitionMode::Iid,
            use_exact_pn: false,
        };
        let a = monte_carlo(&cfg, &d, 100, 1).unwrap();
        let b = monte_carlo(&cfg, &d, 100, 1).unwrap();
        assert_eq!(a, b);
        let c = monte_carlo(&cfg, &d, 100, 10_000).unwrap();
        let se = (a.std.powi(2) / 100.0 + c.std.powi(2) / 100.0).sqrt();
        assert!((a.mean - c.mean).abs() < 4.0 * se);
    }

    #[test]
    fn monte_carlo_reports_total_failure() {
        // a single client with P=1: the noisy count leaves (0, 3) now and then
        let d = Dataset::from_parts(&[0.2, 0.4, 0.9], &[0, 0, 1]).unwrap();
        let cfg = |eps_total| ProtocolConfig {
            protocol: Protocol::RankLaplace { eps_total, alpha: 0.5, sensitivity: SensitivityMode::LocalMaxRank },
            clients: 1,
            partition: PartitionMode::Iid,
            use_exact_pn: false,
        };
        let r = monte_carlo(&cfg(4.0), &d, 200, 0).unwrap();
        assert!(r.failures > 0 && r.failures < 100, "{}", r.failures);
        assert_eq!(r.estimates.len() + r.failures, 200);
        assert!(r.last_error.is_some());
        assert!(monte_carlo(&cfg(4.0), &d, 0, 0).is_err());
        assert!(matches!(
            monte_carlo(&cfg(1e-4), &d, 20, 0),
            Err(Error::AllTrialsFailed { trials: 20, .. })
        ));
    }

    #[test]
    fn bootstrap_interval_brackets_std() {
        let mut rng = SeededRng::new(4);
        let noise = NoiseSpec::laplace(1.0, 1.0).unwrap();
        let xs: Vec<f64> = (0..200).map(|_| noise.sample(&mut rng).unwrap()).collect();
        let (_, sd) = mean_std(&xs);
        let (lo, hi) = bootstrap_std_interval(&xs, 1000, 0.95, 9).unwrap();
        assert!(lo < sd && sd < hi);
        assert!(bootstrap_std_interval(&xs[..1], 10, 0.95, 0).is_err());
    }

    #[test]
    fn spread_dataset_counts() {
        let d = spread_dataset(200, 800).unwrap();
        assert_eq!((d.positives(), d.negatives()), (200, 800));
        let d = spread_dataset(50, 50).unwrap();
        assert_eq!(d.positives(), 50);
    }

    #[test]
    fn small_prediction_check() {
        let check = check_prediction(PredictionParams::GlobalLaplace { k: 5, m: 60, p: 20, n: 40, eps: 1.0 }, 4000, 1).unwrap();
        assert!(check.relative_error < 0.1, "{check:?}");
        assert!(check_prediction(PredictionParams::LocalLaplace { k: 10, p: 5, n: 6, eps: 1.0 }, 10, 1).is_err());
    }

    #[test]
    fn topk_examples() {
        let d = Dataset::from_parts(&[0.9, 0.8, 0.7, 0.2, 0.1], &[1, 1, 1, 0, 0]).unwrap();
        let r = topk_attack(&d, 3).unwrap();
        assert_eq!((r.precision, r.recall), (1.0, 1.0));
        let r = topk_attack(&d, 5).unwrap();
        assert_eq!((r.precision, r.recall), (0.6, 1.0));
        assert!(topk_attack(&d, 6).is_err());
        assert!(topk_attack(&d, 0).is_err());

        // tie at the cut resolved by input order
        let d = Dataset::from_parts(&[0.5, 0.5, 0.5], &[0, 1, 1]).unwrap();
        assert_eq!(topk_attack(&d, 1).unwrap().true_positives_in_topk, 0);
    }

    proptest! {
        #[test]
        fn topk_counts_are_consistent(raw in prop::collection::vec((0.0f64..=1.0, 0u8..=1), 1..80), kf in 0.0f64..1.0) {
            let d = Dataset::new(raw.into_iter().map(|(score, label)| Sample { score, label }).collect()).unwrap();
            let k = 1 + ((d.len() - 1) as f64 * kf) as usize;
            let r = topk_attack(&d, k).unwrap();
            prop_assert!((r.precision * k as f64 - r.true_positives_in_topk as f64).abs() < 1e-9);
            if d.positives() > 0 {
                prop_assert!((r.recall * d.positives() as f64 - r.true_positives_in_topk as f64).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn perturbation_limits() {
        let spec = SyntheticSpec { m: 10_000, base_rate: 0.2, separation: 1.19, family: ScoreFamily::LogitGaussian };
        let d = gen_synthetic(&spec, &mut SeededRng::new(2)).unwrap();
        let clean = auc_rank(&d).unwrap();
        let p = perturb_scores(&d, 1000.0, &mut SeededRng::new(3)).unwrap();
        assert!((auc_rank(&p).unwrap() - clean).abs() < 0.001);
        assert_eq!(p.labels(), d.labels());
        let p = perturb_scores(&d, 1.0, &mut SeededRng::new(3)).unwrap();
        let noisy = auc_rank(&p).unwrap();
        assert!(noisy > 0.5 && noisy < clean);
        assert!(p.iter().any(|s| s.score < 0.0 || s.score > 1.0));
        assert!(perturb_scores(&d, 0.0, &mut SeededRng::new(3)).is_err());
    }

    #[test]
    fn perturbation_degrades_with_smaller_eps() {
        let spec = SyntheticSpec { m: 5000, base_rate: 0.3, separation: 3.0, family: ScoreFamily::LogitGaussian };
        let d = gen_synthetic(&spec, &mut SeededRng::new(5)).unwrap();
        let mean_auc = |eps: f64| {
            (0..10)
                .map(|s| auc_rank(&perturb_scores(&d, eps, &mut SeededRng::new(s)).unwrap()).unwrap())
                .sum::<f64>()
                / 10.0
        };
        let aucs: Vec<f64> = [1.0, 2.0, 4.0, 8.0].iter().map(|&e| mean_auc(e)).collect();
        assert!(aucs.windows(2).all(|w| w[0] < w[1]), "{aucs:?}");
        assert!(aucs[0] > 0.5 && aucs[3] < auc_rank(&d).unwrap());
    }

    #[test]
    fn density_examples() {
        let d = Dataset::from_parts(&[1.0, 1.0, 0.05, 0.55], &[1, 1, 0, 0]).unwrap();
        let h = score_density(&d, 10).unwrap();
        assert_eq!(h.positive[9], 1.0);
        assert_eq!(h.negative[0], 0.5);
        assert_eq!(h.negative[5], 0.5);
        assert_relative_eq!(h.positive.iter().sum::<f64>(), 1.0);

        let d = Dataset::from_parts(&[0.3, 0.6], &[0, 0]).unwrap();
        let h = score_density(&d, 4).unwrap();
        assert!(h.positive_empty && !h.negative_empty);
        assert!(h.positive.iter().all(|&x| x == 0.0));
        assert!(score_density(&d, 0).is_err());
    }

    #[test]
    fn density_of_uniform_scores_is_flat() {
        let spec = SyntheticSpec { m: 50_000, base_rate: 0.5, separation: 0.0, family: ScoreFamily::BetaPair };
        let d = gen_synthetic(&spec, &mut SeededRng::new(6)).unwrap();
        let bins = 20;
        let h = score_density(&d, bins).unwrap();
        for (hist, count) in [(&h.positive, d.positives()), (&h.negative, d.negatives())] {
            // chi-square with 19 dof; 0.999 quantile is about 43.8
            let expected = count as f64 / bins as f64;
            let chi2: f64 = hist.iter().map(|p| (p * count as f64 - expected).powi(2) / expected).sum();
            assert!(chi2 < 43.8, "chi2 {chi2}");
        }
    }
}
