//! In-process simulation of `K` clients and one server.
//!
//! Three protocol families are supported:
//!
//! * **Threshold**: every client releases noisy TP/FP/TN/FN at each grid
//!   threshold; the server sums them, builds a ROC curve and integrates it.
//! * **RankRr**: labels are flipped once by randomized response, the server
//!   ranks the pooled scores, clients return rank sums over their flipped
//!   labels, and the server debiases the resulting AUC.
//! * **RankLaplace**: as above but with clean labels, Laplace noise on the
//!   local rank sum and the local positive count.
//!
//! Randomness is consumed in a fixed order per trial: the IID shuffle first,
//! then (threshold) each client's draws in client order, thresholds
//! ascending and `tp, fp, tn, fn` within a threshold; (RankRr) one uniform
//! per sample in dataset order; (RankLaplace) per client, the rank-sum noise
//! then the positive-count noise.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;

use crate::debias;
use crate::error::{invalid, Error, Result};
use crate::mechanisms::{eps_per_stat, rr_flip, split_budget, NoiseSpec, RrSpec};
use crate::metrics::{
    auc_trapezoid, confusion_sweep, rank_scores, roc_canonicalize, tpr_fpr, ConfusionCounts,
    Dataset, RocCurve, Sample, ThresholdGrid,
};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PartitionMode {
    Iid,
    NonIid,
}

impl fmt::Display for PartitionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PartitionMode::Iid => "iid",
            PartitionMode::NonIid => "non-iid",
        })
    }
}

impl FromStr for PartitionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "iid" => Ok(PartitionMode::Iid),
            "non-iid" | "noniid" => Ok(PartitionMode::NonIid),
            other => Err(invalid(format!("unknown partition mode `{other}`"))),
        }
    }
}

/// Disjoint cover of the dataset indices by `K` clients.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    clients: Vec<Vec<usize>>,
}

impl Partition {
    pub fn clients(&self) -> &[Vec<usize>] {
        &self.clients
    }

    pub fn num_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.clients.iter().map(Vec::len).collect()
    }

    pub fn client_samples(&self, dataset: &Dataset, client: usize) -> Vec<Sample> {
        self.clients[client].iter().map(|&i| dataset[i]).collect()
    }
}

fn check_clients(m: usize, k: usize) -> Result<()> {
    if k == 0 || k > m {
        return Err(invalid(format!("need 1 <= K <= M, got K={k}, M={m}")));
    }
    Ok(())
}

/// Splits `order` into `k` contiguous blocks; the first `m mod k` blocks get
/// one extra element.
fn split_blocks(order: Vec<usize>, k: usize) -> Partition {
    let m = order.len();
    let (base, extra) = (m / k, m % k);
    let mut clients = Vec::with_capacity(k);
    let mut rest = order.as_slice();
    for c in 0..k {
        let (head, tail) = rest.split_at(base + usize::from(c < extra));
        clients.push(head.to_vec());
        rest = tail;
    }
    Partition { clients }
}

/// Uniformly random assignment into `K` near-equal clients.
pub fn partition_iid(dataset: &Dataset, k: usize, rng: &mut SeededRng) -> Result<Partition> {
    check_clients(dataset.len(), k)?;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(rng);
    Ok(split_blocks(order, k))
}

/// Score-sorted contiguous blocks: client `k` holds scores no larger than
/// any score of client `k + 1`. Ties keep dataset order.
pub fn partition_noniid(dataset: &Dataset, k: usize) -> Result<Partition> {
    check_clients(dataset.len(), k)?;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.sort_by(|&a, &b| dataset[a].score.total_cmp(&dataset[b].score));
    Ok(split_blocks(order, k))
}

pub fn partition(
    dataset: &Dataset,
    k: usize,
    mode: PartitionMode,
    rng: &mut SeededRng,
) -> Result<Partition> {
    match mode {
        PartitionMode::Iid => partition_iid(dataset, k, rng),
        PartitionMode::NonIid => partition_noniid(dataset, k),
    }
}

/// Noisy per-threshold confusion counts released by one client.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdReport {
    pub client_id: usize,
    pub counts: Vec<ConfusionCounts>,
}

/// Exact local counts at every threshold plus four independent draws of
/// `noise` per threshold. Clients with no samples still report pure noise.
pub fn client_threshold_report(
    client_id: usize,
    samples: &[Sample],
    grid: &ThresholdGrid,
    noise: &NoiseSpec,
    rng: &mut SeededRng,
) -> Result<ThresholdReport> {
    noise.validate()?;
    let counts = confusion_sweep(samples, grid)
        .into_iter()
        .map(|c| {
            Ok(ConfusionCounts {
                threshold: c.threshold,
                tp: c.tp + noise.sample(rng)?,
                fp: c.fp + noise.sample(rng)?,
                tn: c.tn + noise.sample(rng)?,
                fn_: c.fn_ + noise.sample(rng)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ThresholdReport { client_id, counts })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdAggregate {
    pub auc: f64,
    pub curve: RocCurve,
    /// Thresholds whose aggregated TP+FN or FP+TN was not positive.
    pub dropped_points: usize,
}

pub fn server_threshold_aggregate(
    reports: &[ThresholdReport],
    grid: &ThresholdGrid,
) -> Result<ThresholdAggregate> {
    let thresholds = grid.thresholds();
    let mut totals: Vec<ConfusionCounts> =
        thresholds.iter().map(|&t| ConfusionCounts::zero(t)).collect();
    for report in reports {
        let same_grid = report.counts.len() == thresholds.len()
            && report.counts.iter().zip(thresholds).all(|(c, &t)| c.threshold == t);
        if !same_grid {
            return Err(Error::GridMismatch);
        }
        for (total, c) in totals.iter_mut().zip(&report.counts) {
            *total = total.add(c);
        }
    }

    let mut dropped_points = 0;
    let mut points = Vec::with_capacity(totals.len());
    for c in &totals {
        match tpr_fpr(c) {
            Some((tpr, fpr)) => points.push((fpr, tpr)),
            None => dropped_points += 1,
        }
    }
    let curve = roc_canonicalize(points);
    Ok(ThresholdAggregate {
        auc: auc_trapezoid(&curve),
        curve,
        dropped_points,
    })
}

/// Rank statistics released by one client: `Σ r·y`, positives, negatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankReport {
    pub client_id: usize,
    pub local_sum: f64,
    pub local_p: f64,
    pub local_n: f64,
}

fn exact_rank_report(client_id: usize, labels: &[u8], ranks: &[f64]) -> RankReport {
    debug_assert_eq!(labels.len(), ranks.len());
    let local_sum = labels
        .iter()
        .zip(ranks)
        .filter(|(&y, _)| y == 1)
        .map(|(_, r)| r)
        .sum();
    let local_p = labels.iter().filter(|&&y| y == 1).count() as f64;
    RankReport {
        client_id,
        local_sum,
        local_p,
        local_n: labels.len() as f64 - local_p,
    }
}

/// Rank report over labels that were already flipped by randomized
/// response. No further noise is added.
pub fn client_rank_rr_report(client_id: usize, flipped_labels: &[u8], ranks: &[f64]) -> RankReport {
    exact_rank_report(client_id, flipped_labels, ranks)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SensitivityMode {
    /// Each client uses its own largest rank.
    LocalMaxRank,
    /// Every client uses `M − 1`.
    GlobalMminus1,
}

impl fmt::Display for SensitivityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SensitivityMode::LocalMaxRank => "local-max-rank",
            SensitivityMode::GlobalMminus1 => "global-m-minus-1",
        })
    }
}

impl FromStr for SensitivityMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "local-max-rank" | "local" => Ok(SensitivityMode::LocalMaxRank),
            "global-m-minus-1" | "global" => Ok(SensitivityMode::GlobalMminus1),
            other => Err(invalid(format!("unknown sensitivity mode `{other}`"))),
        }
    }
}

/// Sensitivity of a client's rank sum, never below 1 (a client holding
/// only rank 0 would otherwise get a zero-scale Laplace).
pub fn rank_sensitivity(mode: SensitivityMode, client_ranks: &[f64], total_samples: usize) -> f64 {
    let raw = match mode {
        SensitivityMode::LocalMaxRank => client_ranks.iter().copied().fold(0.0, f64::max),
        SensitivityMode::GlobalMminus1 => total_samples.saturating_sub(1) as f64,
    };
    raw.max(1.0)
}

/// Rank report with Laplace noise: `Lap(Δ/eps_sum)` on the rank sum and
/// `Lap(1/eps_p)` on the positive count; the negative count is the client
/// size minus the noisy positive count. `eps_p = None` leaves the class
/// counts exact.
#[allow(clippy::too_many_arguments)]
pub fn client_rank_laplace_report(
    client_id: usize,
    labels: &[u8],
    ranks: &[f64],
    eps_sum: f64,
    eps_p: Option<f64>,
    mode: SensitivityMode,
    total_samples: usize,
    rng: &mut SeededRng,
) -> Result<RankReport> {
    let exact = exact_rank_report(client_id, labels, ranks);
    let sum_noise = NoiseSpec::laplace(rank_sensitivity(mode, ranks, total_samples), eps_sum)?;
    let local_sum = exact.local_sum + sum_noise.sample(rng)?;
    let local_p = match eps_p {
        Some(eps) => exact.local_p + NoiseSpec::laplace(1.0, eps)?.sample(rng)?,
        None => exact.local_p,
    };
    Ok(RankReport {
        client_id,
        local_sum,
        local_p,
        local_n: labels.len() as f64 - local_p,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankAggregate {
    pub global_sum: f64,
    pub p_bar: f64,
    pub n_bar: f64,
    pub auc: f64,
}

/// `(globalSum − P̄(P̄−1)/2) / (P̄·N̄)` from the client rank reports.
pub fn server_rank_aggregate(reports: &[RankReport]) -> Result<RankAggregate> {
    if reports.is_empty() {
        return Err(invalid("no rank reports to aggregate"));
    }
    let global_sum: f64 = reports.iter().map(|r| r.local_sum).sum();
    let p_bar: f64 = reports.iter().map(|r| r.local_p).sum();
    let n_bar: f64 = reports.iter().map(|r| r.local_n).sum();
    Ok(RankAggregate {
        global_sum,
        p_bar,
        n_bar,
        auc: rank_auc_from_sum(global_sum, p_bar, n_bar)?,
    })
}

/// Rank-sum AUC for given class totals; errors when either total is not
/// positive.
pub fn rank_auc_from_sum(global_sum: f64, p: f64, n: f64) -> Result<f64> {
    if !(p > 0.0 && n > 0.0) {
        return Err(Error::UndefinedAuc {
            positives: p,
            negatives: n,
        });
    }
    Ok((global_sum - p * (p - 1.0) / 2.0) / (p * n))
}

/// Labels flipped once by randomized response. Reusing the same value for
/// further evaluations spends no additional budget.
#[derive(Debug, Clone, PartialEq)]
pub struct FlippedLabels {
    spec: RrSpec,
    labels: Vec<u8>,
}

impl FlippedLabels {
    pub fn flip(dataset: &Dataset, spec: RrSpec, rng: &mut SeededRng) -> Self {
        let labels = dataset.iter().map(|s| rr_flip(s.label, &spec, rng)).collect();
        Self { spec, labels }
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn epsilon(&self) -> f64 {
        self.spec.epsilon()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProtocolKind {
    ThresholdLaplace,
    ThresholdGaussian,
    RankRr,
    RankLaplace,
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProtocolKind::ThresholdLaplace => "threshold-laplace",
            ProtocolKind::ThresholdGaussian => "threshold-gaussian",
            ProtocolKind::RankRr => "rank-rr",
            ProtocolKind::RankLaplace => "rank-laplace",
        })
    }
}

impl FromStr for ProtocolKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "threshold-laplace" => Ok(ProtocolKind::ThresholdLaplace),
            "threshold-gaussian" => Ok(ProtocolKind::ThresholdGaussian),
            "rank-rr" | "rr" => Ok(ProtocolKind::RankRr),
            "rank-laplace" => Ok(ProtocolKind::RankLaplace),
            other => Err(invalid(format!("unknown protocol `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdMechanism {
    Laplace,
    /// Per-statistic `δ` for the Gaussian mechanism.
    Gaussian { delta: f64 },
}

/// Protocol-specific settings. `f64::INFINITY` for any ε disables noise.
#[derive(Debug, Clone, PartialEq)]
pub enum Protocol {
    /// `eps_total` is split evenly over the `4·|Θ|` released counts.
    Threshold {
        grid: ThresholdGrid,
        eps_total: f64,
        mechanism: ThresholdMechanism,
    },
    RankRr {
        epsilon: f64,
        /// Apply the α/β correction to the noisy AUC.
        debias: bool,
    },
    /// `alpha` of `eps_total` goes to the rank sum, the rest to the
    /// positive count.
    RankLaplace {
        eps_total: f64,
        alpha: f64,
        sensitivity: SensitivityMode,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub protocol: Protocol,
    pub clients: usize,
    pub partition: PartitionMode,
    /// Analysis-only: use the true class totals (and base rate) instead of
    /// their private estimates. For RankLaplace the whole budget then goes
    /// to the rank sum.
    pub use_exact_pn: bool,
}

impl ProtocolConfig {
    pub fn kind(&self) -> ProtocolKind {
        match &self.protocol {
            Protocol::Threshold { mechanism: ThresholdMechanism::Laplace, .. } => {
                ProtocolKind::ThresholdLaplace
            }
            Protocol::Threshold { mechanism: ThresholdMechanism::Gaussian { .. }, .. } => {
                ProtocolKind::ThresholdGaussian
            }
            Protocol::RankRr { .. } => ProtocolKind::RankRr,
            Protocol::RankLaplace { .. } => ProtocolKind::RankLaplace,
        }
    }

    /// Checks every field needed by the chosen protocol.
    pub fn validate(&self) -> Result<()> {
        if self.clients == 0 {
            return Err(invalid("number of clients must be at least 1"));
        }
        match &self.protocol {
            Protocol::Threshold { eps_total, mechanism, .. } => {
                if !(*eps_total > 0.0) {
                    return Err(invalid(format!("epsilon must be > 0, got {eps_total}")));
                }
                if let ThresholdMechanism::Gaussian { delta } = mechanism {
                    if !(*delta > 0.0 && *delta < 1.0) {
                        return Err(invalid(format!("delta must be in (0, 1), got {delta}")));
                    }
                }
            }
            Protocol::RankRr { epsilon, debias } => {
                if !(*epsilon >= 0.0) {
                    return Err(invalid(format!("epsilon must be >= 0, got {epsilon}")));
                }
                if *debias && *epsilon == 0.0 {
                    return Err(invalid("debiasing is undefined at epsilon = 0"));
                }
            }
            Protocol::RankLaplace { eps_total, alpha, .. } => {
                if !(*eps_total > 0.0) {
                    return Err(invalid(format!("epsilon must be > 0, got {eps_total}")));
                }
                if !self.use_exact_pn {
                    split_budget(*eps_total, *alpha)?;
                }
            }
        }
        Ok(())
    }
}

/// One trial of the configured protocol; returns the server's final AUC.
pub fn run_protocol(config: &ProtocolConfig, dataset: &Dataset, rng: &mut SeededRng) -> Result<f64> {
    config.validate()?;
    let parts = partition(dataset, config.clients, config.partition, rng)?;

    match &config.protocol {
        Protocol::Threshold { grid, eps_total, mechanism } => {
            let eps = eps_per_stat(grid.len(), *eps_total);
            let noise = match mechanism {
                ThresholdMechanism::Laplace => NoiseSpec::laplace(1.0, eps)?,
                ThresholdMechanism::Gaussian { delta } => NoiseSpec::gaussian(1.0, eps, *delta)?,
            };
            let reports = (0..parts.num_clients())
                .map(|k| {
                    client_threshold_report(k, &parts.client_samples(dataset, k), grid, &noise, rng)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(server_threshold_aggregate(&reports, grid)?.auc)
        }
        Protocol::RankRr { epsilon, debias } => {
            let flipped = FlippedLabels::flip(dataset, RrSpec::new(*epsilon)?, rng);
            let ranks = rank_scores(&dataset.scores()).into_vec();
            let reports: Vec<RankReport> = parts
                .clients()
                .iter()
                .enumerate()
                .map(|(k, idx)| {
                    let labels: Vec<u8> = idx.iter().map(|&i| flipped.labels()[i]).collect();
                    let r: Vec<f64> = idx.iter().map(|&i| ranks[i]).collect();
                    client_rank_rr_report(k, &labels, &r)
                })
                .collect();
            let agg = server_rank_aggregate(&reports)?;
            let (p, n) = (dataset.positives() as f64, dataset.negatives() as f64);
            let noisy_auc = if config.use_exact_pn {
                rank_auc_from_sum(agg.global_sum, p, n)?
            } else {
                agg.auc
            };
            if !debias {
                return Ok(noisy_auc);
            }
            let known_pi = config.use_exact_pn.then(|| p / (p + n));
            debias::clean_auc(noisy_auc, agg.p_bar, agg.n_bar, *epsilon, known_pi)
        }
        Protocol::RankLaplace { eps_total, alpha, sensitivity } => {
            let (eps_sum, eps_p) = if config.use_exact_pn {
                (*eps_total, None)
            } else {
                let (s, p) = split_budget(*eps_total, *alpha)?;
                (s, Some(p))
            };
            let ranks = rank_scores(&dataset.scores()).into_vec();
            let reports = parts
                .clients()
                .iter()
                .enumerate()
                .map(|(k, idx)| {
                    let labels: Vec<u8> = idx.iter().map(|&i| dataset[i].label).collect();
                    let r: Vec<f64> = idx.iter().map(|&i| ranks[i]).collect();
                    client_rank_laplace_report(
                        k,
                        &labels,
                        &r,
                        eps_sum,
                        eps_p,
                        *sensitivity,
                        dataset.len(),
                        rng,
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(server_rank_aggregate(&reports)?.auc)
        }
    }
}
