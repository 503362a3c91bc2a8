//! The general update function and the six aggregation rules: Average,
//! DKrum, Dmedian, DBulyan, BRIDGE, and the two-stage UBAR rule.
//!
//! Every rule is a pure function of its inputs, so different nodes can
//! aggregate concurrently. All ties (distance, loss, score, median
//! proximity) break toward the lower node id, then the lower coordinate
//! value, making each rule fully deterministic.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::EstimateVector;
use crate::topology::{ceil_snapped, floor_snapped};

/// Estimates received from a node's neighbors, keyed by neighbor id.
/// Non-empty, uniform dimension.
#[derive(Debug, Clone)]
pub struct NeighborEstimates {
    entries: BTreeMap<usize, EstimateVector>,
}

impl NeighborEstimates {
    pub fn from_entries<I>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, EstimateVector)>,
    {
        let entries: BTreeMap<usize, EstimateVector> = entries.into_iter().collect();
        let mut dims = entries.values().map(EstimateVector::len);
        let first = dims.next().ok_or(Error::Empty("neighbor estimates"))?;
        for d in dims {
            if d != first {
                return Err(Error::DimensionMismatch {
                    context: "neighbor estimates",
                    expected: first,
                    got: d,
                });
            }
        }
        Ok(NeighborEstimates { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.entries.values().next().map_or(0, EstimateVector::len)
    }

    pub fn get(&self, id: usize) -> Option<&EstimateVector> {
        self.entries.get(&id)
    }

    /// Entries in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &EstimateVector)> {
        self.entries.iter().map(|(&id, v)| (id, v))
    }

    pub fn ids(&self) -> Vec<usize> {
        self.entries.keys().copied().collect()
    }
}

/// The six aggregation rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleKind {
    Average,
    DKrum,
    Dmedian,
    DBulyan,
    Bridge,
    Ubar,
}

impl RuleKind {
    pub const ALL: [RuleKind; 6] = [
        RuleKind::Average,
        RuleKind::DKrum,
        RuleKind::Dmedian,
        RuleKind::DBulyan,
        RuleKind::Bridge,
        RuleKind::Ubar,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            RuleKind::Average => "average",
            RuleKind::DKrum => "dkrum",
            RuleKind::Dmedian => "dmedian",
            RuleKind::DBulyan => "dbulyan",
            RuleKind::Bridge => "bridge",
            RuleKind::Ubar => "ubar",
        }
    }
}

impl fmt::Display for RuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RuleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "average" => Ok(RuleKind::Average),
            "dkrum" => Ok(RuleKind::DKrum),
            "dmedian" => Ok(RuleKind::Dmedian),
            "dbulyan" => Ok(RuleKind::DBulyan),
            "bridge" => Ok(RuleKind::Bridge),
            "ubar" => Ok(RuleKind::Ubar),
            other => Err(Error::Config(format!("unknown rule name `{other}`"))),
        }
    }
}

/// Rule selection plus the hyper-parameters shared by the rules: the GUF
/// mixing weight `alpha`, the assumed benign-neighbor ratio `rho`, and the
/// centralized tolerance `rho_central` feeding the fault bound of
/// DKrum/DBulyan/BRIDGE.
///
/// Under the Average rule `alpha` is ignored and each node mixes with
/// `1 / (|N_i| + 1)` instead, which is what makes the full-mean update (and
/// the targeted-injection construction) exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuleConfig {
    pub rule: RuleKind,
    pub alpha: f64,
    pub rho: f64,
    pub rho_central: f64,
}

impl RuleConfig {
    pub fn new(rule: RuleKind) -> Self {
        RuleConfig {
            rule,
            alpha: 0.5,
            rho: 0.4,
            rho_central: 1.0 / 3.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!(
                "alpha must be in [0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::Config(format!(
                "rho must be in (0, 1], got {}",
                self.rho
            )));
        }
        if !(self.rho_central > 0.0 && self.rho_central < 1.0) {
            return Err(Error::Config(format!(
                "rho_central must be in (0, 1), got {}",
                self.rho_central
            )));
        }
        Ok(())
    }

    /// Assumed Byzantine-neighbor bound for a node with `degree` neighbors.
    pub fn fault_bound(&self, degree: usize) -> usize {
        num_fault(degree, self.rho, self.rho_central)
    }
}

/// Per-neighbor quantities a rule actually computed, for logging and tests.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborDiagnostic {
    pub node: usize,
    /// Euclidean distance to the aggregating node's own estimate (UBAR).
    pub distance: Option<f64>,
    /// Loss of the neighbor's estimate on the node's current batch (UBAR
    /// stage 2, only for stage-1 survivors).
    pub loss: Option<f64>,
    /// Krum score (DKrum and the first DBulyan selection round).
    pub score: Option<f64>,
}

/// Result of one aggregation call.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationOutcome {
    pub aggregate: EstimateVector,
    /// Neighbor ids whose estimates entered the aggregate, ascending.
    pub selected: Vec<usize>,
    pub diagnostics: Vec<NeighborDiagnostic>,
}

/// Everything a rule may need about the aggregating node: its own estimate
/// and batch loss, the received estimates, and a loss evaluator over the
/// node's current batch.
pub struct AggregationContext<'a> {
    pub own_estimate: &'a EstimateVector,
    pub own_loss: f64,
    pub neighbors: &'a NeighborEstimates,
    pub loss_eval: &'a dyn Fn(&EstimateVector) -> f64,
}

/// General update: `alpha * x_i + (1 - alpha) * aggregate - lambda * grad`.
pub fn guf_update(
    x_i: &EstimateVector,
    aggregate: &EstimateVector,
    grad: &EstimateVector,
    alpha: f64,
    lambda: f64,
) -> Result<EstimateVector> {
    if aggregate.len() != x_i.len() {
        return Err(Error::DimensionMismatch {
            context: "guf aggregate",
            expected: x_i.len(),
            got: aggregate.len(),
        });
    }
    if grad.len() != x_i.len() {
        return Err(Error::DimensionMismatch {
            context: "guf gradient",
            expected: x_i.len(),
            got: grad.len(),
        });
    }
    let values = x_i
        .iter()
        .zip(aggregate.iter())
        .zip(grad.iter())
        .map(|((x, r), g)| alpha * x + (1.0 - alpha) * r - lambda * g)
        .collect();
    Ok(EstimateVector::new(values))
}

/// Coordinate-wise mean of all neighbor estimates.
pub fn avg_rule(est: &NeighborEstimates) -> AggregationOutcome {
    let aggregate =
        EstimateVector::mean_of(est.iter().map(|(_, v)| v)).expect("non-empty by invariant");
    AggregationOutcome {
        aggregate,
        selected: est.ids(),
        diagnostics: Vec::new(),
    }
}

/// Byzantine-neighbor bound `ceil(|N_i| * min(1 - rho_i, rho_central))`.
pub fn num_fault(t_neighbors: usize, rho_i: f64, rho_central: f64) -> usize {
    debug_assert!(t_neighbors >= 1);
    let fraction = (1.0 - rho_i).min(rho_central).max(0.0);
    ceil_snapped(t_neighbors as f64 * fraction)
}

/// Sum of squared distances from each entry to its `k_closest` nearest
/// other entries; the first element of the result pairs ids with scores.
fn krum_scores(entries: &[(usize, &EstimateVector)], n_hat: usize) -> Vec<(usize, f64)> {
    let m = entries.len();
    let k_closest = m.saturating_sub(n_hat + 2).clamp(1, m - 1);
    entries
        .iter()
        .map(|(id, v)| {
            let mut sq: Vec<f64> = entries
                .iter()
                .filter(|(other, _)| other != id)
                .map(|(_, w)| {
                    let d = v.distance(w);
                    d * d
                })
                .collect();
            sq.sort_by(f64::total_cmp);
            (*id, sq.iter().take(k_closest).sum())
        })
        .collect()
}

fn krum_winner(entries: &[(usize, &EstimateVector)], n_hat: usize) -> (usize, Vec<(usize, f64)>) {
    if entries.len() == 1 {
        return (entries[0].0, vec![(entries[0].0, 0.0)]);
    }
    let scores = krum_scores(entries, n_hat);
    let winner = scores
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .expect("non-empty")
        .0;
    (winner, scores)
}

/// Decentralized Krum: score each neighbor by the summed squared distances
/// to its nearest peers and return the minimum-score estimate. A single
/// neighbor passes through unchanged.
pub fn dkrum_rule(est: &NeighborEstimates, n_hat: usize) -> AggregationOutcome {
    let entries: Vec<(usize, &EstimateVector)> = est.iter().collect();
    let (winner, scores) = krum_winner(&entries, n_hat);
    AggregationOutcome {
        aggregate: est.get(winner).expect("winner is a neighbor").clone(),
        selected: vec![winner],
        diagnostics: scores
            .into_iter()
            .map(|(node, score)| NeighborDiagnostic {
                node,
                distance: None,
                loss: None,
                score: Some(score),
            })
            .collect(),
    }
}

/// Marginal median: per coordinate, the median of all neighbors' entries
/// (mean of the two middle values for even counts).
pub fn dmedian_rule(est: &NeighborEstimates) -> AggregationOutcome {
    let dim = est.dimension();
    let mut values = Vec::with_capacity(dim);
    let mut column = Vec::with_capacity(est.len());
    for m in 0..dim {
        column.clear();
        column.extend(est.iter().map(|(_, v)| v[m]));
        column.sort_by(f64::total_cmp);
        values.push(median_of_sorted(&column));
    }
    AggregationOutcome {
        aggregate: EstimateVector::new(values),
        selected: est.ids(),
        diagnostics: Vec::new(),
    }
}

fn median_of_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Decentralized Bulyan. Selection phase: repeatedly apply DKrum to the
/// remaining estimates, moving each winner into the selected set, until
/// `|N_i| - 2 * n_hat` are selected. Aggregation phase: per coordinate,
/// average the `beta = |N_i| - 4 * n_hat` selected entries closest to the
/// selected median (ties toward lower value, then lower id).
///
/// Requires `|N_i| >= 4 * n_hat + 1`; with `n_hat = 0` it degenerates to
/// the plain average.
pub fn dbulyan_rule(est: &NeighborEstimates, n_hat: usize) -> Result<AggregationOutcome> {
    let m = est.len();
    if m < 4 * n_hat + 1 {
        return Err(Error::RuleInapplicable {
            rule: "dbulyan",
            reason: format!("needs at least {} neighbors for n_hat = {n_hat}, got {m}", 4 * n_hat + 1),
        });
    }
    let to_select = m - 2 * n_hat;
    let beta = m - 4 * n_hat;

    let mut remaining: Vec<(usize, &EstimateVector)> = est.iter().collect();
    let mut selected_ids = Vec::with_capacity(to_select);
    let mut first_round_scores = Vec::new();
    for round in 0..to_select {
        let (winner, scores) = krum_winner(&remaining, n_hat);
        if round == 0 {
            first_round_scores = scores;
        }
        selected_ids.push(winner);
        remaining.retain(|(id, _)| *id != winner);
    }
    selected_ids.sort_unstable();

    let dim = est.dimension();
    let mut values = Vec::with_capacity(dim);
    for m_coord in 0..dim {
        let mut column: Vec<(f64, usize)> = selected_ids
            .iter()
            .map(|&id| (est.get(id).expect("selected neighbor")[m_coord], id))
            .collect();
        let mut sorted: Vec<f64> = column.iter().map(|(v, _)| *v).collect();
        sorted.sort_by(f64::total_cmp);
        let med = median_of_sorted(&sorted);
        column.sort_by(|a, b| {
            (a.0 - med)
                .abs()
                .total_cmp(&(b.0 - med).abs())
                .then(a.0.total_cmp(&b.0))
                .then(a.1.cmp(&b.1))
        });
        column.truncate(beta);
        // Canonical summation order: ascending neighbor id.
        column.sort_by_key(|&(_, id)| id);
        values.push(column.iter().map(|(v, _)| v).sum::<f64>() / beta as f64);
    }

    Ok(AggregationOutcome {
        aggregate: EstimateVector::new(values),
        selected: selected_ids,
        diagnostics: first_round_scores
            .into_iter()
            .map(|(node, score)| NeighborDiagnostic {
                node,
                distance: None,
                loss: None,
                score: Some(score),
            })
            .collect(),
    })
}

/// BRIDGE-style coordinate-wise trimmed mean: drop the `n_hat` largest and
/// `n_hat` smallest values per coordinate and average the rest.
/// Requires `|N_i| > 2 * n_hat`.
pub fn bridge_rule(est: &NeighborEstimates, n_hat: usize) -> Result<AggregationOutcome> {
    let m = est.len();
    if m <= 2 * n_hat {
        return Err(Error::RuleInapplicable {
            rule: "bridge",
            reason: format!("needs more than {} neighbors for n_hat = {n_hat}, got {m}", 2 * n_hat),
        });
    }
    let dim = est.dimension();
    let mut values = Vec::with_capacity(dim);
    let mut column = Vec::with_capacity(m);
    for m_coord in 0..dim {
        column.clear();
        column.extend(est.iter().map(|(_, v)| v[m_coord]));
        column.sort_by(f64::total_cmp);
        let kept = &column[n_hat..m - n_hat];
        values.push(kept.iter().sum::<f64>() / kept.len() as f64);
    }
    Ok(AggregationOutcome {
        aggregate: EstimateVector::new(values),
        selected: est.ids(),
        diagnostics: Vec::new(),
    })
}

/// The two-stage uniform Byzantine-resilient rule.
///
/// Stage 1 keeps the `n_s = max(1, floor(rho_i * |N_i|))` neighbors whose
/// estimates are closest (Euclidean) to the node's own estimate. Stage 2
/// evaluates each survivor's estimate on the node's current batch and
/// averages those whose loss is at most the node's own; if none qualify it
/// adopts the loss-minimizing survivor.
pub fn ubar_rule<F>(
    x_i: &EstimateVector,
    own_loss: f64,
    est: &NeighborEstimates,
    rho_i: f64,
    loss_eval: F,
) -> Result<AggregationOutcome>
where
    F: Fn(&EstimateVector) -> f64,
{
    if est.is_empty() {
        return Err(Error::Empty("neighbor estimates"));
    }
    if est.dimension() != x_i.len() {
        return Err(Error::DimensionMismatch {
            context: "ubar estimates",
            expected: x_i.len(),
            got: est.dimension(),
        });
    }

    let mut by_distance: Vec<(usize, f64)> = est
        .iter()
        .map(|(id, v)| (id, x_i.distance(v)))
        .collect();
    by_distance.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let n_s = floor_snapped(rho_i * est.len() as f64).max(1);
    let stage_one: Vec<usize> = by_distance.iter().take(n_s).map(|&(id, _)| id).collect();

    let losses: BTreeMap<usize, f64> = stage_one
        .iter()
        .map(|&id| (id, loss_eval(est.get(id).expect("stage-1 member"))))
        .collect();
    let mut accepted: Vec<usize> = losses
        .iter()
        .filter(|(_, &l)| l <= own_loss)
        .map(|(&id, _)| id)
        .collect();
    accepted.sort_unstable();

    let (aggregate, selected) = if accepted.is_empty() {
        let (&best, _) = losses
            .iter()
            .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(b.0)))
            .expect("stage 1 keeps at least one neighbor");
        (est.get(best).expect("stage-1 member").clone(), vec![best])
    } else {
        let mean = EstimateVector::mean_of(
            accepted.iter().map(|&id| est.get(id).expect("accepted member")),
        )
        .expect("non-empty accepted set");
        (mean, accepted)
    };

    let diagnostics = by_distance
        .iter()
        .map(|&(node, distance)| NeighborDiagnostic {
            node,
            distance: Some(distance),
            loss: losses.get(&node).copied(),
            score: None,
        })
        .collect();

    Ok(AggregationOutcome {
        aggregate,
        selected,
        diagnostics,
    })
}

/// Dispatch over the configured rule.
pub fn aggregate(rule: &RuleConfig, ctx: &AggregationContext<'_>) -> Result<AggregationOutcome> {
    if ctx.neighbors.is_empty() {
        return Err(Error::Empty("neighbor estimates"));
    }
    if ctx.neighbors.dimension() != ctx.own_estimate.len() {
        return Err(Error::DimensionMismatch {
            context: "aggregation context",
            expected: ctx.own_estimate.len(),
            got: ctx.neighbors.dimension(),
        });
    }
    let degree = ctx.neighbors.len();
    match rule.rule {
        RuleKind::Average => Ok(avg_rule(ctx.neighbors)),
        RuleKind::Dmedian => Ok(dmedian_rule(ctx.neighbors)),
        RuleKind::DKrum => Ok(dkrum_rule(ctx.neighbors, rule.fault_bound(degree))),
        RuleKind::DBulyan => dbulyan_rule(ctx.neighbors, rule.fault_bound(degree)),
        RuleKind::Bridge => bridge_rule(ctx.neighbors, rule.fault_bound(degree)),
        RuleKind::Ubar => ubar_rule(
            ctx.own_estimate,
            ctx.own_loss,
            ctx.neighbors,
            rule.rho,
            ctx.loss_eval,
        ),
    }
}
