//! Synchronous training loop: broadcast, sample, aggregate, update, across
//! all nodes, with per-iteration metrics.
//!
//! The round contract: within one iteration every per-node computation
//! depends only on the frozen iteration-k broadcast snapshot and the node's
//! own state and RNG stream, so nodes may be processed in any order with
//! bit-identical results (see [`Simulation::step_with_order`]).

use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::adversary::{byzantine_broadcast, AdversaryView, AttackState, AttackStrategy};
use crate::aggregation::{
    aggregate, guf_update, AggregationContext, AggregationOutcome, NeighborEstimates, RuleConfig,
    RuleKind,
};
use crate::error::{Error, Result};
use crate::model::{
    accuracy, gradient, load_idx, loss, partition_iid, sample_batch, two_class_blobs, DataShard,
    EstimateVector, LossModel, Sample,
};
use crate::topology::Topology;

/// Fading schedule `lr0 * 20 / (20 + k)` where `k` counts epochs.
pub fn learning_rate(k_epoch: usize, lr0: f64) -> f64 {
    lr0 * 20.0 / (20.0 + k_epoch as f64)
}

/// Epoch index of iteration `k`: `ceil(k * batch_size / shard_size)`.
/// `shard_size` is the largest shard so all nodes share one schedule.
fn epoch_of(iteration: usize, batch_size: usize, shard_size: usize) -> usize {
    (iteration * batch_size).div_ceil(shard_size)
}

/// Model selection; shapes are resolved against the dataset dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelChoice {
    Quadratic,
    Softmax,
    Mlp { hidden: usize },
}

impl ModelChoice {
    fn resolve(&self, input_dim: usize, classes: usize) -> LossModel {
        match *self {
            ModelChoice::Quadratic => LossModel::Quadratic { dim: input_dim },
            ModelChoice::Softmax => LossModel::SoftmaxRegression { input_dim, classes },
            ModelChoice::Mlp { hidden } => LossModel::Mlp {
                input_dim,
                hidden,
                classes,
            },
        }
    }
}

/// Training/test data selection.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetConfig {
    /// Two-class Gaussian blobs generated from the run seed.
    Synthetic {
        train: usize,
        test: usize,
        dim: usize,
        separation: f64,
    },
    /// MNIST IDX files (`train-*` and `t10k-*`) under `dir`; `limit` keeps
    /// only a prefix of each split.
    Mnist { dir: PathBuf, limit: Option<usize> },
}

impl DatasetConfig {
    pub fn synthetic_default() -> Self {
        DatasetConfig::Synthetic {
            train: 2000,
            test: 1000,
            dim: 2,
            separation: 4.0,
        }
    }
}

/// Plain-data attack selection; the simulator turns it into a runtime
/// [`AttackStrategy`] once the estimate dimension is known.
#[derive(Debug, Clone, PartialEq)]
pub enum AttackConfig {
    Gaussian { sigma: f64 },
    BitFlip,
    Mhamdi { zeta: f64 },
    /// `x_hat = x_hat_scale * ones(d)`, injected once at iteration `k0`.
    Targeted {
        target: usize,
        x_hat_scale: f64,
        k0: usize,
    },
}

impl AttackConfig {
    pub fn kind_name(&self) -> &'static str {
        match self {
            AttackConfig::Gaussian { .. } => "gaussian",
            AttackConfig::BitFlip => "bitflip",
            AttackConfig::Mhamdi { .. } => "mhamdi",
            AttackConfig::Targeted { .. } => "targeted",
        }
    }

    fn resolve(&self, dim: usize) -> AttackStrategy {
        match *self {
            AttackConfig::Gaussian { sigma } => AttackStrategy::Gaussian { sigma },
            AttackConfig::BitFlip => AttackStrategy::BitFlip,
            AttackConfig::Mhamdi { zeta } => AttackStrategy::Mhamdi { zeta },
            AttackConfig::Targeted {
                target,
                x_hat_scale,
                k0,
            } => AttackStrategy::Targeted {
                target,
                shift: EstimateVector::new(vec![x_hat_scale; dim]),
                inject_at: k0,
            },
        }
    }
}

/// Full description of one run; the resulting [`RunRecord`] accuracies are
/// a pure function of this value (wall-clock timings are not).
#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub n_benign: usize,
    pub connection_ratio: f64,
    pub byzantine_ratio: f64,
    pub rule: RuleConfig,
    pub attack: Option<AttackConfig>,
    pub lr0: f64,
    pub fading: bool,
    pub batch_size: usize,
    pub iterations: usize,
    /// Evaluation cadence in iterations; `None` evaluates once per
    /// epoch-equivalent (`ceil(shard_size / batch_size)`).
    pub eval_every: Option<usize>,
    pub seed: u64,
    pub model: ModelChoice,
    pub dataset: DatasetConfig,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            n_benign: 10,
            connection_ratio: 0.4,
            byzantine_ratio: 0.0,
            rule: RuleConfig::new(RuleKind::Ubar),
            attack: None,
            lr0: 0.05,
            fading: true,
            batch_size: 16,
            iterations: 500,
            eval_every: None,
            seed: 42,
            model: ModelChoice::Softmax,
            dataset: DatasetConfig::synthetic_default(),
        }
    }
}

/// One node's state: estimate, private data shard, private RNG stream,
/// role, and attack memory for Byzantine nodes.
#[derive(Debug, Clone)]
pub struct NodeState {
    pub id: usize,
    pub byzantine: bool,
    pub estimate: EstimateVector,
    pub shard: DataShard,
    rng: ChaCha8Rng,
    attack_state: AttackState,
}

/// Explicit building blocks for a simulation, used by tests and by
/// [`Simulation::prepare`].
#[derive(Debug, Clone)]
pub struct SimulationSetup {
    pub topology: Topology,
    pub model: LossModel,
    pub shards: Vec<DataShard>,
    pub x0: EstimateVector,
    pub rule: RuleConfig,
    pub attack: Option<AttackStrategy>,
    pub lr0: f64,
    pub fading: bool,
    pub batch_size: usize,
    pub seed: u64,
}

/// Wall-clock cost of one iteration, summed over all nodes: `train` covers
/// batch sampling plus loss and gradient evaluation, `agg` brackets exactly
/// the aggregation calls.
#[derive(Debug, Clone, Copy, Default)]
pub struct StepTimes {
    pub train: Duration,
    pub agg: Duration,
}

/// What one node did during an iteration.
#[derive(Debug, Clone)]
pub struct NodeStepRecord {
    pub node: usize,
    /// Batch loss at the node's pre-update estimate.
    pub loss: f64,
    /// Aggregation result; `None` for isolated nodes (plain SGD step).
    pub outcome: Option<AggregationOutcome>,
}

/// Result of one synchronous iteration: timings plus per-node diagnostics
/// in node-id order (independent of processing order).
#[derive(Debug, Clone)]
pub struct StepReport {
    pub times: StepTimes,
    pub per_node: Vec<NodeStepRecord>,
}

/// Accuracy snapshot over the benign nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub per_node: Vec<(usize, f64)>,
    pub worst: f64,
    pub mean: f64,
}

/// One row of the run record.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPoint {
    pub iteration: usize,
    pub epoch: usize,
    pub per_node: Vec<(usize, f64)>,
    pub worst: f64,
    pub mean: f64,
    /// Mean per-iteration times (ms) since the previous evaluation point.
    pub train_ms: f64,
    pub agg_ms: f64,
}

/// Metrics collected over a full run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub points: Vec<EvalPoint>,
    pub iterations: usize,
    pub total_train: Duration,
    pub total_agg: Duration,
}

impl RunRecord {
    pub fn final_worst(&self) -> Option<f64> {
        self.points.last().map(|p| p.worst)
    }

    pub fn mean_train_ms(&self) -> f64 {
        self.total_train.as_secs_f64() * 1000.0 / self.iterations.max(1) as f64
    }

    pub fn mean_agg_ms(&self) -> f64 {
        self.total_agg.as_secs_f64() * 1000.0 / self.iterations.max(1) as f64
    }
}

pub struct Simulation {
    topology: Topology,
    model: LossModel,
    rule: RuleConfig,
    attack: Option<AttackStrategy>,
    lr0: f64,
    fading: bool,
    batch_size: usize,
    shard_size: usize,
    iteration: usize,
    states: Vec<NodeState>,
}

impl Simulation {
    /// Build a simulation from explicit parts, validating every rule and
    /// attack precondition against the topology before iteration 0.
    pub fn from_setup(setup: SimulationSetup) -> Result<Self> {
        let SimulationSetup {
            topology,
            model,
            shards,
            x0,
            rule,
            attack,
            lr0,
            fading,
            batch_size,
            seed,
        } = setup;

        rule.validate()?;
        if batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if lr0 < 0.0 {
            return Err(Error::Config(format!("lr0 must be >= 0, got {lr0}")));
        }
        let n = topology.node_count();
        if shards.len() != n {
            return Err(Error::Config(format!(
                "{} shards for {} nodes",
                shards.len(),
                n
            )));
        }
        if x0.len() != model.dimension() {
            return Err(Error::DimensionMismatch {
                context: "initial estimate",
                expected: model.dimension(),
                got: x0.len(),
            });
        }
        for shard in &shards {
            if shard.is_empty() {
                return Err(Error::Empty("shard"));
            }
            for sample in &shard.samples {
                if sample.features.len() != model.input_dim() {
                    return Err(Error::DimensionMismatch {
                        context: "shard sample features",
                        expected: model.input_dim(),
                        got: sample.features.len(),
                    });
                }
            }
        }
        // Rule preconditions are degree-dependent; check every node now
        // rather than failing mid-training.
        for node in 0..n {
            let degree = topology.degree(node);
            if degree == 0 {
                continue;
            }
            let n_hat = rule.fault_bound(degree);
            match rule.rule {
                RuleKind::DBulyan if degree < 4 * n_hat + 1 => {
                    return Err(Error::RuleInapplicable {
                        rule: "dbulyan",
                        reason: format!(
                            "node {node} has {degree} neighbors but n_hat = {n_hat} requires at least {}",
                            4 * n_hat + 1
                        ),
                    });
                }
                RuleKind::Bridge if degree <= 2 * n_hat => {
                    return Err(Error::RuleInapplicable {
                        rule: "bridge",
                        reason: format!(
                            "node {node} has {degree} neighbors but n_hat = {n_hat} requires more than {}",
                            2 * n_hat
                        ),
                    });
                }
                _ => {}
            }
        }
        if let Some(strategy) = &attack {
            strategy.validate(&topology, model.dimension())?;
        }

        let shard_size = shards.iter().map(DataShard::len).max().unwrap_or(1);
        let states = shards
            .into_iter()
            .enumerate()
            .map(|(id, shard)| {
                // Stream 0 is the root stream; node i owns stream i + 1.
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(id as u64 + 1);
                NodeState {
                    id,
                    byzantine: topology.is_byzantine(id),
                    estimate: x0.clone(),
                    shard,
                    rng,
                    attack_state: AttackState::default(),
                }
            })
            .collect();

        Ok(Simulation {
            topology,
            model,
            rule,
            attack,
            lr0,
            fading,
            batch_size,
            shard_size,
            iteration: 0,
            states,
        })
    }

    /// Generate topology, data, shards, and the shared initial estimate
    /// from the config seed; returns the simulation plus the test set.
    pub fn prepare(config: &SimulationConfig) -> Result<(Self, Vec<Sample>)> {
        if config.model.resolve(1, 2).classes().is_none() {
            return Err(Error::UnsupportedMetric("quadratic"));
        }
        let mut root = ChaCha8Rng::seed_from_u64(config.seed);
        let topology = Topology::generate(
            config.n_benign,
            config.connection_ratio,
            config.byzantine_ratio,
            &mut root,
        )?;
        let (train, test, input_dim, classes) = load_dataset(&config.dataset, &mut root)?;
        let model = config.model.resolve(input_dim, classes);
        let shards = partition_iid(&train, topology.node_count(), &mut root)?;
        let x0 = initial_estimate(model.dimension(), &mut root);
        let attack = config.attack.as_ref().map(|a| a.resolve(model.dimension()));
        let sim = Simulation::from_setup(SimulationSetup {
            topology,
            model,
            shards,
            x0,
            rule: config.rule,
            attack,
            lr0: config.lr0,
            fading: config.fading,
            batch_size: config.batch_size,
            seed: config.seed,
        })?;
        Ok((sim, test))
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn model(&self) -> &LossModel {
        &self.model
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn estimate(&self, node: usize) -> &EstimateVector {
        &self.states[node].estimate
    }

    /// Overwrite one node's current estimate (heterogeneous starts).
    pub fn set_estimate(&mut self, node: usize, estimate: EstimateVector) -> Result<()> {
        if estimate.len() != self.model.dimension() {
            return Err(Error::DimensionMismatch {
                context: "estimate",
                expected: self.model.dimension(),
                got: estimate.len(),
            });
        }
        self.states[node].estimate = estimate;
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.states.len()
    }

    /// Default evaluation cadence: once per epoch-equivalent.
    pub fn epoch_iterations(&self) -> usize {
        self.shard_size.div_ceil(self.batch_size).max(1)
    }

    fn lambda_at(&self, iteration: usize) -> f64 {
        if self.fading {
            learning_rate(epoch_of(iteration, self.batch_size, self.shard_size), self.lr0)
        } else {
            self.lr0
        }
    }

    /// Run one synchronous iteration, processing nodes in id order.
    pub fn step(&mut self) -> Result<StepReport> {
        let order: Vec<usize> = (0..self.states.len()).collect();
        self.step_with_order(&order)
    }

    /// Run one synchronous iteration processing nodes in the given order.
    /// Results are bit-identical for every permutation; exposed so the
    /// round contract can be verified directly.
    pub fn step_with_order(&mut self, order: &[usize]) -> Result<StepReport> {
        let n = self.states.len();
        debug_assert_eq!(order.len(), n);

        // Broadcast phase: honest estimates, then Byzantine replacements
        // computed against the honest view.
        let honest: Vec<EstimateVector> =
            self.states.iter().map(|s| s.estimate.clone()).collect();
        let mut broadcasts = honest.clone();
        if let Some(strategy) = &self.attack {
            for (id, slot) in broadcasts.iter_mut().enumerate() {
                if !self.states[id].byzantine {
                    continue;
                }
                let view = AdversaryView {
                    broadcasts: &honest,
                    topology: &self.topology,
                    iteration: self.iteration,
                };
                let state = &mut self.states[id];
                *slot = byzantine_broadcast(
                    strategy,
                    &view,
                    id,
                    &mut state.attack_state,
                    &mut state.rng,
                )?;
            }
        }

        // Update phase: every node (Byzantine nodes keep an honest shadow)
        // reads only the frozen snapshot plus its own state.
        let lambda = self.lambda_at(self.iteration);
        let mut times = StepTimes::default();
        let mut per_node = Vec::with_capacity(n);
        for &id in order {
            let state = &mut self.states[id];

            let train_start = Instant::now();
            let batch = sample_batch(&state.shard, self.batch_size, &mut state.rng)?;
            let own_loss = loss(&self.model, &state.estimate, &batch)?;
            let grad = gradient(&self.model, &state.estimate, &batch)?;
            times.train += train_start.elapsed();

            let neighbor_ids = self.topology.neighbors(id);
            let outcome = if neighbor_ids.is_empty() {
                // Isolated node: plain SGD, the aggregate degenerates to the
                // node's own estimate.
                None
            } else {
                let neighbors = NeighborEstimates::from_entries(
                    neighbor_ids.iter().map(|&j| (j, broadcasts[j].clone())),
                )?;
                let model = &self.model;
                let loss_eval = move |candidate: &EstimateVector| {
                    loss(model, candidate, &batch).expect("dimensions validated at setup")
                };
                let ctx = AggregationContext {
                    own_estimate: &state.estimate,
                    own_loss,
                    neighbors: &neighbors,
                    loss_eval: &loss_eval,
                };
                let agg_start = Instant::now();
                let outcome = aggregate(&self.rule, &ctx).map_err(|e| match e {
                    Error::RuleInapplicable { rule, reason } => Error::RuleInapplicable {
                        rule,
                        reason: format!("node {id}: {reason}"),
                    },
                    other => other,
                })?;
                times.agg += agg_start.elapsed();
                Some(outcome)
            };

            let alpha = match (&outcome, self.rule.rule) {
                (None, _) => self.rule.alpha,
                (Some(_), RuleKind::Average) => 1.0 / (neighbor_ids.len() as f64 + 1.0),
                (Some(_), _) => self.rule.alpha,
            };
            let aggregated = outcome
                .as_ref()
                .map_or(&state.estimate, |o| &o.aggregate);
            let next = guf_update(&state.estimate, aggregated, &grad, alpha, lambda)?;
            if !next.all_finite() {
                return Err(Error::NonFiniteEstimate {
                    node: id,
                    iteration: self.iteration,
                });
            }
            state.estimate = next;
            per_node.push(NodeStepRecord {
                node: id,
                loss: own_loss,
                outcome,
            });
        }
        per_node.sort_by_key(|r| r.node);

        self.iteration += 1;
        Ok(StepReport { times, per_node })
    }

    /// Accuracy of every benign node on the test set, plus worst and mean.
    pub fn evaluate(&self, testset: &[Sample]) -> Result<Evaluation> {
        let mut per_node = Vec::new();
        for state in &self.states {
            if state.byzantine {
                continue;
            }
            per_node.push((state.id, accuracy(&self.model, &state.estimate, testset)?));
        }
        if per_node.is_empty() {
            return Err(Error::Empty("benign node set"));
        }
        let worst = per_node.iter().map(|&(_, a)| a).fold(f64::INFINITY, f64::min);
        let mean = per_node.iter().map(|&(_, a)| a).sum::<f64>() / per_node.len() as f64;
        Ok(Evaluation {
            per_node,
            worst,
            mean,
        })
    }

    /// Execute a full run: evaluate at iteration 0, then every `eval_every`
    /// iterations (default: once per epoch-equivalent) and after the final
    /// iteration. All accuracy output is bit-identical across repeat runs
    /// with the same config.
    pub fn run(config: &SimulationConfig) -> Result<RunRecord> {
        let (mut sim, testset) = Simulation::prepare(config)?;
        let cadence = match config.eval_every {
            Some(0) | None => sim.epoch_iterations(),
            Some(e) => e,
        };

        let mut points = Vec::new();
        let initial = sim.evaluate(&testset)?;
        points.push(EvalPoint {
            iteration: 0,
            epoch: 0,
            per_node: initial.per_node,
            worst: initial.worst,
            mean: initial.mean,
            train_ms: 0.0,
            agg_ms: 0.0,
        });

        let mut total = StepTimes::default();
        let mut window = StepTimes::default();
        let mut window_iters = 0usize;
        for k in 0..config.iterations {
            let report = sim.step()?;
            total.train += report.times.train;
            total.agg += report.times.agg;
            window.train += report.times.train;
            window.agg += report.times.agg;
            window_iters += 1;

            let done = k + 1 == config.iterations;
            if (k + 1) % cadence == 0 || done {
                let eval = sim.evaluate(&testset)?;
                points.push(EvalPoint {
                    iteration: k + 1,
                    epoch: epoch_of(k + 1, sim.batch_size, sim.shard_size),
                    per_node: eval.per_node,
                    worst: eval.worst,
                    mean: eval.mean,
                    train_ms: window.train.as_secs_f64() * 1000.0 / window_iters as f64,
                    agg_ms: window.agg.as_secs_f64() * 1000.0 / window_iters as f64,
                });
                window = StepTimes::default();
                window_iters = 0;
            }
        }

        Ok(RunRecord {
            points,
            iterations: config.iterations,
            total_train: total.train,
            total_agg: total.agg,
        })
    }
}

fn initial_estimate<R: Rng>(dim: usize, rng: &mut R) -> EstimateVector {
    // Shared x0 for all nodes, drawn once from Normal(0, 0.01^2).
    let init = Normal::new(0.0, 0.01).expect("fixed std");
    EstimateVector::new((0..dim).map(|_| init.sample(rng)).collect())
}

fn load_dataset<R: Rng>(
    dataset: &DatasetConfig,
    rng: &mut R,
) -> Result<(Vec<Sample>, Vec<Sample>, usize, usize)> {
    match dataset {
        DatasetConfig::Synthetic {
            train,
            test,
            dim,
            separation,
        } => {
            let train_set = two_class_blobs(*train, *dim, *separation, rng);
            let test_set = two_class_blobs(*test, *dim, *separation, rng);
            Ok((train_set, test_set, *dim, 2))
        }
        DatasetConfig::Mnist { dir, limit } => {
            let train_set = load_idx(
                &dir.join("train-images-idx3-ubyte"),
                &dir.join("train-labels-idx1-ubyte"),
                *limit,
            )?;
            let test_set = load_idx(
                &dir.join("t10k-images-idx3-ubyte"),
                &dir.join("t10k-labels-idx1-ubyte"),
                *limit,
            )?;
            Ok((train_set, test_set, 784, 10))
        }
    }
}
