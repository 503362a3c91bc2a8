//! Byzantine node behaviors: what a faulty node broadcasts each iteration.
//!
//! Strategies only shape broadcasts; they never touch benign node state
//! directly. Every strategy is pure given `(view, RNG stream, per-node
//! attack memory)`, so Byzantine nodes can be processed in any order.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::EstimateVector;
use crate::topology::Topology;

/// Runtime attack behavior for Byzantine nodes.
#[derive(Debug, Clone, PartialEq)]
pub enum AttackStrategy {
    /// Broadcast a fresh vector with iid Normal(0, sigma^2) coordinates.
    Gaussian { sigma: f64 },
    /// Broadcast the sign-flipped honest estimate.
    BitFlip,
    /// Camouflage inside the benign neighborhood: the broadcast sits at
    /// distance `zeta * r` from the benign neighbors' mean, pushed along the
    /// estimated ascent direction.
    Mhamdi { zeta: f64 },
    /// Single-shot amplified injection that lands an exact `shift` on the
    /// target after one iteration per hop, assuming the Average rule with
    /// per-node mixing `1 / (|N_i| + 1)`.
    Targeted {
        target: usize,
        shift: EstimateVector,
        inject_at: usize,
    },
}

impl AttackStrategy {
    pub fn kind_name(&self) -> &'static str {
        match self {
            AttackStrategy::Gaussian { .. } => "gaussian",
            AttackStrategy::BitFlip => "bitflip",
            AttackStrategy::Mhamdi { .. } => "mhamdi",
            AttackStrategy::Targeted { .. } => "targeted",
        }
    }

    /// Check strategy parameters against a topology and estimate dimension.
    pub fn validate(&self, topology: &Topology, dim: usize) -> Result<()> {
        match self {
            AttackStrategy::Gaussian { sigma } => {
                if *sigma <= 0.0 || !sigma.is_finite() {
                    return Err(Error::Config(format!("sigma must be > 0, got {sigma}")));
                }
            }
            AttackStrategy::BitFlip => {}
            AttackStrategy::Mhamdi { zeta } => {
                // zeta = 0 is the degenerate pure-camouflage case.
                if !(0.0..=1.0).contains(zeta) {
                    return Err(Error::Config(format!(
                        "zeta must be in [0, 1], got {zeta}"
                    )));
                }
            }
            AttackStrategy::Targeted { target, shift, .. } => {
                if *target >= topology.node_count() {
                    return Err(Error::Config(format!(
                        "target node {target} does not exist"
                    )));
                }
                if topology.is_byzantine(*target) {
                    return Err(Error::Config(format!(
                        "target node {target} must be benign"
                    )));
                }
                if shift.len() != dim {
                    return Err(Error::DimensionMismatch {
                        context: "targeted shift",
                        expected: dim,
                        got: shift.len(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Read-only snapshot the adversary sees at one iteration: the honest
/// broadcast of every node (indexed by id), the topology, and the iteration.
pub struct AdversaryView<'a> {
    pub broadcasts: &'a [EstimateVector],
    pub topology: &'a Topology,
    pub iteration: usize,
}

/// Per-node attack memory, carried across iterations.
#[derive(Debug, Clone, Default)]
pub struct AttackState {
    /// Previous-iteration benign-neighbor mean (Mhamdi direction estimate).
    pub prev_mu: Option<EstimateVector>,
}

/// Fresh vector with iid Normal(0, sigma^2) coordinates from the node's
/// private stream.
pub fn gaussian_attack<R: Rng>(dim: usize, sigma: f64, rng: &mut R) -> EstimateVector {
    let normal = Normal::new(0.0, sigma).expect("sigma validated at config time");
    EstimateVector::new((0..dim).map(|_| normal.sample(rng)).collect())
}

/// Coordinate-wise negation of the estimate the node would honestly send.
pub fn bitflip_attack(honest: &EstimateVector) -> EstimateVector {
    honest.negated()
}

/// Camouflaged broadcast around the mean of the victim's benign neighbors.
///
/// With `mu` that mean and `r` the largest distance from any such broadcast
/// to `mu`, returns `mu + zeta * r * u`, where `u` is the unit vector along
/// the negated recent movement of `mu` (the estimated ascent direction), or
/// the first coordinate axis when no previous `mu` is available. Falls back
/// to a unit-sigma Gaussian broadcast when the victim has no benign
/// neighbors in view. The second return value is the `mu` to remember for
/// the next iteration.
pub fn mhamdi_attack<R: Rng>(
    view: &AdversaryView<'_>,
    victim: usize,
    zeta: f64,
    prev_mu: Option<&EstimateVector>,
    rng: &mut R,
) -> (EstimateVector, Option<EstimateVector>) {
    let benign_neighbors: Vec<&EstimateVector> = view
        .topology
        .neighbors(victim)
        .iter()
        .filter(|&&j| !view.topology.is_byzantine(j))
        .map(|&j| &view.broadcasts[j])
        .collect();
    if benign_neighbors.is_empty() {
        let dim = view.broadcasts[victim].len();
        return (gaussian_attack(dim, 1.0, rng), None);
    }

    let mu = EstimateVector::mean_of(benign_neighbors.iter().copied()).expect("non-empty");
    let radius = benign_neighbors
        .iter()
        .map(|v| v.distance(&mu))
        .fold(0.0, f64::max);

    let direction = match prev_mu {
        Some(prev) => {
            let reversed = prev.sub(&mu);
            let norm = reversed.norm();
            if norm > 1e-15 {
                reversed.scaled(1.0 / norm)
            } else {
                axis_zero(mu.len())
            }
        }
        None => axis_zero(mu.len()),
    };

    let broadcast = mu.add(&direction.scaled(zeta * radius));
    (broadcast, Some(mu))
}

fn axis_zero(dim: usize) -> EstimateVector {
    let mut v = vec![0.0; dim];
    if dim > 0 {
        v[0] = 1.0;
    }
    EstimateVector::new(v)
}

/// The amplified single-broadcast injection. Computes the shortest path
/// from `attacker` to `target` whose interior nodes are benign, multiplies
/// the malicious shift by `prod_{s=1..tau'} (|N_{i_s}| + 1)` over the path
/// nodes past the attacker, and adds it to the honest broadcast. Under the
/// Average rule each hop divides by exactly one such factor, so the shift
/// arrives at the target intact after `tau'` iterations.
pub fn targeted_injection(
    view: &AdversaryView<'_>,
    attacker: usize,
    target: usize,
    x_hat: &EstimateVector,
) -> Result<EstimateVector> {
    if attacker == target {
        return Err(Error::AttackInapplicable(
            "attacker cannot target itself".into(),
        ));
    }
    let path = view
        .topology
        .shortest_path_through_benign(attacker, target)
        .map_err(|_| {
            Error::AttackInapplicable(format!(
                "no benign path from attacker {attacker} to target {target}"
            ))
        })?;
    let multiplier: f64 = path[1..]
        .iter()
        .map(|&node| (view.topology.degree(node) + 1) as f64)
        .product();
    Ok(view.broadcasts[attacker].add(&x_hat.scaled(multiplier)))
}

/// Produce the Byzantine node's broadcast for this iteration. The result is
/// sent identically to all its neighbors.
pub fn byzantine_broadcast<R: Rng>(
    strategy: &AttackStrategy,
    view: &AdversaryView<'_>,
    node: usize,
    state: &mut AttackState,
    rng: &mut R,
) -> Result<EstimateVector> {
    debug_assert!(view.topology.is_byzantine(node));
    let honest = &view.broadcasts[node];
    match strategy {
        AttackStrategy::Gaussian { sigma } => Ok(gaussian_attack(honest.len(), *sigma, rng)),
        AttackStrategy::BitFlip => Ok(bitflip_attack(honest)),
        AttackStrategy::Mhamdi { zeta } => {
            let (broadcast, mu) = mhamdi_attack(view, node, *zeta, state.prev_mu.as_ref(), rng);
            state.prev_mu = mu;
            Ok(broadcast)
        }
        AttackStrategy::Targeted {
            target,
            shift,
            inject_at,
        } => {
            if view.iteration == *inject_at {
                targeted_injection(view, node, *target, shift)
            } else {
                Ok(honest.clone())
            }
        }
    }
}
