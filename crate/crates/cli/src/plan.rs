//! Experiment plans: a base configuration plus sweep axes over
//! {nodes, connection_ratio, byzantine_ratio, rule, attack}, with
//! repetitions under derived seeds.

use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{bail, Context};
use serde::Deserialize;

use byzsim::aggregation::{RuleConfig, RuleKind};
use byzsim::simulator::{AttackConfig, DatasetConfig, ModelChoice, SimulationConfig};

/// Attack selection by name; parameters come from the shared config keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackChoice {
    None,
    Gaussian,
    BitFlip,
    Mhamdi,
    Targeted,
}

impl AttackChoice {
    pub fn name(&self) -> &'static str {
        match self {
            AttackChoice::None => "none",
            AttackChoice::Gaussian => "gaussian",
            AttackChoice::BitFlip => "bitflip",
            AttackChoice::Mhamdi => "mhamdi",
            AttackChoice::Targeted => "targeted",
        }
    }
}

impl FromStr for AttackChoice {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(AttackChoice::None),
            "gaussian" => Ok(AttackChoice::Gaussian),
            "bitflip" => Ok(AttackChoice::BitFlip),
            "mhamdi" => Ok(AttackChoice::Mhamdi),
            "targeted" => Ok(AttackChoice::Targeted),
            other => bail!("attack: unknown attack name `{other}`"),
        }
    }
}

/// A scalar or a list; lists act as sweep axes.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn values(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(vs) => vs.clone(),
        }
    }
}

/// On-disk config schema. Unknown keys are rejected, naming the offender.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub nodes: Option<OneOrMany<usize>>,
    pub connection_ratio: Option<OneOrMany<f64>>,
    pub byzantine_ratio: Option<OneOrMany<f64>>,
    pub rule: Option<OneOrMany<String>>,
    pub attack: Option<OneOrMany<String>>,
    pub alpha: Option<f64>,
    pub rho: Option<f64>,
    pub rho_central: Option<f64>,
    pub lr0: Option<f64>,
    pub fading: Option<bool>,
    pub batch_size: Option<usize>,
    pub iterations: Option<usize>,
    pub eval_every: Option<usize>,
    pub model: Option<String>,
    pub dataset: Option<String>,
    pub mnist_limit: Option<usize>,
    pub mnist_dir: Option<String>,
    pub sigma: Option<f64>,
    pub zeta: Option<f64>,
    pub k0: Option<usize>,
    pub target: Option<usize>,
    pub x_hat_scale: Option<f64>,
    pub repetitions: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<String>,
}

/// Command-line overrides; every config key has a flag counterpart.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub nodes: Option<usize>,
    pub connection_ratio: Option<f64>,
    pub byzantine_ratio: Option<f64>,
    pub rule: Option<String>,
    pub attack: Option<String>,
    pub alpha: Option<f64>,
    pub rho: Option<f64>,
    pub rho_central: Option<f64>,
    pub lr0: Option<f64>,
    pub fading: Option<bool>,
    pub batch_size: Option<usize>,
    pub iterations: Option<usize>,
    pub eval_every: Option<usize>,
    pub model: Option<String>,
    pub dataset: Option<String>,
    pub mnist_limit: Option<usize>,
    pub mnist_dir: Option<String>,
    pub sigma: Option<f64>,
    pub zeta: Option<f64>,
    pub k0: Option<usize>,
    pub target: Option<usize>,
    pub x_hat_scale: Option<f64>,
    pub repetitions: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<String>,
}

/// Shared per-run parameters after validation.
#[derive(Debug, Clone)]
pub struct BaseParams {
    pub alpha: f64,
    pub rho: f64,
    pub rho_central: f64,
    pub lr0: f64,
    pub fading: bool,
    pub batch_size: usize,
    pub iterations: usize,
    pub eval_every: Option<usize>,
    pub model: ModelChoice,
    pub dataset: DatasetConfig,
    pub sigma: f64,
    pub zeta: f64,
    pub k0: usize,
    pub target: usize,
    pub x_hat_scale: f64,
}

/// A validated experiment plan: the cross-product of the sweep axes times
/// the repetition count, enumerated deterministically.
#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub base: BaseParams,
    pub nodes: Vec<usize>,
    pub connection_ratios: Vec<f64>,
    pub byzantine_ratios: Vec<f64>,
    pub rules: Vec<RuleKind>,
    pub attacks: Vec<AttackChoice>,
    pub repetitions: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
}

/// One enumerated run of a plan.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub run_id: String,
    pub index: usize,
    pub n_benign: usize,
    pub connection_ratio: f64,
    pub byzantine_ratio: f64,
    pub rule: RuleKind,
    pub attack: AttackChoice,
    pub seed: u64,
    pub config: SimulationConfig,
}

fn check_range(key: &str, value: f64, lo: f64, hi: f64, lo_open: bool, hi_open: bool) -> anyhow::Result<()> {
    let lo_ok = if lo_open { value > lo } else { value >= lo };
    let hi_ok = if hi_open { value < hi } else { value <= hi };
    if !(lo_ok && hi_ok && value.is_finite()) {
        let lo_b = if lo_open { "(" } else { "[" };
        let hi_b = if hi_open { ")" } else { "]" };
        bail!("{key}: must be in {lo_b}{lo}, {hi}{hi_b}, got {value}");
    }
    Ok(())
}

impl ExperimentPlan {
    /// Merge a parsed config file (if any) with flag overrides and validate
    /// everything. Errors name the offending key.
    pub fn build(file: Option<ConfigFile>, over: &Overrides) -> anyhow::Result<ExperimentPlan> {
        let file = file.unwrap_or_default();

        let nodes = match &over.nodes {
            Some(n) => vec![*n],
            None => file.nodes.as_ref().map_or(vec![10], |v| v.values()),
        };
        let connection_ratios = match &over.connection_ratio {
            Some(c) => vec![*c],
            None => file
                .connection_ratio
                .as_ref()
                .map_or(vec![0.4], |v| v.values()),
        };
        let byzantine_ratios = match &over.byzantine_ratio {
            Some(b) => vec![*b],
            None => file
                .byzantine_ratio
                .as_ref()
                .map_or(vec![0.0], |v| v.values()),
        };
        let rule_names = match &over.rule {
            Some(r) => vec![r.clone()],
            None => file
                .rule
                .as_ref()
                .map_or(vec!["ubar".to_string()], |v| v.values()),
        };
        let attack_names = match &over.attack {
            Some(a) => vec![a.clone()],
            None => file
                .attack
                .as_ref()
                .map_or(vec!["none".to_string()], |v| v.values()),
        };

        let mut rules = Vec::new();
        for name in &rule_names {
            rules.push(
                RuleKind::from_str(name).with_context(|| format!("rule: bad value `{name}`"))?,
            );
        }
        let mut attacks = Vec::new();
        for name in &attack_names {
            attacks.push(AttackChoice::from_str(name)?);
        }

        if nodes.is_empty()
            || connection_ratios.is_empty()
            || byzantine_ratios.is_empty()
            || rules.is_empty()
            || attacks.is_empty()
        {
            bail!("sweep axes must be non-empty");
        }
        for &n in &nodes {
            if n < 2 {
                bail!("nodes: need at least 2 benign nodes, got {n}");
            }
        }
        for &c in &connection_ratios {
            check_range("connection_ratio", c, 0.0, 1.0, true, false)?;
        }
        for &b in &byzantine_ratios {
            check_range("byzantine_ratio", b, 0.0, 1.0, false, true)?;
        }

        let alpha = over.alpha.or(file.alpha).unwrap_or(0.5);
        check_range("alpha", alpha, 0.0, 1.0, false, false)?;
        let rho = over.rho.or(file.rho).unwrap_or(0.4);
        check_range("rho", rho, 0.0, 1.0, true, false)?;
        let rho_central = over.rho_central.or(file.rho_central).unwrap_or(1.0 / 3.0);
        check_range("rho_central", rho_central, 0.0, 1.0, true, true)?;
        let lr0 = over.lr0.or(file.lr0).unwrap_or(0.05);
        if !(lr0 >= 0.0 && lr0.is_finite()) {
            bail!("lr0: must be >= 0, got {lr0}");
        }
        let fading = over.fading.or(file.fading).unwrap_or(true);
        let batch_size = over.batch_size.or(file.batch_size).unwrap_or(16);
        if batch_size == 0 {
            bail!("batch_size: must be >= 1");
        }
        let iterations = over.iterations.or(file.iterations).unwrap_or(500);
        let eval_every = match over.eval_every.or(file.eval_every) {
            Some(0) | None => None,
            Some(e) => Some(e),
        };
        let sigma = over.sigma.or(file.sigma).unwrap_or(1.0);
        if !(sigma > 0.0 && sigma.is_finite()) {
            bail!("sigma: must be > 0, got {sigma}");
        }
        let zeta = over.zeta.or(file.zeta).unwrap_or(1.0);
        check_range("zeta", zeta, 0.0, 1.0, false, false)?;
        let k0 = over.k0.or(file.k0).unwrap_or(10);
        let target = over.target.or(file.target).unwrap_or(0);
        let x_hat_scale = over.x_hat_scale.or(file.x_hat_scale).unwrap_or(1.0);
        let repetitions = over.repetitions.or(file.repetitions).unwrap_or(1);
        if repetitions == 0 {
            bail!("repetitions: must be >= 1");
        }
        let seed = over.seed.or(file.seed).unwrap_or(42);
        let out_dir = PathBuf::from(
            over.out
                .clone()
                .or(file.out.clone())
                .unwrap_or_else(|| "results".to_string()),
        );

        let model_name = over
            .model
            .clone()
            .or(file.model.clone())
            .unwrap_or_else(|| "softmax".to_string());
        let model = match model_name.to_ascii_lowercase().as_str() {
            "quadratic" => ModelChoice::Quadratic,
            "softmax" => ModelChoice::Softmax,
            "mlp" => ModelChoice::Mlp { hidden: 32 },
            other => bail!("model: unknown model `{other}` (quadratic|softmax|mlp)"),
        };
        if matches!(model, ModelChoice::Quadratic) {
            bail!("model: the quadratic model has no accuracy metric; experiment runs need softmax or mlp");
        }

        let dataset_name = over
            .dataset
            .clone()
            .or(file.dataset.clone())
            .unwrap_or_else(|| "synthetic".to_string());
        let mnist_limit = match over.mnist_limit.or(file.mnist_limit) {
            Some(0) | None => None,
            Some(l) => Some(l),
        };
        let mnist_dir = over
            .mnist_dir
            .clone()
            .or(file.mnist_dir.clone())
            .unwrap_or_else(|| "data/mnist".to_string());
        let dataset = match dataset_name.to_ascii_lowercase().as_str() {
            "synthetic" => DatasetConfig::synthetic_default(),
            "mnist" => DatasetConfig::Mnist {
                dir: PathBuf::from(mnist_dir),
                limit: mnist_limit,
            },
            other => bail!("dataset: unknown dataset `{other}` (synthetic|mnist)"),
        };

        Ok(ExperimentPlan {
            base: BaseParams {
                alpha,
                rho,
                rho_central,
                lr0,
                fading,
                batch_size,
                iterations,
                eval_every,
                model,
                dataset,
                sigma,
                zeta,
                k0,
                target,
                x_hat_scale,
            },
            nodes,
            connection_ratios,
            byzantine_ratios,
            rules,
            attacks,
            repetitions,
            seed,
            out_dir,
        })
    }

    /// Enumerate the cross-product nodes x connection x byzantine x rule x
    /// attack x repetition, in that nesting order. Runs sharing a
    /// repetition index share a seed, so rules and attacks are compared on
    /// identical topologies and data.
    pub fn runs(&self) -> Vec<RunSpec> {
        let mut specs = Vec::new();
        let mut index = 0;
        for &n_benign in &self.nodes {
            for &connection_ratio in &self.connection_ratios {
                for &byzantine_ratio in &self.byzantine_ratios {
                    for &rule in &self.rules {
                        for &attack in &self.attacks {
                            for rep in 0..self.repetitions {
                                let seed = derive_seed(self.seed, rep);
                                let config = self.config_for(
                                    n_benign,
                                    connection_ratio,
                                    byzantine_ratio,
                                    rule,
                                    attack,
                                    seed,
                                );
                                specs.push(RunSpec {
                                    run_id: format!(
                                        "{index:03}_n{n_benign}_c{connection_ratio}_b{byzantine_ratio}_{}_{}_r{rep}",
                                        rule.name(),
                                        attack.name()
                                    ),
                                    index,
                                    n_benign,
                                    connection_ratio,
                                    byzantine_ratio,
                                    rule,
                                    attack,
                                    seed,
                                    config,
                                });
                                index += 1;
                            }
                        }
                    }
                }
            }
        }
        specs
    }

    fn config_for(
        &self,
        n_benign: usize,
        connection_ratio: f64,
        byzantine_ratio: f64,
        rule: RuleKind,
        attack: AttackChoice,
        seed: u64,
    ) -> SimulationConfig {
        let base = &self.base;
        let attack_config = match attack {
            AttackChoice::None => None,
            AttackChoice::Gaussian => Some(AttackConfig::Gaussian { sigma: base.sigma }),
            AttackChoice::BitFlip => Some(AttackConfig::BitFlip),
            AttackChoice::Mhamdi => Some(AttackConfig::Mhamdi { zeta: base.zeta }),
            AttackChoice::Targeted => Some(AttackConfig::Targeted {
                target: base.target,
                x_hat_scale: base.x_hat_scale,
                k0: base.k0,
            }),
        };
        SimulationConfig {
            n_benign,
            connection_ratio,
            byzantine_ratio,
            rule: RuleConfig {
                rule,
                alpha: base.alpha,
                rho: base.rho,
                rho_central: base.rho_central,
            },
            attack: attack_config,
            lr0: base.lr0,
            fading: base.fading,
            batch_size: base.batch_size,
            iterations: base.iterations,
            eval_every: base.eval_every,
            seed,
            model: base.model,
            dataset: base.dataset.clone(),
        }
    }
}

/// Per-repetition seed: repetition r uses `base + r` so repeated axes
/// combinations see different draws while rules/attacks at the same
/// repetition share one topology and dataset.
fn derive_seed(base: u64, rep: usize) -> u64 {
    base.wrapping_add(rep as u64)
}

/// Parse a TOML config file.
pub fn parse_config_str(text: &str) -> anyhow::Result<ConfigFile> {
    toml::from_str(text).map_err(|e| anyhow::anyhow!("{e}"))
}

pub fn parse_config_file(path: &std::path::Path) -> anyhow::Result<ConfigFile> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    parse_config_str(&text).with_context(|| format!("parsing config {}", path.display()))
}
