//! Sweep execution: runs the plan's configurations (optionally in
//! parallel), writes one CSV per run plus `summary.csv` and `timing.csv`,
//! and reports per-run failures without aborting the sweep.

use std::collections::BTreeMap;
use std::sync::Mutex;

use anyhow::Context;
use rayon::prelude::*;

use byzsim::simulator::{RunRecord, Simulation};

use crate::output::{run_csv, summary_row, write_atomic, SUMMARY_HEADER, TIMING_HEADER};
use crate::output::fmt_sig;
use crate::plan::{ExperimentPlan, RunSpec};

pub struct RunFailure {
    pub run_id: String,
    pub error: String,
}

pub struct ExecutionReport {
    pub completed: usize,
    pub failures: Vec<RunFailure>,
    pub topology_exports: usize,
}

/// Execute every run in the plan. `threads` caps rayon parallelism
/// (0 = library default). Completed runs are written even when others fail.
pub fn execute(
    plan: &ExperimentPlan,
    threads: usize,
    export_topology: bool,
) -> anyhow::Result<ExecutionReport> {
    let specs = plan.runs();
    std::fs::create_dir_all(&plan.out_dir)
        .with_context(|| format!("creating output dir {}", plan.out_dir.display()))?;

    let results: Mutex<Vec<(usize, Result<RunRecord, String>)>> = Mutex::new(Vec::new());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .context("building thread pool")?;

    pool.install(|| {
        specs.par_iter().for_each(|spec| {
            let outcome = run_one(plan, spec, export_topology);
            results.lock().unwrap().push((spec.index, outcome));
        });
    });

    let mut results = results.into_inner().unwrap();
    results.sort_by_key(|(index, _)| *index);

    // summary.csv in plan order, completed runs only.
    let mut summary = String::from(SUMMARY_HEADER);
    summary.push('\n');
    let mut failures = Vec::new();
    let mut per_rule: BTreeMap<usize, (f64, f64, usize)> = BTreeMap::new();
    let rule_order: Vec<&str> = plan.rules.iter().map(|r| r.name()).collect();
    let mut completed = 0;
    for (index, outcome) in &results {
        let spec = &specs[*index];
        match outcome {
            Ok(record) => {
                completed += 1;
                summary.push_str(&summary_row(spec, record));
                summary.push('\n');
                let rule_idx = rule_order
                    .iter()
                    .position(|r| *r == spec.rule.name())
                    .unwrap_or(0);
                let entry = per_rule.entry(rule_idx).or_insert((0.0, 0.0, 0));
                entry.0 += record.mean_train_ms();
                entry.1 += record.mean_agg_ms();
                entry.2 += 1;
            }
            Err(message) => failures.push(RunFailure {
                run_id: spec.run_id.clone(),
                error: message.clone(),
            }),
        }
    }
    write_atomic(&plan.out_dir.join("summary.csv"), &summary)?;

    // timing.csv: mean per-iteration times per rule, in plan order.
    let mut timing = String::from(TIMING_HEADER);
    timing.push('\n');
    for (rule_idx, (train, agg, count)) in &per_rule {
        timing.push_str(&format!(
            "{},{},{}\n",
            rule_order[*rule_idx],
            fmt_sig(train / *count as f64),
            fmt_sig(agg / *count as f64),
        ));
    }
    write_atomic(&plan.out_dir.join("timing.csv"), &timing)?;

    Ok(ExecutionReport {
        completed,
        failures,
        topology_exports: if export_topology { completed } else { 0 },
    })
}

fn run_one(
    plan: &ExperimentPlan,
    spec: &RunSpec,
    export_topology: bool,
) -> Result<RunRecord, String> {
    if export_topology {
        if let Err(e) = export_run_topology(plan, spec) {
            return Err(e.to_string());
        }
    }
    let record = Simulation::run(&spec.config).map_err(|e| e.to_string())?;
    let path = plan.out_dir.join(format!("run_{}.csv", spec.run_id));
    write_atomic(&path, &run_csv(&record)).map_err(|e| e.to_string())?;
    Ok(record)
}

fn export_run_topology(plan: &ExperimentPlan, spec: &RunSpec) -> anyhow::Result<()> {
    use byzsim::Topology;
    use rand::SeedableRng;

    // Regenerate the run's topology from its seed (stream 0, first draw),
    // mirroring Simulation::prepare.
    let mut root = rand_chacha::ChaCha8Rng::seed_from_u64(spec.seed);
    let topology = Topology::generate(
        spec.n_benign,
        spec.connection_ratio,
        spec.byzantine_ratio,
        &mut root,
    )?;
    let mut buf = Vec::new();
    topology.write_edge_list(&mut buf)?;
    write_atomic(
        &plan.out_dir.join(format!("topology_{}.txt", spec.run_id)),
        &String::from_utf8(buf).expect("edge list is ascii"),
    )
}
