//! CSV serialization. Numbers carry 6 significant digits; files are
//! written atomically (temp file + rename) per run.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::Context;

use byzsim::simulator::RunRecord;

use crate::plan::RunSpec;

pub const RUN_HEADER: &str = "iteration,epoch,worst_acc,mean_acc,train_ms,agg_ms";
pub const SUMMARY_HEADER: &str =
    "run_id,n_benign,conn_ratio,byz_ratio,rule,attack,seed,final_worst_acc";
pub const TIMING_HEADER: &str = "rule,mean_train_ms,mean_agg_ms";

/// Format with 6 significant digits, trimming trailing zeros. Magnitudes
/// outside [1e-4, 1e6) switch to scientific notation.
pub fn fmt_sig(value: f64) -> String {
    if value == 0.0 {
        return "0".to_string();
    }
    if !value.is_finite() {
        return value.to_string();
    }
    let exponent = value.abs().log10().floor() as i32;
    if !(-4..6).contains(&exponent) {
        return format!("{value:.5e}");
    }
    let decimals = (5 - exponent).max(0) as usize;
    let mut s = format!("{value:.decimals$}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    s
}

/// Atomically write `content` to `path` via a sibling temp file.
pub fn write_atomic(path: &Path, content: &str) -> anyhow::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let tmp = path.with_extension("tmp");
    {
        let mut file =
            fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        file.write_all(content.as_bytes())?;
        file.sync_all()?;
    }
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// Per-run CSV: one row per evaluation point.
pub fn run_csv(record: &RunRecord) -> String {
    let mut out = String::from(RUN_HEADER);
    out.push('\n');
    for p in &record.points {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            p.iteration,
            p.epoch,
            fmt_sig(p.worst),
            fmt_sig(p.mean),
            fmt_sig(p.train_ms),
            fmt_sig(p.agg_ms),
        ));
    }
    out
}

pub fn summary_row(spec: &RunSpec, record: &RunRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{}",
        spec.run_id,
        spec.n_benign,
        fmt_sig(spec.connection_ratio),
        fmt_sig(spec.byzantine_ratio),
        spec.rule.name(),
        spec.attack.name(),
        spec.seed,
        fmt_sig(record.final_worst().unwrap_or(f64::NAN)),
    )
}
