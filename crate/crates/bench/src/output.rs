//! Result files. Everything except `timings.csv` and the manifest's
//! wall-clock fields is a deterministic function of the configuration.

use std::fs;
use std::path::Path;

use csv::Writer;
use serde_json::json;

use crate::config::{ExperimentConfig, KEYS};
use crate::experiment::{ExperimentOutput, RunRecord};
use crate::Result;

pub const RESULTS_HEADER: [&str; 29] = [
    "id",
    "experiment",
    "n",
    "replicate",
    "sampler",
    "seed",
    "stream",
    "dataset_hash",
    "sum_y",
    "n_draws",
    "acceptance",
    "accept_rate_adapt",
    "accept_rate_frozen",
    "ess_min",
    "ess_median",
    "ess_max",
    "ess_per_1000_median",
    "t_eff_ratio_median",
    "t_eff_ratio_q025",
    "t_eff_ratio_q975",
    "acf_lag1_median",
    "acf_lag10_median",
    "acf_lag40_median",
    "fmi_median",
    "final_mean_log_r",
    "final_mean_b",
    "transform_rmse",
    "prediction_rmse",
    "n_coords",
];

pub const COORDS_HEADER: [&str; 10] = ["id", "coord", "mean", "sd", "q025", "q975", "ess", "ess_per_iter", "sampler", "n"];

pub const TIMINGS_HEADER: [&str; 6] = ["id", "adapt_sec", "burn_sec", "sample_sec", "total_sec", "sec_per_ess_median"];

fn num(x: f64) -> String {
    if x.is_nan() {
        "NA".into()
    } else {
        format!("{x}")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_else(|| "NA".into())
}

fn results_row(r: &RunRecord) -> Vec<String> {
    let s = &r.summary;
    vec![
        r.id.clone(),
        r.experiment.to_string(),
        num(r.n),
        r.replicate.to_string(),
        r.sampler.clone(),
        r.seed.to_string(),
        r.stream.to_string(),
        r.dataset_hash.clone(),
        num(r.sum_y),
        s.n_draws.to_string(),
        num(s.acceptance),
        opt(r.accept_rate_adapt),
        opt(r.accept_rate_frozen),
        num(s.ess_min),
        num(s.ess_median),
        num(s.ess_max),
        num(r.ess_per_1000()),
        num(s.t_eff_ratio_median),
        num(s.t_eff_ratio_q025),
        num(s.t_eff_ratio_q975),
        num(r.acf_median(1)),
        num(r.acf_median(10)),
        num(r.acf_median(40)),
        opt(r.fmi_median),
        num(r.final_mean_log_r),
        num(r.final_mean_b),
        opt(r.transform_rmse),
        opt(r.prediction_rmse),
        s.coords.len().to_string(),
    ]
}

fn write_acf(dir: &Path, r: &RunRecord) -> Result<()> {
    let mut w = Writer::from_path(dir.join(format!("acf_{}.csv", r.id)))?;
    w.write_record(["lag", "coord", "value"])?;
    for (name, values) in &r.acf {
        for (lag, v) in values.iter().enumerate() {
            w.write_record([lag.to_string(), name.clone(), num(*v)])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_adaptation(dir: &Path, r: &RunRecord) -> Result<()> {
    if r.adaptation.is_empty() {
        return Ok(());
    }
    let mut w = Writer::from_path(dir.join(format!("adapt_{}.csv", r.id)))?;
    w.write_record(["iter", "mean_log_r", "mean_b", "acceptance"])?;
    for a in &r.adaptation {
        w.write_record([a.iter.to_string(), num(a.mean_log_r), num(a.mean_b), num(a.acceptance)])?;
    }
    w.flush()?;
    Ok(())
}

fn write_transform(dir: &Path, r: &RunRecord) -> Result<()> {
    let Some(pairs) = &r.transform else { return Ok(()) };
    let mut w = Writer::from_path(dir.join(format!("transform_{}.csv", r.id)))?;
    w.write_record(["obs", "eta", "eta_transformed"])?;
    for (i, (a, b)) in pairs.iter().enumerate() {
        w.write_record([i.to_string(), num(*a), num(*b)])?;
    }
    w.flush()?;
    Ok(())
}

fn write_trace(dir: &Path, r: &RunRecord) -> Result<()> {
    let Some(t) = &r.trace else { return Ok(()) };
    let mut w = Writer::from_path(dir.join(format!("trace_{}.csv", r.id)))?;
    w.write_record(["iter", "coord", "value"])?;
    for k in 0..t.n_rows() {
        for (j, name) in t.coord_names.iter().enumerate() {
            w.write_record([k.to_string(), name.clone(), num(t.theta_samples[(k, j)])])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes every result file for `output` under `cfg.out`. `config_text` is
/// the contents of the configuration file, if one was used.
pub fn write_outputs(cfg: &ExperimentConfig, output: &ExperimentOutput, config_text: Option<&str>) -> Result<()> {
    let dir = cfg.out.as_path();
    fs::create_dir_all(dir)?;

    let mut results = Writer::from_path(dir.join("results.csv"))?;
    results.write_record(RESULTS_HEADER)?;
    let mut coords = Writer::from_path(dir.join("coords.csv"))?;
    coords.write_record(COORDS_HEADER)?;
    let mut timings = Writer::from_path(dir.join("timings.csv"))?;
    timings.write_record(TIMINGS_HEADER)?;

    for r in &output.records {
        results.write_record(results_row(r))?;
        for c in &r.summary.coords {
            coords.write_record([
                r.id.clone(),
                c.name.clone(),
                num(c.mean),
                num(c.sd),
                num(c.q025),
                num(c.q975),
                num(c.ess),
                num(c.ess_per_iter),
                r.sampler.clone(),
                num(r.n),
            ])?;
        }
        let t = &r.timings;
        timings.write_record([
            r.id.clone(),
            num(t.adapt.as_secs_f64()),
            num(t.burn.as_secs_f64()),
            num(t.sample.as_secs_f64()),
            num(t.total().as_secs_f64()),
            num(crate::experiment::sec_per_ess(r)),
        ])?;
        write_acf(dir, r)?;
        write_adaptation(dir, r)?;
        write_transform(dir, r)?;
        write_trace(dir, r)?;
    }
    results.flush()?;
    coords.flush()?;
    timings.flush()?;

    let keys: serde_json::Map<String, serde_json::Value> =
        KEYS.iter().map(|(k, doc)| (k.to_string(), json!(doc))).collect();
    let manifest = json!({
        "experiment": cfg.experiment.to_string(),
        "config": cfg.entries(),
        "config_file": config_text,
        "keys": keys,
        "versions": { "cda-core": cda_core::VERSION, "cda-bench": env!("CARGO_PKG_VERSION") },
        "records": output.records.iter().map(|r| r.id.clone()).collect::<Vec<_>>(),
        "failures": output.failures.iter().map(|f| json!({ "id": f.id, "message": f.message })).collect::<Vec<_>>(),
    });
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}
