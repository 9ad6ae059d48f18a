//! Output files: metric tables, traces, figure series, policies and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::run::{MetricRow, SlotRecord, SweepOutput, Trace};
use crate::hppo::checkpoint::{hash_json, write_learning_curve};
use crate::{Error, Result};

pub const METRIC_HEADER: [&str; 11] = [
    "variable",
    "value",
    "mode",
    "controller",
    "fairness",
    "realizations",
    "mean_sum_rate",
    "ci95_half_width",
    "outage",
    "energy_efficiency",
    "jain",
];

pub const TRACE_HEADER: [&str; 9] = [
    "slot",
    "uav_x",
    "uav_y",
    "reward",
    "sum_rate",
    "worst_rate",
    "total_power",
    "energy_efficiency",
    "jain",
];

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::io(path, e.into())
}

fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(header).map_err(csv_err(path))?;
    for r in rows {
        w.write_record(&r).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn fairness_str(row: &MetricRow) -> &'static str {
    match row.fairness {
        super::config::Fairness::Off => "off",
        super::config::Fairness::On => "on",
    }
}

/// One row per sweep point and mode, in the fixed column order of [`METRIC_HEADER`].
pub fn write_metrics(path: &Path, rows: &[MetricRow]) -> Result<()> {
    write_table(
        path,
        &METRIC_HEADER,
        rows.iter().map(|r| {
            vec![
                r.variable.clone(),
                r.value.to_string(),
                r.mode.to_string(),
                r.controller.clone(),
                fairness_str(r).to_string(),
                r.realizations.to_string(),
                r.mean_sum_rate.to_string(),
                r.ci95_half_width.map(|c| c.to_string()).unwrap_or_default(),
                r.outage.to_string(),
                r.energy_efficiency.to_string(),
                r.jain.to_string(),
            ]
        }),
    )
}

pub fn read_metrics(path: &Path) -> Result<Vec<Vec<String>>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.records()
        .map(|rec| rec.map(|x| x.iter().map(str::to_string).collect()).map_err(csv_err(path)))
        .collect()
}

pub fn write_trace(path: &Path, slots: &[SlotRecord]) -> Result<()> {
    write_table(
        path,
        &TRACE_HEADER,
        slots.iter().map(|s| {
            vec![
                s.slot.to_string(),
                s.uav_x.to_string(),
                s.uav_y.to_string(),
                s.reward.to_string(),
                s.sum_rate.to_string(),
                s.worst_rate.to_string(),
                s.total_power.to_string(),
                s.energy_efficiency.to_string(),
                s.jain.to_string(),
            ]
        }),
    )
}

/// Plot-ready series for each figure family: sum rate, outage and energy
/// efficiency against transmit power, learning curves, sum rate against
/// panel size, and the fairness comparison.
pub fn write_figures(dir: &Path, out: &SweepOutput) -> Result<Vec<PathBuf>> {
    let by_pt: Vec<&MetricRow> = out.rows.iter().filter(|r| r.variable == "p_t_dbm").collect();
    let by_k: Vec<&MetricRow> = out.rows.iter().filter(|r| r.variable == "elements").collect();
    let mut files = Vec::new();
    let mut put = |name: &str, header: &[&str], rows: Vec<Vec<String>>| -> Result<()> {
        let p = dir.join(name);
        write_table(&p, header, rows)?;
        files.push(p);
        Ok(())
    };
    let series = |rows: &[&MetricRow], f: &dyn Fn(&MetricRow) -> f64| -> Vec<Vec<String>> {
        rows.iter()
            .map(|r| vec![r.value.to_string(), r.mode.to_string(), r.controller.clone(), f(r).to_string()])
            .collect()
    };
    put("fig2a_sum_rate_vs_pt.csv", &["p_t_dbm", "mode", "controller", "mean_sum_rate"], series(&by_pt, &|r| r.mean_sum_rate))?;
    let curve_rows = out
        .policies
        .iter()
        .flat_map(|p| {
            p.curve
                .iter()
                .map(|c| vec![p.label.clone(), c.iteration.to_string(), c.mean_episode_reward.to_string()])
        })
        .collect();
    put("fig2b_reward_vs_iteration.csv", &["policy", "iteration", "mean_episode_reward"], curve_rows)?;
    put("fig2c_outage_vs_pt.csv", &["p_t_dbm", "mode", "controller", "outage"], series(&by_pt, &|r| r.outage))?;
    put(
        "fig3a_energy_efficiency_vs_pt.csv",
        &["p_t_dbm", "mode", "controller", "energy_efficiency"],
        series(&by_pt, &|r| r.energy_efficiency),
    )?;
    put("fig3b_sum_rate_vs_elements.csv", &["elements", "mode", "controller", "mean_sum_rate"], series(&by_k, &|r| r.mean_sum_rate))?;
    let fair_rows = by_pt
        .iter()
        .map(|r| {
            vec![
                r.value.to_string(),
                r.mode.to_string(),
                fairness_str(r).to_string(),
                r.mean_sum_rate.to_string(),
                r.jain.to_string(),
            ]
        })
        .collect();
    put("fig3c_fairness_vs_pt.csv", &["p_t_dbm", "mode", "fairness", "mean_sum_rate", "jain"], fair_rows)?;
    Ok(files)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: ExperimentConfig,
    /// Paths relative to the output directory.
    pub files: Vec<String>,
}

impl Manifest {
    pub fn new(cfg: &ExperimentConfig, command: &str, files: Vec<String>) -> Result<Self> {
        Ok(Self {
            tool: "arisnoma".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed: cfg.seed,
            config_hash: hash_json(cfg)?,
            config: cfg.clone(),
            files,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let s = serde_json::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))?;
        fs::write(path, s + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&s).map_err(|e| Error::Serde(format!("{}: {e}", path.display())))
    }
}

fn ensure_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn relative(base: &Path, p: &Path) -> String {
    p.strip_prefix(base).unwrap_or(p).to_string_lossy().replace('\\', "/")
}

fn sanitize(label: &str) -> String {
    label.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' }).collect()
}

/// Writes everything produced by a run under `outdir` and returns the manifest.
pub fn export(out: &SweepOutput, cfg: &ExperimentConfig, command: &str, outdir: &Path) -> Result<Manifest> {
    ensure_dir(outdir)?;
    let mut files: Vec<PathBuf> = Vec::new();

    let metrics = outdir.join("metrics.csv");
    write_metrics(&metrics, &out.rows)?;
    files.push(metrics);

    let traces = outdir.join("traces");
    ensure_dir(&traces)?;
    for Trace { label, slots } in &out.traces {
        let p = traces.join(format!("{}.csv", sanitize(label)));
        write_trace(&p, slots)?;
        files.push(p);
    }

    let figs = outdir.join("figures");
    ensure_dir(&figs)?;
    files.extend(write_figures(&figs, out)?);

    if !out.policies.is_empty() {
        let pol = outdir.join("policies");
        ensure_dir(&pol)?;
        for p in &out.policies {
            let ck = pol.join(format!("{}.json", sanitize(&p.label)));
            p.checkpoint.save(&ck)?;
            let curve = pol.join(format!("{}_curve.csv", sanitize(&p.label)));
            write_learning_curve(&curve, &p.curve)?;
            files.push(ck);
            files.push(curve);
        }
    }

    let rel = files.iter().map(|f| relative(outdir, f)).collect();
    let manifest = Manifest::new(cfg, command, rel)?;
    manifest.save(&outdir.join("manifest.json"))?;
    Ok(manifest)
}

fn parse<T: std::str::FromStr>(path: &Path, field: &str, s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::Serde(format!("{}: cannot parse {field} from {s:?}", path.display())))
}

/// Reads a table written by [`write_metrics`].
pub fn read_metric_rows(path: &Path) -> Result<Vec<MetricRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header: Vec<String> = r.headers().map_err(csv_err(path))?.iter().map(str::to_string).collect();
    if header != METRIC_HEADER {
        return Err(Error::Serde(format!("{}: unexpected header {header:?}", path.display())));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        let f = |i: usize| rec.get(i).unwrap_or("");
        rows.push(MetricRow {
            variable: f(0).to_string(),
            value: parse(path, "value", f(1))?,
            mode: f(2).parse()?,
            controller: f(3).to_string(),
            fairness: match f(4) {
                "on" => super::config::Fairness::On,
                _ => super::config::Fairness::Off,
            },
            realizations: parse(path, "realizations", f(5))?,
            mean_sum_rate: parse(path, "mean_sum_rate", f(6))?,
            ci95_half_width: if f(7).is_empty() { None } else { Some(parse(path, "ci95_half_width", f(7))?) },
            outage: parse(path, "outage", f(8))?,
            energy_efficiency: parse(path, "energy_efficiency", f(9))?,
            jain: parse(path, "jain", f(10))?,
        });
    }
    Ok(rows)
}

/// Reads `(iteration, mean_episode_reward)` pairs from a learning-curve table.
pub fn read_learning_curve(path: &Path) -> Result<Vec<(usize, f64)>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.records()
        .map(|rec| {
            let rec = rec.map_err(csv_err(path))?;
            Ok((
                parse(path, "iteration", rec.get(0).unwrap_or(""))?,
                parse(path, "mean_episode_reward", rec.get(1).unwrap_or(""))?,
            ))
        })
        .collect()
}
