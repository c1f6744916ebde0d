//! Evaluation report: success statistics, metric table and a bar chart.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::rollout::{env_seed, rollout, Controller, RolloutConfig, RolloutTrace};
use crate::image::Rgb8Image;
use crate::sim2d::{Sim, TaskId};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub model: String,
    pub psnr_db: f64,
    pub ssim: f64,
    pub fvd_proxy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub successes: usize,
    pub runs: usize,
    pub success_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: TaskId,
    pub controller: String,
    pub seeds: Vec<u64>,
    pub runs_per_seed: usize,
    /// Success rates are fractions of runs in `[0, 1]`.
    pub success_rate_unit: String,
    pub success_rate_mean: f64,
    /// Population standard deviation of the per-seed rates.
    pub success_rate_std: f64,
    pub per_seed: Vec<SeedResult>,
    pub traces: Vec<RolloutTrace>,
    pub metrics: Vec<MetricRow>,
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let v = values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, v.sqrt())
}

/// Aggregates finished traces, grouped by seed in order.
pub fn aggregate(task: TaskId, controller: &str, seeds: &[u64], runs: usize, traces: Vec<RolloutTrace>) -> Result<EvalReport> {
    if traces.len() != seeds.len() * runs {
        return Err(Error::shape(seeds.len() * runs, traces.len()));
    }
    let per_seed: Vec<SeedResult> = seeds
        .iter()
        .enumerate()
        .map(|(i, &seed)| {
            let successes = traces[i * runs..(i + 1) * runs].iter().filter(|t| t.success()).count();
            SeedResult { seed, successes, runs, success_rate: successes as f64 / runs.max(1) as f64 }
        })
        .collect();
    let rates: Vec<f64> = per_seed.iter().map(|s| s.success_rate).collect();
    let (mean, std) = mean_std(&rates);
    Ok(EvalReport {
        task,
        controller: controller.to_string(),
        seeds: seeds.to_vec(),
        runs_per_seed: runs,
        success_rate_unit: "fraction".into(),
        success_rate_mean: mean,
        success_rate_std: std,
        per_seed,
        traces,
        metrics: Vec::new(),
    })
}

/// `runs` rollouts for each seed.
pub fn evaluate(
    sim: &Sim,
    controller: &Controller,
    task: TaskId,
    seeds: &[u64],
    runs: usize,
    cfg: &RolloutConfig,
) -> Result<EvalReport> {
    let mut traces = Vec::with_capacity(seeds.len() * runs);
    for &s in seeds {
        for r in 0..runs {
            let t = rollout(sim, controller, task, env_seed(s, r), cfg)?;
            log::info!("seed {s} run {r}: success={} steps={}", t.success(), t.final_step);
            traces.push(t);
        }
    }
    aggregate(task, controller.name(), seeds, runs, traces)
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::InvalidArgument(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

const BAR_COLORS: [[u8; 3]; 4] = [[66, 103, 178], [219, 68, 55], [244, 180, 0], [15, 157, 88]];

/// Grouped bar chart: one group per entry, one bar per value. Every value
/// is scaled by the column's maximum. No text is drawn.
pub fn bar_chart(groups: &[Vec<f64>], height: usize) -> Rgb8Image {
    let bar_w = 12;
    let gap = 10;
    let bars = groups.iter().map(|g| g.len()).max().unwrap_or(0);
    let width = (groups.len() * (bars * bar_w + gap) + gap).max(32);
    let mut img = Rgb8Image::white(height, width);
    let mut col_max = vec![0f64; bars];
    for g in groups {
        for (i, &v) in g.iter().enumerate() {
            if v.is_finite() {
                col_max[i] = col_max[i].max(v.abs());
            }
        }
    }
    let base = height - 4;
    for (gi, g) in groups.iter().enumerate() {
        let x0 = gap + gi * (bars * bar_w + gap);
        for (i, &v) in g.iter().enumerate() {
            let frac = if col_max[i] > 0.0 && v.is_finite() { (v.abs() / col_max[i]).min(1.0) } else { 0.0 };
            let h = (frac * (base - 4) as f64).round() as usize;
            for r in base - h..base {
                for c in x0 + i * bar_w..x0 + (i + 1) * bar_w - 2 {
                    img.put(r, c, BAR_COLORS[i % BAR_COLORS.len()]);
                }
            }
        }
    }
    for c in 0..width {
        img.put(base, c, [0, 0, 0]);
    }
    img
}

/// Writes the success rates (one bar per seed, last bar the mean) and, if
/// present, the metric table.
pub fn plot_report(report: &EvalReport, path: &Path) -> Result<()> {
    let mut groups: Vec<Vec<f64>> = report.per_seed.iter().map(|s| vec![s.success_rate]).collect();
    groups.push(vec![report.success_rate_mean]);
    for m in &report.metrics {
        groups.push(vec![m.psnr_db, m.ssim, m.fvd_proxy]);
    }
    bar_chart(&groups, 120).save_png(path)
}
