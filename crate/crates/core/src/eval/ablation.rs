//! Flow-guided versus text-only video generation at a matched budget.

use serde::{Deserialize, Serialize};

use super::fvd::{fvd_proxy, FeatureExtractor};
use super::metrics::{psnr_video, ssim_video};
use super::report::MetricRow;
use crate::dataset::TrainingClip;
use crate::diffusion::{TrainConfig, Vocabulary};
use crate::flow2video::{self, predict_pipeline_steps, predict_video_steps, VideoGenModel};
use crate::image::Video;
use crate::text2flow::{self, FlowGenModel};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationConfig {
    /// Optimizer updates per trained model.
    pub updates: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub sample_steps: usize,
    pub fvd_steps: usize,
    pub seed: u64,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self { updates: 50_000, batch_size: 4, learning_rate: 1e-4, sample_steps: 50, fvd_steps: 500, seed: 0 }
    }
}

pub const ROW_UNTRAINED: &str = "untrained";
pub const ROW_TEXT_ONLY: &str = "text-only";
pub const ROW_FLOW: &str = "flow-guided";
pub const ROW_FLOW_GT: &str = "flow-guided (ground-truth flow)";

fn score(name: &str, ex: &FeatureExtractor, truth: &[Video], pred: &[Video]) -> Result<MetricRow> {
    let mut psnr = 0.0;
    let mut ssim = 0.0;
    for (t, p) in truth.iter().zip(pred) {
        psnr += psnr_video(t, p)?;
        ssim += ssim_video(t, p)?;
    }
    let n = truth.len() as f64;
    Ok(MetricRow { model: name.to_string(), psnr_db: psnr / n, ssim: ssim / n, fvd_proxy: fvd_proxy(ex, truth, pred)? })
}

/// Trains both variants with the same number of updates and evaluates on
/// held-out clips. Rows: untrained, text-only, flow-guided through the full
/// pipeline, and flow-guided fed ground-truth flow.
pub fn ablation_table(train: &[TrainingClip], heldout: &[TrainingClip], cfg: &AblationConfig) -> Result<Vec<MetricRow>> {
    if train.is_empty() || heldout.len() < 2 {
        return Err(Error::EmptyDataset("ablation needs training clips and at least 2 held-out clips".into()));
    }
    let res = train[0].initial_frame.dims().0;
    let vocab = Vocabulary::build(
        crate::sim2d::TaskId::ALL
            .iter()
            .map(|t| t.instruction())
            .chain(train.iter().map(|c| c.instruction.as_str())),
    );
    let tc = TrainConfig {
        steps: cfg.updates,
        batch_size: cfg.batch_size,
        learning_rate: cfg.learning_rate,
        seed: cfg.seed,
        ..Default::default()
    };
    let seed = cfg.seed;

    let untrained = VideoGenModel::new(flow2video::default_config(res), vocab.clone(), seed)?;
    let text_only = VideoGenModel::text_only(flow2video::default_config(res), vocab.clone(), seed)?;
    flow2video::train_video(&text_only, train, &tc)?;
    let fm = FlowGenModel::new(text2flow::default_config(res), vocab.clone(), seed)?;
    text2flow::train_flow(&fm, train, &tc)?;
    let vm = VideoGenModel::new(flow2video::default_config(res), vocab, seed)?;
    flow2video::train_video(&vm, train, &tc)?;

    let truth: Vec<Video> = heldout.iter().map(|c| c.video.clone()).collect();
    let real: Vec<Video> = train.iter().map(|c| c.video.clone()).collect();
    let ex = FeatureExtractor::fit(&real, cfg.fvd_steps, seed)?;

    let steps = cfg.sample_steps;
    let mut rows = Vec::new();
    let gen = |m: &VideoGenModel, use_gt: bool| -> Result<Vec<Video>> {
        heldout
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let flow = if use_gt { c.flow_video.as_deref() } else { None };
                predict_video_steps(m, &c.initial_frame, &c.instruction, flow, seed + i as u64, steps)
            })
            .collect()
    };
    rows.push(score(ROW_UNTRAINED, &ex, &truth, &gen(&untrained, true)?)?);
    rows.push(score(ROW_TEXT_ONLY, &ex, &truth, &gen(&text_only, false)?)?);
    let piped = heldout
        .iter()
        .enumerate()
        .map(|(i, c)| predict_pipeline_steps(&fm, &vm, &c.initial_frame, &c.instruction, seed + i as u64, steps).map(|p| p.1))
        .collect::<Result<Vec<_>>>()?;
    rows.push(score(ROW_FLOW, &ex, &truth, &piped)?);
    rows.push(score(ROW_FLOW_GT, &ex, &truth, &gen(&vm, true)?)?);
    Ok(rows)
}

/// Renders the table as aligned plain text.
pub fn format_table(rows: &[MetricRow]) -> String {
    let mut s = format!("{:<34} {:>9} {:>7} {:>11}\n", "model", "PSNR(dB)", "SSIM", "FVD-proxy");
    for r in rows {
        s.push_str(&format!("{:<34} {:>9.3} {:>7.4} {:>11.3}\n", r.model, r.psnr_db, r.ssim, r.fvd_proxy));
    }
    s
}
