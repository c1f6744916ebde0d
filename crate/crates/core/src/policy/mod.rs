//! Goal-conditioned diffusion policy: maps the current observation and a
//! goal frame to a chunk of absolute joint and gripper targets.
//!
//! The chunk lives on the clip timescale. Entry `j` of a chunk starting at
//! tick `t` is the expert command issued at tick `t + (j+1)·d − 1`, and the
//! executor holds it for `d` ticks, so after `n` entries the scene should
//! look like the frame `n·d` ticks ahead, which is how goals are drawn.

pub mod net;

use std::path::Path;

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::dataset::{replay_states, Episode, ACTION_DIM};
use crate::diffusion::denoiser::frame_to_vec;
use crate::diffusion::schedule::{ddim_step, perturb_tensor, DEFAULT_SAMPLE_STEPS, DEFAULT_TRAIN_STEPS};
use crate::diffusion::{train_loop, Checkpoint, NoiseSchedule, ParamStore, TrainConfig};
use crate::image::Rgb8Image;
use crate::rng::SplitMix64;
use crate::sim2d::{Action, Sim, SimConfig, SimState, StepOutput};
use crate::{Error, Result};

pub use net::{PolicyCond, PolicyNet, PolicyNetConfig};

pub const KIND: &str = "policy";
pub const KIND_GOAL_FREE: &str = "policy-goal-free";
pub const N_MAX: usize = 16;
/// Receding horizon: entries executed before replanning.
pub const EXECUTE_PREFIX: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub net: PolicyNetConfig,
    /// Ticks per chunk entry; matches the clip down-sample interval.
    pub interval: usize,
    pub execute_prefix: usize,
    /// Per-joint `[lo, hi]` used to clamp outputs.
    pub joint_limits: [[f64; 2]; 4],
}

impl PolicyConfig {
    pub fn new(sim: &SimConfig, interval: usize, use_goal: bool) -> Self {
        let mut joint_limits = [[0.0; 2]; 4];
        for arm in 0..2 {
            let a = sim.arm(arm);
            joint_limits[2 * arm] = a.joint_limits[0];
            joint_limits[2 * arm + 1] = a.joint_limits[1];
        }
        Self {
            net: PolicyNetConfig {
                resolution: sim.resolution,
                n_max: N_MAX,
                feature_dim: 128,
                hidden: 256,
                blocks: 3,
                channels: [16, 32, 64, 64],
                use_goal,
            },
            interval,
            execute_prefix: EXECUTE_PREFIX,
            joint_limits,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.net.validate()?;
        if self.interval == 0 || self.execute_prefix == 0 || self.execute_prefix > self.net.n_max {
            return Err(Error::Config("interval and execute_prefix must be in range".into()));
        }
        Ok(())
    }
}

/// Actions and proprioception share one scaling: joints / π, grippers to
/// `[-1, 1]`.
pub fn normalize_row(row: &[f64; 6]) -> [f32; 6] {
    let pi = std::f64::consts::PI;
    [
        (row[0] / pi) as f32,
        (row[1] / pi) as f32,
        (row[2] / pi) as f32,
        (row[3] / pi) as f32,
        (row[4] * 2.0 - 1.0) as f32,
        (row[5] * 2.0 - 1.0) as f32,
    ]
}

pub fn denormalize_row(row: &[f32]) -> [f64; 6] {
    let pi = std::f64::consts::PI;
    [
        row[0] as f64 * pi,
        row[1] as f64 * pi,
        row[2] as f64 * pi,
        row[3] as f64 * pi,
        (row[4] as f64 + 1.0) / 2.0,
        (row[5] as f64 + 1.0) / 2.0,
    ]
}

/// Goal horizon `n ∼ U{1, …, n_max}`.
pub fn sample_goal_horizon(rng: &mut SplitMix64, n_max: usize) -> usize {
    1 + rng.below(n_max)
}

/// An episode with the proprioception of every frame attached.
#[derive(Debug, Clone)]
pub struct PolicyEpisode {
    pub frames: Vec<Rgb8Image>,
    pub actions: Vec<[f32; ACTION_DIM]>,
    pub proprio: Vec<[f64; 6]>,
}

impl PolicyEpisode {
    /// Replays the episode to recover joint states; fails if the recorded
    /// frames do not match.
    pub fn from_episode(sim: &Sim, ep: &Episode) -> Result<Self> {
        let states = replay_states(sim, ep)?;
        Ok(Self {
            frames: ep.frames.clone(),
            actions: ep.actions.clone(),
            proprio: states.iter().map(SimState::proprio).collect(),
        })
    }

    pub fn ticks(&self) -> usize {
        self.actions.len()
    }
}

/// One supervised sample: normalized inputs and a padded target chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySample {
    pub start: usize,
    pub n: usize,
    pub obs: Vec<f32>,
    pub goal: Vec<f32>,
    pub proprio: [f32; 6],
    /// `n_max × 6`; rows at and after `n` repeat row `n − 1`.
    pub actions: Vec<f32>,
    /// `n_max` entries, 1 for the first `n`.
    pub mask: Vec<f32>,
}

/// Builds the sample for start tick `t` and horizon `n`. Horizons that run
/// past the episode end are shortened to the last reachable goal.
pub fn make_sample(ep: &PolicyEpisode, t: usize, n: usize, interval: usize, n_max: usize) -> Result<PolicySample> {
    if n == 0 {
        return Err(Error::InvalidArgument("goal horizon must be at least 1".into()));
    }
    if interval == 0 || t + interval > ep.ticks() {
        return Err(Error::InvalidArgument(format!("start {t} leaves no full interval")));
    }
    let n = n.min(n_max).min((ep.ticks() - t) / interval);
    let mut actions = Vec::with_capacity(n_max * ACTION_DIM);
    for j in 0..n_max {
        let row = ep.actions[t + (j.min(n - 1) + 1) * interval - 1];
        let row = [row[0] as f64, row[1] as f64, row[2] as f64, row[3] as f64, row[4] as f64, row[5] as f64];
        actions.extend_from_slice(&normalize_row(&row));
    }
    let mask = (0..n_max).map(|j| if j < n { 1.0 } else { 0.0 }).collect();
    Ok(PolicySample {
        start: t,
        n,
        obs: frame_to_vec(&ep.frames[t]),
        goal: frame_to_vec(&ep.frames[t + n * interval]),
        proprio: normalize_row(&ep.proprio[t]),
        actions,
        mask,
    })
}

/// Draws `n` uniformly, then a start uniformly among ticks that can reach
/// it; only episodes too short for `n` fall back to a shorter goal.
pub fn draw_sample(ep: &PolicyEpisode, interval: usize, n_max: usize, rng: &mut SplitMix64) -> Result<PolicySample> {
    let n = sample_goal_horizon(rng, n_max);
    let ticks = ep.ticks();
    if ticks < interval {
        return Err(Error::InvalidArgument("episode shorter than one interval".into()));
    }
    let t = if ticks >= n * interval {
        rng.below(ticks - n * interval + 1)
    } else {
        0
    };
    make_sample(ep, t, n, interval, n_max)
}

/// Executable output of [`act`].
#[derive(Debug, Clone, PartialEq)]
pub struct ActionChunk {
    pub actions: Vec<Action>,
    /// Recommended number of entries to execute before replanning.
    pub execute: usize,
    pub interval: usize,
}

pub struct GoalPolicy {
    cfg: PolicyConfig,
    params: ParamStore,
    net: PolicyNet,
    schedule: NoiseSchedule,
}

impl GoalPolicy {
    pub fn new(cfg: PolicyConfig, seed: u64) -> Result<Self> {
        Self::with_dtype(cfg, seed, DType::F32)
    }

    pub fn with_dtype(cfg: PolicyConfig, seed: u64, dtype: DType) -> Result<Self> {
        cfg.validate()?;
        let mut params = ParamStore::new(seed, dtype);
        let net = PolicyNet::new(&mut params, cfg.net.clone())?;
        Ok(Self { cfg, params, net, schedule: NoiseSchedule::cosine(DEFAULT_TRAIN_STEPS) })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn uses_goal(&self) -> bool {
        self.cfg.net.use_goal
    }

    fn kind(&self) -> &'static str {
        if self.uses_goal() {
            KIND
        } else {
            KIND_GOAL_FREE
        }
    }

    fn dtype(&self) -> DType {
        self.params.dtype()
    }

    fn tensor(&self, data: Vec<f32>, shape: &[usize]) -> Result<Tensor> {
        Ok(Tensor::from_vec(data, shape, &Device::Cpu)?.to_dtype(self.dtype())?)
    }

    fn cond_tensors(&self, samples: &[&PolicySample]) -> Result<(Tensor, Option<Tensor>, Tensor)> {
        let r = self.cfg.net.resolution;
        let b = samples.len();
        let obs = self.tensor(samples.iter().flat_map(|s| s.obs.iter().copied()).collect(), &[b, 3, r, r])?;
        let goal = if self.uses_goal() {
            Some(self.tensor(samples.iter().flat_map(|s| s.goal.iter().copied()).collect(), &[b, 3, r, r])?)
        } else {
            None
        };
        let proprio = self.tensor(samples.iter().flat_map(|s| s.proprio).collect(), &[b, 6])?;
        Ok((obs, goal, proprio))
    }

    /// Masked ε-prediction loss; padded chunk entries contribute exactly
    /// zero.
    pub fn loss(&self, samples: &[&PolicySample], rng: &mut SplitMix64) -> Result<Tensor> {
        let ks: Vec<usize> = samples.iter().map(|_| rng.below(self.schedule.len())).collect();
        let eps = rng.normals_f32(samples.len() * self.cfg.net.chunk_len());
        self.loss_with(samples, &ks, eps)
    }

    pub fn loss_with(&self, samples: &[&PolicySample], ks: &[usize], eps: Vec<f32>) -> Result<Tensor> {
        if samples.is_empty() {
            return Err(Error::EmptyDataset("empty minibatch".into()));
        }
        let b = samples.len();
        let n_max = self.cfg.net.n_max;
        let cl = self.cfg.net.chunk_len();
        if samples.iter().any(|s| s.actions.len() != cl || s.mask.len() != n_max) {
            return Err(Error::shape(cl, samples[0].actions.len()));
        }
        let a0 = self.tensor(samples.iter().flat_map(|s| s.actions.iter().copied()).collect(), &[b, cl])?;
        let eps = self.tensor(eps, &[b, cl])?;
        let mask = self.tensor(samples.iter().flat_map(|s| s.mask.iter().copied()).collect(), &[b, n_max, 1])?;
        let ak = perturb_tensor(&self.schedule, &a0, ks, &eps)?;
        let (obs, goal, proprio) = self.cond_tensors(samples)?;
        let cond = PolicyCond { obs: &obs, goal: goal.as_ref(), proprio: &proprio };
        let pred = self.net.forward(&ak, ks, &cond, self.dtype())?;
        let err = (pred - eps)?.sqr()?.reshape((b, n_max, ACTION_DIM))?.broadcast_mul(&mask)?;
        let denom = mask.sum_all()?.affine(ACTION_DIM as f64, 0.0)?;
        Ok(err.sum_all()?.div(&denom)?)
    }

    /// Noise-averaged loss with steps spread evenly over the schedule.
    pub fn eval_loss(&self, samples: &[&PolicySample], draws: usize, seed: u64) -> Result<f64> {
        let draws = draws.max(1);
        let n = draws * samples.len();
        let k_total = self.schedule.len();
        let mut rng = SplitMix64::new(seed);
        let mut total = 0.0;
        for i in 0..draws {
            let ks: Vec<usize> = (0..samples.len()).map(|j| ((j * draws + i) * k_total + k_total / 2) / n).collect();
            let eps = rng.normals_f32(samples.len() * self.cfg.net.chunk_len());
            total += self.loss_with(samples, &ks, eps)?.to_dtype(DType::F64)?.to_scalar::<f64>()?;
        }
        Ok(total / draws as f64)
    }

    /// Samples a chunk for the current observation, proprioception and goal
    /// (ignored by the goal-free baseline).
    pub fn act(&self, obs: &Rgb8Image, goal: Option<&Rgb8Image>, proprio: &[f64; 6], seed: u64) -> Result<ActionChunk> {
        self.act_steps(obs, goal, proprio, seed, DEFAULT_SAMPLE_STEPS)
    }

    pub fn act_steps(
        &self,
        obs: &Rgb8Image,
        goal: Option<&Rgb8Image>,
        proprio: &[f64; 6],
        seed: u64,
        steps: usize,
    ) -> Result<ActionChunk> {
        let r = self.cfg.net.resolution;
        if obs.dims() != (r, r) || goal.is_some_and(|g| g.dims() != (r, r)) {
            return Err(Error::shape(format!("{r}x{r}"), format!("{:?}", obs.dims())));
        }
        let goal_vec = match (self.uses_goal(), goal) {
            (true, Some(g)) => frame_to_vec(g),
            (true, None) => return Err(Error::InvalidArgument("goal image required".into())),
            (false, _) => Vec::new(),
        };
        let sample = PolicySample {
            start: 0,
            n: self.cfg.net.n_max,
            obs: frame_to_vec(obs),
            goal: goal_vec,
            proprio: normalize_row(proprio),
            actions: Vec::new(),
            mask: Vec::new(),
        };
        let (o, g, p) = self.cond_tensors(&[&sample])?;
        let feats = self.net.encode(&PolicyCond { obs: &o, goal: g.as_ref(), proprio: &p })?;
        let cl = self.cfg.net.chunk_len();
        let mut rng = SplitMix64::new(seed);
        let mut x = self.tensor(rng.normals_f32(cl), &[1, cl])?;
        let idx = self.schedule.sampling_indices(steps);
        let mut x0 = x.clone();
        for (i, &k) in idx.iter().enumerate() {
            let eps = self.net.forward_encoded(&x, &[k], &feats, self.dtype())?;
            let a = self.schedule.alpha_bar(k);
            let a_prev = idx.get(i + 1).map_or(1.0, |&kp| self.schedule.alpha_bar(kp));
            let (next, est) = ddim_step(&x, &eps, a, a_prev)?;
            x = next;
            x0 = est;
        }
        let flat = x0.to_dtype(DType::F32)?.flatten_all()?.to_vec1::<f32>()?;
        let actions = flat
            .chunks(ACTION_DIM)
            .map(|row| self.clamp(denormalize_row(row)))
            .collect::<Result<Vec<_>>>()?;
        Ok(ActionChunk { actions, execute: self.cfg.execute_prefix, interval: self.cfg.interval })
    }

    fn clamp(&self, row: [f64; 6]) -> Result<Action> {
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("policy action"));
        }
        let mut a = Action::from_row(&row).quantized();
        // Bounds rounded inward to f32 so the quantized action stays inside.
        for (j, lim) in self.cfg.joint_limits.iter().enumerate() {
            a.joint_targets[j] = a.joint_targets[j].clamp(f32_at_least(lim[0]), f32_at_most(lim[1]));
        }
        for g in &mut a.gripper_targets {
            *g = g.clamp(0.0, 1.0);
        }
        Ok(a)
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let cfg = serde_json::to_string(&self.cfg).map_err(|e| Error::Checkpoint(e.to_string()))?;
        Checkpoint::capture(self.kind(), cfg, &self.schedule, &[], &self.params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint()?.save(path)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let cfg: PolicyConfig =
            serde_json::from_str(&ck.config_json).map_err(|e| Error::Checkpoint(format!("config: {e}")))?;
        let mut p = Self::new(cfg, 0)?;
        p.schedule = ck.schedule.clone();
        ck.restore_into(p.kind(), &p.params)?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// Optimizes the masked policy objective on minibatches drawn with
/// [`draw_sample`] from uniformly chosen episodes.
pub fn train_policy(policy: &GoalPolicy, episodes: &[PolicyEpisode], cfg: &TrainConfig) -> Result<Vec<f32>> {
    let usable: Vec<&PolicyEpisode> = episodes.iter().filter(|e| e.ticks() >= policy.cfg.interval).collect();
    if usable.is_empty() {
        return Err(Error::EmptyDataset("no episodes long enough for policy training".into()));
    }
    let interval = policy.cfg.interval;
    let n_max = policy.cfg.net.n_max;
    train_loop(&policy.params, cfg, |_, rng| {
        let samples = (0..cfg.batch_size)
            .map(|_| {
                let ep = usable[rng.below(usable.len())];
                draw_sample(ep, interval, n_max, rng)
            })
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&PolicySample> = samples.iter().collect();
        policy.loss(&refs, rng)
    })
}

/// Trains on a fixed set of samples (used for overfitting checks).
pub fn train_on_samples(policy: &GoalPolicy, samples: &[PolicySample], cfg: &TrainConfig) -> Result<Vec<f32>> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset("no policy samples".into()));
    }
    train_loop(&policy.params, cfg, |_, rng| {
        let idx = crate::text2flow::batch_indices(samples.len(), cfg.batch_size, rng);
        let refs: Vec<&PolicySample> = idx.iter().map(|&i| &samples[i]).collect();
        policy.loss(&refs, rng)
    })
}

/// Executes the first `entries` chunk entries, each held for `interval`
/// ticks. Stops early when the episode ends.
pub fn execute_chunk(sim: &Sim, state: &SimState, chunk: &ActionChunk, entries: usize) -> Vec<StepOutput> {
    let mut outs: Vec<StepOutput> = Vec::new();
    let mut cur = state.clone();
    'outer: for a in chunk.actions.iter().take(entries) {
        for _ in 0..chunk.interval {
            if cur.done {
                break 'outer;
            }
            let out = sim.step(&cur, a);
            cur = out.state.clone();
            outs.push(out);
        }
    }
    outs
}

fn f32_at_least(x: f64) -> f64 {
    let y = x as f32;
    if (y as f64) < x { y.next_up() as f64 } else { y as f64 }
}

fn f32_at_most(x: f64) -> f64 {
    let y = x as f32;
    if (y as f64) > x { y.next_down() as f64 } else { y as f64 }
}
