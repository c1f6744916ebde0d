use cogdesk::dataset::run_expert;
use cogdesk::policy::*;
use cogdesk::rng::SplitMix64;
use cogdesk::sim2d::{Sim, SimConfig, TaskId};

fn chi_square(counts: &[usize], expected: f64) -> f64 {
    counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum()
}

/// Mean plus three standard deviations of a chi-square with `dof` degrees.
fn three_sigma(dof: usize) -> f64 {
    dof as f64 + 3.0 * (2.0 * dof as f64).sqrt()
}

#[test]
fn goal_horizon_is_uniform() {
    let mut rng = SplitMix64::new(77);
    let mut counts = [0usize; N_MAX];
    let draws = 32_000;
    for _ in 0..draws {
        let n = sample_goal_horizon(&mut rng, N_MAX);
        assert!((1..=N_MAX).contains(&n));
        counts[n - 1] += 1;
    }
    let chi = chi_square(&counts, draws as f64 / N_MAX as f64);
    assert!(chi <= three_sigma(N_MAX - 1), "chi2 {chi}");
}

fn episode(res: usize) -> (Sim, PolicyEpisode) {
    let sim = Sim::new(SimConfig { resolution: res, ..Default::default() }).unwrap();
    let ep = run_expert(&sim, TaskId::LiftBag, 0);
    let pe = PolicyEpisode::from_episode(&sim, &ep).unwrap();
    (sim, pe)
}

#[test]
fn drawn_samples_keep_the_horizon_distribution() {
    let (_, ep) = episode(16);
    assert!(ep.ticks() >= N_MAX * 4);
    let mut rng = SplitMix64::new(3);
    let mut counts = [0usize; N_MAX];
    let draws = 8_000;
    for _ in 0..draws {
        let s = draw_sample(&ep, 4, N_MAX, &mut rng).unwrap();
        counts[s.n - 1] += 1;
        assert!(s.start + s.n * 4 <= ep.ticks());
    }
    let chi = chi_square(&counts, draws as f64 / N_MAX as f64);
    assert!(chi <= three_sigma(N_MAX - 1), "chi2 {chi}");
}

#[test]
fn chunk_targets_and_mask() {
    let (_, ep) = episode(16);
    let d = 4;
    let s = make_sample(&ep, 5, 3, d, N_MAX).unwrap();
    assert_eq!(s.n, 3);
    assert_eq!(s.mask.iter().filter(|&&m| m == 1.0).count(), 3);
    assert!(s.mask[..3].iter().all(|&m| m == 1.0));
    for j in 0..N_MAX {
        let src = ep.actions[5 + (j.min(2) + 1) * d - 1];
        let want = normalize_row(&src.map(|v| v as f64));
        assert_eq!(&s.actions[j * 6..j * 6 + 6], &want);
    }
    assert_eq!(s.goal, cogdesk::diffusion::denoiser::frame_to_vec(&ep.frames[5 + 3 * d]));
    assert_eq!(s.proprio, normalize_row(&ep.proprio[5]));
    // Horizons past the end are shortened to the last reachable goal.
    let t = ep.ticks() - 2 * d;
    assert_eq!(make_sample(&ep, t, 10, d, N_MAX).unwrap().n, 2);
    assert!(make_sample(&ep, 0, 0, d, N_MAX).is_err());
}

#[test]
fn normalization_round_trips() {
    let row = [1.9, -1.5, 1.2, 1.5, 0.25, 1.0];
    let back = denormalize_row(&normalize_row(&row));
    for (a, b) in row.iter().zip(back) {
        assert!((a - b).abs() < 1e-6);
    }
}

fn small_config(sim: &Sim, use_goal: bool) -> PolicyConfig {
    let mut cfg = PolicyConfig::new(sim.config(), 4, use_goal);
    cfg.net.channels = [4, 4, 8, 8];
    cfg.net.hidden = 32;
    cfg.net.feature_dim = 16;
    cfg.net.blocks = 1;
    cfg
}

#[test]
fn actions_are_clamped_and_quantized() {
    let (sim, ep) = episode(16);
    let cfg = small_config(&sim, true);
    let limits = cfg.joint_limits;
    let policy = GoalPolicy::new(cfg, 0).unwrap();
    for seed in 0..4 {
        let chunk = policy.act_steps(&ep.frames[0], Some(&ep.frames[20]), &ep.proprio[0], seed, 3).unwrap();
        assert_eq!(chunk.actions.len(), N_MAX);
        assert_eq!(chunk.execute, EXECUTE_PREFIX);
        for a in &chunk.actions {
            for j in 0..4 {
                assert!(a.joint_targets[j] >= limits[j][0] && a.joint_targets[j] <= limits[j][1]);
            }
            assert!(a.gripper_targets.iter().all(|g| (0.0..=1.0).contains(g)));
            assert_eq!(*a, a.quantized());
        }
    }
    assert!(policy.act(&ep.frames[0], None, &ep.proprio[0], 0).is_err(), "goal required");
}

#[test]
fn chunk_entries_are_held_for_the_interval() {
    let (sim, ep) = episode(16);
    let policy = GoalPolicy::new(small_config(&sim, false), 2).unwrap();
    let state = sim.reset(TaskId::LiftBag, 0);
    let chunk = policy.act_steps(&ep.frames[0], None, &state.proprio(), 1, 2).unwrap();
    let outs = execute_chunk(&sim, &state, &chunk, 3);
    assert_eq!(outs.len(), 3 * chunk.interval);
    assert_eq!(outs.last().unwrap().state.step_count, state.step_count + 12);
}

#[test]
fn policy_checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (sim, ep) = episode(16);
    let policy = GoalPolicy::new(small_config(&sim, true), 4).unwrap();
    let path = dir.path().join("p.ckpt");
    policy.save(&path).unwrap();
    let back = GoalPolicy::load(&path).unwrap();
    let a = policy.act_steps(&ep.frames[0], Some(&ep.frames[8]), &ep.proprio[0], 3, 4).unwrap();
    let b = back.act_steps(&ep.frames[0], Some(&ep.frames[8]), &ep.proprio[0], 3, 4).unwrap();
    assert_eq!(a, b);
}
