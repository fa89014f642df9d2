//! Probe PPO learning speed on academy presets: scratch arm alone, or
//! scratch-vs-pretrained over several seeds.
//!
//! Usage:
//!   tune_finetune scratch [preset] [total_steps] [lr] [hidden] [envs] [seed] [entropy]
//!   tune_finetune compare [preset] [total_steps] [lr] [hidden] [envs] [seeds] [entropy]

use std::path::PathBuf;
use std::time::Instant;

use kickoff_core::data::collect_selfplay;
use kickoff_core::env::PitchConfig;
use kickoff_core::nn::RecurrentNet;
use kickoff_core::offline::{train_offline, Stage, TrainConfig};
use kickoff_core::online::{
    eval_greedy, run_finetune, steps_to_win_rate, EnvPool, FinetuneConfig, InitMode, PpoTrainer,
};

fn arg<T: std::str::FromStr>(i: usize, default: T) -> T {
    std::env::args()
        .nth(i)
        .and_then(|s| s.parse().ok())
        .unwrap_or(default)
}

fn base_config(lr: f64, hidden: usize, envs: usize, seed: u64, entropy: f64, out: PathBuf) -> FinetuneConfig {
    FinetuneConfig {
        rollout_len: 50,
        parallel_envs: envs,
        epochs_per_batch: 4,
        entropy_coef: entropy,
        lr,
        hidden,
        eval_rounds: 32,
        eval_interval: (50 * envs * 5) as u64,
        seed,
        out_dir: out,
        ..FinetuneConfig::default()
    }
}

fn pretrain(hidden: usize, epochs: usize, dir: &std::path::Path) -> PathBuf {
    let t = Instant::now();
    let mut env = PitchConfig::full_game(4, 7);
    env.episode_len = 50;
    let data_dir = dir.join("pretrain_data");
    let dataset = collect_selfplay(&env, 200, 7, &data_dir).unwrap();
    let mut cfg = TrainConfig::new(Stage::MinBuildin, dir.join("pretrain_run"));
    cfg.hidden = hidden;
    cfg.epochs = epochs;
    cfg.value_epochs = 0;
    cfg.batch_size = 8;
    cfg.seed = 7;
    let state = train_offline(&dataset, &cfg).unwrap();
    let m = state.metrics.last().unwrap();
    println!(
        "pretrained: {} epochs in {:.1}s, final loss {:.4}, buildin prob {:.3}",
        state.epochs_done,
        t.elapsed().as_secs_f64(),
        m.loss_total,
        m.buildin_prob
    );
    cfg.out_dir.join("policy.ckpt")
}

fn scratch_verbose(preset: &str, total: u64, lr: f64, hidden: usize, envs: usize, seed: u64, entropy: f64) {
    let env = PitchConfig::academy(preset, 0).unwrap();
    let cfg = base_config(lr, hidden, envs, seed, entropy, PathBuf::new());
    let dim = kickoff_core::env::obs_dim(&env);
    let n = env.players_per_team;
    let policy = RecurrentNet::new_policy(dim, hidden, 19, seed);
    let value = RecurrentNet::new_value(n * dim + 2, hidden, seed + 1);
    let mut pool = EnvPool::new(&env, envs, hidden, hidden, seed + 2).unwrap();
    let mut trainer = PpoTrainer::new(policy, value, cfg.clone()).unwrap();

    let t = Instant::now();
    let steps_per_batch = (cfg.rollout_len * envs) as u64;
    let batches = total / steps_per_batch;
    for b in 0..batches {
        let batch = pool
            .collect(&trainer.policy, &trainer.value, &trainer.normalizer, cfg.rollout_len)
            .unwrap();
        let goals: i64 = batch.rewards.iter().map(|&r| r as i64).sum();
        let wins = batch.rewards.iter().filter(|&&r| r > 0.5).count();
        let losses = batch.rewards.iter().filter(|&&r| r < -0.5).count();
        let dones = batch.dones.iter().filter(|&&d| d).count();
        let m = trainer.ppo_update(&batch).unwrap();
        if b % 10 == 0 || b + 1 == batches {
            let rep = eval_greedy(&env, &trainer.policy, 32, 1000 + b).unwrap();
            println!(
                "batch {b:>4} | eps {dones:>3} win {wins:>2} loss {losses:>2} gd {goals:+3} | \
                 ent {:.3} kl {:+.4} clip {:.3} vloss {:.4} | greedy win {:.3} gd {:+.2}",
                m.entropy, m.approx_kl, m.clip_fraction, m.value_loss, rep.win_rate, rep.mean_goal_diff
            );
        }
    }
    println!("elapsed {:.1}s", t.elapsed().as_secs_f64());
}

fn main() {
    let mode = std::env::args().nth(1).unwrap_or_else(|| "scratch".into());
    let preset = std::env::args().nth(2).unwrap_or_else(|| "counter_attack".into());
    let total: u64 = arg(3, 40_000);
    let lr: f64 = arg(4, 3e-4);
    let hidden: usize = arg(5, 32);
    let envs: usize = arg(6, 16);
    let env = PitchConfig::academy(&preset, 0).unwrap();
    let tmp = tempfile::tempdir().unwrap();

    if mode == "scratch" {
        let seed: u64 = arg(7, 0);
        let entropy: f64 = arg(8, 0.01);
        scratch_verbose(&preset, total, lr, hidden, envs, seed, entropy);
        return;
    }

    if mode == "seeds" {
        let seeds: u64 = arg(7, 5);
        let entropy: f64 = arg(8, 0.01);
        for seed in 0..seeds {
            let cfg = base_config(lr, hidden, envs, seed, entropy, tmp.path().join(format!("s{seed}")));
            let t = Instant::now();
            let out = run_finetune(&env, &cfg, total, &cfg.out_dir.clone()).unwrap();
            let last = out.points.last().unwrap();
            println!(
                "scratch seed {seed}: to_0.5 {:>8?}  final win {:.3} gd {:+.2}  ({:.1}s)",
                steps_to_win_rate(&out.points, 0.5),
                last.win_rate,
                last.goal_diff,
                t.elapsed().as_secs_f64()
            );
        }
        return;
    }

    let seeds: u64 = arg(7, 5);
    let entropy: f64 = arg(8, 0.01);
    let epochs: usize = arg(9, 12);
    let ckpt = pretrain(hidden, epochs, tmp.path());
    for seed in 0..seeds {
        for (name, init) in [
            ("scratch   ", InitMode::Scratch),
            ("pretrained", InitMode::Pretrained(ckpt.clone())),
        ] {
            let mut cfg =
                base_config(lr, hidden, envs, seed, entropy, tmp.path().join(format!("arm{seed}{name}")));
            cfg.init = init;
            let t = Instant::now();
            let out = run_finetune(&env, &cfg, total, &cfg.out_dir.clone()).unwrap();
            let last = out.points.last().unwrap();
            println!(
                "{name} seed {seed}: to_0.5 {:>8?}  final win {:.3} gd {:+.2}  ({:.1}s)",
                steps_to_win_rate(&out.points, 0.5),
                last.win_rate,
                last.goal_diff,
                t.elapsed().as_secs_f64()
            );
        }
    }
}
