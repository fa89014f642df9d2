//! Timing and behaviour scan for the offline trainer on the class-imbalance
//! fixture: how fast does vanilla cloning drift toward BUILD_IN, and what do
//! the epochs cost?

use std::time::Instant;

use kickoff_core::data::{collect_selfplay, read_dataset};
use kickoff_core::env::PitchConfig;
use kickoff_core::offline::{mean_designated_buildin_prob, train_offline, Stage, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let episodes: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(200);
    let episode_len: u32 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(50);
    let epochs: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(30);
    let hidden: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(32);
    let batch: usize = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(8);

    let dir = std::env::temp_dir().join(format!(
        "tune_offline_{episodes}_{episode_len}_{}",
        std::process::id()
    ));
    let mut config = PitchConfig::full_game(4, 0);
    config.episode_len = episode_len;

    let t0 = Instant::now();
    let ds = match read_dataset(&dir) {
        Ok(ds) => {
            println!("reusing dataset at {}", dir.display());
            ds
        }
        Err(_) => {
            let ds = collect_selfplay(&config, episodes, 7, &dir).unwrap();
            println!(
                "collected {episodes} episodes x {episode_len} steps in {:.1}s -> {}",
                t0.elapsed().as_secs_f64(),
                dir.display()
            );
            ds
        }
    };

    for stage in [Stage::Mabc, Stage::MinBuildin] {
        let out = dir.join(format!("run_{}", stage.name()));
        let _ = std::fs::remove_dir_all(&out);
        let mut cfg = TrainConfig::new(stage, &out);
        cfg.hidden = hidden;
        cfg.epochs = epochs;
        cfg.value_epochs = 0;
        cfg.batch_size = batch;
        cfg.seed = 1;

        let t0 = Instant::now();
        let state = train_offline(&ds, &cfg).unwrap();
        let wall = t0.elapsed().as_secs_f64();
        let probs: Vec<String> = state
            .metrics
            .iter()
            .map(|m| format!("{:.3}", m.buildin_prob))
            .collect();
        let direct = mean_designated_buildin_prob(&ds, &state.policy).unwrap();
        println!(
            "stage {:<10} hidden {hidden} batch {batch}: {wall:.1}s total, {:.2}s/epoch",
            stage.name(),
            wall / epochs as f64
        );
        println!("  buildin_prob per epoch: {}", probs.join(" "));
        println!("  final direct measurement: {direct:.4}");
        println!(
            "  final losses: total {:.4} adv {:.4} mb {:.4}",
            state.metrics.last().unwrap().loss_total,
            state.metrics.last().unwrap().loss_adv,
            state.metrics.last().unwrap().loss_buildin
        );
    }
}
