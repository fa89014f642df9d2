//! Offline training loop: staged configuration, value-then-policy phases,
//! per-epoch metrics, and checkpointing.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use crate::data::chunks::{global_dim, make_chunks, ChunkSpec};
use crate::data::collect::label_counts;
use crate::data::store::ReplayDataset;
use crate::env::{Action, N_ACTIONS_FULL};
use crate::nn::checkpoint::save_params;
use crate::nn::tape::Tape;
use crate::nn::{Adam, AdamConfig, RecurrentNet, TapeNet};
use crate::offline::loss::{
    alpha_weights, policy_loss_graph, resolve_weights, value_loss_graph, LossConfig, StageFlags,
};
use crate::{Error, Result};

/// Ablation rung. Each stage enables one refinement on top of the previous.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Mabc,
    Alpha,
    MinBuildin,
    BufferRanking,
    AdvantageWeighted,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Mabc,
        Stage::Alpha,
        Stage::MinBuildin,
        Stage::BufferRanking,
        Stage::AdvantageWeighted,
    ];

    pub fn parse(s: &str) -> Result<Stage> {
        match s {
            "mabc" => Ok(Stage::Mabc),
            "alpha" => Ok(Stage::Alpha),
            "minbuildin" => Ok(Stage::MinBuildin),
            "br" => Ok(Stage::BufferRanking),
            "aw" => Ok(Stage::AdvantageWeighted),
            other => Err(Error::invalid(format!(
                "unknown stage '{other}' (expected mabc|alpha|minbuildin|br|aw)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::Mabc => "mabc",
            Stage::Alpha => "alpha",
            Stage::MinBuildin => "minbuildin",
            Stage::BufferRanking => "br",
            Stage::AdvantageWeighted => "aw",
        }
    }

    pub fn flags(self) -> StageFlags {
        let rung = self as usize;
        StageFlags {
            use_alpha: rung >= 1,
            use_min_buildin: rung >= 2,
            use_buffer_ranking: rung >= 3,
            use_advantage: rung >= 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub loss: LossConfig,
    pub hidden: usize,
    pub epochs: usize,
    pub value_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl TrainConfig {
    pub fn new(stage: Stage, out_dir: impl Into<PathBuf>) -> TrainConfig {
        TrainConfig {
            loss: LossConfig {
                flags: stage.flags(),
                ..LossConfig::default()
            },
            hidden: 256,
            epochs: 10,
            value_epochs: 10,
            batch_size: 16,
            lr: 1e-4,
            seed: 0,
            out_dir: out_dir.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss_total: f64,
    pub loss_adv: f64,
    pub loss_buildin: f64,
    /// Mean BUILD_IN probability the policy assigns to designated players.
    pub buildin_prob: f64,
    /// Histogram of the policy's argmax actions on designated steps.
    pub action_hist: Vec<u64>,
}

#[derive(Debug)]
pub struct TrainState {
    pub policy: RecurrentNet,
    pub value: RecurrentNet,
    pub epochs_done: usize,
    pub steps_done: usize,
    pub metrics: Vec<EpochMetrics>,
}

fn mix(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn chunk_spec(loss: &LossConfig) -> ChunkSpec {
    ChunkSpec {
        gamma: loss.gamma,
        rho0: loss.rho0,
        rho1: loss.rho1,
        r_threshold: loss.r_threshold,
    }
}

/// Regress the value network onto discounted returns-to-go from the dataset.
pub fn train_value(
    dataset: &ReplayDataset,
    value: &RecurrentNet,
    gamma: f64,
    epochs: usize,
    batch_size: usize,
    lr: f64,
    seed: u64,
) -> Result<RecurrentNet> {
    if dataset.is_empty() {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    let first = dataset.load(0)?;
    // Chunking replays both networks for boundary states; the policy is not
    // trained here, so a minimal stand-in keeps the replay cheap.
    let stub_policy = RecurrentNet::new_policy(first.obs_dim, 1, 1, 0);
    let mut value = value.clone();
    let mut opt = Adam::new(&value.params, AdamConfig::with_lr(lr));
    let spec = ChunkSpec {
        gamma,
        ..ChunkSpec::default()
    };
    for epoch in 0..epochs {
        let stream = make_chunks(
            dataset,
            &stub_policy,
            &value,
            &spec,
            batch_size,
            mix(seed, 0x5A1_7ED + epoch as u64),
        )?;
        for batch in stream {
            let batch = batch?;
            let mut tape = Tape::new();
            let net = TapeNet::bind(&mut tape, &value);
            let loss = value_loss_graph(&mut tape, &net, &value, &batch)?;
            if !tape.scalar_value(loss).is_finite() {
                return Err(Error::NumericalFailure { op: "train_value" });
            }
            let grads = tape.backward(loss)?;
            let grads = net.grads(&tape, &grads);
            opt.step(&mut value.params, &grads)?;
        }
    }
    Ok(value)
}

/// Mean probability the policy puts on BUILD_IN for designated players,
/// measured over every step of the dataset with full-episode hidden states.
pub fn mean_designated_buildin_prob(
    dataset: &ReplayDataset,
    policy: &RecurrentNet,
) -> Result<f64> {
    if policy.output != N_ACTIONS_FULL {
        return Err(Error::invalid(format!(
            "policy has {} actions, expected the full-game {N_ACTIONS_FULL}",
            policy.output
        )));
    }
    let bi = Action::BuildIn.index();
    let mut acc = 0.0;
    let mut count = 0usize;
    for i in 0..dataset.len() {
        let ep = dataset.load(i)?;
        if policy.input != ep.obs_dim {
            return Err(Error::ShapeMismatch {
                op: "mean_designated_buildin_prob",
                lhs: vec![policy.input],
                rhs: vec![ep.obs_dim],
            });
        }
        let mut h = vec![0.0; ep.n * policy.hidden];
        for t in 0..ep.len() {
            let logits = policy.step(ep.obs_at(t), ep.n, &mut h);
            let d = ep.designated[t] as usize;
            let row = &logits[d * N_ACTIONS_FULL..(d + 1) * N_ACTIONS_FULL];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let denom: f64 = row.iter().map(|&x| (x - m).exp()).sum();
            acc += (row[bi] - m).exp() / denom;
            count += 1;
        }
    }
    Ok(acc / count as f64)
}

fn csv_header(actions: usize) -> String {
    let mut s = String::from("epoch,loss_total,loss_adv,loss_buildin,buildin_prob");
    for i in 0..actions {
        s.push_str(&format!(",hist_{i}"));
    }
    s.push('\n');
    s
}

fn csv_row(m: &EpochMetrics) -> String {
    let mut s = format!(
        "{},{},{},{},{}",
        m.epoch, m.loss_total, m.loss_adv, m.loss_buildin, m.buildin_prob
    );
    for &h in &m.action_hist {
        s.push_str(&format!(",{h}"));
    }
    s.push('\n');
    s
}

/// Train the staged offline objective: value network first (when the
/// advantage stage needs it), then policy epochs over shuffled chunks.
/// Writes `metrics.csv`, a checkpoint per epoch, and stable `policy.ckpt` /
/// `value.ckpt` copies of the latest good parameters. A non-finite loss
/// aborts and leaves the previous epoch's checkpoints in place.
pub fn train_offline(dataset: &ReplayDataset, config: &TrainConfig) -> Result<TrainState> {
    if dataset.is_empty() {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    let first = dataset.load(0)?;
    let n = first.n;
    let obs_dim = first.obs_dim;
    let gdim = global_dim(n, obs_dim);

    let alpha = if config.loss.flags.use_alpha {
        alpha_weights(&label_counts(dataset)?)?
    } else {
        vec![1.0; N_ACTIONS_FULL]
    };
    let loss_config = LossConfig {
        alpha,
        ..config.loss.clone()
    };
    loss_config.validate()?;

    fs::create_dir_all(&config.out_dir).map_err(|e| Error::io(&config.out_dir, e))?;
    let mut policy = RecurrentNet::new_policy(
        obs_dim,
        config.hidden,
        N_ACTIONS_FULL,
        mix(config.seed, 0xA110C),
    );
    let mut value = RecurrentNet::new_value(gdim, config.hidden, mix(config.seed, 0xB1D));

    if loss_config.flags.use_advantage {
        value = train_value(
            dataset,
            &value,
            loss_config.gamma,
            config.value_epochs,
            config.batch_size,
            config.lr,
            mix(config.seed, 0x7A15E),
        )?;
    }
    let policy_path = config.out_dir.join("policy.ckpt");
    let value_path = config.out_dir.join("value.ckpt");
    save_params(&value_path, &value.params)?;
    save_params(&policy_path, &policy.params)?;

    let csv_path = config.out_dir.join("metrics.csv");
    let mut csv = fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    csv.write_all(csv_header(N_ACTIONS_FULL).as_bytes())
        .map_err(|e| Error::io(&csv_path, e))?;

    let mut opt = Adam::new(&policy.params, AdamConfig::with_lr(config.lr));
    let spec = chunk_spec(&loss_config);
    let bi = Action::BuildIn.index();
    let mut metrics = Vec::with_capacity(config.epochs);
    let mut steps_done = 0usize;

    for epoch in 0..config.epochs {
        let stream = make_chunks(
            dataset,
            &policy,
            &value,
            &spec,
            config.batch_size,
            mix(config.seed, 0xC41F + epoch as u64),
        )?;
        let mut sum_total = 0.0;
        let mut sum_adv = 0.0;
        let mut sum_mb = 0.0;
        let mut weight = 0.0;
        let mut prob_acc = 0.0;
        let mut prob_count = 0usize;
        let mut hist = vec![0u64; N_ACTIONS_FULL];

        for batch in stream {
            let batch = batch?;
            let w = resolve_weights(&batch, &value, &loss_config)?;
            let mut tape = Tape::new();
            let net = TapeNet::bind(&mut tape, &policy);
            let graph = policy_loss_graph(&mut tape, &net, &policy, &batch, &loss_config, &w)?;
            let total = tape.scalar_value(graph.total);
            if !total.is_finite() {
                return Err(Error::NumericalFailure {
                    op: "train_offline",
                });
            }
            let nvalid: f64 = batch.mask.iter().sum();
            sum_total += total * nvalid;
            sum_adv += tape.scalar_value(graph.adv) * nvalid;
            sum_mb += tape.scalar_value(graph.min_buildin) * nvalid;
            weight += nvalid;

            for (t, &lsm) in graph.log_probs.iter().enumerate() {
                let values = tape.value(lsm);
                for slot in 0..batch.batch {
                    let row_tb = t * batch.batch + slot;
                    if batch.mask[row_tb] == 0.0 {
                        continue;
                    }
                    let d = batch.designated[row_tb] as usize;
                    let r = slot * batch.n + d;
                    let row = &values[r * N_ACTIONS_FULL..(r + 1) * N_ACTIONS_FULL];
                    prob_acc += row[bi].exp();
                    prob_count += 1;
                    let argmax = row
                        .iter()
                        .enumerate()
                        .max_by(|a, b| a.1.total_cmp(b.1))
                        .map(|(i, _)| i)
                        .unwrap();
                    hist[argmax] += 1;
                }
            }

            let grads = tape.backward(graph.total)?;
            let grads = net.grads(&tape, &grads);
            opt.step(&mut policy.params, &grads)?;
            steps_done += 1;
        }

        let m = EpochMetrics {
            epoch,
            loss_total: sum_total / weight,
            loss_adv: sum_adv / weight,
            loss_buildin: sum_mb / weight,
            buildin_prob: prob_acc / prob_count as f64,
            action_hist: hist,
        };
        csv.write_all(csv_row(&m).as_bytes())
            .map_err(|e| Error::io(&csv_path, e))?;
        csv.flush().map_err(|e| Error::io(&csv_path, e))?;
        metrics.push(m);

        save_params(
            &config.out_dir.join(format!("policy_epoch_{epoch}.ckpt")),
            &policy.params,
        )?;
        save_params(&policy_path, &policy.params)?;
    }

    Ok(TrainState {
        policy,
        value,
        epochs_done: config.epochs,
        steps_done,
        metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::collect::collect_selfplay;
    use crate::env::PitchConfig;
    use crate::nn::checkpoint::load_params;

    fn tiny_dataset(dir: &std::path::Path, episodes: usize) -> ReplayDataset {
        let mut c = PitchConfig::full_game(2, 0);
        c.episode_len = 30;
        collect_selfplay(&c, episodes, 42, dir).unwrap()
    }

    fn tiny_config(stage: Stage, out: &std::path::Path) -> TrainConfig {
        let mut cfg = TrainConfig::new(stage, out);
        cfg.hidden = 8;
        cfg.epochs = 3;
        cfg.value_epochs = 2;
        cfg.batch_size = 4;
        cfg
    }

    #[test]
    fn stage_flags_are_cumulative() {
        assert_eq!(Stage::parse("mabc").unwrap(), Stage::Mabc);
        assert_eq!(Stage::parse("aw").unwrap(), Stage::AdvantageWeighted);
        assert!(Stage::parse("nope").is_err());
        assert_eq!(Stage::Mabc.flags(), StageFlags::default());
        let aw = Stage::AdvantageWeighted.flags();
        assert!(aw.use_alpha && aw.use_min_buildin && aw.use_buffer_ranking && aw.use_advantage);
        let mb = Stage::MinBuildin.flags();
        assert!(mb.use_alpha && mb.use_min_buildin);
        assert!(!mb.use_buffer_ranking && !mb.use_advantage);
        for s in Stage::ALL {
            assert_eq!(Stage::parse(s.name()).unwrap(), s);
        }
    }

    fn fixed_reward_dataset(dir: &std::path::Path, reward: f64) -> ReplayDataset {
        use crate::data::episode::EpisodeRecord;
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let (t, n, dim) = (25usize, 2usize, 4usize);
        let episodes: Vec<EpisodeRecord> = (0..2)
            .map(|seed| EpisodeRecord {
                config_hash: 1,
                seed,
                n,
                obs_dim: dim,
                obs: (0..t * n * dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                labels: vec![Action::BuildIn.index() as u8; t * n],
                rewards: vec![reward; t],
                designated: vec![0; t],
            })
            .collect();
        crate::data::store::write_dataset(dir, &episodes).unwrap()
    }

    fn worst_value_error(ds: &ReplayDataset, net: &RecurrentNet, gamma: f64) -> f64 {
        let ep = ds.load(0).unwrap();
        let gdim = global_dim(ep.n, ep.obs_dim);
        let mut worst: f64 = 0.0;
        for i in 0..ds.len() {
            let ep = ds.load(i).unwrap();
            let globals = crate::data::chunks::global_inputs(&ep);
            let targets = crate::data::chunks::returns_to_go(&ep.rewards, gamma);
            let mut h = vec![0.0; net.hidden];
            for t in 0..ep.len() {
                let v = net.step(&globals[t * gdim..(t + 1) * gdim], 1, &mut h)[0];
                worst = worst.max((v - targets[t]).abs());
            }
        }
        worst
    }

    #[test]
    fn value_training_drives_zero_reward_values_to_zero() {
        let dir = tempfile::tempdir().unwrap();
        let ds = fixed_reward_dataset(dir.path(), 0.0);
        let gdim = global_dim(2, 4);
        let value = RecurrentNet::new_value(gdim, 6, 1);
        let trained = train_value(&ds, &value, 0.99, 400, 2, 1e-2, 0).unwrap();
        let worst = worst_value_error(&ds, &trained, 0.99);
        assert!(worst < 1e-2, "zero-reward fit off by {worst}");
    }

    #[test]
    fn value_training_fits_undiscounted_constant_rewards() {
        let dir = tempfile::tempdir().unwrap();
        let ds = fixed_reward_dataset(dir.path(), 1.0);
        let gdim = global_dim(2, 4);
        let value = RecurrentNet::new_value(gdim, 6, 1);
        let trained = train_value(&ds, &value, 0.0, 400, 2, 1e-2, 0).unwrap();
        let worst = worst_value_error(&ds, &trained, 0.0);
        assert!(worst < 0.05, "constant-reward fit off by {worst}");
    }

    #[test]
    fn training_runs_and_loss_does_not_increase() {
        let data_dir = tempfile::tempdir().unwrap();
        let out_dir = tempfile::tempdir().unwrap();
        let ds = tiny_dataset(data_dir.path(), 10);
        let mut cfg = tiny_config(Stage::MinBuildin, out_dir.path());
        cfg.lr = 1e-3;
        cfg.epochs = 4;
        let state = train_offline(&ds, &cfg).unwrap();
        assert_eq!(state.metrics.len(), 4);
        for pair in state.metrics.windows(2) {
            assert!(
                pair[1].loss_total <= pair[0].loss_total * 1.05,
                "loss rose from {} to {}",
                pair[0].loss_total,
                pair[1].loss_total
            );
        }
        assert!(out_dir.path().join("metrics.csv").exists());
        assert!(out_dir.path().join("policy.ckpt").exists());
        assert!(out_dir.path().join("policy_epoch_3.ckpt").exists());
        let csv = std::fs::read_to_string(out_dir.path().join("metrics.csv")).unwrap();
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.starts_with("epoch,loss_total,loss_adv,loss_buildin,buildin_prob,hist_0"));
    }

    #[test]
    fn training_is_deterministic_across_runs() {
        let data_dir = tempfile::tempdir().unwrap();
        let ds = tiny_dataset(data_dir.path(), 6);
        let out_a = tempfile::tempdir().unwrap();
        let out_b = tempfile::tempdir().unwrap();
        let mut cfg_a = tiny_config(Stage::AdvantageWeighted, out_a.path());
        cfg_a.epochs = 2;
        let mut cfg_b = tiny_config(Stage::AdvantageWeighted, out_b.path());
        cfg_b.epochs = 2;
        train_offline(&ds, &cfg_a).unwrap();
        train_offline(&ds, &cfg_b).unwrap();
        for name in ["policy.ckpt", "value.ckpt", "metrics.csv"] {
            let a = std::fs::read(out_a.path().join(name)).unwrap();
            let b = std::fs::read(out_b.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between identical runs");
        }
    }

    #[test]
    fn divergence_aborts_and_keeps_the_last_checkpoint() {
        let data_dir = tempfile::tempdir().unwrap();
        let out_dir = tempfile::tempdir().unwrap();
        let ds = tiny_dataset(data_dir.path(), 4);
        let mut cfg = tiny_config(Stage::Mabc, out_dir.path());
        cfg.lr = 1e200;
        cfg.epochs = 6;
        let err = train_offline(&ds, &cfg);
        assert!(matches!(err, Err(Error::NumericalFailure { .. })));
        let params = load_params(&out_dir.path().join("policy.ckpt")).unwrap();
        assert!(params
            .iter()
            .all(|p| p.value.data().iter().all(|v| v.is_finite())));
    }

    #[test]
    fn buildin_probability_metric_matches_direct_measurement() {
        let data_dir = tempfile::tempdir().unwrap();
        let ds = tiny_dataset(data_dir.path(), 4);
        let ep = ds.load(0).unwrap();
        let policy = RecurrentNet::new_policy(ep.obs_dim, 8, N_ACTIONS_FULL, 7);
        let p = mean_designated_buildin_prob(&ds, &policy).unwrap();
        assert!(p > 0.0 && p < 1.0);
        let near_uniform = (p - 1.0 / N_ACTIONS_FULL as f64).abs();
        assert!(near_uniform < 0.05, "fresh policy should be near uniform, off by {near_uniform}");
    }
}
