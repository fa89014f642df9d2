//! Probes academy presets for reward density: win rate of uniform-random and
//! scripted teams, to size the fine-tuning budgets.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use kickoff_core::env::{
    reset, scripted_controller, step, Action, PitchConfig, TeamId, N_ACTIONS_ACADEMY,
};

fn episode(config: &PitchConfig, rng: &mut ChaCha8Rng, random: bool) -> (bool, u32) {
    let mut s = reset(config).unwrap();
    loop {
        let n = s.team_a.len();
        let acts: Vec<Action> = (0..n)
            .map(|i| {
                if random {
                    Action::from_index(rng.gen_range(0..N_ACTIONS_ACADEMY)).unwrap()
                } else {
                    scripted_controller(config, &s, TeamId::A, i)
                }
            })
            .collect();
        let out = step(config, &mut s, &acts).unwrap();
        if out.done {
            return (s.score.0 > s.score.1, s.step);
        }
    }
}

fn main() {
    for preset in ["counter_attack", "three_vs_one"] {
        for (label, random) in [("random", true), ("scripted", false)] {
            let mut rng = ChaCha8Rng::seed_from_u64(17);
            let mut wins = 0u32;
            let mut len_sum = 0u64;
            let episodes = 2000;
            for ep in 0..episodes {
                let c = PitchConfig::academy(preset, 1000 + ep).unwrap();
                let (win, len) = episode(&c, &mut rng, random);
                wins += win as u32;
                len_sum += len as u64;
            }
            println!(
                "{preset:>14} {label:>8}: win rate {:.3}, mean episode len {:.1}",
                wins as f64 / episodes as f64,
                len_sum as f64 / episodes as f64
            );
        }
    }
}
