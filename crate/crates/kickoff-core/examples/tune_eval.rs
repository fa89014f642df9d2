//! Measures how reliably the TrueSkill ladder separates scripted teams of
//! graded noise levels, across seeds, to size the ranking gate.

use std::time::Instant;

use kickoff_core::env::PitchConfig;
use kickoff_core::eval::{rank_round_robin, Contender, Participant};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let rounds: usize = args.first().map(|s| s.parse().unwrap()).unwrap_or(200);
    let steps: u32 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(1000);
    let players: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(2);

    let config = PitchConfig::full_game(players, 0);
    let mut correct = 0;
    for seed in 0..5u64 {
        let pool = vec![
            Contender { name: "noise30".into(), participant: Participant::ScriptedNoisy(0.3) },
            Contender { name: "noise10".into(), participant: Participant::ScriptedNoisy(0.1) },
            Contender { name: "noise00".into(), participant: Participant::Scripted },
        ];
        let start = Instant::now();
        let board = rank_round_robin(&config, &pool, rounds, steps, seed).unwrap();
        let names: Vec<&str> = board.iter().map(|e| e.name.as_str()).collect();
        let ok = names == ["noise00", "noise10", "noise30"];
        if ok {
            correct += 1;
        }
        println!(
            "seed {seed}: {:?} {} in {:.1}s",
            board
                .iter()
                .map(|e| format!("{} mu={:.2} w/d/l={}/{}/{}", e.name, e.rating.mu, e.wins, e.draws, e.losses))
                .collect::<Vec<_>>(),
            if ok { "OK" } else { "WRONG" },
            start.elapsed().as_secs_f64()
        );
    }
    println!("{correct}/5 seeds ranked correctly (rounds={rounds} steps={steps} players={players})");
}
