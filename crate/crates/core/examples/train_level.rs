//! Train a PPO agent on one or more levels and print the learning curve.
//!
//! ```text
//! cargo run --release -p rhea-core --example train_level -- DoorKey-6 150000 [seed]
//! ```

use std::time::Instant;

use rhea_core::ppo::{evaluate, Agent, Collector, EnvAssignment, PpoConfig};
use rhea_core::{rng, EnvSpec, StepBudgetSchedule};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let pool: Vec<EnvSpec> = args
        .first()
        .map(String::as_str)
        .unwrap_or("DoorKey-6")
        .split(',')
        .map(str::parse)
        .collect::<Result<_, _>>()?;
    let frames: u64 = args
        .get(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(150_000);
    let seed: u64 = args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(0);

    let mut cfg = PpoConfig::default();
    if std::env::var("LINEAR_HEAD").is_ok() {
        cfg.logit_head = rhea_core::ppo::LogitHead::Linear;
    }
    let schedule = StepBudgetSchedule::default();
    let mut r = rng::seeded(seed);
    let mut agent = Agent::new(&cfg, &mut r)?;
    let mut collector = Collector::new(
        EnvAssignment::RoundRobin(pool.clone()),
        cfg.num_processes,
        &schedule,
        0,
        &mut r,
    )?;
    let start = Instant::now();
    while agent.iterations < frames {
        let stats = agent.train(
            &mut collector,
            10 * cfg.frames_per_update() as u64,
            &cfg,
            &schedule,
            &mut r,
        )?;
        let mut line = format!(
            "frames {:>7}  {:>6.1}s  entropy {:.3}",
            agent.iterations,
            start.elapsed().as_secs_f64(),
            stats.last_update.entropy
        );
        let wins = stats
            .episodes
            .iter()
            .filter(|e| e.result.episode_return > 0.0)
            .count();
        line.push_str(&format!("  train {wins}/{}", stats.episodes.len()));
        for spec in &pool {
            let m = evaluate(
                &agent.params,
                cfg.logit_head,
                *spec,
                10,
                &schedule,
                agent.iterations,
                &mut r,
            )?;
            line.push_str(&format!("  {spec} {m:.3}"));
        }
        println!("{line}");
    }
    Ok(())
}
