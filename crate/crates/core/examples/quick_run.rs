//! Trains one decomposition on a built-in network and prints the readout.
//!
//! `cargo run --release -p tedecomp --example quick_run -- fig2b source_past 4000`

use std::time::Instant;

use tedecomp::boolnet::{builtin, simulate_seeded};
use tedecomp::decomposer::{run_scheme, Architecture, Dataset, Direction, SchemeConfig};
use tedecomp::series::ChannelRoles;

fn main() -> tedecomp::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let system = args.get(1).map_or("fig2b", String::as_str);
    let direction = match args.get(2).map_or("source_past", String::as_str) {
        "target_future" => Direction::TargetFuture,
        _ => Direction::SourcePast,
    };
    let steps: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(4000);
    let lr: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let seed: u64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(0);

    let spec = builtin(system, 7)?;
    let series = simulate_seeded(&spec, 10_000, 1)?;
    let roles = ChannelRoles::new(
        series.indices_of(&spec.source)?,
        series.indices_of(&spec.target)?,
        Vec::new(),
    );
    let mut cfg = SchemeConfig::synthetic();
    cfg.architecture = Architecture::compact();
    cfg.direction = direction;
    cfg.schedule.total_steps = steps;
    cfg.adam.learning_rate = lr;
    cfg.seed = seed;
    let data = Dataset::new(&series, &roles, cfg.tau, cfg.train_fraction)?;
    let t = Instant::now();
    let run = run_scheme(&data, &cfg)?;
    let secs = t.elapsed().as_secs_f64();
    for p in &run.record.points {
        println!("{:6} {:9.3e} kl {:7.3} nce {:6.3}", p.step, p.beta, p.kl_total_bits, p.nce_val_bits);
    }
    let r = &run.result;
    println!(
        "te {:.3} self {:.3} rich {:.3}@{} share point {} beta {:.3e} plateau {}",
        r.te_bits, r.self_info_bits, r.rich_nce_bits, r.rich_index, r.share_index, r.share_beta, r.plateau
    );
    for s in &r.shares {
        println!("  {:10} {:6.3} bits {:5.3}", s.label, s.bits, s.fraction);
    }
    println!("{secs:.1} s, {:.2} ms/step", 1e3 * secs / cfg.total_run_steps() as f64);
    Ok(())
}
