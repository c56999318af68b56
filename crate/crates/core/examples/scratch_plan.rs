//! Scratch: desk-profile training rehearsal with live epoch output.
//!
//! Args: [variant] [seed] [epochs] then optional key=value overrides:
//!   cp=<c_primary> cb=<c_bc> ca=<c_action> lr=<rate> qf=<0|1>

use regrasp_core::env::EnvParams;
use regrasp_core::learning::{train, TrainConfig, Variant};
use regrasp_core::planners::demo::{generate, DemoConfig};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let variant = match args.get(1).map(String::as_str) {
        Some("plain") => Variant::Plain,
        Some("targeted") => Variant::Targeted,
        _ => Variant::Mixed,
    };
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1);
    let epochs: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(150);

    let params = EnvParams::default();
    let mut cfg = TrainConfig::desk();
    cfg.epochs = epochs;
    for arg in &args[4.min(args.len())..] {
        let Some((key, val)) = arg.split_once('=') else { continue };
        match key {
            "cp" => cfg.c_primary = val.parse().unwrap(),
            "cb" => cfg.c_bc = val.parse().unwrap(),
            "ca" => cfg.c_action = val.parse().unwrap(),
            "lr" => cfg.learning_rate = val.parse().unwrap(),
            "qf" => cfg.q_filter = val.parse::<u8>().unwrap() != 0,
            other => panic!("unknown override {other}"),
        }
    }
    println!(
        "cfg: c_primary {:.2e}  c_bc {:.2e}  c_action {:.2e}  lr {:.2e}  q_filter {}",
        cfg.c_primary, cfg.c_bc, cfg.c_action, cfg.learning_rate, cfg.q_filter
    );

    let t0 = Instant::now();
    let (demos, _) = generate(&params, 4242, cfg.demo_count, cfg.demo_count * 20, &DemoConfig::default())
        .expect("demo generation");
    println!("demos: {} in {:.1}s", demos.len(), t0.elapsed().as_secs_f64());

    let t1 = Instant::now();
    let out = train(&params, &cfg, variant, seed, &demos, |row, diag| {
        println!(
            "epoch {:3}  success {:.2}  return {:7.3}  eps_r {:.4}  eps_t {:.4}  demos {:5}  \
             | pi2 {:9.3e}  q {:8.3}  cl {:9.3e}  bc/b {:5.1}  t {:.0}s",
            row.epoch,
            row.eval_success_rate,
            row.mean_return,
            row.eps_r,
            row.eps_t,
            row.demo_count,
            diag.mean_pi_sq,
            diag.mean_q,
            diag.critic_loss,
            diag.bc_samples,
            t1.elapsed().as_secs_f64()
        );
    })
    .expect("training");
    println!(
        "{} seed {}: final {:.3} in {:.0}s",
        variant.name(),
        seed,
        out.final_success,
        t1.elapsed().as_secs_f64()
    );
}
