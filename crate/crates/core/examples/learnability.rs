//! Train SmallNet on one task and print the curve and test accuracy.
//!
//! cargo run --release --example learnability -- proximity3 [epochs] [n_train] [shuffled]

use gestalt_probe::dots::Task;
use gestalt_probe::learn::{run_learnability, LearnabilityConfig, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let task: Task = args.first().map(String::as_str).unwrap_or("proximity3").parse()?;
    let mut cfg = LearnabilityConfig::default();
    if let Some(e) = args.get(1) {
        cfg.train = TrainConfig { epochs: e.parse()?, ..cfg.train };
    }
    if let Some(n) = args.get(2) {
        cfg.n_train = n.parse()?;
    }
    let shuffled = args.get(3).is_some_and(|s| s == "shuffled");
    let r = run_learnability(task, &cfg, shuffled)?;
    for e in &r.trained.curve {
        println!("epoch {:2} loss {:.4} acc {:.3}", e.epoch, e.train_loss, e.train_accuracy);
    }
    println!("{} shuffled={} test_accuracy={:.3} seconds={:.1}", task.as_str(), shuffled, r.evaluation.accuracy, r.seconds);
    println!("confusion {:?}", r.evaluation.confusion);
    Ok(())
}
