//! Trains a network on a dataset file and saves the policy.
//! `cargo run --example train_policy -- nominal-small.bin policy.gcnp`

use gcnet_lab::dataset::Dataset;
use gcnet_lab::gcnet::{train, TrainConfig};

fn main() -> gcnet_lab::Result<()> {
    let mut args = std::env::args().skip(1);
    let input = args.next().unwrap_or_else(|| "nominal-small.bin".into());
    let output = args.next().unwrap_or_else(|| "policy.gcnp".into());
    let ds = Dataset::load(&input)?;
    println!("{:?}: {} train / {} test pairs, input dim {}", ds.kind, ds.train.len(), ds.test.len(), ds.input_dim());

    let cfg = TrainConfig { epochs: 60, ..TrainConfig::default() };
    let (policy, log) = train(&ds, &cfg)?;
    for e in log.epochs.iter().step_by(10) {
        println!(
            "epoch {:>3}  train {:.3e}  test {:.3e}  lr {:.1e}",
            e.epoch, e.train_mse, e.test_mse, e.learning_rate
        );
    }
    println!("final test MSE {:.3e}, target reached: {}", log.final_test_mse().unwrap_or(f64::NAN), log.reached_target);
    policy.save(&output)
}
