//! Small nominal dataset: samples initial states, solves each one and
//! stores the state-action pairs. `cargo run --example generate_dataset -- 40`

use gcnet_lab::dataset::{builtin_recipe, generate, write_manifest, RecipeKind};

fn main() -> gcnet_lab::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let recipe = builtin_recipe(RecipeKind::Nominal).with_count(n);
    let t = std::time::Instant::now();
    let g = generate(&recipe, 1)?;
    println!("{:#?}", g.report);
    println!("{:.1} s", t.elapsed().as_secs_f64());
    let e: Vec<f64> = g.trajectories.iter().map(|t| t.energy).collect();
    let d: Vec<f64> = g.trajectories.iter().map(|t| t.duration).collect();
    println!(
        "E in [{:.2}, {:.2}], T in [{:.2}, {:.2}] s",
        e.iter().cloned().fold(f64::INFINITY, f64::min),
        e.iter().cloned().fold(0.0, f64::max),
        d.iter().cloned().fold(f64::INFINITY, f64::min),
        d.iter().cloned().fold(0.0, f64::max)
    );
    let path = std::path::Path::new("nominal-small.bin");
    g.dataset.save(path)?;
    write_manifest(path, &recipe, &g.report)?;
    Ok(())
}
