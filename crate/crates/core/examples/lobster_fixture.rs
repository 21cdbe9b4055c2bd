//! Writes a synthetic cointegrated pair as LOBSTER level-1 files.
//!
//! ```text
//! cargo run --example lobster_fixture -- [dir] [seconds] [seed]
//! ```
//!
//! Defaults: `fixtures/lobster`, 3600 seconds from 09:30, seed 11. The
//! pair's long-run mean jumps along the fast eigenvector, so the
//! cointegrated portfolio switches between two levels.

use std::path::PathBuf;

use regime_trader::pairs::fixture::{simulate_pair, write_lobster_asset, PairSpec};
use regime_trader::rng;

const OPEN: f64 = 34_200.0;

fn main() -> regime_trader::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "fixtures/lobster".into()));
    let seconds: usize = args.next().map(|s| s.parse().expect("seconds")).unwrap_or(3600);
    let seed: u64 = args.next().map(|s| s.parse().expect("seed")).unwrap_or(11);
    let spec = PairSpec { shift: 0.3, switch_prob: 1.0 / 300.0, ..PairSpec::default() };
    let prices = simulate_pair(&spec, seconds, seed)?;
    std::fs::create_dir_all(&dir)?;
    let mut root = rng::seeded(seed);
    for (name, mids) in ["alpha", "beta"].iter().zip(&prices) {
        write_lobster_asset(&dir, name, OPEN, mids, &mut rng::derive(&mut root))?;
    }
    std::fs::write(dir.join("spec.json"), serde_json::to_string_pretty(&spec)? + "\n")?;
    println!("wrote {} seconds of two assets to {}", seconds, dir.display());
    Ok(())
}
