//! Minimal external completer: every pixel takes the value of its nearest
//! seed (Euclidean, ties to the earlier seed in file order).
//!
//! Usage: `nearest_fill_completer <workdir>`; reads `seeds.txt`, writes
//! `dense.png`.

use std::path::PathBuf;
use std::process::ExitCode;

use stereoproxy::external::{DENSE_FILE, SEEDS_FILE};
use stereoproxy::io;
use stereoproxy_core::DisparityMap;

fn run(dir: PathBuf) -> anyhow::Result<()> {
    let seeds = io::load_seeds(&dir.join(SEEDS_FILE))?;
    anyhow::ensure!(!seeds.is_empty(), "no seeds");
    let dense = DisparityMap::from_fn(seeds.width(), seeds.height(), |x, y| {
        let dist = |s: &stereoproxy_core::Seed| {
            let (dx, dy) = (s.x as i64 - x as i64, s.y as i64 - y as i64);
            dx * dx + dy * dy
        };
        seeds.entries().iter().min_by_key(|s| dist(s)).map(|s| s.d)
    });
    io::save_disparity_kitti(&dense, &dir.join(DENSE_FILE))?;
    Ok(())
}

fn main() -> ExitCode {
    let Some(dir) = std::env::args_os().nth(1) else {
        eprintln!("usage: nearest_fill_completer <workdir>");
        return ExitCode::from(2);
    };
    match run(dir.into()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("nearest_fill_completer: {e:#}");
            ExitCode::FAILURE
        }
    }
}
