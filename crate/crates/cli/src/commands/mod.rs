mod bench;
mod data;
mod eval;
mod model;
mod render;

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use solarwind_core::exec;

use crate::args::{Cli, Command};

pub use bench::{BenchEntry, BenchReport};
pub use eval::{EvalReport, CONVENTION};

/// Executes one parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    exec::set_mode(if cli.sequential {
        exec::Mode::Sequential
    } else {
        exec::Mode::Parallel
    });
    log_config(cli)?;
    match &cli.command {
        Command::Synth(a) => data::synth(a),
        Command::Hux(a) => data::hux(a),
        Command::Train(a) => model::train(a),
        Command::Cv(a) => model::cv(a),
        Command::Eval(a) => eval::eval(a),
        Command::Bench(a) => bench::bench(a),
        Command::Render(a) => render::render(a),
    }
}

/// One JSON line with every resolved flag, to stderr and optionally to the
/// log file.
fn log_config(cli: &Cli) -> Result<()> {
    let line = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config": cli,
    })
    .to_string();
    eprintln!("{line}");
    if let Some(path) = &cli.log {
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .with_context(|| format!("opening log {}", path.display()))?;
        writeln!(f, "{line}")?;
    }
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// `dir/stem<suffix>` next to `path`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}
