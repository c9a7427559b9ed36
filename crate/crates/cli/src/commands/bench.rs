use std::time::Instant;

use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};
use solarwind_core::hux::{hux_f, HuxParams};
use solarwind_core::sfno::{load_checkpoint, predict};
use solarwind_core::storage::read_cube;

use super::write_file;
use crate::args::BenchArgs;
use crate::mem;

/// Median over repeats. Memory is `None` where procfs is unavailable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchEntry {
    pub time_s: f64,
    pub total_mem_mb: Option<f64>,
    pub infer_mem_mb: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub repeat: usize,
    #[serde(rename = "SFNO")]
    pub sfno: BenchEntry,
    #[serde(rename = "HUX-f")]
    pub hux: BenchEntry,
    pub note: String,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn median_opt(v: Vec<Option<f64>>) -> Option<f64> {
    v.into_iter().collect::<Option<Vec<_>>>().map(median)
}

fn measure(repeat: usize, mut f: impl FnMut() -> Result<()>) -> Result<BenchEntry> {
    let (mut times, mut totals, mut infers) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..repeat {
        let before = mem::rss_mb();
        let reset = mem::reset_peak();
        let t = Instant::now();
        f()?;
        times.push(t.elapsed().as_secs_f64());
        let peak = mem::peak_rss_mb();
        totals.push(peak);
        infers.push(match (reset, before, peak) {
            (true, Some(b), Some(p)) => Some((p - b).max(0.0)),
            _ => None,
        });
    }
    Ok(BenchEntry {
        time_s: median(times),
        total_mem_mb: median_opt(totals),
        infer_mem_mb: median_opt(infers),
    })
}

pub fn bench(a: &BenchArgs) -> Result<()> {
    if a.repeat == 0 {
        bail!("--repeat must be >= 1");
    }
    let ckpt = load_checkpoint(&a.ckpt)?;
    let cube = read_cube(&a.boundary)?;
    if cube.grid() != &ckpt.grid {
        bail!(
            "boundary grid {}x{} differs from checkpoint grid {}x{}",
            cube.grid().n_lat(),
            cube.grid().n_lon(),
            ckpt.grid.n_lat(),
            ckpt.grid.n_lon()
        );
    }
    let boundary = cube.slice(0);
    let sfno = measure(a.repeat, || {
        std::hint::black_box(predict(&ckpt, boundary)?);
        Ok(())
    })?;
    let hux = measure(a.repeat, || {
        std::hint::black_box(hux_f(boundary, &ckpt.radial, &ckpt.grid, &HuxParams::default())?);
        Ok(())
    })?;
    let report = BenchReport {
        repeat: a.repeat,
        sfno,
        hux,
        note: "median over repeats; memory is peak resident set from /proc/self/status (platform-approximate), \
infer_mem_mb is the peak growth during the call"
            .into(),
    };
    let json = serde_json::to_string_pretty(&report)?;
    match &a.out {
        Some(p) => {
            write_file(p, json.as_bytes())?;
            println!("wrote {}", p.display());
        }
        None => println!("{json}"),
    }
    Ok(())
}
