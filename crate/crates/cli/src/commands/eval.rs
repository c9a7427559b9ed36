use std::collections::BTreeMap;
use std::fmt::Write as _;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use solarwind_core::exec;
use solarwind_core::hux::{hux_f, HuxParams};
use solarwind_core::metrics::{
    build_climatology, evaluate, relative_change, speed_histogram, EvalOptions, MetricReport,
};
use solarwind_core::sfno::{load_checkpoint, predict};
use solarwind_core::storage::{read_cube, DatasetManifest, Split, VelocityCube};

use super::{sibling, write_file};
use crate::args::{EvalArgs, SplitArg};

pub const CONVENTION: &str = "rel_change_pct is positive when SFNO improves on HUX-f: \
(HUX-f - SFNO) / HUX-f * 100 for lower-is-better metrics (mse, edge_mse, emd) and \
(SFNO - HUX-f) / HUX-f * 100 for higher-is-better metrics (ms_ssim, acc, psnr); null when undefined";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Models {
    #[serde(rename = "SFNO")]
    pub sfno: MetricReport,
    #[serde(rename = "HUX-f")]
    pub hux: MetricReport,
}

/// Side-by-side comparison, one row per model plus relative change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: String,
    pub cubes: usize,
    pub convention: String,
    pub models: Models,
    pub rel_change_pct: BTreeMap<String, Option<f64>>,
}

fn predictions(a: &EvalArgs, truths: &[VelocityCube]) -> Result<Vec<VelocityCube>> {
    if let Some(path) = &a.ckpt {
        let ckpt = load_checkpoint(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
        let preds = exec::map_range(truths.len(), |i| predict(&ckpt, truths[i].slice(0)));
        return Ok(preds.into_iter().collect::<Result<_, _>>()?);
    }
    let path = a.predictions.as_ref().expect("clap requires --ckpt or --predictions");
    let manifest = DatasetManifest::load(path)?;
    if manifest.entries.len() != truths.len() {
        bail!(
            "{} lists {} predictions for {} truth cubes",
            path.display(),
            manifest.entries.len(),
            truths.len()
        );
    }
    let preds = manifest
        .entries
        .iter()
        .map(|e| read_cube(&manifest.resolve(e)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(preds)
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let manifest = DatasetManifest::load(&a.manifest)?;
    let split = match a.split {
        SplitArg::Train => Split::Train,
        SplitArg::Test => Split::Test,
    };
    let truths = manifest.load_split(split)?;
    if truths.is_empty() {
        bail!("split {:?} of {} is empty", a.split, a.manifest.display());
    }
    let train = manifest.load_split(Split::Train)?;
    if train.is_empty() {
        bail!("climatology needs a non-empty train split");
    }
    let clim = build_climatology(&train)?;
    let sfno = predictions(a, &truths)?;
    let params = HuxParams {
        alpha: a.alpha,
        ..HuxParams::default()
    };
    let hux = exec::map_range(truths.len(), |i| {
        let t = &truths[i];
        hux_f(t.slice(0), t.radial(), t.grid(), &params).map(|r| r.cube)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;

    let opts = EvalOptions {
        edge_percentile: a.edge_percentile,
    };
    let r_sfno = evaluate(&sfno, &truths, &clim, &opts).context("scoring SFNO")?;
    let r_hux = evaluate(&hux, &truths, &clim, &opts).context("scoring HUX-f")?;
    let mut rel = BTreeMap::new();
    for ((name, dir, m), (_, _, b)) in r_sfno.headline().into_iter().zip(r_hux.headline()) {
        let v = match (m, b) {
            (Some(m), Some(b)) if b != 0.0 => Some(relative_change(dir, b, m)).filter(|v| v.is_finite()),
            _ => None,
        };
        rel.insert(name.to_string(), v);
    }
    let report = EvalReport {
        split: format!("{:?}", split).to_lowercase(),
        cubes: truths.len(),
        convention: CONVENTION.to_string(),
        models: Models {
            sfno: r_sfno,
            hux: r_hux,
        },
        rel_change_pct: rel,
    };
    write_file(&a.report, serde_json::to_string_pretty(&report)?.as_bytes())?;

    let radii = truths[0].radial().radii();
    let mut csv = String::from("radius_index,radius_rsun,sfno_mse,hux_f_mse\n");
    for (i, (s, h)) in report
        .models
        .sfno
        .per_radius_mse
        .iter()
        .zip(&report.models.hux.per_radius_mse)
        .enumerate()
    {
        writeln!(csv, "{},{},{s:e},{h:e}", i + 1, radii[i + 1])?;
    }
    let per_radius = a.per_radius.clone().unwrap_or_else(|| sibling(&a.report, "_per_radius.csv"));
    write_file(&per_radius, csv.as_bytes())?;

    let mut csv = String::from("source,bin,lo,hi,count\n");
    for (name, cubes) in [("truth", &truths), ("SFNO", &sfno), ("HUX-f", &hux)] {
        let values: Vec<f64> = cubes.iter().flat_map(|c| c.outer_slices().iter().copied()).collect();
        let h = speed_histogram(&values, a.bins)?;
        for (b, c) in h.counts.iter().enumerate() {
            writeln!(csv, "{name},{b},{},{},{c}", h.edges[b], h.edges[b + 1])?;
        }
    }
    let histogram = a.histogram.clone().unwrap_or_else(|| sibling(&a.report, "_histogram.csv"));
    write_file(&histogram, csv.as_bytes())?;

    let m = &report.models;
    println!("{:<8} {:>12} {:>12} {:>10} {:>8} {:>8} {:>8}", "model", "MSE", "EdgeMSE", "EMD", "MS-SSIM", "ACC", "PSNR");
    for (name, r) in [("SFNO", &m.sfno), ("HUX-f", &m.hux)] {
        let edge = r.edge_mse.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
        println!(
            "{name:<8} {:>12.3} {edge:>12} {:>10.3} {:>8.4} {:>8.4} {:>8.3}",
            r.mse, r.emd, r.ms_ssim, r.acc, r.psnr
        );
    }
    println!("wrote {}, {}, {}", a.report.display(), per_radius.display(), histogram.display());
    Ok(())
}
