use std::fmt::Write as _;

use anyhow::{bail, Result};
use solarwind_core::sfno::{
    cross_validate, save_checkpoint, train_on_cubes, AdamConfig, SfnoConfig, TrainOptions,
};
use solarwind_core::storage::{DatasetManifest, Split, VelocityCube};

use super::{sibling, write_file};
use crate::args::{CvArgs, ModelArgs, TrainArgs};

fn load_train(path: &std::path::Path) -> Result<Vec<VelocityCube>> {
    let cubes = DatasetManifest::load(path)?.load_split(Split::Train)?;
    if cubes.is_empty() {
        bail!("{} has no train entries", path.display());
    }
    Ok(cubes)
}

fn config(m: &ModelArgs, layers: usize, hidden: usize, sample: &VelocityCube) -> SfnoConfig {
    let (n_r, n_lat, n_lon) = sample.dims();
    SfnoConfig {
        n_layers: layers,
        hidden,
        l_max: m.l_max.unwrap_or(n_lat - 1),
        m_max: m.m_max.unwrap_or(n_lon / 2),
        in_channels: 1,
        out_channels: n_r - 1,
        mlp_ratio: m.mlp_ratio,
        spectral: m.spectral.into(),
        seed: m.seed,
        ..SfnoConfig::default()
    }
}

fn options(m: &ModelArgs, epochs: usize, val_fraction: Option<f64>) -> TrainOptions {
    TrainOptions {
        epochs,
        batch_size: m.batch,
        adam: AdamConfig {
            lr: m.lr,
            ..AdamConfig::default()
        },
        val_fraction,
        shuffle_seed: m.seed,
    }
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let cubes = load_train(&a.manifest)?;
    let cfg = config(&a.model, a.layers, a.channels, &cubes[0]);
    let ckpt = train_on_cubes(&cubes, &cfg, &options(&a.model, a.epochs, a.val_fraction))?;
    save_checkpoint(&ckpt, &a.out)?;
    let mut csv = String::from("epoch,train_loss,val_loss\n");
    for p in &ckpt.curve {
        let val = p.val_loss.map(|v| format!("{v:e}")).unwrap_or_default();
        writeln!(csv, "{},{:e},{val}", p.epoch, p.train_loss)?;
    }
    let curve_path = a.curve.clone().unwrap_or_else(|| sibling(&a.out, ".csv"));
    write_file(&curve_path, csv.as_bytes())?;
    println!(
        "wrote {} ({} parameters, best epoch {}) and {}",
        a.out.display(),
        ckpt.params.len(),
        ckpt.best_epoch,
        curve_path.display()
    );
    Ok(())
}

pub fn cv(a: &CvArgs) -> Result<()> {
    let cubes = load_train(&a.manifest)?;
    let base = config(&a.model, 1, 1, &cubes[0]);
    let opts = options(&a.model, a.epochs, None);
    let table = cross_validate(&cubes, &base, &opts, &a.layers, &a.channels, a.folds)?;
    let mut csv = String::from("n_layers,hidden");
    for f in 1..=a.folds {
        write!(csv, ",fold_{f}_mse")?;
    }
    csv.push_str(",mean_mse\n");
    for row in &table.rows {
        write!(csv, "{},{}", row.n_layers, row.hidden)?;
        for m in &row.fold_mse {
            write!(csv, ",{m:e}")?;
        }
        writeln!(csv, ",{:e}", row.mean_mse)?;
    }
    write_file(&a.out, csv.as_bytes())?;
    println!("wrote {} ({} architectures)", a.out.display(), table.rows.len());
    Ok(())
}
