use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::checkpoint::{Checkpoint, CurvePoint};
use super::loss::{loss_l2_2d, loss_l2_2d_grad, BatchSpec};
use super::model::GridContext;
use super::params::{SfnoConfig, SfnoParams};
use super::SfnoError;
use crate::exec;
use crate::grid::{RadialGrid, SphericalGrid};
use crate::storage::{DatasetManifest, NormStats, Split, VelocityCube};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Fraction of the training cubes (taken from the end) held out for
    /// model selection. `None` means 10%.
    pub val_fraction: Option<f64>,
    pub shuffle_seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 32,
            adam: AdamConfig::default(),
            val_fraction: None,
            shuffle_seed: 0,
        }
    }
}

impl TrainOptions {
    fn validate(&self) -> Result<(), SfnoError> {
        if self.batch_size == 0 {
            return Err(SfnoError::InvalidArgument("batch_size must be >= 1".into()));
        }
        if let Some(f) = self.val_fraction {
            if !(0.0..1.0).contains(&f) {
                return Err(SfnoError::InvalidArgument(format!("val_fraction {f} outside [0, 1)")));
            }
        }
        if !(self.adam.lr > 0.0 && self.adam.lr.is_finite()) {
            return Err(SfnoError::InvalidArgument(format!("learning rate {} must be positive", self.adam.lr)));
        }
        Ok(())
    }
}

/// One normalized training pair: the boundary slice and the `n_r - 1` outer
/// slices.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

impl Sample {
    pub fn from_cube(cube: &VelocityCube, norm: &NormStats) -> Self {
        Self {
            input: norm.apply_all(cube.slice(0)),
            target: norm.apply_all(cube.outer_slices()),
        }
    }
}

fn check_cubes(cubes: &[VelocityCube], config: &SfnoConfig) -> Result<(SphericalGrid, RadialGrid), SfnoError> {
    let first = cubes
        .first()
        .ok_or_else(|| SfnoError::InvalidArgument("no training cubes".into()))?;
    for c in cubes {
        if c.dims() != first.dims() || c.radial() != first.radial() {
            return Err(SfnoError::ShapeMismatch(format!(
                "cube dims {:?} differ from {:?}",
                c.dims(),
                first.dims()
            )));
        }
    }
    let n_r = first.radial().n_r();
    if n_r < 2 || config.out_channels != n_r - 1 {
        return Err(SfnoError::InvalidConfig(format!(
            "out_channels {} must equal n_r - 1 = {}",
            config.out_channels,
            n_r.saturating_sub(1)
        )));
    }
    Ok((first.grid().clone(), first.radial().clone()))
}

/// Mean per-sample loss and the summed gradient of the batch-mean loss.
/// Samples run in parallel; gradients are reduced in index order.
fn batch_gradient(
    params: &SfnoParams,
    ctx: &GridContext,
    samples: &[&Sample],
    spec: BatchSpec,
) -> Result<(f64, Vec<f64>), SfnoError> {
    let b = samples.len() as f64;
    let parts = exec::map_range(samples.len(), |i| -> Result<(f64, Vec<f64>), SfnoError> {
        let s = samples[i];
        let (out, tape) = params.forward_tape(ctx, &s.input)?;
        let (loss, mut g) = loss_l2_2d_grad(&out, &s.target, spec)?;
        g.iter_mut().for_each(|v| *v /= b);
        Ok((loss, params.backward(ctx, &tape, &g)?))
    });
    let mut grads = vec![0.0; params.len()];
    let mut total = 0.0;
    for part in parts {
        let (loss, g) = part?;
        total += loss;
        grads.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    Ok((total / b, grads))
}

fn mean_loss(params: &SfnoParams, ctx: &GridContext, samples: &[Sample], spec: BatchSpec) -> Result<f64, SfnoError> {
    let losses = exec::map_range(samples.len(), |i| -> Result<f64, SfnoError> {
        let out = params.forward(ctx, &samples[i].input)?;
        loss_l2_2d(&out, &samples[i].target, spec)
    });
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / samples.len() as f64)
}

/// Trains on in-memory cubes. The last `val_fraction` of `cubes` is held
/// out; normalization is fit on the rest. The returned checkpoint holds the
/// parameters of the epoch with the lowest validation loss (training loss
/// when there is no validation split).
pub fn train_on_cubes(
    cubes: &[VelocityCube],
    config: &SfnoConfig,
    opts: &TrainOptions,
) -> Result<Checkpoint, SfnoError> {
    opts.validate()?;
    let (grid, radial) = check_cubes(cubes, config)?;
    let n = cubes.len();
    let frac = opts.val_fraction.unwrap_or(0.1);
    let n_val = ((n as f64 * frac).round() as usize).min(n - 1);
    let (train_cubes, val_cubes) = cubes.split_at(n - n_val);
    let norm = NormStats::fit(train_cubes)?;
    let train: Vec<Sample> = train_cubes.iter().map(|c| Sample::from_cube(c, &norm)).collect();
    let val: Vec<Sample> = val_cubes.iter().map(|c| Sample::from_cube(c, &norm)).collect();

    let mut params = SfnoParams::init(config)?;
    let ctx = GridContext::new(&params, &grid)?;
    let spec = BatchSpec::new(1, config.out_channels, grid.n_lat(), grid.n_lon())?;
    let mut adam = AdamState::new(params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(opts.shuffle_seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut curve = Vec::with_capacity(opts.epochs);
    let mut best = (f64::INFINITY, 0usize, params.values.clone());

    for epoch in 1..=opts.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(opts.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &train[i]).collect();
            let (loss, grads) = batch_gradient(&params, &ctx, &batch, spec)?;
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(SfnoError::Divergence(format!("non-finite loss or gradient in epoch {epoch}")));
            }
            epoch_loss += loss * chunk.len() as f64;
            adam_step(&mut params.values, &grads, &mut adam, &opts.adam);
        }
        let train_loss = epoch_loss / train.len() as f64;
        let val_loss = if val.is_empty() {
            None
        } else {
            Some(mean_loss(&params, &ctx, &val, spec)?)
        };
        let score = val_loss.unwrap_or(train_loss);
        if !score.is_finite() {
            return Err(SfnoError::Divergence(format!("non-finite loss after epoch {epoch}")));
        }
        if score < best.0 {
            best = (score, epoch, params.values.clone());
        }
        curve.push(CurvePoint {
            epoch,
            train_loss,
            val_loss,
        });
    }
    params.values = best.2;
    Ok(Checkpoint {
        params,
        norm,
        grid,
        radial,
        best_epoch: best.1,
        curve,
    })
}

/// Trains on the `train` split of a manifest.
pub fn train(manifest: &DatasetManifest, config: &SfnoConfig, opts: &TrainOptions) -> Result<Checkpoint, SfnoError> {
    let cubes = manifest.load_split(Split::Train)?;
    train_on_cubes(&cubes, config, opts)
}

fn predict_with(
    params: &SfnoParams,
    ctx: &GridContext,
    norm: &NormStats,
    radial: &RadialGrid,
    boundary: &[f64],
) -> Result<VelocityCube, SfnoError> {
    let out = params.forward(ctx, &norm.apply_all(boundary))?;
    let mut values = Vec::with_capacity(boundary.len() + out.len());
    values.extend_from_slice(boundary);
    values.extend(norm.invert_all(&out));
    if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
        return Err(SfnoError::NonPhysical(format!(
            "predicted speed {v} km/s at flat index {i}; the model is likely undertrained"
        )));
    }
    Ok(VelocityCube::new(radial.clone(), ctx.grid().clone(), values)?)
}

/// Full cube for a boundary in km/s on the checkpoint grid. Slice 0 is the
/// boundary itself.
pub fn predict(ckpt: &Checkpoint, boundary: &[f64]) -> Result<VelocityCube, SfnoError> {
    let ctx = GridContext::new(&ckpt.params, &ckpt.grid)?;
    predict_with(&ckpt.params, &ctx, &ckpt.norm, &ckpt.radial, boundary)
}

/// Runs a checkpoint on a grid refined by `factor` (2 or 4) in both angles,
/// with the trained spectral truncation unchanged.
pub fn infer_multires(ckpt: &Checkpoint, boundary: &[f64], factor: usize) -> Result<VelocityCube, SfnoError> {
    let grid = ckpt.grid.refine(factor)?;
    if boundary.len() != grid.len() {
        return Err(SfnoError::ShapeMismatch(format!(
            "boundary has {} values, refined grid {}x{} needs {}",
            boundary.len(),
            grid.n_lat(),
            grid.n_lon(),
            grid.len()
        )));
    }
    let ctx = GridContext::new(&ckpt.params, &grid)?;
    predict_with(&ckpt.params, &ctx, &ckpt.norm, &ckpt.radial, boundary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub n_layers: usize,
    pub hidden: usize,
    /// Validation MSE in (km/s)² for each fold.
    pub fold_mse: Vec<f64>,
    pub mean_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvTable {
    pub folds: usize,
    pub rows: Vec<CvRow>,
}

/// K-fold grid search over depth and width. Folds are contiguous in the
/// given order; each fold's model is trained on the remaining folds with
/// its own normalization and no inner validation split.
pub fn cross_validate(
    cubes: &[VelocityCube],
    base: &SfnoConfig,
    opts: &TrainOptions,
    layers: &[usize],
    hidden: &[usize],
    folds: usize,
) -> Result<CvTable, SfnoError> {
    if folds < 2 {
        return Err(SfnoError::InvalidArgument(format!("folds = {folds}, need at least 2")));
    }
    if cubes.len() < folds {
        return Err(SfnoError::InvalidArgument(format!(
            "{} cubes cannot fill {folds} folds",
            cubes.len()
        )));
    }
    if layers.is_empty() || hidden.is_empty() {
        return Err(SfnoError::InvalidArgument("empty search grid".into()));
    }
    let n = cubes.len();
    let bounds: Vec<(usize, usize)> = (0..folds).map(|f| (f * n / folds, (f + 1) * n / folds)).collect();
    let inner = TrainOptions {
        val_fraction: Some(0.0),
        ..opts.clone()
    };
    let mut rows = Vec::new();
    for &nl in layers {
        for &h in hidden {
            let config = SfnoConfig {
                n_layers: nl,
                hidden: h,
                ..base.clone()
            };
            let mut fold_mse = Vec::with_capacity(folds);
            for &(lo, hi) in &bounds {
                let train: Vec<VelocityCube> = cubes[..lo].iter().chain(&cubes[hi..]).cloned().collect();
                let ckpt = train_on_cubes(&train, &config, &inner)?;
                let ctx = GridContext::new(&ckpt.params, &ckpt.grid)?;
                let mut sq = 0.0;
                let mut count = 0usize;
                for cube in &cubes[lo..hi] {
                    let out = ckpt.params.forward(&ctx, &ckpt.norm.apply_all(cube.slice(0)))?;
                    for (p, t) in out.iter().zip(cube.outer_slices()) {
                        let d = ckpt.norm.invert(*p) - t;
                        sq += d * d;
                    }
                    count += out.len();
                }
                fold_mse.push(sq / count as f64);
            }
            let mean_mse = fold_mse.iter().sum::<f64>() / folds as f64;
            rows.push(CvRow {
                n_layers: nl,
                hidden: h,
                fold_mse,
                mean_mse,
            });
        }
    }
    Ok(CvTable { folds, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hux::HuxParams;
    use crate::storage::{synth_dataset, SynthConfig, Warp};

    fn cubes(count: usize) -> Vec<VelocityCube> {
        let cfg = SynthConfig {
            seed: 3,
            count,
            radial: RadialGrid::uniform(4, 30.0, 60.0).unwrap(),
            grid: SphericalGrid::new(8, 16).unwrap(),
            l_band: 3,
            hux: HuxParams::default(),
            warp: Warp::IDENTITY,
        };
        synth_dataset(&cfg).unwrap().into_iter().map(|s| s.truth).collect()
    }

    fn config() -> SfnoConfig {
        SfnoConfig {
            n_layers: 1,
            hidden: 4,
            l_max: 5,
            m_max: 6,
            out_channels: 3,
            seed: 1,
            ..SfnoConfig::default()
        }
    }

    fn opts(epochs: usize) -> TrainOptions {
        TrainOptions {
            epochs,
            batch_size: 4,
            adam: AdamConfig {
                lr: 5e-3,
                ..AdamConfig::default()
            },
            ..TrainOptions::default()
        }
    }

    #[test]
    fn zero_epochs_returns_initial_params() {
        let c = cubes(6);
        let ckpt = train_on_cubes(&c, &config(), &opts(0)).unwrap();
        assert!(ckpt.curve.is_empty());
        assert_eq!(ckpt.best_epoch, 0);
        assert_eq!(ckpt.params, SfnoParams::init(&config()).unwrap());
    }

    #[test]
    fn training_is_deterministic_and_decreases_loss() {
        let c = cubes(10);
        let a = train_on_cubes(&c, &config(), &opts(15)).unwrap();
        let b = train_on_cubes(&c, &config(), &opts(15)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.curve.len(), 15);
        assert!(a.curve.iter().all(|p| p.val_loss.is_some()));
        assert!(a.curve.last().unwrap().train_loss < a.curve[0].train_loss);
        let best = a.curve[a.best_epoch - 1].val_loss.unwrap();
        assert!(a.curve.iter().all(|p| p.val_loss.unwrap() >= best));
    }

    #[test]
    fn parallel_and_sequential_agree_bitwise() {
        let c = cubes(8);
        exec::set_mode(exec::Mode::Sequential);
        let s = train_on_cubes(&c, &config(), &opts(3));
        exec::set_mode(exec::Mode::Parallel);
        let p = train_on_cubes(&c, &config(), &opts(3));
        assert_eq!(s.unwrap(), p.unwrap());
    }

    #[test]
    fn mismatched_out_channels() {
        let c = cubes(4);
        let bad = SfnoConfig {
            out_channels: 5,
            ..config()
        };
        assert!(matches!(train_on_cubes(&c, &bad, &opts(1)), Err(SfnoError::InvalidConfig(_))));
    }

    #[test]
    fn predictions_keep_boundary_and_refine() {
        let c = cubes(6);
        let ckpt = train_on_cubes(&c, &config(), &opts(5)).unwrap();
        let cube = predict(&ckpt, c[0].slice(0)).unwrap();
        assert_eq!(cube.slice(0), c[0].slice(0));
        assert_eq!(cube.dims(), c[0].dims());
        let fine = SphericalGrid::new(16, 32).unwrap();
        let boundary = vec![500.0; fine.len()];
        let hi = infer_multires(&ckpt, &boundary, 2).unwrap();
        assert_eq!(hi.dims(), (4, 16, 32));
        assert!(infer_multires(&ckpt, &boundary, 3).is_err());
        assert!(infer_multires(&ckpt, &boundary[1..], 2).is_err());
    }

    #[test]
    fn cross_validation_table() {
        let c = cubes(6);
        let t = cross_validate(&c, &config(), &opts(2), &[1, 2], &[2], 3).unwrap();
        assert_eq!(t.rows.len(), 2);
        assert!(t.rows.iter().all(|r| r.fold_mse.len() == 3 && r.mean_mse.is_finite()));
        assert!(cross_validate(&c, &config(), &opts(1), &[1], &[2], 1).is_err());
        assert!(cross_validate(&c[..2], &config(), &opts(1), &[1], &[2], 3).is_err());
    }
}
