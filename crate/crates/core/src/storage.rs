//! Cube persistence, dataset manifests, normalization and synthetic data.
//!
//! # `HWC1` cube files
//!
//! Little-endian throughout:
//!
//! | bytes | content |
//! |-------|---------|
//! | 0..4  | magic `HWC1` |
//! | 4     | version (1) |
//! | 5..8  | reserved, zero |
//! | 8..20 | `n_r`, `n_lat`, `n_lon` as `u32` |
//! | ..    | `n_r` radii (R☉) as `f64` |
//! | ..    | `n_r * n_lat * n_lon` speeds (km/s) as `f64`, radius-major, then latitude, then longitude |
//!
//! Latitudes are implied: the file stores Gauss–Legendre sampled data and the
//! nodes are recomputed from `n_lat`. Optional metadata lives in a sidecar
//! JSON file with the same stem.

use std::collections::HashSet;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec;
use crate::grid::{GridError, RadialGrid, SphericalGrid};
use crate::hux::{self, HuxError, HuxParams};
use crate::sht::{ShtError, ShtPlan};

pub const CUBE_MAGIC: &[u8; 4] = b"HWC1";
pub const CUBE_VERSION: u8 = 1;
const HEADER_LEN: usize = 20;

/// Carrington rotations up to and including this one belong to the training split.
pub const TRAIN_LAST_CARRINGTON: i64 = 2169;

/// Synthetic boundary speed range, km/s.
pub const SYNTH_V_MIN: f64 = 250.0;
pub const SYNTH_V_MAX: f64 = 750.0;

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("bad magic {0:?}, expected \"HWC1\"")]
    BadMagic([u8; 4]),
    #[error("unsupported cube version {0}, expected {CUBE_VERSION}")]
    VersionMismatch(u8),
    #[error("reserved header bytes are not zero")]
    ReservedNonZero,
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("trailing data: expected {expected} bytes, found {found}")]
    TrailingBytes { expected: usize, found: usize },
    #[error("dimensions ({n_r}, {n_lat}, {n_lon}) overflow the addressable payload")]
    DimensionOverflow { n_r: u32, n_lat: u32, n_lon: u32 },
    #[error("invalid cube: {0}")]
    InvalidCube(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Sht(#[from] ShtError),
    #[error(transparent)]
    Hux(Box<HuxError>),
}

impl From<HuxError> for StorageError {
    fn from(e: HuxError) -> Self {
        StorageError::Hux(Box::new(e))
    }
}

impl PartialEq for StorageError {
    fn eq(&self, other: &Self) -> bool {
        self.to_string() == other.to_string()
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StorageError + '_ {
    move |source| StorageError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Radial velocity `v_r(r, θ, φ)` in km/s on `(n_r, n_lat, n_lon)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityCube {
    radial: RadialGrid,
    grid: SphericalGrid,
    values: Vec<f64>,
}

impl VelocityCube {
    /// Validates dimensions and that every speed is finite and positive.
    pub fn new(radial: RadialGrid, grid: SphericalGrid, values: Vec<f64>) -> Result<Self, StorageError> {
        let expected = radial.n_r() * grid.len();
        if values.len() != expected {
            return Err(StorageError::InvalidCube(format!(
                "{} values for a ({}, {}, {}) cube",
                values.len(),
                radial.n_r(),
                grid.n_lat(),
                grid.n_lon()
            )));
        }
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(StorageError::InvalidCube(format!(
                "speed {} at flat index {i} is not finite and positive",
                values[i]
            )));
        }
        Ok(Self { radial, grid, values })
    }

    pub fn radial(&self) -> &RadialGrid {
        &self.radial
    }

    pub fn grid(&self) -> &SphericalGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.radial.n_r(), self.grid.n_lat(), self.grid.n_lon())
    }

    pub fn slice(&self, i: usize) -> &[f64] {
        let n = self.grid.len();
        &self.values[i * n..(i + 1) * n]
    }

    /// Slices `1..n_r`, i.e. everything beyond the inner boundary.
    pub fn outer_slices(&self) -> &[f64] {
        &self.values[self.grid.len()..]
    }
}

pub fn encode_cube(cube: &VelocityCube) -> Vec<u8> {
    let (n_r, n_lat, n_lon) = cube.dims();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * (n_r + cube.values.len()));
    out.extend_from_slice(CUBE_MAGIC);
    out.push(CUBE_VERSION);
    out.extend_from_slice(&[0, 0, 0]);
    for d in [n_r, n_lat, n_lon] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for r in cube.radial.radii() {
        out.extend_from_slice(&r.to_le_bytes());
    }
    for v in &cube.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_cube(bytes: &[u8]) -> Result<VelocityCube, StorageError> {
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= 4 && &bytes[..4] != CUBE_MAGIC {
            return Err(StorageError::BadMagic(bytes[..4].try_into().unwrap()));
        }
        return Err(StorageError::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if &magic != CUBE_MAGIC {
        return Err(StorageError::BadMagic(magic));
    }
    if bytes[4] != CUBE_VERSION {
        return Err(StorageError::VersionMismatch(bytes[4]));
    }
    if bytes[5..8] != [0, 0, 0] {
        return Err(StorageError::ReservedNonZero);
    }
    let dim = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let (n_r, n_lat, n_lon) = (dim(8), dim(12), dim(16));
    let overflow = StorageError::DimensionOverflow { n_r, n_lat, n_lon };
    let (cells, expected) = (n_r as usize)
        .checked_mul(n_lat as usize)
        .and_then(|c| c.checked_mul(n_lon as usize))
        .and_then(|cells| {
            let expected = cells
                .checked_add(n_r as usize)?
                .checked_mul(8)?
                .checked_add(HEADER_LEN)?;
            Some((cells, expected))
        })
        .ok_or(overflow)?;
    if bytes.len() < expected {
        return Err(StorageError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(StorageError::TrailingBytes {
            expected,
            found: bytes.len(),
        });
    }
    let floats = |start: usize, n: usize| -> Vec<f64> {
        bytes[start..start + 8 * n]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect()
    };
    let radii = floats(HEADER_LEN, n_r as usize);
    let values = floats(HEADER_LEN + 8 * n_r as usize, cells);
    let radial = RadialGrid::from_radii(radii)?;
    let grid = SphericalGrid::new(n_lat as usize, n_lon as usize)?;
    VelocityCube::new(radial, grid, values)
}

pub fn write_cube(cube: &VelocityCube, path: &Path) -> Result<(), StorageError> {
    fs::write(path, encode_cube(cube)).map_err(io_err(path))
}

pub fn read_cube(path: &Path) -> Result<VelocityCube, StorageError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_cube(&bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Instrument {
    Kpo,
    Mdi,
    Hmi,
    Synth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn for_carrington(cr: i64) -> Self {
        if cr <= TRAIN_LAST_CARRINGTON {
            Split::Train
        } else {
            Split::Test
        }
    }
}

/// Sidecar metadata stored next to a cube as `<stem>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeMeta {
    pub carrington_rotation: Option<i64>,
    pub instrument: Instrument,
    pub provenance: String,
}

pub fn sidecar_path(cube_path: &Path) -> PathBuf {
    cube_path.with_extension("json")
}

pub fn write_sidecar(cube_path: &Path, meta: &CubeMeta) -> Result<(), StorageError> {
    let p = sidecar_path(cube_path);
    fs::write(&p, serde_json::to_vec_pretty(meta)?).map_err(io_err(&p))
}

pub fn read_sidecar(cube_path: &Path) -> Result<CubeMeta, StorageError> {
    let p = sidecar_path(cube_path);
    let bytes = fs::read(&p).map_err(io_err(&p))?;
    Ok(serde_json::from_slice(&bytes)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative paths are resolved against the manifest's directory.
    pub cube_path: String,
    pub carrington_rotation: Option<i64>,
    pub instrument: Instrument,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    #[serde(skip)]
    base_dir: Option<PathBuf>,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self, StorageError> {
        let m = Self {
            entries,
            base_dir: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), StorageError> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.cube_path.as_str()) {
                return Err(StorageError::Manifest(format!("duplicate cube_path {}", e.cube_path)));
            }
            if let Some(cr) = e.carrington_rotation {
                if Split::for_carrington(cr) != e.split {
                    return Err(StorageError::Manifest(format!(
                        "{}: CR {cr} belongs to the {:?} split, entry says {:?}",
                        e.cube_path,
                        Split::for_carrington(cr),
                        e.split
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, StorageError> {
        let bytes = fs::read(path).map_err(io_err(path))?;
        let mut m: Self = serde_json::from_slice(&bytes)?;
        m.validate()?;
        m.base_dir = path.parent().map(Path::to_path_buf);
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), StorageError> {
        self.validate()?;
        fs::write(path, serde_json::to_vec_pretty(self)?).map_err(io_err(path))
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        let p = Path::new(&entry.cube_path);
        match &self.base_dir {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn split(&self, split: Split) -> Vec<&ManifestEntry> {
        self.entries.iter().filter(|e| e.split == split).collect()
    }

    pub fn load_split(&self, split: Split) -> Result<Vec<VelocityCube>, StorageError> {
        let entries = self.split(split);
        let loaded = exec::map_range(entries.len(), |i| read_cube(&self.resolve(entries[i])));
        loaded.into_iter().collect()
    }
}

/// Global min-max statistics of a training split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub v_min: f64,
    pub v_max: f64,
}

impl NormStats {
    pub fn new(v_min: f64, v_max: f64) -> Result<Self, StorageError> {
        if !(v_min.is_finite() && v_max.is_finite()) || v_max <= v_min {
            return Err(StorageError::DegenerateData(format!(
                "v_max ({v_max}) must exceed v_min ({v_min})"
            )));
        }
        Ok(Self { v_min, v_max })
    }

    /// Single min/max over every value of every training cube.
    pub fn fit(train: &[VelocityCube]) -> Result<Self, StorageError> {
        if train.is_empty() {
            return Err(StorageError::InvalidArgument("empty training split".into()));
        }
        let (lo, hi) = train
            .iter()
            .flat_map(|c| c.values())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        Self::new(lo, hi)
    }

    pub fn range(&self) -> f64 {
        self.v_max - self.v_min
    }

    /// `(v - v_min) / (v_max - v_min)`; no clamping.
    pub fn apply(&self, v: f64) -> f64 {
        (v - self.v_min) / self.range()
    }

    pub fn invert(&self, x: f64) -> f64 {
        x * self.range() + self.v_min
    }

    pub fn apply_all(&self, v: &[f64]) -> Vec<f64> {
        v.iter().map(|&x| self.apply(x)).collect()
    }

    pub fn invert_all(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|&v| self.invert(v)).collect()
    }
}

/// Random band-limited boundary: spherical-harmonic coefficients with power
/// `∝ (1 + ℓ)^-2` for `ℓ <= l_band`, squashed by a sigmoid onto
/// `[SYNTH_V_MIN, SYNTH_V_MAX]` km/s.
pub fn synth_boundary(seed: u64, grid: &SphericalGrid, l_band: usize) -> Result<Vec<f64>, StorageError> {
    const GAIN: f64 = 4.0;
    if l_band > grid.max_degree() {
        return Err(StorageError::InvalidArgument(format!(
            "l_band {l_band} exceeds n_lat - 1 = {}",
            grid.max_degree()
        )));
    }
    // Stay below the Nyquist order so every drawn mode is representable.
    let m_cap = l_band.min(grid.max_order() - 1);
    let plan = ShtPlan::new(grid, l_band, m_cap)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs: Vec<Complex64> = plan
        .layout()
        .pairs()
        .map(|(l, m)| {
            let sigma = 1.0 / (1.0 + l as f64);
            let re: f64 = rng.sample::<f64, _>(StandardNormal) * sigma;
            let im: f64 = rng.sample::<f64, _>(StandardNormal) * sigma;
            Complex64::new(re, if m == 0 { 0.0 } else { im })
        })
        .collect();
    let g = plan.inverse(&coeffs)?;
    Ok(g.into_iter()
        .map(|x| SYNTH_V_MIN + (SYNTH_V_MAX - SYNTH_V_MIN) / (1.0 + (-GAIN * x).exp()))
        .collect())
}

/// Departure of the synthetic "truth" from plain HUX-f.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Warp {
    /// Extra acceleration amplitude at the poles; row `j` uses
    /// `α + polar_alpha · cos²θ_j`.
    pub polar_alpha: f64,
    /// Longitude shift (radians) reached at the outermost radius at the north
    /// pole; slice `i`, row `j` is shifted by
    /// `shear · (r_i - r_0)/(r_max - r_0) · cos θ_j`.
    pub shear: f64,
}

impl Warp {
    pub const IDENTITY: Warp = Warp {
        polar_alpha: 0.0,
        shear: 0.0,
    };

    /// The configuration used by the desk-scale experiment.
    pub const DESK: Warp = Warp {
        polar_alpha: 0.3,
        shear: 0.3,
    };

    pub fn is_identity(&self) -> bool {
        self.polar_alpha == 0.0 && self.shear == 0.0
    }
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub seed: u64,
    pub count: usize,
    pub radial: RadialGrid,
    pub grid: SphericalGrid,
    pub l_band: usize,
    pub hux: HuxParams,
    pub warp: Warp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSample {
    pub seed: u64,
    pub boundary: Vec<f64>,
    pub truth: VelocityCube,
}

/// Per-sample seeds derived from the dataset seed.
pub fn sample_seeds(seed: u64, count: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| rng.random()).collect()
}

/// Boundary/truth pairs whose truth is HUX-f with latitude-dependent
/// acceleration followed by a smooth longitudinal shear.
pub fn synth_dataset(cfg: &SynthConfig) -> Result<Vec<SynthSample>, StorageError> {
    if cfg.count == 0 {
        return Err(StorageError::InvalidArgument("count must be >= 1".into()));
    }
    let rows: Vec<HuxParams> = cfg
        .grid
        .cos_colatitudes()
        .iter()
        .map(|x| HuxParams {
            alpha: (cfg.hux.alpha + cfg.warp.polar_alpha * x * x).min(0.99),
            ..cfg.hux
        })
        .collect();
    let seeds = sample_seeds(cfg.seed, cfg.count);
    let samples = exec::map_range(cfg.count, |b| -> Result<SynthSample, StorageError> {
        let boundary = synth_boundary(seeds[b], &cfg.grid, cfg.l_band)?;
        let run = hux::hux_f_rows(&boundary, &cfg.radial, &cfg.grid, &rows)?;
        let truth = if cfg.warp.shear == 0.0 {
            run.cube
        } else {
            apply_shear(&run.cube, cfg.warp.shear)?
        };
        Ok(SynthSample {
            seed: seeds[b],
            boundary,
            truth,
        })
    });
    samples.into_iter().collect()
}

/// Periodic linear-interpolation shift of every row, growing linearly with
/// radius and with `cos θ`.
fn apply_shear(cube: &VelocityCube, shear: f64) -> Result<VelocityCube, StorageError> {
    let (n_r, n_lat, n_lon) = cube.dims();
    let radial = cube.radial();
    let span = radial.r_max() - radial.r0();
    let dphi = cube.grid().lon_step();
    let mut out = cube.values().to_vec();
    for i in 1..n_r {
        let frac = (radial.radii()[i] - radial.r0()) / span;
        for j in 0..n_lat {
            let cells = shear * frac * cube.grid().cos_colatitudes()[j] / dphi;
            let base = (i * n_lat + j) * n_lon;
            let src = &cube.values()[base..base + n_lon];
            let whole = cells.floor();
            let t = cells - whole;
            let whole = whole as isize;
            for k in 0..n_lon {
                // out(φ_k) = src(φ_k - shift)
                let a = (k as isize - whole).rem_euclid(n_lon as isize) as usize;
                let b = (a + n_lon - 1) % n_lon;
                out[base + k] = (1.0 - t) * src[a] + t * src[b];
            }
        }
    }
    VelocityCube::new(radial.clone(), cube.grid().clone(), out)
}
