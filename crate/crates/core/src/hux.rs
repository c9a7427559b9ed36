//! Heliospheric upwind extrapolation (HUX).
//!
//! The radial velocity obeys `∂v/∂r = (Ω / v) ∂v/∂φ` in the corotating
//! frame. Forward mode marches outward with a first-order upwind stencil in
//! longitude:
//!
//! ```text
//! v[i+1][j][k] = v[i][j][k] + (Δr_i Ω / v[i][j][k]) (v[i][j][k+1] - v[i][j][k]) / Δφ
//! ```
//!
//! Backward mode marches inward with the characteristic direction reversed,
//! so the upwind neighbour becomes `k - 1`. Both require the CFL ratio
//! `Δr Ω / (v Δφ) <= 1`, which makes every step a convex combination.
//!
//! The empirical acceleration is applied after advection: the field is
//! advected unaccelerated and slice `i` is multiplied by
//! `1 + α (1 - exp(-(r_i - r_0) / r_h))`.

use thiserror::Error;

use crate::exec;
use crate::grid::{RadialGrid, SphericalGrid};
use crate::storage::{StorageError, VelocityCube};
use crate::SOLAR_RADIUS_KM;

/// Sidereal rotation rate for a 25.38 day period, rad/s.
pub const OMEGA_SIDEREAL: f64 = 2.0 * std::f64::consts::PI / (25.38 * 86_400.0);

#[derive(Debug, Error, PartialEq)]
pub enum HuxError {
    #[error("invalid HUX parameters: {0}")]
    InvalidParams(String),
    #[error("invalid field: {0}")]
    InvalidField(String),
    #[error(
        "CFL violation: ratio {ratio:.4} > 1 at radial step {step}, latitude {lat}, longitude {lon}"
    )]
    Cfl {
        ratio: f64,
        step: usize,
        lat: usize,
        lon: usize,
    },
    #[error(transparent)]
    Cube(#[from] StorageError),
}

/// Which longitudinal neighbour feeds the outward update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RotationSense {
    /// East neighbour `k + 1`.
    #[default]
    Prograde,
    /// West neighbour `k - 1`.
    Retrograde,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HuxParams {
    /// Solar rotation rate, rad/s.
    pub omega_rot: f64,
    /// Acceleration amplitude.
    pub alpha: f64,
    /// Acceleration e-folding length, R☉.
    pub r_h: f64,
    pub add_acceleration: bool,
    pub sense: RotationSense,
}

impl Default for HuxParams {
    fn default() -> Self {
        Self {
            omega_rot: OMEGA_SIDEREAL,
            alpha: 0.15,
            r_h: 50.0,
            add_acceleration: true,
            sense: RotationSense::Prograde,
        }
    }
}

impl HuxParams {
    pub fn validate(&self) -> Result<(), HuxError> {
        if !(self.omega_rot.is_finite() && self.omega_rot > 0.0) {
            return Err(HuxError::InvalidParams(format!("omega_rot = {}", self.omega_rot)));
        }
        if !(self.r_h.is_finite() && self.r_h > 0.0) {
            return Err(HuxError::InvalidParams(format!("r_h = {}", self.r_h)));
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(HuxError::InvalidParams(format!("alpha = {} not in [0, 1)", self.alpha)));
        }
        Ok(())
    }

    /// Multiplicative acceleration at radius `r` relative to `r0`.
    pub fn acceleration_factor(&self, r: f64, r0: f64) -> f64 {
        if self.add_acceleration {
            1.0 + self.alpha * (1.0 - (-(r - r0) / self.r_h).exp())
        } else {
            1.0
        }
    }
}

/// `v0 (1 + α (1 - exp(-(r - r0) / r_h)))`.
pub fn accelerate(v0: f64, r: f64, r0: f64, p: &HuxParams) -> f64 {
    v0 * p.acceleration_factor(r, r0)
}

/// CFL ratio `Δr Ω / (v Δφ)` with `Δr` in solar radii and `v` in km/s.
pub fn cfl_ratio(dr_solar_radii: f64, v: f64, omega_rot: f64, lon_step: f64) -> f64 {
    dr_solar_radii * SOLAR_RADIUS_KM * omega_rot / (v * lon_step)
}

/// Output of a HUX run.
#[derive(Debug, Clone, PartialEq)]
pub struct HuxRun {
    pub cube: VelocityCube,
    /// Largest CFL ratio met during the march.
    pub max_cfl: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Direction {
    Outward,
    Inward,
}

/// HUX-f: propagates the inner-boundary slice out to every radius of `radial`.
pub fn hux_f(
    boundary: &[f64],
    radial: &RadialGrid,
    grid: &SphericalGrid,
    p: &HuxParams,
) -> Result<HuxRun, HuxError> {
    hux_f_rows(boundary, radial, grid, &vec![*p; grid.n_lat()])
}

/// HUX-f with separate parameters for every latitude row.
pub fn hux_f_rows(
    boundary: &[f64],
    radial: &RadialGrid,
    grid: &SphericalGrid,
    rows: &[HuxParams],
) -> Result<HuxRun, HuxError> {
    propagate(boundary, radial, grid, rows, Direction::Outward)
}

/// HUX-b: traces the outermost slice back to every radius of `radial`.
pub fn hux_b(
    outer: &[f64],
    radial: &RadialGrid,
    grid: &SphericalGrid,
    p: &HuxParams,
) -> Result<HuxRun, HuxError> {
    propagate(outer, radial, grid, &vec![*p; grid.n_lat()], Direction::Inward)
}

fn propagate(
    start: &[f64],
    radial: &RadialGrid,
    grid: &SphericalGrid,
    rows: &[HuxParams],
    direction: Direction,
) -> Result<HuxRun, HuxError> {
    let (n_lat, n_lon, n_r) = (grid.n_lat(), grid.n_lon(), radial.n_r());
    if start.len() != grid.len() {
        return Err(HuxError::InvalidField(format!(
            "slice has {} values, grid has {}",
            start.len(),
            grid.len()
        )));
    }
    if rows.len() != n_lat {
        return Err(HuxError::InvalidParams(format!(
            "{} row parameter sets for {n_lat} latitudes",
            rows.len()
        )));
    }
    for p in rows {
        p.validate()?;
    }
    if let Some(i) = start.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(HuxError::InvalidField(format!(
            "non-positive or non-finite speed {} at cell {i}",
            start[i]
        )));
    }

    let row_results = exec::map_range(n_lat, |j| {
        let row = &start[j * n_lon..(j + 1) * n_lon];
        march_row(row, j, radial, grid.lon_step(), &rows[j], direction)
    });

    let mut values = vec![0.0; n_r * n_lat * n_lon];
    let mut max_cfl: f64 = 0.0;
    for (j, res) in row_results.into_iter().enumerate() {
        let (row_vals, cfl) = res?;
        max_cfl = max_cfl.max(cfl);
        for i in 0..n_r {
            let dst = (i * n_lat + j) * n_lon;
            values[dst..dst + n_lon].copy_from_slice(&row_vals[i * n_lon..(i + 1) * n_lon]);
        }
    }
    let cube = VelocityCube::new(radial.clone(), grid.clone(), values)?;
    Ok(HuxRun { cube, max_cfl })
}

/// Marches one latitude row through all radii; returns `[n_r][n_lon]` values.
fn march_row(
    row: &[f64],
    lat: usize,
    radial: &RadialGrid,
    lon_step: f64,
    p: &HuxParams,
    direction: Direction,
) -> Result<(Vec<f64>, f64), HuxError> {
    let n_lon = row.len();
    let n_r = radial.n_r();
    let r = radial.radii();
    let r0 = radial.r0();
    let mut out = vec![0.0; n_r * n_lon];
    let mut max_cfl: f64 = 0.0;

    // The neighbour offset that is upwind for this marching direction.
    let east = match (direction, p.sense) {
        (Direction::Outward, RotationSense::Prograde) | (Direction::Inward, RotationSense::Retrograde) => 1,
        _ => n_lon - 1,
    };

    let (first, mut u) = match direction {
        Direction::Outward => (0, row.to_vec()),
        Direction::Inward => {
            let f = p.acceleration_factor(r[n_r - 1], r0);
            (n_r - 1, row.iter().map(|v| v / f).collect::<Vec<_>>())
        }
    };
    let f = p.acceleration_factor(r[first], r0);
    for (o, v) in out[first * n_lon..(first + 1) * n_lon].iter_mut().zip(&u) {
        *o = v * f;
    }

    let mut next = vec![0.0; n_lon];
    for s in 0..n_r - 1 {
        let (step, target) = match direction {
            Direction::Outward => (s, s + 1),
            Direction::Inward => (n_r - 2 - s, n_r - 2 - s),
        };
        let coef = radial.step(step) * SOLAR_RADIUS_KM * p.omega_rot / lon_step;
        for k in 0..n_lon {
            let c = coef / u[k];
            if c > max_cfl {
                max_cfl = c;
            }
            if c > 1.0 {
                return Err(HuxError::Cfl {
                    ratio: c,
                    step,
                    lat,
                    lon: k,
                });
            }
            next[k] = u[k] + c * (u[(k + east) % n_lon] - u[k]);
        }
        std::mem::swap(&mut u, &mut next);
        let f = p.acceleration_factor(r[target], r0);
        for (o, v) in out[target * n_lon..(target + 1) * n_lon].iter_mut().zip(&u) {
            *o = v * f;
        }
    }
    Ok((out, max_cfl))
}
