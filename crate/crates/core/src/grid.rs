//! Spherical and radial discretizations.
//!
//! Latitudes are Gauss–Legendre nodes: `cos θ_j` are the roots of `P_n`,
//! stored in ascending order so colatitudes descend from near the south pole
//! to near the north pole. Longitudes are uniform and periodic, starting at 0.

use std::f64::consts::PI;

use thiserror::Error;

/// Inner boundary radius in solar radii.
pub const R0_SOLAR_RADII: f64 = 30.0;
/// Default outer radius (1 AU) in solar radii.
pub const R_MAX_SOLAR_RADII: f64 = 236.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

fn invalid(msg: impl Into<String>) -> GridError {
    GridError::InvalidArgument(msg.into())
}

/// Legendre polynomial `P_n(x)` and its derivative.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p_prev = 1.0;
    let mut p = x;
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0) * x * p - kf * p_prev) / (kf + 1.0);
        p_prev = p;
        p = next;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let nf = n as f64;
    let dp = nf * (x * p - p_prev) / (x * x - 1.0);
    (p, dp)
}

/// Gauss–Legendre nodes (ascending) and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Result<(Vec<f64>, Vec<f64>), GridError> {
    if n == 0 {
        return Err(invalid("Gauss-Legendre rule needs at least one node"));
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    // Roots come in ± pairs; solve for the non-negative half only.
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-15 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d.is_finite() {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // i-th root from the top maps to index n-1-i, its mirror to i.
        nodes[n - 1 - i] = x;
        nodes[i] = -x;
        weights[n - 1 - i] = w;
        weights[i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok((nodes, weights))
}

/// Latitude/longitude sampling of the sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct SphericalGrid {
    n_lat: usize,
    n_lon: usize,
    /// Gauss nodes `cos θ_j`, ascending.
    cos_colat: Vec<f64>,
    colatitudes: Vec<f64>,
    quad_weights: Vec<f64>,
    lon_step: f64,
    longitudes: Vec<f64>,
}

impl SphericalGrid {
    pub fn new(n_lat: usize, n_lon: usize) -> Result<Self, GridError> {
        if n_lat < 2 {
            return Err(invalid(format!("n_lat must be >= 2, got {n_lat}")));
        }
        if n_lon < 2 || !n_lon.is_multiple_of(2) {
            return Err(invalid(format!("n_lon must be even and >= 2, got {n_lon}")));
        }
        let (nodes, weights) = gauss_legendre(n_lat)?;
        let colatitudes = nodes.iter().map(|x| x.acos()).collect();
        let lon_step = 2.0 * PI / n_lon as f64;
        let longitudes = (0..n_lon).map(|k| k as f64 * lon_step).collect();
        Ok(Self {
            n_lat,
            n_lon,
            cos_colat: nodes,
            colatitudes,
            quad_weights: weights,
            lon_step,
            longitudes,
        })
    }

    /// Same sphere sampled `factor` times finer in both directions, with fresh
    /// Gauss nodes.
    pub fn refine(&self, factor: usize) -> Result<Self, GridError> {
        if factor != 2 && factor != 4 {
            return Err(invalid(format!("refinement factor must be 2 or 4, got {factor}")));
        }
        Self::new(self.n_lat * factor, self.n_lon * factor)
    }

    pub fn n_lat(&self) -> usize {
        self.n_lat
    }

    pub fn n_lon(&self) -> usize {
        self.n_lon
    }

    /// Number of grid points, `n_lat * n_lon`.
    pub fn len(&self) -> usize {
        self.n_lat * self.n_lon
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cos_colatitudes(&self) -> &[f64] {
        &self.cos_colat
    }

    pub fn colatitudes(&self) -> &[f64] {
        &self.colatitudes
    }

    pub fn quad_weights(&self) -> &[f64] {
        &self.quad_weights
    }

    pub fn lon_step(&self) -> f64 {
        self.lon_step
    }

    pub fn longitudes(&self) -> &[f64] {
        &self.longitudes
    }

    /// Largest degree integrated exactly against another band-limited field.
    pub fn max_degree(&self) -> usize {
        self.n_lat - 1
    }

    /// Nyquist order `n_lon / 2`.
    pub fn max_order(&self) -> usize {
        self.n_lon / 2
    }
}

/// Radial mesh in solar radii.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    r: Vec<f64>,
}

impl RadialGrid {
    /// `n_r` uniformly spaced radii from `r0` to `r_max` inclusive.
    pub fn uniform(n_r: usize, r0: f64, r_max: f64) -> Result<Self, GridError> {
        if n_r < 2 {
            return Err(invalid(format!("radial grid needs >= 2 radii, got {n_r}")));
        }
        if !(r0.is_finite() && r_max.is_finite() && r_max > r0 && r0 > 0.0) {
            return Err(invalid(format!("bad radial range [{r0}, {r_max}]")));
        }
        let dr = (r_max - r0) / (n_r - 1) as f64;
        let mut r: Vec<f64> = (0..n_r).map(|i| r0 + i as f64 * dr).collect();
        r[n_r - 1] = r_max;
        Ok(Self { r })
    }

    /// Uniform grid from 30 R☉ to 1 AU.
    pub fn heliospheric(n_r: usize) -> Result<Self, GridError> {
        Self::uniform(n_r, R0_SOLAR_RADII, R_MAX_SOLAR_RADII)
    }

    /// Arbitrary strictly increasing radii, e.g. read from a cube file.
    pub fn from_radii(r: Vec<f64>) -> Result<Self, GridError> {
        if r.is_empty() {
            return Err(invalid("radial grid is empty"));
        }
        if r.iter().any(|x| !x.is_finite() || *x <= 0.0) {
            return Err(invalid("radii must be finite and positive"));
        }
        if r.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("radii must be strictly increasing"));
        }
        Ok(Self { r })
    }

    pub fn n_r(&self) -> usize {
        self.r.len()
    }

    pub fn radii(&self) -> &[f64] {
        &self.r
    }

    pub fn r0(&self) -> f64 {
        self.r[0]
    }

    pub fn r_max(&self) -> f64 {
        self.r[self.r.len() - 1]
    }

    /// Width of interval `i` (between radii `i` and `i + 1`).
    pub fn step(&self, i: usize) -> f64 {
        self.r[i + 1] - self.r[i]
    }

    /// Nominal uniform spacing `(r_max - r0) / (n_r - 1)`.
    pub fn dr(&self) -> f64 {
        if self.r.len() < 2 {
            return 0.0;
        }
        (self.r_max() - self.r0()) / (self.r.len() - 1) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_node_rule() {
        let (x, w) = gauss_legendre(1).unwrap();
        assert_eq!(x, vec![0.0]);
        assert!((w[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn two_node_rule_is_closed_form() {
        let (x, w) = gauss_legendre(2).unwrap();
        let r = 1.0 / 3f64.sqrt();
        assert!((x[0] + r).abs() < 1e-15 && (x[1] - r).abs() < 1e-15);
        assert!((w[0] - 1.0).abs() < 1e-14 && (w[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn five_nodes_integrate_x4() {
        let (x, w) = gauss_legendre(5).unwrap();
        let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(4)).sum();
        assert!((q - 0.4).abs() < 1e-15, "{q}");
    }

    #[test]
    fn zero_nodes_rejected() {
        assert!(gauss_legendre(0).is_err());
    }

    #[test]
    fn weights_sum_to_two_for_large_rules() {
        for n in [3, 24, 111, 220, 512] {
            let (x, w) = gauss_legendre(n).unwrap();
            let s: f64 = w.iter().sum();
            assert!((s - 2.0).abs() < 1e-12, "n={n} sum={s}");
            assert!(x.windows(2).all(|p| p[1] > p[0]));
            assert!(w.iter().all(|&w| w > 0.0));
        }
    }

    #[test]
    fn full_resolution_lon_step() {
        let g = SphericalGrid::new(111, 128).unwrap();
        assert!((g.lon_step() - 0.049_087_385_212_340_52).abs() < 1e-15);
        assert_eq!(g.longitudes()[0], 0.0);
        let s: f64 = g.quad_weights().iter().sum();
        assert!((s - 2.0).abs() < 1e-12);
    }

    #[test]
    fn two_by_four_colatitudes() {
        let g = SphericalGrid::new(2, 4).unwrap();
        let r = 1.0 / 3f64.sqrt();
        assert!((g.colatitudes()[0] - (-r).acos()).abs() < 1e-14);
        assert!((g.colatitudes()[1] - r.acos()).abs() < 1e-14);
        let g3 = SphericalGrid::new(3, 4).unwrap();
        assert!((g3.quad_weights().iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn colatitudes_descend_inside_open_interval() {
        let g = SphericalGrid::new(111, 128).unwrap();
        let c = g.colatitudes();
        assert!(c.windows(2).all(|p| p[1] < p[0]));
        assert!(c.iter().all(|&t| t > 0.0 && t < PI));
    }

    #[test]
    fn bad_grid_shapes_rejected() {
        assert!(SphericalGrid::new(24, 47).is_err());
        assert!(SphericalGrid::new(1, 8).is_err());
        assert!(SphericalGrid::new(4, 0).is_err());
    }

    #[test]
    fn refinement_factors() {
        let g = SphericalGrid::new(110, 128).unwrap();
        let g2 = g.refine(2).unwrap();
        assert_eq!((g2.n_lat(), g2.n_lon()), (220, 256));
        let g4 = g.refine(4).unwrap();
        assert_eq!((g4.n_lat(), g4.n_lon()), (440, 512));
        assert!(g.refine(1).is_err());
        assert!(g.refine(3).is_err());
    }

    #[test]
    fn radial_grid_uniform() {
        let r = RadialGrid::heliospheric(140).unwrap();
        assert_eq!(r.r0(), 30.0);
        assert_eq!(r.r_max(), 236.0);
        assert!((r.dr() - 206.0 / 139.0).abs() < 1e-14);
        assert!(r.radii().windows(2).all(|w| w[1] > w[0]));
        assert!(RadialGrid::from_radii(vec![30.0, 30.0]).is_err());
    }

    proptest! {
        #[test]
        fn quadrature_exact_to_degree_2n_minus_1(
            n in 1usize..40,
            coeffs in proptest::collection::vec(-1.0f64..1.0, 80),
        ) {
            let (x, w) = gauss_legendre(n).unwrap();
            let deg = 2 * n - 1;
            let c = &coeffs[..=deg];
            let exact: f64 = c.iter().enumerate()
                .map(|(k, ck)| if k % 2 == 0 { 2.0 * ck / (k as f64 + 1.0) } else { 0.0 })
                .sum();
            let quad: f64 = x.iter().zip(&w).map(|(&xi, &wi)| {
                // Horner
                wi * c.iter().rev().fold(0.0, |acc, ck| acc * xi + ck)
            }).sum();
            prop_assert!((quad - exact).abs() < 1e-12, "n={} quad={} exact={}", n, quad, exact);
        }

        #[test]
        fn nodes_are_symmetric(n in 1usize..200) {
            let (x, _) = gauss_legendre(n).unwrap();
            for i in 0..n {
                prop_assert!((x[i] + x[n - 1 - i]).abs() < 1e-14);
            }
        }
    }
}
