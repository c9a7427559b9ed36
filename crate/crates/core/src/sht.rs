//! Spherical harmonic analysis and synthesis on Gauss–Legendre grids.
//!
//! Conventions:
//!
//! * `Ȳ_lm(θ, φ) = P̄_lm(cos θ) e^{imφ}` with `P̄` orthonormal on the sphere
//!   (`∫ |Ȳ_lm|² dΩ = 1`) and no Condon–Shortley phase.
//! * Only `m >= 0` is stored. A real field is synthesized as
//!   `f = Σ_lm c_m Re(a_lm Ȳ_lm)` with `c_0 = 1`, `c_m = 2` for
//!   `0 < m < n_lon/2` and `c_{n_lon/2} = 1` (the Nyquist column is its own
//!   mirror image).
//! * Analysis is `a_lm = Σ_j w_j P̄_lm(x_j) F_m(j)` where `F_m` is the row DFT
//!   scaled by `2π / n_lon`.
//!
//! Coefficients are laid out ℓ-major: `(0,0), (1,0), (1,1), (2,0), ...`,
//! truncated at `m_max`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::exec;
use crate::grid::SphericalGrid;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShtError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape mismatch: expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
}

/// Triangular `(ℓ, m)` index map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriangularLayout {
    l_max: usize,
    m_max: usize,
    offsets: Vec<usize>,
    len: usize,
}

impl TriangularLayout {
    pub fn new(l_max: usize, m_max: usize) -> Self {
        let mut offsets = Vec::with_capacity(l_max + 1);
        let mut len = 0;
        for l in 0..=l_max {
            offsets.push(len);
            len += l.min(m_max) + 1;
        }
        Self {
            l_max,
            m_max,
            offsets,
            len,
        }
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn m_max(&self) -> usize {
        self.m_max
    }

    /// Stored coefficients per channel.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn index(&self, l: usize, m: usize) -> usize {
        debug_assert!(l <= self.l_max && m <= l.min(self.m_max));
        self.offsets[l] + m
    }

    /// Degree of every stored coefficient, in storage order.
    pub fn degrees(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.len);
        for l in 0..=self.l_max {
            out.extend(std::iter::repeat_n(l, l.min(self.m_max) + 1));
        }
        out
    }

    /// `(ℓ, m)` pairs in storage order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..=self.l_max).flat_map(move |l| (0..=l.min(self.m_max)).map(move |m| (l, m)))
    }
}

/// Multi-channel spectral coefficients, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCoeffs {
    layout: TriangularLayout,
    channels: usize,
    data: Vec<Complex64>,
}

impl SpectralCoeffs {
    pub fn zeros(l_max: usize, m_max: usize, channels: usize) -> Self {
        let layout = TriangularLayout::new(l_max, m_max);
        let data = vec![Complex64::new(0.0, 0.0); layout.len() * channels];
        Self {
            layout,
            channels,
            data,
        }
    }

    pub fn from_vec(
        l_max: usize,
        m_max: usize,
        channels: usize,
        data: Vec<Complex64>,
    ) -> Result<Self, ShtError> {
        let layout = TriangularLayout::new(l_max, m_max);
        if data.len() != layout.len() * channels {
            return Err(ShtError::ShapeMismatch {
                expected: layout.len() * channels,
                got: data.len(),
            });
        }
        Ok(Self {
            layout,
            channels,
            data,
        })
    }

    pub fn layout(&self) -> &TriangularLayout {
        &self.layout
    }

    pub fn l_max(&self) -> usize {
        self.layout.l_max
    }

    pub fn m_max(&self) -> usize {
        self.layout.m_max
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[Complex64] {
        let n = self.layout.len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [Complex64] {
        let n = self.layout.len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, l: usize, m: usize) -> Complex64 {
        self.channel(c)[self.layout.index(l, m)]
    }

    pub fn set(&mut self, c: usize, l: usize, m: usize, value: Complex64) {
        let i = self.layout.index(l, m);
        self.channel_mut(c)[i] = value;
    }
}

/// Orthonormal associated Legendre functions `P̄_lm(x)` for every stored
/// `(ℓ, m)` of `layout`, using the standard stable three-term recurrence in ℓ
/// seeded by the sectoral values `P̄_mm`. `sin_theta` is passed separately so
/// callers can supply it without cancellation near the poles.
pub fn legendre_orthonormal(layout: &TriangularLayout, x: f64, sin_theta: f64) -> Vec<f64> {
    let mut out = vec![0.0; layout.len()];
    let mut p_mm = (1.0 / (4.0 * PI)).sqrt();
    for m in 0..=layout.m_max.min(layout.l_max) {
        if m > 0 {
            let mf = m as f64;
            p_mm *= ((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * sin_theta;
        }
        out[layout.index(m, m)] = p_mm;
        if m == layout.l_max {
            break;
        }
        let mf = m as f64;
        let mut p_prev = p_mm;
        let mut p = (2.0 * mf + 3.0).sqrt() * x * p_mm;
        out[layout.index(m + 1, m)] = p;
        for l in (m + 2)..=layout.l_max {
            let lf = l as f64;
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0))
                .sqrt();
            let next = a * (x * p - b * p_prev);
            p_prev = p;
            p = next;
            out[layout.index(l, m)] = p;
        }
    }
    out
}

/// Precomputed transform for one grid and one pair of mode caps.
pub struct ShtPlan {
    grid: SphericalGrid,
    layout: TriangularLayout,
    /// `P̄_lm(x_j)`, `[coefficient][latitude]`.
    table: Vec<f64>,
    fft_fwd: Arc<dyn Fft<f64>>,
    fft_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for ShtPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ShtPlan")
            .field("n_lat", &self.grid.n_lat())
            .field("n_lon", &self.grid.n_lon())
            .field("l_max", &self.layout.l_max)
            .field("m_max", &self.layout.m_max)
            .finish()
    }
}

impl ShtPlan {
    pub fn new(grid: &SphericalGrid, l_max: usize, m_max: usize) -> Result<Self, ShtError> {
        if l_max > grid.max_degree() {
            return Err(ShtError::InvalidArgument(format!(
                "l_max {l_max} exceeds quadrature limit n_lat - 1 = {}",
                grid.max_degree()
            )));
        }
        if m_max > grid.max_order() {
            return Err(ShtError::InvalidArgument(format!(
                "m_max {m_max} exceeds Nyquist limit n_lon / 2 = {}",
                grid.max_order()
            )));
        }
        let layout = TriangularLayout::new(l_max, m_max);
        let n_lat = grid.n_lat();
        let mut table = vec![0.0; layout.len() * n_lat];
        for j in 0..n_lat {
            let x = grid.cos_colatitudes()[j];
            let s = grid.colatitudes()[j].sin();
            let p = legendre_orthonormal(&layout, x, s);
            for (i, v) in p.into_iter().enumerate() {
                table[i * n_lat + j] = v;
            }
        }
        let mut planner = FftPlanner::new();
        let fft_fwd = planner.plan_fft_forward(grid.n_lon());
        let fft_inv = planner.plan_fft_inverse(grid.n_lon());
        Ok(Self {
            grid: grid.clone(),
            layout,
            table,
            fft_fwd,
            fft_inv,
        })
    }

    pub fn grid(&self) -> &SphericalGrid {
        &self.grid
    }

    pub fn layout(&self) -> &TriangularLayout {
        &self.layout
    }

    pub fn l_max(&self) -> usize {
        self.layout.l_max
    }

    pub fn m_max(&self) -> usize {
        self.layout.m_max
    }

    /// Synthesis multiplicity of order `m` on this grid.
    fn multiplicity(&self, m: usize) -> f64 {
        if m == 0 || 2 * m == self.grid.n_lon() {
            1.0
        } else {
            2.0
        }
    }

    fn check_field(&self, field: &[f64]) -> Result<(), ShtError> {
        if field.len() != self.grid.len() {
            return Err(ShtError::ShapeMismatch {
                expected: self.grid.len(),
                got: field.len(),
            });
        }
        Ok(())
    }

    fn check_coeffs(&self, coeffs: &[Complex64]) -> Result<(), ShtError> {
        if coeffs.len() != self.layout.len() {
            return Err(ShtError::ShapeMismatch {
                expected: self.layout.len(),
                got: coeffs.len(),
            });
        }
        Ok(())
    }

    /// Row DFTs (unnormalized) of `field`, returned as `[m][j]` for `m <= m_max`.
    fn row_spectra(&self, field: &[f64]) -> Vec<Complex64> {
        let (n_lat, n_lon) = (self.grid.n_lat(), self.grid.n_lon());
        let m_count = self.layout.m_max + 1;
        let mut spectra = vec![Complex64::new(0.0, 0.0); m_count * n_lat];
        let mut buf = vec![Complex64::new(0.0, 0.0); n_lon];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.fft_fwd.get_inplace_scratch_len()];
        for j in 0..n_lat {
            for (b, &v) in buf.iter_mut().zip(&field[j * n_lon..(j + 1) * n_lon]) {
                *b = Complex64::new(v, 0.0);
            }
            self.fft_fwd.process_with_scratch(&mut buf, &mut scratch);
            for m in 0..m_count {
                spectra[m * n_lat + j] = buf[m];
            }
        }
        spectra
    }

    /// `G_m(j) = Σ_ℓ a_lm P̄_lm(x_j)`, `[m][j]`.
    fn legendre_synthesis(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        let n_lat = self.grid.n_lat();
        let mut g = vec![Complex64::new(0.0, 0.0); (self.layout.m_max + 1) * n_lat];
        for (idx, (_, m)) in self.layout.pairs().enumerate() {
            let a = coeffs[idx];
            if a.re == 0.0 && a.im == 0.0 {
                continue;
            }
            let p = &self.table[idx * n_lat..(idx + 1) * n_lat];
            let row = &mut g[m * n_lat..(m + 1) * n_lat];
            for (gj, pj) in row.iter_mut().zip(p) {
                gj.re += a.re * pj;
                gj.im += a.im * pj;
            }
        }
        g
    }

    /// `a_lm = Σ_j P̄_lm(x_j) s_m(j)` for per-order latitude profiles `s`.
    fn legendre_analysis(&self, s: &[Complex64]) -> Vec<Complex64> {
        let n_lat = self.grid.n_lat();
        self.layout
            .pairs()
            .enumerate()
            .map(|(idx, (_, m))| {
                let p = &self.table[idx * n_lat..(idx + 1) * n_lat];
                let row = &s[m * n_lat..(m + 1) * n_lat];
                let mut acc = Complex64::new(0.0, 0.0);
                for (sj, pj) in row.iter().zip(p) {
                    acc.re += sj.re * pj;
                    acc.im += sj.im * pj;
                }
                acc
            })
            .collect()
    }

    /// `out(j, k) = row_scale(j) · Re Σ_m mult(m) G_m(j) e^{imφ_k}`.
    fn fourier_synthesis(
        &self,
        g: &[Complex64],
        mult: impl Fn(usize) -> f64,
        row_scale: impl Fn(usize) -> f64,
    ) -> Vec<f64> {
        let (n_lat, n_lon) = (self.grid.n_lat(), self.grid.n_lon());
        let mut out = vec![0.0; n_lat * n_lon];
        let mut buf = vec![Complex64::new(0.0, 0.0); n_lon];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.fft_inv.get_inplace_scratch_len()];
        for j in 0..n_lat {
            buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
            for m in 0..=self.layout.m_max {
                buf[m] = g[m * n_lat + j] * mult(m);
            }
            self.fft_inv.process_with_scratch(&mut buf, &mut scratch);
            let s = row_scale(j);
            for (o, b) in out[j * n_lon..(j + 1) * n_lon].iter_mut().zip(&buf) {
                *o = s * b.re;
            }
        }
        out
    }

    /// Analysis of one real field.
    pub fn forward(&self, field: &[f64]) -> Result<Vec<Complex64>, ShtError> {
        self.check_field(field)?;
        let n_lat = self.grid.n_lat();
        let scale = 2.0 * PI / self.grid.n_lon() as f64;
        let mut s = self.row_spectra(field);
        let w = self.grid.quad_weights();
        for (i, v) in s.iter_mut().enumerate() {
            *v *= scale * w[i % n_lat];
        }
        Ok(self.legendre_analysis(&s))
    }

    /// Synthesis of one real field.
    pub fn inverse(&self, coeffs: &[Complex64]) -> Result<Vec<f64>, ShtError> {
        self.check_coeffs(coeffs)?;
        let g = self.legendre_synthesis(coeffs);
        Ok(self.fourier_synthesis(&g, |m| self.multiplicity(m), |_| 1.0))
    }

    /// Adjoint of [`forward`](Self::forward): coefficient cotangent to field
    /// cotangent, under the real inner products `Σ f·h` and `Σ Re(a·conj b)`.
    pub fn adjoint_forward(&self, cotangent: &[Complex64]) -> Result<Vec<f64>, ShtError> {
        self.check_coeffs(cotangent)?;
        let g = self.legendre_synthesis(cotangent);
        let scale = 2.0 * PI / self.grid.n_lon() as f64;
        let w = self.grid.quad_weights();
        Ok(self.fourier_synthesis(&g, |_| 1.0, |j| scale * w[j]))
    }

    /// Adjoint of [`inverse`](Self::inverse): field cotangent to coefficient
    /// cotangent.
    pub fn adjoint_inverse(&self, cotangent: &[f64]) -> Result<Vec<Complex64>, ShtError> {
        self.check_field(cotangent)?;
        let n_lat = self.grid.n_lat();
        let mut s = self.row_spectra(cotangent);
        for (i, v) in s.iter_mut().enumerate() {
            *v *= self.multiplicity(i / n_lat);
        }
        Ok(self.legendre_analysis(&s))
    }

    /// Channel-major analysis of `channels` stacked fields.
    pub fn forward_many(&self, fields: &[f64], channels: usize) -> Result<SpectralCoeffs, ShtError> {
        self.many(fields, channels, self.grid.len(), |f| self.forward(f))
            .and_then(|d| self.wrap(channels, d))
    }

    pub fn inverse_many(&self, coeffs: &SpectralCoeffs) -> Result<Vec<f64>, ShtError> {
        self.check_layout(coeffs)?;
        self.many(coeffs.data(), coeffs.channels(), self.layout.len(), |c| self.inverse(c))
    }

    pub fn adjoint_forward_many(&self, cotangent: &SpectralCoeffs) -> Result<Vec<f64>, ShtError> {
        self.check_layout(cotangent)?;
        self.many(cotangent.data(), cotangent.channels(), self.layout.len(), |c| {
            self.adjoint_forward(c)
        })
    }

    pub fn adjoint_inverse_many(
        &self,
        cotangent: &[f64],
        channels: usize,
    ) -> Result<SpectralCoeffs, ShtError> {
        self.many(cotangent, channels, self.grid.len(), |f| self.adjoint_inverse(f))
            .and_then(|d| self.wrap(channels, d))
    }

    fn check_layout(&self, coeffs: &SpectralCoeffs) -> Result<(), ShtError> {
        if coeffs.layout() != &self.layout {
            return Err(ShtError::InvalidArgument(format!(
                "coefficients are (l_max {}, m_max {}), plan is (l_max {}, m_max {})",
                coeffs.l_max(),
                coeffs.m_max(),
                self.layout.l_max,
                self.layout.m_max
            )));
        }
        Ok(())
    }

    fn wrap(&self, channels: usize, data: Vec<Complex64>) -> Result<SpectralCoeffs, ShtError> {
        SpectralCoeffs::from_vec(self.layout.l_max, self.layout.m_max, channels, data)
    }

    fn many<I: Sync, O: Send + Clone>(
        &self,
        input: &[I],
        channels: usize,
        stride: usize,
        f: impl Fn(&[I]) -> Result<Vec<O>, ShtError> + Sync + Send,
    ) -> Result<Vec<O>, ShtError> {
        if input.len() != channels * stride {
            return Err(ShtError::ShapeMismatch {
                expected: channels * stride,
                got: input.len(),
            });
        }
        let parts = exec::map_range(channels, |c| f(&input[c * stride..(c + 1) * stride]));
        let mut out = Vec::new();
        for p in parts {
            out.extend(p?);
        }
        Ok(out)
    }
}

/// Circularly shifts every latitude row of a `[n_lat][n_lon]` field east by
/// `k` columns (`out[j][(i + k) % n_lon] = field[j][i]`).
pub fn roll_longitude(field: &[f64], n_lon: usize, k: isize) -> Vec<f64> {
    let mut out = vec![0.0; field.len()];
    let shift = k.rem_euclid(n_lon as isize) as usize;
    for (src, dst) in field.chunks(n_lon).zip(out.chunks_mut(n_lon)) {
        for (i, &v) in src.iter().enumerate() {
            dst[(i + shift) % n_lon] = v;
        }
    }
    out
}
