use num_complex::Complex64;

use super::params::{Activation, BlockLayout, SfnoParams, SpectralKind};
use super::SfnoError;
use crate::grid::SphericalGrid;
use crate::sht::{ShtPlan, SpectralCoeffs, TriangularLayout};

/// Grid-dependent state: the SHT plan and the latitude embedding. The same
/// parameters run on any grid that supports the configured `l_max`/`m_max`.
#[derive(Debug)]
pub struct GridContext {
    plan: ShtPlan,
    embedding: Vec<f64>,
}

impl GridContext {
    pub fn new(params: &SfnoParams, grid: &SphericalGrid) -> Result<Self, SfnoError> {
        let cfg = &params.config;
        let plan = ShtPlan::new(grid, cfg.l_max, cfg.m_max)?;
        let (n_lat, n_lon) = (grid.n_lat(), grid.n_lon());
        let mut embedding = Vec::new();
        if cfg.use_position_embedding {
            // sin(lat) = cos(θ), cos(2 lat) = 1 - 2cos²(θ): both smooth on the
            // sphere, so the embedding is exactly band-limited.
            embedding = vec![0.0; 2 * n_lat * n_lon];
            let (e1, e2) = embedding.split_at_mut(n_lat * n_lon);
            for (j, &x) in grid.cos_colatitudes().iter().enumerate() {
                e1[j * n_lon..(j + 1) * n_lon].fill(x);
                e2[j * n_lon..(j + 1) * n_lon].fill(1.0 - 2.0 * x * x);
            }
        }
        Ok(Self { plan, embedding })
    }

    pub fn grid(&self) -> &SphericalGrid {
        self.plan.grid()
    }

    pub fn points(&self) -> usize {
        self.plan.grid().len()
    }

    fn encoder_input(&self, input: &[f64]) -> Vec<f64> {
        let mut x0 = Vec::with_capacity(input.len() + self.embedding.len());
        x0.extend_from_slice(input);
        x0.extend_from_slice(&self.embedding);
        x0
    }
}

#[derive(Debug, Clone)]
struct BlockTape {
    h_in: Vec<f64>,
    coeffs: SpectralCoeffs,
    y: Vec<f64>,
    z_pre: Vec<f64>,
}

/// Intermediate activations of one forward pass, consumed by the backward
/// pass.
#[derive(Debug, Clone)]
pub struct Tape {
    x0: Vec<f64>,
    enc_pre: Vec<f64>,
    enc_act: Vec<f64>,
    blocks: Vec<BlockTape>,
    h_final: Vec<f64>,
    dec_pre: Vec<f64>,
    dec_act: Vec<f64>,
}

/// `out[o][p] = b[o] + Σ_i w[o][i] x[i][p]`.
fn linear(w: &[f64], b: &[f64], x: &[f64], n_in: usize, n_out: usize, p: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_out * p];
    for o in 0..n_out {
        let row = &mut out[o * p..(o + 1) * p];
        row.fill(b[o]);
        for i in 0..n_in {
            let wi = w[o * n_in + i];
            if wi == 0.0 {
                continue;
            }
            for (r, xv) in row.iter_mut().zip(&x[i * p..(i + 1) * p]) {
                *r += wi * xv;
            }
        }
    }
    out
}

/// Accumulates weight and bias gradients of [`linear`] and returns the input
/// gradient.
#[allow(clippy::too_many_arguments)]
fn linear_backward(
    w: &[f64],
    x: &[f64],
    g: &[f64],
    n_in: usize,
    n_out: usize,
    p: usize,
    gw: &mut [f64],
    gb: &mut [f64],
) -> Vec<f64> {
    let mut gx = vec![0.0; n_in * p];
    for o in 0..n_out {
        let go = &g[o * p..(o + 1) * p];
        gb[o] += go.iter().sum::<f64>();
        for i in 0..n_in {
            let xi = &x[i * p..(i + 1) * p];
            gw[o * n_in + i] += go.iter().zip(xi).map(|(a, b)| a * b).sum::<f64>();
            let wi = w[o * n_in + i];
            for (gxv, gv) in gx[i * p..(i + 1) * p].iter_mut().zip(go) {
                *gxv += wi * gv;
            }
        }
    }
    gx
}

fn activate(act: Activation, x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| act.apply(v)).collect()
}

fn activate_backward(act: Activation, pre: &[f64], g: &[f64]) -> Vec<f64> {
    pre.iter().zip(g).map(|(&x, &gv)| gv * act.derivative(x)).collect()
}

/// Channel mixing in spectral space: `B[c'] = Σ_c K[c][c'] ⊙ A[c]`.
fn spectral_mix(kind: SpectralKind, w: &[f64], a: &SpectralCoeffs, hidden: usize) -> SpectralCoeffs {
    let layout = a.layout().clone();
    let n = layout.len();
    let degrees = layout.degrees();
    let n_l = layout.l_max() + 1;
    let mut out = SpectralCoeffs::zeros(layout.l_max(), layout.m_max(), hidden);
    for co in 0..hidden {
        let dst = &mut out.data_mut()[co * n..(co + 1) * n];
        for ci in 0..hidden {
            let src = a.channel(ci);
            let base = ci * hidden + co;
            match kind {
                SpectralKind::Zonal => {
                    let wk = &w[base * n_l..(base + 1) * n_l];
                    for ((d, s), &l) in dst.iter_mut().zip(src).zip(&degrees) {
                        *d += s * wk[l];
                    }
                }
                SpectralKind::Complex => {
                    let wk = &w[base * 2 * n..(base + 1) * 2 * n];
                    for (idx, (d, s)) in dst.iter_mut().zip(src).enumerate() {
                        *d += s * Complex64::new(wk[2 * idx], wk[2 * idx + 1]);
                    }
                }
            }
        }
    }
    out
}

/// Backward of [`spectral_mix`]: accumulates the weight gradient and returns
/// the gradient with respect to `A`.
fn spectral_mix_backward(
    kind: SpectralKind,
    w: &[f64],
    a: &SpectralCoeffs,
    g_out: &SpectralCoeffs,
    hidden: usize,
    gw: &mut [f64],
) -> SpectralCoeffs {
    let layout = a.layout().clone();
    let n = layout.len();
    let degrees = layout.degrees();
    let n_l = layout.l_max() + 1;
    let mut g_a = SpectralCoeffs::zeros(layout.l_max(), layout.m_max(), hidden);
    for ci in 0..hidden {
        let src = a.channel(ci);
        for co in 0..hidden {
            let go = g_out.channel(co);
            let base = ci * hidden + co;
            let dst = &mut g_a.data_mut()[ci * n..(ci + 1) * n];
            match kind {
                SpectralKind::Zonal => {
                    let wk = &w[base * n_l..(base + 1) * n_l];
                    let gk = &mut gw[base * n_l..(base + 1) * n_l];
                    for idx in 0..n {
                        let l = degrees[idx];
                        gk[l] += go[idx].re * src[idx].re + go[idx].im * src[idx].im;
                        dst[idx] += go[idx] * wk[l];
                    }
                }
                SpectralKind::Complex => {
                    let wk = &w[base * 2 * n..(base + 1) * 2 * n];
                    let gk = &mut gw[base * 2 * n..(base + 1) * 2 * n];
                    for idx in 0..n {
                        let (g, s) = (go[idx], src[idx]);
                        gk[2 * idx] += g.re * s.re + g.im * s.im;
                        gk[2 * idx + 1] += g.im * s.re - g.re * s.im;
                        dst[idx] += Complex64::new(wk[2 * idx], -wk[2 * idx + 1]) * g;
                    }
                }
            }
        }
    }
    g_a
}

fn spectral_layout_of(params: &SfnoParams) -> TriangularLayout {
    params.config.spectral_layout()
}

impl SfnoParams {
    fn check_input(&self, ctx: &GridContext, input: &[f64]) -> Result<(), SfnoError> {
        if ctx.plan.layout() != &spectral_layout_of(self) {
            return Err(SfnoError::InvalidArgument(
                "grid context was built for a different spectral truncation".into(),
            ));
        }
        let expected = self.config.in_channels * ctx.points();
        if input.len() != expected {
            return Err(SfnoError::ShapeMismatch(format!(
                "input has {} values, grid needs {expected}",
                input.len()
            )));
        }
        Ok(())
    }

    /// `ISHT(K · SHT(h))` of block `block` on a `[hidden][n_lat][n_lon]` field.
    pub fn spectral_path(&self, ctx: &GridContext, block: usize, h: &[f64]) -> Result<Vec<f64>, SfnoError> {
        let b = self
            .layout
            .blocks
            .get(block)
            .ok_or_else(|| SfnoError::InvalidArgument(format!("no block {block}")))?;
        let hidden = self.config.hidden;
        let a = ctx.plan.forward_many(h, hidden)?;
        let mixed = spectral_mix(self.config.spectral, self.block(b.spectral), &a, hidden);
        Ok(ctx.plan.inverse_many(&mixed)?)
    }

    /// Forward pass on one normalized `[in_channels][n_lat][n_lon]` input.
    /// Returns `[out_channels][n_lat][n_lon]`.
    pub fn forward(&self, ctx: &GridContext, input: &[f64]) -> Result<Vec<f64>, SfnoError> {
        Ok(self.forward_tape(ctx, input)?.0)
    }

    pub fn forward_tape(&self, ctx: &GridContext, input: &[f64]) -> Result<(Vec<f64>, Tape), SfnoError> {
        self.check_input(ctx, input)?;
        let cfg = &self.config;
        let l = &self.layout;
        let p = ctx.points();
        let (h, e, d, o) = (cfg.hidden, cfg.encoder_inputs(), cfg.decoder_hidden(), cfg.out_channels);
        let act = cfg.activation;

        let x0 = ctx.encoder_input(input);
        let enc_pre = linear(self.block(l.enc1_w), self.block(l.enc1_b), &x0, e, h, p);
        let enc_act = activate(act, &enc_pre);
        let mut hcur = linear(self.block(l.enc2_w), self.block(l.enc2_b), &enc_act, h, h, p);

        let mut blocks = Vec::with_capacity(l.blocks.len());
        for b in &l.blocks {
            let coeffs = ctx.plan.forward_many(&hcur, h)?;
            let mixed = spectral_mix(cfg.spectral, self.block(b.spectral), &coeffs, h);
            let y = ctx.plan.inverse_many(&mixed)?;
            let z_pre = linear(self.block(b.mlp_w), self.block(b.mlp_b), &y, h, h, p);
            let s = self.values[b.skip.offset];
            let next: Vec<f64> = z_pre.iter().zip(&hcur).map(|(&z, &x)| act.apply(z) + s * x).collect();
            blocks.push(BlockTape {
                h_in: std::mem::replace(&mut hcur, next),
                coeffs,
                y,
                z_pre,
            });
        }

        let dec_pre = linear(self.block(l.dec1_w), self.block(l.dec1_b), &hcur, h, d, p);
        let dec_act = activate(act, &dec_pre);
        let out = linear(self.block(l.dec2_w), self.block(l.dec2_b), &dec_act, d, o, p);
        let tape = Tape {
            x0,
            enc_pre,
            enc_act,
            blocks,
            h_final: hcur,
            dec_pre,
            dec_act,
        };
        Ok((out, tape))
    }

    /// Reverse pass: gradient of a scalar loss with respect to every
    /// parameter, given `g_out = ∂loss/∂output`.
    pub fn backward(&self, ctx: &GridContext, tape: &Tape, g_out: &[f64]) -> Result<Vec<f64>, SfnoError> {
        let cfg = &self.config;
        let l = &self.layout;
        let p = ctx.points();
        let (h, e, d, o) = (cfg.hidden, cfg.encoder_inputs(), cfg.decoder_hidden(), cfg.out_channels);
        if g_out.len() != o * p {
            return Err(SfnoError::ShapeMismatch(format!(
                "output gradient has {} values, expected {}",
                g_out.len(),
                o * p
            )));
        }
        let act = cfg.activation;
        let mut grads = vec![0.0; l.total];

        let (gw, gb) = split_pair(&mut grads, l.dec2_w.range(), l.dec2_b.range());
        let g_dec_act = linear_backward(self.block(l.dec2_w), &tape.dec_act, g_out, d, o, p, gw, gb);
        let g_dec_pre = activate_backward(act, &tape.dec_pre, &g_dec_act);
        let (gw, gb) = split_pair(&mut grads, l.dec1_w.range(), l.dec1_b.range());
        let mut g_h = linear_backward(self.block(l.dec1_w), &tape.h_final, &g_dec_pre, h, d, p, gw, gb);

        for (b, bt) in l.blocks.iter().zip(&tape.blocks).rev() {
            g_h = self.block_backward(ctx, b, bt, &g_h, &mut grads)?;
        }

        let (gw, gb) = split_pair(&mut grads, l.enc2_w.range(), l.enc2_b.range());
        let g_enc_act = linear_backward(self.block(l.enc2_w), &tape.enc_act, &g_h, h, h, p, gw, gb);
        let g_enc_pre = activate_backward(act, &tape.enc_pre, &g_enc_act);
        let (gw, gb) = split_pair(&mut grads, l.enc1_w.range(), l.enc1_b.range());
        linear_backward(self.block(l.enc1_w), &tape.x0, &g_enc_pre, e, h, p, gw, gb);
        Ok(grads)
    }

    fn block_backward(
        &self,
        ctx: &GridContext,
        b: &BlockLayout,
        bt: &BlockTape,
        g_hout: &[f64],
        grads: &mut [f64],
    ) -> Result<Vec<f64>, SfnoError> {
        let h = self.config.hidden;
        let p = ctx.points();
        let act = self.config.activation;
        let s = self.values[b.skip.offset];
        grads[b.skip.offset] += g_hout.iter().zip(&bt.h_in).map(|(g, x)| g * x).sum::<f64>();
        let g_z = activate_backward(act, &bt.z_pre, g_hout);
        let (gw, gb) = split_pair(grads, b.mlp_w.range(), b.mlp_b.range());
        let g_y = linear_backward(self.block(b.mlp_w), &bt.y, &g_z, h, h, p, gw, gb);
        let g_mixed = ctx.plan.adjoint_inverse_many(&g_y, h)?;
        let g_coeffs = spectral_mix_backward(
            self.config.spectral,
            self.block(b.spectral),
            &bt.coeffs,
            &g_mixed,
            h,
            &mut grads[b.spectral.range()],
        );
        let mut g_in = ctx.plan.adjoint_forward_many(&g_coeffs)?;
        for (gi, go) in g_in.iter_mut().zip(g_hout) {
            *gi += s * go;
        }
        Ok(g_in)
    }
}

/// Two disjoint mutable sub-slices; `a` must precede `b`.
fn split_pair(
    v: &mut [f64],
    a: std::ops::Range<usize>,
    b: std::ops::Range<usize>,
) -> (&mut [f64], &mut [f64]) {
    debug_assert!(a.end <= b.start);
    let (left, right) = v.split_at_mut(b.start);
    (&mut left[a], &mut right[..b.end - b.start])
}

#[cfg(test)]
mod tests {
    use super::super::params::SfnoConfig;
    use super::*;
    use crate::sht::roll_longitude;

    fn config(kind: SpectralKind, act: Activation) -> SfnoConfig {
        SfnoConfig {
            n_layers: 2,
            hidden: 4,
            l_max: 7,
            m_max: 8,
            out_channels: 3,
            mlp_ratio: 2,
            activation: act,
            spectral: kind,
            seed: 7,
            ..SfnoConfig::default()
        }
    }

    fn input(grid: &SphericalGrid) -> Vec<f64> {
        let n_lon = grid.n_lon();
        (0..grid.len())
            .map(|i| {
                let (j, k) = (i / n_lon, i % n_lon);
                let x = grid.cos_colatitudes()[j];
                let phi = grid.longitudes()[k];
                0.5 + 0.3 * x + 0.2 * (1.0 - x * x).sqrt() * (phi + 0.4).cos()
            })
            .collect()
    }

    /// Perturbs every parameter so that biases and skip scales are not at
    /// special values.
    fn jitter(p: &mut SfnoParams) {
        for (i, v) in p.values.iter_mut().enumerate() {
            *v += 0.05 * ((i as f64) * 0.731).sin();
        }
    }

    fn gradient_check(kind: SpectralKind, act: Activation) {
        let grid = SphericalGrid::new(8, 16).unwrap();
        let mut params = SfnoParams::init(&config(kind, act)).unwrap();
        jitter(&mut params);
        let ctx = GridContext::new(&params, &grid).unwrap();
        let x = input(&grid);
        let target: Vec<f64> = (0..3 * grid.len()).map(|i| 0.3 * (i as f64 * 0.17).cos()).collect();
        // loss = ½ Σ (out - target)²
        let loss = |p: &SfnoParams| -> f64 {
            let out = p.forward(&ctx, &x).unwrap();
            0.5 * out.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        };
        let (out, tape) = params.forward_tape(&ctx, &x).unwrap();
        let g_out: Vec<f64> = out.iter().zip(&target).map(|(a, b)| a - b).collect();
        let grads = params.backward(&ctx, &tape, &g_out).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for (name, block) in params.layout.named() {
            // Every entry of small blocks, a stride sample of large ones.
            let stride = (block.len / 12).max(1);
            for i in (block.offset..block.offset + block.len).step_by(stride) {
                let mut q = params.clone();
                q.values[i] += h;
                let up = loss(&q);
                q.values[i] -= 2.0 * h;
                let dn = loss(&q);
                let fd = (up - dn) / (2.0 * h);
                let rel = (fd - grads[i]).abs() / fd.abs().max(grads[i].abs()).max(1e-3);
                assert!(rel < 1e-5, "{name}[{}]: analytic {} vs fd {fd}", i - block.offset, grads[i]);
                worst = worst.max(rel);
            }
        }
        assert!(worst < 1e-5);
    }

    #[test]
    fn gradients_match_finite_differences_zonal_gelu() {
        gradient_check(SpectralKind::Zonal, Activation::Gelu);
    }

    #[test]
    fn gradients_match_finite_differences_complex_gelu() {
        gradient_check(SpectralKind::Complex, Activation::Gelu);
    }

    #[test]
    fn gradients_match_finite_differences_identity() {
        gradient_check(SpectralKind::Zonal, Activation::Identity);
    }

    #[test]
    fn rotation_equivariance() {
        for kind in [SpectralKind::Zonal, SpectralKind::Complex] {
            let grid = SphericalGrid::new(8, 16).unwrap();
            let params = SfnoParams::init(&config(kind, Activation::Gelu)).unwrap();
            let ctx = GridContext::new(&params, &grid).unwrap();
            let x = input(&grid);
            let hidden: Vec<f64> = (0..4).flat_map(|c| x.iter().map(move |v| v * (c as f64 + 1.0))).collect();
            let base_layer = params.spectral_path(&ctx, 0, &hidden).unwrap();
            let base_net = params.forward(&ctx, &x).unwrap();
            for k in [1isize, 3, 8] {
                let rolled: Vec<f64> = hidden.chunks(grid.len()).flat_map(|c| roll_longitude(c, 16, k)).collect();
                let y = params.spectral_path(&ctx, 0, &rolled).unwrap();
                let back: Vec<f64> = y.chunks(grid.len()).flat_map(|c| roll_longitude(c, 16, -k)).collect();
                let err = back.iter().zip(&base_layer).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(err < 1e-8, "layer shift {k}: {err}");

                let out = params.forward(&ctx, &roll_longitude(&x, 16, k)).unwrap();
                let back: Vec<f64> = out.chunks(grid.len()).flat_map(|c| roll_longitude(c, 16, -k)).collect();
                let err = back.iter().zip(&base_net).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(err < 1e-8, "network shift {k}: {err}");
            }
        }
    }

    #[test]
    fn zero_decoder_outputs_bias() {
        let grid = SphericalGrid::new(8, 16).unwrap();
        let mut params = SfnoParams::init(&config(SpectralKind::Zonal, Activation::Gelu)).unwrap();
        let l = params.layout.clone();
        params.values[l.dec2_w.range()].fill(0.0);
        let ctx = GridContext::new(&params, &grid).unwrap();
        let out = params.forward(&ctx, &input(&grid)).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn wrong_input_shape() {
        let grid = SphericalGrid::new(8, 16).unwrap();
        let params = SfnoParams::init(&config(SpectralKind::Zonal, Activation::Gelu)).unwrap();
        let ctx = GridContext::new(&params, &grid).unwrap();
        assert!(params.forward(&ctx, &[0.0; 10]).is_err());
        let small = SphericalGrid::new(4, 16).unwrap();
        assert!(GridContext::new(&params, &small).is_err());
    }
}
