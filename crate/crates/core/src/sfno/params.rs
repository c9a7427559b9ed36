use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::SfnoError;
use crate::sht::TriangularLayout;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Gelu,
    Relu,
    /// Linear; used to expose dead gradient paths in tests.
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => 0.5 * x * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2)),
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => {
                let cdf = 0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2));
                let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
                cdf + x * pdf
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Parameterization of the spectral convolution weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SpectralKind {
    /// Real `w[c][c'][ℓ]`, shared by every order `m`. Cannot express
    /// longitudinal shifts.
    Zonal,
    /// Complex `w[c][c'][(ℓ, m)]`, one weight per stored coefficient.
    #[default]
    Complex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SfnoConfig {
    pub n_layers: usize,
    pub hidden: usize,
    pub l_max: usize,
    pub m_max: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub mlp_ratio: usize,
    pub activation: Activation,
    pub use_position_embedding: bool,
    pub spectral: SpectralKind,
    pub seed: u64,
}

impl Default for SfnoConfig {
    fn default() -> Self {
        Self {
            n_layers: 4,
            hidden: 64,
            l_max: 110,
            m_max: 64,
            in_channels: 1,
            out_channels: 139,
            mlp_ratio: 2,
            activation: Activation::Gelu,
            use_position_embedding: true,
            spectral: SpectralKind::Complex,
            seed: 0,
        }
    }
}

impl SfnoConfig {
    pub fn validate(&self) -> Result<(), SfnoError> {
        let bad = |m: &str| Err(SfnoError::InvalidConfig(m.into()));
        if self.n_layers == 0 {
            return bad("n_layers must be >= 1");
        }
        if self.hidden == 0 {
            return bad("hidden must be >= 1");
        }
        if self.out_channels == 0 {
            return bad("out_channels must be >= 1");
        }
        if self.in_channels != 1 {
            return bad("exactly one input channel is supported");
        }
        if self.mlp_ratio == 0 {
            return bad("mlp_ratio must be >= 1");
        }
        Ok(())
    }

    /// Channels entering the encoder.
    pub fn encoder_inputs(&self) -> usize {
        self.in_channels + if self.use_position_embedding { 2 } else { 0 }
    }

    pub fn decoder_hidden(&self) -> usize {
        self.hidden * self.mlp_ratio
    }

    pub fn spectral_layout(&self) -> TriangularLayout {
        TriangularLayout::new(self.l_max, self.m_max)
    }

    pub fn spectral_len(&self) -> usize {
        let h2 = self.hidden * self.hidden;
        match self.spectral {
            SpectralKind::Zonal => h2 * (self.l_max + 1),
            SpectralKind::Complex => h2 * self.spectral_layout().len() * 2,
        }
    }
}

/// A named contiguous range of the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamBlock {
    pub offset: usize,
    pub len: usize,
}

impl ParamBlock {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockLayout {
    pub spectral: ParamBlock,
    pub mlp_w: ParamBlock,
    pub mlp_b: ParamBlock,
    pub skip: ParamBlock,
}

/// Canonical parameter order: encoder, blocks, decoder. Checkpoints store
/// parameters in exactly this order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub enc1_w: ParamBlock,
    pub enc1_b: ParamBlock,
    pub enc2_w: ParamBlock,
    pub enc2_b: ParamBlock,
    pub blocks: Vec<BlockLayout>,
    pub dec1_w: ParamBlock,
    pub dec1_b: ParamBlock,
    pub dec2_w: ParamBlock,
    pub dec2_b: ParamBlock,
    pub total: usize,
}

impl ParamLayout {
    pub fn new(cfg: &SfnoConfig) -> Self {
        let mut offset = 0;
        let mut take = |len: usize| {
            let b = ParamBlock { offset, len };
            offset += len;
            b
        };
        let (h, e, d, o) = (cfg.hidden, cfg.encoder_inputs(), cfg.decoder_hidden(), cfg.out_channels);
        let enc1_w = take(h * e);
        let enc1_b = take(h);
        let enc2_w = take(h * h);
        let enc2_b = take(h);
        let blocks = (0..cfg.n_layers)
            .map(|_| BlockLayout {
                spectral: take(cfg.spectral_len()),
                mlp_w: take(h * h),
                mlp_b: take(h),
                skip: take(1),
            })
            .collect();
        let dec1_w = take(d * h);
        let dec1_b = take(d);
        let dec2_w = take(o * d);
        let dec2_b = take(o);
        Self {
            enc1_w,
            enc1_b,
            enc2_w,
            enc2_b,
            blocks,
            dec1_w,
            dec1_b,
            dec2_w,
            dec2_b,
            total: offset,
        }
    }

    /// Every block as `(name, range)`, in canonical order.
    pub fn named(&self) -> Vec<(String, ParamBlock)> {
        let mut out = vec![
            ("encoder.0.weight".to_string(), self.enc1_w),
            ("encoder.0.bias".to_string(), self.enc1_b),
            ("encoder.1.weight".to_string(), self.enc2_w),
            ("encoder.1.bias".to_string(), self.enc2_b),
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            out.push((format!("blocks.{i}.spectral"), b.spectral));
            out.push((format!("blocks.{i}.mlp.weight"), b.mlp_w));
            out.push((format!("blocks.{i}.mlp.bias"), b.mlp_b));
            out.push((format!("blocks.{i}.skip"), b.skip));
        }
        out.extend([
            ("decoder.0.weight".to_string(), self.dec1_w),
            ("decoder.0.bias".to_string(), self.dec1_b),
            ("decoder.1.weight".to_string(), self.dec2_w),
            ("decoder.1.bias".to_string(), self.dec2_b),
        ]);
        out
    }
}

/// Configuration plus flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SfnoParams {
    pub config: SfnoConfig,
    pub layout: ParamLayout,
    pub values: Vec<f64>,
}

impl SfnoParams {
    /// Xavier-uniform MLP weights, Gaussian spectral weights with standard
    /// deviation `1/√(hidden·(l_max+1))`, zero biases, unit skip scales.
    pub fn init(config: &SfnoConfig) -> Result<Self, SfnoError> {
        config.validate()?;
        let layout = ParamLayout::new(config);
        let mut values = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut xavier = |block: ParamBlock, fan_in: usize, fan_out: usize, values: &mut [f64]| {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in &mut values[block.range()] {
                *v = rng.random_range(-bound..=bound);
            }
        };
        let (h, e, d, o) = (config.hidden, config.encoder_inputs(), config.decoder_hidden(), config.out_channels);
        xavier(layout.enc1_w, e, h, &mut values);
        xavier(layout.enc2_w, h, h, &mut values);
        for b in &layout.blocks {
            xavier(b.mlp_w, h, h, &mut values);
        }
        xavier(layout.dec1_w, h, d, &mut values);
        xavier(layout.dec2_w, d, o, &mut values);
        let scale = 1.0 / ((config.hidden * (config.l_max + 1)) as f64).sqrt();
        for b in &layout.blocks {
            for v in &mut values[b.spectral.range()] {
                *v = scale * rng.sample::<f64, _>(StandardNormal);
            }
            values[b.skip.offset] = 1.0;
        }
        Ok(Self {
            config: config.clone(),
            layout,
            values,
        })
    }

    pub fn from_values(config: &SfnoConfig, values: Vec<f64>) -> Result<Self, SfnoError> {
        config.validate()?;
        let layout = ParamLayout::new(config);
        if values.len() != layout.total {
            return Err(SfnoError::ShapeMismatch(format!(
                "{} parameters for a layout of {}",
                values.len(),
                layout.total
            )));
        }
        Ok(Self {
            config: config.clone(),
            layout,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn block(&self, b: ParamBlock) -> &[f64] {
        &self.values[b.range()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> SfnoConfig {
        SfnoConfig {
            n_layers: 2,
            hidden: 4,
            l_max: 7,
            m_max: 8,
            out_channels: 5,
            spectral: SpectralKind::Zonal,
            seed: 42,
            ..SfnoConfig::default()
        }
    }

    #[test]
    fn init_is_deterministic() {
        let a = SfnoParams::init(&tiny()).unwrap();
        let b = SfnoParams::init(&tiny()).unwrap();
        assert_eq!(a, b);
        let c = SfnoParams::init(&SfnoConfig { seed: 43, ..tiny() }).unwrap();
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn biases_zero_and_weights_bounded() {
        let cfg = tiny();
        let p = SfnoParams::init(&cfg).unwrap();
        let l = &p.layout;
        for b in [l.enc1_b, l.enc2_b, l.dec1_b, l.dec2_b] {
            assert!(p.block(b).iter().all(|&v| v == 0.0));
        }
        for blk in &l.blocks {
            assert!(p.block(blk.mlp_b).iter().all(|&v| v == 0.0));
            assert_eq!(p.block(blk.skip), &[1.0]);
        }
        let check = |b: ParamBlock, fi: usize, fo: usize| {
            let bound = (6.0 / (fi + fo) as f64).sqrt();
            assert!(p.block(b).iter().all(|v| v.abs() <= bound));
        };
        check(l.enc1_w, 3, 4);
        check(l.enc2_w, 4, 4);
        check(l.dec1_w, 4, 8);
        check(l.dec2_w, 8, 5);
    }

    #[test]
    fn layout_is_derivable_from_config() {
        let cfg = tiny();
        let l = ParamLayout::new(&cfg);
        let expected = 4 * 3 + 4 + 16 + 4 + 2 * (16 * 8 + 16 + 4 + 1) + 8 * 4 + 8 + 5 * 8 + 5;
        assert_eq!(l.total, expected);
        let named = l.named();
        assert_eq!(named.iter().map(|(_, b)| b.len).sum::<usize>(), l.total);
        assert!(named.windows(2).all(|w| w[0].1.offset + w[0].1.len == w[1].1.offset));
        let cplx = SfnoConfig { spectral: SpectralKind::Complex, ..cfg };
        assert_eq!(cplx.spectral_len(), 16 * TriangularLayout::new(7, 8).len() * 2);
    }

    #[test]
    fn invalid_configs() {
        assert!(SfnoParams::init(&SfnoConfig { n_layers: 0, ..tiny() }).is_err());
        assert!(SfnoParams::init(&SfnoConfig { hidden: 0, ..tiny() }).is_err());
        assert!(SfnoParams::init(&SfnoConfig { out_channels: 0, ..tiny() }).is_err());
    }

    #[test]
    fn gelu_derivative_matches_difference_quotient() {
        for &x in &[-3.0, -0.7, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let fd = (Activation::Gelu.apply(x + h) - Activation::Gelu.apply(x - h)) / (2.0 * h);
            assert!((fd - Activation::Gelu.derivative(x)).abs() < 1e-8);
        }
    }
}
