//! Evaluation metrics. Cube-level metrics cover the predicted slices
//! `1..n_r` only; slice 0 is the boundary condition shared by every model.
//!
//! Aggregation over an evaluation set is the mean over cubes. PSNR is
//! derived from the aggregated MSE.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec;
use crate::storage::VelocityCube;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("empty input")]
    Empty,
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("anomaly correlation undefined: zero-variance {0} anomaly")]
    UndefinedAcc(&'static str),
}

type Result<T> = std::result::Result<T, MetricsError>;

fn same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(MetricsError::DimMismatch(format!("{} vs {} values", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

fn same_dims(a: &VelocityCube, b: &VelocityCube) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(MetricsError::DimMismatch(format!("cube {:?} vs {:?}", a.dims(), b.dims())));
    }
    if a.dims().0 < 2 {
        return Err(MetricsError::Degenerate("cube has no predicted slices".into()));
    }
    Ok(())
}

/// Mean squared residual.
pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    same_len(pred, truth)?;
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64)
}

/// MSE over slices `1..n_r`.
pub fn cube_mse(pred: &VelocityCube, truth: &VelocityCube) -> Result<f64> {
    same_dims(pred, truth)?;
    mse(pred.outer_slices(), truth.outer_slices())
}

/// MSE of each predicted slice; entry `i` belongs to radius index `i + 1`.
pub fn per_radius_mse(pred: &VelocityCube, truth: &VelocityCube) -> Result<Vec<f64>> {
    same_dims(pred, truth)?;
    (1..pred.dims().0).map(|i| mse(pred.slice(i), truth.slice(i))).collect()
}

/// Sobel gradient magnitude of a `[n_lat][n_lon]` slice, periodic in
/// longitude and edge-replicated in latitude.
pub fn sobel_magnitude(slice: &[f64], n_lat: usize, n_lon: usize) -> Result<Vec<f64>> {
    if n_lat < 3 || n_lon < 3 {
        return Err(MetricsError::Degenerate(format!("slice {n_lat}x{n_lon} is smaller than 3x3")));
    }
    if slice.len() != n_lat * n_lon {
        return Err(MetricsError::DimMismatch(format!("{} values for {n_lat}x{n_lon}", slice.len())));
    }
    let at = |j: isize, k: isize| {
        let j = j.clamp(0, n_lat as isize - 1) as usize;
        let k = k.rem_euclid(n_lon as isize) as usize;
        slice[j * n_lon + k]
    };
    let mut out = Vec::with_capacity(slice.len());
    for j in 0..n_lat as isize {
        for k in 0..n_lon as isize {
            let gx = (at(j - 1, k + 1) + 2.0 * at(j, k + 1) + at(j + 1, k + 1))
                - (at(j - 1, k - 1) + 2.0 * at(j, k - 1) + at(j + 1, k - 1));
            let gy = (at(j + 1, k - 1) + 2.0 * at(j + 1, k) + at(j + 1, k + 1))
                - (at(j - 1, k - 1) + 2.0 * at(j - 1, k) + at(j - 1, k + 1));
            out.push((gx * gx + gy * gy).sqrt());
        }
    }
    Ok(out)
}

/// Linear-interpolation percentile (`p` in `[0, 100]`).
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(MetricsError::Empty);
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(MetricsError::InvalidArgument(format!("percentile {p} outside [0, 100]")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = p / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    Ok(v[lo] + (pos - lo as f64) * (v[hi] - v[lo]))
}

/// Cells whose Sobel magnitude lies strictly above a threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMask {
    pub mask: Vec<bool>,
    pub threshold_percentile: f64,
    pub threshold: f64,
}

impl EdgeMask {
    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }
}

/// Edge mask of a ground-truth slice. A `percentile` of 0 selects every cell
/// with nonzero gradient; a negative percentile selects every cell.
pub fn sobel_mask(slice: &[f64], n_lat: usize, n_lon: usize, percentile_p: f64) -> Result<EdgeMask> {
    let mag = sobel_magnitude(slice, n_lat, n_lon)?;
    if !percentile_p.is_finite() || percentile_p > 100.0 {
        return Err(MetricsError::InvalidArgument(format!("percentile {percentile_p}")));
    }
    let threshold = if percentile_p < 0.0 {
        f64::NEG_INFINITY
    } else if percentile_p == 0.0 {
        0.0
    } else {
        percentile(&mag, percentile_p)?
    };
    Ok(EdgeMask {
        mask: mag.iter().map(|&m| m > threshold).collect(),
        threshold_percentile: percentile_p,
        threshold,
    })
}

/// MSE over the edge cells of every predicted slice (per-slice masks,
/// pooled cell mean). `None` when every mask is empty.
pub fn edge_mse(pred: &VelocityCube, truth: &VelocityCube, percentile_p: f64) -> Result<Option<f64>> {
    same_dims(pred, truth)?;
    let (n_r, n_lat, n_lon) = truth.dims();
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 1..n_r {
        let mask = sobel_mask(truth.slice(i), n_lat, n_lon, percentile_p)?;
        for ((&m, p), t) in mask.mask.iter().zip(pred.slice(i)).zip(truth.slice(i)) {
            if m {
                sum += (p - t) * (p - t);
                count += 1;
            }
        }
    }
    Ok((count > 0).then(|| sum / count as f64))
}

/// 1-D Wasserstein-1 distance between two equal-size samples: mean absolute
/// difference after sorting.
pub fn emd(pred: &[f64], truth: &[f64]) -> Result<f64> {
    same_len(pred, truth)?;
    let mut a = pred.to_vec();
    let mut b = truth.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
}

pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;

/// Mean luminance and contrast-structure terms of single-scale SSIM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimTerms {
    pub luminance: f64,
    pub contrast_structure: f64,
}

impl SsimTerms {
    pub fn ssim(&self) -> f64 {
        self.luminance * self.contrast_structure
    }
}

fn gaussian_window(size: usize) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let g: Vec<f64> = (0..size)
        .map(|i| (-(i as f64 - c).powi(2) / (2.0 * SIGMA * SIGMA)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Separable "valid" filtering of an `h x w` image.
fn filter_valid(img: &[f64], h: usize, w: usize, g: &[f64]) -> (Vec<f64>, usize, usize) {
    let n = g.len();
    let (ho, wo) = (h - n + 1, w - n + 1);
    let mut tmp = vec![0.0; h * wo];
    for r in 0..h {
        for c in 0..wo {
            tmp[r * wo + c] = (0..n).map(|k| g[k] * img[r * w + c + k]).sum();
        }
    }
    let mut out = vec![0.0; ho * wo];
    for r in 0..ho {
        for c in 0..wo {
            out[r * wo + c] = (0..n).map(|k| g[k] * tmp[(r + k) * wo + c]).sum();
        }
    }
    (out, ho, wo)
}

/// Gaussian-windowed SSIM terms (window `min(11, min(h, w))` rounded down to
/// odd, σ = 1.5), averaged over the valid region.
pub fn ssim_terms(x: &[f64], y: &[f64], h: usize, w: usize, data_range: f64) -> Result<SsimTerms> {
    same_len(x, y)?;
    if x.len() != h * w {
        return Err(MetricsError::DimMismatch(format!("{} values for {h}x{w}", x.len())));
    }
    if !(data_range > 0.0 && data_range.is_finite()) {
        return Err(MetricsError::InvalidArgument(format!("data_range {data_range} must be positive")));
    }
    let size = WINDOW.min(h).min(w);
    let size = if size.is_multiple_of(2) { size - 1 } else { size };
    let g = gaussian_window(size);
    let c1 = (0.01 * data_range).powi(2);
    let c2 = (0.03 * data_range).powi(2);
    let prod = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(p, q)| p * q).collect() };
    let (mx, ho, wo) = filter_valid(x, h, w, &g);
    let (my, _, _) = filter_valid(y, h, w, &g);
    let (mxx, _, _) = filter_valid(&prod(x, x), h, w, &g);
    let (myy, _, _) = filter_valid(&prod(y, y), h, w, &g);
    let (mxy, _, _) = filter_valid(&prod(x, y), h, w, &g);
    let n = (ho * wo) as f64;
    let (mut l_sum, mut cs_sum) = (0.0, 0.0);
    for i in 0..ho * wo {
        let (ux, uy) = (mx[i], my[i]);
        let sxx = mxx[i] - ux * ux;
        let syy = myy[i] - uy * uy;
        let sxy = mxy[i] - ux * uy;
        l_sum += (2.0 * ux * uy + c1) / (ux * ux + uy * uy + c1);
        cs_sum += (2.0 * sxy + c2) / (sxx + syy + c2);
    }
    // Averages of per-pixel l and cs; SSIM itself is reported as their
    // product, which coincides with mean(l·cs) whenever either is constant.
    Ok(SsimTerms {
        luminance: l_sum / n,
        contrast_structure: cs_sum / n,
    })
}

fn downsample(img: &[f64], h: usize, w: usize) -> (Vec<f64>, usize, usize) {
    let (ho, wo) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(ho * wo);
    for r in 0..ho {
        for c in 0..wo {
            let s = img[2 * r * w + 2 * c] + img[2 * r * w + 2 * c + 1] + img[(2 * r + 1) * w + 2 * c] + img[(2 * r + 1) * w + 2 * c + 1];
            out.push(0.25 * s);
        }
    }
    (out, ho, wo)
}

/// MS-SSIM value together with the number of dyadic scales that fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MsSsim {
    pub value: f64,
    pub scales: usize,
    /// `true` when fewer than five scales fit the image; the leading weights
    /// are then renormalized to sum to one.
    pub reduced: bool,
}

/// Number of dyadic scales whose coarsest level keeps both sides >= 11.
pub fn ms_ssim_scales(h: usize, w: usize) -> usize {
    let mut m = 1;
    let (mut a, mut b) = (h.min(w), h.min(w));
    while m < MS_SSIM_WEIGHTS.len() {
        a /= 2;
        b /= 2;
        if a.min(b) < WINDOW {
            break;
        }
        m += 1;
    }
    m
}

/// MS-SSIM of one slice. Contrast-structure terms are clamped at zero
/// before exponentiation.
pub fn ms_ssim_slice(x: &[f64], y: &[f64], h: usize, w: usize, data_range: f64) -> Result<MsSsim> {
    let scales = ms_ssim_scales(h, w);
    let wsum: f64 = MS_SSIM_WEIGHTS[..scales].iter().sum();
    let (mut xs, mut ys, mut hh, mut ww) = (x.to_vec(), y.to_vec(), h, w);
    let mut value = 1.0;
    for (s, weight) in MS_SSIM_WEIGHTS[..scales].iter().enumerate() {
        let t = ssim_terms(&xs, &ys, hh, ww, data_range)?;
        let wt = weight / wsum;
        let term = if s + 1 == scales { t.ssim() } else { t.contrast_structure };
        value *= term.max(0.0).powf(wt);
        if s + 1 < scales {
            let (a, h2, w2) = downsample(&xs, hh, ww);
            let (b, _, _) = downsample(&ys, hh, ww);
            xs = a;
            ys = b;
            hh = h2;
            ww = w2;
        }
    }
    Ok(MsSsim {
        value,
        scales,
        reduced: scales < MS_SSIM_WEIGHTS.len(),
    })
}

/// MS-SSIM averaged over the predicted slices of a cube.
pub fn ms_ssim(pred: &VelocityCube, truth: &VelocityCube, data_range: f64) -> Result<MsSsim> {
    same_dims(pred, truth)?;
    let (n_r, n_lat, n_lon) = truth.dims();
    let mut total = 0.0;
    let mut last = None;
    for i in 1..n_r {
        let m = ms_ssim_slice(pred.slice(i), truth.slice(i), n_lat, n_lon, data_range)?;
        total += m.value;
        last = Some(m);
    }
    let m = last.expect("at least one predicted slice");
    Ok(MsSsim {
        value: total / (n_r - 1) as f64,
        ..m
    })
}

/// `10·log10(peak² / mse)`; `+inf` when `mse == 0`.
pub fn psnr_from_mse(mse: f64, peak: f64) -> Result<f64> {
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(MetricsError::InvalidArgument(format!("peak {peak} must be positive")));
    }
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

pub fn psnr(pred: &[f64], truth: &[f64], peak: f64) -> Result<f64> {
    psnr_from_mse(mse(pred, truth)?, peak)
}

/// Elementwise mean cube over a training split.
#[derive(Debug, Clone, PartialEq)]
pub struct Climatology {
    pub dims: (usize, usize, usize),
    pub values: Vec<f64>,
}

pub fn build_climatology(cubes: &[VelocityCube]) -> Result<Climatology> {
    let first = cubes.first().ok_or(MetricsError::Empty)?;
    // Incremental mean: exact when every cube is identical.
    let mut mean = first.values().to_vec();
    for (k, c) in cubes.iter().enumerate().skip(1) {
        if c.dims() != first.dims() {
            return Err(MetricsError::DimMismatch(format!("cube {:?} vs {:?}", c.dims(), first.dims())));
        }
        let n = (k + 1) as f64;
        mean.iter_mut().zip(c.values()).for_each(|(m, v)| *m += (v - *m) / n);
    }
    Ok(Climatology {
        dims: first.dims(),
        values: mean,
    })
}

/// Pearson correlation of `pred - clim` and `truth - clim`.
pub fn acc(pred: &[f64], truth: &[f64], clim: &[f64]) -> Result<f64> {
    same_len(pred, truth)?;
    same_len(pred, clim)?;
    let a: Vec<f64> = pred.iter().zip(clim).map(|(p, c)| p - c).collect();
    let b: Vec<f64> = truth.iter().zip(clim).map(|(t, c)| t - c).collect();
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(&b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 {
        return Err(MetricsError::UndefinedAcc("prediction"));
    }
    if sbb == 0.0 {
        return Err(MetricsError::UndefinedAcc("truth"));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// ACC over the predicted slices of a cube.
pub fn cube_acc(pred: &VelocityCube, truth: &VelocityCube, clim: &Climatology) -> Result<f64> {
    same_dims(pred, truth)?;
    if clim.dims != truth.dims() {
        return Err(MetricsError::DimMismatch(format!(
            "climatology {:?} vs cube {:?}",
            clim.dims,
            truth.dims()
        )));
    }
    let skip = truth.dims().1 * truth.dims().2;
    acc(pred.outer_slices(), truth.outer_slices(), &clim.values[skip..])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

/// Uniform-width histogram over `[min, max]`; the last bin is closed. A
/// constant input puts every count in bin 0.
pub fn speed_histogram(values: &[f64], bins: usize) -> Result<Histogram> {
    if bins == 0 {
        return Err(MetricsError::InvalidArgument("bins must be >= 1".into()));
    }
    if values.is_empty() {
        return Err(MetricsError::Empty);
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(MetricsError::Degenerate("non-finite values".into()));
    }
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins).map(|i| if i == bins { hi } else { lo + i as f64 * width }).collect();
    let mut counts = vec![0u64; bins];
    for &v in values {
        let b = if width == 0.0 { 0 } else { (((v - lo) / width) as usize).min(bins - 1) };
        counts[b] += 1;
    }
    Ok(Histogram { edges, counts })
}

/// Metric direction, used for relative change.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Better {
    Lower,
    Higher,
}

/// Improvement of `model` over `baseline` in percent, positive when the
/// model is better: `(b - m)/b·100` for lower-is-better metrics and
/// `(m - b)/b·100` for higher-is-better ones.
pub fn relative_change(better: Better, baseline: f64, model: f64) -> f64 {
    match better {
        Better::Lower => (baseline - model) / baseline * 100.0,
        Better::Higher => (model - baseline) / baseline * 100.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mse: f64,
    pub edge_mse: Option<f64>,
    pub emd: f64,
    pub ms_ssim: f64,
    pub acc: f64,
    /// `f64::INFINITY` for a perfect prediction; serialized as `"+inf"`.
    #[serde(with = "psnr_serde")]
    pub psnr: f64,
    pub per_radius_mse: Vec<f64>,
}

impl MetricReport {
    /// `(name, direction, value)` for the six headline metrics, in table
    /// order.
    pub fn headline(&self) -> [(&'static str, Better, Option<f64>); 6] {
        [
            ("mse", Better::Lower, Some(self.mse)),
            ("edge_mse", Better::Lower, self.edge_mse),
            ("emd", Better::Lower, Some(self.emd)),
            ("ms_ssim", Better::Higher, Some(self.ms_ssim)),
            ("acc", Better::Higher, Some(self.acc)),
            ("psnr", Better::Higher, Some(self.psnr)),
        ]
    }
}

mod psnr_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *v == f64::INFINITY {
            s.serialize_str("+inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) if s == "+inf" => Ok(f64::INFINITY),
            Repr::Str(s) => Err(serde::de::Error::custom(format!("bad PSNR value {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub edge_percentile: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { edge_percentile: 90.0 }
    }
}

/// Truth data range (max - min) over the predicted slices of every cube.
pub fn data_range(truth: &[VelocityCube]) -> Result<f64> {
    let (lo, hi) = truth
        .iter()
        .flat_map(|c| c.outer_slices())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    if hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater) {
        return Err(MetricsError::Degenerate("truth has zero data range".into()));
    }
    Ok(hi - lo)
}

struct CubeScores {
    mse: f64,
    edge: Option<f64>,
    emd: f64,
    ms_ssim: f64,
    acc: f64,
    per_radius: Vec<f64>,
}

/// Full report over an evaluation set. Cubes are scored in parallel and
/// reduced in order.
pub fn evaluate(
    preds: &[VelocityCube],
    truths: &[VelocityCube],
    clim: &Climatology,
    opts: &EvalOptions,
) -> Result<MetricReport> {
    if preds.len() != truths.len() {
        return Err(MetricsError::DimMismatch(format!(
            "{} predictions for {} truth cubes",
            preds.len(),
            truths.len()
        )));
    }
    if truths.is_empty() {
        return Err(MetricsError::Empty);
    }
    let range = data_range(truths)?;
    let scores = exec::map_range(truths.len(), |i| -> Result<CubeScores> {
        let (p, t) = (&preds[i], &truths[i]);
        Ok(CubeScores {
            mse: cube_mse(p, t)?,
            edge: edge_mse(p, t, opts.edge_percentile)?,
            emd: emd(p.outer_slices(), t.outer_slices())?,
            ms_ssim: ms_ssim(p, t, range)?.value,
            acc: cube_acc(p, t, clim)?,
            per_radius: per_radius_mse(p, t)?,
        })
    });
    let scores: Vec<CubeScores> = scores.into_iter().collect::<Result<_>>()?;
    let n = scores.len() as f64;
    let mean = |f: &dyn Fn(&CubeScores) -> f64| scores.iter().map(f).sum::<f64>() / n;
    let edges: Vec<f64> = scores.iter().filter_map(|s| s.edge).collect();
    let mse_all = mean(&|s| s.mse);
    let n_pr = scores[0].per_radius.len();
    let per_radius_mse = (0..n_pr).map(|i| mean(&|s| s.per_radius[i])).collect();
    Ok(MetricReport {
        mse: mse_all,
        edge_mse: (!edges.is_empty()).then(|| edges.iter().sum::<f64>() / edges.len() as f64),
        emd: mean(&|s| s.emd),
        ms_ssim: mean(&|s| s.ms_ssim),
        acc: mean(&|s| s.acc),
        psnr: psnr_from_mse(mse_all, range)?,
        per_radius_mse,
    })
}
