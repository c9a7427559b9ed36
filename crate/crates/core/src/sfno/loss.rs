use super::SfnoError;

/// Dimensions of a `[B][C][H][W]` tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchSpec {
    pub batch: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl BatchSpec {
    pub fn new(batch: usize, channels: usize, height: usize, width: usize) -> Result<Self, SfnoError> {
        if batch == 0 || channels == 0 || height == 0 || width == 0 {
            return Err(SfnoError::InvalidArgument(format!(
                "batch spec ({batch}, {channels}, {height}, {width}) has an empty axis"
            )));
        }
        Ok(Self {
            batch,
            channels,
            height,
            width,
        })
    }

    pub fn len(&self) -> usize {
        self.batch * self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check(&self, pred: &[f64], truth: &[f64]) -> Result<(), SfnoError> {
        if pred.len() != self.len() || truth.len() != self.len() {
            return Err(SfnoError::ShapeMismatch(format!(
                "pred {} / truth {} values, spec expects {}",
                pred.len(),
                truth.len(),
                self.len()
            )));
        }
        Ok(())
    }
}

/// Layer-wise 2-D L2 loss: the Frobenius norm of the residual of every
/// `(b, c)` image, averaged over `B·C`.
pub fn loss_l2_2d(pred: &[f64], truth: &[f64], spec: BatchSpec) -> Result<f64, SfnoError> {
    spec.check(pred, truth)?;
    let hw = spec.height * spec.width;
    let total: f64 = pred
        .chunks(hw)
        .zip(truth.chunks(hw))
        .map(|(p, t)| p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        .sum();
    Ok(total / (spec.batch * spec.channels) as f64)
}

/// Loss and its gradient with respect to `pred`. Images with zero residual
/// get a zero subgradient.
pub fn loss_l2_2d_grad(pred: &[f64], truth: &[f64], spec: BatchSpec) -> Result<(f64, Vec<f64>), SfnoError> {
    spec.check(pred, truth)?;
    let hw = spec.height * spec.width;
    let denom = (spec.batch * spec.channels) as f64;
    let mut grad = vec![0.0; pred.len()];
    let mut total = 0.0;
    for ((p, t), g) in pred.chunks(hw).zip(truth.chunks(hw)).zip(grad.chunks_mut(hw)) {
        let norm = p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        total += norm;
        if norm > 0.0 {
            for ((gi, a), b) in g.iter_mut().zip(p).zip(t) {
                *gi = (a - b) / (norm * denom);
            }
        }
    }
    Ok((total / denom, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_examples() {
        let s = BatchSpec::new(1, 1, 2, 2).unwrap();
        assert_eq!(loss_l2_2d(&[3.0, 4.0, 0.0, 0.0], &[0.0; 4], s).unwrap(), 5.0);
        assert_eq!(loss_l2_2d(&[1.0; 4], &[1.0; 4], s).unwrap(), 0.0);
        // Channel norms 5 and 7 average to 6.
        let s2 = BatchSpec::new(1, 2, 1, 2).unwrap();
        let pred = [3.0, 4.0, 7.0, 0.0];
        assert_eq!(loss_l2_2d(&pred, &[0.0; 4], s2).unwrap(), 6.0);
    }

    #[test]
    fn shape_mismatch() {
        let s = BatchSpec::new(1, 1, 2, 2).unwrap();
        assert!(loss_l2_2d(&[0.0; 3], &[0.0; 4], s).is_err());
        assert!(BatchSpec::new(0, 1, 1, 1).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let s = BatchSpec::new(2, 3, 2, 3).unwrap();
        let pred: Vec<f64> = (0..s.len()).map(|i| (i as f64 * 0.37).sin()).collect();
        let truth: Vec<f64> = (0..s.len()).map(|i| (i as f64 * 0.11).cos()).collect();
        let (l, g) = loss_l2_2d_grad(&pred, &truth, s).unwrap();
        assert_eq!(l, loss_l2_2d(&pred, &truth, s).unwrap());
        for i in 0..s.len() {
            let h = 1e-6;
            let mut p = pred.clone();
            p[i] += h;
            let up = loss_l2_2d(&p, &truth, s).unwrap();
            p[i] -= 2.0 * h;
            let dn = loss_l2_2d(&p, &truth, s).unwrap();
            assert!(((up - dn) / (2.0 * h) - g[i]).abs() < 1e-8);
        }
    }
}
