//! Feature-similarity and spatial-continuity losses on the response map,
//! with exact gradients.

use crate::math;
use crate::net::LabelMap;
use crate::tensor::Tensor;
use crate::{Error, Result};

/// How per-pixel loss terms are aggregated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Reduction {
    /// Cross-entropy averaged over pixels; total variation divided by
    /// `q·H·W`. Keeps α comparable across image sizes.
    #[default]
    Mean,
    /// Raw sums.
    Sum,
}

/// One iteration's loss terms.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossBreakdown {
    pub l_fs: f64,
    pub l_sc: f64,
    pub alpha: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(l_fs: f64, l_sc: f64, alpha: f64) -> Self {
        LossBreakdown {
            l_fs,
            l_sc,
            alpha,
            total: l_fs + alpha * l_sc,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.l_fs.is_finite() && self.l_sc.is_finite() && self.total.is_finite()
    }
}

/// Softmax cross-entropy of each pixel's channel vector against its label.
///
/// The response is zero-mean per channel, so it cannot be fed to a logarithm
/// directly; a per-pixel softmax across channels turns it into a
/// distribution first.
pub fn feature_similarity_loss(
    response: &Tensor,
    labels: &LabelMap,
    reduction: Reduction,
) -> Result<(f64, Tensor)> {
    let (q, h, w) = response.shape();
    if labels.height() != h || labels.width() != w {
        return Err(Error::shape(
            "feature_similarity_loss",
            format_args!("{h}×{w} labels"),
            format_args!("{}×{}", labels.height(), labels.width()),
        ));
    }
    if let Some(&bad) = labels.ids().iter().find(|&&l| l as usize >= q) {
        return Err(Error::LabelOutOfRange {
            label: bad,
            channels: q,
        });
    }
    let n = h * w;
    let mut grad = Tensor::zeros(q, h, w);
    if n == 0 || q == 0 {
        return Ok((0.0, grad));
    }

    let mut max = alloc::vec![f64::NEG_INFINITY; n];
    for c in 0..q {
        for (m, &z) in max.iter_mut().zip(response.channel(c)) {
            *m = m.max(z);
        }
    }
    let mut sum = alloc::vec![0.0; n];
    for c in 0..q {
        let e = grad.channel_mut(c);
        for ((e, &z), (s, &m)) in e
            .iter_mut()
            .zip(response.channel(c))
            .zip(sum.iter_mut().zip(&max))
        {
            *e = math::exp(z - m);
            *s += *e;
        }
    }

    let scale = match reduction {
        Reduction::Mean => 1.0 / n as f64,
        Reduction::Sum => 1.0,
    };
    let mut value = 0.0;
    for (p, &label) in labels.ids().iter().enumerate() {
        let lse = max[p] + math::ln(sum[p]);
        value += lse - response.channel(label as usize)[p];
    }
    let data = grad.data_mut();
    for c in 0..q {
        for p in 0..n {
            data[c * n + p] *= scale / sum[p];
        }
    }
    for (p, &label) in labels.ids().iter().enumerate() {
        data[label as usize * n + p] -= scale;
    }
    Ok((value * scale, grad))
}

#[inline]
fn sign(d: f64) -> f64 {
    if d > 0.0 {
        1.0
    } else if d < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Anisotropic L1 total variation over every horizontally and vertically
/// adjacent pixel pair, summed across channels. The subgradient at a tie
/// is zero.
pub fn spatial_continuity_loss(response: &Tensor, reduction: Reduction) -> (f64, Tensor) {
    let (q, h, w) = response.shape();
    let mut grad = Tensor::zeros(q, h, w);
    let mut value = 0.0;
    for c in 0..q {
        let r = response.channel(c);
        let g = grad.channel_mut(c);
        for y in 0..h {
            let row = y * w;
            for x in 0..w {
                let i = row + x;
                if x + 1 < w {
                    let d = r[i + 1] - r[i];
                    value += d.abs();
                    let s = sign(d);
                    g[i + 1] += s;
                    g[i] -= s;
                }
                if y + 1 < h {
                    let d = r[i + w] - r[i];
                    value += d.abs();
                    let s = sign(d);
                    g[i + w] += s;
                    g[i] -= s;
                }
            }
        }
    }
    let count = q * h * w;
    if reduction == Reduction::Mean && count > 0 {
        let scale = 1.0 / count as f64;
        value *= scale;
        grad.data_mut().iter_mut().for_each(|v| *v *= scale);
    }
    (value, grad)
}

/// `L = L_fs + α·L_sc` and its gradient with respect to the response.
pub fn total_loss(
    response: &Tensor,
    labels: &LabelMap,
    alpha: f64,
    reduction: Reduction,
) -> Result<(LossBreakdown, Tensor)> {
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(Error::Precondition(alloc::format!(
            "alpha must be finite and non-negative, got {alpha}"
        )));
    }
    let (l_fs, mut grad) = feature_similarity_loss(response, labels, reduction)?;
    let (l_sc, grad_sc) = spatial_continuity_loss(response, reduction);
    if alpha != 0.0 {
        grad.data_mut()
            .iter_mut()
            .zip(grad_sc.data())
            .for_each(|(g, s)| *g += alpha * s);
    }
    Ok((LossBreakdown::new(l_fs, l_sc, alpha), grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn pixel(logits: &[f64]) -> Tensor {
        Tensor::from_vec(logits.len(), 1, 1, logits.to_vec()).unwrap()
    }

    #[test]
    fn uniform_logits_give_ln2() {
        let labels = LabelMap::new(1, 1, vec![0]).unwrap();
        let (v, _) =
            feature_similarity_loss(&pixel(&[0.0, 0.0]), &labels, Reduction::Mean).unwrap();
        assert!((v - core::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn ninety_percent_probability() {
        let labels = LabelMap::new(1, 1, vec![0]).unwrap();
        let r = pixel(&[9.0f64.ln(), 0.0]);
        let (v, g) = feature_similarity_loss(&r, &labels, Reduction::Mean).unwrap();
        assert!((v - 0.105_360_515_657_826_3).abs() < 1e-12);
        assert!((g.data()[0] - (0.9 - 1.0)).abs() < 1e-12);
        assert!((g.data()[1] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn saturated_softmax_is_zero() {
        let mut r = Tensor::zeros(3, 2, 2);
        r.channel_mut(1).fill(1e6);
        let labels = LabelMap::new(2, 2, vec![1; 4]).unwrap();
        let (v, _) = feature_similarity_loss(&r, &labels, Reduction::Mean).unwrap();
        assert!(v < 1e-9);
    }

    #[test]
    fn label_out_of_range_rejected() {
        let labels = LabelMap::new(1, 1, vec![2]).unwrap();
        let err = feature_similarity_loss(&pixel(&[0.0, 0.0]), &labels, Reduction::Mean);
        assert!(matches!(err, Err(Error::LabelOutOfRange { label: 2, .. })));
    }

    #[test]
    fn total_variation_hand_example() {
        let r = Tensor::from_vec(1, 2, 2, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let (v, _) = spatial_continuity_loss(&r, Reduction::Mean);
        assert!((v - 1.5).abs() < 1e-12);
        let (v, g) = spatial_continuity_loss(&r, Reduction::Sum);
        assert_eq!(v, 6.0);
        // top-left decreases both diffs, bottom-right increases both
        assert_eq!(g.data(), &[-2.0, 0.0, 0.0, 2.0]);
    }

    #[test]
    fn total_variation_degenerate() {
        let (v, g) = spatial_continuity_loss(&Tensor::filled(3, 4, 4, 0.7), Reduction::Mean);
        assert_eq!(v, 0.0);
        assert!(g.data().iter().all(|&x| x == 0.0));
        let (v, _) = spatial_continuity_loss(&Tensor::filled(2, 1, 1, 9.0), Reduction::Mean);
        assert_eq!(v, 0.0);
    }

    #[test]
    fn combination() {
        let b = LossBreakdown::new(0.2, 0.1, 5.0);
        assert!((b.total - 0.7).abs() < 1e-15);

        let r = Tensor::from_vec(2, 2, 2, vec![0.1, -0.4, 0.9, 0.3, -0.2, 0.5, 0.0, 0.8]).unwrap();
        let labels = LabelMap::new(2, 2, vec![0, 1, 0, 1]).unwrap();
        let (fs, g_fs) = feature_similarity_loss(&r, &labels, Reduction::Mean).unwrap();
        let (sc, g_sc) = spatial_continuity_loss(&r, Reduction::Mean);

        let (b0, g0) = total_loss(&r, &labels, 0.0, Reduction::Mean).unwrap();
        assert_eq!(b0.total, fs);
        assert_eq!(g0, g_fs);

        let (b, g) = total_loss(&r, &labels, 5.0, Reduction::Mean).unwrap();
        assert_eq!(b.l_fs, fs);
        assert_eq!(b.l_sc, sc);
        for ((t, f), s) in g.data().iter().zip(g_fs.data()).zip(g_sc.data()) {
            assert!((t - (f + 5.0 * s)).abs() < 1e-12);
        }
        assert!(total_loss(&r, &labels, -1.0, Reduction::Mean).is_err());
    }
}
