//! Training objectives as plain numeric functions. Spatial expectations are
//! arithmetic means over elements.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::palette::ColorClusterStats;
use crate::raster::{dims_mismatch, GrayImage, RasterImage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub adv: f64,
    pub l1: f64,
    pub perceptual: f64,
    pub kl: f64,
    pub rec: f64,
    pub dense: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            adv: 1.0,
            l1: 10.0,
            perceptual: 10.0,
            kl: 0.01,
            rec: 100.0,
            dense: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.adv, self.l1, self.perceptual, self.kl, self.rec, self.dense];
        if all.iter().all(|w| w.is_finite() && *w >= 0.0) {
            Ok(())
        } else {
            Err(Error::invalid("loss weights must be finite and non-negative"))
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            adv: self.adv * k,
            l1: self.l1 * k,
            perceptual: self.perceptual * k,
            kl: self.kl * k,
            rec: self.rec * k,
            dense: self.dense * k,
        }
    }
}

/// Patch outputs of one discriminator scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleResponse {
    pub real: Vec<f64>,
    pub fake: Vec<f64>,
}

fn mean(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::invalid("empty response"));
    }
    Ok(v.iter().sum::<f64>() / v.len() as f64)
}

/// Least-squares discriminator loss summed over scales.
pub fn lsgan_d_loss(scales: &[ScaleResponse]) -> Result<f64> {
    if scales.is_empty() {
        return Err(Error::invalid("at least one discriminator scale is required"));
    }
    let mut total = 0.0;
    for s in scales {
        let real: Vec<f64> = s.real.iter().map(|r| (r - 1.0).powi(2)).collect();
        let fake: Vec<f64> = s.fake.iter().map(|f| f * f).collect();
        total += 0.5 * mean(&real)? + 0.5 * mean(&fake)?;
    }
    Ok(total)
}

/// Least-squares generator loss for one scale.
pub fn lsgan_g_loss_scale(fake: &[f64]) -> Result<f64> {
    mean(&fake.iter().map(|f| (f - 1.0).powi(2)).collect::<Vec<_>>())
}

/// Least-squares generator loss summed over all provided scales.
pub fn lsgan_g_loss(fake_per_scale: &[Vec<f64>]) -> Result<f64> {
    if fake_per_scale.is_empty() {
        return Err(Error::invalid("at least one discriminator scale is required"));
    }
    fake_per_scale.iter().map(|f| lsgan_g_loss_scale(f)).sum()
}

pub fn l1_loss(y: &RasterImage, y_hat: &RasterImage) -> Result<f64> {
    if y.dims() != y_hat.dims() {
        return Err(dims_mismatch(y.dims(), y_hat.dims()));
    }
    let n = y.data().len() as f64;
    Ok(y.data().iter().zip(y_hat.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / n)
}

/// One feature layer for the reference and the candidate image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureLayer {
    pub reference: Vec<f64>,
    pub candidate: Vec<f64>,
}

/// Sum over layers of the element-normalized L1 feature distance.
pub fn perceptual_loss(layers: &[FeatureLayer]) -> Result<f64> {
    let mut total = 0.0;
    for (i, l) in layers.iter().enumerate() {
        if l.reference.len() != l.candidate.len() || l.reference.is_empty() {
            return Err(Error::invalid(format!(
                "feature layer {i}: {} reference vs {} candidate elements",
                l.reference.len(),
                l.candidate.len()
            )));
        }
        let s: f64 = l.reference.iter().zip(&l.candidate).map(|(a, b)| (a - b).abs()).sum();
        total += s / l.reference.len() as f64;
    }
    Ok(total)
}

type Mat3 = [[f64; 3]; 3];

/// Lower-triangular Cholesky factor; `None` if not positive definite.
fn cholesky(a: &Mat3) -> Option<Mat3> {
    let mut l = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] - s;
                if !(d > 0.0) {
                    return None;
                }
                l[i][i] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    Some(l)
}

/// Solves `L Lᵀ x = b`.
fn cholesky_solve(l: &Mat3, b: [f64; 3]) -> [f64; 3] {
    let mut y = [0.0; 3];
    for i in 0..3 {
        y[i] = (b[i] - (0..i).map(|k| l[i][k] * y[k]).sum::<f64>()) / l[i][i];
    }
    let mut x = [0.0; 3];
    for i in (0..3).rev() {
        x[i] = (y[i] - (i + 1..3).map(|k| l[k][i] * x[k]).sum::<f64>()) / l[i][i];
    }
    x
}

fn log_det(l: &Mat3) -> f64 {
    2.0 * (0..3).map(|i| l[i][i].ln()).sum::<f64>()
}

/// KL divergence between two 3-D Gaussians, `p = N(mu_y, cov_y)` and
/// `q = N(mu_c, cov_c)`, as `KL(p || q)`.
pub fn gaussian_kl(mu_y: [f64; 3], cov_y: &Mat3, mu_c: [f64; 3], cov_c: &Mat3) -> Option<f64> {
    let ly = cholesky(cov_y)?;
    let lc = cholesky(cov_c)?;
    let mut trace = 0.0;
    for col in 0..3 {
        let x = cholesky_solve(&lc, [cov_y[0][col], cov_y[1][col], cov_y[2][col]]);
        trace += x[col];
    }
    let d = [mu_c[0] - mu_y[0], mu_c[1] - mu_y[1], mu_c[2] - mu_y[2]];
    let sd = cholesky_solve(&lc, d);
    let maha: f64 = (0..3).map(|i| d[i] * sd[i]).sum();
    Some(0.5 * (log_det(&lc) - log_det(&ly) - 3.0 + trace + maha))
}

/// Summed per-cluster Gaussian KL between reference and candidate stats,
/// paired by index.
pub fn kl_color_loss(y: &ColorClusterStats, y_hat: &ColorClusterStats) -> Result<f64> {
    if y.k() != y_hat.k() {
        return Err(Error::ClusterCountMismatch(y.k(), y_hat.k()));
    }
    let mut total = 0.0;
    for (i, (a, b)) in y.clusters.iter().zip(&y_hat.clusters).enumerate() {
        total += gaussian_kl(a.mean, &a.cov, b.mean, &b.cov).ok_or(Error::SingularCovariance(i))?;
    }
    Ok(total)
}

/// `[adv, l1, perceptual, kl]` weighted by the generator weights.
pub fn total_generator_loss(parts: [f64; 4], w: &LossWeights) -> f64 {
    w.adv * parts[0] + w.l1 * parts[1] + w.perceptual * parts[2] + w.kl * parts[3]
}

/// Mean absolute difference between `i` and `s_tilde * r`.
pub fn shading_rec_loss(i: &RasterImage, r: &RasterImage, s_tilde: &GrayImage) -> Result<f64> {
    if i.dims() != r.dims() {
        return Err(dims_mismatch(i.dims(), r.dims()));
    }
    if i.dims() != s_tilde.dims() {
        return Err(dims_mismatch(i.dims(), s_tilde.dims()));
    }
    let s = s_tilde.data();
    let total: f64 = i
        .data()
        .iter()
        .zip(r.data())
        .enumerate()
        .map(|(k, (iv, rv))| (iv - s[k / 3] * rv).abs())
        .sum();
    Ok(total / i.data().len() as f64)
}

/// Mean distance of the shading from 1.
pub fn shading_dense_loss(s_tilde: &GrayImage) -> f64 {
    s_tilde.data().iter().map(|v| (v - 1.0).abs()).sum::<f64>() / s_tilde.data().len() as f64
}

pub fn total_shading_loss(rec: f64, dense: f64, w: &LossWeights) -> f64 {
    w.rec * rec + w.dense * dense
}
