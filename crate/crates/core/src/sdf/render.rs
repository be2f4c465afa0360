//! LiDAR depth from an SDF by volume rendering.
//!
//! Samples along a ray map to opacities through the sigmoid front-face
//! rule `alpha = max((phi(s_i) - phi(s_{i+1})) / phi(s_i), 0)` with
//! `phi(x) = 1 / (1 + exp(-s*x))`; the rendered depth is the
//! transmittance-weighted sum `sum_i T_i alpha_i t_i`.

use crate::error::{Error, Result};
use crate::ingest::LidarRay;
use crate::rng::item_rng;
use crate::sdf::SdfGrid;
use rand::Rng;

/// Sampling and opacity-mapping configuration for depth rendering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderConfig {
    /// Samples per ray (k).
    pub num_samples: usize,
    pub t_near: f64,
    pub t_far: f64,
    /// Sigmoid sharpness s; larger concentrates opacity at the crossing.
    pub sigmoid_scale: f64,
    /// Jitter sample depths uniformly within their strata. Seeded per ray,
    /// so results do not depend on evaluation order.
    pub stratified: bool,
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_samples < 2 {
            return Err(Error::invalid("render needs at least 2 samples"));
        }
        if !(self.t_near >= 0.0 && self.t_near < self.t_far) {
            return Err(Error::invalid(format!(
                "need 0 <= t_near < t_far, got [{}, {}]",
                self.t_near, self.t_far
            )));
        }
        if !(self.sigmoid_scale > 0.0) {
            return Err(Error::invalid("sigmoid scale must be positive"));
        }
        Ok(())
    }

    pub fn with_scale(&self, s: f64) -> RenderConfig {
        RenderConfig {
            sigmoid_scale: s,
            ..*self
        }
    }
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            num_samples: 128,
            t_near: 0.3,
            t_far: 100.0,
            sigmoid_scale: 20.0,
            stratified: false,
        }
    }
}

/// Everything rendered along one ray.
#[derive(Debug, Clone)]
pub struct RaySampleSet {
    /// Sample depths t_i (k entries, ascending, within [t_near, t_far]).
    pub depths: Vec<f64>,
    /// Interpolated SDF at each sample.
    pub sdf_values: Vec<f64>,
    /// Per-sample opacity.
    pub alphas: Vec<f64>,
    /// Transmittance before each sample: T_1 = 1, T_{i+1} = T_i (1 - a_i).
    pub transmittances: Vec<f64>,
    pub rendered_depth: f64,
    /// 1 - T_{k+1}; near zero means the ray hit nothing.
    pub opacity: f64,
}

/// log(1 + exp(x)) without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// log of the scaled sigmoid phi_s(x).
#[inline]
fn log_phi(x: f64, s: f64) -> f64 {
    -softplus(-s * x)
}

/// Numerically stable sigmoid.
#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Front-face opacity from two consecutive SDF samples.
///
/// Always lands in [0, 1]: a positive-to-negative (front-facing) crossing
/// approaches 1 as `s` grows, while non-decreasing SDF pairs clamp to 0.
pub fn alpha_from_sdf(s_i: f64, s_next: f64, s: f64) -> f64 {
    // 1 - phi(s_next)/phi(s_i), evaluated through log space so that large
    // negative s*x (where phi underflows to 0) stays finite.
    let ratio = (log_phi(s_next, s) - log_phi(s_i, s)).exp();
    (1.0 - ratio).max(0.0)
}

/// Partial derivatives of `alpha_from_sdf` used by the fit. Returns
/// (alpha, d/ds_i, d/ds_next, d/ds). The max(., 0) clamp gates gradients:
/// at the kink (alpha exactly 0 with equal inputs) the open side is used
/// so constant fields still receive a learning signal.
pub(crate) fn alpha_with_grads(s_i: f64, s_next: f64, s: f64) -> (f64, f64, f64, f64) {
    let ratio = (log_phi(s_next, s) - log_phi(s_i, s)).exp();
    let u = 1.0 - ratio;
    if u < 0.0 {
        return (0.0, 0.0, 0.0, 0.0);
    }
    // d(log phi)/dx = s * (1 - phi(x)); d(log phi)/ds = x * (1 - phi(x)).
    let one_minus_phi_i = sigmoid(-s * s_i);
    let one_minus_phi_n = sigmoid(-s * s_next);
    let d_si = ratio * s * one_minus_phi_i;
    let d_sn = -ratio * s * one_minus_phi_n;
    let d_scale = -ratio * (s_next * one_minus_phi_n - s_i * one_minus_phi_i);
    (u, d_si, d_sn, d_scale)
}

/// Sample depths for one ray: k strata over [t_near, t_far] plus one
/// support sample past the last stratum for the final alpha. Midpoints
/// when not stratified, otherwise jittered from the per-ray stream.
pub(crate) fn sample_depths(cfg: &RenderConfig, ray_seed: u64) -> Vec<f64> {
    let k = cfg.num_samples;
    let dt = (cfg.t_far - cfg.t_near) / k as f64;
    let mut depths = Vec::with_capacity(k + 1);
    if cfg.stratified {
        let mut rng = item_rng(ray_seed, 0);
        for i in 0..=k {
            let jitter: f64 = rng.random_range(0.0..1.0);
            depths.push(cfg.t_near + (i as f64 + jitter) * dt);
        }
    } else {
        for i in 0..=k {
            depths.push(cfg.t_near + (i as f64 + 0.5) * dt);
        }
    }
    depths
}

/// Volume-render one ray against the grid.
///
/// `ray_seed` feeds the per-ray jitter stream and is ignored for
/// non-stratified sampling.
pub fn render_depth(grid: &SdfGrid, ray: &LidarRay, cfg: &RenderConfig, ray_seed: u64) -> RaySampleSet {
    debug_assert!(ray.direction.is_unit());
    let k = cfg.num_samples;
    let depths = sample_depths(cfg, ray_seed);
    let sdf: Vec<f64> = depths
        .iter()
        .map(|&t| grid.sample(ray.origin + t * ray.direction))
        .collect();

    let mut alphas = Vec::with_capacity(k);
    let mut transmittances = Vec::with_capacity(k);
    let mut t_acc = 1.0;
    let mut rendered = 0.0;
    for i in 0..k {
        let alpha = alpha_from_sdf(sdf[i], sdf[i + 1], cfg.sigmoid_scale);
        transmittances.push(t_acc);
        rendered += t_acc * alpha * depths[i];
        alphas.push(alpha);
        t_acc *= 1.0 - alpha;
    }

    RaySampleSet {
        depths: depths[..k].to_vec(),
        sdf_values: sdf[..k].to_vec(),
        alphas,
        transmittances,
        rendered_depth: rendered,
        opacity: 1.0 - t_acc,
    }
}

/// Weighted logarithm L1 depth loss: `weight * ln(|rendered - measured| + 1)`.
pub fn geometry_loss(rendered: f64, measured: f64, weight: f64) -> Result<f64> {
    if !(rendered.is_finite() && measured.is_finite() && weight.is_finite()) {
        return Err(Error::invalid("geometry_loss inputs must be finite"));
    }
    if !(weight > 0.0) {
        return Err(Error::invalid("geometry_loss weight must be positive"));
    }
    Ok(weight * ((rendered - measured).abs() + 1.0).ln())
}
