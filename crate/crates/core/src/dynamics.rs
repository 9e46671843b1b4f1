//! Object state, constant-velocity prediction and survival probability.
//!
//! The kinematic state is `ζ = [u, u̇, v, v̇, h, ḣ, β, β̇]`: box centroid,
//! height and aspect ratio `β = h / w`, each followed by its per-frame rate.

use std::fmt;

use nalgebra::{Cholesky, SMatrix, SVector};

use crate::geometry::BBox;
use crate::{Error, Result};

pub type StateVector = SVector<f64, 8>;
pub type StateMatrix = SMatrix<f64, 8, 8>;

/// Index of the height component of the state.
pub const H: usize = 4;
/// Index of the height rate.
pub const H_RATE: usize = 5;
/// Index of the aspect ratio.
pub const BETA: usize = 6;

/// The label `(birth_time, index)` of a track.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TrackLabel {
    pub birth_time: u32,
    pub index: u32,
}

impl TrackLabel {
    pub fn new(birth_time: u32, index: u32) -> Self {
        TrackLabel { birth_time, index }
    }
}

impl fmt::Display for TrackLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.birth_time, self.index)
    }
}

/// A Gaussian density over the 8-D kinematic state.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDensity {
    pub mean: StateVector,
    pub covariance: StateMatrix,
}

impl GaussianDensity {
    /// Creates a density after checking symmetry and positive-definiteness.
    pub fn new(mean: StateVector, covariance: StateMatrix) -> Result<Self> {
        let g = GaussianDensity { mean, covariance };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mean.iter().all(|v| v.is_finite()) {
            return Err(Error::Model("non-finite state mean".into()));
        }
        let c = &self.covariance;
        let scale = c.amax().max(f64::MIN_POSITIVE);
        if (c - c.transpose()).amax() > 1e-9 * scale {
            return Err(Error::Model("covariance is not symmetric".into()));
        }
        if Cholesky::new(*c).is_none() {
            return Err(Error::Model("covariance is not positive definite".into()));
        }
        Ok(())
    }

    /// The box drawn from the observable part of the mean.
    pub fn mean_box(&self) -> BBox {
        state_box(&self.mean)
    }
}

/// The box `[u, v, h, β]` encoded by a state vector.
pub fn state_box(state: &StateVector) -> BBox {
    BBox::from_center(state[0], state[2], state[H], state[BETA])
}

/// Constant-velocity motion with white-noise acceleration.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionModel {
    /// Acceleration variances `ε_Q` for `(u, v, h, β)`.
    pub noise: [f64; 4],
    /// Sampling period `T` in frames.
    pub period: f64,
}

impl Default for MotionModel {
    fn default() -> Self {
        MotionModel {
            noise: [9.0, 9.0, 9.0, 1e-4],
            period: 1.0,
        }
    }
}

impl MotionModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.period > 0.0) || self.noise.iter().any(|&e| !(e > 0.0)) {
            return Err(Error::Config(format!("invalid motion model {self:?}")));
        }
        Ok(())
    }

    /// `F = I₄ ⊗ [[1, T], [0, 1]]`.
    pub fn transition(&self) -> StateMatrix {
        let mut f = StateMatrix::identity();
        for k in 0..4 {
            f[(2 * k, 2 * k + 1)] = self.period;
        }
        f
    }

    /// `Q = diag(ε_Q) ⊗ [[T⁴/4, T³/2], [T³/2, T²]]`.
    pub fn process_noise(&self) -> StateMatrix {
        let t = self.period;
        let block = [[t.powi(4) / 4.0, t.powi(3) / 2.0], [t.powi(3) / 2.0, t * t]];
        let mut q = StateMatrix::zeros();
        for (k, eps) in self.noise.iter().enumerate() {
            for r in 0..2 {
                for c in 0..2 {
                    q[(2 * k + r, 2 * k + c)] = eps * block[r][c];
                }
            }
        }
        q
    }
}

/// Predicts a density one period ahead.
pub fn predict(density: &GaussianDensity, model: &MotionModel) -> Result<GaussianDensity> {
    if Cholesky::new(density.covariance).is_none() {
        return Err(Error::Model("cannot predict a non positive-definite covariance".into()));
    }
    Ok(predict_unchecked(density, &model.transition(), &model.process_noise()))
}

pub(crate) fn predict_unchecked(density: &GaussianDensity, f: &StateMatrix, q: &StateMatrix) -> GaussianDensity {
    let mean = f * density.mean;
    let mut covariance = f * density.covariance * f.transpose() + q;
    symmetrize(&mut covariance);
    GaussianDensity { mean, covariance }
}

pub(crate) fn symmetrize(m: &mut StateMatrix) {
    *m = (*m + m.transpose()) * 0.5;
}

/// Parameters of the lifespan- and shrinkage-dependent survival probability.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalConfig {
    /// `P̂_S`
    pub base_survival: f64,
    /// `τ_L`
    pub lifespan_scale: f64,
    /// `τ_S`
    pub shrink_scale: f64,
    /// `k_S`
    pub shrink_offset: f64,
    /// `β_min`
    pub min_aspect: f64,
}

impl Default for SurvivalConfig {
    fn default() -> Self {
        SurvivalConfig {
            base_survival: 0.99,
            lifespan_scale: 2.0,
            shrink_scale: 1.0,
            shrink_offset: 1.0,
            min_aspect: 0.1,
        }
    }
}

impl SurvivalConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.base_survival > 0.0
            && self.base_survival <= 1.0
            && self.lifespan_scale > 0.0
            && self.shrink_scale > 0.0
            && self.shrink_offset.is_finite()
            && self.min_aspect > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid survival config {self:?}")))
        }
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Survival probability of a track with point estimate `estimate`.
///
/// The lifespan term favours established tracks. A shrinking box (negative
/// height rate) is scaled by a logistic in `k_S − area / avg_area`, where the
/// area is `h² / β̂` since `β` is height over width.
pub fn survival_probability(
    estimate: &StateVector,
    label: TrackLabel,
    now: u32,
    avg_area: f64,
    cfg: &SurvivalConfig,
) -> f64 {
    let b = if estimate[H_RATE] < 0.0 {
        let beta = estimate[BETA].max(cfg.min_aspect);
        let h = estimate[H];
        cfg.base_survival * logistic(cfg.shrink_scale * (cfg.shrink_offset - h * h / beta / avg_area))
    } else {
        cfg.base_survival
    };
    let lifespan = now.saturating_sub(label.birth_time) as f64;
    b * logistic(cfg.lifespan_scale * lifespan)
}

/// Point estimate with the positivity constraints `h ≥ 1` and `β ≥ β_min` applied.
pub fn clamp_estimate(state: &StateVector, min_aspect: f64) -> StateVector {
    let mut s = *state;
    s[H] = s[H].max(1.0);
    s[BETA] = s[BETA].max(min_aspect);
    s
}
