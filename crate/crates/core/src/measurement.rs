//! Single-object measurement model: Kalman update, appearance likelihood,
//! gating and feature maintenance.

use std::sync::Arc;

use nalgebra::{Cholesky, SMatrix, Vector4, U4};

use crate::dynamics::{symmetrize, GaussianDensity, StateMatrix, StateVector};
use crate::geometry::BBox;
use crate::{Error, Result};

pub type Observation = Vector4<f64>;
type Gain = SMatrix<f64, 8, 4>;

/// A unit-norm appearance embedding. Cloning is cheap.
#[derive(Debug, Clone, PartialEq)]
pub struct Feature(Arc<[f64]>);

impl Feature {
    /// L2-normalizes `values`; fails on zero or non-finite vectors.
    pub fn normalized(values: Vec<f64>) -> Result<Self> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Model("feature vector cannot be normalized".into()));
        }
        Ok(Feature(values.into_iter().map(|v| v / norm).collect()))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Cosine similarity of two unit vectors.
    pub fn cosine(&self, other: &Feature) -> f64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a * b).sum()
    }
}

/// A detection: box `γ = [u, v, h, β]`, appearance `ϱ` and detector score.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub observation: Observation,
    pub feature: Feature,
    pub score: f64,
}

impl Measurement {
    pub fn from_box(b: &BBox, feature: Feature, score: f64) -> Self {
        Measurement {
            observation: b.to_observation(),
            feature,
            score,
        }
    }

    pub fn bbox(&self) -> BBox {
        BBox::from_observation(&self.observation)
    }
}

/// Track appearance: a feature and the probabilities of "unchanged" (`σ = 0`)
/// and "changed" (`σ = 1`) appearance.
#[derive(Debug, Clone, PartialEq)]
pub struct AppearanceState {
    pub feature: Feature,
    pub mode_probs: [f64; 2],
}

impl AppearanceState {
    pub fn new(feature: Feature, mode_probs: [f64; 2]) -> Self {
        AppearanceState { feature, mode_probs }
    }

    /// Mixture likelihood `p(σ=0)·g(ϱ|σ=0) + p(σ=1)·g(ϱ|σ=1)`.
    pub fn likelihood(&self, feature: &Feature, power: f64) -> f64 {
        let (same, changed) = appearance_likelihood(feature, self, power);
        self.mode_probs[0] * same + self.mode_probs[1] * changed
    }

    /// Posterior appearance-mode probabilities after observing `feature`.
    pub fn mode_posterior(&self, feature: &Feature, power: f64) -> [f64; 2] {
        let (same, changed) = appearance_likelihood(feature, self, power);
        let a = self.mode_probs[0] * same;
        let b = self.mode_probs[1] * changed;
        let total = a + b;
        if total > 0.0 {
            [a / total, b / total]
        } else {
            self.mode_probs
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementConfig {
    /// Observation variances `ε_R` for `(u, v, h, β)`.
    pub obs_noise: [f64; 4],
    /// Appearance exponent `φ`.
    pub appearance_power: f64,
    /// Gate on the squared Mahalanobis distance of the box.
    pub kinematic_gate: f64,
    /// Gate on the cosine dissimilarity `1 − s`.
    pub appearance_gate: f64,
    /// Clutter intensity `κ`.
    pub clutter_intensity: f64,
    /// Prior probability of unchanged appearance after prediction.
    pub mode_stay: f64,
}

impl Default for MeasurementConfig {
    fn default() -> Self {
        MeasurementConfig {
            obs_noise: [50.0, 50.0, 50.0, 1e-3],
            appearance_power: 15.0,
            kinematic_gate: 13.28,
            appearance_gate: 0.4,
            clutter_intensity: 1e-8,
            mode_stay: 0.9,
        }
    }
}

impl MeasurementConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.obs_noise.iter().all(|&r| r > 0.0)
            && self.appearance_power > 0.0
            && self.kinematic_gate > 0.0
            && self.appearance_gate > 0.0
            && self.clutter_intensity > 0.0
            && (0.0..=1.0).contains(&self.mode_stay);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid measurement config {self:?}")))
        }
    }

    pub fn predicted_modes(&self) -> [f64; 2] {
        [self.mode_stay, 1.0 - self.mode_stay]
    }
}

/// Innovation statistics of one predicted density, shared by all measurements.
#[derive(Debug, Clone)]
pub struct Innovation {
    prior_mean: StateVector,
    predicted: Observation,
    s_chol: Cholesky<f64, U4>,
    log_norm: f64,
    gain: Gain,
    posterior_cov: StateMatrix,
}

impl Innovation {
    pub fn new(prior: &GaussianDensity, obs_noise: &[f64; 4]) -> Result<Self> {
        let p = &prior.covariance;
        // H selects the even state components, so H P Hᵀ and P Hᵀ are sub-blocks of P.
        let mut pht = Gain::zeros();
        for c in 0..4 {
            pht.set_column(c, &p.column(2 * c));
        }
        let mut s = SMatrix::<f64, 4, 4>::zeros();
        for r in 0..4 {
            for c in 0..4 {
                s[(r, c)] = pht[(2 * r, c)];
            }
            s[(r, r)] += obs_noise[r];
        }
        let s_chol = Cholesky::new(s)
            .ok_or_else(|| Error::Numerical("singular innovation covariance".into()))?;
        let log_det: f64 = s_chol.l_dirty().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        let gain = s_chol.solve(&pht.transpose()).transpose();
        let mut kh = StateMatrix::zeros();
        for c in 0..4 {
            kh.set_column(2 * c, &gain.column(c));
        }
        let mut posterior_cov = (StateMatrix::identity() - kh) * p;
        symmetrize(&mut posterior_cov);
        let predicted = Observation::new(prior.mean[0], prior.mean[2], prior.mean[4], prior.mean[6]);
        Ok(Innovation {
            prior_mean: prior.mean,
            predicted,
            s_chol,
            log_norm: -2.0 * (2.0 * std::f64::consts::PI).ln() - 0.5 * log_det,
            gain,
            posterior_cov,
        })
    }

    /// Squared Mahalanobis distance of `obs` under the innovation distribution.
    pub fn mahalanobis_sq(&self, obs: &Observation) -> f64 {
        let d = obs - self.predicted;
        d.dot(&self.s_chol.solve(&d))
    }

    /// `ln q(γ)`.
    pub fn log_evidence(&self, obs: &Observation) -> f64 {
        self.log_norm - 0.5 * self.mahalanobis_sq(obs)
    }

    pub fn posterior_mean(&self, obs: &Observation) -> StateVector {
        self.prior_mean + self.gain * (obs - self.predicted)
    }

    pub fn posterior_covariance(&self) -> &StateMatrix {
        &self.posterior_cov
    }

    pub fn posterior(&self, obs: &Observation) -> GaussianDensity {
        GaussianDensity {
            mean: self.posterior_mean(obs),
            covariance: self.posterior_cov,
        }
    }

    /// Disjunctive gate: close in box space or similar in appearance.
    pub fn admits(&self, app: &AppearanceState, z: &Measurement, cfg: &MeasurementConfig) -> bool {
        self.mahalanobis_sq(&z.observation) < cfg.kinematic_gate
            || 1.0 - clamped_similarity(&z.feature, &app.feature) < cfg.appearance_gate
    }
}

/// Kalman update of `prior` with box `obs`; returns the posterior and `q(γ)`.
pub fn kalman_update(prior: &GaussianDensity, obs: &Observation, obs_noise: &[f64; 4]) -> Result<(GaussianDensity, f64)> {
    let inn = Innovation::new(prior, obs_noise)?;
    Ok((inn.posterior(obs), inn.log_evidence(obs).exp()))
}

fn clamped_similarity(a: &Feature, b: &Feature) -> f64 {
    a.cosine(b).clamp(0.0, 1.0)
}

/// `(s^φ, (1 − s)^φ)` with `s` the cosine similarity clamped to `[0, 1]`.
pub fn appearance_likelihood(feature: &Feature, app: &AppearanceState, power: f64) -> (f64, f64) {
    let s = clamped_similarity(feature, &app.feature);
    (s.powf(power), (1.0 - s).powf(power))
}

/// Exponential moving average of the track feature on detection.
pub fn update_feature(app: &AppearanceState, feature: &Feature, detected: bool) -> AppearanceState {
    if !detected {
        return app.clone();
    }
    let blended: Vec<f64> = app
        .feature
        .as_slice()
        .iter()
        .zip(feature.as_slice())
        .map(|(a, r)| 0.9 * a + 0.1 * r)
        .collect();
    // Falls back to the measurement when the two are exactly opposite.
    let feature = Feature::normalized(blended).unwrap_or_else(|_| feature.clone());
    AppearanceState {
        feature,
        mode_probs: app.mode_probs,
    }
}

/// Whether measurement `z` may be associated with a track.
pub fn gate(prior: &GaussianDensity, app: &AppearanceState, z: &Measurement, cfg: &MeasurementConfig) -> Result<bool> {
    Ok(Innovation::new(prior, &cfg.obs_noise)?.admits(app, z, cfg))
}
