//! Pluggable denoiser oracles.
//!
//! Two evaluators stand in for a trained network: an exact analytic score
//! model for Gaussian-mixture data (the MSE-optimal denoiser is the
//! conditional expectation, which is closed-form for a GMM), and a
//! fixed-seed token-structured layered model that exercises the token-cache
//! protocol. Evaluation cost is tracked in denoiser-call equivalents.

mod gmm;
mod token;

pub use gmm::GaussianMixture;
pub use token::{
    cache_assisted_forward, token_model_forward, token_model_forward_init, LayerCache,
    TokenCachePlan, TokenFeatureMap, TokenModel,
};

use crate::error::Result;
use crate::numerics::Vector;
use crate::schedule::NoiseSchedule;
use serde::Serialize;

/// What a denoiser's output vector means.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictionKind {
    /// The model predicts the forward-process noise ε.
    Epsilon,
    /// The model predicts the transport velocity u = dx/dt.
    Velocity,
}

/// Evaluation accounting for a single run. `full_evals` counts complete
/// forward passes, `token_evals` counts token-rows computed per layer in
/// partial passes, `skipped_steps` counts steps with no model call at all.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct EvalCounter {
    pub full_evals: u64,
    pub token_evals: u64,
    pub skipped_steps: u64,
}

impl EvalCounter {
    /// Cost in full-evaluation equivalents: partial token passes count as
    /// the fraction of token-rows they computed.
    pub fn full_equivalents(&self, tokens: usize, layers: usize) -> f64 {
        let per_full = (tokens * layers) as f64;
        if per_full == 0.0 {
            return self.full_evals as f64;
        }
        self.full_evals as f64 + self.token_evals as f64 / per_full
    }
}

/// A denoiser the samplers can call.
pub trait DenoiserOracle: Sync {
    fn dim(&self) -> usize;

    fn prediction_kind(&self) -> PredictionKind;

    /// Full forward evaluation at `(x, t)`.
    fn evaluate(&self, x: &Vector, t: f64) -> Result<Vector>;

    /// Token structure, when the oracle has one.
    fn token_model(&self) -> Option<&TokenModel> {
        None
    }
}

/// The analytic Gaussian-mixture denoiser bound to a schedule.
#[derive(Debug, Clone)]
pub struct GmmOracle {
    gmm: GaussianMixture,
    schedule: NoiseSchedule,
    kind: PredictionKind,
}

impl GmmOracle {
    pub fn epsilon_predictor(gmm: GaussianMixture, schedule: NoiseSchedule) -> Self {
        Self { gmm, schedule, kind: PredictionKind::Epsilon }
    }

    pub fn velocity_predictor(gmm: GaussianMixture, schedule: NoiseSchedule) -> Self {
        Self { gmm, schedule, kind: PredictionKind::Velocity }
    }

    pub fn gmm(&self) -> &GaussianMixture {
        &self.gmm
    }
}

impl DenoiserOracle for GmmOracle {
    fn dim(&self) -> usize {
        self.gmm.dim()
    }

    fn prediction_kind(&self) -> PredictionKind {
        self.kind
    }

    fn evaluate(&self, x: &Vector, t: f64) -> Result<Vector> {
        match self.kind {
            PredictionKind::Epsilon => self.gmm.epsilon(x, t, &self.schedule),
            PredictionKind::Velocity => self.gmm.velocity(x, t, &self.schedule),
        }
    }
}

/// The fixed-seed token model as an ε-predictor over flattened feature maps.
#[derive(Debug, Clone)]
pub struct TokenOracle {
    model: TokenModel,
}

impl TokenOracle {
    pub fn new(model: TokenModel) -> Self {
        Self { model }
    }
}

impl DenoiserOracle for TokenOracle {
    fn dim(&self) -> usize {
        self.model.tokens() * self.model.channels()
    }

    fn prediction_kind(&self) -> PredictionKind {
        PredictionKind::Epsilon
    }

    fn evaluate(&self, x: &Vector, t: f64) -> Result<Vector> {
        let map = TokenFeatureMap::from_vector(x, self.model.tokens(), self.model.channels())?;
        let mut shadow = 0u64;
        let out = self.model.forward_full(&map, t, &mut shadow);
        Ok(out.to_vector())
    }

    fn token_model(&self) -> Option<&TokenModel> {
        Some(&self.model)
    }
}
