//! Secure training and prediction, plus the configuration and model documents
//! shared with the plaintext references.

mod model;
mod secure;

pub use model::{accuracy_from_margins, merge_models, NodeDoc, PartyModel, PartyTree, PlainModel, PlainTree, PARTY_MODEL_FORMAT, PLAIN_MODEL_FORMAT};
pub use secure::{predict_party, train_party, Demand, PartyInput, SecureSetup, TrainOutput};

use serde::{Deserialize, Serialize};

use crate::error::SetupError;
use crate::fss::DcfMode;
use crate::gain::gain_shift;
use crate::ring::RingConfig;

pub const MAX_DEPTH: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub trees: usize,
    pub depth: usize,
    pub buckets: usize,
    pub segments: usize,
    pub gamma: f64,
    pub eta: f64,
    pub ring: RingConfig,
    pub seed: u128,
    pub dcf: DcfMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { trees: 5, depth: 4, buckets: 8, segments: 12, gamma: 1.0, eta: 1.0, ring: RingConfig::DEFAULT, seed: 1, dcf: DcfMode::Tree }
    }
}

/// Parameters derived from a configuration and a sample count.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Budget {
    /// Truncation applied twice inside the gain.
    pub gain_shift: u32,
}

impl TrainConfig {
    /// Rejects configurations whose intermediate values could leave the
    /// range where comparisons are exact.
    pub fn validate(&self, samples: usize) -> Result<Budget, SetupError> {
        RingConfig::new(self.ring.bits, self.ring.frac_bits)?;
        if self.buckets < 2 {
            return Err(SetupError::Buckets(self.buckets));
        }
        if self.depth > MAX_DEPTH {
            return Err(SetupError::Depth(self.depth));
        }
        if self.segments == 0 {
            return Err(SetupError::Segments(self.segments));
        }
        if !(self.gamma > 0.0) || self.gamma >= self.ring.encode_limit() / 2.0 {
            return Err(SetupError::Gamma(self.gamma));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(SetupError::Eta(self.eta));
        }
        let f = self.ring.frac_bits as f64;
        let limit = self.ring.bits - 2;
        let n = samples.max(1) as f64;
        // Sums of gradients and hessians are at most N and N/4 in magnitude.
        let sums = (n + 1.0).log2();
        if sums >= self.ring.encode_limit().log2() {
            return Err(SetupError::OverflowBudget { what: "gradient sums", needed: sums + f, limit });
        }
        // Leaf comparands: |G| 2^f + 5 (H + gamma), all at scale 2^(2f).
        let leaf = (n + 5.0 * (n / 4.0 + self.gamma)).log2() + 2.0 * f;
        if leaf >= limit as f64 {
            return Err(SetupError::OverflowBudget { what: "leaf comparison", needed: leaf, limit });
        }
        // Margins stay within the sigmoid comparison range.
        let margin = (self.trees as f64 * 5.0 * self.eta + 10.0).log2() + f;
        if margin >= limit as f64 {
            return Err(SetupError::OverflowBudget { what: "margin", needed: margin, limit });
        }
        Ok(Budget { gain_shift: gain_shift(&self.ring, samples.max(1), self.gamma)? })
    }

    pub fn internal_nodes(&self) -> usize {
        (1 << self.depth) - 1
    }

    pub fn leaves(&self) -> usize {
        1 << self.depth
    }
}

/// How features and candidates are laid out across the two parties. P0's
/// features come first; candidate ids run feature-major, bucket-minor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub features: usize,
    pub p0_features: usize,
    pub buckets: usize,
}

impl Layout {
    pub fn per_feature(&self) -> usize {
        self.buckets - 1
    }

    pub fn candidates(&self) -> usize {
        self.features * self.per_feature()
    }

    /// Number of candidates owned by P0; ids below this belong to P0.
    pub fn p0_candidates(&self) -> usize {
        self.p0_features * self.per_feature()
    }

    pub fn owner_of_candidate(&self, c: usize) -> usize {
        (c >= self.p0_candidates()) as usize
    }

    pub fn split(&self, c: usize) -> (usize, usize) {
        (c / self.per_feature(), c % self.per_feature())
    }

    /// First global feature index held by `party`.
    pub fn offset(&self, party: usize) -> usize {
        if party == 0 {
            0
        } else {
            self.p0_features
        }
    }

    pub fn local_features(&self, party: usize) -> usize {
        if party == 0 {
            self.p0_features
        } else {
            self.features - self.p0_features
        }
    }
}
