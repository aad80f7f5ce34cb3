//! Proximal off-policy evaluation from observable trajectories.

mod baseline;
mod bundle;
mod estimator;
mod identity;
mod law;
mod matrix;

pub use baseline::{bootstrap_se, importance_sampling, mean_se, BootstrapSummary, PointEstimate};
pub use bundle::{Axis, ConditionalMatrix, HiddenMatrices, MatrixBundle};
pub use estimator::{
    ope_value, ope_value_with_threshold, estimated_reward_dist, weight_matrix, InverseMode, OpeEstimate,
    RewardEstimate, RewardIndex, Variant, WeightMatrix, DEFAULT_REL_THRESHOLD,
};
pub use identity::{
    identity_check, identity_check_with, rank_failure_detail, rank_precondition, IdentityReport,
    IdentityRow, IDENTITY_TOL,
};
pub use law::{ObservableLaw, Provenance};
pub use matrix::{pinv, RankDiagnostics, SparseMatrix, SparseVec};

use crate::error::Result;
use crate::spp::Dataset;

/// Empirical bundle from a logged dataset.
pub fn estimate_matrices(data: &Dataset) -> Result<MatrixBundle> {
    MatrixBundle::from_law(&ObservableLaw::from_dataset(data)?)
}
