//! Robust data pruning by geometric-median moment matching.
//!
//! Given a possibly grossly corrupted point cloud, GM Matching picks a
//! `k`-subset whose mean tracks a geometric median of the full set rather
//! than its empirical mean. The crate bundles the Weiszfeld solver, the
//! selector and its baselines, corruption generators, quality metrics and an
//! experiment harness.
//!
//! ```
//! use gmpr_core::{corruption::CorruptionSpec, selectors, Result};
//!
//! # fn main() -> Result<()> {
//! let spec = CorruptionSpec::preset("paper-2d-mixture", 0.2)?;
//! let data = gmpr_core::corruption::make_gmm_dataset(500, &spec, 7)?;
//! let cfg = selectors::SelectionConfig::new(50);
//! let picked = selectors::select_gm_matching(&data.embeddings, &cfg)?;
//! assert_eq!(picked.indices.len(), 50);
//! # Ok(())
//! # }
//! ```

pub mod corruption;
pub mod data;
pub mod error;
pub mod feature_map;
pub mod harness;
pub mod io;
pub mod metrics;
pub mod robust_mean;
pub mod selectors;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use data::{Dataset, EmbeddingMatrix};
pub use error::{Error, Result};
pub use feature_map::{apply_feature_map, poly_feature_dim, FeatureMapSpec};
pub use robust_mean::{empirical_mean, subsampled_gm, weiszfeld_gm, GmResult, GmSolverConfig};
pub use selectors::{SelectionConfig, SelectionResult};

/// Portable seeded generator used everywhere randomness is needed.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
