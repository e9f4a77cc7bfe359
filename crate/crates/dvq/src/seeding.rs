//! Deterministic derivation of per-task RNG seeds from a master seed.
//!
//! Every stochastic component (codebook init, Monte-Carlo trajectory, gap
//! placement, restart, ...) gets its own seed derived from the run's master
//! seed and a stable index path. Results therefore do not depend on thread
//! count or scheduling: a trajectory's seed is a pure function of its index.

/// One round of the splitmix64 mixer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `master` and a path of indices.
///
/// The path identifies the consumer, e.g. `[REP, 3, 17]` for the 18th
/// configuration inside the 4th cross-validation repetition. Each path
/// element is folded in with an extra mixing round so that `[1, 0]` and
/// `[0, 1]` land far apart.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    let mut state = splitmix64(master);
    for &part in path {
        state = splitmix64(state ^ splitmix64(part.wrapping_add(0x517c_c1b7_2722_0a95)));
    }
    state
}

/// Stable top-level stream tags, so independent consumers of the same master
/// seed never collide.
pub mod stream {
    /// Regressor codebook training.
    pub const REGRESSOR_SOM: u64 = 1;
    /// Deformation codebook training.
    pub const DEFORMATION_SOM: u64 = 2;
    /// Monte-Carlo trajectories.
    pub const TRAJECTORY: u64 = 3;
    /// Random gap placement.
    pub const GAPS: u64 = 4;
    /// Cross-validation configuration evaluation.
    pub const CROSSVAL: u64 = 5;
    /// Regressor subsampling for correlation analysis.
    pub const SUBSAMPLE: u64 = 6;
    /// Model restarts.
    pub const RESTART: u64 = 7;
    /// Forward pass of a gap fill.
    pub const FILL_FORWARD: u64 = 8;
    /// Backward pass of a gap fill.
    pub const FILL_BACKWARD: u64 = 9;
}
