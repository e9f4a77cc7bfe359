//! Strategies for covering a forecast horizon with chained predictions.
//!
//! A model predicts `d` new values per step. The strategy decides how many
//! steps are chained to reach a horizon `h` and validates that `h` and `d`
//! are compatible. Strategies are registered by name so they can be chosen
//! from configuration at runtime.

use crate::error::{DvqError, Result};

/// A rule mapping a horizon onto a number of chained prediction steps.
pub trait ForecastStrategy: Send + Sync {
    /// Stable registry name.
    fn name(&self) -> &'static str;

    /// Short human-readable summary for help output.
    fn description(&self) -> &'static str;

    /// Number of chained steps needed to emit `horizon` values with a model
    /// predicting `d` values per step. Fails when the combination is not
    /// representable under this strategy.
    fn steps(&self, horizon: usize, d: usize) -> Result<usize>;
}

fn check_common(horizon: usize, d: usize) -> Result<()> {
    if horizon == 0 {
        return Err(DvqError::InvalidInput("horizon must be >= 1".into()));
    }
    if d == 0 {
        return Err(DvqError::InvalidInput(
            "prediction spacing d must be >= 1".into(),
        ));
    }
    Ok(())
}

/// One value at a time: `h` steps of a `d = 1` model.
struct Recursive;

impl ForecastStrategy for Recursive {
    fn name(&self) -> &'static str {
        "recursive"
    }

    fn description(&self) -> &'static str {
        "chain h one-step predictions (requires d = 1)"
    }

    fn steps(&self, horizon: usize, d: usize) -> Result<usize> {
        check_common(horizon, d)?;
        if d != 1 {
            return Err(DvqError::InvalidInput(format!(
                "recursive strategy needs d = 1, got d = {d}"
            )));
        }
        Ok(horizon)
    }
}

/// The whole horizon in one shot: a single step of a `d = h` model.
struct Block;

impl ForecastStrategy for Block {
    fn name(&self) -> &'static str {
        "block"
    }

    fn description(&self) -> &'static str {
        "predict the whole horizon in a single step (requires d = h)"
    }

    fn steps(&self, horizon: usize, d: usize) -> Result<usize> {
        check_common(horizon, d)?;
        if d != horizon {
            return Err(DvqError::InvalidInput(format!(
                "block strategy needs d = h, got d = {d} with h = {horizon}"
            )));
        }
        Ok(1)
    }
}

/// Blocks of `d` values chained `h / d` times; generalizes the other two.
struct RecursiveBlock;

impl ForecastStrategy for RecursiveBlock {
    fn name(&self) -> &'static str {
        "recursive-block"
    }

    fn description(&self) -> &'static str {
        "chain h / d block predictions (requires d to divide h)"
    }

    fn steps(&self, horizon: usize, d: usize) -> Result<usize> {
        check_common(horizon, d)?;
        if !horizon.is_multiple_of(d) {
            return Err(DvqError::InvalidInput(format!(
                "recursive-block strategy needs d to divide h, got d = {d} with h = {horizon}"
            )));
        }
        Ok(horizon / d)
    }
}

static RECURSIVE: Recursive = Recursive;
static BLOCK: Block = Block;
static RECURSIVE_BLOCK: RecursiveBlock = RecursiveBlock;

/// All registered strategies, in a stable order.
pub fn all() -> [&'static dyn ForecastStrategy; 3] {
    [&RECURSIVE, &BLOCK, &RECURSIVE_BLOCK]
}

/// Registered strategy names, in registry order.
pub fn names() -> Vec<&'static str> {
    all().iter().map(|s| s.name()).collect()
}

/// Look up a strategy by name (case-insensitive; `_` and `-` are
/// interchangeable).
pub fn by_name(name: &str) -> Result<&'static dyn ForecastStrategy> {
    let key = name.trim().to_ascii_lowercase().replace('_', "-");
    for s in all() {
        if s.name() == key {
            return Ok(s);
        }
    }
    Err(DvqError::UnknownName {
        kind: "strategy",
        name: name.to_string(),
        available: names().join(", "),
    })
}

/// Pick the natural strategy name for a (horizon, d) pair that is known to
/// be compatible: recursive for d = 1, block for d = h, recursive-block
/// otherwise.
pub fn natural_name(horizon: usize, d: usize) -> &'static str {
    if d == 1 && horizon > 1 {
        "recursive"
    } else if d == horizon {
        "block"
    } else {
        "recursive-block"
    }
}
