//! Floating-point tolerances shared by the library and its tests.

/// Exact algebraic identities (partition sums, row sums, law masses).
pub const IDENTITY: f64 = 1e-12;
/// Agreement between a closed form and a linear solve.
pub const LINEAR_SOLVE: f64 = 1e-10;
/// Agreement between a closed form and a truncated series.
pub const TRUNCATED_SERIES: f64 = 1e-9;
/// Remaining tail mass below which a geometric series is truncated.
pub const TAIL_TRUNCATION: f64 = 1e-12;
/// Convergence threshold (L1) of the power iteration.
pub const POWER_ITERATION: f64 = 1e-13;
/// Iteration cap of the power iteration.
pub const POWER_ITERATION_CAP: usize = 1_000_000;
/// A closed-form denominator whose magnitude falls below this is degenerate.
pub const DEGENERATE_DENOMINATOR: f64 = 1e-14;
