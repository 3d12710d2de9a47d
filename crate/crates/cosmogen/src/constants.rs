//! Physical constants used by the dimensionful uncertainty estimates.
//!
//! Everything inside the simulation is expressed in Planck units (the
//! fundamental time step is 1); these constants only enter when converting
//! fitted spread coefficients into laboratory numbers.

/// Planck length in metres.
pub const PLANCK_LENGTH_M: f64 = 1.616_255e-35;

/// Planck time in seconds.
pub const PLANCK_TIME_S: f64 = 5.391_247e-44;

/// Speed of light in metres per second.
pub const SPEED_OF_LIGHT_M_PER_S: f64 = 2.997_924_58e8;

/// Seconds per Julian year (365.25 days).
pub const SECONDS_PER_YEAR: f64 = 365.25 * 86_400.0;

/// Ten billion years, in seconds.
pub const TEN_BILLION_YEARS_S: f64 = 1e10 * SECONDS_PER_YEAR;

/// Ten billion light years, in metres.
pub const TEN_BILLION_LIGHT_YEARS_M: f64 = SPEED_OF_LIGHT_M_PER_S * TEN_BILLION_YEARS_S;

/// Default truncation-leakage threshold; ensembles rerun with a doubled
/// basis until every trajectory stays below this.
pub const LEAKAGE_THRESHOLD: f64 = 1e-8;
