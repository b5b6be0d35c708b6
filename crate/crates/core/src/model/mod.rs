//! Model configuration and the closed-form spectral objects of the absorbed
//! drifted motion: ground state `h`, quasi-stationary law `nu`, regime
//! classification.

mod interval;
mod offspring;
mod params;

pub use interval::IntervalSet;
pub use offspring::{offspring_moments, Moments, OffspringLaw, PMF_PARSE_TOL, PMF_SUM_TOL};
pub use params::{classify_regime, ground_state_h, nu_measure, ModelParams, Regime, CRITICAL_TOL};
