pub mod bang;
pub mod decay;
pub mod energies;
pub mod fits;
pub mod forms;
pub mod identities;

pub use bang::{bang_limits, vtd_ratio, BangLimits, CauchyRate};
pub use decay::{decay_fits, decay_norms, decay_series, DecayNorms};
pub use energies::{energies, EnergyReport, SIGMA_STAR};
pub use fits::{decay_fit, log_slope, DecayFit};
pub use forms::{Forms, FORM_NAMES};
pub use identities::{
    energy_growth_fit, energy_norm_comparison, growth_fit, identity_metric, identity_parabolic, identity_scalar_lapse,
    lapse_estimate_check, monotonicity_report, GrowthFit, IdentityResidual, LapseEstimateCheck, MonotonicityReport,
    NormComparison, ParabolicIdentity,
};
