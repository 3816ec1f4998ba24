//! Periodic-grid spectral calculus and the inequality experiments.
//!
//! Fields live on the torus `[0,1)ⁿ`, sampled on `Nⁿ` points. Test fields
//! are supported in the central half of the cell so that the torus stands in
//! for `ℝⁿ`. Every ratio is a plain Riemann sum on both sides; only growth or
//! boundedness of ratios is meaningful, never their values.

mod experiment;
mod fields;
mod grid;
mod ratios;
mod spectral;

pub use experiment::{
    refinement_deltas, run_experiment, write_csv, ExperimentConfig, ExperimentKind, ExperimentRow,
    Family, CSV_HEADER,
};
pub use fields::{
    band_limited, blob, boundary_fraction, bump, bump_profile, bump_suite, check_resolvable,
    cutoff, divergence_free, mollifier, phi_suite, profile_mass, TrigPolynomial,
};
pub use grid::{GridField, Spectrum, TorusGrid, REALNESS_TOL};
pub use ratios::{
    blowup_family, blowup_field, circulation_numerator, circulation_ratio, divergence_residual,
    divfree_witness_growth, duality_ratio, fractional_ratio, gagliardo_seminorm, hardy_centre,
    hardy_ratio, kernel_residual, sobolev_ratio, tangent_measure, target_ratio, uniform_ratio,
    BlowupPoint, Polyline, Target, CURVE_DIVERGENCE_TOL, KERNEL_TOL, MAX_FRACTIONAL_GRID,
};
pub use spectral::{
    apply_componentwise, apply_multiplier, apply_operator, derivative_spectrum, derivative_tensor,
    lp_norm, operator_spectrum, p2_sharp_check, reconstruction_check, two_pi_i_pow, P2Check,
    P2_BAND,
};

/// `max / min` of a sequence of positive values.
pub fn band_factor(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::MIN, f64::max);
    let min = values.iter().cloned().fold(f64::MAX, f64::min);
    max / min
}

pub fn is_strictly_increasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] > w[0])
}
