//! Turnpike and homogenization diagnostics.

mod sweep;
mod turnpike;

pub use sweep::{
    epsilon_label, epsilon_sweep, riccati_gap_study, run_homogenized_case, run_turnpike_case, CaseResult,
    DeviationSource, Discrepancy, GapStudy, SteadyEnergy, SweepReport, SweepResult, TurnpikeReport, TurnpikeSetup,
};
pub use turnpike::{
    check_envelope, deviation_curve, deviation_curve_feedback, envelope_shape, fit_decay_rate, increases,
    integral_bound, integral_turnpike_check, minimum_in_middle_third, tubular_report, DecayFit, EnvelopeCheck,
    EnvelopeReport, IntegralTurnpike, TubeMember, TubeReport, NOISE_FLOOR,
};
