//! Single-case turnpike runs, ε-sweeps against the homogenized problem and
//! Riccati gap studies.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::turnpike::{
    check_envelope, deviation_curve, deviation_curve_feedback, fit_decay_rate, increases, integral_turnpike_check,
    minimum_in_middle_third, DecayFit, EnvelopeReport, IntegralTurnpike,
};
use crate::error::{Error, Result};
use crate::grid_coeff::{
    homogenized_constant, sample_coefficients, CoefficientRecipe, ControlWindow, Grid, Profile, SamplingOptions,
};
use crate::ocp::{control_norm, solve_evolutive_ocp, solve_steady_ocp, OcpConfig, OptimalSolution, SteadySolution};
use crate::operators::{assemble, l2_norm, weighted_norm};
use crate::pde::{TimeGrid, Trajectory};
use crate::riccati::{
    riccati_gap, solve_are_discrete_with, solve_dre_with, solve_h_equation, synthesize_feedback, FeedbackSolution,
    RiccatiOptions,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviationSource {
    /// Deviations integrated directly by the Riccati feedback law.
    Feedback,
    /// Differences of the direct (CG) solution and the steady pair.
    Direct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnpikeSetup {
    pub n_cells: usize,
    pub horizon: f64,
    pub n_steps: usize,
    pub a: CoefficientRecipe,
    pub b: CoefficientRecipe,
    pub p: CoefficientRecipe,
    pub window: (f64, f64),
    pub y0: Profile,
    pub y_d: Profile,
    pub c: f64,
    pub mu: f64,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    /// Fit window as fractions of the horizon.
    pub fit_window: (f64, f64),
    pub deviation: DeviationSource,
    pub riccati_max_unknowns: usize,
    pub sampling: SamplingOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyEnergy {
    /// `‖ȳ‖² + ‖f̄‖²`
    pub lhs: f64,
    /// `‖y_d‖²`
    pub rhs: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Discrepancy {
    /// Relative `L²(0,T)` distance of the feedback state from the direct one.
    pub state: f64,
    pub control: f64,
    /// `(J_feedback − J_direct) / J_direct`
    pub cost_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnpikeReport {
    pub label: String,
    pub epsilon: Option<f64>,
    pub times: Vec<f64>,
    pub d: Vec<f64>,
    pub d_source: DeviationSource,
    /// Deviation of the direct solution; bottoms out at the optimizer tolerance.
    pub d_direct: Vec<f64>,
    pub norms: (f64, f64),
    pub envelope: EnvelopeReport,
    pub fit: Option<DecayFit>,
    pub fit_error: Option<String>,
    pub integral: IntegralTurnpike,
    pub steady_energy: SteadyEnergy,
    pub min_in_middle_third: bool,
    pub cost: f64,
    pub steady_cost: f64,
    pub cg_iterations: usize,
    pub grad_norm: f64,
    pub feedback: Option<Discrepancy>,
}

#[derive(Debug, Clone)]
pub struct CaseResult {
    pub solution: OptimalSolution,
    pub steady: SteadySolution,
    pub feedback: Option<FeedbackSolution>,
    pub report: TurnpikeReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub epsilons: Vec<f64>,
    pub a_h: f64,
    pub cases: Vec<TurnpikeReport>,
    pub homogenized: TurnpikeReport,
    /// `‖f^ε − f^h‖_{L²(0,T;Ω)}`
    pub control_gap: Vec<f64>,
    /// `max_k ‖y^ε(t_k) − y^h(t_k)‖`
    pub state_gap: Vec<f64>,
    /// `‖f̄^ε − f̄^h‖`
    pub steady_gap: Vec<f64>,
    /// At most one increase in each gap sequence as ε decreases.
    pub gaps_monotone: bool,
    pub envelope_all_ok: bool,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub report: SweepReport,
    pub cases: Vec<CaseResult>,
    pub homogenized: CaseResult,
}

impl TurnpikeSetup {
    pub fn time_grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.horizon, self.n_steps)
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.n_cells)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        self.time_grid()?;
        for r in [&self.a, &self.b, &self.p] {
            r.validate()?;
        }
        let (lo, hi) = self.fit_window;
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(Error::InvalidArgument(format!("fit window fractions ({lo}, {hi}) must satisfy 0 <= lo < hi <= 1")));
        }
        if !(self.c > 0.0 && self.mu > 0.0) {
            return Err(Error::InvalidArgument("turnpike constants C and mu must be positive".into()));
        }
        Ok(())
    }

    /// Optimal control problem with coefficients `(a, b, p)` and period `epsilon`.
    pub fn ocp_config(
        &self,
        a: &CoefficientRecipe,
        b: &CoefficientRecipe,
        p: &CoefficientRecipe,
        epsilon: Option<f64>,
    ) -> Result<OcpConfig> {
        let grid = self.grid()?;
        let coeffs = sample_coefficients(a, b, p, &grid, epsilon, &self.sampling)?;
        let window = ControlWindow::new(&grid, self.window.0, self.window.1)?;
        let y0 = self.y0.sample(&grid);
        let y_d = self.y_d.sample(&grid);
        OcpConfig::new(grid, self.time_grid()?, coeffs, window, y0, y_d)?.with_cg(self.cg_tol, self.cg_max_iter)
    }

    /// Constant-coefficient recipes of the homogenized problem: the harmonic
    /// mean of `a` and the arithmetic means of `b` and `p`.
    pub fn homogenized_recipes(&self) -> Result<(f64, [CoefficientRecipe; 3])> {
        let a_h = homogenized_constant(&self.a)?;
        let mean = |r: &CoefficientRecipe| -> Result<CoefficientRecipe> {
            Ok(if r.is_periodic() { CoefficientRecipe::constant(r.arithmetic_mean()?) } else { r.clone() })
        };
        Ok((a_h, [CoefficientRecipe::constant(a_h), mean(&self.b)?, mean(&self.p)?]))
    }
}

fn time_l2(traj: &Trajectory) -> f64 {
    let dt = traj.time().dt();
    traj.norms().iter().map(|n| n * n * dt).sum::<f64>().sqrt()
}

fn relative_l2(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    let denom = time_l2(b);
    let num = time_l2(&a.sub(b)?);
    Ok(if denom == 0.0 { num } else { num / denom })
}

fn run_config(setup: &TurnpikeSetup, label: String, epsilon: Option<f64>, cfg: &OcpConfig) -> Result<CaseResult> {
    let tg = cfg.time;
    let solution = solve_evolutive_ocp(cfg)?;
    let steady = solve_steady_ocp(cfg)?;
    let norms = (l2_norm(&cfg.y0), l2_norm(&cfg.y_d));
    let d_direct = deviation_curve(&solution, &steady)?;

    let feedback = match setup.deviation {
        DeviationSource::Direct => None,
        DeviationSource::Feedback => {
            let opts = RiccatiOptions { max_unknowns: setup.riccati_max_unknowns };
            let fam = solve_dre_with(&cfg.operator()?, &cfg.window, &tg, &opts)?;
            let h = solve_h_equation(&fam, &steady.psi_bar)?;
            Some(synthesize_feedback(&fam, &steady, &h, &cfg.y0)?)
        }
    };
    let d = match &feedback {
        Some(fb) => deviation_curve_feedback(fb),
        None => d_direct.clone(),
    };
    let discrepancy = match &feedback {
        Some(fb) => Some(Discrepancy {
            state: relative_l2(&fb.solution.y, &solution.y)?,
            control: relative_l2(&fb.solution.f, &solution.f)?,
            cost_gap: (fb.solution.cost - solution.cost) / solution.cost,
        }),
        None => None,
    };

    let envelope = check_envelope(&d, setup.c, setup.mu, &tg, norms)?;
    let window = (setup.fit_window.0 * tg.horizon(), setup.fit_window.1 * tg.horizon());
    let (fit, fit_error) = match fit_decay_rate(&d, &tg, window) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let integral = integral_turnpike_check(&solution, &steady, setup.c, setup.mu, norms)?;
    let dx = cfg.grid.dx();
    let lhs = weighted_norm(steady.y_bar.values(), dx).powi(2) + weighted_norm(steady.f_bar.values(), dx).powi(2);
    let rhs = norms.1 * norms.1;
    let report = TurnpikeReport {
        label,
        epsilon,
        times: tg.times(),
        min_in_middle_third: minimum_in_middle_third(&d, &tg),
        d,
        d_source: setup.deviation,
        d_direct,
        norms,
        envelope,
        fit,
        fit_error,
        integral,
        steady_energy: SteadyEnergy { lhs, rhs, ok: lhs <= rhs },
        cost: solution.cost,
        steady_cost: steady.cost,
        cg_iterations: solution.iterations,
        grad_norm: solution.grad_norm,
        feedback: discrepancy,
    };
    Ok(CaseResult { solution, steady, feedback, report })
}

pub fn epsilon_label(epsilon: f64) -> String {
    format!("eps={epsilon}")
}

/// Full turnpike run with the setup's coefficients at period `epsilon`.
pub fn run_turnpike_case(setup: &TurnpikeSetup, epsilon: Option<f64>) -> Result<CaseResult> {
    setup.validate()?;
    let cfg = setup.ocp_config(&setup.a, &setup.b, &setup.p, epsilon)?;
    let label = epsilon.map(epsilon_label).unwrap_or_else(|| "base".into());
    run_config(setup, label, epsilon, &cfg)
}

pub fn run_homogenized_case(setup: &TurnpikeSetup) -> Result<(f64, CaseResult)> {
    setup.validate()?;
    let (a_h, [a, b, p]) = setup.homogenized_recipes()?;
    let cfg = setup.ocp_config(&a, &b, &p, None)?;
    Ok((a_h, run_config(setup, "homogenized".into(), None, &cfg)?))
}

/// Runs every ε and the homogenized problem (in parallel on the current rayon
/// pool), then compares each ε with the homogenized solution. `on_case` sees
/// every finished case, so results survive a later failure.
pub fn epsilon_sweep(
    setup: &TurnpikeSetup,
    epsilons: &[f64],
    on_case: &(dyn Fn(&CaseResult) + Sync),
) -> Result<SweepResult> {
    setup.validate()?;
    if epsilons.is_empty() || epsilons.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::InvalidArgument("epsilons must be positive and non-empty".into()));
    }
    if epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("epsilons must be sorted in decreasing order".into()));
    }
    let jobs: Vec<Option<f64>> = epsilons.iter().map(|&e| Some(e)).chain(std::iter::once(None)).collect();
    let mut results: Vec<(Option<f64>, f64, CaseResult)> = jobs
        .par_iter()
        .map(|job| {
            let (a_h, case) = match job {
                Some(eps) => (f64::NAN, run_turnpike_case(setup, Some(*eps))?),
                None => run_homogenized_case(setup)?,
            };
            on_case(&case);
            Ok((*job, a_h, case))
        })
        .collect::<Result<_>>()?;
    let (_, a_h, homogenized) = results.pop().expect("homogenized case is last");
    let cases: Vec<CaseResult> = results.into_iter().map(|r| r.2).collect();

    let mut control_gap = Vec::new();
    let mut state_gap = Vec::new();
    let mut steady_gap = Vec::new();
    for c in &cases {
        control_gap.push(control_norm(&c.solution.f.sub(&homogenized.solution.f)?));
        state_gap.push(c.solution.y.sub(&homogenized.solution.y)?.norms().into_iter().fold(0.0, f64::max));
        steady_gap.push(l2_norm(&c.steady.f_bar.sub(&homogenized.steady.f_bar)?));
    }
    let gaps_monotone = [&control_gap, &state_gap, &steady_gap].iter().all(|g| increases(g) <= 1);
    let envelope_all_ok =
        cases.iter().all(|c| c.report.envelope.fixed.ok) && homogenized.report.envelope.fixed.ok;
    let report = SweepReport {
        epsilons: epsilons.to_vec(),
        a_h,
        cases: cases.iter().map(|c| c.report.clone()).collect(),
        homogenized: homogenized.report.clone(),
        control_gap,
        state_gap,
        steady_gap,
        gaps_monotone,
        envelope_all_ok,
    };
    Ok(SweepResult { report, cases, homogenized })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapStudy {
    pub epsilon: Option<f64>,
    pub times: Vec<f64>,
    /// `‖E(t_k) − Ê‖`
    pub gap: Vec<f64>,
    pub fit: DecayFit,
    /// `‖Ê‖`
    pub p_hat_norm: f64,
    /// `‖E(T)‖`, the largest norm in the family.
    pub p_norm_max: f64,
}

/// Gap between the time-dependent and stationary Riccati operators for the
/// setup's coefficients at period `epsilon`, fitted over `fit_window` (times).
pub fn riccati_gap_study(
    setup: &TurnpikeSetup,
    epsilon: Option<f64>,
    fit_window: (f64, f64),
) -> Result<GapStudy> {
    setup.validate()?;
    let grid = setup.grid()?;
    let tg = setup.time_grid()?;
    let coeffs = sample_coefficients(&setup.a, &setup.b, &setup.p, &grid, epsilon, &setup.sampling)?;
    let op = assemble(&coeffs, &grid, false)?;
    let window = ControlWindow::new(&grid, setup.window.0, setup.window.1)?;
    let opts = RiccatiOptions { max_unknowns: setup.riccati_max_unknowns };
    let fam = solve_dre_with(&op, &window, &tg, &opts)?;
    let stat = solve_are_discrete_with(&op, &window, tg.dt(), &opts)?;
    let gap = riccati_gap(&fam, &stat);
    let fit = fit_decay_rate(&gap, &tg, fit_window)?;
    Ok(GapStudy {
        epsilon,
        times: tg.times(),
        p_hat_norm: crate::riccati::spectral_norm_sym(&stat.p_hat),
        p_norm_max: fam.operator_norm(0),
        gap,
        fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn small_setup(a: CoefficientRecipe) -> TurnpikeSetup {
        TurnpikeSetup {
            n_cells: 40,
            horizon: 6.0,
            n_steps: 60,
            a,
            b: CoefficientRecipe::constant(0.0),
            p: CoefficientRecipe::constant(0.0),
            window: (0.0, 1.0),
            y0: Profile::Polynomial { coeffs: vec![0.0, -1.0, 1.0] },
            y_d: Profile::Constant { value: 1.0 },
            c: 10.0,
            mu: 4.0,
            cg_tol: 1e-10,
            cg_max_iter: 500,
            fit_window: (0.05, 0.4),
            deviation: DeviationSource::Feedback,
            riccati_max_unknowns: 401,
            sampling: SamplingOptions::default(),
        }
    }

    #[test]
    fn constant_coefficient_sweep_is_trivial() {
        let setup = small_setup(CoefficientRecipe::constant(0.8));
        let res = epsilon_sweep(&setup, &[0.5, 0.1], &|_| {}).unwrap();
        assert_eq!(res.report.a_h, 0.8);
        for g in res.report.control_gap.iter().chain(&res.report.state_gap).chain(&res.report.steady_gap) {
            assert!(*g <= 1e-12, "{g}");
        }
    }

    #[test]
    fn feedback_and_direct_agree_and_reports_are_consistent() {
        let setup = small_setup(CoefficientRecipe::sin2(0.5, 1.0, 1.0));
        let case = run_turnpike_case(&setup, Some(0.25)).unwrap();
        let fb = case.report.feedback.unwrap();
        assert!(fb.state < 1e-8 && fb.control < 1e-8, "{fb:?}");
        assert!(fb.cost_gap.abs() < 1e-8);
        assert!(case.report.steady_energy.ok);
        assert!(case.report.integral.ok);
        // Where the direct deviation is well above the optimizer tolerance,
        // both curves agree.
        for (a, b) in case.report.d.iter().zip(&case.report.d_direct) {
            if *b > 1e-4 {
                assert!((a - b).abs() < 1e-6 * b);
            }
        }
        let direct = TurnpikeSetup { deviation: DeviationSource::Direct, ..setup };
        let case = run_turnpike_case(&direct, Some(0.25)).unwrap();
        assert!(case.feedback.is_none() && case.report.d == case.report.d_direct);
    }

    #[test]
    fn sweep_rejects_bad_epsilons() {
        let setup = small_setup(CoefficientRecipe::sin2(0.5, 1.0, 1.0));
        assert!(epsilon_sweep(&setup, &[0.1, 0.5], &|_| {}).is_err());
        assert!(epsilon_sweep(&setup, &[], &|_| {}).is_err());
        assert!(epsilon_sweep(&setup, &[0.5, -0.1], &|_| {}).is_err());
    }

    #[test]
    fn gap_study_fits_an_exponential() {
        let mut setup = small_setup(CoefficientRecipe::sin2(0.5, 1.0, 1.0));
        setup.horizon = 2.0;
        setup.n_steps = 200;
        setup.n_cells = 30;
        let study = riccati_gap_study(&setup, Some(0.25), (0.0, 1.0)).unwrap();
        assert!((study.gap[0] - study.p_hat_norm).abs() < 1e-14);
        assert!(study.fit.mu_hat > 0.0);
        assert!(study.p_norm_max <= study.p_hat_norm * (1.0 + 1e-9));
    }
}
