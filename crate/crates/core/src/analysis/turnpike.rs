//! Pointwise and integral turnpike diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ocp::{OptimalSolution, SteadySolution};
use crate::operators::{weighted_norm, GridFunction};
use crate::pde::{TimeGrid, Trajectory};
use crate::riccati::FeedbackSolution;

/// Values below this are treated as zero before taking logarithms.
pub const NOISE_FLOOR: f64 = 1e-14;

fn deviation_norms(traj: &Trajectory, base: &GridFunction) -> Result<Vec<f64>> {
    if traj.n_cells() != base.n_cells() {
        return Err(Error::DimensionMismatch { expected: base.n_cells(), got: traj.n_cells() });
    }
    let dx = base.dx();
    Ok(traj
        .snapshots()
        .iter()
        .map(|s| {
            let d: Vec<f64> = s.iter().zip(base.values()).map(|(a, b)| a - b).collect();
            weighted_norm(&d, dx)
        })
        .collect())
}

/// `d_k = ‖y_k − ȳ‖ + ‖f_k − f̄‖`
pub fn deviation_curve(sol: &OptimalSolution, steady: &SteadySolution) -> Result<Vec<f64>> {
    let dy = deviation_norms(&sol.y, &steady.y_bar)?;
    let df = deviation_norms(&sol.f, &steady.f_bar)?;
    Ok(dy.iter().zip(&df).map(|(a, b)| a + b).collect())
}

/// The same curve from the deviations carried by the feedback integration,
/// which stay accurate far below the size of `ȳ`.
pub fn deviation_curve_feedback(fb: &FeedbackSolution) -> Vec<f64> {
    let dy = fb.state_dev.norms();
    let df = fb.control_dev.norms();
    dy.iter().zip(&df).map(|(a, b)| a + b).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeCheck {
    pub bound: Vec<f64>,
    pub ok: bool,
    /// `max_k d_k / bound_k`
    pub worst_margin: f64,
    pub worst_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub c: f64,
    pub mu: f64,
    /// `d_k ≤ C (e^{−μt} + e^{−μ(T−t)})`
    pub fixed: EnvelopeCheck,
    /// `d_k ≤ C (‖y0‖ + ‖y_d‖)(e^{−μt} + e^{−μ(T−t)})`
    pub scaled: EnvelopeCheck,
}

pub fn envelope_shape(tg: &TimeGrid, mu: f64) -> Vec<f64> {
    let t_end = tg.horizon();
    tg.times().iter().map(|&t| (-mu * t).exp() + (-mu * (t_end - t)).exp()).collect()
}

fn check_against(d: &[f64], bound: Vec<f64>) -> EnvelopeCheck {
    let mut worst_margin = 0.0;
    let mut worst_index = 0;
    for (k, (v, b)) in d.iter().zip(&bound).enumerate() {
        let margin = v / b;
        if margin > worst_margin || k == 0 {
            worst_margin = margin;
            worst_index = k;
        }
    }
    let ok = d.iter().zip(&bound).all(|(v, b)| v <= b);
    EnvelopeCheck { bound, ok, worst_margin, worst_index }
}

pub fn check_envelope(d: &[f64], c: f64, mu: f64, tg: &TimeGrid, norms: (f64, f64)) -> Result<EnvelopeReport> {
    if !(c > 0.0 && mu > 0.0) {
        return Err(Error::InvalidArgument(format!("envelope constants must be positive, got C={c}, mu={mu}")));
    }
    if d.len() != tg.n_steps() + 1 {
        return Err(Error::DimensionMismatch { expected: tg.n_steps() + 1, got: d.len() });
    }
    let shape = envelope_shape(tg, mu);
    let scale = norms.0 + norms.1;
    Ok(EnvelopeReport {
        c,
        mu,
        fixed: check_against(d, shape.iter().map(|s| c * s).collect()),
        scaled: check_against(d, shape.iter().map(|s| c * scale * s).collect()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Minus the slope of `log d` against `t`.
    pub mu_hat: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
}

/// Least-squares fit of `log d_k` against `t_k` over `t_k ∈ [t_lo, t_hi]`,
/// skipping values at or below the noise floor.
pub fn fit_decay_rate(d: &[f64], tg: &TimeGrid, window: (f64, f64)) -> Result<DecayFit> {
    let (lo, hi) = window;
    if !(lo >= 0.0 && hi > lo && lo <= tg.horizon()) {
        return Err(Error::Fit(format!("invalid fit window [{lo}, {hi}]")));
    }
    if d.len() != tg.n_steps() + 1 {
        return Err(Error::DimensionMismatch { expected: tg.n_steps() + 1, got: d.len() });
    }
    let times = tg.times();
    let tol = 1e-12 * tg.horizon();
    let in_window: Vec<usize> = (0..d.len()).filter(|&k| times[k] >= lo - tol && times[k] <= hi + tol).collect();
    if in_window.is_empty() {
        return Err(Error::Fit(format!("no time levels in [{lo}, {hi}]")));
    }
    let pts: Vec<(f64, f64)> = in_window.iter().filter(|&&k| d[k] > NOISE_FLOOR).map(|&k| (times[k], d[k].ln())).collect();
    if pts.len() < 3 {
        return Err(Error::Fit(format!(
            "only {} of {} points above the noise floor {NOISE_FLOOR:e}",
            pts.len(),
            in_window.len()
        )));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let stl: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
    let sll: f64 = pts.iter().map(|p| (p.1 - ml).powi(2)).sum();
    let slope = stl / stt;
    let intercept = ml - slope * mt;
    let r2 = if sll == 0.0 { 1.0 } else { (stl * stl) / (stt * sll) };
    Ok(DecayFit { mu_hat: -slope, intercept, r2, points: pts.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegralTurnpike {
    pub lhs: f64,
    pub bound: f64,
    pub ok: bool,
}

pub fn integral_bound(c: f64, mu: f64, horizon: f64, norms: (f64, f64)) -> f64 {
    2.0 * c * (norms.0 + norms.1) * (1.0 - (-mu * horizon).exp()) / (mu * horizon)
}

/// `‖(1/T)∫y − ȳ‖ + ‖(1/T)∫f − f̄‖` with the rectangle rules of the cost:
/// states over `k = 1..M`, controls over `k = 0..M−1`.
pub fn integral_turnpike_check(
    sol: &OptimalSolution,
    steady: &SteadySolution,
    c: f64,
    mu: f64,
    norms: (f64, f64),
) -> Result<IntegralTurnpike> {
    let tg = *sol.y.time();
    let m = tg.n_steps();
    let mean = |traj: &Trajectory, range: std::ops::Range<usize>, base: &GridFunction| -> Result<f64> {
        if traj.n_cells() != base.n_cells() {
            return Err(Error::DimensionMismatch { expected: base.n_cells(), got: traj.n_cells() });
        }
        let mut acc = vec![0.0; base.len()];
        for k in range {
            for (a, v) in acc.iter_mut().zip(traj.snapshot(k)) {
                *a += v;
            }
        }
        let scale = tg.dt() / tg.horizon();
        let diff: Vec<f64> = acc.iter().zip(base.values()).map(|(a, b)| a * scale - b).collect();
        Ok(weighted_norm(&diff, base.dx()))
    };
    let lhs = mean(&sol.y, 1..m + 1, &steady.y_bar)? + mean(&sol.f, 0..m, &steady.f_bar)?;
    let bound = integral_bound(c, mu, tg.horizon(), norms);
    Ok(IntegralTurnpike { lhs, bound, ok: lhs <= bound })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeMember {
    pub label: String,
    pub norms: Vec<f64>,
    pub inside: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeReport {
    pub times: Vec<f64>,
    /// `C (‖y0‖ + ‖y_d‖)(e^{−μt} + e^{−μ(T−t)} + ‖y_d‖)`
    pub bound: Vec<f64>,
    pub members: Vec<TubeMember>,
}

/// State norms of every labelled solution against the common tube.
pub fn tubular_report(
    sols: &[(String, &OptimalSolution)],
    tg: &TimeGrid,
    c: f64,
    mu: f64,
    norms: (f64, f64),
) -> Result<TubeReport> {
    let shape = envelope_shape(tg, mu);
    let bound: Vec<f64> = shape.iter().map(|s| c * (norms.0 + norms.1) * (s + norms.1)).collect();
    let mut members = Vec::with_capacity(sols.len());
    for (label, sol) in sols {
        if sol.y.time() != tg {
            return Err(Error::DimensionMismatch { expected: tg.n_steps(), got: sol.y.time().n_steps() });
        }
        let ns = sol.y.norms();
        let inside = ns.iter().zip(&bound).all(|(a, b)| a <= b);
        members.push(TubeMember { label: label.clone(), norms: ns, inside });
    }
    Ok(TubeReport { times: tg.times(), bound, members })
}

/// True if the minimum of `d` lies in `[T/3, 2T/3]`.
pub fn minimum_in_middle_third(d: &[f64], tg: &TimeGrid) -> bool {
    let Some((k, _)) = d.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)) else {
        return false;
    };
    let t = tg.time(k);
    let t_end = tg.horizon();
    t >= t_end / 3.0 - 1e-12 && t <= 2.0 * t_end / 3.0 + 1e-12
}

/// Counts adjacent pairs where the sequence increases.
pub fn increases(values: &[f64]) -> usize {
    values.windows(2).filter(|w| w[1] > w[0]).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_coeff::{CoefficientField, CoefficientRecipe, ControlWindow, Grid};
    use crate::ocp::{solve_evolutive_ocp, solve_steady_ocp, OcpConfig};
    use crate::operators::l2_norm;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn tg() -> TimeGrid {
        TimeGrid::new(10.0, 200).unwrap()
    }

    #[test]
    fn synthetic_envelope() {
        let tg = tg();
        let d: Vec<f64> = tg.times().iter().map(|t| 5.0 * (-4.0 * t).exp()).collect();
        assert!(check_envelope(&d, 10.0, 4.0, &tg, (1.0, 1.0)).unwrap().fixed.ok);
        let r = check_envelope(&d, 1.0, 4.0, &tg, (1.0, 1.0)).unwrap();
        assert!(!r.fixed.ok && r.fixed.worst_margin > 1.0);
        // A faster envelope than the data is violated near t = 0.
        let r = check_envelope(&d, 10.0, 6.0, &tg, (1.0, 1.0)).unwrap();
        assert!(!r.fixed.ok && r.fixed.worst_margin > 1.0);
        assert!(tg.time(r.fixed.worst_index) < 5.0);
        assert!(check_envelope(&d, 0.0, 4.0, &tg, (1.0, 1.0)).is_err());
    }

    proptest! {
        #[test]
        fn envelope_is_monotone_in_c(c in 0.1f64..20.0, extra in 0.0f64..20.0, a in 0.1f64..30.0) {
            let tg = tg();
            let d: Vec<f64> = tg.times().iter().map(|t| a * (-3.0 * t).exp()).collect();
            let lo = check_envelope(&d, c, 4.0, &tg, (0.5, 1.0)).unwrap();
            let hi = check_envelope(&d, c + extra, 4.0, &tg, (0.5, 1.0)).unwrap();
            prop_assert!(!lo.fixed.ok || hi.fixed.ok);
            prop_assert!(!lo.scaled.ok || hi.scaled.ok);
        }
    }

    #[test]
    fn exact_exponential_fit() {
        let tg = tg();
        let d: Vec<f64> = tg.times().iter().map(|t| 7.0 * (-3.0 * t).exp()).collect();
        let fit = fit_decay_rate(&d, &tg, (0.5, 5.0)).unwrap();
        assert!((fit.mu_hat - 3.0).abs() < 1e-10);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
        assert!((fit.intercept - 7f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn fit_rejects_floor_and_empty_windows() {
        let tg = tg();
        let d = vec![1e-16; 201];
        assert!(matches!(fit_decay_rate(&d, &tg, (1.0, 5.0)), Err(Error::Fit(_))));
        let d = vec![1.0; 201];
        assert!(fit_decay_rate(&d, &tg, (5.0, 1.0)).is_err());
        assert!(fit_decay_rate(&d, &tg, (20.0, 30.0)).is_err());
    }

    #[test]
    fn integral_bound_arithmetic() {
        let b = integral_bound(10.0, 4.0, 50.0, ((1.0f64 / 30.0).sqrt(), 1.0));
        assert!((b - 0.11826).abs() < 1e-5, "{b}");
    }

    fn small_cfg(y_d: f64) -> OcpConfig {
        let g = Grid::new(40).unwrap();
        let c = CoefficientField::diffusion(&CoefficientRecipe::sin2(0.5, 1.0, 0.2), &g, None).unwrap();
        OcpConfig::new(
            g.clone(),
            TimeGrid::new(6.0, 60).unwrap(),
            c,
            ControlWindow::full(&g),
            GridFunction::from_fn(&g, |x| x * (x - 1.0)),
            GridFunction::from_fn(&g, |_| y_d),
        )
        .unwrap()
    }

    #[test]
    fn steady_start_has_no_deviation() {
        let cfg = small_cfg(0.0).with_y0(GridFunction::zeros(&Grid::new(40).unwrap()));
        let sol = solve_evolutive_ocp(&cfg).unwrap();
        let st = solve_steady_ocp(&cfg).unwrap();
        assert!(deviation_curve(&sol, &st).unwrap().iter().all(|&v| v == 0.0));
        let it = integral_turnpike_check(&sol, &st, 10.0, 4.0, (0.0, 0.0)).unwrap();
        assert_eq!(it.lhs, 0.0);
        assert!(it.ok);
    }

    #[test]
    fn integral_lhs_below_mean_deviation() {
        let cfg = small_cfg(1.0);
        let sol = solve_evolutive_ocp(&cfg).unwrap();
        let st = solve_steady_ocp(&cfg).unwrap();
        let d = deviation_curve(&sol, &st).unwrap();
        assert!(d[0] > 0.0);
        let norms = (l2_norm(&cfg.y0), l2_norm(&cfg.y_d));
        let it = integral_turnpike_check(&sol, &st, 10.0, 4.0, norms).unwrap();
        let mean: f64 = d.iter().sum::<f64>() * cfg.time.dt() / cfg.time.horizon();
        assert!(it.lhs <= mean);
        assert!(it.ok);
        assert!(minimum_in_middle_third(&d, &cfg.time));
    }

    #[test]
    fn modal_run_stays_in_tube() {
        let g = Grid::new(50).unwrap();
        let c = CoefficientField::diffusion(&CoefficientRecipe::constant(1.0), &g, None).unwrap();
        let y0 = GridFunction::from_fn(&g, |x| (PI * x).sin());
        let cfg = OcpConfig::new(
            g.clone(),
            TimeGrid::new(2.0, 100).unwrap(),
            c,
            ControlWindow::full(&g),
            y0.clone(),
            GridFunction::zeros(&g),
        )
        .unwrap()
        .with_cg(1e-12, 200)
        .unwrap();
        let sol = solve_evolutive_ocp(&cfg).unwrap();
        // Single mode: the state is c_k sin(πx) with c_k from the scalar problem.
        let ns = sol.y.norms();
        let ratio = ns[50] / ns[0];
        assert!(ratio > 0.0 && ratio < (-9.0f64).exp());
        let rep = tubular_report(&[("heat".into(), &sol)], &cfg.time, 10.0, 4.0, (l2_norm(&y0), 0.0)).unwrap();
        assert!(rep.members[0].inside);
        let zero = cfg.clone().with_y0(GridFunction::zeros(&g));
        let zs = solve_evolutive_ocp(&zero).unwrap();
        let rep = tubular_report(&[("zero".into(), &zs)], &cfg.time, 10.0, 4.0, (0.0, 0.0)).unwrap();
        assert!(rep.members[0].inside && rep.members[0].norms.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn counting_increases() {
        assert_eq!(increases(&[3.0, 2.0, 2.5, 1.0]), 1);
        assert_eq!(increases(&[]), 0);
    }
}
