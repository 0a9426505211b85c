//! One function per subcommand. Each writes into `<out>/<command>/` and ends
//! with a manifest.

use std::path::PathBuf;

use anyhow::{Context as _, Result};
use serde::Serialize;
use turnpike_core::analysis::{
    epsilon_label, epsilon_sweep, riccati_gap_study, run_homogenized_case, run_turnpike_case, tubular_report,
    CaseResult, DeviationSource, GapStudy, TurnpikeReport, TurnpikeSetup,
};
use turnpike_core::hum::controllability_cost_sweep;
use turnpike_core::ocp::{solve_evolutive_ocp, solve_steady_ocp, OcpConfig};
use turnpike_core::operators::l2_norm;
use turnpike_core::riccati::{are_residual, solve_are_with, spectral_norm_sym, RiccatiOptions};

use crate::config::ExperimentConfig;
use crate::oracle;
use crate::output::{fmt, Artifacts};
use crate::plot::LinePlot;

pub struct Context {
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
    pub quiet: bool,
}

/// Which coefficient field a single-case command uses.
#[derive(Debug, Clone, Copy, Default)]
pub struct CaseSelector {
    pub epsilon: Option<f64>,
    pub homogenized: bool,
}

impl Context {
    fn log(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn artifacts(&self, command: &str) -> Result<Artifacts> {
        Artifacts::create(&self.out.join(command))
    }

    fn setup(&self) -> TurnpikeSetup {
        self.cfg.turnpike_setup()
    }

    fn epsilon(&self, sel: CaseSelector) -> f64 {
        sel.epsilon.unwrap_or(self.cfg.epsilon_list[0])
    }

    fn ocp_config(&self, sel: CaseSelector) -> Result<OcpConfig> {
        let setup = self.setup();
        Ok(if sel.homogenized {
            let (_, [a, b, p]) = setup.homogenized_recipes()?;
            setup.ocp_config(&a, &b, &p, None)?
        } else {
            setup.ocp_config(&setup.a, &setup.b, &setup.p, Some(self.epsilon(sel)))?
        })
    }

    fn label(&self, sel: CaseSelector) -> String {
        if sel.homogenized {
            "homogenized".into()
        } else {
            epsilon_label(self.epsilon(sel))
        }
    }
}

fn file_label(label: &str) -> String {
    label.replace('=', "_")
}

fn epsilon_field(e: Option<f64>) -> String {
    e.map(fmt).unwrap_or_else(|| "homogenized".into())
}

pub fn solve(ctx: &Context, sel: CaseSelector) -> Result<PathBuf> {
    let mut art = ctx.artifacts("solve")?;
    let cfg = ctx.ocp_config(sel)?;
    ctx.log(format!("solving the evolutive problem ({})", ctx.label(sel)));
    let sol = solve_evolutive_ocp(&cfg)?;
    art.write_with("solution_y.csv", |w| sol.y.write_csv(w))?;
    art.write_with("solution_f.csv", |w| sol.f.write_csv(w))?;
    art.write_with("solution_psi.csv", |w| sol.psi.write_csv(w))?;
    art.write_json("summary.json", &sol.summary())?;
    ctx.log(format!("cost {:.6e}, {} CG iterations", sol.cost, sol.iterations));
    art.finish("solve", &ctx.cfg)
}

#[derive(Serialize)]
struct SteadyJson {
    label: String,
    cost: f64,
    residuals: [f64; 2],
    y_bar_norm: f64,
    f_bar_norm: f64,
}

pub fn steady(ctx: &Context, sel: CaseSelector) -> Result<PathBuf> {
    let mut art = ctx.artifacts("steady")?;
    let cfg = ctx.ocp_config(sel)?;
    let s = solve_steady_ocp(&cfg)?;
    let rows: Vec<Vec<String>> = cfg
        .grid
        .interior_nodes()
        .iter()
        .enumerate()
        .map(|(i, x)| vec![fmt(*x), fmt(s.y_bar.values()[i]), fmt(s.f_bar.values()[i]), fmt(s.psi_bar.values()[i])])
        .collect();
    art.write_csv("steady.csv", &["x", "y_bar", "f_bar", "psi_bar"], &rows)?;
    art.write_json(
        "steady.json",
        &SteadyJson {
            label: ctx.label(sel),
            cost: s.cost,
            residuals: s.residuals,
            y_bar_norm: l2_norm(&s.y_bar),
            f_bar_norm: l2_norm(&s.f_bar),
        },
    )?;
    ctx.log(format!("steady cost {:.6e}", s.cost));
    art.finish("steady", &ctx.cfg)
}

fn deviation_rows(reports: &[&TurnpikeReport]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for r in reports {
        let eps = epsilon_field(r.epsilon);
        let eps = if r.label == "homogenized" { "homogenized".to_string() } else { eps };
        for (k, t) in r.times.iter().enumerate() {
            rows.push(vec![eps.clone(), fmt(*t), fmt(r.d[k]), fmt(r.envelope.fixed.bound[k])]);
        }
    }
    rows
}

fn deviation_plot(reports: &[&TurnpikeReport]) -> String {
    let mut plot = LinePlot::new("Deviation from the steady optimum", "t", "‖y−ȳ‖ + ‖f−f̄‖", true);
    for r in reports {
        plot.add(&r.label, &r.times, &r.d, false);
    }
    if let Some(r) = reports.first() {
        plot.add("bound", &r.times, &r.envelope.fixed.bound, true);
    }
    plot.to_svg()
}

#[derive(Serialize)]
struct TurnpikeJson<'a> {
    envelope_ok: bool,
    scaled_envelope_ok: bool,
    report: &'a TurnpikeReport,
}

pub fn turnpike(ctx: &Context, sel: CaseSelector) -> Result<PathBuf> {
    let mut art = ctx.artifacts("turnpike")?;
    let setup = ctx.setup();
    ctx.log(format!("turnpike run ({})", ctx.label(sel)));
    let case = if sel.homogenized {
        run_homogenized_case(&setup)?.1
    } else {
        run_turnpike_case(&setup, Some(ctx.epsilon(sel)))?
    };
    let r = &case.report;
    art.write_json(
        "report.json",
        &TurnpikeJson { envelope_ok: r.envelope.fixed.ok, scaled_envelope_ok: r.envelope.scaled.ok, report: r },
    )?;
    art.write_csv("deviation.csv", &["epsilon", "t", "d", "bound"], &deviation_rows(&[r]))?;
    art.write_text("deviation.svg", &deviation_plot(&[r]))?;
    ctx.log(format!(
        "envelope_ok={} worst margin {:.3} fitted rate {}",
        r.envelope.fixed.ok,
        r.envelope.fixed.worst_margin,
        r.fit.map(|f| format!("{:.3}", f.mu_hat)).unwrap_or_else(|| "n/a".into())
    ));
    art.finish("turnpike", &ctx.cfg)
}

pub fn sweep(ctx: &Context) -> Result<PathBuf> {
    let setup = ctx.setup();
    let mut art = ctx.artifacts("sweep")?;
    let dir = art.dir().to_path_buf();
    let written = std::sync::Mutex::new(Vec::<String>::new());
    let on_case = |c: &CaseResult| {
        let name = format!("case_{}.json", file_label(&c.report.label));
        let res = serde_json::to_string_pretty(&c.report)
            .map_err(anyhow::Error::from)
            .and_then(|s| std::fs::write(dir.join(&name), s + "\n").map_err(anyhow::Error::from));
        match res {
            Ok(()) => {
                if !ctx.quiet {
                    eprintln!("finished {}", c.report.label);
                }
                written.lock().expect("lock").push(name);
            }
            Err(e) => eprintln!("could not write {name}: {e}"),
        }
    };
    let res = epsilon_sweep(&setup, &ctx.cfg.epsilon_list, &on_case);
    for name in written.into_inner().expect("lock") {
        art.write_with(&name, |w| {
            let bytes = std::fs::read(dir.join(&name))?;
            w.write_all(&bytes)
        })?;
    }
    let res = res?;
    let rep = &res.report;
    art.write_json("sweep.json", rep)?;

    let mut reports: Vec<&TurnpikeReport> = rep.cases.iter().collect();
    reports.push(&rep.homogenized);
    art.write_csv("deviation.csv", &["epsilon", "t", "d", "bound"], &deviation_rows(&reports))?;

    let mut norm_rows = Vec::new();
    let mut norm_plot = LinePlot::new("State norm and steady norm", "t", "‖y(t)‖", false);
    for c in res.cases.iter().chain(std::iter::once(&res.homogenized)) {
        let eps = c.report.epsilon.map(fmt).unwrap_or_else(|| "homogenized".into());
        let norms = c.solution.y.norms();
        let steady = l2_norm(&c.steady.y_bar);
        for (k, t) in c.report.times.iter().enumerate() {
            norm_rows.push(vec![eps.clone(), fmt(*t), fmt(norms[k]), fmt(steady)]);
        }
        norm_plot.add(&c.report.label, &c.report.times, &norms, false);
    }
    if let Some(c) = res.cases.first() {
        let steady = l2_norm(&c.steady.y_bar);
        norm_plot.add("‖ȳ‖", &c.report.times, &vec![steady; c.report.times.len()], true);
    }
    art.write_csv("state_norms.csv", &["epsilon", "t", "state_norm", "steady_norm"], &norm_rows)?;
    art.write_text("state_norms.svg", &norm_plot.to_svg())?;
    art.write_text("deviation.svg", &deviation_plot(&reports))?;

    let gap_rows: Vec<Vec<String>> = rep
        .epsilons
        .iter()
        .enumerate()
        .map(|(i, e)| vec![fmt(*e), fmt(rep.control_gap[i]), fmt(rep.state_gap[i]), fmt(rep.steady_gap[i])])
        .collect();
    art.write_csv("gaps.csv", &["epsilon", "control_gap", "state_gap", "steady_gap"], &gap_rows)?;
    ctx.log(format!(
        "a_h={:.6} envelope_all_ok={} gaps_monotone={}",
        rep.a_h, rep.envelope_all_ok, rep.gaps_monotone
    ));
    art.finish("sweep", &ctx.cfg)
}

pub fn tube(ctx: &Context) -> Result<PathBuf> {
    let mut art = ctx.artifacts("tube")?;
    let setup = TurnpikeSetup { deviation: DeviationSource::Direct, ..ctx.setup() };
    let res = epsilon_sweep(&setup, &ctx.cfg.epsilon_list, &|c| ctx.log(format!("finished {}", c.report.label)))?;
    let tg = setup.time_grid()?;
    let mut sols: Vec<(String, &_)> = res.cases.iter().map(|c| (c.report.label.clone(), &c.solution)).collect();
    sols.push(("homogenized".into(), &res.homogenized.solution));
    let norms = res.homogenized.report.norms;
    let rep = tubular_report(&sols, &tg, setup.c, setup.mu, norms)?;

    let mut rows = Vec::new();
    let mut plot = LinePlot::new("Optimal states inside the tube", "t", "‖y(t)‖", false);
    for m in &rep.members {
        for (k, t) in rep.times.iter().enumerate() {
            rows.push(vec![m.label.trim_start_matches("eps=").to_string(), fmt(*t), fmt(m.norms[k]), fmt(rep.bound[k])]);
        }
        plot.add(&m.label, &rep.times, &m.norms, false);
    }
    plot.add("tube", &rep.times, &rep.bound, true);
    art.write_csv("tube.csv", &["epsilon", "t", "norm", "bound"], &rows)?;
    art.write_json("tube.json", &rep)?;
    art.write_text("tube.svg", &plot.to_svg())?;
    ctx.log(format!("all inside: {}", rep.members.iter().all(|m| m.inside)));
    art.finish("tube", &ctx.cfg)
}

#[derive(Serialize)]
struct RiccatiCase {
    label: String,
    epsilon: f64,
    state_discrepancy: f64,
    control_discrepancy: f64,
    cost_gap: f64,
    are_residual: f64,
    p_hat_norm: f64,
    closed_loop_decay: f64,
}

#[derive(Serialize)]
struct RiccatiJson {
    n_cells: usize,
    cases: Vec<RiccatiCase>,
    gap: Vec<GapFitJson>,
}

#[derive(Serialize)]
struct GapFitJson {
    epsilon: f64,
    slope: f64,
    intercept: f64,
    r2: f64,
    p_hat_norm: f64,
    p_norm_max: f64,
}

pub fn riccati(ctx: &Context) -> Result<PathBuf> {
    let mut art = ctx.artifacts("riccati")?;
    let rc = &ctx.cfg.riccati;
    let base = ctx.setup();
    let setup = TurnpikeSetup { n_cells: rc.n_cells, deviation: DeviationSource::Feedback, ..base.clone() };
    let opts = RiccatiOptions { max_unknowns: setup.riccati_max_unknowns };
    let mut cases = Vec::new();
    for &eps in &ctx.cfg.epsilon_list {
        ctx.log(format!("feedback cross-check at eps={eps}"));
        let case = run_turnpike_case(&setup, Some(eps))?;
        let disc = case.report.feedback.context("feedback discrepancy missing")?;
        let cfg = setup.ocp_config(&setup.a, &setup.b, &setup.p, Some(eps))?;
        let op = cfg.operator()?;
        let stat = solve_are_with(&op, &cfg.window, &opts)?;
        let a = op.matrix.to_dense();
        let y0 = cfg.y0.values().to_vec();
        cases.push(RiccatiCase {
            label: epsilon_label(eps),
            epsilon: eps,
            state_discrepancy: disc.state,
            control_discrepancy: disc.control,
            cost_gap: disc.cost_gap,
            are_residual: are_residual(&a, cfg.window.mask(), &stat.p_hat),
            p_hat_norm: spectral_norm_sym(&stat.p_hat),
            closed_loop_decay: stat.closed_loop_decay(&y0, 1.0, 200)?,
        });
    }

    let gap_setup = TurnpikeSetup {
        n_cells: rc.gap_n_cells,
        horizon: rc.gap_horizon,
        n_steps: rc.gap_n_steps,
        ..base
    };
    let window = (rc.gap_fit_window[0] * rc.gap_horizon, rc.gap_fit_window[1] * rc.gap_horizon);
    let studies: Vec<GapStudy> = rc
        .gap_epsilons
        .iter()
        .map(|&e| {
            ctx.log(format!("Riccati gap at eps={e}"));
            riccati_gap_study(&gap_setup, Some(e), window)
        })
        .collect::<turnpike_core::Result<_>>()?;

    let mut rows = Vec::new();
    let mut plot = LinePlot::new("Riccati gap", "t", "‖P(t) − P̂‖", true);
    for s in &studies {
        let eps = epsilon_field(s.epsilon);
        for (k, t) in s.times.iter().enumerate() {
            rows.push(vec![eps.clone(), fmt(*t), fmt(s.gap[k])]);
        }
        plot.add(&epsilon_label(s.epsilon.unwrap_or(1.0)), &s.times, &s.gap, false);
    }
    art.write_csv("gap.csv", &["epsilon", "t", "gap"], &rows)?;
    let gap: Vec<GapFitJson> = studies
        .iter()
        .map(|s| GapFitJson {
            epsilon: s.epsilon.unwrap_or(1.0),
            slope: -s.fit.mu_hat,
            intercept: s.fit.intercept,
            r2: s.fit.r2,
            p_hat_norm: s.p_hat_norm,
            p_norm_max: s.p_norm_max,
        })
        .collect();
    art.write_json("gap_fit.json", &gap)?;
    art.write_text("gap.svg", &plot.to_svg())?;
    art.write_json("riccati.json", &RiccatiJson { n_cells: rc.n_cells, cases, gap })?;
    art.finish("riccati", &ctx.cfg)
}

pub fn hum(ctx: &Context) -> Result<PathBuf> {
    let mut art = ctx.artifacts("hum")?;
    let hc = &ctx.cfg.hum;
    let mut rows = Vec::new();
    for &delta in &hc.delta_ladder {
        ctx.log(format!("HUM ladder delta={delta:e}"));
        let setup = ctx.cfg.hum_setup(delta);
        for &eps in &hc.epsilons {
            let s = setup.run_epsilon(Some(eps))?.summary();
            rows.push(vec![fmt(eps), fmt(delta), fmt(s.control_norm), fmt(s.terminal_norm), fmt(s.cost_estimate)]);
        }
        let s = setup.run_homogenized()?.summary();
        rows.push(vec![
            "homogenized".into(),
            fmt(delta),
            fmt(s.control_norm),
            fmt(s.terminal_norm),
            fmt(s.cost_estimate),
        ]);
    }
    let sweep = controllability_cost_sweep(&ctx.cfg.hum_setup(hc.delta), &hc.epsilons)?;
    if !sweep.ratio_ok {
        eprintln!("warning: controllability cost ratio {:.3} exceeds {}", sweep.ratio, sweep.ratio_limit);
    }
    art.write_csv("hum.csv", &["epsilon", "delta", "control_norm", "terminal_norm", "cost_estimate"], &rows)?;
    art.write_json("hum.json", &sweep)?;
    ctx.log(format!("cost ratio {:.4}", sweep.ratio));
    art.finish("hum", &ctx.cfg)
}

/// Returns whether every fixture passed.
pub fn oracle(ctx: &Context) -> Result<(PathBuf, bool)> {
    let mut art = ctx.artifacts("oracle")?;
    let outcomes = oracle::run_all(ctx.cfg.seed)?;
    let width = outcomes.iter().map(|o| o.name.chars().count()).max().unwrap_or(0);
    let mut table = String::new();
    for o in &outcomes {
        let pad = width - o.name.chars().count();
        table.push_str(&format!(
            "{}  {}{}  err {:.3e}  tol {:.1e} ({})\n",
            if o.pass { "PASS" } else { "FAIL" },
            o.name,
            " ".repeat(pad),
            o.error,
            o.tolerance,
            o.measure
        ));
    }
    let all = outcomes.iter().all(|o| o.pass);
    if !ctx.quiet {
        print!("{table}");
    }
    println!("{} of {} fixtures passed", outcomes.iter().filter(|o| o.pass).count(), outcomes.len());
    art.write_json("oracle.json", &outcomes)?;
    art.write_text("oracle.txt", &table)?;
    Ok((art.finish("oracle", &ctx.cfg)?, all))
}
