//! Post-processing of traces into theorem-level verdicts.
//!
//! Verdicts are pure functions of (trace, oracle NE, scenario truth): a
//! stored trace re-analyzed later reproduces the report byte for byte. The
//! checks map onto the four stability results the simulator exercises:
//!
//! 1. perfect information — exponential decay of `‖γ - x*‖` plus residual
//!    chain collapse,
//! 2. single integrators over switching graphs — terminal NE and consensus
//!    errors,
//! 3. adaptive law — terminal errors plus boundedness of the parameter
//!    estimation error and monotonicity of the `V2` monitor,
//! 4. disturbance rejection — terminal NE error under disturbances,
//!    nondecreasing `D̂`, bounded `θ̃`/`D̃`, and `V` monotone up to the
//!    discretization tolerance.
//!
//! "Bounded" is operationalized: sup over the trace at most
//! `bound_cap_factor × (initial + 1)` and no divergence trend in the final
//! fifth of the horizon (its max at most 1.2× the max over the preceding
//! fifth, plus an absolute floor). The theorems prove boundedness of `θ̃`,
//! never convergence of `θ̂` to the true parameter, so no check here asserts
//! parameter convergence.

use std::path::{Path, PathBuf};

use crate::control::Law;
use crate::error::{Error, Result};
use crate::exec::{map_items, ExecMode};
use crate::sim::{atomic_write, integrate, Method, Scenario, SimTrace};
use crate::svg;

/// Tolerances and windows for the verdicts. Defaults depend on the law; see
/// [`AnalysisConfig::defaults_for`].
#[derive(Debug, Clone)]
pub struct AnalysisConfig {
    /// Terminal NE tolerance.
    pub tol_ne: f64,
    /// Terminal residual-chain tolerance (high-order plants).
    pub tol_xs: f64,
    /// Exponential-fit window as fractions of the horizon.
    pub fit_window: (f64, f64),
    /// Upper bound on the fitted decay rate; `None` means `-0.9 × mu`.
    pub rate_max: Option<f64>,
    /// Boundedness cap factor (sup ≤ factor × (initial + 1)).
    pub bound_cap_factor: f64,
    /// Max admissible positive increment of the Lyapunov monitor per unit
    /// time; `None` selects 1e-6, or `100 × h` for the exact-sign Euler
    /// path whose discretization error is first order.
    pub v_increase_tol: Option<f64>,
    /// Which theorem the scenario instantiates; `None` infers from the law.
    pub theorem: Option<u8>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            tol_ne: 1e-3,
            tol_xs: 1e-5,
            fit_window: (0.2, 0.8),
            rate_max: None,
            bound_cap_factor: 1e3,
            v_increase_tol: None,
            theorem: None,
        }
    }
}

impl AnalysisConfig {
    /// Per-law defaults: 1e-6/1e-5 at short horizons for the perfect-info
    /// law, 1e-3 for the switching-network laws, 1e-2 for the sign-term law
    /// whose chattering limits terminal accuracy at fixed step.
    pub fn defaults_for(law: Law) -> Self {
        let mut cfg = AnalysisConfig::default();
        match law {
            Law::PerfectInfo => {
                cfg.tol_ne = 1e-6;
                cfg.tol_xs = 1e-5;
            }
            Law::SingleIntegratorConsensus | Law::AdaptiveImperfect => {
                cfg.tol_ne = 1e-3;
            }
            Law::AdaptiveDisturbanceRejection => {
                cfg.tol_ne = 1e-2;
            }
        }
        cfg
    }
}

/// One named check with its measured value and threshold.
#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl CriterionResult {
    fn le(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        let pass = value.is_finite() && value <= threshold;
        CriterionResult { name: name.into(), value, threshold, pass }
    }
}

/// Theorem-level verdict for one run.
#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub theorem_tag: u8,
    pub terminal_ne_error: f64,
    pub fitted_rate: Option<f64>,
    pub criteria: Vec<CriterionResult>,
    pub pass: bool,
    pub notes: Vec<String>,
}

/// Least-squares slope of `log(signal)` against `t` over `[t_a, t_b]`,
/// with the signal floored at 1e-14. Returns `(slope, r_squared)`.
pub fn fit_exponential_rate(
    trace: &SimTrace,
    signal: &str,
    window: (f64, f64),
) -> Result<(f64, f64)> {
    let times = trace.times();
    let values = trace.column(signal)?;
    let (t_a, t_b) = window;
    let first = *times.first().ok_or_else(|| Error::input("trace is empty"))?;
    let last = *times.last().expect("nonempty");
    if t_a < first - 1e-9 || t_b > last + 1e-9 || t_a >= t_b {
        return Err(Error::input(format!(
            "fit window [{t_a}, {t_b}] outside trace span [{first}, {last}]"
        )));
    }
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(&values)
        .filter(|(t, _)| **t >= t_a && **t <= t_b)
        .map(|(t, v)| (*t, v.max(1e-14).ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::input("fit window contains fewer than two samples"));
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-30 {
        return Err(Error::input("degenerate fit window"));
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    let mean_y = sy / n;
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let ss_res: f64 = pts.iter().map(|p| (p.1 - (slope * p.0 + intercept)).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok((slope, r2))
}

/// Max positive increment of a monitor column per unit time across
/// consecutive recorded samples (0 when the column is monotone).
pub fn max_positive_increment_rate(trace: &SimTrace, column: &str) -> Result<f64> {
    let times = trace.times();
    let vals = trace.column(column)?;
    let mut worst = 0.0f64;
    for k in 1..vals.len() {
        let dt = times[k] - times[k - 1];
        if dt > 0.0 {
            worst = worst.max((vals[k] - vals[k - 1]) / dt);
        }
    }
    Ok(worst)
}

/// Boundedness in the operational sense: sup ≤ cap × (initial + 1) and the
/// max over the final fifth at most 1.2× the max over the fifth before it
/// (plus a 1e-9 floor, so signals at numerical zero pass).
fn check_bounded(times: &[f64], signal: &[f64], cap_factor: f64) -> (bool, f64, String) {
    let initial = signal.first().copied().unwrap_or(0.0);
    let sup = signal.iter().cloned().fold(0.0f64, f64::max);
    let cap = cap_factor * (initial.abs() + 1.0);
    if sup > cap {
        return (false, sup, format!("sup {sup:.3e} exceeds cap {cap:.3e}"));
    }
    let t_end = times.last().copied().unwrap_or(0.0);
    let t0 = times.first().copied().unwrap_or(0.0);
    let span = t_end - t0;
    let seg = |a: f64, b: f64| -> f64 {
        times
            .iter()
            .zip(signal)
            .filter(|(t, _)| **t >= t0 + a * span && **t <= t0 + b * span)
            .map(|(_, v)| *v)
            .fold(0.0f64, f64::max)
    };
    let prev = seg(0.6, 0.8);
    let tail = seg(0.8, 1.0);
    if tail > 1.2 * prev + 1e-9 {
        return (
            false,
            sup,
            format!("divergence trend: tail max {tail:.3e} vs preceding {prev:.3e}"),
        );
    }
    (true, sup, String::new())
}

/// Norm of the stacked parameter error `θ̃ = θ̂ - θ` per recorded row.
fn theta_error_series(trace: &SimTrace, scenario: &Scenario) -> Result<Vec<f64>> {
    let np = scenario.game.num_players();
    let mut cols: Vec<(usize, f64)> = Vec::new(); // (column index, true value)
    for i in 0..np {
        let theta = scenario.plants[i].spec.true_theta();
        for c in 0..theta.len() {
            let name = format!("thetahat_{}_{}", i + 1, c + 1);
            let ix = trace
                .col_index(&name)
                .ok_or_else(|| Error::input(format!("trace lacks column {name}")))?;
            cols.push((ix, theta[c]));
        }
    }
    Ok(trace
        .rows
        .iter()
        .map(|row| cols.iter().map(|(ix, t)| (row[*ix] - t).powi(2)).sum::<f64>().sqrt())
        .collect())
}

/// Norm of the stacked bound error `D̃ = D̂ - D` per recorded row.
fn dhat_error_series(trace: &SimTrace, scenario: &Scenario) -> Result<Vec<f64>> {
    let np = scenario.game.num_players();
    let mut cols: Vec<(usize, f64)> = Vec::new();
    for i in 0..np {
        let name = format!("dhat_{}", i + 1);
        let ix = trace
            .col_index(&name)
            .ok_or_else(|| Error::input(format!("trace lacks column {name}")))?;
        cols.push((ix, scenario.plants[i].spec.disturbance().true_bound()));
    }
    Ok(trace
        .rows
        .iter()
        .map(|row| cols.iter().map(|(ix, d)| (row[*ix] - d).powi(2)).sum::<f64>().sqrt())
        .collect())
}

/// Count decreases of any `dhat_i` column across recorded rows.
pub fn dhat_violations(trace: &SimTrace) -> usize {
    let mut violations = 0;
    for (ci, name) in trace.columns.iter().enumerate() {
        if !name.starts_with("dhat_") {
            continue;
        }
        for k in 1..trace.rows.len() {
            if trace.rows[k][ci] < trace.rows[k - 1][ci] {
                violations += 1;
            }
        }
    }
    violations
}

/// Evaluate the theorem-level checks for one completed run.
pub fn theorem_verdict(
    trace: &SimTrace,
    scenario: &Scenario,
    oracle_ne: &nalgebra::DVector<f64>,
) -> Result<ConvergenceReport> {
    let law = scenario.controller.law;
    let tag = scenario.analysis.theorem.unwrap_or_else(|| law.theorem());
    let cfg = &scenario.analysis;
    let horizon = scenario.integration.horizon;
    let mut criteria: Vec<CriterionResult> = Vec::new();
    let mut notes: Vec<String> = Vec::new();
    notes.push(format!("oracle NE residual {:.3e}", scenario.game.pseudogradient(oracle_ne)?.norm()));

    if let Some(a) = &trace.aborted {
        criteria.push(CriterionResult {
            name: "run completed".into(),
            value: a.t,
            threshold: horizon,
            pass: false,
        });
        return Ok(ConvergenceReport {
            theorem_tag: tag,
            terminal_ne_error: f64::INFINITY,
            fitted_rate: None,
            criteria,
            pass: false,
            notes: vec![format!("aborted: {}", a.detail)],
        });
    }

    let terminal_ne = trace.terminal("dist_ne")?;
    let mut fitted_rate = None;

    match tag {
        1 => {
            criteria.push(CriterionResult::le(
                "terminal ‖γ(T) - x*‖",
                trace.terminal("dist_ne_gamma")?,
                cfg.tol_ne,
            ));
            let window =
                (cfg.fit_window.0 * horizon, cfg.fit_window.1 * horizon);
            let (slope, r2) = fit_exponential_rate(trace, "dist_ne_gamma", window)?;
            fitted_rate = Some(slope);
            let rate_max = cfg.rate_max.unwrap_or(-0.9 * scenario.certificate.mu);
            criteria.push(CriterionResult::le("fitted decay rate", slope, rate_max));
            notes.push(format!("rate fit r^2 = {r2:.4}"));
            if trace.col_index("xs_norm").is_some() {
                criteria.push(CriterionResult::le(
                    "terminal ‖x^s(T)‖",
                    trace.terminal("xs_norm")?,
                    cfg.tol_xs,
                ));
            }
        }
        2 => {
            criteria.push(CriterionResult::le("terminal ‖x(T) - x*‖", terminal_ne, cfg.tol_ne));
            criteria.push(CriterionResult::le(
                "terminal ‖y(T) - 1⊗x*‖",
                trace.terminal("cons_err")?,
                cfg.tol_ne,
            ));
        }
        3 => {
            criteria.push(CriterionResult::le(
                "terminal ‖γ(T) - x*‖",
                trace.terminal("dist_ne_gamma")?,
                cfg.tol_ne,
            ));
            criteria.push(CriterionResult::le("terminal ‖x(T) - x*‖", terminal_ne, cfg.tol_ne));
            criteria.push(CriterionResult::le(
                "terminal ‖z(T) - 1⊗x*‖",
                trace.terminal("cons_err")?,
                cfg.tol_ne,
            ));
            push_theta_bounded(&mut criteria, &mut notes, trace, scenario)?;
            let v_tol = cfg.v_increase_tol.unwrap_or(1e-6);
            criteria.push(CriterionResult::le(
                "max V2 increase rate",
                max_positive_increment_rate(trace, "V2")?,
                v_tol,
            ));
        }
        4 => {
            criteria.push(CriterionResult::le("terminal ‖x(T) - x*‖", terminal_ne, cfg.tol_ne));
            let violations = dhat_violations(trace) as f64;
            criteria.push(CriterionResult::le("D̂ monotonicity violations", violations, 0.0));
            push_theta_bounded(&mut criteria, &mut notes, trace, scenario)?;
            let times = trace.times();
            let d_err = dhat_error_series(trace, scenario)?;
            let (ok, sup, why) = check_bounded(&times, &d_err, cfg.bound_cap_factor);
            criteria.push(CriterionResult {
                name: "D̃ bounded".into(),
                value: sup,
                threshold: cfg.bound_cap_factor * (d_err.first().copied().unwrap_or(0.0) + 1.0),
                pass: ok,
            });
            if !ok {
                notes.push(why);
            }
            let v_tol = cfg.v_increase_tol.unwrap_or_else(|| {
                if scenario.integration.method == Method::Euler {
                    100.0 * scenario.integration.step
                } else {
                    1e-6
                }
            });
            criteria.push(CriterionResult::le(
                "max V increase rate",
                max_positive_increment_rate(trace, "V")?,
                v_tol,
            ));
        }
        other => {
            return Err(Error::input(format!("unknown theorem tag {other}")));
        }
    }

    let pass = criteria.iter().all(|c| c.pass);
    Ok(ConvergenceReport {
        theorem_tag: tag,
        terminal_ne_error: terminal_ne,
        fitted_rate,
        criteria,
        pass,
        notes,
    })
}

fn push_theta_bounded(
    criteria: &mut Vec<CriterionResult>,
    notes: &mut Vec<String>,
    trace: &SimTrace,
    scenario: &Scenario,
) -> Result<()> {
    let times = trace.times();
    let theta_err = theta_error_series(trace, scenario)?;
    let (ok, sup, why) = check_bounded(&times, &theta_err, scenario.analysis.bound_cap_factor);
    criteria.push(CriterionResult {
        name: "θ̃ bounded".into(),
        value: sup,
        threshold: scenario.analysis.bound_cap_factor
            * (theta_err.first().copied().unwrap_or(0.0) + 1.0),
        pass: ok,
    });
    if !ok {
        notes.push(why);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StabilityClass {
    Converged,
    BoundedNonconverged,
    Diverged,
}

impl std::fmt::Display for StabilityClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StabilityClass::Converged => write!(f, "converged"),
            StabilityClass::BoundedNonconverged => write!(f, "bounded-nonconverged"),
            StabilityClass::Diverged => write!(f, "diverged"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DeltaOutcome {
    pub delta: f64,
    pub class: StabilityClass,
    pub terminal_ne_error: f64,
    pub aborted: bool,
}

#[derive(Debug, Clone)]
pub struct StabilityMap {
    pub rows: Vec<DeltaOutcome>,
    /// Largest grid point classified as converged.
    pub empirical_delta_star: Option<f64>,
}

/// Run the scenario once per `delta` value (in parallel under
/// [`ExecMode::Parallel`]) and classify each run. `delta = 0` is admitted
/// here — it freezes the seeking term and lands in the bounded-nonconverged
/// class — even though a validated scenario requires `delta > 0`.
pub fn delta_sweep(template: &Scenario, grid: &[f64], mode: ExecMode) -> Result<StabilityMap> {
    if grid.is_empty() {
        return Err(Error::input("delta grid is empty"));
    }
    if let Some(bad) = grid.iter().find(|d| !d.is_finite() || **d < 0.0) {
        return Err(Error::input(format!("delta grid entries must be >= 0, got {bad}")));
    }
    let items: Vec<f64> = grid.to_vec();
    let outcomes = map_items(mode, items, |delta| {
        let mut sc = template.clone();
        sc.controller.delta = delta;
        run_one_delta(&sc, delta)
    });
    let mut rows = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        rows.push(o?);
    }
    let empirical_delta_star = rows
        .iter()
        .filter(|r| r.class == StabilityClass::Converged)
        .map(|r| r.delta)
        .fold(None, |acc: Option<f64>, d| Some(acc.map_or(d, |a| a.max(d))));
    Ok(StabilityMap { rows, empirical_delta_star })
}

fn run_one_delta(scenario: &Scenario, delta: f64) -> Result<DeltaOutcome> {
    let trace = integrate(scenario)?;
    let initial_ne = trace
        .rows
        .first()
        .and_then(|r| trace.col_index("dist_ne").map(|ix| r[ix]))
        .unwrap_or(f64::INFINITY);
    let aborted = trace.aborted.is_some();
    let terminal = if aborted { f64::INFINITY } else { trace.terminal("dist_ne")? };
    let class = if aborted || !terminal.is_finite() || terminal > 1e3 * (initial_ne + 1.0) {
        StabilityClass::Diverged
    } else if terminal <= scenario.analysis.tol_ne {
        StabilityClass::Converged
    } else {
        StabilityClass::BoundedNonconverged
    };
    Ok(DeltaOutcome { delta, class, terminal_ne_error: terminal, aborted })
}

/// Write the stability map as CSV (one row per delta).
pub fn write_stability_map(map: &StabilityMap, path: &Path) -> Result<()> {
    let mut out = String::from("delta,class,terminal_ne_error,aborted\n");
    for row in &map.rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.delta, row.class, row.terminal_ne_error, row.aborted
        ));
    }
    atomic_write(path, out.as_bytes())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Csv,
    Svg,
}

/// One run's worth of material for the report writer.
pub struct ReportBundle<'a> {
    pub name: String,
    pub report: &'a ConvergenceReport,
    pub trace: Option<&'a SimTrace>,
}

/// Render a human-readable summary of several verdicts.
pub fn render_text_report(bundles: &[ReportBundle<'_>]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<28} {:>8} {:>14} {:>12}  result\n",
        "scenario", "theorem", "terminal_ne", "rate"
    ));
    for b in bundles {
        let rate = b
            .report
            .fitted_rate
            .map(|r| format!("{r:.4}"))
            .unwrap_or_else(|| "-".into());
        out.push_str(&format!(
            "{:<28} {:>8} {:>14.6e} {:>12}  {}\n",
            b.name,
            b.report.theorem_tag,
            b.report.terminal_ne_error,
            rate,
            if b.report.pass { "PASS" } else { "FAIL" }
        ));
    }
    out.push('\n');
    for b in bundles {
        out.push_str(&format!("[{}] theorem {}\n", b.name, b.report.theorem_tag));
        for c in &b.report.criteria {
            out.push_str(&format!(
                "  {:<34} {:>14.6e} <= {:>12.6e}  {}\n",
                c.name,
                c.value,
                c.threshold,
                if c.pass { "pass" } else { "FAIL" }
            ));
        }
        for n in &b.report.notes {
            out.push_str(&format!("  note: {n}\n"));
        }
    }
    out
}

/// Write reports in the requested formats; returns the written paths.
pub fn emit_report(
    bundles: &[ReportBundle<'_>],
    formats: &[ReportFormat],
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for format in formats {
        match format {
            ReportFormat::Text => {
                let path = dir.join("summary.txt");
                atomic_write(&path, render_text_report(bundles).as_bytes())?;
                written.push(path);
            }
            ReportFormat::Csv => {
                let mut out = String::from("scenario,theorem,criterion,value,threshold,pass\n");
                for b in bundles {
                    for c in &b.report.criteria {
                        out.push_str(&format!(
                            "{},{},{},{},{},{}\n",
                            b.name, b.report.theorem_tag, c.name, c.value, c.threshold, c.pass
                        ));
                    }
                }
                let path = dir.join("report.csv");
                atomic_write(&path, out.as_bytes())?;
                written.push(path);
            }
            ReportFormat::Svg => {
                for b in bundles {
                    let Some(trace) = b.trace else { continue };
                    written.extend(emit_trace_charts(b, trace, dir)?);
                }
            }
        }
    }
    Ok(written)
}

fn emit_trace_charts(
    bundle: &ReportBundle<'_>,
    trace: &SimTrace,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    let times = trace.times();
    let mut written = Vec::new();
    let mut chart = |title: &str, cols: Vec<&str>, log_y: bool, file: &str| -> Result<()> {
        let mut series = Vec::new();
        for col in &cols {
            if trace.col_index(col).is_some() {
                let vals = trace.column(col)?;
                series.push((col.to_string(), times.iter().cloned().zip(vals).collect::<Vec<_>>()));
            }
        }
        if series.is_empty() {
            return Ok(());
        }
        let refs: Vec<svg::Series<'_>> =
            series.iter().map(|(n, p)| svg::Series { name: n, points: p }).collect();
        let body = svg::line_chart(title, "t", "", &refs, log_y);
        let path = dir.join(file);
        atomic_write(&path, body.as_bytes())?;
        written.push(path);
        Ok(())
    };

    chart(
        &format!("{}: distance to NE", bundle.name),
        vec!["dist_ne", "dist_ne_gamma", "cons_err"],
        true,
        &format!("{}_ne.svg", bundle.name),
    )?;
    chart(
        &format!("{}: Lyapunov monitor", bundle.name),
        vec!["V2", "V"],
        false,
        &format!("{}_v.svg", bundle.name),
    )?;
    let dhat_cols: Vec<String> = trace
        .columns
        .iter()
        .filter(|c| c.starts_with("dhat_"))
        .cloned()
        .collect();
    if !dhat_cols.is_empty() {
        chart(
            &format!("{}: disturbance bound estimates", bundle.name),
            dhat_cols.iter().map(|s| s.as_str()).collect(),
            false,
            &format!("{}_dhat.svg", bundle.name),
        )?;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn synthetic_trace(cols: Vec<&str>, rows: Vec<Vec<f64>>) -> SimTrace {
        SimTrace {
            columns: cols.into_iter().map(String::from).collect(),
            rows,
            aborted: None,
            layout_version: 1,
        }
    }

    #[test]
    fn fit_recovers_synthetic_exponential() {
        let rows: Vec<Vec<f64>> = (0..=500)
            .map(|k| {
                let t = k as f64 * 0.01;
                vec![t, (-2.0 * t).exp()]
            })
            .collect();
        let trace = synthetic_trace(vec!["t", "sig"], rows);
        let (slope, r2) = fit_exponential_rate(&trace, "sig", (0.0, 5.0)).unwrap();
        assert_relative_eq!(slope, -2.0, epsilon = 1e-6);
        assert!(r2 > 0.999999);
    }

    #[test]
    fn fit_constant_signal_has_zero_slope() {
        let rows: Vec<Vec<f64>> = (0..=100).map(|k| vec![k as f64 * 0.1, 3.5]).collect();
        let trace = synthetic_trace(vec!["t", "sig"], rows);
        let (slope, _) = fit_exponential_rate(&trace, "sig", (0.0, 10.0)).unwrap();
        assert_relative_eq!(slope, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn fit_recovers_rates_across_magnitudes() {
        for lambda in [-10.0, -3.0, -1.0, -0.1] {
            let rows: Vec<Vec<f64>> = (0..=1000)
                .map(|k| {
                    let t = k as f64 * 0.002;
                    vec![t, (lambda * t).exp()]
                })
                .collect();
            let trace = synthetic_trace(vec!["t", "sig"], rows);
            let (slope, _) = fit_exponential_rate(&trace, "sig", (0.0, 2.0)).unwrap();
            assert_relative_eq!(slope, lambda, epsilon = 1e-6);
        }
    }

    #[test]
    fn fit_window_outside_trace_is_error() {
        let trace = synthetic_trace(vec!["t", "sig"], vec![vec![0.0, 1.0], vec![1.0, 0.5]]);
        assert!(fit_exponential_rate(&trace, "sig", (0.0, 5.0)).is_err());
        assert!(fit_exponential_rate(&trace, "missing", (0.0, 1.0)).is_err());
    }

    #[test]
    fn positive_increment_rate_detects_bumps() {
        let trace = synthetic_trace(
            vec!["t", "V2"],
            vec![vec![0.0, 1.0], vec![1.0, 0.5], vec![2.0, 0.6], vec![3.0, 0.1]],
        );
        let rate = max_positive_increment_rate(&trace, "V2").unwrap();
        assert_relative_eq!(rate, 0.1, epsilon = 1e-12);
    }

    #[test]
    fn dhat_violation_counter() {
        let trace = synthetic_trace(
            vec!["t", "dhat_1"],
            vec![vec![0.0, 0.0], vec![1.0, 0.5], vec![2.0, 0.4], vec![3.0, 0.6]],
        );
        assert_eq!(dhat_violations(&trace), 1);
    }

    #[test]
    fn boundedness_flags_divergence_trend() {
        let times: Vec<f64> = (0..=100).map(|k| k as f64).collect();
        let growing: Vec<f64> = times.iter().map(|t| 0.01 * t * t).collect();
        let (ok, _, _) = check_bounded(&times, &growing, 1e6);
        assert!(!ok, "quadratic growth must trip the trend check");
        let settled: Vec<f64> = times.iter().map(|t| 2.0 - (-0.1 * t).exp()).collect();
        let (ok, _, _) = check_bounded(&times, &settled, 1e3);
        assert!(ok);
    }
}
