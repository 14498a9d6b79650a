//! Closed-loop assembly and fixed-step, event-aligned integration.
//!
//! A scenario couples a certified game, a switching schedule, one plant per
//! player, a control law, and integration settings. The full closed-loop
//! state is one flat vector laid out player by player, and within a player:
//! `ξ_i`, then `γ̂_i`, `z_i`, `θ̂_i`, `D̂_i` as the law requires. The layout
//! is versioned and recorded in the trace metadata so analysis tools can
//! parse traces blindly.
//!
//! Integration is fixed-step (explicit Euler or classic RK4) on a grid built
//! so that no step straddles a switching instant or a disturbance
//! discontinuity: each inter-event segment is split uniformly into steps no
//! longer than the nominal `h`, and RK stages sample the discontinuous
//! inputs (graph, square-wave and piecewise-constant disturbances) at the
//! segment anchor, so the integrated field is smooth inside every step. The
//! right-hand side of the disturbance-rejection law in exact sign mode is
//! additionally discontinuous in the state; that combination forces Euler
//! (RK4 is rejected at validation) and the simulator reports a chattering
//! rate instead of hiding the effect. Adaptive step-size control is out of
//! scope by design: with a discontinuous right-hand side, event-aligned
//! fixed steps keep runs reproducible bit for bit.

use nalgebra::{Complex, DVector};
use sha2::{Digest, Sha256};

use crate::analysis::AnalysisConfig;
use crate::control::{
    adaptive_control, disturbance_rejection_control, perfect_info_control,
    single_integrator_consensus_control, ControllerConfig, Law, Neighbor, PlayerGains, SignMode,
};
use crate::error::{Diagnostic, Error, Result};
use crate::game::{GameSpec, MonotonicityCertificate, NeMethod};
use crate::graph::{snapshot, GraphSnapshot, SwitchingSchedule};
use crate::plant::{build_realization, plant_derivative_with, CompanionRealization, PlantSpec};

/// Bumped whenever the state layout or trace column scheme changes.
pub const LAYOUT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Euler,
    Rk4,
}

#[derive(Debug, Clone, Copy)]
pub struct Integration {
    pub step: f64,
    pub horizon: f64,
    pub method: Method,
    /// Record every `stride`-th grid point (the final point is always kept).
    pub stride: usize,
}

impl Default for Integration {
    fn default() -> Self {
        Integration { step: 1e-3, horizon: 50.0, method: Method::Rk4, stride: 1 }
    }
}

/// One player's plant with its companion realization and initial state.
#[derive(Debug, Clone)]
pub struct Plant {
    pub spec: PlantSpec,
    pub realization: CompanionRealization,
    pub initial_state: DVector<f64>,
}

impl Plant {
    /// Build the realization from poles; a missing initial state means the
    /// origin.
    pub fn new(
        spec: PlantSpec,
        poles: &[Complex<f64>],
        initial_state: Option<DVector<f64>>,
    ) -> Result<Self> {
        let realization = build_realization(spec.order(), spec.dim(), poles)?;
        let initial_state = initial_state.unwrap_or_else(|| DVector::zeros(spec.state_dim()));
        if initial_state.len() != spec.state_dim() {
            return Err(Error::input(format!(
                "initial state has length {}, expected {}",
                initial_state.len(),
                spec.state_dim()
            )));
        }
        Ok(Plant { spec, realization, initial_state })
    }
}

/// A validated, runnable scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub game: GameSpec,
    pub certificate: MonotonicityCertificate,
    pub schedule: SwitchingSchedule,
    pub plants: Vec<Plant>,
    pub controller: ControllerConfig,
    pub integration: Integration,
    pub analysis: AnalysisConfig,
    /// Fully resolved scenario document for the metadata sidecar, when the
    /// scenario came from a file.
    pub resolved: Option<serde_json::Value>,
}

impl Scenario {
    /// Validate cross-section consistency and certify the game. All findings
    /// are reported together, each with a field path.
    pub fn new(
        game: GameSpec,
        certificate: MonotonicityCertificate,
        schedule: SwitchingSchedule,
        plants: Vec<Plant>,
        controller: ControllerConfig,
        integration: Integration,
        analysis: AnalysisConfig,
    ) -> Result<Self> {
        let mut diags: Vec<Diagnostic> = Vec::new();
        let mut push = |path: &str, message: String| {
            diags.push(Diagnostic { path: path.to_string(), message });
        };

        if certificate.mu <= 0.0 {
            push("game", format!("game is uncertified (mu = {})", certificate.mu));
        }
        if schedule.num_nodes() != game.num_players() {
            push(
                "schedule.graphs",
                format!(
                    "graphs have {} nodes but the game has {} players",
                    schedule.num_nodes(),
                    game.num_players()
                ),
            );
        }
        if plants.len() != game.num_players() {
            push(
                "plants",
                format!("{} plants for {} players", plants.len(), game.num_players()),
            );
        }
        for (i, plant) in plants.iter().enumerate() {
            if i < game.num_players() && plant.spec.dim() != game.dims()[i] {
                push(
                    &format!("plants.{i}.dim"),
                    format!(
                        "plant dim {} does not match game dim {}",
                        plant.spec.dim(),
                        game.dims()[i]
                    ),
                );
            }
            if plant.realization.order() != plant.spec.order()
                || plant.realization.dim() != plant.spec.dim()
            {
                push(&format!("plants.{i}.poles"), "realization does not match plant".into());
            }
            if plant.initial_state.len() != plant.spec.state_dim() {
                push(
                    &format!("plants.{i}.initial_state"),
                    format!(
                        "length {} does not match n_i*r_i = {}",
                        plant.initial_state.len(),
                        plant.spec.state_dim()
                    ),
                );
            }
        }

        let specs: Vec<PlantSpec> = plants.iter().map(|p| p.spec.clone()).collect();
        for msg in controller.validate(&game, &specs) {
            push("controller", msg);
        }

        let h = integration.step;
        if !(h > 0.0) {
            push("integration.step", format!("step must be positive, got {h}"));
        } else {
            let tau0 = schedule.min_dwell();
            if h > tau0 / 10.0 + 1e-15 {
                push(
                    "integration.step",
                    format!("step {h} exceeds tau_0/10 = {}", tau0 / 10.0),
                );
            }
            for (i, plant) in plants.iter().enumerate() {
                if let Some(dwell) = plant.spec.disturbance().discontinuity_period() {
                    if h > dwell / 10.0 + 1e-15 {
                        push(
                            &format!("plants.{i}.disturbance"),
                            format!("step {h} exceeds disturbance dwell/10 = {}", dwell / 10.0),
                        );
                    }
                }
            }
        }
        if !(integration.horizon > 0.0) {
            push("integration.horizon", "horizon must be positive".into());
        }
        if integration.stride == 0 {
            push("integration.stride", "stride must be >= 1".into());
        }
        if controller.law == Law::AdaptiveDisturbanceRejection
            && controller.sign_mode == SignMode::Exact
            && integration.method == Method::Rk4
        {
            push(
                "integration.method",
                "RK4 with the exact sign term is rejected (discontinuous right-hand side); \
                 use Euler or the smoothed sign mode"
                    .into(),
            );
        }

        // initial estimate shapes
        let n = game.total_dim();
        let np = game.num_players();
        if let Some(gh) = &controller.init.gamma_hat {
            if gh.len() != np || gh.iter().enumerate().any(|(i, v)| v.len() != game.dims()[i]) {
                push("controller.init.gamma_hat", "per-player shapes do not match dims".into());
            }
        }
        if let Some(z) = &controller.init.z {
            if z.len() != np || z.iter().any(|v| v.len() != n) {
                push("controller.init.z", format!("each player's z must have length {n}"));
            }
        }
        if let Some(th) = &controller.init.theta_hat {
            if th.len() != np
                || th
                    .iter()
                    .enumerate()
                    .any(|(i, v)| i < plants.len() && v.len() != plants[i].spec.param_dim())
            {
                push("controller.init.theta_hat", "per-player shapes do not match m_i".into());
            }
        }
        if let Some(dh) = &controller.init.d_hat {
            if dh.len() != np {
                push("controller.init.d_hat", format!("must list {np} values"));
            }
        }

        if !diags.is_empty() {
            return Err(Error::Validation(diags));
        }
        Ok(Scenario {
            game,
            certificate,
            schedule,
            plants,
            controller,
            integration,
            analysis,
            resolved: None,
        })
    }

    pub fn with_resolved(mut self, resolved: serde_json::Value) -> Self {
        self.resolved = Some(resolved);
        self
    }

    pub fn layout(&self) -> StateLayout {
        StateLayout::new(
            self.controller.law,
            self.game.dims(),
            &self.plants.iter().map(|p| p.spec.order()).collect::<Vec<_>>(),
            &self.plants.iter().map(|p| p.spec.param_dim()).collect::<Vec<_>>(),
        )
    }

    /// Assemble the initial full state from plant initial conditions and the
    /// controller initializations (defaults: `γ̂_i(0) = γ_i(0)`, zeros for
    /// `z`, `θ̂`, `D̂`).
    pub fn initial_state(&self) -> Result<DVector<f64>> {
        let layout = self.layout();
        let mut state = DVector::zeros(layout.total);
        for (i, plant) in self.plants.iter().enumerate() {
            state
                .rows_mut(layout.xi_range(i).start, plant.spec.state_dim())
                .copy_from(&plant.initial_state);
            if let Some(r) = layout.gamma_hat_range(i) {
                let gh = match &self.controller.init.gamma_hat {
                    Some(values) => values[i].clone(),
                    None => plant.realization.fictitious_output(&plant.initial_state)?,
                };
                state.rows_mut(r.start, r.len()).copy_from(&gh);
            }
            if let Some(r) = layout.z_range(i) {
                if let Some(values) = &self.controller.init.z {
                    state.rows_mut(r.start, r.len()).copy_from(&values[i]);
                }
            }
            if let Some(r) = layout.theta_hat_range(i) {
                if let Some(values) = &self.controller.init.theta_hat {
                    state.rows_mut(r.start, r.len()).copy_from(&values[i]);
                }
            }
            if let Some(ix) = layout.d_hat_index(i) {
                if let Some(values) = &self.controller.init.d_hat {
                    state[ix] = values[i];
                }
            }
        }
        Ok(state)
    }

    /// Reference NE used by the monitors: closed form for LQ games, the
    /// pseudogradient flow otherwise.
    pub fn reference_ne(&self) -> Result<DVector<f64>> {
        match self.game.solve_ne(NeMethod::ClosedForm) {
            Ok(x) => Ok(x),
            Err(_) => self.game.solve_ne(NeMethod::Flow { step: 1e-2, horizon: 1e4, tol: 1e-8 }),
        }
    }
}

/// Offsets of one player's blocks inside the flat state vector. Blocks that
/// the law does not use are `None`.
#[derive(Debug, Clone)]
struct PlayerOffsets {
    xi: std::ops::Range<usize>,
    gamma_hat: Option<std::ops::Range<usize>>,
    z: Option<std::ops::Range<usize>>,
    theta_hat: Option<std::ops::Range<usize>>,
    d_hat: Option<usize>,
}

/// Versioned flat-state layout: players in order, and within a player
/// `ξ_i`, `γ̂_i`, `z_i`, `θ̂_i`, `D̂_i` as applicable for the law.
#[derive(Debug, Clone)]
pub struct StateLayout {
    pub law: Law,
    pub dims: Vec<usize>,
    pub orders: Vec<usize>,
    pub param_dims: Vec<usize>,
    pub total: usize,
    offsets: Vec<PlayerOffsets>,
}

impl StateLayout {
    pub fn new(law: Law, dims: &[usize], orders: &[usize], param_dims: &[usize]) -> Self {
        let n: usize = dims.iter().sum();
        let mut offsets = Vec::with_capacity(dims.len());
        let mut at = 0usize;
        for i in 0..dims.len() {
            let xi = at..at + dims[i] * orders[i];
            at = xi.end;
            let mut gamma_hat = None;
            let mut z = None;
            let mut theta_hat = None;
            let mut d_hat = None;
            match law {
                Law::PerfectInfo => {}
                Law::SingleIntegratorConsensus => {
                    z = Some(at..at + n);
                    at += n;
                }
                Law::AdaptiveImperfect | Law::AdaptiveDisturbanceRejection => {
                    gamma_hat = Some(at..at + dims[i]);
                    at += dims[i];
                    z = Some(at..at + n);
                    at += n;
                    theta_hat = Some(at..at + param_dims[i]);
                    at += param_dims[i];
                    if law == Law::AdaptiveDisturbanceRejection {
                        d_hat = Some(at);
                        at += 1;
                    }
                }
            }
            offsets.push(PlayerOffsets { xi, gamma_hat, z, theta_hat, d_hat });
        }
        StateLayout {
            law,
            dims: dims.to_vec(),
            orders: orders.to_vec(),
            param_dims: param_dims.to_vec(),
            total: at,
            offsets,
        }
    }

    pub fn xi_range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i].xi.clone()
    }

    pub fn gamma_hat_range(&self, i: usize) -> Option<std::ops::Range<usize>> {
        self.offsets[i].gamma_hat.clone()
    }

    pub fn z_range(&self, i: usize) -> Option<std::ops::Range<usize>> {
        self.offsets[i].z.clone()
    }

    pub fn theta_hat_range(&self, i: usize) -> Option<std::ops::Range<usize>> {
        self.offsets[i].theta_hat.clone()
    }

    pub fn d_hat_index(&self, i: usize) -> Option<usize> {
        self.offsets[i].d_hat
    }

    /// Stacked actions `x = col(x_1, ..., x_N)` (first block of each `ξ_i`).
    pub fn actions(&self, state: &DVector<f64>) -> DVector<f64> {
        let n: usize = self.dims.iter().sum();
        let mut x = DVector::zeros(n);
        let mut at = 0;
        for i in 0..self.dims.len() {
            let xi = self.xi_range(i);
            for c in 0..self.dims[i] {
                x[at + c] = state[xi.start + c];
            }
            at += self.dims[i];
        }
        x
    }
}

/// Everything the closed loop produced at one evaluation point.
#[derive(Debug, Clone)]
pub struct EvalRecord {
    pub dstate: DVector<f64>,
    pub u: Vec<DVector<f64>>,
    pub d: Vec<DVector<f64>>,
    pub sigma: usize,
}

/// The assembled closed-loop derivative map for a scenario.
pub struct ClosedLoop<'a> {
    pub scenario: &'a Scenario,
    pub layout: StateLayout,
}

impl<'a> ClosedLoop<'a> {
    pub fn new(scenario: &'a Scenario) -> Self {
        let layout = scenario.layout();
        ClosedLoop { scenario, layout }
    }

    /// Derivative of the full state at `(t, state)`.
    pub fn derivative(&self, t: f64, state: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.eval_anchored(t, state, t)?.dstate)
    }

    /// Full evaluation at `(t, state)` including controls and disturbances.
    pub fn eval(&self, t: f64, state: &DVector<f64>) -> Result<EvalRecord> {
        self.eval_anchored(t, state, t)
    }

    /// Evaluation with the discontinuous inputs (graph, piecewise-constant
    /// disturbances) frozen at the segment anchor, so RK stages see a smooth
    /// field inside an event-aligned step.
    fn eval_anchored(&self, t: f64, state: &DVector<f64>, anchor: f64) -> Result<EvalRecord> {
        let sc = self.scenario;
        let layout = &self.layout;
        if state.len() != layout.total {
            return Err(Error::input(format!(
                "state has length {}, layout expects {}",
                state.len(),
                layout.total
            )));
        }
        let snap: GraphSnapshot = snapshot(&sc.schedule, anchor, sc.game.dims())?;
        let np = sc.game.num_players();
        let mut dstate = DVector::zeros(layout.total);
        let mut u_all = Vec::with_capacity(np);
        let mut d_all = Vec::with_capacity(np);

        // full-information laws need every player's fictitious output
        let gamma_all = if sc.controller.law == Law::PerfectInfo {
            let mut g = DVector::zeros(sc.game.total_dim());
            let mut at = 0;
            for (i, plant) in sc.plants.iter().enumerate() {
                let xi = state.rows(layout.xi_range(i).start, plant.spec.state_dim()).clone_owned();
                let gi = plant.realization.fictitious_output(&xi)?;
                g.rows_mut(at, plant.spec.dim()).copy_from(&gi);
                at += plant.spec.dim();
            }
            Some(g)
        } else {
            None
        };

        let slice = state.as_slice();
        for i in 0..np {
            let plant = &sc.plants[i];
            let xi = state.rows(layout.xi_range(i).start, plant.spec.state_dim()).clone_owned();
            let d_i = plant.spec.disturbance().sample_anchored(plant.spec.dim(), t, anchor);

            let u_i = match sc.controller.law {
                Law::PerfectInfo => perfect_info_control(
                    &sc.game,
                    &plant.spec,
                    &plant.realization,
                    &xi,
                    gamma_all.as_ref().expect("computed above"),
                    i,
                    t,
                )?,
                Law::SingleIntegratorConsensus => {
                    let z_i = range_vec(slice, layout.z_range(i).expect("layout has z"));
                    let neighbors = self.neighbor_views(&snap, i, slice);
                    let (u, dz) = single_integrator_consensus_control(
                        &sc.game,
                        sc.controller.delta,
                        sc.controller.k[i],
                        &z_i,
                        &neighbors,
                        i,
                    )?;
                    let zr = layout.z_range(i).expect("layout has z");
                    dstate.rows_mut(zr.start, zr.len()).copy_from(&dz);
                    u
                }
                Law::AdaptiveImperfect | Law::AdaptiveDisturbanceRejection => {
                    let gains = PlayerGains {
                        delta: sc.controller.delta,
                        k: sc.controller.k[i],
                        kappa: sc.controller.kappa[i],
                        lambda: &sc.controller.lambda[i],
                    };
                    let ghr = layout.gamma_hat_range(i).expect("layout has gamma_hat");
                    let zr = layout.z_range(i).expect("layout has z");
                    let thr = layout.theta_hat_range(i).expect("layout has theta_hat");
                    let gamma_hat_i = range_vec(slice, ghr.clone());
                    let z_i = range_vec(slice, zr.clone());
                    let theta_hat_i = range_vec(slice, thr.clone());
                    let neighbors = self.neighbor_views(&snap, i, slice);
                    let derivs = if sc.controller.law == Law::AdaptiveImperfect {
                        adaptive_control(
                            &sc.game,
                            gains,
                            plant.spec.regressor(),
                            &plant.realization,
                            &xi,
                            &gamma_hat_i,
                            &z_i,
                            &theta_hat_i,
                            &neighbors,
                            i,
                            t,
                        )?
                    } else {
                        let dh = layout.d_hat_index(i).expect("layout has d_hat");
                        disturbance_rejection_control(
                            &sc.game,
                            gains,
                            plant.spec.regressor(),
                            &plant.realization,
                            &xi,
                            &gamma_hat_i,
                            &z_i,
                            &theta_hat_i,
                            state[dh],
                            sc.controller.sign_mode,
                            &neighbors,
                            i,
                            t,
                        )?
                    };
                    dstate.rows_mut(ghr.start, ghr.len()).copy_from(&derivs.gamma_hat_dot);
                    dstate.rows_mut(zr.start, zr.len()).copy_from(&derivs.z_dot);
                    dstate.rows_mut(thr.start, thr.len()).copy_from(&derivs.theta_hat_dot);
                    if let Some(dh) = layout.d_hat_index(i) {
                        dstate[dh] = derivs.d_hat_dot;
                    }
                    derivs.u
                }
            };

            let dxi = plant_derivative_with(&plant.spec, &plant.realization, &xi, &u_i, t, &d_i)?;
            let xr = layout.xi_range(i);
            dstate.rows_mut(xr.start, xr.len()).copy_from(&dxi);
            u_all.push(u_i);
            d_all.push(d_i);
        }

        Ok(EvalRecord { dstate, u: u_all, d: d_all, sigma: snap.index })
    }

    /// Snapshot-gated neighbor views for player `i`: only in-neighbors with
    /// positive weight appear, which is what keeps the laws structurally
    /// unable to read anything else.
    fn neighbor_views<'s>(
        &self,
        snap: &GraphSnapshot,
        i: usize,
        state: &'s [f64],
    ) -> Vec<Neighbor<'s>> {
        let layout = &self.layout;
        snap.in_neighbors(i)
            .into_iter()
            .map(|(j, w)| {
                let estimate = &state[layout.z_range(j).expect("law has estimates")];
                let reference = match self.scenario.controller.law {
                    // the single-integrator estimator couples to the true
                    // action x_j = ξ_j (first-order plants)
                    Law::SingleIntegratorConsensus => {
                        let r = layout.xi_range(j);
                        &state[r.start..r.start + layout.dims[j]]
                    }
                    _ => &state[layout.gamma_hat_range(j).expect("law has gamma_hat")],
                };
                Neighbor { index: j, weight: w, estimate, reference }
            })
            .collect()
    }
}

fn range_vec(slice: &[f64], r: std::ops::Range<usize>) -> DVector<f64> {
    DVector::from_column_slice(&slice[r])
}

/// Scalar monitor values at one state.
#[derive(Debug, Clone)]
pub struct MonitorRecord {
    /// `V2 = 1/2 γ̃'γ̃ + 1/2 θ̃'Λ⁻¹θ̃` for the adaptive law, plus
    /// `1/2 D̃'D̃` for the disturbance law. `None` for the other laws.
    pub v: Option<f64>,
    pub dist_ne: f64,
    pub dist_ne_gamma: f64,
    pub cons_err: Option<f64>,
    pub gamma_hat_err: Option<f64>,
    pub xs_norm: Option<f64>,
}

/// Evaluate the Lyapunov-style monitors. Uses plant truth (`θ_i`, `D_i`),
/// which is an analysis-only privilege; controllers never see these values.
pub fn monitor_values(
    scenario: &Scenario,
    state: &DVector<f64>,
    _t: f64,
    x_star: &DVector<f64>,
) -> Result<MonitorRecord> {
    let layout = scenario.layout();
    if state.len() != layout.total {
        return Err(Error::input("state does not match the scenario layout"));
    }
    let np = scenario.game.num_players();

    let x = layout.actions(state);
    let dist_ne = (&x - x_star).norm();

    let mut gamma = DVector::zeros(scenario.game.total_dim());
    let mut at = 0;
    let mut xs_sq = 0.0;
    let mut any_high_order = false;
    for (i, plant) in scenario.plants.iter().enumerate() {
        let xi = state.rows(layout.xi_range(i).start, plant.spec.state_dim()).clone_owned();
        let gi = plant.realization.fictitious_output(&xi)?;
        gamma.rows_mut(at, plant.spec.dim()).copy_from(&gi);
        at += plant.spec.dim();
        if plant.spec.order() > 1 {
            any_high_order = true;
            let n_i = plant.spec.dim();
            xs_sq += xi.rows(n_i, xi.len() - n_i).norm_squared();
        }
    }
    let dist_ne_gamma = (&gamma - x_star).norm();
    let xs_norm = any_high_order.then(|| xs_sq.sqrt());

    let mut cons_err = None;
    if layout.z_range(0).is_some() {
        let mut sq = 0.0;
        for i in 0..np {
            let zr = layout.z_range(i).expect("all players share the layout");
            let z_i = state.rows(zr.start, zr.len()).clone_owned();
            sq += (&z_i - x_star).norm_squared();
        }
        cons_err = Some(sq.sqrt());
    }

    let mut gamma_hat_err = None;
    let mut v = None;
    if layout.gamma_hat_range(0).is_some() {
        let mut gerr_sq = 0.0;
        let mut v_acc = 0.0;
        for i in 0..np {
            let ghr = layout.gamma_hat_range(i).expect("layout has gamma_hat");
            let gh = state.rows(ghr.start, ghr.len()).clone_owned();
            let gi = gamma.rows(scenario.game.block_range(i).start, scenario.game.dims()[i]);
            let diff = &gh - gi;
            gerr_sq += diff.norm_squared();
            v_acc += 0.5 * diff.norm_squared();
            if let Some(thr) = layout.theta_hat_range(i) {
                if thr.len() > 0 {
                    let th = state.rows(thr.start, thr.len()).clone_owned();
                    let tilde = &th - scenario.plants[i].spec.true_theta();
                    let lam = &scenario.controller.lambda[i];
                    let solved = lam
                        .clone()
                        .lu()
                        .solve(&tilde)
                        .ok_or_else(|| Error::input("lambda is singular"))?;
                    v_acc += 0.5 * tilde.dot(&solved);
                }
            }
            if let Some(dh) = layout.d_hat_index(i) {
                let tilde = state[dh] - scenario.plants[i].spec.disturbance().true_bound();
                v_acc += 0.5 * tilde * tilde;
            }
        }
        gamma_hat_err = Some(gerr_sq.sqrt());
        v = Some(v_acc);
    }

    Ok(MonitorRecord { v, dist_ne, dist_ne_gamma, cons_err, gamma_hat_err, xs_norm })
}

#[derive(Debug, Clone)]
pub struct AbortInfo {
    pub t: f64,
    pub detail: String,
}

/// Time-indexed record of a run. Rows are dense; `columns` names every
/// entry. Column naming: `x_i_c` for plant states (the first `n_i` entries
/// of player `i`'s block are the action), `gamma_i_c`, `gammahat_i_c`,
/// `z_i_c`, `thetahat_i_c`, `dhat_i`, `u_i_c`, `d_i_c`, then the monitors.
#[derive(Debug, Clone)]
pub struct SimTrace {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub aborted: Option<AbortInfo>,
    pub layout_version: u32,
}

impl SimTrace {
    pub fn col_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let ix = self
            .col_index(name)
            .ok_or_else(|| Error::input(format!("trace has no column named {name}")))?;
        Ok(self.rows.iter().map(|r| r[ix]).collect())
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r[0]).collect()
    }

    pub fn last_row(&self) -> Result<&[f64]> {
        self.rows
            .last()
            .map(|r| r.as_slice())
            .ok_or_else(|| Error::input("trace is empty"))
    }

    /// Value of `column` in the final recorded row.
    pub fn terminal(&self, name: &str) -> Result<f64> {
        let ix = self
            .col_index(name)
            .ok_or_else(|| Error::input(format!("trace has no column named {name}")))?;
        Ok(self.last_row()?[ix])
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let mut first = true;
            for v in row {
                if !first {
                    out.push(',');
                }
                first = false;
                // shortest round-trippable decimal form
                out.push_str(&format_float(*v));
            }
            out.push('\n');
        }
        out
    }

    /// SHA-256 over the CSV bytes, hex-encoded; identifies trace content
    /// independently of file timestamps.
    pub fn content_hash(&self) -> String {
        let digest = Sha256::digest(self.to_csv_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn format_float(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{v:.1}")
    } else {
        let mut s = format!("{v}");
        if !s.contains('.') && !s.contains('e') && !s.contains("inf") && !s.contains("NaN") {
            s.push_str(".0");
        }
        s
    }
}

/// Integrate the scenario and record the trace.
pub fn integrate(scenario: &Scenario) -> Result<SimTrace> {
    let loop_ = ClosedLoop::new(scenario);
    let layout = &loop_.layout;
    let x_star = scenario.reference_ne()?;
    let grid = build_grid(scenario)?;
    let columns = trace_columns(scenario, layout);
    let chatter_enabled = scenario.controller.law == Law::AdaptiveDisturbanceRejection;

    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(grid.len() / scenario.integration.stride + 2);
    let mut state = scenario.initial_state()?;
    let mut aborted = None;

    // chattering bookkeeping: sign of every γ̃ component across steps
    let n_total = scenario.game.total_dim();
    let mut prev_signs: Vec<f64> = vec![0.0; n_total];
    let mut flips: u64 = 0;

    for (step_ix, pair) in grid.windows(2).enumerate() {
        let (t_a, t_b) = (pair[0], pair[1]);
        if let Some(bad) = first_non_finite(&state) {
            aborted = Some(AbortInfo {
                t: t_a,
                detail: format!(
                    "non-finite state component {bad} ({}) at t = {t_a}",
                    column_for_state_index(&columns, bad)
                ),
            });
            break;
        }
        let full = loop_.eval_anchored(t_a, &state, t_a)?;
        if step_ix % scenario.integration.stride == 0 {
            let row = record_row(
                scenario, layout, t_a, &state, &full, &x_star, flips, chatter_enabled,
            )?;
            if row.iter().any(|v| !v.is_finite()) {
                aborted = Some(AbortInfo {
                    t: t_a,
                    detail: format!("non-finite record at t = {t_a}"),
                });
                break;
            }
            rows.push(row);
        }
        if chatter_enabled {
            flips += count_sign_flips(scenario, layout, &state, &mut prev_signs)?;
        }

        let h = t_b - t_a;
        match scenario.integration.method {
            Method::Euler => {
                state += &full.dstate * h;
            }
            Method::Rk4 => {
                let k1 = full.dstate.clone();
                let k2 = loop_
                    .eval_anchored(t_a + h / 2.0, &(&state + &k1 * (h / 2.0)), t_a)?
                    .dstate;
                let k3 = loop_
                    .eval_anchored(t_a + h / 2.0, &(&state + &k2 * (h / 2.0)), t_a)?
                    .dstate;
                let k4 = loop_.eval_anchored(t_a + h, &(&state + &k3 * h), t_a)?.dstate;
                state += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            }
        }
    }

    if aborted.is_none() {
        let t_end = *grid.last().expect("grid is never empty");
        if let Some(bad) = first_non_finite(&state) {
            aborted = Some(AbortInfo {
                t: t_end,
                detail: format!(
                    "non-finite state component {bad} ({}) at t = {t_end}",
                    column_for_state_index(&columns, bad)
                ),
            });
        } else {
            let full = loop_.eval_anchored(t_end, &state, t_end)?;
            if chatter_enabled {
                flips += count_sign_flips(scenario, layout, &state, &mut prev_signs)?;
            }
            let row = record_row(
                scenario, layout, t_end, &state, &full, &x_star, flips, chatter_enabled,
            )?;
            if row.iter().any(|v| !v.is_finite()) {
                aborted =
                    Some(AbortInfo { t: t_end, detail: format!("non-finite record at t = {t_end}") });
            } else {
                rows.push(row);
            }
        }
    }

    Ok(SimTrace { columns, rows, aborted, layout_version: LAYOUT_VERSION })
}

/// Event-aligned integration grid: every switching instant and every
/// disturbance discontinuity in `(0, T)` is a grid point; segments between
/// events are split uniformly into steps of length at most `h`.
fn build_grid(scenario: &Scenario) -> Result<Vec<f64>> {
    let t_end = scenario.integration.horizon;
    let h = scenario.integration.step;
    let mut events: Vec<f64> = scenario
        .schedule
        .switching_instants(t_end)
        .into_iter()
        .filter(|&e| e > 1e-12 && e < t_end - 1e-12)
        .collect();
    for plant in &scenario.plants {
        if let Some(p) = plant.spec.disturbance().discontinuity_period() {
            let mut k = 1u64;
            loop {
                let e = k as f64 * p;
                if e >= t_end - 1e-12 {
                    break;
                }
                events.push(e);
                k += 1;
            }
        }
    }
    events.push(t_end);
    events.sort_by(|a, b| a.partial_cmp(b).expect("event times are finite"));
    events.dedup_by(|a, b| (*a - *b).abs() < 1e-9);

    let mut grid = vec![0.0];
    let mut prev = 0.0;
    for e in events {
        if e <= prev + 1e-12 {
            continue;
        }
        let nsub = (((e - prev) / h) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let sub = (e - prev) / nsub as f64;
        for q in 1..nsub {
            grid.push(prev + q as f64 * sub);
        }
        grid.push(e);
        prev = e;
    }
    if grid.len() < 2 {
        return Err(Error::input("integration horizon admits no steps"));
    }
    Ok(grid)
}

fn trace_columns(scenario: &Scenario, layout: &StateLayout) -> Vec<String> {
    let mut cols = vec!["t".to_string(), "sigma".to_string()];
    let np = scenario.game.num_players();
    for i in 0..np {
        for c in 0..layout.dims[i] * layout.orders[i] {
            cols.push(format!("x_{}_{}", i + 1, c + 1));
        }
    }
    for i in 0..np {
        for c in 0..layout.dims[i] {
            cols.push(format!("gamma_{}_{}", i + 1, c + 1));
        }
    }
    if layout.gamma_hat_range(0).is_some() {
        for i in 0..np {
            for c in 0..layout.dims[i] {
                cols.push(format!("gammahat_{}_{}", i + 1, c + 1));
            }
        }
    }
    if layout.z_range(0).is_some() {
        let n: usize = layout.dims.iter().sum();
        for i in 0..np {
            for c in 0..n {
                cols.push(format!("z_{}_{}", i + 1, c + 1));
            }
        }
    }
    if layout.theta_hat_range(0).is_some() {
        for i in 0..np {
            for c in 0..layout.param_dims[i] {
                cols.push(format!("thetahat_{}_{}", i + 1, c + 1));
            }
        }
    }
    if layout.d_hat_index(0).is_some() {
        for i in 0..np {
            cols.push(format!("dhat_{}", i + 1));
        }
    }
    for i in 0..np {
        for c in 0..layout.dims[i] {
            cols.push(format!("u_{}_{}", i + 1, c + 1));
        }
    }
    let any_disturbance = scenario
        .plants
        .iter()
        .any(|p| p.spec.disturbance().true_bound() != 0.0);
    if any_disturbance {
        for i in 0..np {
            for c in 0..layout.dims[i] {
                cols.push(format!("d_{}_{}", i + 1, c + 1));
            }
        }
    }
    match scenario.controller.law {
        Law::AdaptiveImperfect => cols.push("V2".into()),
        Law::AdaptiveDisturbanceRejection => cols.push("V".into()),
        _ => {}
    }
    cols.push("dist_ne".into());
    cols.push("dist_ne_gamma".into());
    if layout.z_range(0).is_some() {
        cols.push("cons_err".into());
    }
    if layout.gamma_hat_range(0).is_some() {
        cols.push("gammahat_err".into());
    }
    if layout.orders.iter().any(|&r| r > 1) {
        cols.push("xs_norm".into());
    }
    if scenario.controller.law == Law::AdaptiveDisturbanceRejection {
        cols.push("chatter_rate".into());
    }
    cols
}

#[allow(clippy::too_many_arguments)]
fn record_row(
    scenario: &Scenario,
    layout: &StateLayout,
    t: f64,
    state: &DVector<f64>,
    full: &EvalRecord,
    x_star: &DVector<f64>,
    flips: u64,
    chatter_enabled: bool,
) -> Result<Vec<f64>> {
    let np = scenario.game.num_players();
    let mut row = vec![t, full.sigma as f64];
    for i in 0..np {
        let r = layout.xi_range(i);
        row.extend_from_slice(&state.as_slice()[r]);
    }
    for (i, plant) in scenario.plants.iter().enumerate() {
        let xi = state.rows(layout.xi_range(i).start, plant.spec.state_dim()).clone_owned();
        let gi = plant.realization.fictitious_output(&xi)?;
        row.extend(gi.iter());
    }
    if layout.gamma_hat_range(0).is_some() {
        for i in 0..np {
            let r = layout.gamma_hat_range(i).expect("uniform layout");
            row.extend_from_slice(&state.as_slice()[r]);
        }
    }
    if layout.z_range(0).is_some() {
        for i in 0..np {
            let r = layout.z_range(i).expect("uniform layout");
            row.extend_from_slice(&state.as_slice()[r]);
        }
    }
    if layout.theta_hat_range(0).is_some() {
        for i in 0..np {
            let r = layout.theta_hat_range(i).expect("uniform layout");
            row.extend_from_slice(&state.as_slice()[r]);
        }
    }
    if layout.d_hat_index(0).is_some() {
        for i in 0..np {
            row.push(state[layout.d_hat_index(i).expect("uniform layout")]);
        }
    }
    for u in &full.u {
        row.extend(u.iter());
    }
    let any_disturbance = scenario
        .plants
        .iter()
        .any(|p| p.spec.disturbance().true_bound() != 0.0);
    if any_disturbance {
        for d in &full.d {
            row.extend(d.iter());
        }
    }
    let mon = monitor_values(scenario, state, t, x_star)?;
    match scenario.controller.law {
        Law::AdaptiveImperfect | Law::AdaptiveDisturbanceRejection => {
            row.push(mon.v.expect("adaptive laws have V"));
        }
        _ => {}
    }
    row.push(mon.dist_ne);
    row.push(mon.dist_ne_gamma);
    if let Some(c) = mon.cons_err {
        row.push(c);
    }
    if let Some(g) = mon.gamma_hat_err {
        row.push(g);
    }
    if layout.orders.iter().any(|&r| r > 1) {
        row.push(mon.xs_norm.unwrap_or(0.0));
    }
    if chatter_enabled {
        let n_total = scenario.game.total_dim() as f64;
        let rate = if t > 0.0 { flips as f64 / (t * n_total) } else { 0.0 };
        row.push(rate);
    }
    Ok(row)
}

/// Count sign changes of the γ̃ components relative to the previous step.
fn count_sign_flips(
    scenario: &Scenario,
    layout: &StateLayout,
    state: &DVector<f64>,
    prev_signs: &mut [f64],
) -> Result<u64> {
    let mut flips = 0;
    let mut at = 0;
    for (i, plant) in scenario.plants.iter().enumerate() {
        let xi = state.rows(layout.xi_range(i).start, plant.spec.state_dim()).clone_owned();
        let gamma_i = plant.realization.fictitious_output(&xi)?;
        let ghr = layout.gamma_hat_range(i).expect("chatter only for adaptive laws");
        for c in 0..plant.spec.dim() {
            let tilde = state[ghr.start + c] - gamma_i[c];
            let s = SignMode::Exact.apply(tilde);
            if s != 0.0 && prev_signs[at] != 0.0 && s != prev_signs[at] {
                flips += 1;
            }
            if s != 0.0 {
                prev_signs[at] = s;
            }
            at += 1;
        }
    }
    Ok(flips)
}

fn first_non_finite(state: &DVector<f64>) -> Option<usize> {
    state.iter().position(|v| !v.is_finite())
}

fn column_for_state_index(columns: &[String], state_ix: usize) -> String {
    // state columns start right after t and sigma
    columns
        .get(state_ix + 2)
        .cloned()
        .unwrap_or_else(|| format!("state[{state_ix}]"))
}

/// Write the trace CSV and a metadata sidecar (resolved scenario, layout
/// version, content hash) next to it. Writes are atomic: temp file in the
/// same directory, then rename.
pub fn write_trace(
    trace: &SimTrace,
    resolved: Option<&serde_json::Value>,
    dir: &std::path::Path,
    basename: &str,
) -> Result<(std::path::PathBuf, std::path::PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("{basename}.csv"));
    let meta_path = dir.join(format!("{basename}.meta.json"));
    let csv = trace.to_csv_string();
    atomic_write(&csv_path, csv.as_bytes())?;
    let meta = serde_json::json!({
        "layout_version": trace.layout_version,
        "content_hash": trace.content_hash(),
        "rows": trace.rows.len(),
        "columns": trace.columns,
        "aborted": trace.aborted.as_ref().map(|a| serde_json::json!({
            "t": a.t,
            "detail": a.detail,
        })),
        "scenario": resolved,
    });
    let meta_str = serde_json::to_string_pretty(&meta)
        .map_err(|e| Error::Parse(format!("metadata serialization failed: {e}")))?;
    atomic_write(&meta_path, meta_str.as_bytes())?;
    Ok((csv_path, meta_path))
}

pub(crate) fn atomic_write(path: &std::path::Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
