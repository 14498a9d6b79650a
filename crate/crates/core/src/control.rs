//! The four seeking control laws, as pure derivative maps.
//!
//! Every law maps (own plant state, own controller state, whatever the
//! active graph lets the player see) to a control value and controller-state
//! derivatives. No law mutates anything and no law receives more than it is
//! allowed to read:
//!
//! * `perfect_info_control` — full information. Reads every player's
//!   fictitious output, its own true parameter `θ_i`, and cancels the
//!   residual chain: `u_i = -∇_i f_i(γ) + g_i θ_i - K_i^s x_i^s`. The closed
//!   loop reduces exactly to the pseudogradient flow `γ' = -F(γ)`. This is
//!   the only law handed plant truth, and it assumes no disturbances.
//!
//! * `single_integrator_consensus_control` — the single-integrator seeker
//!   over switching graphs: `u_i = -δ k_i ∇_i f_i(y_i)` with the consensus
//!   estimator `y_ij' = -(Σ_k a_ik (y_ij - y_kj) + a_ij (y_ij - x_j))`.
//!   Requires `r_i = 1`, `g_i = 0`, `d_i = 0`.
//!
//! * `adaptive_control` — the uncertain-plant law. Player `i` reads only its
//!   own `ξ_i` plus the broadcast `γ̂_j`, `z_j` of in-neighbors:
//!
//!   ```text
//!   u_i   = -δ k_i ∇_i f_i(z_i) + g_i(ξ_i,t) θ̂_i - K_i^s x_i^s + κ_i (γ̂_i - γ_i)
//!   γ̂_i' = -δ k_i ∇_i f_i(z_i)
//!   z_ij' = -(Σ_k a_ik (z_ij - z_kj) + a_ij (z_ij - γ̂_j))
//!   θ̂_i' = Λ_i g_i'(ξ_i,t) (γ̂_i - γ_i)
//!   ```
//!
//! * `disturbance_rejection_control` — adds `sgn(γ̂_i - γ_i) D̂_i` to `u_i`
//!   and the bound estimator `D̂_i' = (γ̂_i - γ_i)' sgn(γ̂_i - γ_i)`, which is
//!   a sum of absolute values and hence never negative: `D̂_i` is
//!   nondecreasing along every trajectory.
//!
//! `sgn` follows the pointwise definition with `sgn(0) = 0`. The set-valued
//! Filippov refinement is not integrated; instead `SignMode::Exact`
//! evaluates the discontinuous sign inside a fixed-step scheme (chattering
//! is measured and reported, not hidden) and `SignMode::Smoothed` replaces
//! it with `clamp(x/ε, -1, 1)` as a continuous surrogate.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::game::GameSpec;
use crate::plant::{CompanionRealization, PlantSpec, Regressor};

/// Which seeking law a scenario runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Law {
    PerfectInfo,
    SingleIntegratorConsensus,
    AdaptiveImperfect,
    AdaptiveDisturbanceRejection,
}

impl Law {
    /// Theorem of the source development this law instantiates (1..=4).
    pub fn theorem(&self) -> u8 {
        match self {
            Law::PerfectInfo => 1,
            Law::SingleIntegratorConsensus => 2,
            Law::AdaptiveImperfect => 3,
            Law::AdaptiveDisturbanceRejection => 4,
        }
    }
}

/// Sign evaluation mode for the disturbance-rejection law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SignMode {
    /// Pointwise sign with `sgn(0) = 0`.
    Exact,
    /// `clamp(x/epsilon, -1, 1)`; continuous, admits RK4.
    Smoothed { epsilon: f64 },
}

impl SignMode {
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            SignMode::Exact => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            SignMode::Smoothed { epsilon } => (x / epsilon).clamp(-1.0, 1.0),
        }
    }

    pub fn apply_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        v.map(|x| self.apply(x))
    }
}

/// Initial controller estimates; `None` selects the documented defaults
/// (`γ̂_i(0) = γ_i(0)`, everything else zero).
#[derive(Debug, Clone, Default)]
pub struct InitialEstimates {
    pub gamma_hat: Option<Vec<DVector<f64>>>,
    pub z: Option<Vec<DVector<f64>>>,
    pub theta_hat: Option<Vec<DVector<f64>>>,
    pub d_hat: Option<Vec<f64>>,
}

/// Gains and law selection for all players.
#[derive(Debug, Clone)]
pub struct ControllerConfig {
    pub law: Law,
    pub delta: f64,
    pub k: Vec<f64>,
    pub kappa: Vec<f64>,
    /// Adaptation gains `Λ_i`, one symmetric positive-definite `m_i × m_i`
    /// matrix per player.
    pub lambda: Vec<DMatrix<f64>>,
    pub sign_mode: SignMode,
    pub init: InitialEstimates,
}

impl ControllerConfig {
    /// Validate gain positivity and shape consistency against the plants.
    /// Returns one message per finding so scenario validation can report
    /// them all with field paths.
    pub fn validate(&self, game: &GameSpec, plants: &[PlantSpec]) -> Vec<String> {
        let mut errs = Vec::new();
        let np = game.num_players();
        if !(self.delta > 0.0) {
            errs.push(format!("delta must be positive, got {}", self.delta));
        }
        if self.k.len() != np {
            errs.push(format!("k must list {np} gains, got {}", self.k.len()));
        } else if let Some(bad) = self.k.iter().find(|&&v| !(v > 0.0)) {
            errs.push(format!("gains k must be positive, got {bad}"));
        }
        let needs_kappa = matches!(
            self.law,
            Law::AdaptiveImperfect | Law::AdaptiveDisturbanceRejection
        );
        if needs_kappa {
            if self.kappa.len() != np {
                errs.push(format!("kappa must list {np} gains, got {}", self.kappa.len()));
            } else if let Some(bad) = self.kappa.iter().find(|&&v| !(v > 0.0)) {
                errs.push(format!("gains kappa must be positive, got {bad}"));
            }
            if self.lambda.len() != np {
                errs.push(format!(
                    "lambda must list {np} matrices, got {}",
                    self.lambda.len()
                ));
            } else {
                for (i, (lam, plant)) in self.lambda.iter().zip(plants).enumerate() {
                    let m = plant.param_dim();
                    if lam.nrows() != m || lam.ncols() != m {
                        errs.push(format!(
                            "lambda[{i}] must be {m}x{m}, got {}x{}",
                            lam.nrows(),
                            lam.ncols()
                        ));
                        continue;
                    }
                    if m == 0 {
                        continue;
                    }
                    if (lam - lam.transpose()).amax() > 1e-9 {
                        errs.push(format!("lambda[{i}] must be symmetric"));
                        continue;
                    }
                    let min_eig = lam
                        .clone()
                        .symmetric_eigen()
                        .eigenvalues
                        .iter()
                        .cloned()
                        .fold(f64::INFINITY, f64::min);
                    if !(min_eig > 0.0) {
                        errs.push(format!(
                            "lambda[{i}] must be positive definite (lambda_min = {min_eig:.3e})"
                        ));
                    }
                }
            }
        }
        if let Some(d0) = &self.init.d_hat {
            if let Some(bad) = d0.iter().find(|&&v| v < 0.0) {
                errs.push(format!("initial d_hat must be nonnegative, got {bad}"));
            }
        }
        if let SignMode::Smoothed { epsilon } = self.sign_mode {
            if !(epsilon > 0.0) {
                errs.push(format!("smoothed sign epsilon must be positive, got {epsilon}"));
            }
        }
        match self.law {
            Law::PerfectInfo => {
                for (i, plant) in plants.iter().enumerate() {
                    if plant.disturbance().true_bound() != 0.0 {
                        errs.push(format!(
                            "perfect-information law assumes d = 0, but plant {i} has a disturbance"
                        ));
                    }
                }
            }
            Law::SingleIntegratorConsensus => {
                for (i, plant) in plants.iter().enumerate() {
                    if plant.order() != 1 {
                        errs.push(format!(
                            "single-integrator law requires r_i = 1, plant {i} has r = {}",
                            plant.order()
                        ));
                    }
                    if !matches!(plant.regressor(), Regressor::Zero) && plant.param_dim() > 0 {
                        errs.push(format!(
                            "single-integrator law requires g_i = 0, plant {i} has a regressor"
                        ));
                    }
                    if plant.disturbance().true_bound() != 0.0 {
                        errs.push(format!(
                            "single-integrator law assumes d = 0, but plant {i} has a disturbance"
                        ));
                    }
                }
            }
            _ => {}
        }
        errs
    }
}

/// One in-neighbor's broadcast as seen by player `i` at an instant. Only
/// players with a positive incoming weight may appear here; constructing a
/// view with a non-positive weight is a contract violation.
#[derive(Debug, Clone, Copy)]
pub struct Neighbor<'a> {
    pub index: usize,
    pub weight: f64,
    /// Neighbor's stacked full-strategy estimate (`z_k`, or `y_k` for the
    /// single-integrator law), length `n`.
    pub estimate: &'a [f64],
    /// Neighbor's broadcast reference block (`γ̂_k`, or `x_k` for the
    /// single-integrator law), length `n_k`.
    pub reference: &'a [f64],
}

/// Per-player gains handed to the adaptive laws.
#[derive(Debug, Clone, Copy)]
pub struct PlayerGains<'a> {
    pub delta: f64,
    pub k: f64,
    pub kappa: f64,
    pub lambda: &'a DMatrix<f64>,
}

/// Derivative bundle returned by the adaptive laws.
#[derive(Debug, Clone)]
pub struct AdaptiveDerivs {
    pub u: DVector<f64>,
    pub gamma_hat_dot: DVector<f64>,
    pub z_dot: DVector<f64>,
    pub theta_hat_dot: DVector<f64>,
    pub d_hat_dot: f64,
}

/// Full-information law: `u_i = -∇_i f_i(γ) + g_i(ξ_i,t) θ_i - K_i^s x_i^s`.
///
/// `gamma_all` stacks every player's fictitious output (full information is
/// the point of this law); `plant` supplies the true `θ_i`, a privilege no
/// other law has.
pub fn perfect_info_control(
    game: &GameSpec,
    plant: &PlantSpec,
    realization: &CompanionRealization,
    xi_i: &DVector<f64>,
    gamma_all: &DVector<f64>,
    player: usize,
    t: f64,
) -> Result<DVector<f64>> {
    if plant.disturbance().true_bound() != 0.0 {
        return Err(Error::input(
            "perfect-information law is only defined for disturbance-free plants",
        ));
    }
    let n_i = plant.dim();
    let grad = game.partial_gradient(player, gamma_all)?;
    let xs = xi_i.rows(n_i, xi_i.len() - n_i).clone_owned();
    let mut u = -grad + plant.regressor_at(xi_i, t) * plant.true_theta();
    u -= realization.ks_times(&xs);
    Ok(u)
}

/// Single-integrator consensus seeker. Returns `(u_i, y_i')`.
///
/// `x_i` is the player's own action, `y_i` its stacked estimate of the full
/// strategy vector. Reads neighbors' `y_k` and actions `x_k` only through
/// the snapshot-gated `neighbors` view.
pub fn single_integrator_consensus_control(
    game: &GameSpec,
    delta: f64,
    k_i: f64,
    y_i: &DVector<f64>,
    neighbors: &[Neighbor<'_>],
    player: usize,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let u = game.partial_gradient(player, y_i)? * (-delta * k_i);
    let dy = estimator_derivative(game, y_i, neighbors)?;
    Ok((u, dy))
}

/// The adaptive law for uncertain plants (no disturbance term).
pub fn adaptive_control(
    game: &GameSpec,
    gains: PlayerGains<'_>,
    regressor: &Regressor,
    realization: &CompanionRealization,
    xi_i: &DVector<f64>,
    gamma_hat_i: &DVector<f64>,
    z_i: &DVector<f64>,
    theta_hat_i: &DVector<f64>,
    neighbors: &[Neighbor<'_>],
    player: usize,
    t: f64,
) -> Result<AdaptiveDerivs> {
    adaptive_core(
        game, gains, regressor, realization, xi_i, gamma_hat_i, z_i, theta_hat_i, None, None,
        neighbors, player, t,
    )
}

/// The adaptive law with sign-based rejection of bounded disturbances.
#[allow(clippy::too_many_arguments)]
pub fn disturbance_rejection_control(
    game: &GameSpec,
    gains: PlayerGains<'_>,
    regressor: &Regressor,
    realization: &CompanionRealization,
    xi_i: &DVector<f64>,
    gamma_hat_i: &DVector<f64>,
    z_i: &DVector<f64>,
    theta_hat_i: &DVector<f64>,
    d_hat_i: f64,
    sign_mode: SignMode,
    neighbors: &[Neighbor<'_>],
    player: usize,
    t: f64,
) -> Result<AdaptiveDerivs> {
    if let SignMode::Smoothed { epsilon } = sign_mode {
        if !(epsilon > 0.0) {
            return Err(Error::input("smoothed sign epsilon must be positive"));
        }
    }
    adaptive_core(
        game,
        gains,
        regressor,
        realization,
        xi_i,
        gamma_hat_i,
        z_i,
        theta_hat_i,
        Some(d_hat_i),
        Some(sign_mode),
        neighbors,
        player,
        t,
    )
}

#[allow(clippy::too_many_arguments)]
fn adaptive_core(
    game: &GameSpec,
    gains: PlayerGains<'_>,
    regressor: &Regressor,
    realization: &CompanionRealization,
    xi_i: &DVector<f64>,
    gamma_hat_i: &DVector<f64>,
    z_i: &DVector<f64>,
    theta_hat_i: &DVector<f64>,
    d_hat_i: Option<f64>,
    sign_mode: Option<SignMode>,
    neighbors: &[Neighbor<'_>],
    player: usize,
    t: f64,
) -> Result<AdaptiveDerivs> {
    let n_i = game.dims()[player];
    if xi_i.len() != realization.state_dim() || realization.dim() != n_i {
        return Err(Error::input("plant state does not match the realization shape"));
    }
    if gamma_hat_i.len() != n_i || z_i.len() != game.total_dim() {
        return Err(Error::input("controller state shapes are inconsistent"));
    }
    let m_i = theta_hat_i.len();

    let gamma_i = realization.fictitious_output(xi_i)?;
    let gamma_err = gamma_hat_i - &gamma_i; // γ̂_i - γ_i
    let g = regressor.eval(xi_i, t, n_i, m_i);
    let grad = game.partial_gradient(player, z_i)?;
    let seek = grad * (-gains.delta * gains.k);

    let xs = xi_i.rows(n_i, xi_i.len() - n_i).clone_owned();
    let mut u = &seek + &g * theta_hat_i - realization.ks_times(&xs) + &gamma_err * gains.kappa;

    let mut d_hat_dot = 0.0;
    if let (Some(d_hat), Some(mode)) = (d_hat_i, sign_mode) {
        let s = mode.apply_vec(&gamma_err);
        u += &s * d_hat;
        d_hat_dot = gamma_err.dot(&s);
    }

    let theta_hat_dot = gains.lambda * (g.transpose() * &gamma_err);
    let z_dot = estimator_derivative(game, z_i, neighbors)?;

    Ok(AdaptiveDerivs { u, gamma_hat_dot: seek, z_dot, theta_hat_dot, d_hat_dot })
}

/// Shared consensus-estimator derivative:
/// `z_ij' = -(Σ_k a_ik (z_ij - z_kj) + a_ij (z_ij - ref_j))` where the
/// reference is each in-neighbor's broadcast block.
fn estimator_derivative(
    game: &GameSpec,
    own: &DVector<f64>,
    neighbors: &[Neighbor<'_>],
) -> Result<DVector<f64>> {
    let n = game.total_dim();
    if own.len() != n {
        return Err(Error::input("estimate vector has the wrong length"));
    }
    let mut dz = DVector::zeros(n);
    for nb in neighbors {
        debug_assert!(
            nb.weight > 0.0,
            "information hygiene: neighbor views must carry positive weights"
        );
        if nb.estimate.len() != n {
            return Err(Error::input("neighbor estimate has the wrong length"));
        }
        let block = game.block_range(nb.index);
        if nb.reference.len() != block.len() {
            return Err(Error::input("neighbor reference block has the wrong length"));
        }
        for c in 0..n {
            dz[c] -= nb.weight * (own[c] - nb.estimate[c]);
        }
        for (off, c) in block.enumerate() {
            dz[c] -= nb.weight * (own[c] - nb.reference[off]);
        }
    }
    Ok(dz)
}

/// The sufficient gain bound
/// `δ* = 4 μ λ_min(Q) / (ψ² + 4 k² ψ² p² + 4 μ k p ψ² + 8 μ k ψ p)`.
///
/// `p` bounds the norm of the estimator Lyapunov matrix `P(t)` and is not
/// computable without constructing `P` itself; callers supply a value (the
/// empirical route is `analysis::delta_sweep`).
pub fn delta_star_bound(mu: f64, psi: f64, k: f64, p: f64, lambda_min_q: f64) -> Result<f64> {
    for (name, v) in [("mu", mu), ("psi", psi), ("k", k), ("p", p), ("lambda_min_q", lambda_min_q)]
    {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::input(format!("{name} must be positive and finite, got {v}")));
        }
    }
    let denom = psi * psi
        + 4.0 * k * k * psi * psi * p * p
        + 4.0 * mu * k * p * psi * psi
        + 8.0 * mu * k * psi * p;
    Ok(4.0 * mu * lambda_min_q / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{build_realization, DisturbanceSpec};
    use approx::assert_relative_eq;
    use nalgebra::Complex;

    fn lq_game() -> GameSpec {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let r = DVector::from_row_slice(&[-2.0, -2.0]);
        GameSpec::linear_quadratic(vec![1, 1], m, r).unwrap()
    }

    fn first_order_plant() -> (PlantSpec, CompanionRealization) {
        let spec = PlantSpec::new(1, 1, Regressor::Zero, DVector::zeros(0), DisturbanceSpec::none())
            .unwrap();
        let real = build_realization(1, 1, &[]).unwrap();
        (spec, real)
    }

    #[test]
    fn sgn_identity_holds_exactly() {
        let v = DVector::from_row_slice(&[2.0, -3.0]);
        let s = SignMode::Exact.apply_vec(&v);
        assert_eq!(s, DVector::from_row_slice(&[1.0, -1.0]));
        assert_eq!(v.dot(&s), 5.0);
        assert_eq!(SignMode::Exact.apply(0.0), 0.0);
    }

    #[test]
    fn smoothed_sign_linear_region() {
        let m = SignMode::Smoothed { epsilon: 0.1 };
        assert_relative_eq!(m.apply(0.05), 0.5, epsilon = 1e-15);
        assert_eq!(m.apply(5.0), 1.0);
        assert_eq!(m.apply(-5.0), -1.0);
    }

    #[test]
    fn perfect_info_single_integrator_is_pseudogradient_descent() {
        let game = lq_game();
        let (spec, real) = first_order_plant();
        let x = DVector::from_row_slice(&[0.4, -1.1]);
        for i in 0..2 {
            let xi = DVector::from_element(1, x[i]);
            let u = perfect_info_control(&game, &spec, &real, &xi, &x, i, 0.0).unwrap();
            let f = game.pseudogradient(&x).unwrap();
            assert_relative_eq!(u[0], -f[i], epsilon = 1e-14);
        }
    }

    #[test]
    fn perfect_info_vanishes_at_ne() {
        let game = lq_game();
        let (spec, real) = first_order_plant();
        let ne = DVector::from_row_slice(&[2.0 / 3.0, 2.0 / 3.0]);
        for i in 0..2 {
            let xi = DVector::from_element(1, ne[i]);
            let u = perfect_info_control(&game, &spec, &real, &xi, &ne, i, 0.0).unwrap();
            assert!(u.norm() < 1e-12);
        }
    }

    #[test]
    fn perfect_info_remaining_term_is_g_theta() {
        // r_i = 2, residual chain at zero, gamma at NE: u = g θ
        let game = lq_game();
        let spec = PlantSpec::new(
            2,
            1,
            Regressor::SinOfState { scale: 1.0 },
            DVector::from_element(1, 2.0),
            DisturbanceSpec::none(),
        )
        .unwrap();
        let real = build_realization(2, 1, &[Complex::new(-1.0, 0.0)]).unwrap();
        let ne = DVector::from_row_slice(&[2.0 / 3.0, 2.0 / 3.0]);
        // xi = (x, xdot) with xdot = 0 so gamma = x and x^s = 0
        let xi = DVector::from_row_slice(&[2.0 / 3.0, 0.0]);
        let u = perfect_info_control(&game, &spec, &real, &xi, &ne, 0, 0.0).unwrap();
        let g_theta = spec.regressor_at(&xi, 0.0) * spec.true_theta();
        assert_relative_eq!((u - g_theta).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn perfect_info_rejects_disturbed_plants() {
        let game = lq_game();
        let spec = PlantSpec::new(
            1,
            1,
            Regressor::Zero,
            DVector::zeros(0),
            DisturbanceSpec::new(
                crate::plant::DisturbanceKind::Sinusoid { amplitude: 1.0, frequency: 1.0, phase: 0.0 },
                None,
            )
            .unwrap(),
        )
        .unwrap();
        let real = build_realization(1, 1, &[]).unwrap();
        let x = DVector::zeros(2);
        assert!(perfect_info_control(&game, &spec, &real, &DVector::zeros(1), &x, 0, 0.0).is_err());
    }

    #[test]
    fn consensus_fixed_point_has_zero_estimator_motion() {
        let game = lq_game();
        let x = DVector::from_row_slice(&[0.7, -0.2]);
        let y0 = x.clone();
        let y1 = x.clone();
        let y0s: Vec<f64> = y0.iter().cloned().collect();
        let y1s: Vec<f64> = y1.iter().cloned().collect();
        let x0 = [x[0]];
        let x1 = [x[1]];
        // complete graph on two nodes
        let n0 = [Neighbor { index: 1, weight: 1.0, estimate: &y1s, reference: &x1 }];
        let n1 = [Neighbor { index: 0, weight: 1.0, estimate: &y0s, reference: &x0 }];
        let (u0, dy0) = single_integrator_consensus_control(&game, 0.5, 2.0, &y0, &n0, 0).unwrap();
        let (_, dy1) = single_integrator_consensus_control(&game, 0.5, 2.0, &y1, &n1, 1).unwrap();
        assert!(dy0.norm() < 1e-15);
        assert!(dy1.norm() < 1e-15);
        let f = game.pseudogradient(&x).unwrap();
        assert_relative_eq!(u0[0], -0.5 * 2.0 * f[0], epsilon = 1e-14);
    }

    #[test]
    fn disconnected_instant_freezes_estimator() {
        let game = lq_game();
        let y = DVector::from_row_slice(&[3.0, -4.0]);
        let (_, dy) = single_integrator_consensus_control(&game, 0.1, 1.0, &y, &[], 0).unwrap();
        assert_eq!(dy, DVector::zeros(2));
    }

    #[test]
    fn adaptive_equilibrium_control_reduces_to_g_theta_minus_ks() {
        let game = lq_game();
        let theta = DVector::from_element(1, 1.5);
        let real = build_realization(2, 1, &[Complex::new(-1.0, 0.0)]).unwrap();
        let reg = Regressor::SinOfState { scale: 1.0 };
        let lambda = DMatrix::identity(1, 1);
        let gains = PlayerGains { delta: 0.3, k: 1.0, kappa: 2.0, lambda: &lambda };
        let ne = DVector::from_row_slice(&[2.0 / 3.0, 2.0 / 3.0]);
        let xi = DVector::from_row_slice(&[2.0 / 3.0, 0.1]);
        let gamma = real.fictitious_output(&xi).unwrap();
        let z = ne.clone();
        let derivs = adaptive_control(
            &game, gains, &reg, &real, &xi, &gamma, &z, &theta, &[], 0, 0.0,
        )
        .unwrap();
        // θ̂ = θ and γ̂ = γ: u = g θ - K^s x^s, θ̂' = 0
        let expect = reg.eval(&xi, 0.0, 1, 1) * &theta
            - real.ks_times(&DVector::from_element(1, 0.1));
        assert_relative_eq!((derivs.u - expect).norm(), 0.0, epsilon = 1e-14);
        assert!(derivs.theta_hat_dot.norm() < 1e-15);
        assert!(derivs.gamma_hat_dot.norm() < 1e-12);
    }

    #[test]
    fn zero_regressor_freezes_theta_hat() {
        let game = lq_game();
        let real = build_realization(1, 1, &[]).unwrap();
        let lambda = DMatrix::identity(1, 1);
        let gains = PlayerGains { delta: 0.3, k: 1.0, kappa: 2.0, lambda: &lambda };
        let xi = DVector::from_element(1, 0.4);
        let gamma_hat = DVector::from_element(1, 1.0);
        let z = DVector::from_row_slice(&[0.2, 0.8]);
        let theta_hat = DVector::from_element(1, 9.0);
        let derivs = adaptive_control(
            &game,
            gains,
            &Regressor::Zero,
            &real,
            &xi,
            &gamma_hat,
            &z,
            &theta_hat,
            &[],
            0,
            0.0,
        )
        .unwrap();
        assert_eq!(derivs.theta_hat_dot, DVector::zeros(1));
    }

    #[test]
    fn sign_term_vanishes_when_estimates_agree() {
        let game = lq_game();
        let real = build_realization(1, 1, &[]).unwrap();
        let lambda = DMatrix::identity(1, 1);
        let gains = PlayerGains { delta: 0.3, k: 1.0, kappa: 2.0, lambda: &lambda };
        let xi = DVector::from_element(1, 0.4);
        let gamma = real.fictitious_output(&xi).unwrap();
        let z = DVector::zeros(2);
        let theta_hat = DVector::zeros(1);
        let with_sign = disturbance_rejection_control(
            &game,
            gains,
            &Regressor::Zero,
            &real,
            &xi,
            &gamma,
            &z,
            &theta_hat,
            5.0,
            SignMode::Exact,
            &[],
            0,
            0.0,
        )
        .unwrap();
        let without = adaptive_control(
            &game, gains, &Regressor::Zero, &real, &xi, &gamma, &z, &theta_hat, &[], 0, 0.0,
        )
        .unwrap();
        assert_relative_eq!((with_sign.u - without.u).norm(), 0.0, epsilon = 1e-15);
        assert_eq!(with_sign.d_hat_dot, 0.0);
    }

    #[test]
    fn d_hat_dot_is_l1_norm_of_gamma_error() {
        let game = GameSpec::linear_quadratic(
            vec![2],
            DMatrix::identity(2, 2),
            DVector::zeros(2),
        )
        .unwrap();
        let real = build_realization(1, 2, &[]).unwrap();
        let lambda = DMatrix::identity(1, 1);
        let gains = PlayerGains { delta: 1.0, k: 1.0, kappa: 1.0, lambda: &lambda };
        let xi = DVector::zeros(2);
        let gamma_hat = DVector::from_row_slice(&[2.0, -3.0]);
        let derivs = disturbance_rejection_control(
            &game,
            gains,
            &Regressor::Zero,
            &real,
            &xi,
            &gamma_hat,
            &DVector::zeros(2),
            &DVector::zeros(1),
            1.0,
            SignMode::Exact,
            &[],
            0,
            0.0,
        )
        .unwrap();
        assert_eq!(derivs.d_hat_dot, 5.0);
    }

    #[test]
    fn smoothed_mode_rejects_bad_epsilon() {
        let game = lq_game();
        let real = build_realization(1, 1, &[]).unwrap();
        let lambda = DMatrix::identity(1, 1);
        let gains = PlayerGains { delta: 1.0, k: 1.0, kappa: 1.0, lambda: &lambda };
        let err = disturbance_rejection_control(
            &game,
            gains,
            &Regressor::Zero,
            &real,
            &DVector::zeros(1),
            &DVector::zeros(1),
            &DVector::zeros(2),
            &DVector::zeros(1),
            0.0,
            SignMode::Smoothed { epsilon: 0.0 },
            &[],
            0,
            0.0,
        );
        assert!(err.is_err());
    }

    #[test]
    fn delta_star_bound_formula() {
        let psi = 5.0f64.sqrt();
        let v = delta_star_bound(1.0, psi, 1.0, 1.0, 1.0).unwrap();
        let denom = 5.0 + 4.0 * 5.0 + 4.0 * 5.0 + 8.0 * psi;
        assert_relative_eq!(v, 4.0 / denom, epsilon = 1e-15);
        assert!(delta_star_bound(0.0, 1.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn controls_ignore_non_neighbor_state() {
        // perturbing a non-neighbor's broadcast cannot change anything the
        // law computes, because the view only carries in-neighbors
        let game = lq_game();
        let y = DVector::from_row_slice(&[0.5, 0.5]);
        let other_a: Vec<f64> = vec![10.0, -10.0];
        let other_b: Vec<f64> = vec![-99.0, 99.0];
        let xref = [0.3];
        let na = [Neighbor { index: 1, weight: 1.0, estimate: &other_a, reference: &xref }];
        let nb = [Neighbor { index: 1, weight: 1.0, estimate: &other_a, reference: &xref }];
        let (ua, _) = single_integrator_consensus_control(&game, 0.5, 1.0, &y, &na, 0).unwrap();
        let (ub, _) = single_integrator_consensus_control(&game, 0.5, 1.0, &y, &nb, 0).unwrap();
        assert_eq!(ua, ub);
        // u depends on own estimate only, never on neighbor data
        let nc = [Neighbor { index: 1, weight: 1.0, estimate: &other_b, reference: &xref }];
        let (uc, _) = single_integrator_consensus_control(&game, 0.5, 1.0, &y, &nc, 0).unwrap();
        assert_eq!(ua, uc);
    }
}
