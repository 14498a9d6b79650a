//! Games, pseudogradients, monotonicity certificates, and reference Nash
//! equilibria.
//!
//! A game couples `N` players; player `i` picks an action `x_i` in
//! `R^{n_i}` to minimize its own cost `f_i(x_i, x_{-i})`. The pseudogradient
//!
//! ```text
//! F(x) = col(∇_1 f_1(x), ..., ∇_N f_N(x))
//! ```
//!
//! stacks each player's partial gradient with respect to its own action.
//! Strong monotonicity of `F` with modulus `mu > 0` gives a unique Nash
//! equilibrium `x*` characterized by `F(x*) = 0`, and makes the
//! pseudogradient flow `dx/dt = -F(x)` globally exponentially stable at
//! `x*`. That equilibrium is the reference oracle for every closed-loop
//! check in this crate; for the linear-quadratic family (`F(x) = M x + r`)
//! it is available by direct linear solve, and independently by integrating
//! the flow.
//!
//! The strategy space is all of `R^n`: no projection machinery, no
//! constrained strategy sets.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Cost of one player as a function of the full strategy vector.
pub type CostFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
/// Gradient of one player's cost with respect to its own action block.
pub type GradFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;

/// Cost-function family of a game.
#[derive(Clone)]
pub enum CostFamily {
    /// `f_i(x) = 1/2 x_i' M_ii x_i + x_i' (Σ_{j≠i} M_ij x_j + r_i)`, so the
    /// pseudogradient is exactly `F(x) = M x + r`.
    LinearQuadratic { m: DMatrix<f64>, r: DVector<f64> },
    /// Caller-supplied costs and own-action gradients, one per player.
    Custom { costs: Vec<CostFn>, grads: Vec<GradFn> },
}

impl std::fmt::Debug for CostFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CostFamily::LinearQuadratic { m, r } => f
                .debug_struct("LinearQuadratic")
                .field("m", &(m.nrows(), m.ncols()))
                .field("r", &r.len())
                .finish(),
            CostFamily::Custom { costs, .. } => {
                f.debug_struct("Custom").field("players", &costs.len()).finish()
            }
        }
    }
}

/// An N-player game over `R^n`, `n = Σ n_i`.
#[derive(Debug, Clone)]
pub struct GameSpec {
    dims: Vec<usize>,
    cost: CostFamily,
}

/// How a monotonicity certificate was obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CertifyMethod {
    /// Spectral computation, exact up to eigensolver accuracy. Only valid
    /// for the linear-quadratic family.
    Exact,
    /// Quotient sampling over random point pairs in a box. Produces a lower
    /// estimate of `mu` and upper estimates of `psi_i`, never a proof.
    Sampled { num_samples: usize, seed: u64 },
}

/// Certifies that the pseudogradient is strongly monotone with modulus `mu`
/// and that each player's own-gradient is Lipschitz with constant `psi_i`.
#[derive(Debug, Clone)]
pub struct MonotonicityCertificate {
    pub mu: f64,
    pub psi: Vec<f64>,
    /// `sqrt(Σ psi_i^2)`, the stacked Lipschitz constant.
    pub psi_total: f64,
    pub method: CertifyMethod,
}

impl MonotonicityCertificate {
    /// True when the values are spectral facts rather than sample estimates.
    pub fn is_exact(&self) -> bool {
        matches!(self.method, CertifyMethod::Exact)
    }
}

/// Reference NE solver selection.
#[derive(Debug, Clone, Copy)]
pub enum NeMethod {
    /// Solve `M x = -r` directly. Linear-quadratic games only.
    ClosedForm,
    /// Integrate the pseudogradient flow `dx/dt = -F(x)` from the origin
    /// with fixed-step RK4 until `‖F(x)‖ ≤ tol`.
    Flow { step: f64, horizon: f64, tol: f64 },
}

impl NeMethod {
    /// Flow with the crate defaults (step 1e-2, horizon 1e3, tol 1e-6).
    pub fn default_flow() -> Self {
        NeMethod::Flow { step: 1e-2, horizon: 1e3, tol: 1e-6 }
    }
}

impl GameSpec {
    /// Linear-quadratic game with pseudogradient `F(x) = M x + r`.
    pub fn linear_quadratic(dims: Vec<usize>, m: DMatrix<f64>, r: DVector<f64>) -> Result<Self> {
        if dims.is_empty() || dims.iter().any(|&d| d == 0) {
            return Err(Error::input("dims must be nonempty positive integers"));
        }
        let n: usize = dims.iter().sum();
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::input(format!(
                "M must be {n}x{n} for dims {dims:?}, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if r.len() != n {
            return Err(Error::input(format!("r must have length {n}, got {}", r.len())));
        }
        Ok(GameSpec { dims, cost: CostFamily::LinearQuadratic { m, r } })
    }

    /// Game from caller-supplied costs and own-action gradients.
    pub fn custom(dims: Vec<usize>, costs: Vec<CostFn>, grads: Vec<GradFn>) -> Result<Self> {
        if dims.is_empty() || dims.iter().any(|&d| d == 0) {
            return Err(Error::input("dims must be nonempty positive integers"));
        }
        if costs.len() != dims.len() || grads.len() != dims.len() {
            return Err(Error::input("need one cost and one gradient per player"));
        }
        Ok(GameSpec { dims, cost: CostFamily::Custom { costs, grads } })
    }

    pub fn num_players(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Total strategy dimension `n = Σ n_i`.
    pub fn total_dim(&self) -> usize {
        self.dims.iter().sum()
    }

    /// Index range of player `i`'s block inside the stacked strategy vector.
    pub fn block_range(&self, i: usize) -> std::ops::Range<usize> {
        let start: usize = self.dims[..i].iter().sum();
        start..start + self.dims[i]
    }

    pub fn cost_family(&self) -> &CostFamily {
        &self.cost
    }

    /// Cost of player `i` at the strategy vector `x`. For the LQ family this
    /// evaluates the defining quadratic form.
    pub fn cost(&self, i: usize, x: &DVector<f64>) -> Result<f64> {
        self.check_x(x)?;
        match &self.cost {
            CostFamily::LinearQuadratic { m, r } => {
                let rng = self.block_range(i);
                let xi = x.rows(rng.start, self.dims[i]);
                let mi = m.rows(rng.start, self.dims[i]);
                // 1/2 x_i' M_ii x_i + x_i' (Σ_{j≠i} M_ij x_j + r_i)
                let mii = mi.columns(rng.start, self.dims[i]);
                let own = 0.5 * (xi.transpose() * mii * xi)[(0, 0)];
                let mut cross = mi * x - mii * xi;
                cross += r.rows(rng.start, self.dims[i]);
                Ok(own + (xi.transpose() * cross)[(0, 0)])
            }
            CostFamily::Custom { costs, .. } => Ok(costs[i](x)),
        }
    }

    /// `∇_i f_i(x)`: player `i`'s gradient with respect to its own block.
    pub fn partial_gradient(&self, i: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_x(x)?;
        match &self.cost {
            CostFamily::LinearQuadratic { m, r } => {
                let rng = self.block_range(i);
                let mi = m.rows(rng.start, self.dims[i]);
                Ok(mi * x + r.rows(rng.start, self.dims[i]))
            }
            CostFamily::Custom { grads, .. } => {
                let g = grads[i](x);
                if g.len() != self.dims[i] {
                    return Err(Error::input(format!(
                        "custom gradient for player {i} returned length {}, expected {}",
                        g.len(),
                        self.dims[i]
                    )));
                }
                Ok(g)
            }
        }
    }

    /// Pseudogradient `F(x) = col(∇_1 f_1(x), ..., ∇_N f_N(x))`.
    pub fn pseudogradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_x(x)?;
        match &self.cost {
            CostFamily::LinearQuadratic { m, r } => Ok(m * x + r),
            CostFamily::Custom { .. } => {
                let mut out = DVector::zeros(self.total_dim());
                for i in 0..self.num_players() {
                    let g = self.partial_gradient(i, x)?;
                    let rng = self.block_range(i);
                    out.rows_mut(rng.start, self.dims[i]).copy_from(&g);
                }
                Ok(out)
            }
        }
    }

    /// Certify strong monotonicity and per-player Lipschitz constants.
    ///
    /// `Exact` computes `mu = λ_min((M + M')/2)` and `psi_i` as the spectral
    /// norm of the i-th block row of `M`; it is only admitted for the LQ
    /// family. `Sampled` estimates both from quotients over random point
    /// pairs drawn uniformly from `[-10, 10]^n` and labels the result as an
    /// estimate.
    ///
    /// Fails when the computed `mu` is not strictly positive: such a game is
    /// rejected and controllers will not run it.
    pub fn certify(&self, method: CertifyMethod) -> Result<MonotonicityCertificate> {
        let (mu, psi) = match method {
            CertifyMethod::Exact => match &self.cost {
                CostFamily::LinearQuadratic { m, .. } => {
                    let sym = (m + m.transpose()) * 0.5;
                    let eig = sym.symmetric_eigen();
                    let mu = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
                    let psi = (0..self.num_players())
                        .map(|i| {
                            let rng = self.block_range(i);
                            let row = m.rows(rng.start, self.dims[i]).clone_owned();
                            // spectral norm of the block row
                            row.singular_values()[0]
                        })
                        .collect::<Vec<_>>();
                    (mu, psi)
                }
                CostFamily::Custom { .. } => {
                    return Err(Error::input(
                        "Exact certification is only defined for LinearQuadratic games",
                    ));
                }
            },
            CertifyMethod::Sampled { num_samples, seed } => {
                if num_samples < 2 {
                    return Err(Error::input("Sampled certification needs num_samples >= 2"));
                }
                self.certify_sampled(num_samples, seed)?
            }
        };
        if mu <= 0.0 {
            return Err(Error::Certification(format!(
                "pseudogradient is not strongly monotone (mu = {mu:.6e} <= 0)"
            )));
        }
        let psi_total = psi.iter().map(|p| p * p).sum::<f64>().sqrt();
        Ok(MonotonicityCertificate { mu, psi, psi_total, method })
    }

    fn certify_sampled(&self, num_samples: usize, seed: u64) -> Result<(f64, Vec<f64>)> {
        let n = self.total_dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draw = |rng: &mut ChaCha8Rng| {
            DVector::from_fn(n, |_, _| rng.random_range(-10.0..10.0))
        };
        let mut mu = f64::INFINITY;
        let mut psi = vec![0.0f64; self.num_players()];
        let mut taken = 0;
        while taken < num_samples {
            let a = draw(&mut rng);
            let b = draw(&mut rng);
            let diff = &a - &b;
            let d2 = diff.norm_squared();
            if d2 < 1e-18 {
                continue; // degenerate pair, redraw
            }
            taken += 1;
            let fdiff = self.pseudogradient(&a)? - self.pseudogradient(&b)?;
            mu = mu.min(diff.dot(&fdiff) / d2);
            let d = d2.sqrt();
            for i in 0..self.num_players() {
                let gi = self.partial_gradient(i, &a)? - self.partial_gradient(i, &b)?;
                psi[i] = psi[i].max(gi.norm() / d);
            }
        }
        Ok((mu, psi))
    }

    /// Compute the Nash equilibrium `x*` with `F(x*) = 0`.
    ///
    /// `ClosedForm` solves `M x = -r` by LU with one step of iterative
    /// refinement; `Flow` integrates the pseudogradient dynamics until the
    /// residual drops below `tol`. The two are independent routes and are
    /// cross-checked in the acceptance suite.
    pub fn solve_ne(&self, method: NeMethod) -> Result<DVector<f64>> {
        match method {
            NeMethod::ClosedForm => {
                let CostFamily::LinearQuadratic { m, r } = &self.cost else {
                    return Err(Error::input("ClosedForm requires a LinearQuadratic game"));
                };
                let lu = m.clone().lu();
                let mut x = lu
                    .solve(&(-r))
                    .ok_or_else(|| Error::input("ClosedForm solve failed: M is singular"))?;
                // one step of iterative refinement on the residual
                let res = m * &x + r;
                if let Some(corr) = lu.solve(&res) {
                    x -= corr;
                }
                let final_res = (m * &x + r).norm();
                if !final_res.is_finite() || final_res > 1e-8 * (1.0 + r.norm()) {
                    return Err(Error::Convergence {
                        message: "ClosedForm refinement did not reach residual tolerance".into(),
                        residual: final_res,
                    });
                }
                Ok(x)
            }
            NeMethod::Flow { step, horizon, tol } => {
                if step <= 0.0 || horizon <= 0.0 || tol <= 0.0 {
                    return Err(Error::input("Flow parameters must be positive"));
                }
                let mut x = DVector::zeros(self.total_dim());
                let mut t = 0.0;
                while t < horizon {
                    let f = self.pseudogradient(&x)?;
                    if f.norm() <= tol {
                        return Ok(x);
                    }
                    // classic RK4 on dx/dt = -F(x)
                    let k1 = -f;
                    let k2 = -self.pseudogradient(&(&x + &k1 * (step / 2.0)))?;
                    let k3 = -self.pseudogradient(&(&x + &k2 * (step / 2.0)))?;
                    let k4 = -self.pseudogradient(&(&x + &k3 * step))?;
                    x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (step / 6.0);
                    t += step;
                }
                let residual = self.pseudogradient(&x)?.norm();
                if residual <= tol {
                    Ok(x)
                } else {
                    Err(Error::Convergence {
                        message: format!("pseudogradient flow did not converge in horizon {horizon}"),
                        residual,
                    })
                }
            }
        }
    }

    fn check_x(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.total_dim() {
            return Err(Error::input(format!(
                "strategy vector has length {}, expected {}",
                x.len(),
                self.total_dim()
            )));
        }
        Ok(())
    }
}

/// Random strongly monotone LQ game for batch checks and benches.
///
/// Entries of `M` are drawn uniformly from `[-1, 1]`, then shifted by a
/// multiple of the identity so that `λ_min((M + M')/2)` lands exactly on
/// `target_mu`; `r` is drawn from `[-2, 2]`.
pub fn random_strongly_monotone_lq(
    seed: u64,
    max_players: usize,
    max_dim: usize,
    target_mu: f64,
) -> GameSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let num_players = rng.random_range(2..=max_players.max(2));
    let dims: Vec<usize> = (0..num_players).map(|_| rng.random_range(1..=max_dim.max(1))).collect();
    let n: usize = dims.iter().sum();
    let mut m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let sym = (&m + m.transpose()) * 0.5;
    let lam_min = sym.symmetric_eigen().eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    for i in 0..n {
        m[(i, i)] += target_mu - lam_min;
    }
    let r = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
    GameSpec::linear_quadratic(dims, m, r).expect("construction is shape-consistent")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn two_by_two() -> GameSpec {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let r = DVector::from_row_slice(&[-2.0, -2.0]);
        GameSpec::linear_quadratic(vec![1, 1], m, r).unwrap()
    }

    #[test]
    fn pseudogradient_at_origin_is_r() {
        let g = two_by_two();
        let f = g.pseudogradient(&DVector::zeros(2)).unwrap();
        assert_eq!(f, DVector::from_row_slice(&[-2.0, -2.0]));
    }

    #[test]
    fn pseudogradient_vanishes_at_ne() {
        let g = two_by_two();
        let x = DVector::from_row_slice(&[2.0 / 3.0, 2.0 / 3.0]);
        let f = g.pseudogradient(&x).unwrap();
        assert!(f.norm() < 1e-12, "F(x*) = {f}");
    }

    #[test]
    fn pseudogradient_rejects_bad_length() {
        let g = two_by_two();
        assert!(g.pseudogradient(&DVector::zeros(3)).is_err());
    }

    #[test]
    fn closed_form_ne() {
        let g = two_by_two();
        let x = g.solve_ne(NeMethod::ClosedForm).unwrap();
        assert_relative_eq!(x[0], 2.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(x[1], 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_r_gives_zero_ne() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let g = GameSpec::linear_quadratic(vec![2], m, DVector::zeros(2)).unwrap();
        let x = g.solve_ne(NeMethod::ClosedForm).unwrap();
        assert!(x.norm() < 1e-14);
    }

    #[test]
    fn closed_form_rejects_singular() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let g = GameSpec::linear_quadratic(vec![1, 1], m, DVector::from_element(2, 1.0)).unwrap();
        assert!(g.solve_ne(NeMethod::ClosedForm).is_err());
    }

    #[test]
    fn certify_exact_values() {
        let g = two_by_two();
        let cert = g.certify(CertifyMethod::Exact).unwrap();
        assert_relative_eq!(cert.mu, 1.0, epsilon = 1e-12);
        // block rows of [[2,1],[1,2]] both have norm sqrt(5)
        assert_relative_eq!(cert.psi[0], 5.0f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(cert.psi[1], 5.0f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn certify_identity() {
        let g = GameSpec::linear_quadratic(vec![1, 1, 1], DMatrix::identity(3, 3), DVector::zeros(3))
            .unwrap();
        let cert = g.certify(CertifyMethod::Exact).unwrap();
        assert_relative_eq!(cert.mu, 1.0, epsilon = 1e-14);
        for p in &cert.psi {
            assert_relative_eq!(*p, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn certify_rejects_nonmonotone() {
        // lambda_min of [[1, 1.5], [1.5, 1]] is -0.5
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 0.0, 1.0]);
        let g = GameSpec::linear_quadratic(vec![1, 1], m, DVector::zeros(2)).unwrap();
        match g.certify(CertifyMethod::Exact) {
            Err(Error::Certification(msg)) => assert!(msg.contains("-5.0") || msg.contains("-0.5")),
            other => panic!("expected certification failure, got {other:?}"),
        }
    }

    #[test]
    fn flow_matches_closed_form() {
        let g = two_by_two();
        let closed = g.solve_ne(NeMethod::ClosedForm).unwrap();
        let flow = g
            .solve_ne(NeMethod::Flow { step: 1e-2, horizon: 100.0, tol: 1e-9 })
            .unwrap();
        assert!((closed - flow).norm() < 1e-6);
    }

    #[test]
    fn flow_unconverged_reports_residual() {
        let g = two_by_two();
        let err = g.solve_ne(NeMethod::Flow { step: 1e-3, horizon: 1e-2, tol: 1e-12 });
        match err {
            Err(Error::Convergence { residual, .. }) => assert!(residual > 0.0),
            other => panic!("expected convergence error, got {other:?}"),
        }
    }

    #[test]
    fn custom_game_matches_lq_gradients() {
        // the same 2x2 LQ game expressed through closures
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let r = DVector::from_row_slice(&[-2.0, -2.0]);
        let mk_cost = |i: usize, m: DMatrix<f64>, r: DVector<f64>| -> CostFn {
            Arc::new(move |x: &DVector<f64>| {
                let xi = x[i];
                let other = x[1 - i];
                0.5 * m[(i, i)] * xi * xi + xi * (m[(i, 1 - i)] * other + r[i])
            })
        };
        let mk_grad = |i: usize, m: DMatrix<f64>, r: DVector<f64>| -> GradFn {
            Arc::new(move |x: &DVector<f64>| {
                DVector::from_element(1, m[(i, 0)] * x[0] + m[(i, 1)] * x[1] + r[i])
            })
        };
        let g = GameSpec::custom(
            vec![1, 1],
            vec![mk_cost(0, m.clone(), r.clone()), mk_cost(1, m.clone(), r.clone())],
            vec![mk_grad(0, m.clone(), r.clone()), mk_grad(1, m.clone(), r.clone())],
        )
        .unwrap();
        let lq = two_by_two();
        let x = DVector::from_row_slice(&[0.3, -1.2]);
        assert_relative_eq!(
            (g.pseudogradient(&x).unwrap() - lq.pseudogradient(&x).unwrap()).norm(),
            0.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn sampled_certificate_brackets_exact() {
        let g = two_by_two();
        let exact = g.certify(CertifyMethod::Exact).unwrap();
        let sampled = g
            .certify(CertifyMethod::Sampled { num_samples: 200, seed: 11 })
            .unwrap();
        // sampled mu is a lower estimate but for an affine F the quotient is
        // exact along eigen-directions only; it must be >= exact mu
        assert!(sampled.mu >= exact.mu - 1e-9);
        for i in 0..2 {
            assert!(sampled.psi[i] <= exact.psi[i] + 1e-9);
        }
    }

    #[test]
    fn random_lq_games_are_certified() {
        for seed in 0..5 {
            let g = random_strongly_monotone_lq(seed, 4, 2, 0.5);
            let cert = g.certify(CertifyMethod::Exact).unwrap();
            assert_relative_eq!(cert.mu, 0.5, epsilon = 1e-9);
        }
    }
}
