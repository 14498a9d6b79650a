//! Player dynamics: uncertain nonlinear plants in companion form.
//!
//! Each player's action `x_i ∈ R^{n_i}` obeys
//!
//! ```text
//! x_i^(r_i) + g_i(ξ_i, t) θ_i = u_i + d_i,
//! ```
//!
//! with `ξ_i = col(x_i, x_i', ..., x_i^(r_i-1))`, a known regressor `g_i`,
//! an unknown constant parameter `θ_i`, and a bounded piecewise-continuous
//! disturbance `d_i` whose bound is unknown to controllers. The state-space
//! form is `ξ_i' = A_i ξ_i + B_i (u_i + d_i - g_i(ξ_i,t) θ_i)` with the
//! shift/input/output matrices built from Kronecker products with
//! `I_{n_i}`.
//!
//! The fictitious output
//!
//! ```text
//! γ_i = Σ_{k=0}^{r_i-2} c_k x_i^(k) + x_i^(r_i-1)
//! ```
//!
//! with `a_i(s) = s^{r_i-1} + c_{r_i-2} s^{r_i-2} + ... + c_0` Hurwitz and
//! `c_0 = 1` reduces the high-order plant to first-order seeking dynamics:
//! in `(γ_i, x_i^s)` coordinates, `γ_i' = u_i + d_i - g_i θ_i + K_i^s x_i^s`
//! while the residual chain `x_i^s` is stabilized by the Hurwitz companion
//! block `A_i^K`. Coefficients are specified through pole placement, never
//! raw, so the normalization `c_0 = 1` cannot be silently violated: a pole
//! set whose polynomial has constant term `c ≠ 1` is rescaled by
//! `α = c^{-1/(r_i-1)}`, which preserves Hurwitzness.
//!
//! The true `θ_i` and disturbance bound live here and only here; control
//! laws receive the regressor and the realization, never the plant truth.

use std::sync::Arc;

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Known regressor `g_i(ξ_i, t)` returning an `n_i × m_i` matrix.
#[derive(Clone)]
pub enum Regressor {
    /// `g ≡ 0`; the plant degenerates to a disturbed integrator chain.
    Zero,
    /// Entry `(a, b) = scale · sin(ξ[(a + b·n_i) mod dim(ξ)])`; bounded by
    /// `scale · sqrt(n_i m_i)` independently of the state.
    SinOfState { scale: f64 },
    /// Entry `(a, b) = scale · s/(1+s²)` with `s = ξ[(a + b·n_i) mod dim(ξ)]`;
    /// bounded by `scale · sqrt(n_i m_i) / 2`.
    BoundedRational { scale: f64 },
    /// Caller-supplied regressor with a declared state-dependent bound
    /// `φ_i(ξ_i) ≥ ‖g_i(ξ_i, t)‖`. The bound is spot-checked by sampling at
    /// validation time, not proven.
    Custom {
        eval: Arc<dyn Fn(&DVector<f64>, f64) -> DMatrix<f64> + Send + Sync>,
        bound: Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>,
    },
}

impl std::fmt::Debug for Regressor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Regressor::Zero => write!(f, "Zero"),
            Regressor::SinOfState { scale } => write!(f, "SinOfState({scale})"),
            Regressor::BoundedRational { scale } => write!(f, "BoundedRational({scale})"),
            Regressor::Custom { .. } => write!(f, "Custom"),
        }
    }
}

impl Regressor {
    /// Evaluate `g_i(ξ, t)` with output shape `dim × param_dim`.
    pub fn eval(&self, xi: &DVector<f64>, t: f64, dim: usize, param_dim: usize) -> DMatrix<f64> {
        let len = xi.len().max(1);
        match self {
            Regressor::Zero => DMatrix::zeros(dim, param_dim),
            Regressor::SinOfState { scale } => DMatrix::from_fn(dim, param_dim, |a, b| {
                scale * xi[(a + b * dim) % len].sin()
            }),
            Regressor::BoundedRational { scale } => DMatrix::from_fn(dim, param_dim, |a, b| {
                let s = xi[(a + b * dim) % len];
                scale * s / (1.0 + s * s)
            }),
            Regressor::Custom { eval, .. } => eval(xi, t),
        }
    }

    /// The declared global bound `φ_i(ξ)` on `‖g_i(ξ, t)‖`.
    pub fn phi(&self, xi: &DVector<f64>, dim: usize, param_dim: usize) -> f64 {
        let cells = (dim * param_dim) as f64;
        match self {
            Regressor::Zero => 0.0,
            Regressor::SinOfState { scale } => scale.abs() * cells.sqrt(),
            Regressor::BoundedRational { scale } => scale.abs() * cells.sqrt() / 2.0,
            Regressor::Custom { bound, .. } => bound(xi),
        }
    }
}

/// Disturbance signal kinds. All generated signals are deterministic
/// functions of `(spec, t)` and respect the declared bound.
#[derive(Clone)]
pub enum DisturbanceKind {
    None,
    /// All components equal `amplitude · sin(2π·frequency·t + phase) / sqrt(n_i)`.
    Sinusoid { amplitude: f64, frequency: f64, phase: f64 },
    /// ±`amplitude/sqrt(n_i)` componentwise, switching every `period/2`.
    SquareWave { amplitude: f64, period: f64 },
    /// Constant on `[k·dwell, (k+1)·dwell)`, each component drawn uniformly
    /// from `[-amplitude, amplitude]/sqrt(n_i)` with a per-interval stream of
    /// the seeded generator.
    PiecewiseConstantRandom { amplitude: f64, dwell: f64, seed: u64 },
    /// `d(t) = output · exp(S t) · v0`; generator option for exosystem-driven
    /// signals, used only to produce disturbances, never as a controller model.
    Exosystem { s_matrix: DMatrix<f64>, output: DMatrix<f64>, v0: DVector<f64> },
}

impl std::fmt::Debug for DisturbanceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DisturbanceKind::None => write!(f, "None"),
            DisturbanceKind::Sinusoid { amplitude, frequency, phase } => {
                write!(f, "Sinusoid(A={amplitude}, f={frequency}, phi={phase})")
            }
            DisturbanceKind::SquareWave { amplitude, period } => {
                write!(f, "SquareWave(A={amplitude}, T={period})")
            }
            DisturbanceKind::PiecewiseConstantRandom { amplitude, dwell, seed } => {
                write!(f, "PiecewiseConstantRandom(A={amplitude}, dwell={dwell}, seed={seed})")
            }
            DisturbanceKind::Exosystem { s_matrix, .. } => {
                write!(f, "Exosystem(q={})", s_matrix.nrows())
            }
        }
    }
}

/// A disturbance signal together with its true bound `D_i`. The bound is
/// ground truth for the analysis monitors; controllers never see it.
#[derive(Debug, Clone)]
pub struct DisturbanceSpec {
    pub kind: DisturbanceKind,
    declared_bound: f64,
}

impl DisturbanceSpec {
    /// Build a spec. When `declared_bound` is omitted it defaults to the
    /// signal's exact sup-norm (0, amplitude, or a sampled estimate for
    /// exosystem signals). An explicit bound smaller than the amplitude is
    /// rejected.
    pub fn new(kind: DisturbanceKind, declared_bound: Option<f64>) -> Result<Self> {
        let natural = match &kind {
            DisturbanceKind::None => 0.0,
            DisturbanceKind::Sinusoid { amplitude, .. } => amplitude.abs(),
            DisturbanceKind::SquareWave { amplitude, period } => {
                if !(period > &0.0) {
                    return Err(Error::construction("square wave period must be positive"));
                }
                amplitude.abs()
            }
            DisturbanceKind::PiecewiseConstantRandom { amplitude, dwell, .. } => {
                if !(dwell > &0.0) {
                    return Err(Error::construction("piecewise-constant dwell must be positive"));
                }
                amplitude.abs()
            }
            DisturbanceKind::Exosystem { s_matrix, output, v0 } => {
                let q = s_matrix.nrows();
                if s_matrix.ncols() != q || output.ncols() != q || v0.len() != q {
                    return Err(Error::construction("exosystem shapes are inconsistent"));
                }
                // sampled estimate; validated against the declared bound below
                let mut sup: f64 = 0.0;
                for k in 0..=400 {
                    let t = k as f64 * 0.25;
                    sup = sup.max((output * expm(&(s_matrix * t)) * v0).norm());
                }
                sup
            }
        };
        let declared = declared_bound.unwrap_or(natural);
        if matches!(kind, DisturbanceKind::None) && declared == 0.0 {
            return Ok(DisturbanceSpec { kind, declared_bound: 0.0 });
        }
        if !(declared > 0.0) {
            return Err(Error::construction("declared disturbance bound must be positive"));
        }
        if declared + 1e-12 < natural {
            return Err(Error::construction(format!(
                "declared bound {declared} is below the signal amplitude {natural}"
            )));
        }
        Ok(DisturbanceSpec { kind, declared_bound: declared })
    }

    pub fn none() -> Self {
        DisturbanceSpec { kind: DisturbanceKind::None, declared_bound: 0.0 }
    }

    /// True bound `D_i`. Analysis privilege only.
    pub fn true_bound(&self) -> f64 {
        self.declared_bound
    }

    /// Deterministic sample of `d(t)` as an `dim`-vector.
    pub fn sample(&self, dim: usize, t: f64) -> DVector<f64> {
        let root = (dim as f64).sqrt();
        match &self.kind {
            DisturbanceKind::None => DVector::zeros(dim),
            DisturbanceKind::Sinusoid { amplitude, frequency, phase } => {
                let v = amplitude * (2.0 * std::f64::consts::PI * frequency * t + phase).sin();
                DVector::from_element(dim, v / root)
            }
            DisturbanceKind::SquareWave { amplitude, period } => {
                let half = period / 2.0;
                let k = interval_index(t, half);
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                DVector::from_element(dim, sign * amplitude / root)
            }
            DisturbanceKind::PiecewiseConstantRandom { amplitude, dwell, seed } => {
                let k = interval_index(t, *dwell);
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                rng.set_stream(k as u64);
                DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0) * amplitude / root)
            }
            DisturbanceKind::Exosystem { s_matrix, output, v0 } => {
                output * expm(&(s_matrix * t)) * v0
            }
        }
    }

    /// Spacing of the signal's discontinuities, when it has any.
    pub fn discontinuity_period(&self) -> Option<f64> {
        match &self.kind {
            DisturbanceKind::SquareWave { period, .. } => Some(period / 2.0),
            DisturbanceKind::PiecewiseConstantRandom { dwell, .. } => Some(*dwell),
            _ => None,
        }
    }

    /// Sample for integrator stages inside an event-aligned step anchored at
    /// `anchor`: piecewise-constant kinds hold the branch active at the
    /// anchor (their discontinuities are step boundaries, so stages must not
    /// peek across), continuous kinds sample at the stage time `t`.
    pub fn sample_anchored(&self, dim: usize, t: f64, anchor: f64) -> DVector<f64> {
        match &self.kind {
            DisturbanceKind::SquareWave { .. } | DisturbanceKind::PiecewiseConstantRandom { .. } => {
                self.sample(dim, anchor)
            }
            _ => self.sample(dim, t),
        }
    }
}

/// Index of the half-open interval `[k·width, (k+1)·width)` containing `t`,
/// snapped so that boundary hits land in the new interval.
fn interval_index(t: f64, width: f64) -> i64 {
    let mut k = (t / width).floor();
    if (t - (k + 1.0) * width).abs() <= 1e-9 * width.max(1.0) {
        k += 1.0;
    }
    k.max(0.0) as i64
}

/// One player's plant: order, action dimension, regressor, and the truth
/// (parameter and disturbance) hidden from controllers.
#[derive(Debug, Clone)]
pub struct PlantSpec {
    order: usize,
    dim: usize,
    regressor: Regressor,
    theta: DVector<f64>,
    disturbance: DisturbanceSpec,
}

impl PlantSpec {
    pub fn new(
        order: usize,
        dim: usize,
        regressor: Regressor,
        theta: DVector<f64>,
        disturbance: DisturbanceSpec,
    ) -> Result<Self> {
        if order == 0 {
            return Err(Error::construction("plant order r_i must be >= 1"));
        }
        if dim == 0 {
            return Err(Error::construction("action dimension n_i must be >= 1"));
        }
        Ok(PlantSpec { order, dim, regressor, theta, disturbance })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Length of the unknown parameter vector `m_i`.
    pub fn param_dim(&self) -> usize {
        self.theta.len()
    }

    /// Full state dimension `n_i · r_i`.
    pub fn state_dim(&self) -> usize {
        self.dim * self.order
    }

    pub fn regressor(&self) -> &Regressor {
        &self.regressor
    }

    /// True parameter `θ_i`. Simulation/analysis privilege; the adaptive
    /// laws only ever see their own estimate.
    pub fn true_theta(&self) -> &DVector<f64> {
        &self.theta
    }

    /// Disturbance signal with its true bound. Same privilege rules.
    pub fn disturbance(&self) -> &DisturbanceSpec {
        &self.disturbance
    }

    /// `g_i(ξ_i, t)` with this plant's shape.
    pub fn regressor_at(&self, xi: &DVector<f64>, t: f64) -> DMatrix<f64> {
        self.regressor.eval(xi, t, self.dim, self.param_dim())
    }

    pub fn sample_disturbance(&self, t: f64) -> DVector<f64> {
        self.disturbance.sample(self.dim, t)
    }
}

/// Companion-form realization of one plant plus the fictitious-output data.
#[derive(Debug, Clone)]
pub struct CompanionRealization {
    order: usize,
    dim: usize,
    /// `c_0, ..., c_{r_i-2}` with `c_0 = 1`; empty for first-order plants.
    coeffs: Vec<f64>,
    /// Pole set after the `c_0 = 1` rescale.
    poles: Vec<Complex<f64>>,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    a_s: DMatrix<f64>,
    b_s: DMatrix<f64>,
    k_s: DMatrix<f64>,
    a_k: DMatrix<f64>,
}

/// Build the companion realization for order `r_i` and action dimension
/// `n_i` from `r_i - 1` Hurwitz poles. The pole set is rescaled so the
/// expanded polynomial has constant coefficient exactly 1; a pole set for
/// which this is impossible (pole at the origin, unpaired complex poles,
/// any pole in the closed right half-plane) is rejected.
pub fn build_realization(
    order: usize,
    dim: usize,
    poles: &[Complex<f64>],
) -> Result<CompanionRealization> {
    if order == 0 {
        return Err(Error::construction("order must be >= 1"));
    }
    if dim == 0 {
        return Err(Error::construction("dim must be >= 1"));
    }
    if poles.len() != order - 1 {
        return Err(Error::construction(format!(
            "order {order} needs exactly {} poles, got {}",
            order - 1,
            poles.len()
        )));
    }
    for p in poles {
        if p.re >= 0.0 {
            return Err(Error::construction(format!(
                "pole {p} is not in the open left half-plane"
            )));
        }
    }
    let mut poles: Vec<Complex<f64>> = poles.to_vec();
    let mut coeffs = Vec::new();
    if order >= 2 {
        let raw = expand_monic(&poles)?;
        let c0 = raw[0];
        if c0.abs() < 1e-12 {
            return Err(Error::construction("polynomial constant coefficient is zero"));
        }
        if c0 < 0.0 {
            // cannot happen for a conjugate-closed Hurwitz pole set
            return Err(Error::construction("polynomial constant coefficient is negative"));
        }
        if (c0 - 1.0).abs() > 1e-12 {
            let alpha = c0.powf(-1.0 / (order as f64 - 1.0));
            for p in poles.iter_mut() {
                *p *= alpha;
            }
        }
        coeffs = expand_monic(&poles)?;
        coeffs[0] = 1.0; // exact normalization after the rescale
    }

    let shift = |k: usize| -> DMatrix<f64> {
        DMatrix::from_fn(k, k, |i, j| if j == i + 1 { 1.0 } else { 0.0 })
    };
    let last_unit = |k: usize| -> DMatrix<f64> {
        DMatrix::from_fn(k, 1, |i, _| if i + 1 == k { 1.0 } else { 0.0 })
    };
    let eye = DMatrix::<f64>::identity(dim, dim);

    let a = shift(order).kronecker(&eye);
    let b = last_unit(order).kronecker(&eye);
    let c = DMatrix::from_fn(1, order, |_, j| if j == 0 { 1.0 } else { 0.0 }).kronecker(&eye);

    let s = order - 1;
    let a_s = shift(s).kronecker(&eye);
    let b_s = if s > 0 { last_unit(s).kronecker(&eye) } else { DMatrix::zeros(0, dim) };
    let k_s = DMatrix::from_fn(1, s, |_, j| coeffs[j]).kronecker(&eye);
    let mut a_k = shift(s).kronecker(&eye);
    if s > 0 {
        for (k, &ck) in coeffs.iter().enumerate() {
            for cdim in 0..dim {
                a_k[((s - 1) * dim + cdim, k * dim + cdim)] -= ck;
            }
        }
    }

    Ok(CompanionRealization { order, dim, coeffs, poles, a, b, c, a_s, b_s, k_s, a_k })
}

impl CompanionRealization {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn state_dim(&self) -> usize {
        self.order * self.dim
    }

    /// Residual-chain dimension `n_i (r_i - 1)`.
    pub fn residual_dim(&self) -> usize {
        (self.order - 1) * self.dim
    }

    /// Hurwitz coefficients `c_0, ..., c_{r_i-2}` (empty when `r_i = 1`).
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn poles(&self) -> &[Complex<f64>] {
        &self.poles
    }

    pub fn a_full(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b_full(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c_full(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn a_s(&self) -> &DMatrix<f64> {
        &self.a_s
    }

    pub fn b_s(&self) -> &DMatrix<f64> {
        &self.b_s
    }

    /// `K_i^s = [c_0 ... c_{r_i-2}] ⊗ I_{n_i}`.
    pub fn k_s(&self) -> &DMatrix<f64> {
        &self.k_s
    }

    /// Hurwitz residual-chain matrix `A_i^K`.
    pub fn a_k(&self) -> &DMatrix<f64> {
        &self.a_k
    }

    /// Fictitious output `γ_i = Σ c_k x^(k) + x^(r_i-1)`.
    pub fn fictitious_output(&self, xi: &DVector<f64>) -> Result<DVector<f64>> {
        if xi.len() != self.state_dim() {
            return Err(Error::input(format!(
                "state has length {}, expected {}",
                xi.len(),
                self.state_dim()
            )));
        }
        let n = self.dim;
        let r = self.order;
        let mut gamma = xi.rows((r - 1) * n, n).clone_owned();
        for (k, &ck) in self.coeffs.iter().enumerate() {
            for c in 0..n {
                gamma[c] += ck * xi[k * n + c];
            }
        }
        Ok(gamma)
    }

    /// `K_i^s x_i^s` without materializing the Kronecker matrix.
    pub fn ks_times(&self, xs: &DVector<f64>) -> DVector<f64> {
        let n = self.dim;
        let mut out = DVector::zeros(n);
        for (k, &ck) in self.coeffs.iter().enumerate() {
            for c in 0..n {
                out[c] += ck * xs[k * n + c];
            }
        }
        out
    }
}

/// Free-function form of [`CompanionRealization::fictitious_output`].
pub fn fictitious_output_of(
    realization: &CompanionRealization,
    xi: &DVector<f64>,
) -> Result<DVector<f64>> {
    realization.fictitious_output(xi)
}

/// Right-hand side of the plant: `A_i ξ_i + B_i (u_i + d_i(t) - g_i(ξ_i,t) θ_i)`.
pub fn plant_derivative(
    spec: &PlantSpec,
    realization: &CompanionRealization,
    xi: &DVector<f64>,
    u: &DVector<f64>,
    t: f64,
) -> Result<DVector<f64>> {
    let d = spec.sample_disturbance(t);
    plant_derivative_with(spec, realization, xi, u, t, &d)
}

/// Same with an externally supplied disturbance sample (the integrator uses
/// this to hold piecewise-constant disturbances fixed across RK stages).
pub fn plant_derivative_with(
    spec: &PlantSpec,
    realization: &CompanionRealization,
    xi: &DVector<f64>,
    u: &DVector<f64>,
    t: f64,
    d: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = spec.dim();
    let r = spec.order();
    if xi.len() != spec.state_dim() {
        return Err(Error::input(format!(
            "state has length {}, expected {}",
            xi.len(),
            spec.state_dim()
        )));
    }
    if u.len() != n || d.len() != n {
        return Err(Error::input(format!("input has length {}, expected {n}", u.len())));
    }
    if realization.order() != r || realization.dim() != n {
        return Err(Error::input("realization does not match the plant shape"));
    }
    let mut dxi = DVector::zeros(xi.len());
    // integrator chain: block k advances to block k+1
    for k in 0..r - 1 {
        for c in 0..n {
            dxi[k * n + c] = xi[(k + 1) * n + c];
        }
    }
    let forcing = u + d - spec.regressor_at(xi, t) * spec.true_theta();
    for c in 0..n {
        dxi[(r - 1) * n + c] = forcing[c];
    }
    Ok(dxi)
}

/// Expand `Π (s - p_k)` and return the real coefficients in ascending order
/// without the leading 1. Fails when the imaginary parts do not cancel,
/// i.e. the pole set is not closed under conjugation.
fn expand_monic(poles: &[Complex<f64>]) -> Result<Vec<f64>> {
    let mut poly = vec![Complex::new(1.0, 0.0)];
    for p in poles {
        let mut next = vec![Complex::new(0.0, 0.0); poly.len() + 1];
        for (k, &coef) in poly.iter().enumerate() {
            next[k + 1] += coef;
            next[k] -= coef * p;
        }
        poly = next;
    }
    let scale: f64 = poly.iter().map(|c| c.norm()).fold(1.0, f64::max);
    let mut out = Vec::with_capacity(poly.len() - 1);
    for coef in &poly[..poly.len() - 1] {
        if coef.im.abs() > 1e-9 * scale {
            return Err(Error::construction(
                "complex poles must come in conjugate pairs (imaginary parts do not cancel)",
            ));
        }
        out.push(coef.re);
    }
    Ok(out)
}

/// Matrix exponential by scaling and squaring on a Taylor series; adequate
/// for the small exosystem generators used here.
pub(crate) fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let norm = m.iter().map(|v| v.abs()).fold(0.0, f64::max) * n as f64;
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
    let scaled = m / 2f64.powi(squarings as i32);
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut result = DMatrix::<f64>::identity(n, n);
    for k in 1..=16 {
        term = &term * &scaled / k as f64;
        result += &term;
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn first_order_realization() {
        let r = build_realization(1, 1, &[]).unwrap();
        assert_eq!(r.a_full(), &DMatrix::zeros(1, 1));
        assert_eq!(r.b_full(), &DMatrix::identity(1, 1));
        assert_eq!(r.c_full(), &DMatrix::identity(1, 1));
        assert_eq!(r.k_s().ncols(), 0);
        let gamma = r.fictitious_output(&DVector::from_element(1, 4.0)).unwrap();
        assert_eq!(gamma[0], 4.0);
    }

    #[test]
    fn second_order_pole_at_minus_one() {
        let r = build_realization(2, 1, &[Complex::new(-1.0, 0.0)]).unwrap();
        assert_eq!(r.coeffs(), &[1.0]);
        let gamma = r.fictitious_output(&DVector::from_row_slice(&[3.0, -1.0])).unwrap();
        assert_eq!(gamma[0], 2.0);
        assert_eq!(r.a_k(), &DMatrix::from_element(1, 1, -1.0));
    }

    #[test]
    fn third_order_double_pole() {
        let r = build_realization(3, 1, &[Complex::new(-1.0, 0.0), Complex::new(-1.0, 0.0)])
            .unwrap();
        // (s+1)^2 = s^2 + 2s + 1
        assert_relative_eq!(r.coeffs()[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(r.coeffs()[1], 2.0, epsilon = 1e-14);
        let expect = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -2.0]);
        assert_relative_eq!((r.a_k() - expect).norm(), 0.0, epsilon = 1e-14);
        let gamma = r.fictitious_output(&DVector::from_row_slice(&[1.0, 1.0, 1.0])).unwrap();
        assert_eq!(gamma[0], 4.0);
    }

    #[test]
    fn pole_rescale_restores_unit_constant() {
        // (s+2)^2 has c0 = 4; the scaled set must give c0 = 1 exactly
        let r = build_realization(3, 2, &[Complex::new(-2.0, 0.0), Complex::new(-2.0, 0.0)])
            .unwrap();
        assert_eq!(r.coeffs()[0], 1.0);
        for p in r.poles() {
            assert!(p.re < 0.0);
            assert_relative_eq!(p.re, -1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn complex_pair_poles_expand_real() {
        let r = build_realization(
            3,
            1,
            &[Complex::new(-0.5, 0.8660254037844386), Complex::new(-0.5, -0.8660254037844386)],
        )
        .unwrap();
        // (s^2 + s + 1): already c0 = 1
        assert_relative_eq!(r.coeffs()[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(r.coeffs()[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_pole_sets() {
        assert!(build_realization(2, 1, &[Complex::new(0.0, 0.0)]).is_err());
        assert!(build_realization(2, 1, &[Complex::new(0.5, 0.0)]).is_err());
        assert!(build_realization(3, 1, &[Complex::new(-1.0, 1.0), Complex::new(-1.0, 0.5)])
            .is_err());
        assert!(build_realization(3, 1, &[Complex::new(-1.0, 0.0)]).is_err());
    }

    #[test]
    fn a_k_is_hurwitz_for_random_pole_sets() {
        for seed in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let order = rng.random_range(2..=4usize);
            let poles: Vec<Complex<f64>> = (0..order - 1)
                .map(|_| Complex::new(-rng.random_range(0.2..3.0), 0.0))
                .collect();
            let r = build_realization(order, 1, &poles).unwrap();
            for ev in r.a_k().complex_eigenvalues().iter() {
                assert!(ev.re < 0.0, "seed {seed}: eigenvalue {ev} not stable");
            }
        }
    }

    #[test]
    fn fictitious_output_is_linear() {
        let r = build_realization(3, 2, &[Complex::new(-1.0, 0.0), Complex::new(-3.0, 0.0)])
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let x = DVector::from_fn(6, |_, _| rng.random_range(-5.0..5.0));
            let y = DVector::from_fn(6, |_, _| rng.random_range(-5.0..5.0));
            let (a, b) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let lhs = r.fictitious_output(&(&x * a + &y * b)).unwrap();
            let rhs = r.fictitious_output(&x).unwrap() * a + r.fictitious_output(&y).unwrap() * b;
            assert_relative_eq!((lhs - rhs).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn plant_derivative_integrator_chain() {
        let spec = PlantSpec::new(
            2,
            1,
            Regressor::Zero,
            DVector::zeros(0),
            DisturbanceSpec::none(),
        )
        .unwrap();
        let real = build_realization(2, 1, &[Complex::new(-1.0, 0.0)]).unwrap();
        let dxi = plant_derivative(
            &spec,
            &real,
            &DVector::from_row_slice(&[0.0, 5.0]),
            &DVector::zeros(1),
            0.0,
        )
        .unwrap();
        assert_eq!(dxi, DVector::from_row_slice(&[5.0, 0.0]));
    }

    #[test]
    fn plant_derivative_single_integrator_is_u() {
        let spec = PlantSpec::new(1, 2, Regressor::Zero, DVector::zeros(0), DisturbanceSpec::none())
            .unwrap();
        let real = build_realization(1, 2, &[]).unwrap();
        let u = DVector::from_row_slice(&[0.3, -0.7]);
        let dxi =
            plant_derivative(&spec, &real, &DVector::zeros(2), &u, 1.0).unwrap();
        assert_eq!(dxi, u);
    }

    #[test]
    fn sin_regressor_matches_hand_value() {
        let spec = PlantSpec::new(
            1,
            1,
            Regressor::SinOfState { scale: 1.0 },
            DVector::from_element(1, 2.0),
            DisturbanceSpec::none(),
        )
        .unwrap();
        let real = build_realization(1, 1, &[]).unwrap();
        let xi = DVector::from_element(1, std::f64::consts::FRAC_PI_2);
        let dxi = plant_derivative(&spec, &real, &xi, &DVector::zeros(1), 0.0).unwrap();
        assert_relative_eq!(dxi[0], -2.0, epsilon = 1e-14);
    }

    #[test]
    fn disturbance_none_is_zero() {
        assert_eq!(DisturbanceSpec::none().sample(3, 1.7), DVector::zeros(3));
    }

    #[test]
    fn sinusoid_respects_bound() {
        let d = DisturbanceSpec::new(
            DisturbanceKind::Sinusoid { amplitude: 1.0, frequency: 1.0, phase: 0.0 },
            None,
        )
        .unwrap();
        let v = d.sample(1, 0.25);
        assert!(v.norm() <= 1.0 + 1e-15);
        assert_relative_eq!(v[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn square_wave_flips_at_half_period() {
        let d = DisturbanceSpec::new(
            DisturbanceKind::SquareWave { amplitude: 2.0, period: 1.0 },
            None,
        )
        .unwrap();
        assert_eq!(d.sample(1, 0.25)[0], 2.0);
        assert_eq!(d.sample(1, 0.5)[0], -2.0);
        assert_eq!(d.sample(1, 0.75)[0], -2.0);
        assert_eq!(d.sample(1, 1.0)[0], 2.0);
        assert_eq!(d.discontinuity_period(), Some(0.5));
    }

    #[test]
    fn piecewise_constant_random_bound_and_dwell() {
        let d = DisturbanceSpec::new(
            DisturbanceKind::PiecewiseConstantRandom { amplitude: 2.0, dwell: 0.5, seed: 7 },
            None,
        )
        .unwrap();
        let mut max = 0.0f64;
        let mut prev = d.sample(1, 0.0)[0];
        for k in 1..10_000 {
            let t = k as f64 * 1e-3;
            let v = d.sample(1, t)[0];
            max = max.max(v.abs());
            if v != prev {
                // discontinuities only at multiples of the dwell
                let offset = t / 0.5 - (t / 0.5).round();
                assert!(offset.abs() < 1e-2, "jump at t = {t}");
            }
            prev = v;
        }
        assert!(max <= 2.0 + 1e-12);
    }

    #[test]
    fn piecewise_constant_random_is_deterministic() {
        let d = DisturbanceSpec::new(
            DisturbanceKind::PiecewiseConstantRandom { amplitude: 1.0, dwell: 0.25, seed: 42 },
            None,
        )
        .unwrap();
        for k in 0..50 {
            let t = k as f64 * 0.13;
            assert_eq!(d.sample(2, t), d.sample(2, t));
        }
    }

    #[test]
    fn exosystem_harmonic_oscillator() {
        // v' = [[0, 1], [-1, 0]] v, d = [1 0] v, v0 = (0, 1): d(t) = sin t
        let s = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let out = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let v0 = DVector::from_row_slice(&[0.0, 1.0]);
        let d = DisturbanceSpec::new(
            DisturbanceKind::Exosystem { s_matrix: s, output: out, v0 },
            Some(1.0),
        )
        .unwrap();
        for k in 0..20 {
            let t = k as f64 * 0.3;
            assert_relative_eq!(d.sample(1, t)[0], t.sin(), epsilon = 1e-9);
        }
    }

    #[test]
    fn builtin_regressors_respect_phi() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for reg in [
            Regressor::Zero,
            Regressor::SinOfState { scale: 1.3 },
            Regressor::BoundedRational { scale: 2.0 },
        ] {
            for _ in 0..200 {
                let xi = DVector::from_fn(6, |_, _| rng.random_range(-50.0..50.0));
                let t = rng.random_range(0.0..100.0);
                let g = reg.eval(&xi, t, 2, 3);
                let bound = reg.phi(&xi, 2, 3);
                let norm = g.norm(); // Frobenius dominates the spectral norm
                assert!(norm <= bound + 1e-12, "{reg:?}: {norm} > {bound}");
            }
        }
    }
}
