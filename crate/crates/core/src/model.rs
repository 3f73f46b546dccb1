//! Coefficient interface, the linear coefficient family, and dissipativity
//! constants for that family.
//!
//! Coefficients are evaluated into caller-provided buffers so the
//! integrator never allocates inside its step loop. The diffusion matrix is
//! written row-major: entry `(i, j)` of the `d × n` matrix lives at
//! `out[i * n + j]`.

use serde::{Deserialize, Serialize};

use crate::analysis::lambda::solve_lambda_star;
use crate::error::{Error, Result};
use crate::randomness::{MarkMeasure, MarkMoments};

/// Drift, diffusion and jump coefficients of the equation, together with
/// the exact compensator `∫ g(t, x, y, ρ) ν(dρ)`.
///
/// Implementations must be deterministic and re-entrant; one instance is
/// shared by all simulation workers.
pub trait Coefficients: Send + Sync {
    fn dim(&self) -> usize;
    fn noise_dim(&self) -> usize;
    fn drift(&self, t: f64, x: &[f64], y: &[f64], out: &mut [f64]);
    fn diffusion(&self, t: f64, x: &[f64], y: &[f64], out: &mut [f64]);
    fn jump(&self, t: f64, x: &[f64], y: &[f64], mark: &[f64], out: &mut [f64]);
    fn compensator(&self, t: f64, x: &[f64], y: &[f64], out: &mut [f64]);

    /// Whether `g ≥ 0` holds for every state and every mark in the support
    /// of `marks`. The default only knows that a null measure never jumps.
    fn jumps_nonnegative(&self, marks: &MarkMeasure) -> bool {
        marks.total_rate() == 0.0
    }

    /// Whether the drift is independent of time.
    fn time_homogeneous(&self) -> bool {
        false
    }
}

type StateFn = Box<dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync>;
type JumpFn = Box<dyn Fn(f64, &[f64], &[f64], &[f64], &mut [f64]) + Send + Sync>;

/// Closure-backed coefficients for user-defined models. Unset coefficients
/// are identically zero. No dissipativity check is attempted.
pub struct CoefficientSet {
    dim: usize,
    noise_dim: usize,
    drift: Option<StateFn>,
    diffusion: Option<StateFn>,
    jump: Option<JumpFn>,
    compensator: Option<StateFn>,
    nonnegative_jumps: bool,
    homogeneous: bool,
}

impl std::fmt::Debug for CoefficientSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoefficientSet")
            .field("dim", &self.dim)
            .field("noise_dim", &self.noise_dim)
            .field("drift", &self.drift.is_some())
            .field("diffusion", &self.diffusion.is_some())
            .field("jump", &self.jump.is_some())
            .finish()
    }
}

impl CoefficientSet {
    pub fn new(dim: usize, noise_dim: usize) -> Self {
        CoefficientSet {
            dim,
            noise_dim,
            drift: None,
            diffusion: None,
            jump: None,
            compensator: None,
            nonnegative_jumps: false,
            homogeneous: false,
        }
    }

    pub fn with_drift<F>(mut self, f: F) -> Self
    where
        F: Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.drift = Some(Box::new(f));
        self
    }

    pub fn with_diffusion<F>(mut self, f: F) -> Self
    where
        F: Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.diffusion = Some(Box::new(f));
        self
    }

    /// Set the jump coefficient and its exact compensator together.
    pub fn with_jump<G, C>(mut self, jump: G, compensator: C) -> Self
    where
        G: Fn(f64, &[f64], &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
        C: Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.jump = Some(Box::new(jump));
        self.compensator = Some(Box::new(compensator));
        self
    }

    /// Declare `g ≥ 0`; the caller vouches for it.
    pub fn declare_nonnegative_jumps(mut self) -> Self {
        self.nonnegative_jumps = true;
        self
    }

    pub fn declare_time_homogeneous(mut self) -> Self {
        self.homogeneous = true;
        self
    }
}

impl Coefficients for CoefficientSet {
    fn dim(&self) -> usize {
        self.dim
    }

    fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    fn drift(&self, t: f64, x: &[f64], y: &[f64], out: &mut [f64]) {
        match &self.drift {
            Some(f) => f(t, x, y, out),
            None => out.fill(0.0),
        }
    }

    fn diffusion(&self, t: f64, x: &[f64], y: &[f64], out: &mut [f64]) {
        match &self.diffusion {
            Some(f) => f(t, x, y, out),
            None => out.fill(0.0),
        }
    }

    fn jump(&self, t: f64, x: &[f64], y: &[f64], mark: &[f64], out: &mut [f64]) {
        match &self.jump {
            Some(f) => f(t, x, y, mark, out),
            None => out.fill(0.0),
        }
    }

    fn compensator(&self, t: f64, x: &[f64], y: &[f64], out: &mut [f64]) {
        match &self.compensator {
            Some(f) => f(t, x, y, out),
            None => out.fill(0.0),
        }
    }

    fn jumps_nonnegative(&self, marks: &MarkMeasure) -> bool {
        self.nonnegative_jumps || self.jump.is_none() || marks.total_rate() == 0.0
    }

    fn time_homogeneous(&self) -> bool {
        self.homogeneous
    }
}

/// A rate that is either constant or piecewise constant in time.
///
/// For the piecewise form, `values[k]` applies on `[breaks[k-1], breaks[k])`
/// with `values[0]` before the first break and the last value after the
/// last break.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RateFn {
    Constant(f64),
    Piecewise { breaks: Vec<f64>, values: Vec<f64> },
}

impl RateFn {
    pub fn validate(&self, name: &str) -> Result<()> {
        match self {
            RateFn::Constant(v) if v.is_finite() => Ok(()),
            RateFn::Constant(v) => Err(Error::invalid(name, format!("rate must be finite, got {v}"))),
            RateFn::Piecewise { breaks, values } => {
                if values.len() != breaks.len() + 1 {
                    return Err(Error::invalid(name, "piecewise rate needs one more value than breaks"));
                }
                if breaks.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(Error::invalid(name, "breaks must be strictly increasing"));
                }
                if breaks.iter().chain(values).any(|v| !v.is_finite()) {
                    return Err(Error::invalid(name, "breaks and values must be finite"));
                }
                Ok(())
            }
        }
    }

    #[inline]
    pub fn at(&self, t: f64) -> f64 {
        match self {
            RateFn::Constant(v) => *v,
            RateFn::Piecewise { breaks, values } => values[breaks.partition_point(|&b| b <= t)],
        }
    }

    pub fn inf(&self) -> f64 {
        match self {
            RateFn::Constant(v) => *v,
            RateFn::Piecewise { values, .. } => values.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }

    pub fn sup(&self) -> f64 {
        match self {
            RateFn::Constant(v) => *v,
            RateFn::Piecewise { values, .. } => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    pub fn sup_abs(&self) -> f64 {
        self.inf().abs().max(self.sup().abs())
    }

    pub fn is_constant(&self) -> bool {
        match self {
            RateFn::Constant(_) => true,
            RateFn::Piecewise { values, .. } => values.windows(2).all(|w| w[0] == w[1]),
        }
    }
}

impl From<f64> for RateFn {
    fn from(v: f64) -> Self {
        RateFn::Constant(v)
    }
}

/// Diagonal diffusion `σ_ii(x, y) = base + state·x_i + delay·y_i` for
/// `i < min(d, n)`; all other entries vanish.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearDiffusion {
    #[serde(default)]
    pub base: f64,
    #[serde(default)]
    pub state: f64,
    #[serde(default)]
    pub delay: f64,
}

impl LinearDiffusion {
    /// Lipschitz constant `ℓ_σ` with `‖σ(x,y) − σ(x̂,ŷ)‖² ≤ ℓ_σ(|x−x̂|² + |y−ŷ|²)`.
    pub fn lipschitz(&self) -> f64 {
        self.state * self.state + self.delay * self.delay
    }
}

/// Parameters of the linear family
///
/// ```text
/// b_i(t,x,y)   = −γ(t) x_i + θ(t) y_i
/// σ_ii(t,x,y)  = σ₀ + σ_x x_i + σ_y y_i
/// g_i(t,x,y,ρ) = (ℓ_g(t) x_i + θ₂(t) y_i) ρ_i
/// ```
///
/// The mark profile acts coordinatewise, so the compensator only needs the
/// first moments `∫ρ_i ν(dρ)` and the Lipschitz bound only the second
/// moments `∫ρ_i² ν(dρ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModelParams {
    pub dim: usize,
    pub noise_dim: usize,
    /// γ
    pub decay: RateFn,
    /// θ
    pub delay_gain: RateFn,
    /// ℓ_g
    pub jump_state_gain: RateFn,
    /// θ₂
    pub jump_delay_gain: RateFn,
    pub diffusion: LinearDiffusion,
    pub mark_moments: MarkMoments,
    /// τ
    pub delay: f64,
}

impl LinearModelParams {
    /// Pure linear drift `−γx + θy` with no noise and no jumps.
    pub fn deterministic(dim: usize, decay: f64, delay_gain: f64, delay: f64) -> Self {
        LinearModelParams {
            dim,
            noise_dim: dim,
            decay: decay.into(),
            delay_gain: delay_gain.into(),
            jump_state_gain: 0.0.into(),
            jump_delay_gain: 0.0.into(),
            diffusion: LinearDiffusion::default(),
            mark_moments: MarkMoments::zero(dim),
            delay,
        }
    }

    /// Take the mark moments from the jump measure used in simulation.
    pub fn with_marks(mut self, marks: &MarkMeasure) -> Self {
        self.mark_moments = marks.moments();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::invalid("dim", "dimension must be positive"));
        }
        if self.noise_dim == 0 {
            return Err(Error::invalid("noise_dim", "noise dimension must be positive"));
        }
        if !(self.delay > 0.0) || !self.delay.is_finite() {
            return Err(Error::invalid(
                "delay",
                format!("τ must be positive, got {}", self.delay),
            ));
        }
        self.decay.validate("decay")?;
        self.delay_gain.validate("delay_gain")?;
        self.jump_state_gain.validate("jump_state_gain")?;
        self.jump_delay_gain.validate("jump_delay_gain")?;
        if !(self.decay.inf() > 0.0) {
            return Err(Error::invalid(
                "decay",
                format!("γ must be positive, got infimum {}", self.decay.inf()),
            ));
        }
        if self.delay_gain.inf() < 0.0 {
            return Err(Error::invalid("delay_gain", "θ must be nonnegative"));
        }
        let d = &self.diffusion;
        if ![d.base, d.state, d.delay].iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("diffusion", "coefficients must be finite"));
        }
        let m = &self.mark_moments;
        if m.first.len() != self.dim || m.second.len() != self.dim {
            return Err(Error::invalid("mark_moments", "need one moment per coordinate"));
        }
        if m.first.iter().chain(&m.second).any(|v| !v.is_finite()) || m.second.iter().any(|&v| v < 0.0) {
            return Err(Error::invalid(
                "mark_moments",
                "moments must be finite, second moments nonnegative",
            ));
        }
        Ok(())
    }

    /// `ℓ*_{σ,g} = sup_t (ℓ_σ(t) + ∫ℓ_g(t,ρ) ν(dρ))` for this family.
    pub fn lipschitz_bound(&self) -> f64 {
        let max_second = self.mark_moments.second.iter().copied().fold(0.0, f64::max);
        let gains = self.jump_state_gain.sup_abs().powi(2) + self.jump_delay_gain.sup_abs().powi(2);
        self.diffusion.lipschitz() + gains * max_second
    }
}

/// The linear coefficient family; see [`LinearModelParams`].
#[derive(Debug, Clone)]
pub struct LinearModel {
    params: LinearModelParams,
    diag: usize,
}

impl LinearModel {
    pub fn params(&self) -> &LinearModelParams {
        &self.params
    }
}

/// Build the linear family after checking its parameters.
pub fn build_linear_model(params: LinearModelParams) -> Result<LinearModel> {
    params.validate()?;
    let diag = params.dim.min(params.noise_dim);
    Ok(LinearModel { params, diag })
}

impl Coefficients for LinearModel {
    fn dim(&self) -> usize {
        self.params.dim
    }

    fn noise_dim(&self) -> usize {
        self.params.noise_dim
    }

    #[inline]
    fn drift(&self, t: f64, x: &[f64], y: &[f64], out: &mut [f64]) {
        let gamma = self.params.decay.at(t);
        let theta = self.params.delay_gain.at(t);
        for ((o, xi), yi) in out.iter_mut().zip(x).zip(y) {
            *o = -gamma * xi + theta * yi;
        }
    }

    #[inline]
    fn diffusion(&self, _t: f64, x: &[f64], y: &[f64], out: &mut [f64]) {
        let n = self.params.noise_dim;
        let s = &self.params.diffusion;
        out.fill(0.0);
        for i in 0..self.diag {
            out[i * n + i] = s.base + s.state * x[i] + s.delay * y[i];
        }
    }

    #[inline]
    fn jump(&self, t: f64, x: &[f64], y: &[f64], mark: &[f64], out: &mut [f64]) {
        let lg = self.params.jump_state_gain.at(t);
        let th2 = self.params.jump_delay_gain.at(t);
        for (((o, xi), yi), r) in out.iter_mut().zip(x).zip(y).zip(mark) {
            *o = (lg * xi + th2 * yi) * r;
        }
    }

    #[inline]
    fn compensator(&self, t: f64, x: &[f64], y: &[f64], out: &mut [f64]) {
        let lg = self.params.jump_state_gain.at(t);
        let th2 = self.params.jump_delay_gain.at(t);
        let first = &self.params.mark_moments.first;
        for (((o, xi), yi), m) in out.iter_mut().zip(x).zip(y).zip(first) {
            *o = (lg * xi + th2 * yi) * m;
        }
    }

    fn jumps_nonnegative(&self, marks: &MarkMeasure) -> bool {
        if marks.total_rate() == 0.0 {
            return true;
        }
        let p = &self.params;
        let gains_nonneg = p.jump_state_gain.inf() >= 0.0 && p.jump_delay_gain.inf() >= 0.0;
        let gains_nonpos = p.jump_state_gain.sup() <= 0.0 && p.jump_delay_gain.sup() <= 0.0;
        let (lo, hi) = marks.support_bounds();
        let marks_nonneg = lo.iter().all(|&v| v >= 0.0);
        let marks_nonpos = hi.iter().all(|&v| v <= 0.0);
        (gains_nonneg && marks_nonneg) || (gains_nonpos && marks_nonpos)
    }

    fn time_homogeneous(&self) -> bool {
        self.params.decay.is_constant() && self.params.delay_gain.is_constant()
    }
}

/// Number of points of the logarithmic `ε²` grid on `[10⁻³, 10³]`.
pub const EPSILON_GRID_POINTS: usize = 61;

/// The `k`-th point of the `ε²` grid. Exponents are formed from integers so
/// that `ε² = 1` is hit exactly at `k = 30`.
pub fn epsilon_sq_grid(k: usize) -> f64 {
    10f64.powf((k as f64 - 30.0) / 10.0)
}

/// Model-level bounds feeding the dissipativity constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DissipativityBounds {
    /// γ* = inf γ
    pub gamma_lower: f64,
    /// θ* = sup θ
    pub theta_upper: f64,
    /// ℓ*_{σ,g}
    pub lipschitz: f64,
    /// ℓ_σ alone; only used when the diffusion has a constant floor.
    pub diffusion_lipschitz: f64,
    /// Σ_i σ₀² over the diagonal entries.
    pub diffusion_floor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonScanPoint {
    pub epsilon_sq: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl EpsilonScanPoint {
    fn margin(&self) -> f64 {
        (self.alpha1 - self.alpha2).min(self.beta1 - self.beta2)
    }
}

/// Dissipativity constants of a model at the selected `ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct DissipativityReport {
    pub feasible: bool,
    pub epsilon: f64,
    pub epsilon_sq: f64,
    pub alpha: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub lambda_moment: Option<f64>,
    pub lambda_contraction: Option<f64>,
    pub delay: f64,
    pub diagnostics: String,
    pub scan: Vec<EpsilonScanPoint>,
}

/// Scan the `ε²` grid and pick the point maximizing
/// `min(α₁ − α₂, β₁ − β₂)`; ties keep the smallest `ε`.
///
/// With `ℓ*` the Lipschitz bound, the monotone pair is
/// `β₁ = 2γ* − ε² − ℓ*`, `β₂ = θ*²/ε² + ℓ*`. The growth pair uses the same
/// formulas when `σ(t,0,0) = 0`; a constant diffusion floor `σ₀` is split
/// off with `(σ₀ + u)² ≤ 2σ₀² + 2u²`, which moves `ℓ_σ` into both `α₁` and
/// `α₂` and sets `α = 2 Σ σ₀²`.
pub fn dissipativity_from_bounds(bounds: DissipativityBounds, delay: f64) -> DissipativityReport {
    let DissipativityBounds {
        gamma_lower,
        theta_upper,
        lipschitz,
        diffusion_lipschitz,
        diffusion_floor,
    } = bounds;
    let (alpha, growth_lipschitz) = if diffusion_floor > 0.0 {
        (2.0 * diffusion_floor, lipschitz + diffusion_lipschitz)
    } else {
        (0.0, lipschitz)
    };
    let scan: Vec<EpsilonScanPoint> = (0..EPSILON_GRID_POINTS)
        .map(|k| {
            let e2 = epsilon_sq_grid(k);
            let cross = theta_upper * theta_upper / e2;
            EpsilonScanPoint {
                epsilon_sq: e2,
                alpha1: 2.0 * gamma_lower - e2 - growth_lipschitz,
                alpha2: cross + growth_lipschitz,
                beta1: 2.0 * gamma_lower - e2 - lipschitz,
                beta2: cross + lipschitz,
            }
        })
        .collect();
    let mut best = scan[0];
    for p in &scan[1..] {
        if p.margin() > best.margin() {
            best = *p;
        }
    }
    let growth_ok = best.alpha1 > best.alpha2 && best.alpha2 >= 0.0;
    let monotone_ok = best.beta1 > best.beta2 && best.beta2 >= 0.0;
    let feasible = growth_ok && monotone_ok;
    let (lambda_moment, lambda_contraction) = if feasible {
        (
            solve_lambda_star(best.alpha1, best.alpha2, delay).ok().map(|l| l.value),
            solve_lambda_star(best.beta1, best.beta2, delay).ok().map(|l| l.value),
        )
    } else {
        (None, None)
    };
    let sufficient = gamma_lower - lipschitz > theta_upper;
    let mut diagnostics = format!(
        "gamma_lower={gamma_lower}; theta_upper={theta_upper}; lipschitz={lipschitz}; \
         sufficient condition gamma_lower - lipschitz > theta_upper {}; best epsilon_sq={}",
        if sufficient { "holds" } else { "fails" },
        best.epsilon_sq
    );
    if !growth_ok {
        diagnostics.push_str("; growth pair alpha1 > alpha2 fails on the grid");
    }
    if !monotone_ok {
        diagnostics.push_str("; monotone pair beta1 > beta2 fails on the grid");
    }
    DissipativityReport {
        feasible,
        epsilon: best.epsilon_sq.sqrt(),
        epsilon_sq: best.epsilon_sq,
        alpha,
        alpha1: best.alpha1,
        alpha2: best.alpha2,
        beta1: best.beta1,
        beta2: best.beta2,
        lambda_moment,
        lambda_contraction,
        delay,
        diagnostics,
        scan,
    }
}

/// Dissipativity constants for the linear family. An infeasible model is
/// reported, not rejected.
pub fn validate_dissipativity(params: &LinearModelParams) -> DissipativityReport {
    let floor_terms = params.dim.min(params.noise_dim) as f64;
    let bounds = DissipativityBounds {
        gamma_lower: params.decay.inf(),
        theta_upper: params.delay_gain.sup(),
        lipschitz: params.lipschitz_bound(),
        diffusion_lipschitz: params.diffusion.lipschitz(),
        diffusion_floor: floor_terms * params.diffusion.base * params.diffusion.base,
    };
    dissipativity_from_bounds(bounds, params.delay)
}
