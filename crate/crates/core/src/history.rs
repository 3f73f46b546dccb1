//! Grid-exact storage of the segment `X_t = X(t + θ), θ ∈ [−τ, 0]`.
//!
//! The step `h` must divide the delay `τ` so that `t − τ` is always a grid
//! point and delayed lookups never interpolate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid steps per delay, `m = τ / h`, or an error when `τ/h ∉ ℕ`.
pub fn steps_per_delay(delay: f64, step: f64) -> Result<usize> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::invalid("step", format!("h must be positive, got {step}")));
    }
    if !(delay > 0.0) || !delay.is_finite() {
        return Err(Error::invalid("delay", format!("τ must be positive, got {delay}")));
    }
    let ratio = delay / step;
    let rounded = ratio.round();
    if rounded < 1.0 || (ratio - rounded).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::invalid(
            "step",
            format!("τ/h must be an integer (τ = {delay}, h = {step}, τ/h = {ratio})"),
        ));
    }
    Ok(rounded as usize)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentPoint {
    pub theta: f64,
    pub value: Vec<f64>,
}

/// Initial path `ξ` on `[−τ, 0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSegment {
    Constant {
        value: Vec<f64>,
    },
    /// Linear interpolation from `start` at `θ = −τ` to `end` at `θ = 0`.
    LinearRamp {
        start: Vec<f64>,
        end: Vec<f64>,
    },
    /// Right-continuous step function through the listed points; the first
    /// point must sit at `θ = −τ`.
    Table {
        points: Vec<SegmentPoint>,
    },
}

impl InitialSegment {
    pub fn constant(value: Vec<f64>) -> Self {
        InitialSegment::Constant { value }
    }

    pub fn dim(&self) -> usize {
        match self {
            InitialSegment::Constant { value } => value.len(),
            InitialSegment::LinearRamp { start, .. } => start.len(),
            InitialSegment::Table { points } => points.first().map_or(0, |p| p.value.len()),
        }
    }

    pub fn validate(&self, delay: f64) -> Result<()> {
        let dim = self.dim();
        if dim == 0 {
            return Err(Error::invalid(
                "initial",
                "initial segment needs at least one coordinate",
            ));
        }
        let ok = |v: &[f64]| v.len() == dim && v.iter().all(|x| x.is_finite() && *x >= 0.0);
        match self {
            InitialSegment::Constant { value } => {
                if !ok(value) {
                    return Err(Error::invalid("initial.value", "values must be finite and nonnegative"));
                }
            }
            InitialSegment::LinearRamp { start, end } => {
                if !ok(start) || !ok(end) {
                    return Err(Error::invalid(
                        "initial",
                        "ramp endpoints must share a dimension and be finite and nonnegative",
                    ));
                }
            }
            InitialSegment::Table { points } => {
                if points.iter().any(|p| !ok(&p.value) || !p.theta.is_finite()) {
                    return Err(Error::invalid(
                        "initial.points",
                        "table values must share a dimension and be finite and nonnegative",
                    ));
                }
                if points.windows(2).any(|w| !(w[0].theta < w[1].theta)) {
                    return Err(Error::invalid("initial.points", "θ values must be strictly increasing"));
                }
                let first = points[0].theta;
                if (first + delay).abs() > 1e-9 * delay.max(1.0) {
                    return Err(Error::invalid(
                        "initial.points",
                        format!("first θ must be −τ = {}, got {first}", -delay),
                    ));
                }
                if points.last().is_some_and(|p| p.theta > 1e-12) {
                    return Err(Error::invalid("initial.points", "θ values must lie in [−τ, 0]"));
                }
            }
        }
        Ok(())
    }

    /// `ξ(θ)` for `θ ∈ [−τ, 0]`.
    pub fn value_at(&self, theta: f64, delay: f64) -> Vec<f64> {
        match self {
            InitialSegment::Constant { value } => value.clone(),
            InitialSegment::LinearRamp { start, end } => {
                let w = ((theta + delay) / delay).clamp(0.0, 1.0);
                start.iter().zip(end).map(|(a, b)| a + (b - a) * w).collect()
            }
            InitialSegment::Table { points } => {
                // Tolerate rounding of grid θ values just below a table point.
                let tol = 1e-9 * delay.max(1.0);
                let k = points.partition_point(|p| p.theta <= theta + tol).max(1);
                points[k - 1].value.clone()
            }
        }
    }

    /// Samples on the grid `θ_k = (k − m)h`, `k = 0..=m`, flattened
    /// row-major into `(m + 1) × d` values.
    pub fn sample(&self, delay: f64, step: f64) -> Result<Vec<f64>> {
        self.validate(delay)?;
        let lag = steps_per_delay(delay, step)?;
        let mut out = Vec::with_capacity((lag + 1) * self.dim());
        for k in 0..=lag {
            let theta = if k == lag { 0.0 } else { (k as f64 - lag as f64) * step };
            out.extend(self.value_at(theta, delay));
        }
        Ok(out)
    }

    /// `∫_{−τ}^0 e^{λv} |ξ(v)|² dv`.
    pub fn weighted_energy(&self, lambda: f64, delay: f64) -> f64 {
        let weight = |a: f64, b: f64| {
            if lambda == 0.0 {
                b - a
            } else {
                ((lambda * b).exp() - (lambda * a).exp()) / lambda
            }
        };
        let norm_sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        match self {
            InitialSegment::Constant { value } => norm_sq(value) * weight(-delay, 0.0),
            InitialSegment::Table { points } => {
                let mut total = 0.0;
                for (k, p) in points.iter().enumerate() {
                    let a = p.theta.max(-delay);
                    let b = points.get(k + 1).map_or(0.0, |q| q.theta).min(0.0);
                    if b > a {
                        total += norm_sq(&p.value) * weight(a, b);
                    }
                }
                total
            }
            InitialSegment::LinearRamp { .. } => {
                // Smooth integrand: composite Simpson is exact to rounding here.
                let panels = 2048;
                let dv = delay / panels as f64;
                let f = |v: f64| (lambda * v).exp() * norm_sq(&self.value_at(v, delay));
                let mut acc = f(-delay) + f(0.0);
                for k in 1..panels {
                    let v = -delay + k as f64 * dv;
                    acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(v);
                }
                acc * dv / 3.0
            }
        }
    }
}

/// Ring buffer holding the last `m + 1` grid states, i.e. the segment
/// `X_t` on `[t − τ, t]`, starting from the sampled initial path.
#[derive(Debug, Clone)]
pub struct DelayBuffer {
    dim: usize,
    lag: usize,
    step: f64,
    ring: Vec<f64>,
    head: usize,
    newest: i64,
}

impl DelayBuffer {
    pub fn new(segment: &InitialSegment, delay: f64, step: f64) -> Result<Self> {
        let samples = segment.sample(delay, step)?;
        let lag = steps_per_delay(delay, step)?;
        DelayBuffer::from_samples(samples, segment.dim(), lag, step)
    }

    /// Build from `(lag + 1) × dim` grid samples of `ξ`, oldest first.
    pub fn from_samples(samples: Vec<f64>, dim: usize, lag: usize, step: f64) -> Result<Self> {
        if samples.len() != (lag + 1) * dim {
            return Err(Error::ShapeMismatch(format!(
                "expected {} samples, got {}",
                (lag + 1) * dim,
                samples.len()
            )));
        }
        if samples.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::invalid("initial", "initial samples must be nonnegative"));
        }
        Ok(DelayBuffer {
            dim,
            lag,
            step,
            ring: samples,
            head: lag,
            newest: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lag(&self) -> usize {
        self.lag
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Grid index of the newest stored state.
    pub fn newest_index(&self) -> i64 {
        self.newest
    }

    #[inline]
    pub fn current(&self) -> &[f64] {
        let s = self.head * self.dim;
        &self.ring[s..s + self.dim]
    }

    /// State at grid index `n`, valid for `n ∈ [newest − m, newest]`.
    #[inline]
    pub fn state_at(&self, n: i64) -> Result<&[f64]> {
        let first = self.newest - self.lag as i64;
        if n < first || n > self.newest {
            return Err(Error::OutOfWindow {
                index: n,
                first,
                last: self.newest,
            });
        }
        let len = self.lag + 1;
        let back = (self.newest - n) as usize;
        let slot = (self.head + len - back) % len;
        let s = slot * self.dim;
        Ok(&self.ring[s..s + self.dim])
    }

    /// `X(t_n − τ)`, valid for `n ∈ [newest, newest + m]`.
    #[inline]
    pub fn delayed_state(&self, n: i64) -> Result<&[f64]> {
        self.state_at(n - self.lag as i64)
    }

    /// `X(t − τ)` for a grid time `t`.
    pub fn delayed_state_at(&self, t: f64) -> Result<&[f64]> {
        let r = t / self.step;
        let n = r.round();
        if (r - n).abs() > 1e-9 * r.abs().max(1.0) {
            return Err(Error::invalid(
                "t",
                format!("{t} is not a grid time for h = {}", self.step),
            ));
        }
        self.delayed_state(n as i64)
    }

    /// Append the state at grid index `newest + 1`, evicting the oldest.
    #[inline]
    pub fn push(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert!(x.iter().all(|v| *v >= 0.0), "buffer fed a negative state");
        self.head = (self.head + 1) % (self.lag + 1);
        let s = self.head * self.dim;
        self.ring[s..s + self.dim].copy_from_slice(x);
        self.newest += 1;
    }

    /// `‖X_t‖ = max over the stored grid points of |X(t + θ)|`.
    pub fn segment_sup_norm(&self) -> f64 {
        self.ring
            .chunks_exact(self.dim)
            .map(|x| x.iter().map(|v| v * v).sum::<f64>())
            .fold(0.0, f64::max)
            .sqrt()
    }
}
