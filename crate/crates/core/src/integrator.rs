//! Jump-adapted projected Euler scheme.
//!
//! Each grid step `[t_n, t_{n+1}]` is cut at the Poisson arrival times that
//! fall inside it. Between arrivals the state takes an Euler step with the
//! compensated drift `b − ∫g dν` and the diffusion, and is projected back
//! onto the orthant; the projection's negative part is credited to the
//! continuous regulator `K^c`. At an arrival `s` the jump
//! `g(s, X(s−), X_{n−m}, ρ)` is applied uncompensated and reflected, and
//! its overshoot is credited to the jump part of `K`. An arrival on the
//! grid point `t_{n+1}` is applied after that step's diffusion update.
//!
//! Delayed arguments are read at the grid point `t_n − τ` for every
//! sub-step of step `n`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::history::{steps_per_delay, DelayBuffer, InitialSegment};
use crate::model::Coefficients;
use crate::randomness::{ArrivalClock, MarkMeasure, RngStream};
use crate::reflection::{jump_reflect, project_and_regulate, JumpEvent, RegulatorState};

/// Numerical settings of a simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// τ
    pub delay: f64,
    /// h, with τ/h ∈ ℕ
    pub step: f64,
    /// T; rounded up to the next grid point
    pub horizon: f64,
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_paths() -> usize {
    1
}

impl SimConfig {
    pub fn new(delay: f64, step: f64, horizon: f64) -> Self {
        SimConfig {
            delay,
            step,
            horizon,
            paths: 1,
            seed: 0,
        }
    }

    pub fn with_paths(mut self, paths: usize) -> Self {
        self.paths = paths;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        steps_per_delay(self.delay, self.step)?;
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::invalid(
                "horizon",
                format!("T must be positive, got {}", self.horizon),
            ));
        }
        if self.paths == 0 {
            return Err(Error::invalid("paths", "path count must be at least 1"));
        }
        Ok(())
    }

    /// `m = τ/h`
    pub fn lag(&self) -> Result<usize> {
        steps_per_delay(self.delay, self.step)
    }

    /// Number of grid steps `N = ⌈T/h⌉`.
    pub fn steps(&self) -> usize {
        ((self.horizon / self.step) - 1e-9).ceil().max(1.0) as usize
    }

    pub fn stream(&self, path: u64) -> RngStream {
        RngStream::new(self.seed, path)
    }
}

/// A discretized trajectory. Per-grid arrays are row-major with `steps + 1`
/// rows of `dim` values; row `n` belongs to `t_n = n h`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub dim: usize,
    pub step: f64,
    pub lag: usize,
    pub stream_id: u64,
    /// `ξ` on the grid `θ = −τ, …, 0`, `(lag + 1) × dim`.
    pub initial: Vec<f64>,
    pub x: Vec<f64>,
    /// `K = K^c + K^j`
    pub k: Vec<f64>,
    pub k_cont: Vec<f64>,
    pub k_jump: Vec<f64>,
    /// Cumulative uncompensated jump integral.
    pub y: Vec<f64>,
    /// Free process: initial value plus compensated drift, diffusion and
    /// jump increments, before reflection.
    pub gamma: Vec<f64>,
    pub jumps: Vec<JumpEvent>,
}

impl PathRecord {
    fn with_capacity(dim: usize, step: f64, lag: usize, stream_id: u64, initial: Vec<f64>, steps: usize) -> Self {
        let cap = (steps + 1) * dim;
        PathRecord {
            dim,
            step,
            lag,
            stream_id,
            initial,
            x: Vec::with_capacity(cap),
            k: Vec::with_capacity(cap),
            k_cont: Vec::with_capacity(cap),
            k_jump: Vec::with_capacity(cap),
            y: Vec::with_capacity(cap),
            gamma: Vec::with_capacity(cap),
            jumps: Vec::new(),
        }
    }

    /// Number of grid steps `N`.
    pub fn steps(&self) -> usize {
        self.x.len() / self.dim - 1
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.step
    }

    pub fn horizon(&self) -> f64 {
        self.time(self.steps())
    }

    pub fn row<'a>(&self, data: &'a [f64], n: usize) -> &'a [f64] {
        &data[n * self.dim..(n + 1) * self.dim]
    }

    /// `X(t_n)` for `n ∈ [−m, N]`; negative indices read the initial path.
    pub fn state(&self, n: i64) -> &[f64] {
        if n < 0 {
            let k = (n + self.lag as i64) as usize;
            &self.initial[k * self.dim..(k + 1) * self.dim]
        } else {
            self.row(&self.x, n as usize)
        }
    }

    /// `X(t_n − τ)`
    pub fn delayed_state(&self, n: usize) -> &[f64] {
        self.state(n as i64 - self.lag as i64)
    }

    /// `‖X_{t_n}‖²`, the squared sup norm of the segment ending at `t_n`.
    pub fn segment_sup_norm_sq(&self, n: usize) -> f64 {
        let end = n as i64;
        (end - self.lag as i64..=end)
            .map(|j| self.state(j).iter().map(|v| v * v).sum::<f64>())
            .fold(0.0, f64::max)
    }

    fn push_row(&mut self, x: &[f64], reg: &RegulatorState, y: &[f64], gamma: &[f64]) {
        self.x.extend_from_slice(x);
        self.k.extend(reg.continuous.iter().zip(&reg.jump).map(|(c, j)| c + j));
        self.k_cont.extend_from_slice(&reg.continuous);
        self.k_jump.extend_from_slice(&reg.jump);
        self.y.extend_from_slice(y);
        self.gamma.extend_from_slice(gamma);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubstepKind {
    Diffusion,
    Jump,
}

/// State of one sub-step as seen by a [`StepObserver`].
#[derive(Debug)]
pub struct SubstepView<'a> {
    pub kind: SubstepKind,
    /// End time of the sub-step (the arrival time for jumps).
    pub time: f64,
    /// Grid step containing the sub-step.
    pub step: usize,
    pub x_left: &'a [f64],
    pub x_pre: &'a [f64],
    pub x_post: &'a [f64],
    pub dk: &'a [f64],
    pub gamma: &'a [f64],
    pub k_cont: &'a [f64],
    pub k_jump: &'a [f64],
}

/// Hook called after every sub-step, for diagnostics and invariant checks.
pub trait StepObserver {
    fn on_substep(&mut self, view: &SubstepView<'_>);
}

impl StepObserver for () {
    #[inline]
    fn on_substep(&mut self, _view: &SubstepView<'_>) {}
}

struct PathState {
    x: Vec<f64>,
    x_left: Vec<f64>,
    x_pre: Vec<f64>,
    dk: Vec<f64>,
    delayed: Vec<f64>,
    drift: Vec<f64>,
    comp: Vec<f64>,
    sigma: Vec<f64>,
    g: Vec<f64>,
    gamma: Vec<f64>,
    y: Vec<f64>,
    reg: RegulatorState,
    buffer: DelayBuffer,
    record: PathRecord,
}

impl PathState {
    fn new(dim: usize, noise: usize, config: &SimConfig, xi: &InitialSegment, stream_id: u64) -> Result<Self> {
        let lag = config.lag()?;
        let samples = xi.sample(config.delay, config.step)?;
        let buffer = DelayBuffer::from_samples(samples.clone(), dim, lag, config.step)?;
        let x = buffer.current().to_vec();
        let mut record = PathRecord::with_capacity(dim, config.step, lag, stream_id, samples, config.steps());
        let reg = RegulatorState::new(dim);
        let y = vec![0.0; dim];
        record.push_row(&x, &reg, &y, &x);
        Ok(PathState {
            gamma: x.clone(),
            x_left: x.clone(),
            x,
            x_pre: vec![0.0; dim],
            dk: vec![0.0; dim],
            delayed: vec![0.0; dim],
            drift: vec![0.0; dim],
            comp: vec![0.0; dim],
            sigma: vec![0.0; dim * noise],
            g: vec![0.0; dim],
            y,
            reg,
            buffer,
            record,
        })
    }

    fn load_delayed(&mut self, n: usize) {
        let d = self
            .buffer
            .delayed_state(n as i64)
            .expect("delay window always covers the current step");
        self.delayed.copy_from_slice(d);
    }

    #[inline]
    fn diffuse<M, O>(&mut self, model: &M, s: f64, dt: f64, dw: &[f64], step: usize, obs: &mut O)
    where
        M: Coefficients + ?Sized,
        O: StepObserver,
    {
        let noise = dw.len();
        model.drift(s, &self.x, &self.delayed, &mut self.drift);
        model.compensator(s, &self.x, &self.delayed, &mut self.comp);
        if noise > 0 {
            model.diffusion(s, &self.x, &self.delayed, &mut self.sigma);
        }
        for i in 0..self.x.len() {
            let mut inc = (self.drift[i] - self.comp[i]) * dt;
            let row = &self.sigma[i * noise..(i + 1) * noise];
            for (sij, w) in row.iter().zip(dw) {
                inc += sij * w;
            }
            self.x_pre[i] = self.x[i] + inc;
            self.gamma[i] += inc;
        }
        self.x_left.copy_from_slice(&self.x);
        project_and_regulate(&self.x_pre, &mut self.x, &mut self.dk);
        self.reg.credit_continuous(&self.dk);
        obs.on_substep(&SubstepView {
            kind: SubstepKind::Diffusion,
            time: s + dt,
            step,
            x_left: &self.x_left,
            x_pre: &self.x_pre,
            x_post: &self.x,
            dk: &self.dk,
            gamma: &self.gamma,
            k_cont: &self.reg.continuous,
            k_jump: &self.reg.jump,
        });
    }

    #[inline]
    fn jump<M, O>(&mut self, model: &M, s: f64, mark: &[f64], step: usize, obs: &mut O)
    where
        M: Coefficients + ?Sized,
        O: StepObserver,
    {
        model.jump(s, &self.x, &self.delayed, mark, &mut self.g);
        self.x_left.copy_from_slice(&self.x);
        for i in 0..self.x.len() {
            self.x_pre[i] = self.x[i] + self.g[i];
            self.y[i] += self.g[i];
            self.gamma[i] += self.g[i];
        }
        jump_reflect(&self.x_left, &self.g, &mut self.x, &mut self.dk);
        self.reg.credit_jump(&self.dk);
        self.record.jumps.push(JumpEvent {
            time: s,
            step,
            mark: mark.to_vec(),
            x_left: self.x_left.clone(),
            jump: self.g.clone(),
            dk: self.dk.clone(),
        });
        obs.on_substep(&SubstepView {
            kind: SubstepKind::Jump,
            time: s,
            step,
            x_left: &self.x_left,
            x_pre: &self.x_pre,
            x_post: &self.x,
            dk: &self.dk,
            gamma: &self.gamma,
            k_cont: &self.reg.continuous,
            k_jump: &self.reg.jump,
        });
    }

    fn finish_step(&mut self, t: f64, stream_id: u64) -> Result<()> {
        if let Some(component) = self.x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                time: t,
                component,
                stream_id,
            });
        }
        self.buffer.push(&self.x);
        self.record.push_row(&self.x, &self.reg, &self.y, &self.gamma);
        Ok(())
    }
}

fn check_shapes<M: Coefficients + ?Sized>(model: &M, marks: &MarkMeasure, segments: &[&InitialSegment]) -> Result<()> {
    let d = model.dim();
    if d == 0 {
        return Err(Error::invalid("dim", "model dimension must be positive"));
    }
    for seg in segments {
        if seg.dim() != d {
            return Err(Error::ShapeMismatch(format!(
                "initial segment has dimension {}, model has {d}",
                seg.dim()
            )));
        }
    }
    if marks.total_rate() > 0.0 && marks.dim() != d {
        return Err(Error::ShapeMismatch(format!(
            "marks have dimension {}, model has {d}",
            marks.dim()
        )));
    }
    Ok(())
}

/// Drive several paths with one set of Brownian increments and Poisson atoms.
fn drive<M, O>(
    config: &SimConfig,
    model: &M,
    marks: &MarkMeasure,
    states: &mut [PathState],
    stream: &mut RngStream,
    observers: &mut [O],
) -> Result<()>
where
    M: Coefficients + ?Sized,
    O: StepObserver,
{
    let noise = model.noise_dim();
    let h = config.step;
    let steps = config.steps();
    let stream_id = stream.stream_id();
    let mut dw = vec![0.0; noise];
    let mut mark = vec![0.0; model.dim()];
    let mut clock = ArrivalClock::start(marks.total_rate(), 0.0, stream.jump_rng());
    for n in 0..steps {
        let t_next = (n + 1) as f64 * h;
        for st in states.iter_mut() {
            st.load_delayed(n);
        }
        let mut s = n as f64 * h;
        loop {
            let arrival = clock.next_time();
            let end = if arrival <= t_next { arrival } else { t_next };
            let dt = end - s;
            if dt > 0.0 {
                let scale = dt.sqrt();
                for w in dw.iter_mut() {
                    *w = scale * stream.standard_normal();
                }
                for (st, obs) in states.iter_mut().zip(observers.iter_mut()) {
                    st.diffuse(model, s, dt, &dw, n, obs);
                }
            }
            if arrival > t_next {
                break;
            }
            marks.sample_mark(stream.jump_rng(), &mut mark);
            for (st, obs) in states.iter_mut().zip(observers.iter_mut()) {
                st.jump(model, arrival, &mark, n, obs);
            }
            clock.advance(stream.jump_rng());
            s = arrival;
        }
        for st in states.iter_mut() {
            st.finish_step(t_next, stream_id)?;
        }
    }
    Ok(())
}

/// Simulate one path from the initial segment `xi`.
pub fn simulate_path<M: Coefficients + ?Sized>(
    config: &SimConfig,
    model: &M,
    marks: &MarkMeasure,
    xi: &InitialSegment,
    stream: RngStream,
) -> Result<PathRecord> {
    simulate_path_observed(config, model, marks, xi, stream, &mut ())
}

/// [`simulate_path`] with an observer called after every sub-step.
pub fn simulate_path_observed<M, O>(
    config: &SimConfig,
    model: &M,
    marks: &MarkMeasure,
    xi: &InitialSegment,
    mut stream: RngStream,
    observer: &mut O,
) -> Result<PathRecord>
where
    M: Coefficients + ?Sized,
    O: StepObserver,
{
    check_shapes(model, marks, &[xi])?;
    config.validate()?;
    let mut states = [PathState::new(
        model.dim(),
        model.noise_dim(),
        config,
        xi,
        stream.stream_id(),
    )?];
    drive(
        config,
        model,
        marks,
        &mut states,
        &mut stream,
        std::slice::from_mut(observer),
    )?;
    let [state] = states;
    Ok(state.record)
}

/// Synchronous coupling: two solutions from `xi` and `eta` driven by the
/// same Brownian increments and the same Poisson atoms.
pub fn simulate_coupled_pair<M: Coefficients + ?Sized>(
    config: &SimConfig,
    model: &M,
    marks: &MarkMeasure,
    xi: &InitialSegment,
    eta: &InitialSegment,
    mut stream: RngStream,
) -> Result<(PathRecord, PathRecord)> {
    check_shapes(model, marks, &[xi, eta])?;
    config.validate()?;
    let id = stream.stream_id();
    let mut states = [
        PathState::new(model.dim(), model.noise_dim(), config, xi, id)?,
        PathState::new(model.dim(), model.noise_dim(), config, eta, id)?,
    ];
    let mut observers = [(), ()];
    drive(config, model, marks, &mut states, &mut stream, &mut observers)?;
    let [a, b] = states;
    Ok((a.record, b.record))
}
