//! Boundary local time from occupation times, and the loss-rate identity.
//!
//! The estimator is the quadratic-variation form
//!
//! ```text
//! L̂^i(t) = (1/ε) Σ_{t_n < t} 1{X^i(t_n) < ε} Σ_j σ_ij²(t_n, X(t_n), X(t_n − τ)) h
//! ```
//!
//! which, for small `ε` and `h`, should match `2 K^{i,c}` whenever the drift
//! correction `b̂_i = b_i − ∫g_i dν` vanishes on the boundary.

use crate::analysis::fold_paths;
use crate::analysis::stats::MeanAccumulator;
use crate::error::{Error, Result};
use crate::history::InitialSegment;
use crate::integrator::{simulate_path, PathRecord, SimConfig};
use crate::model::Coefficients;
use crate::randomness::MarkMeasure;

/// Default occupation band `ε = 10√h`.
pub fn default_band(step: f64) -> f64 {
    10.0 * step.sqrt()
}

/// Default zero band `δ = √h`.
pub fn default_zero_band(step: f64) -> f64 {
    step.sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalTimeEstimate {
    pub coordinate: usize,
    pub band: f64,
    /// `L̂^i(t_n)`, `n = 0..=N`
    pub local_time: Vec<f64>,
    /// `K^{i,c}(t_n)`
    pub k_cont: Vec<f64>,
    /// `∫ 1{X^i < δ} b̂_i ds` with `δ = √h`.
    pub drift_correction: Vec<f64>,
}

impl LocalTimeEstimate {
    /// `½L̂^i(T)`
    pub fn half_final(&self) -> f64 {
        0.5 * self.local_time.last().copied().unwrap_or(0.0)
    }

    pub fn k_cont_final(&self) -> f64 {
        self.k_cont.last().copied().unwrap_or(0.0)
    }
}

/// Left-point walk over the grid steps of a path, yielding
/// `(n, t_n, X(t_n), X(t_n − τ))` for `n < N`.
fn for_each_step<F: FnMut(usize, f64, &[f64], &[f64])>(path: &PathRecord, mut f: F) {
    for n in 0..path.steps() {
        f(n, path.time(n), path.state(n as i64), path.delayed_state(n));
    }
}

/// Occupation-time estimate of the local time of `X^i` at zero.
pub fn estimate_local_time<M: Coefficients + ?Sized>(
    path: &PathRecord,
    model: &M,
    coordinate: usize,
    band: f64,
) -> Result<LocalTimeEstimate> {
    check_coordinate(path, coordinate)?;
    if !(band > 0.0) {
        return Err(Error::invalid(
            "band",
            format!("occupation band must be positive, got {band}"),
        ));
    }
    let noise = model.noise_dim();
    let h = path.step;
    let mut sigma = vec![0.0; path.dim * noise];
    let mut local_time = Vec::with_capacity(path.steps() + 1);
    let mut acc = 0.0;
    local_time.push(0.0);
    for_each_step(path, |_, t, x, y| {
        if x[coordinate] < band {
            model.diffusion(t, x, y, &mut sigma);
            let row = &sigma[coordinate * noise..(coordinate + 1) * noise];
            acc += row.iter().map(|s| s * s).sum::<f64>() * h / band;
        }
        local_time.push(acc);
    });
    let k_cont = (0..=path.steps())
        .map(|n| path.row(&path.k_cont, n)[coordinate])
        .collect();
    let drift_correction = drift_correction_integral(path, model, coordinate, default_zero_band(h))?;
    Ok(LocalTimeEstimate {
        coordinate,
        band,
        local_time,
        k_cont,
        drift_correction,
    })
}

/// `∫_0^t 1{X^i(s) < δ} b̂_i(s, X(s), X(s−τ)) ds` on the grid.
pub fn drift_correction_integral<M: Coefficients + ?Sized>(
    path: &PathRecord,
    model: &M,
    coordinate: usize,
    zero_band: f64,
) -> Result<Vec<f64>> {
    check_coordinate(path, coordinate)?;
    let d = path.dim;
    let h = path.step;
    let (mut b, mut c) = (vec![0.0; d], vec![0.0; d]);
    let mut out = Vec::with_capacity(path.steps() + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for_each_step(path, |_, t, x, y| {
        if x[coordinate] < zero_band {
            model.drift(t, x, y, &mut b);
            model.compensator(t, x, y, &mut c);
            acc += (b[coordinate] - c[coordinate]) * h;
        }
        out.push(acc);
    });
    Ok(out)
}

fn check_coordinate(path: &PathRecord, coordinate: usize) -> Result<()> {
    if coordinate >= path.dim {
        return Err(Error::invalid(
            "coordinate",
            format!("coordinate {coordinate} out of range for dimension {}", path.dim),
        ));
    }
    Ok(())
}

/// Path averages of a local-time run.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalTimeSummary {
    pub step: f64,
    pub band: f64,
    pub paths: usize,
    pub times: Vec<f64>,
    /// Mean `½L̂^i(t)` at `times`.
    pub half_local_time: Vec<f64>,
    pub k_cont: Vec<f64>,
    pub drift_correction: Vec<f64>,
    pub half_local_time_stderr: f64,
    pub k_cont_stderr: f64,
}

impl LocalTimeSummary {
    /// `|½L̂(T) − K^c(T)| / max(K^c(T), 10⁻⁶)` on path averages.
    pub fn relative_error(&self) -> f64 {
        let l = *self.half_local_time.last().unwrap();
        let k = *self.k_cont.last().unwrap();
        (l - k).abs() / k.max(1e-6)
    }
}

/// Average `½L̂^i`, `K^{i,c}` and the drift correction over `config.paths`
/// paths. `band` defaults to `10√h`; rows are written every `output_every`
/// grid steps.
pub fn local_time_experiment<M: Coefficients + ?Sized>(
    config: &SimConfig,
    model: &M,
    marks: &MarkMeasure,
    xi: &InitialSegment,
    coordinate: usize,
    band: Option<f64>,
    output_every: usize,
) -> Result<LocalTimeSummary> {
    config.validate()?;
    let band = band.unwrap_or_else(|| default_band(config.step));
    let idx = crate::analysis::output_indices(config.steps(), output_every);
    let rows = idx.len();
    type Acc = (Vec<[MeanAccumulator; 3]>, MeanAccumulator, MeanAccumulator);
    let (acc, l_final, k_final): Acc = fold_paths(
        config.paths,
        || {
            (
                vec![[MeanAccumulator::default(); 3]; rows],
                MeanAccumulator::default(),
                MeanAccumulator::default(),
            )
        },
        |acc, p| {
            let path = simulate_path(config, model, marks, xi, config.stream(p))?;
            let est = estimate_local_time(&path, model, coordinate, band)?;
            for (slot, &n) in acc.0.iter_mut().zip(&idx) {
                slot[0].push(0.5 * est.local_time[n]);
                slot[1].push(est.k_cont[n]);
                slot[2].push(est.drift_correction[n]);
            }
            acc.1.push(est.half_final());
            acc.2.push(est.k_cont_final());
            Ok(())
        },
        |a, b| {
            for (x, y) in a.0.iter_mut().zip(&b.0) {
                for k in 0..3 {
                    x[k].merge(&y[k]);
                }
            }
            a.1.merge(&b.1);
            a.2.merge(&b.2);
        },
    )?;
    Ok(LocalTimeSummary {
        step: config.step,
        band,
        paths: config.paths,
        times: idx.iter().map(|&n| n as f64 * config.step).collect(),
        half_local_time: acc.iter().map(|s| s[0].mean()).collect(),
        k_cont: acc.iter().map(|s| s[1].mean()).collect(),
        drift_correction: acc.iter().map(|s| s[2].mean()).collect(),
        half_local_time_stderr: l_final.stderr(),
        k_cont_stderr: k_final.stderr(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossRateResult {
    pub coordinate: usize,
    pub window_start: f64,
    pub window_end: f64,
    pub paths: usize,
    /// `E[L̂^i(T) − L̂^i(t₀)] / (T − t₀)`
    pub estimate: f64,
    pub estimate_stderr: f64,
    /// `−2 E[b_i(X(t), X(t−τ))]` over the window.
    pub target: f64,
    pub target_stderr: f64,
    /// `2 E[K^{i,c}(T) − K^{i,c}(t₀)] / (T − t₀)`, for comparison.
    pub regulator_rate: f64,
}

impl LossRateResult {
    pub fn relative_gap(&self) -> f64 {
        (self.estimate - self.target).abs() / self.target.abs().max(1e-12)
    }
}

/// Loss rate after a burn-in, against `−2E[b_i]` under the empirical
/// stationary law. Requires nonnegative jumps and time-homogeneous drift.
#[allow(clippy::too_many_arguments)]
pub fn loss_rate_experiment<M: Coefficients + ?Sized>(
    config: &SimConfig,
    model: &M,
    marks: &MarkMeasure,
    xi: &InitialSegment,
    coordinate: usize,
    burn_in: f64,
    band: Option<f64>,
) -> Result<LossRateResult> {
    if !model.jumps_nonnegative(marks) {
        return Err(Error::Precondition(
            "loss rate needs a nonnegative jump coefficient".into(),
        ));
    }
    if !model.time_homogeneous() {
        return Err(Error::Precondition("loss rate needs a time-homogeneous drift".into()));
    }
    config.validate()?;
    let steps = config.steps();
    let start = (burn_in / config.step).round() as usize;
    if burn_in < 0.0 || start >= steps {
        return Err(Error::InsufficientHorizon(format!(
            "burn-in {burn_in} leaves no window before T = {}",
            steps as f64 * config.step
        )));
    }
    let band = band.unwrap_or_else(|| default_band(config.step));
    let span = (steps - start) as f64 * config.step;
    let d = model.dim();
    type Acc = [MeanAccumulator; 3];
    let acc: Acc = fold_paths(
        config.paths,
        || [MeanAccumulator::default(); 3],
        |acc, p| {
            let path = simulate_path(config, model, marks, xi, config.stream(p))?;
            let est = estimate_local_time(&path, model, coordinate, band)?;
            acc[0].push((est.local_time[steps] - est.local_time[start]) / span);
            acc[1].push(2.0 * (est.k_cont[steps] - est.k_cont[start]) / span);
            let mut b = vec![0.0; d];
            let mut mean_b = 0.0;
            for n in start..steps {
                model.drift(path.time(n), path.state(n as i64), path.delayed_state(n), &mut b);
                mean_b += b[coordinate];
            }
            acc[2].push(-2.0 * mean_b / (steps - start) as f64);
            Ok(())
        },
        |a, b| {
            for k in 0..3 {
                a[k].merge(&b[k]);
            }
        },
    )?;
    Ok(LossRateResult {
        coordinate,
        window_start: start as f64 * config.step,
        window_end: steps as f64 * config.step,
        paths: config.paths,
        estimate: acc[0].mean(),
        estimate_stderr: acc[0].stderr(),
        target: acc[2].mean(),
        target_stderr: acc[2].stderr(),
        regulator_rate: acc[1].mean(),
    })
}
