//! Empirical laws of the segment process and a KS distance between them.
//!
//! A segment `X_t` is summarized by its values at `θ ∈ {0, −τ/4, −τ/2,
//! −3τ/4, −τ}`; each coordinate and lag keeps a sorted marginal sample.

use crate::analysis::fold_paths;
use crate::analysis::stats::{ks_critical_value, ks_statistic_sorted};
use crate::error::{Error, Result};
use crate::history::InitialSegment;
use crate::integrator::{simulate_path, PathRecord, SimConfig};
use crate::model::Coefficients;
use crate::randomness::MarkMeasure;

/// Points of the θ-grid, as fractions of `τ`.
pub const THETA_FRACTIONS: [f64; 5] = [0.0, -0.25, -0.5, -0.75, -1.0];

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    dim: usize,
    delay: f64,
    /// Grid lags matching [`THETA_FRACTIONS`].
    lags: Vec<usize>,
    times: Vec<f64>,
    /// `marginals[i * lags.len() + j]`: sorted values of `X^i(t + θ_j)`.
    marginals: Vec<Vec<f64>>,
}

impl EmpiricalMeasure {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn thetas(&self) -> Vec<f64> {
        THETA_FRACTIONS.iter().map(|f| f * self.delay).collect()
    }

    pub fn lags(&self) -> &[usize] {
        &self.lags
    }

    pub fn sampling_times(&self) -> &[f64] {
        &self.times
    }

    pub fn sample_count(&self) -> usize {
        self.times.len()
    }

    /// Sorted sample of `X^i(t + θ_j)`.
    pub fn marginal(&self, coordinate: usize, theta_index: usize) -> &[f64] {
        &self.marginals[coordinate * self.lags.len() + theta_index]
    }

    /// Pool the samples of another measure on the same grid.
    pub fn merge(&mut self, other: &EmpiricalMeasure) -> Result<()> {
        self.check_shape(other)?;
        self.times.extend_from_slice(&other.times);
        for (a, b) in self.marginals.iter_mut().zip(&other.marginals) {
            a.extend_from_slice(b);
            a.sort_by(f64::total_cmp);
        }
        Ok(())
    }

    fn check_shape(&self, other: &EmpiricalMeasure) -> Result<()> {
        if self.dim != other.dim || self.lags != other.lags {
            return Err(Error::ShapeMismatch(format!(
                "empirical measures differ: dim {} vs {}, lags {:?} vs {:?}",
                self.dim, other.dim, self.lags, other.lags
            )));
        }
        Ok(())
    }
}

/// Sample the segment at `burn_in, burn_in + stride, …` strictly before `T`.
pub fn empirical_qt(path: &PathRecord, burn_in: f64, stride: f64) -> Result<EmpiricalMeasure> {
    let h = path.step;
    let delay = path.lag as f64 * h;
    let horizon = path.horizon();
    if !(burn_in >= 0.0) || !(stride > 0.0) {
        return Err(Error::invalid(
            "stride",
            "burn-in must be nonnegative and stride positive",
        ));
    }
    if horizon - burn_in < 10.0 * delay - 1e-9 {
        return Err(Error::InsufficientHorizon(format!(
            "T − burn_in = {} is shorter than 10τ = {}",
            horizon - burn_in,
            10.0 * delay
        )));
    }
    let stride_steps = ((stride / h).round() as usize).max(1);
    let first = (burn_in / h).round() as usize;
    let last = path.steps();
    let lags: Vec<usize> = (0..THETA_FRACTIONS.len()).map(|j| (j * path.lag + 2) / 4).collect();
    let dim = path.dim;
    let mut marginals = vec![Vec::new(); dim * lags.len()];
    let mut times = Vec::new();
    let mut n = first;
    while n < last || (n == first && n <= last) {
        times.push(path.time(n));
        for (j, &lag) in lags.iter().enumerate() {
            let x = path.state(n as i64 - lag as i64);
            for i in 0..dim {
                marginals[i * lags.len() + j].push(x[i]);
            }
        }
        n += stride_steps;
    }
    for m in marginals.iter_mut() {
        m.sort_by(f64::total_cmp);
    }
    Ok(EmpiricalMeasure {
        dim,
        delay,
        lags,
        times,
        marginals,
    })
}

/// Largest two-sample KS statistic over coordinates and θ-grid points.
pub fn measure_distance(m1: &EmpiricalMeasure, m2: &EmpiricalMeasure) -> Result<f64> {
    m1.check_shape(m2)?;
    Ok(m1
        .marginals
        .iter()
        .zip(&m2.marginals)
        .map(|(a, b)| ks_statistic_sorted(a, b))
        .fold(0.0, f64::max))
}

/// Two-sample KS acceptance band at level `alpha` for the two measures'
/// sample sizes.
pub fn ks_band(m1: &EmpiricalMeasure, m2: &EmpiricalMeasure, alpha: f64) -> f64 {
    ks_critical_value(m1.sample_count(), m2.sample_count(), alpha)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvariantResult {
    pub from_xi: EmpiricalMeasure,
    pub from_eta: EmpiricalMeasure,
    /// `KS[i][j]` for coordinate `i`, θ-grid point `j`.
    pub ks: Vec<Vec<f64>>,
    pub distance: f64,
    pub band: f64,
}

impl InvariantResult {
    pub fn within_band(&self) -> bool {
        self.distance <= self.band
    }
}

fn pooled_measure<M: Coefficients + ?Sized>(
    config: &SimConfig,
    model: &M,
    marks: &MarkMeasure,
    start: &InitialSegment,
    stream_offset: u64,
    burn_in: f64,
    stride: f64,
) -> Result<EmpiricalMeasure> {
    let measure = fold_paths(
        config.paths,
        || None::<EmpiricalMeasure>,
        |acc, p| {
            let path = simulate_path(config, model, marks, start, config.stream(stream_offset + p))?;
            let m = empirical_qt(&path, burn_in, stride)?;
            match acc {
                Some(a) => a.merge(&m)?,
                None => *acc = Some(m),
            }
            Ok(())
        },
        |a, b| match (a.as_mut(), b) {
            (Some(x), Some(y)) => x.merge(&y).expect("empirical measures on one grid"),
            (None, b) => *a = b,
            _ => {}
        },
    )?;
    measure.ok_or_else(|| Error::invalid("paths", "no paths simulated"))
}

/// Run `config.paths` paths from each of `xi` and `eta` with independent
/// noise, pool their segment samples and compare the two laws.
#[allow(clippy::too_many_arguments)]
pub fn invariant_experiment<M: Coefficients + ?Sized>(
    config: &SimConfig,
    model: &M,
    marks: &MarkMeasure,
    xi: &InitialSegment,
    eta: &InitialSegment,
    burn_in: f64,
    stride: f64,
    alpha: f64,
) -> Result<InvariantResult> {
    config.validate()?;
    let paths = config.paths as u64;
    let from_xi = pooled_measure(config, model, marks, xi, 0, burn_in, stride)?;
    let from_eta = pooled_measure(config, model, marks, eta, paths, burn_in, stride)?;
    let ks = (0..from_xi.dim)
        .map(|i| {
            (0..from_xi.lags.len())
                .map(|j| ks_statistic_sorted(from_xi.marginal(i, j), from_eta.marginal(i, j)))
                .collect()
        })
        .collect();
    let distance = measure_distance(&from_xi, &from_eta)?;
    let band = ks_band(&from_xi, &from_eta, alpha);
    Ok(InvariantResult {
        from_xi,
        from_eta,
        ks,
        distance,
        band,
    })
}
