//! Second-moment experiment against the analytic bound
//!
//! ```text
//! E|X(t)|² ≤ e^{−λ*t} { α/λ* (e^{λ*t} − 1) + |ξ(0)|² + e^{λ*τ} ∫_{−τ}^0 e^{λ*v} |ξ(v)|² dv }
//!          ≤ α/λ* + |ξ(0)|² + e^{λ*τ} ∫_{−τ}^0 e^{λ*v} |ξ(v)|² dv
//! ```

use crate::analysis::stats::MeanAccumulator;
use crate::analysis::{fold_paths, output_indices};
use crate::error::{Error, Result};
use crate::history::InitialSegment;
use crate::integrator::{simulate_path, SimConfig};
use crate::model::{Coefficients, DissipativityReport};
use crate::randomness::MarkMeasure;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentRow {
    pub t: f64,
    /// Monte Carlo mean of `|X(t)|²`.
    pub estimate: f64,
    pub stderr: f64,
    /// Monte Carlo mean of `‖X_t‖² = sup_{θ} |X(t+θ)|²`.
    pub segment_estimate: f64,
    pub segment_stderr: f64,
    /// Time-dependent form of the bound.
    pub bound_at_t: f64,
    /// Uniform-in-time bound.
    pub bound: f64,
}

fn feasible_rate(report: &DissipativityReport) -> Result<f64> {
    match report.lambda_moment {
        Some(l) if report.feasible => Ok(l),
        _ => Err(Error::Precondition(format!(
            "moment bound needs a feasible dissipativity report ({})",
            report.diagnostics
        ))),
    }
}

fn bound_parts(report: &DissipativityReport, xi: &InitialSegment) -> Result<(f64, f64, f64)> {
    let lambda = feasible_rate(report)?;
    let tau = report.delay;
    let x0 = xi.value_at(0.0, tau);
    let start = x0.iter().map(|v| v * v).sum::<f64>() + (lambda * tau).exp() * xi.weighted_energy(lambda, tau);
    Ok((lambda, report.alpha, start))
}

/// Uniform bound `α/λ* + |ξ(0)|² + e^{λ*τ} ∫ e^{λ*v} |ξ(v)|² dv`.
pub fn moment_bound(report: &DissipativityReport, xi: &InitialSegment) -> Result<f64> {
    let (lambda, alpha, start) = bound_parts(report, xi)?;
    Ok(alpha / lambda + start)
}

/// The bound at time `t`.
pub fn moment_bound_at(report: &DissipativityReport, xi: &InitialSegment, t: f64) -> Result<f64> {
    let (lambda, alpha, start) = bound_parts(report, xi)?;
    let decay = (-lambda * t).exp();
    Ok(alpha / lambda * (1.0 - decay) + decay * start)
}

/// Estimate `E|X(t)|²` and `E‖X_t‖²` over `config.paths` paths, reported
/// every `output_every` grid steps next to the analytic bound.
pub fn moment_experiment<M: Coefficients + ?Sized>(
    config: &SimConfig,
    model: &M,
    marks: &MarkMeasure,
    xi: &InitialSegment,
    report: &DissipativityReport,
    output_every: usize,
) -> Result<Vec<MomentRow>> {
    config.validate()?;
    let bound = moment_bound(report, xi)?;
    let idx = output_indices(config.steps(), output_every);
    let rows = idx.len();
    let acc = fold_paths(
        config.paths,
        || vec![(MeanAccumulator::default(), MeanAccumulator::default()); rows],
        |acc, p| {
            let path = simulate_path(config, model, marks, xi, config.stream(p))?;
            for (slot, &n) in acc.iter_mut().zip(&idx) {
                slot.0.push(path.row(&path.x, n).iter().map(|v| v * v).sum());
                slot.1.push(path.segment_sup_norm_sq(n));
            }
            Ok(())
        },
        |a, b| {
            for (x, y) in a.iter_mut().zip(&b) {
                x.0.merge(&y.0);
                x.1.merge(&y.1);
            }
        },
    )?;
    idx.iter()
        .zip(acc)
        .map(|(&n, (pt, seg))| {
            let t = n as f64 * config.step;
            Ok(MomentRow {
                t,
                estimate: pt.mean(),
                stderr: pt.stderr(),
                segment_estimate: seg.mean(),
                segment_stderr: seg.stderr(),
                bound_at_t: moment_bound_at(report, xi, t)?,
                bound,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_linear_model, validate_dissipativity, CoefficientSet, LinearModelParams};

    #[test]
    fn frozen_system_has_exact_moment() {
        let params = LinearModelParams::deterministic(1, 3.0, 1.0, 1.0);
        let report = validate_dissipativity(&params);
        let cfg = SimConfig::new(1.0, 0.25, 2.0).with_paths(3);
        let xi = InitialSegment::constant(vec![1.5]);
        let rows = moment_experiment(&cfg, &CoefficientSet::new(1, 1), &MarkMeasure::none(1), &xi, &report, 2).unwrap();
        for r in &rows {
            assert_eq!(r.estimate, 2.25);
            assert_eq!(r.stderr, 0.0);
            assert!(r.estimate <= r.bound);
            assert!(r.bound_at_t <= r.bound + 1e-12);
        }
    }

    #[test]
    fn deterministic_decay_matches_euler_power() {
        let params = LinearModelParams::deterministic(1, 1.0, 0.0, 1.0);
        let model = build_linear_model(params.clone()).unwrap();
        let report = validate_dissipativity(&params);
        let cfg = SimConfig::new(1.0, 0.125, 3.0);
        let rows = moment_experiment(
            &cfg,
            &model,
            &MarkMeasure::none(1),
            &InitialSegment::constant(vec![1.0]),
            &report,
            1,
        )
        .unwrap();
        for (n, r) in rows.iter().enumerate() {
            assert!((r.estimate - 0.875f64.powi(2 * n as i32)).abs() < 1e-14);
        }
        assert!(rows.windows(2).all(|w| w[1].estimate < w[0].estimate));
        assert_eq!(rows[8].segment_estimate, 1.0);
    }

    #[test]
    fn infeasible_report_is_rejected() {
        let params = LinearModelParams::deterministic(1, 1.0, 2.0, 1.0);
        let report = validate_dissipativity(&params);
        assert!(!report.feasible);
        assert!(matches!(
            moment_bound(&report, &InitialSegment::constant(vec![1.0])),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn bound_value_for_constant_start() {
        let params = LinearModelParams::deterministic(1, 3.0, 1.0, 1.0);
        let report = validate_dissipativity(&params);
        let l = report.lambda_moment.unwrap();
        let b = moment_bound(&report, &InitialSegment::constant(vec![2.0])).unwrap();
        let expected = 4.0 + l.exp() * 4.0 * (1.0 - (-l).exp()) / l;
        assert!((b - expected).abs() < 1e-12);
    }
}
