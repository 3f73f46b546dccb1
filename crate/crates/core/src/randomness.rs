//! Deterministic, stream-splittable randomness.
//!
//! Every path owns an [`RngStream`] keyed by `(seed, stream_id)`. A stream
//! holds two independent ChaCha8 substreams, one feeding Brownian increments
//! and one feeding the Poisson random measure, so the jump sequence of a path
//! does not shift when the number of Gaussian draws changes. ChaCha is a
//! counter-based generator: the key is derived from the seed and the
//! substream tag, the 64-bit nonce is the stream id, and the block counter
//! advances with every draw. Nothing is shared between streams, so results
//! do not depend on how paths are scheduled across threads.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};

use crate::error::{Error, Result};

const BROWNIAN_TAG: u64 = 0x6272_6f77_6e69_616e;
const JUMP_TAG: u64 = 0x6a75_6d70_6d61_726b;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn substream(seed: u64, tag: u64, stream_id: u64) -> ChaCha8Rng {
    let mut state = seed ^ tag;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream_id);
    rng
}

/// Per-path random stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    brownian: ChaCha8Rng,
    jumps: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        RngStream {
            seed,
            stream_id,
            brownian: substream(seed, BROWNIAN_TAG, stream_id),
            jumps: substream(seed, JUMP_TAG, stream_id),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Rewind both substreams to their first draw.
    pub fn reset(&mut self) {
        *self = RngStream::new(self.seed, self.stream_id);
    }

    /// Word positions of the Brownian and jump substreams.
    pub fn counters(&self) -> (u128, u128) {
        (self.brownian.get_word_pos(), self.jumps.get_word_pos())
    }

    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.brownian)
    }

    /// Fill `out` with independent `N(0, h)` draws.
    pub fn brownian_increments_into(&mut self, h: f64, out: &mut [f64]) -> Result<()> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::invalid("h", format!("time step must be positive, got {h}")));
        }
        let scale = h.sqrt();
        for w in out.iter_mut() {
            *w = scale * self.standard_normal();
        }
        Ok(())
    }

    pub(crate) fn jump_rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.jumps
    }
}

/// `n` independent Brownian increments over a step of length `h`.
pub fn brownian_increments(stream: &mut RngStream, h: f64, n: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; n];
    stream.brownian_increments_into(h, &mut out)?;
    Ok(out)
}

/// Normalized law of the marks, `ν / ν(E)`.
#[derive(Debug, Clone, PartialEq)]
pub enum MarkDistribution {
    /// Every jump carries the same mark.
    Constant(Vec<f64>),
    /// Independent uniform coordinates on `[lower_i, upper_i]`.
    UniformBox { lower: Vec<f64>, upper: Vec<f64> },
    /// Finitely many atoms with relative weights.
    Atoms { points: Vec<Vec<f64>>, weights: Vec<f64> },
}

impl MarkDistribution {
    pub fn dim(&self) -> usize {
        match self {
            MarkDistribution::Constant(c) => c.len(),
            MarkDistribution::UniformBox { lower, .. } => lower.len(),
            MarkDistribution::Atoms { points, .. } => points.first().map_or(0, Vec::len),
        }
    }
}

/// Per-coordinate moments of the marks integrated against `ν`:
/// `first[i] = ∫ρ_i ν(dρ)` and `second[i] = ∫ρ_i² ν(dρ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkMoments {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

impl MarkMoments {
    pub fn zero(dim: usize) -> Self {
        MarkMoments {
            first: vec![0.0; dim],
            second: vec![0.0; dim],
        }
    }
}

/// Finite-intensity jump measure `ν`: total rate plus a mark sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkMeasure {
    total_rate: f64,
    distribution: MarkDistribution,
    cumulative: Vec<f64>,
}

impl MarkMeasure {
    pub fn new(total_rate: f64, distribution: MarkDistribution) -> Result<Self> {
        if !(total_rate >= 0.0) || !total_rate.is_finite() {
            return Err(Error::invalid(
                "rate",
                format!("total jump intensity must be finite and nonnegative, got {total_rate}"),
            ));
        }
        let dim = distribution.dim();
        if dim == 0 {
            return Err(Error::invalid(
                "distribution",
                "marks must have at least one coordinate",
            ));
        }
        let all_finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        let mut cumulative = Vec::new();
        match &distribution {
            MarkDistribution::Constant(c) => {
                if !all_finite(c) {
                    return Err(Error::invalid("distribution.value", "mark must be finite"));
                }
                if c.iter().all(|&x| x == 0.0) {
                    return Err(Error::invalid("distribution.value", "mark must not be the zero vector"));
                }
            }
            MarkDistribution::UniformBox { lower, upper } => {
                if upper.len() != dim {
                    return Err(Error::invalid(
                        "distribution.upper",
                        "lower and upper must have equal length",
                    ));
                }
                if !all_finite(lower) || !all_finite(upper) {
                    return Err(Error::invalid("distribution", "box bounds must be finite"));
                }
                if lower.iter().zip(upper).any(|(l, u)| l > u) {
                    return Err(Error::invalid("distribution", "box requires lower <= upper"));
                }
                if lower.iter().chain(upper).all(|&x| x == 0.0) {
                    return Err(Error::invalid("distribution", "box must not reduce to the origin"));
                }
            }
            MarkDistribution::Atoms { points, weights } => {
                if points.is_empty() || points.len() != weights.len() {
                    return Err(Error::invalid("distribution.weights", "need one weight per atom"));
                }
                if points.iter().any(|p| p.len() != dim) {
                    return Err(Error::invalid("distribution.points", "atoms must share one dimension"));
                }
                if points.iter().any(|p| !all_finite(p) || p.iter().all(|&x| x == 0.0)) {
                    return Err(Error::invalid(
                        "distribution.points",
                        "atoms must be finite and nonzero",
                    ));
                }
                if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
                    return Err(Error::invalid("distribution.weights", "weights must be positive"));
                }
                let total: f64 = weights.iter().sum();
                let mut acc = 0.0;
                for w in weights {
                    acc += w / total;
                    cumulative.push(acc);
                }
                if let Some(last) = cumulative.last_mut() {
                    *last = 1.0;
                }
            }
        }
        Ok(MarkMeasure {
            total_rate,
            distribution,
            cumulative,
        })
    }

    /// The zero measure: no jumps ever occur.
    pub fn none(dim: usize) -> Self {
        MarkMeasure {
            total_rate: 0.0,
            distribution: MarkDistribution::Constant(vec![1.0; dim.max(1)]),
            cumulative: Vec::new(),
        }
    }

    pub fn total_rate(&self) -> f64 {
        self.total_rate
    }

    pub fn dim(&self) -> usize {
        self.distribution.dim()
    }

    pub fn distribution(&self) -> &MarkDistribution {
        &self.distribution
    }

    /// Draw one mark from `ν / ν(E)` into `out`. Never returns the origin.
    pub fn sample_mark<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match &self.distribution {
            MarkDistribution::Constant(c) => out.copy_from_slice(c),
            MarkDistribution::UniformBox { lower, upper } => loop {
                for ((o, l), u) in out.iter_mut().zip(lower).zip(upper) {
                    *o = l + (u - l) * rng.random::<f64>();
                }
                if out.iter().any(|&x| x != 0.0) {
                    break;
                }
            },
            MarkDistribution::Atoms { points, .. } => {
                let u: f64 = rng.random();
                let k = self.cumulative.partition_point(|&c| c <= u).min(points.len() - 1);
                out.copy_from_slice(&points[k]);
            }
        }
    }

    /// Exact per-coordinate moments of the marks against `ν`.
    pub fn moments(&self) -> MarkMoments {
        let dim = self.dim();
        let rate = self.total_rate;
        if rate == 0.0 {
            return MarkMoments::zero(dim);
        }
        let (first, second) = match &self.distribution {
            MarkDistribution::Constant(c) => (
                c.iter().map(|x| rate * x).collect(),
                c.iter().map(|x| rate * x * x).collect(),
            ),
            MarkDistribution::UniformBox { lower, upper } => (
                lower.iter().zip(upper).map(|(a, b)| rate * 0.5 * (a + b)).collect(),
                lower
                    .iter()
                    .zip(upper)
                    .map(|(a, b)| rate * (a * a + a * b + b * b) / 3.0)
                    .collect(),
            ),
            MarkDistribution::Atoms { points, weights } => {
                let total: f64 = weights.iter().sum();
                let mut first = vec![0.0; dim];
                let mut second = vec![0.0; dim];
                for (p, w) in points.iter().zip(weights) {
                    let mass = rate * w / total;
                    for i in 0..dim {
                        first[i] += mass * p[i];
                        second[i] += mass * p[i] * p[i];
                    }
                }
                (first, second)
            }
        };
        MarkMoments { first, second }
    }

    /// Lower and upper bound of each mark coordinate over the support.
    pub fn support_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.distribution {
            MarkDistribution::Constant(c) => (c.clone(), c.clone()),
            MarkDistribution::UniformBox { lower, upper } => (lower.clone(), upper.clone()),
            MarkDistribution::Atoms { points, .. } => {
                let dim = self.dim();
                let mut lo = vec![f64::INFINITY; dim];
                let mut hi = vec![f64::NEG_INFINITY; dim];
                for p in points {
                    for i in 0..dim {
                        lo[i] = lo[i].min(p[i]);
                        hi[i] = hi[i].max(p[i]);
                    }
                }
                (lo, hi)
            }
        }
    }
}

/// One atom of the Poisson random measure.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpArrival {
    pub time: f64,
    pub mark: Vec<f64>,
}

/// Sample the atoms of `N` on `(t0, t1]`: a Poisson count, i.i.d. uniform
/// times sorted ascending, and i.i.d. marks.
pub fn sample_jump_times_marks(
    stream: &mut RngStream,
    marks: &MarkMeasure,
    t0: f64,
    t1: f64,
) -> Result<Vec<JumpArrival>> {
    if !(t0 < t1) {
        return Err(Error::invalid("t1", format!("interval ({t0}, {t1}] is empty")));
    }
    let mean = marks.total_rate() * (t1 - t0);
    if mean == 0.0 {
        return Ok(Vec::new());
    }
    let rng = stream.jump_rng();
    let poisson = Poisson::new(mean).map_err(|e| Error::invalid("rate", e.to_string()))?;
    let count = poisson.sample(rng) as usize;
    let span = t1 - t0;
    let mut times: Vec<f64> = Vec::with_capacity(count);
    while times.len() < count {
        // 1 - u lies in (0, 1], so every time lands in (t0, t1].
        let t = t0 + span * (1.0 - rng.random::<f64>());
        if t > t0 && t <= t1 && !times.contains(&t) {
            times.push(t);
        }
    }
    times.sort_by(f64::total_cmp);
    let dim = marks.dim();
    Ok(times
        .into_iter()
        .map(|time| {
            let mut mark = vec![0.0; dim];
            marks.sample_mark(rng, &mut mark);
            JumpArrival { time, mark }
        })
        .collect())
}

/// Lazily generated arrival times of a homogeneous Poisson process with
/// exponential gaps; the integrator consumes it one jump at a time.
#[derive(Debug, Clone)]
pub struct ArrivalClock {
    rate: f64,
    next: f64,
}

impl ArrivalClock {
    pub fn start<R: RngCore + ?Sized>(rate: f64, origin: f64, rng: &mut R) -> Self {
        let mut clock = ArrivalClock { rate, next: origin };
        clock.advance(rng);
        clock
    }

    #[inline]
    pub fn next_time(&self) -> f64 {
        self.next
    }

    pub fn advance<R: RngCore + ?Sized>(&mut self, rng: &mut R) {
        if self.rate == 0.0 {
            self.next = f64::INFINITY;
            return;
        }
        loop {
            let gap: f64 = Exp1.sample(rng);
            let candidate = self.next + gap / self.rate;
            if candidate > self.next {
                self.next = candidate;
                return;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brownian_draws_repeat_after_reset() {
        let mut s = RngStream::new(7, 3);
        let a = brownian_increments(&mut s, 0.01, 2).unwrap();
        s.reset();
        let b = brownian_increments(&mut s, 0.01, 2).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
    }

    #[test]
    fn brownian_rejects_nonpositive_step() {
        let mut s = RngStream::new(0, 0);
        assert!(brownian_increments(&mut s, 0.0, 1).is_err());
        assert!(brownian_increments(&mut s, -1.0, 1).is_err());
        assert!(brownian_increments(&mut s, 0.5, 0).unwrap().is_empty());
    }

    #[test]
    fn brownian_moments() {
        let mut s = RngStream::new(11, 0);
        let n = 1_000_000;
        let h = 0.25;
        let draws = brownian_increments(&mut s, h, n).unwrap();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 4.0 * 0.5 / 1000.0, "mean {mean}");
        assert!((var - h).abs() < 0.01 * h, "var {var}");
    }

    #[test]
    fn streams_differ_by_id_and_substream() {
        let mut a = RngStream::new(5, 0);
        let mut b = RngStream::new(5, 1);
        let xa: Vec<f64> = (0..8).map(|_| a.standard_normal()).collect();
        let xb: Vec<f64> = (0..8).map(|_| b.standard_normal()).collect();
        assert_ne!(xa, xb);
        let mut c = RngStream::new(5, 0);
        let u1: u64 = c.jump_rng().next_u64();
        let mut d = RngStream::new(5, 0);
        let u2: u64 = d.brownian.next_u64();
        assert_ne!(u1, u2);
    }

    #[test]
    fn independent_stream_correlation_is_small() {
        let n = 200_000;
        let mut a = RngStream::new(99, 10);
        let mut b = RngStream::new(99, 11);
        let corr: f64 = (0..n).map(|_| a.standard_normal() * b.standard_normal()).sum::<f64>() / n as f64;
        assert!(corr.abs() < 4.0 / (n as f64).sqrt(), "corr {corr}");
    }

    #[test]
    fn zero_rate_yields_no_jumps() {
        let mut s = RngStream::new(1, 1);
        let m = MarkMeasure::none(2);
        assert!(sample_jump_times_marks(&mut s, &m, 0.0, 100.0).unwrap().is_empty());
        assert_eq!(s.counters().1, 0);
    }

    #[test]
    fn poisson_count_mean() {
        let m = MarkMeasure::new(2.0, MarkDistribution::Constant(vec![1.0])).unwrap();
        let mut s = RngStream::new(3, 0);
        let reps = 100_000;
        let mut total = 0usize;
        for _ in 0..reps {
            let jumps = sample_jump_times_marks(&mut s, &m, 1.0, 6.0).unwrap();
            assert!(jumps.windows(2).all(|w| w[0].time < w[1].time));
            assert!(jumps.iter().all(|j| j.time > 1.0 && j.time <= 6.0));
            total += jumps.len();
        }
        let mean = total as f64 / reps as f64;
        let se = (10.0 / reps as f64).sqrt();
        assert!((mean - 10.0).abs() < 4.0 * se, "mean count {mean}");
    }

    #[test]
    fn jump_sampling_is_reproducible() {
        let m = MarkMeasure::new(
            3.0,
            MarkDistribution::UniformBox {
                lower: vec![-1.0, 0.0],
                upper: vec![1.0, 2.0],
            },
        )
        .unwrap();
        let a = sample_jump_times_marks(&mut RngStream::new(8, 2), &m, 0.0, 4.0).unwrap();
        let b = sample_jump_times_marks(&mut RngStream::new(8, 2), &m, 0.0, 4.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn atoms_follow_weights() {
        let m = MarkMeasure::new(
            1.0,
            MarkDistribution::Atoms {
                points: vec![vec![1.0], vec![-2.0]],
                weights: vec![3.0, 1.0],
            },
        )
        .unwrap();
        let mut s = RngStream::new(4, 0);
        let mut mark = [0.0];
        let n = 100_000;
        let mut ones = 0;
        for _ in 0..n {
            m.sample_mark(s.jump_rng(), &mut mark);
            assert!(mark[0] == 1.0 || mark[0] == -2.0);
            if mark[0] == 1.0 {
                ones += 1;
            }
        }
        let p = ones as f64 / n as f64;
        assert!((p - 0.75).abs() < 4.0 * (0.75f64 * 0.25 / n as f64).sqrt());
        let mo = m.moments();
        assert!((mo.first[0] - 0.25).abs() < 1e-15);
        assert!((mo.second[0] - 1.75).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_measures() {
        assert!(MarkMeasure::new(f64::INFINITY, MarkDistribution::Constant(vec![1.0])).is_err());
        assert!(MarkMeasure::new(-1.0, MarkDistribution::Constant(vec![1.0])).is_err());
        assert!(MarkMeasure::new(1.0, MarkDistribution::Constant(vec![0.0, 0.0])).is_err());
        assert!(MarkMeasure::new(
            1.0,
            MarkDistribution::Atoms {
                points: vec![vec![0.0]],
                weights: vec![1.0]
            }
        )
        .is_err());
        assert!(MarkMeasure::new(
            1.0,
            MarkDistribution::UniformBox {
                lower: vec![1.0],
                upper: vec![0.0]
            }
        )
        .is_err());
    }

    #[test]
    fn arrival_clock_rate() {
        let mut s = RngStream::new(21, 0);
        let rate = 2.0;
        let mut clock = ArrivalClock::start(rate, 0.0, s.jump_rng());
        let horizon = 50_000.0;
        let mut count = 0u64;
        let mut prev = 0.0;
        while clock.next_time() <= horizon {
            assert!(clock.next_time() > prev);
            prev = clock.next_time();
            count += 1;
            clock.advance(s.jump_rng());
        }
        let expected = rate * horizon;
        assert!(((count as f64) - expected).abs() < 4.0 * expected.sqrt());
        let idle = ArrivalClock::start(0.0, 0.0, s.jump_rng());
        assert!(idle.next_time().is_infinite());
    }
}
