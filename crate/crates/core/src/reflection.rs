//! Normal reflection on the orthant.
//!
//! Coordinates decouple: each one is pushed back to zero by its own
//! regulator. The same positive/negative part split serves the diffusion
//! sub-steps (`X = [X_pre]^+`, `ΔK = [X_pre]^−`) and the jump instants
//! (`ΔK = [X(t−) + ΔY]^−`).

#[inline]
fn split(v: f64) -> (f64, f64) {
    if v < 0.0 {
        (0.0, -v)
    } else {
        (v, 0.0)
    }
}

/// Componentwise `x_post = [x_pre]^+`, `dk = [x_pre]^−`. Exactly
/// `x_post − dk = x_pre` and `x_post[i] · dk[i] = 0`.
#[inline]
pub fn project_and_regulate(x_pre: &[f64], x_post: &mut [f64], dk: &mut [f64]) {
    for ((v, p), k) in x_pre.iter().zip(x_post.iter_mut()).zip(dk.iter_mut()) {
        (*p, *k) = split(*v);
    }
}

/// In-place variant of [`project_and_regulate`].
#[inline]
pub fn project_in_place(x: &mut [f64], dk: &mut [f64]) {
    for (v, k) in x.iter_mut().zip(dk.iter_mut()) {
        (*v, *k) = split(*v);
    }
}

/// Reflection at a jump instant: `dk = [x_left + jump]^−`,
/// `x_post = [x_left + jump]^+`.
#[inline]
pub fn jump_reflect(x_left: &[f64], jump: &[f64], x_post: &mut [f64], dk: &mut [f64]) {
    for (((l, g), p), k) in x_left.iter().zip(jump).zip(x_post.iter_mut()).zip(dk.iter_mut()) {
        (*p, *k) = split(l + g);
    }
}

/// Skorokhod map by running supremum: `K_n^i = max_{m ≤ n} [Γ_m^i]^−` for a
/// row-major path of `dim`-vectors.
pub fn running_sup_regulator(gamma_path: &[f64], dim: usize) -> Vec<f64> {
    assert!(
        dim > 0 && gamma_path.len().is_multiple_of(dim),
        "path length must be a multiple of dim"
    );
    let mut out = Vec::with_capacity(gamma_path.len());
    let mut running = vec![0.0f64; dim];
    for row in gamma_path.chunks_exact(dim) {
        for (r, g) in running.iter_mut().zip(row) {
            *r = r.max(split(*g).1);
        }
        out.extend_from_slice(&running);
    }
    out
}

/// Skorokhod map by stepwise projection: `X_n = [X_{n−1} + ΔΓ_n]^+` with
/// `X_0 = Γ_0`, returning `(X, K)` with `K` the accumulated negative parts.
pub fn stepwise_projection(gamma_path: &[f64], dim: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(
        dim > 0 && gamma_path.len().is_multiple_of(dim),
        "path length must be a multiple of dim"
    );
    let mut xs = Vec::with_capacity(gamma_path.len());
    let mut ks = Vec::with_capacity(gamma_path.len());
    let mut rows = gamma_path.chunks_exact(dim);
    let Some(first) = rows.next() else {
        return (xs, ks);
    };
    let mut x: Vec<f64> = first.to_vec();
    let mut k = vec![0.0; dim];
    let mut prev = first;
    xs.extend_from_slice(&x);
    ks.extend_from_slice(&k);
    let mut dk = vec![0.0; dim];
    for row in rows {
        for i in 0..dim {
            x[i] += row[i] - prev[i];
        }
        project_in_place(&mut x, &mut dk);
        for i in 0..dim {
            k[i] += dk[i];
        }
        xs.extend_from_slice(&x);
        ks.extend_from_slice(&k);
        prev = row;
    }
    (xs, ks)
}

/// One jump of the Poisson random measure as applied to a path.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpEvent {
    pub time: f64,
    /// Grid step `n` with `time ∈ (t_n, t_{n+1}]`.
    pub step: usize,
    pub mark: Vec<f64>,
    /// `X(t−)`
    pub x_left: Vec<f64>,
    /// `ΔY(t) = g(t, X(t−), X((t−τ)−), ρ)`
    pub jump: Vec<f64>,
    /// `ΔK(t) = [X(t−) + ΔY(t)]^−`
    pub dk: Vec<f64>,
}

/// Cumulative regulator split into its continuous part (credited at
/// diffusion sub-steps) and its jump part (credited at Poisson times).
#[derive(Debug, Clone, PartialEq)]
pub struct RegulatorState {
    pub continuous: Vec<f64>,
    pub jump: Vec<f64>,
}

impl RegulatorState {
    pub fn new(dim: usize) -> Self {
        RegulatorState {
            continuous: vec![0.0; dim],
            jump: vec![0.0; dim],
        }
    }

    #[inline]
    pub fn credit_continuous(&mut self, dk: &[f64]) {
        for (k, d) in self.continuous.iter_mut().zip(dk) {
            *k += d;
        }
    }

    #[inline]
    pub fn credit_jump(&mut self, dk: &[f64]) {
        for (k, d) in self.jump.iter_mut().zip(dk) {
            *k += d;
        }
    }

    /// `K = K^c + Σ ΔK` componentwise.
    #[inline]
    pub fn total_into(&self, out: &mut [f64]) {
        for ((o, c), j) in out.iter_mut().zip(&self.continuous).zip(&self.jump) {
            *o = c + j;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn projection_examples() {
        let (mut x, mut k) = ([0.0; 2], [0.0; 2]);
        project_and_regulate(&[1.0, -3.0], &mut x, &mut k);
        assert_eq!((x, k), ([1.0, 0.0], [0.0, 3.0]));
        project_and_regulate(&[0.2, 0.0], &mut x, &mut k);
        assert_eq!((x, k), ([0.2, 0.0], [0.0, 0.0]));
    }

    #[test]
    fn jump_examples() {
        let (mut x, mut k) = ([0.0], [0.0]);
        jump_reflect(&[1.0], &[-3.0], &mut x, &mut k);
        assert_eq!((x, k), ([0.0], [2.0]));
        jump_reflect(&[1.0], &[0.5], &mut x, &mut k);
        assert_eq!(k, [0.0]);
        let (mut x2, mut k2) = ([0.0; 2], [0.0; 2]);
        jump_reflect(&[0.0, 1.0], &[0.5, -1.0], &mut x2, &mut k2);
        assert_eq!((x2, k2), ([0.5, 0.0], [0.0, 0.0]));
    }

    #[test]
    fn running_sup_examples() {
        assert_eq!(
            running_sup_regulator(&[0.0, -1.0, -0.5, -2.0], 1),
            vec![0.0, 1.0, 1.0, 2.0]
        );
        assert_eq!(running_sup_regulator(&[0.5, 1.0, 0.0, 3.0], 1), vec![0.0; 4]);
    }

    #[test]
    fn regulator_split_sums() {
        let mut r = RegulatorState::new(1);
        r.credit_continuous(&[0.25]);
        r.credit_jump(&[2.0]);
        let mut k = [0.0];
        r.total_into(&mut k);
        assert_eq!(k, [2.25]);
    }

    proptest! {
        #[test]
        fn projection_identities(v in prop::collection::vec(-1e6f64..1e6, 1..6)) {
            let mut x = vec![0.0; v.len()];
            let mut k = vec![0.0; v.len()];
            project_and_regulate(&v, &mut x, &mut k);
            for i in 0..v.len() {
                prop_assert_eq!(x[i] - k[i], v[i]);
                prop_assert_eq!(x[i] * k[i], 0.0);
                prop_assert!(x[i] >= 0.0 && k[i] >= 0.0);
            }
        }

        #[test]
        fn two_skorokhod_routes_agree(
            start in 0.0f64..3.0,
            incs in prop::collection::vec(-1.0f64..1.0, 1..200),
        ) {
            let mut gamma = vec![start];
            for d in &incs {
                let last = *gamma.last().unwrap();
                gamma.push(last + d);
            }
            let k_sup = running_sup_regulator(&gamma, 1);
            let (x, k) = stepwise_projection(&gamma, 1);
            for n in 0..gamma.len() {
                prop_assert!((k[n] - k_sup[n]).abs() <= 1e-12);
                prop_assert!((x[n] - (gamma[n] + k_sup[n])).abs() <= 1e-12);
            }
        }
    }
}
