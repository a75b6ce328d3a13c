//! Structured correlation matrix factorization.
//!
//! Minimizes over non-negative `V (n×k)`, `Q (k×d)`, `B (k×c)`:
//!
//! ```text
//! α‖X − VQ‖² + β‖Y − VB‖² + γ‖R_w − QᵀB‖² + δ‖XQᵀ − YBᵀ‖² + ε‖QᵀB‖₂,₁ + ‖V‖²
//! ```
//!
//! The ℓ2,1 term is handled through the reweighting diagonal
//! `D_ii = 1 / (2·sqrt(‖W_i‖² + c))` with `W = QᵀB`, refreshed before each of
//! the `Q` and `B` updates. Each block update is an elementwise
//! multiplicative step `M ← M ⊙ N / (Δ + 1e-12)`.
//!
//! For non-negative `X` the numerators and denominators are exactly the
//! classic ones. If `X` has negative entries, the negative parts of the
//! linear terms move to the denominator and the negative part of `XᵀX`
//! moves to the numerator, which keeps every factor non-negative and the
//! step a descent step.

use std::io::Write;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const DENOMINATOR_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams<T> {
    /// Weight of the feature reconstruction `‖X − VQ‖²`.
    pub alpha: T,
    /// Weight of the label reconstruction `‖Y − VB‖²`.
    pub beta: T,
    /// Weight of the random-walk association fit `‖R_w − QᵀB‖²`.
    pub gamma: T,
    /// Weight of the feature-label alignment `‖XQᵀ − YBᵀ‖²`.
    pub delta: T,
    /// Weight of the row-sparsity penalty `‖QᵀB‖₂,₁`.
    pub epsilon: T,
    /// Latent dimension; `None` picks `min(c, 10)`.
    pub k: Option<usize>,
    pub max_iter: usize,
    /// Relative objective change below which iteration stops.
    pub tol: T,
    /// Smoothing constant inside the reweighting square root.
    pub d_smoothing: T,
}

impl<T: Scalar> Default for Hyperparams<T> {
    fn default() -> Self {
        let half = T::of(0.5);
        Hyperparams {
            alpha: half,
            beta: half,
            gamma: half,
            delta: half,
            epsilon: half,
            k: None,
            max_iter: 300,
            tol: T::of(1e-5),
            d_smoothing: T::of(1e-8),
        }
    }
}

impl<T: Scalar> Hyperparams<T> {
    pub fn latent_dim(&self, n_labels: usize) -> usize {
        self.k.unwrap_or(n_labels.min(10))
    }

    pub fn validate(&self) -> Result<()> {
        let weights = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("delta", self.delta),
            ("epsilon", self.epsilon),
        ];
        for (name, w) in weights {
            if !(w >= T::zero()) || !w.is_finite() {
                return Err(Error::Argument(format!(
                    "{name} must be finite and non-negative, got {w}"
                )));
            }
        }
        if self.k == Some(0) {
            return Err(Error::Argument("latent dimension k must be at least 1".into()));
        }
        if !(self.tol > T::zero()) {
            return Err(Error::Argument(format!("tol must be positive, got {}", self.tol)));
        }
        if !(self.d_smoothing > T::zero()) || !self.d_smoothing.is_finite() {
            return Err(Error::Argument(format!(
                "d_smoothing must be positive, got {}",
                self.d_smoothing
            )));
        }
        Ok(())
    }
}

/// Model component switched off in an ablation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ablation {
    /// Random-walk association term: `γ = 0`, and the pipeline substitutes
    /// the normalized MI matrix for `R_w` without running any walk.
    Rw,
    /// Feature-label alignment term: `δ = 0`.
    Fla,
}

pub fn ablation_variant<T: Scalar>(hp: &Hyperparams<T>, drop: Ablation) -> Hyperparams<T> {
    let mut out = *hp;
    match drop {
        Ablation::Rw => out.gamma = T::zero(),
        Ablation::Fla => out.delta = T::zero(),
    }
    out
}

#[derive(Debug, Clone)]
pub struct FactorizationState<T> {
    pub v: Array2<T>,
    pub q: Array2<T>,
    pub b: Array2<T>,
    /// Diagonal of the reweighting matrix `D`, length `d`.
    pub d: Array1<T>,
    /// Objective at the initial point, before any update.
    pub initial_objective: T,
    /// Objective after each completed iteration.
    pub objective_trace: Vec<T>,
    pub converged: bool,
}

impl<T: Scalar> FactorizationState<T> {
    /// Seeded `uniform(0,1)/√k` initialization of `V`, `Q`, `B`.
    pub fn random(n: usize, d: usize, c: usize, k: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = T::one() / T::of_usize(k).sqrt();
        let mut draw = |rows, cols| Array2::from_shape_simple_fn((rows, cols), || T::of(rng.random::<f64>()) * scale);
        let v = draw(n, k);
        let q = draw(k, d);
        let b = draw(k, c);
        Self::from_factors(v, q, b, T::of(1e-8))
    }

    pub fn from_factors(v: Array2<T>, q: Array2<T>, b: Array2<T>, d_smoothing: T) -> Self {
        let d = update_d(q.view(), b.view(), d_smoothing);
        FactorizationState {
            v,
            q,
            b,
            d,
            initial_objective: T::nan(),
            objective_trace: Vec::new(),
            converged: false,
        }
    }

    /// `W = QᵀB`, `d × c`.
    pub fn association(&self) -> Array2<T> {
        self.q.t().dot(&self.b)
    }

    pub fn refresh_d(&mut self, d_smoothing: T) {
        self.d = update_d(self.q.view(), self.b.view(), d_smoothing);
    }

    /// Writes `iteration,objective,relative_change` rows; iteration 0 is the
    /// initial point.
    pub fn write_trace_csv<W: Write>(&self, mut w: W, comments: &[String]) -> std::io::Result<()> {
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        writeln!(w, "iteration,objective,relative_change")?;
        writeln!(w, "0,{},", self.initial_objective)?;
        let mut prev = self.initial_objective;
        for (i, &z) in self.objective_trace.iter().enumerate() {
            writeln!(w, "{},{},{}", i + 1, z, relative_change(prev, z))?;
            prev = z;
        }
        Ok(())
    }
}

fn relative_change<T: Scalar>(prev: T, cur: T) -> T {
    let diff = (cur - prev).abs();
    if diff == T::zero() {
        T::zero()
    } else {
        diff / prev.abs()
    }
}

fn check_shapes<T: Scalar>(
    x: ArrayView2<T>,
    y: ArrayView2<T>,
    rw: ArrayView2<T>,
    state: &FactorizationState<T>,
) -> Result<()> {
    let (n, d) = x.dim();
    let c = y.ncols();
    let k = state.v.ncols();
    let ok = y.nrows() == n
        && rw.dim() == (d, c)
        && state.v.nrows() == n
        && state.q.dim() == (k, d)
        && state.b.dim() == (k, c)
        && state.d.len() == d;
    if ok {
        Ok(())
    } else {
        Err(Error::Shape(format!(
            "X {:?}, Y {:?}, R_w {:?}, V {:?}, Q {:?}, B {:?}, D {}",
            x.dim(),
            y.dim(),
            rw.dim(),
            state.v.dim(),
            state.q.dim(),
            state.b.dim(),
            state.d.len()
        )))
    }
}

fn sq_frobenius<T: Scalar>(m: &Array2<T>) -> T {
    m.iter().map(|&v| v * v).sum()
}

/// Sum of the Euclidean norms of the rows.
pub fn l21_norm<T: Scalar>(m: ArrayView2<T>) -> T {
    m.rows()
        .into_iter()
        .map(|r| r.iter().map(|&v| v * v).sum::<T>().sqrt())
        .sum()
}

/// The full objective at `state`.
pub fn objective<T: Scalar>(
    x: ArrayView2<T>,
    y: ArrayView2<T>,
    rw: ArrayView2<T>,
    state: &FactorizationState<T>,
    hp: &Hyperparams<T>,
) -> Result<T> {
    check_shapes(x, y, rw, state)?;
    let (v, q, b) = (&state.v, &state.q, &state.b);
    let w = q.t().dot(b);
    let feature_fit = sq_frobenius(&(&x - &v.dot(q)));
    let label_fit = sq_frobenius(&(&y - &v.dot(b)));
    let walk_fit = sq_frobenius(&(&rw - &w));
    let alignment = sq_frobenius(&(x.dot(&q.t()) - y.dot(&b.t())));
    Ok(hp.alpha * feature_fit
        + hp.beta * label_fit
        + hp.gamma * walk_fit
        + hp.delta * alignment
        + hp.epsilon * l21_norm(w.view())
        + sq_frobenius(v))
}

/// Reweighting diagonal for the ℓ2,1 surrogate.
pub fn update_d<T: Scalar>(q: ArrayView2<T>, b: ArrayView2<T>, c: T) -> Array1<T> {
    let w = q.t().dot(&b);
    let two = T::of(2.0);
    w.map_axis(Axis(1), |row| {
        let sq: T = row.iter().map(|&v| v * v).sum();
        T::one() / (two * (sq + c).sqrt())
    })
}

fn positive_part<T: Scalar>(m: &Array2<T>) -> Array2<T> {
    m.mapv(|v| v.max(T::zero()))
}

fn negative_part<T: Scalar>(m: &Array2<T>) -> Array2<T> {
    m.mapv(|v| (-v).max(T::zero()))
}

fn multiplicative_step<T: Scalar>(cur: &Array2<T>, num: &Array2<T>, den: &Array2<T>) -> Array2<T> {
    let guard = T::of(DENOMINATOR_GUARD);
    let mut out = cur.clone();
    Zip::from(&mut out).and(num).and(den).for_each(|m, &n, &dd| {
        if *m != T::zero() {
            *m = *m * n / (dd + guard);
        }
    });
    out
}

/// Data products that stay fixed across iterations.
struct Gram<T> {
    xtx_pos: Array2<T>,
    xtx_neg: Array2<T>,
    xty: Array2<T>,
    yty: Array2<T>,
}

impl<T: Scalar> Gram<T> {
    fn new(x: ArrayView2<T>, y: ArrayView2<T>) -> Self {
        let xtx = x.t().dot(&x);
        Gram {
            xtx_pos: positive_part(&xtx),
            xtx_neg: negative_part(&xtx),
            xty: x.t().dot(&y),
            yty: y.t().dot(&y),
        }
    }
}

/// `V ← V ⊙ (αXQᵀ + βYBᵀ) / (αVQQᵀ + βVBBᵀ + V)`.
pub fn update_v<T: Scalar>(
    state: &FactorizationState<T>,
    x: ArrayView2<T>,
    y: ArrayView2<T>,
    hp: &Hyperparams<T>,
) -> Array2<T> {
    let (v, q, b) = (&state.v, &state.q, &state.b);
    let linear = x.dot(&q.t()) * hp.alpha + y.dot(&b.t()) * hp.beta;
    let num = positive_part(&linear);
    let den = v.dot(&q.dot(&q.t())) * hp.alpha + v.dot(&b.dot(&b.t())) * hp.beta + v + negative_part(&linear);
    multiplicative_step(v, &num, &den)
}

fn update_q_with<T: Scalar>(
    state: &FactorizationState<T>,
    x: ArrayView2<T>,
    rw: ArrayView2<T>,
    gram: &Gram<T>,
    hp: &Hyperparams<T>,
) -> Array2<T> {
    let (v, q, b) = (&state.v, &state.q, &state.b);
    let bbt = b.dot(&b.t());
    // αVᵀX + γB R_wᵀ + δB YᵀX
    let linear = v.t().dot(&x) * hp.alpha + b.dot(&rw.t()) * hp.gamma + b.dot(&gram.xty.t()) * hp.delta;
    let bbtq = bbt.dot(q);
    let bbtqd = &bbtq * &state.d.view().insert_axis(Axis(0));
    let num = positive_part(&linear) + q.dot(&gram.xtx_neg) * hp.delta;
    let den = v.t().dot(v).dot(q) * hp.alpha
        + &bbtq * hp.gamma
        + bbtqd * hp.epsilon
        + q.dot(&gram.xtx_pos) * hp.delta
        + negative_part(&linear);
    multiplicative_step(q, &num, &den)
}

fn update_b_with<T: Scalar>(
    state: &FactorizationState<T>,
    y: ArrayView2<T>,
    rw: ArrayView2<T>,
    gram: &Gram<T>,
    hp: &Hyperparams<T>,
) -> Array2<T> {
    let (v, q, b) = (&state.v, &state.q, &state.b);
    // βVᵀY + γQ R_w + δQ XᵀY
    let linear = v.t().dot(&y) * hp.beta + q.dot(&rw) * hp.gamma + q.dot(&gram.xty) * hp.delta;
    let qd = q * &state.d.view().insert_axis(Axis(0));
    let num = positive_part(&linear);
    let den = v.t().dot(v).dot(b) * hp.beta
        + q.dot(&q.t()).dot(b) * hp.gamma
        + qd.dot(&q.t()).dot(b) * hp.epsilon
        + b.dot(&gram.yty) * hp.delta
        + negative_part(&linear);
    multiplicative_step(b, &num, &den)
}

/// `Q ← Q ⊙ (αVᵀX + γBR_wᵀ + δBYᵀX) / (αVᵀVQ + γBBᵀQ + εBBᵀQD + δQXᵀX)`,
/// using the `D` stored in `state`.
pub fn update_q<T: Scalar>(
    state: &FactorizationState<T>,
    x: ArrayView2<T>,
    y: ArrayView2<T>,
    rw: ArrayView2<T>,
    hp: &Hyperparams<T>,
) -> Array2<T> {
    update_q_with(state, x, rw, &Gram::new(x, y), hp)
}

/// `B ← B ⊙ (βVᵀY + γQR_w + δQXᵀY) / (βVᵀVB + γQQᵀB + εQDQᵀB + δBYᵀY)`,
/// using the `D` stored in `state`.
pub fn update_b<T: Scalar>(
    state: &FactorizationState<T>,
    x: ArrayView2<T>,
    y: ArrayView2<T>,
    rw: ArrayView2<T>,
    hp: &Hyperparams<T>,
) -> Array2<T> {
    update_b_with(state, y, rw, &Gram::new(x, y), hp)
}

/// Runs the alternating updates from a seeded random start.
pub fn fit<T: Scalar>(
    x: ArrayView2<T>,
    y: ArrayView2<T>,
    rw: ArrayView2<T>,
    hp: &Hyperparams<T>,
    seed: u64,
) -> Result<FactorizationState<T>> {
    hp.validate()?;
    let (n, d) = x.dim();
    let c = y.ncols();
    let mut state = FactorizationState::random(n, d, c, hp.latent_dim(c), seed);
    state.refresh_d(hp.d_smoothing);
    fit_from(x, y, rw, hp, state)
}

/// Runs the alternating updates from a given starting point.
pub fn fit_from<T: Scalar>(
    x: ArrayView2<T>,
    y: ArrayView2<T>,
    rw: ArrayView2<T>,
    hp: &Hyperparams<T>,
    mut state: FactorizationState<T>,
) -> Result<FactorizationState<T>> {
    hp.validate()?;
    check_shapes(x, y, rw, &state)?;
    let gram = Gram::new(x, y);
    let mut prev = objective(x, y, rw, &state, hp)?;
    if !prev.is_finite() {
        return Err(Error::Divergence { iteration: 0 });
    }
    state.initial_objective = prev;
    state.objective_trace.clear();
    state.converged = false;
    for iteration in 1..=hp.max_iter {
        state.v = update_v(&state, x, y, hp);
        state.refresh_d(hp.d_smoothing);
        state.q = update_q_with(&state, x, rw, &gram, hp);
        state.refresh_d(hp.d_smoothing);
        state.b = update_b_with(&state, y, rw, &gram, hp);
        let z = objective(x, y, rw, &state, hp)?;
        if !z.is_finite() {
            return Err(Error::Divergence { iteration });
        }
        state.objective_trace.push(z);
        if relative_change(prev, z) < hp.tol {
            state.converged = true;
            break;
        }
        prev = z;
    }
    state.refresh_d(hp.d_smoothing);
    Ok(state)
}

/// Euclidean norm of each row of `QᵀB`.
pub fn feature_scores<T: Scalar>(state: &FactorizationState<T>) -> Vec<T> {
    state
        .association()
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|&v| v * v).sum::<T>().sqrt())
        .collect()
}

/// Largest `|∇ ⊙ M|` entry of the stationarity conditions for `V`, `Q`, `B`
/// (gradients without the factor 2, `D` taken from `state`).
pub fn kkt_residuals<T: Scalar>(
    x: ArrayView2<T>,
    y: ArrayView2<T>,
    rw: ArrayView2<T>,
    state: &FactorizationState<T>,
    hp: &Hyperparams<T>,
) -> [T; 3] {
    let (v, q, b) = (&state.v, &state.q, &state.b);
    let dd = state.d.view().insert_axis(Axis(0));
    let grad_v = v.dot(&q.dot(&q.t())) * hp.alpha + v.dot(&b.dot(&b.t())) * hp.beta + v
        - x.dot(&q.t()) * hp.alpha
        - y.dot(&b.t()) * hp.beta;
    let bbt = b.dot(&b.t());
    let grad_q = v.t().dot(v).dot(q) * hp.alpha
        + bbt.dot(q) * hp.gamma
        + &bbt.dot(q) * &dd * hp.epsilon
        + q.dot(&x.t().dot(&x)) * hp.delta
        - v.t().dot(&x) * hp.alpha
        - b.dot(&rw.t()) * hp.gamma
        - b.dot(&y.t().dot(&x)) * hp.delta;
    let qd = q * &dd;
    let grad_b = v.t().dot(v).dot(b) * hp.beta
        + q.dot(&q.t()).dot(b) * hp.gamma
        + qd.dot(&q.t()).dot(b) * hp.epsilon
        + b.dot(&y.t().dot(&y)) * hp.delta
        - v.t().dot(&y) * hp.beta
        - q.dot(&rw) * hp.gamma
        - q.dot(&x.t().dot(&y)) * hp.delta;
    let max_abs = |g: Array2<T>, m: &Array2<T>| (g * m).iter().fold(T::zero(), |acc, &e| acc.max(e.abs()));
    [max_abs(grad_v, v), max_abs(grad_q, q), max_abs(grad_b, b)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn random_problem(seed: u64, n: usize, d: usize, c: usize) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_simple_fn((n, d), || rng.random::<f64>());
        let y = Array2::from_shape_simple_fn((n, c), || f64::from(rng.random::<bool>()));
        let rw = Array2::from_shape_simple_fn((d, c), || rng.random::<f64>());
        (x, y, rw)
    }

    fn unit_weights() -> Hyperparams<f64> {
        Hyperparams {
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            delta: 1.0,
            epsilon: 1.0,
            ..Hyperparams::default()
        }
    }

    #[test]
    fn zero_factors_objective() {
        let (x, y, rw) = random_problem(1, 5, 4, 3);
        let state = FactorizationState::from_factors(
            Array2::zeros((5, 2)),
            Array2::zeros((2, 4)),
            Array2::zeros((2, 3)),
            1e-8,
        );
        let z = objective(x.view(), y.view(), rw.view(), &state, &unit_weights()).unwrap();
        let expected = sq_frobenius(&x) + sq_frobenius(&y) + sq_frobenius(&rw);
        assert!((z - expected).abs() < 1e-12);
    }

    #[test]
    fn exact_factorization_leaves_v_norm() {
        // X = VQ, Y = VB, R_w = QᵀB, XQᵀ = YBᵀ
        let v = array![[1.0], [2.0]];
        let q = array![[1.0, 0.0]];
        let b = array![[1.0, 0.0]];
        let x = v.dot(&q);
        let y = v.dot(&b);
        let rw = q.t().dot(&b);
        assert_eq!(x.dot(&q.t()), y.dot(&b.t()));
        let state = FactorizationState::from_factors(v, q, b, 1e-8);
        let hp = Hyperparams {
            epsilon: 0.0,
            ..unit_weights()
        };
        let z = objective(x.view(), y.view(), rw.view(), &state, &hp).unwrap();
        assert!((z - 5.0).abs() < 1e-12);
    }

    #[test]
    fn objective_rejects_bad_shapes() {
        let (x, y, rw) = random_problem(2, 5, 4, 3);
        let state = FactorizationState::random(5, 3, 3, 2, 0);
        assert!(matches!(
            objective(x.view(), y.view(), rw.view(), &state, &unit_weights()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn d_examples() {
        let q = Array2::<f64>::zeros((2, 1));
        let b = Array2::<f64>::zeros((2, 2));
        let d = update_d(q.view(), b.view(), 1e-8);
        assert!((d[0] - 5000.0).abs() < 1e-6);
        // ‖row‖² = 0.25
        let q = array![[0.5f64]];
        let b = array![[0.6, 0.8]];
        let d = update_d(q.view(), b.view(), 1e-14);
        assert!((d[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_factors_stay_zero() {
        let (x, y, rw) = random_problem(3, 6, 4, 3);
        let hp = unit_weights();
        let mut s = FactorizationState::random(6, 4, 3, 2, 1);
        s.v.fill(0.0);
        assert!(update_v(&s, x.view(), y.view(), &hp).iter().all(|&e| e == 0.0));
        let mut s = FactorizationState::random(6, 4, 3, 2, 1);
        s.q.fill(0.0);
        assert!(update_q(&s, x.view(), y.view(), rw.view(), &hp)
            .iter()
            .all(|&e| e == 0.0));
        let mut s = FactorizationState::random(6, 4, 3, 2, 1);
        s.b.fill(0.0);
        assert!(update_b(&s, x.view(), y.view(), rw.view(), &hp)
            .iter()
            .all(|&e| e == 0.0));
    }

    #[test]
    fn balanced_ratio_leaves_v_unchanged() {
        // with β = 0 and Q chosen so αXQᵀ = αVQQᵀ + V
        let v = array![[1.0f64]];
        let q = array![[1.0]];
        let b = array![[0.0, 0.0]];
        let x = array![[2.0]];
        let y = array![[0.0, 0.0]];
        let s = FactorizationState::from_factors(v.clone(), q, b, 1e-8);
        let hp = Hyperparams {
            alpha: 1.0,
            beta: 0.0,
            ..Hyperparams::default()
        };
        let nv = update_v(&s, x.view(), y.view(), &hp);
        assert!((nv[[0, 0]] - 1.0).abs() < 1e-11);
    }

    #[test]
    fn plain_nmf_update_when_extra_terms_off() {
        let (x, y, rw) = random_problem(4, 7, 5, 3);
        let s = FactorizationState::random(7, 5, 3, 2, 9);
        let hp = Hyperparams {
            alpha: 1.0,
            beta: 1.0,
            gamma: 0.0,
            delta: 0.0,
            epsilon: 0.0,
            ..Hyperparams::default()
        };
        let q = update_q(&s, x.view(), y.view(), rw.view(), &hp);
        let lee_seung = &s.q * &s.v.t().dot(&x) / &(s.v.t().dot(&s.v).dot(&s.q) + 1e-12);
        for (a, b) in q.iter().zip(lee_seung.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        let b = update_b(&s, x.view(), y.view(), rw.view(), &hp);
        let lee_seung = &s.b * &s.v.t().dot(&y) / &(s.v.t().dot(&s.v).dot(&s.b) + 1e-12);
        for (a, e) in b.iter().zip(lee_seung.iter()) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn each_block_update_descends() {
        for seed in 0..10 {
            let (x, y, rw) = random_problem(seed, 8, 5, 3);
            let hp = unit_weights();
            let mut s = FactorizationState::random(8, 5, 3, 2, seed + 100);
            let obj = |s: &FactorizationState<f64>| objective(x.view(), y.view(), rw.view(), s, &hp).unwrap();
            let before = obj(&s);
            s.v = update_v(&s, x.view(), y.view(), &hp);
            let after_v = obj(&s);
            assert!(after_v <= before + 1e-9, "V: {before} -> {after_v}");
            s.refresh_d(hp.d_smoothing);
            s.q = update_q(&s, x.view(), y.view(), rw.view(), &hp);
            let after_q = obj(&s);
            assert!(after_q <= after_v + 1e-9, "Q: {after_v} -> {after_q}");
            s.refresh_d(hp.d_smoothing);
            s.b = update_b(&s, x.view(), y.view(), rw.view(), &hp);
            let after_b = obj(&s);
            assert!(after_b <= after_q + 1e-9, "B: {after_q} -> {after_b}");
        }
    }

    #[test]
    fn negative_features_keep_factors_non_negative() {
        let (mut x, y, rw) = random_problem(5, 10, 4, 3);
        x.mapv_inplace(|v| v - 0.5);
        let hp = unit_weights();
        let s = fit(x.view(), y.view(), rw.view(), &hp, 3).unwrap();
        assert!(s.v.iter().chain(s.q.iter()).chain(s.b.iter()).all(|&e| e >= 0.0));
        for w in s.objective_trace.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-7));
        }
    }

    #[test]
    fn infinite_tol_stops_after_one_iteration() {
        let (x, y, rw) = random_problem(6, 6, 4, 3);
        let hp = Hyperparams {
            tol: f64::INFINITY,
            ..Hyperparams::default()
        };
        let s = fit(x.view(), y.view(), rw.view(), &hp, 0).unwrap();
        assert_eq!(s.objective_trace.len(), 1);
        assert!(s.converged);
    }

    #[test]
    fn fit_is_deterministic() {
        let (x, y, rw) = random_problem(7, 9, 5, 3);
        let hp = Hyperparams::default();
        let a = fit(x.view(), y.view(), rw.view(), &hp, 42).unwrap();
        let b = fit(x.view(), y.view(), rw.view(), &hp, 42).unwrap();
        assert_eq!(a.objective_trace, b.objective_trace);
        assert_eq!(a.q, b.q);
    }

    #[test]
    fn d_matches_final_association() {
        let (x, y, rw) = random_problem(8, 9, 5, 3);
        let hp = Hyperparams::default();
        let s = fit(x.view(), y.view(), rw.view(), &hp, 1).unwrap();
        let w = s.association();
        for (i, row) in w.rows().into_iter().enumerate() {
            let expected = 1.0 / (2.0 * (row.dot(&row) + hp.d_smoothing).sqrt());
            assert!((s.d[i] - expected).abs() <= 1e-12 * expected);
        }
    }

    #[test]
    fn score_examples() {
        let s = FactorizationState::from_factors(array![[1.0]], array![[1.0, 2.0]], array![[3.0, 4.0]], 1e-8);
        let scores = feature_scores(&s);
        assert_eq!(scores[0], 5.0);
        assert_eq!(scores[1], 10.0);
        let s = FactorizationState::from_factors(array![[1.0]], array![[1.0, 2.0]], array![[0.0, 0.0]], 1e-8);
        assert!(feature_scores(&s).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ablation_zeroes_one_weight() {
        let hp = Hyperparams::<f64>::default();
        let fla = ablation_variant(&hp, Ablation::Fla);
        assert_eq!(fla.delta, 0.0);
        assert_eq!(Hyperparams { delta: hp.delta, ..fla }, hp);
        let rw = ablation_variant(&hp, Ablation::Rw);
        assert_eq!(rw.gamma, 0.0);
        assert_eq!(rw.delta, hp.delta);
    }

    #[test]
    fn validation_catches_bad_values() {
        let hp = Hyperparams::<f64> {
            alpha: -1.0,
            ..Hyperparams::default()
        };
        assert!(hp.validate().is_err());
        let hp = Hyperparams::<f64> {
            k: Some(0),
            ..Hyperparams::default()
        };
        assert!(hp.validate().is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let (x, y, rw) = random_problem(9, 8, 5, 3);
        let (x, y, rw) = (x.mapv(|v| v as f32), y.mapv(|v| v as f32), rw.mapv(|v| v as f32));
        let s = fit(x.view(), y.view(), rw.view(), &Hyperparams::<f32>::default(), 5).unwrap();
        assert!(s.objective_trace.iter().all(|v| v.is_finite()));
    }
}
