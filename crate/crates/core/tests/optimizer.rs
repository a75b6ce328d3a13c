use grwscmf::optimizer::{fit, kkt_residuals};
use grwscmf::{Hyperparams, State32};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn problem(seed: u64, n: usize, d: usize, c: usize) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_simple_fn((n, d), || rng.random::<f64>());
    let y = Array2::from_shape_simple_fn((n, c), || if rng.random::<bool>() { 1.0 } else { 0.0 });
    let rw = Array2::from_shape_simple_fn((d, c), || rng.random::<f64>());
    (x, y, rw)
}

#[test]
fn stationarity_at_convergence() {
    for seed in 0..3 {
        let (x, y, rw) = problem(seed, 12, 6, 3);
        let hp = Hyperparams {
            k: Some(2),
            tol: 1e-13,
            max_iter: 50_000,
            ..Hyperparams::default()
        };
        let s = fit(x.view(), y.view(), rw.view(), &hp, seed).unwrap();
        let r = kkt_residuals(x.view(), y.view(), rw.view(), &s, &hp);
        assert!(
            r.iter().all(|&v| v <= 1e-4),
            "seed {seed}: residuals {r:?} after {} iterations",
            s.objective_trace.len()
        );
    }
}

#[test]
fn single_precision_fit_descends() {
    let (x, y, rw) = problem(4, 20, 8, 3);
    let (x, y, rw) = (x.mapv(|v| v as f32), y.mapv(|v| v as f32), rw.mapv(|v| v as f32));
    let s: State32 = fit(x.view(), y.view(), rw.view(), &Hyperparams::default(), 4).unwrap();
    let last = *s.objective_trace.last().unwrap();
    assert!(last < s.initial_objective);
    assert!(s.v.iter().chain(s.q.iter()).chain(s.b.iter()).all(|&v| v >= 0.0));
}
