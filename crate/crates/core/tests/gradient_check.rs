//! Hand-written backprop against central finite differences.

use etcomm::neural::{Activation, Mlp};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-5;
const PROBES: usize = 120;
const TOL: f64 = 1e-4;

/// `L = Σ c ⊙ f(x)` for a fixed random `c`.
fn loss(net: &Mlp, x: &Array2<f64>, c: &Array2<f64>) -> f64 {
    (net.predict(x.view()).unwrap() * c).sum()
}

/// Sign pattern of every hidden pre-activation, used to detect probes that
/// straddle a ReLU kink where the derivative is undefined.
fn relu_pattern(net: &Mlp, x: &Array2<f64>) -> Vec<bool> {
    let mut h = x.clone();
    let layers = &net.params().layers;
    let mut pattern = Vec::new();
    for layer in &layers[..layers.len() - 1] {
        h = h.dot(&layer.weight) + &layer.bias;
        pattern.extend(h.iter().map(|&v| v > 0.0));
        h.mapv_inplace(|v| v.max(0.0));
    }
    pattern
}

fn check(head: Activation, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes = [7, 64, 64, 64, 64, 3];
    let net = Mlp::new(&sizes, Activation::Relu, head, &mut rng).unwrap();
    let x = Array2::from_shape_fn((4, 7), |_| rng.random_range(-1.0..1.0));
    let c = Array2::from_shape_fn((4, 3), |_| rng.random_range(-1.0..1.0));

    let (_, tape) = net.forward(x.view()).unwrap();
    let (grads, _) = net.backward(tape, c.view()).unwrap();
    let analytic = grads.to_flat();
    let n_params = analytic.len();
    let base_pattern = relu_pattern(&net, &x);

    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut attempts = 0;
    while checked < PROBES {
        attempts += 1;
        assert!(attempts < 10 * PROBES, "too many probes hit ReLU kinks");
        let k = rng.random_range(0..n_params);
        let shifted = |delta: f64| {
            let mut p = net.clone();
            let mut idx = k;
            for s in p.params_mut().slices_mut() {
                if idx < s.len() {
                    s[idx] += delta;
                    break;
                }
                idx -= s.len();
            }
            p
        };
        let (plus, minus) = (shifted(EPS), shifted(-EPS));
        if relu_pattern(&plus, &x) != base_pattern || relu_pattern(&minus, &x) != base_pattern {
            continue;
        }
        let fd = (loss(&plus, &x, &c) - loss(&minus, &x, &c)) / (2.0 * EPS);
        let a = analytic[k];
        let scale = a.abs().max(fd.abs());
        // Exactly-zero gradients (dead units) must also be zero numerically.
        let rel = if scale < 1e-9 { (a - fd).abs() } else { (a - fd).abs() / scale };
        worst = worst.max(rel);
        checked += 1;
    }
    assert!(worst < TOL, "{head:?}: worst relative error {worst:e}");
}

#[test]
fn tanh_head_matches_finite_differences() {
    check(Activation::Tanh, 1);
    check(Activation::Tanh, 2);
}

#[test]
fn linear_head_matches_finite_differences() {
    check(Activation::Linear, 3);
    check(Activation::Linear, 4);
}

#[test]
fn input_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let net = Mlp::new(&[5, 64, 64, 64, 64, 2], Activation::Relu, Activation::Tanh, &mut rng).unwrap();
    let x = Array2::from_shape_fn((3, 5), |_| rng.random_range(-1.0..1.0));
    let c = Array2::from_shape_fn((3, 2), |_| rng.random_range(-1.0..1.0));
    let (_, tape) = net.forward(x.view()).unwrap();
    let g = net.input_gradient(tape, c.view()).unwrap();
    for ((r, col), &a) in g.indexed_iter() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[[r, col]] += EPS;
        xm[[r, col]] -= EPS;
        let fd = (loss(&net, &xp, &c) - loss(&net, &xm, &c)) / (2.0 * EPS);
        let scale = a.abs().max(fd.abs()).max(1e-9);
        assert!((a - fd).abs() / scale < TOL, "({r},{col}): {a} vs {fd}");
    }
}
