mod support;

use prif_core::nn::{cosine_lr, Matrix, Mlp, MlpSpec};
use support::fd_oracle::{check_gradients, randomized_suite};

#[test]
fn three_layer_net_matches_finite_differences() {
    let spec = MlpSpec::new(5, 2, 3, 16);
    let mlp = Mlp::new(spec, 11).unwrap();
    let input = Matrix::from_rows(&[[0.1f32, -0.4, 0.7, 0.2, -0.9], [0.5, 0.3, -0.2, -0.6, 0.8]]);
    let rep = check_gradients(&mlp, &input, 3);
    assert!(rep.failures.is_empty(), "{:#?}", rep.failures);
    assert!(rep.checked > mlp.params().len() / 2);
}

#[test]
fn randomized_networks_match_finite_differences() {
    let rep = randomized_suite(100, 2024);
    assert!(
        rep.failures.is_empty(),
        "{} failures, first: {:?}",
        rep.failures.len(),
        rep.failures.first()
    );
    assert!(rep.checked > 10 * rep.skipped_kinks);
}

#[test]
fn schedule_endpoints() {
    assert_eq!(cosine_lr(0, 1000, 1e-4, 1e-7).unwrap(), 1e-4);
    assert_eq!(cosine_lr(1000, 1000, 1e-4, 1e-7).unwrap(), 1e-7);
}
