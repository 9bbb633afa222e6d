//! Gradient checks: every layer kind and every loss, analytic backward vs
//! central finite differences of an independent f64 reference forward pass.

#[path = "common/gradcheck.rs"]
mod gradcheck;

use gradcheck::{cases, run_case, REL_TOL};

use openrf_core::nn::{loss_grad, LayerSpec, LossKind, Network, Params, Tensor};

#[test]
fn every_layer_and_loss_matches_finite_differences() {
    for case in cases() {
        let max_rel = run_case(&case);
        println!("gradcheck {:<26} max rel err {:.2e}", case.name, max_rel);
        assert!(
            max_rel < REL_TOL,
            "{}: max relative error {max_rel:.3e} >= {REL_TOL}",
            case.name
        );
    }
}

#[test]
fn constant_loss_gives_zero_gradients() {
    // mse with target == prediction: every gradient must vanish
    let net = Network::new(
        &[5],
        vec![LayerSpec::Dense { units: 3 }, LayerSpec::Sigmoid],
    )
    .unwrap();
    let params = net.init_params(7);
    let input = Tensor::from_vec(&[2, 5], (0..10).map(|i| (i as f32 * 0.17).sin()).collect());
    let cache = net.forward_cached(&params, &input).unwrap();
    let out = cache.output().clone();
    let (value, grad) = loss_grad(LossKind::Mse, &out, &out).unwrap();
    assert_eq!(value, 0.0);
    let (pgrads, igrad) = net.backward(&params, &cache, &grad);
    assert!(pgrads.iter().all(|&g| g == 0.0));
    assert!(igrad.data().iter().all(|&g| g == 0.0));
}

#[test]
fn parameters_unchanged_by_forward_and_backward() {
    let net = Network::new(
        &[4, 2, 1],
        vec![
            LayerSpec::Conv2D { filters: 2, kernel: (3, 2), stride: 1 },
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 2 },
        ],
    )
    .unwrap();
    let params = net.init_params(5);
    let snapshot = Params::from_vec(params.as_slice().to_vec());
    let input = Tensor::from_vec(&[1, 4, 2, 1], vec![0.5; 8]);
    let cache = net.forward_cached(&params, &input).unwrap();
    let g = Tensor::from_vec(&[1, 2], vec![1.0, -1.0]);
    let _ = net.backward(&params, &cache, &g);
    assert_eq!(params, snapshot);
}
