#[path = "support/toy.rs"]
mod toy;

use ffsv_core::nn::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use toy::{dat_toy, gradcheck_net};

#[test]
fn reversal_layer_contract() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x: Vec<f64> = (0..64).map(|_| 1e3 * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect();
    assert_eq!(grl_forward(&x), x);
    for lambda in [0.0, 0.5, 1.0, 2.0] {
        let back = grl_backward(&x, lambda);
        for (b, u) in back.iter().zip(&x) {
            assert_eq!(*b, -lambda * u);
        }
    }
}

#[test]
fn micro_resnet_gradients() {
    let net = MicroNet::new(gradcheck_net()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let data: Vec<f64> = (0..6 * 8 * 6).map(|_| StandardNormal.sample(&mut rng)).collect();
    let x = Tensor4::from_vec(6, 1, 8, 6, data).unwrap();
    let r = gradient_check(&net, &x, &[0, 1, 2, 0, 1, 2], Some(&[0, 1, 0, 1, 1, 0]), 1.0, 520, 1e-5, 3).unwrap();
    assert!(r.checked >= 500, "{r:?}");
    assert!(r.max_relative_error < 1e-4, "{r:?}");
}

#[test]
fn adversarial_training_hides_the_domain() {
    let out = dat_toy();
    assert!(out.plain_domain >= 0.9, "{out:?}");
    assert!(out.dat_domain <= 0.65, "{out:?}");
    assert!((out.plain_class - out.dat_class).abs() <= 0.05, "{out:?}");
    assert!(out.plain_eer.is_finite() && out.dat_eer.is_finite());
}
