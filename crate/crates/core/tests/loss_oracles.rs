mod common;

use common::bridge::{gradient_error, value_errors};
use common::{random_distances, random_instance, PARTS};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tsproto::losses::{geodesic_mixup, tau_matrix, LossConfig};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn losses_match_scalar_oracles(seed in any::<u64>(), b in 2usize..=4, g in 1usize..=3, j in 2usize..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_instance(&mut rng, b, g, j, 0.1);
        for (name, err) in value_errors(&x, &LossConfig::default()) {
            prop_assert!(err <= 1e-9, "{name}: {err}");
        }
    }

    #[test]
    fn temperatures_match_oracle(seed in any::<u64>(), g in 1usize..=6, tau0 in 0.01f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_distances(&mut rng, g);
        let expect = common::tau_matrix(&d, tau0);
        let flat: Vec<f64> = d.concat();
        let got = tau_matrix(&ndarray::Array2::from_shape_vec((g, g), flat).unwrap(), tau0).unwrap();
        for r in 0..g {
            prop_assert_eq!(got[[r, r]], tau0);
            for c in 0..g {
                prop_assert!((got[[r, c]] - expect[r][c]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn mixup_agrees_with_rotation_form(seed in any::<u64>(), j in 2usize..=16, lambda in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (u, v) = (common::unit(&mut rng, j), common::unit(&mut rng, j));
        prop_assume!(common::dot(&u, &v) > -0.999);
        let m = geodesic_mixup(&u, &v, lambda).unwrap();
        let o = common::slerp(&u, &v, lambda);
        prop_assert!((common::norm(&m) - 1.0).abs() <= 1e-9);
        for (a, b) in m.iter().zip(&o) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }
}

#[test]
fn gradients_match_finite_differences() {
    let cfg = LossConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in 0..5 {
        let x = random_instance(&mut rng, 2 + n % 3, 1 + n % 3, 3 + n, cfg.tau0);
        for part in PARTS {
            let err = gradient_error(&x, part, &cfg, 1e-5, 1e-4);
            assert!(err <= 1e-4, "instance {n}, {part:?}: {err}");
        }
    }
}

#[test]
fn detached_mix_blocks_gradient_through_negatives() {
    use candle_core::Var;
    use common::bridge::{flat, t2};
    use tsproto::losses::mixup_si_loss_with;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random_instance(&mut rng, 3, 1, 4, 0.1);
    let grad = |detach: bool| {
        let u = Var::from_tensor(&t2(&x.u)).unwrap();
        let s = t2(&x.s);
        let l =
            candle_core::Tensor::from_vec(x.lambdas.clone(), 3, &candle_core::Device::Cpu).unwrap();
        let loss = mixup_si_loss_with(&u, &s, &l, 0.1, detach).unwrap();
        flat(loss.backward().unwrap().get(u.as_tensor()).unwrap())
    };
    let (full, detached) = (grad(false), grad(true));
    assert!(full
        .iter()
        .zip(&detached)
        .any(|(a, b)| (a - b).abs() > 1e-6));
}
