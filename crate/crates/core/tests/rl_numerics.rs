mod common;

use lobsim_core::rl::policy::{Architecture, PolicyParams};
use lobsim_core::rl::ppo::{clipped_surrogate, PpoConfig};
use lobsim_core::rl::sil::{sil_loss_and_grad, sil_update, SilBuffer, SilEntry};
use lobsim_core::rl::ObsNorm;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn ppo_gradients_match_finite_differences() {
    for seed in 0..4 {
        let e = common::ppo_gradient_error(seed);
        assert!(e < 1e-4, "seed {seed}: relative error {e}");
    }
}

#[test]
fn sil_gradients_match_finite_differences() {
    for seed in 0..4 {
        let e = common::sil_gradient_error(seed);
        assert!(e < 1e-4, "seed {seed}: relative error {e}");
    }
}

#[test]
fn surrogate_identity_and_clip() {
    for a in [-3.0, -0.5, 0.0, 0.25, 4.0] {
        assert_eq!(clipped_surrogate(1.0, a, 0.2), a);
    }
    assert_eq!(clipped_surrogate(1.5, 1.0, 0.2), 1.2);
}

#[test]
fn sil_single_entry_weights() {
    // zero network: V = 0, so R = 2 gives (R - V)+ = 2
    let pol = PolicyParams::zeros(Architecture::new(3, vec![4]), ObsNorm::default(), false);
    let cfg = PpoConfig { sil_weight: 1.0, sil_value_coef: 1.0, ..Default::default() };
    let e = SilEntry { input: vec![0.1, 0.2, 0.3], mask: [true; 5], intervene: true, action: 0, ret: 2.0, value_at_insert: -1.0 };
    let (loss, _, advs) = sil_loss_and_grad(&pol, &pol.params, &[&e], &cfg);
    assert_eq!(advs, vec![2.0]);
    let logp = pol.evaluate(&e.input, &e.mask).unwrap().log_prob(true, 0);
    // policy term 2 * (-log pi), value term 1/2 * 2^2 = 2
    assert!((loss - (-2.0 * logp + 2.0)).abs() < 1e-12);
}

#[test]
fn sil_entries_below_value_have_no_gradient() {
    let pol = common::random_policy(3);
    let cfg = PpoConfig::default();
    let v = pol.evaluate(&[0.0; 8], &[true; 5]).unwrap().value;
    let e = SilEntry { input: vec![0.0; 8], mask: [true; 5], intervene: true, action: 1, ret: v - 0.5, value_at_insert: v - 1.0 };
    let (loss, grad, _) = sil_loss_and_grad(&pol, &pol.params, &[&e], &cfg);
    assert_eq!(loss, 0.0);
    assert!(grad.iter().all(|g| *g == 0.0));
}

#[test]
fn sil_admission_invariant_randomised() {
    let (accepted, violations, max_len) = common::sil_admission_trial(10_000, 500, 42);
    assert!(accepted > 500);
    assert_eq!(violations, 0);
    assert!(max_len <= 500);
}

#[test]
fn empty_sil_buffer_is_noop() {
    let mut pol = common::random_policy(1);
    let before = pol.params.clone();
    let mut adam = common::fresh_adam(&pol);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let s = sil_update(&mut pol, &mut adam, &SilBuffer::new(10), &PpoConfig::default(), &mut rng).unwrap();
    assert_eq!(s.batches, 0);
    assert_eq!(pol.params, before);
}
