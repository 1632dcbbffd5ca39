mod common;

use proptest::prelude::*;
use swarm_cc::agent::td_target;
use swarm_cc::env::{decode_action, encode_action, Scheme, SchemeSpec};
use swarm_cc::lagrange::{pid_init, pid_update, PidGains};

fn pass(check: common::Check) {
    if let Err(e) = check {
        panic!("{e}");
    }
}

#[test]
fn equation_oracles() {
    pass(common::equation_oracles(1000));
}

#[test]
fn fading_moments() {
    pass(common::fading_statistics(200_000));
}

#[test]
fn phase1_rate_matches_closed_form() {
    pass(common::phase1_success_rate(20_000));
}

#[test]
fn reward_and_cost_telescope() {
    pass(common::ledger_identities(1000));
}

#[test]
fn gradients_match_finite_differences() {
    pass(common::gradient_check(20));
}

#[test]
fn attention_rows_are_stochastic() {
    pass(common::attention_rows(1000));
}

#[test]
fn pid_worked_example() {
    pass(common::pid_hand_trace());
}

#[test]
fn pid_projection_invariants() {
    pass(common::pid_projection(10_000));
}

#[test]
fn td_target_affine_in_lambda() {
    pass(common::td_algebra(1000));
}

fn scheme() -> impl Strategy<Value = Scheme> {
    prop_oneof![Just(Scheme::Unicast), Just(Scheme::Broadcast), Just(Scheme::Hybrid)]
}

proptest! {
    #[test]
    fn decode_is_a_bijection(scheme in scheme(), n in 1usize..12, agent_frac in 0.0f64..1.0) {
        let spec = SchemeSpec::new(scheme, n).unwrap();
        let agent = ((agent_frac * n as f64) as usize).min(n - 1);
        let mut seen = std::collections::HashSet::new();
        for a in 0..spec.action_count() {
            let mode = decode_action(agent, a, &spec).unwrap();
            prop_assert!(seen.insert(mode));
            prop_assert_eq!(encode_action(agent, mode, &spec).unwrap(), a);
        }
        prop_assert!(decode_action(agent, spec.action_count(), &spec).is_err());
    }

    #[test]
    fn pid_state_never_negative(
        costs in prop::collection::vec(0.0f64..50.0, 1..60),
        e_c in 0.0f64..10.0,
        kp in 0.0f64..2.0, ki in 0.0f64..1.0, kd in 0.0f64..2.0,
    ) {
        let mut s = pid_init(PidGains { kp, ki, kd }).unwrap();
        for c in costs {
            let l = pid_update(&mut s, c, e_c).unwrap();
            prop_assert!(l >= 0.0 && s.integral >= 0.0);
        }
    }

    #[test]
    fn pid_scales_linearly_with_gains(
        costs in prop::collection::vec(0.0f64..10.0, 1..30),
        e_c in 0.0f64..5.0,
        k in 0.1f64..10.0,
    ) {
        let g = PidGains::default();
        let mut a = pid_init(g).unwrap();
        let mut b = pid_init(PidGains { kp: k * g.kp, ki: k * g.ki, kd: k * g.kd }).unwrap();
        for c in costs {
            let la = pid_update(&mut a, c, e_c).unwrap();
            let lb = pid_update(&mut b, c, e_c).unwrap();
            prop_assert!((lb - k * la).abs() <= 1e-12 * (1.0 + lb.abs()));
        }
    }

    #[test]
    fn pid_stays_at_zero_under_budget(costs in prop::collection::vec(0.0f64..3.0, 1..40)) {
        let mut s = pid_init(PidGains::default()).unwrap();
        let mut prev = 0.0;
        for c in costs {
            let l = pid_update(&mut s, c, 3.0).unwrap();
            // Only a rising cost can lift lambda while under budget.
            if c <= prev {
                prop_assert_eq!(l, 0.0);
            }
            prev = c;
        }
    }

    #[test]
    fn td_target_terminal_ignores_future(r in 0.0f64..10.0, c in 0.0f64..5.0, q in -50.0f64..50.0, lambda in 0.0f64..5.0) {
        prop_assert_eq!(td_target(r, c, true, q, 0.98, lambda), r);
        let y = td_target(r, c, false, q, 0.98, lambda);
        prop_assert!((y - (r + 0.98 * q - lambda * c)).abs() <= 1e-12 * (1.0 + y.abs()));
    }
}
