use goldilocks::odeflow::{
    adjoint_backward, flow_forward, solve_activation, FlowConfig, PiecewiseFlow,
};
use goldilocks::Activation;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn newton_converges_for_finite_targets(
        act_idx in 0usize..4,
        target in prop_oneof![-10.0f64..10.0, -1e6f64..1e6, -1e-3f64..1e-3],
    ) {
        let act = Activation::GOLDILOCKS[act_idx];
        let u = solve_activation(act, target, 1e-12, 100).unwrap();
        prop_assert!((act.apply(u) - target).abs() <= 1e-12 * target.abs().max(1.0));
    }
}

/// Discrete backprop through `A_{k+1} = A_k + h g(A_k)` tends to the adjoint
/// solution as the number of layers `L / h` grows, with first-order error.
#[test]
fn discrete_backprop_approaches_adjoint() {
    let act = Activation::LORENTZ_UNBIASED;
    let span = 2.0;
    let flow = PiecewiseFlow::scalar(1.0, 0.0, act).unwrap();
    let cfg = FlowConfig::rk4(1e-3, (0.0, span));
    let traj = flow_forward(&flow, &[0.7], &cfg).unwrap();
    let continuous = adjoint_backward(&flow, &traj, &[1.0], &cfg).unwrap().initial()[0];

    let discrete = |layers: usize| {
        let h = span / layers as f64;
        let mut a = 0.7;
        let mut sens = 1.0;
        for _ in 0..layers {
            let g = act.local_nonlinearity(a).unwrap();
            sens *= 1.0 + h * g.d1;
            a += h * g.value;
        }
        sens
    };
    let errors: Vec<f64> = [8, 16, 32, 64].iter().map(|&n| (discrete(n) - continuous).abs()).collect();
    for w in errors.windows(2) {
        let ratio = w[0] / w[1];
        assert!((1.7..2.3).contains(&ratio), "{errors:?}");
    }
    assert!(errors[3] < 1e-2);
}
