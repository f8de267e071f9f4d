use goldilocks::harness::checks::random_square_network;
use goldilocks::interpret::{build_chain, forward_interpretable, from_input_coords, to_input_coords};
use goldilocks::linalg::Matrix;
use goldilocks::network::forward;
use goldilocks::rng::SplitMix64;
use goldilocks::Activation;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn formulations_agree_at_every_layer(
        seed in any::<u64>(),
        depth in 1usize..=5,
        width in 1usize..=6,
        act_idx in 0usize..4,
    ) {
        let mut rng = SplitMix64::new(seed);
        let net = random_square_network(&mut rng, depth, width, Activation::GOLDILOCKS[act_idx]).unwrap();
        let chain = build_chain(&net).unwrap();
        let x0 = Matrix::from_fn(5, width, |_, _| 2.0 * rng.normal());
        let direct = forward(&net, &x0).unwrap();
        let traj = forward_interpretable(&chain, &x0).unwrap();
        for n in 0..=depth {
            let ys = traj.state(n).unwrap();
            for r in 0..5 {
                let x = from_input_coords(&chain, ys.row(r), n).unwrap();
                for (a, b) in x.iter().zip(direct.states[n].row(r)) {
                    prop_assert!((a - b).abs() < 1e-8, "layer {} {} vs {}", n, a, b);
                }
                if n > 0 {
                    let back = to_input_coords(&chain, &x, n).unwrap();
                    prop_assert!(!back.lossy);
                    for (a, b) in back.coords.iter().zip(ys.row(r)) {
                        prop_assert!((a - b).abs() < 1e-9 * b.abs().max(1.0));
                    }
                }
            }
        }
    }
}
