use pfrecon_core::{fft2c, forward, make_pf_mask, Complex64, ComplexImage, Pff, RepetitionSet};
use pfrecon_net::checkpoint;
use pfrecon_net::loss::{loss, magnitude_average, SobelProxy};
use pfrecon_net::{Aggregation, Model, ModelConfig, Strategy as Unrolling};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small(strategy: Unrolling, aggregation: Aggregation) -> ModelConfig {
    ModelConfig {
        strategy,
        iterations: 2,
        depth: 2,
        width: 4,
        aggregation,
        ..ModelConfig::drpf()
    }
}

fn strategy() -> impl Strategy<Value = Unrolling> {
    prop_oneof![Just(Unrolling::Recurrent), Just(Unrolling::WeightShared), Just(Unrolling::Cascaded)]
}

fn aggregation() -> impl Strategy<Value = Aggregation> {
    prop_oneof![Just(Aggregation::None), Just(Aggregation::Mean), Just(Aggregation::Max)]
}

fn measurements(b: usize, h: usize, w: usize, pff: Pff, rng: &mut ChaCha8Rng) -> RepetitionSet<pfrecon_core::KSpaceData> {
    let mask = make_pf_mask(w, pff).unwrap();
    let items = (0..b)
        .map(|_| {
            let x = ComplexImage::from_fn(h, w, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).unwrap();
            forward(&x, &mask).unwrap()
        })
        .collect();
    RepetitionSet::new(items).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn outputs_are_permutation_equivariant(s in strategy(), a in aggregation(), b in 1usize..5, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = Model::<f32>::init(small(s, a), &mut rng).unwrap();
        let y = measurements(b, 8, 8, Pff::FIVE_EIGHTHS, &mut rng);
        let mut perm: Vec<usize> = (0..b).collect();
        perm.shuffle(&mut rng);
        let out = model.reconstruct(&y).unwrap();
        let out_p = model.reconstruct(&y.permuted(&perm)).unwrap();
        for (i, &p) in perm.iter().enumerate() {
            prop_assert_eq!(&out_p.items()[i], &out.items()[p]);
        }
    }

    #[test]
    fn outputs_keep_acquired_lines(s in strategy(), a in aggregation(), b in 1usize..4, n in 9u32..=15, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = Model::<f32>::init(ModelConfig { pff: Pff::new(n, 16).unwrap(), ..small(s, a) }, &mut rng).unwrap();
        let y = measurements(b, 8, 16, Pff::new(n, 16).unwrap(), &mut rng);
        let out = model.reconstruct(&y).unwrap();
        for (x, yk) in out.iter().zip(y.iter()) {
            let k = fft2c(x).unwrap();
            for r in 0..8 {
                for c in 0..16 {
                    if yk.mask().is_acquired(c) {
                        let m = yk.get(r, c);
                        prop_assert!((k.get(r, c) - m).norm() <= 1e-6 * m.norm().max(1e-3));
                    }
                }
            }
        }
    }

    #[test]
    fn checkpoints_round_trip(s in strategy(), a in aggregation(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = Model::<f32>::init(small(s, a), &mut rng).unwrap();
        let back: Model<f32> = checkpoint::decode(&checkpoint::encode(&model)).unwrap();
        prop_assert_eq!(back, model);
    }

    #[test]
    fn loss_ignores_phase_and_order(theta in -3.2f64..3.2, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 16 * 16;
        let reps: Vec<Vec<Complex64>> = (0..3)
            .map(|_| (0..n).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect())
            .collect();
        let gt: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let base = loss(&magnitude_average(&reps), &gt, 16, 16, 0.5, &SobelProxy::default()).unwrap();
        let rot = Complex64::from_polar(1.0, theta);
        let rotated: Vec<Vec<Complex64>> = reps.iter().map(|r| r.iter().map(|z| z * rot).collect()).collect();
        let l = loss(&magnitude_average(&rotated), &gt, 16, 16, 0.5, &SobelProxy::default()).unwrap();
        prop_assert!((l.total - base.total).abs() <= 1e-10);
        let reversed: Vec<Vec<Complex64>> = reps.iter().rev().cloned().collect();
        let l = loss(&magnitude_average(&reversed), &gt, 16, 16, 0.5, &SobelProxy::default()).unwrap();
        prop_assert!((l.total - base.total).abs() <= 1e-10);
    }
}

#[test]
fn any_set_size_runs_without_new_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let model = Model::<f32>::init(small(Unrolling::Recurrent, Aggregation::Max), &mut rng).unwrap();
    let n = model.count_params();
    for b in [1, 2, 5, 9] {
        let y = measurements(b, 8, 8, Pff::FIVE_EIGHTHS, &mut rng);
        assert_eq!(model.reconstruct(&y).unwrap().len(), b);
    }
    assert_eq!(model.count_params(), n);
}
