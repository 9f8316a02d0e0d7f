use pfrecon_core::dataset::{read_dataset, write_dataset, Dataset};
use pfrecon_core::{
    conjugate_symmetry_oracle, data_consistency, fft2c, forward, ifft2c, make_pf_mask, Complex64, ComplexImage, Pff, RepetitionSet,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_image(h: usize, w: usize, seed: u64) -> ComplexImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ComplexImage::from_fn(h, w, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).unwrap()
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn diff_norm(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

fn pff_above_half() -> impl Strategy<Value = Pff> {
    (9u32..=16).prop_map(|n| Pff::new(n, 16).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fft_is_unitary_and_inverse(h in 8usize..=96, w in 8usize..=96, seed in any::<u64>()) {
        let x = random_image(h, w, seed);
        let k = fft2c(&x).unwrap();
        prop_assert!((norm(k.samples()) - norm(x.data())).abs() <= 1e-10 * norm(x.data()));
        let back = ifft2c(&k).unwrap();
        prop_assert!(diff_norm(back.data(), x.data()) <= 1e-10 * norm(x.data()));
    }

    #[test]
    fn hard_dc_is_a_projection(w in 8usize..=48, pff in pff_above_half(), seed in any::<u64>()) {
        let mask = make_pf_mask(w, pff).unwrap();
        let y = forward(&random_image(16, w, seed), &mask).unwrap();
        let a = random_image(16, w, seed ^ 1);
        let b = random_image(16, w, seed ^ 2);
        let pa = data_consistency(&a, &y, 0.0).unwrap();
        let pb = data_consistency(&b, &y, 0.0).unwrap();
        let ppa = data_consistency(&pa, &y, 0.0).unwrap();
        prop_assert!(diff_norm(ppa.data(), pa.data()) <= 1e-12 * norm(pa.data()));
        prop_assert!(diff_norm(pa.data(), pb.data()) <= diff_norm(a.data(), b.data()) * (1.0 + 1e-12));
        // acquired lines equal the measurements
        let k = fft2c(&pa).unwrap();
        for r in 0..16 {
            for c in 0..w {
                if mask.is_acquired(c) {
                    prop_assert!((k.get(r, c) - y.get(r, c)).norm() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn real_images_are_determined_by_pf_data(h in 8usize..=40, w in 8usize..=40, pff in pff_above_half(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = ComplexImage::from_fn(h, w, |_, _| Complex64::new(rng.random_range(0.0..1.0), 0.0)).unwrap();
        let y = forward(&x, &make_pf_mask(w, pff).unwrap()).unwrap();
        let rec = conjugate_symmetry_oracle(&y).unwrap();
        let err = rec.data().iter().zip(x.data()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        prop_assert!(err <= 1e-9, "max error {err}");
    }

    #[test]
    fn dataset_file_round_trip(slices in 1usize..4, reps in 1usize..4, seed in any::<u64>()) {
        let sets: Vec<_> = (0..slices)
            .map(|s| {
                let items = (0..reps).map(|b| random_image(8, 12, seed ^ (s * 31 + b) as u64)).collect();
                RepetitionSet::new(items).unwrap()
            })
            .collect();
        let ds = Dataset::from_image_sets(&sets).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.pfr");
        write_dataset(&ds, &p).unwrap();
        let back = read_dataset(&p).unwrap();
        prop_assert_eq!(back.header, ds.header);
        // the stored values are exact, so a second round trip is bit-identical
        let q = dir.path().join("e.pfr");
        write_dataset(&back, &q).unwrap();
        prop_assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&q).unwrap());
        prop_assert_eq!(read_dataset(&q).unwrap(), back.clone());
        let images = back.image_sets().unwrap();
        prop_assert_eq!(images.len(), slices);
        // stored as 32-bit floats
        for (a, b) in images.iter().zip(&sets) {
            for (x, y) in a.iter().zip(b.iter()) {
                prop_assert!(diff_norm(x.data(), y.data()) <= 1e-6 * norm(y.data()));
            }
        }
    }
}

#[test]
fn kspace_sets_keep_their_mask() {
    let mask = make_pf_mask(16, Pff::SIX_EIGHTHS).unwrap();
    let sets: Vec<_> = (0..2)
        .map(|s| RepetitionSet::new(vec![forward(&random_image(8, 16, s), &mask).unwrap()]).unwrap())
        .collect();
    let ds = Dataset::from_kspace_sets(&sets).unwrap();
    assert_eq!(ds.header.pff, Pff::SIX_EIGHTHS);
    assert!(ds.image_sets().is_err());
    let back = ds.kspace_sets().unwrap();
    assert_eq!(back[0].items()[0].mask(), &mask);
    let other = RepetitionSet::new(vec![forward(&random_image(8, 16, 9), &make_pf_mask(16, Pff::FIVE_EIGHTHS).unwrap()).unwrap()]).unwrap();
    assert!(Dataset::from_kspace_sets(&[sets[0].clone(), other]).is_err());
}
