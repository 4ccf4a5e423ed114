mod oracles;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use saa_core::backends::{FeatureExtractor, GridMeanFeatures};
use saa_core::saliency::{saliency_map, upsample_saliency};
use saa_core::{FeatureGrid, ImageRecord};

fn random_grid(rng: &mut ChaCha8Rng) -> (usize, usize, usize, Vec<f64>) {
    loop {
        let h = rng.gen_range(1..=8);
        let w = rng.gen_range(1..=8);
        if h * w < 2 {
            continue;
        }
        let d = rng.gen_range(1..=16);
        // Coarse values make exact ties common.
        let coarse = rng.gen_bool(0.3);
        let data = (0..h * w * d)
            .map(|_| {
                if coarse {
                    rng.gen_range(0..3) as f64
                } else {
                    rng.gen_range(-1.0..1.0)
                }
            })
            .collect();
        return (h, w, d, data);
    }
}

fn rows(d: usize, data: &[f64]) -> Vec<Vec<f64>> {
    data.chunks(d).map(<[f64]>::to_vec).collect()
}

#[test]
fn matches_pairwise_oracle_on_random_grids() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for case in 0..200 {
        let (h, w, d, data) = random_grid(&mut rng);
        let n = [1, 3, 400][case % 3];
        let grid = FeatureGrid::from_raw(h, w, d, data.clone()).unwrap();
        let got = saliency_map(&grid, n).unwrap();
        let want = oracles::saliency(&rows(d, &data), n);
        for (a, b) in got.values().iter().zip(&want) {
            worst = worst.max((a - b).abs());
        }
    }
    assert!(worst <= 1e-9, "max abs error {worst}");
}

#[test]
fn single_cell_is_degenerate() {
    let grid = FeatureGrid::from_raw(1, 1, 2, vec![1.0, 0.0]).unwrap();
    assert!(saliency_map(&grid, 3).is_err());
}

fn grid_strategy() -> impl Strategy<Value = (usize, usize, usize, Vec<f64>)> {
    (1usize..=5, 2usize..=5, 1usize..=6).prop_flat_map(|(h, w, d)| {
        (Just(h), Just(w), Just(d), prop::collection::vec(-1.0f64..1.0, h * w * d))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn invariant_to_per_cell_scaling(
        (h, w, d, data) in grid_strategy(),
        scales in prop::collection::vec(0.01f64..100.0, 25),
        n in 1usize..30,
    ) {
        let scaled: Vec<f64> = data
            .chunks(d)
            .enumerate()
            .flat_map(|(i, c)| {
                let k = scales[i % scales.len()];
                c.iter().map(move |x| x * k)
            })
            .collect();
        let a = saliency_map(&FeatureGrid::from_raw(h, w, d, data).unwrap(), n).unwrap();
        let b = saliency_map(&FeatureGrid::from_raw(h, w, d, scaled).unwrap(), n).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn equivariant_under_cell_permutation((h, w, d, data) in grid_strategy(), seed in any::<u64>(), n in 1usize..30) {
        let cells = h * w;
        let mut perm: Vec<usize> = (0..cells).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..cells).rev() {
            perm.swap(i, rng.gen_range(0..=i));
        }
        let permuted: Vec<f64> = perm.iter().flat_map(|&p| data[p * d..(p + 1) * d].to_vec()).collect();
        let a = saliency_map(&FeatureGrid::from_raw(h, w, d, data).unwrap(), n).unwrap();
        let b = saliency_map(&FeatureGrid::from_raw(h, w, d, permuted).unwrap(), n).unwrap();
        for (i, &p) in perm.iter().enumerate() {
            prop_assert!((b.values()[i] - a.values()[p]).abs() < 1e-9);
        }
    }

    #[test]
    fn nondecreasing_in_neighbour_count((h, w, d, data) in grid_strategy(), n in 1usize..30) {
        let grid = FeatureGrid::from_raw(h, w, d, data).unwrap();
        let a = saliency_map(&grid, n).unwrap();
        let b = saliency_map(&grid, n + 1).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            prop_assert!(*y >= x - 1e-12);
            prop_assert!((0.0..=2.0).contains(x));
        }
    }

    #[test]
    fn upsampling_stays_within_grid_range((h, w, d, data) in grid_strategy(), oh in 1usize..40, ow in 1usize..40) {
        let s = saliency_map(&FeatureGrid::from_raw(h, w, d, data).unwrap(), 400).unwrap();
        let up = upsample_saliency(&s, oh, ow).unwrap();
        let lo = s.values().iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = s.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for v in up.values() {
            prop_assert!(*v >= lo - 1e-12 && *v <= hi + 1e-12);
        }
    }
}

#[test]
fn upsampling_hits_grid_values_at_corners() {
    let grid = FeatureGrid::from_raw(2, 3, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.2, 0.3, 1.0, 1.0, 0.5]).unwrap();
    let s = saliency_map(&grid, 2).unwrap();
    let up = upsample_saliency(&s, 11, 21).unwrap();
    assert!((up.get(0, 0) - s.get(0, 0)).abs() < 1e-15);
    assert!((up.get(20, 0) - s.get(2, 0)).abs() < 1e-15);
    assert!((up.get(10, 10) - s.get(1, 1)).abs() < 1e-15);
}

#[test]
fn red_patch_is_the_most_salient_cell() {
    let (size, grid) = (400usize, 20usize);
    let cell = size / grid;
    let (px, py) = (7usize, 12usize);
    let mut pixels = Vec::with_capacity(size * size * 3);
    for y in 0..size {
        for x in 0..size {
            let red = x / cell == px && y / cell == py;
            pixels.extend_from_slice(if red { &[0.9, 0.05, 0.05] } else { &[0.5, 0.5, 0.5] });
        }
    }
    let image = ImageRecord::new("patch", "test", size, size, pixels).unwrap();
    let extractor = GridMeanFeatures::default();
    assert_eq!(extractor.grid_shape(), Some((grid, grid, 3)));
    let features = extractor.extract(&image).unwrap();
    let s = saliency_map(&features, 400).unwrap();
    let (argmax, _) = s
        .values()
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap();
    assert_eq!(argmax, py * grid + px);
    let others = s.values().iter().enumerate().filter(|(i, _)| *i != argmax);
    assert!(others.clone().all(|(_, v)| *v < 1e-3));
}

proptest! {
    #[test]
    fn prompts_grow_with_saliency_inside_the_mask(
        values in prop::collection::vec(0.0f64..1.5, 16),
        bits in prop::collection::vec(any::<bool>(), 16),
        bump in 0.0f64..0.5,
        at in 0usize..16,
    ) {
        use saa_core::saliency::saliency_prompts;
        use saa_core::{Mask, RegionCandidate, SaliencyMap, StageTag};
        let mut bits = bits;
        bits[at] = true;
        let cand = RegionCandidate::new(Mask::from_bits(4, 4, bits).unwrap(), 0.5, "x", StageTag::Filtered).unwrap();
        let base = SaliencyMap::from_values(4, 4, values.clone()).unwrap();
        let mut raised = values;
        raised[at] += bump;
        let raised = SaliencyMap::from_values(4, 4, raised).unwrap();
        let a = saliency_prompts(&base, std::slice::from_ref(&cand)).unwrap()[0];
        let b = saliency_prompts(&raised, std::slice::from_ref(&cand)).unwrap()[0];
        prop_assert!(b >= a);
        prop_assert!((1.0..=2f64.exp()).contains(&a));
    }
}
