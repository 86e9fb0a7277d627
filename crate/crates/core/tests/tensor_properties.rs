//! Property tests for the rearrangement operators.

use boa_core::tensor::{
    concat_channels, group_average, pixel_shuffle, pixel_unshuffle, transpose_spatial, Shape,
    SpatialTensor,
};
use proptest::prelude::*;

fn arbitrary_tensor(
    max_batch: usize,
    max_channels: usize,
    max_rows: usize,
    max_cols: usize,
) -> impl Strategy<Value = SpatialTensor> {
    (
        1..=max_batch,
        1..=max_channels,
        1..=max_rows,
        1..=max_cols,
    )
        .prop_flat_map(|(b, c, m, n)| {
            let shape = Shape::new(b, c, m, n);
            proptest::collection::vec(-1.0f64..1.0, shape.len())
                .prop_map(move |data| SpatialTensor::from_vec(shape, data).unwrap())
        })
}

/// Shapes with even spatial dims, suitable for factor-2 unshuffling.
fn unshuffleable_tensor() -> impl Strategy<Value = SpatialTensor> {
    (1..=4usize, 1..=8usize, 1..=8usize, 1..=8usize).prop_flat_map(|(b, c, m, n)| {
        let shape = Shape::new(b, c, 2 * m, 2 * n);
        proptest::collection::vec(-1.0f64..1.0, shape.len())
            .prop_map(move |data| SpatialTensor::from_vec(shape, data).unwrap())
    })
}

fn sorted_values(x: &SpatialTensor) -> Vec<u64> {
    // bit patterns give a total order without NaN concerns
    let mut v: Vec<u64> = x.data().iter().map(|f| f.to_bits()).collect();
    v.sort_unstable();
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn shuffle_and_unshuffle_are_mutually_inverse(x in unshuffleable_tensor()) {
        let down = pixel_unshuffle(&x, 2).unwrap();
        prop_assert_eq!(pixel_shuffle(&down, 2).unwrap(), x.clone());
        let up = pixel_shuffle(&down, 2).unwrap();
        prop_assert_eq!(pixel_unshuffle(&up, 2).unwrap(), down);
    }

    #[test]
    fn rearrangements_preserve_the_multiset_of_values(x in unshuffleable_tensor()) {
        let expected = sorted_values(&x);
        prop_assert_eq!(sorted_values(&pixel_unshuffle(&x, 2).unwrap()), expected.clone());
        prop_assert_eq!(sorted_values(&transpose_spatial(&x)), expected.clone());
        let quadrupled = concat_channels(&x, 4).unwrap();
        let mut four_copies = expected.clone();
        four_copies.extend(expected.iter().copied());
        four_copies.extend(expected.iter().copied());
        four_copies.extend(expected.iter().copied());
        four_copies.sort_unstable();
        prop_assert_eq!(sorted_values(&quadrupled), four_copies);
    }

    #[test]
    fn group_average_is_idempotent(x in arbitrary_tensor(2, 3, 6, 6)) {
        let grouped = concat_channels(&x, 4).unwrap();
        let once = group_average(&grouped, 4).unwrap();
        let twice = group_average(&once, 4).unwrap();
        for (a, b) in once.data().iter().zip(twice.data()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn group_average_matches_per_pixel_scalar_oracle() {
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    let mut rng = StdRng::seed_from_u64(123);
    let shape = Shape::new(2, 8, 5, 4);
    let x = SpatialTensor::from_fn(shape, |_, _, _, _| rng.gen_range(-2.0..2.0));
    let averaged = group_average(&x, 4).unwrap();
    for b in 0..shape.batch {
        for g in 0..2 {
            for m in 0..shape.rows {
                for n in 0..shape.cols {
                    let mut acc = 0.0;
                    for i in 0..4 {
                        acc += x.get(b, g * 4 + i, m, n);
                    }
                    let mean = acc / 4.0;
                    for i in 0..4 {
                        let d = (averaged.get(b, g * 4 + i, m, n) - mean).abs();
                        assert!(d < 1e-12);
                    }
                }
            }
        }
    }
}
