//! Property tests for the crate-wide invariants.

use proptest::prelude::*;

use cdae_core::autodiff::{Tape, Tensor};
use cdae_core::data::{batches, dataset_from_idx, denormalize, normalize, Split};
use cdae_core::metrics::{ssim, SsimParams};
use cdae_core::nn::{forward_value, init_params, make_decoder, make_discriminator};

fn idx_bytes(count: usize, fill: impl Fn(usize) -> u8) -> Vec<u8> {
    let mut bytes = vec![0, 0, 0x08, 3];
    bytes.extend_from_slice(&(count as u32).to_be_bytes());
    bytes.extend_from_slice(&28u32.to_be_bytes());
    bytes.extend_from_slice(&28u32.to_be_bytes());
    bytes.extend((0..count * 784).map(fill));
    bytes
}

proptest! {
    /// Denormalization lands in byte range for any real input and
    /// inverts normalization on every byte.
    #[test]
    fn normalization_clamps_and_inverts(v in -10.0f64..10.0, byte in 0u8..=255) {
        let _ = denormalize::<f64>(v); // must not panic, output is u8 by type
        prop_assert_eq!(denormalize(normalize::<f64>(byte)), byte);
    }

    /// Every batch value lies in [-1, 1]; a full pass visits each
    /// index exactly once (training mode drops only the tail).
    #[test]
    fn batches_cover_once_within_range(
        count in 1usize..120,
        batch_size in 1usize..40,
        seed in 0u64..1000,
        shuffle in proptest::bool::ANY,
    ) {
        let ds = dataset_from_idx("toy", Split::Train, &idx_bytes(count, |i| (i % 251) as u8), None).unwrap();
        let mut seen = vec![0usize; count];
        for b in batches::<f64>(&ds, batch_size, seed, shuffle, false).unwrap() {
            prop_assert!(b.data.data().iter().all(|v| (-1.0..=1.0).contains(v)));
            for i in b.indices { seen[i] += 1; }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));

        let dropped: usize = batches::<f64>(&ds, batch_size, seed, shuffle, true)
            .unwrap()
            .map(|b| b.indices.len())
            .sum();
        prop_assert_eq!(dropped, (count / batch_size) * batch_size);
    }

    /// SSIM is symmetric, 1 on identical images, and within [-1, 1].
    #[test]
    fn ssim_symmetry_and_range(seed in 0u64..500) {
        let mut rng = cdae_core::rng::SeededRng::new(seed);
        let a: Vec<u8> = (0..784).map(|_| (rng.next_u64() % 256) as u8).collect();
        let b: Vec<u8> = (0..784).map(|_| (rng.next_u64() % 256) as u8).collect();
        let p = SsimParams::default();
        let ab = ssim(&a, &b, 28, 28, &p).unwrap();
        let ba = ssim(&b, &a, 28, 28, &p).unwrap();
        prop_assert_eq!(ab.to_bits(), ba.to_bits());
        prop_assert!((-1.0..=1.0).contains(&ab));
        prop_assert_eq!(ssim(&a, &a, 28, 28, &p).unwrap(), 1.0);
    }

    /// Forward passes only ever produce (batch, fan_out) shapes, with
    /// decoder outputs inside (-1,1) and discriminator scores inside
    /// (0,1).
    #[test]
    fn forward_shape_chaining_and_ranges(
        batch in 1usize..6,
        input in 1usize..12,
        output in 1usize..12,
        seed in 0u64..100,
    ) {
        let dec: cdae_core::nn::NetworkState<f64> =
            init_params(&make_decoder(input, output).unwrap(), seed).unwrap();
        let x = Tensor::matrix(batch, input, vec![0.3; batch * input]).unwrap();
        let y = forward_value(&dec, &x).unwrap();
        prop_assert_eq!(y.shape(), &[batch, output]);
        prop_assert!(y.data().iter().all(|v| (-1.0..1.0).contains(v)));

        let dc: cdae_core::nn::NetworkState<f64> =
            init_params(&make_discriminator(input).unwrap(), seed).unwrap();
        let score = forward_value(&dc, &x).unwrap();
        prop_assert_eq!(score.shape(), &[batch, 1]);
        prop_assert!(score.data().iter().all(|v| (0.0..1.0).contains(v)));
    }

    /// Reconstruction costs are non-negative and zero exactly on
    /// identical inputs.
    #[test]
    fn sq_l2_nonnegative(vals in proptest::collection::vec(-2.0f64..2.0, 8)) {
        let mut tape = Tape::new();
        let a = tape.leaf(&Tensor::matrix(2, 4, vals.clone()).unwrap());
        let b = tape.leaf(&Tensor::matrix(2, 4, vals.iter().map(|v| v * 0.5).collect()).unwrap());
        prop_assert!(tape.sq_l2(&a, &b).unwrap().item() >= 0.0);
        prop_assert_eq!(tape.sq_l2(&a, &a).unwrap().item(), 0.0);
    }
}
