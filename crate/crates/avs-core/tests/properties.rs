//! Property tests over the numeric core.

use avs_core::dataio::make_triples;
use avs_core::metrics::compute_metrics;
use avs_core::ops::{conv2d, softmax};
use avs_core::scaling::median_scale;
use avs_core::tensor::Tensor;
use proptest::prelude::*;

fn finite_vec(n: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(lo..hi, n)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn softmax_sums_to_one_and_shift_invariant(
        data in finite_vec(12, -30.0, 30.0),
        shift in -50.0f64..50.0,
    ) {
        let t = Tensor::from_vec(&[3, 4], data).unwrap();
        let s = softmax(&t, 1).unwrap();
        for r in 0..3 {
            let sum: f64 = (0..4).map(|c| s.at2(r, c)).sum();
            prop_assert!((sum - 1.0).abs() < 1e-6);
        }
        let s2 = softmax(&t.map(|x| x + shift), 1).unwrap();
        for (a, b) in s.data().iter().zip(s2.data()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn conv_identity_kernel_property(data in finite_vec(36, -5.0, 5.0)) {
        let input = Tensor::from_vec(&[1, 1, 6, 6], data).unwrap();
        let w = Tensor::from_vec(&[1, 1, 1, 1], vec![1.0]).unwrap();
        let out = conv2d(&input, &w, None, 1, 0).unwrap();
        prop_assert_eq!(out.data(), input.data());
    }

    #[test]
    fn median_scaling_transfers_median_and_preserves_order(
        rel in finite_vec(25, 0.05, 6.0),
        pseudo in finite_vec(25, 0.2, 12.0),
    ) {
        let r = Tensor::from_vec(&[5, 5], rel).unwrap();
        let m = Tensor::from_vec(&[5, 5], pseudo).unwrap();
        let (out, _) = median_scale(&r, &m, None).unwrap();
        let med = |t: &Tensor<f64>| {
            let mut v = t.data().to_vec();
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v[v.len() / 2]
        };
        prop_assert!((med(&out) - med(&m)).abs() < 1e-6 * med(&m).max(1.0));
        for i in 0..25 {
            for j in (i + 1)..25 {
                let a = r.data()[i].partial_cmp(&r.data()[j]).unwrap();
                let b = out.data()[i].partial_cmp(&out.data()[j]).unwrap();
                prop_assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn delta_thresholds_are_monotone(
        pred in finite_vec(30, 0.01, 15.0),
        gt in finite_vec(30, 0.01, 15.0),
    ) {
        let p = Tensor::from_vec(&[5, 6], pred).unwrap();
        let g = Tensor::from_vec(&[5, 6], gt).unwrap();
        if let Ok(r) = compute_metrics(&p, &g, 12.0) {
            prop_assert!(r.delta1 <= r.delta2 + 1e-12);
            prop_assert!(r.delta2 <= r.delta3 + 1e-12);
            prop_assert!(r.delta3 <= 1.0);
            prop_assert!(r.rmse >= 0.0);
        }
    }

    #[test]
    fn triples_stay_within_scene(
        lens in proptest::collection::vec(1usize..60, 1..4),
        interval in 1usize..25,
    ) {
        let mut frames = Vec::new();
        for (scene, &len) in lens.iter().enumerate() {
            for f in 0..len {
                frames.push((scene, f));
            }
        }
        let triples = make_triples(&frames, interval).unwrap();
        // expected count per scene: max(0, len - 2*interval)
        let expected: usize = lens.iter().map(|&l| l.saturating_sub(2 * interval)).sum();
        prop_assert_eq!(triples.len(), expected);
        for [a, b, c] in triples {
            prop_assert_eq!(frames[a].0, frames[b].0);
            prop_assert_eq!(frames[b].0, frames[c].0);
            prop_assert_eq!(frames[a].1 + interval, frames[b].1);
            prop_assert_eq!(frames[b].1 + interval, frames[c].1);
        }
    }

    #[test]
    fn avst_roundtrip_preserves_bits(data in finite_vec(24, -1e6, 1e6)) {
        let dir = tempfile::tempdir().unwrap();
        let t = Tensor::from_vec(&[2, 3, 4], data).unwrap();
        let p = dir.path().join("t.avst");
        avs_core::tensor::write_avst(&p, &t).unwrap();
        match avs_core::tensor::read_avst(&p).unwrap() {
            avs_core::tensor::LoadedTensor::F64(back) => {
                let a: Vec<u64> = t.data().iter().map(|x| x.to_bits()).collect();
                let b: Vec<u64> = back.data().iter().map(|x| x.to_bits()).collect();
                prop_assert_eq!(a, b);
            }
            _ => prop_assert!(false, "dtype changed"),
        }
    }
}
