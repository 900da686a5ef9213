use photostat::correlator::cross_correlate_partitioned;
use photostat::{cross_correlate, AcquisitionMeta, DelayBins, StreamingCorrelator};
use proptest::prelude::*;

/// Quadratic oracle over all pairs.
fn brute_force(a: &[u64], b: &[u64], bins: &DelayBins) -> Vec<u64> {
    let mut counts = vec![0u64; bins.n_bins];
    for &ta in a {
        for &tb in b {
            if let Some(k) = bins.index(tb as i64 - ta as i64) {
                counts[k] += 1;
            }
        }
    }
    counts
}

fn sorted(mut v: Vec<u64>) -> Vec<u64> {
    v.sort_unstable();
    v
}

fn clicks(n: usize, span: u64) -> impl Strategy<Value = Vec<u64>> {
    prop::collection::vec(0..span, 0..n).prop_map(sorted)
}

fn bins() -> impl Strategy<Value = DelayBins> {
    (1.0f64..5_000.0, 1.0f64..700.0)
        .prop_map(|(half, width)| DelayBins::symmetric(half, width).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn matches_brute_force(a in clicks(300, 50_000), b in clicks(300, 50_000), bins in bins()) {
        let h = cross_correlate(&a, &b, bins).unwrap();
        prop_assert_eq!(h.counts, brute_force(&a, &b, &bins));
    }

    #[test]
    fn asymmetric_windows_match_brute_force(
        a in clicks(200, 20_000),
        b in clicks(200, 20_000),
        lo in -4_000.0f64..0.0,
        len in 1.0f64..8_000.0,
        width in 1.0f64..500.0,
    ) {
        let bins = DelayBins::new(lo, lo + len, width).unwrap();
        let h = cross_correlate(&a, &b, bins).unwrap();
        prop_assert_eq!(h.counts, brute_force(&a, &b, &bins));
    }

    #[test]
    fn swapping_channels_reverses_the_histogram(
        a in clicks(200, 20_000),
        b in clicks(200, 20_000),
        bins in bins(),
    ) {
        // Even starts and odd stops keep τ off the τ = 0 edge; other edge hits
        // would land in different bins under [low, high) and are excluded.
        let a: Vec<u64> = a.iter().map(|t| 2 * t).collect();
        let b: Vec<u64> = b.iter().map(|t| 2 * t + 1).collect();
        let on_edge = a.iter().any(|&ta| {
            b.iter().any(|&tb| {
                let k = ((tb as f64 - ta as f64) - bins.tau_min_ps) / bins.bin_width_ps;
                k.fract() == 0.0
            })
        });
        prop_assume!(!on_edge);
        let ab = cross_correlate(&a, &b, bins).unwrap();
        let mut ba = cross_correlate(&b, &a, bins).unwrap().counts;
        ba.reverse();
        prop_assert_eq!(ab.counts, ba);
    }

    #[test]
    fn translation_invariant(
        a in clicks(200, 30_000),
        b in clicks(200, 30_000),
        bins in bins(),
        shift in 0u64..1_000_000_000_000,
    ) {
        let h = cross_correlate(&a, &b, bins).unwrap();
        let a2: Vec<u64> = a.iter().map(|t| t + shift).collect();
        let b2: Vec<u64> = b.iter().map(|t| t + shift).collect();
        prop_assert_eq!(h.counts, cross_correlate(&a2, &b2, bins).unwrap().counts);
    }

    #[test]
    fn independent_of_partitioning(
        a in clicks(300, 30_000),
        b in clicks(300, 30_000),
        bins in bins(),
        parts in 1usize..40,
    ) {
        let whole = cross_correlate_partitioned(&a, &b, bins, 1).unwrap();
        prop_assert_eq!(whole, cross_correlate_partitioned(&a, &b, bins, parts).unwrap());
    }

    #[test]
    fn streaming_equals_batch(
        a in clicks(300, 40_000),
        b in clicks(300, 40_000),
        bins in bins(),
        mut cuts in prop::collection::vec(0u64..40_000, 0..8),
    ) {
        // Blocks split the time axis, so every click in a block is at or
        // after every click already pushed.
        cuts.push(u64::MAX);
        cuts.sort_unstable();
        let mut sc = StreamingCorrelator::new(bins);
        let (mut ia, mut ib) = (0, 0);
        for cut in cuts {
            let ja = a.partition_point(|&t| t < cut);
            let jb = b.partition_point(|&t| t < cut);
            sc.push(&a[ia..ja], &b[ib..jb]).unwrap();
            (ia, ib) = (ja, jb);
        }
        let h = sc.finish(AcquisitionMeta::default());
        prop_assert_eq!(h.counts, brute_force(&a, &b, &bins));
        prop_assert_eq!(h.total_starts, a.len() as u64);
        prop_assert_eq!(h.total_stops, b.len() as u64);
    }
}

#[test]
fn ten_thousand_clicks_per_channel_match_brute_force() {
    let mut rng = photostat::rng::SeedPath::root(11).rng();
    use rand::Rng as _;
    let a = sorted((0..10_000).map(|_| rng.random_range(0..10_000_000)).collect());
    let b = sorted((0..10_000).map(|_| rng.random_range(0..10_000_000)).collect());
    let bins = DelayBins::symmetric(150_000.0, 106.9).unwrap();
    assert_eq!(cross_correlate(&a, &b, bins).unwrap().counts, brute_force(&a, &b, &bins));
}

#[test]
fn unsorted_input_is_rejected() {
    let bins = DelayBins::symmetric(100.0, 10.0).unwrap();
    assert!(cross_correlate(&[5, 3], &[1], bins).is_err());
    let mut sc = StreamingCorrelator::new(bins);
    sc.push(&[10, 20], &[15]).unwrap();
    assert!(sc.push(&[12], &[]).is_err());
}
