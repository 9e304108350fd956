use boltrm_core::metrics::*;
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Lower-triangular matrix from a flat pool of values in [0, 1].
fn matrix_from(values: &[f64], d: usize) -> AccuracyMatrix {
    let mut it = values.iter().copied().cycle();
    AccuracyMatrix::from_rows((1..=d).map(|l| (0..l).map(|_| it.next().unwrap()).collect()).collect()).unwrap()
}

#[test]
fn chi2_tail_matches_statrs() {
    for dof in 1..=25 {
        for &x in &[1e-3, 0.3, 1.0, 2.5, 7.8, 15.0, 40.0, 90.0] {
            let want = ChiSquared::new(dof as f64).unwrap().sf(x);
            let got = chi2_sf(x, dof as f64).unwrap();
            assert!(((got - want) / want).abs() < 1e-8, "dof {dof} x {x}: {got} vs {want}");
        }
    }
}

#[test]
fn chi2_tail_matches_scipy_references() {
    // scipy.stats.chi2.sf
    let refs = [
        (8.0, 2.0, 0.018315638888734182),
        (30.0, 9.0, 0.00043872177097947936),
        (0.5, 1.0, 0.47950012218695337),
        (1e-3, 5.0, 0.9999999983185123),
        (200.0, 9.0, 3.312992393909567e-38),
        (7.815, 3.0, 0.049993902974883875),
        (50.0, 19.0, 0.0001310611647931629),
    ];
    for (x, dof, want) in refs {
        let got = chi2_sf(x, dof).unwrap();
        assert!(((got - want) / want).abs() < 1e-8, "x {x} dof {dof}: {got}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn no_forgetting_when_columns_never_drop(
        d in 2usize..12,
        seeds in prop::collection::vec(0.0f64..1.0, 80),
        steps in prop::collection::vec(0.0f64..0.2, 80),
    ) {
        // column i starts at a seed value and only ever increases
        let mut rows = Vec::new();
        for l in 0..d {
            let row: Vec<f64> = (0..=l)
                .map(|i| {
                    let mut v = seeds[i] * 0.5;
                    for j in i..l {
                        v += steps[(i * 7 + j) % steps.len()] * 0.05;
                    }
                    v.min(1.0)
                })
                .collect();
            rows.push(row);
        }
        let m = AccuracyMatrix::from_rows(rows).unwrap();
        prop_assert!(fm(&m).unwrap() <= 0.0);
    }
}

proptest! {
    #[test]
    fn fm_zero_when_final_equals_column_max(d in 2usize..10, values in prop::collection::vec(0.0f64..1.0, 60)) {
        let base = matrix_from(&values, d);
        let mut rows = base.rows().to_vec();
        for i in 0..d - 1 {
            let best = (i..d - 1).map(|l| rows[l][i]).fold(0.0, f64::max);
            rows[d - 1][i] = best;
        }
        let m = AccuracyMatrix::from_rows(rows).unwrap();
        prop_assert_eq!(fm(&m).unwrap(), 0.0);
    }

    #[test]
    fn scores_stay_in_range(d in 1usize..10, values in prop::collection::vec(0.0f64..1.0, 60)) {
        let m = matrix_from(&values, d);
        let s = cl_metrics(&m).unwrap();
        prop_assert!((0.0..=1.0).contains(&s.acc));
        prop_assert!((0.0..=1.0).contains(&s.la));
        if let Some(f) = s.fm {
            prop_assert!((-1.0..=1.0).contains(&f));
        }
    }

    #[test]
    fn acc_la_invariant_to_relabelling(d in 1usize..8, values in prop::collection::vec(0.0f64..1.0, 40), rot in 0usize..8) {
        // a consistent relabelling permutes the final row and the diagonal
        let m = matrix_from(&values, d);
        let last = m.final_row().unwrap().to_vec();
        let diag: Vec<f64> = (0..d).map(|i| m.get(i, i).unwrap()).collect();
        let permuted_last: Vec<f64> = (0..d).map(|i| last[(i + rot) % d]).collect();
        let permuted_diag: Vec<f64> = (0..d).map(|i| diag[(i + rot) % d]).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        prop_assert!((acc(&m).unwrap() - mean(&permuted_last)).abs() < 1e-12);
        prop_assert!((la(&m).unwrap() - mean(&permuted_diag)).abs() < 1e-12);
    }

    #[test]
    fn friedman_invariant_to_rowwise_monotone_maps(
        scores in prop::collection::vec(prop::collection::vec(-100i32..100, 4), 3..8),
        scale in prop::collection::vec(1i32..20, 8),
    ) {
        let base: Vec<Vec<f64>> = scores.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
        let mapped: Vec<Vec<f64>> = base
            .iter()
            .enumerate()
            .map(|(i, r)| r.iter().map(|v| (v * scale[i] as f64).powi(3) + 7.0).collect())
            .collect();
        let a = friedman(&base).unwrap();
        let b = friedman(&mapped).unwrap();
        prop_assert_eq!(a.statistic.to_bits(), b.statistic.to_bits());
        prop_assert_eq!(a.mean_ranks, b.mean_ranks);
    }

    #[test]
    fn two_treatment_ranks_follow_sign(pairs in prop::collection::vec((-50i32..50, -50i32..50), 2..20)) {
        for (x, y) in &pairs {
            let ranks = average_ranks(&[*x as f64, *y as f64]);
            match x.cmp(y) {
                std::cmp::Ordering::Less => prop_assert_eq!(ranks, vec![1.0, 2.0]),
                std::cmp::Ordering::Greater => prop_assert_eq!(ranks, vec![2.0, 1.0]),
                std::cmp::Ordering::Equal => prop_assert_eq!(ranks, vec![1.5, 1.5]),
            }
        }
    }

    #[test]
    fn cd_groups_are_within_cd_and_cover_all(ranks in prop::collection::vec(1.0f64..10.0, 2..15), n in 1usize..30) {
        let cd = critical_difference(&ranks, n, 0.05).unwrap();
        let mut seen = vec![false; ranks.len()];
        for g in &cd.groups {
            let lo = g.iter().map(|&i| ranks[i]).fold(f64::INFINITY, f64::min);
            let hi = g.iter().map(|&i| ranks[i]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(hi - lo <= cd.cd);
            g.iter().for_each(|&i| seen[i] = true);
        }
        prop_assert!(seen.iter().all(|&s| s));
        for (i, a) in cd.groups.iter().enumerate() {
            for (j, b) in cd.groups.iter().enumerate() {
                if i != j {
                    prop_assert!(!a.iter().all(|x| b.contains(x)), "group {a:?} inside {b:?}");
                }
            }
        }
    }
}
