//! Statistical calibration checks that are too slow for unit tests:
//! p-value uniformity under the null, empirical p-value validity, and
//! selection-rule FWER control.

use rand::Rng;
use splitcheck::dataset::{CategoricalTable, GroupedSample};
use splitcheck::disco::{disco_test, CategoricalEncoding};
use splitcheck::multiplicity::{marginal_f_pvalues, resample_after_selection};
use splitcheck::propensity::{chi_square_from_counts, propensity_test, PropensityConfig};
use splitcheck::statfun::{seeded_rng, Pvalue};

fn iid_two_groups(seed: u64, n_per_group: usize, m: usize) -> GroupedSample {
    let mut rng = seeded_rng(seed);
    let groups = (0..2)
        .map(|_| {
            let cells: Vec<u32> = (0..n_per_group * m).map(|_| rng.gen_range(0..4)).collect();
            CategoricalTable::new(cells, m, vec![4; m], None).unwrap()
        })
        .collect();
    GroupedSample::new(groups, vec!["A".into(), "B".into()]).unwrap()
}

/// Under the null, p-values of the group-by-category chi-square are close
/// to Uniform(0,1): Kolmogorov–Smirnov distance below 0.05 over 2000
/// replicates at 500 rows.
#[test]
fn contingency_chi_square_pvalues_uniform_under_null() {
    let reps = 2000;
    let mut pvalues = Vec::with_capacity(reps);
    for seed in 0..reps {
        let g = iid_two_groups(40_000 + seed as u64, 250, 1);
        let mut counts = vec![0u64; 2 * 4];
        for (gi, t) in g.groups().iter().enumerate() {
            for r in 0..t.n_rows() {
                counts[gi * 4 + t.code(r, 0) as usize] += 1;
            }
        }
        let (_, _, p) = chi_square_from_counts(&counts, 2, 4).unwrap();
        pvalues.push(p.value());
    }
    pvalues.sort_unstable_by(f64::total_cmp);
    let n = pvalues.len() as f64;
    let mut ks: f64 = 0.0;
    for (i, &p) in pvalues.iter().enumerate() {
        let ecdf_hi = (i + 1) as f64 / n;
        let ecdf_lo = i as f64 / n;
        ks = ks.max((ecdf_hi - p).abs()).max((p - ecdf_lo).abs());
    }
    assert!(ks < 0.05, "KS distance to uniform: {ks}");
}

/// The DISCO permutation p-value is valid: under exchangeability,
/// P(p ≤ t) ≤ t (plus Monte-Carlo noise) for every threshold t.
#[test]
fn disco_empirical_pvalue_valid_under_exchangeability() {
    let trials = 1000;
    let b = 39;
    let mut pvalues = Vec::with_capacity(trials);
    for t in 0..trials {
        let g = iid_two_groups(60_000 + t as u64, 100, 2);
        let out = disco_test(&g, 1.0, b, 0.05, 70_000 + t as u64, CategoricalEncoding::OneHot)
            .unwrap();
        pvalues.push(out.result.original[0].value());
    }
    for t in [0.05, 0.1, 0.25, 0.5] {
        let frac = pvalues.iter().filter(|&&p| p <= t).count() as f64 / trials as f64;
        let sd = (t * (1.0 - t) / trials as f64).sqrt();
        assert!(
            frac <= t + 3.0 * sd,
            "P(p <= {t}) = {frac}, exceeds validity bound"
        );
    }
}

/// Algorithm-3-style top-s selection keeps FWER under control on null data.
#[test]
fn selection_rule_controls_fwer() {
    let trials = 400;
    let mut rejections = 0;
    let top3 = |pv: &[Pvalue]| -> Vec<usize> {
        let mut idx: Vec<usize> = (0..pv.len()).collect();
        idx.sort_by(|&a, &b| pv[a].value().total_cmp(&pv[b].value()));
        idx.truncate(3);
        idx
    };
    for t in 0..trials {
        let g = iid_two_groups(80_000 + t as u64, 50, 8);
        let res = resample_after_selection(
            |gp, _| marginal_f_pvalues(gp),
            top3,
            &g,
            99,
            0.05,
            90_000 + t as u64,
        )
        .unwrap();
        if res.rejected() {
            rejections += 1;
        }
    }
    let fwer = rejections as f64 / trials as f64;
    let bound = 0.05 + 2.0 * (0.05f64 * 0.95 / trials as f64).sqrt();
    assert!(fwer <= bound, "FWER {fwer} exceeds {bound}");
}

/// Permutation replicates own child seeds, so results cannot depend on the
/// evaluation schedule: a single-thread pool reproduces the ambient result.
#[test]
fn propensity_replicates_schedule_invariant() {
    let g = iid_two_groups(123, 40, 3);
    let cfg = PropensityConfig::default();
    let ambient = propensity_test(&g, &cfg, 49, 0.05, 7).unwrap();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let serial = pool
        .install(|| propensity_test(&g, &cfg, 49, 0.05, 7))
        .unwrap();
    assert_eq!(
        ambient.result.original[0].value(),
        serial.result.original[0].value()
    );
    assert_eq!(ambient.result.resampled_min, serial.result.resampled_min);
    assert_eq!(ambient.result.rejections, serial.result.rejections);
}
