mod common;

use common::random_spd;
use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use optsensor::lowrank::{LowRankHessian, Trailing};
use optsensor::selection::{
    brute_force, combined_leverage, leverage_scores, random_designs, standard_greedy, swapping_greedy, top_r,
    Counted, Criterion, DenseCriterion, FnCriterion, LeverageInit, LowRankCriterion,
};
use optsensor::Design;
use proptest::prelude::*;

fn diag_lr(vals: &[f64]) -> LowRankHessian {
    let d = vals.len();
    LowRankHessian::new(DMatrix::identity(d, d), DVector::from_vec(vals.to_vec()), vec![], Trailing::Exact).unwrap()
}

#[test]
fn greedy_on_diagonal_takes_largest_gains() {
    let vals = [0.5, 9.0, 2.0, 4.0, 1.0, 3.0];
    let lr = diag_lr(&vals);
    for r in 0..=6 {
        let sel = standard_greedy(&LowRankCriterion(&lr), r).unwrap();
        let mut expect = vec![1, 3, 5, 2, 4, 0];
        expect.truncate(r);
        assert_eq!(sel.design.indices(), expect.as_slice());
        let v: f64 = expect.iter().map(|&i| 0.5 * (1.0 + vals[i]).ln()).sum();
        assert!((sel.value - v).abs() < 1e-12);
    }
}

#[test]
fn standard_greedy_evaluation_count() {
    let h = random_spd(9, 0.1, 3);
    for r in 1..=9 {
        let crit = Counted::new(DenseCriterion(&h));
        let sel = standard_greedy(&crit, r).unwrap();
        let expect: u64 = (1..=r).map(|t| (9 - t + 1) as u64).sum();
        assert_eq!(sel.trace.evaluations, expect);
        // plus the empty design
        assert_eq!(crit.evaluations(), expect + 1);
        assert_eq!(sel.trace.steps.len(), r);
    }
}

#[test]
fn full_design_is_trivial() {
    let h = random_spd(5, 0.1, 4);
    let crit = DenseCriterion(&h);
    let std = standard_greedy(&crit, 5).unwrap();
    assert_eq!(std.design.sorted(), vec![0, 1, 2, 3, 4]);
    let swap = swapping_greedy(&crit, Design::full(5), 10).unwrap();
    assert_eq!(swap.trace.evaluations, 1);
    assert!((swap.value - std.value).abs() < 1e-12);
    assert!(standard_greedy(&crit, 6).is_err());
}

#[test]
fn swapping_from_optimum_stops_after_one_sweep() {
    let lr = diag_lr(&[5.0, 4.0, 3.0, 2.0, 1.0]);
    let init = Design::new(vec![0, 1, 2], 5).unwrap();
    let sel = swapping_greedy(&LowRankCriterion(&lr), init, 10).unwrap();
    assert_eq!(sel.trace.sweeps, 1);
    assert!(sel.trace.steps.is_empty());
    assert_eq!(sel.trace.evaluations, 3 * 3);
    assert!(!sel.trace.hit_max_sweeps);
}

#[test]
fn swapping_repairs_a_bad_start() {
    let lr = diag_lr(&[5.0, 4.0, 3.0, 2.0, 1.0]);
    let init = Design::new(vec![3, 4], 5).unwrap();
    let sel = swapping_greedy(&LowRankCriterion(&lr), init, 10).unwrap();
    assert_eq!(sel.design.sorted(), vec![0, 1]);
    assert_eq!(sel.trace.sweeps, 2);
    let first = &sel.trace.steps[0];
    assert_eq!((first.removed, first.added, first.position), (Some(3), 0, Some(0)));
}

#[test]
fn swapping_rejects_bad_arguments() {
    let lr = diag_lr(&[1.0, 2.0, 3.0]);
    let crit = LowRankCriterion(&lr);
    assert!(swapping_greedy(&crit, Design::new(vec![0], 4).unwrap(), 5).is_err());
    assert!(swapping_greedy(&crit, Design::new(vec![0], 3).unwrap(), 0).is_err());
}

#[test]
fn brute_force_orders_pairs_by_summed_gain() {
    let vals = [1.0, 7.0, 3.0, 0.2];
    let lr = diag_lr(&vals);
    let ranking = brute_force(&LowRankCriterion(&lr), 2).unwrap();
    assert_eq!(ranking.designs.len(), 6);
    let mut oracle: Vec<(Vec<usize>, f64)> = (0..4)
        .combinations(2)
        .map(|c| {
            let v = c.iter().map(|&i| 0.5 * (1.0 + vals[i]).ln()).sum();
            (c, v)
        })
        .collect();
    oracle.sort_by(|a, b| b.1.total_cmp(&a.1));
    for ((a, va), (b, vb)) in ranking.designs.iter().zip(&oracle) {
        assert_eq!(a, b);
        assert!((va - vb).abs() < 1e-12);
    }
    assert_eq!(ranking.best().unwrap().0, vec![1, 2]);
    assert_eq!(ranking.rank_of(&Design::new(vec![2, 1], 4).unwrap()), Some(1));
    assert_eq!(ranking.rank_of(&Design::new(vec![0, 3], 4).unwrap()), Some(6));
}

#[test]
fn brute_force_counts_and_ties() {
    let h = random_spd(9, 0.5, 5);
    let ranking = brute_force(&DenseCriterion(&h), 2).unwrap();
    assert_eq!(ranking.designs.len(), 36);
    assert!(ranking.designs.windows(2).all(|w| w[0].1 >= w[1].1));
    // equal values share a rank
    let flat = FnCriterion { d: 4, f: |_: &Design| Ok(1.0) };
    let ranking = brute_force(&flat, 2).unwrap();
    assert!(ranking.designs.iter().all(|(c, _)| ranking.rank_of(&Design::new(c.clone(), 4).unwrap()) == Some(1)));
    assert!(brute_force(&flat, 5).is_err());
}

#[test]
fn brute_force_refuses_huge_spaces() {
    let flat = FnCriterion { d: 75, f: |_: &Design| Ok(0.0) };
    assert!(brute_force(&flat, 10).is_err());
}

#[test]
fn random_designs_are_deterministic_and_valid() {
    let a = random_designs(25, 5, 40, 9, true).unwrap();
    let b = random_designs(25, 5, 40, 9, true).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, random_designs(25, 5, 40, 10, true).unwrap());
    let keys: std::collections::HashSet<Vec<usize>> = a.iter().map(|d| d.sorted()).collect();
    assert_eq!(keys.len(), 40);
    for d in &a {
        assert_eq!(d.len(), 5);
        assert!(d.indices().iter().all(|&i| i < 25));
    }
    assert!(random_designs(4, 2, 7, 0, true).is_err());
    assert_eq!(random_designs(4, 2, 7, 0, false).unwrap().len(), 7);
}

#[test]
fn random_designs_include_each_candidate_uniformly() {
    let (d, r, count) = (75, 10, 200);
    let designs = random_designs(d, r, count, 17, false).unwrap();
    let mut freq = vec![0usize; d];
    for des in &designs {
        for &i in des.indices() {
            freq[i] += 1;
        }
    }
    let p = r as f64 / d as f64;
    let mean = count as f64 * p;
    let sd = (count as f64 * p * (1.0 - p)).sqrt();
    // a 4σ band keeps the family-wise false alarm rate low over 75 candidates
    for (i, &f) in freq.iter().enumerate() {
        assert!((f as f64 - mean).abs() <= 4.0 * sd, "candidate {i} drawn {f} times");
    }
}

#[test]
fn leverage_scores_sum_to_rank() {
    let h = random_spd(12, 0.0, 6);
    let eig = h.symmetric_eigen();
    let u = eig.eigenvectors.columns(0, 4).into_owned();
    let l = leverage_scores(&u);
    assert!((l.sum() - 4.0).abs() < 1e-12);
    for i in 0..12 {
        let direct: f64 = (0..4).map(|j| u[(i, j)] * u[(i, j)]).sum();
        assert!((l[i] - direct).abs() < 1e-15);
        assert!(l[i] <= 1.0 + 1e-12);
    }
    let full = eig.eigenvectors.clone();
    assert!(leverage_scores(&full).iter().all(|&x| (x - 1.0).abs() < 1e-12));
}

#[test]
fn combined_leverage_rules() {
    let u1 = DMatrix::from_row_slice(3, 1, &[1.0, 0.0, 0.0]);
    let u2 = DMatrix::from_row_slice(3, 1, &[-1.0, 0.0, 1.0]);
    let vec_sum = combined_leverage(&[&u1, &u2], LeverageInit::SummedVectors).unwrap();
    assert_eq!(vec_sum.as_slice(), &[0.0, 0.0, 1.0]);
    let score_sum = combined_leverage(&[&u1, &u2], LeverageInit::SummedScores).unwrap();
    assert_eq!(score_sum.as_slice(), &[2.0, 0.0, 1.0]);
    let short = DMatrix::<f64>::zeros(2, 1);
    assert!(combined_leverage(&[&u1, &short], LeverageInit::SummedScores).is_err());
    assert!(combined_leverage(&[], LeverageInit::SummedScores).is_err());
}

#[test]
fn top_r_breaks_ties_low() {
    let s = DVector::from_vec(vec![1.0, 2.0, 2.0, 0.5, 2.0]);
    assert_eq!(top_r(&s, 2).unwrap().indices(), &[1, 2]);
    assert_eq!(top_r(&s, 4).unwrap().indices(), &[1, 2, 4, 0]);
    assert!(top_r(&s, 6).is_err());
}

#[test]
fn greedy_is_bounded_by_brute_force() {
    for seed in 0..5 {
        let h = random_spd(8, 0.05, 100 + seed);
        let crit = DenseCriterion(&h);
        for r in 1..=4 {
            let ranking = brute_force(&crit, r).unwrap();
            let best = ranking.best().unwrap().1;
            let std = standard_greedy(&crit, r).unwrap();
            let swap = swapping_greedy(&crit, std.design.clone(), 20).unwrap();
            assert!(std.value <= best + 1e-12);
            assert!(swap.value <= best + 1e-12);
            assert!(swap.value >= std.value - 1e-12);
            assert_eq!(ranking.rank_of(&swap.design), Some(ranking.rank_of_value(swap.value)));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn standard_trace_is_monotone(seed in 0u64..1000, d in 3usize..10) {
        let h = random_spd(d, 0.01, seed);
        let sel = standard_greedy(&DenseCriterion(&h), d).unwrap();
        prop_assert!(sel.trace.steps.windows(2).all(|w| w[1].value >= w[0].value - 1e-12));
    }

    #[test]
    fn swapping_never_decreases_and_respects_the_budget(seed in 0u64..1000, d in 4usize..11, r in 1usize..4, sweeps in 1usize..4) {
        let h = random_spd(d, 0.01, seed);
        let crit = DenseCriterion(&h);
        let init = random_designs(d, r, 1, seed, false).unwrap().remove(0);
        let start = crit.evaluate(&init).unwrap();
        let sel = swapping_greedy(&crit, init, sweeps).unwrap();
        prop_assert!(sel.value >= start - 1e-12);
        prop_assert!(sel.trace.steps.windows(2).all(|w| w[1].value > w[0].value));
        prop_assert!(sel.trace.sweeps <= sweeps);
        prop_assert!(sel.trace.evaluations <= (sweeps * r * (d - r + 1)) as u64);
        prop_assert!((crit.evaluate(&sel.design).unwrap() - sel.value).abs() < 1e-10);
    }
}
