//! Property suites: projections, triad superposition, minimal-model theory,
//! residual-covariance rank, ranking partitions and betting formulas.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use paircycle::betting::{expected_gain, total_win, win_probability};
use paircycle::estimate::{fit_intermediate, ComparisonData};
use paircycle::geometry::{
    minimal_models_oracle, model_support_span, num_pairs, tick_table_default, DEFAULT_ORACLE_BUDGET,
};
use paircycle::inference::{lack_of_fit, residual_covariance, LackOfFit, MonteCarlo};
use paircycle::rank::{classify_transitivity, dominance_scores, rank_sets, Item, Transitivity};
use paircycle::{build_bases, decompose, Triad};
use proptest::prelude::*;

fn profile(k: usize) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-5.0f64..5.0, num_pairs(k)).prop_map(DVector::from_vec)
}

fn sized_profile() -> impl Strategy<Value = (usize, DVector<f64>)> {
    (3usize..=7).prop_flat_map(|k| (Just(k), profile(k)))
}

proptest! {
    #[test]
    fn projections_are_orthogonal_and_idempotent((k, nu) in sized_profile()) {
        let b = build_bases(k).unwrap();
        let p = decompose(&nu, &b).unwrap();
        let scale = 1.0 + nu.amax();
        prop_assert!((&p.nu_linear + &p.nu_cyclic - &nu).amax() < 1e-10 * scale);
        prop_assert!(p.nu_linear.dot(&p.nu_cyclic).abs() < 1e-9 * scale * scale);
        prop_assert!((b.b() * &p.mu - &p.nu_linear).amax() < 1e-10 * scale);
        prop_assert!((b.c() * &p.gamma_minnorm - &p.nu_cyclic).amax() < 1e-10 * scale);
        prop_assert!(p.mu.sum().abs() < 1e-10 * scale);

        let lin = decompose(&p.nu_linear, &b).unwrap();
        prop_assert!((&lin.nu_linear - &p.nu_linear).amax() < 1e-10 * scale);
        prop_assert!(lin.nu_cyclic.amax() < 1e-10 * scale);
        let cyc = decompose(&p.nu_cyclic, &b).unwrap();
        prop_assert!(cyc.nu_linear.amax() < 1e-10 * scale);
        prop_assert!((&cyc.nu_cyclic - &p.nu_cyclic).amax() < 1e-10 * scale);
    }

    #[test]
    fn dominance_and_rank_sets_partition_items((k, nu) in sized_profile()) {
        let sets = rank_sets(&nu, 1e-9).unwrap();
        let dom = dominance_scores(&nu, 1e-9).unwrap();
        for (i, s) in sets.iter().enumerate() {
            prop_assert_eq!(s.item, Item(i));
            let mut all: Vec<usize> = s.superior.iter().chain(&s.inferior).chain(&s.equivalent).map(|x| x.0).collect();
            all.push(i);
            all.sort_unstable();
            prop_assert_eq!(all, (0..k).collect::<Vec<_>>());
            prop_assert_eq!(s.inferior.len(), dom.scores[i]);
            for j in &s.superior {
                prop_assert!(sets[j.0].inferior.contains(&Item(i)));
            }
            for j in &s.equivalent {
                prop_assert!(sets[j.0].equivalent.contains(&Item(i)));
            }
        }
        let rank_sum: f64 = dom.ranks.iter().sum();
        prop_assert!((rank_sum - (k * (k + 1)) as f64 / 2.0).abs() < 1e-9);
        // an item that beats strictly more items never ranks below one that beats fewer
        for i in 0..k {
            for j in 0..k {
                if dom.scores[i] > dom.scores[j] {
                    prop_assert!(dom.ranks[i] < dom.ranks[j]);
                }
            }
        }
    }

    #[test]
    fn distinct_dominance_scores_imply_no_cycle((k, nu) in sized_profile()) {
        let dom = dominance_scores(&nu, 1e-9).unwrap();
        let distinct: BTreeSet<usize> = dom.scores.iter().copied().collect();
        if distinct.len() == k {
            let report = classify_transitivity(&nu, Some(1e-9)).unwrap();
            prop_assert!(report.global <= Transitivity::Weak);
            prop_assert_eq!(report.cyclic_triads().count(), 0);
        }
    }

    #[test]
    fn betting_gain_matches_piecewise_formula(tau in 0.001f64..0.999, omega in 0.001f64..0.999) {
        let g = expected_gain(tau, omega).unwrap();
        let expected = if tau > omega {
            (tau - omega) / omega
        } else if tau < omega {
            (omega - tau) / (1.0 - omega)
        } else {
            0.0
        };
        prop_assert_eq!(g, expected);
        prop_assert!(g >= 0.0);
        prop_assert_eq!(expected_gain(omega, omega).unwrap(), 0.0);
    }

    #[test]
    fn total_win_sums_lines((k, nu) in sized_profile(), shift in profile(7), sigma in 2.0f64..3.0) {
        let other = &nu + shift.rows(0, nu.len());
        let rep = total_win(&nu, &other, sigma).unwrap();
        let sum: f64 = rep.lines.iter().map(|l| l.win).sum();
        prop_assert!((rep.total_win - sum).abs() < 1e-12 * (1.0 + sum));
        prop_assert_eq!(rep.lines.len(), num_pairs(k));
        for (line, (&a, &b)) in rep.lines.iter().zip(nu.iter().zip(other.iter())) {
            prop_assert_eq!(line.omega, win_probability(a, sigma).unwrap());
            prop_assert_eq!(line.tau, win_probability(b, sigma).unwrap());
            prop_assert_eq!(line.win, expected_gain(line.tau, line.omega).unwrap());
        }
        prop_assert_eq!(total_win(&nu, &nu, sigma).unwrap().total_win, 0.0);
        let mirrored = total_win(&-&nu, &-&other, sigma).unwrap();
        for (a, b) in rep.lines.iter().zip(&mirrored.lines) {
            prop_assert!((a.win - b.win).abs() <= 1e-9 * (1.0 + a.win));
        }
    }
}

#[test]
fn triad_superposition_identity_exact() {
    for k in 4..=7 {
        let b = build_bases(k).unwrap();
        for t in b.triad_map().triads() {
            let [i, j, l] = t.items();
            for s in (0..k).filter(|s| ![i, j, l].contains(s)) {
                let lhs = b.triad_column(*t);
                let rhs = cycle(&b, s, i, j) + cycle(&b, s, j, l) - cycle(&b, s, i, l);
                assert_eq!(lhs, rhs, "K={k}, triad {t}, s={}", s + 1);
            }
        }
    }
}

/// Cycle vector a > b > c > a, written with integer arithmetic in pair order.
fn cycle(b: &paircycle::BasisPair, a: usize, m: usize, c: usize) -> DVector<f64> {
    let map = b.pair_map();
    let mut v = DVector::zeros(b.num_pairs());
    for (x, y) in [(a, m), (m, c), (c, a)] {
        let (row, sign) = map.oriented(x, y);
        v[row] += sign;
    }
    v
}

fn t(i: usize, j: usize, k: usize) -> Triad {
    Triad::one_based(i, j, k)
}

#[test]
fn oracle_finds_non_unique_minimal_models() {
    let b = build_bases(6).unwrap();
    let nu = b.triad_column(t(1, 2, 3)) - b.triad_column(t(1, 2, 4)) + b.triad_column(t(1, 3, 6))
        - b.triad_column(t(2, 3, 5));
    let mm = minimal_models_oracle(&nu, &b, 4, DEFAULT_ORACLE_BUDGET).unwrap();
    assert_eq!(mm.size, 4);
    assert!(mm.models.len() >= 2);
    assert!(mm
        .models
        .contains(&vec![t(1, 3, 4), t(1, 3, 6), t(2, 3, 4), t(2, 3, 5)]));
    check_minimal_models(&nu, &b, &mm.models);
}

/// Equal spans give equal supports, and some minimal model has no 0-tick triad.
fn check_minimal_models(nu: &DVector<f64>, b: &paircycle::BasisPair, models: &[Vec<Triad>]) {
    let supports: Vec<_> = models
        .iter()
        .map(|m| model_support_span(m, b).unwrap())
        .collect();
    for x in &supports {
        for y in &supports {
            if x.same_span(y) {
                assert_eq!(x.support, y.support);
            }
        }
    }
    let ticks = tick_table_default(nu, b.k()).unwrap();
    assert!(
        models
            .iter()
            .any(|m| m.iter().all(|t| ticks.count(*t) >= 1)),
        "every minimal model has a 0-tick triad"
    );
}

/// Small deterministic generator so the instances are reproducible.
struct Lcg(u64);

impl Lcg {
    fn next(&mut self) -> u64 {
        self.0 = self
            .0
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        self.0 >> 33
    }
    fn below(&mut self, n: usize) -> usize {
        (self.next() % n as u64) as usize
    }
}

#[test]
fn oracle_agrees_with_tick_theory_on_random_instances() {
    let mut rng = Lcg(7);
    for case in 0..60 {
        let k = 4 + case % 3;
        let b = build_bases(k).unwrap();
        let triads = b.triad_map().triads();
        let size = 1 + rng.below(3);
        let mut chosen: Vec<Triad> = Vec::new();
        while chosen.len() < size {
            let t = triads[rng.below(triads.len())];
            if !chosen.contains(&t) {
                chosen.push(t);
            }
        }
        let mut nu = DVector::zeros(b.num_pairs());
        for (n, t) in chosen.iter().enumerate() {
            let sign = if rng.below(2) == 0 { 1.0 } else { -1.0 };
            nu += b.triad_column(*t) * (sign * (1.0 + n as f64 * 0.37));
        }
        let mm = minimal_models_oracle(&nu, &b, size, DEFAULT_ORACLE_BUDGET).unwrap();
        assert!(mm.size <= size);
        for m in &mm.models {
            let res = paircycle::linalg::span_residual(&b.triad_columns(m), &nu);
            assert!(res <= 1e-8 * nu.norm());
        }
        check_minimal_models(&nu, &b, &mm.models);
    }
}

#[test]
fn triads_sharing_at_most_one_index_give_unique_model() {
    let cases: &[(usize, &[(Triad, f64)])] = &[
        (6, &[(t(1, 2, 3), 1.0), (t(1, 4, 5), -2.0)]),
        (
            6,
            &[(t(1, 4, 5), 1.0), (t(2, 5, 6), -1.5), (t(3, 4, 6), 2.5)],
        ),
        (5, &[(t(1, 2, 3), 0.7), (t(3, 4, 5), 1.9)]),
        (
            6,
            &[(t(1, 2, 3), 1.0), (t(3, 4, 5), -0.5), (t(1, 5, 6), 3.0)],
        ),
    ];
    for (k, parts) in cases {
        let b = build_bases(*k).unwrap();
        let mut nu = DVector::zeros(b.num_pairs());
        for (t, w) in *parts {
            nu += b.triad_column(*t) * *w;
        }
        let mm = minimal_models_oracle(&nu, &b, parts.len(), DEFAULT_ORACLE_BUDGET).unwrap();
        let mut expected: Vec<Triad> = parts.iter().map(|p| p.0).collect();
        expected.sort();
        assert_eq!(mm.models, vec![expected.clone()]);
        let ticks = tick_table_default(&nu, *k).unwrap();
        assert!(expected.iter().all(|t| ticks.count(*t) == 3));
    }
}

#[test]
fn residual_covariance_has_rank_t() {
    let mut rng = Lcg(11);
    for k in [4usize, 5, 6] {
        let b = build_bases(k).unwrap();
        let p = num_pairs(k);
        let samples: Vec<Vec<f64>> = (0..p)
            .map(|_| {
                let n = 2 + rng.below(4);
                (0..n)
                    .map(|_| rng.below(1000) as f64 / 250.0 - 2.0)
                    .collect()
            })
            .collect();
        let data = ComparisonData::from_samples(k, &samples).unwrap();
        for model in [vec![], vec![t(1, 2, 3)], vec![t(1, 2, 3), t(2, 3, 4)]] {
            let fit = fit_intermediate(&data, &b, &model).unwrap();
            let dof = fit.lack_of_fit_df() as usize;
            let psi: DMatrix<f64> = residual_covariance(&data, &b, &fit);
            let eig = psi.symmetric_eigen().eigenvalues;
            let big = eig.iter().filter(|e| e.abs() > 1e-9 * eig.amax()).count();
            assert_eq!(big, dof, "K={k}, model {model:?}");
            let out = lack_of_fit(&data, &b, &fit, LackOfFit::Rn, MonteCarlo::default()).unwrap();
            assert_eq!(out.dof, Some(dof));
            let positive = out
                .eigenvalues
                .unwrap()
                .iter()
                .filter(|e| **e > 0.0)
                .count();
            assert_eq!(positive, dof);
        }
    }
}
