mod common;

use std::collections::BTreeSet;

use common::{names, random_dataset};
use proptest::prelude::*;
use repps::datagen::{generate, CounterGen, GenSpec};
use repps::regress::Algorithm;
use repps::search::{
    bottom_up, cv_score, exhaustive, kfold_split, run_search, top_down, Action, FoldMode,
    SearchConfig, StopReason,
};
use repps::{CounterName, PowerModel};

fn cfg(algorithm: Algorithm, folds: usize) -> SearchConfig {
    SearchConfig {
        algorithm,
        folds,
        ..SearchConfig::default()
    }
}

fn spec(truth: &[(&str, f64)], pool: &[&str], noise: f64, seed: u64) -> GenSpec {
    let terms = truth
        .iter()
        .map(|(n, c)| (CounterName::new(*n).unwrap(), *c))
        .collect();
    GenSpec {
        true_model: PowerModel::pmc(1.0, terms).unwrap(),
        n_samples: 401,
        noise_rel: noise,
        counter_ranges: pool
            .iter()
            .map(|c| CounterGen::uniform(c, 0, 200_000).unwrap())
            .collect(),
        seed,
        ..GenSpec::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn folds_partition_rows(seed in any::<u64>(), n in 4usize..300, runs in 1usize..60, k in 2usize..12) {
        let ds = random_dataset(seed, n, 1, runs);
        let distinct = ds.run_ids().len();
        let Ok(split) = kfold_split(&ds, k, seed) else {
            prop_assert!(n < k && distinct < k);
            return Ok(());
        };
        prop_assert_eq!(split.folds.len(), k);
        let mut seen = vec![false; n];
        for fold in &split.folds {
            for &i in fold {
                prop_assert!(!seen[i]);
                seen[i] = true;
            }
        }
        prop_assert!(seen.iter().all(|&s| s));
        if distinct >= k {
            prop_assert_eq!(split.mode, FoldMode::Runs);
            let run_counts: Vec<usize> = split
                .folds
                .iter()
                .map(|f| f.iter().map(|&i| &ds.rows()[i].run_id).collect::<BTreeSet<_>>().len())
                .collect();
            let (lo, hi) = (run_counts.iter().min().unwrap(), run_counts.iter().max().unwrap());
            prop_assert!(hi - lo <= 1);
            // no run straddles folds
            for a in 0..k {
                for b in a + 1..k {
                    let ra: BTreeSet<_> = split.folds[a].iter().map(|&i| &ds.rows()[i].run_id).collect();
                    prop_assert!(split.folds[b].iter().all(|&i| !ra.contains(&ds.rows()[i].run_id)));
                }
            }
        } else {
            prop_assert_eq!(split.mode, FoldMode::Blocks);
            let sizes: Vec<usize> = split.folds.iter().map(Vec::len).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            let flat: Vec<usize> = split.folds.concat();
            prop_assert_eq!(flat, (0..n).collect::<Vec<_>>());
        }
        prop_assert_eq!(kfold_split(&ds, k, seed).unwrap(), split);
    }

    #[test]
    fn greedy_scores_never_increase(seed in any::<u64>(), p in 1usize..6) {
        let ds = random_dataset(seed, 120, p, 1);
        for algorithm in [Algorithm::BottomUp, Algorithm::TopDown] {
            let report = run_search(&ds, &cfg(algorithm, 5)).unwrap();
            let mut prev = report.initial_cv_mape_pct.unwrap_or(f64::INFINITY);
            for it in &report.iterations {
                prop_assert!(it.cv_mape_pct <= prev);
                prev = it.cv_mape_pct;
            }
            let unique: BTreeSet<_> = report.selected.iter().collect();
            prop_assert_eq!(unique.len(), report.selected.len());
        }
    }

    #[test]
    fn exhaustive_bounds_greedy(seed in any::<u64>(), p in 1usize..6) {
        let ds = random_dataset(seed, 120, p, 1);
        let best = exhaustive(&ds, &cfg(Algorithm::Exhaustive, 5)).unwrap();
        let oracle = best.final_cv_mape_pct.unwrap();
        let bu = bottom_up(&ds, &cfg(Algorithm::BottomUp, 5)).unwrap();
        let td = top_down(&ds, &cfg(Algorithm::TopDown, 5)).unwrap();
        prop_assert!(oracle <= bu.final_cv_mape_pct.unwrap());
        prop_assert!(oracle <= td.final_cv_mape_pct.unwrap());
        prop_assert!(bu.final_cv_mape_pct.unwrap() <= cv_score(&ds, &[], 5, 0).unwrap());
    }

    #[test]
    fn max_events_is_respected(seed in any::<u64>(), cap in 0usize..4) {
        let ds = random_dataset(seed, 80, 5, 1);
        let c = SearchConfig { max_events: Some(cap), ..cfg(Algorithm::BottomUp, 4) };
        let report = bottom_up(&ds, &c).unwrap();
        prop_assert!(report.selected.len() <= cap);
    }
}

#[test]
fn parallel_matches_sequential() {
    for seed in 0..4 {
        let ds = random_dataset(seed, 200, 6, 7);
        for algorithm in [Algorithm::BottomUp, Algorithm::TopDown, Algorithm::Exhaustive] {
            let par = run_search(&ds, &cfg(algorithm, 5)).unwrap();
            let seq = run_search(&ds, &SearchConfig { parallel: false, ..cfg(algorithm, 5) }).unwrap();
            assert_eq!(par.to_json().unwrap(), seq.to_json().unwrap());
        }
    }
}

#[test]
fn cv_score_is_seed_deterministic() {
    let ds = random_dataset(9, 300, 3, 30);
    let p = names(&["C1", "C3"]);
    for k in [2, 5, 10] {
        assert_eq!(cv_score(&ds, &p, k, 42).unwrap(), cv_score(&ds, &p, k, 42).unwrap());
    }
}

#[test]
fn bottom_up_finds_single_store_term() {
    let spec = GenSpec {
        noise_rel: 1e-13,
        ..GenSpec::default()
    };
    let ds = generate(&spec).unwrap().dataset;
    let report = bottom_up(&ds, &cfg(Algorithm::BottomUp, 10)).unwrap();
    assert_eq!(report.selected, names(&["STORE"]));
    assert_eq!(report.iterations.len(), 1);
    assert_eq!(report.stop_reason, StopReason::Converged);
    let term = &report.final_model.terms()[0];
    assert!((term.coefficient - 4.58765e-06).abs() < 1e-9 * 4.58765e-06);
}

#[test]
fn top_down_drops_noise_column_first() {
    // N is generated but absent from the truth. Where the exhaustive oracle
    // confirms N does not help, top-down must remove it first.
    let mut confirmed = 0;
    for seed in 0..20 {
        let spec = spec(&[("A", 4e-6), ("B", 2e-6)], &["A", "N", "B"], 0.01, seed);
        let ds = generate(&spec).unwrap().dataset;
        let oracle = exhaustive(&ds, &cfg(Algorithm::Exhaustive, 10)).unwrap();
        if oracle.selected != names(&["A", "B"]) {
            continue;
        }
        confirmed += 1;
        let report = top_down(&ds, &cfg(Algorithm::TopDown, 10)).unwrap();
        let first = &report.iterations[0];
        assert_eq!(first.action, Action::Remove);
        assert_eq!(first.counter.as_str(), "N", "seed {seed}");
        assert_eq!(report.final_cv_mape_pct, oracle.final_cv_mape_pct);
    }
    assert!(confirmed >= 10, "oracle confirmed only {confirmed}/20 datasets");
}

#[test]
fn exhaustive_returns_true_pair() {
    let spec = spec(&[("B", 3e-6), ("D", 5e-6)], &["A", "B", "C", "D"], 1e-3, 8);
    let ds = generate(&spec).unwrap().dataset;
    let report = exhaustive(&ds, &cfg(Algorithm::Exhaustive, 10)).unwrap();
    assert_eq!(report.selected, names(&["B", "D"]));
    assert_eq!(report.subsets_evaluated, Some(16));
}

#[test]
fn fifty_runs_fifty_folds() {
    let ds = random_dataset(2, 500, 2, 50);
    let split = kfold_split(&ds, 50, 0).unwrap();
    assert_eq!(split.mode, FoldMode::Runs);
    for fold in &split.folds {
        let runs: BTreeSet<_> = fold.iter().map(|&i| &ds.rows()[i].run_id).collect();
        assert_eq!(runs.len(), 1);
    }
    let report = bottom_up(&ds, &cfg(Algorithm::BottomUp, 50)).unwrap();
    assert_eq!(report.fold_mode, FoldMode::Runs);
}
