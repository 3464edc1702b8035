//! Counter subset selection scored by k-fold cross-validated MAPE.
//!
//! Two greedy searches are provided: bottom-up adds the candidate that
//! lowers CV-MAPE the most until nothing improves (or a size cap is hit);
//! top-down starts from a full set and removes counters while CV-MAPE does
//! not get worse. An exhaustive search over all subsets of a small pool
//! serves as the global-optimum reference. Whatever the search, the final
//! coefficients are refit on every training row.
//!
//! Candidate scores within an iteration may be computed in parallel; the
//! reduction is ordered and ties go to the lowest candidate-pool index, so
//! results do not depend on scheduling.

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{CounterName, Dataset};
use crate::error::{Error, Result};
use crate::regress::{fit_ols, mape, predictor_indices, Algorithm, Design, PowerModel, TrainingMeta};

/// Bottom-up only accepts an addition that lowers CV-MAPE by more than this.
pub const IMPROVEMENT_EPS: f64 = 1e-12;

/// Largest candidate pool accepted by the exhaustive search.
pub const EXHAUSTIVE_MAX_POOL: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    pub algorithm: Algorithm,
    pub folds: usize,
    /// Starting set. Empty means "nothing" for bottom-up and "whole pool"
    /// for top-down.
    pub initial_set: Vec<CounterName>,
    pub max_events: Option<usize>,
    /// Candidates in tie-break order. Empty means every dataset counter.
    pub candidate_pool: Vec<CounterName>,
    pub fold_seed: u64,
    pub parallel: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            algorithm: Algorithm::BottomUp,
            folds: 10,
            initial_set: vec![],
            max_events: None,
            candidate_pool: vec![],
            fold_seed: 0,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldMode {
    /// Whole runs are assigned to folds.
    Runs,
    /// Contiguous row blocks, used when there are fewer runs than folds.
    Blocks,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    pub mode: FoldMode,
    /// Sorted row indices held out in each fold.
    pub folds: Vec<Vec<usize>>,
}

/// Partitions row indices into `k` folds.
///
/// With at least `k` distinct runs, runs are shuffled with `seed` and dealt
/// round-robin so fold sizes differ by at most one run. Otherwise rows are
/// cut into `k` contiguous blocks differing by at most one row.
pub fn kfold_split(ds: &Dataset, k: usize, seed: u64) -> Result<FoldSplit> {
    if k < 2 {
        return Err(Error::Folds(format!("need at least 2 folds, got {k}")));
    }
    let runs = ds.run_ids();
    if runs.len() >= k {
        let mut order: Vec<usize> = (0..runs.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut fold_of_run = vec![0usize; runs.len()];
        for (pos, &run) in order.iter().enumerate() {
            fold_of_run[run] = pos % k;
        }
        let run_index: std::collections::HashMap<&str, usize> =
            runs.iter().enumerate().map(|(i, r)| (*r, i)).collect();
        let mut folds = vec![Vec::new(); k];
        for (i, row) in ds.rows().iter().enumerate() {
            folds[fold_of_run[run_index[row.run_id.as_str()]]].push(i);
        }
        return Ok(FoldSplit {
            mode: FoldMode::Runs,
            folds,
        });
    }
    let n = ds.len();
    if n < k {
        return Err(Error::Folds(format!(
            "{k} folds exceed the {} run(s) and {n} row(s) available",
            runs.len()
        )));
    }
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push((start..start + len).collect());
        start += len;
    }
    Ok(FoldSplit {
        mode: FoldMode::Blocks,
        folds,
    })
}

/// Precomputed folds and design columns for repeated CV scoring.
pub struct CrossValidator {
    design: Design,
    split: FoldSplit,
    train: Vec<Vec<usize>>,
}

impl CrossValidator {
    pub fn new(ds: &Dataset, k: usize, seed: u64) -> Result<Self> {
        let split = kfold_split(ds, k, seed)?;
        let train = split
            .folds
            .iter()
            .map(|held_out| {
                let mut mask = vec![true; ds.len()];
                for &i in held_out {
                    mask[i] = false;
                }
                (0..ds.len()).filter(|&i| mask[i]).collect()
            })
            .collect();
        Ok(CrossValidator {
            design: Design::new(ds),
            split,
            train,
        })
    }

    pub fn split(&self) -> &FoldSplit {
        &self.split
    }

    /// Mean held-out MAPE over all folds for the given dataset columns.
    /// Columns are fitted in dataset order, so the score depends only on
    /// the set and not on the order it was assembled in.
    pub fn score(&self, predictors: &[usize]) -> Result<f64> {
        let mut predictors = predictors.to_vec();
        predictors.sort_unstable();
        let predictors = predictors.as_slice();
        let mut total = 0.0;
        for (f, (test, train)) in self.split.folds.iter().zip(&self.train).enumerate() {
            let fold_err = |e| Error::Fold {
                fold: f,
                source: Box::new(e),
            };
            let fit = self.design.fit(predictors, Some(train)).map_err(fold_err)?;
            let predicted = self.design.predict(&fit, predictors, test);
            let actual: Vec<f64> = test.iter().map(|&i| self.design.power()[i]).collect();
            total += mape(&actual, &predicted).map_err(fold_err)?;
        }
        Ok(total / self.split.folds.len() as f64)
    }

    /// Score used by the searches: fit failures become +infinity.
    fn candidate_score(&self, predictors: &[usize]) -> f64 {
        match self.score(predictors) {
            Ok(s) if !s.is_nan() => s,
            Ok(_) => f64::INFINITY,
            Err(e) => {
                log::debug!("candidate {predictors:?} unscorable: {e}");
                f64::INFINITY
            }
        }
    }

    fn scores(&self, sets: &[Vec<usize>], parallel: bool) -> Vec<f64> {
        if parallel {
            sets.par_iter().map(|s| self.candidate_score(s)).collect()
        } else {
            sets.iter().map(|s| self.candidate_score(s)).collect()
        }
    }
}

/// k-fold cross-validated MAPE of an OLS model over `predictors`.
pub fn cv_score(ds: &Dataset, predictors: &[CounterName], k: usize, seed: u64) -> Result<f64> {
    let idx = predictor_indices(ds, predictors)?;
    CrossValidator::new(ds, k, seed)?.score(&idx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Add,
    Remove,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// No candidate improved the score (bottom-up) or every removal made it
    /// worse (top-down).
    Converged,
    MaxEvents,
    /// Nothing left to add or remove.
    PoolExhausted,
    /// Every admissible subset was scored.
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Iteration {
    pub action: Action,
    pub counter: CounterName,
    /// Score of the set after this step.
    pub cv_mape_pct: f64,
    /// Every candidate evaluated in this step, in pool order. `null` marks
    /// a candidate whose fit failed on some fold.
    pub scores: IndexMap<String, Option<f64>>,
    /// Other candidates that scored exactly as well and lost the tie-break.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tied_with: Vec<CounterName>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub algorithm: Algorithm,
    pub folds: usize,
    pub fold_seed: u64,
    pub fold_mode: FoldMode,
    pub candidate_pool: Vec<CounterName>,
    pub initial_set: Vec<CounterName>,
    pub initial_cv_mape_pct: Option<f64>,
    pub iterations: Vec<Iteration>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsets_evaluated: Option<usize>,
    pub stop_reason: StopReason,
    pub selected: Vec<CounterName>,
    pub final_cv_mape_pct: Option<f64>,
    pub final_model: PowerModel,
}

impl SearchReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_json(&self, path: &std::path::Path) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Pool and starting set resolved to dataset column indices.
struct Resolved {
    pool: Vec<CounterName>,
    pool_cols: Vec<usize>,
    /// positions into `pool`
    initial: Vec<usize>,
}

fn resolve(ds: &Dataset, cfg: &SearchConfig, initial_defaults_to_pool: bool) -> Result<Resolved> {
    let pool = if cfg.candidate_pool.is_empty() {
        if initial_defaults_to_pool && !cfg.initial_set.is_empty() {
            cfg.initial_set.clone()
        } else {
            ds.counters().to_vec()
        }
    } else {
        cfg.candidate_pool.clone()
    };
    let pool_cols = predictor_indices(ds, &pool)?;
    crate::dataset::ensure_unique(&cfg.initial_set)?;
    let mut initial = cfg
        .initial_set
        .iter()
        .map(|c| {
            pool.iter().position(|p| p == c).ok_or_else(|| {
                Error::SearchConfig(format!("initial counter {c} is not in the candidate pool"))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if initial.is_empty() && initial_defaults_to_pool {
        initial = (0..pool.len()).collect();
    }
    Ok(Resolved {
        pool,
        pool_cols,
        initial,
    })
}

fn check_algorithm(cfg: &SearchConfig, expected: Algorithm) -> Result<()> {
    if cfg.algorithm != expected {
        return Err(Error::SearchConfig(format!(
            "configuration is for {}, not {expected}",
            cfg.algorithm
        )));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn finish(
    ds: &Dataset,
    cfg: &SearchConfig,
    cv: &CrossValidator,
    r: &Resolved,
    selected: &[usize],
    initial_score: f64,
    iterations: Vec<Iteration>,
    stop_reason: StopReason,
    subsets_evaluated: Option<usize>,
) -> Result<SearchReport> {
    let names: Vec<CounterName> = selected.iter().map(|&p| r.pool[p].clone()).collect();
    let cols: Vec<usize> = selected.iter().map(|&p| r.pool_cols[p]).collect();
    let final_cv = cv.candidate_score(&cols);
    let (model, diag) = fit_ols(ds, &names)?;
    let final_model = model.with_training(TrainingMeta {
        algorithm: cfg.algorithm,
        folds: Some(cfg.folds),
        cv_mape_pct: finite(final_cv),
        train_mape_pct: diag.train_mape_pct,
    });
    log::info!(
        "{}: selected {:?}, cv {:.4}%, train {:.4}% ({:?})",
        cfg.algorithm,
        names.iter().map(CounterName::as_str).collect::<Vec<_>>(),
        final_cv,
        diag.train_mape_pct,
        stop_reason
    );
    Ok(SearchReport {
        algorithm: cfg.algorithm,
        folds: cfg.folds,
        fold_seed: cfg.fold_seed,
        fold_mode: cv.split().mode,
        candidate_pool: r.pool.clone(),
        initial_set: r.initial.iter().map(|&p| r.pool[p].clone()).collect(),
        initial_cv_mape_pct: finite(initial_score),
        iterations,
        subsets_evaluated,
        stop_reason,
        selected: names,
        final_cv_mape_pct: finite(final_cv),
        final_model,
    })
}

/// Lowest score, earliest position on ties; also returns exact ties.
fn pick_best(scores: &[f64]) -> Option<(usize, Vec<usize>)> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if best.is_none_or(|b| s < scores[b]) {
            best = Some(i);
        }
    }
    let b = best?;
    let ties = (0..scores.len())
        .filter(|&i| i != b && scores[i] == scores[b])
        .collect();
    Some((b, ties))
}

/// Greedy forward selection.
pub fn bottom_up(ds: &Dataset, cfg: &SearchConfig) -> Result<SearchReport> {
    check_algorithm(cfg, Algorithm::BottomUp)?;
    let r = resolve(ds, cfg, false)?;
    if r.pool.is_empty() {
        return Err(Error::SearchConfig("empty candidate pool".into()));
    }
    if let Some(max) = cfg.max_events {
        if r.initial.len() > max {
            return Err(Error::SearchConfig(format!(
                "initial set has {} counters, more than max_events = {max}",
                r.initial.len()
            )));
        }
    }
    let cv = CrossValidator::new(ds, cfg.folds, cfg.fold_seed)?;
    log::info!("bottom_up: {} folds ({:?})", cfg.folds, cv.split().mode);

    let mut selected = r.initial.clone();
    let cols_of = |set: &[usize]| -> Vec<usize> { set.iter().map(|&p| r.pool_cols[p]).collect() };
    let initial_score = cv.candidate_score(&cols_of(&selected));
    let mut current = initial_score;
    let mut iterations = Vec::new();

    let stop_reason = loop {
        if cfg.max_events.is_some_and(|max| selected.len() >= max) {
            break StopReason::MaxEvents;
        }
        let candidates: Vec<usize> = (0..r.pool.len()).filter(|p| !selected.contains(p)).collect();
        if candidates.is_empty() {
            break StopReason::PoolExhausted;
        }
        let sets: Vec<Vec<usize>> = candidates
            .iter()
            .map(|&c| {
                let mut s = selected.clone();
                s.push(c);
                cols_of(&s)
            })
            .collect();
        let scores = cv.scores(&sets, cfg.parallel);
        let (best, ties) = pick_best(&scores).expect("non-empty candidates");
        let best_score = scores[best];
        if !(best_score.is_finite() && best_score < current - IMPROVEMENT_EPS) {
            break StopReason::Converged;
        }
        let chosen = candidates[best];
        log::info!("bottom_up: + {} -> {best_score:.6}%", r.pool[chosen]);
        iterations.push(Iteration {
            action: Action::Add,
            counter: r.pool[chosen].clone(),
            cv_mape_pct: best_score,
            scores: candidates
                .iter()
                .zip(&scores)
                .map(|(&c, &s)| (r.pool[c].to_string(), finite(s)))
                .collect(),
            tied_with: ties.iter().map(|&t| r.pool[candidates[t]].clone()).collect(),
        });
        selected.push(chosen);
        current = best_score;
    };
    finish(ds, cfg, &cv, &r, &selected, initial_score, iterations, stop_reason, None)
}

/// Greedy backward elimination. Removals that leave the score unchanged
/// are accepted, preferring the smaller model.
pub fn top_down(ds: &Dataset, cfg: &SearchConfig) -> Result<SearchReport> {
    check_algorithm(cfg, Algorithm::TopDown)?;
    let r = resolve(ds, cfg, true)?;
    if r.initial.is_empty() {
        return Err(Error::SearchConfig("top-down needs a non-empty initial set".into()));
    }
    let cv = CrossValidator::new(ds, cfg.folds, cfg.fold_seed)?;
    log::info!("top_down: {} folds ({:?})", cfg.folds, cv.split().mode);

    // kept in pool order so that candidate order is the tie-break order
    let mut selected = r.initial.clone();
    selected.sort_unstable();
    let cols_of = |set: &[usize]| -> Vec<usize> { set.iter().map(|&p| r.pool_cols[p]).collect() };
    let initial_score = cv.candidate_score(&cols_of(&selected));
    let mut current = initial_score;
    let mut iterations = Vec::new();

    let stop_reason = loop {
        if selected.is_empty() {
            break StopReason::PoolExhausted;
        }
        let sets: Vec<Vec<usize>> = (0..selected.len())
            .map(|i| {
                let mut s = selected.clone();
                s.remove(i);
                cols_of(&s)
            })
            .collect();
        let scores = cv.scores(&sets, cfg.parallel);
        let (best, ties) = pick_best(&scores).expect("non-empty set");
        let best_score = scores[best];
        if !(best_score.is_finite() && best_score <= current) {
            break StopReason::Converged;
        }
        let removed = selected[best];
        log::info!("top_down: - {} -> {best_score:.6}%", r.pool[removed]);
        iterations.push(Iteration {
            action: Action::Remove,
            counter: r.pool[removed].clone(),
            cv_mape_pct: best_score,
            scores: selected
                .iter()
                .zip(&scores)
                .map(|(&c, &s)| (r.pool[c].to_string(), finite(s)))
                .collect(),
            tied_with: ties.iter().map(|&t| r.pool[selected[t]].clone()).collect(),
        });
        selected.remove(best);
        current = best_score;
    };
    finish(ds, cfg, &cv, &r, &selected, initial_score, iterations, stop_reason, None)
}

/// Scores every subset of the pool (up to `max_events` counters) and
/// returns the best. Ties go to the smaller subset, then to the
/// lexicographically first list of pool positions.
pub fn exhaustive(ds: &Dataset, cfg: &SearchConfig) -> Result<SearchReport> {
    check_algorithm(cfg, Algorithm::Exhaustive)?;
    let r = resolve(ds, cfg, false)?;
    if r.pool.len() > EXHAUSTIVE_MAX_POOL {
        return Err(Error::SearchConfig(format!(
            "pool too large for exhaustive search: {} > {EXHAUSTIVE_MAX_POOL}",
            r.pool.len()
        )));
    }
    let cv = CrossValidator::new(ds, cfg.folds, cfg.fold_seed)?;
    let max = cfg.max_events.unwrap_or(r.pool.len());
    let subsets: Vec<Vec<usize>> = (0u32..(1u32 << r.pool.len()))
        .filter(|m| m.count_ones() as usize <= max)
        .map(|m| (0..r.pool.len()).filter(|&p| m & (1 << p) != 0).collect())
        .collect();
    let sets: Vec<Vec<usize>> = subsets
        .iter()
        .map(|s| s.iter().map(|&p| r.pool_cols[p]).collect())
        .collect();
    let scores = cv.scores(&sets, cfg.parallel);
    let mut best = 0;
    for i in 1..subsets.len() {
        let (s, b) = (scores[i], scores[best]);
        let better = s < b
            || (s == b
                && (subsets[i].len(), &subsets[i]) < (subsets[best].len(), &subsets[best]));
        if better {
            best = i;
        }
    }
    // subsets[0] is the empty set
    let empty_score = scores[0];
    finish(
        ds,
        cfg,
        &cv,
        &r,
        &subsets[best],
        empty_score,
        vec![],
        StopReason::Exhausted,
        Some(subsets.len()),
    )
}

/// Runs the search named by `cfg.algorithm`.
pub fn run_search(ds: &Dataset, cfg: &SearchConfig) -> Result<SearchReport> {
    match cfg.algorithm {
        Algorithm::BottomUp => bottom_up(ds, cfg),
        Algorithm::TopDown => top_down(ds, cfg),
        Algorithm::Exhaustive => exhaustive(ds, cfg),
        Algorithm::Manual => Err(Error::SearchConfig(
            "manual is not a search algorithm".into(),
        )),
    }
}
