//! Alignment of counter traces with power traces.
//!
//! Samples are joined on the shared cycle-counter key. Cumulative 32-bit
//! counter readings are turned into per-interval deltas between consecutive
//! matched keys, so an unmatched key widens an interval instead of
//! corrupting it.

use serde::Serialize;

use crate::dataset::{CounterTrace, Dataset, PowerTrace, SampleRow};
use crate::error::{Error, Result};

/// Counters are 32 bits wide and wrap at this modulus.
pub const WRAP_MODULUS: u64 = 1 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyncConfig {
    /// Maximum cycle distance between a counter key and a power key that
    /// still counts as a match. Zero means exact equality.
    pub key_tolerance: u64,
    /// Drop keys present on only one side. When false, any unmatched key
    /// is an error.
    pub drop_unmatched: bool,
}

impl Default for SyncConfig {
    fn default() -> Self {
        SyncConfig {
            key_tolerance: 0,
            drop_unmatched: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    pub pmc_keys: usize,
    pub power_keys: usize,
    pub matched: usize,
    pub unmatched_pmc: usize,
    pub unmatched_power: usize,
    /// Counter keys excluded because their tolerance window was ambiguous.
    pub ambiguous: usize,
    /// `matched / max(pmc_keys, power_keys)`.
    pub match_fraction: f64,
}

impl std::fmt::Display for CoverageReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "matched {:.0}% of keys ({} of {} pmc / {} power; unmatched {} pmc, {} power; {} ambiguous)",
            self.match_fraction * 100.0,
            self.matched,
            self.pmc_keys,
            self.power_keys,
            self.unmatched_pmc,
            self.unmatched_power,
            self.ambiguous
        )
    }
}

struct KeyMatch {
    /// (counter index, power index), increasing in both.
    pairs: Vec<(usize, usize)>,
    /// Counter keys with more than one candidate, or sharing a candidate
    /// with a neighbouring counter key.
    ambiguous: Vec<u64>,
}

fn match_keys(pmc: &[u64], pwr: &[u64], tol: u64) -> KeyMatch {
    // (counter index, power index) for every counter key with exactly one
    // candidate in its window.
    let mut single: Vec<(usize, usize)> = Vec::new();
    let mut ambiguous = vec![false; pmc.len()];
    let mut lo = 0usize;
    for (i, &key) in pmc.iter().enumerate() {
        let start = key.saturating_sub(tol);
        let end = key.saturating_add(tol);
        while lo < pwr.len() && pwr[lo] < start {
            lo += 1;
        }
        let mut hi = lo;
        while hi < pwr.len() && pwr[hi] <= end {
            hi += 1;
        }
        match hi - lo {
            0 => {}
            1 => single.push((i, lo)),
            _ => ambiguous[i] = true,
        }
    }
    // a power key claimed by two counter keys is ambiguous for both
    let mut pairs = Vec::with_capacity(single.len());
    for (n, &(i, j)) in single.iter().enumerate() {
        let shared_prev = n > 0 && single[n - 1].1 == j;
        let shared_next = single.get(n + 1).is_some_and(|&(_, k)| k == j);
        if shared_prev || shared_next {
            ambiguous[i] = true;
        } else {
            pairs.push((i, j));
        }
    }
    KeyMatch {
        pairs,
        ambiguous: pmc
            .iter()
            .zip(&ambiguous)
            .filter(|(_, &a)| a)
            .map(|(&k, _)| k)
            .collect(),
    }
}

/// Joins the two traces and converts counters to per-interval deltas.
///
/// Each output row spans two consecutive matched keys and carries the power
/// (and frequency) sample taken at the later key.
pub fn synchronize(pmc: &CounterTrace, pwr: &PowerTrace, cfg: &SyncConfig) -> Result<Dataset> {
    if pmc.is_empty() || pwr.is_empty() {
        return Err(Error::InsufficientOverlap { matched: 0 });
    }
    let m = match_keys(pmc.time_keys(), pwr.time_keys(), cfg.key_tolerance);
    if let Some(&t) = m.ambiguous.first() {
        return Err(Error::AmbiguousKey(t));
    }
    if m.pairs.len() < 2 {
        return Err(Error::InsufficientOverlap {
            matched: m.pairs.len(),
        });
    }
    let unmatched_pmc = pmc.len() - m.pairs.len();
    let unmatched_pwr = pwr.len() - m.pairs.len();
    if !cfg.drop_unmatched && (unmatched_pmc > 0 || unmatched_pwr > 0) {
        return Err(Error::InvalidData(format!(
            "{unmatched_pmc} unmatched pmc key(s) and {unmatched_pwr} unmatched power key(s)"
        )));
    }
    if unmatched_pmc > 0 || unmatched_pwr > 0 {
        log::info!(
            "run {}: dropped {unmatched_pmc} pmc and {unmatched_pwr} power key(s)",
            pmc.run_id()
        );
    }

    let freq = pwr.freq_mhz();
    let rows = m
        .pairs
        .windows(2)
        .map(|w| {
            let (prev, _) = w[0];
            let (cur, j) = w[1];
            let deltas = pmc
                .row(cur)
                .iter()
                .zip(pmc.row(prev))
                .map(|(&now, &before)| u64::from(now.wrapping_sub(before)))
                .collect();
            SampleRow {
                time_key: pmc.time_keys()[cur],
                deltas,
                power_w: pwr.power_w()[j],
                freq_mhz: freq.map(|f| f[j]),
                run_id: pmc.run_id().to_string(),
            }
        })
        .collect();
    Dataset::new(pmc.counters().to_vec(), rows, pmc.run_id())
}

/// Match statistics for a trace pair. Never fails; ambiguous keys are
/// counted rather than reported as errors.
pub fn coverage_report(pmc: &CounterTrace, pwr: &PowerTrace, cfg: &SyncConfig) -> CoverageReport {
    let m = match_keys(pmc.time_keys(), pwr.time_keys(), cfg.key_tolerance);
    let matched = m.pairs.len();
    let denom = pmc.len().max(pwr.len());
    CoverageReport {
        pmc_keys: pmc.len(),
        power_keys: pwr.len(),
        matched,
        unmatched_pmc: pmc.len() - matched,
        unmatched_power: pwr.len() - matched,
        ambiguous: m.ambiguous.len(),
        match_fraction: if denom == 0 {
            0.0
        } else {
            matched as f64 / denom as f64
        },
    }
}
