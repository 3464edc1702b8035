#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use repps::{CounterName, CounterTrace, PowerTrace};

/// Result of the brute-force join: either rows of (time_key, deltas, power,
/// freq) or the TIME of the first ambiguous counter key.
#[derive(Debug, PartialEq)]
pub enum RefJoin {
    Rows(Vec<(u64, Vec<u64>, f64, Option<f64>)>),
    Ambiguous(u64),
    Insufficient(usize),
}

/// O(n*m) reference synchronisation: every counter key is compared against
/// every power key.
pub fn reference_join(pmc: &CounterTrace, pwr: &PowerTrace, tol: u64) -> RefJoin {
    let pk = pmc.time_keys();
    let wk = pwr.time_keys();
    let near = |a: u64, b: u64| a.abs_diff(b) <= tol;
    let mut pairs = Vec::new();
    let mut first_ambiguous = None;
    for (i, &k) in pk.iter().enumerate() {
        let hits: Vec<usize> = (0..wk.len()).filter(|&j| near(k, wk[j])).collect();
        let ambiguous = match hits.as_slice() {
            [] => false,
            [j] => pk.iter().filter(|&&other| near(other, wk[*j])).count() > 1,
            _ => true,
        };
        if ambiguous {
            first_ambiguous.get_or_insert(k);
        } else if let [j] = hits.as_slice() {
            pairs.push((i, *j));
        }
    }
    if let Some(t) = first_ambiguous {
        return RefJoin::Ambiguous(t);
    }
    if pairs.len() < 2 {
        return RefJoin::Insufficient(pairs.len());
    }
    let rows = pairs
        .windows(2)
        .map(|w| {
            let (a, _) = w[0];
            let (b, j) = w[1];
            let deltas = pmc
                .row(b)
                .iter()
                .zip(pmc.row(a))
                .map(|(&now, &before)| (now as i64 - before as i64).rem_euclid(1 << 32) as u64)
                .collect();
            (pk[b], deltas, pwr.power_w()[j], pwr.freq_mhz().map(|f| f[j]))
        })
        .collect();
    RefJoin::Rows(rows)
}

pub struct TracePair {
    pub pmc: CounterTrace,
    pub pwr: PowerTrace,
    pub tolerance: u64,
}

/// Random trace pair with dropped keys on both sides, jittered power keys,
/// extra unmatched power samples, and every counter wrapping past 2^32
/// exactly once.
pub fn random_trace_pair(seed: u64) -> TracePair {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..200);
    let width = rng.random_range(1..5);
    let tolerance = if rng.random_bool(0.5) { 0 } else { rng.random_range(1..50) };
    let mut keys = Vec::with_capacity(n);
    let mut k = rng.random_range(0..1000u64);
    for _ in 0..n {
        k += rng.random_range(200..1000);
        keys.push(k);
    }
    // each column peaks at u32::MAX halfway through, so it wraps once
    let mid = n / 2 - 1;
    let mut columns = Vec::with_capacity(width);
    for _ in 0..width {
        let steps: Vec<u32> = (0..n).map(|_| rng.random_range(1..1_000_000)).collect();
        let peak: u32 = steps[..=mid].iter().fold(0u32, |a, &s| a.wrapping_add(s));
        let mut acc = u32::MAX.wrapping_sub(peak);
        columns.push(
            steps
                .iter()
                .map(|&s| {
                    acc = acc.wrapping_add(s);
                    acc
                })
                .collect::<Vec<u32>>(),
        );
    }
    let values = (0..n).map(|i| columns.iter().map(|c| c[i]).collect()).collect();
    let counters = (0..width)
        .map(|j| CounterName::new(format!("C{}", j + 1)).unwrap())
        .collect();
    let pmc = CounterTrace::new("r", counters, keys.clone(), values).unwrap();

    let drop = rng.random_range(0.0..0.4);
    let mut pkeys: Vec<u64> = Vec::new();
    for &key in &keys {
        if rng.random_bool(drop) {
            continue;
        }
        let off = if tolerance == 0 {
            0
        } else {
            // occasionally step just outside the window
            rng.random_range(-(tolerance as i64) - 2..=tolerance as i64 + 2)
        };
        pkeys.push((key as i64 + off).max(0) as u64);
    }
    // spurious power samples, some landing inside windows
    for _ in 0..rng.random_range(0..5) {
        let base = keys[rng.random_range(0..n)];
        pkeys.push(base + rng.random_range(0..150));
    }
    pkeys.sort_unstable();
    pkeys.dedup();
    let power = (0..pkeys.len()).map(|_| rng.random_range(1.0..4.0)).collect();
    let freq = rng
        .random_bool(0.5)
        .then(|| (0..pkeys.len()).map(|_| rng.random_range(20.0..100.0)).collect());
    let pwr = PowerTrace::new("r", pkeys, power, freq).unwrap();
    TracePair {
        pmc,
        pwr,
        tolerance,
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// One-line reference MAPE.
pub fn reference_mape(a: &[f64], p: &[f64]) -> f64 {
    a.iter().zip(p).map(|(a, p)| ((a - p) / a).abs()).sum::<f64>() / a.len() as f64 * 100.0
}

/// Dataset of `n` rows over counters C1..Cp, each delta uniform in
/// [0, 1e6), power a positive linear function of the deltas times a
/// uniform factor in [0.98, 1.02), and rows dealt round-robin over `runs`
/// runs.
pub fn random_dataset(seed: u64, n: usize, p: usize, runs: usize) -> repps::Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counters: Vec<CounterName> = (0..p)
        .map(|j| CounterName::new(format!("C{}", j + 1)).unwrap())
        .collect();
    let weights: Vec<f64> = (0..p).map(|_| rng.random_range(0.0..5e-6)).collect();
    let rows = (0..n)
        .map(|i| {
            let deltas: Vec<u64> = (0..p).map(|_| rng.random_range(0..1_000_000)).collect();
            let clean = 1.5 + dot(&weights, &deltas.iter().map(|&d| d as f64).collect::<Vec<_>>());
            repps::SampleRow {
                time_key: 1000 * (i as u64 + 1),
                deltas,
                power_w: clean * (1.0 + rng.random_range(-0.02..0.02)),
                freq_mhz: None,
                run_id: format!("run{}", i % runs.max(1)),
            }
        })
        .collect();
    repps::Dataset::new(counters, rows, "random").unwrap()
}

pub fn names(list: &[&str]) -> Vec<CounterName> {
    list.iter().map(|s| CounterName::new(*s).unwrap()).collect()
}
