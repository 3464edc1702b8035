//! Synthetic trace pairs with a known ground-truth power model.
//!
//! Counter deltas are drawn per interval, accumulated into wrapping 32-bit
//! cumulative traces, and power is the true model applied to each interval
//! with optional multiplicative Gaussian sensor noise. Alongside the traces
//! the generator returns the dataset a correct synchronisation must produce.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{CounterName, CounterTrace, Dataset, PowerTrace, SampleRow, LEON3_COUNTERS};
use crate::error::{Error, Result};
use crate::regress::{ModelKind, PowerModel};
use crate::sync::WRAP_MODULUS;

/// 80 MHz clock sampled at about 95 Hz.
pub const DEFAULT_SAMPLE_PERIOD: u64 = 842_105;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixTerm {
    pub from: CounterName,
    pub weight: f64,
}

/// Per-interval delta distribution of one counter: uniform integers in
/// `[min, max]`, plus `round(sum(weight * delta(from)))` over `mix`, which
/// may only reference counters listed earlier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterGen {
    pub name: CounterName,
    pub min: u64,
    pub max: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mix: Vec<MixTerm>,
}

impl CounterGen {
    pub fn uniform(name: &str, min: u64, max: u64) -> Result<Self> {
        Ok(CounterGen {
            name: CounterName::new(name)?,
            min,
            max,
            mix: vec![],
        })
    }
}

fn default_period() -> u64 {
    DEFAULT_SAMPLE_PERIOD
}

fn default_runs() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub true_model: PowerModel,
    /// Trace samples per run; each run yields `n_samples - 1` intervals.
    pub n_samples: usize,
    #[serde(default = "default_runs")]
    pub n_runs: usize,
    #[serde(default = "default_period")]
    pub sample_period_cycles: u64,
    /// Uniform jitter added to each counter-sample spacing.
    #[serde(default)]
    pub period_jitter_cycles: u64,
    /// Power keys are offset from counter keys by up to this many cycles.
    #[serde(default)]
    pub power_key_offset_cycles: u64,
    #[serde(default)]
    pub noise_rel: f64,
    pub counter_ranges: Vec<CounterGen>,
    /// Frequency of run `r` is `freq_levels_mhz[r % len]`. Empty means the
    /// power trace has no frequency channel.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub freq_levels_mhz: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub drop_rate: f64,
    #[serde(default)]
    pub inject_wrap: bool,
}

impl Default for GenSpec {
    /// Single-counter ground truth on the 16-counter LEON3 roster.
    fn default() -> Self {
        let store = CounterName::new("STORE").expect("valid name");
        GenSpec {
            true_model: PowerModel::pmc(2.59799, vec![(store, 4.58765e-06)]).expect("valid model"),
            n_samples: 1001,
            n_runs: 1,
            sample_period_cycles: DEFAULT_SAMPLE_PERIOD,
            period_jitter_cycles: 0,
            power_key_offset_cycles: 0,
            noise_rel: 0.01,
            counter_ranges: LEON3_COUNTERS
                .iter()
                .map(|c| CounterGen::uniform(c, 0, 200_000).expect("valid name"))
                .collect(),
            freq_levels_mhz: vec![],
            seed: 0,
            drop_rate: 0.0,
            inject_wrap: false,
        }
    }
}

impl GenSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: GenSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::GenSpec(m));
        if !(self.noise_rel >= 0.0 && self.noise_rel.is_finite()) {
            return bad(format!("noise_rel must be >= 0, got {}", self.noise_rel));
        }
        if !(0.0..1.0).contains(&self.drop_rate) {
            return bad(format!("drop_rate must be in [0, 1), got {}", self.drop_rate));
        }
        if self.n_samples < 2 {
            return bad("n_samples must be at least 2".into());
        }
        if self.n_runs == 0 {
            return bad("n_runs must be at least 1".into());
        }
        if self.sample_period_cycles <= 2 * self.period_jitter_cycles {
            return bad("sample period must exceed twice the jitter".into());
        }
        // neighbouring tolerance windows must not overlap
        let min_spacing = self.sample_period_cycles - self.period_jitter_cycles;
        if self.power_key_offset_cycles > 0 && min_spacing <= 4 * self.power_key_offset_cycles {
            return bad("power key offset too large for the sample spacing".into());
        }
        let names: Vec<CounterName> = self.counter_ranges.iter().map(|c| c.name.clone()).collect();
        crate::dataset::ensure_unique(&names).map_err(|e| Error::GenSpec(e.to_string()))?;
        for (i, c) in self.counter_ranges.iter().enumerate() {
            if c.min > c.max {
                return bad(format!("{}: min > max", c.name));
            }
            let mut bound = c.max as f64;
            for m in &c.mix {
                let Some(j) = names[..i].iter().position(|n| n == &m.from) else {
                    return bad(format!("{}: mix source {} must be listed earlier", c.name, m.from));
                };
                if !(m.weight >= 0.0 && m.weight.is_finite()) {
                    return bad(format!("{}: mix weight must be non-negative", c.name));
                }
                bound += m.weight * self.delta_bound(j);
            }
            if bound >= WRAP_MODULUS as f64 {
                return bad(format!("{}: deltas may reach 2^32", c.name));
            }
        }
        match self.true_model.kind() {
            ModelKind::Pmc => {
                for c in self.true_model.counters() {
                    if !names.contains(&c) {
                        return bad(format!("model counter {c} has no range"));
                    }
                }
            }
            ModelKind::FreqBaseline => {
                if self.freq_levels_mhz.is_empty() {
                    return bad("frequency baseline model needs freq_levels_mhz".into());
                }
            }
        }
        if self.freq_levels_mhz.iter().any(|f| !(*f > 0.0 && f.is_finite())) {
            return bad("frequency levels must be positive".into());
        }
        Ok(())
    }

    fn delta_bound(&self, j: usize) -> f64 {
        let c = &self.counter_ranges[j];
        let names: Vec<&CounterName> = self.counter_ranges.iter().map(|c| &c.name).collect();
        c.max as f64
            + c.mix
                .iter()
                .filter_map(|m| names.iter().position(|n| *n == &m.from))
                .map(|k| self.delta_bound(k))
                .sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    /// One (counter, power) trace pair per run.
    pub traces: Vec<(CounterTrace, PowerTrace)>,
    /// The synchronisation of all runs, concatenated in run order.
    pub dataset: Dataset,
}

pub fn run_label(r: usize) -> String {
    format!("run{r}")
}

pub fn generate(spec: &GenSpec) -> Result<Generated> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_rel).map_err(|e| Error::GenSpec(e.to_string()))?;
    let names: Vec<CounterName> = spec.counter_ranges.iter().map(|c| c.name.clone()).collect();
    let model = spec.true_model.bind(&names)?;
    let n = spec.n_samples;
    let width = names.len();

    let mut traces = Vec::with_capacity(spec.n_runs);
    let mut rows = Vec::new();
    for r in 0..spec.n_runs {
        let run = run_label(r);
        let freq = (!spec.freq_levels_mhz.is_empty())
            .then(|| spec.freq_levels_mhz[r % spec.freq_levels_mhz.len()]);

        // deltas[i] is the interval ending at sample i; deltas[0] precedes the trace
        let deltas: Vec<Vec<u64>> = (0..n).map(|_| draw_deltas(spec, &mut rng)).collect();

        let mut keys = Vec::with_capacity(n);
        let mut key = spec.sample_period_cycles;
        for i in 0..n {
            if i > 0 {
                let j = spec.period_jitter_cycles as i64;
                let step = spec.sample_period_cycles as i64 + rng.random_range(-j..=j);
                key += step as u64;
            }
            keys.push(key);
        }

        let starts: Vec<u32> = (0..width)
            .map(|j| {
                if spec.inject_wrap {
                    let total: u64 = deltas[1..].iter().map(|d| d[j]).sum();
                    (WRAP_MODULUS - (total / 2).min(WRAP_MODULUS - 1)) as u32
                } else {
                    0
                }
            })
            .collect();
        let mut cumulative = Vec::with_capacity(n);
        let mut acc = starts;
        for (i, d) in deltas.iter().enumerate() {
            if i > 0 {
                for (a, &dj) in acc.iter_mut().zip(d) {
                    *a = a.wrapping_add(dj as u32);
                }
            }
            cumulative.push(acc.clone());
        }

        let mut power = Vec::with_capacity(n);
        for d in &deltas {
            let row = SampleRow {
                time_key: 0,
                deltas: d.clone(),
                power_w: 1.0,
                freq_mhz: freq,
                run_id: String::new(),
            };
            let clean = model.predict(&row)?;
            let factor = if spec.noise_rel > 0.0 { 1.0 + noise.sample(&mut rng) } else { 1.0 };
            let p = clean * factor;
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::GenSpec(format!(
                    "model produced non-positive power {p} in {run}"
                )));
            }
            power.push(p);
        }

        let kept: Vec<bool> = (0..n)
            .map(|_| spec.drop_rate == 0.0 || !rng.random_bool(spec.drop_rate))
            .collect();
        let o = spec.power_key_offset_cycles as i64;
        let power_keys: Vec<u64> = keys
            .iter()
            .map(|&k| {
                if o == 0 {
                    k
                } else {
                    (k as i64 + rng.random_range(-o..=o)) as u64
                }
            })
            .collect();

        // reference join: consecutive kept samples, deltas summed over any gap
        let mut prev: Option<usize> = None;
        for i in (0..n).filter(|&i| kept[i]) {
            if let Some(p) = prev {
                let mut sum = vec![0u64; width];
                for d in &deltas[p + 1..=i] {
                    for (s, &dj) in sum.iter_mut().zip(d) {
                        *s += dj;
                    }
                }
                rows.push(SampleRow {
                    time_key: keys[i],
                    deltas: sum,
                    power_w: power[i],
                    freq_mhz: freq,
                    run_id: run.clone(),
                });
            }
            prev = Some(i);
        }

        let pmc = CounterTrace::new(run.clone(), names.clone(), keys, cumulative)?;
        let pick = |v: &[f64]| -> Vec<f64> { (0..n).filter(|&i| kept[i]).map(|i| v[i]).collect() };
        let pwr = PowerTrace::new(
            run.clone(),
            (0..n).filter(|&i| kept[i]).map(|i| power_keys[i]).collect(),
            pick(&power),
            freq.map(|f| vec![f; kept.iter().filter(|k| **k).count()]),
        )?;
        traces.push((pmc, pwr));
    }
    let dataset = Dataset::new(names, rows, format!("datagen seed {}", spec.seed))?;
    Ok(Generated { traces, dataset })
}

fn draw_deltas(spec: &GenSpec, rng: &mut ChaCha8Rng) -> Vec<u64> {
    let mut out: Vec<u64> = Vec::with_capacity(spec.counter_ranges.len());
    for c in &spec.counter_ranges {
        let mut d = rng.random_range(c.min..=c.max);
        if !c.mix.is_empty() {
            let mixed: f64 = c
                .mix
                .iter()
                .map(|m| {
                    let j = spec
                        .counter_ranges
                        .iter()
                        .position(|o| o.name == m.from)
                        .expect("validated");
                    m.weight * out[j] as f64
                })
                .sum();
            d += mixed.round() as u64;
        }
        out.push(d);
    }
    out
}

/// Paths written by [`Generated::write_files`].
#[derive(Debug, Clone)]
pub struct GenOutputs {
    pub pmc: Vec<PathBuf>,
    pub power: Vec<PathBuf>,
    pub dataset: PathBuf,
    pub model: PathBuf,
}

impl Generated {
    /// Writes `<prefix>.<run>.pmc.csv`, `<prefix>.<run>.power.csv` per run,
    /// `<prefix>.dataset.csv` and the true model as `<prefix>.model.json`.
    pub fn write_files(&self, prefix: &Path, true_model: &PowerModel) -> Result<GenOutputs> {
        let with = |suffix: &str| {
            let mut s = prefix.as_os_str().to_owned();
            s.push(suffix);
            PathBuf::from(s)
        };
        let mut out = GenOutputs {
            pmc: vec![],
            power: vec![],
            dataset: with(".dataset.csv"),
            model: with(".model.json"),
        };
        for (pmc, pwr) in &self.traces {
            let p = with(&format!(".{}.pmc.csv", pmc.run_id()));
            pmc.write_csv(&p)?;
            out.pmc.push(p);
            let p = with(&format!(".{}.power.csv", pwr.run_id()));
            pwr.write_csv(&p)?;
            out.power.push(p);
        }
        self.dataset.write_csv(&out.dataset)?;
        true_model.write_json(&out.model)?;
        Ok(out)
    }
}
