use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{CounterName, SampleRow, FREQ_COLUMN};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Pmc,
    FreqBaseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    BottomUp,
    TopDown,
    Manual,
    Exhaustive,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::BottomUp => "bottom_up",
            Algorithm::TopDown => "top_down",
            Algorithm::Manual => "manual",
            Algorithm::Exhaustive => "exhaustive",
        })
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bottom_up" => Ok(Algorithm::BottomUp),
            "top_down" => Ok(Algorithm::TopDown),
            "manual" => Ok(Algorithm::Manual),
            "exhaustive" => Ok(Algorithm::Exhaustive),
            other => Err(Error::SearchConfig(format!("unknown algorithm {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub algorithm: Algorithm,
    pub folds: Option<usize>,
    pub cv_mape_pct: Option<f64>,
    pub train_mape_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub counter: String,
    pub coefficient: f64,
}

/// Linear power model `P = intercept + sum(coefficient * events)`.
///
/// For [`ModelKind::Pmc`] each term names an event counter and multiplies its
/// per-interval delta. A [`ModelKind::FreqBaseline`] model has exactly one
/// term, `FREQ_MHZ`, multiplying the sensor frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel", into = "RawModel")]
pub struct PowerModel {
    kind: ModelKind,
    intercept_w: f64,
    terms: Vec<Term>,
    training: Option<TrainingMeta>,
}

#[derive(Serialize, Deserialize)]
struct RawModel {
    kind: ModelKind,
    intercept_w: f64,
    terms: Vec<Term>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    training: Option<TrainingMeta>,
}

impl TryFrom<RawModel> for PowerModel {
    type Error = Error;

    fn try_from(raw: RawModel) -> Result<Self> {
        PowerModel::from_parts(raw.kind, raw.intercept_w, raw.terms, raw.training)
    }
}

impl From<PowerModel> for RawModel {
    fn from(m: PowerModel) -> Self {
        RawModel {
            kind: m.kind,
            intercept_w: m.intercept_w,
            terms: m.terms,
            training: m.training,
        }
    }
}

impl PowerModel {
    pub fn from_parts(
        kind: ModelKind,
        intercept_w: f64,
        terms: Vec<Term>,
        training: Option<TrainingMeta>,
    ) -> Result<Self> {
        if !intercept_w.is_finite() {
            return Err(Error::InvalidModel("non-finite intercept".into()));
        }
        let mut seen = HashSet::new();
        for t in &terms {
            if !t.coefficient.is_finite() {
                return Err(Error::InvalidModel(format!(
                    "non-finite coefficient for {}",
                    t.counter
                )));
            }
            if !seen.insert(t.counter.as_str()) {
                return Err(Error::InvalidModel(format!("duplicate counter {}", t.counter)));
            }
            if kind == ModelKind::Pmc {
                CounterName::new(t.counter.as_str())
                    .map_err(|e| Error::InvalidModel(e.to_string()))?;
            }
        }
        if kind == ModelKind::FreqBaseline
            && !(terms.len() == 1 && terms[0].counter == FREQ_COLUMN)
        {
            return Err(Error::InvalidModel(
                "frequency baseline needs exactly one FREQ_MHZ term".into(),
            ));
        }
        Ok(PowerModel {
            kind,
            intercept_w,
            terms,
            training,
        })
    }

    pub fn pmc(intercept_w: f64, terms: Vec<(CounterName, f64)>) -> Result<Self> {
        let terms = terms
            .into_iter()
            .map(|(c, coefficient)| Term {
                counter: c.into(),
                coefficient,
            })
            .collect();
        PowerModel::from_parts(ModelKind::Pmc, intercept_w, terms, None)
    }

    pub fn freq_baseline(intercept_w: f64, coefficient: f64) -> Result<Self> {
        let terms = vec![Term {
            counter: FREQ_COLUMN.to_string(),
            coefficient,
        }];
        PowerModel::from_parts(ModelKind::FreqBaseline, intercept_w, terms, None)
    }

    pub fn with_training(mut self, training: TrainingMeta) -> Self {
        self.training = Some(training);
        self
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn intercept_w(&self) -> f64 {
        self.intercept_w
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn training(&self) -> Option<&TrainingMeta> {
        self.training.as_ref()
    }

    /// Counter names used by a PMC model, in term order.
    pub fn counters(&self) -> Vec<CounterName> {
        match self.kind {
            ModelKind::Pmc => self
                .terms
                .iter()
                .map(|t| CounterName::new(t.counter.as_str()).expect("validated at construction"))
                .collect(),
            ModelKind::FreqBaseline => vec![],
        }
    }

    /// Resolves term names against a dataset header once, so that many rows
    /// can be predicted without name lookups.
    pub fn bind(&self, counters: &[CounterName]) -> Result<BoundModel<'_>> {
        let columns = match self.kind {
            ModelKind::Pmc => self
                .terms
                .iter()
                .map(|t| {
                    counters
                        .iter()
                        .position(|c| c.as_str() == t.counter)
                        .ok_or_else(|| Error::UnknownCounter(t.counter.clone()))
                })
                .collect::<Result<Vec<_>>>()?,
            ModelKind::FreqBaseline => vec![],
        };
        Ok(BoundModel {
            model: self,
            columns,
        })
    }

    /// Predicted watts for one row whose deltas follow `counters`.
    pub fn predict(&self, counters: &[CounterName], row: &SampleRow) -> Result<f64> {
        self.bind(counters)?.predict(row)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        PowerModel::from_json(&text)
    }
}

pub struct BoundModel<'a> {
    model: &'a PowerModel,
    columns: Vec<usize>,
}

impl BoundModel<'_> {
    pub fn predict(&self, row: &SampleRow) -> Result<f64> {
        let m = self.model;
        match m.kind {
            ModelKind::Pmc => {
                let mut p = m.intercept_w;
                for (t, &j) in m.terms.iter().zip(&self.columns) {
                    let d = *row.deltas.get(j).ok_or_else(|| Error::UnknownCounter(t.counter.clone()))?;
                    p += t.coefficient * d as f64;
                }
                Ok(p)
            }
            ModelKind::FreqBaseline => {
                let f = row.freq_mhz.ok_or(Error::MissingFrequency(None))?;
                Ok(m.intercept_w + m.terms[0].coefficient * f)
            }
        }
    }
}

/// Formats like C's `%g`: six significant digits, trailing zeros removed.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

impl fmt::Display for PowerModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P = {}", format_sig6(self.intercept_w))?;
        for t in &self.terms {
            let sign = if t.coefficient < 0.0 { '-' } else { '+' };
            write!(f, " {sign} {} x {}", format_sig6(t.coefficient.abs()), t.counter)?;
        }
        Ok(())
    }
}
