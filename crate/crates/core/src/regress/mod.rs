//! Least-squares power models, prediction and accuracy metrics.

mod model;
mod qr;

use std::io::Write;
use std::path::Path;

use crate::dataset::{CounterName, Dataset, FREQ_COLUMN};
use crate::error::{Error, Result};

pub use model::{format_sig6, Algorithm, BoundModel, ModelKind, PowerModel, Term, TrainingMeta};

/// Actual power values smaller than this (in watts) make MAPE undefined.
pub const MAPE_ZERO_GUARD: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct FitDiagnostics {
    pub train_mape_pct: f64,
    pub residual_sse: f64,
    pub condition_warning: bool,
}

/// Mean absolute percentage error, in percent.
pub fn mape(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    if actual.len() != predicted.len() {
        return Err(Error::LengthMismatch(actual.len(), predicted.len()));
    }
    if actual.is_empty() {
        return Err(Error::Empty);
    }
    let mut sum = 0.0;
    for (i, (a, p)) in actual.iter().zip(predicted).enumerate() {
        if a.is_nan() || a.abs() < MAPE_ZERO_GUARD {
            return Err(Error::ZeroActual { index: i, value: *a });
        }
        sum += ((a - p) / a).abs();
    }
    Ok(100.0 * sum / actual.len() as f64)
}

/// Coefficients of one least-squares fit over a [`Design`].
#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub ill_conditioned: bool,
}

/// Dataset columns converted to floating point once, so that repeated fits
/// over row and predictor subsets (cross-validation, subset search) avoid
/// re-reading rows.
pub struct Design {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    power: Vec<f64>,
}

impl Design {
    pub fn new(ds: &Dataset) -> Self {
        let n = ds.counters().len();
        let mut columns = vec![Vec::with_capacity(ds.len()); n];
        for row in ds.rows() {
            for (col, &d) in columns.iter_mut().zip(&row.deltas) {
                col.push(d as f64);
            }
        }
        Design {
            names: ds.counters().iter().map(|c| c.to_string()).collect(),
            columns,
            power: ds.power(),
        }
    }

    /// Design whose single predictor is the frequency channel.
    pub fn frequency(ds: &Dataset) -> Result<Self> {
        if ds.is_empty() {
            return Err(Error::MissingFrequency(None));
        }
        let freq = ds
            .rows()
            .iter()
            .enumerate()
            .map(|(i, r)| r.freq_mhz.ok_or(Error::MissingFrequency(Some(i))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Design {
            names: vec![FREQ_COLUMN.to_string()],
            columns: vec![freq],
            power: ds.power(),
        })
    }

    pub fn len(&self) -> usize {
        self.power.len()
    }

    pub fn is_empty(&self) -> bool {
        self.power.is_empty()
    }

    pub fn power(&self) -> &[f64] {
        &self.power
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    /// OLS of power on an intercept plus the given predictor columns,
    /// restricted to `rows` when given.
    pub fn fit(&self, predictors: &[usize], rows: Option<&[usize]>) -> Result<Fit> {
        let n_rows = rows.map_or(self.len(), <[usize]>::len);
        if n_rows == 0 {
            return Err(Error::Empty);
        }
        let params = predictors.len() + 1;
        if n_rows < params {
            return Err(Error::TooFewRows {
                rows: n_rows,
                params,
            });
        }
        let gather = |col: &[f64]| -> Vec<f64> {
            match rows {
                Some(idx) => idx.iter().map(|&i| col[i]).collect(),
                None => col.to_vec(),
            }
        };
        let mut cols = Vec::with_capacity(params);
        cols.push(vec![1.0; n_rows]);
        cols.extend(predictors.iter().map(|&j| gather(&self.columns[j])));
        let y = gather(&self.power);
        match qr::lstsq(&cols, &y) {
            Ok(sol) => Ok(Fit {
                intercept: sol.coef[0],
                coefficients: sol.coef[1..].to_vec(),
                ill_conditioned: sol.ill_conditioned,
            }),
            Err(qr::LstsqError::TooFewRows) => Err(Error::TooFewRows {
                rows: n_rows,
                params,
            }),
            Err(qr::LstsqError::RankDeficient(k)) => Err(Error::RankDeficient(if k == 0 {
                "intercept".to_string()
            } else {
                format!("{} is collinear with the intercept or earlier predictors", self.names[predictors[k - 1]])
            })),
        }
    }

    pub fn predict(&self, fit: &Fit, predictors: &[usize], rows: &[usize]) -> Vec<f64> {
        rows.iter()
            .map(|&i| {
                let mut p = fit.intercept;
                for (b, &j) in fit.coefficients.iter().zip(predictors) {
                    p += b * self.columns[j][i];
                }
                p
            })
            .collect()
    }

    fn diagnostics(&self, fit: &Fit, predictors: &[usize]) -> Result<FitDiagnostics> {
        let all: Vec<usize> = (0..self.len()).collect();
        let predicted = self.predict(fit, predictors, &all);
        let residual_sse = self
            .power
            .iter()
            .zip(&predicted)
            .map(|(a, p)| (a - p) * (a - p))
            .sum();
        Ok(FitDiagnostics {
            train_mape_pct: mape(&self.power, &predicted)?,
            residual_sse,
            condition_warning: fit.ill_conditioned,
        })
    }
}

pub(crate) fn predictor_indices(ds: &Dataset, predictors: &[CounterName]) -> Result<Vec<usize>> {
    crate::dataset::ensure_unique(predictors)?;
    predictors
        .iter()
        .map(|p| {
            ds.counter_index(p)
                .ok_or_else(|| Error::UnknownCounter(p.to_string()))
        })
        .collect()
}

/// Fits `power = intercept + sum(coefficient * delta)` over all rows.
pub fn fit_ols(ds: &Dataset, predictors: &[CounterName]) -> Result<(PowerModel, FitDiagnostics)> {
    let idx = predictor_indices(ds, predictors)?;
    let design = Design::new(ds);
    let fit = design.fit(&idx, None)?;
    let diag = design.diagnostics(&fit, &idx)?;
    if diag.condition_warning {
        log::warn!("ill-conditioned design for predictors {predictors:?}");
    }
    let terms = predictors
        .iter()
        .cloned()
        .zip(fit.coefficients.iter().copied())
        .collect();
    let model = PowerModel::pmc(fit.intercept, terms)?.with_training(TrainingMeta {
        algorithm: Algorithm::Manual,
        folds: None,
        cv_mape_pct: None,
        train_mape_pct: diag.train_mape_pct,
    });
    Ok((model, diag))
}

/// Fits power against sensor frequency alone.
pub fn fit_freq_baseline(ds: &Dataset) -> Result<(PowerModel, FitDiagnostics)> {
    let design = Design::frequency(ds)?;
    let fit = design.fit(&[0], None)?;
    let diag = design.diagnostics(&fit, &[0])?;
    let model = PowerModel::freq_baseline(fit.intercept, fit.coefficients[0])?.with_training(
        TrainingMeta {
            algorithm: Algorithm::Manual,
            folds: None,
            cv_mape_pct: None,
            train_mape_pct: diag.train_mape_pct,
        },
    );
    Ok((model, diag))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSample {
    pub time_key: u64,
    pub run_id: String,
    pub actual_w: f64,
    pub predicted_w: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Validation {
    pub mape_pct: f64,
    pub samples: Vec<PredictionSample>,
}

impl Validation {
    /// Writes `RUN,TIME,ACTUAL_W,PREDICTED_W`, one line per sample.
    pub fn write_trace<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["RUN", "TIME", "ACTUAL_W", "PREDICTED_W"])?;
        for s in &self.samples {
            w.write_record([
                s.run_id.clone(),
                s.time_key.to_string(),
                s.actual_w.to_string(),
                s.predicted_w.to_string(),
            ])?;
        }
        w.flush()
    }

    pub fn write_trace_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_trace(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }
}

/// Predicted watts for every row of `ds`.
pub fn predict_dataset(model: &PowerModel, ds: &Dataset) -> Result<Vec<f64>> {
    let bound = model.bind(ds.counters())?;
    ds.rows()
        .iter()
        .enumerate()
        .map(|(i, r)| {
            bound.predict(r).map_err(|e| match e {
                Error::MissingFrequency(_) => Error::MissingFrequency(Some(i)),
                e => e,
            })
        })
        .collect()
}

/// Compares model predictions against measured power on `ds`.
pub fn validate(model: &PowerModel, ds: &Dataset) -> Result<Validation> {
    let predicted = predict_dataset(model, ds)?;
    let actual = ds.power();
    let mape_pct = mape(&actual, &predicted)?;
    let samples = ds
        .rows()
        .iter()
        .zip(predicted)
        .map(|(r, p)| PredictionSample {
            time_key: r.time_key,
            run_id: r.run_id.clone(),
            actual_w: r.power_w,
            predicted_w: p,
        })
        .collect();
    Ok(Validation { mape_pct, samples })
}
