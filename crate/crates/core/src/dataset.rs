//! Trace and dataset types, plus their CSV readers and writers.
//!
//! Three on-disk formats are supported, all UTF-8 CSV with `#` comment lines:
//!
//! * counter traces: `TIME,<counter>,...` holding cumulative 32-bit readings,
//! * power traces: `TIME,POWER_W[,FREQ_MHZ]`,
//! * synchronised datasets: `RUN,TIME,POWER_W[,FREQ_MHZ],<counter>,...`
//!   holding per-interval counter deltas.
//!
//! Malformed files are rejected with the offending line number; nothing is
//! repaired silently.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TIME_COLUMN: &str = "TIME";
pub const RUN_COLUMN: &str = "RUN";
pub const POWER_COLUMN: &str = "POWER_W";
pub const FREQ_COLUMN: &str = "FREQ_MHZ";

/// The 16 LEON3 L3STAT event counters usable as predictors, in roster order.
/// The cycle counter (`TIME`) is the synchronisation key and is not listed.
pub const LEON3_COUNTERS: [&str; 16] = [
    "ICMISS", "ICHOLD", "DCMISS", "DCHOLD", "WBHOLD", "AINST", "IINST", "BPMISS", "AHBUTIL",
    "AHBTUTIL", "BRANCH", "CALL", "TYPE2", "LDST", "LOAD", "STORE",
];

/// Name of an event counter.
///
/// Never empty and never one of the reserved column names (`TIME`, `RUN`,
/// `POWER_W`, `FREQ_MHZ`), so a counter can always be used as a predictor.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CounterName(String);

impl CounterName {
    pub fn new(name: impl Into<String>) -> Result<Self> {
        let name = name.into();
        if name.is_empty() || name.trim() != name {
            return Err(Error::InvalidCounter(format!("{name:?}")));
        }
        if name.contains([',', '\n', '\r', '"']) {
            return Err(Error::InvalidCounter(format!("{name:?} contains a separator")));
        }
        if [TIME_COLUMN, RUN_COLUMN, POWER_COLUMN, FREQ_COLUMN].contains(&name.as_str()) {
            return Err(Error::InvalidCounter(format!("{name} is a reserved column")));
        }
        Ok(CounterName(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Parses a comma-separated list such as `ICMISS,STORE`.
    pub fn parse_list(list: &str) -> Result<Vec<CounterName>> {
        let names = list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(CounterName::new)
            .collect::<Result<Vec<_>>>()?;
        ensure_unique(&names)?;
        Ok(names)
    }
}

impl TryFrom<String> for CounterName {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        CounterName::new(value)
    }
}

impl From<CounterName> for String {
    fn from(value: CounterName) -> Self {
        value.0
    }
}

impl fmt::Display for CounterName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for CounterName {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

pub(crate) fn ensure_unique(names: &[CounterName]) -> Result<()> {
    let mut seen = HashSet::new();
    for n in names {
        if !seen.insert(n) {
            return Err(Error::InvalidCounter(format!("duplicate counter {n}")));
        }
    }
    Ok(())
}

fn check_strictly_increasing(keys: &[u64]) -> Result<()> {
    if let Some(i) = keys.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::InvalidData(format!(
            "TIME not strictly increasing at sample {}",
            i + 1
        )));
    }
    Ok(())
}

/// Cumulative counter readings from one run, keyed by the cycle counter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterTrace {
    run_id: String,
    counters: Vec<CounterName>,
    time_keys: Vec<u64>,
    // row-major, time_keys.len() x counters.len()
    values: Vec<u32>,
}

impl CounterTrace {
    pub fn new(
        run_id: impl Into<String>,
        counters: Vec<CounterName>,
        time_keys: Vec<u64>,
        values: Vec<Vec<u32>>,
    ) -> Result<Self> {
        ensure_unique(&counters)?;
        if values.len() != time_keys.len() {
            return Err(Error::InvalidData(format!(
                "{} value rows for {} time keys",
                values.len(),
                time_keys.len()
            )));
        }
        check_strictly_increasing(&time_keys)?;
        let mut flat = Vec::with_capacity(values.len() * counters.len());
        for (i, row) in values.into_iter().enumerate() {
            if row.len() != counters.len() {
                return Err(Error::InvalidData(format!(
                    "row {i} has {} values, expected {}",
                    row.len(),
                    counters.len()
                )));
            }
            flat.extend(row);
        }
        Ok(CounterTrace {
            run_id: run_id.into(),
            counters,
            time_keys,
            values: flat,
        })
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn counters(&self) -> &[CounterName] {
        &self.counters
    }

    pub fn time_keys(&self) -> &[u64] {
        &self.time_keys
    }

    pub fn len(&self) -> usize {
        self.time_keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time_keys.is_empty()
    }

    pub fn row(&self, i: usize) -> &[u32] {
        let n = self.counters.len();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn with_run_id(mut self, run_id: impl Into<String>) -> Self {
        self.run_id = run_id.into();
        self
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(file).map_err(|e| Error::io(path, e))
    }

    pub fn write_to<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![TIME_COLUMN.to_string()];
        header.extend(self.counters.iter().map(|c| c.to_string()));
        w.write_record(&header).map_err(csv_to_io)?;
        for (i, key) in self.time_keys.iter().enumerate() {
            let mut rec = vec![key.to_string()];
            rec.extend(self.row(i).iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(csv_to_io)?;
        }
        w.flush()
    }
}

/// Power-sensor samples from one run, keyed by the same cycle counter.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerTrace {
    run_id: String,
    time_keys: Vec<u64>,
    power_w: Vec<f64>,
    freq_mhz: Option<Vec<f64>>,
}

impl PowerTrace {
    pub fn new(
        run_id: impl Into<String>,
        time_keys: Vec<u64>,
        power_w: Vec<f64>,
        freq_mhz: Option<Vec<f64>>,
    ) -> Result<Self> {
        if power_w.len() != time_keys.len() {
            return Err(Error::InvalidData(format!(
                "{} power values for {} time keys",
                power_w.len(),
                time_keys.len()
            )));
        }
        check_strictly_increasing(&time_keys)?;
        if let Some(i) = power_w.iter().position(|p| !valid_power(*p)) {
            return Err(Error::InvalidData(format!("non-positive power at sample {i}")));
        }
        if let Some(freq) = &freq_mhz {
            if freq.len() != time_keys.len() {
                return Err(Error::InvalidData(format!(
                    "{} frequency values for {} time keys",
                    freq.len(),
                    time_keys.len()
                )));
            }
            if let Some(i) = freq.iter().position(|f| !valid_power(*f)) {
                return Err(Error::InvalidData(format!("non-positive frequency at sample {i}")));
            }
        }
        Ok(PowerTrace {
            run_id: run_id.into(),
            time_keys,
            power_w,
            freq_mhz,
        })
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn time_keys(&self) -> &[u64] {
        &self.time_keys
    }

    pub fn power_w(&self) -> &[f64] {
        &self.power_w
    }

    pub fn freq_mhz(&self) -> Option<&[f64]> {
        self.freq_mhz.as_deref()
    }

    pub fn len(&self) -> usize {
        self.time_keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time_keys.is_empty()
    }

    pub fn with_run_id(mut self, run_id: impl Into<String>) -> Self {
        self.run_id = run_id.into();
        self
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(file).map_err(|e| Error::io(path, e))
    }

    pub fn write_to<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![TIME_COLUMN, POWER_COLUMN];
        if self.freq_mhz.is_some() {
            header.push(FREQ_COLUMN);
        }
        w.write_record(&header).map_err(csv_to_io)?;
        for i in 0..self.len() {
            let mut rec = vec![self.time_keys[i].to_string(), self.power_w[i].to_string()];
            if let Some(f) = &self.freq_mhz {
                rec.push(f[i].to_string());
            }
            w.write_record(&rec).map_err(csv_to_io)?;
        }
        w.flush()
    }
}

fn valid_power(p: f64) -> bool {
    p.is_finite() && p > 0.0
}

/// One synchronised interval: counter deltas and the power observed over it.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRow {
    /// Cycle count at the end of the interval.
    pub time_key: u64,
    pub deltas: Vec<u64>,
    pub power_w: f64,
    pub freq_mhz: Option<f64>,
    pub run_id: String,
}

/// Synchronised, delta-converted samples ready for regression.
///
/// Equality compares counters and rows; `source` is provenance only.
#[derive(Debug, Clone)]
pub struct Dataset {
    counters: Vec<CounterName>,
    rows: Vec<SampleRow>,
    source: String,
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.counters == other.counters && self.rows == other.rows
    }
}

impl Dataset {
    pub fn new(
        counters: Vec<CounterName>,
        rows: Vec<SampleRow>,
        source: impl Into<String>,
    ) -> Result<Self> {
        ensure_unique(&counters)?;
        for (i, row) in rows.iter().enumerate() {
            if row.deltas.len() != counters.len() {
                return Err(Error::InvalidData(format!(
                    "row {i} has {} deltas, expected {}",
                    row.deltas.len(),
                    counters.len()
                )));
            }
            if !valid_power(row.power_w) {
                return Err(Error::InvalidData(format!("non-positive power at row {i}")));
            }
            if let Some(f) = row.freq_mhz {
                if !valid_power(f) {
                    return Err(Error::InvalidData(format!("non-positive frequency at row {i}")));
                }
            }
        }
        Ok(Dataset {
            counters,
            rows,
            source: source.into(),
        })
    }

    pub fn counters(&self) -> &[CounterName] {
        &self.counters
    }

    pub fn rows(&self) -> &[SampleRow] {
        &self.rows
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn counter_index(&self, name: &CounterName) -> Option<usize> {
        self.counters.iter().position(|c| c == name)
    }

    pub fn power(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.power_w).collect()
    }

    pub fn has_frequency(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.freq_mhz.is_some())
    }

    /// Distinct run ids in order of first appearance.
    pub fn run_ids(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.rows
            .iter()
            .map(|r| r.run_id.as_str())
            .filter(|r| seen.insert(*r))
            .collect()
    }

    /// Concatenates datasets that share the same counter header.
    ///
    /// When `prefix_runs` is set, run ids become `<index>:<run>` so that runs
    /// from different files never collide.
    pub fn concat(parts: Vec<Dataset>, prefix_runs: bool) -> Result<Dataset> {
        let mut parts = parts.into_iter();
        let Some(first) = parts.next() else {
            return Err(Error::Empty);
        };
        let counters = first.counters.clone();
        let mut sources = vec![first.source.clone()];
        let prefix = |i: usize, mut rows: Vec<SampleRow>| {
            if prefix_runs {
                for r in &mut rows {
                    r.run_id = format!("{i}:{}", r.run_id);
                }
            }
            rows
        };
        let mut rows = prefix(0, first.rows);
        for (i, ds) in parts.enumerate() {
            if ds.counters != counters {
                return Err(Error::InvalidData(format!(
                    "incompatible headers: {} vs {}",
                    ds.source, sources[0]
                )));
            }
            sources.push(ds.source);
            rows.extend(prefix(i + 1, ds.rows));
        }
        Dataset::new(counters, rows, sources.join("+"))
    }

    /// Dataset restricted to the given row indices, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Dataset {
        Dataset {
            counters: self.counters.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            source: self.source.clone(),
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }

    pub fn write_to<W: Write>(&self, out: W) -> std::io::Result<()> {
        let with_freq = self.rows.iter().any(|r| r.freq_mhz.is_some());
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![RUN_COLUMN, TIME_COLUMN, POWER_COLUMN];
        if with_freq {
            header.push(FREQ_COLUMN);
        }
        header.extend(self.counters.iter().map(|c| c.as_str()));
        w.write_record(&header).map_err(csv_to_io)?;
        let mut rec: Vec<String> = Vec::with_capacity(header.len());
        for row in &self.rows {
            rec.clear();
            rec.push(row.run_id.clone());
            rec.push(row.time_key.to_string());
            rec.push(row.power_w.to_string());
            if with_freq {
                rec.push(row.freq_mhz.map(|f| f.to_string()).unwrap_or_default());
            }
            rec.extend(row.deltas.iter().map(|d| d.to_string()));
            w.write_record(&rec).map_err(csv_to_io)?;
        }
        w.flush()
    }
}

fn csv_to_io(e: csv::Error) -> std::io::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => e,
        other => std::io::Error::other(format!("{other:?}")),
    }
}

/// Run label derived from a trace path named `[<prefix>.]<run>[.pmc|.power].csv`.
pub fn run_id_from_path(path: &Path) -> String {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = name.strip_suffix(".csv").unwrap_or(&name);
    let name = name
        .strip_suffix(".pmc")
        .or_else(|| name.strip_suffix(".power"))
        .unwrap_or(name);
    name.rsplit('.').next().unwrap_or(name).to_string()
}

struct CsvInput {
    reader: csv::Reader<std::io::Cursor<Vec<u8>>>,
    path: Option<std::path::PathBuf>,
    header: Vec<String>,
    header_line: u64,
    // physical line number of each line fed to the csv reader
    line_map: Vec<u64>,
}

impl CsvInput {
    fn new<R: Read>(mut input: R, path: Option<&Path>) -> Result<Self> {
        let mut raw = Vec::new();
        input.read_to_end(&mut raw).map_err(|e| match path {
            Some(p) => Error::io(p, e),
            None => Error::parse(None, 0, e.to_string()),
        })?;
        let text = String::from_utf8(raw).map_err(|e| {
            let line = 1 + e.as_bytes()[..e.utf8_error().valid_up_to()]
                .iter()
                .filter(|&&b| b == b'\n')
                .count() as u64;
            Error::parse(path, line, "invalid UTF-8")
        })?;
        // comment lines are removed here rather than by the csv reader so
        // that reported line numbers stay physical
        let mut kept = String::with_capacity(text.len());
        let mut line_map = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim_start().starts_with('#') {
                continue;
            }
            kept.push_str(line);
            kept.push('\n');
            line_map.push(i as u64 + 1);
        }
        let mut reader = csv::ReaderBuilder::new()
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(std::io::Cursor::new(kept.into_bytes()));
        let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
        let header_line = headers.position().map(|p| p.line()).unwrap_or(1);
        let header_line = line_map.get(header_line as usize - 1).copied().unwrap_or(1);
        if headers.is_empty() || headers.iter().all(str::is_empty) {
            return Err(Error::parse(path, header_line, "missing header"));
        }
        Ok(CsvInput {
            reader,
            path: path.map(Path::to_path_buf),
            header: headers.iter().map(str::to_string).collect(),
            header_line,
            line_map,
        })
    }

    fn err(&self, line: u64, msg: impl Into<String>) -> Error {
        Error::parse(self.path.as_deref(), line, msg)
    }

    /// Visits each data record with its line number, after checking its width.
    fn for_each(
        &mut self,
        mut f: impl FnMut(u64, &csv::StringRecord) -> Result<()>,
    ) -> Result<()> {
        let width = self.header.len();
        let mut rec = csv::StringRecord::new();
        loop {
            match self.reader.read_record(&mut rec) {
                Ok(false) => return Ok(()),
                Ok(true) => {}
                Err(e) => return Err(csv_error(self.path.as_deref(), e)),
            }
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let line = self.line_map.get(line as usize - 1).copied().unwrap_or(line);
            if rec.len() != width {
                return Err(self.err(
                    line,
                    format!("ragged row: {} fields, expected {width}", rec.len()),
                ));
            }
            f(line, &rec)?;
        }
    }
}

fn csv_error(path: Option<&Path>, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => match path {
            Some(p) => Error::io(p, io),
            None => Error::parse(None, line, io.to_string()),
        },
        csv::ErrorKind::Utf8 { .. } => Error::parse(path, line, "invalid UTF-8"),
        other => Error::parse(path, line, format!("{other:?}")),
    }
}

fn parse_cell<T: std::str::FromStr>(
    path: Option<&Path>,
    line: u64,
    column: &str,
    cell: &str,
) -> Result<T> {
    cell.parse()
        .map_err(|_| Error::parse(path, line, format!("non-numeric {column} value {cell:?}")))
}

fn header_counters(
    path: Option<&Path>,
    line: u64,
    names: &[String],
) -> Result<Vec<CounterName>> {
    let counters = names
        .iter()
        .map(|n| CounterName::new(n.as_str()).map_err(|e| Error::parse(path, line, e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    ensure_unique(&counters).map_err(|e| Error::parse(path, line, e.to_string()))?;
    Ok(counters)
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

/// Reads a cumulative counter trace. The run id is derived from the file name.
pub fn read_counter_trace(path: &Path) -> Result<CounterTrace> {
    parse_counter_trace(open(path)?, Some(path), run_id_from_path(path))
}

pub fn parse_counter_trace<R: Read>(
    input: R,
    path: Option<&Path>,
    run_id: impl Into<String>,
) -> Result<CounterTrace> {
    let mut csv = CsvInput::new(input, path)?;
    if csv.header[0] != TIME_COLUMN {
        return Err(csv.err(csv.header_line, "header must start with TIME"));
    }
    let counters = header_counters(path, csv.header_line, &csv.header[1..])?;
    let mut keys: Vec<u64> = Vec::new();
    let mut values = Vec::new();
    csv.for_each(|line, rec| {
        let key: u64 = parse_cell(path, line, TIME_COLUMN, &rec[0])?;
        if keys.last().is_some_and(|&prev| key <= prev) {
            return Err(Error::parse(path, line, "TIME not strictly increasing"));
        }
        keys.push(key);
        let row = rec
            .iter()
            .skip(1)
            .zip(&counters)
            .map(|(cell, c)| parse_cell::<u32>(path, line, c.as_str(), cell))
            .collect::<Result<Vec<_>>>()?;
        values.push(row);
        Ok(())
    })?;
    CounterTrace::new(run_id, counters, keys, values)
}

/// Reads a power trace. The run id is derived from the file name.
pub fn read_power_trace(path: &Path) -> Result<PowerTrace> {
    parse_power_trace(open(path)?, Some(path), run_id_from_path(path))
}

pub fn parse_power_trace<R: Read>(
    input: R,
    path: Option<&Path>,
    run_id: impl Into<String>,
) -> Result<PowerTrace> {
    let mut csv = CsvInput::new(input, path)?;
    let with_freq = match csv.header.iter().map(String::as_str).collect::<Vec<_>>()[..] {
        [TIME_COLUMN, POWER_COLUMN] => false,
        [TIME_COLUMN, POWER_COLUMN, FREQ_COLUMN] => true,
        _ => {
            return Err(csv.err(
                csv.header_line,
                "header must be TIME,POWER_W or TIME,POWER_W,FREQ_MHZ",
            ))
        }
    };
    let mut keys: Vec<u64> = Vec::new();
    let mut power = Vec::new();
    let mut freq = Vec::new();
    csv.for_each(|line, rec| {
        let key: u64 = parse_cell(path, line, TIME_COLUMN, &rec[0])?;
        if keys.last().is_some_and(|&prev| key <= prev) {
            return Err(Error::parse(path, line, "TIME not strictly increasing"));
        }
        keys.push(key);
        let p: f64 = parse_cell(path, line, POWER_COLUMN, &rec[1])?;
        if !valid_power(p) {
            return Err(Error::parse(path, line, "non-positive power"));
        }
        power.push(p);
        if with_freq {
            let f: f64 = parse_cell(path, line, FREQ_COLUMN, &rec[2])?;
            if !valid_power(f) {
                return Err(Error::parse(path, line, "non-positive frequency"));
            }
            freq.push(f);
        }
        Ok(())
    })?;
    PowerTrace::new(run_id, keys, power, with_freq.then_some(freq))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    parse_dataset(
        std::io::BufReader::new(open(path)?),
        Some(path),
        path.display().to_string(),
    )
}

pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    ds.write_csv(path)
}

pub fn parse_dataset<R: Read>(
    input: R,
    path: Option<&Path>,
    source: impl Into<String>,
) -> Result<Dataset> {
    let mut csv = CsvInput::new(input, path)?;
    let h: Vec<&str> = csv.header.iter().map(String::as_str).collect();
    let fixed = match h[..] {
        [RUN_COLUMN, TIME_COLUMN, POWER_COLUMN, FREQ_COLUMN, ..] => 4,
        [RUN_COLUMN, TIME_COLUMN, POWER_COLUMN, ..] => 3,
        _ => {
            return Err(csv.err(
                csv.header_line,
                "header must start with RUN,TIME,POWER_W",
            ))
        }
    };
    let with_freq = fixed == 4;
    let counters = header_counters(path, csv.header_line, &csv.header[fixed..])?;
    let mut rows = Vec::new();
    csv.for_each(|line, rec| {
        let time_key: u64 = parse_cell(path, line, TIME_COLUMN, &rec[1])?;
        let power_w: f64 = parse_cell(path, line, POWER_COLUMN, &rec[2])?;
        if !valid_power(power_w) {
            return Err(Error::parse(path, line, "non-positive power"));
        }
        let freq_mhz = if with_freq && !rec[3].is_empty() {
            let f: f64 = parse_cell(path, line, FREQ_COLUMN, &rec[3])?;
            if !valid_power(f) {
                return Err(Error::parse(path, line, "non-positive frequency"));
            }
            Some(f)
        } else {
            None
        };
        let deltas = rec
            .iter()
            .skip(fixed)
            .zip(&counters)
            .map(|(cell, c)| parse_cell::<u64>(path, line, c.as_str(), cell))
            .collect::<Result<Vec<_>>>()?;
        rows.push(SampleRow {
            time_key,
            deltas,
            power_w,
            freq_mhz,
            run_id: rec[0].to_string(),
        });
        Ok(())
    })?;
    Dataset::new(counters, rows, source)
}
