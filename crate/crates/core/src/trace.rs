//! Sampled spectra and time series with `# key=value` metadata, and their CSV
//! form.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{NvError, Result};

/// Significant digits written for every number in CSV output.
pub const CSV_DIGITS: usize = 12;

/// Format like C's `%.{digits}g`: shortest of fixed or scientific notation,
/// trailing zeros removed.
pub fn format_g(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= digits as i32 {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn write_csv(metadata: &BTreeMap<String, String>, header: (&str, &str), xs: &[f64], ys: &[f64]) -> String {
    let mut out = String::new();
    for (k, v) in metadata {
        let _ = writeln!(out, "# {k}={v}");
    }
    let _ = writeln!(out, "{},{}", header.0, header.1);
    for (x, y) in xs.iter().zip(ys) {
        let _ = writeln!(out, "{},{}", format_g(*x, CSV_DIGITS), format_g(*y, CSV_DIGITS));
    }
    out
}

type Parsed = (BTreeMap<String, String>, Vec<f64>, Vec<f64>);

fn parse_csv(text: &str, header: (&str, &str)) -> Result<Parsed> {
    let mut metadata = BTreeMap::new();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut seen_header = false;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.trim_start().split_once('=') {
                metadata.insert(k.trim().to_string(), v.to_string());
            }
            continue;
        }
        if !seen_header {
            let expected = format!("{},{}", header.0, header.1);
            if line.trim() != expected {
                return Err(NvError::invalid(format!("expected header `{expected}`, found `{line}`")));
            }
            seen_header = true;
            continue;
        }
        let (a, b) = line
            .split_once(',')
            .ok_or_else(|| NvError::invalid(format!("line {}: expected two columns", lineno + 1)))?;
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| NvError::invalid(format!("line {}: {e}", lineno + 1)))
        };
        xs.push(parse(a)?);
        ys.push(parse(b)?);
    }
    if !seen_header {
        return Err(NvError::invalid("missing CSV header"));
    }
    Ok((metadata, xs, ys))
}

/// Signal sampled on a frequency axis (MHz).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SpectrumTrace {
    pub frequency_mhz: Vec<f64>,
    pub signal: Vec<f64>,
    pub metadata: BTreeMap<String, String>,
}

impl SpectrumTrace {
    pub fn new(frequency_mhz: Vec<f64>, signal: Vec<f64>) -> Result<Self> {
        if frequency_mhz.len() != signal.len() {
            return Err(NvError::DimensionMismatch {
                expected: frequency_mhz.len(),
                got: signal.len(),
            });
        }
        if frequency_mhz.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(NvError::invalid("frequency axis must be strictly increasing"));
        }
        Ok(Self {
            frequency_mhz,
            signal,
            metadata: BTreeMap::new(),
        })
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.metadata.insert(key.to_string(), value.to_string());
        self
    }

    pub fn len(&self) -> usize {
        self.signal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signal.is_empty()
    }

    pub fn to_csv(&self) -> String {
        write_csv(&self.metadata, ("frequency_mhz", "signal"), &self.frequency_mhz, &self.signal)
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let (metadata, x, y) = parse_csv(text, ("frequency_mhz", "signal"))?;
        let mut t = Self::new(x, y)?;
        t.metadata = metadata;
        Ok(t)
    }

    /// Indices of strict local minima of the signal.
    pub fn local_minima(&self) -> Vec<usize> {
        let s = &self.signal;
        (1..s.len().saturating_sub(1))
            .filter(|&i| s[i] < s[i - 1] && s[i] <= s[i + 1])
            .collect()
    }
}

/// Observable sampled on a time axis (μs).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TimeTrace {
    pub time_us: Vec<f64>,
    pub values: Vec<f64>,
    pub observable: String,
    pub metadata: BTreeMap<String, String>,
}

impl TimeTrace {
    pub fn new(time_us: Vec<f64>, values: Vec<f64>, observable: &str) -> Result<Self> {
        if time_us.len() != values.len() {
            return Err(NvError::DimensionMismatch {
                expected: time_us.len(),
                got: values.len(),
            });
        }
        if time_us.windows(2).any(|w| w[1] < w[0]) {
            return Err(NvError::invalid("time axis must be ascending"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(NvError::invalid("non-finite value in time trace"));
        }
        Ok(Self {
            time_us,
            values,
            observable: observable.to_string(),
            metadata: BTreeMap::new(),
        })
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.metadata.insert(key.to_string(), value.to_string());
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut meta = self.metadata.clone();
        meta.insert("observable".into(), self.observable.clone());
        write_csv(&meta, ("time_us", "value"), &self.time_us, &self.values)
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let (mut metadata, x, y) = parse_csv(text, ("time_us", "value"))?;
        let observable = metadata.remove("observable").unwrap_or_default();
        let mut t = Self::new(x, y, &observable)?;
        t.metadata = metadata;
        Ok(t)
    }
}
