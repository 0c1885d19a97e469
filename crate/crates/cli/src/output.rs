//! CSV row schema and number formatting.

use deahes::{Method, RoundRecord};

use crate::error::{CliError, Result};

/// Column names, in order. Changing this breaks every downstream reader.
pub const HEADER: [&str; 11] = [
    "method",
    "k",
    "tau",
    "r",
    "seed",
    "round",
    "master_loss",
    "test_accuracy",
    "mean_h1",
    "mean_h2",
    "suppressed_count",
];

/// Shortest `%g`-style rendering with 9 significant digits: fixed notation
/// for exponents in `-5..9`, otherwise `<mantissa>e<exp>`, trailing zeros
/// dropped.
pub fn format_float(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub method: Method,
    pub k: usize,
    pub tau: usize,
    pub r: f64,
    pub seed: u64,
    pub round: usize,
    pub master_loss: f64,
    pub test_accuracy: f64,
    /// Mean exchange weights over the workers that exchanged this round,
    /// 0 when every attempt was suppressed.
    pub mean_h1: f64,
    pub mean_h2: f64,
    pub suppressed_count: usize,
}

impl MetricsRow {
    pub fn from_record(method: Method, k: usize, tau: usize, r: f64, seed: u64, rec: &RoundRecord<f64>) -> Result<Self> {
        let test_accuracy = rec
            .test_accuracy
            .ok_or_else(|| CliError::Numeric("model reports no test accuracy".into()))?;
        let (mean_h1, mean_h2) = rec.mean_weights().unwrap_or((0.0, 0.0));
        Ok(Self {
            method,
            k,
            tau,
            r,
            seed,
            round: rec.round,
            master_loss: rec.master_loss,
            test_accuracy,
            mean_h1,
            mean_h2,
            suppressed_count: rec.suppressed_count(),
        })
    }

    pub fn to_fields(&self) -> [String; 11] {
        [
            self.method.name().to_string(),
            self.k.to_string(),
            self.tau.to_string(),
            format_float(self.r),
            self.seed.to_string(),
            self.round.to_string(),
            format_float(self.master_loss),
            format_float(self.test_accuracy),
            format_float(self.mean_h1),
            format_float(self.mean_h2),
            self.suppressed_count.to_string(),
        ]
    }

    /// Parses one CSV record; errors name the field.
    pub fn from_fields(fields: &csv::StringRecord) -> std::result::Result<Self, String> {
        if fields.len() != HEADER.len() {
            return Err(format!("expected {} fields, found {}", HEADER.len(), fields.len()));
        }
        fn num<T: std::str::FromStr>(fields: &csv::StringRecord, i: usize) -> std::result::Result<T, String> {
            fields[i]
                .parse()
                .map_err(|_| format!("bad {} value {:?}", HEADER[i], &fields[i]))
        }
        let finite = |i: usize| -> std::result::Result<f64, String> {
            let v: f64 = num(fields, i)?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(format!("non-finite {} value {:?}", HEADER[i], &fields[i]))
            }
        };
        Ok(Self {
            method: fields[0].parse().map_err(|e: deahes::Error| e.to_string())?,
            k: num(fields, 1)?,
            tau: num(fields, 2)?,
            r: finite(3)?,
            seed: num(fields, 4)?,
            round: num(fields, 5)?,
            master_loss: finite(6)?,
            test_accuracy: finite(7)?,
            mean_h1: finite(8)?,
            mean_h2: finite(9)?,
            suppressed_count: num(fields, 10)?,
        })
    }
}
