//! Analytic latency and resource model of the estimator datapath.
//!
//! Counts are per module instance, in clock cycles `T_s` for timing. Formulas
//! assume power-of-two `M` and `K`; other values are evaluated with
//! `ceil(log2)` and flagged in `warnings`.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::model::SystemConfig;
use crate::signature::SpatialSignature;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    WithRotation,
    WithoutRotation,
}

impl Variant {
    pub const BOTH: [Variant; 2] = [Variant::WithRotation, Variant::WithoutRotation];

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::WithRotation => "with_rotation",
            Variant::WithoutRotation => "without_rotation",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rot" | "with_rotation" => Ok(Variant::WithRotation),
            "norot" | "without_rotation" => Ok(Variant::WithoutRotation),
            _ => Err(Error::Config(format!("unknown variant {s:?}, expected rot or norot"))),
        }
    }
}

/// A cycle count, or a range when it depends on signature position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cycles {
    Exact(u64),
    Range(u64, u64),
}

impl Cycles {
    pub fn worst(&self) -> u64 {
        match *self {
            Cycles::Exact(c) | Cycles::Range(_, c) => c,
        }
    }
}

impl fmt::Display for Cycles {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cycles::Exact(c) => write!(f, "{c}"),
            Cycles::Range(lo, hi) => write!(f, "{lo}-{hi}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Metric {
    ComplexMultipliers(u64),
    ComplexAdders(u64),
    RealComparators(u64),
    Registers(u64),
    /// `None` where a module has no per-package latency.
    Latency(Option<Cycles>),
    Processing(Cycles),
    Instances(u64),
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::ComplexMultipliers(_) => "complex_multipliers",
            Metric::ComplexAdders(_) => "complex_adders",
            Metric::RealComparators(_) => "real_comparators",
            Metric::Registers(_) => "registers",
            Metric::Latency(_) => "latency",
            Metric::Processing(_) => "processing",
            Metric::Instances(_) => "instances",
        }
    }

    fn value(&self) -> String {
        match self {
            Metric::ComplexMultipliers(v)
            | Metric::ComplexAdders(v)
            | Metric::RealComparators(v)
            | Metric::Registers(v)
            | Metric::Instances(v) => v.to_string(),
            Metric::Latency(None) => "-".into(),
            Metric::Latency(Some(c)) | Metric::Processing(c) => c.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostEntry {
    pub module: &'static str,
    pub metric: Metric,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostReport {
    pub variant: Variant,
    pub entries: Vec<CostEntry>,
    pub warnings: Vec<String>,
}

impl CostReport {
    /// The entry for `(module, metric name)`.
    pub fn get(&self, module: &str, metric: &str) -> Option<&Metric> {
        self.entries
            .iter()
            .find(|e| e.module == module && e.metric.name() == metric)
            .map(|e| &e.metric)
    }

    /// Integer value of a count metric or of an exact cycle count.
    pub fn value(&self, module: &str, metric: &str) -> Option<u64> {
        match self.get(module, metric)? {
            Metric::ComplexMultipliers(v)
            | Metric::ComplexAdders(v)
            | Metric::RealComparators(v)
            | Metric::Registers(v)
            | Metric::Instances(v) => Some(*v),
            Metric::Latency(Some(Cycles::Exact(v))) | Metric::Processing(Cycles::Exact(v)) => Some(*v),
            _ => None,
        }
    }

    fn push(&mut self, module: &'static str, metric: Metric) {
        self.entries.push(CostEntry { module, metric });
    }

    /// CSV body rows `variant,module,metric,value`, no header.
    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let _ = writeln!(out, "{},{},{},{}", self.variant, e.module, e.metric.name(), e.metric.value());
        }
        out
    }
}

pub const CSV_HEADER: &str = "variant,module,metric,value\n";

fn log2_ceil(n: usize) -> u64 {
    n.max(1).next_power_of_two().trailing_zeros() as u64
}

fn warnings(config: &SystemConfig) -> Vec<String> {
    let mut w = Vec::new();
    for (name, v) in [("M", config.m), ("K", config.k)] {
        if !v.is_power_of_two() {
            w.push(format!("{name} = {v} is not a power of two; log2 rounded up"));
        }
    }
    w
}

/// Module latencies and processing times.
pub fn latency_report(config: &SystemConfig, variant: Variant) -> Result<CostReport> {
    config.validate()?;
    let (m, k, l, tau) = (config.m as u64, config.k as u64, config.l as u64, config.tau as u64);
    let lk = log2_ceil(config.k);
    let mut r = CostReport { variant, entries: Vec::new(), warnings: warnings(config) };
    let timing = [
        ("LS", Some(Cycles::Exact(l - 1)), Cycles::Exact(l + m)),
        ("FFT", Some(Cycles::Exact(m - 1)), Cycles::Exact(2 * m - 1)),
        ("Max-Selection", Some(Cycles::Exact(m)), Cycles::Exact(m)),
        ("Sorting", None, Cycles::Exact(lk * (lk + 1) / 2)),
        ("Grouping", None, Cycles::Exact(k + tau)),
        ("Extraction", Some(Cycles::Range(0, m - 1)), Cycles::Range(0, m - 1)),
        ("IFFT", Some(Cycles::Exact(tau)), Cycles::Exact(m + tau)),
    ];
    let mut total = 0;
    for (module, latency, processing) in timing {
        r.push(module, Metric::Latency(latency));
        r.push(module, Metric::Processing(processing));
        total += processing.worst();
    }
    // modules overlap in the pipeline, so the plain sum bounds the schedule
    r.push("Total", Metric::Processing(Cycles::Exact(total)));
    Ok(r)
}

/// Per-user extraction latency: the position of the first window bin in the
/// serial FFT output stream.
pub fn extraction_latency(sig: &SpatialSignature) -> u64 {
    sig.window.start as u64
}

/// Hardware resources per module and FFT instance count.
pub fn resource_report(config: &SystemConfig, variant: Variant) -> Result<CostReport> {
    config.validate()?;
    let (m, k, l, tau) = (config.m as u64, config.k as u64, config.l as u64, config.tau as u64);
    let (lm, lk) = (log2_ceil(config.m), log2_ceil(config.k));
    let mut r = CostReport { variant, entries: Vec::new(), warnings: warnings(config) };
    let rows = [
        ("LS", l, l, 0, l - 1),
        ("FFT", lm.saturating_sub(1), 2 * lm, 0, m - 1),
        ("ABS", 1, 0, 0, 0),
        ("Max-Selection", 0, 0, 1, 1),
        ("Sorting", 0, 0, k * lk, k * lk * (lk + 1) / 2),
        ("Grouping", 0, 1, tau, 2 * tau),
        ("Extraction", 0, 0, 1, 0),
        ("IFFT", tau, tau, 0, tau - 1),
    ];
    for (module, mul, add, cmp, reg) in rows {
        r.push(module, Metric::ComplexMultipliers(mul));
        r.push(module, Metric::ComplexAdders(add));
        r.push(module, Metric::RealComparators(cmp));
        r.push(module, Metric::Registers(reg));
    }
    let fft_instances = match variant {
        Variant::WithRotation => tau + k,
        Variant::WithoutRotation => tau,
    };
    r.push("FFT", Metric::Instances(fft_instances));
    Ok(r)
}

/// Latency and resource rows for every requested variant, with header.
pub fn cost_csv(config: &SystemConfig, variants: &[Variant]) -> Result<(String, Vec<String>)> {
    let mut out = String::from(CSV_HEADER);
    let mut warns = Vec::new();
    for &v in variants {
        for report in [latency_report(config, v)?, resource_report(config, v)?] {
            out.push_str(&report.csv_rows());
            warns.extend(report.warnings);
        }
    }
    warns.dedup();
    Ok((out, warns))
}
