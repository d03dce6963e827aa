//! Accuracy-vs-cost Pareto frontier over pipeline configurations.
//! Dominance is two-dimensional (higher accuracy, lower cost); latency is
//! carried as an annotation only.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::Usd;

/// One configuration's aggregate coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigPoint {
    pub label: String,
    /// Final accuracy in percent, 0..=100.
    pub accuracy_pct: f64,
    pub median_cost: Usd,
    pub median_latency_s: f64,
}

impl ConfigPoint {
    pub fn new(
        label: impl Into<String>,
        accuracy_pct: f64,
        median_cost: Usd,
        median_latency_s: f64,
    ) -> Result<Self, ParetoError> {
        if !accuracy_pct.is_finite() || !(0.0..=100.0).contains(&accuracy_pct) {
            return Err(ParetoError::BadAccuracy(accuracy_pct));
        }
        if !median_latency_s.is_finite() || median_latency_s < 0.0 {
            return Err(ParetoError::BadLatency(median_latency_s));
        }
        Ok(ConfigPoint {
            label: label.into(),
            accuracy_pct,
            median_cost,
            median_latency_s,
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ParetoError {
    #[error("accuracy must lie in [0, 100], got {0}")]
    BadAccuracy(f64),
    #[error("latency must be finite and non-negative, got {0}")]
    BadLatency(f64),
    #[error("frontier of an empty point set is undefined")]
    EmptyInput,
    #[error("io error writing frontier: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// True iff `a` is at least as good as `b` on both axes and strictly
/// better on one. Latency does not participate.
pub fn dominates(a: &ConfigPoint, b: &ConfigPoint) -> bool {
    a.accuracy_pct >= b.accuracy_pct
        && a.median_cost <= b.median_cost
        && (a.accuracy_pct > b.accuracy_pct || a.median_cost < b.median_cost)
}

/// All non-dominated points, sorted by ascending cost (ties broken by
/// accuracy then label for a stable ordering). Points tied on both
/// coordinates are all retained.
///
/// Single sweep over the cost-sorted points, O(n log n); the brute-force
/// pairwise filter serves as the test oracle.
pub fn frontier(points: &[ConfigPoint]) -> Result<Vec<ConfigPoint>, ParetoError> {
    if points.is_empty() {
        return Err(ParetoError::EmptyInput);
    }
    let mut sorted: Vec<&ConfigPoint> = points.iter().collect();
    sorted.sort_by(|a, b| {
        a.median_cost
            .cmp(&b.median_cost)
            .then(b.accuracy_pct.total_cmp(&a.accuracy_pct))
            .then(a.label.cmp(&b.label))
    });

    let mut result: Vec<ConfigPoint> = Vec::new();
    // best accuracy among all points strictly cheaper than the group at hand
    let mut best_cheaper = f64::NEG_INFINITY;
    let mut i = 0;
    while i < sorted.len() {
        let cost = sorted[i].median_cost;
        let mut j = i;
        while j < sorted.len() && sorted[j].median_cost == cost {
            j += 1;
        }
        // within an equal-cost group only the maximal accuracy survives,
        // and only if it strictly beats every cheaper point
        let group_max = sorted[i].accuracy_pct;
        if group_max > best_cheaper {
            for point in &sorted[i..j] {
                if point.accuracy_pct == group_max {
                    result.push((*point).clone());
                }
            }
            best_cheaper = group_max;
        }
        i = j;
    }
    Ok(result)
}

/// Write the frontier as CSV: `label,accuracy,median_cost_usd,median_latency_s`.
pub fn write_frontier_csv<W: Write>(points: &[ConfigPoint], writer: W) -> Result<(), ParetoError> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["label", "accuracy", "median_cost_usd", "median_latency_s"])?;
    for p in points {
        csv.write_record([
            p.label.as_str(),
            &format!("{:.2}", p.accuracy_pct),
            &p.median_cost.to_decimal_string(),
            &format!("{:.3}", p.median_latency_s),
        ])?;
    }
    csv.flush().map_err(ParetoError::Io)?;
    Ok(())
}

/// Plot data for external tooling: x=cost, y=accuracy, color=latency, plus
/// a flag marking frontier membership.
pub fn write_plot_csv<W: Write>(
    all_points: &[ConfigPoint],
    frontier_points: &[ConfigPoint],
    writer: W,
) -> Result<(), ParetoError> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record([
        "label",
        "x_cost_usd",
        "y_accuracy",
        "color_latency_s",
        "on_frontier",
    ])?;
    for p in all_points {
        let on_frontier = frontier_points.iter().any(|f| {
            f.label == p.label && f.median_cost == p.median_cost && f.accuracy_pct == p.accuracy_pct
        });
        csv.write_record([
            p.label.as_str(),
            &p.median_cost.to_decimal_string(),
            &format!("{:.2}", p.accuracy_pct),
            &format!("{:.3}", p.median_latency_s),
            if on_frontier { "1" } else { "0" },
        ])?;
    }
    csv.flush().map_err(ParetoError::Io)?;
    Ok(())
}

/// Read config points from a CSV with a `label,accuracy,median_cost_usd,
/// median_latency_s` header (extra columns ignored, matched by name).
pub fn read_points_csv(path: &Path) -> Result<Vec<ConfigPoint>, ParetoError> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let index_of = |name: &str| headers.iter().position(|h| h == name);
    let label_idx = index_of("label");
    let accuracy_idx = index_of("accuracy");
    let cost_idx = index_of("median_cost_usd");
    let latency_idx = index_of("median_latency_s");
    let (label_idx, accuracy_idx, cost_idx, latency_idx) =
        match (label_idx, accuracy_idx, cost_idx, latency_idx) {
            (Some(l), Some(a), Some(c), Some(t)) => (l, a, c, t),
            _ => {
                return Err(ParetoError::Io(std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    "expected columns label, accuracy, median_cost_usd, median_latency_s",
                )))
            }
        };
    let mut points = Vec::new();
    for record in reader.records() {
        let record = record?;
        let field = |idx: usize| record.get(idx).unwrap_or("").to_string();
        let accuracy: f64 = field(accuracy_idx)
            .parse()
            .map_err(|_| ParetoError::BadAccuracy(f64::NAN))?;
        let cost = Usd::parse(&field(cost_idx)).map_err(|e| {
            ParetoError::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, e))
        })?;
        let latency: f64 = field(latency_idx).parse().unwrap_or(0.0);
        points.push(ConfigPoint::new(field(label_idx), accuracy, cost, latency)?);
    }
    Ok(points)
}
