//! Identification-rate bookkeeping and grid rendering.
//!
//! Rates are kept as exact correct/total counts plus a full-precision
//! percentage; rendered tables report two decimals by truncation, so
//! 24 of 56 prints as 42.85 rather than rounding up to 42.86. Text
//! output arranges feature sets as rows and systems as columns; CSV
//! and JSON carry the exact counts alongside the displayed rate.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::grid::{CellOutcome, ResultsGrid};

/// Fraction of correct assignments, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentificationRate {
    pub correct: usize,
    pub total: usize,
    /// 100 * correct / total, full precision.
    pub rate: f64,
}

impl IdentificationRate {
    pub fn new(correct: usize, total: usize) -> Self {
        assert!(total > 0, "rate needs at least one trial");
        assert!(correct <= total);
        IdentificationRate {
            correct,
            total,
            rate: 100.0 * correct as f64 / total as f64,
        }
    }

    /// The percentage truncated to two decimals, as printed in tables.
    pub fn display_rate(&self) -> f64 {
        // Nudge before flooring so exactly representable hundredths
        // (50.00, 75.00) are not dragged down by prior rounding.
        ((self.rate * 100.0) + 1e-9).floor() / 100.0
    }
}

/// Score a decision list of (predicted, truth) pairs.
pub fn identification_rate<'a, I>(decisions: I) -> Result<IdentificationRate>
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    let mut correct = 0usize;
    let mut total = 0usize;
    for (predicted, truth) in decisions {
        total += 1;
        if predicted == truth {
            correct += 1;
        }
    }
    if total == 0 {
        return Err(Error::EmptyDecisions);
    }
    Ok(IdentificationRate::new(correct, total))
}

/// Rendering target for a results grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Text,
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Text => "txt",
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "text" | "txt" => Ok(OutputFormat::Text),
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::ConfigInvalid(format!(
                "unknown output format {other:?}; expected text, csv, or json"
            ))),
        }
    }
}

/// Render a grid. Output is deterministic for a given grid.
pub fn emit_tables(grid: &ResultsGrid, format: OutputFormat) -> String {
    match format {
        OutputFormat::Text => emit_text(grid),
        OutputFormat::Csv => emit_csv(grid),
        OutputFormat::Json => emit_json(grid),
    }
}

fn emit_text(grid: &ResultsGrid) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "identification rates (%) on corpus {:?}, seed {}",
        grid.corpus, grid.seed
    );
    let _ = write!(out, "{:<10}", "feature");
    for system in &grid.systems {
        let _ = write!(out, "{:>18}", system.to_string());
    }
    out.push('\n');
    for feature in &grid.features {
        let _ = write!(out, "{:<10}", feature.to_string());
        for system in &grid.systems {
            let cell = match grid.cell(*feature, *system) {
                Some(c) => match &c.outcome {
                    CellOutcome::Rate(r) => format!("{:.2}", r.display_rate()),
                    CellOutcome::Failed(_) => "failed".to_string(),
                },
                None => "-".to_string(),
            };
            let _ = write!(out, "{cell:>18}");
        }
        out.push('\n');
    }
    for cell in &grid.cells {
        if let CellOutcome::Failed(message) = &cell.outcome {
            let _ = writeln!(
                out,
                "{} / {} failed: {message}",
                cell.feature_set, cell.system
            );
        }
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn emit_csv(grid: &ResultsGrid) -> String {
    let mut out = String::from("feature_set,system,correct,total,rate,error\n");
    for cell in &grid.cells {
        match &cell.outcome {
            CellOutcome::Rate(r) => {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{:.2},",
                    cell.feature_set,
                    cell.system.number(),
                    r.correct,
                    r.total,
                    r.display_rate()
                );
            }
            CellOutcome::Failed(message) => {
                let _ = writeln!(
                    out,
                    "{},{},,,,{}",
                    cell.feature_set,
                    cell.system.number(),
                    csv_field(message)
                );
            }
        }
    }
    out
}

#[derive(Serialize)]
struct JsonCell<'a> {
    feature_set: String,
    system: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    correct: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    total: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a str>,
}

#[derive(Serialize)]
struct JsonGrid<'a> {
    corpus: &'a str,
    seed: u64,
    cells: Vec<JsonCell<'a>>,
}

fn emit_json(grid: &ResultsGrid) -> String {
    let cells = grid
        .cells
        .iter()
        .map(|cell| {
            let (correct, total, rate, error) = match &cell.outcome {
                CellOutcome::Rate(r) => {
                    (Some(r.correct), Some(r.total), Some(r.display_rate()), None)
                }
                CellOutcome::Failed(message) => (None, None, None, Some(message.as_str())),
            };
            JsonCell {
                feature_set: cell.feature_set.to_string(),
                system: cell.system.number(),
                correct,
                total,
                rate,
                error,
            }
        })
        .collect();
    let doc = JsonGrid {
        corpus: &grid.corpus,
        seed: grid.seed,
        cells,
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("grid serialization cannot fail");
    text.push('\n');
    text
}
