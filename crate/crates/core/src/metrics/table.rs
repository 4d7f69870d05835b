use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{Averaging, EvalReport, MetricSet, METRIC_NAMES};

pub const UNDEFINED_CELL: &str = "—";

const HEADERS: [&str; 5] = ["Model", "Accuracy (%)", "Precision (%)", "Recall (%)", "F1-Score (%)"];

/// Percentage with two decimals, or the undefined marker.
/// Metric name with one `(model, value)` bar per model.
pub type PlotGroup = (&'static str, Vec<(String, Option<f64>)>);

pub fn format_percent(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{:.2}", v * 100.0),
        None => UNDEFINED_CELL.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model_name: String,
    #[serde(flatten)]
    pub metrics: MetricSet,
}

/// Externally published rows (fractions in [0,1]) to set beside our own results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTable {
    pub title: String,
    pub rows: Vec<ComparisonRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub averaging: Averaging,
    pub rows: Vec<ComparisonRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceTable>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Rows ordered by model name, one per report, metrics taken in `averaging` mode.
pub fn compare(reports: &[EvalReport], averaging: Averaging) -> ComparisonTable {
    let mut rows: Vec<ComparisonRow> =
        reports.iter().map(|r| ComparisonRow { model_name: r.model_name.clone(), metrics: *r.metrics(averaging) }).collect();
    rows.sort_by(|a, b| a.model_name.cmp(&b.model_name));
    ComparisonTable { averaging, rows, reference: None, notes: Vec::new() }
}

/// Rows whose F1 is not the harmonic mean of their precision and recall,
/// allowing for two-decimal percentage rounding. An average of per-class F1
/// scores never exceeds the harmonic mean of the averaged precision and
/// recall, so an F1 above it fits no averaging mode; one below it fits only
/// per-class F1 averaging.
fn inconsistent_f1(rows: &[ComparisonRow]) -> Vec<String> {
    let mut notes = Vec::new();
    for row in rows {
        let MetricSet { precision, recall, f1, .. } = row.metrics;
        if let (Some(p), Some(r), Some(f)) = (precision, recall, f1) {
            if p + r > 0.0 {
                let hm = 2.0 * p * r / (p + r);
                let verdict = if f > hm + 1e-4 {
                    "exceeds what any averaging of per-class F1 allows"
                } else if f < hm - 1e-4 {
                    "is consistent only with averaging per-class F1 scores"
                } else {
                    continue;
                };
                notes.push(format!(
                    "{}: F1 {} differs from the harmonic mean of precision {} and recall {} ({}) and {verdict}",
                    row.model_name,
                    format_percent(Some(f)),
                    format_percent(Some(p)),
                    format_percent(Some(r)),
                    format_percent(Some(hm)),
                ));
            }
        }
    }
    notes
}

impl ComparisonTable {
    /// Attaches reference rows; any reference F1 inconsistent with its own
    /// precision and recall is listed in the footer notes.
    pub fn with_reference(mut self, reference: ReferenceTable) -> Self {
        self.notes.extend(inconsistent_f1(&reference.rows));
        self.reference = Some(reference);
        self
    }

    fn render_rows(out: &mut String, rows: &[ComparisonRow]) {
        let cells: Vec<[String; 5]> = rows
            .iter()
            .map(|r| {
                let v = r.metrics.values();
                [r.model_name.clone(), format_percent(v[0]), format_percent(v[1]), format_percent(v[2]), format_percent(v[3])]
            })
            .collect();
        let mut widths: [usize; 5] = HEADERS.map(|h| h.chars().count());
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |out: &mut String, row: &[String]| {
            for (i, (cell, w)) in row.iter().zip(widths).enumerate() {
                let pad = w - cell.chars().count();
                if i == 0 {
                    let _ = write!(out, "{cell}{}", " ".repeat(pad));
                } else {
                    let _ = write!(out, "  {}{cell}", " ".repeat(pad));
                }
            }
            out.push('\n');
        };
        line(out, &HEADERS.map(String::from));
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        line(out, &rule);
        for row in &cells {
            line(out, row);
        }
    }

    /// Aligned-column text table.
    pub fn render_text(&self) -> String {
        let mut out = format!("Averaging: {}\n", self.averaging);
        Self::render_rows(&mut out, &self.rows);
        if let Some(reference) = &self.reference {
            let _ = writeln!(out, "\nReference: {}", reference.title);
            Self::render_rows(&mut out, &reference.rows);
        }
        if !self.notes.is_empty() {
            out.push_str("\nNotes:\n");
            for note in &self.notes {
                let _ = writeln!(out, "- {note}");
            }
        }
        out
    }

    /// Grouped-bar plot data: one group per metric, one bar per model.
    pub fn plot_series(&self) -> Vec<PlotGroup> {
        METRIC_NAMES
            .iter()
            .enumerate()
            .map(|(i, &metric)| {
                let bars = self.rows.iter().map(|r| (r.model_name.clone(), r.metrics.values()[i])).collect();
                (metric, bars)
            })
            .collect()
    }

    /// `metric,model,value_percent` rows; undefined values are left empty.
    pub fn plot_csv(&self) -> String {
        let mut out = String::from("metric,model,value_percent\n");
        for (metric, bars) in self.plot_series() {
            for (model, value) in bars {
                let cell = value.map(|v| format!("{:.2}", v * 100.0)).unwrap_or_default();
                let model = if model.contains([',', '"', '\n']) { format!("\"{}\"", model.replace('"', "\"\"")) } else { model };
                let _ = writeln!(out, "{metric},{model},{cell}");
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::ConfusionMatrix;

    fn report(name: &str, m: ConfusionMatrix) -> EvalReport {
        EvalReport::new(name, m)
    }

    #[test]
    fn three_reports_three_rows_sorted() {
        let reports = vec![
            report("gemma", ConfusionMatrix::new(5, 1, 1, 5)),
            report("bert", ConfusionMatrix::new(6, 0, 0, 6)),
            report("distil", ConfusionMatrix::new(4, 2, 2, 4)),
        ];
        let table = compare(&reports, Averaging::Macro);
        let names: Vec<&str> = table.rows.iter().map(|r| r.model_name.as_str()).collect();
        assert_eq!(names, vec!["bert", "distil", "gemma"]);
        let text = table.render_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + 2 + 3);
        assert!(lines[1].starts_with("Model"));
        assert!(lines[3].contains("100.00"));
        assert_eq!(table.plot_series().len(), 4);
        assert_eq!(table.plot_csv().lines().count(), 1 + 12);
    }

    #[test]
    fn single_row_and_undefined_cell() {
        let table = compare(&[report("m", ConfusionMatrix::new(0, 0, 2, 2))], Averaging::PositiveClass);
        assert_eq!(table.rows.len(), 1);
        let text = table.render_text();
        assert!(text.contains(UNDEFINED_CELL));
        assert!(table.plot_csv().contains("precision,m,\n"));
    }

    #[test]
    fn reference_inconsistency_is_noted() {
        let row = |name: &str, a, p, r, f| ComparisonRow {
            model_name: name.into(),
            metrics: MetricSet { accuracy: Some(a), precision: Some(p), recall: Some(r), f1: Some(f) },
        };
        let reference = ReferenceTable {
            title: "published".into(),
            rows: vec![
                row("consistent", 0.9, 0.9, 0.9, 0.9),
                row("GEMMA", 0.92, 0.92, 0.9339, 0.9139),
                row("DISTILBERT", 0.91, 0.9125, 0.91, 0.9125),
            ],
        };
        let table = compare(&[report("m", ConfusionMatrix::new(1, 0, 0, 1))], Averaging::Macro).with_reference(reference);
        assert_eq!(table.notes.len(), 2);
        assert!(table.notes[0].starts_with("GEMMA"));
        assert!(table.notes[0].contains("92.69") && table.notes[0].contains("per-class"));
        assert!(table.notes[1].contains("91.12") && table.notes[1].contains("exceeds"));
        assert!(table.render_text().contains("Notes:"));
    }

    #[test]
    fn percent_format() {
        assert_eq!(format_percent(Some(0.924)), "92.40");
        assert_eq!(format_percent(None), UNDEFINED_CELL);
    }
}
