use std::collections::BTreeMap;
use std::io::Write;

use super::cv::{Aggregation, ExperimentResult};
use crate::error::{Error, Result};

/// Outcome of one grid cell on one corpus.
#[derive(Debug, Clone, PartialEq)]
pub enum CellOutcome {
    Done(ExperimentResult),
    Failed {
        corpus: String,
        method: String,
        learner: String,
        error: String,
    },
}

impl CellOutcome {
    pub fn is_failed(&self) -> bool {
        matches!(self, CellOutcome::Failed { .. })
    }
}

pub const CSV_COLUMNS: [&str; 8] = [
    "classifier",
    "method",
    "corpus",
    "fold",
    "micro_f1",
    "hamming_loss",
    "fit_seconds",
    "predict_seconds",
];

/// One row per fold and one aggregate row (fold `mean` or `pooled`) per
/// completed cell; failed cells get a single row with fold `failed`.
pub fn write_csv<W: Write>(out: W, outcomes: &[CellOutcome], agg: Aggregation) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Format(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS).map_err(csv_err)?;
    for outcome in outcomes {
        match outcome {
            CellOutcome::Done(r) => {
                for f in &r.folds {
                    w.write_record([
                        r.learner.as_str(),
                        &r.method,
                        &r.corpus,
                        &f.fold.to_string(),
                        &f.micro_f1.to_string(),
                        &f.hamming_loss.to_string(),
                        &format!("{:.6}", f.fit_seconds),
                        &format!("{:.6}", f.predict_seconds),
                    ])
                    .map_err(csv_err)?;
                }
                let (f1, hl) = r.aggregate(agg);
                w.write_record([
                    r.learner.as_str(),
                    &r.method,
                    &r.corpus,
                    agg.label(),
                    &f1.to_string(),
                    &hl.to_string(),
                    &format!("{:.6}", r.fit_seconds()),
                    &format!("{:.6}", r.predict_seconds()),
                ])
                .map_err(csv_err)?;
            }
            CellOutcome::Failed {
                corpus,
                method,
                learner,
                ..
            } => {
                w.write_record([learner.as_str(), method, corpus, "failed", "", "", "", ""])
                    .map_err(csv_err)?;
            }
        }
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}

/// Aggregate `(micro F1, hamming loss)` per corpus; `None` for a failed cell.
type Row = BTreeMap<String, Option<(f64, f64)>>;

/// Results table: one row per (classifier, method), a micro-F1 column group
/// and a hamming-loss column group with one column per corpus. The best
/// value of each column is bold.
pub fn markdown_table(outcomes: &[CellOutcome], agg: Aggregation) -> String {
    let mut corpora: Vec<String> = Vec::new();
    let mut cells: BTreeMap<(String, String), Row> = BTreeMap::new();
    for o in outcomes {
        let (corpus, method, learner, value) = match o {
            CellOutcome::Done(r) => (&r.corpus, &r.method, &r.learner, Some(r.aggregate(agg))),
            CellOutcome::Failed {
                corpus,
                method,
                learner,
                ..
            } => (corpus, method, learner, None),
        };
        if !corpora.contains(corpus) {
            corpora.push(corpus.clone());
        }
        cells
            .entry((learner.clone(), method.clone()))
            .or_default()
            .insert(corpus.clone(), value);
    }
    let best = |pick_f1: bool| -> Vec<Option<f64>> {
        corpora
            .iter()
            .map(|c| {
                cells
                    .values()
                    .filter_map(|row| row.get(c).copied().flatten())
                    .map(|(f1, hl)| if pick_f1 { f1 } else { hl })
                    .reduce(|a, b| if pick_f1 { a.max(b) } else { a.min(b) })
            })
            .collect()
    };
    let (best_f1, best_hl) = (best(true), best(false));

    let mut s = String::new();
    s.push_str("| Classifier | Method |");
    for c in &corpora {
        s.push_str(&format!(" micro F1 ({c}) |"));
    }
    for c in &corpora {
        s.push_str(&format!(" hamming loss ({c}) |"));
    }
    s.push_str("\n|---|---|");
    s.push_str(&"---:|".repeat(2 * corpora.len()));
    s.push('\n');
    let fmt = |v: Option<Option<(f64, f64)>>, f1: bool, best: Option<f64>| -> String {
        match v {
            None => "".into(),
            Some(None) => "failed".into(),
            Some(Some((a, b))) => {
                let x = if f1 { a } else { b };
                if Some(x) == best {
                    format!("**{x:.5}**")
                } else {
                    format!("{x:.5}")
                }
            }
        }
    };
    for ((learner, method), row) in &cells {
        s.push_str(&format!("| {learner} | {method} |"));
        for (i, c) in corpora.iter().enumerate() {
            s.push_str(&format!(" {} |", fmt(row.get(c).copied(), true, best_f1[i])));
        }
        for (i, c) in corpora.iter().enumerate() {
            s.push_str(&format!(" {} |", fmt(row.get(c).copied(), false, best_hl[i])));
        }
        s.push('\n');
    }
    s
}
