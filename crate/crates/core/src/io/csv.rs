//! CSV emission with a fixed column layout per experiment.
//!
//! Floats are written with Rust's shortest round-trip formatting, so the same
//! numbers always produce the same bytes.

use std::fs::File;
use std::path::Path;

use crate::algorithms::TrainResult;
use crate::analysis::{DegreeTrace, ReinitReport, SensitivityCurve};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsvSchema {
    pub name: &'static str,
    pub columns: &'static [&'static str],
}

pub const SENSITIVITY: CsvSchema = CsvSchema {
    name: "sensitivity",
    columns: &["fraction_removed", "accuracy", "order", "seed"],
};

pub const DEGREES: CsvSchema = CsvSchema {
    name: "degrees",
    columns: &["epoch", "node_index", "in_degree"],
};

pub const HISTORY: CsvSchema = CsvSchema {
    name: "history",
    columns: &["epoch", "train_loss", "test_accuracy"],
};

/// Summary rows carry `mean` / `std_population` in the seed column.
pub const REINIT: CsvSchema = CsvSchema {
    name: "reinit",
    columns: &["seed", "accuracy"],
};

pub const HYBRID: CsvSchema = CsvSchema {
    name: "hybrid",
    columns: &["freeze_epoch", "seed", "accuracy"],
};

/// One row per freeze epoch of a hybrid sweep.
pub const HYBRID_SUMMARY: CsvSchema = CsvSchema {
    name: "hybrid_summary",
    columns: &["freeze_epoch", "mean", "std_population"],
};

/// `pearson` / `spearman` are empty when the correlation is undefined.
pub const CORRELATION: CsvSchema = CsvSchema {
    name: "correlation",
    columns: &["layer", "epoch_a", "epoch_b", "pearson", "spearman"],
};

pub type Row = Vec<String>;

/// Writes a header row then every record.
pub fn write_csv(rows: &[Row], schema: &CsvSchema, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != schema.columns.len()) {
        return Err(Error::input(format!(
            "row {i} has {} fields but {} schema has {}",
            r.len(),
            schema.name,
            schema.columns.len()
        )));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let to_io = |e: csv::Error| Error::io(path, e.into());
    w.write_record(schema.columns).map_err(to_io)?;
    for r in rows {
        w.write_record(r).map_err(to_io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn sensitivity_rows(curve: &SensitivityCurve) -> Vec<Row> {
    curve
        .points
        .iter()
        .map(|p| {
            vec![
                fmt_f64(p.fraction_removed),
                fmt_f64(p.accuracy),
                curve.order.to_string(),
                curve.seed.to_string(),
            ]
        })
        .collect()
}

pub fn degree_rows(trace: &DegreeTrace) -> Vec<Row> {
    trace
        .rows()
        .iter()
        .enumerate()
        .flat_map(|(e, row)| {
            row.iter()
                .enumerate()
                .map(move |(node, d)| vec![e.to_string(), node.to_string(), d.to_string()])
        })
        .collect()
}

pub fn history_rows(result: &TrainResult) -> Vec<Row> {
    result
        .history
        .iter()
        .enumerate()
        .map(|(e, h)| vec![(e + 1).to_string(), fmt_f64(h.train_loss), fmt_f64(h.test_accuracy)])
        .collect()
}

pub fn reinit_rows(report: &ReinitReport) -> Vec<Row> {
    let mut rows: Vec<Row> = report
        .seeds
        .iter()
        .zip(&report.accuracies)
        .map(|(s, a)| vec![s.to_string(), fmt_f64(*a)])
        .collect();
    rows.push(vec!["mean".into(), fmt_f64(report.mean)]);
    rows.push(vec!["std_population".into(), fmt_f64(report.std)]);
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{CurvePoint, RemovalOrder};

    #[test]
    fn header_only_for_empty_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        write_csv(&[], &DEGREES, &p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "epoch,node_index,in_degree\n");
    }

    #[test]
    fn sensitivity_columns() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let curve = SensitivityCurve {
            order: RemovalOrder::Random,
            seed: 7,
            points: vec![CurvePoint {
                fraction_removed: 0.0,
                accuracy: 0.5,
                removed: 0,
            }],
        };
        write_csv(&sensitivity_rows(&curve), &SENSITIVITY, &p).unwrap();
        assert_eq!(
            std::fs::read_to_string(&p).unwrap(),
            "fraction_removed,accuracy,order,seed\n0,0.5,random,7\n"
        );
    }

    #[test]
    fn degree_trace_columns() {
        let trace = DegreeTrace::new(0, vec![vec![2, 1], vec![1, 2]]).unwrap();
        let rows = degree_rows(&trace);
        assert_eq!(rows[0], vec!["0", "0", "2"]);
        assert_eq!(rows[3], vec!["1", "1", "2"]);
    }

    #[test]
    fn ragged_rows_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![vec!["1".to_string()]];
        assert!(matches!(
            write_csv(&rows, &DEGREES, dir.path().join("x.csv")),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn io_error_names_path() {
        let err = write_csv(&[], &DEGREES, "/nonexistent-dir/x.csv").unwrap_err();
        assert!(err.to_string().contains("/nonexistent-dir/x.csv"));
    }
}
