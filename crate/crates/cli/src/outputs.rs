//! CSV, JSON and SVG artifacts written by the commands.

use std::fs;
use std::path::Path;

use fraudgraph::detector::{PrCurve, RocCurve, ScoreReport, ThresholdSearch, TrainHistory, Verdict};
use serde::Serialize;

use crate::error::CliError;
use crate::plot::{histogram, line_chart, Chart, Series};

pub fn ensure_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e)),
        _ => Ok(()),
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    ensure_parent(path)?;
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, CliError> {
    ensure_parent(path)?;
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::io(path, std::io::Error::other(e))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `trans_id,loss,label,verdict`, one row per transaction.
pub fn write_report(path: &Path, report: &ScoreReport) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    w.write_record(["trans_id", "loss", "label", "verdict"]).map_err(&err)?;
    for r in &report.rows {
        let verdict = match r.verdict {
            Verdict::Fraud => "fraud",
            Verdict::NonFraud => "non-fraud",
        };
        w.write_record([
            r.trans_id.as_str(),
            &r.loss.to_string(),
            if r.label { "1" } else { "0" },
            verdict,
        ])
        .map_err(&err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_empty_report(path: &Path) -> Result<(), CliError> {
    write_text(path, "trans_id,loss,label,verdict\n")
}

/// `epoch,train_loss,val_genuine,val_fraud`.
pub fn write_history(path: &Path, history: &TrainHistory) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    w.write_record(["epoch", "train_loss", "val_genuine", "val_fraud"])
        .map_err(&err)?;
    for e in &history.epochs {
        w.write_record([
            e.epoch.to_string(),
            e.train_loss.to_string(),
            opt(e.val_genuine),
            opt(e.val_fraud),
        ])
        .map_err(&err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Long format `curve,x,y` holding the ROC (fpr, tpr), PR (recall,
/// precision) and F1-vs-threshold curves.
pub fn write_curves(path: &Path, roc: &RocCurve, pr: &PrCurve, f1: &ThresholdSearch) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    w.write_record(["curve", "x", "y"]).map_err(&err)?;
    let groups: [(&str, &[(f64, f64)]); 3] = [("roc", &roc.points), ("pr", &pr.points), ("f1", &f1.curve)];
    for (name, points) in groups {
        for (x, y) in points {
            w.write_record([name, &x.to_string(), &y.to_string()]).map_err(&err)?;
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(path, std::io::Error::other(e)))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn history_svg(history: &TrainHistory) -> String {
    let train: Vec<(f64, f64)> = history.epochs.iter().map(|e| (e.epoch as f64, e.train_loss)).collect();
    let genuine: Vec<(f64, f64)> = history
        .epochs
        .iter()
        .filter_map(|e| e.val_genuine.map(|v| (e.epoch as f64, v)))
        .collect();
    let fraud: Vec<(f64, f64)> = history
        .epochs
        .iter()
        .filter_map(|e| e.val_fraud.map(|v| (e.epoch as f64, v)))
        .collect();
    let mut series = vec![Series {
        name: "train",
        points: &train,
    }];
    if !genuine.is_empty() {
        series.push(Series {
            name: "validation genuine",
            points: &genuine,
        });
    }
    if !fraud.is_empty() {
        series.push(Series {
            name: "validation fraud",
            points: &fraud,
        });
    }
    let chart = Chart {
        title: "Training and validation loss",
        x_label: "epoch",
        y_label: "loss",
        x_range: None,
        y_range: None,
        marker: None,
    };
    line_chart(&chart, &series)
}

pub fn loss_histogram_svg(genuine: &[f64], fraud: &[f64], threshold: f64) -> String {
    let chart = Chart {
        title: "Reconstruction loss by class",
        x_label: "loss",
        y_label: "fraction of class",
        x_range: None,
        y_range: None,
        marker: Some((threshold, "threshold")),
    };
    histogram(&chart, &[("genuine", genuine), ("fraud", fraud)], 40)
}

pub fn f1_svg(search: &ThresholdSearch) -> String {
    let chart = Chart {
        title: "F1 against threshold (validation)",
        x_label: "threshold",
        y_label: "F1",
        x_range: None,
        y_range: Some((0.0, 1.0)),
        marker: Some((search.threshold, "best")),
    };
    line_chart(
        &chart,
        &[Series {
            name: "F1",
            points: &search.curve,
        }],
    )
}

pub fn roc_svg(roc: &RocCurve) -> String {
    let chart = Chart {
        title: &format!("ROC curve (AUC {:.4})", roc.auc),
        x_label: "false positive rate",
        y_label: "true positive rate",
        x_range: Some((0.0, 1.0)),
        y_range: Some((0.0, 1.0)),
        marker: None,
    };
    let chance = [(0.0, 0.0), (1.0, 1.0)];
    line_chart(
        &chart,
        &[
            Series {
                name: "model",
                points: &roc.points,
            },
            Series {
                name: "chance",
                points: &chance,
            },
        ],
    )
}

pub fn pr_svg(pr: &PrCurve) -> String {
    let chart = Chart {
        title: &format!("Precision-recall curve (AP {:.4})", pr.auc),
        x_label: "recall",
        y_label: "precision",
        x_range: Some((0.0, 1.0)),
        y_range: Some((0.0, 1.0)),
        marker: None,
    };
    line_chart(
        &chart,
        &[Series {
            name: "model",
            points: &pr.points,
        }],
    )
}
