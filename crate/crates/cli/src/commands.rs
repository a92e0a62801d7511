use std::collections::HashMap;
use std::path::PathBuf;

use fraudgraph::dataio::{
    encode_features, parse_csv, split_records, write_csv, DataError, FeatureSpec, TransactionRecord,
};
use fraudgraph::detector::{
    best_threshold, fit_threshold, score_transactions, train_with, transaction_losses, Confusion, DetectorError,
    ScoreReport, Validation,
};
use fraudgraph::hetgraph::{write_graph, HeteroGraph, NodeType};
use serde::Serialize;

use crate::args::{Cli, Command};
use crate::config::Settings;
use crate::error::CliError;
use crate::modelfile::{Fingerprint, ModelFile, StoredThreshold};
use crate::outputs::{
    ensure_parent, f1_svg, history_svg, loss_histogram_svg, pr_svg, roc_svg, write_curves, write_empty_report,
    write_history, write_json, write_report, write_text,
};

/// Runs one command and returns the summary printed on success.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    let settings = Settings::resolve(cli)?;
    match &cli.command {
        Command::Generate(_) => cmd_generate(&settings),
        Command::BuildGraph(_) => cmd_build_graph(&settings),
        Command::Train(_) => cmd_train(&settings),
        Command::Score(_) => cmd_score(&settings),
        Command::Evaluate(_) => cmd_evaluate(&settings),
    }
}

fn load_records(s: &Settings) -> Result<Vec<TransactionRecord>, CliError> {
    Ok(parse_csv(s.require_input()?, &s.columns)?)
}

fn graph_of(records: &[TransactionRecord], spec: &FeatureSpec) -> Result<HeteroGraph, CliError> {
    let features = encode_features(records, spec)?;
    Ok(HeteroGraph::build(records, &features)?)
}

/// Label of each transaction node, in node order.
fn labels_of(graph: &HeteroGraph, records: &[TransactionRecord]) -> Vec<bool> {
    let by_id: HashMap<&str, bool> = records.iter().map(|r| (r.trans_id.as_str(), r.is_fraud)).collect();
    graph
        .keys(NodeType::Transaction)
        .iter()
        .map(|k| by_id.get(k.as_str()).copied().unwrap_or(false))
        .collect()
}

pub fn cmd_generate(s: &Settings) -> Result<String, CliError> {
    let seed = s.require_seed()?;
    let config = s.synthetic_config(seed);
    let records = config.generate()?;
    let path = s.output_or("transactions.csv");
    ensure_parent(&path)?;
    write_csv(&path, &records, &s.columns)?;
    let fraud = records.iter().filter(|r| r.is_fraud).count();
    Ok(format!(
        "wrote {} records to {}: {} genuine, {} fraud ({:.4}%), {} customers, {} merchants, {} days",
        records.len(),
        path.display(),
        records.len() - fraud,
        fraud,
        100.0 * fraud as f64 / records.len().max(1) as f64,
        config.n_customers,
        config.n_merchants,
        config.n_days
    ))
}

pub fn cmd_build_graph(s: &Settings) -> Result<String, CliError> {
    let records = load_records(s)?;
    let spec = FeatureSpec::from_records(&records);
    let graph = graph_of(&records, &spec)?;
    let issues = graph.validate();
    let path = s.output_or("graph.fgg");
    ensure_parent(&path)?;
    write_graph(&path, &graph)?;
    Ok(format!(
        "wrote graph to {}: {} customers, {} merchants, {} transactions, {} edges, {} validation issues",
        path.display(),
        graph.node_count(NodeType::Customer),
        graph.node_count(NodeType::Merchant),
        graph.node_count(NodeType::Transaction),
        graph.edge_count(),
        issues.len()
    ))
}

pub fn cmd_train(s: &Settings) -> Result<String, CliError> {
    let seed = s.require_seed()?;
    let records = load_records(s)?;
    let split = split_records(&records, s.val_fraction, s.test_fraction, seed)?;
    let spec = FeatureSpec::from_records(&split.train);
    let train_graph = graph_of(&split.train, &spec)?;
    let val_graph = graph_of(&split.validation, &spec)?;
    let val_labels = labels_of(&val_graph, &split.validation);

    let validation = Validation {
        graph: &val_graph,
        labels: &val_labels,
    };
    let outcome = train_with(&train_graph, Some(validation), &s.train, |_| {})?;
    let val_scores = transaction_losses(&outcome.params, &val_graph)?;
    let choice = fit_threshold(&val_scores, &val_labels)?;

    let model = ModelFile {
        config: s.train.clone(),
        feature_spec: spec,
        threshold: Some(StoredThreshold {
            value: choice.threshold,
            method: choice.method,
        }),
        fingerprint: Fingerprint::of(&split.train),
        params: outcome.params,
    };
    let model_path = s.model_path();
    ensure_parent(&model_path)?;
    model.save(&model_path)?;
    write_history(&s.out_dir.join("history.csv"), &outcome.history)?;
    write_text(&s.out_dir.join("history.svg"), &history_svg(&outcome.history))?;

    let h = &outcome.history;
    Ok(format!(
        "trained {} epochs on {} genuine transactions (best epoch {}{}), threshold {} ({:?}), model {}",
        h.epochs.len(),
        split.train.len(),
        h.best_epoch.map_or("-".into(), |e| e.to_string()),
        if h.early_stopped { ", early stop" } else { "" },
        choice.threshold,
        choice.method,
        model_path.display()
    ))
}

fn confusion_line(c: &Confusion) -> String {
    format!(
        "TP {} FP {} TN {} FN {} PR {:.4} RR {:.4} F1 {:.4}",
        c.tp, c.fp, c.tn, c.fn_, c.precision, c.recall, c.f1
    )
}

pub fn cmd_score(s: &Settings) -> Result<String, CliError> {
    let model = ModelFile::load(s.model_path()).map_err(CliError::from)?;
    // A zero-byte file scores like a header-only one.
    let records = match parse_csv(s.require_input()?, &s.columns) {
        Err(DataError::EmptyFile) => Vec::new(),
        other => other?,
    };
    let out = s.output_or("report.csv");
    if records.is_empty() {
        write_empty_report(&out)?;
        return Ok(format!("no transactions; wrote empty report to {}", out.display()));
    }
    let threshold = s
        .threshold
        .or(model.threshold.map(|t| t.value))
        .ok_or_else(|| CliError::Config("model has no threshold; pass --threshold".into()))?;
    let graph = graph_of(&records, &model.feature_spec)?;
    let scored = score_transactions(&model.params, &graph)?;
    let labels = labels_of(&graph, &records);
    let report = ScoreReport::new(&scored, &labels, threshold)?;
    write_report(&out, &report)?;
    let flagged = report.confusion.tp + report.confusion.fp;
    let mut summary = format!(
        "scored {} transactions, {} flagged at threshold {}; report {}",
        report.rows.len(),
        flagged,
        threshold,
        out.display()
    );
    if labels.iter().any(|&l| l) {
        summary.push_str(&format!("\n{}", confusion_line(&report.confusion)));
    }
    Ok(summary)
}

#[derive(Serialize)]
struct Metrics {
    threshold: f64,
    validation_f1: f64,
    validation_transactions: usize,
    test_transactions: usize,
    test_fraud: usize,
    confusion: Confusion,
    roc_auc: f64,
    auc_pr: f64,
}

pub fn cmd_evaluate(s: &Settings) -> Result<String, CliError> {
    let seed = s.require_seed()?;
    let model = ModelFile::load(s.model_path()).map_err(CliError::from)?;
    let records = load_records(s)?;
    let split = split_records(&records, s.val_fraction, s.test_fraction, seed)?;

    let val_graph = graph_of(&split.validation, &model.feature_spec)?;
    let val_labels = labels_of(&val_graph, &split.validation);
    let val_scores = transaction_losses(&model.params, &val_graph)?;
    let search = best_threshold(&val_scores, &val_labels)?;

    let test_graph = graph_of(&split.test, &model.feature_spec)?;
    let test_labels = labels_of(&test_graph, &split.test);
    let scored = score_transactions(&model.params, &test_graph)?;
    let report = ScoreReport::new(&scored, &test_labels, search.threshold)?;
    let (Some(roc), Some(pr)) = (&report.roc, &report.pr) else {
        return Err(DetectorError::DegenerateLabels.into());
    };

    let metrics = Metrics {
        threshold: search.threshold,
        validation_f1: search.f1,
        validation_transactions: val_labels.len(),
        test_transactions: test_labels.len(),
        test_fraud: test_labels.iter().filter(|&&l| l).count(),
        confusion: report.confusion,
        roc_auc: roc.auc,
        auc_pr: pr.auc,
    };
    let dir = &s.out_dir;
    let path = |name: &str| -> PathBuf { dir.join(name) };
    write_json(&path("metrics.json"), &metrics)?;
    write_curves(&path("curves.csv"), roc, pr, &search)?;
    write_report(&path("report.csv"), &report)?;
    write_text(&path("f1_threshold.svg"), &f1_svg(&search))?;
    write_text(&path("roc.svg"), &roc_svg(roc))?;
    write_text(&path("pr.svg"), &pr_svg(pr))?;
    let (mut genuine, mut fraud) = (Vec::new(), Vec::new());
    for row in &report.rows {
        if row.label { &mut fraud } else { &mut genuine }.push(row.loss);
    }
    write_text(
        &path("loss_histogram.svg"),
        &loss_histogram_svg(&genuine, &fraud, search.threshold),
    )?;

    Ok(format!(
        "threshold {} (validation F1 {:.4}); test {}; ROC-AUC {:.4}, AUC-PR {:.4}; outputs in {}",
        search.threshold,
        search.f1,
        confusion_line(&report.confusion),
        roc.auc,
        pr.auc,
        dir.display()
    ))
}
