use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::{DataError, TransactionRecord};

const TIME_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

/// Maps record fields to CSV header names. Defaults follow the Sparkov
/// simulator's column names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnMap {
    pub trans_id: String,
    pub timestamp: String,
    pub cc_num: String,
    pub merchant: String,
    pub category: String,
    pub amount: String,
    pub is_fraud: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            trans_id: "trans_num".into(),
            timestamp: "trans_date_trans_time".into(),
            cc_num: "cc_num".into(),
            merchant: "merchant".into(),
            category: "category".into(),
            amount: "amt".into(),
            is_fraud: "is_fraud".into(),
        }
    }
}

impl ColumnMap {
    /// Header in canonical output order.
    fn canonical_header(&self) -> [&str; 7] {
        [
            &self.timestamp,
            &self.cc_num,
            &self.merchant,
            &self.category,
            &self.amount,
            &self.is_fraud,
            &self.trans_id,
        ]
    }
}

pub fn parse_timestamp(s: &str) -> Option<i64> {
    NaiveDateTime::parse_from_str(s.trim(), TIME_FORMAT)
        .ok()
        .map(|t| t.and_utc().timestamp())
}

pub fn format_timestamp(ts: i64) -> String {
    DateTime::from_timestamp(ts, 0)
        .map(|t| t.naive_utc().format(TIME_FORMAT).to_string())
        .unwrap_or_default()
}

/// Reads a transaction CSV file.
pub fn parse_csv(path: impl AsRef<Path>, columns: &ColumnMap) -> Result<Vec<TransactionRecord>, DataError> {
    read_csv(File::open(path)?, columns)
}

/// Reads transaction rows from any reader. A header-only input yields an
/// empty list; a completely empty input is [`DataError::EmptyFile`].
pub fn read_csv<R: Read>(reader: R, columns: &ColumnMap) -> Result<Vec<TransactionRecord>, DataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return Err(DataError::EmptyFile);
    }
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let idx_id = find(&columns.trans_id)?;
    let idx_time = find(&columns.timestamp)?;
    let idx_card = find(&columns.cc_num)?;
    let idx_merchant = find(&columns.merchant)?;
    let idx_category = find(&columns.category)?;
    let idx_amount = find(&columns.amount)?;
    let idx_fraud = find(&columns.is_fraud)?;

    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |idx: usize, name: &str| {
            row.get(idx).ok_or_else(|| DataError::ParseError {
                row: line,
                field: name.to_string(),
                message: "missing value".into(),
            })
        };
        let bad = |name: &str, message: String| DataError::ParseError {
            row: line,
            field: name.to_string(),
            message,
        };

        let trans_id = field(idx_id, &columns.trans_id)?.trim().to_string();
        if !seen.insert(trans_id.clone()) {
            return Err(bad(&columns.trans_id, format!("duplicate id {trans_id}")));
        }
        let raw_time = field(idx_time, &columns.timestamp)?;
        let timestamp = parse_timestamp(raw_time).ok_or_else(|| {
            bad(
                &columns.timestamp,
                format!("expected YYYY-MM-DD HH:MM:SS, got {raw_time:?}"),
            )
        })?;
        let raw_amount = field(idx_amount, &columns.amount)?;
        let amount: f64 = raw_amount
            .trim()
            .parse()
            .map_err(|_| bad(&columns.amount, format!("not a number: {raw_amount:?}")))?;
        if !(amount.is_finite() && amount > 0.0) {
            return Err(bad(
                &columns.amount,
                format!("amount must be positive, got {raw_amount}"),
            ));
        }
        let raw_fraud = field(idx_fraud, &columns.is_fraud)?;
        let is_fraud = match raw_fraud.trim() {
            "1" | "true" | "True" | "TRUE" => true,
            "0" | "false" | "False" | "FALSE" => false,
            other => return Err(bad(&columns.is_fraud, format!("expected 0/1, got {other:?}"))),
        };
        records.push(TransactionRecord {
            trans_id,
            timestamp,
            cc_num: field(idx_card, &columns.cc_num)?.trim().to_string(),
            merchant: field(idx_merchant, &columns.merchant)?.trim().to_string(),
            category: field(idx_category, &columns.category)?.trim().to_string(),
            amount,
            is_fraud,
        });
    }
    Ok(records)
}

/// Writes records in canonical column order with two-decimal amounts.
pub fn write_csv_to<W: Write>(writer: W, records: &[TransactionRecord], columns: &ColumnMap) -> Result<(), DataError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(columns.canonical_header())?;
    for r in records {
        wtr.write_record([
            format_timestamp(r.timestamp),
            r.cc_num.clone(),
            r.merchant.clone(),
            r.category.clone(),
            format!("{:.2}", r.amount),
            if r.is_fraud { "1" } else { "0" }.to_string(),
            r.trans_id.clone(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_csv(path: impl AsRef<Path>, records: &[TransactionRecord], columns: &ColumnMap) -> Result<(), DataError> {
    let file = std::io::BufWriter::new(File::create(path)?);
    write_csv_to(file, records, columns)
}
