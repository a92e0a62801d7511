//! Node feature encoding.
//!
//! Transaction rows become
//! `[log1p(amount), sin(2π·hour/24), cos(2π·hour/24), sin(2π·dow/7), cos(2π·dow/7), one-hot(category)]`
//! and customers/merchants get
//! `[log1p(1 + count), mean(log1p amount), std(log1p amount)]` aggregated over
//! the records handed to [`encode_features`] only.

use std::collections::{BTreeSet, HashMap};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{DataError, TransactionRecord};

/// Reserved vocabulary slot for categories unseen when the spec was built.
pub const OTHER_CATEGORY: &str = "__other__";

const AGGREGATE_DIM: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSpec {
    /// Known categories in one-hot order; the last entry is always
    /// [`OTHER_CATEGORY`].
    pub category_vocabulary: Vec<String>,
    pub feature_dim_transaction: usize,
    pub feature_dim_customer: usize,
    pub feature_dim_merchant: usize,
    pub amount_transform: String,
    pub time_encoding: String,
}

impl FeatureSpec {
    /// Builds a vocabulary from the given categories in sorted order.
    pub fn new<I, S>(categories: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = categories
            .into_iter()
            .map(Into::into)
            .filter(|c| c != OTHER_CATEGORY)
            .collect();
        let mut vocab: Vec<String> = set.into_iter().collect();
        vocab.push(OTHER_CATEGORY.to_string());
        Self {
            feature_dim_transaction: 5 + vocab.len(),
            feature_dim_customer: AGGREGATE_DIM,
            feature_dim_merchant: AGGREGATE_DIM,
            category_vocabulary: vocab,
            amount_transform: "log1p".into(),
            time_encoding: "sin_cos_hour_day_of_week".into(),
        }
    }

    pub fn from_records(records: &[TransactionRecord]) -> Self {
        Self::new(records.iter().map(|r| r.category.clone()))
    }

    /// One-hot slot for `category`, falling back to the OTHER slot.
    pub fn category_slot(&self, category: &str) -> usize {
        let known = &self.category_vocabulary[..self.category_vocabulary.len() - 1];
        known
            .binary_search_by(|c| c.as_str().cmp(category))
            .unwrap_or(known.len())
    }

    /// Checks the internal consistency of a deserialized spec.
    pub fn is_consistent(&self) -> bool {
        let vocab = &self.category_vocabulary;
        vocab.last().map(String::as_str) == Some(OTHER_CATEGORY)
            && vocab[..vocab.len() - 1].windows(2).all(|w| w[0] < w[1])
            && self.feature_dim_transaction == 5 + vocab.len()
            && self.feature_dim_customer == AGGREGATE_DIM
            && self.feature_dim_merchant == AGGREGATE_DIM
    }

    pub fn transaction_features(&self, record: &TransactionRecord) -> Vec<f64> {
        let mut x = vec![0.0; self.feature_dim_transaction];
        let secs = record.timestamp.rem_euclid(86_400) as f64;
        let hour = secs / 3600.0;
        // 1970-01-01 was a Thursday; Monday = 0.
        let dow = (record.timestamp.div_euclid(86_400) + 3).rem_euclid(7) as f64;
        x[0] = record.amount.ln_1p();
        x[1] = (2.0 * PI * hour / 24.0).sin();
        x[2] = (2.0 * PI * hour / 24.0).cos();
        x[3] = (2.0 * PI * dow / 7.0).sin();
        x[4] = (2.0 * PI * dow / 7.0).cos();
        x[5 + self.category_slot(&record.category)] = 1.0;
        x
    }
}

/// Encoded features keyed by node key, one map per node type.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureTable {
    pub customers: HashMap<String, Vec<f64>>,
    pub merchants: HashMap<String, Vec<f64>>,
    pub transactions: HashMap<String, Vec<f64>>,
}

#[derive(Default)]
struct Moments(Vec<f64>);

impl Moments {
    fn push(&mut self, v: f64) {
        self.0.push(v);
    }

    /// Count, mean and population standard deviation (two-pass).
    fn features(&self) -> Vec<f64> {
        let n = self.0.len() as f64;
        let mean = self.0.iter().sum::<f64>() / n;
        let var = self.0.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        vec![(1.0 + n).ln_1p(), mean, var.sqrt()]
    }
}

pub fn encode_features(records: &[TransactionRecord], spec: &FeatureSpec) -> Result<FeatureTable, DataError> {
    if records.is_empty() {
        return Err(DataError::EmptyInput);
    }
    let mut customers: HashMap<&str, Moments> = HashMap::new();
    let mut merchants: HashMap<&str, Moments> = HashMap::new();
    let mut table = FeatureTable::default();
    for r in records {
        let log_amount = r.amount.ln_1p();
        customers.entry(&r.cc_num).or_default().push(log_amount);
        merchants.entry(&r.merchant).or_default().push(log_amount);
        table
            .transactions
            .insert(r.trans_id.clone(), spec.transaction_features(r));
    }
    table.customers = customers
        .into_iter()
        .map(|(k, m)| (k.to_string(), m.features()))
        .collect();
    table.merchants = merchants
        .into_iter()
        .map(|(k, m)| (k.to_string(), m.features()))
        .collect();
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, ts: i64, cc: &str, amount: f64, category: &str) -> TransactionRecord {
        TransactionRecord {
            trans_id: id.into(),
            timestamp: ts,
            cc_num: cc.into(),
            merchant: "m".into(),
            category: category.into(),
            amount,
            is_fraud: false,
        }
    }

    #[test]
    fn dims_follow_vocabulary() {
        let spec = FeatureSpec::new(["travel", "grocery", "travel"]);
        assert_eq!(spec.category_vocabulary, vec!["grocery", "travel", OTHER_CATEGORY]);
        assert_eq!(spec.feature_dim_transaction, 8);
        assert!(spec.is_consistent());
        assert_eq!(spec.category_slot("grocery"), 0);
        assert_eq!(spec.category_slot("travel"), 1);
        assert_eq!(spec.category_slot("casino"), 2);
    }

    #[test]
    fn zero_amount_and_midnight() {
        let spec = FeatureSpec::new(["a"]);
        // 2019-01-01 00:00:00 UTC, a Tuesday.
        let x = spec.transaction_features(&rec("t", 1_546_300_800, "c", 0.0, "a"));
        assert_eq!(x[0], 0.0);
        assert_eq!((x[1], x[2]), (0.0, 1.0));
        let dow = 1.0;
        assert!((x[3] - (2.0 * PI * dow / 7.0).sin()).abs() < 1e-15);
        assert_eq!(&x[5..], &[1.0, 0.0]);
    }

    #[test]
    fn unseen_category_goes_to_other() {
        let spec = FeatureSpec::new(["a", "b"]);
        let x = spec.transaction_features(&rec("t", 0, "c", 1.0, "zzz"));
        assert_eq!(&x[5..], &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn constant_spend_has_zero_std() {
        let recs: Vec<_> = (0..3).map(|i| rec(&format!("t{i}"), i, "c1", 10.0, "a")).collect();
        let spec = FeatureSpec::from_records(&recs);
        let table = encode_features(&recs, &spec).unwrap();
        let c = &table.customers["c1"];
        // log1p(1 + 3) = ln 5
        assert!((c[0] - 5f64.ln()).abs() < 1e-15);
        // log1p(10) = ln 11 ≈ 2.3979
        assert!((c[1] - 2.397_895_272_798_371).abs() < 1e-12);
        assert!(c[2].abs() < 1e-12);
        assert_eq!(table.transactions.len(), 3);
    }

    #[test]
    fn empty_input_rejected() {
        assert!(matches!(
            encode_features(&[], &FeatureSpec::new(["a"])),
            Err(DataError::EmptyInput)
        ));
    }

    #[test]
    fn aggregates_ignore_other_tables() {
        let train = vec![rec("t1", 0, "c1", 5.0, "a"), rec("t2", 1, "c1", 7.0, "a")];
        let mut val = [rec("v1", 2, "c1", 9.0, "a")];
        let spec = FeatureSpec::from_records(&train);
        let before = encode_features(&train, &spec).unwrap();
        val[0].amount = 1e6;
        let after = encode_features(&train, &spec).unwrap();
        assert_eq!(before, after);
    }
}
