use super::{DataError, TransactionRecord};

/// Chronological train/validation/test partition.
///
/// `train` never holds fraud: fraud that falls in the training window is moved
/// into `validation`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitTable {
    pub train: Vec<TransactionRecord>,
    pub validation: Vec<TransactionRecord>,
    pub test: Vec<TransactionRecord>,
}

const MIN_SPLIT: usize = 10;

fn tiebreak(seed: u64, id: &str) -> u64 {
    // FNV-1a over the id, keyed by the seed.
    let mut h = 0xcbf2_9ce4_8422_2325 ^ seed;
    for b in id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Splits records by time: the earliest rows train, the latest rows test.
///
/// `seed` only orders records that share a timestamp.
pub fn split_records(
    records: &[TransactionRecord],
    val_fraction: f64,
    test_fraction: f64,
    seed: u64,
) -> Result<SplitTable, DataError> {
    let valid = |f: f64| f > 0.0 && f < 1.0;
    if !(valid(val_fraction) && valid(test_fraction) && val_fraction + test_fraction < 1.0) {
        return Err(DataError::InvalidFraction {
            val: val_fraction,
            test: test_fraction,
        });
    }
    let mut order: Vec<&TransactionRecord> = records.iter().collect();
    order.sort_by(|a, b| {
        a.timestamp
            .cmp(&b.timestamp)
            .then_with(|| tiebreak(seed, &a.trans_id).cmp(&tiebreak(seed, &b.trans_id)))
            .then_with(|| a.trans_id.cmp(&b.trans_id))
    });

    let n = order.len();
    let n_val = (n as f64 * val_fraction).round() as usize;
    let n_test = (n as f64 * test_fraction).round() as usize;
    let n_train = n.saturating_sub(n_val + n_test);

    let mut train = Vec::with_capacity(n_train);
    let mut validation = Vec::with_capacity(n_val);
    for r in &order[..n_train] {
        if r.is_fraud {
            validation.push((*r).clone());
        } else {
            train.push((*r).clone());
        }
    }
    validation.extend(order[n_train..n_train + n_val].iter().map(|r| (*r).clone()));
    // Moved fraud precedes the validation window, so this stays chronological.
    let test: Vec<TransactionRecord> = order[n_train + n_val..].iter().map(|r| (*r).clone()).collect();

    for (split, count) in [
        ("train", train.len()),
        ("validation", validation.len()),
        ("test", test.len()),
    ] {
        if count < MIN_SPLIT {
            return Err(DataError::InsufficientData { split, count });
        }
    }
    Ok(SplitTable {
        train,
        validation,
        test,
    })
}
