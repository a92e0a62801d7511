//! Seeded generator for Sparkov-style card transactions.
//!
//! Every customer has a preferred merchant subset and a log-normal spend
//! profile. Genuine transactions follow the profile during waking hours;
//! fraudulent ones multiply the amount by a factor in `[5, 20]`, go to a
//! merchant outside the preferred set and happen between 01:00 and 04:00.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use super::{DataError, TransactionRecord};

/// 2019-01-01 00:00:00 UTC.
pub const SIMULATION_START: i64 = 1_546_300_800;

/// Transaction counts of the reference two-year dataset.
pub const REFERENCE_TRAIN_NORMAL: u64 = 1_842_743;
pub const REFERENCE_TRAIN_ABNORMAL: u64 = 9_651;
pub const REFERENCE_TEST_NORMAL: u64 = 553_574;
pub const REFERENCE_TEST_ABNORMAL: u64 = 2_145;

/// Sparkov merchant categories with a log-amount offset each.
pub const CATEGORIES: [(&str, f64); 14] = [
    ("entertainment", 0.10),
    ("food_dining", -0.20),
    ("gas_transport", -0.15),
    ("grocery_net", -0.10),
    ("grocery_pos", 0.25),
    ("health_fitness", -0.20),
    ("home", 0.0),
    ("kids_pets", -0.10),
    ("misc_net", 0.05),
    ("misc_pos", 0.0),
    ("personal_care", -0.25),
    ("shopping_net", 0.35),
    ("shopping_pos", 0.20),
    ("travel", 0.45),
];

// Relative weight of a genuine purchase starting in each hour of the day.
const HOUR_WEIGHTS: [f64; 24] = [
    0.15, 0.05, 0.05, 0.05, 0.05, 0.15, 0.6, 1.0, 1.4, 1.7, 1.9, 2.0, //
    2.1, 2.0, 1.9, 1.9, 2.0, 2.1, 2.2, 2.1, 1.8, 1.4, 0.9, 0.4,
];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n_customers: usize,
    pub n_merchants: usize,
    pub n_days: u32,
    pub fraud_rate: f64,
    /// From this day on (0-based) the fraud rate switches to the second value.
    pub late_fraud_rate: Option<(u32, f64)>,
    /// Mean number of transactions per customer per day.
    pub daily_rate: f64,
    pub start: i64,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn new(n_customers: usize, n_merchants: usize, n_days: u32, fraud_rate: f64, seed: u64) -> Self {
        Self {
            n_customers,
            n_merchants,
            n_days,
            fraud_rate,
            late_fraud_rate: None,
            daily_rate: 3.3,
            start: SIMULATION_START,
            seed,
        }
    }

    /// Shape of the reference dataset scaled by `scale`: 1000 customers and
    /// 800 merchants over 730 days at scale 1, with the fraud rate of each
    /// period matching the reference train/test counts.
    pub fn reference_scale(scale: f64, seed: u64) -> Self {
        let train_total = (REFERENCE_TRAIN_NORMAL + REFERENCE_TRAIN_ABNORMAL) as f64;
        let test_total = (REFERENCE_TEST_NORMAL + REFERENCE_TEST_ABNORMAL) as f64;
        let days = 730u32;
        let cutoff = (f64::from(days) * train_total / (train_total + test_total)).round() as u32;
        Self {
            n_customers: ((1000.0 * scale).round() as usize).max(2),
            n_merchants: ((800.0 * scale).round() as usize).max(2),
            n_days: days,
            fraud_rate: REFERENCE_TRAIN_ABNORMAL as f64 / train_total,
            late_fraud_rate: Some((cutoff, REFERENCE_TEST_ABNORMAL as f64 / test_total)),
            daily_rate: (train_total + test_total) / (1000.0 * f64::from(days)),
            start: SIMULATION_START,
            seed,
        }
    }

    /// First timestamp of the late-rate period, if any.
    pub fn late_period_start(&self) -> Option<i64> {
        self.late_fraud_rate
            .map(|(day, _)| self.start + i64::from(day) * 86_400)
    }

    pub fn end(&self) -> i64 {
        self.start + i64::from(self.n_days) * 86_400
    }

    fn validate(&self) -> Result<(), DataError> {
        let rate_ok = |r: f64| (0.0..=0.5).contains(&r);
        if !rate_ok(self.fraud_rate) {
            return Err(DataError::InvalidRate(self.fraud_rate));
        }
        if let Some((_, r)) = self.late_fraud_rate {
            if !rate_ok(r) {
                return Err(DataError::InvalidRate(r));
            }
        }
        if self.n_customers < 2 || self.n_merchants < 2 {
            return Err(DataError::InvalidGenerator(format!(
                "need at least 2 customers and 2 merchants, got {} and {}",
                self.n_customers, self.n_merchants
            )));
        }
        if !(self.daily_rate.is_finite() && self.daily_rate > 0.0) {
            return Err(DataError::InvalidGenerator(format!("daily rate {}", self.daily_rate)));
        }
        Ok(())
    }

    pub fn stream(&self) -> Result<SyntheticStream, DataError> {
        SyntheticStream::new(self.clone())
    }

    pub fn generate(&self) -> Result<Vec<TransactionRecord>, DataError> {
        Ok(self.stream()?.collect())
    }
}

/// Generates `n_days` of transactions, sorted by timestamp.
pub fn generate_synthetic(
    n_customers: usize,
    n_merchants: usize,
    n_days: u32,
    fraud_rate: f64,
    seed: u64,
) -> Result<Vec<TransactionRecord>, DataError> {
    SyntheticConfig::new(n_customers, n_merchants, n_days, fraud_rate, seed).generate()
}

struct Customer {
    cc_num: String,
    preferred: Vec<usize>,
    others: Vec<usize>,
    spend: Normal<f64>,
}

struct Merchant {
    name: String,
    category: usize,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Day-by-day record iterator; memory use is bounded by one simulated day.
pub struct SyntheticStream {
    config: SyntheticConfig,
    rng: ChaCha8Rng,
    customers: Vec<Customer>,
    merchants: Vec<Merchant>,
    hour_cdf: Vec<f64>,
    day: u32,
    seq: u64,
    id_prefix: u64,
    pending: std::vec::IntoIter<TransactionRecord>,
}

impl SyntheticStream {
    fn new(config: SyntheticConfig) -> Result<Self, DataError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

        let merchants: Vec<Merchant> = (0..config.n_merchants)
            .map(|i| Merchant {
                name: format!("merchant_{i:05}"),
                category: rng.random_range(0..CATEGORIES.len()),
            })
            .collect();

        let n_pref = ((config.n_merchants as f64 * 0.1).round() as usize).clamp(1, config.n_merchants - 1);
        let mean_dist = Normal::new(3.6, 0.45).expect("valid normal");
        let customers = (0..config.n_customers)
            .map(|i| {
                let card_body: u64 = rng.random_range(0..1_000_000_000);
                let mut preferred = sample(&mut rng, config.n_merchants, n_pref).into_vec();
                preferred.sort_unstable();
                let others = (0..config.n_merchants)
                    .filter(|m| preferred.binary_search(m).is_err())
                    .collect();
                let mu = mean_dist.sample(&mut rng);
                let sigma = rng.random_range(0.3..0.6);
                Customer {
                    cc_num: format!("4{:09}{:06}", card_body, i % 1_000_000),
                    preferred,
                    others,
                    spend: Normal::new(mu, sigma).expect("valid normal"),
                }
            })
            .collect();

        let total: f64 = HOUR_WEIGHTS.iter().sum();
        let hour_cdf = HOUR_WEIGHTS
            .iter()
            .scan(0.0, |acc, w| {
                *acc += w / total;
                Some(*acc)
            })
            .collect();

        Ok(Self {
            id_prefix: splitmix64(config.seed),
            config,
            rng,
            customers,
            merchants,
            hour_cdf,
            day: 0,
            seq: 0,
            pending: Vec::new().into_iter(),
        })
    }

    fn rate_for_day(&self, day: u32) -> f64 {
        match self.config.late_fraud_rate {
            Some((from, rate)) if day >= from => rate,
            _ => self.config.fraud_rate,
        }
    }

    fn genuine_second_of_day(&mut self) -> i64 {
        let u: f64 = self.rng.random();
        let hour = self.hour_cdf.iter().position(|&c| u < c).unwrap_or(23) as i64;
        hour * 3600 + self.rng.random_range(0..3600)
    }

    fn simulate_day(&mut self) -> Vec<TransactionRecord> {
        let day = self.day;
        let rate = self.rate_for_day(day);
        let day_start = self.config.start + i64::from(day) * 86_400;
        let poisson = Poisson::new(self.config.daily_rate).expect("positive rate");
        let mut out = Vec::new();
        for c in 0..self.customers.len() {
            let count = poisson.sample(&mut self.rng) as usize;
            for _ in 0..count {
                let is_fraud = rate > 0.0 && self.rng.random::<f64>() < rate;
                let (merchant, second, multiplier) = if is_fraud {
                    let others = &self.customers[c].others;
                    let m = others[self.rng.random_range(0..others.len())];
                    let second = self.rng.random_range(3600..4 * 3600);
                    (m, second, self.rng.random_range(5.0..=20.0))
                } else {
                    let preferred = &self.customers[c].preferred;
                    let m = preferred[self.rng.random_range(0..preferred.len())];
                    (m, self.genuine_second_of_day(), 1.0)
                };
                let category = self.merchants[merchant].category;
                let log_amount = self.customers[c].spend.sample(&mut self.rng) + CATEGORIES[category].1;
                let amount = ((log_amount.exp() * multiplier).max(1.0) * 100.0).round() / 100.0;
                let id = splitmix64(self.seq);
                self.seq += 1;
                out.push(TransactionRecord {
                    trans_id: format!("{:016x}{:016x}", self.id_prefix, id),
                    timestamp: day_start + second,
                    cc_num: self.customers[c].cc_num.clone(),
                    merchant: self.merchants[merchant].name.clone(),
                    category: CATEGORIES[category].0.to_string(),
                    amount,
                    is_fraud,
                });
            }
        }
        out.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.trans_id.cmp(&b.trans_id)));
        out
    }
}

impl Iterator for SyntheticStream {
    type Item = TransactionRecord;

    fn next(&mut self) -> Option<TransactionRecord> {
        loop {
            if let Some(r) = self.pending.next() {
                return Some(r);
            }
            if self.day >= self.config.n_days {
                return None;
            }
            self.pending = self.simulate_day().into_iter();
            self.day += 1;
        }
    }
}
