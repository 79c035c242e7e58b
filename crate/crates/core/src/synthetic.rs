//! Seeded synthetic corpora with planted driver words.
//!
//! Each document is background words plus a Poisson number of driver words at
//! random positions. Every driver occurrence adds its own shifts to `ln α` and
//! `ln β`, starting from a base Beta with mean `σ(base_logit)` and
//! concentration `concentration`; the label is a draw from the resulting Beta.

use chrono::{DateTime, Duration, Utc};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::beta::BetaParams;
use crate::data::LabeledExample;
use crate::error::{Error, Result};
use crate::models::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_docs: usize,
    pub vocab_size: usize,
    pub n_drivers: usize,
    /// Poisson rate of driver occurrences per document.
    pub drivers_per_doc: f64,
    pub min_background: usize,
    pub max_background: usize,
    pub base_logit: f64,
    /// Shift magnitudes are drawn uniformly from this range, each with a random sign.
    pub effect_range: (f64, f64),
    /// `α + β` of the base distribution.
    pub concentration: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_docs: 5000,
            vocab_size: 1000,
            n_drivers: 20,
            drivers_per_doc: 3.0,
            min_background: 30,
            max_background: 60,
            base_logit: -1.8,
            effect_range: (0.6, 1.4),
            concentration: 100.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Driver {
    pub word: String,
    /// Added to `ln α` per occurrence.
    pub log_alpha_shift: f64,
    /// Added to `ln β` per occurrence.
    pub log_beta_shift: f64,
}

impl Driver {
    /// Change in the logit of the mean per occurrence; positive drivers raise the score.
    pub fn mean_effect(&self) -> f64 {
        self.log_alpha_shift - self.log_beta_shift
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub examples: Vec<LabeledExample>,
    pub drivers: Vec<Driver>,
    /// Mean of each document's label distribution.
    pub means: Vec<f64>,
}

impl SyntheticCorpus {
    pub fn is_driver(&self, word: &str) -> bool {
        self.drivers.iter().any(|d| d.word == word)
    }
}

pub fn word(index: usize) -> String {
    format!("w{index:04}")
}

pub fn generate(config: &SyntheticConfig) -> Result<SyntheticCorpus> {
    if config.n_drivers >= config.vocab_size {
        return Err(Error::Config("need more vocabulary words than drivers".into()));
    }
    if config.min_background > config.max_background || config.max_background == 0 {
        return Err(Error::Config("invalid background length range".into()));
    }
    if !(config.concentration > 0.0) || !(config.drivers_per_doc > 0.0) {
        return Err(Error::Config("concentration and driver rate must be positive".into()));
    }
    let (lo, hi) = config.effect_range;
    if !(lo <= hi) {
        return Err(Error::Config("invalid effect range".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut driver_ids = sample(&mut rng, config.vocab_size, config.n_drivers).into_vec();
    driver_ids.sort_unstable();
    let drivers: Vec<Driver> = driver_ids
        .iter()
        .map(|&w| {
            let mut shift = || {
                let m = rng.random_range(lo..=hi);
                if rng.random_bool(0.5) {
                    m
                } else {
                    -m
                }
            };
            let (log_alpha_shift, log_beta_shift) = (shift(), shift());
            Driver { word: word(w), log_alpha_shift, log_beta_shift }
        })
        .collect();
    let background: Vec<usize> = (0..config.vocab_size).filter(|w| driver_ids.binary_search(w).is_err()).collect();
    let poisson = Poisson::new(config.drivers_per_doc).map_err(|e| Error::Config(e.to_string()))?;
    let base_a = sigmoid(config.base_logit) * config.concentration;
    let base_b = config.concentration - base_a;
    let epoch: DateTime<Utc> = DateTime::from_timestamp(1_500_000_000, 0).expect("valid timestamp");

    let mut examples = Vec::with_capacity(config.n_docs);
    let mut means = Vec::with_capacity(config.n_docs);
    for n in 0..config.n_docs {
        let len = rng.random_range(config.min_background..=config.max_background);
        let mut words: Vec<String> =
            (0..len).map(|_| word(background[rng.random_range(0..background.len())])).collect();
        let k = poisson.sample(&mut rng) as usize;
        let (mut log_a, mut log_b) = (base_a.ln(), base_b.ln());
        for _ in 0..k {
            let d = &drivers[rng.random_range(0..drivers.len())];
            log_a += d.log_alpha_shift;
            log_b += d.log_beta_shift;
            let at = rng.random_range(0..=words.len());
            words.insert(at, d.word.clone());
        }
        let p = BetaParams::from_log(log_a, log_b)?;
        examples.push(LabeledExample {
            id: format!("syn-{n:05}"),
            text: words.join(" "),
            label: p.sample(&mut rng),
            published_at: epoch + Duration::minutes(n as i64),
        });
        means.push(p.mean());
    }
    Ok(SyntheticCorpus { examples, drivers, means })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticConfig {
        SyntheticConfig { n_docs: 50, vocab_size: 100, n_drivers: 8, seed: 4, ..Default::default() }
    }

    #[test]
    fn deterministic_for_a_seed() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a, b);
        let c = generate(&SyntheticConfig { seed: 5, ..small() }).unwrap();
        assert_ne!(a.examples, c.examples);
    }

    #[test]
    fn drivers_and_labels() {
        let c = generate(&small()).unwrap();
        assert_eq!(c.drivers.len(), 8);
        assert!(c.drivers.iter().all(|d| d.log_alpha_shift.abs() >= 0.6 && d.log_beta_shift.abs() <= 1.4));
        assert!(c.examples.iter().all(|e| e.label > 0.0 && e.label < 1.0));
        let words: usize = c.examples[0].text.split(' ').count();
        assert!(words >= 30);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(generate(&SyntheticConfig { n_drivers: 100, ..small() }).is_err());
        assert!(generate(&SyntheticConfig { min_background: 9, max_background: 3, ..small() }).is_err());
    }
}
