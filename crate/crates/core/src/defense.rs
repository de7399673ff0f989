//! The boundary defense oracle.
//!
//! A query whose top confidence exceeds `theta` is answered truthfully. Any
//! other query is a boundary query: iid `N(0, sigma^2)` noise is added to every
//! confidence entry before the answer is released. Soft answers are clipped to
//! `[0, 1]` (never renormalized); hard answers take the argmax of the
//! unclipped noisy vector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{argmax, Classifier, ConfidenceVector};
use crate::rng::counter_normal;

/// What the oracle reveals per query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputMode {
    #[default]
    Soft,
    Hard,
}

impl OutputMode {
    pub fn name(self) -> &'static str {
        match self {
            OutputMode::Soft => "soft",
            OutputMode::Hard => "hard",
        }
    }
}

/// `BD(theta, sigma)` parameters plus the noise seed and output mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefenseConfig {
    pub theta: f64,
    pub sigma: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: OutputMode,
}

impl DefenseConfig {
    /// A configuration that never adds noise.
    pub fn disabled(mode: OutputMode) -> Self {
        Self {
            theta: 0.0,
            sigma: 0.0,
            seed: 0,
            mode,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::invalid(format!("theta {} outside [0,1]", self.theta)));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid(format!("sigma {} must be >= 0", self.sigma)));
        }
        Ok(())
    }
}

/// `F_BD`: unchanged when `max(scores) > theta`, otherwise `scores + noise`.
///
/// `noise` is expected to be a draw from `N(0, sigma^2 I)`; with `sigma == 0`
/// it is ignored.
pub fn bd_transform(scores: &ConfidenceVector, theta: f64, sigma: f64, noise: &[f64]) -> Result<ConfidenceVector> {
    if noise.len() != scores.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            got: noise.len(),
        });
    }
    if scores.max() > theta || sigma == 0.0 {
        return Ok(scores.clone());
    }
    Ok(ConfidenceVector(
        scores.0.iter().zip(noise).map(|(s, v)| s + v).collect(),
    ))
}

/// Count of queries served.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryLedger {
    count: u64,
}

impl QueryLedger {
    pub fn count(&self) -> u64 {
        self.count
    }
}

/// The noise vector the oracle draws for its `query`-th query.
///
/// Noise is counter based, so this can be recomputed at any time from the
/// seed and the query index alone.
pub fn noise_for_query(seed: u64, query: u64, n: usize, sigma: f64) -> Vec<f64> {
    (0..n as u64).map(|i| sigma * counter_normal(seed, query, i)).collect()
}

/// A classifier wrapped by `BD(theta, sigma)`.
#[derive(Debug, Clone)]
pub struct DefendedOracle<'a> {
    classifier: &'a Classifier,
    config: DefenseConfig,
    ledger: QueryLedger,
    /// Index of the next noise draw. Unlike the ledger it is never reset, so
    /// a reset does not replay old noise.
    noise_counter: u64,
}

impl<'a> DefendedOracle<'a> {
    pub fn new(classifier: &'a Classifier, config: DefenseConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            classifier,
            config,
            ledger: QueryLedger::default(),
            noise_counter: 0,
        })
    }

    pub fn config(&self) -> &DefenseConfig {
        &self.config
    }

    pub fn mode(&self) -> OutputMode {
        self.config.mode
    }

    pub fn dim(&self) -> usize {
        self.classifier.dim
    }

    pub fn num_classes(&self) -> usize {
        self.classifier.num_classes
    }

    pub fn ledger(&self) -> QueryLedger {
        self.ledger
    }

    pub fn queries(&self) -> u64 {
        self.ledger.count
    }

    pub fn reset_ledger(&mut self) {
        self.ledger = QueryLedger::default();
    }

    /// Answers one query with the unclipped `F_BD(x)`.
    fn respond(&mut self, x: &[f64]) -> Result<ConfidenceVector> {
        let scores = self.classifier.predict_soft(x)?;
        let q = self.noise_counter;
        self.noise_counter += 1;
        self.ledger.count += 1;
        if scores.max() > self.config.theta || self.config.sigma == 0.0 {
            return Ok(scores);
        }
        let noise = noise_for_query(self.config.seed, q, scores.len(), self.config.sigma);
        bd_transform(&scores, self.config.theta, self.config.sigma, &noise)
    }

    /// Soft-label answer `clip(F_BD(x), 0, 1)`.
    pub fn query_soft(&mut self, x: &[f64]) -> Result<ConfidenceVector> {
        if self.config.mode != OutputMode::Soft {
            return Err(Error::ModeMismatch {
                needed: "soft",
                served: self.config.mode.name(),
            });
        }
        let mut out = self.respond(x)?;
        for v in out.0.iter_mut() {
            *v = v.clamp(0.0, 1.0);
        }
        Ok(out)
    }

    /// Hard-label answer `argmax F_BD(x)`, available in either mode.
    pub fn query_hard(&mut self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.respond(x)?.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cv(v: &[f64]) -> ConfidenceVector {
        ConfidenceVector(v.to_vec())
    }

    fn two_proto() -> Classifier {
        Classifier::prototype(&[vec![0.0, 0.0], vec![1.0, 0.0]], 1.0).unwrap()
    }

    fn cfg(theta: f64, sigma: f64, mode: OutputMode) -> DefenseConfig {
        DefenseConfig {
            theta,
            sigma,
            seed: 3,
            mode,
        }
    }

    #[test]
    fn confident_scores_pass_through() {
        let s = cv(&[0.9, 0.05, 0.05]);
        let out = bd_transform(&s, 0.3, 0.1, &[5.0, -5.0, 1.0]).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn zero_noise_on_boundary_is_identity() {
        let s = cv(&[0.4, 0.3, 0.3]);
        assert_eq!(bd_transform(&s, 0.5, 0.0, &[0.0; 3]).unwrap(), s);
    }

    #[test]
    fn boundary_scores_get_noise_added() {
        let s = cv(&[0.4, 0.3, 0.3]);
        let out = bd_transform(&s, 0.5, 0.1, &[0.2, -0.1, 0.05]).unwrap();
        let want = [0.6, 0.2, 0.35];
        for (o, w) in out.0.iter().zip(want) {
            assert!((o - w).abs() < 1e-15);
        }
    }

    #[test]
    fn equality_with_theta_is_a_boundary_query() {
        let s = cv(&[0.5, 0.5]);
        let out = bd_transform(&s, 0.5, 0.1, &[0.1, 0.0]).unwrap();
        assert_eq!(out.0, vec![0.6, 0.5]);
    }

    #[test]
    fn noise_length_must_match() {
        assert!(bd_transform(&cv(&[0.5, 0.5]), 0.5, 0.1, &[0.1]).is_err());
    }

    #[test]
    fn sigma_zero_is_transparent() {
        let c = two_proto();
        let mut o = DefendedOracle::new(&c, cfg(1.0, 0.0, OutputMode::Soft)).unwrap();
        let x = [0.5, 0.0];
        assert_eq!(o.query_soft(&x).unwrap(), c.predict_soft(&x).unwrap());
        assert_eq!(o.query_hard(&x).unwrap(), c.predict_hard(&x).unwrap());
        assert_eq!(o.queries(), 2);
    }

    #[test]
    fn confident_queries_are_transparent() {
        let c = two_proto();
        let mut o = DefendedOracle::new(&c, cfg(0.6, 10.0, OutputMode::Soft)).unwrap();
        let x = [0.0, 0.0];
        assert!(c.predict_soft(&x).unwrap().max() > 0.6);
        assert_eq!(o.query_soft(&x).unwrap(), c.predict_soft(&x).unwrap());
        assert_eq!(o.queries(), 1);
        assert_eq!(o.query_hard(&x).unwrap(), 0);
    }

    #[test]
    fn boundary_answer_replays_from_counter_stream() {
        let c = two_proto();
        let config = cfg(0.7, 0.2, OutputMode::Soft);
        let mut o = DefendedOracle::new(&c, config).unwrap();
        let x = [0.5, 0.0];
        let first = o.query_soft(&x).unwrap();
        let second = o.query_soft(&x).unwrap();
        // independent replay: Box-Muller over the hashed (seed, query, index)
        for (q, got) in [(0u64, &first), (1u64, &second)] {
            for i in 0..2u64 {
                let base = crate::rng::mix(&[3, q, i]);
                let u1 = crate::rng::unit_open(crate::rng::splitmix64(base));
                let u2 = crate::rng::unit_open(crate::rng::splitmix64(base ^ 0xD1B5_4A32_D192_ED03));
                let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
                let want = (0.5 + 0.2 * z).clamp(0.0, 1.0);
                assert_eq!(got.0[i as usize], want);
            }
        }
        assert_ne!(first, second);
    }

    #[test]
    fn soft_answers_are_clipped() {
        let c = two_proto();
        let mut o = DefendedOracle::new(&c, cfg(1.0, 5.0, OutputMode::Soft)).unwrap();
        for _ in 0..200 {
            let f = o.query_soft(&[0.3, 0.2]).unwrap();
            assert!(f.0.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn hard_mode_refuses_soft_queries() {
        let c = two_proto();
        let mut o = DefendedOracle::new(&c, cfg(0.5, 0.1, OutputMode::Hard)).unwrap();
        assert!(matches!(o.query_soft(&[0.0, 0.0]), Err(Error::ModeMismatch { .. })));
        assert_eq!(o.queries(), 0);
    }

    #[test]
    fn dimension_errors_do_not_count() {
        let c = two_proto();
        let mut o = DefendedOracle::new(&c, cfg(0.5, 0.1, OutputMode::Hard)).unwrap();
        assert!(o.query_hard(&[0.0]).is_err());
        assert_eq!(o.queries(), 0);
    }

    #[test]
    fn ledger_resets() {
        let c = two_proto();
        let mut o = DefendedOracle::new(&c, cfg(0.5, 0.1, OutputMode::Hard)).unwrap();
        for _ in 0..5 {
            o.query_hard(&[0.2, 0.2]).unwrap();
        }
        assert_eq!(o.queries(), 5);
        o.reset_ledger();
        assert_eq!(o.queries(), 0);
        o.reset_ledger();
        assert_eq!(o.queries(), 0);
        o.query_hard(&[0.2, 0.2]).unwrap();
        assert_eq!(o.queries(), 1);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let c = two_proto();
        assert!(DefendedOracle::new(&c, cfg(1.5, 0.1, OutputMode::Soft)).is_err());
        assert!(DefendedOracle::new(&c, cfg(0.5, -0.1, OutputMode::Soft)).is_err());
    }

    #[test]
    fn config_reads_from_json() {
        let c: DefenseConfig = serde_json::from_str(r#"{"theta":0.5,"sigma":0.1,"seed":9,"mode":"hard"}"#).unwrap();
        assert_eq!(c.mode, OutputMode::Hard);
        assert!(serde_json::from_str::<DefenseConfig>(r#"{"theta":0.5,"sigma":0.1,"x":1}"#).is_err());
    }
}
