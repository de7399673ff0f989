//! Experiment reports and their files (`report.json`, `summary.csv`,
//! `asr2.csv`).

use std::fmt::Write as _;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use super::metrics::{compute_asr, compute_asr2, median_l2, Scored};
use crate::error::{Error, Result};

/// Outcome of one (defense point, attack, sample) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub defense_index: usize,
    pub attack_index: usize,
    /// Position in the evaluation list.
    pub sample_index: usize,
    /// Index into the test set.
    pub test_index: usize,
    pub true_label: usize,
    pub target: Option<usize>,
    /// The defended oracle's verdict at the final query.
    pub success: bool,
    /// The undefended classifier's verdict at the final sample.
    pub clean_success: bool,
    pub queries_used: u64,
    /// The oracle's own query count when the run ended.
    pub ledger_queries: u64,
    pub l2_distortion: f64,
    pub init_failed: bool,
}

impl Scored for SampleRecord {
    fn success(&self) -> bool {
        self.success
    }

    fn distortion(&self) -> f64 {
        self.l2_distortion
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Asr2Point {
    pub l: f64,
    pub asr2: f64,
}

/// Aggregates for one (defense point, attack) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub theta: f64,
    pub sigma: f64,
    pub attack: String,
    pub attack_index: usize,
    pub targeted: bool,
    pub n: usize,
    pub asr: f64,
    pub clean_asr: f64,
    pub asr2: Vec<Asr2Point>,
    /// Median over successful samples; `None` without successes.
    pub median_l2: Option<f64>,
    pub mean_queries: f64,
    pub acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub version: String,
    /// SHA-256 of the compact JSON config.
    pub config_hash: String,
    pub master_seed: u64,
    pub seed_scheme: String,
    pub created_unix: u64,
}

impl Provenance {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config_hash(cfg),
            master_seed: cfg.seed,
            seed_scheme: "run = mix(master, defense, attack, sample); noise = mix(run, 1); attack = mix(run, 2)"
                .to_string(),
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }
}

pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let text = serde_json::to_string(cfg).expect("config serializes");
    Sha256::digest(text.as_bytes())
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub provenance: Provenance,
    pub config: ExperimentConfig,
    /// Undefended test accuracy.
    pub clean_acc: f64,
    /// Test-set indices of the evaluation samples.
    pub eval_samples: Vec<usize>,
    /// Distortion thresholds per attack.
    pub thresholds: Vec<Vec<f64>>,
    /// Defended test accuracy per grid point.
    pub accuracy: Vec<f64>,
    pub rows: Vec<Row>,
    pub samples: Vec<SampleRecord>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ExperimentReport {
    /// Recomputes every row from the per-sample records.
    pub fn aggregate(&self) -> Vec<Row> {
        let mut rows = Vec::new();
        for (d, p) in self.config.grid.iter().enumerate() {
            for (a, attack) in self.config.attacks.iter().enumerate() {
                let recs: Vec<&SampleRecord> = self
                    .samples
                    .iter()
                    .filter(|r| r.defense_index == d && r.attack_index == a)
                    .collect();
                let Ok(asr) = compute_asr(&recs) else { continue };
                let clean = recs.iter().filter(|r| r.clean_success).count() as f64 / recs.len() as f64;
                let queries: u64 = recs.iter().map(|r| r.queries_used).sum();
                rows.push(Row {
                    theta: p.theta,
                    sigma: p.sigma,
                    attack: attack.family.name().to_string(),
                    attack_index: a,
                    targeted: attack.targeted,
                    n: recs.len(),
                    asr,
                    clean_asr: clean,
                    asr2: self.thresholds[a]
                        .iter()
                        .map(|&l| Asr2Point {
                            l,
                            asr2: compute_asr2(&recs, l).expect("nonempty"),
                        })
                        .collect(),
                    median_l2: median_l2(&recs, true),
                    mean_queries: queries as f64 / recs.len() as f64,
                    acc: self.accuracy[d],
                });
            }
        }
        rows
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config {
            path: "report.json".into(),
            msg: e.to_string(),
        })
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("theta,sigma,attack,targeted,asr,median_l2,mean_queries,acc\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.theta,
                r.sigma,
                r.attack,
                r.targeted,
                r.asr,
                opt(r.median_l2),
                r.mean_queries,
                r.acc
            );
        }
        out
    }

    pub fn asr2_csv(&self) -> String {
        let mut out = String::from("theta,sigma,attack,L,asr2\n");
        for r in &self.rows {
            for p in &r.asr2 {
                let _ = writeln!(out, "{},{},{},{},{}", r.theta, r.sigma, r.attack, p.l, p.asr2);
            }
        }
        out
    }

    /// Writes `report.json`, `summary.csv` and, when thresholds exist,
    /// `asr2.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.to_json())?;
        std::fs::write(dir.join("summary.csv"), self.summary_csv())?;
        if self.rows.iter().any(|r| !r.asr2.is_empty()) {
            std::fs::write(dir.join("asr2.csv"), self.asr2_csv())?;
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
