//! Experiment orchestration: attack runs over defense grids, metrics, and
//! report files.
//!
//! Every run draws its randomness from
//! `run_seed = mix(master, defense_index, attack_index, sample_index)`, where
//! `sample_index` is the position in the evaluation list. The oracle noise
//! seed is `mix(run_seed, 1)` and the attack seed `mix(run_seed, 2)`. Random
//! targets use `mix(master, attack_index, sample_index, 3)`, so a sample keeps
//! its target across the grid. The threshold calibration pass uses
//! `defense_index = grid.len()`. Runs are independent, so results do not
//! depend on scheduling.

use std::path::Path;

use rand::Rng as _;
use rayon::prelude::*;

use crate::attacks::{run_attack, AttackFamily, Goal};
use crate::defense::{DefendedOracle, DefenseConfig};
use crate::error::{Error, Result};
use crate::model::{gen_blobs, train, Classifier, Dataset, Sample, Split};
use crate::rng::{mix, rng_from};

pub mod config;
pub mod metrics;
pub mod report;

pub use config::{AttackConfig, ClassifierSpec, DatasetSpec, DefensePoint, ExperimentConfig, TargetRule};
pub use metrics::{calibrate_l_from, compute_asr, compute_asr2, measure_acc, median_l2, Scored};
pub use report::{ExperimentReport, Row, SampleRecord};

/// Data and classifier an experiment runs against.
#[derive(Debug, Clone)]
pub struct Workbench {
    pub train: Dataset,
    pub test: Dataset,
    pub classifier: Classifier,
}

impl Workbench {
    /// Loads or generates the data, then loads or trains the classifier.
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        let (train_set, test_set) = load_data(&cfg.dataset)?;
        let classifier = match &cfg.classifier.path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::from(e).context(format!("reading {p}")))?;
                Classifier::from_json(&text)?
            }
            None => train(&train_set, &cfg.classifier.train_config())?,
        };
        if classifier.dim != test_set.dim || classifier.num_classes != test_set.num_classes {
            return Err(Error::Config {
                path: "classifier.path".into(),
                msg: format!(
                    "classifier is {}x{}, data is {}x{}",
                    classifier.num_classes, classifier.dim, test_set.num_classes, test_set.dim
                ),
            });
        }
        Ok(Self {
            train: train_set,
            test: test_set,
            classifier,
        })
    }
}

/// Train and test splits named by a dataset spec.
pub fn load_data(spec: &DatasetSpec) -> Result<(Dataset, Dataset)> {
    match (&spec.train_csv, &spec.test_csv) {
        (Some(tr), Some(te)) => Ok((
            Dataset::read_csv(Path::new(tr), Split::Train).map_err(|e| e.context(format!("reading {tr}")))?,
            Dataset::read_csv(Path::new(te), Split::Test).map_err(|e| e.context(format!("reading {te}")))?,
        )),
        _ => {
            let b = gen_blobs(spec.num_classes, spec.dim, spec.spread, spec.per_class, spec.seed)?;
            Ok((b.train, b.test))
        }
    }
}

/// Test-set indices of the first `n` correctly classified samples, in a
/// seeded random order.
pub fn select_eval(classifier: &Classifier, test: &Dataset, n: usize, seed: u64) -> Result<Vec<usize>> {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..test.len()).collect();
    order.shuffle(&mut rng_from(&[seed, 0xE7A1]));
    let mut picked = Vec::with_capacity(n);
    for i in order {
        if picked.len() == n {
            break;
        }
        let s = &test.samples[i];
        if classifier.predict_hard(&s.features)? == s.label {
            picked.push(i);
        }
    }
    if picked.is_empty() {
        return Err(Error::EmptyInput("correctly classified test samples"));
    }
    Ok(picked)
}

/// The target for a sample, or `None` when the rule excludes it.
pub fn pick_target(rule: TargetRule, label: usize, num_classes: usize, seed: u64) -> Option<usize> {
    match rule {
        TargetRule::NextClass => Some((label + 1) % num_classes),
        TargetRule::Random => {
            let k = rng_from(&[seed]).random_range(0..num_classes - 1);
            Some(if k >= label { k + 1 } else { k })
        }
        TargetRule::Fixed(k) => (k != label).then_some(k),
    }
}

/// Nearest training sample the clean classifier assigns to class `t`.
fn target_init(wb: &Workbench, x0: &[f64], t: usize) -> Result<Option<Vec<f64>>> {
    let mut best: Option<(f64, &Sample)> = None;
    for s in &wb.train.samples {
        if s.label != t || wb.classifier.predict_hard(&s.features)? != t {
            continue;
        }
        let d: f64 = s.features.iter().zip(x0).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, s));
        }
    }
    Ok(best.map(|(_, s)| s.features.clone()))
}

/// One attack run against a fresh oracle.
pub fn run_one(
    wb: &Workbench,
    cfg: &ExperimentConfig,
    point: DefensePoint,
    defense_index: usize,
    attack_index: usize,
    sample_index: usize,
    test_index: usize,
) -> Result<Option<SampleRecord>> {
    let attack = &cfg.attacks[attack_index];
    let x0 = &wb.test.samples[test_index];
    let n = wb.classifier.num_classes;
    let target = if attack.targeted {
        let seed = mix(&[cfg.seed, attack_index as u64, sample_index as u64, 3]);
        match pick_target(attack.target_rule, x0.label, n, seed) {
            Some(t) => Some(t),
            None => return Ok(None),
        }
    } else {
        None
    };
    let run_seed = mix(&[cfg.seed, defense_index as u64, attack_index as u64, sample_index as u64]);
    let spec = attack.spec(mix(&[run_seed, 2]), target);
    let defense = DefenseConfig {
        theta: point.theta,
        sigma: point.sigma,
        seed: mix(&[run_seed, 1]),
        mode: attack.family.mode(),
    };
    let init = match (target, attack.family) {
        (Some(t), AttackFamily::Boundary | AttackFamily::SignOpt) => target_init(wb, &x0.features, t)?,
        _ => None,
    };
    let goal = match target {
        Some(t) => Goal::Targeted(t),
        None => Goal::Untargeted(x0.label),
    };

    let mut oracle = DefendedOracle::new(&wb.classifier, defense)?;
    let record = match run_attack(&mut oracle, x0, &spec, init.as_deref()) {
        Ok(out) => SampleRecord {
            defense_index,
            attack_index,
            sample_index,
            test_index,
            true_label: x0.label,
            target,
            success: out.success,
            clean_success: goal.met(wb.classifier.predict_hard(&out.final_sample)?),
            queries_used: out.queries_used,
            ledger_queries: oracle.queries(),
            l2_distortion: out.l2_distortion,
            init_failed: false,
        },
        Err(Error::InitNotFound(_)) => SampleRecord {
            defense_index,
            attack_index,
            sample_index,
            test_index,
            true_label: x0.label,
            target,
            success: false,
            clean_success: false,
            queries_used: oracle.queries(),
            ledger_queries: oracle.queries(),
            l2_distortion: 0.0,
            init_failed: true,
        },
        Err(e) => {
            return Err(e.context(format!(
                "theta={} sigma={} attack {} ({}) sample {}",
                point.theta,
                point.sigma,
                attack_index,
                attack.family.name(),
                sample_index
            )))
        }
    };
    Ok(Some(record))
}

fn run_all(
    wb: &Workbench,
    cfg: &ExperimentConfig,
    tasks: &[(DefensePoint, usize, usize, usize, usize)],
    jobs: Option<usize>,
) -> Result<Vec<SampleRecord>> {
    let go = |&(p, d, a, i, t): &(DefensePoint, usize, usize, usize, usize)| run_one(wb, cfg, p, d, a, i, t);
    let results: Vec<Result<Option<SampleRecord>>> = match jobs {
        Some(1) => tasks.iter().map(go).collect(),
        _ => {
            let mut builder = rayon::ThreadPoolBuilder::new();
            if let Some(j) = jobs {
                builder = builder.num_threads(j);
            }
            let pool = builder.build().map_err(|e| Error::invalid(e.to_string()))?;
            pool.install(|| tasks.par_iter().map(go).collect())
        }
    };
    let mut out = Vec::with_capacity(results.len());
    for r in results {
        if let Some(rec) = r? {
            out.push(rec);
        }
    }
    Ok(out)
}

/// Calibrated thresholds per attack: an undefended pass over the evaluation
/// samples, then [`calibrate_l_from`].
pub fn calibrate_thresholds(
    wb: &Workbench,
    cfg: &ExperimentConfig,
    eval: &[usize],
    jobs: Option<usize>,
) -> Result<Vec<f64>> {
    let d = cfg.grid.len();
    let mut out = Vec::with_capacity(cfg.attacks.len());
    for a in 0..cfg.attacks.len() {
        let tasks: Vec<_> = eval
            .iter()
            .enumerate()
            .map(|(i, &t)| (DefensePoint::OFF, d, a, i, t))
            .collect();
        let records = run_all(wb, cfg, &tasks, jobs)?;
        let l = calibrate_l_from(&records)
            .map_err(|e| e.context(format!("calibrating attack {a} ({})", cfg.attacks[a].family.name())))?;
        out.push(l);
    }
    Ok(out)
}

/// Runs every (grid point, attack, eval sample) combination and aggregates.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: Option<usize>) -> Result<ExperimentReport> {
    cfg.validate()?;
    let wb = Workbench::build(cfg)?;
    run_on(&wb, cfg, jobs)
}

/// [`run_experiment`] on an already built workbench.
pub fn run_on(wb: &Workbench, cfg: &ExperimentConfig, jobs: Option<usize>) -> Result<ExperimentReport> {
    cfg.validate()?;
    let eval = select_eval(&wb.classifier, &wb.test, cfg.n_eval_samples, cfg.seed)?;
    let mut thresholds: Vec<Vec<f64>> = vec![cfg.distortion_thresholds.clone(); cfg.attacks.len()];
    if cfg.calibrate_thresholds {
        for (list, l) in thresholds.iter_mut().zip(calibrate_thresholds(wb, cfg, &eval, jobs)?) {
            list.push(l);
        }
    }
    for list in thresholds.iter_mut() {
        list.sort_by(f64::total_cmp);
        list.dedup();
    }

    let mut accuracy = Vec::with_capacity(cfg.grid.len());
    for (d, p) in cfg.grid.iter().enumerate() {
        let defense = DefenseConfig {
            theta: p.theta,
            sigma: p.sigma,
            seed: mix(&[cfg.seed, d as u64, 0xACC]),
            mode: Default::default(),
        };
        accuracy.push(measure_acc(&wb.classifier, defense, &wb.test)?);
    }

    let mut tasks = Vec::new();
    for (d, &p) in cfg.grid.iter().enumerate() {
        for a in 0..cfg.attacks.len() {
            for (i, &t) in eval.iter().enumerate() {
                tasks.push((p, d, a, i, t));
            }
        }
    }
    let samples = run_all(wb, cfg, &tasks, jobs)?;

    let mut report = ExperimentReport {
        provenance: report::Provenance::new(cfg),
        config: cfg.clone(),
        clean_acc: wb.classifier.accuracy(&wb.test)?,
        eval_samples: eval,
        thresholds,
        accuracy,
        rows: Vec::new(),
        samples,
    };
    report.rows = report.aggregate();
    Ok(report)
}
