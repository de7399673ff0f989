//! Experiment configuration: one JSON document plus dotted-path overrides.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::attacks::{AttackFamily, AttackSpec};
use crate::error::{Error, Result};
use crate::model::{ClassifierKind, TrainConfig};

/// Where the data comes from: generated blobs, or a pair of CSV files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSpec {
    pub num_classes: usize,
    pub dim: usize,
    pub spread: f64,
    pub per_class: usize,
    pub seed: u64,
    pub train_csv: Option<String>,
    pub test_csv: Option<String>,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            num_classes: 10,
            dim: 20,
            spread: 0.33,
            per_class: 100,
            seed: 1,
            train_csv: None,
            test_csv: None,
        }
    }
}

/// Temperature of the reference prototype classifier.
pub const REFERENCE_TEMPERATURE: f64 = 0.25;

/// How to obtain the classifier: train it, or load it from `path`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierSpec {
    pub kind: ClassifierKind,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub hidden: usize,
    pub batch: usize,
    /// Softmax temperature of the prototype classifier; `null` fits it.
    pub temperature: Option<f64>,
    pub path: Option<String>,
}

impl Default for ClassifierSpec {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            kind: t.kind,
            epochs: t.epochs,
            lr: t.lr,
            seed: t.seed,
            hidden: t.hidden,
            batch: t.batch,
            temperature: Some(REFERENCE_TEMPERATURE),
            path: None,
        }
    }
}

impl ClassifierSpec {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            kind: self.kind,
            epochs: self.epochs,
            lr: self.lr,
            seed: self.seed,
            hidden: self.hidden,
            batch: self.batch,
            temperature: self.temperature,
        }
    }
}

/// One `(theta, sigma)` point of a defense grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefensePoint {
    pub theta: f64,
    pub sigma: f64,
}

impl DefensePoint {
    pub const OFF: DefensePoint = DefensePoint { theta: 0.0, sigma: 0.0 };

    pub fn new(theta: f64, sigma: f64) -> Self {
        Self { theta, sigma }
    }
}

/// How a targeted run picks its target class `t` for true label `c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TargetRule {
    /// `t = (c + 1) mod N`.
    #[default]
    NextClass,
    /// Uniform over the classes other than `c`, seeded per sample.
    Random,
    /// Always class `k`; samples whose label is `k` are skipped.
    Fixed(usize),
}

impl fmt::Display for TargetRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetRule::NextClass => write!(f, "next_class"),
            TargetRule::Random => write!(f, "random"),
            TargetRule::Fixed(k) => write!(f, "fixed:{k}"),
        }
    }
}

impl FromStr for TargetRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "next_class" => Ok(TargetRule::NextClass),
            "random" => Ok(TargetRule::Random),
            _ => s
                .strip_prefix("fixed:")
                .and_then(|k| k.parse().ok())
                .map(TargetRule::Fixed)
                .ok_or_else(|| Error::invalid(format!("unknown target rule `{s}`"))),
        }
    }
}

impl Serialize for TargetRule {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TargetRule {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn yes() -> bool {
    true
}

fn default_budget() -> u64 {
    20_000
}

/// One attack of an experiment. Unset knobs take the family defaults of
/// [`AttackSpec::new`]; the run seed and target are filled in per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    pub family: AttackFamily,
    #[serde(default = "yes")]
    pub targeted: bool,
    #[serde(default)]
    pub target_rule: TargetRule,
    #[serde(default = "default_budget")]
    pub budget: u64,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub pop: Option<usize>,
    #[serde(default)]
    pub step: Option<f64>,
    #[serde(default)]
    pub search_radius: Option<f64>,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub mutation_prob: Option<f64>,
    #[serde(default)]
    pub mutation_range: Option<f64>,
    #[serde(default)]
    pub init_budget: Option<u64>,
}

impl AttackConfig {
    pub fn new(family: AttackFamily) -> Self {
        Self {
            family,
            targeted: true,
            target_rule: TargetRule::NextClass,
            budget: default_budget(),
            epsilon: None,
            lambda: None,
            pop: None,
            step: None,
            search_radius: None,
            delta: None,
            mutation_prob: None,
            mutation_range: None,
            init_budget: None,
        }
    }

    pub fn untargeted(mut self) -> Self {
        self.targeted = false;
        self
    }

    /// The runnable spec for one sample.
    pub fn spec(&self, seed: u64, target: Option<usize>) -> AttackSpec {
        let d = AttackSpec::new(self.family);
        AttackSpec {
            family: self.family,
            targeted: self.targeted,
            target: if self.targeted { target } else { None },
            budget: self.budget,
            epsilon: self.epsilon.unwrap_or(d.epsilon),
            lambda: self.lambda.unwrap_or(d.lambda),
            pop: self.pop.unwrap_or(d.pop),
            seed,
            step: self.step.unwrap_or(d.step),
            search_radius: self.search_radius.unwrap_or(d.search_radius),
            delta: self.delta.unwrap_or(d.delta),
            mutation_prob: self.mutation_prob.unwrap_or(d.mutation_prob),
            mutation_range: self.mutation_range.unwrap_or(d.mutation_range),
            init_budget: self.init_budget.unwrap_or(d.init_budget),
            trace: false,
        }
    }
}

/// A full experiment description.
///
/// `defense` is the single operating point used by the `attack` and
/// `eval-acc` commands; `grid` is swept by `sweep`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub classifier: ClassifierSpec,
    pub defense: DefensePoint,
    pub grid: Vec<DefensePoint>,
    pub attacks: Vec<AttackConfig>,
    pub n_eval_samples: usize,
    pub distortion_thresholds: Vec<f64>,
    /// Add a calibrated threshold per attack (10x the minimal L reaching
    /// ASR2 >= 0.95 undefended).
    pub calibrate_thresholds: bool,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::default(),
            classifier: ClassifierSpec::default(),
            defense: DefensePoint::new(0.5, 0.1),
            grid: vec![
                DefensePoint::OFF,
                DefensePoint::new(0.5, 0.1),
                DefensePoint::new(0.7, 0.1),
            ],
            attacks: AttackFamily::ALL.into_iter().map(AttackConfig::new).collect(),
            n_eval_samples: 50,
            distortion_thresholds: Vec::new(),
            calibrate_thresholds: false,
            seed: 0,
        }
    }
}

fn config_err(path: impl Into<String>, msg: impl fmt::Display) -> Error {
    Error::Config {
        path: path.into(),
        msg: msg.to_string(),
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| config_err("<config>", e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(path.display().to_string(), e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config { path: p, msg } if p == "<config>" => config_err(path.display().to_string(), msg),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_eval_samples < 1 {
            return Err(config_err("n_eval_samples", "must be at least 1"));
        }
        let points = std::iter::once(("defense".to_string(), &self.defense))
            .chain(self.grid.iter().enumerate().map(|(i, p)| (format!("grid.{i}"), p)));
        for (path, p) in points {
            if !(0.0..=1.0).contains(&p.theta) {
                return Err(config_err(format!("{path}.theta"), "must lie in [0, 1]"));
            }
            if !(p.sigma >= 0.0 && p.sigma.is_finite()) {
                return Err(config_err(format!("{path}.sigma"), "must be >= 0"));
            }
        }
        if let Some(t) = self.classifier.temperature {
            if !(t > 0.0 && t.is_finite()) {
                return Err(config_err("classifier.temperature", "must be > 0"));
            }
        }
        for (i, l) in self.distortion_thresholds.iter().enumerate() {
            if !(*l >= 0.0) {
                return Err(config_err(format!("distortion_thresholds.{i}"), "must be >= 0"));
            }
        }
        for (i, a) in self.attacks.iter().enumerate() {
            if let Some(e) = a.epsilon {
                if !(e > 0.0) {
                    return Err(config_err(format!("attacks.{i}.epsilon"), "must be > 0"));
                }
            }
            if let TargetRule::Fixed(k) = a.target_rule {
                if k >= self.dataset.num_classes {
                    return Err(config_err(format!("attacks.{i}.target_rule"), "target is not a class"));
                }
            }
        }
        if self.dataset.train_csv.is_some() != self.dataset.test_csv.is_some() {
            return Err(config_err("dataset", "train_csv and test_csv go together"));
        }
        Ok(())
    }

    /// Applies `key=value` overrides, where `key` is a dotted path into the
    /// JSON form (`defense.theta`, `attacks.0.budget`). Values parse as JSON
    /// when they can and as plain strings otherwise. Unknown keys are errors.
    pub fn with_overrides<S: AsRef<str>>(&self, sets: &[S]) -> Result<Self> {
        let mut root = serde_json::to_value(self).expect("config serializes");
        for set in sets {
            let set = set.as_ref();
            let (key, raw) = set
                .split_once('=')
                .ok_or_else(|| config_err(set, "override must look like key=value"))?;
            let slot = lookup(&mut root, key)?;
            *slot = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        }
        let cfg: Self = serde_json::from_value(root).map_err(|e| config_err("--set", e))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn lookup<'v>(root: &'v mut Value, key: &str) -> Result<&'v mut Value> {
    let mut cur = root;
    for part in key.split('.') {
        cur = match cur {
            Value::Object(map) => map.get_mut(part),
            Value::Array(items) => part.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| config_err(key, "unknown config key"))?;
    }
    Ok(cur)
}

/// Type descriptions for every settable key; list entries use `N`.
const KEY_TYPES: &[(&str, &str)] = &[
    ("dataset.num_classes", "integer >= 2"),
    ("dataset.dim", "integer >= 2"),
    ("dataset.spread", "real > 0"),
    ("dataset.per_class", "integer >= 1"),
    ("dataset.seed", "integer"),
    ("dataset.train_csv", "path or null"),
    ("dataset.test_csv", "path or null"),
    ("classifier.kind", "prototype | mlp"),
    ("classifier.epochs", "integer"),
    ("classifier.lr", "real > 0"),
    ("classifier.seed", "integer"),
    ("classifier.hidden", "integer (mlp)"),
    ("classifier.batch", "integer (mlp)"),
    ("classifier.temperature", "real > 0 or null (fitted)"),
    ("classifier.path", "path or null"),
    ("defense.theta", "real in [0, 1]"),
    ("defense.sigma", "real >= 0"),
    ("grid", "list of {theta, sigma}"),
    ("grid.N.theta", "real in [0, 1]"),
    ("grid.N.sigma", "real >= 0"),
    ("attacks", "list of attack objects"),
    ("attacks.N.family", "nes | simba | genattack | boundary | signopt"),
    ("attacks.N.targeted", "bool"),
    ("attacks.N.target_rule", "next_class | random | fixed:K"),
    ("attacks.N.budget", "integer"),
    ("attacks.N.epsilon", "real > 0 or null"),
    ("attacks.N.lambda", "real >= 0 or null"),
    ("attacks.N.pop", "integer or null"),
    ("attacks.N.step", "real or null"),
    ("attacks.N.search_radius", "real or null"),
    ("attacks.N.delta", "real or null"),
    ("attacks.N.mutation_prob", "real in [0, 1] or null"),
    ("attacks.N.mutation_range", "real or null"),
    ("attacks.N.init_budget", "integer or null"),
    ("n_eval_samples", "integer >= 1"),
    ("distortion_thresholds", "list of real >= 0"),
    ("calibrate_thresholds", "bool"),
    ("seed", "integer"),
];

/// A documented config key.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyDoc {
    pub key: &'static str,
    pub ty: &'static str,
    pub default: String,
}

/// Every config key with its type and default value. Defaults of `attacks.N`
/// keys are those of the first default attack; `null` means "family default".
pub fn config_keys() -> Vec<KeyDoc> {
    let mut root = serde_json::to_value(ExperimentConfig::default()).expect("config serializes");
    KEY_TYPES
        .iter()
        .map(|&(key, ty)| {
            let concrete = key.replace(".N.", ".0.");
            let default = lookup(&mut root, &concrete).map(|v| show(v)).unwrap_or_default();
            KeyDoc { key, ty, default }
        })
        .collect()
}

/// Compact rendering of a default; grid points as `(theta, sigma)`, attack
/// lists by family.
fn show(v: &Value) -> String {
    let Value::Array(items) = v else { return v.to_string() };
    let parts: Vec<String> = items
        .iter()
        .map(
            |item| match (item.get("theta"), item.get("sigma"), item.get("family")) {
                (Some(t), Some(s), _) => format!("({t}, {s})"),
                (_, _, Some(Value::String(f))) => f.clone(),
                _ => item.to_string(),
            },
        )
        .collect();
    format!("[{}]", parts.join(", "))
}

/// The key listing shown by `--help`.
pub fn config_help() -> String {
    let mut out = String::from("Config keys (JSON file, or --set key=value):\n");
    for k in config_keys() {
        out.push_str(&format!("  {:<26} {:<44} default {}\n", k.key, k.ty, k.default));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaves(v: &Value, prefix: String, out: &mut Vec<String>) {
        match v {
            Value::Object(m) => {
                for (k, v) in m {
                    let p = if prefix.is_empty() {
                        k.clone()
                    } else {
                        format!("{prefix}.{k}")
                    };
                    leaves(v, p, out);
                }
            }
            Value::Array(items) if items.first().is_some_and(Value::is_object) => {
                out.push(prefix.clone());
                leaves(&items[0], format!("{prefix}.N"), out);
            }
            _ => out.push(prefix),
        }
    }

    #[test]
    fn every_key_is_documented() {
        let v = serde_json::to_value(ExperimentConfig::default()).unwrap();
        let mut found = Vec::new();
        leaves(&v, String::new(), &mut found);
        found.sort();
        let mut documented: Vec<String> = KEY_TYPES.iter().map(|(k, _)| k.to_string()).collect();
        documented.sort();
        assert_eq!(found, documented);
        assert!(config_keys().iter().all(|k| !k.default.is_empty()));
    }

    #[test]
    fn overrides_set_values() {
        let cfg = ExperimentConfig::default()
            .with_overrides(&[
                "defense.theta=0.7",
                "attacks.1.budget=10",
                "attacks.0.epsilon=0.2",
                "grid=[]",
            ])
            .unwrap();
        assert_eq!(cfg.defense.theta, 0.7);
        assert_eq!(cfg.attacks[1].budget, 10);
        assert_eq!(cfg.attacks[0].epsilon, Some(0.2));
        assert!(cfg.grid.is_empty());
        let cfg = cfg
            .with_overrides(&["attacks.0.family=signopt", "attacks.0.target_rule=fixed:3"])
            .unwrap();
        assert_eq!(cfg.attacks[0].family, AttackFamily::SignOpt);
        assert_eq!(cfg.attacks[0].target_rule, TargetRule::Fixed(3));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let base = ExperimentConfig::default();
        for bad in ["defense.tehta=0.5", "attacks.9.budget=1", "seed.x=1", "nothing"] {
            let err = base.with_overrides(&[bad]).unwrap_err();
            assert!(matches!(err, Error::Config { .. }), "{bad}: {err}");
        }
        assert!(base.with_overrides(&["defense.theta=2"]).is_err());
        assert!(base.with_overrides(&["attacks.0.family=zoo"]).is_err());
        assert!(ExperimentConfig::from_json(r#"{"sede": 1}"#).is_err());
    }

    #[test]
    fn json_round_trip_and_partial_files() {
        let cfg = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        let small =
            ExperimentConfig::from_json(r#"{"attacks": [{"family": "simba", "targeted": false}], "seed": 4}"#).unwrap();
        assert_eq!(small.attacks.len(), 1);
        assert_eq!(small.attacks[0].budget, 20_000);
        assert!(!small.attacks[0].targeted);
        assert_eq!(small.dataset, DatasetSpec::default());
    }

    #[test]
    fn target_rules_parse() {
        for rule in [TargetRule::NextClass, TargetRule::Random, TargetRule::Fixed(7)] {
            assert_eq!(rule.to_string().parse::<TargetRule>().unwrap(), rule);
        }
        assert!("fixed:x".parse::<TargetRule>().is_err());
    }

    #[test]
    fn attack_config_fills_family_defaults() {
        let spec = AttackConfig::new(AttackFamily::GenAttack).spec(9, Some(2));
        let d = AttackSpec::new(AttackFamily::GenAttack);
        assert_eq!(spec.epsilon, d.epsilon);
        assert_eq!(spec.pop, d.pop);
        assert_eq!(spec.target, Some(2));
        assert_eq!(spec.seed, 9);
        let un = AttackConfig::new(AttackFamily::Nes).untargeted().spec(0, Some(1));
        assert_eq!(un.target, None);
    }
}
