//! Black-box attacks that see the model only through a [`DefendedOracle`].
//!
//! Soft-label families ([`nes`], [`simba`], [`genattack`]) read confidence
//! vectors; hard-label families ([`boundary`], [`signopt`]) read only the top
//! label. Every family shares the same accounting: one query is held back for
//! a final confirmation, so an attack that believes it has succeeded stops and
//! asks the oracle once more at the sample it returns. `success` is that last
//! answer.

use std::str::FromStr;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::defense::{DefendedOracle, OutputMode};
use crate::error::{Error, Result};
use crate::model::{ConfidenceVector, Sample};

pub mod boundary;
pub mod genattack;
pub mod nes;
pub mod signopt;
pub mod simba;

/// Tolerance of every binary search, in feature units.
pub const SEARCH_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackFamily {
    Nes,
    Simba,
    GenAttack,
    Boundary,
    SignOpt,
}

impl AttackFamily {
    pub const ALL: [AttackFamily; 5] = [
        AttackFamily::Nes,
        AttackFamily::Simba,
        AttackFamily::GenAttack,
        AttackFamily::Boundary,
        AttackFamily::SignOpt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttackFamily::Nes => "nes",
            AttackFamily::Simba => "simba",
            AttackFamily::GenAttack => "genattack",
            AttackFamily::Boundary => "boundary",
            AttackFamily::SignOpt => "signopt",
        }
    }

    /// The oracle output this family consumes.
    pub fn mode(self) -> OutputMode {
        match self {
            AttackFamily::Nes | AttackFamily::Simba | AttackFamily::GenAttack => OutputMode::Soft,
            AttackFamily::Boundary | AttackFamily::SignOpt => OutputMode::Hard,
        }
    }
}

impl FromStr for AttackFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AttackFamily::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::UnknownFamily(s.to_string()))
    }
}

/// Attack parameters for one run.
///
/// `epsilon` is family specific: the l-inf ball radius for `nes` and
/// `genattack`, the coordinate step for `simba`, the source-step fraction for
/// `boundary`, and the direction probe size for `signopt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub family: AttackFamily,
    pub targeted: bool,
    pub target: Option<usize>,
    pub budget: u64,
    pub epsilon: f64,
    /// Weight of the classification term in the soft-label loss.
    pub lambda: f64,
    /// Probe pairs (`nes`), population (`genattack`), sign probes (`signopt`).
    pub pop: usize,
    pub seed: u64,
    /// NES step size; Sign-OPT initial direction step.
    pub step: f64,
    /// NES finite-difference radius.
    pub search_radius: f64,
    /// Initial orthogonal step of the boundary attack, relative to distance.
    pub delta: f64,
    pub mutation_prob: f64,
    /// Mutation half-width as a fraction of `epsilon`.
    pub mutation_range: f64,
    /// Query allowance for finding a hard-label starting point.
    pub init_budget: u64,
    pub trace: bool,
}

impl AttackSpec {
    /// Desk-scale defaults for a family.
    pub fn new(family: AttackFamily) -> Self {
        let base = AttackSpec {
            family,
            targeted: false,
            target: None,
            budget: 20_000,
            epsilon: 0.05,
            lambda: 1.0,
            pop: 10,
            seed: 0,
            step: 0.001,
            search_radius: 0.01,
            delta: 0.1,
            mutation_prob: 0.05,
            mutation_range: 0.15,
            init_budget: 1_000,
            trace: false,
        };
        match family {
            AttackFamily::Nes => AttackSpec { epsilon: 1.0, ..base },
            AttackFamily::Simba => AttackSpec { epsilon: 0.03, ..base },
            AttackFamily::GenAttack => AttackSpec {
                epsilon: 0.4,
                pop: 6,
                ..base
            },
            AttackFamily::Boundary => AttackSpec { epsilon: 0.01, ..base },
            AttackFamily::SignOpt => AttackSpec {
                epsilon: 0.01,
                step: 0.2,
                ..base
            },
        }
    }

    pub fn targeted(mut self, target: usize) -> Self {
        self.targeted = true;
        self.target = Some(target);
        self
    }

    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = budget;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn validate(&self, true_label: usize, num_classes: usize) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::invalid("epsilon must be positive"));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::invalid("lambda must be >= 0"));
        }
        if self.targeted {
            match self.target {
                None => return Err(Error::invalid("targeted attack without a target")),
                Some(t) if t >= num_classes => return Err(Error::invalid(format!("target {t} is not a class"))),
                Some(t) if t == true_label => return Err(Error::invalid("target equals the true label")),
                _ => {}
            }
        }
        Ok(())
    }

    fn goal(&self, true_label: usize) -> Goal {
        match (self.targeted, self.target) {
            (true, Some(t)) => Goal::Targeted(t),
            _ => Goal::Untargeted(true_label),
        }
    }
}

/// The adversarial condition on a label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Goal {
    Targeted(usize),
    Untargeted(usize),
}

impl Goal {
    pub fn met(self, label: usize) -> bool {
        match self {
            Goal::Targeted(t) => label == t,
            Goal::Untargeted(c) => label != c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub queries: u64,
    pub distortion: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub final_sample: Vec<f64>,
    pub success: bool,
    pub queries_used: u64,
    /// `sqrt(|x - x0|^2 / M)`.
    pub l2_distortion: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<TracePoint>,
}

/// Normalized l2 distance `sqrt(|x - x0|^2 / M)`.
pub fn l2_distortion(x: &[f64], x0: &[f64]) -> f64 {
    let ss: f64 = x.iter().zip(x0).map(|(a, b)| (a - b) * (a - b)).sum();
    (ss / x.len().max(1) as f64).sqrt()
}

/// `D(x, x0) + lambda * L(scores)`, with `L = -ln(F_t)` when targeted and
/// `ln(F_c)` otherwise.
pub fn soft_loss(scores: &ConfidenceVector, x: &[f64], x0: &[f64], spec: &AttackSpec, true_label: usize) -> f64 {
    let class_term = match spec.goal(true_label) {
        Goal::Targeted(t) => -(scores.0[t] + 1e-12).ln(),
        Goal::Untargeted(c) => (scores.0[c] + 1e-12).ln(),
    };
    l2_distortion(x, x0) + spec.lambda * class_term
}

pub(crate) fn clip_unit(x: &mut [f64]) {
    for v in x.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn gaussian(rng: &mut crate::rng::Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Budget-aware view of the oracle for one attack run.
pub struct Session<'o, 'a> {
    oracle: &'o mut DefendedOracle<'a>,
    budget: u64,
    pub x0: &'o [f64],
    pub goal: Goal,
    trace_on: bool,
    pub trace: Vec<TracePoint>,
}

impl<'o, 'a> Session<'o, 'a> {
    pub fn new(oracle: &'o mut DefendedOracle<'a>, x0: &'o Sample, spec: &AttackSpec) -> Self {
        Self {
            budget: spec.budget,
            x0: &x0.features,
            goal: spec.goal(x0.label),
            trace_on: spec.trace,
            trace: Vec::new(),
            oracle,
        }
    }

    pub fn used(&self) -> u64 {
        self.oracle.queries()
    }

    /// Queries still available for search, keeping one for confirmation.
    pub fn search_left(&self) -> u64 {
        self.budget.saturating_sub(self.used()).saturating_sub(1)
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    /// A search query for soft labels; `None` once the search budget is spent.
    pub fn soft(&mut self, x: &[f64]) -> Result<Option<ConfidenceVector>> {
        if self.search_left() == 0 {
            return Ok(None);
        }
        self.oracle.query_soft(x).map(Some)
    }

    /// A search query for hard labels; `None` once the search budget is spent.
    pub fn hard(&mut self, x: &[f64]) -> Result<Option<usize>> {
        if self.search_left() == 0 {
            return Ok(None);
        }
        self.oracle.query_hard(x).map(Some)
    }

    /// Hard-label search query reduced to the adversarial condition.
    pub fn is_adv(&mut self, x: &[f64]) -> Result<Option<bool>> {
        Ok(self.hard(x)?.map(|l| self.goal.met(l)))
    }

    /// The final verdict at `x`. Without any budget left, falls back to
    /// `assumed`.
    pub fn confirm(&mut self, x: &[f64], assumed: bool) -> Result<bool> {
        if self.used() >= self.budget {
            return Ok(assumed);
        }
        let label = match self.oracle.mode() {
            OutputMode::Soft => self.oracle.query_soft(x)?.argmax(),
            OutputMode::Hard => self.oracle.query_hard(x)?,
        };
        Ok(self.goal.met(label))
    }

    pub fn record(&mut self, x: &[f64], loss: f64) {
        if self.trace_on {
            let point = TracePoint {
                queries: self.used(),
                distortion: l2_distortion(x, self.x0),
                loss,
            };
            self.trace.push(point);
        }
    }

    pub fn finish(self, x: Vec<f64>, success: bool) -> AttackOutcome {
        AttackOutcome {
            l2_distortion: l2_distortion(&x, self.x0),
            queries_used: self.oracle.queries(),
            final_sample: x,
            success,
            trace: self.trace,
        }
    }
}

pub(crate) fn check_mode(oracle: &DefendedOracle<'_>, family: AttackFamily) -> Result<()> {
    if oracle.mode() != family.mode() {
        return Err(Error::ModeMismatch {
            needed: family.mode().name(),
            served: oracle.mode().name(),
        });
    }
    Ok(())
}

pub(crate) fn prepare(oracle: &DefendedOracle<'_>, x0: &Sample, spec: &AttackSpec, family: AttackFamily) -> Result<()> {
    if spec.family != family {
        return Err(Error::invalid(format!(
            "spec is for {}, not {}",
            spec.family.name(),
            family.name()
        )));
    }
    check_mode(oracle, family)?;
    if x0.features.len() != oracle.dim() {
        return Err(Error::DimensionMismatch {
            expected: oracle.dim(),
            got: x0.features.len(),
        });
    }
    spec.validate(x0.label, oracle.num_classes())
}

/// Resets the oracle ledger and runs the attack named by `spec.family`.
///
/// `init` is a known adversarial starting point for the hard-label families
/// and is ignored by the soft-label ones.
pub fn run_attack(
    oracle: &mut DefendedOracle<'_>,
    x0: &Sample,
    spec: &AttackSpec,
    init: Option<&[f64]>,
) -> Result<AttackOutcome> {
    oracle.reset_ledger();
    match spec.family {
        AttackFamily::Nes => nes::attack_nes(oracle, x0, spec),
        AttackFamily::Simba => simba::attack_simba(oracle, x0, spec),
        AttackFamily::GenAttack => genattack::attack_genattack(oracle, x0, spec),
        AttackFamily::Boundary => boundary::attack_boundary(oracle, x0, spec, init),
        AttackFamily::SignOpt => signopt::attack_signopt(oracle, x0, spec, init),
    }
}
