//! SimBA: random coordinate steps kept only when the tracked score improves.

use rand::seq::SliceRandom;

use super::{prepare, AttackFamily, AttackOutcome, AttackSpec, Goal, Session};
use crate::defense::DefendedOracle;
use crate::error::Result;
use crate::model::{ConfidenceVector, Sample};
use crate::rng::rng_from;

/// Score SimBA maximizes: the target probability, or minus the true-class
/// probability.
pub fn simba_objective(scores: &ConfidenceVector, goal: Goal) -> f64 {
    match goal {
        Goal::Targeted(t) => scores.0[t],
        Goal::Untargeted(c) => -scores.0[c],
    }
}

pub fn attack_simba(oracle: &mut DefendedOracle<'_>, x0: &Sample, spec: &AttackSpec) -> Result<AttackOutcome> {
    prepare(oracle, x0, spec, AttackFamily::Simba)?;
    let mut rng = rng_from(&[spec.seed, 0x5B]);
    let mut s = Session::new(oracle, x0, spec);
    let m = s.dim();
    let mut x = x0.features.clone();

    let Some(mut scores) = s.soft(&x)? else {
        let ok = s.confirm(&x, false)?;
        return Ok(s.finish(x, ok));
    };
    let mut best = simba_objective(&scores, s.goal);
    s.record(&x, -best);

    let mut order: Vec<usize> = (0..m).collect();
    let mut pos = m;
    'outer: loop {
        if s.goal.met(scores.argmax()) {
            let ok = s.confirm(&x, true)?;
            return Ok(s.finish(x, ok));
        }
        if pos == m {
            order.shuffle(&mut rng);
            pos = 0;
        }
        let i = order[pos];
        pos += 1;
        for dir in [spec.epsilon, -spec.epsilon] {
            let moved = (x[i] + dir).clamp(0.0, 1.0);
            if moved == x[i] {
                continue;
            }
            let mut cand = x.clone();
            cand[i] = moved;
            let Some(cs) = s.soft(&cand)? else { break 'outer };
            let value = simba_objective(&cs, s.goal);
            if value > best {
                best = value;
                x = cand;
                scores = cs;
                s.record(&x, -best);
                break;
            }
        }
    }

    let ok = s.confirm(&x, false)?;
    Ok(s.finish(x, ok))
}
