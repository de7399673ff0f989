//! GenAttack: a small genetic search inside the l-inf ball around `x0`.
//!
//! The population starts as mutations of `x0` and only the elite is checked
//! for success.

use rand::Rng as _;

use super::{prepare, AttackFamily, AttackOutcome, AttackSpec, Goal, Session};
use crate::defense::DefendedOracle;
use crate::error::Result;
use crate::model::{ConfidenceVector, Sample};
use crate::rng::{rng_from, Rng};

fn fitness(scores: &ConfidenceVector, goal: Goal) -> f64 {
    match goal {
        Goal::Targeted(t) => (scores.0[t] + 1e-12).ln(),
        Goal::Untargeted(c) => -(scores.0[c] + 1e-12).ln(),
    }
}

fn project(x: &mut [f64], origin: &[f64], eps: f64) {
    for (v, o) in x.iter_mut().zip(origin) {
        *v = v.clamp(o - eps, o + eps).clamp(0.0, 1.0);
    }
}

fn tournament(rng: &mut Rng, fit: &[f64]) -> usize {
    let a = rng.random_range(0..fit.len());
    let b = rng.random_range(0..fit.len());
    if fit[b] > fit[a] {
        b
    } else {
        a
    }
}

pub fn attack_genattack(oracle: &mut DefendedOracle<'_>, x0: &Sample, spec: &AttackSpec) -> Result<AttackOutcome> {
    prepare(oracle, x0, spec, AttackFamily::GenAttack)?;
    let mut rng = rng_from(&[spec.seed, 0x6E4]);
    let mut s = Session::new(oracle, x0, spec);
    let origin = x0.features.as_slice();
    let eps = spec.epsilon;
    let size = spec.pop.max(1);
    let half_width = spec.mutation_range * eps;

    let mut population: Vec<Vec<f64>> = (0..size)
        .map(|_| {
            let mut p: Vec<f64> = origin
                .iter()
                .map(|o| o + rng.random_range(-half_width..=half_width))
                .collect();
            project(&mut p, origin, eps);
            p
        })
        .collect();
    let mut elite = population[0].clone();

    'outer: loop {
        let mut fit = Vec::with_capacity(size);
        let mut labels = Vec::with_capacity(size);
        for member in &population {
            let Some(scores) = s.soft(member)? else { break 'outer };
            fit.push(fitness(&scores, s.goal));
            labels.push(scores.argmax());
        }
        let best = (0..size).fold(0, |b, j| if fit[j] > fit[b] { j } else { b });
        elite = population[best].clone();
        s.record(&elite, -fit[best]);
        if s.goal.met(labels[best]) {
            let ok = s.confirm(&elite, true)?;
            return Ok(s.finish(elite, ok));
        }

        let mut next = Vec::with_capacity(size);
        next.push(elite.clone());
        while next.len() < size {
            let a = &population[tournament(&mut rng, &fit)];
            let b = &population[tournament(&mut rng, &fit)];
            let mut child: Vec<f64> = a
                .iter()
                .zip(b)
                .map(|(&u, &v)| if rng.random_bool(0.5) { u } else { v })
                .collect();
            for v in child.iter_mut() {
                if spec.mutation_prob > 0.0 && rng.random_bool(spec.mutation_prob.min(1.0)) {
                    *v += rng.random_range(-half_width..=half_width);
                }
            }
            project(&mut child, origin, eps);
            next.push(child);
        }
        population = next;
    }

    let ok = s.confirm(&elite, false)?;
    Ok(s.finish(elite, ok))
}
