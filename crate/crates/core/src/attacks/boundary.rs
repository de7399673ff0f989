//! Boundary attack: a random walk along the decision boundary that shrinks
//! the distance to `x0`.

use rand::Rng as _;

use super::{
    clip_unit, gaussian, l2_distortion, norm, prepare, AttackFamily, AttackOutcome, AttackSpec, Session,
    SEARCH_TOLERANCE,
};
use crate::defense::DefendedOracle;
use crate::error::{Error, Result};
use crate::model::Sample;
use crate::rng::{rng_from, Rng};

const WINDOW: usize = 20;

/// Uniform random points until one is adversarial. `Ok(None)` means the
/// attack budget ran out first; an exhausted allowance is an error.
pub(crate) fn random_start(s: &mut Session<'_, '_>, rng: &mut Rng, allowance: u64) -> Result<Option<Vec<f64>>> {
    let m = s.dim();
    for _ in 0..allowance {
        let r: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
        match s.is_adv(&r)? {
            Some(true) => return Ok(Some(r)),
            Some(false) => {}
            None => return Ok(None),
        }
    }
    Err(Error::InitNotFound(allowance))
}

/// Binary search on the segment from `x0` to the adversarial `adv`. Returns
/// the adversarial end once the bracket is narrower than the tolerance.
pub fn line_search(s: &mut Session<'_, '_>, adv: &[f64]) -> Result<Vec<f64>> {
    let x0 = s.x0.to_vec();
    let span = adv.iter().zip(&x0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let point = |t: f64| -> Vec<f64> { x0.iter().zip(adv).map(|(o, a)| o + t * (a - o)).collect() };
    let (mut lo, mut hi) = (0.0, 1.0);
    while (hi - lo) * span > SEARCH_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        match s.is_adv(&point(mid))? {
            Some(true) => hi = mid,
            Some(false) => lo = mid,
            None => break,
        }
    }
    Ok(if hi == 1.0 { adv.to_vec() } else { point(hi) })
}

pub(crate) fn start_point(
    s: &mut Session<'_, '_>,
    rng: &mut Rng,
    spec: &AttackSpec,
    init: Option<&[f64]>,
) -> Result<Option<Vec<f64>>> {
    match init {
        Some(p) => {
            if p.len() != s.dim() {
                return Err(Error::DimensionMismatch {
                    expected: s.dim(),
                    got: p.len(),
                });
            }
            Ok(Some(p.to_vec()))
        }
        None => random_start(s, rng, spec.init_budget),
    }
}

pub fn attack_boundary(
    oracle: &mut DefendedOracle<'_>,
    x0: &Sample,
    spec: &AttackSpec,
    init: Option<&[f64]>,
) -> Result<AttackOutcome> {
    prepare(oracle, x0, spec, AttackFamily::Boundary)?;
    let mut rng = rng_from(&[spec.seed, 0xB0]);
    let mut s = Session::new(oracle, x0, spec);
    let origin = x0.features.clone();
    let m = s.dim();

    let Some(mut adv) = start_point(&mut s, &mut rng, spec, init)? else {
        return Ok(s.finish(origin, false));
    };
    adv = line_search(&mut s, &adv)?;
    s.record(&adv, l2_distortion(&adv, &origin));

    let mut delta = spec.delta;
    let mut accepted = 0usize;
    let mut proposals = 0usize;
    let mut idle = 0usize;
    while s.search_left() > 0 && idle < 1000 {
        let d: Vec<f64> = adv.iter().zip(&origin).map(|(a, o)| a - o).collect();
        let dist = norm(&d);
        if dist == 0.0 {
            break;
        }
        let mut eta = gaussian(&mut rng, m);
        let along = eta.iter().zip(&d).map(|(a, b)| a * b).sum::<f64>() / (dist * dist);
        for (e, di) in eta.iter_mut().zip(&d) {
            *e -= along * di;
        }
        let en = norm(&eta);
        if en > 0.0 {
            for e in eta.iter_mut() {
                *e *= delta * dist / en;
            }
        }
        let moved: Vec<f64> = d.iter().zip(&eta).map(|(a, b)| a + b).collect();
        let scale = (1.0 - spec.epsilon) * dist / norm(&moved);
        let mut cand: Vec<f64> = origin.iter().zip(&moved).map(|(o, v)| o + scale * v).collect();
        clip_unit(&mut cand);

        proposals += 1;
        if norm(&cand.iter().zip(&origin).map(|(c, o)| c - o).collect::<Vec<_>>()) >= dist {
            idle += 1;
        } else {
            idle = 0;
            match s.is_adv(&cand)? {
                Some(true) => {
                    adv = cand;
                    accepted += 1;
                }
                Some(false) => {}
                None => break,
            }
        }

        if proposals == WINDOW {
            let rate = accepted as f64 / WINDOW as f64;
            if rate < 0.2 {
                delta *= 0.5;
            } else if rate > 0.6 {
                delta *= 1.2;
            }
            accepted = 0;
            proposals = 0;
            adv = line_search(&mut s, &adv)?;
            s.record(&adv, l2_distortion(&adv, &origin));
        }
    }

    let ok = s.confirm(&adv, true)?;
    Ok(s.finish(adv, ok))
}
