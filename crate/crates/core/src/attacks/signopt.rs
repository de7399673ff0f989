//! Sign-OPT: minimizes the boundary distance `g(d)` along direction `d` using
//! single-query sign estimates of its directional derivative.

use super::boundary::start_point;
use super::{
    gaussian, l2_distortion, norm, prepare, AttackFamily, AttackOutcome, AttackSpec, Session, SEARCH_TOLERANCE,
};
use crate::defense::DefendedOracle;
use crate::error::Result;
use crate::model::Sample;
use crate::rng::rng_from;

const GROW: f64 = 1.25;
const STEP_TRIES: usize = 6;

fn unit(v: &[f64]) -> Vec<f64> {
    let n = norm(v);
    v.iter().map(|x| x / n).collect()
}

fn ray(x0: &[f64], dir: &[f64], lambda: f64) -> Vec<f64> {
    x0.iter()
        .zip(dir)
        .map(|(o, d)| (o + lambda * d).clamp(0.0, 1.0))
        .collect()
}

/// Distance to the boundary along the unit direction `dir`: a coarse search
/// from `hint` by factors of 1.25, then bisection to the tolerance. `None`
/// if the ray stays clean out to the far corner of the box, or the budget
/// runs out before any adversarial point is seen.
pub fn boundary_distance(s: &mut Session<'_, '_>, dir: &[f64], hint: f64) -> Result<Option<f64>> {
    let x0 = s.x0.to_vec();
    let reach = (x0.len() as f64).sqrt();
    let mut hi = hint.max(SEARCH_TOLERANCE);
    let mut lo;
    match s.is_adv(&ray(&x0, dir, hi))? {
        None => return Ok(None),
        Some(true) => {
            lo = hi / GROW;
            loop {
                match s.is_adv(&ray(&x0, dir, lo))? {
                    None => return Ok(Some(hi)),
                    Some(true) if lo > SEARCH_TOLERANCE => {
                        hi = lo;
                        lo /= GROW;
                    }
                    Some(true) => return Ok(Some(lo)),
                    Some(false) => break,
                }
            }
        }
        Some(false) => loop {
            lo = hi;
            hi *= GROW;
            if hi > reach * GROW {
                return Ok(None);
            }
            match s.is_adv(&ray(&x0, dir, hi))? {
                None => return Ok(None),
                Some(true) => break,
                Some(false) => {}
            }
        },
    }
    while hi - lo > SEARCH_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        match s.is_adv(&ray(&x0, dir, mid))? {
            Some(true) => hi = mid,
            Some(false) => lo = mid,
            None => break,
        }
    }
    Ok(Some(hi))
}

pub fn attack_signopt(
    oracle: &mut DefendedOracle<'_>,
    x0: &Sample,
    spec: &AttackSpec,
    init: Option<&[f64]>,
) -> Result<AttackOutcome> {
    prepare(oracle, x0, spec, AttackFamily::SignOpt)?;
    let mut rng = rng_from(&[spec.seed, 0x5160]);
    let mut s = Session::new(oracle, x0, spec);
    let origin = x0.features.clone();
    let m = s.dim();

    let Some(start) = start_point(&mut s, &mut rng, spec, init)? else {
        return Ok(s.finish(origin, false));
    };
    let offset: Vec<f64> = start.iter().zip(&origin).map(|(a, o)| a - o).collect();
    let mut dir = unit(&offset);
    let mut g = match boundary_distance(&mut s, &dir, norm(&offset))? {
        Some(g) => g,
        None => {
            let ok = s.confirm(&start, true)?;
            return Ok(s.finish(start, ok));
        }
    };
    s.record(&ray(&origin, &dir, g), g);

    let probes = spec.pop.max(1);
    'outer: while s.search_left() > 0 {
        let mut grad = vec![0.0; m];
        for _ in 0..probes {
            let u = unit(&gaussian(&mut rng, m));
            let probe: Vec<f64> = dir.iter().zip(&u).map(|(d, ui)| d + spec.epsilon * ui).collect();
            let probe = unit(&probe);
            let sign = match s.is_adv(&ray(&origin, &probe, g))? {
                Some(true) => -1.0,
                Some(false) => 1.0,
                None => break 'outer,
            };
            for (gi, ui) in grad.iter_mut().zip(&u) {
                *gi += sign * ui / probes as f64;
            }
        }

        let mut eta = spec.step;
        for _ in 0..STEP_TRIES {
            let next: Vec<f64> = dir.iter().zip(&grad).map(|(d, gi)| d - eta * gi).collect();
            let next = unit(&next);
            match s.is_adv(&ray(&origin, &next, g))? {
                None => break 'outer,
                Some(false) => eta *= 0.5,
                Some(true) => {
                    if let Some(g_new) = boundary_distance(&mut s, &next, g)? {
                        let now = l2_distortion(&ray(&origin, &dir, g), &origin);
                        if g_new <= g && l2_distortion(&ray(&origin, &next, g_new), &origin) <= now {
                            g = g_new;
                            dir = next;
                        }
                    }
                    break;
                }
            }
        }
        s.record(&ray(&origin, &dir, g), g);
    }

    let x = ray(&origin, &dir, g);
    let ok = s.confirm(&x, true)?;
    Ok(s.finish(x, ok))
}
