//! NES with antithetic Gaussian probes and sign steps.

use super::{clip_unit, gaussian, prepare, soft_loss, AttackFamily, AttackOutcome, AttackSpec, Session};
use crate::defense::DefendedOracle;
use crate::error::Result;
use crate::model::Sample;
use crate::rng::rng_from;

pub fn attack_nes(oracle: &mut DefendedOracle<'_>, x0: &Sample, spec: &AttackSpec) -> Result<AttackOutcome> {
    prepare(oracle, x0, spec, AttackFamily::Nes)?;
    let mut rng = rng_from(&[spec.seed, 0x4E45]);
    let mut s = Session::new(oracle, x0, spec);
    let m = s.dim();
    let origin = x0.features.as_slice();
    let mut x = origin.to_vec();
    let probes = spec.pop.max(1);

    'outer: while let Some(scores) = s.soft(&x)? {
        let loss = soft_loss(&scores, &x, origin, spec, x0.label);
        s.record(&x, loss);
        if s.goal.met(scores.argmax()) {
            let ok = s.confirm(&x, true)?;
            return Ok(s.finish(x, ok));
        }

        let mut grad = vec![0.0; m];
        for _ in 0..probes {
            let u = gaussian(&mut rng, m);
            let mut plus: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a + spec.search_radius * b).collect();
            let mut minus: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a - spec.search_radius * b).collect();
            clip_unit(&mut plus);
            clip_unit(&mut minus);
            let Some(sp) = s.soft(&plus)? else { break 'outer };
            let Some(sm) = s.soft(&minus)? else { break 'outer };
            let diff = soft_loss(&sp, &plus, origin, spec, x0.label) - soft_loss(&sm, &minus, origin, spec, x0.label);
            for (g, ui) in grad.iter_mut().zip(&u) {
                *g += diff * ui;
            }
        }

        for ((xi, g), oi) in x.iter_mut().zip(&grad).zip(origin) {
            let stepped = *xi - spec.step * g.signum() * (*g != 0.0) as u8 as f64;
            *xi = stepped.clamp(oi - spec.epsilon, oi + spec.epsilon).clamp(0.0, 1.0);
        }
    }

    let ok = s.confirm(&x, false)?;
    Ok(s.finish(x, ok))
}
