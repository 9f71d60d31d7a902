use std::collections::BTreeMap;

use super::{ParamStore, Tape, Var};
use crate::error::Result;
use crate::tensor::Tensor;

/// Per-tensor relative error between analytic and numerical gradients.
#[derive(Debug, Clone)]
pub struct GradReport {
    pub per_param: BTreeMap<String, f64>,
    pub max: f64,
    pub worst: String,
}

/// `||a - n|| / max(||a||, ||n||)`, zero when both vanish.
pub fn relative_error(analytic: &Tensor, numeric: &Tensor) -> f64 {
    let diff: f64 = analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(a, n)| (a - n) * (a - n))
        .sum::<f64>()
        .sqrt();
    let scale = analytic.norm().max(numeric.norm());
    if scale < 1e-300 {
        0.0
    } else {
        diff / scale
    }
}

fn evaluate<F>(params: &ParamStore, f: &F) -> Result<(Tape, BTreeMap<String, Var>, Var)>
where
    F: Fn(&mut Tape, &BTreeMap<String, Var>) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars = params
        .iter()
        .map(|(k, t)| (k.clone(), tape.param(k, t.clone())))
        .collect();
    let out = f(&mut tape, &vars)?;
    Ok((tape, vars, out))
}

/// Compares reverse-mode gradients of the scalar `f(params)` with central
/// differences of step `h`, one tensor at a time.
///
/// `f` must be a pure function of the parameter values; any randomness has
/// to be re-seeded inside it.
pub fn check_gradients<F>(params: &ParamStore, h: f64, f: F) -> Result<GradReport>
where
    F: Fn(&mut Tape, &BTreeMap<String, Var>) -> Result<Var>,
{
    let (tape, _, out) = evaluate(params, &f)?;
    let analytic = tape.backward(out).named(&tape);
    let mut per_param = BTreeMap::new();
    let mut perturbed = params.clone();
    for (name, base) in params {
        let mut numeric = Tensor::zeros(base.shape());
        for i in 0..base.len() {
            let orig = base.data()[i];
            perturbed.get_mut(name).unwrap().data_mut()[i] = orig + h;
            let (t, _, o) = evaluate(&perturbed, &f)?;
            let plus = t.scalar(o);
            perturbed.get_mut(name).unwrap().data_mut()[i] = orig - h;
            let (t, _, o) = evaluate(&perturbed, &f)?;
            let minus = t.scalar(o);
            perturbed.get_mut(name).unwrap().data_mut()[i] = orig;
            numeric.data_mut()[i] = (plus - minus) / (2.0 * h);
        }
        per_param.insert(name.clone(), relative_error(&analytic[name], &numeric));
    }
    let (worst, max) = per_param
        .iter()
        .fold((String::new(), 0.0f64), |(wn, wv), (n, &v)| {
            if v > wv {
                (n.clone(), v)
            } else {
                (wn, wv)
            }
        });
    Ok(GradReport {
        per_param,
        max,
        worst,
    })
}
