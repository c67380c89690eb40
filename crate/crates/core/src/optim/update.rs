use super::config::{NoiseKind, NoiseScaling, OptimConfig};
use crate::numerics::{norm, ParamVector};

/// Worker point `x - α η ω`, with the filter-wise variants scaling each group
/// by its parameter norm (GNC) or by the ratio of parameter to noise norm
/// (RNC). An RNC group whose noise is exactly zero is left unperturbed.
pub fn perturb(
    x: &ParamVector,
    omega: &[f64],
    alpha: f64,
    lr: f64,
    scaling: NoiseScaling,
    kind: NoiseKind,
) -> Vec<f64> {
    assert_eq!(omega.len(), x.len(), "noise and parameters differ in length");
    let mut out = x.values.clone();
    let c = alpha * lr;
    match scaling {
        NoiseScaling::Plain => {
            for (o, w) in out.iter_mut().zip(omega) {
                *o -= c * w;
            }
        }
        NoiseScaling::FilterWise => {
            for g in x.partition().groups() {
                let r = g.range.clone();
                let xn = norm(&x.values[r.clone()]);
                let scale = match kind {
                    NoiseKind::Gnc => c * xn,
                    NoiseKind::Rnc => {
                        let wn = norm(&omega[r.clone()]);
                        if wn == 0.0 {
                            continue;
                        }
                        c * xn / wn
                    }
                };
                for (o, w) in out[r.clone()].iter_mut().zip(&omega[r]) {
                    *o -= scale * w;
                }
            }
        }
    }
    out
}

/// LARS rate `γ τ ‖x‖ / (‖g‖ + λ ‖x‖)`; `None` when the denominator is zero.
pub fn lars_local_rate(lr: f64, trust: f64, x_norm: f64, g_norm: f64, weight_decay: f64) -> Option<f64> {
    let denom = g_norm + weight_decay * x_norm;
    if denom == 0.0 {
        None
    } else {
        Some(lr * trust * x_norm / denom)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct UpdateReport {
    /// Layers left untouched because their LARS rate was undefined.
    pub lars_skipped: Vec<String>,
}

/// Momentum step `v = m v - η (g̃ + λ x)`, `x += v`, with η replaced per layer
/// by the LARS rate when enabled.
pub fn apply_update(
    x: &mut ParamVector,
    velocity: &mut [f64],
    merged: &[f64],
    config: &OptimConfig,
    lr: f64,
) -> UpdateReport {
    assert_eq!(merged.len(), x.len());
    assert_eq!(velocity.len(), x.len());
    let mut report = UpdateReport::default();
    let wd = config.weight_decay;
    let m = config.momentum;
    let step_range = |x: &mut [f64], v: &mut [f64], g: &[f64], eta: f64| {
        for ((xi, vi), gi) in x.iter_mut().zip(v.iter_mut()).zip(g) {
            *vi = m * *vi - eta * (gi + wd * *xi);
            *xi += *vi;
        }
    };
    match config.lars {
        None => step_range(&mut x.values, velocity, merged, lr),
        Some(trust) => {
            let layers = x.partition().coarsen();
            for layer in layers.groups() {
                let r = layer.range.clone();
                let xn = norm(&x.values[r.clone()]);
                let gn = norm(&merged[r.clone()]);
                match lars_local_rate(lr, trust, xn, gn, wd) {
                    Some(eta) => step_range(&mut x.values[r.clone()], &mut velocity[r.clone()], &merged[r], eta),
                    None => report.lars_skipped.push(layer.layer.clone()),
                }
            }
        }
    }
    report
}
