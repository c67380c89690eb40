use crate::numerics::{norm, sub, ParamVector};
use crate::objectives::{loss_and_grad, Batch, Dataset, Objective};
use crate::optim::{merged_grad, perturb, NoiseBank, NoiseKind, NoiseScaling};
use crate::{Error, Result};

pub const PROBE_STEPS: usize = 8;

/// Step multipliers `1/2 + k (3/2) / 7`, `k = 0..8`: eight evenly spaced
/// points covering `[1/2, 2]` inclusive.
pub fn probe_multipliers() -> [f64; PROBE_STEPS] {
    std::array::from_fn(|k| 0.5 + k as f64 * 1.5 / (PROBE_STEPS - 1) as f64)
}

/// How losses and gradients are evaluated along the probe.
#[derive(Clone, Copy, Debug)]
pub enum ProbeMode<'a> {
    /// Plain objective over the large batch.
    Plain,
    /// Each worker evaluates its shard at the probe point perturbed by its
    /// column of `bank`; the results are averaged.
    Convolved {
        bank: &'a NoiseBank,
        shards: &'a [Batch],
        alpha: f64,
        kind: NoiseKind,
        scaling: NoiseScaling,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SmoothnessProbe {
    pub base_loss: f64,
    pub step_lengths: [f64; PROBE_STEPS],
    pub losses: [f64; PROBE_STEPS],
    /// `‖∇f(x_0) - ∇f(x_s)‖` at each step.
    pub grad_distances: [f64; PROBE_STEPS],
    /// `max_s ‖∇f(x_0) - ∇f(x_s)‖ / ‖x_0 - x_s‖`.
    pub beta: f64,
}

impl SmoothnessProbe {
    /// Spread of the loss over the start point and the eight probe points.
    pub fn loss_range(&self) -> f64 {
        let (lo, hi) = self
            .losses
            .iter()
            .fold((self.base_loss, self.base_loss), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        hi - lo
    }

    /// Spread of the gradient distances over the eight probe points.
    pub fn grad_range(&self) -> f64 {
        let lo = self.grad_distances.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.grad_distances.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    }
}

/// Probes `x_s = x - s g` for `s = η/2 .. 2η`.
pub fn smoothness_probe(
    obj: &dyn Objective,
    data: &Dataset,
    batch: &Batch,
    x: &ParamVector,
    g: &[f64],
    lr: f64,
    mode: ProbeMode<'_>,
) -> Result<SmoothnessProbe> {
    if g.len() != x.len() {
        return Err(Error::invalid("probe direction does not match the parameters"));
    }
    if norm(g) == 0.0 {
        return Err(Error::invalid("probe direction is zero"));
    }
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::invalid(format!("probe needs a positive learning rate, got {lr}")));
    }
    let eval = |point: &ParamVector| -> Result<(f64, Vec<f64>)> {
        match mode {
            ProbeMode::Plain => loss_and_grad(obj, data, &batch.indices, point.as_slice()),
            ProbeMode::Convolved { bank, shards, alpha, kind, scaling } => {
                if bank.workers() != shards.len() {
                    return Err(Error::invalid("noise bank and shards disagree on worker count"));
                }
                let points: Vec<Vec<f64>> = bank
                    .columns()
                    .iter()
                    .map(|w| perturb(point, w, alpha, lr, scaling, kind))
                    .collect();
                let e = merged_grad(obj, data, shards, &points)?;
                let loss = e.losses.iter().sum::<f64>() / e.losses.len() as f64;
                Ok((loss, e.merged))
            }
        }
    };

    let (base_loss, g0) = eval(x)?;
    let step_lengths = probe_multipliers().map(|m| m * lr);
    let mut losses = [0.0; PROBE_STEPS];
    let mut grad_distances = [0.0; PROBE_STEPS];
    let mut beta: f64 = 0.0;
    for (k, &s) in step_lengths.iter().enumerate() {
        let moved: Vec<f64> = x.values.iter().zip(g).map(|(xi, gi)| xi - s * gi).collect();
        let point = x.with_values(moved);
        let (l, gs) = eval(&point)?;
        let dg = norm(&sub(&g0, &gs));
        let dx = norm(&sub(x.as_slice(), point.as_slice()));
        losses[k] = l;
        grad_distances[k] = dg;
        if dx > 0.0 {
            beta = beta.max(dg / dx);
        }
    }
    Ok(SmoothnessProbe { base_loss, step_lengths, losses, grad_distances, beta })
}
