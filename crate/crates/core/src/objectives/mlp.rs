use std::sync::Arc;

use rand::Rng as _;

use super::{check_labels, softmax_xent, Dataset, Objective};
use crate::numerics::{FilterPartition, GroupingLevel, ParamGroup, Rng};
use crate::{Error, Result};

/// Fully connected classifier: tanh hidden layers, softmax cross-entropy
/// output.
///
/// Parameters are laid out layer by layer as `W` (out x in, row-major) then
/// `b`. Each row of `W` is a filter; each bias vector is a single filter.
#[derive(Clone, Debug)]
pub struct Mlp {
    /// Widths from input to output.
    widths: Vec<usize>,
    partition: Arc<FilterPartition>,
}

#[derive(Clone, Copy, Debug)]
struct LayerLayout {
    fan_in: usize,
    fan_out: usize,
    weights: usize,
    bias: usize,
}

impl Mlp {
    /// `hidden` may hold zero, one or two widths.
    pub fn new(features: usize, hidden: &[usize], classes: usize) -> Result<Self> {
        if features == 0 || classes < 2 {
            return Err(Error::invalid("classifier needs features >= 1 and classes >= 2"));
        }
        if hidden.len() > 2 || hidden.contains(&0) {
            return Err(Error::invalid(format!(
                "hidden widths {hidden:?}: expected up to two positive widths"
            )));
        }
        let mut widths = vec![features];
        widths.extend_from_slice(hidden);
        widths.push(classes);

        let mut groups = Vec::new();
        let mut offset = 0;
        for (k, w) in widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let layer = format!("fc{}.w", k + 1);
            for j in 0..fan_out {
                groups.push(ParamGroup::new(
                    format!("{layer}/{j}"),
                    &layer,
                    offset..offset + fan_in,
                ));
                offset += fan_in;
            }
            let bias = format!("fc{}.b", k + 1);
            groups.push(ParamGroup::new(&bias, &bias, offset..offset + fan_out));
            offset += fan_out;
        }
        let partition = Arc::new(FilterPartition::new(groups, GroupingLevel::PerFilter)?);
        Ok(Self { widths, partition })
    }

    pub fn features(&self) -> usize {
        self.widths[0]
    }

    pub fn classes(&self) -> usize {
        *self.widths.last().unwrap()
    }

    fn layers(&self) -> Vec<LayerLayout> {
        let mut offset = 0;
        self.widths
            .windows(2)
            .map(|w| {
                let l = LayerLayout {
                    fan_in: w[0],
                    fan_out: w[1],
                    weights: offset,
                    bias: offset + w[0] * w[1],
                };
                offset = l.bias + w[1];
                l
            })
            .collect()
    }

    /// Uniform on `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` per layer, weights and
    /// biases alike.
    pub fn init(&self, rng: &Rng) -> Vec<f64> {
        let mut g = rng.generator();
        let mut x = vec![0.0; self.dim()];
        for layer in self.layers() {
            let bound = 1.0 / (layer.fan_in as f64).sqrt();
            let end = layer.bias + layer.fan_out;
            for v in &mut x[layer.weights..end] {
                *v = g.random_range(-bound..=bound);
            }
        }
        x
    }

    /// Output logits for one feature vector.
    pub fn logits(&self, features: &[f64], x: &[f64]) -> Vec<f64> {
        self.forward(features, x).pop().unwrap()
    }

    /// Activations of every layer; the last entry holds the logits.
    fn forward(&self, features: &[f64], x: &[f64]) -> Vec<Vec<f64>> {
        let layers = self.layers();
        let mut acts = vec![features.to_vec()];
        for (k, layer) in layers.iter().enumerate() {
            let input = &acts[k];
            let w = &x[layer.weights..layer.bias];
            let b = &x[layer.bias..layer.bias + layer.fan_out];
            let mut out: Vec<f64> = (0..layer.fan_out)
                .map(|j| {
                    let row = &w[j * layer.fan_in..(j + 1) * layer.fan_in];
                    row.iter().zip(input).fold(b[j], |acc, (wi, ai)| acc + wi * ai)
                })
                .collect();
            if k + 1 < layers.len() {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(out);
        }
        acts
    }

    /// Fraction of examples whose arg-max logit equals the label.
    pub fn accuracy(&self, data: &Dataset, x: &[f64]) -> f64 {
        let f = self.features();
        let hits = (0..data.n())
            .filter(|&i| {
                let r = data.record(i);
                let logits = self.logits(&r[..f], x);
                let best = logits
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |(bi, bv), (j, &v)| if v > bv { (j, v) } else { (bi, bv) })
                    .0;
                best == r[f] as usize
            })
            .count();
        hits as f64 / data.n() as f64
    }
}

impl Objective for Mlp {
    fn dim(&self) -> usize {
        self.partition.len()
    }

    fn partition(&self) -> Arc<FilterPartition> {
        Arc::clone(&self.partition)
    }

    fn record_width(&self) -> usize {
        self.features() + 1
    }

    fn check_dataset(&self, data: &Dataset) -> Result<()> {
        if data.width() != self.record_width() {
            return Err(Error::invalid(format!(
                "dataset records have width {}, classifier expects {}",
                data.width(),
                self.record_width()
            )));
        }
        check_labels(data, self.features(), self.classes())
    }

    fn example_loss(&self, z: &[f64], x: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let f = self.features();
        let label = z[f] as usize;
        let acts = self.forward(&z[..f], x);
        let logits = acts.last().unwrap();
        let Some(grad) = grad else {
            return softmax_xent(logits, label, None);
        };

        let mut delta = vec![0.0; logits.len()];
        let loss = softmax_xent(logits, label, Some(&mut delta));
        let layers = self.layers();
        for (k, layer) in layers.iter().enumerate().rev() {
            let input = &acts[k];
            for j in 0..layer.fan_out {
                let row = layer.weights + j * layer.fan_in;
                for (gi, ai) in grad[row..row + layer.fan_in].iter_mut().zip(input) {
                    *gi += delta[j] * ai;
                }
                grad[layer.bias + j] += delta[j];
            }
            if k > 0 {
                let w = &x[layer.weights..layer.bias];
                let prev: Vec<f64> = (0..layer.fan_in)
                    .map(|i| {
                        let back = (0..layer.fan_out).fold(0.0, |acc, j| acc + w[j * layer.fan_in + i] * delta[j]);
                        back * (1.0 - input[i] * input[i])
                    })
                    .collect();
                delta = prev;
            }
        }
        loss
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::streams;
    use crate::objectives::testing::{assert_close, finite_difference};
    use crate::objectives::{gaussian_blobs, grad, loss};

    #[test]
    fn layout_and_partition() {
        let m = Mlp::new(3, &[4], 2).unwrap();
        assert_eq!(m.dim(), 3 * 4 + 4 + 4 * 2 + 2);
        let layers = m.partition().coarsen();
        let names: Vec<&str> = layers.groups().iter().map(|g| g.name.as_str()).collect();
        assert_eq!(names, ["fc1.w", "fc1.b", "fc2.w", "fc2.b"]);
        assert_eq!(m.partition().groups().len(), 4 + 1 + 2 + 1);
        assert!(Mlp::new(3, &[4, 4, 4], 2).is_err());
        assert!(Mlp::new(3, &[0], 2).is_err());
    }

    #[test]
    fn zero_output_layer_gives_log_classes() {
        let m = Mlp::new(4, &[5], 3).unwrap();
        let data = gaussian_blobs(9, 4, 3, 1.0, &Rng::new(1, streams::DATA)).unwrap();
        let mut x = m.init(&Rng::new(1, streams::INIT));
        let out = m.layers()[1];
        x[out.weights..out.bias + out.fan_out].fill(0.0);
        let l = loss(&m, &data, &[0, 1, 2, 3, 4], &x).unwrap();
        assert!((l - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn init_respects_fan_in_bounds() {
        let m = Mlp::new(16, &[9], 4).unwrap();
        let x = m.init(&Rng::new(2, streams::INIT));
        let layers = m.layers();
        assert!(x[..layers[1].weights].iter().all(|v| v.abs() <= 0.25));
        assert!(x[layers[1].weights..].iter().all(|v| v.abs() <= 1.0 / 3.0));
        assert_eq!(x, m.init(&Rng::new(2, streams::INIT)));
    }

    #[test]
    fn backprop_matches_finite_differences() {
        for hidden in [vec![], vec![6], vec![5, 4]] {
            let m = Mlp::new(3, &hidden, 3).unwrap();
            let data = gaussian_blobs(8, 3, 3, 2.0, &Rng::new(3, streams::DATA)).unwrap();
            let x = m.init(&Rng::new(3, streams::INIT));
            let batch: Vec<usize> = (0..8).collect();
            let g = grad(&m, &data, &batch, &x).unwrap();
            assert_close(&g, &finite_difference(&m, &data, &batch, &x), 1e-5, 1e-6);
        }
    }

    #[test]
    fn rejects_bad_labels() {
        let m = Mlp::new(1, &[], 2).unwrap();
        let bad = Dataset::new(2, vec![0.0, 2.0]).unwrap();
        assert!(m.check_dataset(&bad).is_err());
        let frac = Dataset::new(2, vec![0.0, 0.5]).unwrap();
        assert!(m.check_dataset(&frac).is_err());
    }
}
