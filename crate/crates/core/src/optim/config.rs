use std::fmt;
use std::str::FromStr;

use super::schedule::ScheduleSpec;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Baseline,
    Rnc,
    Gnc,
    GncToRnc,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Baseline, Method::Rnc, Method::Gnc, Method::GncToRnc];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::Rnc => "rnc",
            Method::Gnc => "gnc",
            Method::GncToRnc => "gnc-to-rnc",
        }
    }

    /// Column title used in summary tables.
    pub fn title(&self) -> &'static str {
        match self {
            Method::Baseline => "Baseline",
            Method::Rnc => "RNC",
            Method::Gnc => "GNC",
            Method::GncToRnc => "GNCtoRNC",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown method '{s}' (baseline, rnc, gnc, gnc-to-rnc)")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseKind {
    Gnc,
    Rnc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseScaling {
    Plain,
    FilterWise,
}

impl NoiseScaling {
    pub fn as_str(&self) -> &'static str {
        match self {
            NoiseScaling::Plain => "plain",
            NoiseScaling::FilterWise => "filter-wise",
        }
    }
}

impl FromStr for NoiseScaling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(NoiseScaling::Plain),
            "filter-wise" => Ok(NoiseScaling::FilterWise),
            _ => Err(Error::Config(format!("unknown noise scaling '{s}' (plain, filter-wise)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimConfig {
    pub method: Method,
    /// Worker count `M`.
    pub workers: usize,
    /// Per-worker shard size `b`.
    pub shard_size: usize,
    /// Noise coefficient for GNC and RNC (and the GNC phase of gnc-to-rnc).
    pub alpha: f64,
    /// Noise coefficient of the RNC phase of gnc-to-rnc.
    pub alpha_rnc: f64,
    /// First epoch (0-based) of the RNC phase of gnc-to-rnc.
    pub switch_epoch: Option<u64>,
    pub momentum: f64,
    pub weight_decay: f64,
    /// LARS trust coefficient; `None` disables LARS.
    pub lars: Option<f64>,
    pub noise_scaling: NoiseScaling,
    pub schedule: ScheduleSpec,
}

impl OptimConfig {
    /// Noise source and coefficient in effect during `epoch`; `None` for
    /// plain DP-SGD.
    pub fn noise_source(&self, epoch: u64) -> Option<(NoiseKind, f64)> {
        match self.method {
            Method::Baseline => None,
            Method::Gnc => Some((NoiseKind::Gnc, self.alpha)),
            Method::Rnc => Some((NoiseKind::Rnc, self.alpha)),
            Method::GncToRnc => match self.switch_epoch {
                Some(s) if epoch >= s => Some((NoiseKind::Rnc, self.alpha_rnc)),
                _ => Some((NoiseKind::Gnc, self.alpha)),
            },
        }
    }

    /// Checks internal consistency; `epochs` is the training horizon when
    /// known.
    pub fn validate(&self, epochs: Option<u64>) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.workers == 0 || self.shard_size == 0 {
            return fail("optim.workers and optim.shard_size must be positive".into());
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) || !(self.alpha_rnc >= 0.0 && self.alpha_rnc.is_finite()) {
            return fail("noise coefficients must be finite and >= 0".into());
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail(format!("optim.momentum = {} not in [0, 1)", self.momentum));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return fail(format!("optim.weight_decay = {} must be >= 0", self.weight_decay));
        }
        if let Some(tau) = self.lars {
            if !(tau > 0.0 && tau.is_finite()) {
                return fail(format!("optim.lars_coef = {tau} must be > 0"));
            }
        }
        let uses_rnc = matches!(self.method, Method::Rnc | Method::GncToRnc);
        if uses_rnc && self.workers < 2 {
            return fail("random noise needs optim.workers >= 2 to be centered".into());
        }
        if self.method == Method::GncToRnc {
            match (self.switch_epoch, epochs) {
                (None, _) => return fail("gnc-to-rnc needs optim.switch_epoch".into()),
                (Some(0), _) => return fail("optim.switch_epoch must be >= 1".into()),
                (Some(s), Some(e)) if s >= e => {
                    return fail(format!("optim.switch_epoch = {s} outside the {e}-epoch horizon"))
                }
                _ => {}
            }
        }
        self.schedule.validate()
    }
}

/// Noise coefficients tuned for ResNet-scale image models. They are a starting
/// point only; toy objectives need their own tuning.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlphaPreset {
    pub name: &'static str,
    pub dataset: &'static str,
    pub batch_size: usize,
    pub rnc: f64,
    pub gnc: f64,
    /// `(gnc phase, rnc phase)` of gnc-to-rnc.
    pub gnc_to_rnc: (f64, f64),
}

pub const ALPHA_PRESETS: &[AlphaPreset] = &[
    AlphaPreset { name: "imagenet-32k", dataset: "ImageNet", batch_size: 32_768, rnc: 0.01, gnc: 0.0001, gnc_to_rnc: (0.01, 0.01) },
    AlphaPreset { name: "imagenet-128k", dataset: "ImageNet", batch_size: 131_072, rnc: 0.01, gnc: 0.0001, gnc_to_rnc: (0.01, 0.01) },
    AlphaPreset { name: "cifar10-4k", dataset: "CIFAR-10", batch_size: 4_096, rnc: 0.01, gnc: 0.1, gnc_to_rnc: (0.1, 4.0) },
    AlphaPreset { name: "cifar10-8k", dataset: "CIFAR-10", batch_size: 8_192, rnc: 0.01, gnc: 0.1, gnc_to_rnc: (0.1, 2.0) },
    AlphaPreset { name: "cifar100-4k", dataset: "CIFAR-100", batch_size: 4_096, rnc: 0.001, gnc: 0.1, gnc_to_rnc: (0.1, 2.0) },
    AlphaPreset { name: "cifar100-8k", dataset: "CIFAR-100", batch_size: 8_192, rnc: 0.01, gnc: 0.1, gnc_to_rnc: (0.1, 4.0) },
];

impl AlphaPreset {
    pub fn find(name: &str) -> Option<&'static AlphaPreset> {
        ALPHA_PRESETS.iter().find(|p| p.name == name)
    }

    /// `(alpha, alpha_rnc)` for `method`.
    pub fn for_method(&self, method: Method) -> (f64, f64) {
        match method {
            Method::Baseline => (0.0, 0.0),
            Method::Rnc => (self.rnc, self.rnc),
            Method::Gnc => (self.gnc, self.gnc),
            Method::GncToRnc => self.gnc_to_rnc,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::Decay;

    pub(crate) fn config(method: Method) -> OptimConfig {
        OptimConfig {
            method,
            workers: 4,
            shard_size: 2,
            alpha: 0.1,
            alpha_rnc: 4.0,
            switch_epoch: Some(3),
            momentum: 0.9,
            weight_decay: 1e-4,
            lars: None,
            noise_scaling: NoiseScaling::FilterWise,
            schedule: ScheduleSpec::constant(0.1, 10),
        }
    }

    #[test]
    fn method_names_roundtrip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("sgd".parse::<Method>().is_err());
    }

    #[test]
    fn switch_selects_noise_source() {
        let c = config(Method::GncToRnc);
        assert_eq!(c.noise_source(2), Some((NoiseKind::Gnc, 0.1)));
        assert_eq!(c.noise_source(3), Some((NoiseKind::Rnc, 4.0)));
        assert_eq!(config(Method::Baseline).noise_source(0), None);
    }

    #[test]
    fn validation() {
        assert!(config(Method::GncToRnc).validate(Some(10)).is_ok());
        assert!(config(Method::GncToRnc).validate(Some(3)).is_err());
        let mut c = config(Method::Gnc);
        c.momentum = 1.0;
        assert!(c.validate(None).is_err());
        let mut c = config(Method::Rnc);
        c.workers = 1;
        assert!(c.validate(None).is_err());
        let mut c = config(Method::Gnc);
        c.alpha = -1.0;
        assert!(c.validate(None).is_err());
        let mut c = config(Method::Gnc);
        c.schedule.decay = Decay::Step { milestones: vec![5, 5], factor: 0.1 };
        assert!(c.validate(None).is_err());
    }

    #[test]
    fn presets() {
        let p = AlphaPreset::find("cifar10-4k").unwrap();
        assert_eq!(p.for_method(Method::GncToRnc), (0.1, 4.0));
        assert_eq!(AlphaPreset::find("imagenet-32k").unwrap().gnc, 0.0001);
    }
}
