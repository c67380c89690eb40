use crate::{Error, Result};

/// Linear warmup from `start_lr` at iteration 1 to the base rate at the last
/// warmup iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct Warmup {
    pub epochs: u64,
    pub start_lr: f64,
}

/// Division of the rate from `epoch` (0-based) onward.
#[derive(Clone, Debug, PartialEq)]
pub struct Collapse {
    pub epoch: u64,
    pub divisor: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Decay {
    Constant,
    /// Multiply by `factor` at the start of each milestone epoch (0-based).
    Step { milestones: Vec<u64>, factor: f64 },
    /// `base * max(0, 1 - t/total)^power` over the global iteration `t`.
    Polynomial { total: u64, power: u32, collapse: Option<Collapse> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleSpec {
    pub base_lr: f64,
    pub warmup: Option<Warmup>,
    pub decay: Decay,
    pub iters_per_epoch: u64,
}

impl ScheduleSpec {
    pub fn constant(lr: f64, iters_per_epoch: u64) -> Self {
        ScheduleSpec { base_lr: lr, warmup: None, decay: Decay::Constant, iters_per_epoch }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return fail(format!("schedule.base_lr = {} must be > 0", self.base_lr));
        }
        if self.iters_per_epoch == 0 {
            return fail("schedule needs at least one iteration per epoch".into());
        }
        if let Some(w) = &self.warmup {
            if !(w.start_lr >= 0.0 && w.start_lr.is_finite()) {
                return fail(format!("schedule.warmup_start_lr = {} must be >= 0", w.start_lr));
            }
        }
        match &self.decay {
            Decay::Constant => {}
            Decay::Step { milestones, factor } => {
                if !(*factor > 0.0 && factor.is_finite()) {
                    return fail(format!("schedule.factor = {factor} must be > 0"));
                }
                if milestones.windows(2).any(|w| w[0] >= w[1]) {
                    return fail("schedule.milestones must be strictly increasing".into());
                }
            }
            Decay::Polynomial { total, collapse, .. } => {
                if *total == 0 {
                    return fail("schedule.poly_total must be positive".into());
                }
                if let Some(c) = collapse {
                    if !(c.divisor > 0.0 && c.divisor.is_finite()) {
                        return fail(format!("schedule.collapse_divisor = {} must be > 0", c.divisor));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Learning rate for the 1-based global iteration `t`.
pub fn lr_at(spec: &ScheduleSpec, t: u64) -> f64 {
    let t = t.max(1);
    let base = spec.base_lr;
    if let Some(w) = &spec.warmup {
        let n = w.epochs * spec.iters_per_epoch;
        if t <= n {
            if n == 1 {
                return base;
            }
            return w.start_lr + (base - w.start_lr) * (t - 1) as f64 / (n - 1) as f64;
        }
    }
    let epoch = (t - 1) / spec.iters_per_epoch;
    match &spec.decay {
        Decay::Constant => base,
        Decay::Step { milestones, factor } => {
            let passed = milestones.iter().filter(|&&m| epoch >= m).count();
            base * factor.powi(passed as i32)
        }
        Decay::Polynomial { total, power, collapse } => {
            let frac = (1.0 - t as f64 / *total as f64).max(0.0);
            let lr = base * frac.powi(*power as i32);
            match collapse {
                Some(c) if epoch >= c.epoch => lr / c.divisor,
                _ => lr,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn warmup_endpoints() {
        let s = ScheduleSpec {
            base_lr: 3.2,
            warmup: Some(Warmup { epochs: 10, start_lr: 0.025 }),
            decay: Decay::Constant,
            iters_per_epoch: 12,
        };
        assert_eq!(lr_at(&s, 1), 0.025);
        assert!((lr_at(&s, 120) - 3.2).abs() < 1e-12);
        assert_eq!(lr_at(&s, 121), 3.2);
        assert!(lr_at(&s, 60) > lr_at(&s, 59));
    }

    #[test]
    fn flat_warmup_is_constant() {
        let s = ScheduleSpec {
            base_lr: 0.5,
            warmup: Some(Warmup { epochs: 3, start_lr: 0.5 }),
            decay: Decay::Constant,
            iters_per_epoch: 4,
        };
        assert!((1..40).all(|t| lr_at(&s, t) == 0.5));
    }

    #[test]
    fn step_decay() {
        let s = ScheduleSpec {
            base_lr: 1.0,
            warmup: None,
            decay: Decay::Step { milestones: vec![2, 4], factor: 0.1 },
            iters_per_epoch: 5,
        };
        assert_eq!(lr_at(&s, 10), 1.0);
        assert_eq!(lr_at(&s, 11), 0.1);
        assert_eq!(lr_at(&s, 21), 0.1f64.powi(2));
    }

    #[test]
    fn polynomial_with_collapse() {
        let s = ScheduleSpec {
            base_lr: 23.0,
            warmup: None,
            decay: Decay::Polynomial { total: 100, power: 2, collapse: Some(Collapse { epoch: 8, divisor: 5.0 }) },
            iters_per_epoch: 10,
        };
        assert_eq!(lr_at(&s, 50), 23.0 * 0.25);
        assert_eq!(lr_at(&s, 81), 23.0 * (1.0 - 0.81f64).powi(2) / 5.0);
        assert_eq!(lr_at(&s, 100), 0.0);
        assert_eq!(lr_at(&s, 150), 0.0);
    }
}
