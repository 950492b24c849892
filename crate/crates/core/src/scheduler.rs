//! Per-epoch DBSCAN radius schedules.
//!
//! The noise-robust schedule warms up from `eps_lo` to `eps_hi` over the first
//! half of training with a half cosine, anneals back to `eps_steady` by 75% of
//! training, then holds `eps_steady`.

use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;
use core::str::FromStr;

use crate::error::{invalid, Error, Result};

pub const DEFAULT_EPS_LO: f64 = 0.5;
pub const DEFAULT_EPS_HI: f64 = 0.7;
pub const DEFAULT_EPS_STEADY: f64 = 0.6;
pub const DEFAULT_TOTAL_EPOCHS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScheduleKind {
    NoiseRobust,
    OnlyWarmup,
    OnlyAnnealing,
    OneCosineCycle,
    OneAndHalfCosineCycle,
    Fixed,
}

impl ScheduleKind {
    pub const ALL: [ScheduleKind; 6] = [
        ScheduleKind::NoiseRobust,
        ScheduleKind::OnlyWarmup,
        ScheduleKind::OnlyAnnealing,
        ScheduleKind::OneCosineCycle,
        ScheduleKind::OneAndHalfCosineCycle,
        ScheduleKind::Fixed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScheduleKind::NoiseRobust => "noise-robust",
            ScheduleKind::OnlyWarmup => "only-warmup",
            ScheduleKind::OnlyAnnealing => "only-annealing",
            ScheduleKind::OneCosineCycle => "one-cosine-cycle",
            ScheduleKind::OneAndHalfCosineCycle => "one-and-half-cosine-cycle",
            ScheduleKind::Fixed => "fixed",
        }
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('_', "-");
        Self::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| invalid("kind", alloc::format!("unknown schedule `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsSchedule {
    kind: ScheduleKind,
    eps_lo: f64,
    eps_hi: f64,
    eps_steady: f64,
    total_epochs: usize,
}

impl EpsSchedule {
    pub fn new(kind: ScheduleKind, eps_lo: f64, eps_hi: f64, eps_steady: f64, total_epochs: usize) -> Result<Self> {
        if !(eps_lo > 0.0 && eps_lo <= eps_steady && eps_steady <= eps_hi && eps_hi < 1.0) {
            return Err(invalid(
                "eps",
                alloc::format!("need 0 < lo <= steady <= hi < 1, got ({eps_lo}, {eps_steady}, {eps_hi})"),
            ));
        }
        if total_epochs < 4 {
            return Err(invalid("total_epochs", alloc::format!("{total_epochs} < 4")));
        }
        Ok(Self { kind, eps_lo, eps_hi, eps_steady, total_epochs })
    }

    /// Constant schedule.
    pub fn fixed(eps: f64, total_epochs: usize) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(invalid("eps", alloc::format!("{eps} outside (0, 1)")));
        }
        Self::new(ScheduleKind::Fixed, eps, eps, eps, total_epochs)
    }

    pub fn noise_robust_default() -> Self {
        Self {
            kind: ScheduleKind::NoiseRobust,
            eps_lo: DEFAULT_EPS_LO,
            eps_hi: DEFAULT_EPS_HI,
            eps_steady: DEFAULT_EPS_STEADY,
            total_epochs: DEFAULT_TOTAL_EPOCHS,
        }
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn eps_lo(&self) -> f64 {
        self.eps_lo
    }

    pub fn eps_hi(&self) -> f64 {
        self.eps_hi
    }

    pub fn eps_steady(&self) -> f64 {
        self.eps_steady
    }

    pub fn total_epochs(&self) -> usize {
        self.total_epochs
    }

    /// `ε` at integer `epoch` in `[0, total_epochs)`.
    pub fn epsilon_at(&self, epoch: usize) -> Result<f64> {
        if epoch >= self.total_epochs {
            return Err(invalid(
                "epoch",
                alloc::format!("{epoch} outside [0, {})", self.total_epochs),
            ));
        }
        let (lo, hi, steady) = (self.eps_lo, self.eps_hi, self.eps_steady);
        let e = self.total_epochs as f64;
        let t = epoch as f64;
        // (1 - cos(π·x)) / 2 rises 0 -> 1 on x in [0, 1]
        let rise = |x: f64| (1.0 - libm::cos(PI * x)) / 2.0;
        let eps = match self.kind {
            ScheduleKind::NoiseRobust => {
                let half = e / 2.0;
                let three_q = 3.0 * e / 4.0;
                if t < half {
                    lo + (hi - lo) * rise(t / half)
                } else if t < three_q {
                    steady + (hi - steady) * (1.0 - rise((t - half) / (e / 4.0)))
                } else {
                    steady
                }
            }
            ScheduleKind::OnlyWarmup => lo + (hi - lo) * rise(t / e),
            ScheduleKind::OnlyAnnealing => lo + (hi - lo) * (1.0 - rise(t / e)),
            ScheduleKind::OneCosineCycle => lo + (hi - lo) * rise(2.0 * t / e),
            ScheduleKind::OneAndHalfCosineCycle => lo + (hi - lo) * rise(3.0 * t / e),
            ScheduleKind::Fixed => steady,
        };
        Ok(eps.clamp(lo, hi))
    }

    /// `(epoch, ε)` for every epoch.
    pub fn table(&self) -> Vec<(usize, f64)> {
        (0..self.total_epochs)
            .map(|t| (t, self.epsilon_at(t).expect("epoch in range")))
            .collect()
    }
}

/// One constant schedule per value, over the default epoch count.
pub fn fixed_sweep(values: &[f64]) -> Result<Vec<EpsSchedule>> {
    values.iter().map(|&v| EpsSchedule::fixed(v, DEFAULT_TOTAL_EPOCHS)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nr(e: usize) -> EpsSchedule {
        EpsSchedule::new(ScheduleKind::NoiseRobust, 0.5, 0.7, 0.6, e).unwrap()
    }

    #[test]
    fn noise_robust_landmarks() {
        let s = nr(40);
        assert_eq!(s.epsilon_at(0).unwrap(), 0.5);
        assert!((s.epsilon_at(20).unwrap() - 0.7).abs() < 1e-12);
        for t in 30..40 {
            assert_eq!(s.epsilon_at(t).unwrap(), 0.6);
        }
        assert!(s.epsilon_at(40).is_err());
    }

    #[test]
    fn validation() {
        assert!(EpsSchedule::new(ScheduleKind::NoiseRobust, 0.6, 0.7, 0.5, 40).is_err());
        assert!(EpsSchedule::new(ScheduleKind::NoiseRobust, 0.5, 1.0, 0.6, 40).is_err());
        assert!(EpsSchedule::new(ScheduleKind::NoiseRobust, 0.5, 0.7, 0.6, 3).is_err());
    }

    #[test]
    fn sweep() {
        let s = fixed_sweep(&[0.5, 0.7]).unwrap();
        assert_eq!(s.len(), 2);
        assert!(s[1].table().iter().all(|&(_, e)| e == 0.7));
        assert!(fixed_sweep(&[]).unwrap().is_empty());
        assert!(fixed_sweep(&[1.5]).is_err());
    }

    #[test]
    fn variants_endpoints() {
        let mk = |k| EpsSchedule::new(k, 0.5, 0.7, 0.6, 40).unwrap();
        assert_eq!(mk(ScheduleKind::OnlyWarmup).epsilon_at(0).unwrap(), 0.5);
        assert_eq!(mk(ScheduleKind::OnlyAnnealing).epsilon_at(0).unwrap(), 0.7);
        let cyc = mk(ScheduleKind::OneCosineCycle);
        assert!((cyc.epsilon_at(20).unwrap() - 0.7).abs() < 1e-12);
        let one_half = mk(ScheduleKind::OneAndHalfCosineCycle);
        assert!(one_half.epsilon_at(39).unwrap() > 0.69);
        assert_eq!("one_cosine_cycle".parse::<ScheduleKind>().unwrap(), ScheduleKind::OneCosineCycle);
    }
}
