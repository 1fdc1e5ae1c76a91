//! Polynomially decaying gain and regularization sequences
//! `a_k = (k + 1)^-tau1`, `lambda_k = (k + 1)^-tau2`.

use std::fmt;

use crate::error::{Error, Result};

/// One of the admissibility inequalities on `(tau1, tau2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleViolation {
    /// `0.1 < tau2`
    Tau2TooSmall,
    /// `tau2 < 0.5`
    Tau2TooLarge,
    /// `0.5 < tau1`
    Tau1TooSmall,
    /// `tau1 < 1`
    Tau1TooLarge,
    /// `tau1 + tau2 < 1`
    SumTooLarge,
    /// `3 tau2 < tau1`
    TripleTau2TooLarge,
}

impl fmt::Display for ScheduleViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ScheduleViolation::Tau2TooSmall => "0.1 < tau2",
            ScheduleViolation::Tau2TooLarge => "tau2 < 0.5",
            ScheduleViolation::Tau1TooSmall => "0.5 < tau1",
            ScheduleViolation::Tau1TooLarge => "tau1 < 1",
            ScheduleViolation::SumTooLarge => "tau1 + tau2 < 1",
            ScheduleViolation::TripleTau2TooLarge => "3 tau2 < tau1",
        };
        write!(f, "violates {s}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainSchedule {
    tau1: f64,
    tau2: f64,
}

impl GainSchedule {
    /// Checks every inequality (all strict) and returns the full list of
    /// violations on failure.
    pub fn validate(tau1: f64, tau2: f64) -> std::result::Result<Self, Vec<ScheduleViolation>> {
        use ScheduleViolation::*;
        let mut v = Vec::new();
        if !(tau2 > 0.1) {
            v.push(Tau2TooSmall);
        }
        if !(tau2 < 0.5) {
            v.push(Tau2TooLarge);
        }
        if !(tau1 > 0.5) {
            v.push(Tau1TooSmall);
        }
        if !(tau1 < 1.0) {
            v.push(Tau1TooLarge);
        }
        if !(tau1 + tau2 < 1.0) {
            v.push(SumTooLarge);
        }
        if !(3.0 * tau2 < tau1) {
            v.push(TripleTau2TooLarge);
        }
        if v.is_empty() {
            Ok(Self { tau1, tau2 })
        } else {
            Err(v)
        }
    }

    pub fn new(tau1: f64, tau2: f64) -> Result<Self> {
        Self::validate(tau1, tau2).map_err(|v| {
            let list: Vec<String> = v.iter().map(ToString::to_string).collect();
            Error::Schedule(format!("(tau1={tau1}, tau2={tau2}) {}", list.join(", ")))
        })
    }

    /// `(0.7, 0.15)`, the schedule of the shifting-uniform experiment.
    pub fn reference() -> Self {
        Self { tau1: 0.7, tau2: 0.15 }
    }

    pub fn tau1(&self) -> f64 {
        self.tau1
    }

    pub fn tau2(&self) -> f64 {
        self.tau2
    }

    /// `a_k`.
    #[inline]
    pub fn gain(&self, k: usize) -> f64 {
        ((k + 1) as f64).powf(-self.tau1)
    }

    /// `lambda_k`.
    #[inline]
    pub fn reg(&self, k: usize) -> f64 {
        ((k + 1) as f64).powf(-self.tau2)
    }

    /// `a_k * lambda_k`; the per-step shrink of every old coefficient is `1 - shrink_rate(k)`.
    #[inline]
    pub fn shrink_rate(&self, k: usize) -> f64 {
        self.gain(k) * self.reg(k)
    }

    /// `prod_{k=from}^{to} (1 - a_k lambda_k)`, accumulated in log space.
    /// The `k = 0` factor is exactly zero, so any product including it is 0.
    pub fn contraction_product(&self, from: usize, to: usize) -> f64 {
        if from > to {
            return 1.0;
        }
        if from == 0 {
            return 0.0;
        }
        let log: f64 = (from..=to).map(|k| (-self.shrink_rate(k)).ln_1p()).sum();
        log.exp()
    }

    /// Prefix table `L[k] = sum_{j=1}^{k} ln(1 - a_j lambda_j)` for `k <= k_max`
    /// (`L[0] = 0`), so that `prod_{j=i+1}^{k} = exp(L[k] - L[i])` for `i >= 0`.
    pub fn log_product_prefix(&self, k_max: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(k_max + 1);
        let mut acc = 0.0;
        out.push(0.0);
        for k in 1..=k_max {
            acc += (-self.shrink_rate(k)).ln_1p();
            out.push(acc);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gains_and_regs() {
        let s = GainSchedule::reference();
        assert_eq!(s.gain(0), 1.0);
        assert_eq!(s.reg(0), 1.0);
        assert_relative_eq!(s.gain(9), 10f64.powf(-0.7), max_relative = 1e-15);
        assert_relative_eq!(s.gain(9), 0.199_526_231_496_887_96, max_relative = 1e-14);
        assert_relative_eq!(s.reg(999), 1000f64.powf(-0.15), max_relative = 1e-15);
    }

    #[test]
    fn validation() {
        assert!(GainSchedule::validate(0.7, 0.15).is_ok());
        assert_eq!(
            GainSchedule::validate(0.6, 0.25).unwrap_err(),
            vec![ScheduleViolation::TripleTau2TooLarge]
        );
        assert_eq!(GainSchedule::validate(0.9, 0.2).unwrap_err(), vec![ScheduleViolation::SumTooLarge]);
        // boundaries are rejected
        assert!(GainSchedule::validate(0.5, 0.15).is_err());
        assert!(GainSchedule::validate(0.7, 0.1).is_err());
        assert!(GainSchedule::validate(f64::NAN, 0.2).is_err());
        assert!(matches!(GainSchedule::new(0.6, 0.25), Err(Error::Schedule(_))));
    }

    #[test]
    fn product_edge_cases() {
        let s = GainSchedule::reference();
        assert_eq!(s.contraction_product(5, 4), 1.0);
        assert_eq!(s.contraction_product(0, 0), 0.0);
        assert_eq!(s.contraction_product(0, 1000), 0.0);
        let direct: f64 = (3..=7).map(|k| 1.0 - s.shrink_rate(k)).product();
        assert_relative_eq!(s.contraction_product(3, 7), direct, max_relative = 1e-13);
    }

    #[test]
    fn product_over_envelope_is_bounded() {
        let s = GainSchedule::reference();
        let prefix = s.log_product_prefix(10_000);
        let worst = (10..=10_000)
            .map(|k| prefix[k].exp() / ((k + 1) as f64).powf(-0.85))
            .fold(0.0f64, f64::max);
        assert!(worst <= 30.0, "{worst}");
        assert_relative_eq!(prefix[10_000].exp(), s.contraction_product(1, 10_000), max_relative = 1e-10);
    }

    #[test]
    fn shrink_rate_matches_combined_power_and_decreases() {
        let s = GainSchedule::reference();
        let mut prev = f64::INFINITY;
        for k in 0..5000 {
            let r = s.shrink_rate(k);
            assert_relative_eq!(r, ((k + 1) as f64).powf(-0.85), max_relative = 4.0 * f64::EPSILON);
            assert!(r < prev);
            prev = r;
        }
    }

    #[test]
    fn shrink_rates_are_not_summable() {
        let s = GainSchedule::reference();
        let partial: f64 = (0..=1_000_000).map(|k| s.shrink_rate(k)).sum();
        assert!(partial > 10.0, "{partial}");
    }

    #[test]
    fn log_product_below_negative_sum() {
        let s = GainSchedule::reference();
        let prefix = s.log_product_prefix(2000);
        let mut sum = 0.0;
        for k in 1..=2000 {
            sum += s.shrink_rate(k);
            assert!(prefix[k] <= -sum);
        }
    }
}
