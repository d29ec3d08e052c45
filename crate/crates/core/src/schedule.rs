//! Noise schedules `alpha(t)`: the probability that a token is still
//! unmasked at diffusion time `t`.

use serde::{Deserialize, Serialize};

use crate::error::{EdlmError, Result};

pub const DEFAULT_EPS: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScheduleKind {
    /// `alpha(t) = 1 - t`.
    Linear,
    /// `alpha(t) = 1 - t^exponent`. An exponent of 1 is the linear schedule.
    LogLinear { exponent: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub kind: ScheduleKind,
    /// Clamp margin: `alpha` is kept inside `[eps, 1 - eps]`.
    pub eps: f64,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self::linear()
    }
}

impl NoiseSchedule {
    pub fn linear() -> Self {
        Self {
            kind: ScheduleKind::Linear,
            eps: DEFAULT_EPS,
        }
    }

    pub fn loglinear(exponent: f64) -> Result<Self> {
        if !(exponent.is_finite() && exponent > 0.0) {
            return Err(EdlmError::domain(format!(
                "loglinear exponent must be positive, got {exponent}"
            )));
        }
        Ok(Self {
            kind: ScheduleKind::LogLinear { exponent },
            eps: DEFAULT_EPS,
        })
    }

    pub fn with_eps(mut self, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 0.5) {
            return Err(EdlmError::domain(format!("eps must lie in (0, 0.5), got {eps}")));
        }
        self.eps = eps;
        Ok(self)
    }

    /// Parses `linear`, `loglinear` or `loglinear:<exponent>`.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        match text.split_once(':') {
            None if text == "linear" => Ok(Self::linear()),
            None if text == "loglinear" => Self::loglinear(1.0),
            Some(("loglinear", c)) => {
                let c: f64 = c
                    .parse()
                    .map_err(|_| EdlmError::Config(format!("bad loglinear exponent '{c}'")))?;
                Self::loglinear(c)
            }
            _ => Err(EdlmError::Config(format!("unknown schedule '{text}'"))),
        }
    }

    fn check_time(t: f64) -> Result<()> {
        if (0.0..=1.0).contains(&t) {
            Ok(())
        } else {
            Err(EdlmError::domain(format!("time {t} outside [0, 1]")))
        }
    }

    fn unclamped(&self, t: f64) -> f64 {
        match self.kind {
            ScheduleKind::Linear => 1.0 - t,
            ScheduleKind::LogLinear { exponent } => 1.0 - t.powf(exponent),
        }
    }

    /// `alpha(t)` clamped to `[eps, 1 - eps]`.
    pub fn alpha(&self, t: f64) -> Result<f64> {
        Self::check_time(t)?;
        Ok(self.unclamped(t).clamp(self.eps, 1.0 - self.eps))
    }

    /// Analytic derivative of the unclamped schedule.
    pub fn alpha_prime(&self, t: f64) -> Result<f64> {
        Self::check_time(t)?;
        Ok(match self.kind {
            ScheduleKind::Linear => -1.0,
            ScheduleKind::LogLinear { exponent } => -exponent * t.powf(exponent - 1.0),
        })
    }

    /// `alpha_{t|s} = alpha(t) / alpha(s)` for `s <= t`.
    pub fn alpha_ratio(&self, s: f64, t: f64) -> Result<f64> {
        if s > t {
            return Err(EdlmError::domain(format!("alpha_ratio needs s <= t, got s={s}, t={t}")));
        }
        Ok(self.alpha(t)? / self.alpha(s)?)
    }

    /// Masking probability `1 - alpha(t)`. Models condition on this rather
    /// than on raw `t`, so that two schedules that mask at the same rate
    /// present identical inputs.
    pub fn noise_level(&self, t: f64) -> Result<f64> {
        Ok(1.0 - self.alpha(t)?)
    }

    /// Short human-readable name, used in reports.
    pub fn describe(&self) -> String {
        match self.kind {
            ScheduleKind::Linear => "linear".to_string(),
            ScheduleKind::LogLinear { exponent } => format!("loglinear:{exponent}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn linear_examples() {
        let s = NoiseSchedule::linear();
        assert_eq!(s.alpha(0.0).unwrap(), 1.0 - DEFAULT_EPS);
        assert_eq!(s.alpha(0.25).unwrap(), 0.75);
        assert_eq!(s.alpha(1.0).unwrap(), DEFAULT_EPS);
        assert_eq!(s.alpha_prime(0.5).unwrap(), -1.0);
        assert_eq!(s.alpha_prime(0.9).unwrap(), -1.0);
    }

    #[test]
    fn out_of_range_time_is_a_domain_error() {
        let s = NoiseSchedule::linear();
        assert!(matches!(s.alpha(-0.1), Err(EdlmError::Domain(_))));
        assert!(matches!(s.alpha(1.5), Err(EdlmError::Domain(_))));
        assert!(matches!(s.alpha_prime(f64::NAN), Err(EdlmError::Domain(_))));
    }

    #[test]
    fn loglinear_derivative_matches_central_difference() {
        let h = 1e-5;
        for c in [0.5, 1.0, 2.0, 3.0] {
            let s = NoiseSchedule::loglinear(c).unwrap();
            for i in 1..50 {
                let t = 0.02 + 0.96 * i as f64 / 50.0;
                let (lo, hi) = (s.alpha(t - h).unwrap(), s.alpha(t + h).unwrap());
                if lo >= 1.0 - s.eps || hi <= s.eps {
                    continue;
                }
                let fd = (hi - lo) / (2.0 * h);
                let an = s.alpha_prime(t).unwrap();
                assert!(((an - fd) / an).abs() <= 1e-6, "c={c} t={t}: {an} vs {fd}");
            }
        }
    }

    #[test]
    fn parse_round_trip() {
        assert_eq!(NoiseSchedule::parse("linear").unwrap(), NoiseSchedule::linear());
        let s = NoiseSchedule::parse("loglinear:2").unwrap();
        assert_eq!(s.kind, ScheduleKind::LogLinear { exponent: 2.0 });
        assert_eq!(NoiseSchedule::parse(&s.describe()).unwrap(), s);
        assert!(NoiseSchedule::parse("cosine").is_err());
        assert!(NoiseSchedule::loglinear(0.0).is_err());
    }

    fn any_schedule() -> impl Strategy<Value = NoiseSchedule> {
        prop_oneof![
            Just(NoiseSchedule::linear()),
            (0.3f64..4.0).prop_map(|c| NoiseSchedule::loglinear(c).unwrap()),
        ]
    }

    proptest! {
        #[test]
        fn alpha_is_monotone(s in any_schedule(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (t1, t2) = if a < b { (a, b) } else { (b, a) };
            let (x1, x2) = (s.alpha(t1).unwrap(), s.alpha(t2).unwrap());
            prop_assert!(x1 >= x2);
            // strict away from the clamp
            if x1 < 1.0 - s.eps && x2 > s.eps && t2 - t1 > 1e-9 {
                prop_assert!(x1 > x2);
            }
        }

        #[test]
        fn derivative_consistent(s in any_schedule(), t in 0.0f64..1.0) {
            let h = 1e-5;
            let t = t.clamp(2.0 * s.eps, 1.0 - 2.0 * s.eps);
            let (lo, hi) = (s.alpha(t - h).unwrap(), s.alpha(t + h).unwrap());
            prop_assume!(lo < 1.0 - s.eps && hi > s.eps);
            let fd = (hi - lo) / (2.0 * h);
            prop_assert!((s.alpha_prime(t).unwrap() - fd).abs() <= 1e-5);
            prop_assert!(s.alpha_prime(t).unwrap() < 0.0 || t == 0.0);
        }

        #[test]
        fn conditional_factorization(s in any_schedule(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let r = s.alpha_ratio(lo, hi).unwrap();
            prop_assert!(r > 0.0 && r <= 1.0);
            prop_assert!((s.alpha(hi).unwrap() - s.alpha(lo).unwrap() * r).abs() <= 1e-12);
        }
    }
}
