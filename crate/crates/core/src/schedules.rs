//! Summable perturbation step sizes `c * alpha^l`, with optional restarts.
//!
//! The exponent `l` starts at -1 and every call to `next_candidate` bumps it
//! before emitting, so the first step is `c`. Rejected candidates are never
//! given back. A restart after window `W_r` sets `l = r` and clears the window
//! counter; the following candidate is therefore `c * alpha^(r + 1)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub trait StepSchedule {
    /// Advances the exponent and returns the new candidate step.
    fn next_candidate(&mut self) -> f64;

    /// Bookkeeping at the end of an outer iteration. Returns `true` when a
    /// restart happened.
    fn complete_outer_iteration(&mut self) -> bool;

    /// Upper bound on the sum of every step this schedule can emit.
    fn series_upper_bound(&self) -> f64;

    /// Largest candidate any future call can still emit.
    fn largest_future_step(&self) -> f64;
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelSchedule {
    alpha: f64,
    scale: f64,
    ell: i64,
}

impl KernelSchedule {
    pub fn new(alpha: f64, scale: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Config(format!("kernel alpha must lie in (0, 1), got {alpha}")));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Config(format!("step scale c must be positive, got {scale}")));
        }
        Ok(Self { alpha, scale, ell: -1 })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Exponent of the last emitted candidate (-1 before the first call).
    pub fn ell(&self) -> i64 {
        self.ell
    }

    pub fn step_at(&self, ell: i64) -> f64 {
        match i32::try_from(ell) {
            Ok(e) => self.scale * self.alpha.powi(e),
            Err(_) => 0.0,
        }
    }

    fn reset_to(&mut self, ell: i64) {
        self.ell = ell;
    }
}

impl StepSchedule for KernelSchedule {
    fn next_candidate(&mut self) -> f64 {
        self.ell += 1;
        self.step_at(self.ell)
    }

    fn complete_outer_iteration(&mut self) -> bool {
        false
    }

    /// `c / (1 - alpha)`, the full geometric series.
    fn series_upper_bound(&self) -> f64 {
        self.scale / (1.0 - self.alpha)
    }

    fn largest_future_step(&self) -> f64 {
        self.step_at(self.ell + 1)
    }
}

/// Window lengths `W_r`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Windows {
    Constant(u64),
    /// Explicit `W_0, W_1, ...`; the last entry repeats once exhausted.
    Sequence(Vec<u64>),
    /// No restarts at all.
    Never,
}

impl Windows {
    fn validate(&self) -> Result<()> {
        let ok = match self {
            Windows::Constant(w) => *w > 0,
            Windows::Sequence(ws) => !ws.is_empty() && ws.iter().all(|&w| w > 0),
            Windows::Never => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "restart windows must be positive integers: {self:?}"
            )))
        }
    }

    pub fn get(&self, r: u64) -> Option<u64> {
        match self {
            Windows::Constant(w) => Some(*w),
            Windows::Sequence(ws) => {
                let i = usize::try_from(r).unwrap_or(usize::MAX).min(ws.len() - 1);
                Some(ws[i])
            }
            Windows::Never => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestartSchedule {
    base: KernelSchedule,
    windows: Windows,
    restarts: u64,
    w: u64,
}

impl RestartSchedule {
    pub fn new(base: KernelSchedule, windows: Windows) -> Result<Self> {
        windows.validate()?;
        Ok(Self {
            base,
            windows,
            restarts: 0,
            w: 0,
        })
    }

    pub fn kernel(&self) -> &KernelSchedule {
        &self.base
    }

    pub fn ell(&self) -> i64 {
        self.base.ell
    }

    pub fn restarts(&self) -> u64 {
        self.restarts
    }

    /// Outer iterations completed in the current window.
    pub fn window_position(&self) -> u64 {
        self.w
    }

    pub fn windows(&self) -> &Windows {
        &self.windows
    }
}

impl StepSchedule for RestartSchedule {
    fn next_candidate(&mut self) -> f64 {
        self.base.next_candidate()
    }

    fn complete_outer_iteration(&mut self) -> bool {
        self.w += 1;
        match self.windows.get(self.restarts) {
            Some(window) if self.w == window => {
                self.restarts += 1;
                self.base.reset_to(self.restarts as i64);
                self.w = 0;
                true
            }
            _ => false,
        }
    }

    /// `c / (1 - alpha)^2`, which dominates every window of every restart.
    fn series_upper_bound(&self) -> f64 {
        let gap = 1.0 - self.base.alpha;
        self.base.scale / (gap * gap)
    }

    /// After a restart the exponent is back at the restart count, never below.
    fn largest_future_step(&self) -> f64 {
        let next = self.base.largest_future_step();
        match self.windows.get(self.restarts) {
            Some(_) => next.max(self.base.step_at(self.restarts as i64 + 1)),
            None => next,
        }
    }
}

/// Either kind of schedule, as built from a run configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum Schedule {
    Kernel(KernelSchedule),
    Restart(RestartSchedule),
}

impl StepSchedule for Schedule {
    fn next_candidate(&mut self) -> f64 {
        match self {
            Schedule::Kernel(s) => s.next_candidate(),
            Schedule::Restart(s) => s.next_candidate(),
        }
    }

    fn complete_outer_iteration(&mut self) -> bool {
        match self {
            Schedule::Kernel(s) => s.complete_outer_iteration(),
            Schedule::Restart(s) => s.complete_outer_iteration(),
        }
    }

    fn series_upper_bound(&self) -> f64 {
        match self {
            Schedule::Kernel(s) => s.series_upper_bound(),
            Schedule::Restart(s) => s.series_upper_bound(),
        }
    }

    fn largest_future_step(&self) -> f64 {
        match self {
            Schedule::Kernel(s) => s.largest_future_step(),
            Schedule::Restart(s) => s.largest_future_step(),
        }
    }
}

/// Serialized form: `{"alpha": 0.99, "c": 100, "window": 20}`, where
/// `window` is an integer, a list of integers or `"none"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub alpha: f64,
    #[serde(default = "default_scale")]
    pub c: f64,
    #[serde(default)]
    pub window: WindowSpec,
}

fn default_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WindowSpec {
    Every(u64),
    Sequence(Vec<u64>),
    #[default]
    #[serde(with = "none_keyword")]
    None,
}

mod none_keyword {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("none")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let s = String::deserialize(d)?;
        if s == "none" {
            Ok(())
        } else {
            Err(D::Error::custom(format!("expected \"none\", got {s:?}")))
        }
    }
}

impl ScheduleConfig {
    pub fn kernel(alpha: f64, c: f64) -> Self {
        Self {
            alpha,
            c,
            window: WindowSpec::None,
        }
    }

    pub fn restarts(alpha: f64, c: f64, window: u64) -> Self {
        Self {
            alpha,
            c,
            window: WindowSpec::Every(window),
        }
    }

    pub fn build(&self) -> Result<Schedule> {
        let base = KernelSchedule::new(self.alpha, self.c)?;
        Ok(match &self.window {
            WindowSpec::None => Schedule::Kernel(base),
            WindowSpec::Every(w) => Schedule::Restart(RestartSchedule::new(base, Windows::Constant(*w))?),
            WindowSpec::Sequence(ws) => Schedule::Restart(RestartSchedule::new(base, Windows::Sequence(ws.clone()))?),
        })
    }
}
