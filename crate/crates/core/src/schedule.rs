//! Noise level `gamma`, resampling level `lambda`, and the discrete time grid.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Noise schedule `gamma: [0, 1] -> [0, 1]` with `gamma(0) = 1` (data) and
/// `gamma(1) = 0` (prior).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GammaSchedule {
    /// `gamma(t) = 1 - t`.
    #[default]
    Linear,
}

impl GammaSchedule {
    pub fn name(&self) -> &'static str {
        match self {
            GammaSchedule::Linear => "linear",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "linear" => Some(GammaSchedule::Linear),
            _ => None,
        }
    }

    /// `gamma(t)`. Exact at both endpoints.
    pub fn gamma_at(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(match self {
            GammaSchedule::Linear => 1.0 - t,
        })
    }

    /// Retention ratio `gamma_{s|t} = (1 - gamma(s)) / (1 - gamma(t))` for `s < t`.
    pub fn gamma_cond(&self, s: f64, t: f64) -> Result<f64> {
        check_time(s)?;
        check_time(t)?;
        if t == 0.0 {
            return Err(Error::Singularity("gamma_{s|t} is undefined at t = 0"));
        }
        if s >= t {
            return Err(Error::Domain("gamma_{s|t} requires s < t"));
        }
        gamma_cond_from_levels(self.gamma_at(s)?, self.gamma_at(t)?)
    }
}

/// `(1 - gamma_s) / (1 - gamma_t)` from noise levels, clamped to `[0, 1]`.
pub fn gamma_cond_from_levels(gamma_s: f64, gamma_t: f64) -> Result<f64> {
    check_level(gamma_s)?;
    check_level(gamma_t)?;
    let denom = 1.0 - gamma_t;
    if denom <= 0.0 {
        return Err(Error::Singularity("1 - gamma_t = 0"));
    }
    if gamma_s < gamma_t {
        return Err(Error::Ordering("gamma_s must not be below gamma_t"));
    }
    Ok(((1.0 - gamma_s) / denom).clamp(0.0, 1.0))
}

fn check_time(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::Domain("time must lie in [0, 1]"))
    }
}

fn check_level(g: f64) -> Result<()> {
    if (0.0..=1.0).contains(&g) {
        Ok(())
    } else {
        Err(Error::Domain("noise level must lie in [0, 1]"))
    }
}

/// Resampling ("forgetting") level `lambda(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaSchedule {
    Constant(f64),
    /// Linear interpolation from `at_zero` (t = 0) to `at_one` (t = 1).
    Ramp { at_zero: f64, at_one: f64 },
}

impl Default for LambdaSchedule {
    fn default() -> Self {
        LambdaSchedule::Constant(0.0)
    }
}

impl LambdaSchedule {
    pub fn constant(value: f64) -> Result<Self> {
        let s = LambdaSchedule::Constant(value);
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| (0.0..=1.0).contains(&v);
        let valid = match *self {
            LambdaSchedule::Constant(v) => ok(v),
            LambdaSchedule::Ramp { at_zero, at_one } => ok(at_zero) && ok(at_one),
        };
        if valid {
            Ok(())
        } else {
            Err(Error::Domain("lambda must lie in [0, 1]"))
        }
    }

    pub fn lambda_at(&self, t: f64) -> f64 {
        match *self {
            LambdaSchedule::Constant(v) => v,
            LambdaSchedule::Ramp { at_zero, at_one } => {
                let t = t.clamp(0.0, 1.0);
                ((1.0 - t) * at_zero + t * at_one).clamp(0.0, 1.0)
            }
        }
    }

    /// The value when the schedule does not depend on time.
    pub fn as_constant(&self) -> Option<f64> {
        match *self {
            LambdaSchedule::Constant(v) => Some(v),
            LambdaSchedule::Ramp { at_zero, at_one } if at_zero == at_one => Some(at_zero),
            LambdaSchedule::Ramp { .. } => None,
        }
    }
}

/// Ascending time grid `0 = t(0) < t(1) < ... < t(T) = 1` with
/// `t(i) = (i / T)^rho`. Generation walks it from `t(T)` down to `t(0)`, so
/// `rho > 1` places more reverse steps near the final sample.
#[derive(Debug, Clone, PartialEq)]
pub struct StepGrid {
    rho: f64,
    times: Vec<f64>,
}

impl StepGrid {
    pub fn new(steps: usize, rho: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Domain("step count must be positive"));
        }
        if !rho.is_finite() || rho < 1.0 {
            return Err(Error::Domain("rho must be finite and >= 1"));
        }
        let n = steps as f64;
        let times: Vec<f64> = (0..=steps)
            .map(|i| {
                let u = i as f64 / n;
                if rho == 1.0 {
                    u
                } else {
                    libm::pow(u, rho)
                }
            })
            .collect();
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain("grid is not strictly increasing at this resolution"));
        }
        debug_assert_eq!(times[0], 0.0);
        debug_assert_eq!(times[steps], 1.0);
        Ok(Self { rho, times })
    }

    /// Number of reverse steps `T`.
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// `t(i)` for `i` in `0..=T`.
    pub fn time(&self, i: usize) -> f64 {
        self.times[i]
    }

    /// `(s, t) = (t(i-1), t(i))` for reverse step `i` in `1..=T`.
    pub fn step_bounds(&self, i: usize) -> (f64, f64) {
        (self.times[i - 1], self.times[i])
    }
}

/// Shorthand for [`StepGrid::new`].
pub fn build_grid(steps: usize, rho: f64) -> Result<StepGrid> {
    StepGrid::new(steps, rho)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_gamma_values() {
        let g = GammaSchedule::Linear;
        assert_eq!(g.gamma_at(0.0).unwrap().to_bits(), 1.0f64.to_bits());
        assert_eq!(g.gamma_at(1.0).unwrap().to_bits(), 0.0f64.to_bits());
        assert_eq!(g.gamma_at(0.25).unwrap(), 0.75);
        assert!(matches!(g.gamma_at(1.5), Err(Error::Domain(_))));
        assert!(matches!(g.gamma_at(-0.1), Err(Error::Domain(_))));
        assert!(g.gamma_at(f64::NAN).is_err());
    }

    #[test]
    fn gamma_monotone_on_dense_grid() {
        let g = GammaSchedule::Linear;
        let vals: Vec<f64> = (0..=10_000)
            .map(|i| g.gamma_at(i as f64 / 10_000.0).unwrap())
            .collect();
        assert!(vals.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn gamma_cond_examples() {
        let g = GammaSchedule::Linear;
        assert_eq!(g.gamma_cond(0.25, 0.5).unwrap(), 0.5);
        assert_eq!(g.gamma_cond(0.0, 0.37).unwrap(), 0.0);
        let near = g.gamma_cond(0.5 - 1e-9, 0.5).unwrap();
        assert!((near - 1.0).abs() < 1e-8 && near <= 1.0);
        assert!(matches!(g.gamma_cond(0.5, 0.5), Err(Error::Domain(_))));
        assert!(matches!(g.gamma_cond(0.6, 0.5), Err(Error::Domain(_))));
        assert!(matches!(g.gamma_cond(0.0, 0.0), Err(Error::Singularity(_))));
    }

    #[test]
    fn grid_examples() {
        assert_eq!(build_grid(4, 1.0).unwrap().times(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(build_grid(2, 2.0).unwrap().times(), &[0.0, 0.25, 1.0]);
        for rho in [1.0, 2.5, 7.0] {
            assert_eq!(build_grid(1, rho).unwrap().times(), &[0.0, 1.0]);
        }
        assert!(matches!(build_grid(0, 1.0), Err(Error::Domain(_))));
        assert!(build_grid(3, 0.5).is_err());
        assert!(build_grid(3, f64::INFINITY).is_err());
    }

    #[test]
    fn grid_strict_for_large_t_and_rho() {
        for &rho in &[1.0, 2.0, 4.0, 8.0] {
            let g = build_grid(10_000, rho).unwrap();
            assert_eq!(g.steps(), 10_000);
            assert_eq!(g.time(0), 0.0);
            assert_eq!(g.time(10_000), 1.0);
            assert!(g.times().windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn lambda_schedules() {
        assert!(LambdaSchedule::constant(1.2).is_err());
        let c = LambdaSchedule::constant(0.3).unwrap();
        assert_eq!(c.lambda_at(0.9), 0.3);
        assert_eq!(c.as_constant(), Some(0.3));
        let r = LambdaSchedule::Ramp { at_zero: 0.0, at_one: 1.0 };
        assert_eq!(r.lambda_at(0.25), 0.25);
        assert_eq!(r.as_constant(), None);
    }
}
