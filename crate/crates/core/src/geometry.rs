//! Model warped products and their boundary flux density.

use std::f64::consts::PI;

use thiserror::Error;

use crate::profile::{EvalError, ProfileExpr};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("base dimension must be at least 1, got {0}")]
    BaseDimension(u32),
    #[error("fiber volume must be positive and finite, got {0}")]
    FiberVolume(f64),
    #[error("inner radius must be positive and finite, got {0}")]
    InnerRadius(f64),
    #[error("{which} is not positive at t = {t}")]
    NonPositiveProfile { which: &'static str, t: f64 },
    #[error("{which} cannot be evaluated: {source}")]
    Profile {
        which: &'static str,
        #[source]
        source: EvalError,
    },
}

/// Area of the unit `k`-sphere in `R^{k+1}`, `2 pi^{(k+1)/2} / Gamma((k+1)/2)`.
///
/// `sphere_area(0) = 2` counts the two endpoints of `[-1, 1]`.
pub fn sphere_area(k: u32) -> f64 {
    ln_sphere_area(k).exp()
}

pub fn ln_sphere_area(k: u32) -> f64 {
    let m = k + 1;
    std::f64::consts::LN_2 + 0.5 * f64::from(m) * PI.ln() - ln_gamma_half(m)
}

/// `ln Gamma(m / 2)` for a positive integer `m`, by the exact recurrence
/// from `Gamma(1) = 1` and `Gamma(1/2) = sqrt(pi)`.
fn ln_gamma_half(m: u32) -> f64 {
    let (mut acc, mut x) = if m.is_multiple_of(2) {
        (0.0, 1.0)
    } else {
        (0.5 * PI.ln(), 0.5)
    };
    while x < 0.5 * f64::from(m) {
        acc += x.ln();
        x += 1.0;
    }
    acc
}

/// `M = N x_f L` with a rotationally symmetric base.
///
/// The base boundary sphere `dB_t` has area `omega_{n-1} sigma(t)^{n-1}`;
/// the fiber contributes `vol(L) f(t)^l`. A zero-dimensional fiber ignores
/// the warp entirely, and `fiber_volume` then counts its points.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelManifold {
    base_dim: u32,
    base_profile: ProfileExpr,
    warp: ProfileExpr,
    fiber_dim: u32,
    fiber_volume: f64,
    inner_radius: f64,
}

/// Spot-check points for profile positivity: dense near the core, then
/// geometric out to `1e16` times the inner radius.
fn sample_grid(r0: f64) -> impl Iterator<Item = f64> {
    let near = (0..=16).map(move |k| r0 * (1.0 + f64::from(k) / 4.0));
    let far = (1..=64).map(move |k| r0 * 10f64.powf(f64::from(k) / 4.0));
    near.chain(far)
}

impl ModelManifold {
    pub fn new(
        base_dim: u32,
        base_profile: ProfileExpr,
        warp: ProfileExpr,
        fiber_dim: u32,
        fiber_volume: f64,
    ) -> Result<Self, ModelError> {
        Self::with_inner_radius(base_dim, base_profile, warp, fiber_dim, fiber_volume, 1.0)
    }

    pub fn with_inner_radius(
        base_dim: u32,
        base_profile: ProfileExpr,
        warp: ProfileExpr,
        fiber_dim: u32,
        fiber_volume: f64,
        inner_radius: f64,
    ) -> Result<Self, ModelError> {
        if base_dim == 0 {
            return Err(ModelError::BaseDimension(base_dim));
        }
        if !(fiber_volume.is_finite() && fiber_volume > 0.0) {
            return Err(ModelError::FiberVolume(fiber_volume));
        }
        if !(inner_radius.is_finite() && inner_radius > 0.0) {
            return Err(ModelError::InnerRadius(inner_radius));
        }
        check_positive("sigma", &base_profile, inner_radius)?;
        if fiber_dim > 0 {
            check_positive("warp", &warp, inner_radius)?;
        }
        Ok(ModelManifold {
            base_dim,
            base_profile,
            warp,
            fiber_dim,
            fiber_volume,
            inner_radius,
        })
    }

    /// Flat `R^n`: `sigma = t`, trivial fiber.
    pub fn euclidean(n: u32) -> Result<Self, ModelError> {
        Self::new(n, ProfileExpr::Var, ProfileExpr::Const(1.0), 0, 1.0)
    }

    /// Hyperbolic space `H^n`: `sigma = sinh t`, trivial fiber.
    pub fn hyperbolic(n: u32) -> Result<Self, ModelError> {
        Self::new(
            n,
            ProfileExpr::call(crate::profile::Func::Sinh, ProfileExpr::Var),
            ProfileExpr::Const(1.0),
            0,
            1.0,
        )
    }

    pub fn base_dim(&self) -> u32 {
        self.base_dim
    }

    pub fn base_profile(&self) -> &ProfileExpr {
        &self.base_profile
    }

    pub fn warp(&self) -> &ProfileExpr {
        &self.warp
    }

    pub fn fiber_dim(&self) -> u32 {
        self.fiber_dim
    }

    pub fn fiber_volume(&self) -> f64 {
        self.fiber_volume
    }

    pub fn inner_radius(&self) -> f64 {
        self.inner_radius
    }

    pub fn flux_density(&self) -> FluxDensity<'_> {
        FluxDensity { model: self }
    }

    /// `f(t)^l omega_{n-1} sigma(t)^{n-1}`, the boundary integral of `f^l`
    /// over `dB_t`.
    pub fn criterion_inner(&self, t: f64) -> Result<f64, EvalError> {
        let fx = self.flux_density().factors(t)?;
        Ok(fx.warp_power * fx.base_area)
    }

    pub fn log_criterion_inner(&self, t: f64) -> Result<f64, EvalError> {
        let fx = self.flux_density().log_factors(t)?;
        Ok(fx.warp_power + fx.base_area)
    }

    /// Copies of this model with the warp, base profile or fiber volume
    /// multiplied by a positive constant.
    pub fn with_scaled_warp(&self, c: f64) -> Result<Self, ModelError> {
        let mut m = self.clone();
        m.warp = self.warp.scaled(c);
        Self::revalidate(m)
    }

    pub fn with_scaled_profile(&self, c: f64) -> Result<Self, ModelError> {
        let mut m = self.clone();
        m.base_profile = self.base_profile.scaled(c);
        Self::revalidate(m)
    }

    pub fn with_fiber_volume(&self, vol: f64) -> Result<Self, ModelError> {
        let mut m = self.clone();
        m.fiber_volume = vol;
        Self::revalidate(m)
    }

    fn revalidate(m: Self) -> Result<Self, ModelError> {
        Self::with_inner_radius(
            m.base_dim,
            m.base_profile,
            m.warp,
            m.fiber_dim,
            m.fiber_volume,
            m.inner_radius,
        )
    }
}

pub(crate) fn check_positive(
    which: &'static str,
    e: &ProfileExpr,
    r0: f64,
) -> Result<(), ModelError> {
    for t in sample_grid(r0) {
        match e.eval_log(t) {
            Ok(_) => {}
            Err(EvalError::NonPositive { t }) => {
                return Err(ModelError::NonPositiveProfile { which, t })
            }
            Err(source) => return Err(ModelError::Profile { which, source }),
        }
    }
    Ok(())
}

/// The three factors of `S(t)`, either linear or as logarithms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxFactors {
    pub fiber_volume: f64,
    /// `f(t)^l`
    pub warp_power: f64,
    /// `omega_{n-1} sigma(t)^{n-1}`
    pub base_area: f64,
}

/// `S(t) = vol(L) f(t)^l omega_{n-1} sigma(t)^{n-1}`, the boundary volume of
/// `D_t = B_t x_f L`.
#[derive(Debug, Clone, Copy)]
pub struct FluxDensity<'a> {
    model: &'a ModelManifold,
}

impl<'a> FluxDensity<'a> {
    pub fn model(&self) -> &'a ModelManifold {
        self.model
    }

    pub fn factors(&self, t: f64) -> Result<FluxFactors, EvalError> {
        let m = self.model;
        let warp_power = if m.fiber_dim == 0 {
            1.0
        } else {
            m.warp.eval(t)?.powi(m.fiber_dim as i32)
        };
        let base_area = if m.base_dim == 1 {
            2.0
        } else {
            sphere_area(m.base_dim - 1) * m.base_profile.eval(t)?.powi(m.base_dim as i32 - 1)
        };
        Ok(FluxFactors {
            fiber_volume: m.fiber_volume,
            warp_power,
            base_area,
        })
    }

    pub fn log_factors(&self, t: f64) -> Result<FluxFactors, EvalError> {
        let m = self.model;
        let warp_power = if m.fiber_dim == 0 {
            0.0
        } else {
            f64::from(m.fiber_dim) * m.warp.eval_log(t)?
        };
        let base_area = if m.base_dim == 1 {
            std::f64::consts::LN_2
        } else {
            ln_sphere_area(m.base_dim - 1)
                + f64::from(m.base_dim - 1) * m.base_profile.eval_log(t)?
        };
        Ok(FluxFactors {
            fiber_volume: m.fiber_volume.ln(),
            warp_power,
            base_area,
        })
    }

    /// `S(t)` in linear form; overflows are reported, not saturated.
    pub fn value(&self, t: f64) -> Result<f64, EvalError> {
        let fx = self.factors(t)?;
        let s = fx.fiber_volume * fx.warp_power * fx.base_area;
        if s.is_finite() {
            Ok(s)
        } else {
            Err(EvalError::Overflow { t })
        }
    }

    pub fn log_value(&self, t: f64) -> Result<f64, EvalError> {
        let fx = self.log_factors(t)?;
        Ok(fx.fiber_volume + fx.warp_power + fx.base_area)
    }
}
