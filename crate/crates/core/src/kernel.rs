//! Collision geometry and the bounded, compactly supported cross-section.
//!
//! The pair transform reflects the relative velocity along the scattering
//! vector `omega`:
//!
//! ```text
//! v_i' = v_i - omega [(v_i - v_j) . omega]
//! v_j' = v_j + omega [(v_i - v_j) . omega]
//! ```
//!
//! It conserves momentum and energy, preserves the relative speed, is
//! invariant under `omega -> -omega` and is an involution for fixed `omega`.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::vec3::Vec3;

/// Tolerance on `|omega| - 1` accepted by [`collide`].
pub const UNIT_TOLERANCE: f64 = 1e-12;

/// Post-collision velocities for the pair `(v_i, v_j)` and scattering vector `omega`.
///
/// # Panics
///
/// Panics when `omega` is not a unit vector to within [`UNIT_TOLERANCE`].
#[inline]
pub fn collide(v_i: Vec3, v_j: Vec3, omega: Vec3) -> (Vec3, Vec3) {
    assert!(
        (omega.norm() - 1.0).abs() <= UNIT_TOLERANCE,
        "scattering vector must be a unit vector, |omega| = {}",
        omega.norm()
    );
    collide_unchecked(v_i, v_j, omega)
}

#[inline]
pub(crate) fn collide_unchecked(v_i: Vec3, v_j: Vec3, omega: Vec3) -> (Vec3, Vec3) {
    let transfer = omega * (v_i - v_j).dot(omega);
    (v_i - transfer, v_j + transfer)
}

/// Draws a scattering vector uniformly on the unit sphere.
pub fn sample_omega<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    let [x, y, z]: [f64; 3] = UnitSphere.sample(rng);
    Vec3::new(x, y, z).normalized()
}

/// User-supplied kernel shape `B(v_rel, omega)`.
///
/// The evaluator still applies the cutoff `m_cut` and clips the value into
/// `[0, b0]`, so the thinning bound used by the particle process holds for
/// any closure. Closures should depend on `v_rel` only through `|v_rel|`
/// (and on the angle between `v_rel` and `omega`); that is not checked.
///
/// The quantum Born cross-section fits here only after an artificial
/// velocity cutoff: it is continuous but not compactly supported.
#[derive(Clone)]
pub struct CustomKernel {
    pub name: String,
    pub eval: Arc<dyn Fn(Vec3, Vec3) -> f64 + Send + Sync>,
}

impl fmt::Debug for CustomKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomKernel")
            .field("name", &self.name)
            .finish()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelForm {
    /// `b0 * max(0, 1 - |v| / m_cut)`, independent of `omega`.
    SmoothRamp,
    #[serde(skip)]
    Custom(CustomKernel),
}

impl KernelForm {
    pub fn name(&self) -> &str {
        match self {
            KernelForm::SmoothRamp => "smooth_ramp",
            KernelForm::Custom(c) => &c.name,
        }
    }
}

/// Cross-section `B(v; omega)` with amplitude `b0` (also its sup bound) and cutoff radius `m_cut`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossSectionSpec {
    pub b0: f64,
    pub m_cut: f64,
    pub form: KernelForm,
}

impl CrossSectionSpec {
    pub fn smooth_ramp(b0: f64, m_cut: f64) -> Self {
        Self {
            b0,
            m_cut,
            form: KernelForm::SmoothRamp,
        }
    }

    pub fn custom(
        b0: f64,
        m_cut: f64,
        name: impl Into<String>,
        eval: impl Fn(Vec3, Vec3) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            b0,
            m_cut,
            form: KernelForm::Custom(CustomKernel {
                name: name.into(),
                eval: Arc::new(eval),
            }),
        }
    }

    /// A zero amplitude is allowed: it switches the dynamics off.
    pub fn validate(&self) -> crate::Result<()> {
        if !(self.b0 >= 0.0 && self.b0.is_finite()) {
            return Err(crate::Error::config(format!(
                "kernel.b0 must be finite and >= 0, got {}",
                self.b0
            )));
        }
        if !(self.m_cut > 0.0 && self.m_cut.is_finite()) {
            return Err(crate::Error::config(format!(
                "kernel.m_cut must be finite and > 0, got {}",
                self.m_cut
            )));
        }
        Ok(())
    }

    /// Upper bound on `B` used as the thinning majorant.
    #[inline]
    pub fn c1(&self) -> f64 {
        self.b0
    }

    /// Whether `B` is independent of `omega`.
    pub fn is_isotropic(&self) -> bool {
        matches!(self.form, KernelForm::SmoothRamp)
    }

    /// Kernel value as a function of the relative speed, for isotropic kernels.
    #[inline]
    pub fn ramp(&self, speed: f64) -> f64 {
        self.b0 * (1.0 - speed / self.m_cut).max(0.0)
    }
}

/// Evaluates `B(v_rel; omega)`.
#[inline]
pub fn eval_kernel(spec: &CrossSectionSpec, v_rel: Vec3, omega: Vec3) -> f64 {
    match &spec.form {
        KernelForm::SmoothRamp => spec.ramp(v_rel.norm()),
        KernelForm::Custom(c) => {
            if v_rel.norm() > spec.m_cut {
                0.0
            } else {
                (c.eval)(v_rel, omega).clamp(0.0, spec.b0)
            }
        }
    }
}
