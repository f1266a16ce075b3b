//! Interferometer geometry, mirror angles and the hidden beam state.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// One of the four actuated deflections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Control {
    Mirror1X,
    Mirror1Y,
    Bs2X,
    Bs2Y,
}

impl Control {
    pub const ALL: [Control; 4] = [
        Control::Mirror1X,
        Control::Mirror1Y,
        Control::Bs2X,
        Control::Bs2Y,
    ];
}

/// Deflections (rad) of mirror 1 and beam splitter 2 in the horizontal and
/// vertical planes, relative to the nominal 90° reflection.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MirrorAngles<T> {
    pub a1x: T,
    pub a1y: T,
    pub a2x: T,
    pub a2y: T,
}

impl<T: Real> MirrorAngles<T> {
    pub fn new(a1x: T, a1y: T, a2x: T, a2y: T) -> Self {
        Self { a1x, a1y, a2x, a2y }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero(), T::zero())
    }

    pub fn get(&self, control: Control) -> T {
        match control {
            Control::Mirror1X => self.a1x,
            Control::Mirror1Y => self.a1y,
            Control::Bs2X => self.a2x,
            Control::Bs2Y => self.a2y,
        }
    }

    pub fn get_mut(&mut self, control: Control) -> &mut T {
        match control {
            Control::Mirror1X => &mut self.a1x,
            Control::Mirror1Y => &mut self.a1y,
            Control::Bs2X => &mut self.a2x,
            Control::Bs2Y => &mut self.a2y,
        }
    }

    pub fn scale(&self, s: T) -> Self {
        Self::new(self.a1x * s, self.a1y * s, self.a2x * s, self.a2y * s)
    }

    /// Clamps every angle into `[-limit, +limit]` of its control.
    pub fn clamped(&self, limits: &MirrorAngles<T>) -> Self {
        let mut out = *self;
        for c in Control::ALL {
            let lim = limits.get(c);
            let v = out.get_mut(c);
            *v = v.max(-lim).min(lim);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        Control::ALL.iter().all(|&c| self.get(c).is_finite())
    }
}

/// Interferometer dimensions (mm), laser wavelength (mm), nominal beam radius
/// (mm) and the per-control angle range (rad).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Real + Deserialize<'de>"))]
pub struct Geometry<T> {
    pub a: T,
    pub b: T,
    pub c: T,
    pub wavelength: T,
    pub beam_radius: T,
    pub angle_limits: MirrorAngles<T>,
}

impl<T: Real> Default for Geometry<T> {
    fn default() -> Self {
        Self {
            a: T::lit(200.0),
            b: T::lit(300.0),
            c: T::lit(100.0),
            wavelength: T::lit(635e-6),
            beam_radius: T::lit(0.95),
            angle_limits: MirrorAngles::new(
                T::lit(5.2e-3),
                T::lit(3.7e-3),
                T::lit(2.6e-3),
                T::lit(1.8e-3),
            ),
        }
    }
}

impl<T: Real> Geometry<T> {
    /// Wavenumber `2π/λ` in rad/mm.
    pub fn wavenumber(&self) -> T {
        T::TAU() / self.wavelength
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: T| {
            if v.is_finite() && v > T::zero() {
                Ok(())
            } else {
                Err(Error::Config(format!("geometry.{name} must be positive, got {v}")))
            }
        };
        positive("a", self.a)?;
        positive("b", self.b)?;
        positive("c", self.c)?;
        positive("wavelength", self.wavelength)?;
        positive("beam_radius", self.beam_radius)?;
        for c in Control::ALL {
            positive("angle_limits", self.angle_limits.get(c))?;
        }
        if self.wavelength * T::lit(10.0) >= self.beam_radius {
            return Err(Error::Config(
                "wavelength must be much smaller than the beam radius".into(),
            ));
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> Geometry<U> {
        let f = |v: T| U::lit(v.as_f64());
        Geometry {
            a: f(self.a),
            b: f(self.b),
            c: f(self.c),
            wavelength: f(self.wavelength),
            beam_radius: f(self.beam_radius),
            angle_limits: MirrorAngles::new(
                f(self.angle_limits.a1x),
                f(self.angle_limits.a1y),
                f(self.angle_limits.a2x),
                f(self.angle_limits.a2y),
            ),
        }
    }
}

/// Hidden state of the lower beam at the camera: center (mm), transverse
/// wavevector (rad/mm) and the beam radius in effect for this episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamState<T> {
    pub x0: T,
    pub y0: T,
    pub kx: T,
    pub ky: T,
    pub radius: T,
}

impl<T: Real> BeamState<T> {
    pub fn aligned(radius: T) -> Self {
        Self {
            x0: T::zero(),
            y0: T::zero(),
            kx: T::zero(),
            ky: T::zero(),
            radius,
        }
    }

    pub fn cast<U: Real>(&self) -> BeamState<U> {
        let f = |v: T| U::lit(v.as_f64());
        BeamState {
            x0: f(self.x0),
            y0: f(self.y0),
            kx: f(self.kx),
            ky: f(self.ky),
            radius: f(self.radius),
        }
    }
}

/// Maps mount deflections to the lower beam's position and direction at the
/// camera, assuming the beam enters mirror 1 on axis.
///
/// `k/|k| = α₁ + α₂` per plane; the center moves by `α₂·c + α₁·(a + c)`.
pub fn beam_state_from_angles<T: Real>(
    angles: &MirrorAngles<T>,
    geom: &Geometry<T>,
    radius: T,
) -> BeamState<T> {
    let k = geom.wavenumber();
    let lever1 = geom.a + geom.c;
    BeamState {
        x0: angles.a2x * geom.c + angles.a1x * lever1,
        y0: angles.a2y * geom.c + angles.a1y * lever1,
        kx: k * (angles.a1x + angles.a2x),
        ky: k * (angles.a1y + angles.a2y),
        radius,
    }
}

/// Closed-form fringe visibility of two equal Gaussian beams, one on axis
/// and one displaced by `(x0, y0)` and tilted by `(kx, ky)`.
pub fn visibility_analytic<T: Real>(state: &BeamState<T>) -> T {
    let r2 = state.radius * state.radius;
    let d2 = state.x0 * state.x0 + state.y0 * state.y0;
    let k2 = state.kx * state.kx + state.ky * state.ky;
    (-(d2 / (T::lit(2.0) * r2))).exp() * (-(k2 * r2 / T::lit(8.0))).exp()
}

/// Beam separation and inter-beam angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Misalignment<T> {
    pub distance_mm: T,
    pub angle_mrad: T,
}

pub fn misalignment_metrics<T: Real>(state: &BeamState<T>, wavenumber: T) -> Misalignment<T> {
    Misalignment {
        distance_mm: state.x0.hypot(state.y0),
        angle_mrad: state.kx.hypot(state.ky) / wavenumber * T::lit(1e3),
    }
}
