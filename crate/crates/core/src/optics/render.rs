//! Camera model and interference-pattern rendering.
//!
//! Both beams are Gaussian amplitude profiles `exp(-ρ²/r²)` with plane
//! wavefronts. The upper beam is on axis and carries the piezo phase; the
//! lower beam is displaced and tilted according to [`BeamState`]. Intensity
//! at a pixel is `|E₁ + E₂|² = A² + B² + 2AB·cos(θ − φ)` with `θ = kₓx + k_yy`,
//! so a phase sweep only needs three per-pixel coefficients, computed once per
//! state from separable row/column factors.

use serde::{Deserialize, Serialize};

use super::geometry::BeamState;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Peak intensity of two unit-amplitude beams in phase; maps to pixel value 1.
pub const SATURATION_INTENSITY: f64 = 4.0;

/// Square camera centered on the optical axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Real + Deserialize<'de>"))]
pub struct Camera<T> {
    pub n_pixels: usize,
    pub side_length: T,
    pub phase_count: usize,
}

impl<T: Real> Default for Camera<T> {
    /// 64×64 pixels over a 3.8 mm (4 nominal radii) field of view, 16 frames.
    fn default() -> Self {
        Self {
            n_pixels: 64,
            side_length: T::lit(3.8),
            phase_count: 16,
        }
    }
}

impl<T: Real> Camera<T> {
    pub fn validate(&self) -> Result<()> {
        if self.n_pixels < 2 {
            return Err(Error::Config(format!(
                "camera.n_pixels must be at least 2, got {}",
                self.n_pixels
            )));
        }
        if !(self.side_length.is_finite() && self.side_length > T::zero()) {
            return Err(Error::Config("camera.side_length must be positive".into()));
        }
        if self.phase_count < 2 {
            return Err(Error::Config("camera.phase_count must be at least 2".into()));
        }
        Ok(())
    }

    pub fn pixel_pitch(&self) -> T {
        self.side_length / T::from_usize_lossy(self.n_pixels)
    }

    /// Coordinate of the center of pixel `i` along either axis.
    pub fn pixel_center(&self, i: usize) -> T {
        let half = self.side_length / T::lit(2.0);
        -half + (T::from_usize_lossy(i) + T::lit(0.5)) * self.pixel_pitch()
    }

    pub fn cast<U: Real>(&self) -> Camera<U> {
        Camera {
            n_pixels: self.n_pixels,
            side_length: U::lit(self.side_length.as_f64()),
            phase_count: self.phase_count,
        }
    }
}

/// One grayscale image, row-major with rows along `y` and columns along `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame<T> {
    pub n_pixels: usize,
    pub pixels: Vec<T>,
}

impl<T: Real> Frame<T> {
    pub fn total(&self) -> T {
        self.pixels.iter().copied().sum()
    }

    pub fn at(&self, row: usize, col: usize) -> T {
        self.pixels[row * self.n_pixels + col]
    }
}

/// A stack of frames acquired over one piezo period, frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation<T> {
    pub n_frames: usize,
    pub n_pixels: usize,
    pub data: Vec<T>,
}

impl<T: Real> Observation<T> {
    pub fn zeros(n_frames: usize, n_pixels: usize) -> Self {
        Self {
            n_frames,
            n_pixels,
            data: vec![T::zero(); n_frames * n_pixels * n_pixels],
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.n_frames, self.n_pixels, self.n_pixels)
    }

    pub fn frame_len(&self) -> usize {
        self.n_pixels * self.n_pixels
    }

    pub fn frame(&self, t: usize) -> &[T] {
        let len = self.frame_len();
        &self.data[t * len..(t + 1) * len]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [T] {
        let len = self.frame_len();
        &mut self.data[t * len..(t + 1) * len]
    }

    pub fn to_frames(&self) -> Vec<Frame<T>> {
        (0..self.n_frames)
            .map(|t| Frame {
                n_pixels: self.n_pixels,
                pixels: self.frame(t).to_vec(),
            })
            .collect()
    }

    pub fn frame_totals(&self) -> Vec<T> {
        (0..self.n_frames)
            .map(|t| self.frame(t).iter().copied().sum())
            .collect()
    }
}

/// Per-pixel interference coefficients for one beam state on one camera.
///
/// `I(φ) = base + cos_coef·cos φ + sin_coef·sin φ`.
#[derive(Debug, Clone)]
pub struct FieldPlan<T> {
    n_pixels: usize,
    base: Vec<T>,
    cos_coef: Vec<T>,
    sin_coef: Vec<T>,
}

impl<T: Real> FieldPlan<T> {
    pub fn new(state: &BeamState<T>, camera: &Camera<T>) -> Self {
        let n = camera.n_pixels;
        let inv_r2 = T::one() / (state.radius * state.radius);
        let coords: Vec<T> = (0..n).map(|i| camera.pixel_center(i)).collect();

        // Separable factors along each axis.
        let upper: Vec<T> = coords.iter().map(|&u| (-(u * u) * inv_r2).exp()).collect();
        let lower = |c0: T| -> Vec<T> {
            coords
                .iter()
                .map(|&u| (-((u - c0) * (u - c0)) * inv_r2).exp())
                .collect()
        };
        let lower_x = lower(state.x0);
        let lower_y = lower(state.y0);
        let phase = |k: T| -> (Vec<T>, Vec<T>) {
            coords.iter().map(|&u| (k * u).sin_cos()).map(|(s, c)| (c, s)).unzip()
        };
        let (cx, sx) = phase(state.kx);
        let (cy, sy) = phase(state.ky);

        let two = T::lit(2.0);
        let len = n * n;
        let mut base = Vec::with_capacity(len);
        let mut cos_coef = Vec::with_capacity(len);
        let mut sin_coef = Vec::with_capacity(len);
        for row in 0..n {
            for col in 0..n {
                let a = upper[row] * upper[col];
                let b = lower_y[row] * lower_x[col];
                let cos_t = cx[col] * cy[row] - sx[col] * sy[row];
                let sin_t = sx[col] * cy[row] + cx[col] * sy[row];
                let ab2 = two * a * b;
                base.push(a * a + b * b);
                cos_coef.push(ab2 * cos_t);
                sin_coef.push(ab2 * sin_t);
            }
        }
        Self {
            n_pixels: n,
            base,
            cos_coef,
            sin_coef,
        }
    }

    pub fn n_pixels(&self) -> usize {
        self.n_pixels
    }

    /// Raw intensities `|E₁ + E₂|²` at piezo phase `phase`.
    pub fn intensity_into(&self, phase: T, out: &mut [T]) {
        let (s, c) = phase.sin_cos();
        for (((o, &b), &cc), &ss) in out
            .iter_mut()
            .zip(&self.base)
            .zip(&self.cos_coef)
            .zip(&self.sin_coef)
        {
            *o = b + cc * c + ss * s;
        }
    }

    /// Normalized pixel values `I / I_sat` clipped to `[0, 1]`.
    pub fn frame_into(&self, phase: T, out: &mut [T]) {
        let inv_sat = T::one() / T::lit(SATURATION_INTENSITY);
        self.intensity_into(phase, out);
        for v in out.iter_mut() {
            *v = (*v * inv_sat).max(T::zero()).min(T::one());
        }
    }

    /// Sum of both single-beam intensities over the grid (the phase-averaged total).
    pub fn incoherent_total(&self) -> T {
        self.base.iter().copied().sum()
    }
}

pub fn render_frame<T: Real>(state: &BeamState<T>, phase: T, camera: &Camera<T>) -> Frame<T> {
    let plan = FieldPlan::new(state, camera);
    let mut pixels = vec![T::zero(); camera.n_pixels * camera.n_pixels];
    plan.frame_into(phase, &mut pixels);
    Frame {
        n_pixels: camera.n_pixels,
        pixels,
    }
}

pub fn render_observation<T: Real>(
    state: &BeamState<T>,
    phases: &[T],
    camera: &Camera<T>,
) -> Result<Observation<T>> {
    let mut obs = Observation::zeros(camera.phase_count, camera.n_pixels);
    render_observation_into(state, phases, camera, &mut obs)?;
    Ok(obs)
}

/// Like [`render_observation`], reusing the caller's buffer.
pub fn render_observation_into<T: Real>(
    state: &BeamState<T>,
    phases: &[T],
    camera: &Camera<T>,
    obs: &mut Observation<T>,
) -> Result<()> {
    if phases.len() != camera.phase_count {
        return Err(Error::contract(format!(
            "expected {} phases, got {}",
            camera.phase_count,
            phases.len()
        )));
    }
    if obs.shape() != (camera.phase_count, camera.n_pixels, camera.n_pixels) {
        *obs = Observation::zeros(camera.phase_count, camera.n_pixels);
    }
    let plan = FieldPlan::new(state, camera);
    for (t, &phase) in phases.iter().enumerate() {
        plan.frame_into(phase, obs.frame_mut(t));
    }
    Ok(())
}

/// Contrast of the total power over a phase sweep, `(max − min)/(max + min)`.
pub fn visibility_from_totals<T: Real>(totals: &[T]) -> Result<T> {
    if totals.len() < 2 {
        return Err(Error::contract(format!(
            "visibility needs at least 2 frames, got {}",
            totals.len()
        )));
    }
    let max = totals.iter().copied().fold(T::neg_infinity(), T::max);
    let min = totals.iter().copied().fold(T::infinity(), T::min);
    if !(max > T::zero()) {
        return Err(Error::UndefinedVisibility);
    }
    Ok(((max - min) / (max + min)).max(T::zero()).min(T::one()))
}

pub fn visibility_numeric<T: Real>(frames: &[Frame<T>]) -> Result<T> {
    let totals: Vec<T> = frames.iter().map(Frame::total).collect();
    visibility_from_totals(&totals)
}

pub fn observation_visibility<T: Real>(obs: &Observation<T>) -> Result<T> {
    visibility_from_totals(&obs.frame_totals())
}
