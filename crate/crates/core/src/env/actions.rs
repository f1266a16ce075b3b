//! The discrete action set: ±{1, 5, 10}% of the angle range on each of the
//! four controls, plus a no-op.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::{Control, MirrorAngles};
use crate::scalar::Real;

pub const ACTION_COUNT: usize = 25;
pub const NOOP: usize = 0;

/// Step sizes as fractions of the control's angle range, smallest first.
pub const MAGNITUDES: [f64; 3] = [0.01, 0.05, 0.1];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    None,
    Mirror1,
    Bs2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    None,
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    None,
    Plus,
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub id: usize,
    pub target: Target,
    pub axis: Axis,
    pub sign: Sign,
    /// Fraction of the angle range; `None` for the no-op.
    pub magnitude_fraction: Option<f64>,
}

impl ActionSpec {
    pub fn is_noop(&self) -> bool {
        self.target == Target::None
    }

    pub fn control(&self) -> Option<Control> {
        match (self.target, self.axis) {
            (Target::Mirror1, Axis::X) => Some(Control::Mirror1X),
            (Target::Mirror1, Axis::Y) => Some(Control::Mirror1Y),
            (Target::Bs2, Axis::X) => Some(Control::Bs2X),
            (Target::Bs2, Axis::Y) => Some(Control::Bs2Y),
            _ => None,
        }
    }

    /// Angle change produced by this action given the per-control ranges.
    pub fn delta<T: Real>(&self, limits: &MirrorAngles<T>) -> MirrorAngles<T> {
        let mut d = MirrorAngles::zero();
        if let (Some(control), Some(frac)) = (self.control(), self.magnitude_fraction) {
            let sign = if self.sign == Sign::Minus { -T::one() } else { T::one() };
            *d.get_mut(control) = sign * T::lit(frac) * limits.get(control);
        }
        d
    }

    /// Step size in units of the angle range (0 for the no-op).
    pub fn magnitude(&self) -> f64 {
        self.magnitude_fraction.unwrap_or(0.0)
    }
}

/// All 25 actions. Id 0 is the no-op; ids 1..=24 run target-major, then
/// axis, then sign (+ before −), then magnitude (small to large).
pub fn action_table() -> [ActionSpec; ACTION_COUNT] {
    let mut table = [ActionSpec {
        id: NOOP,
        target: Target::None,
        axis: Axis::None,
        sign: Sign::None,
        magnitude_fraction: None,
    }; ACTION_COUNT];
    let mut id = 1;
    for target in [Target::Mirror1, Target::Bs2] {
        for axis in [Axis::X, Axis::Y] {
            for sign in [Sign::Plus, Sign::Minus] {
                for m in MAGNITUDES {
                    table[id] = ActionSpec {
                        id,
                        target,
                        axis,
                        sign,
                        magnitude_fraction: Some(m),
                    };
                    id += 1;
                }
            }
        }
    }
    table
}

pub fn action_spec(id: usize) -> Result<ActionSpec> {
    action_table()
        .get(id)
        .copied()
        .ok_or(Error::InvalidAction(id))
}

/// Inverse of [`action_table`] ordering.
pub fn action_id(target: Target, axis: Axis, sign: Sign, magnitude_index: usize) -> Option<usize> {
    let t = match target {
        Target::Mirror1 => 0,
        Target::Bs2 => 1,
        Target::None => return None,
    };
    let a = match axis {
        Axis::X => 0,
        Axis::Y => 1,
        Axis::None => return None,
    };
    let s = match sign {
        Sign::Plus => 0,
        Sign::Minus => 1,
        Sign::None => return None,
    };
    (magnitude_index < MAGNITUDES.len()).then(|| 1 + ((t * 2 + a) * 2 + s) * 3 + magnitude_index)
}
