//! Interferometer optics: geometry, rendering, visibility and data export.

pub mod export;
pub mod geometry;
pub mod render;

pub use geometry::{
    beam_state_from_angles, misalignment_metrics, visibility_analytic, BeamState, Control,
    Geometry, Misalignment, MirrorAngles,
};
pub use render::{
    observation_visibility, render_frame, render_observation, render_observation_into,
    visibility_from_totals, visibility_numeric, Camera, FieldPlan, Frame, Observation,
    SATURATION_INTENSITY,
};
