//! On-disk model description (TOML).
//!
//! Link lengths, body masses and COM offsets are not published for the
//! reference robot; the defaults below describe a toy-poodle-sized robot
//! (4 kg, 1.2/1.6/1.2 kg split) and can be overridden in a model file.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::box_inertia;

/// `[omega_max rad/s, tau_max N·m, theta_min rad, theta_max rad]`.
pub type ActuatorRow = [f64; 4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub nominal_height: f64,
    pub motor: MotorConfig,
    pub actuators: ActuatorTable,
    pub gear_ratios: GearRatios,
    pub bodies: BodiesConfig,
    pub spine: SpineConfig,
    pub legs: LegConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotorConfig {
    /// Motor speed constant in rpm per volt.
    pub kv_rpm: f64,
    /// Winding resistance, ohms.
    pub winding_resistance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActuatorTable {
    pub spine_pitch: ActuatorRow,
    pub spine_yaw: ActuatorRow,
    pub hip_roll_left: ActuatorRow,
    pub hip_roll_right: ActuatorRow,
    pub hip_pitch: ActuatorRow,
    pub knee_pitch: ActuatorRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GearRatios {
    pub spine_pitch: f64,
    pub spine_yaw: f64,
    pub hip_roll: f64,
    pub hip_pitch: f64,
    pub knee_pitch: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodiesConfig {
    pub middle: BodyConfig,
    pub front: BodyConfig,
    pub back: BodyConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyConfig {
    pub mass: f64,
    /// Inertia about the COM in the body frame, row-major.
    pub inertia: [[f64; 3]; 3],
    /// COM offset from the body frame origin (the spine joint for the front
    /// and back bodies, the COM itself for the middle body).
    pub com: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpineConfig {
    /// Front universal-joint position in the middle-body frame.
    pub front_joint: [f64; 3],
    /// Rear universal-joint position in the middle-body frame.
    pub rear_joint: [f64; 3],
    pub fy_axis: [f64; 3],
    pub fz_axis: [f64; 3],
    pub ry_axis: [f64; 3],
    pub rz_axis: [f64; 3],
}

/// Left-side leg geometry; right legs are mirrored in y.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LegConfig {
    /// Front hip-roll joint in the front-body frame.
    pub front_mount: [f64; 3],
    /// Rear hip-roll joint in the back-body frame.
    pub rear_mount: [f64; 3],
    pub v0: [f64; 3],
    pub v1: [f64; 3],
    pub v2: [f64; 3],
}

impl Default for ModelConfig {
    fn default() -> Self {
        let spine = PI / 12.0;
        Self {
            nominal_height: 0.18,
            motor: MotorConfig { kv_rpm: 270.0, winding_resistance: 0.27 },
            actuators: ActuatorTable {
                spine_pitch: [46.875, 4.32, -spine, spine],
                spine_yaw: [83.333, 2.43, -spine, spine],
                hip_roll_left: [83.333, 2.43, -PI / 18.0, PI / 4.0],
                hip_roll_right: [83.333, 2.43, -PI / 4.0, PI / 18.0],
                hip_pitch: [46.875, 4.32, -3.0 * PI / 4.0, 3.0 * PI / 4.0],
                knee_pitch: [46.875, 4.32, -4.0 * PI / 5.0, 4.0 * PI / 5.0],
            },
            gear_ratios: GearRatios {
                spine_pitch: 16.0,
                spine_yaw: 9.0,
                hip_roll: 9.0,
                hip_pitch: 16.0,
                knee_pitch: 16.0,
            },
            bodies: BodiesConfig {
                middle: BodyConfig {
                    mass: 1.6,
                    inertia: box_inertia(1.6, [0.16, 0.12, 0.06]),
                    com: [0.0, 0.0, 0.0],
                },
                front: BodyConfig {
                    mass: 1.2,
                    inertia: box_inertia(1.2, [0.12, 0.12, 0.06]),
                    com: [0.06, 0.0, 0.0],
                },
                back: BodyConfig {
                    mass: 1.2,
                    inertia: box_inertia(1.2, [0.12, 0.12, 0.06]),
                    com: [-0.06, 0.0, 0.0],
                },
            },
            spine: SpineConfig {
                front_joint: [0.08, 0.0, 0.0],
                rear_joint: [-0.08, 0.0, 0.0],
                fy_axis: [0.0, 1.0, 0.0],
                fz_axis: [0.0, 0.0, 1.0],
                // Mirrored so that equal pitch angles bend both ends the same way.
                ry_axis: [0.0, -1.0, 0.0],
                rz_axis: [0.0, 0.0, 1.0],
            },
            legs: LegConfig {
                front_mount: [0.06, 0.05, 0.0],
                rear_mount: [-0.06, 0.05, 0.0],
                v0: [0.0, 0.03, 0.0],
                v1: [0.0, 0.0, -0.11],
                v2: [0.0, 0.0, -0.11],
            },
        }
    }
}
