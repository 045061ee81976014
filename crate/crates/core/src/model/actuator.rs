use std::f64::consts::PI;

use super::config::{ActuatorTable, GearRatios};
use super::{Leg, ModelError, RobotModel, N_JOINTS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActuatorClass {
    SpinePitch,
    SpineYaw,
    HipRollLeft,
    HipRollRight,
    HipPitch,
    KneePitch,
}

impl ActuatorClass {
    pub fn of_joint(joint: usize) -> ActuatorClass {
        match joint {
            0 | 2 => ActuatorClass::SpinePitch,
            1 | 3 => ActuatorClass::SpineYaw,
            _ => {
                let leg = Leg::from_index((joint - 4) / 3);
                match (joint - 4) % 3 {
                    0 if leg.is_left() => ActuatorClass::HipRollLeft,
                    0 => ActuatorClass::HipRollRight,
                    1 => ActuatorClass::HipPitch,
                    _ => ActuatorClass::KneePitch,
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Actuator {
    pub omega_max: f64,
    pub tau_max: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub gear_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotorParams {
    pub kv_rpm: f64,
    pub winding_resistance: f64,
}

impl MotorParams {
    /// Motor speed constant in rad/s per volt; equals amps per N·m of
    /// motor-side torque.
    pub fn kv_si(&self) -> f64 {
        self.kv_rpm * 2.0 * PI / 60.0
    }
}

pub(super) fn table(rows: &ActuatorTable, gears: &GearRatios) -> Result<[Actuator; N_JOINTS], ModelError> {
    let make = |row: [f64; 4], gear: f64, name: &str| -> Result<Actuator, ModelError> {
        let [omega_max, tau_max, theta_min, theta_max] = row;
        if !(omega_max > 0.0 && tau_max > 0.0 && theta_min < theta_max && gear > 0.0) {
            return Err(ModelError::Invalid(format!("actuator row {name} is inconsistent")));
        }
        Ok(Actuator { omega_max, tau_max, theta_min, theta_max, gear_ratio: gear })
    };
    let mut out = Vec::with_capacity(N_JOINTS);
    for j in 0..N_JOINTS {
        let a = match ActuatorClass::of_joint(j) {
            ActuatorClass::SpinePitch => make(rows.spine_pitch, gears.spine_pitch, "spine_pitch")?,
            ActuatorClass::SpineYaw => make(rows.spine_yaw, gears.spine_yaw, "spine_yaw")?,
            ActuatorClass::HipRollLeft => make(rows.hip_roll_left, gears.hip_roll, "hip_roll_left")?,
            ActuatorClass::HipRollRight => make(rows.hip_roll_right, gears.hip_roll, "hip_roll_right")?,
            ActuatorClass::HipPitch => make(rows.hip_pitch, gears.hip_pitch, "hip_pitch")?,
            ActuatorClass::KneePitch => make(rows.knee_pitch, gears.knee_pitch, "knee_pitch")?,
        };
        out.push(a);
    }
    Ok(out.try_into().expect("16 actuators"))
}

impl RobotModel {
    /// Applies the torque limit and an ideal speed limit: torque that would
    /// accelerate a joint already at or beyond `omega_max` is dropped, torque
    /// that brakes it is kept.
    pub fn clamp_actuator(&self, joint: usize, torque: f64, velocity: f64) -> f64 {
        let a = &self.actuators[joint];
        let tau = torque.clamp(-a.tau_max, a.tau_max);
        if velocity.abs() >= a.omega_max && tau * velocity > 0.0 {
            0.0
        } else {
            tau
        }
    }

    /// Joint-side current constant: amps drawn per N·m at the joint output.
    pub fn kv_effective(&self, joint: usize) -> f64 {
        self.motor.kv_si() / self.actuators[joint].gear_ratio
    }

    /// Copper loss plus mechanical power, W.
    pub fn electrical_power(&self, joint: usize, torque: f64, velocity: f64) -> f64 {
        let current = torque * self.kv_effective(joint);
        current * current * self.motor.winding_resistance + torque * velocity
    }

    pub fn within_limits(&self, joint: usize, angle: f64) -> bool {
        let a = &self.actuators[joint];
        angle >= a.theta_min && angle <= a.theta_max
    }
}
