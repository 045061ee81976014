//! Robot description: three rigid bodies joined by a two-axis spine at each
//! end of the middle body, four massless 3-DoF legs, and per-joint actuator
//! limits.
//!
//! Joint state vectors are ordered `[fy, fz, ry, rz, fl(roll, pitch, knee),
//! fr(..), rl(..), rr(..)]`.

mod actuator;
mod config;
mod kinematics;
mod statics;

pub use actuator::{Actuator, ActuatorClass, MotorParams};
pub use config::{ActuatorRow, BodyConfig, LegConfig, ModelConfig, SpineConfig};
pub use kinematics::{joint_torques_from_force, IkError, Kinematics, Pose};
pub use statics::gravity_potential;

use std::path::Path;

use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lie::{Rot3, Vec3};

/// Actuated joints: 4 spine + 4 × 3 leg.
pub const N_JOINTS: usize = 16;
pub const N_SPINE: usize = 4;
pub const N_LEGS: usize = 4;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("reading model file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing model file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid model: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Leg {
    FrontLeft,
    FrontRight,
    RearLeft,
    RearRight,
}

impl Leg {
    pub const ALL: [Leg; N_LEGS] = [Leg::FrontLeft, Leg::FrontRight, Leg::RearLeft, Leg::RearRight];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Leg {
        Self::ALL[i]
    }

    pub fn is_front(self) -> bool {
        matches!(self, Leg::FrontLeft | Leg::FrontRight)
    }

    pub fn is_left(self) -> bool {
        matches!(self, Leg::FrontLeft | Leg::RearLeft)
    }

    /// +1 for left legs, -1 for right legs.
    pub fn side_sign(self) -> f64 {
        if self.is_left() {
            1.0
        } else {
            -1.0
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Leg::FrontLeft => "fl",
            Leg::FrontRight => "fr",
            Leg::RearLeft => "rl",
            Leg::RearRight => "rr",
        }
    }

    /// Index of joint `k` (0 roll, 1 hip pitch, 2 knee) in the joint vector.
    pub fn joint_index(self, k: usize) -> usize {
        N_SPINE + 3 * self.index() + k
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpineJoint {
    /// Front pitch.
    Fy,
    /// Front yaw.
    Fz,
    /// Rear pitch.
    Ry,
    /// Rear yaw.
    Rz,
}

impl SpineJoint {
    pub const ALL: [SpineJoint; N_SPINE] = [SpineJoint::Fy, SpineJoint::Fz, SpineJoint::Ry, SpineJoint::Rz];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_pitch(self) -> bool {
        matches!(self, SpineJoint::Fy | SpineJoint::Ry)
    }

    pub fn name(self) -> &'static str {
        match self {
            SpineJoint::Fy => "fy",
            SpineJoint::Fz => "fz",
            SpineJoint::Ry => "ry",
            SpineJoint::Rz => "rz",
        }
    }
}

/// Massive bodies of the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BodyId {
    Middle = 0,
    Front = 1,
    Back = 2,
}

impl BodyId {
    pub const ALL: [BodyId; 3] = [BodyId::Middle, BodyId::Front, BodyId::Back];
}

#[derive(Debug, Clone, PartialEq)]
pub struct RigidBody {
    pub mass: f64,
    /// Inertia about the COM, body frame.
    pub inertia: Matrix3<f64>,
    /// COM offset from the body frame origin, body frame.
    pub com: Vec3,
}

/// Floating-base state of the middle body (COM position, orientation,
/// world-frame linear and angular velocity).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyState {
    pub position: Vec3,
    pub rotation: Rot3,
    pub velocity: Vec3,
    pub angular_velocity: Vec3,
}

impl BodyState {
    pub fn at_rest(position: Vec3) -> Self {
        Self {
            position,
            rotation: Rot3::identity(),
            velocity: Vec3::zeros(),
            angular_velocity: Vec3::zeros(),
        }
    }
}

/// Angles, rates and torques of the 16 actuated joints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointState {
    pub angle: [f64; N_JOINTS],
    pub velocity: [f64; N_JOINTS],
    pub torque: [f64; N_JOINTS],
}

impl Default for JointState {
    fn default() -> Self {
        Self {
            angle: [0.0; N_JOINTS],
            velocity: [0.0; N_JOINTS],
            torque: [0.0; N_JOINTS],
        }
    }
}

impl JointState {
    pub fn leg_angles(&self, leg: Leg) -> [f64; 3] {
        let i = leg.joint_index(0);
        [self.angle[i], self.angle[i + 1], self.angle[i + 2]]
    }

    pub fn set_leg_angles(&mut self, leg: Leg, q: [f64; 3]) {
        let i = leg.joint_index(0);
        self.angle[i..i + 3].copy_from_slice(&q);
    }

    pub fn spine_angles(&self) -> [f64; N_SPINE] {
        [self.angle[0], self.angle[1], self.angle[2], self.angle[3]]
    }
}

/// Kind of a link's connection to its parent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinkJoint {
    Fixed,
    /// Revolute joint driven by `joint` (index into the joint vector) about
    /// `axis` (unit vector, parent frame).
    Revolute { joint: usize, axis: Vec3 },
}

/// One node of the kinematic tree. The link frame sits at
/// `parent · translate(offset) · rotate(axis, θ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub name: String,
    pub parent: Option<usize>,
    pub offset: Vec3,
    pub joint: LinkJoint,
    pub body: Option<BodyId>,
}

/// Leg link lengths and mounting, shared by all legs up to a y-mirror.
#[derive(Debug, Clone, PartialEq)]
pub struct LegGeometry {
    /// Hip-roll joint position in the parent body frame.
    pub mount: Vec3,
    /// Hip roll → hip pitch.
    pub v0: Vec3,
    /// Hip pitch → knee.
    pub v1: Vec3,
    /// Knee → foot.
    pub v2: Vec3,
}

pub const HIP_ROLL_AXIS: Vec3 = Vec3::new(1.0, 0.0, 0.0);
pub const HIP_PITCH_AXIS: Vec3 = Vec3::new(0.0, 1.0, 0.0);
/// Knee axis points along -y so that a positive knee angle folds the leg
/// with the knee behind the hip-foot line.
pub const KNEE_AXIS: Vec3 = Vec3::new(0.0, -1.0, 0.0);

#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel {
    pub bodies: [RigidBody; 3],
    pub links: Vec<Link>,
    pub legs: [LegGeometry; N_LEGS],
    pub spine_axes: [Vec3; N_SPINE],
    pub actuators: [Actuator; N_JOINTS],
    pub motor: MotorParams,
    /// Standing height of the middle-body COM.
    pub nominal_height: f64,
    body_link: [usize; 3],
    hip_link: [usize; N_LEGS],
    foot_link: [usize; N_LEGS],
    spine_link: [usize; N_SPINE],
}

impl Default for RobotModel {
    fn default() -> Self {
        Self::from_config(&ModelConfig::default()).expect("default model is valid")
    }
}

impl RobotModel {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, ModelError> {
        let cfg: ModelConfig = toml::from_str(text)?;
        Self::from_config(&cfg)
    }

    pub fn from_config(cfg: &ModelConfig) -> Result<Self, ModelError> {
        let body = |b: &BodyConfig, name: &str| -> Result<RigidBody, ModelError> {
            if !(b.mass > 0.0) || !b.mass.is_finite() {
                return Err(ModelError::Invalid(format!("{name} mass must be > 0")));
            }
            let inertia = Matrix3::from_row_slice(&[
                b.inertia[0][0], b.inertia[0][1], b.inertia[0][2],
                b.inertia[1][0], b.inertia[1][1], b.inertia[1][2],
                b.inertia[2][0], b.inertia[2][1], b.inertia[2][2],
            ]);
            if (inertia - inertia.transpose()).norm() > 1e-12 {
                return Err(ModelError::Invalid(format!("{name} inertia is not symmetric")));
            }
            let eig = SymmetricEigen::new(inertia);
            if eig.eigenvalues.iter().any(|&e| !(e > 0.0)) {
                return Err(ModelError::Invalid(format!("{name} inertia is not positive definite")));
            }
            Ok(RigidBody { mass: b.mass, inertia, com: Vec3::from(b.com) })
        };
        let bodies = [
            body(&cfg.bodies.middle, "middle")?,
            body(&cfg.bodies.front, "front")?,
            body(&cfg.bodies.back, "back")?,
        ];

        let leg_cfg = &cfg.legs;
        for (name, v) in [("v1", leg_cfg.v1), ("v2", leg_cfg.v2)] {
            if v[0] != 0.0 || v[1] != 0.0 || !(v[2] < 0.0) {
                return Err(ModelError::Invalid(format!(
                    "leg link {name} must point along -z in the zero pose"
                )));
            }
        }
        if leg_cfg.v0[0] != 0.0 || leg_cfg.v0[2] != 0.0 {
            return Err(ModelError::Invalid("leg link v0 must be a pure lateral offset".into()));
        }
        if !(cfg.nominal_height > 0.0) {
            return Err(ModelError::Invalid("nominal_height must be > 0".into()));
        }
        let mirror = |v: [f64; 3], leg: Leg| Vec3::new(v[0], v[1] * leg.side_sign(), v[2]);
        let legs = Leg::ALL.map(|leg| LegGeometry {
            mount: mirror(if leg.is_front() { leg_cfg.front_mount } else { leg_cfg.rear_mount }, leg),
            v0: mirror(leg_cfg.v0, leg),
            v1: Vec3::from(leg_cfg.v1),
            v2: Vec3::from(leg_cfg.v2),
        });

        let spine_axes = [
            cfg.spine.fy_axis, cfg.spine.fz_axis, cfg.spine.ry_axis, cfg.spine.rz_axis,
        ]
        .map(|a| Vec3::from(a));
        for a in &spine_axes {
            if (a.norm() - 1.0).abs() > 1e-12 {
                return Err(ModelError::Invalid("spine axes must be unit vectors".into()));
            }
        }

        let actuators = actuator::table(&cfg.actuators, &cfg.gear_ratios)?;
        if !(cfg.motor.kv_rpm > 0.0) || !(cfg.motor.winding_resistance >= 0.0) {
            return Err(ModelError::Invalid("motor constants must be positive".into()));
        }

        // Kinematic tree: parents always precede children.
        let mut links = Vec::new();
        let push = |links: &mut Vec<Link>, name: String, parent: Option<usize>, offset: Vec3, joint: LinkJoint, body: Option<BodyId>| {
            links.push(Link { name, parent, offset, joint, body });
            links.len() - 1
        };
        let middle = push(&mut links, "middle".into(), None, Vec3::zeros(), LinkJoint::Fixed, Some(BodyId::Middle));
        let front_pitch = push(
            &mut links,
            "front_pitch".into(),
            Some(middle),
            Vec3::from(cfg.spine.front_joint),
            LinkJoint::Revolute { joint: 0, axis: spine_axes[0] },
            None,
        );
        let front = push(
            &mut links,
            "front".into(),
            Some(front_pitch),
            Vec3::zeros(),
            LinkJoint::Revolute { joint: 1, axis: spine_axes[1] },
            Some(BodyId::Front),
        );
        let rear_pitch = push(
            &mut links,
            "rear_pitch".into(),
            Some(middle),
            Vec3::from(cfg.spine.rear_joint),
            LinkJoint::Revolute { joint: 2, axis: spine_axes[2] },
            None,
        );
        let back = push(
            &mut links,
            "back".into(),
            Some(rear_pitch),
            Vec3::zeros(),
            LinkJoint::Revolute { joint: 3, axis: spine_axes[3] },
            Some(BodyId::Back),
        );
        let mut hip_link = [0; N_LEGS];
        let mut foot_link = [0; N_LEGS];
        for leg in Leg::ALL {
            let g = &legs[leg.index()];
            let parent = if leg.is_front() { front } else { back };
            let n = leg.short_name();
            let roll = push(
                &mut links,
                format!("{n}_hip_roll"),
                Some(parent),
                g.mount,
                LinkJoint::Revolute { joint: leg.joint_index(0), axis: HIP_ROLL_AXIS },
                None,
            );
            let pitch = push(
                &mut links,
                format!("{n}_hip_pitch"),
                Some(roll),
                g.v0,
                LinkJoint::Revolute { joint: leg.joint_index(1), axis: HIP_PITCH_AXIS },
                None,
            );
            let knee = push(
                &mut links,
                format!("{n}_knee"),
                Some(pitch),
                g.v1,
                LinkJoint::Revolute { joint: leg.joint_index(2), axis: KNEE_AXIS },
                None,
            );
            let foot = push(&mut links, format!("{n}_foot"), Some(knee), g.v2, LinkJoint::Fixed, None);
            hip_link[leg.index()] = roll;
            foot_link[leg.index()] = foot;
        }

        Ok(Self {
            bodies,
            links,
            legs,
            spine_axes,
            actuators,
            motor: MotorParams {
                kv_rpm: cfg.motor.kv_rpm,
                winding_resistance: cfg.motor.winding_resistance,
            },
            nominal_height: cfg.nominal_height,
            body_link: [middle, front, back],
            hip_link,
            foot_link,
            spine_link: [front_pitch, front, rear_pitch, back],
        })
    }

    pub fn total_mass(&self) -> f64 {
        self.bodies.iter().map(|b| b.mass).sum()
    }

    pub fn body(&self, id: BodyId) -> &RigidBody {
        &self.bodies[id as usize]
    }

    pub fn body_link(&self, id: BodyId) -> usize {
        self.body_link[id as usize]
    }

    pub fn hip_link(&self, leg: Leg) -> usize {
        self.hip_link[leg.index()]
    }

    pub fn foot_link(&self, leg: Leg) -> usize {
        self.foot_link[leg.index()]
    }

    /// Link whose frame is rotated by spine joint `j`.
    pub fn spine_link(&self, j: SpineJoint) -> usize {
        self.spine_link[j.index()]
    }

    /// Parent map ν(i).
    pub fn parent(&self, link: usize) -> Option<usize> {
        self.links[link].parent
    }

    /// True when `ancestor` lies on the path from the root to `link` (inclusive).
    pub fn is_ancestor(&self, ancestor: usize, link: usize) -> bool {
        let mut cur = Some(link);
        while let Some(i) = cur {
            if i == ancestor {
                return true;
            }
            cur = self.links[i].parent;
        }
        false
    }

    /// Massive body that carries the leg.
    pub fn leg_parent_body(&self, leg: Leg) -> BodyId {
        if leg.is_front() {
            BodyId::Front
        } else {
            BodyId::Back
        }
    }

    pub fn actuator(&self, joint: usize) -> &Actuator {
        &self.actuators[joint]
    }

    /// Horizontal position of the foot below the hip-pitch joint with all
    /// joints at zero, in the middle-body frame, at ground height for the
    /// nominal stance. This is the neutral stance point `c` of each foot.
    pub fn neutral_foot(&self, leg: Leg) -> Vec3 {
        let g = &self.legs[leg.index()];
        let joint = if leg.is_front() {
            self.links[self.spine_link[0]].offset
        } else {
            self.links[self.spine_link[2]].offset
        };
        let hip = joint + g.mount + g.v0;
        Vec3::new(hip.x, hip.y, -self.nominal_height)
    }

    /// Upper-leg and lower-leg lengths.
    pub fn leg_lengths(&self) -> (f64, f64) {
        (self.legs[0].v1.norm(), self.legs[0].v2.norm())
    }

    /// Default standing joint configuration: spine straight, each foot
    /// directly below its hip-pitch joint at the nominal height.
    pub fn standing_joints(&self) -> JointState {
        let base = BodyState::at_rest(Vec3::new(0.0, 0.0, self.nominal_height));
        let mut joints = JointState::default();
        let kin = Kinematics::compute(self, &base, &joints);
        for leg in Leg::ALL {
            let c = self.neutral_foot(leg);
            let target = Vec3::new(c.x, c.y, 0.0);
            let q = self
                .leg_ik(&kin.hip_pose(self, leg), &target, leg)
                .expect("nominal stance is reachable");
            joints.set_leg_angles(leg, q);
        }
        joints
    }
}

/// Box inertia about the COM for a solid cuboid.
pub fn box_inertia(mass: f64, size: [f64; 3]) -> [[f64; 3]; 3] {
    let [a, b, c] = size;
    let k = mass / 12.0;
    [[k * (b * b + c * c), 0.0, 0.0], [0.0, k * (a * a + c * c), 0.0], [0.0, 0.0, k * (a * a + b * b)]]
}
