use crate::linalg::{is_spd3, Mat3, Vec12, Vec3, Vec6};
use nalgebra::Vector4;

use crate::so3::{quat_derivative_inertial, UnitQuaternion};

use super::MultibodyError;

pub const NUM_JOINTS: usize = 6;

/// One revolute link. Offsets and the axis are given in the parent frame
/// at zero joint angle; rotating about `axis` leaves it unchanged, so it is
/// also the axis in the link's own frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub axis: Vec3,
    /// Joint origin relative to the parent frame origin (m).
    pub offset: Vec3,
    pub mass: f64,
    /// Center of mass relative to the joint origin, link frame (m).
    pub com: Vec3,
    /// Inertia about the center of mass, link frame (kg·m²).
    pub inertia: Mat3,
}

/// Free-flying base carrying a six-joint serial arm. The base frame origin is
/// the base center of mass.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel {
    pub base_mass: f64,
    pub base_inertia: Mat3,
    pub links: [Link; NUM_JOINTS],
    /// Hand point relative to the last joint origin, last link frame (m).
    pub hand_offset: Vec3,
    /// Fixed rotation of the hand frame relative to the last link frame.
    pub hand_rotation: UnitQuaternion,
}

impl RobotModel {
    pub fn new(
        base_mass: f64,
        base_inertia: Mat3,
        links: [Link; NUM_JOINTS],
        hand_offset: Vec3,
        hand_rotation: UnitQuaternion,
    ) -> Result<Self, MultibodyError> {
        let mut links = links;
        if !(base_mass > 0.0) {
            return Err(MultibodyError::InvalidModel("base mass must be positive".into()));
        }
        if !is_spd3(&base_inertia, 1e-12) {
            return Err(MultibodyError::InvalidModel("base inertia is not SPD".into()));
        }
        for (i, link) in links.iter_mut().enumerate() {
            if !(link.mass > 0.0) {
                return Err(MultibodyError::InvalidModel(format!("link {} mass must be positive", i + 1)));
            }
            if !is_spd3(&link.inertia, 1e-12) {
                return Err(MultibodyError::InvalidModel(format!("link {} inertia is not SPD", i + 1)));
            }
            let n = link.axis.norm();
            if !(n > 0.0) {
                return Err(MultibodyError::InvalidModel(format!("link {} has a zero joint axis", i + 1)));
            }
            link.axis /= n;
        }
        Ok(Self { base_mass, base_inertia, links, hand_offset, hand_rotation })
    }

    /// Reference robot: a 500 kg base with a 6-DOF arm roughly 2.5 m long.
    pub fn nominal() -> Self {
        fn rod(mass: f64, axis: Vec3, offset: Vec3, com: Vec3, length: f64, radius: f64) -> Link {
            let axial = 0.5 * mass * radius * radius;
            let transverse = mass * (3.0 * radius * radius + length * length) / 12.0;
            // Rods lie along the joint-to-joint direction.
            let along = if com.x.abs() >= com.z.abs() { 0 } else { 2 };
            let mut d = Vec3::repeat(transverse);
            d[along] = axial;
            Link { axis, offset, mass, com, inertia: Mat3::from_diagonal(&d) }
        }
        let x = Vec3::x();
        let y = Vec3::y();
        let z = Vec3::z();
        let links = [
            rod(5.0, z, Vec3::new(0.5, 0.0, 0.6), Vec3::new(0.0, 0.0, 0.1), 0.2, 0.06),
            rod(15.0, y, Vec3::new(0.0, 0.0, 0.2), Vec3::new(0.5, 0.0, 0.0), 1.0, 0.05),
            rod(12.0, y, Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.5, 0.0, 0.0), 1.0, 0.04),
            rod(2.0, x, Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.05, 0.0, 0.0), 0.1, 0.04),
            rod(2.0, y, Vec3::new(0.1, 0.0, 0.0), Vec3::new(0.05, 0.0, 0.0), 0.1, 0.04),
            rod(1.0, x, Vec3::new(0.1, 0.0, 0.0), Vec3::new(0.075, 0.0, 0.0), 0.15, 0.03),
        ];
        Self::new(
            500.0,
            Mat3::from_diagonal(&Vec3::new(80.0, 90.0, 70.0)),
            links,
            Vec3::new(0.15, 0.0, 0.0),
            UnitQuaternion::identity(),
        )
        .expect("nominal robot is valid")
    }

    /// Joint angles of the nominal ready pose, away from arm singularities.
    pub fn nominal_joint_angles() -> Vec6 {
        Vec6::from_column_slice(&[0.0, -0.6, 1.2, 0.2, -0.6, 0.1])
    }

    pub fn total_mass(&self) -> f64 {
        self.base_mass + self.links.iter().map(|l| l.mass).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotState {
    /// Base center of mass, inertial (m).
    pub base_position: Vec3,
    pub base_attitude: UnitQuaternion,
    /// Base center-of-mass velocity, inertial (m/s).
    pub base_velocity: Vec3,
    /// Base angular velocity, inertial (rad/s).
    pub base_omega: Vec3,
    pub joint_angles: Vec6,
    pub joint_rates: Vec6,
}

impl RobotState {
    pub fn at_rest(joint_angles: Vec6) -> Self {
        Self {
            base_position: Vec3::zeros(),
            base_attitude: UnitQuaternion::identity(),
            base_velocity: Vec3::zeros(),
            base_omega: Vec3::zeros(),
            joint_angles,
            joint_rates: Vec6::zeros(),
        }
    }

    /// `ψ̇_s = (v_b, ω_b, θ̇)`.
    pub fn generalized_velocity(&self) -> Vec12 {
        let mut v = Vec12::zeros();
        v.fixed_rows_mut::<3>(0).copy_from(&self.base_velocity);
        v.fixed_rows_mut::<3>(3).copy_from(&self.base_omega);
        v.fixed_rows_mut::<6>(6).copy_from(&self.joint_rates);
        v
    }

    pub fn with_generalized_velocity(&self, v: &Vec12) -> Self {
        Self {
            base_velocity: v.fixed_rows::<3>(0).into(),
            base_omega: v.fixed_rows::<3>(3).into(),
            joint_rates: v.fixed_rows::<6>(6).into(),
            ..*self
        }
    }
}

/// Time derivative of a [`RobotState`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotRates {
    pub position: Vec3,
    pub attitude: Vector4<f64>,
    pub joint_angles: Vec6,
    /// `ψ̈_s`.
    pub velocity: Vec12,
}

impl RobotRates {
    /// Classical RK4 weighting of four stage derivatives.
    pub fn rk4_blend(k: [&RobotRates; 4]) -> RobotRates {
        RobotRates {
            position: (k[0].position + k[1].position * 2.0 + k[2].position * 2.0 + k[3].position) / 6.0,
            attitude: (k[0].attitude + k[1].attitude * 2.0 + k[2].attitude * 2.0 + k[3].attitude) / 6.0,
            joint_angles: (k[0].joint_angles + k[1].joint_angles * 2.0 + k[2].joint_angles * 2.0 + k[3].joint_angles)
                / 6.0,
            velocity: (k[0].velocity + k[1].velocity * 2.0 + k[2].velocity * 2.0 + k[3].velocity) / 6.0,
        }
    }
}

impl RobotState {
    /// Derivative of the state given generalized accelerations `ψ̈_s`.
    pub fn rates(&self, accel: &Vec12) -> RobotRates {
        RobotRates {
            position: self.base_velocity,
            attitude: quat_derivative_inertial(&self.base_attitude, &self.base_omega),
            joint_angles: self.joint_rates,
            velocity: *accel,
        }
    }

    /// `self + h·k`, renormalizing the base attitude.
    pub fn advanced(&self, k: &RobotRates, h: f64) -> RobotState {
        let q = self.base_attitude.to_vector4() + k.attitude * h;
        let q = q / q.norm();
        let attitude = UnitQuaternion::from_vector4(&q).expect("normalized above");
        let moved = RobotState {
            base_position: self.base_position + k.position * h,
            base_attitude: attitude,
            joint_angles: self.joint_angles + k.joint_angles * h,
            ..*self
        };
        moved.with_generalized_velocity(&(self.generalized_velocity() + k.velocity * h))
    }
}
