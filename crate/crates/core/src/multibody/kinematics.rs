use crate::linalg::{skew, Mat3, Mat6, Vec12, Vec3, Vec6};
use crate::so3::UnitQuaternion;

use super::model::{RobotModel, RobotState, NUM_JOINTS};

pub(crate) const NUM_BODIES: usize = NUM_JOINTS + 1;

/// World-frame positions and velocities of every body in the chain. Index 0
/// is the base; index `i` is link `i`.
#[derive(Debug, Clone)]
pub struct ChainKinematics {
    pub rotation: [Mat3; NUM_BODIES],
    /// Joint origin of each link (base: its center of mass).
    pub origin: [Vec3; NUM_BODIES],
    pub com: [Vec3; NUM_BODIES],
    /// Joint axis of each link in the world frame (unused for the base).
    pub axis: [Vec3; NUM_BODIES],
    pub omega: [Vec3; NUM_BODIES],
    pub com_velocity: [Vec3; NUM_BODIES],
    pub hand_position: Vec3,
    pub hand_rotation: Mat3,
}

/// Body accelerations produced by one forward acceleration pass.
#[derive(Debug, Clone)]
pub struct ChainAccelerations {
    pub omega_dot: [Vec3; NUM_BODIES],
    pub com_accel: [Vec3; NUM_BODIES],
    /// Hand twist rate `(a_h, ω̇_h)`.
    pub hand: Vec6,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HandPose {
    pub position: Vec3,
    pub attitude: UnitQuaternion,
}

impl ChainKinematics {
    pub fn new(model: &RobotModel, state: &RobotState) -> Self {
        let mut k = ChainKinematics {
            rotation: [Mat3::identity(); NUM_BODIES],
            origin: [Vec3::zeros(); NUM_BODIES],
            com: [Vec3::zeros(); NUM_BODIES],
            axis: [Vec3::zeros(); NUM_BODIES],
            omega: [Vec3::zeros(); NUM_BODIES],
            com_velocity: [Vec3::zeros(); NUM_BODIES],
            hand_position: Vec3::zeros(),
            hand_rotation: Mat3::identity(),
        };
        k.rotation[0] = state.base_attitude.to_rotation();
        k.origin[0] = state.base_position;
        k.com[0] = state.base_position;
        k.omega[0] = state.base_omega;
        k.com_velocity[0] = state.base_velocity;
        for (j, link) in model.links.iter().enumerate() {
            let (i, p) = (j + 1, j);
            let r_parent = k.rotation[p];
            let axis_world = r_parent * link.axis;
            let joint_rot = UnitQuaternion::from_axis_angle(&link.axis, state.joint_angles[j]).to_rotation();
            k.rotation[i] = r_parent * joint_rot;
            k.origin[i] = k.origin[p] + r_parent * link.offset;
            k.com[i] = k.origin[i] + k.rotation[i] * link.com;
            k.axis[i] = axis_world;
            k.omega[i] = k.omega[p] + axis_world * state.joint_rates[j];
            let v_origin = k.com_velocity[p] + k.omega[p].cross(&(k.origin[i] - k.com[p]));
            k.com_velocity[i] = v_origin + k.omega[i].cross(&(k.com[i] - k.origin[i]));
        }
        let last = NUM_JOINTS;
        k.hand_position = k.origin[last] + k.rotation[last] * model.hand_offset;
        k.hand_rotation = k.rotation[last] * model.hand_rotation.to_rotation();
        k
    }

    pub fn hand_pose(&self) -> HandPose {
        HandPose { position: self.hand_position, attitude: UnitQuaternion::from_rotation(&self.hand_rotation) }
    }

    /// Hand twist `(v_h, ω_h)` in the world frame.
    pub fn hand_twist(&self) -> Vec6 {
        let last = NUM_JOINTS;
        let v = self.com_velocity[last] + self.omega[last].cross(&(self.hand_position - self.com[last]));
        stack(&v, &self.omega[last])
    }

    /// `(J_b, J_m)` with `ν_h = J_b ν_b + J_m θ̇`.
    pub fn jacobians(&self) -> (Mat6, Mat6) {
        let mut jb = Mat6::identity();
        jb.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-skew(&(self.hand_position - self.com[0]))));
        let mut jm = Mat6::zeros();
        for j in 0..NUM_JOINTS {
            let i = j + 1;
            let z = self.axis[i];
            let col = stack(&z.cross(&(self.hand_position - self.origin[i])), &z);
            jm.set_column(j, &col);
        }
        (jb, jm)
    }

    /// Forward acceleration pass for generalized accelerations
    /// `ψ̈_s = (v̇_b, ω̇_b, θ̈)`. With zero input it yields the velocity-product
    /// terms, e.g. `J̇ψ̇_s` for the hand.
    pub fn accelerations(&self, state: &RobotState, accel: &Vec12) -> ChainAccelerations {
        let mut omega_dot = [Vec3::zeros(); NUM_BODIES];
        let mut com_accel = [Vec3::zeros(); NUM_BODIES];
        com_accel[0] = accel.fixed_rows::<3>(0).into();
        omega_dot[0] = accel.fixed_rows::<3>(3).into();
        for j in 0..NUM_JOINTS {
            let (i, p) = (j + 1, j);
            let z = self.axis[i];
            let wp = self.omega[p];
            omega_dot[i] = omega_dot[p] + z * accel[6 + j] + wp.cross(&(z * state.joint_rates[j]));
            let d = self.origin[i] - self.com[p];
            let a_origin = com_accel[p] + omega_dot[p].cross(&d) + wp.cross(&wp.cross(&d));
            let e = self.com[i] - self.origin[i];
            let wi = self.omega[i];
            com_accel[i] = a_origin + omega_dot[i].cross(&e) + wi.cross(&wi.cross(&e));
        }
        let last = NUM_JOINTS;
        let e = self.hand_position - self.com[last];
        let w = self.omega[last];
        let a_hand = com_accel[last] + omega_dot[last].cross(&e) + w.cross(&w.cross(&e));
        ChainAccelerations { omega_dot, com_accel, hand: stack(&a_hand, &omega_dot[last]) }
    }
}

pub(crate) fn stack(a: &Vec3, b: &Vec3) -> Vec6 {
    let mut v = Vec6::zeros();
    v.fixed_rows_mut::<3>(0).copy_from(a);
    v.fixed_rows_mut::<3>(3).copy_from(b);
    v
}

/// Hand position and attitude in the inertial frame.
pub fn forward_kinematics(model: &RobotModel, state: &RobotState) -> HandPose {
    ChainKinematics::new(model, state).hand_pose()
}
