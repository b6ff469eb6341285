//! Floating-base rigid-body dynamics in the world frame, gravity free.
//!
//! Generalized velocity is `ψ̇_s = (v_b, ω_b, θ̇)` with `v_b` the base
//! center-of-mass velocity and `ω_b` the base angular velocity, both
//! inertial. The conjugate generalized force is `(f_b, n_b, τ_m)` where
//! `n_b` is the moment about the base center of mass.

use nalgebra::SMatrix;

use crate::linalg::{skew, Mat12, Mat3, Vec12, Vec3};

use super::kinematics::{ChainKinematics, NUM_BODIES};
use super::model::{RobotModel, RobotState, NUM_JOINTS};

type Mat6x6 = SMatrix<f64, 6, 6>;
type Spatial = nalgebra::SVector<f64, 6>;

fn body_mass_and_inertia(model: &RobotModel, kin: &ChainKinematics, i: usize) -> (f64, Mat3) {
    let (m, local) = if i == 0 {
        (model.base_mass, model.base_inertia)
    } else {
        (model.links[i - 1].mass, model.links[i - 1].inertia)
    };
    let r = kin.rotation[i];
    (m, r * local * r.transpose())
}

/// Spatial inertia about the world origin in `(ω, v_O)` ordering.
fn spatial_inertia(m: f64, inertia_world: &Mat3, com: &Vec3) -> Mat6x6 {
    let c = skew(com);
    let mut s = Mat6x6::zeros();
    s.fixed_view_mut::<3, 3>(0, 0).copy_from(&(inertia_world - c * c * m));
    s.fixed_view_mut::<3, 3>(0, 3).copy_from(&(c * m));
    s.fixed_view_mut::<3, 3>(3, 0).copy_from(&(-c * m));
    s.fixed_view_mut::<3, 3>(3, 3).copy_from(&(Mat3::identity() * m));
    s
}

/// Motion subspace columns in `(ω, v_O)` form, one per generalized
/// coordinate, plus the body each coordinate moves.
fn motion_subspace(kin: &ChainKinematics) -> ([Spatial; 12], [usize; 12]) {
    let mut s = [Spatial::zeros(); 12];
    let mut body = [0usize; 12];
    let c0 = kin.com[0];
    for k in 0..3 {
        let e = Vec3::ith(k, 1.0);
        s[k].fixed_rows_mut::<3>(3).copy_from(&e);
        s[3 + k].fixed_rows_mut::<3>(0).copy_from(&e);
        s[3 + k].fixed_rows_mut::<3>(3).copy_from(&c0.cross(&e));
    }
    for j in 0..NUM_JOINTS {
        let i = j + 1;
        let z = kin.axis[i];
        s[6 + j].fixed_rows_mut::<3>(0).copy_from(&z);
        s[6 + j].fixed_rows_mut::<3>(3).copy_from(&kin.origin[i].cross(&z));
        body[6 + j] = i;
    }
    (s, body)
}

/// Generalized mass matrix `M_s` by the composite-rigid-body algorithm.
pub fn mass_matrix(model: &RobotModel, kin: &ChainKinematics) -> Mat12 {
    let mut composite = [Mat6x6::zeros(); NUM_BODIES];
    for i in (0..NUM_BODIES).rev() {
        let (m, iw) = body_mass_and_inertia(model, kin, i);
        composite[i] = spatial_inertia(m, &iw, &kin.com[i]);
        if i + 1 < NUM_BODIES {
            composite[i] += composite[i + 1];
        }
    }
    let (s, body) = motion_subspace(kin);
    let mut m = Mat12::zeros();
    for a in 0..12 {
        for b in a..12 {
            let deeper = body[a].max(body[b]);
            let v = s[a].dot(&(composite[deeper] * s[b]));
            m[(a, b)] = v;
            m[(b, a)] = v;
        }
    }
    m
}

/// Recursive Newton–Euler inverse dynamics: the generalized force that
/// produces `accel` from the current state with no hand load.
pub fn inverse_dynamics(model: &RobotModel, state: &RobotState, kin: &ChainKinematics, accel: &Vec12) -> Vec12 {
    let acc = kin.accelerations(state, accel);
    let mut force = [Vec3::zeros(); NUM_BODIES];
    let mut moment = [Vec3::zeros(); NUM_BODIES];
    // Backward pass: force and moment transmitted through each joint, the
    // moment taken about that body's joint origin.
    for i in (0..NUM_BODIES).rev() {
        let (m, iw) = body_mass_and_inertia(model, kin, i);
        let w = kin.omega[i];
        let f_net = acc.com_accel[i] * m;
        let n_net = iw * acc.omega_dot[i] + w.cross(&(iw * w));
        let mut f = f_net;
        let mut n = n_net + (kin.com[i] - kin.origin[i]).cross(&f_net);
        if i + 1 < NUM_BODIES {
            let c = i + 1;
            f += force[c];
            n += moment[c] + (kin.origin[c] - kin.origin[i]).cross(&force[c]);
        }
        force[i] = f;
        moment[i] = n;
    }
    let mut tau = Vec12::zeros();
    tau.fixed_rows_mut::<3>(0).copy_from(&force[0]);
    tau.fixed_rows_mut::<3>(3).copy_from(&moment[0]);
    for j in 0..NUM_JOINTS {
        tau[6 + j] = kin.axis[j + 1].dot(&moment[j + 1]);
    }
    tau
}

/// Velocity-product vector `c_s` (Coriolis and centrifugal terms).
pub fn bias(model: &RobotModel, state: &RobotState, kin: &ChainKinematics) -> Vec12 {
    inverse_dynamics(model, state, kin, &Vec12::zeros())
}

/// Total linear momentum of the robot.
pub fn robot_linear_momentum(model: &RobotModel, kin: &ChainKinematics) -> Vec3 {
    (0..NUM_BODIES).map(|i| kin.com_velocity[i] * body_mass_and_inertia(model, kin, i).0).sum()
}

/// Total angular momentum of the robot about the world origin.
pub fn robot_angular_momentum(model: &RobotModel, kin: &ChainKinematics) -> Vec3 {
    (0..NUM_BODIES)
        .map(|i| {
            let (m, iw) = body_mass_and_inertia(model, kin, i);
            iw * kin.omega[i] + kin.com[i].cross(&(kin.com_velocity[i] * m))
        })
        .sum()
}

pub fn robot_kinetic_energy(model: &RobotModel, kin: &ChainKinematics) -> f64 {
    (0..NUM_BODIES)
        .map(|i| {
            let (m, iw) = body_mass_and_inertia(model, kin, i);
            let w = kin.omega[i];
            0.5 * m * kin.com_velocity[i].norm_squared() + 0.5 * w.dot(&(iw * w))
        })
        .sum()
}
