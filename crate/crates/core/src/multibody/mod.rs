//! Free-floating space manipulator dynamics and its coupling with a grasped
//! target.
//!
//! All twists are expressed in the inertial frame with `(linear, angular)`
//! ordering; the hand's linear velocity is that of the hand point.

mod coupled;
mod dynamics;
mod kinematics;
mod model;

use thiserror::Error;

pub use coupled::{
    arm_condition, combined_dynamics, direct_linear_momentum, forward_dynamics, grasp_matrix, jacobians,
    linear_momentum, reduced_velocity, stack_accel, target_coupling, CoupledDynamics, Coupling, Mat3x9, Mat9x3,
    Payload, JM_COND_LIMIT, MBAR_COND_LIMIT,
};
pub use dynamics::{
    bias, inverse_dynamics, mass_matrix, robot_angular_momentum, robot_kinetic_energy, robot_linear_momentum,
};
pub use kinematics::{forward_kinematics, ChainAccelerations, ChainKinematics, HandPose};
pub use model::{Link, RobotModel, RobotRates, RobotState, NUM_JOINTS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MultibodyError {
    #[error("SINGULAR_ARM: arm Jacobian is singular (condition number {condition:.3e})")]
    SingularArm { condition: f64 },
    #[error("SINGULAR_MASS: reduced mass matrix is singular (condition number {condition:.3e})")]
    SingularMass { condition: f64 },
    #[error("invalid robot model: {0}")]
    InvalidModel(String),
}
