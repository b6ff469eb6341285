//! Planning and closed-loop simulation for robotic capture and time-optimal
//! detumbling of a tumbling satellite.
//!
//! The pieces, bottom-up:
//!
//! * [`so3`]: scalar-last quaternions and rotations.
//! * [`target`]: torque-free propagation of the tumbling target and grapple
//!   fixture kinematics.
//! * [`multibody`]: free-floating manipulator dynamics, payload coupling and
//!   the reduced 9-DOF model.
//! * [`precapture`]: closed-form optimal intercept trajectory with a free
//!   rendezvous time.
//! * [`detumble`]: time-optimal detumbling under a torque-norm bound.
//! * [`controller`]: feedback-linearizing coordination controller.
//! * [`sim`]: two-phase capture/detumble scenario runner.
//! * [`config`]: scenario files.

// `!(x > 0.0)` is used on purpose so that NaN takes the error path.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod controller;
pub mod detumble;
pub mod linalg;
pub mod multibody;
pub mod precapture;
pub mod rootfind;
pub mod sim;
pub mod so3;
pub mod target;

pub use linalg::{Mat3, Vec3};
pub use so3::UnitQuaternion;
