//! Numerical laboratory for quaternionic contact hypersurfaces of flat
//! quaternionic space.

pub mod flat_hk;
pub mod jets;
pub mod surface;
pub mod qc_extract;
pub mod residual;
pub mod calibrate;
pub mod connection;
pub mod verify;
