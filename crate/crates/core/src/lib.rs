pub mod lie;
pub mod model;
pub mod gait;
pub mod spine;
pub mod mpc;
pub mod sim;
pub mod metrics;
pub mod study;
pub mod optimize;
