pub mod behavior;
pub mod cli;
pub mod config;
pub mod feasibility;
pub mod hal;
pub mod kinematics;
pub mod runner;
pub mod sim;
