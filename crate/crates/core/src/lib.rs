pub mod cli;
pub mod config;
pub mod evolve;
pub mod mesh;
pub mod metrics;
pub mod molio;
pub mod network;
pub mod persist;
pub mod trainer;
