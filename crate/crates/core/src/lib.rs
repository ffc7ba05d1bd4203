pub mod analog;
pub mod cli;
pub mod config;
pub mod crossbar;
pub mod device;
pub mod io;
pub mod matrix;
pub mod pipeline;
pub mod power;
pub mod qec;
pub mod rng;
