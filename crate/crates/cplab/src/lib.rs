pub mod asymptotics;
pub mod cli;
pub mod continuum;
pub mod error;
pub mod model;
pub mod oscillator;
pub mod quad;
pub mod traces;
