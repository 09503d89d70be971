//! Correct-by-construction Verilog problem generation, targeted repair data,
//! and pass@k evaluation.

pub mod boolean;
pub mod fsm;
pub mod verilog;
pub mod sim;
pub mod wave;
pub mod forge;
pub mod provider;
pub mod judge;
pub mod eval;
pub mod repair;
