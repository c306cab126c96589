pub mod cli;
pub mod dataset;
pub mod eval;
pub mod fields;
pub mod grid;
pub mod nnet;
pub mod numerics;
