pub mod lattice;
pub mod matrix;
pub mod odometer;
pub mod speedup;
pub mod classify;
pub mod castles;
pub mod format;
pub mod repro;
pub mod cli;
