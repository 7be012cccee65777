mod quad;
pub mod grid;
pub mod model;
pub mod scheme;
pub mod steady;
pub mod diagnostics;
pub mod config;
pub mod output;
pub mod scenario;
