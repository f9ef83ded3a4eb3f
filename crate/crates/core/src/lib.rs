pub mod discretize;
pub mod engine;
pub mod error;
pub mod optimizer;
pub mod params;
pub mod pricing;
pub mod rate;
pub mod scenario;
