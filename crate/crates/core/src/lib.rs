pub mod diagnostics;
pub mod envs;
pub mod geometry;
pub mod kernel;
pub mod numerics;
pub mod replay;
pub mod sac;
pub mod trainer;
