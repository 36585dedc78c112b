pub mod channel;
pub mod data_io;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod filters;
pub mod glm;
pub mod sampler;
pub mod spike;
pub mod synthetic;
pub mod trace;
pub mod trainer;
