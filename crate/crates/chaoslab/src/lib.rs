pub mod cascade;
pub mod ensemble;
pub mod error;
pub mod kernels;
pub mod measure;
pub mod modulus;
pub mod oracles;
pub mod poisson;
pub mod rng;
pub mod sampler;
pub mod stats;
pub mod tail;
