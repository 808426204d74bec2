//! Learnable image encryption schemes, ciphertext-only attacks against them
//! and the visual-security metrics used to score the attacks.

pub mod attack;
pub mod cipher;
pub mod experiment;
pub mod image;
pub mod keyspace;
pub mod linalg;
pub mod metrics;
pub mod nn;
pub mod prng;
pub mod scalar;
pub mod synth;

pub use scalar::Scalar;

pub type Tensor64 = nn::Tensor<f64>;
pub type Tensor32 = nn::Tensor<f32>;
pub type Network64 = nn::Network<f64>;
pub type Network32 = nn::Network<f32>;
