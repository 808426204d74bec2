//! Ciphertext-only attacks: feature reconstruction, inverse transformation
//! networks and GAN-based reconstruction.

pub mod fr;
pub mod gan;
pub mod itn;
