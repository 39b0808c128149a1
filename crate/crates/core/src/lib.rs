//! Multi-view variational autoencoder latent fusion compared against unimodal and
//! early-fusion random forests for binary prediction from paired radiomic tables.

pub mod dataset;
pub mod nn;
pub mod mvvae;
pub mod eval;
pub mod forest;
pub mod cli;
