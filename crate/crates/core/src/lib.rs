//! Learn the structure of active IPv6 seed addresses with a gated-convolutional
//! variational autoencoder and emit deduplicated candidate target sets for
//! network scanning.
//!
//! The pipeline is organized as five modules:
//!
//! * [`addr6`]: address parsing, canonical text output, nybble and one-hot
//!   encodings, seed-set loading.
//! * [`seedclass`]: addressing-scheme classification, per-nybble entropy
//!   fingerprints, k-means clustering with elbow model selection.
//! * [`neuralcore`]: a minimal differentiable kernel: tensors, a reverse-mode
//!   tape, gated convolutions, an Adam optimizer, and a finite-difference
//!   gradient checker.
//! * [`vae6`]: the gated-convolutional VAE: encoder, reparameterized
//!   sampling, decoder, losses, training loop, generator, and model files.
//! * [`evalkit`]: candidate scoring against a pluggable activity oracle,
//!   budget allocation across seed categories, and a deterministic synthetic
//!   benchmark universe.

pub mod addr6;
pub mod evalkit;
pub mod neuralcore;
pub mod seedclass;
pub mod seeding;
pub mod vae6;
