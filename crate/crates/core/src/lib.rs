//! Synthesis and verification of homogeneous-in-the-bi-limit observers,
//! state feedbacks and output feedbacks for chains of integrators.

pub mod blend;
pub mod controller;
pub mod error;
pub mod hom;
pub mod lemma;
pub mod observer;
pub mod output_feedback;
pub mod sampling;
pub mod sim;
pub mod verify;

pub use error::{Error, Result};
