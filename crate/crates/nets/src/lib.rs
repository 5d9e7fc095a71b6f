//! Networks, objectives, staged adversarial training, motion transfer and
//! synthetic-video detection on top of `dance-core`.

pub mod arch;
pub mod bundle;
pub mod checkpoint;
pub mod discriminator;
pub mod error;
pub mod fakedet;
pub mod generator;
pub mod layers;
pub mod losses;
pub mod ops;
pub mod params;
pub mod perceptual;
pub mod tensor;
pub mod training;
pub mod transfer;

pub use arch::{ArchConfig, ArchStage, Mode, Stage};
pub use bundle::ModelBundle;
pub use error::{Error, Result};
