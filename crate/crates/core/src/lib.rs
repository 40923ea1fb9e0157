//! Defenses against multi-sticker physical attacks on image classifiers.
//!
//! The attack model: an adversary places black and white stickers on a sign so
//! that a classifier reports a chosen target class. The defender counters by
//! guessing where the stickers are (a defensive mask), locally destroying or
//! reconstructing those regions, and classifying the defended image(s).
//!
//! The crate is organized along the pipeline:
//!
//! - [`imaging`]: float images, binary masks, PNG persistence, and the
//!   mask-composition operator shared by attack and defense.
//! - [`classifier`]: a small deterministic convolutional classifier trained
//!   from scratch, plus its binary on-disk format.
//! - [`synth`]: a procedural sign corpus and a black-box greedy sticker attack.
//! - [`masks`]: defensive-mask production for the non-blind (oracle),
//!   semi-blind (estimated mask sets), and blind (random windows) settings.
//! - [`defense`]: targeted remapping and harmonic-diffusion reconstruction,
//!   applied sequentially or in parallel.
//! - [`fusion`]: majority-vote and softmax-sum decision fusion.
//! - [`eval`]: scenario orchestration, the metric suite (CA, T-ASR, U-ASR,
//!   DR, CD, PDA), baseline defenses, and the window-parameter grid search.
//! - [`cli`]: the `sticker-defense` command-line pipeline.
//!
//! Everything is deterministic given the seeds recorded in the artifacts;
//! see [`seeding`] for how per-sample seeds are derived.

pub mod classifier;
pub mod cli;
pub mod defense;
pub mod eval;
pub mod fusion;
pub mod imaging;
pub mod masks;
pub mod seeding;
pub mod synth;

pub use classifier::{ClassifierModel, Label, SoftmaxVector, TrainConfig};
pub use defense::{DefenseOp, RemapMode};
pub use eval::{MetricsReport, ScenarioConfig};
pub use fusion::FusionMode;
pub use imaging::{BinaryMask, Image, Rect};
pub use masks::{MaskSetStore, RandomMaskConfig};
pub use synth::{AttackBudget, Sample};
