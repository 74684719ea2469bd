//! Dense networks with hand-written reverse-mode gradients.
//!
//! Everything works on row-major batches of shape `(batch, features)` in
//! `f64`.

mod adam;
mod checkpoint;
pub mod gradcheck;
mod init;
mod mlp;

pub use adam::Adam;
pub use checkpoint::{read_mlp, write_mlp};
pub use init::orthogonal;
pub use mlp::{sigmoid, Activation, Dense, ForwardCache, Mlp, MlpGrads, MlpSpec};
