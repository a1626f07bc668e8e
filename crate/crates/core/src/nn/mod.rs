//! Small dense networks with hand-written reverse passes, and Adam.

mod adam;
mod mlp;
mod nets;

pub use adam::{adam_step, AdamState};
pub use mlp::{Mlp, Tape};
pub use nets::{NetConfig, ParamGrad, TempNet, TempTape, ThermalNet, ThermalTape};
