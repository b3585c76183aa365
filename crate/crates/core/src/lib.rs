pub mod cem;
pub mod error;
pub mod experiment;
pub mod learner;
pub mod metaalgo;
pub mod metamdp;
pub mod optim;
pub mod oracles;
pub mod rng;
pub mod sinemeta;
pub mod stats;
pub mod risk;
pub mod taskdist;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use rng::RandomStream;
pub use taskdist::{importance_weight, Task, TaskDistribution};
