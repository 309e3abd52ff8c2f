//! Multi-agent exploration lab: the MiniGrid-MA gridworld, a small
//! differentiable-network toolkit, discriminator/RND novelty models, the
//! intrinsic and mutual-intrinsic reward arithmetic, a MAPPO trainer and the
//! experiment harness that ties them together.

pub mod env;
pub mod harness;
pub mod mappo;
pub mod nn;
pub mod novelty;
pub mod rewards;
