//! Policy and reconstructor networks with hand-written gradients, the Adam
//! optimizer and checkpoint files.

mod adam;
mod checkpoint;
pub(crate) mod nn;
mod params;
mod policy;
mod recon;

pub use adam::{clip_grad_norm, optimizer_step, OptimizerState};
pub use checkpoint::{checkpoint_bytes, checkpoint_from_bytes, load_checkpoint, save_checkpoint, Checkpoint};
pub(crate) use params::sum_in_order;
pub use params::{BlockSpec, ParamSet};
pub use policy::{
    policy_backward, policy_backward_trace, policy_forward, policy_forward_image, policy_input, A2cTerms,
    ActionDistribution, InputMode, PolicyArch, PolicyParams, PolicyTrace,
};
pub use recon::{
    recon_backward, recon_backward_trace, recon_forward, recon_forward_image, recon_trace_masked, ReconArch,
    ReconParams, ReconTrace,
};
