mod fit;
mod gradcheck;
mod render;
mod stochastic;
mod study;

pub use fit::{fit, FitArgs, FitOutput, ViewSpec};
pub use gradcheck::{
    gradcheck, random_ray, GradcheckArgs, GradcheckMode, GradcheckReport, GRADCHECK_TOLERANCE,
};
pub use render::{render_files, RenderArgs};
pub use stochastic::{
    stochastic_check, test_rays, RayCheck, StochasticArgs, StochasticReport, TestRay, Z_LIMIT,
};
pub use study::{
    blend_study, transmit_study, BlendArgs, BlendResult, CenterRow, ModelStudy, TransmitArgs,
};

use nexsplat::{DEFAULT_ALPHA_CUTOFF, DEFAULT_MAX_SPLATS};
use serde::{Deserialize, Serialize};

/// Gather limits shared by every rendering command.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GatherOpts {
    pub max_splats: usize,
    pub alpha_cutoff: f64,
}

impl Default for GatherOpts {
    fn default() -> Self {
        Self {
            max_splats: DEFAULT_MAX_SPLATS,
            alpha_cutoff: DEFAULT_ALPHA_CUTOFF,
        }
    }
}
