//! Weighted generalized linear models: design construction (polynomial,
//! interaction and natural-spline terms), Gaussian-identity and
//! binomial-logit families.

mod design;
mod fit;
pub mod linalg;
pub mod spline;

pub use design::{build_design, Design, DesignSpec, Term, Transform};
pub use fit::{
    clip_prob, expit, fit_glm, fit_glm_rows, fit_glm_unweighted, fit_glm_with, log_likelihood, logit, predict_glm,
    score, Family, GlmFit, GlmOptions,
};
pub use linalg::Matrix;
