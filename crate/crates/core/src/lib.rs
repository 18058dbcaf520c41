//! Discrete deep belief networks over the p-adic integers: exact
//! arithmetic on the quotient groups `Z_p / p^l Z_p`, discretization of
//! locally constant kernels into network parameters, exact Boltzmann
//! inference by enumeration, the level-raising key construction, and
//! constructive approximation of arbitrary distributions over binary
//! configurations.
//!
//! All inference is exact and deterministic at desk scale: probability
//! tables are enumerated in a fixed order with log-space accumulation, and
//! the discretization layer works in exact rational arithmetic so its
//! defining identities are equalities.

pub mod approx;
pub mod deepening;
pub mod error;
pub mod inference;
pub mod model;
pub mod schwartz;
pub mod tree;

pub use approx::{
    bias_offset_for_multiplier, boost_coupling, boost_inequality_holds, greedy_construct,
    improvement_step, kl_gap_estimate, select_boost_target, sorted_support,
    support_ladder_closed_form, support_ladder_construct, ApproxTrace, BoostSelection,
    SearchConfig, TraceStep, DEFAULT_ALPHA, DEFAULT_LAMBDA1,
};
pub use deepening::{
    collapse_copy_weights, coset_block_sum, extended_energy_compressed, extended_marginal,
    full_energy, key_construct_full, layer_from_copy_weights, replicated_coupling, to_deep_layer,
    ConvParams, FullExtension,
};
pub use error::{Error, Result};
pub use inference::{
    entropy, free_energy_factorized, joint_prob, kl_divergence, log_free_energy,
    log_partition_factorized, log_partition_function, logsumexp, marginal, marginal_factorized,
    partition_function, softplus, Distribution, EnumerationCaps, Side,
};
pub use model::{
    conv_energy_generic, dot_config, embed_standard_rbm, DbnModel, DeepLayer, FieldConfig,
    ModelKind, Scalar,
};
pub use schwartz::{
    discretize_bias, discretize_conv_kernel, discretize_kernel2, inv_power, radial_coefficients,
    rational_from_f64, sphere_measure, RadialProfile, TestFunction, TestFunction2,
};
pub use tree::{GroupElement, TreeGroup, DEFAULT_GROUP_CAP};
