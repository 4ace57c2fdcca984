//! Block operators, tangent spaces and norms.

pub mod blocks;
pub mod norms;
pub mod tangent;

pub use blocks::{block_adjoint, block_assemble, split_blocks, BlockMode, BlockPrecision, BlockTuple, SymMatrix};
pub use norms::{norm_gamma, norm_phi, numerical_rank, NormParams, DEFAULT_RANK_TOL};
pub use tangent::{
    coherence, min_principal_angle, rho_distance, tangent_angle, tangent_of, tangent_of_kind, TangentBasis, TangentKind, TangentSpace,
};
