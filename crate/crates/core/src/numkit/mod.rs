//! Dense real linear algebra and finite-difference oracles.

mod decomp;
mod fd;
mod matrix;
mod random;

pub use decomp::{
    cond, det, eta_min, fix_column_signs, inverse, rank, sigma_min, singular_values, solve,
    spectral_norm, svd, sym_eig_desc, EigenPairs, Lu, Svd, RANK_RTOL, SYM_TOL,
};
pub use fd::{fd_gradient, fd_hessian, rel_error, DEFAULT_STEP};
pub use matrix::{dot, fro_norm, hadamard, kron, norm2, unvec, vec_cols, Matrix, MAX_DIM};
pub use random::{
    derive_seed, gaussian, gaussian_matrix, gaussian_vec, open_unit, random_invertible, random_invertible_pair,
    random_orthogonal, random_unit_frobenius, random_unit_spectral, seeded_rng, split_rng,
    SeededRng,
};
