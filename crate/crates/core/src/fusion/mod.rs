//! Late fusion: per-target ε-SVR over concatenated encoder representations.

mod fuse;
mod grid;
mod qp;
mod svr;

pub use fuse::*;
pub use grid::{default_c_grid, grid_search_c, GridSearchResult};
pub use qp::qp_oracle;
pub use svr::{gram_matrix, rbf_kernel, svr_predict, svr_solve, svr_train, SvrModel, SvrParams, SvrSolution};
