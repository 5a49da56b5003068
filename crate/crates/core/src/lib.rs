pub mod dense;
pub mod error;
pub mod hier;
mod lanczos;
pub mod lowrank;
pub mod mlr;
pub mod fitting;
pub mod rankalloc;
pub mod dissect;
pub mod hierarchy;
pub mod matrices;
pub mod io;
pub mod runner;
mod svd;
