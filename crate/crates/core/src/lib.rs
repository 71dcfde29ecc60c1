pub mod classifier;
pub mod cli;
pub mod diffusion_kde;
pub mod ensemble;
pub mod error;
pub mod grid_dct;
pub mod quantiles;
pub mod simulation;
pub mod wasserstein_frechet;
