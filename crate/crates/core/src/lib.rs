pub mod cli;
pub mod desk;
pub mod eigen;
pub mod eval;
pub mod gallery;
pub mod image;
pub mod matching;
pub mod sift;
