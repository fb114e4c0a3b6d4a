//! The rotated-squares study: a synthetic dataset, a fully connected autoencoder with an
//! 8-wide bottleneck, and the spectral comparisons run on it.

mod squares;
mod study;
mod train;

pub use squares::{generate_squares, rasterize_square, Squares, SquaresConfig, CANVAS, SQUARE_SIDE};
pub use study::{
    angular_variance, bias_study, compare_spectra, data_matrix, data_matrix_svd, normalized, normalized_at, BiasStudy,
    OperatorSpectrum, SpectraComparison,
};
pub use train::{train_autoencoder, TrainConfig, TrainReport, BOTTLENECK};
