//! Fourier transforms, column-mask algebra and image similarity metrics.

mod fourier;
mod image;
mod mask;
mod metric;

pub use fourier::{dft2, idft2, zero_filled, zero_filled_cols};
pub use image::{ComplexKSpace, RealImage};
pub use mask::{apply_mask, mask_union, ColumnMask};
pub(crate) use metric::gaussian_kernel;
pub use metric::{psnr, similarity, similarity_and_grad, similarity_grad, MetricConfig, MetricKind};
pub use num_complex::Complex64;
