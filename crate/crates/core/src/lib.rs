//! INT8 quantized CNN inference for camera scene detection, with the
//! challenge's evaluation and scoring harness.

pub mod bench;
pub mod dataset;
pub mod error;
pub mod graph;
pub mod kernels;
pub mod quant;
pub mod scoreboard;
pub mod tensor;

pub use error::{Error, Result};
pub use graph::{Mode, ModelGraph};
pub use quant::QuantParams;
pub use tensor::{DType, Shape, Tensor};

/// `f(0..n)` collected in index order, fanned out over the rayon pool when
/// the `parallel` feature is on.
pub(crate) fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}
