pub mod container;
pub mod error;
pub mod image;
pub mod metrics;
pub mod net;
pub mod noise;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use image::{ComplexImage, Image};
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Image32 = Image<f32>;
pub type Image64 = Image<f64>;
pub type Network32 = net::NetworkParams<f32>;
pub type Network64 = net::NetworkParams<f64>;
