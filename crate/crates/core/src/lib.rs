pub mod certify;
pub mod exact;
pub mod geometry;
pub mod maxout;
pub mod mpc;
pub mod optim;
pub mod train;

mod error;

pub use error::{Error, Result};
pub use geometry::Polytope;
pub use mpc::{PwaFunction, PwaRegion};
pub use maxout::MaxoutNetwork;
pub use certify::{Alpha, Certificate, CertifySettings};
pub use train::{Dataset, TrainOptions, TrainReport};
