//! Total-variation regularised imaging with a learned regularisation
//! weight: operators, projections, GP/Condat–Vu/FISTA solvers,
//! differentiation through unrolled iterations and the bilevel driver.

pub mod bilevel;
pub mod data;
pub mod error;
pub mod field;
pub mod io;
pub mod linops;
pub mod prox;
pub mod solvers;
pub mod unroll;

pub use error::{Error, Result};
pub use field::{DualField, Image, Sinogram, VectorSpace};
pub use linops::{LinearMap, Radon2d};
pub use solvers::{DenoiseProblem, ReconConfig, ReconProblem};
pub use unroll::{LambdaGradient, Strategy};
