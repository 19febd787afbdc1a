//! Mixed-precision numerics: exact IEEE 754 encoding and decoding for any
//! binary interchange width, fixed-point arithmetic with stochastic
//! rounding, mixed-precision matrix products, reduced-precision neural
//! network training, and a simulated phase-change-memory crossbar solver.

pub mod codec;
pub mod dyadic;
pub mod fixed;
pub mod linalg;
pub mod pcm;
pub mod random;
pub mod training;

pub use codec::{BitPattern, CodecError, FloatClass, FloatFormat, RoundingMode, SoftFloat};
pub use dyadic::{Dyadic, ExtendedReal};
pub use fixed::{FixedError, FixedFormat, FixedValue, Rounding};
pub use linalg::{AccumulationPolicy, ExactMatrix, LinalgError, Matrix};
pub use pcm::{PcmArray, PcmDeviceModel, PcmError, SolverConfig};
pub use random::RandomSource;
pub use training::{MlpModel, PrecisionPolicy, TrainError, TrainingReport};
