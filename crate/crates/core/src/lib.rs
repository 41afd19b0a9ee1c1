//! Weight-pool compression for compute-in-memory (CIM) accelerators.
//!
//! The crate covers the whole offline/online flow:
//!
//! * [`interchange`]: tensor (`.cwt`), model (`.cmodel`) and compressed-model
//!   (`.cpool`) file formats.
//! * [`weightpool`]: binary codebook generation, Z-dimension packing, grouped
//!   non-repeating assignment, 1-bit pruned error terms and reconstruction.
//! * [`cim_array`]: functional model of a 1-bit-cell SRAM array running
//!   bit-serial matrix-vector products behind an ADC.
//! * [`scheduler`]: cycle model of the output permutation unit (ping-pong
//!   buffer plus grouped selectors).
//! * [`mapper`]: tiling, weight-stationary scheduling and full-network
//!   execution, with a dense float reference path.
//! * [`cost`]: energy, area and latency estimates driven by execution traces.

pub mod bits;
pub mod cim_array;
pub mod cost;
pub mod fixtures;
pub mod interchange;
pub mod mapper;
pub mod rng;
pub mod scheduler;
pub mod weightpool;

pub use interchange::{CompressedModelFile, DType, FormatError, ModelBundle, ModelManifest, TensorRecord};
pub use weightpool::{CompressedLayer, PoolConfig, ScaleSet, Sparsity, WeightPool};
