//! Compiler from quantized sparse polynomial networks (PolyLUT and
//! PolyLUT-Add) to exhaustive lookup-table netlists, Verilog, and a
//! cycle-accurate simulator.

pub mod config;
pub mod data;
pub mod error;
pub mod netlist;
pub mod network;
pub mod poly;
pub mod quant;
pub mod rng;
pub mod rtl;
pub mod sim;
pub mod tablegen;
pub mod train;

pub use config::{
    ablation_grid, generate_connectivity, parse_config, preset, validate_config, AblationPoint, AblationVariants,
    Connectivity, LayerGeometry, NetworkConfig, PipelineStrategy, PRESET_NAMES,
};
pub use error::{Error, Result};
pub use netlist::{Netlist, TruthTable, UnitKind};
pub use network::{argmax_class, Evaluator, TrainedNetwork};
pub use poly::{enumerate_monomials, monomial_count, MonomialBasis, PolyNeuron};
pub use quant::{fold_batchnorm, quantize, BatchNormAffine, QuantSpec};
pub use rtl::{emit_rtl, emit_testbench, parse_back, RtlBundle};
pub use sim::{audit_tables, check_equivalence, eval_netlist, latency_report, simulate_pipeline, EquivalenceOptions, SimTrace};
pub use tablegen::{compile_network, entry_count, resource_report, ResourceReport, TableMode, TableOptions};
pub use data::{load_dataset, DataFormat, Dataset, SplitOptions, SyntheticKind, SyntheticSpec};
pub use train::{accuracy, loss_and_grad, train, Hyper};
