//! Weisfeiler-Leman 2-dimensional refinement, ℓ-walk refinement, exact
//! ℓ-walk MPNN simulation and the second-order non-linear GNN layer.
pub mod gnn;
pub mod graph;
pub mod io;
pub mod mpnn;
pub mod oracle;
pub mod refinement;
pub mod verify;

pub use graph::{equivalent, readout_multiset, refines, LabelId, LabelInterner, LabelledGraph, Labelling};
pub use refinement::{run_to_stable, walk_step, wl2_step, Procedure, RefinementTrace};
