//! Derived-from-Anosov diffeomorphism of the 3-torus and its verification tools.

pub mod anosov;
pub mod chain;
pub mod ergodic;
pub mod maps;
pub mod properties;
pub mod shadow;
pub mod surgery;
pub mod torus;

pub use anosov::{apply_linear, cone_membership, eigen_split, AnosovError, AnosovModel, ConeField, ConeKind};
pub use chain::{build_transition_graph, quasi_attractor_candidates, refine_recurrent, scc_condense, GraphError, SccDecomposition, TransitionGraph};
pub use maps::TorusMap;
pub use properties::{verify_da_properties, PropertyRecord, PropertyReport, Status};
pub use shadow::{collapse_witness, localize_class_to_periodic_fiber, semiconjugacy_residual, ShadowError, ShadowEvaluator};
pub use surgery::{build_da_map, DAMap, SurgeryError, SurgeryParams};
pub use torus::{box_of_point, nearest_lift, torus_distance, wrap, BoxId, LiftVector, SampleScheme, TorusError, TorusPoint};
