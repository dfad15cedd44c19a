//! Inference of node arrival order from a single snapshot of a growing network.
//!
//! The library models a snapshot as the end state of a duplication-divergence
//! growth process, estimates for every node pair the posterior probability
//! that one node arrived before the other, and turns those probabilities into
//! ordered clusters. Small instances admit exact answers by enumerating
//! arrival orders; larger ones use sequential importance sampling over
//! backward node-removal chains. Greedy structural baselines, an integer/
//! linear-programming bound on achievable precision, and expected-degree
//! recurrences round out the toolbox.
//!
//! Modules:
//! - [`graph`]: snapshot representation, relabeling, seed generation
//! - [`order`]: strict partial orders, ordered clusters, density/precision
//! - [`dd`]: duplication-divergence generator and step likelihoods
//! - [`exact`]: brute-force order enumeration and exact pair probabilities
//! - [`sampler`]: importance-sampling estimator for pair probabilities
//! - [`estimators`]: probability-based and greedy ordering algorithms
//! - [`optimizer`]: precision-vs-density integer program and LP relaxation
//! - [`degree`]: expected-degree recurrences and scaling fits
//! - [`experiments`]: synthetic sweeps, train/test splits, real-data ingest

pub mod dd;
pub mod degree;
pub mod estimators;
pub mod exact;
pub mod experiments;
pub mod graph;
pub mod optimizer;
pub mod order;
pub mod rng;
pub mod sampler;

pub use dd::DdParams;
pub use graph::{Graph, NodeId, Permutation};
pub use order::{OrderedClustering, PartialOrder};
pub use sampler::{PuvMatrix, SamplePath, Scheme, TrainingPairs};
