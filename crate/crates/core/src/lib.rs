//! Mining toolchain for infrastructure-as-code repositories: history
//! ingestion, defect labeling, developer activity metrics, statistical
//! analysis, baseline features, defect prediction and anti-pattern flags.

pub mod antipatterns;
pub mod features;
pub mod ingest;
pub mod labeling;
pub mod metrics;
pub mod networks;
pub mod pipeline;
pub mod predict;
pub mod report;
pub mod stats;
pub mod synth;
