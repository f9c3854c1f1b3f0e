pub mod ingest;
pub mod metric;
pub mod env;
pub mod policy;
pub mod trainer;
pub mod harness;
