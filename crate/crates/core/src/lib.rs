pub mod checksum;
pub mod dot;
pub mod gateway;
pub mod normalize;
pub mod ontology;
pub mod orchestrator;
pub mod prompt;
pub mod records;
pub mod service;
pub mod store;
