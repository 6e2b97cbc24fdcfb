pub mod api;
pub mod clock;
pub mod ontology;
pub mod service;
pub mod stats;
pub mod store;
