pub mod image;
pub mod ingest;
pub mod kegg;
pub mod pipeline;
pub mod profiles;
pub mod render;
pub mod stats;
