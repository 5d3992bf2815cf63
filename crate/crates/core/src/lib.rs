pub mod corpus;
pub mod dsl;
pub mod providers;
pub mod text;
pub mod executor;
pub mod pipeline;
pub mod harness;
pub mod analysis;
