pub mod clip;
pub mod lang;
pub mod gateway;
pub mod tracker;
pub mod primitives;
pub mod summarizer;
pub mod interpreter;
pub mod answer;
pub mod codegen;
pub mod harness;
