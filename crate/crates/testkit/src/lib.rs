//! Seeded generators for synthetic test scenarios, plus slow reference
//! implementations to check the real ones against.

pub mod fuzz;
pub mod oracle;
pub mod programs;
pub mod scenes;
pub mod suite;
pub mod vocab;
pub mod worlds;
