pub mod annotation;
pub mod eval;
pub mod geometry;
pub mod graph;
