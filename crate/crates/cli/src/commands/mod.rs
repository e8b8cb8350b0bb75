pub mod corpus;
pub mod eval;
pub mod mixture;
pub mod pack;
pub mod report;
