pub mod corpus;
pub mod generate;
pub mod lm;
pub mod sentiment;
