pub mod cache_cmd;
pub mod fixture_cmd;
pub mod reconstruct;
pub mod render;
pub mod tools;
