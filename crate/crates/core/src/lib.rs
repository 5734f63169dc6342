pub mod autodiff;
pub mod eval;
pub mod losses;
pub mod models;
pub mod problems;
pub mod seed;
