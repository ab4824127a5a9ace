pub mod audit;
pub mod dynamics;
pub mod evaluate;
pub mod hessian;
pub mod run_all;
pub mod train;
