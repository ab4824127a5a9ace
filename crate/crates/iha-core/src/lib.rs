//! Membership-inference auditing for SGD-trained models via inverse-Hessian
//! scoring.
//!
//! The crate bundles the pieces an audit needs end to end: dense symmetric
//! linear algebra with conditioned inverses ([`linalg`]), small
//! differentiable models with exact Hessians ([`model`]), dataset loaders
//! and Bernoulli membership splits ([`data`]), minibatch SGD with momentum
//! ([`training`]), the stationary-dynamics theory the attack rests on
//! ([`dynamics`]), the scoring functions themselves ([`attacks`]), ROC/AUC
//! evaluation ([`eval`]), and the multi-model game orchestration ([`game`]).
//!
//! Data-parallel inner loops run on rayon under the default `parallel`
//! feature and sequentially without it; results are bit-identical either way.

pub mod attacks;
pub mod data;
pub mod dynamics;
pub mod eval;
pub mod exec;
pub mod game;
pub mod linalg;
pub mod model;
pub mod seeds;
pub mod training;
