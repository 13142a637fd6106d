pub mod approx;
pub mod cyclic;
pub mod dd;
pub mod expr;
pub mod logspace;
pub mod measures;
pub mod peaking;
pub mod polycore;
pub mod quadrature;
pub mod series;
pub mod simplex;
