pub mod error;
pub mod expr;
pub mod exact;
pub mod quad;
pub mod surface;
pub mod holo;
pub mod zeros;
pub mod divisor;
pub mod nevanlinna;
pub mod stochastic;
pub mod smt;
pub mod nevconst;
