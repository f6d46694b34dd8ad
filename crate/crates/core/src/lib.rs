pub mod adaptive;
pub mod besov;
pub mod bspline;
pub mod error;
pub mod harness;
pub mod exponent;
pub mod multilevel;
pub mod oracle;
pub mod par;
pub mod quasi_interpolant;
