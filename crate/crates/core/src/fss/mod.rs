//! Function-secret-sharing gates: the comparison function, the comparison
//! gate and argmax built on it, and the exact truncating product.

pub mod compare;
pub mod dcf;
pub mod trunc;

pub use compare::{argmax, argmax_plain, ge_bit, lt_gate, not_bits, select, Candidates, LtKey, Winner};
pub use dcf::{dcf_gen, DcfKey, DcfMode};
pub use trunc::{trunc_mul, trunc_mul_plain, trunc_square};
