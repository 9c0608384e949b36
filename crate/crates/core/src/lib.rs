//! Blind interference alignment with reconfigurable receive antennas.
//!
//! Builds and checks alignment schemes for broadcast with groupcast messages,
//! unicast with side information, and the shuffle phase of a wireless
//! MapReduce job: switching patterns, precoders, decoders, channel
//! simulation and degrees-of-freedom accounting.

pub mod bcgm;
pub mod channel;
pub mod combinatorics;
pub mod error;
pub mod linalg;
pub mod mapreduce;
pub mod metrics;
pub mod sim;
pub mod usi;
pub mod verify;

pub use combinatorics::{desired_indices, member_position, mod1, ordered_subsets, GroupTable};
pub use error::{BiaError, Result};
pub use linalg::{ComplexMatrix, MdsMatrix, SparseMatrix};
pub use num_complex::Complex64;

/// Exact rational used for degrees-of-freedom values.
pub type Rational = num_rational::Ratio<i128>;

pub(crate) fn serialize_rational<S: serde::Serializer>(r: &Rational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(&format_args!("{}/{}", r.numer(), r.denom()))
}

pub(crate) fn serialize_opt_rational<S: serde::Serializer>(
    r: &Option<Rational>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    match r {
        Some(r) => serialize_rational(r, s),
        None => s.serialize_none(),
    }
}
