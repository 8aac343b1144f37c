//! Single-sequence central-limit constructions over bit streams.
//!
//! The pipeline: a deterministic [`bitsource::BitStream`] is cut into
//! consecutive blocks by a [`sampling::BlockScheme`]; each block of `n` bits
//! with `s` ones yields one sample `x = (2s - n) / sqrt(n)`. Downstream
//! consumers measure how close the sample stream is to standard normal:
//! streaming empirical moments ([`moments`]), exact Kolmogorov-Smirnov
//! distance to the normal CDF ([`cdf`]), effective tail bounds for the strong
//! law ([`slln_bounds`]), and the log-weighted almost-sure CLT estimator
//! ([`asclt`]). The [`cli`] module binds it all into reproducible runs.

pub mod accum;
pub mod asclt;
pub mod bitsource;
pub mod cdf;
pub mod cli;
pub mod moments;
pub mod sampling;
pub mod slln_bounds;
