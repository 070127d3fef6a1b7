//! Orbits of free cyclic submodules of `²T_n` over prime fields.
//!
//! `T_n` is the ring of lower triangular `n x n` matrices over GF(p). A pair
//! `(A, B)` generates the cyclic submodule `T_n (A, B)`; the group
//! `GL_2(T_n)` acts on such submodules from the right. This crate decides
//! freeness and unimodularity, reduces free pairs to canonical 0/1
//! representatives with a checkable certificate, maps canonical pairs to set
//! partitions and back, and checks the whole classification by exhaustive
//! orbit enumeration on small cases.

pub mod canonical;
pub mod error;
pub mod field;
pub mod gl2;
pub mod modpairs;
pub mod oracle;
pub mod partitions;
pub mod trimat;

pub use canonical::{
    build_k, build_v, canonicalize, enumerate_canonical, is_canonical, reduce_from_g_stage, select_pivots,
    verify_certificate, Canonicalization, Certificate, CanonicalizationTrace,
};
pub use error::{Error, Result};
pub use field::{FieldElement, PrimeField};
pub use gl2::{act_left_unit, act_right, gl2_generators, gl2_is_invertible, GL2Element};
pub use modpairs::{cyclic_submodule, is_free_oracle, is_outlier_oracle, ModulePair, OutlierOracle, Submodule};
pub use oracle::{
    enumerate_free_submodules, orbit_decomposition, verify_classification, verify_classification_indexed, verify_sampled,
    OrbitIndex, OrbitReport,
};
pub use partitions::{bell, enumerate_partitions, pair_to_partition, partition_to_pair, SetPartition};
pub use trimat::{augmented_rank, LowerTriMatrix};

/// Default cap on exhaustive enumerations.
pub const DEFAULT_BUDGET: u128 = 1 << 24;

/// Environment variable overriding [`DEFAULT_BUDGET`].
pub const BUDGET_ENV: &str = "TRIORBIT_BUDGET";

/// The enumeration budget: `TRIORBIT_BUDGET` if set to a decimal integer,
/// otherwise [`DEFAULT_BUDGET`].
pub fn budget_from_env() -> Result<u128> {
    match std::env::var(BUDGET_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("{BUDGET_ENV} must be a decimal integer, got {v:?}"))),
        Err(_) => Ok(DEFAULT_BUDGET),
    }
}
