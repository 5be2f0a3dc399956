//! Shared fixtures for the criterion benchmarks.

use quadrec::harness::sample_sparse_signal;
use quadrec::{MeasurementEnsemble, MeasurementSet, Storage};

/// A simulated sparse problem (`k = 10`, or `n` if smaller).
pub fn sparse_problem(n: usize, m: usize, storage: Storage) -> MeasurementSet {
    let truth = sample_sparse_signal(n, n.min(10), 1, false).expect("valid sizes").values;
    let ens = MeasurementEnsemble::with_storage(n, m, 2, storage).expect("valid sizes");
    MeasurementSet::simulate(ens, truth).expect("matching dimensions")
}
