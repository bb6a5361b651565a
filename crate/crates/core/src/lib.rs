//! Monte Carlo estimation of non-Markovianity in open quantum systems.
//!
//! The dynamics of a system register coupled to a finite environment are
//! simulated exactly (dense Hermitian eigendecomposition of the joint
//! Hamiltonian). Pairs of Haar-random pure system states are evolved, their
//! trace distance is differentiated in time by central differences, and the
//! resulting information flux is averaged over the pair ensemble to give the
//! average (`n_avg`) and pure (`n_pure`) non-Markovianity measures together
//! with a sampled lower bound on the BLP measure.
//!
//! Module map:
//!
//! - [`state`]: pure states, density matrices, tensor products, partial trace,
//!   trace distance, Haar sampling.
//! - [`model`]: spin-chain and dephasing Hamiltonians, noise strength.
//! - [`propagator`]: diagonalize-once time evolution and reduction.
//! - [`measures`]: flux traces, aggregation, integration, estimators.
//! - [`stats`]: seed derivation and percentile bootstrap intervals.
//! - [`experiment`]: config-driven experiment runners used by the CLI.

#![forbid(unsafe_code)]

pub mod error;
pub mod experiment;
pub mod measures;
pub mod model;
pub mod propagator;
pub mod state;
pub mod stats;

pub use error::{Error, Result};

use std::sync::atomic::{AtomicUsize, Ordering};

/// Complex scalar used throughout.
pub type C64 = nalgebra::Complex<f64>;
/// Dense complex matrix.
pub type CMatrix = nalgebra::DMatrix<C64>;
/// Dense complex vector.
pub type CVector = nalgebra::DVector<C64>;

/// Joint-register qubit cap used when nothing else is configured.
pub const DEFAULT_MAX_QUBITS: usize = 14;

/// Environment variable that raises (or lowers) the qubit cap.
pub const MAX_QUBITS_ENV: &str = "NONMARKOV_MAX_QUBITS";

// 0 = not yet resolved
static MAX_QUBITS: AtomicUsize = AtomicUsize::new(0);

/// Largest register (in qubits) any dense object may have.
///
/// Resolved once from `NONMARKOV_MAX_QUBITS`, falling back to
/// [`DEFAULT_MAX_QUBITS`]. [`set_max_qubits`] overrides it.
pub fn max_qubits() -> usize {
    match MAX_QUBITS.load(Ordering::Relaxed) {
        0 => {
            let resolved = std::env::var(MAX_QUBITS_ENV)
                .ok()
                .and_then(|v| v.trim().parse::<usize>().ok())
                .filter(|&n| n > 0)
                .unwrap_or(DEFAULT_MAX_QUBITS);
            MAX_QUBITS.store(resolved, Ordering::Relaxed);
            resolved
        }
        n => n,
    }
}

/// Override the qubit cap for the rest of the process.
pub fn set_max_qubits(n: usize) {
    MAX_QUBITS.store(n.max(1), Ordering::Relaxed);
}

pub(crate) fn check_qubit_cap(n: usize) -> Result<()> {
    let cap = max_qubits();
    if n > cap {
        return Err(Error::QubitCapExceeded { requested: n, cap });
    }
    Ok(())
}
