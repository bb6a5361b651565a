//! Exact time evolution under a time-independent Hamiltonian.
//!
//! `H = V Λ V†` is diagonalized once. A joint state is expanded in the
//! eigenbasis once per initial state; every later time costs one phase
//! multiply and one basis change, `ψ(t) = V e^{−iΛt} V† ψ(0)`.

use nalgebra::{DVector, SymmetricEigen};

use crate::model::HamiltonianParts;
use crate::state::{hermitian_deviation, reduce_amplitudes, DensityMatrix, PureState, QubitPartition};
use crate::{check_qubit_cap, CMatrix, CVector, Error, Result, C64};

/// A dynamical map on a system register: pure initial state → reduced state
/// at time `t`.
pub trait Dynamics: Sync {
    fn system_qubits(&self) -> usize;

    fn evolve(&self, state: &PureState, t: f64) -> Result<DensityMatrix>;

    /// Reduced states at several times. Implementations may share work
    /// across times.
    fn trajectory(&self, state: &PureState, times: &[f64]) -> Result<Vec<DensityMatrix>> {
        times.iter().map(|&t| self.evolve(state, t)).collect()
    }

    /// Unitary dilations can run backwards in time; semigroups cannot.
    fn allows_negative_time(&self) -> bool {
        false
    }
}

/// Eigendecomposition of a joint Hamiltonian together with the partition and
/// the environment's initial state.
#[derive(Debug, Clone)]
pub struct SpectralPropagator {
    eigenvalues: DVector<f64>,
    eigenvectors: CMatrix,
    partition: QubitPartition,
    environment_state: PureState,
    index_map: Vec<usize>,
}

impl SpectralPropagator {
    pub fn prepare(parts: &HamiltonianParts, environment_state: PureState) -> Result<Self> {
        Self::from_hamiltonian(&parts.total, parts.partition.clone(), environment_state)
    }

    pub fn from_hamiltonian(
        hamiltonian: &CMatrix,
        partition: QubitPartition,
        environment_state: PureState,
    ) -> Result<Self> {
        check_qubit_cap(partition.total_qubits())?;
        let dim = 1usize << partition.total_qubits();
        if hamiltonian.nrows() != dim || hamiltonian.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: hamiltonian.nrows(),
            });
        }
        if partition.system_qubits() == 0 {
            return Err(Error::InvalidPartition("no system qubits".into()));
        }
        if environment_state.num_qubits() != partition.environment_qubits() {
            return Err(Error::DimensionMismatch {
                expected: partition.environment_qubits(),
                got: environment_state.num_qubits(),
            });
        }
        let dev = hermitian_deviation(hamiltonian);
        if dev > 1e-10 {
            return Err(Error::NotHermitian(dev));
        }
        let eig = SymmetricEigen::new(hamiltonian.clone());
        let index_map = partition.index_map();
        Ok(Self {
            eigenvalues: eig.eigenvalues,
            eigenvectors: eig.eigenvectors,
            partition,
            environment_state,
            index_map,
        })
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &CMatrix {
        &self.eigenvectors
    }

    pub fn partition(&self) -> &QubitPartition {
        &self.partition
    }

    pub fn environment_state(&self) -> &PureState {
        &self.environment_state
    }

    /// `max |V Λ V† − H|` for a reference Hamiltonian.
    pub fn reconstruction_residual(&self, hamiltonian: &CMatrix) -> f64 {
        let lambda = CMatrix::from_diagonal(&self.eigenvalues.map(|l| C64::new(l, 0.0)));
        (&self.eigenvectors * lambda * self.eigenvectors.adjoint() - hamiltonian).camax()
    }

    /// Joint initial state `ψ_S ⊗ ψ_E` laid out per the partition.
    pub fn joint_state(&self, system_state: &PureState) -> Result<PureState> {
        self.partition.join(system_state, &self.environment_state)
    }

    /// `e^{−iHt} ψ` for a joint state.
    pub fn evolve_joint(&self, joint: &PureState, t: f64) -> Result<PureState> {
        if joint.dim() != self.eigenvectors.nrows() {
            return Err(Error::DimensionMismatch {
                expected: self.eigenvectors.nrows(),
                got: joint.dim(),
            });
        }
        let coefficients = self.eigenvectors.ad_mul(joint.amplitudes());
        PureState::new(self.rotate(&coefficients, t))
    }

    /// Expand `ψ_S ⊗ ψ_E` in the eigenbasis.
    pub fn expand(&self, system_state: &PureState) -> Result<EigenExpansion<'_>> {
        let joint = self.joint_state(system_state)?;
        Ok(EigenExpansion {
            propagator: self,
            coefficients: self.eigenvectors.ad_mul(joint.amplitudes()),
        })
    }

    /// `Φ(t)ψ = tr_E[e^{−iHt} (ψ ⊗ ψ_E) e^{iHt}]`.
    pub fn evolve_reduced(&self, system_state: &PureState, t: f64) -> Result<DensityMatrix> {
        self.expand(system_state)?.reduced_at(t)
    }

    fn rotate(&self, coefficients: &CVector, t: f64) -> CVector {
        let phased = coefficients.zip_map(&self.eigenvalues, |c, l| c * C64::from_polar(1.0, -l * t));
        &self.eigenvectors * phased
    }

    fn reduce(&self, joint: &[C64]) -> Result<DensityMatrix> {
        let ds = 1usize << self.partition.system_qubits();
        DensityMatrix::from_entries_unchecked(reduce_amplitudes(joint, &self.index_map, ds))
    }
}

/// A joint initial state expressed in the Hamiltonian eigenbasis.
#[derive(Debug, Clone)]
pub struct EigenExpansion<'a> {
    propagator: &'a SpectralPropagator,
    coefficients: CVector,
}

impl EigenExpansion<'_> {
    pub fn joint_at(&self, t: f64) -> CVector {
        self.propagator.rotate(&self.coefficients, t)
    }

    pub fn reduced_at(&self, t: f64) -> Result<DensityMatrix> {
        self.propagator.reduce(self.joint_at(t).as_slice())
    }

    /// Reduced states at many times with a single matrix–matrix product.
    pub fn reduced_many(&self, times: &[f64]) -> Result<Vec<DensityMatrix>> {
        let eigenvalues = &self.propagator.eigenvalues;
        let phased = CMatrix::from_fn(self.coefficients.len(), times.len(), |k, j| {
            self.coefficients[k] * C64::from_polar(1.0, -eigenvalues[k] * times[j])
        });
        let joint = &self.propagator.eigenvectors * phased;
        joint
            .column_iter()
            .map(|col| self.propagator.reduce(col.as_slice()))
            .collect()
    }
}

impl Dynamics for SpectralPropagator {
    fn system_qubits(&self) -> usize {
        self.partition.system_qubits()
    }

    fn evolve(&self, state: &PureState, t: f64) -> Result<DensityMatrix> {
        self.evolve_reduced(state, t)
    }

    fn trajectory(&self, state: &PureState, times: &[f64]) -> Result<Vec<DensityMatrix>> {
        self.expand(state)?.reduced_many(times)
    }

    fn allows_negative_time(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_dephasing_model, build_spin_chain, DisorderSpec, SpinChainParams};
    use crate::state::{haar_random_state, PartialTrace};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_chain(seed: u64, n_system: usize) -> HamiltonianParts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = crate::model::sample_disorder(&DisorderSpec::default(), n_system, &mut rng).unwrap();
        build_spin_chain(&p).unwrap()
    }

    #[test]
    fn eigenbasis_is_unitary_and_reconstructs() {
        let parts = random_chain(1, 2);
        let env = PureState::zeros(3).unwrap();
        let prop = SpectralPropagator::prepare(&parts, env).unwrap();
        let v = prop.eigenvectors();
        let id = CMatrix::identity(v.nrows(), v.ncols());
        assert!((v.adjoint() * v - id).camax() <= 1e-8);
        let scale = parts.total.camax().max(1.0);
        assert!(prop.reconstruction_residual(&parts.total) <= 1e-8 * scale);
    }

    #[test]
    fn diagonal_hamiltonian_eigenvalues_are_its_diagonal() {
        let params = SpinChainParams::new(1, vec![0.1, 0.4, 0.9], vec![0.0, 0.0]).unwrap();
        let parts = build_spin_chain(&params).unwrap();
        let prop = SpectralPropagator::prepare(&parts, PureState::zeros(2).unwrap()).unwrap();
        let mut ev: Vec<f64> = prop.eigenvalues().iter().copied().collect();
        let mut diag: Vec<f64> = parts.total.diagonal().iter().map(|z| z.re).collect();
        ev.sort_by(f64::total_cmp);
        diag.sort_by(f64::total_cmp);
        for (a, b) in ev.iter().zip(&diag) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_qubit_half_z() {
        let h = CMatrix::from_row_slice(
            2,
            2,
            &[C64::new(0.5, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(-0.5, 0.0)],
        );
        // a system qubit with a one-qubit idle environment
        let partition = QubitPartition::system_first(1, 1).unwrap();
        let h2 = h.kronecker(&CMatrix::identity(2, 2));
        let prop = SpectralPropagator::from_hamiltonian(&h2, partition, PureState::zeros(1).unwrap()).unwrap();
        let mut ev: Vec<f64> = prop.eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        assert_abs_diff_eq!(ev[0], -0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(ev[3], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn zero_time_returns_the_input_projector() {
        let parts = random_chain(2, 2);
        let prop = SpectralPropagator::prepare(&parts, PureState::zeros(3).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let psi = haar_random_state(2, &mut rng).unwrap();
        let rho = prop.evolve_reduced(&psi, 0.0).unwrap();
        assert!((rho.entries() - psi.to_density().entries()).camax() <= 1e-12);
    }

    #[test]
    fn dephasing_coherence_follows_cosine() {
        let parts = build_dephasing_model(1.0, 0).unwrap();
        let prop = SpectralPropagator::prepare(&parts, PureState::plus()).unwrap();
        for t in [0.1, 0.7, 1.3] {
            let rho = prop.evolve_reduced(&PureState::plus(), t).unwrap();
            let off = rho.entries()[(0, 1)];
            assert_abs_diff_eq!(off.re, 0.5 * (2.0 * t).cos(), epsilon = 1e-10);
            assert_abs_diff_eq!(off.im, 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn trace_and_validity_preserved() {
        let parts = random_chain(4, 2);
        let prop = SpectralPropagator::prepare(&parts, PureState::zeros(3).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let times: Vec<f64> = (0..=10).map(|k| 0.5 * k as f64).collect();
        for _ in 0..5 {
            let psi = haar_random_state(2, &mut rng).unwrap();
            for rho in prop.trajectory(&psi, &times).unwrap() {
                assert_abs_diff_eq!(rho.trace(), 1.0, epsilon = 1e-10);
                rho.validate().unwrap();
            }
        }
    }

    #[test]
    fn batched_and_single_time_paths_agree() {
        let parts = random_chain(6, 1);
        let prop = SpectralPropagator::prepare(&parts, PureState::zeros(2).unwrap()).unwrap();
        let psi = haar_random_state(1, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        let times = [0.0, 0.3, 2.2, -0.4];
        let batch = prop.trajectory(&psi, &times).unwrap();
        for (rho, &t) in batch.iter().zip(&times) {
            let single = prop.evolve_reduced(&psi, t).unwrap();
            assert!((rho.entries() - single.entries()).camax() < 1e-13);
        }
    }

    #[test]
    fn group_property_and_energy_conservation() {
        let parts = random_chain(7, 2);
        let prop = SpectralPropagator::prepare(&parts, PureState::zeros(3).unwrap()).unwrap();
        let psi = haar_random_state(2, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let joint = prop.joint_state(&psi).unwrap();
        let direct = prop.evolve_joint(&joint, 1.7).unwrap();
        let split = prop
            .evolve_joint(&prop.evolve_joint(&joint, 0.6).unwrap(), 1.1)
            .unwrap();
        assert!((direct.amplitudes() - split.amplitudes()).camax() <= 1e-9);
        let e0 = joint.expectation(&parts.total).unwrap();
        for t in [0.5, 2.0, 5.0] {
            let e = prop.evolve_joint(&joint, t).unwrap().expectation(&parts.total).unwrap();
            assert_abs_diff_eq!(e, e0, epsilon = 1e-9);
        }
    }

    #[test]
    fn decoupled_chain_keeps_system_pure() {
        let params = SpinChainParams::new(2, vec![0.2, 0.3, 0.1, 0.25, 0.4], vec![0.0; 4]).unwrap();
        let parts = build_spin_chain(&params).unwrap();
        let prop = SpectralPropagator::prepare(&parts, PureState::basis(3, 5).unwrap()).unwrap();
        let psi = haar_random_state(2, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        for t in [0.0, 1.0, 4.0] {
            let rho = prop.evolve_reduced(&psi, t).unwrap();
            assert_abs_diff_eq!(rho.purity(), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn reduction_matches_partial_trace_of_joint_state() {
        let parts = random_chain(9, 1);
        let prop = SpectralPropagator::prepare(&parts, PureState::plus_all(2).unwrap()).unwrap();
        let psi = haar_random_state(1, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let joint = prop.evolve_joint(&prop.joint_state(&psi).unwrap(), 1.3).unwrap();
        let expected = joint.partial_trace(prop.partition()).unwrap();
        let got = prop.evolve_reduced(&psi, 1.3).unwrap();
        assert!((expected.entries() - got.entries()).camax() < 1e-13);
    }

    #[test]
    fn mismatched_dimensions_are_rejected() {
        let parts = random_chain(10, 1);
        assert!(SpectralPropagator::prepare(&parts, PureState::zeros(1).unwrap()).is_err());
        let prop = SpectralPropagator::prepare(&parts, PureState::zeros(2).unwrap()).unwrap();
        assert!(prop.evolve_reduced(&PureState::zeros(2).unwrap(), 1.0).is_err());
    }
}
