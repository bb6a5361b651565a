//! Model Hamiltonians and their system–environment interaction part.
//!
//! Matrices are assembled by applying Pauli strings to computational basis
//! states directly, so no intermediate Kronecker products of the full
//! register are formed.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::state::{spectral_norm, QubitPartition};
use crate::{check_qubit_cap, CMatrix, Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pauli {
    X,
    Y,
    Z,
}

/// `coefficient · ⊗_k P_k` acting on the listed qubits, identity elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliTerm {
    pub coefficient: f64,
    pub factors: Vec<(usize, Pauli)>,
}

impl PauliTerm {
    pub fn new(coefficient: f64, factors: &[(usize, Pauli)]) -> Self {
        Self {
            coefficient,
            factors: factors.to_vec(),
        }
    }

    /// Does the term act nontrivially on both sides of the partition?
    pub fn straddles(&self, partition: &QubitPartition) -> bool {
        let on_system = self.factors.iter().any(|&(q, _)| partition.is_system(q));
        let on_env = self.factors.iter().any(|&(q, _)| !partition.is_system(q));
        on_system && on_env
    }

    /// Accumulate the term into a `2^n × 2^n` matrix.
    pub fn add_to(&self, matrix: &mut CMatrix, num_qubits: usize) {
        let dim = 1usize << num_qubits;
        for col in 0..dim {
            let mut row = col;
            let mut phase = C64::new(self.coefficient, 0.0);
            for &(q, p) in &self.factors {
                let mask = 1usize << (num_qubits - 1 - q);
                let bit_set = col & mask != 0;
                match p {
                    Pauli::X => row ^= mask,
                    Pauli::Y => {
                        row ^= mask;
                        // Y|0⟩ = i|1⟩, Y|1⟩ = −i|0⟩
                        phase *= if bit_set { C64::new(0.0, -1.0) } else { C64::new(0.0, 1.0) };
                    }
                    Pauli::Z => {
                        if bit_set {
                            phase = -phase;
                        }
                    }
                }
            }
            matrix[(row, col)] += phase;
        }
    }

    pub fn to_matrix(&self, num_qubits: usize) -> CMatrix {
        let dim = 1usize << num_qubits;
        let mut m = CMatrix::zeros(dim, dim);
        self.add_to(&mut m, num_qubits);
        m
    }
}

/// Total Hamiltonian, its system–environment interaction part, and the
/// derived noise strength `λ = ‖J‖` and correlation time `τ_c = 1/λ`.
#[derive(Debug, Clone)]
pub struct HamiltonianParts {
    pub total: CMatrix,
    pub interaction: CMatrix,
    pub partition: QubitPartition,
    pub noise_strength: f64,
    /// `f64::INFINITY` when there is no interaction.
    pub correlation_time: f64,
}

impl HamiltonianParts {
    /// Assemble from Pauli terms; a term is interaction iff it straddles the
    /// partition.
    pub fn from_terms(partition: QubitPartition, terms: &[PauliTerm]) -> Result<Self> {
        let n = partition.total_qubits();
        check_qubit_cap(n)?;
        let dim = 1usize << n;
        if let Some(q) = terms
            .iter()
            .flat_map(|t| t.factors.iter().map(|f| f.0))
            .find(|&q| q >= n)
        {
            return Err(Error::InvalidParameter(format!(
                "Pauli factor on qubit {q} of a {n}-qubit register"
            )));
        }
        let mut total = CMatrix::zeros(dim, dim);
        let mut interaction = CMatrix::zeros(dim, dim);
        for term in terms {
            term.add_to(&mut total, n);
            if term.straddles(&partition) {
                term.add_to(&mut interaction, n);
            }
        }
        let noise_strength = spectral_norm(&interaction)?;
        let correlation_time = if noise_strength > 0.0 {
            noise_strength.recip()
        } else {
            f64::INFINITY
        };
        Ok(Self {
            total,
            interaction,
            partition,
            noise_strength,
            correlation_time,
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.partition.total_qubits()
    }
}

/// Site frequencies and nearest-neighbour couplings of an `E S E … E` chain
/// with `n_system` system qubits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinChainParams {
    pub n_system: usize,
    pub omegas: Vec<f64>,
    pub couplings: Vec<f64>,
}

impl SpinChainParams {
    pub fn new(n_system: usize, omegas: Vec<f64>, couplings: Vec<f64>) -> Result<Self> {
        if omegas.len() != 2 * n_system + 1 {
            return Err(Error::InvalidParameter(format!(
                "expected {} frequencies, got {}",
                2 * n_system + 1,
                omegas.len()
            )));
        }
        if couplings.len() != 2 * n_system {
            return Err(Error::InvalidParameter(format!(
                "expected {} couplings, got {}",
                2 * n_system,
                couplings.len()
            )));
        }
        Ok(Self {
            n_system,
            omegas,
            couplings,
        })
    }

    pub fn uniform(n_system: usize, omega: f64, coupling: f64) -> Self {
        Self {
            n_system,
            omegas: vec![omega; 2 * n_system + 1],
            couplings: vec![coupling; 2 * n_system],
        }
    }

    pub fn num_qubits(&self) -> usize {
        2 * self.n_system + 1
    }
}

/// `H = Σ_k (ω_k/2) Z_k + Σ_k J_k (X_k Y_{k+1} + Y_k X_{k+1})` on the
/// interleaved layout.
pub fn build_spin_chain(params: &SpinChainParams) -> Result<HamiltonianParts> {
    let params = SpinChainParams::new(
        params.n_system,
        params.omegas.clone(),
        params.couplings.clone(),
    )?;
    check_qubit_cap(params.num_qubits())?;
    let partition = QubitPartition::interleaved(params.n_system)?;
    let mut terms = Vec::with_capacity(3 * params.num_qubits());
    for (k, &w) in params.omegas.iter().enumerate() {
        terms.push(PauliTerm::new(0.5 * w, &[(k, Pauli::Z)]));
    }
    for (k, &j) in params.couplings.iter().enumerate() {
        terms.push(PauliTerm::new(j, &[(k, Pauli::X), (k + 1, Pauli::Y)]));
        terms.push(PauliTerm::new(j, &[(k, Pauli::Y), (k + 1, Pauli::X)]));
    }
    HamiltonianParts::from_terms(partition, &terms)
}

/// Probe qubit ZZ-coupled to a single environment qubit, plus idle system
/// spectators.
///
/// Layout: probe on qubit 0, spectators on `1..=n_spectators`, environment on
/// the last qubit. `H = J · Z_probe Z_env`.
pub fn build_dephasing_model(coupling: f64, n_spectators: usize) -> Result<HamiltonianParts> {
    if !coupling.is_finite() {
        return Err(Error::InvalidParameter(format!("coupling {coupling}")));
    }
    let n_system = n_spectators + 1;
    check_qubit_cap(n_system + 1)?;
    let partition = QubitPartition::system_first(n_system, 1)?;
    let term = PauliTerm::new(coupling, &[(0, Pauli::Z), (n_system, Pauli::Z)]);
    HamiltonianParts::from_terms(partition, &[term])
}

/// Normal disorder for chain frequencies and couplings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisorderSpec {
    pub omega_mean: f64,
    pub omega_std: f64,
    pub coupling_mean: f64,
    pub coupling_std: f64,
}

impl DisorderSpec {
    pub fn new(omega_mean: f64, omega_std: f64, coupling_mean: f64, coupling_std: f64) -> Result<Self> {
        let spec = Self {
            omega_mean,
            omega_std,
            coupling_mean,
            coupling_std,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.omega_mean, self.omega_std, self.coupling_mean, self.coupling_std];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite disorder parameter".into()));
        }
        if self.omega_std < 0.0 || self.coupling_std < 0.0 {
            return Err(Error::InvalidParameter("negative standard deviation".into()));
        }
        Ok(())
    }
}

impl Default for DisorderSpec {
    /// `ω ~ N(0.2, 0.05)`, `J ~ N(0.8, 0.05)`.
    fn default() -> Self {
        Self {
            omega_mean: 0.2,
            omega_std: 0.05,
            coupling_mean: 0.8,
            coupling_std: 0.05,
        }
    }
}

/// Draw frequencies then couplings as `mean + std · z` with `z` standard
/// normal. Draws are not truncated. Reusing a seed across different means or
/// standard deviations reuses the same `z`.
pub fn sample_disorder<R: Rng + ?Sized>(
    spec: &DisorderSpec,
    n_system: usize,
    rng: &mut R,
) -> Result<SpinChainParams> {
    spec.validate()?;
    let mut draw = |mean: f64, std: f64| {
        let z: f64 = rng.sample(StandardNormal);
        mean + std * z
    };
    let omegas = (0..2 * n_system + 1)
        .map(|_| draw(spec.omega_mean, spec.omega_std))
        .collect();
    let couplings = (0..2 * n_system)
        .map(|_| draw(spec.coupling_mean, spec.coupling_std))
        .collect();
    SpinChainParams::new(n_system, omegas, couplings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::hermitian_deviation;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn pauli_2x2(p: Pauli) -> CMatrix {
        match p {
            Pauli::X => CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]),
            Pauli::Y => CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)]),
            Pauli::Z => CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)]),
        }
    }

    // Kronecker-product oracle for Pauli strings.
    fn kron_term(n: usize, coeff: f64, factors: &[(usize, Pauli)]) -> CMatrix {
        let mut m = CMatrix::identity(1, 1);
        for q in 0..n {
            let op = factors
                .iter()
                .find(|f| f.0 == q)
                .map(|f| pauli_2x2(f.1))
                .unwrap_or_else(|| CMatrix::identity(2, 2));
            m = m.kronecker(&op);
        }
        m * c(coeff, 0.0)
    }

    #[test]
    fn pauli_terms_match_kronecker_products() {
        let cases: &[&[(usize, Pauli)]] = &[
            &[(0, Pauli::X), (1, Pauli::Y)],
            &[(1, Pauli::Y), (2, Pauli::X)],
            &[(0, Pauli::Z), (2, Pauli::Z)],
            &[(1, Pauli::Y)],
            &[(0, Pauli::X), (1, Pauli::Z), (2, Pauli::Y)],
        ];
        for factors in cases {
            let fast = PauliTerm::new(0.7, factors).to_matrix(3);
            let slow = kron_term(3, 0.7, factors);
            assert!((fast - slow).camax() < 1e-15, "{factors:?}");
        }
    }

    #[test]
    fn single_site_chain() {
        let parts = build_spin_chain(&SpinChainParams::new(0, vec![0.3], vec![]).unwrap()).unwrap();
        assert_eq!(parts.num_qubits(), 1);
        assert_abs_diff_eq!(parts.total[(0, 0)].re, 0.15);
        assert_abs_diff_eq!(parts.total[(1, 1)].re, -0.15);
        assert_eq!(parts.interaction.camax(), 0.0);
        assert_eq!(parts.noise_strength, 0.0);
        assert!(parts.correlation_time.is_infinite());
    }

    #[test]
    fn one_coupling_chain_has_unit_pair_norm_times_two() {
        let params = SpinChainParams::new(1, vec![0.0; 3], vec![1.0, 0.0]).unwrap();
        let parts = build_spin_chain(&params).unwrap();
        let expected = kron_term(3, 1.0, &[(0, Pauli::X), (1, Pauli::Y)])
            + kron_term(3, 1.0, &[(0, Pauli::Y), (1, Pauli::X)]);
        assert!((&parts.total - &expected).camax() < 1e-15);
        // brute-force eigenvalues of the 8×8 matrix
        let ev = expected.symmetric_eigenvalues();
        let lam = ev.iter().fold(0.0f64, |a, l| a.max(l.abs()));
        assert_abs_diff_eq!(lam, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(parts.noise_strength, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(parts.correlation_time, 0.5, epsilon = 1e-12);
        // 4×4 block: (XY + YX)² = 2(I + ZZ)
        let xy = kron_term(2, 1.0, &[(0, Pauli::X), (1, Pauli::Y)])
            + kron_term(2, 1.0, &[(0, Pauli::Y), (1, Pauli::X)]);
        let sq = &xy * &xy;
        let rhs = (CMatrix::identity(4, 4) + kron_term(2, 1.0, &[(0, Pauli::Z), (1, Pauli::Z)]))
            * c(2.0, 0.0);
        assert!((sq - rhs).camax() < 1e-14);
        let scaled = xy * c(-0.35, 0.0);
        assert_abs_diff_eq!(spectral_norm(&scaled).unwrap(), 0.7, epsilon = 1e-12);
    }

    #[test]
    fn chain_is_hermitian_with_traceless_interaction() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let params = sample_disorder(&DisorderSpec::default(), 2, &mut rng).unwrap();
        let parts = build_spin_chain(&params).unwrap();
        assert!(hermitian_deviation(&parts.total) <= 1e-12);
        assert!(hermitian_deviation(&parts.interaction) <= 1e-12);
        assert!(parts.interaction.trace().norm() <= 1e-10);
        // every coupling straddles E–S, so interaction = H − Σ ω/2 Z
        let mut local = CMatrix::zeros(32, 32);
        for (k, w) in params.omegas.iter().enumerate() {
            PauliTerm::new(0.5 * w, &[(k, Pauli::Z)]).add_to(&mut local, 5);
        }
        assert!((&parts.total - &local - &parts.interaction).camax() < 1e-14);
        assert_abs_diff_eq!(parts.correlation_time * parts.noise_strength, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn decoupled_chain_commutes_with_every_z() {
        let params = SpinChainParams::new(2, vec![0.1, 0.2, 0.3, 0.25, 0.15], vec![0.0; 4]).unwrap();
        let parts = build_spin_chain(&params).unwrap();
        for k in 0..5 {
            let z = PauliTerm::new(1.0, &[(k, Pauli::Z)]).to_matrix(5);
            let comm = &parts.total * &z - &z * &parts.total;
            assert!(comm.camax() <= 1e-12);
        }
    }

    #[test]
    fn dephasing_model_examples() {
        let zero = build_dephasing_model(0.0, 0).unwrap();
        assert_eq!(zero.total.camax(), 0.0);
        assert_eq!(zero.noise_strength, 0.0);
        let one = build_dephasing_model(1.0, 0).unwrap();
        assert_abs_diff_eq!(one.noise_strength, 1.0, epsilon = 1e-14);
        assert!((&one.total - &one.interaction).camax() == 0.0);
        let spect = build_dephasing_model(-2.0, 2).unwrap();
        assert_eq!(spect.num_qubits(), 4);
        assert_eq!(spect.partition.system_indices(), &[0, 1, 2]);
        assert_eq!(spect.partition.environment_indices(), &[3]);
        assert_abs_diff_eq!(spect.noise_strength, 2.0, epsilon = 1e-14);
    }

    #[test]
    fn qubit_cap_is_enforced() {
        let err = build_spin_chain(&SpinChainParams::uniform(40, 0.2, 0.8)).unwrap_err();
        assert!(matches!(err, Error::QubitCapExceeded { requested: 81, .. }));
    }

    #[test]
    fn wrong_parameter_lengths_are_rejected() {
        assert!(SpinChainParams::new(1, vec![0.0; 2], vec![0.0; 2]).is_err());
        assert!(SpinChainParams::new(1, vec![0.0; 3], vec![0.0; 1]).is_err());
        assert!(DisorderSpec::new(0.2, -0.1, 0.8, 0.05).is_err());
    }

    #[test]
    fn zero_std_disorder_is_exact() {
        let spec = DisorderSpec::new(0.2, 0.0, 0.8, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = sample_disorder(&spec, 3, &mut rng).unwrap();
        assert!(p.omegas.iter().all(|&w| w == 0.2));
        assert!(p.couplings.iter().all(|&j| j == 0.8));
    }

    #[test]
    fn disorder_mean_within_standard_error() {
        let spec = DisorderSpec::new(0.2, 0.05, 0.8, 0.05).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        // 2500 chains × 4 couplings = 10^4 draws; σ/√n = 5e-4
        let draws: Vec<f64> = (0..2500)
            .flat_map(|_| sample_disorder(&spec, 2, &mut rng).unwrap().couplings)
            .collect();
        assert_eq!(draws.len(), 10_000);
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((mean - 0.8).abs() < 0.002, "{mean}");
    }

    #[test]
    fn disorder_is_deterministic_per_seed() {
        let spec = DisorderSpec::default();
        let a = sample_disorder(&spec, 3, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let b = sample_disorder(&spec, 3, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        assert_eq!(a, b);
        for (x, y) in a.couplings.iter().zip(&b.couplings) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn noise_strength_is_positively_homogeneous(
                seed in any::<u64>(),
                scale in -3.0f64..3.0,
            ) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let p = sample_disorder(&DisorderSpec::default(), 1, &mut rng).unwrap();
                let scaled = SpinChainParams::new(
                    1,
                    p.omegas.clone(),
                    p.couplings.iter().map(|j| j * scale).collect(),
                ).unwrap();
                let a = build_spin_chain(&p).unwrap().noise_strength;
                let b = build_spin_chain(&scaled).unwrap().noise_strength;
                prop_assert!((b - scale.abs() * a).abs() <= 1e-10 * (1.0 + a));
            }
        }
    }
}
