//! Qubit-register state algebra.
//!
//! Index convention: qubit 0 is the most significant bit of an amplitude
//! index, so `|q0 q1 … q(n-1)⟩` lives at index `Σ q_k 2^(n-1-k)`. Tensor
//! products place the left operand on the more significant qubits.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{check_qubit_cap, CMatrix, CVector, Error, Result, C64};

/// Norm tolerance accepted by [`PureState::new`] before renormalizing.
const NORM_TOLERANCE: f64 = 1e-10;
/// Tolerance for Hermiticity, trace and positivity of density matrices.
pub const DENSITY_TOLERANCE: f64 = 1e-10;

fn qubits_for_len(len: usize) -> Result<usize> {
    if len < 2 || !len.is_power_of_two() {
        return match len {
            1 => Err(Error::ZeroQubits),
            _ => Err(Error::NotPowerOfTwo(len)),
        };
    }
    Ok(len.trailing_zeros() as usize)
}

/// Unit-norm amplitude vector over an `n`-qubit register.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amplitudes: CVector,
    num_qubits: usize,
}

impl PureState {
    /// Wrap an amplitude vector whose norm is already 1 (within 1e-10).
    pub fn new(amplitudes: CVector) -> Result<Self> {
        let num_qubits = qubits_for_len(amplitudes.len())?;
        check_qubit_cap(num_qubits)?;
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::NotNormalized(norm));
        }
        Ok(Self {
            amplitudes: amplitudes.unscale(norm),
            num_qubits,
        })
    }

    /// Normalize an arbitrary non-zero vector.
    pub fn normalized(amplitudes: CVector) -> Result<Self> {
        let num_qubits = qubits_for_len(amplitudes.len())?;
        check_qubit_cap(num_qubits)?;
        let norm = amplitudes.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::NotNormalized(norm));
        }
        Ok(Self {
            amplitudes: amplitudes.unscale(norm),
            num_qubits,
        })
    }

    /// Computational basis state `|index⟩` on `num_qubits` qubits.
    pub fn basis(num_qubits: usize, index: usize) -> Result<Self> {
        if num_qubits == 0 {
            return Err(Error::ZeroQubits);
        }
        check_qubit_cap(num_qubits)?;
        let dim = 1usize << num_qubits;
        if index >= dim {
            return Err(Error::InvalidParameter(format!(
                "basis index {index} out of range for {num_qubits} qubits"
            )));
        }
        let mut amplitudes = CVector::zeros(dim);
        amplitudes[index] = C64::new(1.0, 0.0);
        Ok(Self {
            amplitudes,
            num_qubits,
        })
    }

    /// `|0…0⟩`.
    pub fn zeros(num_qubits: usize) -> Result<Self> {
        Self::basis(num_qubits, 0)
    }

    /// Single-qubit `|+⟩`.
    pub fn plus() -> Self {
        let a = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        Self {
            amplitudes: CVector::from_vec(vec![a, a]),
            num_qubits: 1,
        }
    }

    /// Single-qubit `|−⟩`.
    pub fn minus() -> Self {
        let a = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        Self {
            amplitudes: CVector::from_vec(vec![a, -a]),
            num_qubits: 1,
        }
    }

    /// `|+⟩^{⊗n}`.
    pub fn plus_all(num_qubits: usize) -> Result<Self> {
        if num_qubits == 0 {
            return Err(Error::ZeroQubits);
        }
        check_qubit_cap(num_qubits)?;
        let dim = 1usize << num_qubits;
        let a = C64::new((dim as f64).sqrt().recip(), 0.0);
        Ok(Self {
            amplitudes: CVector::from_element(dim, a),
            num_qubits,
        })
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &PureState) -> Result<C64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    /// `⟨ψ|A|ψ⟩` for a Hermitian `A` (real part).
    pub fn expectation(&self, op: &CMatrix) -> Result<f64> {
        if op.nrows() != self.dim() || op.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: op.nrows(),
            });
        }
        Ok(self.amplitudes.dotc(&(op * &self.amplitudes)).re)
    }

    /// `|ψ⟩⟨ψ|`.
    pub fn to_density(&self) -> DensityMatrix {
        let entries = &self.amplitudes * self.amplitudes.adjoint();
        DensityMatrix {
            entries,
            num_qubits: self.num_qubits,
        }
    }

    /// `self ⊗ other`, with `self` on the leading qubits.
    pub fn tensor(&self, other: &PureState) -> Result<PureState> {
        let num_qubits = self.num_qubits + other.num_qubits;
        check_qubit_cap(num_qubits)?;
        Ok(PureState {
            amplitudes: self.amplitudes.kronecker(&other.amplitudes),
            num_qubits,
        })
    }
}

/// Hermitian, positive semidefinite, unit-trace matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    entries: CMatrix,
    num_qubits: usize,
}

impl DensityMatrix {
    /// Validate and wrap a matrix.
    pub fn new(entries: CMatrix) -> Result<Self> {
        let rho = Self::from_entries_unchecked(entries)?;
        rho.validate()?;
        Ok(rho)
    }

    /// Wrap a square matrix with power-of-two size, skipping the
    /// Hermitian/trace/positivity checks.
    pub fn from_entries_unchecked(entries: CMatrix) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::DimensionMismatch {
                expected: entries.nrows(),
                got: entries.ncols(),
            });
        }
        let num_qubits = qubits_for_len(entries.nrows())?;
        check_qubit_cap(num_qubits)?;
        Ok(Self {
            entries,
            num_qubits,
        })
    }

    /// `I / 2^n`.
    pub fn maximally_mixed(num_qubits: usize) -> Result<Self> {
        if num_qubits == 0 {
            return Err(Error::ZeroQubits);
        }
        check_qubit_cap(num_qubits)?;
        let dim = 1usize << num_qubits;
        Ok(Self {
            entries: CMatrix::identity(dim, dim).unscale(dim as f64),
            num_qubits,
        })
    }

    /// Check Hermiticity, unit trace and positivity (eigenvalues in
    /// `[-1e-10, 0)` count as zero).
    pub fn validate(&self) -> Result<()> {
        let dev = hermitian_deviation(&self.entries);
        if dev > DENSITY_TOLERANCE {
            return Err(Error::NotHermitian(dev));
        }
        let tr = self.trace();
        if (tr - 1.0).abs() > DENSITY_TOLERANCE {
            return Err(Error::InvalidTrace(tr));
        }
        let min = self
            .eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if min < -DENSITY_TOLERANCE {
            return Err(Error::NotPositive(min));
        }
        Ok(())
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_entries(self) -> CMatrix {
        self.entries
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// Real part of the trace.
    pub fn trace(&self) -> f64 {
        self.entries.trace().re
    }

    /// `tr ρ²`.
    pub fn purity(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Eigenvalues in no particular order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.entries.symmetric_eigenvalues().iter().copied().collect()
    }

    /// `self ⊗ other`, with `self` on the leading qubits.
    pub fn tensor(&self, other: &DensityMatrix) -> Result<DensityMatrix> {
        let num_qubits = self.num_qubits + other.num_qubits;
        check_qubit_cap(num_qubits)?;
        Ok(DensityMatrix {
            entries: self.entries.kronecker(&other.entries),
            num_qubits,
        })
    }
}

/// Split of a register into system and environment qubits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QubitPartition {
    total_qubits: usize,
    system_indices: Vec<usize>,
    environment_indices: Vec<usize>,
}

impl QubitPartition {
    /// Partition with the given system qubits; every other qubit is
    /// environment.
    pub fn new(total_qubits: usize, system_indices: &[usize]) -> Result<Self> {
        if total_qubits == 0 {
            return Err(Error::InvalidPartition("register has no qubits".into()));
        }
        let mut system = system_indices.to_vec();
        system.sort_unstable();
        let before = system.len();
        system.dedup();
        if system.len() != before {
            return Err(Error::InvalidPartition("repeated system qubit".into()));
        }
        if let Some(&q) = system.iter().find(|&&q| q >= total_qubits) {
            return Err(Error::InvalidPartition(format!(
                "qubit {q} outside a {total_qubits}-qubit register"
            )));
        }
        let environment = (0..total_qubits)
            .filter(|q| system.binary_search(q).is_err())
            .collect();
        Ok(Self {
            total_qubits,
            system_indices: system,
            environment_indices: environment,
        })
    }

    /// `E S E S … E` layout with `n_system` system qubits on the odd sites.
    pub fn interleaved(n_system: usize) -> Result<Self> {
        let system: Vec<usize> = (0..n_system).map(|k| 2 * k + 1).collect();
        Self::new(2 * n_system + 1, &system)
    }

    /// System on the leading qubits, environment after.
    pub fn system_first(n_system: usize, n_environment: usize) -> Result<Self> {
        let system: Vec<usize> = (0..n_system).collect();
        Self::new(n_system + n_environment, &system)
    }

    pub fn total_qubits(&self) -> usize {
        self.total_qubits
    }

    pub fn system_indices(&self) -> &[usize] {
        &self.system_indices
    }

    pub fn environment_indices(&self) -> &[usize] {
        &self.environment_indices
    }

    pub fn system_qubits(&self) -> usize {
        self.system_indices.len()
    }

    pub fn environment_qubits(&self) -> usize {
        self.environment_indices.len()
    }

    pub fn is_system(&self, qubit: usize) -> bool {
        self.system_indices.binary_search(&qubit).is_ok()
    }

    /// Joint amplitude index for each `(system, environment)` local index
    /// pair, laid out as `s * 2^n_env + e`.
    pub fn index_map(&self) -> Vec<usize> {
        let n = self.total_qubits;
        let ds = 1usize << self.system_qubits();
        let de = 1usize << self.environment_qubits();
        let sys_bits = scatter_table(&self.system_indices, n);
        let env_bits = scatter_table(&self.environment_indices, n);
        let mut map = Vec::with_capacity(ds * de);
        for s in &sys_bits {
            for e in &env_bits {
                map.push(s | e);
            }
        }
        map
    }

    /// Joint state with `system` on the system qubits and `environment` on
    /// the environment qubits.
    pub fn join(&self, system: &PureState, environment: &PureState) -> Result<PureState> {
        self.check_sides(system.num_qubits(), environment.num_qubits())?;
        check_qubit_cap(self.total_qubits)?;
        let de = environment.dim();
        let mut joint = CVector::zeros(1usize << self.total_qubits);
        for (k, &idx) in self.index_map().iter().enumerate() {
            joint[idx] = system.amplitudes()[k / de] * environment.amplitudes()[k % de];
        }
        Ok(PureState {
            amplitudes: joint,
            num_qubits: self.total_qubits,
        })
    }

    fn check_sides(&self, n_system: usize, n_environment: usize) -> Result<()> {
        if n_system != self.system_qubits() {
            return Err(Error::DimensionMismatch {
                expected: self.system_qubits(),
                got: n_system,
            });
        }
        if n_environment != self.environment_qubits() {
            return Err(Error::DimensionMismatch {
                expected: self.environment_qubits(),
                got: n_environment,
            });
        }
        Ok(())
    }
}

/// For each local index over `qubits` (MSB-first), the joint index bits it
/// occupies in an `n`-qubit register.
fn scatter_table(qubits: &[usize], n: usize) -> Vec<usize> {
    let m = qubits.len();
    (0..1usize << m)
        .map(|local| {
            qubits.iter().enumerate().fold(0usize, |acc, (k, &q)| {
                if (local >> (m - 1 - k)) & 1 == 1 {
                    acc | (1 << (n - 1 - q))
                } else {
                    acc
                }
            })
        })
        .collect()
}

/// Reduced system matrix from joint amplitudes, given a partition index map.
///
/// `ρ[s1, s2] = Σ_e a[map(s1, e)] · conj(a[map(s2, e)])`.
pub(crate) fn reduce_amplitudes(amplitudes: &[C64], index_map: &[usize], ds: usize) -> CMatrix {
    let de = index_map.len() / ds;
    let block = DMatrix::from_fn(ds, de, |s, e| amplitudes[index_map[s * de + e]]);
    let mut rho = &block * block.adjoint();
    symmetrize(&mut rho);
    rho
}

fn symmetrize(m: &mut CMatrix) {
    let n = m.nrows();
    for i in 0..n {
        m[(i, i)].im = 0.0;
        for j in (i + 1)..n {
            let avg = (m[(i, j)] + m[(j, i)].conj()).unscale(2.0);
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
}

/// Reduction to the system side of a [`QubitPartition`].
pub trait PartialTrace {
    fn partial_trace(&self, partition: &QubitPartition) -> Result<DensityMatrix>;
}

impl PartialTrace for PureState {
    fn partial_trace(&self, partition: &QubitPartition) -> Result<DensityMatrix> {
        check_partition(self.num_qubits, partition)?;
        let ds = 1usize << partition.system_qubits();
        let entries = reduce_amplitudes(
            self.amplitudes.as_slice(),
            &partition.index_map(),
            ds,
        );
        DensityMatrix::from_entries_unchecked(entries)
    }
}

impl PartialTrace for DensityMatrix {
    fn partial_trace(&self, partition: &QubitPartition) -> Result<DensityMatrix> {
        check_partition(self.num_qubits, partition)?;
        let ds = 1usize << partition.system_qubits();
        let de = 1usize << partition.environment_qubits();
        let map = partition.index_map();
        let mut reduced = CMatrix::zeros(ds, ds);
        for s1 in 0..ds {
            for s2 in 0..ds {
                reduced[(s1, s2)] = (0..de)
                    .map(|e| self.entries[(map[s1 * de + e], map[s2 * de + e])])
                    .sum();
            }
        }
        DensityMatrix::from_entries_unchecked(reduced)
    }
}

fn check_partition(num_qubits: usize, partition: &QubitPartition) -> Result<()> {
    if partition.total_qubits() != num_qubits {
        return Err(Error::DimensionMismatch {
            expected: partition.total_qubits(),
            got: num_qubits,
        });
    }
    if partition.system_qubits() == 0 {
        return Err(Error::InvalidPartition("no system qubits to keep".into()));
    }
    Ok(())
}

/// Haar-random pure state: i.i.d. standard complex Gaussian amplitudes,
/// normalized.
pub fn haar_random_state<R: Rng + ?Sized>(num_qubits: usize, rng: &mut R) -> Result<PureState> {
    if num_qubits == 0 {
        return Err(Error::ZeroQubits);
    }
    check_qubit_cap(num_qubits)?;
    let dim = 1usize << num_qubits;
    let raw = DVector::from_fn(dim, |_, _| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    PureState::normalized(raw)
}

/// `D(ρ1, ρ2) = ½ Σ |λ_i(ρ1 − ρ2)|`, clamped to `[0, 1]`.
pub fn trace_distance(rho1: &DensityMatrix, rho2: &DensityMatrix) -> Result<f64> {
    if rho1.dim() != rho2.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho1.dim(),
            got: rho2.dim(),
        });
    }
    let diff = &rho1.entries - &rho2.entries;
    let half_norm = 0.5 * diff.symmetric_eigenvalues().iter().map(|l| l.abs()).sum::<f64>();
    Ok(half_norm.clamp(0.0, 1.0))
}

/// Largest absolute eigenvalue of a Hermitian matrix.
pub fn spectral_norm(m: &CMatrix) -> Result<f64> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    if m.is_empty() {
        return Ok(0.0);
    }
    let dev = hermitian_deviation(m);
    if dev > DENSITY_TOLERANCE {
        return Err(Error::NotHermitian(dev));
    }
    Ok(m
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0f64, |acc, l| acc.max(l.abs())))
}

/// `max |m − m†|` entrywise.
pub fn hermitian_deviation(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut dev = 0.0f64;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}
