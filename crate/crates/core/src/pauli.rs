//! Tensor-product Pauli operators on `n` spins.
//!
//! Basis strings are enumerated base-4 big-endian: the index digit for spin 1
//! is the most significant, and digit values map `0 -> I`, `1 -> X`, `2 -> Y`,
//! `3 -> Z`. Spin 1 is also the left-most Kronecker factor, so it owns the
//! most significant bit of a computational basis index. Single-spin basis
//! state 0 is `|1>` (the `+1` eigenstate of `Z`) and state 1 is `|0>`.

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

pub const MAX_SPINS: usize = 5;

/// Largest tolerated deviation from Hermiticity when a matrix enters the API.
pub const HERMITIAN_TOL: f64 = 1e-8;

const LABELS: [char; 4] = ['I', 'X', 'Y', 'Z'];

pub fn check_spin_count(n: usize) -> Result<()> {
    if (1..=MAX_SPINS).contains(&n) {
        Ok(())
    } else {
        Err(Error::Size(format!(
            "spin count {n} outside supported range 1..={MAX_SPINS}"
        )))
    }
}

/// One tensor-product basis operator (a "link") of an `n`-spin network.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PauliString {
    indices: Vec<u8>,
}

impl PauliString {
    pub fn new(indices: Vec<u8>) -> Result<Self> {
        if indices.is_empty() || indices.len() > MAX_SPINS {
            return Err(Error::Size(format!(
                "Pauli string of length {} outside 1..={MAX_SPINS}",
                indices.len()
            )));
        }
        if let Some(bad) = indices.iter().find(|&&d| d > 3) {
            return Err(Error::Input(format!("Pauli index {bad} is not in 0..=3")));
        }
        Ok(Self { indices })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            indices: vec![0; n],
        }
    }

    /// String at position `index` of the canonical enumeration.
    pub fn from_index(n: usize, index: usize) -> Self {
        let mut indices = vec![0u8; n];
        let mut rest = index;
        for slot in indices.iter_mut().rev() {
            *slot = (rest % 4) as u8;
            rest /= 4;
        }
        Self { indices }
    }

    /// Parses labels such as `"XZI"`.
    pub fn from_label(label: &str) -> Result<Self> {
        let indices = label
            .chars()
            .map(|c| match c.to_ascii_uppercase() {
                'I' => Ok(0),
                'X' => Ok(1),
                'Y' => Ok(2),
                'Z' => Ok(3),
                other => Err(Error::Input(format!("unknown Pauli label `{other}`"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        Self::new(indices)
    }

    pub fn n(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[u8] {
        &self.indices
    }

    pub fn weight(&self) -> usize {
        self.indices.iter().filter(|&&d| d != 0).count()
    }

    pub fn is_identity(&self) -> bool {
        self.weight() == 0
    }

    /// Position in the canonical enumeration.
    pub fn index(&self) -> usize {
        self.indices.iter().fold(0, |acc, &d| acc * 4 + d as usize)
    }

    /// Spins (0-based) carrying a non-identity factor.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices
            .iter()
            .enumerate()
            .filter(|(_, &d)| d != 0)
            .map(|(k, _)| k)
    }

    pub fn label(&self) -> String {
        self.indices.iter().map(|&d| LABELS[d as usize]).collect()
    }

    /// Sparse row action: row `r` of the matrix has its single non-zero entry
    /// at column `r ^ flip_mask` with the returned phase.
    pub fn row_action(&self) -> Vec<(usize, Complex64)> {
        let n = self.n();
        let dim = 1usize << n;
        let flip_mask = self.indices.iter().enumerate().fold(0usize, |m, (k, &d)| {
            if d == 1 || d == 2 {
                m | (1 << (n - 1 - k))
            } else {
                m
            }
        });
        (0..dim)
            .map(|row| {
                let mut phase = Complex64::new(1.0, 0.0);
                for (k, &d) in self.indices.iter().enumerate() {
                    let bit = (row >> (n - 1 - k)) & 1;
                    match (d, bit) {
                        (2, 0) => phase *= Complex64::new(0.0, -1.0),
                        (2, _) => phase *= Complex64::new(0.0, 1.0),
                        (3, 1) => phase = -phase,
                        _ => {}
                    }
                }
                (row ^ flip_mask, phase)
            })
            .collect()
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Every basis string for `n` spins, in canonical order.
pub fn basis_enumerate(n: usize) -> Result<Vec<PauliString>> {
    check_spin_count(n)?;
    Ok((0..1usize << (2 * n))
        .map(|i| PauliString::from_index(n, i))
        .collect())
}

/// Dense Hermitian matrix of dimension `2^n`.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator {
    matrix: CMatrix,
}

impl HermitianOperator {
    /// Validates shape and Hermiticity, then symmetrizes exactly.
    pub fn new(matrix: CMatrix) -> Result<Self> {
        let dim = matrix.nrows();
        if dim != matrix.ncols() {
            return Err(Error::Size(format!(
                "operator is {}x{}, expected square",
                dim,
                matrix.ncols()
            )));
        }
        if !dim.is_power_of_two() || dim < 2 {
            return Err(Error::Size(format!("dimension {dim} is not 2^n with n >= 1")));
        }
        let asym = hermiticity_error(&matrix);
        if asym > HERMITIAN_TOL {
            return Err(Error::Contract(format!(
                "matrix is not Hermitian (max |A - A^dagger| = {asym:.3e})"
            )));
        }
        Ok(Self::symmetrized(matrix))
    }

    /// Projects onto the Hermitian part without validation.
    pub fn symmetrized(matrix: CMatrix) -> Self {
        let adj = matrix.adjoint();
        Self {
            matrix: (matrix + adj) * Complex64::new(0.5, 0.0),
        }
    }

    pub fn zeros(n: usize) -> Self {
        let dim = 1 << n;
        Self {
            matrix: CMatrix::zeros(dim, dim),
        }
    }

    pub fn identity(n: usize) -> Self {
        let dim = 1 << n;
        Self {
            matrix: CMatrix::identity(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn scale(&self, alpha: f64) -> Self {
        Self {
            matrix: &self.matrix * Complex64::new(alpha, 0.0),
        }
    }

    /// `U * self * U^dagger` for a unitary `U`.
    pub fn conjugate_by(&self, unitary: &CMatrix) -> Self {
        Self::symmetrized(unitary * &self.matrix * unitary.adjoint())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        max_abs_diff(&self.matrix, &other.matrix)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }
}

pub fn hermiticity_error(matrix: &CMatrix) -> f64 {
    let dim = matrix.nrows();
    let mut worst = 0.0f64;
    for r in 0..dim {
        for c in r..dim {
            worst = worst.max((matrix[(r, c)] - matrix[(c, r)].conj()).norm());
        }
    }
    worst
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Dense Kronecker product of the single-spin factors.
pub fn pauli_matrix(ps: &PauliString) -> HermitianOperator {
    let dim = 1usize << ps.n();
    let mut matrix = CMatrix::zeros(dim, dim);
    for (row, (col, phase)) in ps.row_action().into_iter().enumerate() {
        matrix[(row, col)] = phase;
    }
    HermitianOperator { matrix }
}

/// Real coefficients over the canonical Pauli basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PauliCoefficients {
    n: usize,
    values: Vec<f64>,
}

impl PauliCoefficients {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        check_spin_count(n)?;
        if values.len() != 1 << (2 * n) {
            return Err(Error::Size(format!(
                "{} coefficients given, {} expected for n = {n}",
                values.len(),
                1usize << (2 * n)
            )));
        }
        Ok(Self { n, values })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            values: vec![0.0; 1 << (2 * n)],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, index: usize) -> f64 {
        self.values[index]
    }

    pub fn set(&mut self, index: usize, value: f64) {
        self.values[index] = value;
    }

    /// Indices with a non-zero coefficient, identity included.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, _)| i)
    }
}

/// `values[i] = Re tr(S_i H) / 2^n`.
pub fn decompose(h: &HermitianOperator) -> Result<PauliCoefficients> {
    let asym = hermiticity_error(h.matrix());
    if asym > HERMITIAN_TOL {
        return Err(Error::Contract(format!(
            "decompose needs a Hermitian operator (max |A - A^dagger| = {asym:.3e})"
        )));
    }
    Ok(decompose_matrix(h.matrix()))
}

pub(crate) fn decompose_matrix(matrix: &CMatrix) -> PauliCoefficients {
    let n = matrix.nrows().trailing_zeros() as usize;
    let scale = 1.0 / matrix.nrows() as f64;
    let values = (0..1usize << (2 * n))
        .map(|i| {
            let ps = PauliString::from_index(n, i);
            let trace: Complex64 = ps
                .row_action()
                .into_iter()
                .enumerate()
                .map(|(row, (col, phase))| phase * matrix[(col, row)])
                .sum();
            trace.re * scale
        })
        .collect();
    PauliCoefficients { n, values }
}

/// Imaginary parts of `tr(S_i H) / 2^n`; zero for Hermitian input.
pub fn trace_imaginary_residue(h: &HermitianOperator) -> f64 {
    let n = h.n();
    let scale = 1.0 / h.dim() as f64;
    (0..1usize << (2 * n))
        .map(|i| {
            let ps = PauliString::from_index(n, i);
            let trace: Complex64 = ps
                .row_action()
                .into_iter()
                .enumerate()
                .map(|(row, (col, phase))| phase * h.matrix()[(col, row)])
                .sum();
            (trace.im * scale).abs()
        })
        .fold(0.0, f64::max)
}

/// `sum_i values[i] S_i`.
pub fn reconstruct(c: &PauliCoefficients) -> HermitianOperator {
    let n = c.n;
    let dim = 1usize << n;
    let mut matrix = CMatrix::zeros(dim, dim);
    for (i, &v) in c.values.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let ps = PauliString::from_index(n, i);
        for (row, (col, phase)) in ps.row_action().into_iter().enumerate() {
            matrix[(row, col)] += phase * v;
        }
    }
    HermitianOperator { matrix }
}

/// Flat real parameterization of one Hermitian matrix: walking the rows in
/// order, each row contributes its diagonal entry followed by (re, im) pairs
/// of the entries right of the diagonal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealEncoding {
    n: usize,
    values: Vec<f64>,
}

impl RealEncoding {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        check_spin_count(n)?;
        if values.len() != 1 << (2 * n) {
            return Err(Error::Size(format!(
                "encoding of length {} given, {} expected for n = {n}",
                values.len(),
                1usize << (2 * n)
            )));
        }
        Ok(Self { n, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Position of the diagonal entry of `row` inside a [`RealEncoding`].
pub fn encoding_diagonal_offset(dim: usize, row: usize) -> usize {
    // Rows before `row` contribute 1 + 2 * (dim - 1 - r) entries each.
    row * (2 * dim - row)
}

pub fn encode(h: &HermitianOperator) -> RealEncoding {
    let dim = h.dim();
    let m = h.matrix();
    let mut values = Vec::with_capacity(dim * dim);
    for r in 0..dim {
        values.push(m[(r, r)].re);
        for c in r + 1..dim {
            values.push(m[(r, c)].re);
            values.push(m[(r, c)].im);
        }
    }
    RealEncoding { n: h.n(), values }
}

pub fn decode(v: &RealEncoding) -> HermitianOperator {
    decode_slice(v.n, &v.values)
}

pub(crate) fn decode_slice(n: usize, values: &[f64]) -> HermitianOperator {
    let dim = 1usize << n;
    debug_assert_eq!(values.len(), dim * dim);
    let mut matrix = CMatrix::zeros(dim, dim);
    let mut it = values.iter().copied();
    for r in 0..dim {
        matrix[(r, r)] = Complex64::new(it.next().unwrap_or(0.0), 0.0);
        for c in r + 1..dim {
            let re = it.next().unwrap_or(0.0);
            let im = it.next().unwrap_or(0.0);
            matrix[(r, c)] = Complex64::new(re, im);
            matrix[(c, r)] = Complex64::new(re, -im);
        }
    }
    HermitianOperator { matrix }
}
