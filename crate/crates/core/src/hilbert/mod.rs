//! Operator algebra on the qubit ⊗ fluctuator Hilbert space.
//!
//! Ordering convention: the qubit is the left tensor factor, so the composite
//! basis index is `2 * qubit + tlf`. Density matrices are vectorized by
//! stacking columns, which gives `vec(A ρ B) = (Bᵀ ⊗ A) vec(ρ)`.

mod expm;

use nalgebra::{ComplexField, DMatrix, DVector, Dim, Matrix, Storage, SymmetricEigen};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Dense complex operator (2×2 qubit or 4×4 qubit ⊗ TLF).
pub type Operator = DMatrix<C64>;
/// Dense complex superoperator acting on column-stacked density matrices.
pub type SuperOp = DMatrix<C64>;

pub(crate) use expm::{expm_generic, BlockPair};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subsystem {
    Qubit,
    Tlf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ladder {
    Raise,
    Lower,
}

const I: C64 = C64::new(0.0, 1.0);

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn identity(dim: usize) -> Operator {
    DMatrix::identity(dim, dim)
}

/// Single 2×2 Pauli matrix.
pub fn pauli2(axis: Axis) -> Operator {
    let z = C64::new(0.0, 0.0);
    match axis {
        Axis::X => DMatrix::from_row_slice(2, 2, &[z, c(1.0), c(1.0), z]),
        Axis::Y => DMatrix::from_row_slice(2, 2, &[z, -I, I, z]),
        Axis::Z => DMatrix::from_row_slice(2, 2, &[c(1.0), z, z, c(-1.0)]),
    }
}

/// Lift a single-subsystem operator to the 4-dimensional product space.
pub fn embed(op: &Operator, subsystem: Subsystem) -> Operator {
    match subsystem {
        Subsystem::Qubit => op.kronecker(&identity(2)),
        Subsystem::Tlf => identity(2).kronecker(op),
    }
}

/// `σ_axis ⊗ 𝟙` or `𝟙 ⊗ τ_axis`.
pub fn pauli(axis: Axis, subsystem: Subsystem) -> Operator {
    embed(&pauli2(axis), subsystem)
}

/// 2×2 ladder operator; `τ⁺` takes the lower τ_z eigenstate (index 1) to the
/// upper one (index 0).
pub fn ladder2(kind: Ladder) -> Operator {
    let z = C64::new(0.0, 0.0);
    match kind {
        Ladder::Raise => DMatrix::from_row_slice(2, 2, &[z, c(1.0), z, z]),
        Ladder::Lower => DMatrix::from_row_slice(2, 2, &[z, z, c(1.0), z]),
    }
}

/// `𝟙 ⊗ τ^±` on the qubit ⊗ TLF space.
pub fn ladder_tlf(kind: Ladder) -> Operator {
    embed(&ladder2(kind), Subsystem::Tlf)
}

pub fn dagger(m: &Operator) -> Operator {
    m.adjoint()
}

pub fn commutator(a: &Operator, b: &Operator) -> Operator {
    a * b - b * a
}

/// Largest entrywise deviation `max |A − A†|`.
pub fn hermiticity_defect(m: &Operator) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest entrywise deviation `max |U†U − 𝟙|`.
pub fn unitarity_defect(u: &Operator) -> f64 {
    if !u.is_square() {
        return f64::INFINITY;
    }
    (u.adjoint() * u - identity(u.nrows()))
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

pub fn max_abs<R: Dim, Cc: Dim, S: Storage<C64, R, Cc>>(m: &Matrix<C64, R, Cc, S>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn require_square(m: &Operator, dim: usize) -> Result<()> {
    if m.nrows() != dim || m.ncols() != dim {
        return Err(Error::Dimension {
            expected: dim,
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(())
}

/// Eigendecomposition of a Hermitian matrix.
///
/// Eigenvalues are returned ascending. Each eigenvector is rephased so its
/// largest-magnitude component (lowest index on ties) is real and positive.
pub fn eig_hermitian(h: &Operator) -> Result<(DVector<f64>, Operator)> {
    if !h.is_square() {
        return Err(Error::Dimension {
            expected: h.nrows(),
            rows: h.nrows(),
            cols: h.ncols(),
        });
    }
    let scale = max_abs(h).max(1.0);
    let defect = hermiticity_defect(h);
    if defect > 1e-12 * scale {
        return Err(Error::NotHermitian(defect));
    }
    let sym = (h + h.adjoint()) * c(0.5);
    let eig = SymmetricEigen::new(sym);
    let n = h.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        let biggest = col.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let pivot = col
            .iter()
            .position(|z| z.norm() >= biggest - 1e-12)
            .unwrap_or(0);
        let phase = col[pivot].conj() / col[pivot].norm();
        vectors.set_column(dst, &(col * phase));
    }
    Ok((values, vectors))
}

/// Matrix exponential by scaling and squaring with a Padé approximant.
///
/// Non-finite input yields a matrix of NaNs.
pub fn expm<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> DMatrix<T> {
    expm_generic(m).unwrap_or_else(|| nan_like(m))
}

fn nan_like<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> DMatrix<T> {
    DMatrix::from_element(m.nrows(), m.ncols(), T::from_real(f64::NAN))
}

/// `exp(A)` together with its Fréchet derivative `L(A, E)`, read off the
/// exponential of `[[A, E], [0, A]]`.
pub fn expm_frechet<T: ComplexField<RealField = f64>>(
    a: &DMatrix<T>,
    direction: &DMatrix<T>,
) -> (DMatrix<T>, DMatrix<T>) {
    let pair = BlockPair {
        a: a.clone(),
        b: direction.clone(),
    };
    match expm_generic(&pair) {
        Some(p) => (p.a, p.b),
        None => (nan_like(a), nan_like(a)),
    }
}

/// Column-stacking vectorization.
pub fn vec(rho: &Operator) -> DVector<C64> {
    DVector::from_column_slice(rho.as_slice())
}

pub fn unvec(v: &DVector<C64>) -> Result<Operator> {
    let n = (v.len() as f64).sqrt().round() as usize;
    if n * n != v.len() {
        return Err(Error::NotPerfectSquare(v.len()));
    }
    Ok(DMatrix::from_column_slice(n, n, v.as_slice()))
}

/// Superoperator of `ρ ↦ A ρ`.
pub fn left_mul(a: &Operator) -> SuperOp {
    identity(a.nrows()).kronecker(a)
}

/// Superoperator of `ρ ↦ ρ B`.
pub fn right_mul(b: &Operator) -> SuperOp {
    b.transpose().kronecker(&identity(b.nrows()))
}

/// Superoperator of `ρ ↦ [H, ρ]`.
pub fn commutator_superop(h: &Operator) -> SuperOp {
    left_mul(h) - right_mul(h)
}

/// Superoperator of `ρ ↦ U ρ U†`.
pub fn conjugation_superop(u: &Operator) -> Result<SuperOp> {
    let defect = unitarity_defect(u);
    if defect > 1e-10 {
        return Err(Error::NotUnitary(defect));
    }
    Ok(u.map(|z| z.conj()).kronecker(u))
}

/// Trace out the fluctuator from a 4×4 qubit ⊗ TLF operator.
pub fn partial_trace_tlf(rho: &Operator) -> Result<Operator> {
    require_square(rho, 4)?;
    Ok(DMatrix::from_fn(2, 2, |i, j| {
        rho[(2 * i, 2 * j)] + rho[(2 * i + 1, 2 * j + 1)]
    }))
}

/// Maps `E: vec(ρ_q) ↦ vec(ρ_q ⊗ ρ_tlf)` (16×4) and
/// `P: vec(ρ) ↦ vec(tr_TLF ρ)` (4×16).
pub fn embed_and_reduce(rho_tlf: &Operator) -> Result<(DMatrix<C64>, DMatrix<C64>)> {
    require_square(rho_tlf, 2)?;
    let mut embed = DMatrix::zeros(16, 4);
    for k in 0..4 {
        let mut unit = DMatrix::zeros(2, 2);
        unit[(k % 2, k / 2)] = c(1.0);
        embed.set_column(k, &vec(&unit.kronecker(rho_tlf)));
    }
    let mut reduce = DMatrix::zeros(4, 16);
    for k in 0..16 {
        let mut unit = DMatrix::zeros(4, 4);
        unit[(k % 4, k / 4)] = c(1.0);
        reduce.set_column(k, &vec(&partial_trace_tlf(&unit)?));
    }
    Ok((embed, reduce))
}

/// Von Neumann entropy in nats.
pub fn entropy(rho: &Operator) -> Result<f64> {
    let tr = rho.trace();
    if (tr - c(1.0)).norm() > 1e-8 {
        return Err(Error::TraceNotUnity(tr.re));
    }
    let herm = (rho + rho.adjoint()) * c(0.5);
    let (values, _) = eig_hermitian(&herm)?;
    Ok(values
        .iter()
        .filter(|&&l| l > 1e-12)
        .map(|&l| -l * l.ln())
        .sum())
}

/// Bloch vector `(tr σ_x ρ, tr σ_y ρ, tr σ_z ρ)` of a qubit density matrix.
pub fn bloch_vector(rho: &Operator) -> Result<[f64; 3]> {
    require_square(rho, 2)?;
    let comp = |axis| (pauli2(axis) * rho).trace().re;
    Ok([comp(Axis::X), comp(Axis::Y), comp(Axis::Z)])
}

/// Pure-state projector `|ψ⟩⟨ψ|`.
pub fn projector(psi: &[C64]) -> Operator {
    let v = DVector::from_column_slice(psi);
    &v * v.adjoint()
}

/// Orthonormal Hermitian operator basis: `σ_a/√2` on the qubit, or
/// `(σ_a ⊗ τ_b)/2` on the product space, with `σ_0 = 𝟙`.
///
/// In this frame every Hermiticity-preserving superoperator is a real matrix.
#[derive(Clone, Debug)]
pub struct PauliFrame {
    dim: usize,
    /// Nonzero entries `(index, value)` of `vec(B_k)` for each basis element.
    columns: Vec<Vec<(usize, C64)>>,
}

impl PauliFrame {
    pub fn new(dim: usize) -> Result<Self> {
        let singles = [
            identity(2),
            pauli2(Axis::X),
            pauli2(Axis::Y),
            pauli2(Axis::Z),
        ];
        let elements: Vec<Operator> = match dim {
            2 => singles.iter().map(|m| m * c(std::f64::consts::FRAC_1_SQRT_2)).collect(),
            4 => singles
                .iter()
                .flat_map(|a| singles.iter().map(move |b| a.kronecker(b) * c(0.5)))
                .collect(),
            _ => {
                return Err(Error::Dimension {
                    expected: 4,
                    rows: dim,
                    cols: dim,
                })
            }
        };
        let columns = elements
            .iter()
            .map(|b| {
                vec(b)
                    .iter()
                    .enumerate()
                    .filter(|(_, z)| z.norm() > 0.0)
                    .map(|(i, &z)| (i, z))
                    .collect()
            })
            .collect();
        Ok(PauliFrame { dim, columns })
    }

    /// Hilbert-space dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Dense change of basis whose columns are `vec(B_k)`.
    pub fn matrix(&self) -> DMatrix<C64> {
        let n = self.columns.len();
        let mut t = DMatrix::zeros(n, n);
        for (k, col) in self.columns.iter().enumerate() {
            for &(i, z) in col {
                t[(i, k)] = z;
            }
        }
        t
    }
}

/// `Re(T_out† S T_in)`: a superoperator from `input`-frame coordinates to
/// `output`-frame coordinates. The discarded imaginary part vanishes when `S`
/// preserves Hermiticity.
pub fn real_superop(s: &DMatrix<C64>, output: &PauliFrame, input: &PauliFrame) -> DMatrix<f64> {
    let rows = output.columns.len();
    let n = s.nrows();
    let data = s.as_slice();
    let mut out = DMatrix::zeros(rows, input.columns.len());
    let mut tmp = vec![C64::new(0.0, 0.0); n];
    for (l, col) in input.columns.iter().enumerate() {
        // tmp = S · vec(B_l)
        tmp.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        for &(j, v) in col {
            for (t, &x) in tmp.iter_mut().zip(&data[j * n..(j + 1) * n]) {
                *t += x * v;
            }
        }
        for (k, row) in output.columns.iter().enumerate() {
            out[(k, l)] = row.iter().map(|&(i, u)| (u.conj() * tmp[i]).re).sum();
        }
    }
    out
}

/// Inverse of [`real_superop`].
pub fn complex_superop(m: &DMatrix<f64>, output: &PauliFrame, input: &PauliFrame) -> DMatrix<C64> {
    let m = m.map(|x| C64::new(x, 0.0));
    output.matrix() * m * input.matrix().adjoint()
}
