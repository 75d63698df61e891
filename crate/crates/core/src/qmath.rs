//! Dense complex linear algebra for pure states and observables.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = nalgebra::Complex<f64>;
pub type CVector = DVector<C64>;
pub type CMatrix = DMatrix<C64>;

/// Tolerance on the Euclidean norm of a [`PureState`].
pub const NORM_TOL: f64 = 1e-10;
/// Below this norm a projected vector is treated as exactly zero.
pub const ZERO_TOL: f64 = 1e-12;

const HERMITIAN_TOL: f64 = 1e-10;
const OP_NORM_SLACK: f64 = 1e-9;
const UNITARY_TOL: f64 = 1e-9;
const PROJECTOR_TOL: f64 = 1e-9;
const RANK_TOL: f64 = 1e-6;

/// A unit vector in `C^dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amps: CVector,
}

impl PureState {
    pub fn new(amps: CVector) -> Result<Self> {
        if amps.is_empty() {
            return Err(Error::InvalidDimension(0));
        }
        let norm = amps.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized { norm });
        }
        Ok(Self { amps })
    }

    /// Rescale `amps` to unit norm.
    pub fn normalize(amps: CVector) -> Result<Self> {
        if amps.is_empty() {
            return Err(Error::InvalidDimension(0));
        }
        let norm = amps.norm();
        if norm < ZERO_TOL {
            return Err(Error::ZeroVector);
        }
        Ok(Self { amps: amps.unscale(norm) })
    }

    pub fn from_slice(amps: &[C64]) -> Result<Self> {
        Self::new(CVector::from_column_slice(amps))
    }

    pub fn from_real(amps: &[f64]) -> Result<Self> {
        Self::new(CVector::from_iterator(amps.len(), amps.iter().map(|&x| C64::new(x, 0.0))))
    }

    /// Computational basis vector `|index>`.
    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(0));
        }
        if index >= dim {
            return Err(Error::InvalidParameter(format!("basis index {index} out of range for dimension {dim}")));
        }
        let mut amps = CVector::zeros(dim);
        amps[index] = C64::new(1.0, 0.0);
        Ok(Self { amps })
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amps
    }

    pub fn into_amplitudes(self) -> CVector {
        self.amps
    }

    /// Append `extra` zero amplitudes.
    pub fn embed(&self, extra: usize) -> Self {
        let mut amps = CVector::zeros(self.dim() + extra);
        amps.rows_mut(0, self.dim()).copy_from(&self.amps);
        Self { amps }
    }

    pub fn density(&self) -> CMatrix {
        &self.amps * self.amps.adjoint()
    }
}

/// A Hermitian matrix with operator norm at most one.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianObservable {
    matrix: CMatrix,
}

impl HermitianObservable {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        check_square(&matrix)?;
        let deviation = hermitian_deviation(&matrix);
        if deviation > HERMITIAN_TOL {
            return Err(Error::NotHermitian { deviation });
        }
        let norm = operator_norm(&matrix);
        if norm > 1.0 + OP_NORM_SLACK {
            return Err(Error::OperatorNormTooLarge { norm });
        }
        Ok(Self { matrix })
    }

    pub fn identity(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(0));
        }
        Ok(Self { matrix: CMatrix::identity(dim, dim) })
    }

    pub fn diagonal(values: &[f64]) -> Result<Self> {
        let d = DVector::from_iterator(values.len(), values.iter().map(|&x| C64::new(x, 0.0)));
        Self::new(CMatrix::from_diagonal(&d))
    }

    /// `U diag(values) U^dagger`.
    pub fn from_spectrum(values: &[f64], basis: &UnitaryMatrix) -> Result<Self> {
        if values.len() != basis.dim() {
            return Err(Error::DimensionMismatch { expected: basis.dim(), actual: values.len() });
        }
        let u = basis.matrix();
        let mut scaled = u.clone();
        for (j, &v) in values.iter().enumerate() {
            scaled.column_mut(j).scale_mut(v);
        }
        let mut m = scaled * u.adjoint();
        symmetrize(&mut m);
        Self::new(m)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// Block-diagonal `M (+) 0_extra`.
    pub fn embed(&self, extra: usize) -> Self {
        let d = self.dim();
        let mut m = CMatrix::zeros(d + extra, d + extra);
        m.view_mut((0, 0), (d, d)).copy_from(&self.matrix);
        Self { matrix: m }
    }

    pub fn operator_norm(&self) -> f64 {
        operator_norm(&self.matrix)
    }
}

/// A unitary matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryMatrix {
    matrix: CMatrix,
}

impl UnitaryMatrix {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        check_square(&matrix)?;
        let n = matrix.nrows();
        let deviation = (matrix.adjoint() * &matrix - CMatrix::identity(n, n)).norm();
        if deviation > UNITARY_TOL {
            return Err(Error::NotUnitary { deviation });
        }
        Ok(Self { matrix })
    }

    pub fn identity(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(0));
        }
        Ok(Self { matrix: CMatrix::identity(dim, dim) })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn apply(&self, state: &PureState) -> Result<PureState> {
        check_dim(self.dim(), state.dim())?;
        PureState::normalize(&self.matrix * state.amplitudes())
    }
}

/// An orthogonal projector, stored together with an orthonormal basis of its
/// image so that callers can work in subspace coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    matrix: CMatrix,
    basis: CMatrix,
}

impl Projector {
    /// Projector onto the span of the (orthonormal) columns of `basis`.
    pub fn from_basis(basis: CMatrix) -> Result<Self> {
        let dim = basis.nrows();
        if dim == 0 {
            return Err(Error::InvalidDimension(0));
        }
        let r = basis.ncols();
        if r > dim {
            return Err(Error::NotProjector(format!("{r} basis vectors in dimension {dim}")));
        }
        let gram = basis.adjoint() * &basis;
        let deviation = (gram - CMatrix::identity(r, r)).norm();
        if deviation > PROJECTOR_TOL {
            return Err(Error::NotProjector(format!("basis columns not orthonormal (deviation {deviation:e})")));
        }
        let mut matrix = &basis * basis.adjoint();
        symmetrize(&mut matrix);
        Ok(Self { matrix, basis })
    }

    /// Validate an explicit projector matrix and extract a basis of its image.
    pub fn from_matrix(matrix: CMatrix) -> Result<Self> {
        check_square(&matrix)?;
        let herm = hermitian_deviation(&matrix);
        if herm > PROJECTOR_TOL {
            return Err(Error::NotProjector(format!("not Hermitian (deviation {herm:e})")));
        }
        let idem = (&matrix * &matrix - &matrix).norm();
        if idem > PROJECTOR_TOL {
            return Err(Error::NotProjector(format!("not idempotent (deviation {idem:e})")));
        }
        let trace = matrix.trace().re;
        let rank = trace.round();
        if (trace - rank).abs() > RANK_TOL {
            return Err(Error::NotProjector(format!("non-integral trace {trace}")));
        }
        let eig = SymmetricEigen::new(matrix.clone());
        let cols: Vec<CVector> = eig
            .eigenvalues
            .iter()
            .zip(eig.eigenvectors.column_iter())
            .filter(|(&l, _)| l > 0.5)
            .map(|(_, c)| c.into_owned())
            .collect();
        let basis = if cols.is_empty() { CMatrix::zeros(matrix.nrows(), 0) } else { CMatrix::from_columns(&cols) };
        Ok(Self { matrix, basis })
    }

    /// Projector onto computational basis vectors `start..end`.
    pub fn coordinate_block(dim: usize, start: usize, end: usize) -> Result<Self> {
        if start > end || end > dim {
            return Err(Error::InvalidParameter(format!("bad block {start}..{end} in dim {dim}")));
        }
        let mut basis = CMatrix::zeros(dim, end - start);
        for (j, i) in (start..end).enumerate() {
            basis[(i, j)] = C64::new(1.0, 0.0);
        }
        Self::from_basis(basis)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// `dim x rank` matrix with orthonormal columns spanning the image.
    pub fn basis(&self) -> &CMatrix {
        &self.basis
    }

    /// Coordinates of `v` in the image basis (`B^dagger v`).
    pub fn coords(&self, v: &CVector) -> CVector {
        self.basis.adjoint() * v
    }

    pub fn apply(&self, v: &CVector) -> CVector {
        &self.basis * self.coords(v)
    }

    /// `<s|P|s>`.
    pub fn weight(&self, state: &PureState) -> Result<f64> {
        check_dim(self.dim(), state.dim())?;
        Ok(self.coords(state.amplitudes()).norm_squared())
    }

    /// Norm of the component of `state` outside the image.
    pub fn residual(&self, state: &PureState) -> Result<f64> {
        check_dim(self.dim(), state.dim())?;
        Ok((state.amplitudes() - self.apply(state.amplitudes())).norm())
    }
}

fn check_square(m: &CMatrix) -> Result<()> {
    if m.nrows() == 0 {
        return Err(Error::InvalidDimension(0));
    }
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch { expected: m.nrows(), actual: m.ncols() });
    }
    Ok(())
}

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

fn hermitian_deviation(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

fn symmetrize(m: &mut CMatrix) {
    let h = (m.clone() + m.adjoint()).scale(0.5);
    *m = h;
}

/// Largest absolute eigenvalue of a Hermitian matrix.
fn operator_norm(m: &CMatrix) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.amax()
}

/// One sample of `N(0, 1/2) + i N(0, 1/2)`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn gaussian_vector<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CVector {
    CVector::from_fn(dim, |_, _| complex_gaussian(rng))
}

/// Haar-random pure state: a normalized complex Gaussian vector.
pub fn haar_state<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<PureState> {
    if dim == 0 {
        return Err(Error::InvalidDimension(0));
    }
    loop {
        let g = gaussian_vector(dim, rng);
        if g.norm() >= ZERO_TOL {
            return PureState::normalize(g);
        }
    }
}

/// Haar-random unitary: QR of a Ginibre matrix with the phases of `diag(R)`
/// folded back into `Q`.
pub fn haar_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<UnitaryMatrix> {
    if dim == 0 {
        return Err(Error::InvalidDimension(0));
    }
    let g = CMatrix::from_fn(dim, dim, |_, _| complex_gaussian(rng));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..dim {
        let rjj = r[(j, j)];
        let n = rjj.norm();
        let phase = if n > 0.0 { rjj / n } else { C64::new(1.0, 0.0) };
        q.column_mut(j).apply(|z| *z *= phase);
    }
    Ok(UnitaryMatrix { matrix: q })
}

/// `<a|b>`, conjugate-linear in `a`.
pub fn overlap(a: &PureState, b: &PureState) -> Result<C64> {
    check_dim(a.dim(), b.dim())?;
    Ok(a.amplitudes().dotc(b.amplitudes()))
}

/// `<a|M|b>`.
pub fn bilinear(a: &PureState, m: &HermitianObservable, b: &PureState) -> Result<C64> {
    check_dim(a.dim(), m.dim())?;
    check_dim(a.dim(), b.dim())?;
    Ok(a.amplitudes().dotc(&(m.matrix() * b.amplitudes())))
}

/// Two-outcome projective measurement `{P, I - P}`.
///
/// Returns whether `P` was observed and the normalized post-measurement state.
pub fn born_two_outcome<R: Rng + ?Sized>(s: &PureState, p: &Projector, rng: &mut R) -> Result<(bool, PureState)> {
    check_dim(p.dim(), s.dim())?;
    let inside = p.apply(s.amplitudes());
    let outside = s.amplitudes() - &inside;
    let n_in = inside.norm();
    let n_out = outside.norm();
    let accept = if n_in < ZERO_TOL {
        false
    } else if n_out < ZERO_TOL {
        true
    } else {
        let prob = (n_in * n_in).min(1.0);
        rng.random::<f64>() < prob
    };
    let post = if accept { inside.unscale(n_in) } else { outside.unscale(n_out) };
    Ok((accept, PureState { amps: post }))
}

/// Random observable `U diag(lambda) U^dagger` with Haar `U`, eigenvalues
/// uniform on `[-1, 1]` and one eigenvalue pinned to `+-1` so that `||M|| = 1`.
pub fn random_observable<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<HermitianObservable> {
    let u = haar_unitary(dim, rng)?;
    let mut values: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
    values[0] = if rng.random::<bool>() { 1.0 } else { -1.0 };
    HermitianObservable::from_spectrum(&values, &u)
}
