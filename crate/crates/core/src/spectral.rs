//! Spectral truncation `M_eps = P_eps M P_eps`, where `P_eps` keeps the
//! eigenspaces of `M` with `|lambda| >= eps / 2`.

use nalgebra::SymmetricEigen;

use crate::error::{Error, Result};
use crate::qmath::{check_dim, CMatrix, CVector, HermitianObservable, Projector, PureState, C64};

/// Eigenvalues this close below the threshold are still kept.
pub const THRESHOLD_SLACK: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct SpectralTruncation {
    source: HermitianObservable,
    epsilon: f64,
    projector_eps: Projector,
    m_eps: CMatrix,
    support_matrix: CMatrix,
    kept_eigenvalues: Vec<f64>,
    discarded_eigenvalues: Vec<f64>,
}

impl SpectralTruncation {
    pub fn source(&self) -> &HermitianObservable {
        &self.source
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn dim(&self) -> usize {
        self.source.dim()
    }

    pub fn projector(&self) -> &Projector {
        &self.projector_eps
    }

    /// `P_eps M P_eps` in the ambient basis.
    pub fn m_eps(&self) -> &CMatrix {
        &self.m_eps
    }

    /// `M_eps` written in [`Self::support_basis`] coordinates (`d_eps x d_eps`).
    pub fn support_matrix(&self) -> &CMatrix {
        &self.support_matrix
    }

    pub fn support_basis(&self) -> &CMatrix {
        self.projector_eps.basis()
    }

    pub fn d_eps(&self) -> usize {
        self.kept_eigenvalues.len()
    }

    pub fn kept_eigenvalues(&self) -> &[f64] {
        &self.kept_eigenvalues
    }

    pub fn discarded_eigenvalues(&self) -> &[f64] {
        &self.discarded_eigenvalues
    }

    /// `||M_eps||_2^2 = Tr[M_eps^2]`.
    pub fn hs_norm_sq(&self) -> f64 {
        self.kept_eigenvalues.iter().map(|l| l * l).sum()
    }

    /// Coordinates of `P_eps |s>` in the support basis.
    pub fn support_coords(&self, s: &PureState) -> Result<CVector> {
        check_dim(self.dim(), s.dim())?;
        Ok(self.projector_eps.coords(s.amplitudes()))
    }

    /// `<a|M_eps|b>`.
    pub fn bilinear(&self, a: &PureState, b: &PureState) -> Result<C64> {
        let ca = self.support_coords(a)?;
        let cb = self.support_coords(b)?;
        Ok(ca.dotc(&(&self.support_matrix * cb)))
    }

    /// `M_eps` as an observable in the ambient space.
    pub fn m_eps_observable(&self) -> Result<HermitianObservable> {
        HermitianObservable::new(self.m_eps.clone())
    }
}

/// Keep every eigenpair with `|lambda| >= epsilon / 2` (ties toward keeping).
pub fn truncate(m: &HermitianObservable, epsilon: f64) -> Result<SpectralTruncation> {
    if !(epsilon > 0.0 && epsilon <= 2.0) {
        return Err(Error::InvalidEpsilon(epsilon));
    }
    let d = m.dim();
    let eig = SymmetricEigen::new(m.matrix().clone());
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));

    let threshold = epsilon / 2.0 - THRESHOLD_SLACK;
    let mut kept = Vec::new();
    let mut discarded = Vec::new();
    let mut columns: Vec<CVector> = Vec::new();
    for i in order {
        let lambda = eig.eigenvalues[i];
        if lambda.abs() >= threshold {
            kept.push(lambda);
            columns.push(canonical_phase(eig.eigenvectors.column(i).into_owned()));
        } else {
            discarded.push(lambda);
        }
    }

    let basis = if columns.is_empty() { CMatrix::zeros(d, 0) } else { CMatrix::from_columns(&columns) };
    let projector_eps = Projector::from_basis(basis)?;
    let p = projector_eps.matrix();
    let m_eps = p * m.matrix() * p;
    let b = projector_eps.basis();
    let s = b.adjoint() * m.matrix() * b;
    let support_matrix = (s.clone() + s.adjoint()).scale(0.5);

    Ok(SpectralTruncation {
        source: m.clone(),
        epsilon,
        projector_eps,
        m_eps,
        support_matrix,
        kept_eigenvalues: kept,
        discarded_eigenvalues: discarded,
    })
}

/// Rotate an eigenvector so its largest-magnitude entry is real and positive.
fn canonical_phase(v: CVector) -> CVector {
    let (mut best, mut best_norm) = (0usize, -1.0f64);
    for (i, z) in v.iter().enumerate() {
        // strict improvement by a relative margin so near-ties resolve to the
        // lowest index
        if z.norm() > best_norm * (1.0 + 1e-9) {
            best = i;
            best_norm = z.norm();
        }
    }
    if best_norm <= 0.0 {
        return v;
    }
    let phase = v[best].conj() / best_norm;
    v * phase
}

/// `| |<a|M|b>|^2 - |<a|M_eps|b>|^2 |`, at most `epsilon / 2` for unit `a, b`.
pub fn truncation_gap(
    m: &HermitianObservable,
    trunc: &SpectralTruncation,
    a: &PureState,
    b: &PureState,
) -> Result<f64> {
    check_dim(m.dim(), trunc.dim())?;
    if (m.matrix() - trunc.source.matrix()).norm() > 1e-12 {
        return Err(Error::MismatchedTruncation);
    }
    let full = crate::qmath::bilinear(a, m, b)?.norm_sqr();
    let cut = trunc.bilinear(a, b)?.norm_sqr();
    Ok((full - cut).abs())
}
