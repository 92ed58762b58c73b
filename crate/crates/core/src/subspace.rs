//! Thresholded spectral projectors and the candidate subspace `V`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::clustering::ClusterPartition;
use crate::error::{invalid, Error, Result};
use crate::linalg::{asymmetry, orthonormal_basis, projector, sym_eigen};
use crate::moments::ContractionContext;
use crate::network::AbsNetwork;

/// Largest tolerated `max |M − Mᵀ|` for a thresholding input.
pub const SYMMETRY_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdedProjector {
    pub order: usize,
    pub threshold: f64,
    /// Orthonormal columns.
    pub basis: DMatrix<f64>,
    /// Eigenvalues whose eigenvectors were kept.
    pub retained: Vec<f64>,
}

impl ThresholdedProjector {
    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        projector(&self.basis)
    }
}

/// Keeps eigenvectors of `m` with `|ρ| ≥ threshold`.
pub fn threshold_projector(m: &DMatrix<f64>, threshold: f64, order: usize) -> Result<ThresholdedProjector> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch { expected: m.nrows(), got: m.ncols() });
    }
    if !(threshold > 0.0) {
        return invalid("threshold must be positive");
    }
    if m.iter().any(|v| !v.is_finite()) {
        return invalid("matrix has non-finite entries");
    }
    let asym = asymmetry(m);
    if asym > SYMMETRY_TOL {
        return invalid(format!("matrix is not symmetric (max asymmetry {asym:e})"));
    }
    let (values, vectors) = sym_eigen(m);
    let keep: Vec<usize> = (0..values.len()).filter(|&i| values[i].abs() >= threshold).collect();
    let cols: Vec<DVector<f64>> = keep.iter().map(|&i| vectors.column(i).into_owned()).collect();
    let basis = if cols.is_empty() { DMatrix::zeros(m.nrows(), 0) } else { DMatrix::from_columns(&cols) };
    Ok(ThresholdedProjector { order, threshold, basis, retained: keep.iter().map(|&i| values[i]).collect() })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CandidateSubspace {
    /// Orthonormal columns.
    pub basis: DMatrix<f64>,
    pub threshold: f64,
    /// Eigenvalues `κ` of `ΣΠ_ℓ` that were kept.
    pub kappas: Vec<f64>,
    /// Full spectrum of `ΣΠ_ℓ`, descending.
    pub spectrum: Vec<f64>,
    /// Orders whose projector had positive rank.
    pub contributing_orders: Vec<usize>,
}

impl CandidateSubspace {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn projector(&self) -> DMatrix<f64> {
        projector(&self.basis)
    }

    /// Subspace spanned by the given basis, e.g. for tests.
    pub fn from_basis(basis: DMatrix<f64>) -> Self {
        let r = basis.ncols();
        Self { basis, threshold: 1.0, kappas: vec![1.0; r], spectrum: vec![1.0; r], contributing_orders: Vec::new() }
    }
}

/// Eigenvectors of `Σ Π_ℓ` with eigenvalue `≥ threshold`.
pub fn extract_v(projectors: &[ThresholdedProjector], threshold: f64) -> Result<CandidateSubspace> {
    let first = projectors.first().ok_or_else(|| Error::InvalidArgument("no projectors supplied".into()))?;
    if !(threshold > 0.0) {
        return invalid("threshold must be positive");
    }
    let d = first.dim();
    let mut sum = DMatrix::zeros(d, d);
    for p in projectors {
        if p.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, got: p.dim() });
        }
        if p.rank() > 0 {
            sum.gemm(1.0, &p.basis, &p.basis.transpose(), 1.0);
        }
    }
    let (values, vectors) = sym_eigen(&crate::linalg::symmetrize(&sum));
    let keep: Vec<usize> = (0..d).filter(|&i| values[i] >= threshold).collect();
    let cols: Vec<DVector<f64>> = keep.iter().map(|&i| vectors.column(i).into_owned()).collect();
    let basis = if cols.is_empty() { DMatrix::zeros(d, 0) } else { DMatrix::from_columns(&cols) };
    Ok(CandidateSubspace {
        basis,
        threshold,
        kappas: keep.iter().map(|&i| values[i]).collect(),
        spectrum: values.iter().copied().collect(),
        contributing_orders: projectors.iter().filter(|p| p.rank() > 0).map(|p| p.order).collect(),
    })
}

/// `‖(I − VVᵀ) u‖`.
pub fn distance_to_subspace(u: &DVector<f64>, v: &CandidateSubspace) -> Result<f64> {
    if u.len() != v.ambient_dim() {
        return Err(Error::DimensionMismatch { expected: v.ambient_dim(), got: u.len() });
    }
    if v.dim() == 0 {
        return Ok(u.norm());
    }
    let coords = v.basis.transpose() * u;
    Ok((u - &v.basis * coords).norm())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuronContainment {
    /// Original neuron index.
    pub neuron: usize,
    pub cluster: usize,
    pub big: bool,
    pub distance: f64,
    pub covered: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContainmentReport {
    pub dim_v: usize,
    pub width: usize,
    /// `Tr(Π_U⊥ Π_V)` with `U = span{uᵢ}`.
    pub trace_outside_span: f64,
    /// `(ℓ, |Tr(Π_V⊥ M_ℓ)|)`.
    pub moment_leakage: Vec<(usize, f64)>,
    pub cover_tolerance: f64,
    pub neurons: Vec<NeuronContainment>,
    /// Neurons in big clusters farther than the tolerance from `V`.
    pub uncovered_big: usize,
}

/// Ground-truth diagnostics for a candidate subspace. `moments` holds
/// `(ℓ, M_ℓ)` pairs.
pub fn containment_diagnostics(
    net: &AbsNetwork,
    ctx: &ContractionContext,
    partition: &ClusterPartition,
    v: &CandidateSubspace,
    moments: &[(usize, DMatrix<f64>)],
    cover_tolerance: f64,
) -> Result<ContainmentReport> {
    let d = net.dim();
    if v.ambient_dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: v.ambient_dim() });
    }
    let us: Vec<DVector<f64>> = net.neurons().iter().map(|n| n.u.clone()).collect();
    let u_basis = orthonormal_basis(d, &us, 1e-10);
    let overlap = (u_basis.transpose() * &v.basis).norm_squared();
    let trace_outside_span = v.dim() as f64 - overlap;

    let mut moment_leakage = Vec::with_capacity(moments.len());
    for (l, m) in moments {
        let inside = (v.basis.transpose() * m * &v.basis).trace();
        moment_leakage.push((*l, (m.trace() - inside).abs()));
    }

    let mut neurons = Vec::with_capacity(net.width());
    for s in 0..ctx.len() {
        let i = ctx.permutation[s];
        let cluster = partition
            .cluster_of(s)
            .ok_or_else(|| Error::Internal(format!("sorted position {s} not in any cluster")))?;
        let distance = distance_to_subspace(&us[i], v)?;
        neurons.push(NeuronContainment {
            neuron: i,
            cluster,
            big: partition.is_big(cluster),
            distance,
            covered: distance <= cover_tolerance,
        });
    }
    neurons.sort_by_key(|n| n.neuron);
    Ok(ContainmentReport {
        dim_v: v.dim(),
        width: net.width(),
        trace_outside_span,
        moment_leakage,
        cover_tolerance,
        uncovered_big: neurons.iter().filter(|n| n.big && !n.covered).count(),
        neurons,
    })
}
