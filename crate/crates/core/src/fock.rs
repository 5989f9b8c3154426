//! Truncated Fock-space linear algebra: spaces, states, entropies, norms and
//! the gentle-operator primitive.
//!
//! Conventions: `a = (x + ip)/√2`, `H = a*a` with no vacuum offset, logs in
//! base 2. Multi-mode indices are row-major with mode 0 most significant.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

pub type Operator = DMatrix<C64>;

/// Negative eigenvalues down to this value are clipped to zero.
pub const CLIP_TOL: f64 = 1e-10;
/// Eigenvalues below this are ignored by the entropy.
pub const ENTROPY_FLOOR: f64 = 1e-14;
/// Default tolerated truncation tail mass.
pub const TAIL_TOL: f64 = 1e-6;
/// Largest supported number of modes.
pub const MAX_MODES: usize = 3;

pub(crate) const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub(crate) const ONE: C64 = C64 { re: 1.0, im: 0.0 };

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FockSpace {
    pub cutoff: usize,
    pub modes: usize,
}

impl FockSpace {
    pub fn new(cutoff: usize, modes: usize) -> Result<Self> {
        if cutoff < 2 {
            return domain(format!("cutoff D = {cutoff} must be at least 2"));
        }
        if modes == 0 || modes > MAX_MODES {
            return domain(format!("modes M = {modes} must lie in 1..={MAX_MODES}"));
        }
        Ok(Self { cutoff, modes })
    }

    pub fn single(cutoff: usize) -> Result<Self> {
        Self::new(cutoff, 1)
    }

    pub fn dim(&self) -> usize {
        self.cutoff.pow(self.modes as u32)
    }

    /// Occupation numbers of basis index `idx`, mode 0 first.
    pub fn occupations(&self, mut idx: usize) -> Vec<usize> {
        let mut occ = vec![0; self.modes];
        for slot in occ.iter_mut().rev() {
            *slot = idx % self.cutoff;
            idx /= self.cutoff;
        }
        occ
    }

    /// Diagonal of the total photon-number operator.
    pub fn energies(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|i| self.occupations(i).iter().sum::<usize>() as f64)
            .collect()
    }

    pub fn number_operator(&self, mode: usize) -> Result<Operator> {
        if mode >= self.modes {
            return domain(format!("mode {mode} out of range for {} modes", self.modes));
        }
        let diag: Vec<C64> = (0..self.dim())
            .map(|i| C64::new(self.occupations(i)[mode] as f64, 0.0))
            .collect();
        Ok(Operator::from_diagonal(&DVector::from_vec(diag)))
    }

    pub fn total_number(&self) -> Operator {
        let diag: Vec<C64> = self.energies().into_iter().map(|e| C64::new(e, 0.0)).collect();
        Operator::from_diagonal(&DVector::from_vec(diag))
    }

    pub fn annihilation(&self, mode: usize) -> Result<Operator> {
        if mode >= self.modes {
            return domain(format!("mode {mode} out of range for {} modes", self.modes));
        }
        let a = single_mode_annihilation(self.cutoff);
        let mut out = Operator::identity(1, 1);
        for m in 0..self.modes {
            let factor = if m == mode { a.clone() } else { Operator::identity(self.cutoff, self.cutoff) };
            out = out.kronecker(&factor);
        }
        Ok(out)
    }
}

/// Default cutoff `ceil(8 (E_max + 1))`.
pub fn default_cutoff(e_max: f64) -> usize {
    (8.0 * (e_max.max(0.0) + 1.0)).ceil() as usize
}

pub fn single_mode_annihilation(cutoff: usize) -> Operator {
    let mut a = Operator::zeros(cutoff, cutoff);
    for n in 1..cutoff {
        a[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    a
}

pub fn diagonal(values: &[f64]) -> Operator {
    let diag: Vec<C64> = values.iter().map(|&v| C64::new(v, 0.0)).collect();
    Operator::from_diagonal(&DVector::from_vec(diag))
}

/// Largest entry of `|m − m*|`.
pub fn hermitian_deviation(m: &Operator) -> f64 {
    let mut dev = 0.0f64;
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

pub fn hermitian_part(m: &Operator) -> Operator {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// Eigen-decomposition of a Hermitian matrix (the Hermitian part is used).
pub fn eigh(m: &Operator) -> (Vec<f64>, Operator) {
    let eig = hermitian_part(m).symmetric_eigen();
    (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
}

pub fn eigvalsh(m: &Operator) -> Vec<f64> {
    hermitian_part(m).symmetric_eigenvalues().iter().copied().collect()
}

/// Clip eigenvalues in `[−CLIP_TOL, 0)` to zero; more negative values are an error.
pub fn clip_spectrum(values: &mut [f64]) -> Result<()> {
    for v in values.iter_mut() {
        if *v < -CLIP_TOL {
            return Err(Error::NotPositive(*v));
        }
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok(())
}

/// Apply a real function to a Hermitian matrix through its spectrum.
pub fn spectral_map(values: &[f64], vectors: &Operator, f: impl Fn(f64) -> f64) -> Operator {
    let n = values.len();
    let mut scaled = vectors.clone();
    for j in 0..n {
        let fj = f(values[j]);
        for i in 0..n {
            scaled[(i, j)] *= fj;
        }
    }
    scaled * vectors.adjoint()
}

pub fn psd_sqrt(m: &Operator) -> Result<Operator> {
    let (mut vals, vecs) = eigh(m);
    clip_spectrum(&mut vals)?;
    Ok(spectral_map(&vals, &vecs, f64::sqrt))
}

/// Trace norm of a Hermitian matrix.
pub fn trace_norm_hermitian(m: &Operator) -> f64 {
    eigvalsh(m).iter().map(|v| v.abs()).sum()
}

/// Trace norm of an arbitrary matrix (sum of singular values).
pub fn trace_norm(m: &Operator) -> f64 {
    m.singular_values().iter().sum()
}

pub fn trace(m: &Operator) -> C64 {
    m.trace()
}

/// `tr(A* B)` for equally shaped matrices.
pub fn inner(a: &Operator, b: &Operator) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn frobenius(m: &Operator) -> f64 {
    m.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest singular value.
pub fn operator_norm(m: &Operator) -> f64 {
    m.singular_values().iter().cloned().fold(0.0, f64::max)
}

/// Partial trace keeping the listed factors (in their original order).
pub fn partial_trace(m: &Operator, dims: &[usize], keep: &[usize]) -> Result<Operator> {
    let total: usize = dims.iter().product();
    if m.nrows() != total || m.ncols() != total {
        return Err(Error::DimensionMismatch { expected: total, found: m.nrows() });
    }
    let k = dims.len();
    let traced: Vec<usize> = (0..k).filter(|i| !keep.contains(i)).collect();
    let kept_dim: usize = keep.iter().map(|&i| dims[i]).product();
    let traced_dim: usize = traced.iter().map(|&i| dims[i]).product();
    let mut strides = vec![1usize; k];
    for i in (0..k.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * dims[i + 1];
    }
    let compose = |kept_idx: usize, traced_idx: usize| -> usize {
        let mut idx = 0;
        let mut rem = kept_idx;
        for &f in keep.iter().rev() {
            idx += (rem % dims[f]) * strides[f];
            rem /= dims[f];
        }
        let mut rem = traced_idx;
        for &f in traced.iter().rev() {
            idx += (rem % dims[f]) * strides[f];
            rem /= dims[f];
        }
        idx
    };
    let mut out = Operator::zeros(kept_dim, kept_dim);
    for i in 0..kept_dim {
        for j in 0..kept_dim {
            let mut acc = ZERO;
            for t in 0..traced_dim {
                acc += m[(compose(i, t), compose(j, t))];
            }
            out[(i, j)] = acc;
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// States

#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    amps: DVector<C64>,
    tail_mass: f64,
}

impl PureState {
    /// Normalizes `amps`; fails on a zero vector.
    pub fn new(amps: DVector<C64>) -> Result<Self> {
        let norm = amps.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return domain("pure state amplitudes must have positive finite norm");
        }
        Ok(Self { amps: amps / C64::new(norm, 0.0), tail_mass: 0.0 })
    }

    pub fn with_tail(amps: DVector<C64>, tail_mass: f64) -> Result<Self> {
        let mut s = Self::new(amps)?;
        s.tail_mass = tail_mass;
        Ok(s)
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amps
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn projector(&self) -> Operator {
        &self.amps * self.amps.adjoint()
    }

    pub fn expectation(&self, op: &Operator) -> f64 {
        (self.amps.adjoint() * op * &self.amps)[(0, 0)].re
    }

    pub fn overlap(&self, other: &PureState) -> C64 {
        self.amps.dotc(&other.amps)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator {
    matrix: Operator,
    modes: usize,
    deficiency: f64,
}

impl DensityOperator {
    /// Validates Hermiticity, positivity (with clipping tolerance) and trace ≤ 1.
    pub fn new(matrix: Operator) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch { expected: matrix.nrows(), found: matrix.ncols() });
        }
        let scale = matrix.iter().map(|x| x.norm()).fold(1.0, f64::max);
        let dev = hermitian_deviation(&matrix);
        if dev > 1e-10 * scale {
            return Err(Error::NotHermitian(dev));
        }
        let matrix = hermitian_part(&matrix);
        let min = eigvalsh(&matrix).into_iter().fold(f64::INFINITY, f64::min);
        if min < -CLIP_TOL {
            return Err(Error::NotPositive(min));
        }
        let tr = matrix.trace().re;
        if tr > 1.0 + 1e-9 {
            return domain(format!("density operator trace {tr} exceeds 1"));
        }
        Ok(Self { matrix, modes: 1, deficiency: (1.0 - tr).max(0.0) })
    }

    pub fn from_pure(psi: &PureState) -> Self {
        Self { matrix: psi.projector(), modes: 1, deficiency: 0.0 }
    }

    /// Maximally mixed state on `dim` levels.
    pub fn maximally_mixed(dim: usize) -> Self {
        let m = Operator::identity(dim, dim) * C64::new(1.0 / dim as f64, 0.0);
        Self { matrix: m, modes: 1, deficiency: 0.0 }
    }

    /// `|i⟩⟨i|` on `dim` levels.
    pub fn basis(dim: usize, i: usize) -> Self {
        let mut m = Operator::zeros(dim, dim);
        m[(i, i)] = ONE;
        Self { matrix: m, modes: 1, deficiency: 0.0 }
    }

    pub fn with_modes(mut self, modes: usize) -> Self {
        self.modes = modes;
        self
    }

    pub fn matrix(&self) -> &Operator {
        &self.matrix
    }

    pub fn into_matrix(self) -> Operator {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn trace_deficiency(&self) -> f64 {
        self.deficiency
    }

    pub fn expectation(&self, op: &Operator) -> f64 {
        (op * &self.matrix).trace().re
    }

    pub fn tensor(&self, other: &DensityOperator) -> DensityOperator {
        let m = self.matrix.kronecker(&other.matrix);
        let tr = m.trace().re;
        Self { matrix: m, modes: self.modes + other.modes, deficiency: (1.0 - tr).max(0.0) }
    }

    /// Spectral decomposition `Σ p_k |v_k⟩⟨v_k|` keeping weights above `floor`.
    pub fn ensemble_decomposition(&self, floor: f64) -> Vec<(f64, DVector<C64>)> {
        let (vals, vecs) = eigh(&self.matrix);
        vals.iter()
            .enumerate()
            .filter(|(_, &p)| p > floor)
            .map(|(k, &p)| (p, vecs.column(k).into_owned()))
            .collect()
    }

    /// Returns the pure state if the operator has rank one (within `tol`).
    pub fn as_pure(&self, tol: f64) -> Option<PureState> {
        let parts = self.ensemble_decomposition(tol);
        if parts.len() == 1 && (parts[0].0 - self.trace()).abs() <= tol.max(1e-9) {
            PureState::new(parts[0].1.clone()).ok()
        } else {
            None
        }
    }
}

/// `|n⟩` on a single-mode space.
pub fn fock_state(n: usize, space: &FockSpace) -> Result<PureState> {
    if n >= space.dim() {
        return domain(format!("basis index {n} outside dimension {}", space.dim()));
    }
    let mut amps = DVector::from_element(space.dim(), ZERO);
    amps[n] = ONE;
    PureState::new(amps)
}

pub fn coherent_state(xi: [f64; 2], space: &FockSpace) -> Result<PureState> {
    coherent_state_with_tol(xi, space, TAIL_TOL)
}

/// Coherent state `|ξ⟩ = D(ξ)|0⟩`, amplitudes `e^{−|a|²/2} aⁿ/√n!` with `a = (ξ₁+iξ₂)/√2`.
pub fn coherent_state_with_tol(xi: [f64; 2], space: &FockSpace, tol: f64) -> Result<PureState> {
    if space.modes != 1 {
        return domain("coherent_state requires a single mode");
    }
    let a = C64::new(xi[0], xi[1]) / 2f64.sqrt();
    let mean = a.norm_sqr();
    let d = space.cutoff;
    let mut amps = DVector::from_element(d, ZERO);
    let mut c = C64::new((-mean / 2.0).exp(), 0.0);
    for n in 0..d {
        amps[n] = c;
        c = c * a / ((n + 1) as f64).sqrt();
    }
    // Tail Σ_{n≥D} Poisson(mean); summed directly to avoid cancellation.
    let mut term = c.norm_sqr();
    let mut tail = 0.0;
    let mut n = d;
    let mut remaining = Vec::new();
    while term > 1e-300 || (n as f64) < mean {
        tail += term;
        remaining.push(term);
        n += 1;
        term *= mean / n as f64;
        if n > d + 100_000 {
            break;
        }
    }
    if tail > tol {
        let mut acc = tail;
        let mut suggested = d;
        for t in remaining {
            if acc <= tol {
                break;
            }
            acc -= t;
            suggested += 1;
        }
        return Err(Error::CutoffTooSmall { tail, tol, suggested });
    }
    PureState::with_tail(amps, tail)
}

pub fn thermal_state(mean_photons: f64, space: &FockSpace) -> Result<DensityOperator> {
    thermal_state_with_tol(mean_photons, space, TAIL_TOL)
}

/// Gibbs state `p_n ∝ (N̄/(N̄+1))ⁿ`, truncated and renormalized.
pub fn thermal_state_with_tol(mean_photons: f64, space: &FockSpace, tol: f64) -> Result<DensityOperator> {
    if space.modes != 1 {
        return domain("thermal_state requires a single mode");
    }
    if !(mean_photons >= 0.0) || !mean_photons.is_finite() {
        return domain(format!("mean photon number {mean_photons} must be finite and ≥ 0"));
    }
    let q = mean_photons / (mean_photons + 1.0);
    let d = space.cutoff;
    let tail = q.powi(d as i32);
    if tail > tol {
        let suggested = (tol.ln() / q.ln()).ceil() as usize;
        return Err(Error::CutoffTooSmall { tail, tol, suggested });
    }
    let weights: Vec<f64> = (0..d).map(|n| q.powi(n as i32)).collect();
    let total: f64 = weights.iter().sum();
    let diag: Vec<f64> = weights.iter().map(|w| w / total).collect();
    Ok(DensityOperator { matrix: diagonal(&diag), modes: 1, deficiency: 0.0 })
}

/// Von Neumann entropy in bits, ignoring eigenvalues below `ENTROPY_FLOOR`.
pub fn von_neumann_entropy(rho: &DensityOperator) -> Result<f64> {
    entropy_of_matrix(rho.matrix())
}

pub fn entropy_of_matrix(m: &Operator) -> Result<f64> {
    let dev = hermitian_deviation(m);
    if dev > 1e-9 {
        return Err(Error::NotHermitian(dev));
    }
    let mut vals = eigvalsh(m);
    clip_spectrum(&mut vals)?;
    Ok(shannon_bits(&vals))
}

/// `−Σ p log₂ p` over entries above `ENTROPY_FLOOR`.
pub fn shannon_bits(probs: &[f64]) -> f64 {
    probs
        .iter()
        .filter(|&&p| p >= ENTROPY_FLOOR)
        .map(|&p| -p * p.log2())
        .sum()
}

pub fn trace_distance(rho: &DensityOperator, sigma: &DensityOperator) -> Result<f64> {
    check_same_dim(rho.dim(), sigma.dim())?;
    Ok(0.5 * trace_norm_hermitian(&(rho.matrix() - sigma.matrix())))
}

/// `F(ρ,σ) = tr √(√ρ σ √ρ)`.
pub fn fidelity(rho: &DensityOperator, sigma: &DensityOperator) -> Result<f64> {
    check_same_dim(rho.dim(), sigma.dim())?;
    let s = psd_sqrt(rho.matrix())?;
    let inner = &s * sigma.matrix() * &s;
    let mut vals = eigvalsh(&inner);
    clip_spectrum(&mut vals)?;
    Ok(vals.iter().map(|v| v.sqrt()).sum::<f64>().min(1.0))
}

pub(crate) fn check_same_dim(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch { expected: a, found: b });
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct GentleOutcome {
    /// Unnormalized post-measurement operator `√T ρ √T`.
    pub post: Operator,
    /// `κ = 1 − tr ρT`.
    pub kappa: f64,
    /// `2√κ`.
    pub bound: f64,
}

/// Gentle measurement: returns `√T ρ √T` and the bound `2√κ` on `‖ρ − √TρT√T‖₁`.
pub fn gentle_measure(rho: &DensityOperator, t: &Operator) -> Result<GentleOutcome> {
    check_same_dim(rho.dim(), t.nrows())?;
    let dev = hermitian_deviation(t);
    if dev > 1e-10 {
        return Err(Error::NotHermitian(dev));
    }
    let (mut vals, vecs) = eigh(t);
    for v in vals.iter_mut() {
        if *v < -CLIP_TOL || *v > 1.0 + CLIP_TOL {
            return domain(format!("effect spectrum value {v} outside [0, 1]"));
        }
        *v = v.clamp(0.0, 1.0);
    }
    let sqrt_t = spectral_map(&vals, &vecs, f64::sqrt);
    let post = &sqrt_t * rho.matrix() * &sqrt_t;
    let kappa = (1.0 - rho.expectation(t)).max(0.0);
    Ok(GentleOutcome { post, kappa, bound: 2.0 * kappa.sqrt() })
}

// ---------------------------------------------------------------------------
// JSON records

/// Row-major `{"rows","cols","re","im"}` matrix record.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub rows: usize,
    pub cols: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl From<&Operator> for MatrixRecord {
    fn from(m: &Operator) -> Self {
        let (rows, cols) = m.shape();
        let mut re = Vec::with_capacity(rows * cols);
        let mut im = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                re.push(m[(i, j)].re);
                im.push(m[(i, j)].im);
            }
        }
        Self { rows, cols, re, im }
    }
}

impl TryFrom<MatrixRecord> for Operator {
    type Error = Error;
    fn try_from(r: MatrixRecord) -> Result<Self> {
        let n = r.rows * r.cols;
        if r.re.len() != n || r.im.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: r.re.len().min(r.im.len()) });
        }
        Ok(Operator::from_fn(r.rows, r.cols, |i, j| {
            let k = i * r.cols + j;
            C64::new(r.re[k], r.im[k])
        }))
    }
}

pub(crate) mod option_matrix_serde {
    use super::{MatrixRecord, Operator};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Option<Operator>, s: S) -> Result<S::Ok, S::Error> {
        m.as_ref().map(MatrixRecord::from).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Operator>, D::Error> {
        Option::<MatrixRecord>::deserialize(d)?
            .map(|rec| Operator::try_from(rec).map_err(serde::de::Error::custom))
            .transpose()
    }
}

pub(crate) mod matrix_vec_serde {
    use super::{MatrixRecord, Operator};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(ms: &[Operator], s: S) -> Result<S::Ok, S::Error> {
        let recs: Vec<MatrixRecord> = ms.iter().map(MatrixRecord::from).collect();
        recs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Operator>, D::Error> {
        let recs = Vec::<MatrixRecord>::deserialize(d)?;
        recs.into_iter()
            .map(|r| Operator::try_from(r).map_err(serde::de::Error::custom))
            .collect()
    }
}

/// Square operator record `{"dim","modes","re","im"}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OperatorRecord {
    pub dim: usize,
    pub modes: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl OperatorRecord {
    pub fn new(m: &Operator, modes: usize) -> Self {
        let r = MatrixRecord::from(m);
        Self { dim: r.rows, modes, re: r.re, im: r.im }
    }

    pub fn to_operator(&self) -> Result<Operator> {
        Operator::try_from(MatrixRecord {
            rows: self.dim,
            cols: self.dim,
            re: self.re.clone(),
            im: self.im.clone(),
        })
    }
}

#[derive(Serialize, Deserialize)]
struct DensityRecord {
    #[serde(flatten)]
    op: OperatorRecord,
    trace_deficiency: f64,
}

impl Serialize for DensityOperator {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        DensityRecord { op: OperatorRecord::new(&self.matrix, self.modes), trace_deficiency: self.deficiency }
            .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DensityOperator {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rec = DensityRecord::deserialize(d)?;
        let m = rec.op.to_operator().map_err(serde::de::Error::custom)?;
        let rho = DensityOperator::new(m).map_err(serde::de::Error::custom)?;
        Ok(rho.with_modes(rec.op.modes))
    }
}

#[derive(Serialize, Deserialize)]
struct PureRecord {
    dim: usize,
    re: Vec<f64>,
    im: Vec<f64>,
    tail_mass: f64,
}

impl Serialize for PureState {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PureRecord {
            dim: self.amps.len(),
            re: self.amps.iter().map(|c| c.re).collect(),
            im: self.amps.iter().map(|c| c.im).collect(),
            tail_mass: self.tail_mass,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PureState {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rec = PureRecord::deserialize(d)?;
        if rec.re.len() != rec.dim || rec.im.len() != rec.dim {
            return Err(serde::de::Error::custom("pure state length mismatch"));
        }
        let amps = DVector::from_iterator(rec.dim, rec.re.iter().zip(&rec.im).map(|(&r, &i)| C64::new(r, i)));
        PureState::with_tail(amps, rec.tail_mass).map_err(serde::de::Error::custom)
    }
}
