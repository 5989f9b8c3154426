//! Programmable processors: exact finite encodings, the no-programming
//! orthogonality check, energy-cutoff lift and restriction, Stinespring
//! dilation with memory recovery, and multi-use replication.
//!
//! A processor is a channel on `H_in ⊗ H_P → H_out` with the input index
//! major (`i·d_P + p`). Programs are density operators on `H_P`.

use nalgebra::DVector;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::channels::{choi_distance, energy_limit_check, EnergyBudget, KrausChannel};
use crate::error::{domain, precondition, Error, Result};
use crate::fock::{
    eigh, option_matrix_serde, partial_trace, trace_norm_hermitian, DensityOperator, FockSpace,
    Operator, PureState, ONE, ZERO,
};
use crate::metrics::unitary_diamond_distance;

/// Weight below which recombined Kraus operators are discarded.
const KRAUS_WEIGHT_TOL: f64 = 1e-24;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProgramEntry {
    pub label: String,
    pub state: DensityOperator,
    /// Unitary this program implements (approximately), when known.
    #[serde(with = "option_matrix_serde", default)]
    pub unitary: Option<Operator>,
}

/// An error claim together with the energy budget it was derived under.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorClaim {
    /// Half diamond-norm error (`½‖·‖⋄` or `½‖·‖⋄^E`).
    pub epsilon: f64,
    pub energy: Option<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub note: String,
}

/// How a program is found for an arbitrary target unitary.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProgramLookup {
    /// Nearest table entry in closed-form diamond distance.
    Table,
    /// Polar-decomposition reduction to an inner processor on the low-energy block.
    Lifted {
        inner: Box<ProcessorSpec>,
        /// Full-space basis indices of the inner input, lowest energy first.
        embedding: Vec<usize>,
        /// Number of leading embedding entries spanning the `E/δ` subspace.
        low_rank: usize,
        delta: f64,
        energy: f64,
        alpha: f64,
        beta: f64,
    },
    /// Extension `U_d ⊕ 1` to an outer processor on the full space.
    Restricted { inner: Box<ProcessorSpec>, embedding: Vec<usize>, full_dim: usize },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProcessorSpec {
    pub label: String,
    pub channel: KrausChannel,
    pub input_dim: usize,
    pub output_dim: usize,
    pub program_dim: usize,
    pub programs: Vec<ProgramEntry>,
    pub claims: Vec<ErrorClaim>,
    pub lookup: ProgramLookup,
}

#[derive(Clone, Debug)]
pub struct ProgramChoice {
    pub label: Option<String>,
    pub state: DensityOperator,
    /// Closed-form diamond distance of the selected table target to the request (full norm).
    pub table_distance: f64,
}

impl ProcessorSpec {
    fn check(&self) -> Result<()> {
        if self.channel.din != self.input_dim * self.program_dim {
            return Err(Error::DimensionMismatch { expected: self.input_dim * self.program_dim, found: self.channel.din });
        }
        if self.channel.dout != self.output_dim {
            return Err(Error::DimensionMismatch { expected: self.output_dim, found: self.channel.dout });
        }
        for p in &self.programs {
            if p.state.dim() != self.program_dim {
                return Err(Error::DimensionMismatch { expected: self.program_dim, found: p.state.dim() });
            }
        }
        Ok(())
    }

    pub fn program(&self, label: &str) -> Option<&ProgramEntry> {
        self.programs.iter().find(|p| p.label == label)
    }

    /// Largest claimed ε, zero when nothing is claimed.
    pub fn claimed_epsilon(&self) -> f64 {
        self.claims.iter().map(|c| c.epsilon).fold(0.0, f64::max)
    }

    /// The channel `ρ ↦ P(ρ ⊗ π)`.
    pub fn effective(&self, program: &DensityOperator) -> Result<KrausChannel> {
        if program.dim() != self.program_dim {
            return Err(Error::DimensionMismatch { expected: self.program_dim, found: program.dim() });
        }
        let dp = self.program_dim;
        let mut kraus = Vec::new();
        for (p, v) in program.ensemble_decomposition(1e-14) {
            let s = C64::new(p.sqrt(), 0.0);
            for a in &self.channel.kraus {
                kraus.push(Operator::from_fn(self.output_dim, self.input_dim, |o, i| {
                    (0..dp).map(|q| a[(o, i * dp + q)] * v[q]).sum::<C64>() * s
                }));
            }
        }
        if kraus.is_empty() {
            return domain("program state has no weight");
        }
        let kraus = reduce_kraus(&kraus);
        Ok(KrausChannel::trusted(format!("{}[π]", self.label), kraus, self.channel.tp_deficiency))
    }

    pub fn effective_for(&self, label: &str) -> Result<KrausChannel> {
        let entry = self.program(label).ok_or_else(|| Error::Domain(format!("no program labelled {label}")))?;
        self.effective(&entry.state)
    }

    /// Program for a target unitary on the processor's input space.
    pub fn program_for_unitary(&self, u: &Operator) -> Result<ProgramChoice> {
        if u.nrows() != self.input_dim || u.ncols() != self.input_dim {
            return Err(Error::DimensionMismatch { expected: self.input_dim, found: u.nrows() });
        }
        match &self.lookup {
            ProgramLookup::Table => {
                let mut best: Option<(f64, &ProgramEntry)> = None;
                for entry in &self.programs {
                    let Some(t) = &entry.unitary else { continue };
                    let d = unitary_diamond_distance(t, u)?;
                    if best.is_none_or(|(bd, _)| d < bd) {
                        best = Some((d, entry));
                    }
                }
                let (d, entry) = best.ok_or_else(|| Error::Domain("program table lists no unitaries".into()))?;
                Ok(ProgramChoice { label: Some(entry.label.clone()), state: entry.state.clone(), table_distance: d })
            }
            ProgramLookup::Lifted { inner, embedding, low_rank, delta, energy, alpha, beta } => {
                let ud = reduced_unitary(u, embedding, *low_rank, *delta * (alpha + beta / energy))?;
                inner.program_for_unitary(&ud)
            }
            ProgramLookup::Restricted { inner, embedding, full_dim } => {
                let mut full = Operator::identity(*full_dim, *full_dim);
                for (a, &i) in embedding.iter().enumerate() {
                    full[(i, i)] = ZERO;
                    for (b, &j) in embedding.iter().enumerate() {
                        full[(i, j)] = u[(a, b)];
                    }
                }
                inner.program_for_unitary(&full)
            }
        }
    }
}

/// Recombines Kraus operators into an equivalent family of minimal size via the
/// Gram matrix of their vectorizations.
pub fn reduce_kraus(ops: &[Operator]) -> Vec<Operator> {
    let r = ops.len();
    if r <= 1 {
        return ops.to_vec();
    }
    let mut g = Operator::zeros(r, r);
    for a in 0..r {
        for b in a..r {
            let v: C64 = ops[a].iter().zip(ops[b].iter()).map(|(x, y)| x.conj() * y).sum();
            g[(a, b)] = v;
            g[(b, a)] = v.conj();
        }
    }
    let (vals, vecs) = eigh(&g);
    let (rows, cols) = ops[0].shape();
    let mut out = Vec::new();
    for (k, &lam) in vals.iter().enumerate() {
        if lam <= KRAUS_WEIGHT_TOL {
            continue;
        }
        let mut op = Operator::zeros(rows, cols);
        for a in 0..r {
            let w = vecs[(a, k)];
            if w != ZERO {
                op += &ops[a] * w;
            }
        }
        out.push(op);
    }
    if out.is_empty() {
        out.push(Operator::zeros(rows, cols));
    }
    out
}

fn program_basis(dim: usize, i: usize) -> DensityOperator {
    DensityOperator::basis(dim, i)
}

fn unique_labels(labels: impl Iterator<Item = String>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for (i, l) in labels.enumerate() {
        if out.contains(&l) {
            out.push(format!("{l}#{i}"));
        } else {
            out.push(l);
        }
    }
    out
}

/// Exact encoding `P(ρ ⊗ π) = Σ_i ⟨i|π|i⟩ Φ_i(ρ)` with basis programs.
pub fn pet_build(targets: &[KrausChannel]) -> Result<ProcessorSpec> {
    let Some(first) = targets.first() else {
        return domain("processor needs at least one target channel");
    };
    let (din, dout) = (first.din, first.dout);
    for t in targets {
        if t.din != din || t.dout != dout {
            return Err(Error::DimensionMismatch { expected: din, found: t.din });
        }
    }
    let k = targets.len();
    let mut kraus = Vec::new();
    for (i, t) in targets.iter().enumerate() {
        for a in &t.kraus {
            kraus.push(Operator::from_fn(dout, din * k, |o, col| if col % k == i { a[(o, col / k)] } else { ZERO }));
        }
    }
    let labels = unique_labels(targets.iter().map(|t| t.label.clone()));
    let programs = targets
        .iter()
        .zip(labels)
        .enumerate()
        .map(|(i, (t, label))| ProgramEntry { label, state: program_basis(k, i), unitary: t.as_unitary(1e-9).cloned() })
        .collect();
    let deficiency = targets.iter().map(|t| t.tp_deficiency).fold(0.0, f64::max);
    let spec = ProcessorSpec {
        label: format!("pet[{k}]"),
        channel: KrausChannel::trusted("pet", kraus, deficiency),
        input_dim: din,
        output_dim: dout,
        program_dim: k,
        programs,
        claims: vec![ErrorClaim { epsilon: 0.0, energy: None, alpha: 1.0, beta: 0.0, note: "exact on table".into() }],
        lookup: ProgramLookup::Table,
    };
    spec.check()?;
    Ok(spec)
}

/// Controlled-unitary processor `Σ_i U_i ⊗ |i⟩⟨i|` with the control discarded.
pub fn controlled_unitary_processor(unitaries: &[Operator]) -> Result<ProcessorSpec> {
    let targets = unitaries
        .iter()
        .enumerate()
        .map(|(i, u)| KrausChannel::unitary(format!("U{i}"), u.clone()))
        .collect::<Result<Vec<_>>>()?;
    let mut spec = pet_build(&targets)?;
    spec.label = format!("controlled[{}]", unitaries.len());
    Ok(spec)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NoProgrammingReport {
    /// `tr(π_i π_j)` between the programs selected for each unitary.
    pub gram: Vec<Vec<f64>>,
    pub labels: Vec<String>,
    pub max_offdiag: f64,
    pub program_dim: usize,
    pub unitary_count: usize,
    pub dimension_ok: bool,
    pub pass: bool,
}

/// Checks that programs of pairwise distinct unitaries are mutually orthogonal.
pub fn no_programming_check(processor: &ProcessorSpec, unitaries: &[Operator]) -> Result<NoProgrammingReport> {
    let mut chosen: Vec<&ProgramEntry> = Vec::new();
    for (n, u) in unitaries.iter().enumerate() {
        let target = KrausChannel::unitary(format!("U{n}"), u.clone())?;
        let scale = (u.nrows() as f64).max(1.0);
        let mut found = None;
        for entry in &processor.programs {
            let eff = processor.effective(&entry.state)?;
            if choi_distance(&eff, &target, None)? / scale <= 1e-9 {
                found = Some(entry);
                break;
            }
        }
        match found {
            Some(e) => chosen.push(e),
            None => return precondition(format!("processor does not implement unitary {n} exactly (residual > 1e−9)")),
        }
    }
    let n = chosen.len();
    let mut gram = vec![vec![0.0; n]; n];
    let mut max_offdiag: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let overlap = (chosen[i].state.matrix() * chosen[j].state.matrix()).trace().re;
            gram[i][j] = overlap;
            if i != j && unitary_diamond_distance(&unitaries[i], &unitaries[j])? > 1e-9 {
                max_offdiag = max_offdiag.max(overlap.abs());
            }
        }
    }
    let dimension_ok = processor.program_dim >= n;
    Ok(NoProgrammingReport {
        gram,
        labels: chosen.iter().map(|e| e.label.clone()).collect(),
        max_offdiag,
        program_dim: processor.program_dim,
        unitary_count: n,
        dimension_ok,
        pass: max_offdiag <= 1e-6 && dimension_ok,
    })
}

/// Purification of a program state on `H_P ⊗ H_P`.
pub fn purify_program(state: &DensityOperator) -> PureState {
    let d = state.dim();
    let mut amps = DVector::from_element(d * d, ZERO);
    for (k, (p, v)) in state.ensemble_decomposition(0.0).into_iter().enumerate() {
        for i in 0..d {
            amps[i * d + k] = v[i] * p.sqrt();
        }
    }
    PureState::new(amps).expect("nonzero program state")
}

// ---------------------------------------------------------------------------
// Lift and restriction

/// Basis indices sorted by energy (ties by index).
fn energy_order(space: &FockSpace) -> Vec<usize> {
    let e = space.energies();
    let mut idx: Vec<usize> = (0..e.len()).collect();
    idx.sort_by(|&a, &b| e[a].partial_cmp(&e[b]).expect("finite energies").then(a.cmp(&b)));
    idx
}

/// Smallest energy `E(d)` whose eigenspace span reaches dimension `d`.
pub fn energy_of_rank(d: usize, space: &FockSpace) -> Result<f64> {
    if d == 0 || d > space.dim() {
        return domain(format!("rank {d} outside 1..={}", space.dim()));
    }
    let e = space.energies();
    Ok(e[energy_order(space)[d - 1]])
}

/// Unitary `U_d` on the `embedding` block extending the polar isometry of `P U P_δ`.
fn reduced_unitary(u: &Operator, embedding: &[usize], low_rank: usize, defect: f64) -> Result<Operator> {
    let d = embedding.len();
    let b = Operator::from_fn(d, low_rank, |i, j| u[(embedding[i], embedding[j])]);
    let svd = b.clone().svd(true, true);
    let smin = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    if smin * smin < 1.0 - defect - 1e-9 {
        return precondition(format!(
            "polar decomposition rank-deficient: σ_min² = {:.3e} < 1 − δ(α+β/E) = {:.3e}; target is too far from energy-limited",
            smin * smin,
            1.0 - defect
        ));
    }
    let (Some(x), Some(yt)) = (svd.u, svd.v_t) else {
        return Err(Error::Numerical("SVD failed in polar decomposition".into()));
    };
    let vd = x * yt;
    let mut ud = Operator::zeros(d, d);
    ud.columns_mut(0, low_rank).copy_from(&vd);
    if low_rank < d {
        let proj = Operator::identity(d, d) - &vd * vd.adjoint();
        let (vals, vecs) = eigh(&proj);
        let comp: Vec<usize> = (0..d).filter(|&k| vals[k] > 0.5).collect();
        if comp.len() != d - low_rank {
            return Err(Error::Numerical("complement of the polar isometry has wrong rank".into()));
        }
        let qc = Operator::from_fn(d, comp.len(), |i, j| vecs[(i, comp[j])]);
        let rest = Operator::from_fn(d, d - low_rank, |i, j| u[(embedding[i], embedding[low_rank + j])]);
        let m = qc.adjoint() * rest;
        let svd = m.svd(true, true);
        let (Some(mx), Some(my)) = (svd.u, svd.v_t) else {
            return Err(Error::Numerical("SVD failed in unitary extension".into()));
        };
        ud.columns_mut(low_rank, d - low_rank).copy_from(&(qc * (mx * my)));
    }
    Ok(ud)
}

/// `P = Emb ∘ P_d ∘ (K ⊗ id_P)` with `K` the compression onto energy ≤ E/δ, δ = ε².
/// Returns the processor and `γ = 4.5ε(α + β/E)`.
pub fn lift_processor(
    inner: &ProcessorSpec,
    epsilon: f64,
    budget: &EnergyBudget,
    space: &FockSpace,
) -> Result<(ProcessorSpec, f64)> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return domain(format!("ε = {epsilon} outside (0, 1]"));
    }
    if inner.input_dim != inner.output_dim {
        return domain("inner processor must map its input space to itself");
    }
    let energy = budget.energy;
    let delta = epsilon * epsilon;
    let d = inner.input_dim;
    let energies = space.energies();
    let required = energies.iter().filter(|&&e| e <= energy / (delta * delta) + 1e-12).count();
    if d < required {
        return precondition(format!("inner input dimension {d} below rank{{H ≤ E/ε⁴}} = {required}"));
    }
    if d > space.dim() {
        return precondition(format!("inner input dimension {d} exceeds the cutoff dimension {}", space.dim()));
    }
    let order = energy_order(space);
    let embedding: Vec<usize> = order[..d].to_vec();
    let low_rank = embedding.iter().filter(|&&i| energies[i] <= energy / delta + 1e-12).count();
    let full = space.dim();
    let dp = inner.program_dim;

    // Compression Kraus operators C: full → C^d.
    let mut comp = Vec::new();
    let mut keep = Operator::zeros(d, full);
    for (a, &i) in embedding.iter().enumerate().take(low_rank) {
        keep[(a, i)] = ONE;
    }
    comp.push(keep);
    for i in 0..full {
        if !embedding[..low_rank].contains(&i) {
            let mut leak = Operator::zeros(d, full);
            leak[(0, i)] = ONE;
            comp.push(leak);
        }
    }
    let mut kraus = Vec::new();
    for a in &inner.channel.kraus {
        for c in &comp {
            let c_p = c.kronecker(&Operator::identity(dp, dp));
            let inner_out = a * c_p;
            let mut out = Operator::zeros(full, full * dp);
            for (r, &i) in embedding.iter().enumerate() {
                out.row_mut(i).copy_from(&inner_out.row(r));
            }
            kraus.push(out);
        }
    }
    let gamma = 4.5 * epsilon * (budget.alpha + budget.beta / energy);
    let programs = inner.programs.iter().map(|p| ProgramEntry { unitary: None, ..p.clone() }).collect();
    let spec = ProcessorSpec {
        label: format!("lift({})", inner.label),
        channel: KrausChannel::trusted("lifted", kraus, inner.channel.tp_deficiency),
        input_dim: full,
        output_dim: full,
        program_dim: dp,
        programs,
        claims: vec![ErrorClaim {
            epsilon: gamma,
            energy: Some(energy),
            alpha: budget.alpha,
            beta: budget.beta,
            note: format!("lift of an ε = {epsilon} processor"),
        }],
        lookup: ProgramLookup::Lifted {
            inner: Box::new(inner.clone()),
            embedding,
            low_rank,
            delta,
            energy,
            alpha: budget.alpha,
            beta: budget.beta,
        },
    };
    spec.check()?;
    Ok((spec, gamma))
}

/// `P' = K ∘ P ∘ (V ⊗ id_P)` on the `d` lowest-energy levels, with
/// `ε = γ max{E(d), E}/E`.
pub fn restrict_processor(
    outer: &ProcessorSpec,
    d: usize,
    energy: f64,
    gamma: f64,
    space: &FockSpace,
) -> Result<(ProcessorSpec, f64)> {
    if !(energy > 0.0) {
        return domain(format!("energy E = {energy} must be > 0"));
    }
    if outer.input_dim != space.dim() || outer.output_dim != space.dim() {
        return Err(Error::DimensionMismatch { expected: space.dim(), found: outer.input_dim });
    }
    if d == 0 || d > space.dim() {
        return precondition(format!("d = {d} exceeds the cutoff rank {}", space.dim()));
    }
    let full = space.dim();
    let dp = outer.program_dim;
    let embedding: Vec<usize> = energy_order(space)[..d].to_vec();
    let e_d = energy_of_rank(d, space)?;
    let mut v = Operator::zeros(full, d);
    for (a, &i) in embedding.iter().enumerate() {
        v[(i, a)] = ONE;
    }
    let v_p = v.kronecker(&Operator::identity(dp, dp));
    let mut out_ops = vec![v.adjoint()];
    for i in 0..full {
        if !embedding.contains(&i) {
            let mut leak = Operator::zeros(d, full);
            leak[(0, i)] = ONE;
            out_ops.push(leak);
        }
    }
    let mut kraus = Vec::new();
    for a in &outer.channel.kraus {
        let av = a * &v_p;
        for k in &out_ops {
            let op = k * &av;
            if op.iter().any(|x| x.norm_sqr() > 0.0) {
                kraus.push(op);
            }
        }
    }
    let kraus = reduce_kraus(&kraus);
    let epsilon = gamma * e_d.max(energy) / energy;
    let spec = ProcessorSpec {
        label: format!("restrict({}, {d})", outer.label),
        channel: KrausChannel::trusted("restricted", kraus, outer.channel.tp_deficiency),
        input_dim: d,
        output_dim: d,
        program_dim: dp,
        programs: outer.programs.iter().map(|p| ProgramEntry { unitary: None, ..p.clone() }).collect(),
        claims: vec![ErrorClaim { epsilon, energy: None, alpha: 1.0, beta: 0.0, note: format!("restriction with γ = {gamma}") }],
        lookup: ProgramLookup::Restricted { inner: Box::new(outer.clone()), embedding, full_dim: full },
    };
    spec.check()?;
    Ok((spec, epsilon))
}

// ---------------------------------------------------------------------------
// Dilation and replication

#[derive(Clone, Debug)]
pub struct Dilation {
    /// `V: H_in → H_out ⊗ H_Q`, row index `o·k + j`.
    pub v: Operator,
    pub dout: usize,
    pub env_dim: usize,
}

impl Dilation {
    /// `tr_Q V ρ V*`.
    pub fn channel_output(&self, rho: &Operator) -> Result<Operator> {
        partial_trace(&(&self.v * rho * self.v.adjoint()), &[self.dout, self.env_dim], &[0])
    }

    /// `tr_out V ρ V*`.
    pub fn environment_output(&self, rho: &Operator) -> Result<Operator> {
        partial_trace(&(&self.v * rho * self.v.adjoint()), &[self.dout, self.env_dim], &[1])
    }
}

/// `V|ψ⟩ = Σ_j K_j|ψ⟩ ⊗ |j⟩`.
pub fn stinespring_dilate(channel: &KrausChannel) -> Dilation {
    let k = channel.kraus.len();
    let v = Operator::from_fn(channel.dout * k, channel.din, |row, c| channel.kraus[row % k][(row / k, c)]);
    Dilation { v, dout: channel.dout, env_dim: k }
}

#[derive(Clone, Debug)]
pub struct Replication {
    /// `P' = (id ⊗ M) ∘ V` on `H ⊗ H_P`.
    pub step: KrausChannel,
    /// Memory recovery `M: H_Q → H_P`.
    pub memory: KrausChannel,
    pub copies: usize,
    pub copy_dim: usize,
    pub program_dim: usize,
    pub program: PureState,
    /// `ε' = (1 + β'/E)√(2ε)`.
    pub epsilon_prime: f64,
    /// `2ℓε'`.
    pub claimed: f64,
    /// `½‖M(φ_Q) − ψ_P‖₁` with `φ_Q` the environment output on vacuum input.
    pub memory_error: f64,
}

/// Replicated processor `P̂ = tr_P ∘ P'_{ℓP} ∘ … ∘ P'_{1P}` for a target unitary whose
/// inverse satisfies `inverse_budget`. `epsilon` is the single-use error of `processor`
/// on `target` with program `program`.
pub fn replication_build(
    processor: &ProcessorSpec,
    target: &Operator,
    program: &DensityOperator,
    copies: usize,
    inverse_budget: &EnergyBudget,
    epsilon: f64,
) -> Result<Replication> {
    let Some(psi) = program.as_pure(1e-9) else {
        return precondition("replication requires a pure program state");
    };
    if copies == 0 {
        return domain("number of copies ℓ must be ≥ 1");
    }
    if !(epsilon >= 0.0) {
        return domain(format!("single-use error ε = {epsilon} must be ≥ 0"));
    }
    let d = processor.input_dim;
    if processor.output_dim != d || target.nrows() != d {
        return Err(Error::DimensionMismatch { expected: d, found: target.nrows() });
    }
    let space = FockSpace::single(d)?;
    let inverse = KrausChannel::unitary("U*", target.adjoint())?;
    let verdict = energy_limit_check(&inverse, inverse_budget, crate::channels::default_guard(d), &space)?;
    if !verdict.pass {
        return precondition(format!("target inverse is not (α′, β′)-energy-limited (margin {:.3e})", verdict.margin));
    }
    let dp = processor.program_dim;
    let dil = stinespring_dilate(&processor.channel);
    let k = dil.env_dim;
    let v = &dil.v;
    // Pseudoinverse remainder R(ξ) = ρ₀ tr ξ(1 − VV*), ρ₀ = |0⟩⟨0| ⊗ ψ.
    let big = d * k;
    let rest = Operator::identity(big, big) - v * v.adjoint();
    let (vals, vecs) = eigh(&rest);
    let vdag = v.adjoint();
    let mut memory_ops = Vec::new();
    for i in 0..d {
        // (⟨i| ⊗ 1_P) V* (|0⟩ ⊗ 1_Q)
        memory_ops.push(Operator::from_fn(dp, k, |p, q| vdag[(i * dp + p, q)]));
    }
    let psi_vec = psi.amplitudes();
    for (m, &beta) in vals.iter().enumerate() {
        if beta <= 1e-12 {
            continue;
        }
        let s = beta.sqrt();
        let op = Operator::from_fn(dp, k, |p, q| psi_vec[p] * vecs[(q, m)].conj() * s);
        memory_ops.push(op);
    }
    let memory = KrausChannel::trusted("memory", reduce_kraus(&memory_ops), 0.0);
    let mut step_ops = Vec::new();
    for m in &memory.kraus {
        step_ops.push(Operator::identity(d, d).kronecker(m) * v);
    }
    let step = KrausChannel::trusted("replication-step", reduce_kraus(&step_ops), processor.channel.tp_deficiency);

    let mut vac_psi = DVector::from_element(d * dp, ZERO);
    for p in 0..dp {
        vac_psi[p] = psi_vec[p];
    }
    let phi_q = dil.environment_output(&(&vac_psi * vac_psi.adjoint()))?;
    let recovered = memory.apply_operator(&phi_q)?;
    let memory_error = 0.5 * trace_norm_hermitian(&(recovered - psi.projector()));

    let energy = inverse_budget.energy;
    let epsilon_prime = (1.0 + inverse_budget.beta / energy) * (2.0 * epsilon).sqrt();
    Ok(Replication {
        step,
        memory,
        copies,
        copy_dim: d,
        program_dim: dp,
        program: psi,
        epsilon_prime,
        claimed: 2.0 * copies as f64 * epsilon_prime,
        memory_error,
    })
}

impl Replication {
    /// Applies a `(d·d_P)`-square operator to copy `j` and the program register of
    /// each column-block of `t` (rows `(h_1..h_ℓ, p)`).
    fn apply_local(&self, q: &Operator, t: &Operator, j: usize) -> Operator {
        let (d, dp, l) = (self.copy_dim, self.program_dim, self.copies);
        let stride = d.pow((l - 1 - j) as u32) * dp;
        let rows = t.nrows();
        let mut out = Operator::zeros(rows, t.ncols());
        for row in 0..rows {
            let p = row % dp;
            let hj = (row / stride) % d;
            let base = row - p - hj * stride;
            let qrow = hj * dp + p;
            for hj2 in 0..d {
                for p2 in 0..dp {
                    let c = q[(qrow, hj2 * dp + p2)];
                    if c == ZERO {
                        continue;
                    }
                    let src = base + hj2 * stride + p2;
                    for col in 0..t.ncols() {
                        let v = t[(src, col)];
                        out[(row, col)] += c * v;
                    }
                }
            }
        }
        out
    }

    /// `P̂(· ⊗ ψ)` on `H^{⊗ℓ}`.
    pub fn effective(&self, program: &PureState) -> Result<KrausChannel> {
        let (d, dp, l) = (self.copy_dim, self.program_dim, self.copies);
        if program.dim() != dp {
            return Err(Error::DimensionMismatch { expected: dp, found: program.dim() });
        }
        let n = d.pow(l as u32);
        let amps = program.amplitudes();
        let mut ops = vec![Operator::from_fn(n * dp, n, |row, c| if row / dp == c { amps[row % dp] } else { ZERO })];
        for j in 0..l {
            let mut next = Vec::with_capacity(ops.len() * self.step.kraus.len());
            for q in &self.step.kraus {
                for t in &ops {
                    next.push(self.apply_local(q, t, j));
                }
            }
            ops = reduce_kraus(&next);
        }
        let mut traced = Vec::with_capacity(ops.len() * dp);
        for t in &ops {
            for p in 0..dp {
                traced.push(Operator::from_fn(n, n, |r, c| t[(r * dp + p, c)]));
            }
        }
        let kraus = reduce_kraus(&traced);
        Ok(KrausChannel::trusted(format!("replicated^{l}"), kraus, self.step.tp_deficiency * l as f64))
    }
}

/// `U^{⊗ℓ}` as a channel.
pub fn tensor_power_unitary(u: &Operator, copies: usize) -> Result<KrausChannel> {
    let mut acc = Operator::identity(1, 1);
    for _ in 0..copies {
        acc = acc.kronecker(u);
    }
    KrausChannel::unitary(format!("U^{copies}"), acc)
}

// ---------------------------------------------------------------------------
// Lemming compression

/// Minimum η accepted by [`lemming_compress`].
pub const LEMMING_ETA_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct LemmingOutcome {
    pub sigma_prime: DensityOperator,
    pub threshold: f64,
    pub energy: f64,
    /// `½‖σ − σ'‖₁`.
    pub distance_sigma: f64,
    /// `½‖ρ − σ'‖₁`.
    pub distance_rho: f64,
    pub bound_sigma: f64,
    pub bound_rho: f64,
    pub holds: bool,
}

/// `σ' = K(σ)` with the compression cutoff `E/η`.
pub fn lemming_compress(
    rho: &DensityOperator,
    sigma: &DensityOperator,
    energy: f64,
    eta: f64,
    space: &FockSpace,
) -> Result<LemmingOutcome> {
    if eta < LEMMING_ETA_FLOOR {
        return domain(format!("η = {eta} below the floor {LEMMING_ETA_FLOOR}"));
    }
    if rho.dim() != space.dim() || sigma.dim() != space.dim() {
        return Err(Error::DimensionMismatch { expected: space.dim(), found: rho.dim() });
    }
    let h = crate::fock::diagonal(&space.energies());
    let rho_energy = rho.expectation(&h);
    if rho_energy > energy + 1e-9 {
        return precondition(format!("tr ρH = {rho_energy} exceeds E = {energy}"));
    }
    let dist = 0.5 * trace_norm_hermitian(&(rho.matrix() - sigma.matrix()));
    if dist > eta + 1e-9 {
        return precondition(format!("½‖ρ − σ‖₁ = {dist} exceeds η = {eta}"));
    }
    let threshold = energy / eta;
    let k = crate::channels::compression_to_energy(threshold, space)?;
    let sp = k.apply(sigma)?;
    let distance_sigma = 0.5 * trace_norm_hermitian(&(sigma.matrix() - sp.matrix()));
    let distance_rho = 0.5 * trace_norm_hermitian(&(rho.matrix() - sp.matrix()));
    let bound_sigma = 3.0 * eta.sqrt();
    let bound_rho = 4.0 * eta.sqrt();
    let sp_energy = sp.expectation(&h);
    let holds = distance_sigma <= bound_sigma + 1e-9 && distance_rho <= bound_rho + 1e-9 && sp_energy <= threshold + 1e-9;
    Ok(LemmingOutcome {
        sigma_prime: sp,
        threshold,
        energy: sp_energy,
        distance_sigma,
        distance_rho,
        bound_sigma,
        bound_rho,
        holds,
    })
}

/// Frobenius residual between two channels' Choi matrices, normalized by input dimension.
pub fn implementation_residual(a: &KrausChannel, b: &KrausChannel) -> Result<f64> {
    Ok(choi_distance(a, b, None)? / (a.din as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{attenuator, rotation};
    use crate::fock::{fock_state, trace_distance};
    use crate::metrics::{ecd_lower_bound, SearchOptions};
    use crate::random::{random_density, random_unitary, rng_for};
    use std::f64::consts::PI;

    fn rotations(phis: &[f64], space: &FockSpace) -> Vec<KrausChannel> {
        phis.iter().map(|&p| rotation(p, space).unwrap()).collect()
    }

    #[test]
    fn pet_is_exact_and_linear() {
        let space = FockSpace::single(6).unwrap();
        let targets = vec![attenuator(0.3, &space).unwrap(), rotation(0.7, &space).unwrap(), attenuator(0.9, &space).unwrap()];
        let pet = pet_build(&targets).unwrap();
        assert_eq!(pet.program_dim, 3);
        for (i, t) in targets.iter().enumerate() {
            let eff = pet.effective(&DensityOperator::basis(3, i)).unwrap();
            assert!(choi_distance(&eff, t, None).unwrap() < 1e-12);
        }
        let mut rng = rng_for(1, 0);
        let rho = random_density(6, 6, &mut rng);
        let mixed = DensityOperator::new((DensityOperator::basis(3, 0).into_matrix() + DensityOperator::basis(3, 1).into_matrix()) * C64::new(0.5, 0.0)).unwrap();
        let out = pet.effective(&mixed).unwrap().apply(&rho).unwrap();
        let expect = (targets[0].apply(&rho).unwrap().into_matrix() + targets[1].apply(&rho).unwrap().into_matrix()) * C64::new(0.5, 0.0);
        assert!((out.matrix() - expect).iter().all(|x| x.norm() < 1e-12));

        let single = pet_build(&targets[..1]).unwrap();
        assert_eq!(single.program_dim, 1);
        assert!(choi_distance(&single.effective(&DensityOperator::basis(1, 0)).unwrap(), &targets[0], None).unwrap() < 1e-12);
        assert!(pet_build(&[]).is_err());
    }

    #[test]
    fn distinct_unitaries_need_orthogonal_programs() {
        let mut rng = rng_for(2, 0);
        let us: Vec<Operator> = (0..3).map(|_| random_unitary(3, &mut rng)).collect();
        let targets: Vec<KrausChannel> = us.iter().map(|u| KrausChannel::unitary("u", u.clone()).unwrap()).collect();
        let rep = no_programming_check(&pet_build(&targets).unwrap(), &us).unwrap();
        assert!(rep.pass && rep.dimension_ok && rep.program_dim >= 3);
        for i in 0..3 {
            for j in 0..3 {
                assert!((rep.gram[i][j] - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
        let x = Operator::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]);
        let cu = controlled_unitary_processor(&[Operator::identity(2, 2), x.clone()]).unwrap();
        assert!(no_programming_check(&cu, &[Operator::identity(2, 2), x]).unwrap().pass);

        let other = random_unitary(3, &mut rng);
        assert!(no_programming_check(&pet_build(&targets).unwrap(), &[other]).is_err());
    }

    #[test]
    fn dilation_reproduces_channel() {
        let space = FockSpace::single(6).unwrap();
        let a = attenuator(0.6, &space).unwrap();
        let dil = stinespring_dilate(&a);
        let mut rng = rng_for(3, 0);
        let rho = random_density(6, 3, &mut rng);
        let direct = a.apply_operator(rho.matrix()).unwrap();
        let via = dil.channel_output(rho.matrix()).unwrap();
        assert!((direct - via).iter().all(|x| x.norm() < 1e-10));

        let u = random_unitary(3, &mut rng);
        let du = stinespring_dilate(&KrausChannel::unitary("u", u.clone()).unwrap());
        assert_eq!(du.env_dim, 1);
        assert!((du.v - u).iter().all(|x| x.norm() < 1e-14));

        let z = Operator::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]) * C64::new(0.5f64.sqrt(), 0.0);
        let deph = KrausChannel::new("deph", vec![Operator::identity(2, 2) * C64::new(0.5f64.sqrt(), 0.0), z]).unwrap();
        assert_eq!(stinespring_dilate(&deph).env_dim, 2);
    }

    fn rotation_net(d: usize, points: usize) -> (ProcessorSpec, f64) {
        let space = FockSpace::single(d).unwrap();
        let phis: Vec<f64> = (0..points).map(|j| 2.0 * PI * j as f64 / points as f64).collect();
        let pet = pet_build(&rotations(&phis, &space)).unwrap();
        // Worst case: angle offset π/points against the nearest net point.
        let worst = rotation(PI / points as f64, &space).unwrap();
        let eps = 0.5 * unitary_diamond_distance(&worst.kraus[0], &Operator::identity(d, d)).unwrap();
        (pet, eps)
    }

    #[test]
    fn lift_of_rotation_net_meets_gamma() {
        let (pd, eps) = rotation_net(8, 8);
        let full = FockSpace::single(16).unwrap();
        let budget = EnergyBudget::new(1.0, 1.0, 0.0).unwrap();
        let (lifted, gamma) = lift_processor(&pd, eps, &budget, &full).unwrap();
        assert!((gamma - 4.5 * eps).abs() < 1e-12);
        let opts = SearchOptions::with_seed(5).restarts(4).max_iter(200);
        for &phi in &[0.0, 0.37, 2.9] {
            let target = rotation(phi, &full).unwrap();
            let choice = lifted.program_for_unitary(&target.kraus[0]).unwrap();
            let eff = lifted.effective(&choice.state).unwrap();
            let rep = ecd_lower_bound(&eff, &target, Some(1.0), &opts).unwrap();
            assert!(0.5 * rep.lower <= gamma, "φ={phi}: {}", rep.lower);
        }
        // Too small an ε demands a larger inner dimension.
        assert!(lift_processor(&pd, 0.5, &budget, &full).is_err());
    }

    #[test]
    fn restriction_round_trip() {
        let (pd, eps) = rotation_net(4, 4);
        let full = FockSpace::single(12).unwrap();
        let budget = EnergyBudget::new(1.0, 1.0, 0.0).unwrap();
        let (lifted, gamma) = lift_processor(&pd, eps, &budget, &full).unwrap();
        let (restricted, claimed) = restrict_processor(&lifted, 4, 1.0, gamma, &full).unwrap();
        assert!((claimed - gamma * 3.0).abs() < 1e-12);
        let (_, same) = restrict_processor(&lifted, 2, 1.0, gamma, &full).unwrap();
        assert!((same - gamma).abs() < 1e-12);
        let opts = SearchOptions::with_seed(6).restarts(4).max_iter(200);
        for entry in &pd.programs {
            let u = entry.unitary.clone().unwrap();
            let choice = restricted.program_for_unitary(&u).unwrap();
            let eff = restricted.effective(&choice.state).unwrap();
            let target = KrausChannel::unitary("t", u).unwrap();
            let rep = ecd_lower_bound(&eff, &target, None, &opts).unwrap();
            assert!(0.5 * rep.lower <= claimed + eps + 1e-9);
        }
        assert!(restrict_processor(&lifted, 13, 1.0, gamma, &full).is_err());
    }

    #[test]
    fn exact_processor_replicates_exactly() {
        let d = 3;
        let space = FockSpace::single(d).unwrap();
        let pet = pet_build(&rotations(&[0.0, 0.8, 1.9], &space)).unwrap();
        let u = rotation(0.8, &space).unwrap().kraus[0].clone();
        let program = DensityOperator::basis(3, 1);
        let budget = EnergyBudget::new(1.0, 1.0, 0.0).unwrap();
        let rep = replication_build(&pet, &u, &program, 2, &budget, 0.0).unwrap();
        assert!(rep.memory_error < 1e-12 && rep.claimed == 0.0);
        let eff = rep.effective(&rep.program).unwrap();
        let target = tensor_power_unitary(&u, 2).unwrap();
        assert!(implementation_residual(&eff, &target).unwrap() < 1e-9);
        let mixed = DensityOperator::maximally_mixed(3);
        assert!(replication_build(&pet, &u, &mixed, 2, &budget, 0.0).is_err());
    }

    #[test]
    fn lemming_bounds() {
        let space = FockSpace::single(12).unwrap();
        let rho = DensityOperator::from_pure(&fock_state(1, &space).unwrap());
        let out = lemming_compress(&rho, &rho, 1.0, 0.1, &space).unwrap();
        assert!(out.holds && out.energy <= 10.0 + 1e-12);
        let at_one = lemming_compress(&rho, &rho, 1.0, 1.0, &space).unwrap();
        assert_eq!(at_one.threshold, 1.0);
        assert!(trace_distance(&at_one.sigma_prime, &rho).unwrap() < 1e-12);
        assert!(lemming_compress(&rho, &rho, 1.0, 1e-7, &space).is_err());
    }
}
