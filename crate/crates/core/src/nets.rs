//! Parameter-space ε-nets over gauge-covariant channels and Gaussian unitaries,
//! with cardinality accounting, nearest-point lookup and distance checks.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::channels::{
    displacement_unitary, gauge_covariant, gaussian_unitary_split, real_operator_norm, EnergyBudget, GaugeCovariantParams,
    GaussianUnitaryParams, KrausChannel,
};
use crate::error::{domain, Error, Result};
use crate::fock::{FockSpace, MAX_MODES};
use crate::metrics::{ecd_lower_bound, SearchOptions};
use crate::processor::{pet_build, ErrorClaim, ProcessorSpec};

/// Default cap on generated net points.
pub const POINT_CAP: usize = 1_000_000;
/// Constants of the default three-way ε-split for gauge-covariant nets: each
/// analytic term is held at ε/3.
pub const SPLIT_LAMBDA: f64 = 288.0;
pub const SPLIT_PHI: f64 = 144.0;
pub const SPLIT_MU: f64 = 288.0;

/// `C = 16·C_λ·C_φ·C_μ` in `|I| ≤ C E²(2E+2)(β+1)/ε⁶`.
pub fn gc_count_constant() -> f64 {
    16.0 * SPLIT_LAMBDA * SPLIT_PHI * SPLIT_MU
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NetKind {
    GaugeCovariant,
    GaussianUnitary,
}

/// Uniform grid `lo + k·(hi−lo)/(count−1)` (or `{lo}` when `count = 1`), or an explicit list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub values: Vec<f64>,
    /// Covering radius guaranteed along this axis.
    pub radius: f64,
}

impl Axis {
    fn nearest(&self, x: f64) -> usize {
        let mut best = 0;
        for (k, v) in self.values.iter().enumerate() {
            if (v - x).abs() < (self.values[best] - x).abs() {
                best = k;
            }
        }
        best
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "kebab-case")]
pub enum NetPoint {
    GaugeCovariant(GaugeCovariantParams),
    GaussianUnitary(GaussianUnitaryParams),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetSpec {
    pub kind: NetKind,
    /// `(ε_λ, ε_φ, ε_μ)` or `(ε_S, ε_d)`.
    pub resolutions: Vec<f64>,
    pub budget: EnergyBudget,
    pub modes: usize,
    pub axes: Vec<Axis>,
    /// Displacement points (Gaussian-unitary nets only).
    #[serde(default)]
    pub displacements: Vec<Vec<f64>>,
    pub points: Vec<NetPoint>,
    pub cardinality_bound: f64,
}

impl NetSpec {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn within_bound(&self) -> bool {
        (self.points.len() as f64) <= self.cardinality_bound * (1.0 + 1e-12)
    }
}

fn check_resolution(name: &str, eps: f64) -> Result<()> {
    if !(eps > 0.0) || !eps.is_finite() {
        return domain(format!("resolution {name} = {eps} must be > 0"));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Gauge-covariant nets

/// Product grid `λ_i = iε_λ < 1`, `φ_j = jε_φ < 2π`, `μ_k = μ_max − kε_μ > 1`.
/// With `β = 0` the amplifier grid degenerates to the identity sentinel `μ = 1`.
pub fn gc_net(eps_lambda: f64, eps_phi: f64, eps_mu: f64, budget: &EnergyBudget) -> Result<NetSpec> {
    gc_net_capped(eps_lambda, eps_phi, eps_mu, budget, POINT_CAP)
}

pub fn gc_net_capped(eps_lambda: f64, eps_phi: f64, eps_mu: f64, budget: &EnergyBudget, cap: usize) -> Result<NetSpec> {
    check_resolution("ε_λ", eps_lambda)?;
    check_resolution("ε_φ", eps_phi)?;
    check_resolution("ε_μ", eps_mu)?;
    let lambdas: Vec<f64> = (0..).map(|i| i as f64 * eps_lambda).take_while(|&l| l < 1.0).collect();
    let phis: Vec<f64> = (0..).map(|j| j as f64 * eps_phi).take_while(|&p| p < 2.0 * PI).collect();
    let mu_max = budget.mu_max();
    let mus: Vec<f64> = if budget.beta == 0.0 {
        vec![1.0]
    } else {
        (0..).map(|k| mu_max - k as f64 * eps_mu).take_while(|&m| m > 1.0).collect()
    };
    let count = lambdas.len() * phis.len() * mus.len();
    if count > cap {
        return Err(Error::CapExceeded { count, cap });
    }
    let mut points = Vec::with_capacity(count);
    for &l in &lambdas {
        for &p in &phis {
            for &m in &mus {
                points.push(NetPoint::GaugeCovariant(GaugeCovariantParams::new(l, p, m)?));
            }
        }
    }
    let mu_factor = if budget.beta == 0.0 { 1.0 } else { (mu_max - 1.0) / eps_mu + 1.0 };
    let bound = (1.0 / eps_lambda + 1.0) * (2.0 * PI / eps_phi + 1.0) * mu_factor;
    Ok(NetSpec {
        kind: NetKind::GaugeCovariant,
        resolutions: vec![eps_lambda, eps_phi, eps_mu],
        budget: *budget,
        modes: 1,
        axes: vec![
            Axis { name: "lambda".into(), values: lambdas, radius: eps_lambda },
            Axis { name: "phi".into(), values: phis, radius: eps_phi },
            Axis { name: "mu".into(), values: mus, radius: if budget.beta == 0.0 { 0.0 } else { eps_mu } },
        ],
        displacements: Vec::new(),
        points,
        cardinality_bound: bound,
    })
}

/// Resolutions `ε_λ = ε²/(C_λE)`, `ε_φ = ε²/(C_φE)`, `ε_μ = ε²/(C_μ(2E+2))`.
pub fn gc_split(epsilon: f64, energy: f64) -> (f64, f64, f64) {
    let e2 = epsilon * epsilon;
    (e2 / (SPLIT_LAMBDA * energy), e2 / (SPLIT_PHI * energy), e2 / (SPLIT_MU * (2.0 * energy + 2.0)))
}

/// Net whose analytic full-norm error is at most ε under the default split.
pub fn gc_net_for_epsilon(epsilon: f64, budget: &EnergyBudget) -> Result<NetSpec> {
    check_resolution("ε", epsilon)?;
    let (l, p, m) = gc_split(epsilon, budget.energy);
    gc_net(l, p, m, budget)
}

/// `C E²(2E+2)(β+1)/ε⁶`.
pub fn gc_theorem_count(epsilon: f64, budget: &EnergyBudget) -> f64 {
    let e = budget.energy;
    gc_count_constant() * e * e * (2.0 * e + 2.0) * (budget.beta + 1.0) / epsilon.powi(6)
}

/// Full-norm analytic bound `4√2√(E|Δλ|) + 4√(E|Δφ|) + 4√2√((2E+2)|Δμ|)`.
pub fn gc_analytic_bound(d_lambda: f64, d_phi: f64, d_mu: f64, energy: f64) -> f64 {
    4.0 * 2f64.sqrt() * (energy * d_lambda.abs()).sqrt()
        + 4.0 * (energy * d_phi.abs()).sqrt()
        + 4.0 * 2f64.sqrt() * ((2.0 * energy + 2.0) * d_mu.abs()).sqrt()
}

fn wrapped(d: f64) -> f64 {
    let r = d.rem_euclid(2.0 * PI);
    r.min(2.0 * PI - r)
}

fn nearest_gc(net: &NetSpec, t: &GaugeCovariantParams) -> (usize, [f64; 3]) {
    let (la, pa, ma) = (&net.axes[0], &net.axes[1], &net.axes[2]);
    let i = la.nearest(t.lambda);
    let mut j = pa.nearest(t.phi);
    // Wrap-around: 2π coincides with 0.
    if wrapped(t.phi - pa.values[0]) < wrapped(t.phi - pa.values[j]) {
        j = 0;
    }
    let k = ma.nearest(t.mu);
    let idx = (i * pa.values.len() + j) * ma.values.len() + k;
    (idx, [t.lambda - la.values[i], wrapped(t.phi - pa.values[j]), t.mu - ma.values[k]])
}

// ---------------------------------------------------------------------------
// Gaussian-unitary nets

/// Hermitian basis element `k` of `M × M` matrices: diagonals, then symmetric and
/// antisymmetric off-diagonal pairs. Each has operator norm 1.
fn hermitian_basis(m: usize, k: usize) -> DMatrix<C64> {
    let mut b = DMatrix::from_element(m, m, C64::new(0.0, 0.0));
    if k < m {
        b[(k, k)] = C64::new(1.0, 0.0);
        return b;
    }
    let mut pairs = Vec::new();
    for i in 0..m {
        for j in i + 1..m {
            pairs.push((i, j));
        }
    }
    let r = k - m;
    let (i, j) = pairs[r / 2];
    if r % 2 == 0 {
        b[(i, j)] = C64::new(1.0, 0.0);
        b[(j, i)] = C64::new(1.0, 0.0);
    } else {
        b[(i, j)] = C64::new(0.0, 1.0);
        b[(j, i)] = C64::new(0.0, -1.0);
    }
    b
}

/// Orthosymplectic matrix of the passive unitary `exp(i Σ θ_k B_k)` in `(x₁, p₁, …)` order.
pub fn passive_symplectic(theta: &[f64], m: usize) -> DMatrix<f64> {
    let mut h = DMatrix::from_element(m, m, C64::new(0.0, 0.0));
    for (k, &t) in theta.iter().enumerate() {
        h += hermitian_basis(m, k) * C64::new(t, 0.0);
    }
    let u = (h * C64::new(0.0, 1.0)).exp();
    let mut o = DMatrix::zeros(2 * m, 2 * m);
    for j in 0..m {
        for k in 0..m {
            let (re, im) = (u[(j, k)].re, u[(j, k)].im);
            o[(2 * j, 2 * k)] = re;
            o[(2 * j, 2 * k + 1)] = -im;
            o[(2 * j + 1, 2 * k)] = im;
            o[(2 * j + 1, 2 * k + 1)] = re;
        }
    }
    o
}

/// `S = O(θ₁) · ⊕ diag(e^{−s_j}, e^{s_j}) · O(θ₂)`.
pub fn symplectic_from_parameters(theta1: &[f64], squeeze: &[f64], theta2: &[f64], m: usize) -> DMatrix<f64> {
    let mut z = DMatrix::zeros(2 * m, 2 * m);
    for j in 0..m {
        z[(2 * j, 2 * j)] = (-squeeze[j]).exp();
        z[(2 * j + 1, 2 * j + 1)] = squeeze[j].exp();
    }
    passive_symplectic(theta1, m) * z * passive_symplectic(theta2, m)
}

/// Lipschitz constant of the parameters-to-`S` map in `‖·‖∞` against the
/// parameter sup-norm: every passive generator and squeezing derivative has
/// norm at most `√α`, and there are `2M² + M` parameters.
pub fn symplectic_lipschitz(m: usize, alpha: f64) -> f64 {
    let squeeze_params = if alpha > 1.0 { m } else { 0 };
    alpha.sqrt() * (2 * m * m + squeeze_params) as f64
}

fn uniform_axis(name: &str, lo: f64, hi: f64, spacing: f64) -> Axis {
    if hi <= lo {
        return Axis { name: name.into(), values: vec![lo], radius: 0.0 };
    }
    let n = ((hi - lo) / spacing).ceil().max(1.0) as usize;
    let step = (hi - lo) / n as f64;
    Axis { name: name.into(), values: (0..=n).map(|k| lo + k as f64 * step).collect(), radius: step / 2.0 }
}

/// Cubic grid of spacing `2ε_d/√(2M)` on the ball `|d| ≤ √(2β)`, projected onto the ball.
fn displacement_points(m: usize, radius: f64, eps_d: f64) -> Vec<Vec<f64>> {
    let n = 2 * m;
    if radius == 0.0 {
        return vec![vec![0.0; n]];
    }
    let g = 2.0 * eps_d / (n as f64).sqrt();
    let kmax = (radius / g).ceil() as i64;
    let side = (2 * kmax + 1) as usize;
    let mut out: Vec<Vec<f64>> = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    let total = side.pow(n as u32);
    for flat in 0..total {
        let mut rem = flat;
        let mut p = vec![0.0; n];
        for c in p.iter_mut() {
            *c = ((rem % side) as i64 - kmax) as f64 * g;
            rem /= side;
        }
        let norm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
        // Points whose cell cannot touch the ball are never nearest to an admissible d.
        if norm > radius + eps_d {
            continue;
        }
        if norm > radius {
            for c in p.iter_mut() {
                *c *= radius / norm;
            }
        }
        let key: Vec<i64> = p.iter().map(|x| (x * 1e9).round() as i64).collect();
        if seen.insert(key) {
            out.push(p);
        }
    }
    out
}

/// Net over `Sp^{√α+1}_{2M}` (Euler parameters) times the displacement ball.
pub fn gu_net(eps_s: f64, eps_d: f64, budget: &EnergyBudget, modes: usize) -> Result<NetSpec> {
    gu_net_capped(eps_s, eps_d, budget, modes, POINT_CAP)
}

pub fn gu_net_capped(eps_s: f64, eps_d: f64, budget: &EnergyBudget, modes: usize, cap: usize) -> Result<NetSpec> {
    check_resolution("ε_S", eps_s)?;
    check_resolution("ε_d", eps_d)?;
    if modes == 0 || modes > MAX_MODES {
        return domain(format!("mode count M = {modes} outside 1..={MAX_MODES}"));
    }
    let m = modes;
    let lip = symplectic_lipschitz(m, budget.alpha);
    let spacing = 2.0 * eps_s / lip;
    let mut axes = Vec::new();
    for side in ["theta1", "theta2"] {
        for k in 0..m * m {
            axes.push(uniform_axis(&format!("{side}_{k}"), -PI, PI, spacing));
        }
    }
    let s_max = 0.5 * budget.alpha.ln();
    for j in 0..m {
        axes.push(uniform_axis(&format!("s_{j}"), 0.0, s_max, spacing));
    }
    let radius = (2.0 * budget.beta).sqrt();
    let sym_count = axes.iter().try_fold(1usize, |acc, a| acc.checked_mul(a.values.len()));
    let disp_estimate = {
        let g = 2.0 * eps_d / ((2 * m) as f64).sqrt();
        let side = 2.0 * (radius / g).ceil() + 1.0;
        side.powi(2 * m as i32)
    };
    let count = match sym_count {
        Some(c) if (c as f64) * disp_estimate.min(1.0e12) <= cap as f64 * 8.0 => c,
        _ => return Err(Error::CapExceeded { count: usize::MAX, cap }),
    };
    let displacements = displacement_points(m, radius, eps_d);
    let total = count.checked_mul(displacements.len()).unwrap_or(usize::MAX);
    if total > cap {
        return Err(Error::CapExceeded { count: total, cap });
    }
    let mut points = Vec::with_capacity(total);
    let mut idx = vec![0usize; axes.len()];
    for _ in 0..count {
        let vals: Vec<f64> = idx.iter().zip(&axes).map(|(&i, a)| a.values[i]).collect();
        let s = symplectic_from_parameters(&vals[..m * m], &vals[2 * m * m..], &vals[m * m..2 * m * m], m);
        for d in &displacements {
            points.push(NetPoint::GaussianUnitary(GaussianUnitaryParams::new(s.clone(), d.clone())?));
        }
        for (a, i) in axes.iter().zip(idx.iter_mut()).rev() {
            *i += 1;
            if *i < a.values.len() {
                break;
            }
            *i = 0;
        }
    }
    let bound = (3.0 * (budget.alpha.sqrt() + 1.0) / eps_s).powi((4 * m * m) as i32)
        * (1.0 + radius / eps_d).powi((2 * m) as i32);
    Ok(NetSpec {
        kind: NetKind::GaussianUnitary,
        resolutions: vec![eps_s, eps_d],
        budget: *budget,
        modes: m,
        axes,
        displacements,
        points,
        cardinality_bound: bound,
    })
}

/// Decomposition parameters of a class member, used for sampling and lookup.
#[derive(Clone, Debug, PartialEq)]
pub struct GuParameters {
    pub theta1: Vec<f64>,
    pub squeeze: Vec<f64>,
    pub theta2: Vec<f64>,
    pub displacement: Vec<f64>,
}

impl GuParameters {
    pub fn symplectic(&self) -> DMatrix<f64> {
        symplectic_from_parameters(&self.theta1, &self.squeeze, &self.theta2, self.squeeze.len())
    }

    pub fn params(&self) -> Result<GaussianUnitaryParams> {
        GaussianUnitaryParams::new(self.symplectic(), self.displacement.clone())
    }
}

fn nearest_gu(net: &NetSpec, t: &GuParameters) -> (usize, f64, f64) {
    let m = net.modes;
    let coords: Vec<f64> = t.theta1.iter().chain(&t.theta2).chain(&t.squeeze).cloned().collect();
    let mut sym_index = 0usize;
    for (a, &x) in net.axes.iter().zip(&coords) {
        sym_index = sym_index * a.values.len() + a.nearest(x);
    }
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, d) in net.displacements.iter().enumerate() {
        let dist = d.iter().zip(&t.displacement).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if dist < best_d {
            best_d = dist;
            best = k;
        }
    }
    let idx = sym_index * net.displacements.len() + best;
    let NetPoint::GaussianUnitary(p) = &net.points[idx] else { unreachable!("gaussian-unitary net") };
    let ds = real_operator_norm(&(p.matrix() - t.symplectic()));
    let _ = m;
    (idx, ds, best_d)
}

/// Half-norm analytic bound `14(Mα)^{3/4}√(E+1)√ε_S + √2√(αE+β+1) ε_d`.
pub fn gu_analytic_half_bound(eps_s: f64, eps_d: f64, budget: &EnergyBudget, modes: usize) -> f64 {
    let (e, a, b) = (budget.energy, budget.alpha, budget.beta);
    14.0 * (modes as f64 * a).powf(0.75) * (e + 1.0).sqrt() * eps_s.sqrt()
        + 2f64.sqrt() * (a * e + b + 1.0).sqrt() * eps_d
}

// ---------------------------------------------------------------------------
// Cover checks

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoverReport {
    pub nearest_index: usize,
    pub nearest: NetPoint,
    /// Parameter offsets to the nearest point (`Δλ, Δφ, Δμ` or `‖ΔS‖∞, |Δd|`).
    pub offsets: Vec<f64>,
    /// Whether every offset is within the net's declared resolution.
    pub within_resolution: bool,
    /// Analytic full-norm bound at the actual offsets.
    pub analytic: f64,
    /// Measured full-norm lower bound `‖Φ − Φ_i‖⋄^E`.
    pub measured: f64,
    pub holds: bool,
}

/// Target of a cover query.
#[derive(Clone, Debug)]
pub enum CoverTarget {
    GaugeCovariant(GaugeCovariantParams),
    GaussianUnitary(GuParameters),
}

/// Nearest point only, without channel evaluation.
pub fn nearest_point(net: &NetSpec, target: &CoverTarget) -> Result<(usize, Vec<f64>, bool)> {
    match (net.kind, target) {
        (NetKind::GaugeCovariant, CoverTarget::GaugeCovariant(t)) => {
            t.check_budget(&net.budget)?;
            let (idx, off) = nearest_gc(net, t);
            let ok = off[0].abs() <= net.resolutions[0] + 1e-12
                && off[1] <= net.resolutions[1] + 1e-12
                && off[2].abs() <= net.axes[2].radius + 1e-12;
            Ok((idx, off.to_vec(), ok))
        }
        (NetKind::GaussianUnitary, CoverTarget::GaussianUnitary(t)) => {
            let (idx, ds, dd) = nearest_gu(net, t);
            let ok = ds <= net.resolutions[0] + 1e-9 && dd <= net.resolutions[1] + 1e-9;
            Ok((idx, vec![ds, dd], ok))
        }
        _ => domain("target class does not match the net"),
    }
}

/// Nearest point, the analytic bound at its offsets, and the measured distance.
pub fn net_cover_distance(
    net: &NetSpec,
    target: &CoverTarget,
    energy: f64,
    space: &FockSpace,
    opts: &SearchOptions,
) -> Result<CoverReport> {
    let (idx, offsets, within_resolution) = nearest_point(net, target)?;
    let nearest = net.points[idx].clone();
    let (target_ch, net_ch, analytic) = match (target, &nearest) {
        (CoverTarget::GaugeCovariant(t), NetPoint::GaugeCovariant(p)) => (
            gauge_covariant(t, space)?,
            gauge_covariant(p, space)?,
            gc_analytic_bound(offsets[0], offsets[1], offsets[2], energy),
        ),
        (CoverTarget::GaussianUnitary(t), NetPoint::GaussianUnitary(p)) => {
            let budget = EnergyBudget { energy, ..net.budget };
            (
                gu_channel(&t.params()?, space)?,
                gu_channel(p, space)?,
                2.0 * gu_analytic_half_bound(offsets[0], offsets[1], &budget, net.modes),
            )
        }
        _ => unreachable!("class checked by nearest_point"),
    };
    let rep = ecd_lower_bound(&target_ch, &net_ch, Some(energy), opts)?;
    Ok(CoverReport {
        nearest_index: idx,
        nearest,
        offsets,
        within_resolution,
        analytic,
        measured: rep.lower,
        holds: rep.lower <= analytic + 1e-9,
    })
}

fn gu_channel(p: &GaussianUnitaryParams, space: &FockSpace) -> Result<KrausChannel> {
    let n = p.d.len();
    let identity_s = p.matrix() == DMatrix::identity(n, n);
    if identity_s {
        displacement_unitary(&p.d, space)
    } else {
        gaussian_unitary_split(p, space)
    }
}

/// Channel of a net point on the given space.
pub fn point_channel(point: &NetPoint, space: &FockSpace) -> Result<KrausChannel> {
    match point {
        NetPoint::GaugeCovariant(p) => gauge_covariant(p, space),
        NetPoint::GaussianUnitary(p) => gu_channel(p, space),
    }
}

/// Claimed half-norm ε of a net under its resolutions.
pub fn net_epsilon(net: &NetSpec) -> f64 {
    let e = net.budget.energy;
    match net.kind {
        NetKind::GaugeCovariant => {
            let mu = if net.budget.beta == 0.0 { 0.0 } else { net.resolutions[2] };
            0.5 * gc_analytic_bound(net.resolutions[0], net.resolutions[1], mu, e)
        }
        NetKind::GaussianUnitary => gu_analytic_half_bound(net.resolutions[0], net.resolutions[1], &net.budget, net.modes),
    }
}

/// PET processor over the materialized net channels (`d_P = |points|`).
pub fn net_to_processor(net: &NetSpec, space: &FockSpace, cap: usize) -> Result<ProcessorSpec> {
    if net.points.len() > cap {
        return Err(Error::CapExceeded { count: net.points.len(), cap });
    }
    let mut channels = Vec::with_capacity(net.points.len());
    for (i, p) in net.points.iter().enumerate() {
        let mut ch = point_channel(p, space)?;
        if ch.kraus.len() > 1 {
            ch = ch.recompress(1e-14)?;
        }
        ch.label = format!("net{i}");
        channels.push(ch);
    }
    let mut spec = pet_build(&channels)?;
    spec.label = format!("net-pet[{}]", net.points.len());
    spec.claims = vec![ErrorClaim {
        epsilon: net_epsilon(net),
        energy: Some(net.budget.energy),
        alpha: net.budget.alpha,
        beta: net.budget.beta,
        note: "analytic bound at the net resolutions".into(),
    }];
    Ok(spec)
}
