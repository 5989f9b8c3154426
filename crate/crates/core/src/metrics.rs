//! Energy-constrained channel distances: diamond-norm lower bounds by seeded
//! projected ascent, cb-fidelity estimates, and the multiply-constrained norm.
//!
//! For a purification `ψ = vec(X)` of the input marginal `ρ = XX*`, the output
//! `((Φ₁ − Φ₂) ⊗ id)(ψ)` equals `A S A*` with columns `vec(K_a X)` and signs
//! `S = ±1`. Its nonzero spectrum is that of `G^{1/2} S G^{1/2}` where
//! `G_ab = tr(K_a* K_b ρ)`, so every objective evaluation works on an
//! `r × r` matrix, `r` the total Kraus count.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::KrausChannel;
use crate::error::{domain, Error, Result};
use crate::fock::{eigh, FockSpace, Operator, PureState, ZERO};
use crate::random::{complex_normal, rng_for};

/// Memory budget (matrix entries) for precomputed Kraus products.
const PAIR_BUDGET: usize = 1 << 22;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub restarts: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self { restarts: 32, max_iter: 500, tol: 1e-9, seed: 0 }
    }
}

impl SearchOptions {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    pub fn restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }

    pub fn max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }
}

/// Diagonal energy observables on the input basis with their bounds.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct EnergyConstraint {
    terms: Vec<(Vec<f64>, f64)>,
}

impl EnergyConstraint {
    pub fn unconstrained() -> Self {
        Self::default()
    }

    /// Single-mode number operator `diag(0..dim−1)` with bound `energy`.
    pub fn number(dim: usize, energy: f64) -> Self {
        Self { terms: vec![((0..dim).map(|n| n as f64).collect(), energy)] }
    }

    /// Total photon number of a Fock space.
    pub fn fock(space: &FockSpace, energy: f64) -> Self {
        Self { terms: vec![(space.energies(), energy)] }
    }

    /// One number operator per tensor factor `d_1 ⊗ … ⊗ d_ℓ`, each with its own bound.
    pub fn per_factor(factor_dims: &[usize], bounds: &[f64]) -> Self {
        let terms = (0..factor_dims.len())
            .map(|j| (factor_energies(factor_dims, j), bounds[j]))
            .collect();
        Self { terms }
    }

    /// Total number operator summed over tensor factors.
    pub fn total_over_factors(factor_dims: &[usize], energy: f64) -> Self {
        let dim: usize = factor_dims.iter().product();
        let mut total = vec![0.0; dim];
        for j in 0..factor_dims.len() {
            for (t, e) in total.iter_mut().zip(factor_energies(factor_dims, j)) {
                *t += e;
            }
        }
        Self { terms: vec![(total, energy)] }
    }

    pub fn is_unconstrained(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn bounds(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.1).collect()
    }

    fn dim(&self) -> Option<usize> {
        self.terms.first().map(|t| t.0.len())
    }

    /// Energies `tr ψ(H_j ⊗ 1)` of a witness given as `X` (din × R).
    fn energies_of(&self, x: &Operator) -> Vec<f64> {
        let weights = row_weights(x);
        self.terms.iter().map(|(h, _)| h.iter().zip(&weights).map(|(e, w)| e * w).sum()).collect()
    }

    pub fn witness_energies(&self, psi: &PureState, din: usize) -> Vec<f64> {
        self.energies_of(&unvec(psi, din))
    }
}

fn factor_energies(dims: &[usize], j: usize) -> Vec<f64> {
    let total: usize = dims.iter().product();
    let stride: usize = dims[j + 1..].iter().product();
    (0..total).map(|i| ((i / stride) % dims[j]) as f64).collect()
}

fn row_weights(x: &Operator) -> Vec<f64> {
    (0..x.nrows()).map(|i| x.row(i).iter().map(|c| c.norm_sqr()).sum()).collect()
}

fn frob_norm(x: &Operator) -> f64 {
    x.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

fn real_inner(a: &Operator, b: &Operator) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// Witness vector `ψ[i·R + r] = X[i, r]`.
fn vec_of(x: &Operator) -> PureState {
    let (n, r) = x.shape();
    let v = DVector::from_fn(n * r, |k, _| x[(k / r, k % r)]);
    PureState::new(v).expect("witness has unit norm")
}

fn unvec(psi: &PureState, din: usize) -> Operator {
    let r = psi.dim() / din;
    let a = psi.amplitudes();
    Operator::from_fn(din, r, |i, j| a[i * r + j])
}

// ---------------------------------------------------------------------------
// Objective engine

enum Products {
    /// Sparse `P_ab = K_a* K_b` for `a ≤ b`.
    Pairs(Vec<Vec<Vec<(u32, u32, C64)>>>),
    /// Evaluate through `Y_a = K_a X` when the pair table would be too large.
    Direct,
}

struct Engine {
    din: usize,
    r1: usize,
    ops: Vec<Operator>,
    products: Products,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    /// Maximize `‖((Φ₁−Φ₂)⊗id)ψ‖₁`.
    Distance,
    /// Minimize `F((Φ₁⊗id)ψ, (Φ₂⊗id)ψ)`.
    Fidelity,
}

impl Engine {
    fn new(a: &KrausChannel, b: &KrausChannel) -> Result<Self> {
        if a.din != b.din {
            return Err(Error::DimensionMismatch { expected: a.din, found: b.din });
        }
        if a.dout != b.dout {
            return Err(Error::DimensionMismatch { expected: a.dout, found: b.dout });
        }
        let ops: Vec<Operator> = a.kraus.iter().chain(&b.kraus).cloned().collect();
        let r = ops.len();
        let din = a.din;
        let products = if r * (r + 1) / 2 * din * din <= PAIR_BUDGET {
            let adj: Vec<Operator> = ops.iter().map(|k| k.adjoint()).collect();
            let mut table = Vec::with_capacity(r);
            for i in 0..r {
                let mut row = Vec::with_capacity(r - i);
                for j in i..r {
                    let p = &adj[i] * &ops[j];
                    let mut entries = Vec::new();
                    for c in 0..din {
                        for rr in 0..din {
                            let v = p[(rr, c)];
                            if v.norm_sqr() > 1e-32 {
                                entries.push((rr as u32, c as u32, v));
                            }
                        }
                    }
                    row.push(entries);
                }
                table.push(row);
            }
            Products::Pairs(table)
        } else {
            Products::Direct
        };
        Ok(Self { din, r1: a.kraus.len(), ops, products })
    }

    fn r(&self) -> usize {
        self.ops.len()
    }

    fn gram(&self, x: &Operator, ys: &Option<Vec<Operator>>) -> DMatrix<C64> {
        let r = self.r();
        let mut g = DMatrix::from_element(r, r, ZERO);
        match (&self.products, ys) {
            (Products::Pairs(table), _) => {
                let rho = x * x.adjoint();
                for a in 0..r {
                    for b in a..r {
                        let mut acc = ZERO;
                        for &(i, j, v) in &table[a][b - a] {
                            acc += v * rho[(j as usize, i as usize)];
                        }
                        g[(a, b)] = acc;
                        g[(b, a)] = acc.conj();
                    }
                }
            }
            (Products::Direct, Some(ys)) => {
                for a in 0..r {
                    for b in a..r {
                        let acc: C64 = ys[a].iter().zip(ys[b].iter()).map(|(p, q)| p.conj() * q).sum();
                        g[(a, b)] = acc;
                        g[(b, a)] = acc.conj();
                    }
                }
            }
            (Products::Direct, None) => unreachable!("direct evaluation needs K_a X"),
        }
        g
    }

    /// `Σ_ab c_ab K_a* K_b X`.
    fn apply_combination(&self, c: &DMatrix<C64>, x: &Operator, ys: &Option<Vec<Operator>>) -> Operator {
        let r = self.r();
        match (&self.products, ys) {
            (Products::Pairs(table), _) => {
                let mut t = Operator::zeros(self.din, self.din);
                for a in 0..r {
                    for b in a..r {
                        let cab = c[(a, b)];
                        let cba = c[(b, a)];
                        for &(i, j, v) in &table[a][b - a] {
                            t[(i as usize, j as usize)] += cab * v;
                            if b != a {
                                t[(j as usize, i as usize)] += cba * v.conj();
                            }
                        }
                    }
                }
                t * x
            }
            (Products::Direct, Some(ys)) => {
                let mut out = Operator::zeros(self.din, x.ncols());
                for a in 0..r {
                    let mut z = Operator::zeros(ys[0].nrows(), ys[0].ncols());
                    for b in 0..r {
                        if c[(a, b)] != ZERO {
                            z += &ys[b] * c[(a, b)];
                        }
                    }
                    out += self.ops[a].adjoint() * z;
                }
                out
            }
            (Products::Direct, None) => unreachable!(),
        }
    }

    /// Objective value and its ascent/descent operator applied to `X`.
    fn evaluate(&self, mode: Mode, x: &Operator, want_grad: bool) -> (f64, Option<Operator>) {
        let ys = match self.products {
            Products::Direct => Some(self.ops.iter().map(|k| k * x).collect::<Vec<_>>()),
            Products::Pairs(_) => None,
        };
        let dout = self.ops[0].nrows();
        if mode == Mode::Distance && self.r() > dout * x.ncols() {
            let ys = ys.unwrap_or_else(|| self.ops.iter().map(|k| k * x).collect());
            return self.distance_on_outputs(&ys, x, want_grad);
        }
        let g = self.gram(x, &ys);
        match mode {
            Mode::Distance => self.distance_at(&g, x, &ys, want_grad),
            Mode::Fidelity => self.fidelity_at(&g, x, &ys, want_grad),
        }
    }

    fn distance_at(
        &self,
        g: &DMatrix<C64>,
        x: &Operator,
        ys: &Option<Vec<Operator>>,
        want_grad: bool,
    ) -> (f64, Option<Operator>) {
        let r = self.r();
        let (vals, vecs) = eigh(g);
        let top = vals.iter().cloned().fold(0.0, f64::max);
        if top <= 0.0 {
            return (0.0, want_grad.then(|| Operator::zeros(x.nrows(), x.ncols())));
        }
        let keep: Vec<usize> = (0..r).filter(|&k| vals[k] > 1e-13 * top).collect();
        let k = keep.len();
        // B = L V* S V L on the range of G.
        let vk = DMatrix::from_fn(r, k, |i, j| vecs[(i, keep[j])]);
        let l: Vec<f64> = keep.iter().map(|&j| vals[j].sqrt()).collect();
        let mut svk = vk.clone();
        for i in self.r1..r {
            for j in 0..k {
                svk[(i, j)] = -svk[(i, j)];
            }
        }
        let mut b = vk.adjoint() * svk;
        for i in 0..k {
            for j in 0..k {
                b[(i, j)] *= C64::new(l[i] * l[j], 0.0);
            }
        }
        let (mu, w) = eigh(&b);
        let value: f64 = mu.iter().map(|m| m.abs()).sum();
        if !want_grad {
            return (value, None);
        }
        // Q = V L⁻¹ W sgn(μ) W* L⁻¹ V*, c_ab = s_a (QG)_{ba}.
        let mut wl = w.clone();
        for i in 0..k {
            for j in 0..k {
                wl[(i, j)] /= C64::new(l[i], 0.0);
            }
        }
        let left = &vk * &wl;
        let mut signed = left.clone();
        for j in 0..k {
            let s = if mu[j] > 0.0 { 1.0 } else if mu[j] < 0.0 { -1.0 } else { 0.0 };
            for i in 0..r {
                signed[(i, j)] *= s;
            }
        }
        let q = signed * left.adjoint();
        let qg = q * g;
        let c = DMatrix::from_fn(r, r, |a, bb| {
            let s = if a < self.r1 { 1.0 } else { -1.0 };
            qg[(bb, a)] * s
        });
        (value, Some(self.apply_combination(&c, x, ys)))
    }

    /// Distance through the output operator `Σ_a s_a y_a y_a*`, cheaper than the
    /// Gram route once the Kraus count exceeds the output dimension.
    fn distance_on_outputs(&self, ys: &[Operator], x: &Operator, want_grad: bool) -> (f64, Option<Operator>) {
        let r = self.r();
        let n = ys[0].nrows() * ys[0].ncols();
        let stacked = DMatrix::from_fn(n, r, |i, a| ys[a].as_slice()[i]);
        let mut signed = stacked.clone();
        for a in self.r1..r {
            for i in 0..n {
                signed[(i, a)] = -signed[(i, a)];
            }
        }
        let omega = &signed * stacked.adjoint();
        let omega = (&omega + omega.adjoint()) * C64::new(0.5, 0.0);
        let (vals, vecs) = eigh(&omega);
        let value: f64 = vals.iter().map(|v| v.abs()).sum();
        if !want_grad {
            return (value, None);
        }
        let mut sv = vecs.clone();
        for j in 0..n {
            let s = if vals[j] > 0.0 { 1.0 } else if vals[j] < 0.0 { -1.0 } else { 0.0 };
            for i in 0..n {
                sv[(i, j)] *= s;
            }
        }
        let z = sv * (vecs.adjoint() * &signed);
        let (dout, cols) = (ys[0].nrows(), ys[0].ncols());
        let mut out = Operator::zeros(self.din, x.ncols());
        for a in 0..r {
            let za = Operator::from_column_slice(dout, cols, z.column(a).as_slice());
            out += self.ops[a].adjoint() * za;
        }
        (value, Some(out))
    }

    fn fidelity_at(
        &self,
        g: &DMatrix<C64>,
        x: &Operator,
        ys: &Option<Vec<Operator>>,
        want_grad: bool,
    ) -> (f64, Option<Operator>) {
        let r = self.r();
        let r1 = self.r1;
        let cross = g.view((0, r1), (r1, r - r1)).into_owned();
        let svd = cross.svd(true, true);
        let value: f64 = svd.singular_values.iter().sum();
        if !want_grad {
            return (value, None);
        }
        let (Some(u), Some(vt)) = (svd.u, svd.v_t) else {
            return (value, Some(Operator::zeros(x.nrows(), x.ncols())));
        };
        let polar = u * vt;
        let mut c = DMatrix::from_element(r, r, ZERO);
        for a in 0..r1 {
            for b in 0..r - r1 {
                let p = polar[(a, b)];
                c[(a, r1 + b)] = p.conj() * 0.5;
                c[(r1 + b, a)] = p * 0.5;
            }
        }
        (value, Some(self.apply_combination(&c, x, ys)))
    }
}

// ---------------------------------------------------------------------------
// Constraint projection

/// Tilts amplitudes by `exp(−τ h)` (phases preserved) until each energy bound holds.
fn project(x: &Operator, constraint: &EnergyConstraint) -> Operator {
    let mut x = normalized(x.clone());
    if constraint.is_unconstrained() {
        return x;
    }
    let violated = |x: &Operator| {
        constraint.energies_of(x).iter().zip(constraint.bounds()).any(|(e, b)| *e > b + 1e-12)
    };
    if !violated(&x) {
        return x;
    }
    let row0: f64 = x.row(0).iter().map(|c| c.norm_sqr()).sum();
    if row0 < 1e-20 {
        // Seed a ground-state component so the tilt can reach low energy.
        x[(0, 0)] += C64::new(1e-6, 0.0);
        x = normalized(x);
    }
    for _round in 0..50 {
        if !violated(&x) {
            return x;
        }
        for (j, (h, bound)) in constraint.terms.iter().enumerate() {
            if constraint.energies_of(&x)[j] <= bound + 1e-12 {
                continue;
            }
            x = tilt_to(&x, h, |y| constraint.energies_of(y)[j], *bound);
        }
    }
    if violated(&x) {
        // Joint tilt by the sum of all observables drives the state to the ground level.
        let dim = x.nrows();
        let mut total = vec![0.0; dim];
        for (h, _) in &constraint.terms {
            for (t, e) in total.iter_mut().zip(h) {
                *t += e;
            }
        }
        let mut lo = 0.0;
        let mut hi = 1.0;
        while violated(&tilt(&x, &total, hi)) && hi < 1e6 {
            hi *= 2.0;
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if violated(&tilt(&x, &total, mid)) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        x = tilt(&x, &total, hi);
    }
    x
}

fn normalized(mut x: Operator) -> Operator {
    let n = frob_norm(&x);
    if n > 0.0 {
        x /= C64::new(n, 0.0);
    }
    x
}

fn tilt(x: &Operator, h: &[f64], tau: f64) -> Operator {
    let hmin = h.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut y = x.clone();
    for i in 0..y.nrows() {
        let s = (-tau * (h[i] - hmin)).exp();
        for j in 0..y.ncols() {
            y[(i, j)] *= s;
        }
    }
    normalized(y)
}

fn tilt_to(x: &Operator, h: &[f64], energy: impl Fn(&Operator) -> f64, bound: f64) -> Operator {
    let mut hi = 1.0;
    while energy(&tilt(x, h, hi)) > bound && hi < 1e6 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if energy(&tilt(x, h, mid)) > bound {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    tilt(x, h, hi)
}

/// Removes from `d` the components that would raise an active energy constraint.
fn tangent_direction(mut d: Operator, x: &Operator, constraint: &EnergyConstraint) -> Operator {
    let energies = constraint.energies_of(x);
    for (j, (h, bound)) in constraint.terms.iter().enumerate() {
        if energies[j] < bound - 1e-9 {
            continue;
        }
        let mut v = x.clone();
        for i in 0..v.nrows() {
            let s = C64::new(h[i] - energies[j], 0.0);
            for c in 0..v.ncols() {
                v[(i, c)] *= s;
            }
        }
        let vv = real_inner(&v, &v);
        let dv = real_inner(&v, &d);
        if vv > 0.0 && dv > 0.0 {
            d -= v * C64::new(dv / vv, 0.0);
        }
    }
    d
}

// ---------------------------------------------------------------------------
// Search

fn initial_point(din: usize, restart: usize, seed: u64, constraint: &EnergyConstraint) -> Operator {
    let mut rng = rng_for(seed, restart as u64);
    let bounds = constraint.bounds();
    let scale = if bounds.is_empty() { din as f64 } else { bounds.iter().cloned().fold(f64::INFINITY, f64::min).max(0.25) };
    let damp = |i: usize| -> f64 {
        if constraint.is_unconstrained() {
            1.0
        } else {
            let e: f64 = constraint.terms.iter().map(|(h, _)| h[i]).sum();
            (-e / (2.0 * scale)).exp()
        }
    };
    match restart {
        0 => {
            // Purification of a Gibbs-like state saturating the bounds.
            let mut x = Operator::zeros(din, din);
            for i in 0..din {
                x[(i, i)] = C64::new(damp(i), 0.0);
            }
            x
        }
        1 => {
            let mut x = Operator::zeros(din, din);
            x[(0, 0)] = C64::new(1.0, 0.0);
            for i in 1..din.min(3) {
                x[(i, 0)] = C64::new(damp(i), 0.0);
            }
            x
        }
        k if k % 2 == 0 => Operator::from_fn(din, din, |i, _| complex_normal(&mut rng) * damp(i)),
        _ => {
            let mut x = Operator::zeros(din, din);
            for i in 0..din {
                x[(i, 0)] = complex_normal(&mut rng) * damp(i);
            }
            x
        }
    }
}

fn better(mode: Mode, a: f64, b: f64, tol: f64) -> bool {
    match mode {
        Mode::Distance => a > b + tol,
        Mode::Fidelity => a < b - tol,
    }
}

fn run_restart(engine: &Engine, mode: Mode, start: Operator, constraint: &EnergyConstraint, opts: &SearchOptions) -> (f64, Operator) {
    let mut x = project(&start, constraint);
    let (mut f, mut gx) = engine.evaluate(mode, &x, true);
    let mut step = 1.0;
    let sign = if mode == Mode::Distance { 1.0 } else { -1.0 };
    for _ in 0..opts.max_iter {
        let gx_mat = gx.take().expect("gradient requested");
        let riem = (&gx_mat - &x * C64::new(f, 0.0)) * C64::new(sign, 0.0);
        let dir = tangent_direction(riem, &x, constraint);
        if frob_norm(&dir) < 1e-13 {
            gx = Some(gx_mat);
            break;
        }
        let mut accepted = false;
        let previous = f;
        while step > 1e-8 {
            let cand = project(&(&x + &dir * C64::new(step, 0.0)), constraint);
            let (fc, gc) = engine.evaluate(mode, &cand, true);
            if better(mode, fc, f, 0.0) {
                x = cand;
                f = fc;
                gx = gc;
                step = (step * 1.5).min(1e3);
                accepted = true;
                break;
            }
            step *= 0.3;
        }
        if !accepted {
            gx = Some(gx_mat);
            break;
        }
        if (f - previous).abs() <= opts.tol * previous.abs().max(1.0) {
            break;
        }
    }
    let _ = gx;
    (f, x)
}

fn search(
    engine: &Engine,
    mode: Mode,
    constraint: &EnergyConstraint,
    opts: &SearchOptions,
    stream_offset: u64,
    extra_starts: &[Operator],
) -> (f64, Operator) {
    let din = engine.din;
    let mut starts: Vec<Operator> = (0..opts.restarts)
        .map(|k| initial_point(din, k, opts.seed.wrapping_add(stream_offset), constraint))
        .collect();
    starts.extend(extra_starts.iter().cloned());
    let results: Vec<(f64, Operator)> =
        starts.into_par_iter().map(|s| run_restart(engine, mode, s, constraint, opts)).collect();
    let mut best = 0;
    for (k, (v, _)) in results.iter().enumerate() {
        if better(mode, *v, results[best].0, 0.0) {
            best = k;
        }
    }
    results.into_iter().nth(best).expect("at least one restart")
}

fn check_constraint(engine: &Engine, constraint: &EnergyConstraint) -> Result<()> {
    if let Some(d) = constraint.dim() {
        if d != engine.din {
            return Err(Error::DimensionMismatch { expected: engine.din, found: d });
        }
    }
    for b in constraint.bounds() {
        if !(b >= 0.0) {
            return domain(format!("energy bound {b} must be ≥ 0"));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Public API

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConstrainedDistanceReport {
    /// Certified lower bound on `‖Φ₁ − Φ₂‖⋄^E` (diamond-norm scale, in `[0, 2]`).
    pub lower: f64,
    /// Input state on `H ⊗ H_R` attaining `lower`.
    pub witness: PureState,
    /// Estimate of `F_cb^E` (an upper bound on the true infimum).
    pub cb_fidelity: f64,
    /// `2√(1 − F²)` at the fidelity estimate.
    pub upper: f64,
    pub energy: Option<f64>,
    pub witness_energy: Vec<f64>,
    pub restarts: usize,
    pub seed: u64,
}

/// Single-mode energy-constrained diamond-norm lower bound; `energy = None` is unconstrained.
pub fn ecd_lower_bound(
    a: &KrausChannel,
    b: &KrausChannel,
    energy: Option<f64>,
    opts: &SearchOptions,
) -> Result<ConstrainedDistanceReport> {
    if let Some(e) = energy {
        if !(e >= 0.0) {
            return domain(format!("energy E = {e} must be ≥ 0"));
        }
    }
    let constraint = match energy {
        Some(e) => EnergyConstraint::number(a.din, e),
        None => EnergyConstraint::unconstrained(),
    };
    let mut rep = ecd_with_constraint(a, b, &constraint, opts, None)?;
    rep.energy = energy;
    Ok(rep)
}

/// Lower bound under an arbitrary diagonal constraint, optionally warm-started from a witness.
pub fn ecd_with_constraint(
    a: &KrausChannel,
    b: &KrausChannel,
    constraint: &EnergyConstraint,
    opts: &SearchOptions,
    warm: Option<&PureState>,
) -> Result<ConstrainedDistanceReport> {
    let engine = Engine::new(a, b)?;
    check_constraint(&engine, constraint)?;
    let mut extra = Vec::new();
    if let Some(w) = warm {
        if w.dim() != engine.din * engine.din {
            return Err(Error::DimensionMismatch { expected: engine.din * engine.din, found: w.dim() });
        }
        extra.push(unvec(w, engine.din));
    }
    let (dist, xd) = search(&engine, Mode::Distance, constraint, opts, 0, &extra);
    let mut fid_starts = vec![xd.clone()];
    fid_starts.extend(extra);
    let (fid, xf) = search(&engine, Mode::Fidelity, constraint, opts, 0x5eed, &fid_starts);
    // Cross-evaluation keeps the reported pair consistent with the per-state inequalities.
    let (dist_at_xf, _) = engine.evaluate(Mode::Distance, &xf, false);
    let (lower, witness_x) = if dist_at_xf > dist { (dist_at_xf, xf) } else { (dist, xd) };
    let (fid_at_w, _) = engine.evaluate(Mode::Fidelity, &witness_x, false);
    let cb_fidelity = fid.min(fid_at_w).clamp(0.0, 1.0);
    let upper = (2.0 * (1.0 - cb_fidelity * cb_fidelity).max(0.0).sqrt()).min(2.0);
    Ok(ConstrainedDistanceReport {
        lower: lower.min(2.0),
        witness_energy: constraint.energies_of(&witness_x),
        witness: vec_of(&witness_x),
        cb_fidelity,
        upper,
        energy: None,
        restarts: opts.restarts,
        seed: opts.seed,
    })
}

/// Minimized output fidelity over energy-constrained inputs with reference.
pub fn cb_fidelity_estimate(a: &KrausChannel, b: &KrausChannel, energy: Option<f64>, opts: &SearchOptions) -> Result<f64> {
    let engine = Engine::new(a, b)?;
    let constraint = match energy {
        Some(e) => EnergyConstraint::number(a.din, e),
        None => EnergyConstraint::unconstrained(),
    };
    check_constraint(&engine, &constraint)?;
    let (fid, _) = search(&engine, Mode::Fidelity, &constraint, opts, 0x5eed, &[]);
    Ok(fid.clamp(0.0, 1.0))
}

/// `‖((Φ₁ − Φ₂) ⊗ id)(ψ)‖₁` at a given witness `ψ ∈ H ⊗ H_R`.
pub fn evaluate_at(a: &KrausChannel, b: &KrausChannel, witness: &PureState) -> Result<f64> {
    let engine = Engine::new(a, b)?;
    if witness.dim() % engine.din != 0 {
        return Err(Error::DimensionMismatch { expected: engine.din, found: witness.dim() });
    }
    Ok(engine.evaluate(Mode::Distance, &unvec(witness, engine.din), false).0)
}

/// Output fidelity at a given witness.
pub fn fidelity_at(a: &KrausChannel, b: &KrausChannel, witness: &PureState) -> Result<f64> {
    let engine = Engine::new(a, b)?;
    Ok(engine.evaluate(Mode::Fidelity, &unvec(witness, engine.din), false).0)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MultiDistanceReport {
    /// Lower bound on the multiply constrained norm `‖·‖⋄^{(E₁..E_ℓ)}`.
    pub lower: f64,
    /// Single-constraint value at `E_min` (total energy).
    pub lower_min: f64,
    /// Single-constraint value at `E_sum` (total energy).
    pub lower_sum: f64,
    pub witness: PureState,
    pub witness_energies: Vec<f64>,
    pub budgets: Vec<f64>,
    pub sandwich_holds: bool,
}

/// Multiply constrained lower bound on `d_1 ⊗ … ⊗ d_ℓ` with one bound per factor.
/// The `E_min` and `E_sum` single-constraint runs warm-start each other so the
/// estimates respect `‖·‖^{E_min} ≤ ‖·‖^{(E₁..E_ℓ)} ≤ ‖·‖^{E_sum}`.
pub fn multi_ecd_lower_bound(
    a: &KrausChannel,
    b: &KrausChannel,
    factor_dims: &[usize],
    budgets: &[f64],
    opts: &SearchOptions,
) -> Result<MultiDistanceReport> {
    if factor_dims.len() != budgets.len() || factor_dims.is_empty() {
        return domain("one energy budget per tensor factor is required");
    }
    let total: usize = factor_dims.iter().product();
    if total != a.din {
        return Err(Error::DimensionMismatch { expected: a.din, found: total });
    }
    if budgets.iter().any(|&e| !(e >= 0.0)) {
        return domain("per-factor energy budgets must be ≥ 0 (constraint infeasible)");
    }
    let e_min = budgets.iter().cloned().fold(f64::INFINITY, f64::min);
    let e_sum: f64 = budgets.iter().sum();
    let low = ecd_with_constraint(a, b, &EnergyConstraint::total_over_factors(factor_dims, e_min), opts, None)?;
    let per = EnergyConstraint::per_factor(factor_dims, budgets);
    let mid = ecd_with_constraint(a, b, &per, opts, Some(&low.witness))?;
    let high = ecd_with_constraint(a, b, &EnergyConstraint::total_over_factors(factor_dims, e_sum), opts, Some(&mid.witness))?;
    let sandwich_holds = low.lower <= mid.lower + 1e-9 && mid.lower <= high.lower + 1e-9;
    Ok(MultiDistanceReport {
        lower: mid.lower,
        lower_min: low.lower,
        lower_sum: high.lower,
        witness_energies: per.energies_of(&unvec(&mid.witness, a.din)),
        witness: mid.witness,
        budgets: budgets.to_vec(),
        sandwich_holds,
    })
}

/// Closed-form `‖U·U* − V·V*‖⋄ = 2√(1 − ν²)`, `ν` the distance from the origin
/// to the convex hull of the spectrum of `U*V`.
pub fn unitary_diamond_distance(u: &Operator, v: &Operator) -> Result<f64> {
    if u.shape() != v.shape() || u.nrows() != u.ncols() {
        return Err(Error::DimensionMismatch { expected: u.nrows(), found: v.nrows() });
    }
    let w = u.adjoint() * v;
    let (_, t) = w.schur().unpack();
    let mut angles: Vec<f64> = (0..t.nrows()).map(|i| t[(i, i)].arg()).collect();
    angles.sort_by(|a, b| a.partial_cmp(b).expect("finite phases"));
    let n = angles.len();
    let mut largest_gap: f64 = 0.0;
    for i in 0..n {
        let next = if i + 1 < n { angles[i + 1] } else { angles[0] + 2.0 * std::f64::consts::PI };
        largest_gap = largest_gap.max(next - angles[i]);
    }
    let arc = 2.0 * std::f64::consts::PI - largest_gap;
    let nu = if arc >= std::f64::consts::PI { 0.0 } else { (arc / 2.0).cos() };
    Ok(2.0 * (1.0 - nu * nu).max(0.0).sqrt())
}
