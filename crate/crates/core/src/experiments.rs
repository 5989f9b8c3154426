//! Seeded experiment configurations and their tabular reports.
//!
//! A report embeds the config that produced it; running the same config again
//! yields byte-identical serialized output.

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::bounds::{
    attenuator_ensemble_entropy, attenuator_lower_bound, gc_upper_bound, gibbs_entropy_g, gu_upper_bound, holevo,
    info_chain_lower_bound, multimode_rotation_lower_bound, rotation_lower_bound, table_bound, virtual_fock_ensemble,
    BoundReport, Column, Side, TableParams, TableRow,
};
use crate::channels::{
    displacement_unitary, gauge_covariant, rotation, squeezer_unitary, EnergyBudget,
    GaugeCovariantParams, KrausChannel,
};
use crate::error::{domain, Error, Result};
use crate::fock::{thermal_state, von_neumann_entropy, DensityOperator, FockSpace, Operator};
use crate::metrics::{ecd_lower_bound, multi_ecd_lower_bound, unitary_diamond_distance, SearchOptions};
use crate::nets::{
    gc_analytic_bound, gc_net, gu_net, nearest_point, net_cover_distance, net_epsilon, CoverTarget, GuParameters,
    NetKind, NetSpec,
};
use crate::processor::{lift_processor, pet_build, replication_build, tensor_power_unitary};
use crate::random::rng_for;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub cutoff: usize,
    pub restarts: usize,
    pub max_iter: usize,
    pub format: Format,
    #[serde(default)]
    pub output: Option<String>,
    pub experiment: Experiment,
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> Self {
        Self { seed: 0, cutoff: 16, restarts: 32, max_iter: 500, format: Format::Json, output: None, experiment }
    }

    pub fn search_options(&self) -> SearchOptions {
        SearchOptions::with_seed(self.seed).restarts(self.restarts).max_iter(self.max_iter)
    }

    pub fn space(&self) -> Result<FockSpace> {
        FockSpace::single(self.cutoff)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "kebab-case")]
pub enum Experiment {
    Bounds(BoundsJob),
    Net(NetJob),
    Simulate(SimulateJob),
    Replicate(ReplicateJob),
    Diamond(DiamondJob),
    Holevo(HolevoJob),
}

impl Experiment {
    pub fn id(&self) -> &'static str {
        match self {
            Experiment::Bounds(_) => "bounds",
            Experiment::Net(_) => "net",
            Experiment::Simulate(_) => "simulate",
            Experiment::Replicate(_) => "replicate",
            Experiment::Diamond(_) => "diamond",
            Experiment::Holevo(_) => "holevo",
        }
    }
}

/// Sweep of one closed-form bound over the Cartesian product of parameter lists.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsJob {
    /// `gc-upper`, `rotation-lower`, `attenuator-lower`, `gu-upper`, `multimode-lower`,
    /// `info-chain`, or `table-{upper|lower}-{1..4}-{finite|infinite}`.
    pub formula: String,
    pub params: BTreeMap<String, Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetJob {
    pub kind: NetKind,
    pub resolutions: Vec<f64>,
    pub energy: f64,
    pub alpha: f64,
    pub beta: f64,
    pub modes: usize,
    /// Random targets checked for grid cover.
    pub samples: usize,
    /// How many of those also get a measured distance.
    pub measured: usize,
}

/// Lift of a PET over an evenly spaced rotation net on `d` levels to the cutoff space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulateJob {
    pub d: usize,
    pub points: usize,
    pub energy: f64,
    pub targets: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateJob {
    pub phi: f64,
    pub copies: usize,
    pub energy: f64,
    /// Single-use error of the approximating processor, closed form on the cutoff space.
    pub eps_proc: f64,
    /// Cutoff of each copy in the replicated processor.
    pub copy_cutoff: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiamondJob {
    pub ch1: String,
    pub ch2: String,
    pub energy: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HolevoKind {
    Attenuator,
    PhaseOrbit,
    Thermal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolevoJob {
    pub experiment: HolevoKind,
    pub energy: f64,
    #[serde(default)]
    pub sigma2: f64,
    #[serde(default)]
    pub points: usize,
    #[serde(default)]
    pub copies: usize,
    /// Real amplitude profile `c_n` for the phase orbit (normalized on use).
    #[serde(default)]
    pub profile: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
    pub summary: BTreeMap<String, Value>,
    /// Overall verdict when the experiment compares a measurement to a bound.
    pub pass: Option<bool>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Value>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| &r[k]).collect())
    }
}

/// Cell text for CSV output: strings verbatim, numbers in shortest round-trip form.
pub fn cell_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn num(x: f64) -> Value {
    // JSON has no NaN/inf; those become strings so the cell stays visible.
    if x.is_finite() {
        json!(x)
    } else {
        json!(x.to_string())
    }
}

struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<Value>>,
}

impl Table {
    fn new(cols: &[&str]) -> Self {
        Self { columns: cols.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut summary = BTreeMap::new();
    let (table, pass) = match &config.experiment {
        Experiment::Bounds(job) => (run_bounds(job)?, None),
        Experiment::Net(job) => run_net(config, job, &mut summary)?,
        Experiment::Simulate(job) => run_simulate(config, job, &mut summary)?,
        Experiment::Replicate(job) => run_replicate(config, job, &mut summary)?,
        Experiment::Diamond(job) => run_diamond(config, job, &mut summary)?,
        Experiment::Holevo(job) => run_holevo(config, job, &mut summary)?,
    };
    Ok(ExperimentReport { config: config.clone(), columns: table.columns, rows: table.rows, summary, pass })
}

// ---------------------------------------------------------------------------
// Bounds

fn required(formula: &str) -> Result<&'static [&'static str]> {
    Ok(match formula {
        "gc-upper" => &["energy", "epsilon"],
        "rotation-lower" => &["energy", "epsilon", "delta"],
        "attenuator-lower" => &["energy", "epsilon"],
        "gu-upper" => &["energy", "epsilon"],
        "multimode-lower" => &["energy", "epsilon", "delta"],
        "info-chain" => &["chi", "energy", "epsilon"],
        f if f.starts_with("table-") => {
            let (_, _, col) = parse_table_formula(f)?;
            match col {
                Column::Finite => &["d", "epsilon"],
                Column::Infinite => &["d", "gamma", "energy"],
            }
        }
        other => return domain(format!("unknown formula '{other}'")),
    })
}

fn parse_table_formula(f: &str) -> Result<(TableRow, &str, Column)> {
    let parts: Vec<&str> = f.split('-').collect();
    if parts.len() != 4 || parts[0] != "table" {
        return domain(format!("table formula '{f}' must look like table-upper-3-finite"));
    }
    let row = TableRow::parse(&format!("{}-{}", parts[1], parts[2]))?;
    let col = match parts[3] {
        "finite" => Column::Finite,
        "infinite" => Column::Infinite,
        other => return domain(format!("unknown column '{other}'")),
    };
    Ok((row, parts[1], col))
}

/// Evaluates one formula at a parameter point.
pub fn evaluate_formula(formula: &str, p: &BTreeMap<String, f64>) -> Result<BoundReport> {
    for key in required(formula)? {
        if !p.contains_key(*key) {
            return domain(format!("formula '{formula}' requires parameter '{key}'"));
        }
    }
    let get = |k: &str, default: f64| p.get(k).copied().unwrap_or(default);
    let modes = |v: f64| -> Result<usize> {
        if v >= 1.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            domain(format!("mode count {v} must be a positive integer"))
        }
    };
    match formula {
        "gc-upper" => gc_upper_bound(get("energy", 0.0), get("beta", 0.0), get("epsilon", 0.0), p.get("c").copied()),
        "rotation-lower" => rotation_lower_bound(get("energy", 0.0), get("epsilon", 0.0), get("delta", 0.0)),
        "attenuator-lower" => attenuator_lower_bound(get("energy", 0.0), get("epsilon", 0.0)),
        "gu-upper" => gu_upper_bound(get("energy", 0.0), get("alpha", 1.0), get("beta", 0.0), get("epsilon", 0.0), modes(get("modes", 1.0))?),
        "multimode-lower" => {
            multimode_rotation_lower_bound(get("energy", 0.0), get("epsilon", 0.0), get("delta", 0.0), modes(get("modes", 1.0))?)
        }
        "info-chain" => {
            let (chi, e, a, b, eps) = (get("chi", 0.0), get("energy", 0.0), get("alpha", 1.0), get("beta", 0.0), get("epsilon", 0.0));
            let v = info_chain_lower_bound(chi, e, a, b, eps)?;
            Ok(BoundReport {
                name: "info-chain".into(),
                inputs: p.clone(),
                value: v,
                ln_value: if v > 0.0 { v.ln() } else { f64::NAN },
                side: Side::Lower,
                formula: "chi - 16 sqrt(eps) g((alpha E + beta)/(4 eps^(3/2))) - 2".into(),
                note: Some("value in bits; lower bound on log2 d_P".into()),
            })
        }
        f => {
            let (row, _, col) = parse_table_formula(f)?;
            let d = get("d", 0.0);
            if !(d >= 2.0 && d.fract() == 0.0) {
                return domain(format!("d = {d} must be an integer ≥ 2"));
            }
            let tp = TableParams {
                d: d as usize,
                epsilon: get("epsilon", f64::NAN),
                energy: get("energy", 1.0),
                alpha: get("alpha", 1.0),
                beta: get("beta", 0.0),
                gamma: get("gamma", f64::NAN),
                energy_of_d: p.get("energy_of_d").copied(),
                c_tilde: get("c_tilde", 1.0),
                k: get("k", 1.0),
                c: get("c", 1.0),
                theta: get("theta", 1.0),
                exponent: get("exponent", 1.0),
            };
            table_bound(row, col, &tp)
        }
    }
}

fn run_bounds(job: &BoundsJob) -> Result<Table> {
    required(&job.formula)?;
    let keys: Vec<&String> = job.params.keys().collect();
    if let Some((k, _)) = job.params.iter().find(|(_, v)| v.is_empty()) {
        return domain(format!("parameter '{k}' has no values"));
    }
    let mut table = Table::new(&["formula", "side", "inputs", "value", "ln_value", "log2_value", "formula_text", "note"]);
    let total: usize = job.params.values().map(|v| v.len()).product();
    for flat in 0..total {
        let mut rem = flat;
        let mut point = BTreeMap::new();
        for k in keys.iter().rev() {
            let vals = &job.params[*k];
            point.insert((*k).clone(), vals[rem % vals.len()]);
            rem /= vals.len();
        }
        let rep = evaluate_formula(&job.formula, &point)?;
        let inputs: Vec<String> = rep.inputs.iter().map(|(k, v)| format!("{k}={v}")).collect();
        table.push(vec![
            json!(job.formula),
            json!(if rep.side == Side::Upper { "upper" } else { "lower" }),
            json!(inputs.join(";")),
            num(rep.value),
            num(rep.ln_value),
            num(rep.log2_value()),
            json!(rep.formula),
            json!(rep.note.unwrap_or_default()),
        ]);
    }
    Ok(table)
}

// ---------------------------------------------------------------------------
// Channel specs

/// Parses `id`, `rot:φ`, `att:λ`, `amp:μ`, `gc:λ,φ,μ`, `disp:x,p` or `sq:r`.
pub fn parse_channel(spec: &str, space: &FockSpace) -> Result<KrausChannel> {
    if let Some(p) = gc_family(spec)? {
        return gauge_covariant(&p, space).map(|mut c| {
            c.label = spec.to_string();
            c
        });
    }
    let (head, args) = split_spec(spec)?;
    let mut ch = match head {
        "disp" => displacement_unitary(&args, space)?,
        "sq" => {
            if args.len() != 1 {
                return domain("sq takes one squeezing parameter");
            }
            squeezer_unitary(args[0], space)?
        }
        other => return domain(format!("unknown channel kind '{other}'")),
    };
    ch.label = spec.to_string();
    Ok(ch)
}

fn split_spec(spec: &str) -> Result<(&str, Vec<f64>)> {
    let (head, rest) = spec.split_once(':').unwrap_or((spec, ""));
    let args = if rest.is_empty() {
        Vec::new()
    } else {
        rest.split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| Error::Domain(format!("bad number '{s}' in channel spec '{spec}'"))))
            .collect::<Result<_>>()?
    };
    Ok((head, args))
}

/// Gauge-covariant parameters of a spec in that family (`id`, `rot`, `att`, `amp`, `gc`).
pub fn gc_family(spec: &str) -> Result<Option<GaugeCovariantParams>> {
    let (head, a) = split_spec(spec)?;
    let want = |n: usize| -> Result<()> {
        if a.len() != n {
            return domain(format!("'{head}' takes {n} argument(s), got {}", a.len()));
        }
        Ok(())
    };
    Ok(Some(match head {
        "id" => {
            want(0)?;
            GaugeCovariantParams::new(1.0, 0.0, 1.0)?
        }
        "rot" => {
            want(1)?;
            GaugeCovariantParams::new(1.0, a[0], 1.0)?
        }
        "att" => {
            want(1)?;
            GaugeCovariantParams::new(a[0], 0.0, 1.0)?
        }
        "amp" => {
            want(1)?;
            GaugeCovariantParams::new(1.0, 0.0, a[0])?
        }
        "gc" => {
            want(3)?;
            GaugeCovariantParams::new(a[0], a[1], a[2])?
        }
        _ => return Ok(None),
    }))
}

// ---------------------------------------------------------------------------
// Experiments

fn run_net(config: &ExperimentConfig, job: &NetJob, summary: &mut BTreeMap<String, Value>) -> Result<(Table, Option<bool>)> {
    let budget = EnergyBudget::new(job.energy, job.alpha, job.beta)?;
    let net: NetSpec = match job.kind {
        NetKind::GaugeCovariant => {
            if job.resolutions.len() != 3 {
                return domain("gauge-covariant nets take three resolutions (ε_λ, ε_φ, ε_μ)");
            }
            gc_net(job.resolutions[0], job.resolutions[1], job.resolutions[2], &budget)?
        }
        NetKind::GaussianUnitary => {
            if job.resolutions.len() != 2 {
                return domain("Gaussian-unitary nets take two resolutions (ε_S, ε_d)");
            }
            gu_net(job.resolutions[0], job.resolutions[1], &budget, job.modes)?
        }
    };
    summary.insert("points".into(), json!(net.len()));
    summary.insert("cardinality_bound".into(), num(net.cardinality_bound));
    summary.insert("within_bound".into(), json!(net.within_bound()));
    summary.insert("claimed_half_epsilon".into(), num(net_epsilon(&net)));
    let space = config.space()?;
    let opts = config.search_options();
    let mut rng = rng_for(config.seed, 0x6e6574);
    let mut table = Table::new(&["sample", "target", "nearest", "offsets", "within_resolution", "analytic", "measured", "holds"]);
    let mut all = net.within_bound();
    let mut max_tp = 0.0f64;
    for s in 0..job.samples {
        let (target, text) = match job.kind {
            NetKind::GaugeCovariant => {
                let mu = if job.beta == 0.0 { 1.0 } else { 1.0 + job.beta * rng.random::<f64>() };
                let t = GaugeCovariantParams::new(rng.random::<f64>(), 2.0 * PI * rng.random::<f64>(), mu)?;
                let text = format!("gc:{},{},{}", t.lambda, t.phi, t.mu);
                (CoverTarget::GaugeCovariant(t), text)
            }
            NetKind::GaussianUnitary => {
                let t = random_gu_target(&mut rng, &budget, job.modes);
                let text = format!("theta1={:?};s={:?};theta2={:?};d={:?}", t.theta1, t.squeeze, t.theta2, t.displacement);
                (CoverTarget::GaussianUnitary(t), text)
            }
        };
        let row = if s < job.measured {
            let rep = net_cover_distance(&net, &target, job.energy, &space, &opts)?;
            all &= rep.holds && rep.within_resolution;
            max_tp = max_tp.max(crate::nets::point_channel(&rep.nearest, &space)?.tp_deficiency);
            vec![
                json!(s),
                json!(text),
                json!(rep.nearest_index),
                json!(join(&rep.offsets)),
                json!(rep.within_resolution),
                num(rep.analytic),
                num(rep.measured),
                json!(rep.holds),
            ]
        } else {
            let (idx, off, ok) = nearest_point(&net, &target)?;
            all &= ok;
            vec![json!(s), json!(text), json!(idx), json!(join(&off)), json!(ok), Value::Null, Value::Null, Value::Null]
        };
        table.push(row);
    }
    summary.insert("max_tp_deficiency".into(), num(max_tp));
    Ok((table, Some(all)))
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

/// Uniformly drawn decomposition parameters of an admissible Gaussian unitary.
pub fn random_gu_target<R: Rng + ?Sized>(rng: &mut R, budget: &EnergyBudget, modes: usize) -> GuParameters {
    let m = modes;
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| PI * (2.0 * rng.random::<f64>() - 1.0)).collect() };
    let theta1 = draw(m * m);
    let theta2 = draw(m * m);
    let squeeze = (0..m).map(|_| 0.5 * budget.alpha.ln() * rng.random::<f64>()).collect();
    // Uniform direction, radius with the ball's volume law.
    let n = 2 * m;
    let mut dir: Vec<f64> = (0..n).map(|_| rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng)).collect();
    let norm = dir.iter().map(|x: &f64| x * x).sum::<f64>().sqrt().max(1e-300);
    let r = (2.0 * budget.beta).sqrt() * rng.random::<f64>().powf(1.0 / n as f64);
    for x in dir.iter_mut() {
        *x *= r / norm;
    }
    GuParameters { theta1, squeeze, theta2, displacement: dir }
}

fn run_simulate(config: &ExperimentConfig, job: &SimulateJob, summary: &mut BTreeMap<String, Value>) -> Result<(Table, Option<bool>)> {
    if job.points == 0 {
        return domain("rotation net needs at least one point");
    }
    let inner_space = FockSpace::single(job.d)?;
    let phis: Vec<f64> = (0..job.points).map(|j| 2.0 * PI * j as f64 / job.points as f64).collect();
    let channels: Vec<KrausChannel> = phis.iter().map(|&p| rotation(p, &inner_space)).collect::<Result<_>>()?;
    let pet = pet_build(&channels)?;
    let worst = rotation(PI / job.points as f64, &inner_space)?;
    let eps = 0.5 * unitary_diamond_distance(&worst.kraus[0], &Operator::identity(job.d, job.d))?;
    let budget = EnergyBudget::new(job.energy, 1.0, 0.0)?;
    let space = config.space()?;
    let (lifted, gamma) = lift_processor(&pet, eps, &budget, &space)?;
    summary.insert("inner_epsilon".into(), num(eps));
    summary.insert("gamma".into(), num(gamma));
    summary.insert("program_dim".into(), json!(lifted.program_dim));
    summary.insert("tp_deficiency".into(), num(lifted.channel.tp_deficiency));
    let opts = config.search_options();
    let mut rng = rng_for(config.seed, 0x73696d);
    let mut table = Table::new(&["target_phi", "program", "table_distance", "measured_half", "gamma", "margin", "pass"]);
    let mut all = true;
    for _ in 0..job.targets {
        let phi = 2.0 * PI * rng.random::<f64>();
        let target = rotation(phi, &space)?;
        let choice = lifted.program_for_unitary(&target.kraus[0])?;
        let eff = lifted.effective(&choice.state)?;
        let rep = ecd_lower_bound(&eff, &target, Some(job.energy), &opts)?;
        let half = 0.5 * rep.lower;
        let ok = half <= gamma + 1e-9;
        all &= ok;
        table.push(vec![num(phi), json!(choice.label), num(choice.table_distance), num(half), num(gamma), num(gamma - half), json!(ok)]);
    }
    Ok((table, Some(all)))
}

/// Angle offset whose truncated rotation on `dim` levels has half diamond distance `eps`.
pub fn offset_for_error(eps: f64, dim: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&eps) {
        return domain(format!("single-use error {eps} outside [0, 1]"));
    }
    if dim < 2 {
        return Ok(0.0);
    }
    // Spectrum spread (dim−1)δ gives ½‖·‖⋄ = sin(spread/2) while spread ≤ π.
    Ok(2.0 * eps.asin() / (dim - 1) as f64)
}

fn run_replicate(config: &ExperimentConfig, job: &ReplicateJob, summary: &mut BTreeMap<String, Value>) -> Result<(Table, Option<bool>)> {
    if job.copies == 0 {
        return domain("number of copies ℓ must be ≥ 1");
    }
    let dc = job.copy_cutoff;
    let copy_space = FockSpace::single(dc)?;
    let offset = offset_for_error(job.eps_proc, config.cutoff)?;
    // Program 0 is the approximation of R_φ; the others are decoys.
    let angles = [job.phi + offset, job.phi + PI, job.phi + PI / 2.0];
    let channels: Vec<KrausChannel> = angles.iter().map(|&a| rotation(a, &copy_space)).collect::<Result<_>>()?;
    let pet = pet_build(&channels)?;
    let target = rotation(job.phi, &copy_space)?;
    let u = target.kraus[0].clone();
    let eps_upper = 0.5 * unitary_diamond_distance(&channels[0].kraus[0], &u)?;
    let opts = config.search_options();
    let single = ecd_lower_bound(&channels[0], &target, Some(job.energy), &opts)?;
    let inverse_budget = EnergyBudget::new(job.energy, 1.0, 0.0)?;
    // The certified single-use error is the eps_proc calibration on the full cutoff.
    let eps_claim = job.eps_proc.max(eps_upper);
    let program = DensityOperator::basis(pet.program_dim, 0);
    summary.insert("angle_offset".into(), num(offset));
    summary.insert("single_use_upper".into(), num(eps_upper));
    summary.insert("single_use_measured".into(), num(0.5 * single.lower));
    let mut table = Table::new(&["copies", "measured_half", "claimed", "margin", "memory_error", "sandwich_holds", "pass"]);
    let mut all = true;
    for l in 1..=job.copies {
        let rep = replication_build(&pet, &u, &program, l, &inverse_budget, eps_claim)?;
        let eff = rep.effective(&rep.program)?;
        let ideal = tensor_power_unitary(&u, l)?;
        let multi = multi_ecd_lower_bound(&eff, &ideal, &vec![dc; l], &vec![job.energy; l], &opts)?;
        let half = 0.5 * multi.lower;
        let ok = half <= rep.claimed + 1e-9;
        all &= ok;
        table.push(vec![json!(l), num(half), num(rep.claimed), num(rep.claimed - half), num(rep.memory_error), json!(multi.sandwich_holds), json!(ok)]);
    }
    Ok((table, Some(all)))
}

fn run_diamond(config: &ExperimentConfig, job: &DiamondJob, summary: &mut BTreeMap<String, Value>) -> Result<(Table, Option<bool>)> {
    let space = config.space()?;
    let a = parse_channel(&job.ch1, &space)?;
    let b = parse_channel(&job.ch2, &space)?;
    let rep = ecd_lower_bound(&a, &b, job.energy, &config.search_options())?;
    let analytic = match (gc_family(&job.ch1)?, gc_family(&job.ch2)?, job.energy) {
        (Some(p), Some(q), Some(e)) => {
            let dphi = (p.phi - q.phi).rem_euclid(2.0 * PI);
            Some(gc_analytic_bound(p.lambda - q.lambda, dphi.min(2.0 * PI - dphi), p.mu - q.mu, e))
        }
        _ => None,
    };
    summary.insert("tp_deficiency".into(), num(a.tp_deficiency.max(b.tp_deficiency)));
    summary.insert("witness_energy".into(), json!(rep.witness_energy));
    let pass = analytic.map(|v| rep.lower <= v + 1e-9);
    let mut table = Table::new(&["ch1", "ch2", "energy", "lower", "upper", "cb_fidelity", "analytic", "pass"]);
    table.push(vec![
        json!(job.ch1),
        json!(job.ch2),
        job.energy.map(num).unwrap_or(Value::Null),
        num(rep.lower),
        num(rep.upper),
        num(rep.cb_fidelity),
        analytic.map(num).unwrap_or(Value::Null),
        pass.map(|p| json!(p)).unwrap_or(Value::Null),
    ]);
    Ok((table, pass))
}

fn run_holevo(config: &ExperimentConfig, job: &HolevoJob, summary: &mut BTreeMap<String, Value>) -> Result<(Table, Option<bool>)> {
    let space = config.space()?;
    let mut table = Table::new(&["experiment", "parameter", "numeric", "analytic", "difference", "tolerance", "pass"]);
    let pass = match job.experiment {
        HolevoKind::Attenuator => {
            let points = if job.points == 0 { 201 } else { job.points };
            let r = attenuator_ensemble_entropy(job.sigma2, job.energy, points, &space)?;
            summary.insert("eta".into(), num(r.eta));
            summary.insert("eta_bound".into(), num(r.eta_bound));
            summary.insert("quadrature_points".into(), json!(r.points));
            summary.insert("quadrature_convergence".into(), num(r.convergence));
            let diff = (r.numeric - r.analytic).abs();
            let ok = diff <= 0.02 && r.eta <= r.eta_bound;
            table.push(vec![json!("attenuator"), json!(format!("sigma2={}", job.sigma2)), num(r.numeric), num(r.analytic), num(diff), num(0.02), json!(ok)]);
            ok
        }
        HolevoKind::PhaseOrbit => {
            let copies = job.copies.max(1);
            let norm = job.profile.iter().map(|c| c * c).sum::<f64>().sqrt();
            if job.profile.is_empty() || norm == 0.0 {
                return domain("phase orbit needs a non-zero amplitude profile");
            }
            let profile: Vec<num_complex::Complex64> = job.profile.iter().map(|&c| (c / norm).into()).collect();
            let ens = virtual_fock_ensemble(copies, 1, job.energy, &profile, config.cutoff)?;
            let chi = holevo(&ens.ensemble)?;
            summary.insert("phases".into(), json!(ens.phases.len()));
            summary.insert("mean_photons".into(), num(ens.mean_photons));
            let diff = (chi - ens.expected_holevo).abs();
            let ok = diff <= 1e-8;
            table.push(vec![json!("phase-orbit"), json!(format!("copies={copies}")), num(chi), num(ens.expected_holevo), num(diff), num(1e-8), json!(ok)]);
            ok
        }
        HolevoKind::Thermal => {
            let rho = thermal_state(job.energy, &space)?;
            let s = von_neumann_entropy(&rho)?;
            let g = gibbs_entropy_g(job.energy)?;
            let diff = (s - g).abs();
            let ok = diff <= 1e-6;
            table.push(vec![json!("thermal"), json!(format!("mean={}", job.energy)), num(s), num(g), num(diff), num(1e-6), json!(ok)]);
            ok
        }
    };
    Ok((table, Some(pass)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds_sweep_rows_and_missing_parameter() {
        let mut params = BTreeMap::new();
        params.insert("energy".to_string(), vec![1.0]);
        params.insert("delta".to_string(), vec![0.5]);
        params.insert("epsilon".to_string(), vec![1e-2, 1e-3, 1e-4]);
        let cfg = ExperimentConfig::new(Experiment::Bounds(BoundsJob { formula: "rotation-lower".into(), params: params.clone() }));
        let rep = run_experiment(&cfg).unwrap();
        assert_eq!(rep.rows.len(), 3);
        params.remove("delta");
        let bad = ExperimentConfig::new(Experiment::Bounds(BoundsJob { formula: "rotation-lower".into(), params }));
        assert!(matches!(run_experiment(&bad), Err(Error::Domain(_))));
    }

    #[test]
    fn channel_specs_parse() {
        let space = FockSpace::single(6).unwrap();
        for s in ["id", "rot:0.3", "att:0.5", "amp:1.5", "gc:0.5,1,1.2", "disp:0.3,0.1", "sq:0.2"] {
            assert!(parse_channel(s, &space).is_ok(), "{s}");
        }
        assert!(parse_channel("rot", &space).is_err());
        assert!(parse_channel("warp:1", &space).is_err());
        assert!(parse_channel("att:x", &space).is_err());
    }

    #[test]
    fn offset_calibration_hits_requested_error() {
        let space = FockSpace::single(10).unwrap();
        let delta = offset_for_error(0.05, 10).unwrap();
        let r = rotation(delta, &space).unwrap();
        let half = 0.5 * unitary_diamond_distance(&r.kraus[0], &Operator::identity(10, 10)).unwrap();
        assert!((half - 0.05).abs() < 1e-12);
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = ExperimentConfig::new(Experiment::Diamond(DiamondJob { ch1: "rot:0.1".into(), ch2: "id".into(), energy: Some(1.0) }));
        let text = serde_json::to_string(&cfg).unwrap();
        assert!(text.contains("\"id\":\"diamond\""));
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&text).unwrap(), cfg);
    }
}
