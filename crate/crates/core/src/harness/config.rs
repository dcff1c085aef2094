//! Flat `key = value` experiment configuration with dotted namespaces.
//!
//! Lines are `key = value`; `#` starts a comment. Unknown keys, repeated keys
//! and keys that do not apply to the chosen profile are errors. Omitted keys
//! take the defaults of [`ExperimentConfig::new`]. [`ExperimentConfig::to_text`]
//! writes every key in a fixed order, so parse, serialize and parse again
//! gives the same value.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::initdata::{OneParticleDensity, ProfileSpec};
use crate::kernel::CrossSectionSpec;
use crate::observables::CompactBox;
use crate::process::SimConfig;
use crate::uu::{SphereQuadrature, VelocityGrid};
use crate::vec3::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Relax,
    Converge,
    Chaos,
    HierarchyCheck,
    UuSolve,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::Relax,
        Experiment::Converge,
        Experiment::Chaos,
        Experiment::HierarchyCheck,
        Experiment::UuSolve,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Relax => "relax",
            Experiment::Converge => "converge",
            Experiment::Chaos => "chaos",
            Experiment::HierarchyCheck => "hierarchy-check",
            Experiment::UuSolve => "uu-solve",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::config(format!("unknown experiment '{s}'")))
    }
}

/// Initial-data family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitFamily {
    /// Product measure conditioned on admissibility, sampled by a Metropolis chain.
    ConditionedProduct,
    /// Two-scale construction with exactly factorized limit.
    TwoScale,
}

impl InitFamily {
    pub fn name(self) -> &'static str {
        match self {
            InitFamily::ConditionedProduct => "conditioned_product",
            InitFamily::TwoScale => "two_scale",
        }
    }
}

impl FromStr for InitFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conditioned_product" => Ok(InitFamily::ConditionedProduct),
            "two_scale" => Ok(InitFamily::TwoScale),
            _ => Err(Error::config(format!(
                "init.family must be conditioned_product or two_scale, got '{s}'"
            ))),
        }
    }
}

/// Initial field of the `uu-solve` experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UuStart {
    /// Normalized Fermi-Dirac state at `uu.beta`.
    FermiDirac,
    /// The initial profile `f_in`.
    Profile,
    /// The limit marginal `f_in / (exp(-a) + alpha f_in)`.
    Limit,
}

impl UuStart {
    pub fn name(self) -> &'static str {
        match self {
            UuStart::FermiDirac => "fermi_dirac",
            UuStart::Profile => "profile",
            UuStart::Limit => "limit",
        }
    }
}

impl FromStr for UuStart {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fermi_dirac" => Ok(UuStart::FermiDirac),
            "profile" => Ok(UuStart::Profile),
            "limit" => Ok(UuStart::Limit),
            _ => Err(Error::config(format!(
                "uu.start must be fermi_dirac, profile or limit, got '{s}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub n_particles: usize,
    pub alpha: f64,
    pub t_final: f64,
    pub snapshot_times: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub b0: f64,
    pub m_cut: f64,
}

impl KernelParams {
    pub fn spec(&self) -> CrossSectionSpec {
        CrossSectionSpec::smooth_ramp(self.b0, self.m_cut)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitParams {
    pub family: InitFamily,
    pub profile: ProfileSpec,
    /// Metropolis proposals before the first snapshot; `None` means `10 N`.
    pub burn_in: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UuParams {
    pub grid_n: usize,
    pub grid_l: f64,
    pub n_omega: usize,
    pub dt: f64,
    pub conservative: bool,
    pub start: UuStart,
    pub beta: f64,
    /// Also evaluate the operator once on the grid with half the spacing.
    pub refine_check: bool,
}

impl UuParams {
    pub fn grid(&self) -> Result<VelocityGrid> {
        VelocityGrid::new(self.grid_n, self.grid_l)
    }

    pub fn quadrature(&self) -> Result<SphereQuadrature> {
        SphereQuadrature::with_nodes(self.n_omega)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HierarchyParams {
    pub fields: usize,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputParams {
    /// Write per-cell marginal estimates.
    pub marginals: bool,
    /// Write uu field snapshots.
    pub fields: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    /// Replicas at the first (or only) particle number.
    pub replicas: usize,
    /// Replicas at `N` are `ceil(replicas * (N / N_0)^replica_growth)`.
    pub replica_growth: f64,
    pub resamples: usize,
    pub sim: SimParams,
    pub kernel: KernelParams,
    pub init: InitParams,
    pub uu: UuParams,
    /// Region of the one-particle distances.
    pub region: CompactBox,
    /// Region of the two-particle estimates.
    pub pair_region: CompactBox,
    pub n_sweep: Vec<usize>,
    pub hierarchy: HierarchyParams,
    pub output: OutputParams,
    pub out_dir: PathBuf,
}

fn cube(r: f64) -> CompactBox {
    CompactBox {
        lower: Vec3::new(-r, -r, -r),
        upper: Vec3::new(r, r, r),
    }
}

impl ExperimentConfig {
    /// Defaults for every key.
    pub fn new(experiment: Experiment) -> Self {
        Self {
            experiment,
            seed: 1,
            replicas: 16,
            replica_growth: 0.0,
            resamples: 64,
            sim: SimParams {
                n_particles: 2000,
                alpha: 0.2,
                t_final: 1.0,
                snapshot_times: vec![0.0, 1.0],
            },
            kernel: KernelParams {
                b0: 4.0,
                m_cut: 1.0,
            },
            init: InitParams {
                family: InitFamily::ConditionedProduct,
                profile: ProfileSpec::TruncatedMaxwellian {
                    center: Vec3::ZERO,
                    sigma: 1.0,
                    cutoff: 4.0,
                },
                burn_in: None,
            },
            uu: UuParams {
                grid_n: 21,
                grid_l: 5.0,
                n_omega: 32,
                dt: 5e-3,
                conservative: true,
                start: UuStart::FermiDirac,
                beta: 1.0,
                refine_check: false,
            },
            region: cube(1.5),
            pair_region: cube(0.25),
            n_sweep: vec![2000, 8000, 32000],
            hierarchy: HierarchyParams {
                fields: 5,
                samples: 64,
            },
            output: OutputParams {
                marginals: true,
                fields: true,
            },
            out_dir: PathBuf::from("out"),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with(text, None)
    }

    /// Parses a file for a given experiment; an `experiment` key, if present, must agree.
    pub fn parse_as(experiment: Experiment, text: &str) -> Result<Self> {
        Self::parse_with(text, Some(experiment))
    }

    fn parse_with(text: &str, expected: Option<Experiment>) -> Result<Self> {
        let mut kv = Entries::read(text)?;
        let experiment = match (kv.take("experiment"), expected) {
            (Some(name), want) => {
                let e: Experiment = name.parse()?;
                if want.is_some_and(|w| w != e) {
                    return Err(Error::config(format!(
                        "config is for experiment '{e}', not '{}'",
                        want.unwrap()
                    )));
                }
                e
            }
            (None, Some(e)) => e,
            (None, None) => return Err(Error::config("missing key 'experiment'")),
        };
        let mut c = Self::new(experiment);
        kv.set("seed", &mut c.seed)?;
        kv.set("replicas", &mut c.replicas)?;
        kv.set("replica_growth", &mut c.replica_growth)?;
        kv.set("bootstrap.resamples", &mut c.resamples)?;
        kv.set("sim.n_particles", &mut c.sim.n_particles)?;
        kv.set("sim.alpha", &mut c.sim.alpha)?;
        kv.set("sim.t_final", &mut c.sim.t_final)?;
        c.sim.snapshot_times = vec![0.0, c.sim.t_final];
        if let Some(v) = kv.take("sim.snapshot_times") {
            c.sim.snapshot_times = parse_list(&v, "sim.snapshot_times")?;
        }
        kv.set("kernel.b0", &mut c.kernel.b0)?;
        kv.set("kernel.m_cut", &mut c.kernel.m_cut)?;
        if let Some(v) = kv.take("kernel.form") {
            if v != "smooth_ramp" {
                return Err(Error::config(format!(
                    "kernel.form must be smooth_ramp in configuration files, got '{v}'"
                )));
            }
        }
        kv.set("init.family", &mut c.init.family)?;
        c.init.profile = parse_profile(&mut kv)?;
        if let Some(v) = kv.take("init.burn_in") {
            c.init.burn_in = Some(parse_value(&v, "init.burn_in")?);
        }
        kv.set("uu.grid_n", &mut c.uu.grid_n)?;
        kv.set("uu.grid_l", &mut c.uu.grid_l)?;
        kv.set("uu.n_omega", &mut c.uu.n_omega)?;
        kv.set("uu.dt", &mut c.uu.dt)?;
        kv.set("uu.conservative", &mut c.uu.conservative)?;
        kv.set("uu.start", &mut c.uu.start)?;
        kv.set("uu.beta", &mut c.uu.beta)?;
        kv.set("uu.refine_check", &mut c.uu.refine_check)?;
        c.region = parse_box(&mut kv, "box", c.region)?;
        c.pair_region = parse_box(&mut kv, "pair_box", c.pair_region)?;
        if let Some(v) = kv.take("n_sweep") {
            c.n_sweep = parse_list(&v, "n_sweep")?;
        }
        kv.set("hierarchy.fields", &mut c.hierarchy.fields)?;
        kv.set("hierarchy.samples", &mut c.hierarchy.samples)?;
        kv.set("output.marginals", &mut c.output.marginals)?;
        kv.set("output.fields", &mut c.output.fields)?;
        if let Some(v) = kv.take("out_dir") {
            c.out_dir = PathBuf::from(v);
        }
        kv.finish()?;
        Ok(c)
    }

    /// Every key in canonical order.
    pub fn to_text(&self) -> String {
        let mut lines: Vec<(String, String)> = vec![
            ("experiment".into(), self.experiment.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("replicas".into(), self.replicas.to_string()),
            ("replica_growth".into(), self.replica_growth.to_string()),
            ("bootstrap.resamples".into(), self.resamples.to_string()),
            ("sim.n_particles".into(), self.sim.n_particles.to_string()),
            ("sim.alpha".into(), self.sim.alpha.to_string()),
            ("sim.t_final".into(), self.sim.t_final.to_string()),
            ("sim.snapshot_times".into(), join(&self.sim.snapshot_times)),
            ("kernel.form".into(), "smooth_ramp".into()),
            ("kernel.b0".into(), self.kernel.b0.to_string()),
            ("kernel.m_cut".into(), self.kernel.m_cut.to_string()),
            ("init.family".into(), self.init.family.name().into()),
        ];
        lines.extend(profile_lines(&self.init.profile));
        if let Some(b) = self.init.burn_in {
            lines.push(("init.burn_in".into(), b.to_string()));
        }
        lines.extend([
            ("uu.grid_n".into(), self.uu.grid_n.to_string()),
            ("uu.grid_l".into(), self.uu.grid_l.to_string()),
            ("uu.n_omega".into(), self.uu.n_omega.to_string()),
            ("uu.dt".into(), self.uu.dt.to_string()),
            ("uu.conservative".into(), self.uu.conservative.to_string()),
            ("uu.start".into(), self.uu.start.name().into()),
            ("uu.beta".into(), self.uu.beta.to_string()),
            ("uu.refine_check".into(), self.uu.refine_check.to_string()),
            ("box.lower".into(), vec3_text(self.region.lower)),
            ("box.upper".into(), vec3_text(self.region.upper)),
            ("pair_box.lower".into(), vec3_text(self.pair_region.lower)),
            ("pair_box.upper".into(), vec3_text(self.pair_region.upper)),
            ("n_sweep".into(), join(&self.n_sweep)),
            ("hierarchy.fields".into(), self.hierarchy.fields.to_string()),
            (
                "hierarchy.samples".into(),
                self.hierarchy.samples.to_string(),
            ),
            ("output.marginals".into(), self.output.marginals.to_string()),
            ("output.fields".into(), self.output.fields.to_string()),
            ("out_dir".into(), self.out_dir.display().to_string()),
        ]);
        lines
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn f_in(&self) -> Result<OneParticleDensity> {
        OneParticleDensity::new(self.init.profile.clone())
    }

    /// Particle numbers of the run: the sweep for `converge` and `chaos`, else `sim.n_particles`.
    pub fn particle_numbers(&self) -> Vec<usize> {
        match self.experiment {
            Experiment::Converge | Experiment::Chaos => self.n_sweep.clone(),
            _ => vec![self.sim.n_particles],
        }
    }

    /// Replicas used at particle number `n`.
    pub fn replicas_for(&self, n: usize) -> usize {
        let n0 = self.particle_numbers()[0] as f64;
        let r = self.replicas as f64 * (n as f64 / n0).powf(self.replica_growth);
        (r - 1e-9).ceil().max(1.0) as usize
    }

    pub fn sim_config(&self, n: usize) -> SimConfig {
        SimConfig {
            n_particles: n,
            alpha: self.sim.alpha,
            t_final: self.sim.t_final,
            seed: self.seed,
            snapshot_times: self.sim.snapshot_times.clone(),
            kernel: self.kernel.spec(),
        }
    }

    /// All consistency checks that need no simulation.
    pub fn validate(&self) -> Result<()> {
        for n in self.particle_numbers() {
            self.sim_config(n).validate()?;
        }
        if self.sim.snapshot_times.is_empty() {
            return Err(Error::config("sim.snapshot_times must not be empty"));
        }
        if self.replicas == 0 {
            return Err(Error::config("replicas must be at least 1"));
        }
        if !(self.replica_growth >= 0.0 && self.replica_growth.is_finite()) {
            return Err(Error::config(format!(
                "replica_growth must be finite and >= 0, got {}",
                self.replica_growth
            )));
        }
        if matches!(self.experiment, Experiment::Converge | Experiment::Chaos) {
            if self.n_sweep.is_empty() {
                return Err(Error::config(
                    "n_sweep must list at least one particle number",
                ));
            }
            if self.n_sweep.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::config(format!(
                    "n_sweep must be strictly ascending, got {:?}",
                    self.n_sweep
                )));
            }
        }
        if self.experiment == Experiment::Chaos && self.init.family != InitFamily::TwoScale {
            return Err(Error::config(
                "the chaos experiment needs init.family = two_scale",
            ));
        }
        CompactBox::new(self.region.lower, self.region.upper)?;
        CompactBox::new(self.pair_region.lower, self.pair_region.upper)?;
        let f_in = self.f_in()?;
        let ag = self.sim.alpha * f_in.sup_bound();
        if ag >= 1.0 {
            return Err(Error::config(format!(
                "alpha * sup f_in = {ag} must be below 1"
            )));
        }
        let grid = self.uu.grid()?;
        self.uu.quadrature()?;
        if !(self.uu.dt > 0.0 && self.uu.dt.is_finite()) {
            return Err(Error::config(format!(
                "uu.dt must be positive, got {}",
                self.uu.dt
            )));
        }
        if !(self.uu.beta > 0.0 && self.uu.beta.is_finite()) {
            return Err(Error::config(format!(
                "uu.beta must be positive, got {}",
                self.uu.beta
            )));
        }
        let needs_profile_on_grid = match self.experiment {
            Experiment::Converge | Experiment::Chaos => true,
            Experiment::UuSolve => self.uu.start != UuStart::FermiDirac,
            _ => false,
        };
        if needs_profile_on_grid {
            let (lo, hi) = f_in.bounding_box();
            let l = grid.half_width();
            if (0..3).any(|a| lo.axis(a) < -l || hi.axis(a) > l) {
                return Err(Error::config(format!(
                    "the support of f_in does not fit in the uu box [-{l}, {l}]^3"
                )));
            }
        }
        if self.experiment == Experiment::HierarchyCheck && self.hierarchy.fields == 0 {
            return Err(Error::config("hierarchy.fields must be at least 1"));
        }
        Ok(())
    }
}

fn profile_lines(p: &ProfileSpec) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = Vec::new();
    let mut push = |k: &str, v: String| out.push((k.into(), v));
    match *p {
        ProfileSpec::Uniform { lower, upper } => {
            push("init.profile", "uniform".into());
            push("init.lower", vec3_text(lower));
            push("init.upper", vec3_text(upper));
        }
        ProfileSpec::TruncatedMaxwellian {
            center,
            sigma,
            cutoff,
        } => {
            push("init.profile", "truncated_maxwellian".into());
            push("init.center", vec3_text(center));
            push("init.sigma", sigma.to_string());
            push("init.cutoff", cutoff.to_string());
        }
        ProfileSpec::DoubleBump {
            separation,
            sigma,
            cutoff,
        } => {
            push("init.profile", "double_bump".into());
            push("init.separation", separation.to_string());
            push("init.sigma", sigma.to_string());
            push("init.cutoff", cutoff.to_string());
        }
    }
    out
}

fn parse_profile(kv: &mut Entries) -> Result<ProfileSpec> {
    let kind = kv
        .take("init.profile")
        .unwrap_or_else(|| "truncated_maxwellian".into());
    let mut sigma = 1.0;
    let mut cutoff = 4.0;
    let spec = match kind.as_str() {
        "uniform" => {
            let mut lower = Vec3::ZERO;
            let mut upper = Vec3::new(1.0, 1.0, 1.0);
            kv.set_with("init.lower", &mut lower, parse_vec3)?;
            kv.set_with("init.upper", &mut upper, parse_vec3)?;
            ProfileSpec::Uniform { lower, upper }
        }
        "truncated_maxwellian" => {
            let mut center = Vec3::ZERO;
            kv.set_with("init.center", &mut center, parse_vec3)?;
            kv.set("init.sigma", &mut sigma)?;
            kv.set("init.cutoff", &mut cutoff)?;
            ProfileSpec::TruncatedMaxwellian {
                center,
                sigma,
                cutoff,
            }
        }
        "double_bump" => {
            let mut separation = 2.0;
            kv.set("init.separation", &mut separation)?;
            kv.set("init.sigma", &mut sigma)?;
            kv.set("init.cutoff", &mut cutoff)?;
            ProfileSpec::DoubleBump {
                separation,
                sigma,
                cutoff,
            }
        }
        _ => {
            return Err(Error::config(format!(
                "init.profile must be uniform, truncated_maxwellian or double_bump, got '{kind}'"
            )))
        }
    };
    for key in [
        "init.lower",
        "init.upper",
        "init.center",
        "init.sigma",
        "init.cutoff",
        "init.separation",
    ] {
        if kv.take(key).is_some() {
            return Err(Error::config(format!(
                "{key} does not apply to init.profile = {kind}"
            )));
        }
    }
    Ok(spec)
}

fn parse_box(kv: &mut Entries, prefix: &str, default: CompactBox) -> Result<CompactBox> {
    let mut lower = default.lower;
    let mut upper = default.upper;
    kv.set_with(&format!("{prefix}.lower"), &mut lower, parse_vec3)?;
    kv.set_with(&format!("{prefix}.upper"), &mut upper, parse_vec3)?;
    CompactBox::new(lower, upper)
}

/// Key-value pairs still to be consumed.
struct Entries(BTreeMap<String, String>);

impl Entries {
    fn read(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::config(format!(
                    "line {}: expected 'key = value', got '{line}'",
                    no + 1
                ))
            })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(Error::config(format!("line {}: empty key", no + 1)));
            }
            if map.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::config(format!(
                    "line {}: key '{k}' repeated",
                    no + 1
                )));
            }
        }
        Ok(Self(map))
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.0.remove(key)
    }

    fn set<T: FromStr>(&mut self, key: &str, slot: &mut T) -> Result<()> {
        self.set_with(key, slot, parse_value)
    }

    fn set_with<T>(
        &mut self,
        key: &str,
        slot: &mut T,
        parse: fn(&str, &str) -> Result<T>,
    ) -> Result<()> {
        if let Some(v) = self.take(key) {
            *slot = parse(&v, key)?;
        }
        Ok(())
    }

    fn finish(self) -> Result<()> {
        match self.0.keys().next() {
            Some(k) => Err(Error::config(format!("unknown key '{k}'"))),
            None => Ok(()),
        }
    }
}

fn parse_value<T: FromStr>(v: &str, key: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::config(format!("{key}: cannot parse '{v}'")))
}

fn parse_list<T: FromStr>(v: &str, key: &str) -> Result<Vec<T>> {
    v.split(',').map(|s| parse_value(s.trim(), key)).collect()
}

fn parse_vec3(v: &str, key: &str) -> Result<Vec3> {
    let xs: Vec<f64> = parse_list(v, key)?;
    match xs[..] {
        [x, y, z] => Ok(Vec3::new(x, y, z)),
        _ => Err(Error::config(format!(
            "{key}: expected three components, got '{v}'"
        ))),
    }
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn vec3_text(v: Vec3) -> String {
    join(&[v.x, v.y, v.z])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn minimal_file_takes_defaults() {
        let c = ExperimentConfig::parse("experiment = relax\n").unwrap();
        assert_eq!(c, ExperimentConfig::new(Experiment::Relax));
        c.validate().unwrap();
    }

    #[test]
    fn experiment_from_the_caller() {
        let c = ExperimentConfig::parse_as(Experiment::Chaos, "sim.alpha = 0.1\n").unwrap();
        assert_eq!(c.experiment, Experiment::Chaos);
        let c = ExperimentConfig::parse_as(Experiment::Relax, "experiment = relax\n").unwrap();
        assert_eq!(c.experiment, Experiment::Relax);
        assert!(matches!(
            ExperimentConfig::parse_as(Experiment::Relax, "experiment = chaos\n"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn comments_and_spacing() {
        let text = "# run\nexperiment=converge   # sweep\n\n  sim.alpha =0.1\nn_sweep = 100, 400\n";
        let c = ExperimentConfig::parse(text).unwrap();
        assert_eq!(c.sim.alpha, 0.1);
        assert_eq!(c.n_sweep, vec![100, 400]);
    }

    #[test]
    fn bad_files_are_config_errors() {
        for text in [
            "sim.alpha = 0.2\n",
            "experiment = fly\n",
            "experiment = relax\nsim.alpha = x\n",
            "experiment = relax\nsim.alpah = 0.2\n",
            "experiment = relax\nseed = 1\nseed = 2\n",
            "experiment = relax\ninit.profile = uniform\ninit.sigma = 1\n",
            "experiment = relax\nbox.lower = 1,1\n",
            "experiment = relax\nkernel.form = born\n",
            "experiment = relax\njust words\n",
        ] {
            assert!(
                matches!(ExperimentConfig::parse(text), Err(Error::Config(_))),
                "{text}"
            );
        }
    }

    #[test]
    fn validation_catches_inconsistencies() {
        let mut c = ExperimentConfig::new(Experiment::Converge);
        c.n_sweep = vec![8000, 2000];
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = ExperimentConfig::new(Experiment::Chaos);
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.init.family = InitFamily::TwoScale;
        c.validate().unwrap();
        let mut c = ExperimentConfig::new(Experiment::Relax);
        c.sim.snapshot_times = vec![0.0, 2.0];
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = ExperimentConfig::new(Experiment::Converge);
        c.uu.grid_l = 3.0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = ExperimentConfig::new(Experiment::Relax);
        c.sim.alpha = 1.5;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn replica_growth() {
        let mut c = ExperimentConfig::new(Experiment::Converge);
        c.replicas = 10;
        assert_eq!(c.replicas_for(8000), 10);
        c.replica_growth = 1.0;
        assert_eq!(c.replicas_for(2000), 10);
        assert_eq!(c.replicas_for(8000), 40);
        c.replica_growth = 0.5;
        assert_eq!(c.replicas_for(32000), 40);
    }

    fn arb_profile() -> impl Strategy<Value = ProfileSpec> {
        prop_oneof![
            (0.1f64..2.0, 2.0f64..5.0).prop_map(|(sigma, cutoff)| {
                ProfileSpec::TruncatedMaxwellian {
                    center: Vec3::new(0.1, -0.2, 0.0),
                    sigma,
                    cutoff,
                }
            }),
            (0.1f64..2.0).prop_map(|s| ProfileSpec::Uniform {
                lower: Vec3::new(-s, -s, -s),
                upper: Vec3::new(s, 2.0 * s, s)
            }),
            (0.5f64..3.0).prop_map(|separation| ProfileSpec::DoubleBump {
                separation,
                sigma: 0.7,
                cutoff: 3.0
            }),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn text_round_trip(
            e in 0usize..5,
            seed in any::<u64>(),
            alpha in 0.01f64..0.99,
            times in proptest::collection::vec(0.0f64..1.0, 1..4),
            b0 in 0.0f64..10.0,
            profile in arb_profile(),
            burn in proptest::option::of(0usize..100_000),
            flags in any::<(bool, bool, bool)>(),
            sweep in proptest::collection::vec(1usize..100_000, 1..5),
        ) {
            let mut c = ExperimentConfig::new(Experiment::ALL[e]);
            c.seed = seed;
            c.sim.alpha = alpha;
            c.sim.snapshot_times = times;
            c.kernel.b0 = b0;
            c.init.profile = profile;
            c.init.burn_in = burn;
            c.uu.conservative = flags.0;
            c.output.marginals = flags.1;
            c.uu.refine_check = flags.2;
            c.n_sweep = sweep;
            c.out_dir = PathBuf::from("some/dir");
            let once = ExperimentConfig::parse(&c.to_text()).unwrap();
            prop_assert_eq!(&once, &c);
            let twice = ExperimentConfig::parse(&once.to_text()).unwrap();
            prop_assert_eq!(twice, once);
        }
    }
}
