//! Run configuration: a sectioned `key = value` file.
//!
//! ```text
//! # comments start with '#'
//! [geometry]
//! dim = 2
//! extent = 1, 1
//! h = 1/16
//! solids = box 0.25 0.25 0.75 0.75
//! [physics]
//! nu = 0.01
//! ```
//!
//! Every key has a default (see [`RunConfig::default`] and `fsi --help`).
//! Unknown sections or keys, duplicate keys and malformed values are errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{FsiError, Result};
use crate::mesh::{GeometrySpec, SolidShape, MAX_DIM};
use crate::presets::{BodyForce, InitialData};
use crate::stepper::SolverParams;

/// Which harness a configuration is meant for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    Run,
    SweepKappa,
    LemmaKey,
    CheckCompat,
    Mms,
    Verify,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::Run,
        ExperimentKind::SweepKappa,
        ExperimentKind::LemmaKey,
        ExperimentKind::CheckCompat,
        ExperimentKind::Mms,
        ExperimentKind::Verify,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Run => "run",
            ExperimentKind::SweepKappa => "sweep-kappa",
            ExperimentKind::LemmaKey => "lemma-key",
            ExperimentKind::CheckCompat => "check-compat",
            ExperimentKind::Mms => "mms",
            ExperimentKind::Verify => "verify",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = FsiError;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| FsiError::Param {
                field: "experiment.kind".into(),
                reason: format!("unknown experiment `{s}`"),
            })
    }
}

/// Settings of the experiment harnesses and their verdict thresholds.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSettings {
    pub kind: ExperimentKind,
    pub kappas: Vec<f64>,
    pub reference_kappa: f64,
    pub eps_values: Vec<f64>,
    pub lemma_eps: Vec<f64>,
    pub deltas: Vec<f64>,
    pub seed: u64,
    /// Lower bound on `min T* / max T*` in the kappa sweep.
    pub min_time_ratio: f64,
    /// Upper bound on successive constraint-maximum ratios in the penalty sweep.
    pub penalty_ratio: f64,
    /// Allowed relative spread of the perturbation ratios.
    pub perturbation_spread: f64,
    /// Dump `eta` and `v` every this many steps (0 disables).
    pub checkpoint_every: usize,
    /// Violations of the compatibility conditions above this mark the run incompatible.
    pub compat_tol: f64,
    /// Norm-proxy blow-up factor defining the existence-time proxy.
    pub z_ceiling: f64,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        ExperimentSettings {
            kind: ExperimentKind::Run,
            kappas: vec![1e-1, 1e-2, 1e-3, 1e-4],
            reference_kappa: 1e-4,
            eps_values: vec![1e-2, 1e-3, 1e-4],
            lemma_eps: vec![1.0, 1e-2, 1e-4, 1e-6],
            deltas: vec![1e-3, 1e-4, 1e-5],
            seed: 17,
            min_time_ratio: 0.5,
            penalty_ratio: 0.75,
            perturbation_spread: 0.1,
            checkpoint_every: 0,
            compat_tol: 1e-6,
            z_ceiling: 1e6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub geometry: GeometrySpec,
    pub params: SolverParams,
    pub initial: InitialData,
    pub forcing: BodyForce,
    pub experiment: ExperimentSettings,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    /// The standard test configuration: unit square, centred solid square of
    /// side 0.5, `h = 1/16`, translating initial data, no forcing.
    fn default() -> Self {
        RunConfig {
            geometry: GeometrySpec::centred_box(2, 0.5, 1.0 / 16.0),
            params: SolverParams {
                nu: 0.01,
                lambda: 1.0,
                mu: 1.0,
                ..SolverParams::default()
            },
            initial: InitialData::Translating { speed: 0.1 },
            forcing: BodyForce::Zero,
            experiment: ExperimentSettings::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

const SECTIONS: [&str; 7] = ["geometry", "physics", "numerics", "initial", "forcing", "experiment", "output"];

struct Entries {
    map: BTreeMap<String, (String, usize)>,
}

impl Entries {
    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        self.map.remove(key)
    }

    fn parsed<T>(&mut self, key: &str, default: T, f: impl Fn(&str) -> std::result::Result<T, String>) -> Result<T> {
        match self.take(key) {
            None => Ok(default),
            Some((v, _)) => f(&v).map_err(|reason| FsiError::Param {
                field: key.into(),
                reason,
            }),
        }
    }

    fn f64(&mut self, key: &str, default: f64) -> Result<f64> {
        self.parsed(key, default, parse_f64)
    }

    fn usize(&mut self, key: &str, default: usize) -> Result<usize> {
        self.parsed(key, default, |s| s.parse::<usize>().map_err(|e| format!("`{s}`: {e}")))
    }

    fn list(&mut self, key: &str, default: Vec<f64>) -> Result<Vec<f64>> {
        self.parsed(key, default, parse_list)
    }
}

fn parse_f64(s: &str) -> std::result::Result<f64, String> {
    let s = s.trim();
    let v = if let Some((a, b)) = s.split_once('/') {
        let a: f64 = a.trim().parse().map_err(|e| format!("`{s}`: {e}"))?;
        let b: f64 = b.trim().parse().map_err(|e| format!("`{s}`: {e}"))?;
        a / b
    } else {
        s.parse::<f64>().map_err(|e| format!("`{s}`: {e}"))?
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

fn parse_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(parse_f64).collect()
}

fn parse_bool(s: &str) -> std::result::Result<bool, String> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected `true` or `false`, found `{s}`")),
    }
}

fn parse_solids(s: &str, dim: usize) -> std::result::Result<Vec<SolidShape>, String> {
    if s.trim() == "none" {
        return Ok(Vec::new());
    }
    s.split(';')
        .map(|item| {
            let mut it = item.split_whitespace();
            let kind = it.next().ok_or("empty solid description")?;
            let nums: Vec<f64> = it.map(parse_f64).collect::<std::result::Result<_, _>>()?;
            match kind {
                "box" if nums.len() == 2 * dim => {
                    let mut lo = [0.0; MAX_DIM];
                    let mut hi = [0.0; MAX_DIM];
                    lo[..dim].copy_from_slice(&nums[..dim]);
                    hi[..dim].copy_from_slice(&nums[dim..]);
                    Ok(SolidShape::Box { lo, hi })
                }
                "ball" if nums.len() == dim + 1 => {
                    let mut centre = [0.0; MAX_DIM];
                    centre[..dim].copy_from_slice(&nums[..dim]);
                    Ok(SolidShape::Ball { centre, radius: nums[dim] })
                }
                "box" => Err(format!("box needs {} numbers, found {}", 2 * dim, nums.len())),
                "ball" => Err(format!("ball needs {} numbers, found {}", dim + 1, nums.len())),
                other => Err(format!("unknown solid kind `{other}`")),
            }
        })
        .collect()
}

fn split_entries(text: &str) -> Result<Entries> {
    let mut map: BTreeMap<String, (String, usize)> = BTreeMap::new();
    let mut section: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| FsiError::Syntax {
                line: line_no,
                reason: "unterminated section header".into(),
            })?;
            let name = name.trim();
            if !SECTIONS.contains(&name) {
                return Err(FsiError::Syntax {
                    line: line_no,
                    reason: format!("unknown section `{name}`"),
                });
            }
            section = Some(name.to_string());
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| FsiError::Syntax {
            line: line_no,
            reason: format!("expected `key = value`, found `{line}`"),
        })?;
        let key = key.trim();
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(FsiError::Syntax {
                line: line_no,
                reason: format!("malformed key `{key}`"),
            });
        }
        let sec = section.as_ref().ok_or_else(|| FsiError::Syntax {
            line: line_no,
            reason: format!("key `{key}` outside of any section"),
        })?;
        let full = format!("{sec}.{key}");
        if let Some((_, first)) = map.get(&full) {
            return Err(FsiError::DuplicateKey {
                key: full,
                first: *first,
                second: line_no,
            });
        }
        map.insert(full, (value.trim().to_string(), line_no));
    }
    Ok(Entries { map })
}

impl RunConfig {
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut e = split_entries(text)?;
        let def = RunConfig::default();

        let dim = e.usize("geometry.dim", def.geometry.dim)?;
        if !(2..=3).contains(&dim) {
            return Err(FsiError::Param {
                field: "geometry.dim".into(),
                reason: format!("must be 2 or 3, got {dim}"),
            });
        }
        let ext = e.list("geometry.extent", vec![1.0; dim])?;
        if ext.len() != dim {
            return Err(FsiError::Param {
                field: "geometry.extent".into(),
                reason: format!("expected {dim} values, found {}", ext.len()),
            });
        }
        let mut extent = [1.0; MAX_DIM];
        extent[..dim].copy_from_slice(&ext);
        let h = e.f64("geometry.h", def.geometry.h)?;
        let default_solids = GeometrySpec::centred_box(dim, 0.5, h).solids;
        let solids = e.parsed("geometry.solids", default_solids, |s| parse_solids(s, dim))?;
        let geometry = GeometrySpec { dim, extent, solids, h };

        let p = &def.params;
        let params = SolverParams {
            nu: e.f64("physics.nu", p.nu)?,
            lambda: e.f64("physics.lambda", p.lambda)?,
            mu: e.f64("physics.mu", p.mu)?,
            kappa: e.f64("numerics.kappa", p.kappa)?,
            eps_pen: e.f64("numerics.eps_pen", p.eps_pen)?,
            dt: e.f64("numerics.dt", p.dt)?,
            t_end: e.f64("numerics.t_end", p.t_end)?,
            newton_tol: e.f64("numerics.newton_tol", p.newton_tol)?,
            newton_maxit: e.usize("numerics.newton_maxit", p.newton_maxit)?,
            cg_tol: e.f64("numerics.cg_tol", p.cg_tol)?,
            include_g: e.parsed("numerics.include_g", p.include_g, parse_bool)?,
            frozen: e.parsed("numerics.frozen", p.frozen, parse_bool)?,
        };

        let x = &def.experiment;
        let experiment = ExperimentSettings {
            kind: e.parsed("experiment.kind", x.kind, |s| ExperimentKind::from_str(s).map_err(|err| err.to_string()))?,
            kappas: e.list("experiment.kappas", x.kappas.clone())?,
            reference_kappa: e.f64("experiment.reference_kappa", x.reference_kappa)?,
            eps_values: e.list("experiment.eps_values", x.eps_values.clone())?,
            lemma_eps: e.list("experiment.lemma_eps", x.lemma_eps.clone())?,
            deltas: e.list("experiment.deltas", x.deltas.clone())?,
            seed: e.parsed("experiment.seed", x.seed, |s| s.parse::<u64>().map_err(|err| format!("`{s}`: {err}")))?,
            min_time_ratio: e.f64("experiment.min_time_ratio", x.min_time_ratio)?,
            penalty_ratio: e.f64("experiment.penalty_ratio", x.penalty_ratio)?,
            perturbation_spread: e.f64("experiment.perturbation_spread", x.perturbation_spread)?,
            checkpoint_every: e.usize("experiment.checkpoint_every", x.checkpoint_every)?,
            compat_tol: e.f64("numerics.compat_tol", x.compat_tol)?,
            z_ceiling: e.f64("numerics.z_ceiling", x.z_ceiling)?,
        };

        let preset = e.take("initial.preset").map(|v| v.0).unwrap_or_else(|| "translating".into());
        let initial = match preset.as_str() {
            "zero" => InitialData::Zero,
            "translating" => InitialData::Translating {
                speed: e.f64("initial.amplitude", 0.1)?,
            },
            "vortices" => InitialData::Vortices {
                amplitude: e.f64("initial.amplitude", 0.1)?,
            },
            "file" => InitialData::File(PathBuf::from(e.take("initial.path").map(|v| v.0).ok_or_else(|| {
                FsiError::Param {
                    field: "initial.path".into(),
                    reason: "required for the `file` preset".into(),
                }
            })?)),
            other => {
                return Err(FsiError::Param {
                    field: "initial.preset".into(),
                    reason: format!("unknown preset `{other}`"),
                })
            }
        };

        let fname = e.take("forcing.preset").map(|v| v.0).unwrap_or_else(|| "zero".into());
        let forcing = match BodyForce::from_str(&fname)? {
            BodyForce::Zero => BodyForce::Zero,
            BodyForce::Uniform { .. } => {
                let vals = e.list("forcing.value", vec![0.0; dim])?;
                if vals.len() != dim {
                    return Err(FsiError::Param {
                        field: "forcing.value".into(),
                        reason: format!("expected {dim} values, found {}", vals.len()),
                    });
                }
                let mut value = [0.0; MAX_DIM];
                value[..dim].copy_from_slice(&vals);
                BodyForce::Uniform {
                    value,
                    power: e.parsed("forcing.power", 0, |s| s.parse::<u32>().map_err(|err| format!("`{s}`: {err}")))?,
                }
            }
            BodyForce::HarmonicGradient { .. } => BodyForce::HarmonicGradient {
                amp: e.f64("forcing.amplitude", 1.0)?,
                power: e.parsed("forcing.power", 0, |s| s.parse::<u32>().map_err(|err| format!("`{s}`: {err}")))?,
            },
            BodyForce::Oscillating { .. } => BodyForce::Oscillating {
                amp: e.f64("forcing.amplitude", 1.0)?,
                omega: e.f64("forcing.omega", 1.0)?,
            },
        };

        let output_dir = PathBuf::from(e.take("output.dir").map(|v| v.0).unwrap_or_else(|| "out".into()));

        if let Some((key, (_, line))) = e.map.into_iter().min_by_key(|(_, (_, l))| *l) {
            return Err(FsiError::Syntax {
                line,
                reason: format!("unknown key `{key}`"),
            });
        }
        let cfg = RunConfig {
            geometry,
            params,
            initial,
            forcing,
            experiment,
            output_dir,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.params.validate()?;
        let x = &self.experiment;
        let pos = |field: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(FsiError::Param {
                    field: field.into(),
                    reason: format!("must be positive, got {v}"),
                })
            }
        };
        for k in &x.kappas {
            if !(k.is_finite() && *k >= 0.0) {
                return Err(FsiError::Param {
                    field: "experiment.kappas".into(),
                    reason: format!("kappa values must be non-negative, got {k}"),
                });
            }
        }
        if !(x.reference_kappa.is_finite() && x.reference_kappa >= 0.0) {
            return Err(FsiError::Param {
                field: "experiment.reference_kappa".into(),
                reason: "must be non-negative".into(),
            });
        }
        for e in x.eps_values.iter().chain(&x.lemma_eps) {
            pos("experiment.eps_values", *e)?;
        }
        for d in &x.deltas {
            if !(d.is_finite() && *d >= 0.0) {
                return Err(FsiError::Param {
                    field: "experiment.deltas".into(),
                    reason: format!("must be non-negative, got {d}"),
                });
            }
        }
        pos("experiment.min_time_ratio", x.min_time_ratio)?;
        pos("experiment.penalty_ratio", x.penalty_ratio)?;
        pos("experiment.perturbation_spread", x.perturbation_spread)?;
        pos("numerics.compat_tol", x.compat_tol)?;
        pos("numerics.z_ceiling", x.z_ceiling)?;
        match &self.initial {
            InitialData::Translating { speed: a } | InitialData::Vortices { amplitude: a } if !a.is_finite() => {
                return Err(FsiError::Param {
                    field: "initial.amplitude".into(),
                    reason: "must be finite".into(),
                })
            }
            _ => {}
        }
        Ok(())
    }

    /// Canonical text form; [`RunConfig::parse_str`] inverts it exactly.
    pub fn emit(&self) -> String {
        let g = &self.geometry;
        let d = g.dim;
        let join = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(", ");
        let mut s = String::new();
        let _ = writeln!(s, "[geometry]");
        let _ = writeln!(s, "dim = {d}");
        let _ = writeln!(s, "extent = {}", join(&g.extent[..d]));
        let _ = writeln!(s, "h = {}", g.h);
        let solids: Vec<String> = g
            .solids
            .iter()
            .map(|sh| match sh {
                SolidShape::Box { lo, hi } => {
                    let nums: Vec<String> = lo[..d].iter().chain(&hi[..d]).map(|x| format!("{x}")).collect();
                    format!("box {}", nums.join(" "))
                }
                SolidShape::Ball { centre, radius } => {
                    let nums: Vec<String> = centre[..d].iter().map(|x| format!("{x}")).collect();
                    format!("ball {} {radius}", nums.join(" "))
                }
            })
            .collect();
        let _ = writeln!(s, "solids = {}", if solids.is_empty() { "none".to_string() } else { solids.join("; ") });
        let p = &self.params;
        let _ = writeln!(s, "\n[physics]\nnu = {}\nlambda = {}\nmu = {}", p.nu, p.lambda, p.mu);
        let x = &self.experiment;
        let _ = writeln!(
            s,
            "\n[numerics]\nkappa = {}\neps_pen = {}\ndt = {}\nt_end = {}\nnewton_tol = {}\nnewton_maxit = {}\ncg_tol = {}\ninclude_g = {}\nfrozen = {}\ncompat_tol = {}\nz_ceiling = {}",
            p.kappa, p.eps_pen, p.dt, p.t_end, p.newton_tol, p.newton_maxit, p.cg_tol, p.include_g, p.frozen, x.compat_tol, x.z_ceiling
        );
        let _ = writeln!(s, "\n[initial]");
        match &self.initial {
            InitialData::Zero => {
                let _ = writeln!(s, "preset = zero");
            }
            InitialData::Translating { speed } => {
                let _ = writeln!(s, "preset = translating\namplitude = {speed}");
            }
            InitialData::Vortices { amplitude } => {
                let _ = writeln!(s, "preset = vortices\namplitude = {amplitude}");
            }
            InitialData::File(path) => {
                let _ = writeln!(s, "preset = file\npath = {}", path.display());
            }
        }
        let _ = writeln!(s, "\n[forcing]\npreset = {}", self.forcing.name());
        match &self.forcing {
            BodyForce::Zero => {}
            BodyForce::Uniform { value, power } => {
                let _ = writeln!(s, "value = {}\npower = {power}", join(&value[..d]));
            }
            BodyForce::HarmonicGradient { amp, power } => {
                let _ = writeln!(s, "amplitude = {amp}\npower = {power}");
            }
            BodyForce::Oscillating { amp, omega } => {
                let _ = writeln!(s, "amplitude = {amp}\nomega = {omega}");
            }
        }
        let _ = writeln!(
            s,
            "\n[experiment]\nkind = {}\nkappas = {}\nreference_kappa = {}\neps_values = {}\nlemma_eps = {}\ndeltas = {}\nseed = {}\nmin_time_ratio = {}\npenalty_ratio = {}\nperturbation_spread = {}\ncheckpoint_every = {}",
            x.kind.name(),
            join(&x.kappas),
            x.reference_kappa,
            join(&x.eps_values),
            join(&x.lemma_eps),
            join(&x.deltas),
            x.seed,
            x.min_time_ratio,
            x.penalty_ratio,
            x.perturbation_spread,
            x.checkpoint_every
        );
        let _ = writeln!(s, "\n[output]\ndir = {}", self.output_dir.display());
        s
    }

    /// Copy with a different artificial viscosity.
    pub fn with_kappa(&self, kappa: f64) -> Self {
        let mut c = self.clone();
        c.params.kappa = kappa;
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::parse_str(&c.emit()).unwrap(), c);
    }

    #[test]
    fn minimal_file_takes_defaults() {
        let c = RunConfig::parse_str("[geometry]\nh = 1/8\n[physics]\nnu = 0.5\n").unwrap();
        assert_eq!(c.geometry.h, 0.125);
        assert_eq!(c.params.nu, 0.5);
        assert_eq!(c.params.dt, RunConfig::default().params.dt);
        assert_eq!(c.geometry.solids, GeometrySpec::centred_box(2, 0.5, 0.125).solids);
    }

    #[test]
    fn negative_step_names_the_field() {
        let err = RunConfig::parse_str("[numerics]\ndt = -0.1\n").unwrap_err();
        assert!(err.to_string().contains("dt"), "{err}");
    }

    #[test]
    fn duplicate_key_reports_both_lines() {
        let err = RunConfig::parse_str("[physics]\nnu = 1\n# note\nnu = 2\n").unwrap_err();
        match err {
            FsiError::DuplicateKey { key, first, second } => {
                assert_eq!(key, "physics.nu");
                assert_eq!((first, second), (2, 4));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn unknown_key_and_section_are_rejected() {
        assert!(matches!(
            RunConfig::parse_str("[physics]\nrho = 1\n"),
            Err(FsiError::Syntax { line: 2, .. })
        ));
        assert!(matches!(RunConfig::parse_str("[solver]\n"), Err(FsiError::Syntax { line: 1, .. })));
        assert!(matches!(RunConfig::parse_str("nu = 1\n"), Err(FsiError::Syntax { line: 1, .. })));
    }
}
