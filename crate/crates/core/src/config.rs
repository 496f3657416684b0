//! Run configuration: a small TOML grammar with flat sections.
//!
//! ```toml
//! [grid]
//! dim = 1                 # 1 or 2
//! n = [199]               # interior points per axis (one entry broadcasts)
//! extent = [1.0]          # box side lengths
//!
//! [model]
//! lambda = 1e-3           # Yosida parameter, in (0, 1)
//!
//! [time]
//! dt = 1e-4
//! t_end = 0.5             # integer multiple of dt
//! record_stride = 50      # steps between records
//! scheme = "direct"       # direct | transformed | both
//!
//! [noise]
//! mu = [1.0]              # coefficients μ_k
//! modes = [[1]]           # one multi-index per coefficient
//! shape = "eigen"         # eigen | global
//!
//! [initial]
//! x0 = { profile = "bump", height = 1.0, center = [0.5], half_width = [0.25] }
//! xc = { profile = "constant", value = 0.0 }
//!
//! [observables]
//! delta_crit = 1e-6       # critical threshold, relative to ‖x − Xc‖_∞
//! extinction_delta = 1e-3
//! compacts = [[0.25, 0.15]]   # (K inset, K' inset) fractions
//! fit_window = [0.0, 0.5]     # optional, defaults to the whole run
//!
//! [run]
//! seed = 0               # below 2^63 (TOML integers are signed 64-bit)
//! paths = 1
//! out_dir = "out"
//! ```
//!
//! Profiles: `scaled_e1 {amplitude}`, `bump {height, center, half_width}`
//! (indicator of a box), `constant {value}`, `custom {values}` (one value per
//! interior point, axis 0 fastest). Every key is optional.

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};
use toml::{Spanned, Value};

use crate::error::{ConfigIssue, Error, Result};
use crate::grid::{eigenmode, Grid};
use crate::noise::{NoiseModel, NoiseShape};
use crate::nonlinearity::Regularization;
use crate::observables::CompactSpec;
use crate::solver::shift_to_origin;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeChoice {
    Direct,
    Transformed,
    Both,
}

impl SchemeChoice {
    pub fn as_str(&self) -> &'static str {
        match self {
            SchemeChoice::Direct => "direct",
            SchemeChoice::Transformed => "transformed",
            SchemeChoice::Both => "both",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    ScaledE1 { amplitude: f64 },
    Bump { height: f64, center: Vec<f64>, half_width: Vec<f64> },
    Constant { value: f64 },
    Custom { values: Vec<f64> },
}

impl Profile {
    pub fn sample(&self, grid: &Grid) -> Result<Vec<f64>> {
        match self {
            Profile::ScaledE1 { amplitude } => {
                let e1 = eigenmode(grid, &vec![1; grid.dim()])?;
                Ok(e1.values.iter().map(|v| amplitude * v).collect())
            }
            Profile::Bump { height, center, half_width } => {
                let dim = grid.dim();
                let pick = |v: &[f64], a: usize| v[a.min(v.len() - 1)];
                Ok(grid.sample(|x| {
                    let inside = (0..dim).all(|a| (x[a] - pick(center, a)).abs() <= pick(half_width, a) + 1e-12);
                    if inside {
                        *height
                    } else {
                        0.0
                    }
                }))
            }
            Profile::Constant { value } => Ok(vec![*value; grid.len()]),
            Profile::Custom { values } => {
                grid.check_len(values)?;
                Ok(values.clone())
            }
        }
    }

    fn to_toml(&self) -> String {
        let list = |v: &[f64]| format!("[{}]", v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(", "));
        match self {
            Profile::ScaledE1 { amplitude } => {
                format!("{{ profile = \"scaled_e1\", amplitude = {} }}", fmt_f64(*amplitude))
            }
            Profile::Bump { height, center, half_width } => format!(
                "{{ profile = \"bump\", height = {}, center = {}, half_width = {} }}",
                fmt_f64(*height),
                list(center),
                list(half_width)
            ),
            Profile::Constant { value } => format!("{{ profile = \"constant\", value = {} }}", fmt_f64(*value)),
            Profile::Custom { values } => format!("{{ profile = \"custom\", values = {} }}", list(values)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub mu: Vec<f64>,
    pub modes: Vec<Vec<usize>>,
    pub shape: NoiseShape,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dim: usize,
    pub n: Vec<usize>,
    pub extent: Vec<f64>,
    pub lambda: f64,
    pub dt: f64,
    pub t_end: f64,
    pub record_stride: usize,
    pub scheme: SchemeChoice,
    pub noise: NoiseSpec,
    pub x0: Profile,
    pub xc: Profile,
    /// Relative to `‖x − Xc‖_∞`.
    pub delta_crit: f64,
    pub extinction_delta: f64,
    /// `(K inset, K′ inset)` pairs.
    pub compacts: Vec<(f64, f64)>,
    pub fit_window: Option<(f64, f64)>,
    pub seed: u64,
    pub paths: usize,
    pub out_dir: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::default_for_dim(1)
    }
}

fn fmt_f64(v: f64) -> String {
    // Debug prints the shortest round-tripping form and always marks floats.
    let s = format!("{v:?}");
    if s.contains('.') || s.contains('e') || s.contains("inf") || s.contains("NaN") {
        s
    } else {
        format!("{s}.0")
    }
}

impl RunConfig {
    /// Defaults: λ = 1e-3, dt = 1e-4, n = 199 (1-D) or 99² (2-D), one noise mode
    /// with μ₁ = 1 on the first eigenfunction and a unit box bump initial datum.
    pub fn default_for_dim(dim: usize) -> Self {
        let d = dim.clamp(1, 2);
        RunConfig {
            dim,
            n: vec![if d == 1 { 199 } else { 99 }],
            extent: vec![1.0],
            lambda: 1e-3,
            dt: 1e-4,
            t_end: 0.5,
            record_stride: 50,
            scheme: SchemeChoice::Direct,
            noise: NoiseSpec {
                mu: vec![1.0],
                modes: vec![vec![1; d]],
                shape: NoiseShape::Eigen,
            },
            x0: Profile::Bump {
                height: 1.0,
                center: vec![0.5],
                half_width: vec![0.25],
            },
            xc: Profile::Constant { value: 0.0 },
            delta_crit: 1e-6,
            extinction_delta: 1e-3,
            compacts: vec![(0.25, 0.15)],
            fit_window: None,
            seed: 0,
            paths: 1,
            out_dir: "out".into(),
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.dim, &self.extent, &self.n)
    }

    pub fn regularization(&self) -> Result<Regularization> {
        Regularization::new(self.lambda)
    }

    pub fn noise_model(&self, grid: &Grid) -> Result<NoiseModel> {
        NoiseModel::new(grid, &self.noise.mu, &self.noise.modes, self.noise.shape)
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    /// Shifted initial datum `x − Xc` on `grid`.
    pub fn initial_datum(&self, grid: &Grid) -> Result<Vec<f64>> {
        let raw = self.x0.sample(grid)?;
        let xc = self.xc.sample(grid)?;
        shift_to_origin(&raw, &xc)
    }

    pub fn compact_specs(&self, grid: &Grid, noise: &NoiseModel) -> Result<Vec<CompactSpec>> {
        self.compacts
            .iter()
            .map(|&(k, kp)| CompactSpec::from_insets(grid, noise, k, kp))
            .collect()
    }

    pub fn fit_window(&self) -> (f64, f64) {
        self.fit_window.unwrap_or((0.0, self.t_end))
    }

    /// Canonical TOML form; `parse_config(c.to_toml()) == c`.
    pub fn to_toml(&self) -> String {
        let fl = |v: &[f64]| format!("[{}]", v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(", "));
        let ints = |v: &[usize]| format!("[{}]", v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", "));
        let mut s = String::new();
        s += "[grid]\n";
        s += &format!("dim = {}\nn = {}\nextent = {}\n\n", self.dim, ints(&self.n), fl(&self.extent));
        s += &format!("[model]\nlambda = {}\n\n", fmt_f64(self.lambda));
        s += &format!(
            "[time]\ndt = {}\nt_end = {}\nrecord_stride = {}\nscheme = \"{}\"\n\n",
            fmt_f64(self.dt),
            fmt_f64(self.t_end),
            self.record_stride,
            self.scheme.as_str()
        );
        let modes: Vec<String> = self.noise.modes.iter().map(|m| ints(m)).collect();
        s += &format!(
            "[noise]\nmu = {}\nmodes = [{}]\nshape = \"{}\"\n\n",
            fl(&self.noise.mu),
            modes.join(", "),
            match self.noise.shape {
                NoiseShape::Eigen => "eigen",
                NoiseShape::Global => "global",
            }
        );
        s += &format!("[initial]\nx0 = {}\nxc = {}\n\n", self.x0.to_toml(), self.xc.to_toml());
        let compacts: Vec<String> = self.compacts.iter().map(|&(a, b)| fl(&[a, b])).collect();
        s += &format!(
            "[observables]\ndelta_crit = {}\nextinction_delta = {}\ncompacts = [{}]\n",
            fmt_f64(self.delta_crit),
            fmt_f64(self.extinction_delta),
            compacts.join(", ")
        );
        if let Some((a, b)) = self.fit_window {
            s += &format!("fit_window = {}\n", fl(&[a, b]));
        }
        s += &format!(
            "\n[run]\nseed = {}\npaths = {}\nout_dir = {}\n",
            self.seed,
            self.paths,
            Value::String(self.out_dir.clone())
        );
        s
    }

    /// SHA-256 of the canonical TOML form, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Semantic checks. Each issue carries the `section.key` it concerns.
    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut out: Vec<(&'static str, String)> = Vec::new();
        let mut grid_ok = true;
        if !(1..=2).contains(&self.dim) {
            out.push(("grid.dim", format!("unsupported dimension {} (expected 1 or 2)", self.dim)));
            grid_ok = false;
        }
        if self.n.is_empty() || (self.n.len() != 1 && self.n.len() != self.dim) || self.n.iter().any(|&m| m < 3) {
            out.push(("grid.n", format!("n must have 1 or dim entries, each >= 3 (got {:?})", self.n)));
            grid_ok = false;
        }
        if self.extent.is_empty()
            || (self.extent.len() != 1 && self.extent.len() != self.dim)
            || self.extent.iter().any(|&e| !(e > 0.0 && e.is_finite()))
        {
            out.push(("grid.extent", format!("extent must have 1 or dim positive entries (got {:?})", self.extent)));
            grid_ok = false;
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            out.push(("model.lambda", format!("lambda out of (0,1): {}", self.lambda)));
        }
        let mut time_ok = true;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            out.push(("time.dt", format!("dt must be positive (got {})", self.dt)));
            time_ok = false;
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            out.push(("time.t_end", format!("t_end must be >= 0 (got {})", self.t_end)));
            time_ok = false;
        }
        if time_ok {
            let steps = self.t_end / self.dt;
            if (steps - steps.round()).abs() > 1e-6 * steps.max(1.0) {
                out.push(("time.t_end", format!("t_end = {} is not a multiple of dt = {}", self.t_end, self.dt)));
            }
        }
        if self.record_stride == 0 {
            out.push(("time.record_stride", "record_stride must be >= 1".into()));
        }
        if self.noise.mu.len() != self.noise.modes.len() {
            out.push((
                "noise.modes",
                format!("{} coefficients but {} modes", self.noise.mu.len(), self.noise.modes.len()),
            ));
        }
        if self.noise.mu.iter().any(|m| !m.is_finite()) {
            out.push(("noise.mu", "noise coefficients must be finite".into()));
        }
        for m in &self.noise.modes {
            if m.len() != self.dim || m.iter().any(|&k| k == 0) {
                out.push(("noise.modes", format!("mode index {m:?} must have {} entries >= 1", self.dim)));
            } else if self.noise.shape == NoiseShape::Eigen && grid_ok {
                if let Some(a) = (0..self.dim).find(|&a| m[a] > self.n[a.min(self.n.len() - 1)]) {
                    out.push(("noise.modes", format!("mode index {m:?} exceeds the grid resolution on axis {a}")));
                }
            }
        }
        if !(self.delta_crit > 0.0) {
            out.push(("observables.delta_crit", format!("delta_crit must be positive (got {})", self.delta_crit)));
        }
        if !(self.extinction_delta > 0.0 && self.extinction_delta < 1.0) {
            out.push((
                "observables.extinction_delta",
                format!("extinction_delta must lie in (0,1) (got {})", self.extinction_delta),
            ));
        }
        for &(k, kp) in &self.compacts {
            if !(0.0..0.5).contains(&k) || !(0.0..0.5).contains(&kp) || k < kp {
                out.push((
                    "observables.compacts",
                    format!("compact insets ({k}, {kp}) must satisfy 0.5 > K inset >= K' inset >= 0"),
                ));
            }
        }
        if let Some((a, b)) = self.fit_window {
            if !(a < b) {
                out.push(("observables.fit_window", format!("fit_window must be increasing (got [{a}, {b}])")));
            }
        }
        if self.paths == 0 {
            out.push(("run.paths", "paths must be >= 1".into()));
        }
        if i64::try_from(self.seed).is_err() {
            out.push(("run.seed", format!("seed {} does not fit a TOML integer (max 2^63 - 1)", self.seed)));
        }
        if grid_ok {
            match self.grid() {
                Ok(grid) => self.check_profiles(&grid, &mut out),
                Err(e) => out.push(("grid.n", e.to_string())),
            }
        }
        out
    }

    fn check_profiles(&self, grid: &Grid, out: &mut Vec<(&'static str, String)>) {
        let raw = match self.x0.sample(grid) {
            Ok(v) => v,
            Err(e) => return out.push(("initial.x0", e.to_string())),
        };
        let xc = match self.xc.sample(grid) {
            Ok(v) => v,
            Err(e) => return out.push(("initial.xc", e.to_string())),
        };
        if raw.iter().chain(&xc).any(|v| !v.is_finite()) {
            return out.push(("initial.x0", "profiles must be finite".into()));
        }
        if let Err(Error::BelowCritical { index, value, critical }) = shift_to_origin(&raw, &xc) {
            let mi = grid.multi_index(index);
            let at = if grid.dim() == 1 { format!("{}", mi[0]) } else { format!("({}, {})", mi[0], mi[1]) };
            out.push((
                "initial.x0",
                format!("x0 below Xc at grid point {at} (x0 = {value}, Xc = {critical})"),
            ));
        }
    }

    /// Runs [`RunConfig::violations`] and packs them into a config error.
    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(
                v.into_iter()
                    .map(|(key, message)| ConfigIssue {
                        line: None,
                        message: format!("{key}: {message}"),
                    })
                    .collect(),
            ))
        }
    }
}

type Section = BTreeMap<String, Spanned<Value>>;

struct Parser<'a> {
    text: &'a str,
    issues: Vec<ConfigIssue>,
    lines: BTreeMap<String, usize>,
}

impl Parser<'_> {
    fn line_of(&self, offset: usize) -> usize {
        self.text[..offset.min(self.text.len())].matches('\n').count() + 1
    }

    fn issue(&mut self, line: Option<usize>, message: String) {
        self.issues.push(ConfigIssue { line, message });
    }

    fn take<T>(
        &mut self,
        section: &mut Section,
        sec: &str,
        key: &str,
        convert: impl FnOnce(&Value) -> std::result::Result<T, String>,
    ) -> Option<T> {
        let v = section.remove(key)?;
        let line = self.line_of(v.span().start);
        self.lines.insert(format!("{sec}.{key}"), line);
        match convert(v.get_ref()) {
            Ok(t) => Some(t),
            Err(msg) => {
                self.issue(Some(line), format!("{sec}.{key}: {msg}"));
                None
            }
        }
    }
}

fn as_f64(v: &Value) -> std::result::Result<f64, String> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        other => Err(format!("expected a number, found {}", other.type_str())),
    }
}

fn as_usize(v: &Value) -> std::result::Result<usize, String> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        Value::Integer(i) => Err(format!("expected a non-negative integer, found {i}")),
        other => Err(format!("expected an integer, found {}", other.type_str())),
    }
}

fn as_str(v: &Value) -> std::result::Result<&str, String> {
    v.as_str().ok_or_else(|| format!("expected a string, found {}", v.type_str()))
}

fn list_of<T>(v: &Value, f: impl Fn(&Value) -> std::result::Result<T, String>) -> std::result::Result<Vec<T>, String> {
    match v {
        Value::Array(a) => a.iter().map(f).collect(),
        // scalars broadcast as one-element lists
        other => f(other).map(|x| vec![x]),
    }
}

fn pair(v: &Value) -> std::result::Result<(f64, f64), String> {
    let l = list_of(v, as_f64)?;
    if l.len() == 2 {
        Ok((l[0], l[1]))
    } else {
        Err(format!("expected a pair of numbers, found {} entries", l.len()))
    }
}

fn profile(v: &Value) -> std::result::Result<Profile, String> {
    let t = v.as_table().ok_or_else(|| format!("expected a profile table, found {}", v.type_str()))?;
    let kind = t
        .get("profile")
        .ok_or("profile table needs a `profile` key")?
        .as_str()
        .ok_or("`profile` must be a string")?;
    let allowed: &[&str] = match kind {
        "scaled_e1" => &["profile", "amplitude"],
        "bump" => &["profile", "height", "center", "half_width"],
        "constant" => &["profile", "value"],
        "custom" => &["profile", "values"],
        other => return Err(format!("unknown profile {other:?} (scaled_e1, bump, constant, custom)")),
    };
    if let Some(k) = t.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(format!("unknown key {k:?} in {kind} profile"));
    }
    let num = |key: &str, default: f64| t.get(key).map_or(Ok(default), as_f64);
    let nums = |key: &str, default: f64| t.get(key).map_or(Ok(vec![default]), |v| list_of(v, as_f64));
    Ok(match kind {
        "scaled_e1" => Profile::ScaledE1 { amplitude: num("amplitude", 1.0)? },
        "bump" => Profile::Bump {
            height: num("height", 1.0)?,
            center: nums("center", 0.5)?,
            half_width: nums("half_width", 0.25)?,
        },
        "constant" => Profile::Constant { value: num("value", 0.0)? },
        _ => Profile::Custom {
            values: t.get("values").map_or(Ok(Vec::new()), |v| list_of(v, as_f64))?,
        },
    })
}

/// Parses and validates a configuration, reporting every problem found.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut sections: BTreeMap<String, Spanned<BTreeMap<String, Spanned<Value>>>> = match toml::from_str(text) {
        Ok(s) => s,
        Err(e) => {
            let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            return Err(Error::Config(vec![ConfigIssue {
                line,
                message: e.message().trim().to_string(),
            }]));
        }
    };
    let mut p = Parser {
        text,
        issues: Vec::new(),
        lines: BTreeMap::new(),
    };
    let mut section = |name: &str| -> Section {
        sections.remove(name).map(|s| s.into_inner()).unwrap_or_default()
    };

    let mut grid = section("grid");
    let dim = p.take(&mut grid, "grid", "dim", as_usize).unwrap_or(1);
    let mut cfg = RunConfig::default_for_dim(dim);
    if let Some(n) = p.take(&mut grid, "grid", "n", |v| list_of(v, as_usize)) {
        cfg.n = n;
    }
    if let Some(e) = p.take(&mut grid, "grid", "extent", |v| list_of(v, as_f64)) {
        cfg.extent = e;
    }

    let mut model = section("model");
    if let Some(l) = p.take(&mut model, "model", "lambda", as_f64) {
        cfg.lambda = l;
    }

    let mut time = section("time");
    if let Some(v) = p.take(&mut time, "time", "dt", as_f64) {
        cfg.dt = v;
    }
    if let Some(v) = p.take(&mut time, "time", "t_end", as_f64) {
        cfg.t_end = v;
    }
    if let Some(v) = p.take(&mut time, "time", "record_stride", as_usize) {
        cfg.record_stride = v;
    }
    if let Some(v) = p.take(&mut time, "time", "scheme", |v| match as_str(v)? {
        "direct" => Ok(SchemeChoice::Direct),
        "transformed" => Ok(SchemeChoice::Transformed),
        "both" => Ok(SchemeChoice::Both),
        other => Err(format!("unknown scheme {other:?} (direct, transformed, both)")),
    }) {
        cfg.scheme = v;
    }

    let mut noise = section("noise");
    if let Some(v) = p.take(&mut noise, "noise", "mu", |v| list_of(v, as_f64)) {
        cfg.noise.mu = v;
    }
    if let Some(v) = p.take(&mut noise, "noise", "modes", |v| list_of(v, |m| list_of(m, as_usize))) {
        cfg.noise.modes = v;
    }
    if let Some(v) = p.take(&mut noise, "noise", "shape", |v| match as_str(v)? {
        "eigen" => Ok(NoiseShape::Eigen),
        "global" => Ok(NoiseShape::Global),
        other => Err(format!("unknown noise shape {other:?} (eigen, global)")),
    }) {
        cfg.noise.shape = v;
    }

    let mut initial = section("initial");
    if let Some(v) = p.take(&mut initial, "initial", "x0", profile) {
        cfg.x0 = v;
    }
    if let Some(v) = p.take(&mut initial, "initial", "xc", profile) {
        cfg.xc = v;
    }

    let mut obs = section("observables");
    if let Some(v) = p.take(&mut obs, "observables", "delta_crit", as_f64) {
        cfg.delta_crit = v;
    }
    if let Some(v) = p.take(&mut obs, "observables", "extinction_delta", as_f64) {
        cfg.extinction_delta = v;
    }
    if let Some(v) = p.take(&mut obs, "observables", "compacts", |v| match v {
        Value::Array(a) => a.iter().map(pair).collect(),
        other => Err(format!("expected a list of pairs, found {}", other.type_str())),
    }) {
        cfg.compacts = v;
    }
    if let Some(v) = p.take(&mut obs, "observables", "fit_window", pair) {
        cfg.fit_window = Some(v);
    }

    let mut run = section("run");
    if let Some(v) = p.take(&mut run, "run", "seed", |v| match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        other => Err(format!("expected a non-negative integer seed, found {other}")),
    }) {
        cfg.seed = v;
    }
    if let Some(v) = p.take(&mut run, "run", "paths", as_usize) {
        cfg.paths = v;
    }
    if let Some(v) = p.take(&mut run, "run", "out_dir", |v| as_str(v).map(str::to_string)) {
        cfg.out_dir = v;
    }

    let leftovers: Vec<(String, Section)> = vec![
        ("grid".into(), grid),
        ("model".into(), model),
        ("time".into(), time),
        ("noise".into(), noise),
        ("initial".into(), initial),
        ("observables".into(), obs),
        ("run".into(), run),
    ];
    for (sec, rest) in leftovers {
        for (key, v) in rest {
            let line = p.line_of(v.span().start);
            p.issue(Some(line), format!("unknown key {sec}.{key}"));
        }
    }
    for (name, s) in sections {
        let line = p.line_of(s.span().start);
        p.issue(Some(line), format!("unknown section [{name}]"));
    }

    for (key, message) in cfg.violations() {
        let line = p.lines.get(key).copied();
        p.issue(line, message);
    }
    if p.issues.is_empty() {
        Ok(cfg)
    } else {
        p.issues.sort_by_key(|i| i.line.unwrap_or(usize::MAX));
        Err(Error::Config(p.issues))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn issues(text: &str) -> Vec<ConfigIssue> {
        match parse_config(text) {
            Err(Error::Config(v)) => v,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = parse_config("[grid]\ndim = 1\n").unwrap();
        assert_eq!(cfg.lambda, 1e-3);
        assert_eq!(cfg.dt, 1e-4);
        assert_eq!(cfg.n, vec![199]);
        assert_eq!(cfg, RunConfig::default());
        let cfg2 = parse_config("[grid]\ndim = 2\n").unwrap();
        assert_eq!(cfg2.n, vec![99]);
        assert_eq!(cfg2.noise.modes, vec![vec![1, 1]]);
    }

    #[test]
    fn lambda_out_of_range() {
        let v = issues("[model]\nlambda = 1.5\n");
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].line, Some(2));
        assert!(v[0].message.contains("lambda out of (0,1)"), "{}", v[0].message);
    }

    #[test]
    fn x0_below_xc_names_the_point() {
        let text = "[grid]\nn = [9]\n[initial]\nx0 = { profile = \"constant\", value = 1.0 }\nxc = { profile = \"custom\", values = [0, 0, 0, 2, 0, 0, 0, 0, 0] }\n";
        let v = issues(text);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].line, Some(4));
        assert!(v[0].message.contains("grid point 3"), "{}", v[0].message);
    }

    #[test]
    fn reports_every_violation_with_lines() {
        let text = "[grid]\ndim = 3\n[time]\ndt = -1.0\nspeed = 2\n[model]\nlambda = 0\n[extra]\nk = 1\n";
        let v = issues(text);
        let lines: Vec<Option<usize>> = v.iter().map(|i| i.line).collect();
        assert!(lines.contains(&Some(2)), "{v:?}");
        assert!(lines.contains(&Some(4)), "{v:?}");
        assert!(lines.contains(&Some(5)), "{v:?}");
        assert!(lines.contains(&Some(7)), "{v:?}");
        assert!(v.iter().any(|i| i.message.contains("unknown key time.speed")));
        assert!(v.iter().any(|i| i.message.contains("unknown section [extra]")));
    }

    #[test]
    fn syntax_error_has_line() {
        let v = issues("[grid]\ndim = = 1\n");
        assert_eq!(v[0].line, Some(2));
    }

    #[test]
    fn type_errors_are_reported() {
        let v = issues("[time]\nscheme = \"leapfrog\"\nrecord_stride = \"ten\"\n");
        assert_eq!(v.len(), 2);
    }

    #[test]
    fn round_trip_of_non_default_config() {
        let mut cfg = RunConfig::default_for_dim(2);
        cfg.n = vec![21, 17];
        cfg.extent = vec![1.0, 2.5];
        cfg.lambda = 0.0123;
        cfg.scheme = SchemeChoice::Both;
        cfg.noise = NoiseSpec {
            mu: vec![0.7, -0.1],
            modes: vec![vec![1, 1], vec![2, 3]],
            shape: NoiseShape::Global,
        };
        cfg.x0 = Profile::ScaledE1 { amplitude: 2.0 };
        cfg.xc = Profile::Constant { value: -0.5 };
        cfg.fit_window = Some((0.1, 0.4));
        cfg.out_dir = "runs/\"quoted\"".into();
        cfg.seed = 123456789;
        let back = parse_config(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }
}
