//! Flat key=value run configuration.
//!
//! The format is line-based UTF-8: `key = value` pairs, `#` comments, and
//! optional `[section]` headers that prefix the keys inside them (so
//! `kind = additive` under `[noise]` is the key `noise.kind`). Parsing is
//! strict: unknown keys, duplicates, malformed values and constraint
//! violations are all reported with the offending key. A parsed config
//! serializes back to text that reparses identically.
//!
//! ```text
//! dim = 1
//! n = 64
//! half_width = 3.141592653589793
//! p = 1.5
//! T = 1
//! steps = 50
//! seed = 42
//!
//! [noise]
//! kind = additive
//! spectrum = power:1
//! amplitude = 0.5
//!
//! [init]
//! kind = zero
//! ```

use std::collections::BTreeMap;

use thiserror::Error;

use crate::driver::{InitKind, InitSpec, NoiseKind, NoiseSpec, SimConfig, SpectrumSpec};
use crate::grid::Grid;
use crate::multiplicative::{PicardConfig, DEFAULT_PICARD_MAX_ITER, DEFAULT_PICARD_TOL};
use crate::noise::{BasisSet, NoiseProfile};
use crate::plap::PLaplaceParams;
use crate::step::{DEFAULT_MAX_ITER, DEFAULT_TOL};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("missing required key `{key}`")]
    MissingKey { key: String },
    #[error("bad value for `{key}`: {message}")]
    BadValue { key: String, message: String },
    #[error("constraint violated for `{key}`: {constraint}")]
    ConstraintViolation { key: String, constraint: String },
    #[error("unknown key `{key}` on line {line}")]
    UnknownKey { key: String, line: usize },
    #[error("duplicate key `{key}` on line {line}")]
    DuplicateKey { key: String, line: usize },
    #[error("syntax error on line {line}: {message}")]
    Syntax { line: usize, message: String },
}

/// A validated run description: either the additive problem or the
/// multiplicative one with its contraction parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum RunConfig {
    Additive(SimConfig),
    Multiplicative(PicardConfig),
}

impl RunConfig {
    pub fn base(&self) -> &SimConfig {
        match self {
            RunConfig::Additive(cfg) => cfg,
            RunConfig::Multiplicative(pc) => &pc.base,
        }
    }
}

const KNOWN_KEYS: &[&str] = &[
    "dim",
    "n",
    "half_width",
    "p",
    "delta",
    "T",
    "steps",
    "modes",
    "tol",
    "max_iter",
    "seed",
    "paths",
    "eps",
    "eps_viscosity",
    "alpha",
    "picard_tol",
    "picard_max_iter",
    "failure_budget",
    "keep_fields",
    "noise.kind",
    "noise.spectrum",
    "noise.amplitude",
    "noise.profile",
    "noise.lip",
    "init.kind",
    "init.amplitude",
    "init.width",
];

struct KeyMap {
    entries: BTreeMap<String, String>,
}

impl KeyMap {
    fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    fn required(&mut self, key: &str) -> Result<String, ConfigError> {
        self.take(key).ok_or_else(|| ConfigError::MissingKey {
            key: key.to_string(),
        })
    }
}

fn bad(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::BadValue {
        key: key.to_string(),
        message: message.into(),
    }
}

fn violated(key: &str, constraint: impl Into<String>) -> ConfigError {
    ConfigError::ConstraintViolation {
        key: key.to_string(),
        constraint: constraint.into(),
    }
}

fn parse_f64(key: &str, raw: &str) -> Result<f64, ConfigError> {
    let v: f64 = raw
        .parse()
        .map_err(|_| bad(key, format!("`{raw}` is not a number")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad(key, "value must be finite"))
    }
}

fn parse_usize(key: &str, raw: &str) -> Result<usize, ConfigError> {
    raw.parse()
        .map_err(|_| bad(key, format!("`{raw}` is not a nonnegative integer")))
}

fn parse_u64(key: &str, raw: &str) -> Result<u64, ConfigError> {
    raw.parse()
        .map_err(|_| bad(key, format!("`{raw}` is not a nonnegative integer")))
}

fn parse_bool(key: &str, raw: &str) -> Result<bool, ConfigError> {
    match raw {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(bad(key, format!("`{raw}` is not `true` or `false`"))),
    }
}

/// Parse and validate a configuration. Every violation names the key and
/// the constraint it broke.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut entries: BTreeMap<String, String> = BTreeMap::new();
    let mut section = String::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(inner) = line.strip_prefix('[') {
            let name = inner.strip_suffix(']').ok_or(ConfigError::Syntax {
                line: line_no,
                message: "unterminated section header".into(),
            })?;
            let name = name.trim();
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(ConfigError::Syntax {
                    line: line_no,
                    message: format!("invalid section name `{name}`"),
                });
            }
            section = name.to_string();
            continue;
        }
        let (key_part, value_part) = line.split_once('=').ok_or(ConfigError::Syntax {
            line: line_no,
            message: "expected `key = value`".into(),
        })?;
        let mut key = key_part.trim().to_string();
        if key.is_empty() {
            return Err(ConfigError::Syntax {
                line: line_no,
                message: "empty key".into(),
            });
        }
        if !section.is_empty() && !key.contains('.') {
            key = format!("{section}.{key}");
        }
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey { key, line: line_no });
        }
        if entries.contains_key(&key) {
            return Err(ConfigError::DuplicateKey { key, line: line_no });
        }
        entries.insert(key, value_part.trim().to_string());
    }
    let mut map = KeyMap { entries };
    build_config(&mut map)
}

fn build_config(map: &mut KeyMap) -> Result<RunConfig, ConfigError> {
    let dim = parse_usize("dim", &map.required("dim")?)?;
    if !(1..=3).contains(&dim) {
        return Err(violated("dim", "dim must be 1, 2 or 3"));
    }
    let n = parse_usize("n", &map.required("n")?)?;
    if n < 2 {
        return Err(violated("n", "n must be at least 2"));
    }
    if n.checked_pow(dim as u32).is_none() {
        return Err(violated("n", "n^dim overflows the address space"));
    }
    let half_width = parse_f64("half_width", &map.required("half_width")?)?;
    if half_width <= 0.0 {
        return Err(violated("half_width", "half_width must be positive"));
    }
    let grid = Grid::new(dim, n, half_width);

    let p = parse_f64("p", &map.required("p")?)?;
    if p <= 1.0 {
        return Err(violated("p", format!("p must satisfy p > 1, got {p}")));
    }
    let delta = match map.take("delta") {
        Some(raw) => parse_f64("delta", &raw)?,
        None => 0.0,
    };
    if delta < 0.0 {
        return Err(violated("delta", "delta must be >= 0"));
    }

    let horizon = parse_f64("T", &map.required("T")?)?;
    if horizon <= 0.0 {
        return Err(violated("T", "T must be positive"));
    }
    let steps = parse_usize("steps", &map.required("steps")?)?;
    if steps < 1 {
        return Err(violated("steps", "steps must be at least 1"));
    }

    let capacity = BasisSet::max_modes(grid);
    let modes = match map.take("modes") {
        Some(raw) => parse_usize("modes", &raw)?,
        None => 64.min(capacity),
    };
    if modes < 1 || modes > capacity {
        return Err(violated(
            "modes",
            format!("modes must lie in 1..={capacity} for this grid (frequencies below Nyquist)"),
        ));
    }

    let tol = match map.take("tol") {
        Some(raw) => parse_f64("tol", &raw)?,
        None => DEFAULT_TOL,
    };
    if tol <= 0.0 {
        return Err(violated("tol", "tol must be positive"));
    }
    let max_iter = match map.take("max_iter") {
        Some(raw) => parse_usize("max_iter", &raw)?,
        None => DEFAULT_MAX_ITER,
    };
    if max_iter < 1 {
        return Err(violated("max_iter", "max_iter must be at least 1"));
    }

    let seed = parse_u64("seed", &map.required("seed")?)?;
    let paths = match map.take("paths") {
        Some(raw) => parse_usize("paths", &raw)?,
        None => 200,
    };
    if paths < 1 {
        return Err(violated("paths", "paths must be at least 1"));
    }

    let eps_list = match map.take("eps") {
        Some(raw) => {
            let mut list = Vec::new();
            for part in raw.split(',') {
                list.push(parse_f64("eps", part.trim())?);
            }
            if !list.iter().all(|&e| e > 0.0 && e < 1.0) {
                return Err(violated("eps", "every eps must lie in (0, 1)"));
            }
            if !list.windows(2).all(|w| w[1] < w[0]) {
                return Err(violated("eps", "eps list must be strictly decreasing"));
            }
            list
        }
        None => Vec::new(),
    };

    let eps_viscosity = match map.take("eps_viscosity") {
        Some(raw) => parse_f64("eps_viscosity", &raw)?,
        None => 0.0,
    };
    if !(0.0..1.0).contains(&eps_viscosity) {
        return Err(violated(
            "eps_viscosity",
            "eps_viscosity must lie in [0, 1)",
        ));
    }

    let failure_budget = match map.take("failure_budget") {
        Some(raw) => parse_usize("failure_budget", &raw)?,
        None => 0,
    };
    let keep_fields = match map.take("keep_fields") {
        Some(raw) => parse_bool("keep_fields", &raw)?,
        None => false,
    };

    // noise block
    let kind = match map.required("noise.kind")?.as_str() {
        "additive" => NoiseKind::Additive,
        "multiplicative" => NoiseKind::Multiplicative,
        other => {
            return Err(bad(
                "noise.kind",
                format!("`{other}` is not `additive` or `multiplicative`"),
            ))
        }
    };
    let spectrum = match map.take("noise.spectrum") {
        Some(raw) => parse_spectrum(&raw)?,
        None => SpectrumSpec::Flat,
    };
    let amplitude = match map.take("noise.amplitude") {
        Some(raw) => parse_f64("noise.amplitude", &raw)?,
        None => 1.0,
    };
    if amplitude < 0.0 {
        return Err(violated("noise.amplitude", "amplitude must be >= 0"));
    }
    let profile = match map.take("noise.profile") {
        Some(raw) => match raw.as_str() {
            "identity" => NoiseProfile::Identity,
            "sine" => NoiseProfile::Sine,
            "clipped" => NoiseProfile::ClippedLinear,
            other => {
                return Err(bad(
                    "noise.profile",
                    format!("`{other}` is not `identity`, `sine` or `clipped`"),
                ))
            }
        },
        None => NoiseProfile::Identity,
    };
    let lip = match map.take("noise.lip") {
        Some(raw) => parse_f64("noise.lip", &raw)?,
        None => 1.0,
    };
    if lip < 0.0 {
        return Err(violated("noise.lip", "lip must be >= 0"));
    }

    // init block
    let init_kind = match map.required("init.kind")?.as_str() {
        "zero" => InitKind::Zero,
        "gaussian_bump" => InitKind::GaussianBump,
        "random_smooth" => InitKind::RandomSmooth,
        other => {
            return Err(bad(
                "init.kind",
                format!("`{other}` is not `zero`, `gaussian_bump` or `random_smooth`"),
            ))
        }
    };
    let init_amplitude = match map.take("init.amplitude") {
        Some(raw) => parse_f64("init.amplitude", &raw)?,
        None => 1.0,
    };
    let init_width = match map.take("init.width") {
        Some(raw) => parse_f64("init.width", &raw)?,
        None => 0.0,
    };
    if init_width < 0.0 {
        return Err(violated("init.width", "width must be >= 0"));
    }

    let alpha_raw = map.take("alpha");
    let picard_tol_raw = map.take("picard_tol");
    let picard_max_iter_raw = map.take("picard_max_iter");

    let cfg = SimConfig {
        grid,
        params: PLaplaceParams::with_delta(p, delta),
        horizon,
        steps,
        modes,
        noise: NoiseSpec {
            kind,
            spectrum,
            amplitude,
            profile,
            lip,
        },
        init: InitSpec {
            kind: init_kind,
            amplitude: init_amplitude,
            width: init_width,
        },
        tol,
        max_iter,
        eps_viscosity,
        seed,
        paths,
        eps_list,
        keep_fields,
        failure_budget,
    };

    match kind {
        NoiseKind::Additive => {
            if alpha_raw.is_some() || picard_tol_raw.is_some() || picard_max_iter_raw.is_some() {
                return Err(violated(
                    "alpha",
                    "alpha/picard_tol/picard_max_iter apply only to multiplicative noise",
                ));
            }
            Ok(RunConfig::Additive(cfg))
        }
        NoiseKind::Multiplicative => {
            if cfg.eps_viscosity > 0.0 || !cfg.eps_list.is_empty() {
                return Err(violated(
                    "eps_viscosity",
                    "the viscous term cannot be combined with multiplicative noise",
                ));
            }
            let weights = cfg.noise.mode_weights(cfg.modes);
            let l = lip * lip * weights.iter().map(|c| c * c).sum::<f64>();
            let alpha = match alpha_raw {
                Some(raw) => parse_f64("alpha", &raw)?,
                None => 2.0 * l,
            };
            if !(alpha > l) {
                return Err(violated(
                    "alpha",
                    format!("alpha must exceed the Lipschitz bound L = {l}, got {alpha}"),
                ));
            }
            let picard_tol = match picard_tol_raw {
                Some(raw) => parse_f64("picard_tol", &raw)?,
                None => DEFAULT_PICARD_TOL,
            };
            if picard_tol <= 0.0 {
                return Err(violated("picard_tol", "picard_tol must be positive"));
            }
            let picard_max_iter = match picard_max_iter_raw {
                Some(raw) => parse_usize("picard_max_iter", &raw)?,
                None => DEFAULT_PICARD_MAX_ITER,
            };
            if picard_max_iter < 1 {
                return Err(violated("picard_max_iter", "picard_max_iter must be >= 1"));
            }
            Ok(RunConfig::Multiplicative(PicardConfig {
                base: cfg,
                alpha,
                picard_tol,
                picard_max_iter,
            }))
        }
    }
}

fn parse_spectrum(raw: &str) -> Result<SpectrumSpec, ConfigError> {
    if raw == "flat" {
        return Ok(SpectrumSpec::Flat);
    }
    if let Some(gamma_raw) = raw.strip_prefix("power:") {
        let gamma = parse_f64("noise.spectrum", gamma_raw.trim())?;
        if gamma < 0.0 {
            return Err(violated("noise.spectrum", "power-law gamma must be >= 0"));
        }
        return Ok(SpectrumSpec::PowerLaw { gamma });
    }
    Err(bad(
        "noise.spectrum",
        format!("`{raw}` is not `flat` or `power:<gamma>`"),
    ))
}

/// Shortest-round-trip float formatting, scientific for extreme magnitudes.
fn fmt_f64(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-4 || v.abs() >= 1e7) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

/// Render a config as text that parses back to an identical value.
pub fn serialize_config(cfg: &RunConfig) -> String {
    let base = cfg.base();
    let mut out = String::new();
    let mut push = |k: &str, v: String| {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(&v);
        out.push('\n');
    };
    push("dim", base.grid.dim().to_string());
    push("n", base.grid.points_per_axis().to_string());
    push("half_width", fmt_f64(base.grid.half_width()));
    push("p", fmt_f64(base.params.p));
    push("delta", fmt_f64(base.params.delta));
    push("T", fmt_f64(base.horizon));
    push("steps", base.steps.to_string());
    push("modes", base.modes.to_string());
    push("tol", fmt_f64(base.tol));
    push("max_iter", base.max_iter.to_string());
    push("seed", base.seed.to_string());
    push("paths", base.paths.to_string());
    if !base.eps_list.is_empty() {
        let list: Vec<String> = base.eps_list.iter().map(|&e| fmt_f64(e)).collect();
        push("eps", list.join(","));
    }
    push("eps_viscosity", fmt_f64(base.eps_viscosity));
    push("failure_budget", base.failure_budget.to_string());
    push("keep_fields", base.keep_fields.to_string());
    if let RunConfig::Multiplicative(pc) = cfg {
        push("alpha", fmt_f64(pc.alpha));
        push("picard_tol", fmt_f64(pc.picard_tol));
        push("picard_max_iter", pc.picard_max_iter.to_string());
    }

    out.push_str("\n[noise]\n");
    let mut push = |k: &str, v: String| {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(&v);
        out.push('\n');
    };
    push(
        "kind",
        match base.noise.kind {
            NoiseKind::Additive => "additive".to_string(),
            NoiseKind::Multiplicative => "multiplicative".to_string(),
        },
    );
    push(
        "spectrum",
        match base.noise.spectrum {
            SpectrumSpec::Flat => "flat".to_string(),
            SpectrumSpec::PowerLaw { gamma } => format!("power:{}", fmt_f64(gamma)),
        },
    );
    push("amplitude", fmt_f64(base.noise.amplitude));
    push("profile", base.noise.profile.name().to_string());
    push("lip", fmt_f64(base.noise.lip));

    out.push_str("\n[init]\n");
    let mut push = |k: &str, v: String| {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(&v);
        out.push('\n');
    };
    push(
        "kind",
        match base.init.kind {
            InitKind::Zero => "zero".to_string(),
            InitKind::GaussianBump => "gaussian_bump".to_string(),
            InitKind::RandomSmooth => "random_smooth".to_string(),
        },
    );
    push("amplitude", fmt_f64(base.init.amplitude));
    push("width", fmt_f64(base.init.width));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
dim = 1
n = 32
half_width = 3.141592653589793
p = 2
T = 1
steps = 10
seed = 42

[noise]
kind = additive

[init]
kind = zero
";

    #[test]
    fn minimal_config_gets_documented_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        let base = cfg.base();
        assert_eq!(base.params.delta, 0.0);
        // default mode count is 64 capped at the grid's Nyquist capacity
        assert_eq!(base.modes, 64.min(BasisSet::max_modes(base.grid)));
        assert_eq!(base.tol, DEFAULT_TOL);
        assert_eq!(base.max_iter, DEFAULT_MAX_ITER);
        assert_eq!(base.paths, 200);
        assert_eq!(base.eps_viscosity, 0.0);
        assert!(base.eps_list.is_empty());
        assert!(!base.keep_fields);
        assert_eq!(base.noise.amplitude, 1.0);
        assert!(matches!(cfg, RunConfig::Additive(_)));
    }

    #[test]
    fn exponent_at_one_is_rejected_with_the_bound() {
        let text = MINIMAL.replace("p = 2", "p = 1.0");
        match parse_config(&text) {
            Err(ConfigError::ConstraintViolation { key, constraint }) => {
                assert_eq!(key, "p");
                assert!(constraint.contains("p > 1"), "{constraint}");
            }
            other => panic!("expected ConstraintViolation, got {other:?}"),
        }
    }

    const MULTIPLICATIVE: &str = "\
dim = 1
n = 32
half_width = 3.141592653589793
p = 2
T = 1
steps = 10
modes = 4
seed = 42

[noise]
kind = multiplicative
spectrum = flat
amplitude = 0.5
profile = identity
lip = 1

[init]
kind = gaussian_bump
";

    #[test]
    fn alpha_below_the_lipschitz_bound_is_rejected() {
        // L = lip^2 * sum c_n^2 = 1 * 4 * 0.25 = 1, and alpha = L/2 must
        // be refused with the bound spelled out
        let text = MULTIPLICATIVE.replace("seed = 42", "seed = 42\nalpha = 0.5");
        match parse_config(&text) {
            Err(ConfigError::ConstraintViolation { key, constraint }) => {
                assert_eq!(key, "alpha");
                assert!(constraint.contains("alpha must exceed"), "{constraint}");
                assert!(constraint.contains("L = 1"), "{constraint}");
            }
            other => panic!("expected ConstraintViolation, got {other:?}"),
        }
    }

    #[test]
    fn multiplicative_alpha_defaults_to_twice_the_bound() {
        let cfg = parse_config(MULTIPLICATIVE).unwrap();
        match cfg {
            RunConfig::Multiplicative(pc) => {
                assert!((pc.alpha - 2.0).abs() < 1e-12);
                assert_eq!(pc.picard_tol, DEFAULT_PICARD_TOL);
            }
            other => panic!("expected multiplicative, got {other:?}"),
        }
    }

    #[test]
    fn unknown_and_duplicate_keys_are_reported_with_lines() {
        let text = format!("{MINIMAL}mystery = 3\n");
        match parse_config(&text) {
            Err(ConfigError::UnknownKey { key, .. }) => assert_eq!(key, "init.mystery"),
            other => panic!("{other:?}"),
        }
        let text = MINIMAL.replace("p = 2", "p = 2\np = 3");
        match parse_config(&text) {
            Err(ConfigError::DuplicateKey { key, line }) => {
                assert_eq!(key, "p");
                assert_eq!(line, 5);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mode_counts_above_nyquist_capacity_are_rejected() {
        let text = MINIMAL.replace("steps = 10", "steps = 10\nmodes = 60");
        match parse_config(&text) {
            Err(ConfigError::ConstraintViolation { key, constraint }) => {
                assert_eq!(key, "modes");
                assert!(constraint.contains("Nyquist"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn viscous_term_is_refused_for_multiplicative_noise() {
        let text = MULTIPLICATIVE.replace("steps = 10", "steps = 10\neps_viscosity = 0.5");
        match parse_config(&text) {
            Err(ConfigError::ConstraintViolation { key, .. }) => assert_eq!(key, "eps_viscosity"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn round_trip_is_identity() {
        for text in [MINIMAL, MULTIPLICATIVE] {
            let parsed = parse_config(text).unwrap();
            let serialized = serialize_config(&parsed);
            let reparsed = parse_config(&serialized).unwrap();
            assert_eq!(parsed, reparsed, "round trip changed the config");
        }
        // a config exercising the optional keys
        let full = MINIMAL.replace(
            "seed = 42",
            "seed = 42\neps = 0.5,0.25,0.125\ntol = 1e-10\nkeep_fields = true",
        );
        let parsed = parse_config(&full).unwrap();
        let reparsed = parse_config(&serialize_config(&parsed)).unwrap();
        assert_eq!(parsed, reparsed);
    }

    #[test]
    fn comments_and_sections_parse() {
        let text = "\
# a comment
dim = 1  # trailing comment
n = 16
half_width = 1.0
p = 3
T = 0.5
steps = 5
seed = 1

[noise]
kind = additive
spectrum = power:2

[init]
kind = random_smooth
amplitude = 0.5
";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.base().init.kind, InitKind::RandomSmooth);
        assert_eq!(
            cfg.base().noise.spectrum,
            SpectrumSpec::PowerLaw { gamma: 2.0 }
        );
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        match parse_config("dim\n") {
            Err(ConfigError::Syntax { line: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
        match parse_config("[noise\n") {
            Err(ConfigError::Syntax { line: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
    }
}
