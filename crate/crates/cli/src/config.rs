//! INI scenario files.
//!
//! Every section is optional; missing keys fall back to the defaults below.
//! Unknown sections and keys are rejected so that typos do not silently
//! change a run.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use ini::Ini;
use jcm_core::algebra::FockSpace;
use jcm_core::aux::{AuxOptions, AuxState, DEFAULT_THETA_MIN};
use jcm_core::oracle::OracleOptions;
use jcm_core::params::{ModelParams, TimeProfile};
use jcm_core::propagator::Sigma;

use crate::error::{core_message, CliError};

const PROFILE_NAMES: [&str; 4] = ["omega", "omega0", "g_mod", "g_phase"];

#[derive(Debug, Clone)]
pub enum InitialCondition {
    Fixed(AuxState),
    /// Chosen per block so that the trajectory starts on the adiabatic branch.
    AdiabaticMatched,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub t_start: f64,
    pub t_final: f64,
    pub samples: usize,
    pub sigmas: Vec<Sigma>,
    pub infidelity_bound: f64,
}

#[derive(Debug, Clone)]
pub struct VerifyConfig {
    pub tol: f64,
    pub block_tol: f64,
    /// Hamiltonians for the closure check are sampled at this many times.
    pub hamiltonian_samples: usize,
}

#[derive(Debug, Clone)]
pub struct BerryConfig {
    pub m: usize,
    pub thetas: Vec<f64>,
    pub g_mod: f64,
    pub phi0: f64,
    pub period: Option<f64>,
    pub tol: f64,
}

#[derive(Debug, Clone)]
pub struct CoherentConfig {
    pub xi: f64,
    pub sigma: Sigma,
    pub tol: f64,
    pub norm_tol: f64,
}

#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub space: FockSpace,
    pub blocks: Vec<usize>,
    pub params: ModelParams,
    pub initial: InitialCondition,
    pub aux: AuxOptions,
    pub run: RunConfig,
    pub oracle: Option<OracleOptions>,
    pub output_dir: Option<PathBuf>,
    pub precision: usize,
    pub verify: VerifyConfig,
    pub berry: BerryConfig,
    pub coherent: CoherentConfig,
}

/// Keys of one section, consumed as they are read.
struct Section {
    name: &'static str,
    values: BTreeMap<String, String>,
}

impl Section {
    fn key(&self, key: &str) -> String {
        format!("{}.{key}", self.name)
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.values.remove(key)
    }

    fn number(&mut self, key: &str) -> Result<Option<f64>, CliError> {
        self.take(key)
            .map(|v| parse_number(&v).map_err(|msg| CliError::config(self.key(key), msg)))
            .transpose()
    }

    fn number_or(&mut self, key: &str, default: f64) -> Result<f64, CliError> {
        Ok(self.number(key)?.unwrap_or(default))
    }

    fn positive_or(&mut self, key: &str, default: f64) -> Result<f64, CliError> {
        let v = self.number_or(key, default)?;
        if !(v > 0.0) {
            return Err(CliError::config(
                self.key(key),
                format!("must be positive, got {v}"),
            ));
        }
        Ok(v)
    }

    fn count(&mut self, key: &str) -> Result<Option<usize>, CliError> {
        self.take(key)
            .map(|v| {
                v.trim().parse::<usize>().map_err(|_| {
                    CliError::config(
                        self.key(key),
                        format!("expected a non-negative integer, got `{v}`"),
                    )
                })
            })
            .transpose()
    }

    fn count_or(&mut self, key: &str, default: usize) -> Result<usize, CliError> {
        Ok(self.count(key)?.unwrap_or(default))
    }

    fn flag_or(&mut self, key: &str, default: bool) -> Result<bool, CliError> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => match v.trim().to_ascii_lowercase().as_str() {
                "true" | "yes" | "on" | "1" => Ok(true),
                "false" | "no" | "off" | "0" => Ok(false),
                other => Err(CliError::config(
                    self.key(key),
                    format!("expected true or false, got `{other}`"),
                )),
            },
        }
    }

    fn list(&mut self, key: &str) -> Result<Option<Vec<f64>>, CliError> {
        let Some(raw) = self.take(key) else {
            return Ok(None);
        };
        split_list(&raw)
            .map(|item| parse_number(item).map_err(|msg| CliError::config(self.key(key), msg)))
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    fn sigmas(&mut self, key: &str) -> Result<Option<Vec<Sigma>>, CliError> {
        let Some(raw) = self.take(key) else {
            return Ok(None);
        };
        let mut out = Vec::new();
        for item in split_list(&raw) {
            let s = parse_sigma(item).map_err(|msg| CliError::config(self.key(key), msg))?;
            if out.contains(&s) {
                return Err(CliError::config(
                    self.key(key),
                    format!("σ = {s} listed twice"),
                ));
            }
            out.push(s);
        }
        if out.is_empty() {
            return Err(CliError::config(self.key(key), "empty list"));
        }
        Ok(Some(out))
    }

    /// Fails on the first key nobody asked for.
    fn finish(self) -> Result<(), CliError> {
        match self.values.into_keys().next() {
            Some(k) => Err(CliError::config(
                format!("{}.{k}", self.name),
                "unknown key",
            )),
            None => Ok(()),
        }
    }
}

/// Drops `; ...` and `# ...` trailing a value. Full-line comments are left
/// to the INI parser.
fn strip_inline_comments(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for line in text.lines() {
        let cut = line
            .char_indices()
            .find(|&(i, c)| {
                (c == ';' || c == '#') && i > 0 && line[..i].ends_with(char::is_whitespace)
            })
            .map_or(line.len(), |(i, _)| i);
        out.push_str(line[..cut].trim_end());
        out.push('\n');
    }
    out
}

fn split_list(raw: &str) -> impl Iterator<Item = &str> {
    raw.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn parse_sigma(raw: &str) -> Result<Sigma, String> {
    match raw.trim() {
        "+1" | "1" | "+" | "plus" => Ok(Sigma::Plus),
        "-1" | "-" | "minus" => Ok(Sigma::Minus),
        other => Err(format!("expected +1 or -1, got `{other}`")),
    }
}

/// Decimal or scientific numbers, plus multiples of `pi` such as `pi/6`,
/// `-2pi/3` or `0.5*pi`.
pub fn parse_number(raw: &str) -> Result<f64, String> {
    let s = raw.trim();
    if let Ok(v) = s.parse::<f64>() {
        if v.is_finite() {
            return Ok(v);
        }
        return Err(format!("`{s}` is not finite"));
    }
    let bad = || format!("expected a number or a multiple of pi, got `{s}`");
    let lower = s.to_ascii_lowercase();
    let Some(at) = lower.find("pi") else {
        return Err(bad());
    };
    let (head, tail) = (lower[..at].trim(), lower[at + 2..].trim());
    let head = head.strip_suffix('*').unwrap_or(head).trim();
    let coefficient = match head {
        "" | "+" => 1.0,
        "-" => -1.0,
        h => h.parse::<f64>().map_err(|_| bad())?,
    };
    let divisor = match tail {
        "" => 1.0,
        t => {
            let d = t.strip_prefix('/').ok_or_else(bad)?.trim();
            d.parse::<f64>().map_err(|_| bad())?
        }
    };
    if divisor == 0.0 {
        return Err(format!("`{s}` divides by zero"));
    }
    Ok(coefficient * PI / divisor)
}

/// Reads `<name>.kind` and its coefficients, or a bare `<name> = value` for a
/// constant.
fn read_profile(sec: &mut Section, name: &str, default: f64) -> Result<TimeProfile, CliError> {
    let bare = sec.number(name)?;
    let kind_key = format!("{name}.kind");
    let kind = sec.take(&kind_key);
    let Some(kind) = kind else {
        // coefficients without a kind are an error, caught by finish()
        return Ok(TimeProfile::constant(bare.unwrap_or(default)));
    };
    if bare.is_some() {
        return Err(CliError::config(
            sec.key(name),
            format!("conflicts with {}", sec.key(&kind_key)),
        ));
    }
    let mut need = |coef: &str| -> Result<f64, CliError> {
        let key = format!("{name}.{coef}");
        sec.number(&key)?
            .ok_or_else(|| CliError::config(sec.key(&key), "missing"))
    };
    let profile = match kind.trim() {
        "constant" => TimeProfile::constant(need("value")?),
        "linear" => TimeProfile::linear(need("offset")?, need("slope")?),
        "sinusoid" => TimeProfile::sinusoid(
            need("offset")?,
            need("amplitude")?,
            need("frequency")?,
            need("phase")?,
        ),
        "chirp" => TimeProfile::chirp(
            need("offset")?,
            need("amplitude")?,
            need("frequency")?,
            need("rate")?,
            need("phase")?,
        ),
        "table" => {
            let times_key = format!("{name}.times");
            let values_key = format!("{name}.values");
            let times = sec
                .list(&times_key)?
                .ok_or_else(|| CliError::config(sec.key(&times_key), "missing"))?;
            let values = sec
                .list(&values_key)?
                .ok_or_else(|| CliError::config(sec.key(&values_key), "missing"))?;
            if times.len() != values.len() {
                return Err(CliError::config(
                    sec.key(&values_key),
                    format!("{} values for {} times", values.len(), times.len()),
                ));
            }
            TimeProfile::table(times.into_iter().zip(values).collect())
                .map_err(|e| CliError::config(sec.key(&times_key), core_message(e)))?
        }
        other => {
            return Err(CliError::config(
                sec.key(&kind_key),
                format!("unknown profile kind `{other}` (expected constant, linear, sinusoid, chirp or table)"),
            ))
        }
    };
    Ok(profile)
}

fn sections(ini: &Ini) -> Result<BTreeMap<String, BTreeMap<String, String>>, CliError> {
    const KNOWN: [&str; 9] = [
        "space", "profiles", "aux", "run", "oracle", "output", "verify", "berry", "coherent",
    ];
    let mut out: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
    for (name, props) in ini.iter() {
        let Some(name) = name else {
            if let Some((k, _)) = props.iter().next() {
                return Err(CliError::config(k.to_string(), "key outside any section"));
            }
            continue;
        };
        if !KNOWN.contains(&name) {
            return Err(CliError::config(name.to_string(), "unknown section"));
        }
        let entry = out.entry(name.to_string()).or_default();
        let mut seen = BTreeSet::new();
        for (k, v) in props.iter() {
            if !seen.insert(k) || entry.contains_key(k) {
                return Err(CliError::config(
                    format!("{name}.{k}"),
                    "given more than once",
                ));
            }
            entry.insert(k.to_string(), v.to_string());
        }
    }
    Ok(out)
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let ini = Ini::load_from_str(&strip_inline_comments(text))
            .map_err(|e| CliError::Usage(format!("malformed config: {e}")))?;
        let mut raw = sections(&ini)?;
        let mut section = |name: &'static str| Section {
            name,
            values: raw.remove(name).unwrap_or_default(),
        };

        let mut sec = section("space");
        let k = sec.count_or("k", 3)?;
        let cutoff = sec.count_or("cutoff", 32)?;
        let guard = sec.count_or("guard", k)?;
        let blocks = match sec.list("m")? {
            None => vec![0],
            Some(list) => list
                .into_iter()
                .map(|v| {
                    if v >= 0.0 && v.fract() == 0.0 {
                        Ok(v as usize)
                    } else {
                        Err(CliError::config(
                            "space.m",
                            format!("{v} is not a block index"),
                        ))
                    }
                })
                .collect::<Result<Vec<_>, _>>()?,
        };
        let space = FockSpace::new(cutoff, k, guard).map_err(|e| {
            let key = if k == 0 {
                "space.k"
            } else if guard < k {
                "space.guard"
            } else {
                "space.cutoff"
            };
            CliError::config(key, core_message(e))
        })?;
        for &m in &blocks {
            if m + k + guard > cutoff - 1 {
                return Err(CliError::config(
                    "space.m",
                    format!(
                        "block m = {m} reaches level {} inside the guard band of cutoff {cutoff}",
                        m + k
                    ),
                ));
            }
        }
        if blocks.is_empty() {
            return Err(CliError::config("space.m", "empty list"));
        }
        sec.finish()?;

        let mut sec = section("profiles");
        let defaults = [1.0, 3.0, 0.1, 0.0];
        let mut profiles = Vec::with_capacity(4);
        for (name, default) in PROFILE_NAMES.iter().zip(defaults) {
            profiles.push(read_profile(&mut sec, name, default)?);
        }
        sec.finish()?;
        let [omega, omega0, g_mod, g_phase]: [TimeProfile; 4] =
            profiles.try_into().expect("four profiles");
        let params = ModelParams::new(omega, omega0, g_mod, g_phase, k);

        let mut sec = section("aux");
        let matched = sec.flag_or("adiabatic_matched", false)?;
        let theta0 = sec.number("theta0")?;
        let phi0 = sec.number("phi0")?;
        let initial = if matched {
            if theta0.is_some() || phi0.is_some() {
                return Err(CliError::config(
                    "aux.adiabatic_matched",
                    "cannot be combined with theta0 or phi0",
                ));
            }
            InitialCondition::AdiabaticMatched
        } else {
            let theta = theta0.unwrap_or(PI / 2.0);
            if !(0.0..=PI).contains(&theta) {
                return Err(CliError::config(
                    "aux.theta0",
                    format!("{theta} outside [0, pi]"),
                ));
            }
            InitialCondition::Fixed(AuxState::new(theta, phi0.unwrap_or(PI)))
        };
        let mut aux = AuxOptions::new(
            sec.positive_or("rtol", 1e-10)?,
            sec.positive_or("atol", 1e-12)?,
        );
        aux.theta_min = sec.positive_or("theta_min", DEFAULT_THETA_MIN)?;
        sec.finish()?;

        let mut sec = section("run");
        let run = RunConfig {
            t_start: sec.number_or("t_start", 0.0)?,
            t_final: sec.number_or("t_final", 20.0)?,
            samples: sec.count_or("samples", 200)?,
            sigmas: sec.sigmas("sigma")?.unwrap_or(Sigma::BOTH.to_vec()),
            infidelity_bound: sec.positive_or("infidelity_bound", 1e-6)?,
        };
        if !(run.t_final > run.t_start) {
            return Err(CliError::config("run.t_final", "must exceed run.t_start"));
        }
        if run.samples == 0 {
            return Err(CliError::config("run.samples", "must be at least 1"));
        }
        params
            .validate_window(run.t_start, run.t_final)
            .map_err(|e| CliError::config("profiles", core_message(e)))?;
        sec.finish()?;

        let mut sec = section("oracle");
        let oracle = if sec.flag_or("enabled", true)? {
            let mut o = OracleOptions::new(
                sec.positive_or("rtol", 1e-12)?,
                sec.positive_or("atol", 1e-14)?,
            );
            o.norm_tol = sec.positive_or("norm_tol", o.norm_tol)?;
            o.leakage_tol = sec.positive_or("leakage_tol", o.leakage_tol)?;
            Some(o)
        } else {
            None
        };
        sec.finish()?;

        let mut sec = section("output");
        let output_dir = sec.take("directory").map(PathBuf::from);
        let precision = sec.count_or("precision", jcm_core::export::DEFAULT_PRECISION)?;
        if !(1..=17).contains(&precision) {
            return Err(CliError::config(
                "output.precision",
                format!("{precision} outside 1..=17"),
            ));
        }
        sec.finish()?;

        let mut sec = section("verify");
        let verify = VerifyConfig {
            tol: sec.positive_or("tol", 1e-12)?,
            block_tol: sec.positive_or("block_tol", 1e-13)?,
            hamiltonian_samples: sec.count_or("hamiltonian_samples", 5)?,
        };
        sec.finish()?;

        let mut sec = section("berry");
        let berry = BerryConfig {
            m: sec.count_or("m", blocks[0])?,
            thetas: sec.list("theta")?.unwrap_or(vec![
                PI / 6.0,
                PI / 3.0,
                PI / 2.0,
                2.0 * PI / 3.0,
            ]),
            g_mod: sec.number_or("g_mod", 0.05)?,
            phi0: sec.number_or("phi0", 0.0)?,
            period: sec.number("period")?,
            tol: sec.positive_or("tol", 1e-3)?,
        };
        if berry.m + k + guard > cutoff - 1 {
            return Err(CliError::config(
                "berry.m",
                format!("block m = {} does not fit the space", berry.m),
            ));
        }
        if let Some(t) = berry.thetas.iter().find(|t| !(0.0..=PI).contains(*t)) {
            return Err(CliError::config(
                "berry.theta",
                format!("{t} outside [0, pi]"),
            ));
        }
        if !(berry.g_mod >= 0.0) {
            return Err(CliError::config("berry.g_mod", "must be non-negative"));
        }
        if let Some(p) = berry.period {
            if !(p > 0.0) {
                return Err(CliError::config("berry.period", "must be positive"));
            }
        }
        sec.finish()?;

        let mut sec = section("coherent");
        let sigma = match sec.take("sigma") {
            None => Sigma::Plus,
            Some(v) => parse_sigma(&v).map_err(|msg| CliError::config("coherent.sigma", msg))?,
        };
        let coherent = CoherentConfig {
            xi: sec.number_or("xi", 1.0)?,
            sigma,
            tol: sec.positive_or("tol", 1e-6)?,
            norm_tol: sec.positive_or("norm_tol", 1e-10)?,
        };
        if !(coherent.xi >= 0.0) {
            return Err(CliError::config("coherent.xi", "must be non-negative"));
        }
        sec.finish()?;

        Ok(Self {
            space,
            blocks,
            params,
            initial,
            aux,
            run,
            oracle,
            output_dir,
            precision,
            verify,
            berry,
            coherent,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key_of(text: &str) -> String {
        match ScenarioConfig::parse(text) {
            Err(CliError::Config { key, .. }) => key,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn numbers() {
        assert_eq!(parse_number("1.5e-3").unwrap(), 1.5e-3);
        assert_eq!(parse_number("pi").unwrap(), PI);
        assert_eq!(parse_number("pi/6").unwrap(), PI / 6.0);
        assert_eq!(parse_number("-2pi/3").unwrap(), -2.0 * PI / 3.0);
        assert_eq!(parse_number("0.5*pi").unwrap(), 0.5 * PI);
        assert!(parse_number("pi/0").is_err());
        assert!(parse_number("two").is_err());
        assert!(parse_number("inf").is_err());
    }

    #[test]
    fn empty_file_gives_defaults() {
        let c = ScenarioConfig::parse("").unwrap();
        assert_eq!((c.space.cutoff(), c.space.k(), c.space.guard()), (32, 3, 3));
        assert_eq!(c.blocks, vec![0]);
        assert_eq!(c.params.evaluate(5.0).unwrap().omega0, 3.0);
        assert_eq!(c.run.sigmas, Sigma::BOTH.to_vec());
        assert!(c.oracle.is_some());
    }

    #[test]
    fn profiles_parse() {
        let c = ScenarioConfig::parse(
            "[profiles]\nomega = 1.2\nomega0.kind = sinusoid\nomega0.offset = 3\nomega0.amplitude = 0.1\n\
             omega0.frequency = 0.5\nomega0.phase = 0\ng_mod.kind = table\ng_mod.times = 0, 30\n\
             g_mod.values = 0.1, 0.2\n[run]\nt_final = 30",
        )
        .unwrap();
        let v = c.params.evaluate(15.0).unwrap();
        assert_eq!(v.omega, 1.2);
        assert!((v.omega0 - (3.0 + 0.1 * 7.5f64.sin())).abs() < 1e-15);
        assert!((v.g.re - 0.15).abs() < 1e-15);
    }

    #[test]
    fn inline_comments() {
        let c = ScenarioConfig::parse("; header\n[space]\nk = 2 ; photons\nm = 0, 1   # blocks\n")
            .unwrap();
        assert_eq!(c.space.k(), 2);
        assert_eq!(c.blocks, vec![0, 1]);
    }

    #[test]
    fn errors_name_the_key() {
        assert_eq!(
            key_of("[profiles]\nomega.kind = wobble"),
            "profiles.omega.kind"
        );
        assert_eq!(
            key_of("[profiles]\nomega0.kind = linear\nomega0.offset = 3"),
            "profiles.omega0.slope"
        );
        assert_eq!(key_of("[space]\ncutoff = 4\nk = 3"), "space.cutoff");
        assert_eq!(key_of("[space]\nm = 40"), "space.m");
        assert_eq!(key_of("[run]\nsigma = 2"), "run.sigma");
        assert_eq!(key_of("[run]\nt_final = -1"), "run.t_final");
        assert_eq!(key_of("[aux]\nrtol = abc"), "aux.rtol");
        assert_eq!(
            key_of("[aux]\nadiabatic_matched = true\ntheta0 = 1"),
            "aux.adiabatic_matched"
        );
        assert_eq!(key_of("[space]\nspin = 1"), "space.spin");
        assert_eq!(key_of("[nowhere]\na = 1"), "nowhere");
        assert_eq!(
            key_of("[profiles]\nomega.kind = table\nomega.times = 0, 1\nomega.values = 1"),
            "profiles.omega.values"
        );
        assert_eq!(
            key_of("[profiles]\nomega.slope = 1"),
            "profiles.omega.slope"
        );
    }
}
