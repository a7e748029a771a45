//! Flat key = value run configuration.
//!
//! Grammar: one `key = value` pair per line; `#` starts a comment; blank
//! lines are ignored. Lists are comma separated. Unknown and duplicate keys
//! are rejected with their line number. Accepted keys:
//!
//! ```text
//! family           geometric | harmonic | power | finite        (required)
//! rho              geometric ratio in (0,1)                     (geometric)
//! exponent         power-law exponent > 1/2                     (power)
//! coeffs           comma list a_1,a_2,...  (may be empty)       (finite)
//! effective_length truncation index echoed into reports
//! innovation       normal | rademacher | uniform        [normal]
//! theta            "uniform" or comma list of radians in [0, 2pi)  [pi/2]
//! n                transform length                      [4096]
//! m                path horizon                          [1.0]
//! grid_points      path grid resolution                  [min(n*m, 4096)]
//! past_depth       frozen past depth L                   [64; 16384 when
//!                                                         sum |a_j| diverges]
//! replicates       Monte Carlo futures per test          [2000]
//! r_list           approximation orders for decay        [1,2,4,8]
//! n_list           horizons for decay                    [256,512,1024,2048]
//! time_grid        path test times in (0, m]             [0.5,1.0]
//! master_seed      64-bit seed                           [42]
//! significance     per-test level alpha                  [0.01]
//! spec_roots       m-th roots reported as excluded       [1]
//! out_dir          output directory                      [out]
//! ```

use qdftlab_core::{CoefficientFamily, InnovationDistribution, InnovationKind};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: cannot parse '{text}': expected key = value")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key '{key}'")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key '{key}'")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: key '{key}': {message}")]
    Value { line: usize, key: String, message: String },
    #[error("missing mandatory key '{key}'")]
    Missing { key: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ThetaSpec {
    Fixed(Vec<f64>),
    Uniform,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub family: CoefficientFamily,
    pub innovation: InnovationDistribution,
    pub theta: ThetaSpec,
    pub n: usize,
    pub m: f64,
    pub grid_points: usize,
    pub past_depth: usize,
    pub replicates: usize,
    pub r_list: Vec<usize>,
    pub n_list: Vec<usize>,
    pub time_grid: Vec<f64>,
    pub master_seed: u64,
    pub significance: f64,
    pub spec_roots: u32,
    pub out_dir: PathBuf,
}

const KNOWN_KEYS: &[&str] = &[
    "family",
    "rho",
    "exponent",
    "coeffs",
    "effective_length",
    "innovation",
    "theta",
    "n",
    "m",
    "grid_points",
    "past_depth",
    "replicates",
    "r_list",
    "n_list",
    "time_grid",
    "master_seed",
    "significance",
    "spec_roots",
    "out_dir",
];

struct Entries {
    map: BTreeMap<String, (String, usize)>,
}

impl Entries {
    fn get(&self, key: &str) -> Option<(&str, usize)> {
        self.map.get(key).map(|(v, l)| (v.as_str(), *l))
    }

    fn value_err(&self, key: &str, message: impl Into<String>) -> ConfigError {
        let line = self.map.get(key).map(|(_, l)| *l).unwrap_or(0);
        ConfigError::Value { line, key: key.to_string(), message: message.into() }
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<Option<T>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some((text, line)) => text.parse::<T>().map(Some).map_err(|_| ConfigError::Value {
                line,
                key: key.to_string(),
                message: format!("malformed {what}: '{text}'"),
            }),
        }
    }

    fn parse_list<T: std::str::FromStr>(
        &self,
        key: &str,
        what: &str,
    ) -> Result<Option<Vec<T>>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some((text, line)) => {
                if text.trim().is_empty() {
                    return Ok(Some(Vec::new()));
                }
                text.split(',')
                    .map(|item| item.trim().parse::<T>())
                    .collect::<Result<Vec<T>, _>>()
                    .map(Some)
                    .map_err(|_| ConfigError::Value {
                        line,
                        key: key.to_string(),
                        message: format!("malformed {what} list: '{text}'"),
                    })
            }
        }
    }
}

fn split_entries(text: &str) -> Result<Entries, ConfigError> {
    let mut map = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::Syntax { line: line_no, text: line.to_string() });
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey { line: line_no, key });
        }
        if map.contains_key(&key) {
            return Err(ConfigError::DuplicateKey { line: line_no, key });
        }
        map.insert(key, (value, line_no));
    }
    Ok(Entries { map })
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let entries = split_entries(text)?;

    let family = build_family(&entries)?;
    let innovation = match entries.get("innovation") {
        None => InnovationDistribution::standard_normal(),
        Some(("normal" | "standard_normal", _)) => InnovationDistribution::standard_normal(),
        Some(("rademacher", _)) => InnovationDistribution::new(InnovationKind::Rademacher),
        Some(("uniform" | "centered_uniform", _)) => {
            InnovationDistribution::new(InnovationKind::CenteredUniform)
        }
        Some((other, line)) => {
            return Err(ConfigError::Value {
                line,
                key: "innovation".into(),
                message: format!("unknown innovation '{other}' (normal|rademacher|uniform)"),
            })
        }
    };

    let theta = match entries.get("theta") {
        None => ThetaSpec::Fixed(vec![std::f64::consts::FRAC_PI_2]),
        Some(("uniform", _)) => ThetaSpec::Uniform,
        Some(_) => {
            let list: Vec<f64> = entries.parse_list("theta", "number")?.unwrap();
            if list.is_empty() {
                return Err(entries.value_err("theta", "at least one frequency required"));
            }
            let two_pi = 2.0 * std::f64::consts::PI;
            if list.iter().any(|&t| !(0.0..two_pi).contains(&t)) {
                return Err(entries.value_err("theta", "frequencies must lie in [0, 2*pi)"));
            }
            ThetaSpec::Fixed(list)
        }
    };

    let n: usize = entries.parse("n", "integer")?.unwrap_or(4096);
    if n < 2 {
        return Err(entries.value_err("n", "transform length must be >= 2"));
    }
    let m: f64 = entries.parse("m", "number")?.unwrap_or(1.0);
    if !m.is_finite() || m <= 0.0 {
        return Err(entries.value_err("m", "path horizon must be positive"));
    }
    let grid_points: usize = entries
        .parse("grid_points", "integer")?
        .unwrap_or_else(|| qdftlab_core::default_grid_points(n, m));
    if grid_points == 0 {
        return Err(entries.value_err("grid_points", "grid must have at least one cell"));
    }
    let past_depth: usize = entries
        .parse("past_depth", "integer")?
        .unwrap_or(if family.is_absolutely_summable() { 64 } else { 16384 });
    if past_depth == 0 {
        return Err(entries.value_err("past_depth", "past depth must be >= 1"));
    }
    let replicates: usize = entries.parse("replicates", "integer")?.unwrap_or(2000);
    if replicates < 2 {
        return Err(entries.value_err("replicates", "need at least 2 replicates"));
    }

    let r_list: Vec<usize> = entries.parse_list("r_list", "integer")?.unwrap_or(vec![1, 2, 4, 8]);
    if r_list.is_empty() || r_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(entries.value_err("r_list", "must be nonempty and strictly increasing"));
    }
    let n_list: Vec<usize> =
        entries.parse_list("n_list", "integer")?.unwrap_or(vec![256, 512, 1024, 2048]);
    if n_list.is_empty() || n_list.windows(2).any(|w| w[0] >= w[1]) || n_list[0] < 2 {
        return Err(entries.value_err("n_list", "must be strictly increasing with first entry >= 2"));
    }
    let time_grid: Vec<f64> = entries.parse_list("time_grid", "number")?.unwrap_or(vec![0.5, 1.0]);
    if time_grid.is_empty()
        || time_grid.windows(2).any(|w| w[0] >= w[1])
        || time_grid.iter().any(|&t| !(t > 0.0 && t <= m))
    {
        return Err(entries.value_err("time_grid", "must be strictly increasing within (0, m]"));
    }

    let master_seed: u64 = entries.parse("master_seed", "integer")?.unwrap_or(42);
    let significance: f64 = entries.parse("significance", "number")?.unwrap_or(0.01);
    if !(significance > 0.0 && significance < 1.0) {
        return Err(entries.value_err("significance", "must lie in (0, 1)"));
    }
    let spec_roots: u32 = entries.parse("spec_roots", "integer")?.unwrap_or(1);
    if spec_roots == 0 {
        return Err(entries.value_err("spec_roots", "must be >= 1"));
    }
    let out_dir: PathBuf =
        entries.get("out_dir").map(|(v, _)| PathBuf::from(v)).unwrap_or_else(|| "out".into());

    Ok(RunConfig {
        family,
        innovation,
        theta,
        n,
        m,
        grid_points,
        past_depth,
        replicates,
        r_list,
        n_list,
        time_grid,
        master_seed,
        significance,
        spec_roots,
        out_dir,
    })
}

fn build_family(entries: &Entries) -> Result<CoefficientFamily, ConfigError> {
    let (kind, _) = entries.get("family").ok_or(ConfigError::Missing { key: "family".into() })?;
    let family = match kind {
        "geometric" => {
            let rho: f64 = entries
                .parse("rho", "number")?
                .ok_or(ConfigError::Missing { key: "rho".into() })?;
            CoefficientFamily::geometric(rho)
                .map_err(|e| entries.value_err("rho", strip_prefix(&e)))?
        }
        "harmonic" => CoefficientFamily::harmonic(),
        "power" => {
            let exponent: f64 = entries
                .parse("exponent", "number")?
                .ok_or(ConfigError::Missing { key: "exponent".into() })?;
            CoefficientFamily::power(exponent)
                .map_err(|e| entries.value_err("exponent", strip_prefix(&e)))?
        }
        "finite" => {
            let coeffs: Vec<f64> = entries
                .parse_list("coeffs", "number")?
                .ok_or(ConfigError::Missing { key: "coeffs".into() })?;
            CoefficientFamily::finite(coeffs)
        }
        other => {
            return Err(entries.value_err(
                "family",
                format!("unknown family '{other}' (geometric|harmonic|power|finite)"),
            ))
        }
    };
    match entries.parse::<usize>("effective_length", "integer")? {
        Some(j) if j >= 1 => Ok(family.with_effective_length(j)),
        Some(_) => Err(entries.value_err("effective_length", "must be >= 1")),
        None => Ok(family),
    }
}

fn strip_prefix(err: &qdftlab_core::CoreError) -> String {
    err.to_string().trim_start_matches("invalid parameter: ").to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses() {
        let cfg = parse_config("family = geometric\nrho = 0.5\ntheta = 1.5707963\n").unwrap();
        assert_eq!(cfg.n, 4096);
        assert_eq!(cfg.replicates, 2000);
        assert_eq!(cfg.master_seed, 42);
        assert!(matches!(cfg.theta, ThetaSpec::Fixed(ref v) if v.len() == 1));
        assert_eq!(cfg.past_depth, 64);
    }

    #[test]
    fn harmonic_gets_deep_past() {
        let cfg = parse_config("family = harmonic\n").unwrap();
        assert_eq!(cfg.past_depth, 16384);
    }

    #[test]
    fn rho_out_of_range() {
        let err = parse_config("family = geometric\nrho = 1.0\n").unwrap_err();
        assert!(err.to_string().contains("geometric ratio must be in (0,1)"), "{err}");
        assert!(err.to_string().contains("rho"));
    }

    #[test]
    fn duplicate_key_is_named() {
        let err = parse_config("family = harmonic\nn = 10\nn = 20\n").unwrap_err();
        assert!(matches!(err, ConfigError::DuplicateKey { ref key, line: 3 } if key == "n"), "{err}");
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = parse_config("family = harmonic\nbogus = 1\n").unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKey { ref key, line: 2 } if key == "bogus"));
    }

    #[test]
    fn malformed_number_reports_key_and_line() {
        let err = parse_config("family = geometric\nrho = zero point five\n").unwrap_err();
        let text = err.to_string();
        assert!(text.contains("line 2") && text.contains("rho"), "{text}");
    }

    #[test]
    fn uniform_theta_and_lists() {
        let cfg = parse_config(
            "family = finite\ncoeffs = 1.0, -0.5, 0.25\ntheta = uniform\nr_list = 1,3,9\n",
        )
        .unwrap();
        assert_eq!(cfg.theta, ThetaSpec::Uniform);
        assert_eq!(cfg.r_list, vec![1, 3, 9]);
    }

    #[test]
    fn comments_and_blanks_are_ignored() {
        let cfg = parse_config("# a comment\n\nfamily = harmonic # trailing\n").unwrap();
        assert_eq!(cfg.family.label(), "harmonic");
    }

    #[test]
    fn theta_range_checked() {
        let err = parse_config("family = harmonic\ntheta = 7.0\n").unwrap_err();
        assert!(err.to_string().contains("[0, 2*pi)"));
    }
}
