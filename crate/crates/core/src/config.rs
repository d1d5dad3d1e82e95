//! Flat `key = value` configuration files.
//!
//! One assignment per line, `#` starts a comment, blank lines are ignored.
//! Model keys are all required; run keys are optional and default as listed
//! in [`RunSettings::default`]. Unknown or repeated keys are errors, and
//! parsing reports every problem found rather than stopping at the first.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::hjb::DEFAULT_EULER_STEPS;
use crate::model::ModelParams;

pub const MODEL_KEYS: [&str; 15] = [
    "sigma", "lambda_a", "lambda_b", "kappa", "beta", "a_tilde", "b_tilde", "gamma", "phi",
    "sigma_z", "q_min", "q_max", "horizon", "s0", "tick",
];

pub const RUN_KEYS: [&str; 8] = [
    "paths",
    "steps",
    "seed",
    "strategy",
    "confidence",
    "euler_steps",
    "n_time",
    "out_dir",
];

/// Which quoting rule a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StrategySpec {
    ClosedForm,
    Euler,
    Constant { ask: f64, bid: f64 },
    MatchCompetitor,
}

impl FromStr for StrategySpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "closed-form" => Ok(Self::ClosedForm),
            "euler" => Ok(Self::Euler),
            "match-competitor" => Ok(Self::MatchCompetitor),
            other => {
                let parts: Vec<&str> = other.split(':').collect();
                match parts.as_slice() {
                    ["constant", a, b] => {
                        let ask = a.parse::<f64>().map_err(|e| format!("constant ask `{a}`: {e}"))?;
                        let bid = b.parse::<f64>().map_err(|e| format!("constant bid `{b}`: {e}"))?;
                        if !ask.is_finite() || !bid.is_finite() {
                            return Err("constant depths must be finite".into());
                        }
                        Ok(Self::Constant { ask, bid })
                    }
                    _ => Err(format!(
                        "unknown strategy `{other}` (expected closed-form, euler, match-competitor or constant:ASK:BID)"
                    )),
                }
            }
        }
    }
}

impl fmt::Display for StrategySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ClosedForm => f.write_str("closed-form"),
            Self::Euler => f.write_str("euler"),
            Self::MatchCompetitor => f.write_str("match-competitor"),
            Self::Constant { ask, bid } => write!(f, "constant:{ask:?}:{bid:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub paths: usize,
    pub steps: usize,
    pub seed: u64,
    pub strategy: StrategySpec,
    pub confidence: f64,
    pub euler_steps: usize,
    pub n_time: usize,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            paths: 10_000,
            steps: 1_000,
            seed: 7,
            strategy: StrategySpec::ClosedForm,
            confidence: 0.99,
            euler_steps: DEFAULT_EULER_STEPS,
            n_time: 1_000,
            out_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub params: ModelParams<f64>,
    pub run: RunSettings,
}

impl RunConfig {
    pub fn reference() -> Self {
        Self {
            params: ModelParams::reference(),
            run: RunSettings::default(),
        }
    }

    /// Canonical text of every semantic field; comments and layout do not enter.
    fn canonical(&self) -> String {
        let p = &self.params;
        let r = &self.run;
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            s.push_str(k);
            s.push('=');
            s.push_str(&v);
            s.push('\n');
        };
        for (k, v) in model_fields(p) {
            put(k, v);
        }
        put("paths", r.paths.to_string());
        put("steps", r.steps.to_string());
        put("seed", r.seed.to_string());
        put("strategy", r.strategy.to_string());
        put("confidence", format!("{:?}", r.confidence));
        put("euler_steps", r.euler_steps.to_string());
        put("n_time", r.n_time.to_string());
        put(
            "out_dir",
            r.out_dir
                .as_ref()
                .map(|d| d.display().to_string())
                .unwrap_or_default(),
        );
        s
    }

    /// First 16 hex digits of the SHA-256 of the canonical form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Serialize in the same flat format [`parse_config_str`] reads.
    pub fn to_config_string(&self) -> String {
        let mut out = String::from("# model\n");
        for (k, v) in model_fields(&self.params) {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out.push_str("\n# run\n");
        let r = &self.run;
        out.push_str(&format!(
            "paths = {}\nsteps = {}\nseed = {}\n",
            r.paths, r.steps, r.seed
        ));
        out.push_str(&format!(
            "strategy = {}\nconfidence = {:?}\n",
            r.strategy, r.confidence
        ));
        out.push_str(&format!(
            "euler_steps = {}\nn_time = {}\n",
            r.euler_steps, r.n_time
        ));
        if let Some(d) = &r.out_dir {
            out.push_str(&format!("out_dir = {}\n", d.display()));
        }
        out
    }
}

fn model_fields(p: &ModelParams<f64>) -> Vec<(&'static str, String)> {
    let f = |x: f64| format!("{x:?}");
    vec![
        ("sigma", f(p.sigma)),
        ("lambda_a", f(p.lambda_a)),
        ("lambda_b", f(p.lambda_b)),
        ("kappa", f(p.kappa)),
        ("beta", f(p.beta)),
        ("a_tilde", f(p.a_tilde)),
        ("b_tilde", f(p.b_tilde)),
        ("gamma", f(p.gamma)),
        ("phi", f(p.phi)),
        ("sigma_z", f(p.sigma_z)),
        ("q_min", p.q_min.to_string()),
        ("q_max", p.q_max.to_string()),
        ("horizon", f(p.horizon)),
        ("s0", f(p.s0)),
        ("tick", f(p.tick)),
    ]
}

struct Fields {
    map: BTreeMap<String, (usize, String)>,
    problems: Vec<String>,
}

impl Fields {
    fn take<T: FromStr>(&mut self, key: &str, required: bool) -> Option<T>
    where
        T::Err: fmt::Display,
    {
        match self.map.remove(key) {
            None => {
                if required {
                    self.problems.push(format!("missing key `{key}`"));
                }
                None
            }
            Some((line, raw)) => match raw.parse::<T>() {
                Ok(v) => Some(v),
                Err(e) => {
                    self.problems
                        .push(format!("line {line}: `{key}` = `{raw}` is not valid: {e}"));
                    None
                }
            },
        }
    }
}

/// Parse configuration text.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let mut fields = Fields {
        map: BTreeMap::new(),
        problems: Vec::new(),
    };
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            fields.problems.push(format!(
                "line {line_no}: expected `key = value`, got `{line}`"
            ));
            continue;
        };
        let (k, v) = (k.trim(), v.trim());
        if !MODEL_KEYS.contains(&k) && !RUN_KEYS.contains(&k) {
            fields
                .problems
                .push(format!("line {line_no}: unknown key `{k}`"));
            continue;
        }
        if let Some((first, _)) = fields.map.get(k) {
            fields.problems.push(format!(
                "line {line_no}: duplicate key `{k}` (first set on line {first})"
            ));
            continue;
        }
        fields.map.insert(k.to_string(), (line_no, v.to_string()));
    }

    let mut real = |k: &str| fields.take::<f64>(k, true);
    let sigma = real("sigma");
    let lambda_a = real("lambda_a");
    let lambda_b = real("lambda_b");
    let kappa = real("kappa");
    let beta = real("beta");
    let a_tilde = real("a_tilde");
    let b_tilde = real("b_tilde");
    let gamma = real("gamma");
    let phi = real("phi");
    let sigma_z = real("sigma_z");
    let q_min = fields.take::<i64>("q_min", true);
    let q_max = fields.take::<i64>("q_max", true);
    let horizon = fields.take::<f64>("horizon", true);
    let s0 = fields.take::<f64>("s0", true);
    let tick = fields.take::<f64>("tick", true);

    let defaults = RunSettings::default();
    let run = RunSettings {
        paths: fields.take("paths", false).unwrap_or(defaults.paths),
        steps: fields.take("steps", false).unwrap_or(defaults.steps),
        seed: fields.take("seed", false).unwrap_or(defaults.seed),
        strategy: fields.take("strategy", false).unwrap_or(defaults.strategy),
        confidence: fields
            .take("confidence", false)
            .unwrap_or(defaults.confidence),
        euler_steps: fields
            .take("euler_steps", false)
            .unwrap_or(defaults.euler_steps),
        n_time: fields.take("n_time", false).unwrap_or(defaults.n_time),
        out_dir: fields
            .take::<PathBuf>("out_dir", false)
            .or(defaults.out_dir),
    };
    let mut problems = fields.problems;

    if run.paths == 0 {
        problems.push("`paths` must be at least 1".into());
    }
    if run.steps == 0 {
        problems.push("`steps` must be at least 1".into());
    }
    if run.euler_steps == 0 {
        problems.push("`euler_steps` must be at least 1".into());
    }
    if run.n_time == 0 {
        problems.push("`n_time` must be at least 1".into());
    }
    if !(run.confidence > 0.0 && run.confidence < 1.0) {
        problems.push(format!(
            "`confidence` must lie in (0, 1), got {}",
            run.confidence
        ));
    }

    let params = match (
        sigma, lambda_a, lambda_b, kappa, beta, a_tilde, b_tilde, gamma, phi, sigma_z, q_min,
        q_max, horizon, s0, tick,
    ) {
        (
            Some(sigma),
            Some(lambda_a),
            Some(lambda_b),
            Some(kappa),
            Some(beta),
            Some(a_tilde),
            Some(b_tilde),
            Some(gamma),
            Some(phi),
            Some(sigma_z),
            Some(q_min),
            Some(q_max),
            Some(horizon),
            Some(s0),
            Some(tick),
        ) => {
            let p = ModelParams {
                sigma,
                lambda_a,
                lambda_b,
                kappa,
                beta,
                a_tilde,
                b_tilde,
                gamma,
                phi,
                sigma_z,
                q_min,
                q_max,
                horizon,
                s0,
                tick,
            };
            for (key, reason) in p.violations() {
                problems.push(format!("`{key}` {reason}"));
            }
            Some(p)
        }
        _ => None,
    };

    match params {
        Some(params) if problems.is_empty() => Ok(RunConfig { params, run }),
        _ => Err(Error::Config(problems)),
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(vec![format!("cannot read {}: {e}", path.display())]))?;
    parse_config_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const REFERENCE: &str = "\
# reference market
s0 = 100
sigma = 1
horizon = 1
lambda_a = 10
lambda_b = 10
q_min = -10
q_max = 10
a_tilde = 0.1   # tick absorbed
b_tilde = 0.1
beta = 0.05
kappa = 2
tick = 0.01
phi = 0.1
gamma = 0.03
sigma_z = 1.1
";

    #[test]
    fn parses_reference_file() {
        let cfg = parse_config_str(REFERENCE).unwrap();
        assert_eq!(cfg.params, ModelParams::reference());
        assert_eq!(cfg.run, RunSettings::default());
    }

    #[test]
    fn empty_file_lists_every_required_key() {
        match parse_config_str("") {
            Err(Error::Config(problems)) => {
                assert_eq!(problems.len(), MODEL_KEYS.len());
                for key in MODEL_KEYS {
                    assert!(
                        problems.iter().any(|p| p.contains(&format!("`{key}`"))),
                        "{key} not reported"
                    );
                }
            }
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn negative_kappa_is_named() {
        let text = REFERENCE.replace("kappa = 2", "kappa = -1");
        match parse_config_str(&text) {
            Err(Error::Config(p)) => {
                assert_eq!(p.len(), 1);
                assert!(p[0].contains("kappa"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn all_problems_are_collected() {
        let text = format!("{REFERENCE}\nbogus = 3\nsigma = 2\npaths = many\nstrategy = sideways\nconfidence = 1.5\n")
            .replace("beta = 0.05", "beta = abc");
        let Err(Error::Config(p)) = parse_config_str(&text) else {
            panic!()
        };
        let joined = p.join("\n");
        for needle in [
            "unknown key `bogus`",
            "duplicate key `sigma`",
            "`paths`",
            "`beta`",
            "`strategy`",
            "`confidence`",
        ] {
            assert!(joined.contains(needle), "missing `{needle}` in\n{joined}");
        }
    }

    #[test]
    fn malformed_line() {
        let Err(Error::Config(p)) = parse_config_str(&format!("{REFERENCE}\njust words\n")) else {
            panic!()
        };
        assert!(p[0].contains("expected `key = value`"));
    }

    #[test]
    fn run_block_and_strategy_specs() {
        let text = format!("{REFERENCE}paths = 20\nsteps = 50\nseed = 99\nstrategy = constant:0.1:0.25\nout_dir = /tmp/x\n");
        let cfg = parse_config_str(&text).unwrap();
        assert_eq!(cfg.run.paths, 20);
        assert_eq!(cfg.run.seed, 99);
        assert_eq!(
            cfg.run.strategy,
            StrategySpec::Constant {
                ask: 0.1,
                bid: 0.25
            }
        );
        assert_eq!(cfg.run.out_dir, Some(PathBuf::from("/tmp/x")));
        assert_eq!("euler".parse(), Ok(StrategySpec::Euler));
        assert_eq!(
            "match-competitor".parse(),
            Ok(StrategySpec::MatchCompetitor)
        );
        assert!("constant:0.1".parse::<StrategySpec>().is_err());
    }

    #[test]
    fn round_trips_through_text() {
        let mut cfg = RunConfig::reference();
        cfg.run.strategy = StrategySpec::Constant {
            ask: 0.15,
            bid: 0.2,
        };
        cfg.run.out_dir = Some("out".into());
        let back = parse_config_str(&cfg.to_config_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn hash_tracks_semantics_not_layout() {
        let a = parse_config_str(REFERENCE).unwrap();
        let reordered: String = REFERENCE
            .lines()
            .rev()
            .map(|l| format!("{l}   # c\n"))
            .collect();
        let b = parse_config_str(&reordered).unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = parse_config_str(&REFERENCE.replace("phi = 0.1", "phi = 0.1000001")).unwrap();
        assert_ne!(a.hash(), c.hash());
        let mut d = a.clone();
        d.run.seed += 1;
        assert_ne!(a.hash(), d.hash());
        assert_eq!(a.hash().len(), 16);
    }
}
