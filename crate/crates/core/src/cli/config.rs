//! `--key value` flags layered over an optional `key = value` file.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{DeconvError, Result};
use crate::experiments::Dims;
use crate::solver::{RhoMode, SolveOptions, StepSize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Synth,
    Solve,
    Phase,
    Noise,
    Oversample,
    RipCheck,
    Deblur,
    SelfTest,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::Synth,
        Command::Solve,
        Command::Phase,
        Command::Noise,
        Command::Oversample,
        Command::RipCheck,
        Command::Deblur,
        Command::SelfTest,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Solve => "solve",
            Command::Phase => "phase",
            Command::Noise => "noise",
            Command::Oversample => "oversample",
            Command::RipCheck => "ripcheck",
            Command::Deblur => "deblur",
            Command::SelfTest => "selftest",
        }
    }

    /// Keys accepted besides `config`.
    fn keys(&self) -> &'static [&'static str] {
        match self {
            Command::Synth => &["L", "Q", "M", "K", "N", "seed", "out", "snr", "sigma", "d0"],
            Command::Solve => &[
                "L", "Q", "M", "K", "N", "seed", "out", "snr", "sigma", "d0", "eta", "rho", "max_iters", "grad_tol",
                "loss_tol", "regularizer", "oracle_coherence",
            ],
            Command::Phase => &[
                "L", "Q", "M", "K", "N", "seed", "out", "x_axis", "x_values", "y_axis", "y_values", "trials",
                "threshold", "eta", "rho", "max_iters", "grad_tol", "loss_tol", "regularizer",
            ],
            Command::Noise => &[
                "L", "Q", "M", "K", "N", "seed", "out", "snr_values", "trials", "eta", "rho", "max_iters", "grad_tol",
                "regularizer",
            ],
            Command::Oversample => &[
                "M", "K", "seed", "out", "ratios", "trials", "eta", "rho", "max_iters", "grad_tol", "loss_tol",
                "regularizer",
            ],
            Command::RipCheck => &["L", "Q", "M", "K", "N", "seed", "out", "samples"],
            Command::Deblur => &[
                "images", "N", "size", "blur_size", "blur_sigma", "K", "seed", "out", "full", "eta", "rho", "max_iters",
                "grad_tol", "loss_tol", "regularizer",
            ],
            Command::SelfTest => &["seed"],
        }
    }

    fn uses_dims(&self) -> bool {
        matches!(
            self,
            Command::Synth | Command::Solve | Command::Phase | Command::Noise | Command::RipCheck
        )
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = DeconvError;
    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| DeconvError::Config(format!("unknown command '{s}'")))
    }
}

/// A validated invocation. Command-specific settings stay in `params` and
/// are read through the typed getters.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub dims: Option<Dims>,
    pub solver: SolveOptions,
    pub seed: u64,
    pub output: Option<PathBuf>,
    params: BTreeMap<String, String>,
}

fn config_err(msg: impl Into<String>) -> DeconvError {
    DeconvError::Config(msg.into())
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| config_err(format!("line {}: expected 'key = value', got '{raw}'", i + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(config_err(format!("line {}: empty key", i + 1)));
        }
        out.insert(k.to_string(), v.to_string());
    }
    Ok(out)
}

fn cli_spec() -> clap::Command {
    let sub = |c: Command| {
        clap::Command::new(c.name())
            .arg(clap::Arg::new("config").long("config").value_name("FILE"))
            .args(c.keys().iter().map(|&k| {
                clap::Arg::new(k)
                    .long(k)
                    .num_args(0..=1)
                    .default_missing_value("true")
                    .allow_hyphen_values(true)
            }))
    };
    clap::Command::new("moddeconv")
        .subcommand_required(true)
        .disable_version_flag(true)
        .subcommands(Command::ALL.map(sub))
}

/// Help text when `argv` asks for it (`--help` anywhere).
pub fn help_request(argv: &[String]) -> Option<String> {
    let args = std::iter::once("moddeconv".to_string()).chain(argv.iter().cloned());
    match cli_spec().try_get_matches_from(args) {
        Err(e) if e.kind() == clap::error::ErrorKind::DisplayHelp => Some(e.render().to_string()),
        _ => None,
    }
}

/// Parses `argv` (without the program name): `[command, --key, value, ...]`.
/// A flag with no value means `true`. `file_text` overrides reading the
/// `--config` file from disk; flags win over file entries.
pub fn parse_run_config(argv: &[String], file_text: Option<&str>) -> Result<RunConfig> {
    let args = std::iter::once("moddeconv".to_string()).chain(argv.iter().cloned());
    let matches = cli_spec()
        .try_get_matches_from(args)
        .map_err(|e| config_err(e.render().to_string().trim_end().trim_start_matches("error: ").to_string()))?;
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let command: Command = name.parse()?;
    let mut params = match (sub.get_one::<String>("config"), file_text) {
        (_, Some(text)) => parse_config_text(text)?,
        (Some(path), None) => parse_config_text(&std::fs::read_to_string(path)?)?,
        (None, None) => BTreeMap::new(),
    };
    for &k in command.keys() {
        if let Some(v) = sub.get_one::<String>(k) {
            params.insert(k.to_string(), v.clone());
        }
    }
    let allowed = command.keys();
    if let Some(bad) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(config_err(format!("unknown key '{bad}' for command {command}")));
    }
    let mut cfg = RunConfig {
        command,
        dims: None,
        solver: SolveOptions::default(),
        seed: 0,
        output: None,
        params,
    };
    cfg.seed = cfg.get_or("seed", 0u64)?;
    cfg.output = cfg.params.get("out").map(PathBuf::from);
    cfg.solver = cfg.solver_options(SolveOptions::default())?;
    if command.uses_dims() {
        let l: usize = cfg.require("L")?;
        let d = Dims {
            l,
            q: cfg.get_or("Q", l)?,
            m: cfg.require("M")?,
            k: cfg.require("K")?,
            n: cfg.get_or("N", 1)?,
        };
        d.validate().map_err(|e| config_err(e.to_string()))?;
        cfg.dims = Some(d);
    }
    Ok(cfg)
}

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.trim()
        .parse()
        .map_err(|_| config_err(format!("malformed value for {key}: '{raw}'")))
}

fn parse_bool(key: &str, raw: &str) -> Result<bool> {
    match raw.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(config_err(format!("malformed boolean for {key}: '{raw}'"))),
    }
}

impl RunConfig {
    pub fn has(&self, key: &str) -> bool {
        self.params.contains_key(key)
    }

    pub fn params_str(&self, key: &str) -> Option<&str> {
        self.params.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.params.get(key).map(|v| parse_value(key, v)).transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?
            .ok_or_else(|| config_err(format!("missing required key '{key}' for {}", self.command)))
    }

    pub fn flag(&self, key: &str, default: bool) -> Result<bool> {
        self.params.get(key).map_or(Ok(default), |v| parse_bool(key, v))
    }

    /// Comma-separated list or `start:stop:step` range (inclusive).
    pub fn list<T>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T: FromStr + Copy + PartialOrd + std::ops::Add<Output = T> + Default,
    {
        let Some(raw) = self.params.get(key) else {
            return Ok(None);
        };
        let parts: Vec<&str> = raw.split(':').collect();
        if parts.len() == 3 {
            let (start, stop, step): (T, T, T) =
                (parse_value(key, parts[0])?, parse_value(key, parts[1])?, parse_value(key, parts[2])?);
            if !(step > T::default()) {
                return Err(config_err(format!("range step for {key} must be positive")));
            }
            let mut out = vec![];
            let mut v = start;
            while v <= stop {
                out.push(v);
                v = v + step;
            }
            if out.is_empty() {
                return Err(config_err(format!("empty range for {key}")));
            }
            return Ok(Some(out));
        }
        let vals = raw
            .split(',')
            .map(|s| parse_value(key, s))
            .collect::<Result<Vec<T>>>()?;
        Ok(Some(vals))
    }

    /// Solver settings from `eta`, `rho`, `max_iters`, `grad_tol`,
    /// `loss_tol` and `regularizer`, over `base`.
    pub fn solver_options(&self, base: SolveOptions) -> Result<SolveOptions> {
        let mut o = base;
        if let Some(raw) = self.params.get("eta") {
            o.eta = if raw.trim() == "auto" {
                StepSize::Auto
            } else {
                let e: f64 = parse_value("eta", raw)?;
                if !(e > 0.0) {
                    return Err(config_err("eta must be positive"));
                }
                StepSize::Fixed(e)
            };
        }
        if let Some(raw) = self.params.get("rho") {
            o.rho = if raw.trim() == "auto" {
                RhoMode::Auto
            } else {
                RhoMode::Explicit(parse_value("rho", raw)?)
            };
        }
        o.max_iters = self.get_or("max_iters", o.max_iters)?;
        o.grad_tol = self.get_or("grad_tol", o.grad_tol)?;
        o.loss_tol = self.get_or("loss_tol", o.loss_tol)?;
        o.use_regularizer = self.flag("regularizer", o.use_regularizer)?;
        o.seed = self.seed;
        if o.max_iters == 0 {
            return Err(config_err("max_iters must be at least 1"));
        }
        Ok(o)
    }
}
