//! Flat `key = value` run configuration. Flags are converted to the same
//! structure and laid over the file, so a flag always wins.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use psforge_core::loops::Direction;
use psforge_core::GridSpec;

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    /// `x_min x_max y_min y_max`.
    pub domain: Option<[f64; 4]>,
    pub hx: Option<f64>,
    pub hy: Option<f64>,
    pub soliton: Option<f64>,
    pub constant: Option<f64>,
    pub x_data: Option<PathBuf>,
    pub y_data: Option<PathBuf>,
    pub substeps: Option<usize>,
    pub input: Option<PathBuf>,
    pub phi_x: Option<PathBuf>,
    pub lambdas: Option<Vec<f64>>,
    pub out: Option<PathBuf>,
    pub su2: Option<bool>,
    pub loop_file: Option<PathBuf>,
    pub direction: Option<Direction>,
    pub truncation: Option<usize>,
    pub report: Option<PathBuf>,
    pub only: Option<Vec<String>>,
    pub tolerances: BTreeMap<String, f64>,
    pub mask_threshold: Option<f64>,
    pub split_samples: Option<usize>,
}

pub fn existing(p: &Path) -> Result<&Path, CliError> {
    if p.is_file() {
        Ok(p)
    } else {
        Err(usage(format!("input file {} does not exist", p.display())))
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn real(key: &str, v: &str) -> Result<f64, CliError> {
    v.trim().parse::<f64>().map_err(|_| usage(format!("{key}: expected a number, got {v:?}")))
}

fn count(key: &str, v: &str) -> Result<usize, CliError> {
    v.trim().parse::<usize>().map_err(|_| usage(format!("{key}: expected a non-negative integer, got {v:?}")))
}

fn flag(key: &str, v: &str) -> Result<bool, CliError> {
    match v.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(usage(format!("{key}: expected true or false, got {v:?}"))),
    }
}

fn list(v: &str) -> impl Iterator<Item = &str> {
    v.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty())
}

pub fn parse_direction(v: &str) -> Result<Direction, CliError> {
    match v.trim().to_ascii_lowercase().replace('_', "-").as_str() {
        "minus-first" => Ok(Direction::MinusFirst),
        "plus-first" => Ok(Direction::PlusFirst),
        _ => Err(usage(format!("direction: expected minus-first or plus-first, got {v:?}"))),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut c = RunConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) =
                line.split_once('=').ok_or_else(|| usage(format!("config line {}: expected key = value", n + 1)))?;
            c.set(&key.trim().to_ascii_lowercase().replace('-', "_"), value.trim())?;
        }
        Ok(c)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), CliError> {
        let path = || Some(PathBuf::from(v));
        match key {
            "domain" => {
                let vals = list(v).map(|t| real(key, t)).collect::<Result<Vec<_>, _>>()?;
                let arr: [f64; 4] =
                    vals.try_into().map_err(|_| usage("domain: expected four numbers x_min x_max y_min y_max"))?;
                self.domain = Some(arr);
            }
            "h" => {
                let h = real(key, v)?;
                self.hx = Some(h);
                self.hy = Some(h);
            }
            "hx" => self.hx = Some(real(key, v)?),
            "hy" => self.hy = Some(real(key, v)?),
            "soliton" => self.soliton = Some(real(key, v)?),
            "constant" => self.constant = Some(real(key, v)?),
            "x_data" => self.x_data = path(),
            "y_data" => self.y_data = path(),
            "substeps" => self.substeps = Some(count(key, v)?),
            "input" => self.input = path(),
            "phi_x" => self.phi_x = path(),
            "lambda" | "lambdas" => self.lambdas = Some(list(v).map(|t| real(key, t)).collect::<Result<_, _>>()?),
            "out" => self.out = path(),
            "su2" => self.su2 = Some(flag(key, v)?),
            "loop" => self.loop_file = path(),
            "direction" => self.direction = Some(parse_direction(v)?),
            "truncation" => self.truncation = Some(count(key, v)?),
            "report" => self.report = path(),
            "only" => self.only = Some(list(v).map(String::from).collect()),
            "mask_threshold" => self.mask_threshold = Some(real(key, v)?),
            "split_samples" => self.split_samples = Some(count(key, v)?),
            _ => match key.strip_prefix("tol.") {
                Some(check) => {
                    self.tolerances.insert(check.to_string(), real(key, v)?);
                }
                None => return Err(usage(format!("unknown config key {key:?}"))),
            },
        }
        Ok(())
    }

    /// `tol` entries written as `check=value`.
    pub fn set_tolerance(&mut self, spec: &str) -> Result<(), CliError> {
        let (name, value) = spec.split_once('=').ok_or_else(|| usage(format!("--tol expects check=value, got {spec:?}")))?;
        self.tolerances.insert(name.trim().to_string(), real("tol", value)?);
        Ok(())
    }

    /// Fields set in `top` replace those in `self`.
    pub fn overlay(self, top: RunConfig) -> RunConfig {
        let mut tolerances = self.tolerances;
        tolerances.extend(top.tolerances);
        RunConfig {
            domain: top.domain.or(self.domain),
            hx: top.hx.or(self.hx),
            hy: top.hy.or(self.hy),
            soliton: top.soliton.or(self.soliton),
            constant: top.constant.or(self.constant),
            x_data: top.x_data.or(self.x_data),
            y_data: top.y_data.or(self.y_data),
            substeps: top.substeps.or(self.substeps),
            input: top.input.or(self.input),
            phi_x: top.phi_x.or(self.phi_x),
            lambdas: top.lambdas.or(self.lambdas),
            out: top.out.or(self.out),
            su2: top.su2.or(self.su2),
            loop_file: top.loop_file.or(self.loop_file),
            direction: top.direction.or(self.direction),
            truncation: top.truncation.or(self.truncation),
            report: top.report.or(self.report),
            only: top.only.or(self.only),
            tolerances,
            mask_threshold: top.mask_threshold.or(self.mask_threshold),
            split_samples: top.split_samples.or(self.split_samples),
        }
    }

    pub fn grid(&self) -> Result<GridSpec, CliError> {
        let [x0, x1, y0, y1] = self.domain.ok_or_else(|| usage("a domain is required (--domain X0 X1 Y0 Y1)"))?;
        let hx = self.hx.ok_or_else(|| usage("a grid step is required (--h H)"))?;
        let hy = self.hy.unwrap_or(hx);
        if !(hx > 0.0 && hy > 0.0) {
            return Err(usage(format!("grid steps must be positive, got {hx} and {hy}")));
        }
        if !(x0 < x1 && y0 < y1) {
            return Err(usage(format!("domain bounds must be increasing, got [{x0}, {x1}] x [{y0}, {y1}]")));
        }
        Ok(GridSpec::from_domain(x0, x1, y0, y1, hx, hy)?)
    }

    pub fn lambdas_or(&self, default: &[f64]) -> Result<Vec<f64>, CliError> {
        let l = self.lambdas.clone().unwrap_or_else(|| default.to_vec());
        if l.is_empty() {
            return Err(usage("the lambda list is empty"));
        }
        if let Some(bad) = l.iter().find(|v| **v <= 0.0 || !v.is_finite()) {
            return Err(usage(format!("lambda values must be positive, got {bad}")));
        }
        Ok(l)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn require_input(&self) -> Result<&Path, CliError> {
        let p = self.input.as_deref().ok_or_else(|| usage("an angle-field file is required (--input FILE)"))?;
        existing(p)
    }

    /// Every input path named by the config must exist.
    pub fn check_inputs(&self) -> Result<(), CliError> {
        for p in [&self.input, &self.phi_x, &self.x_data, &self.y_data, &self.loop_file].into_iter().flatten() {
            existing(p)?;
        }
        Ok(())
    }
}
