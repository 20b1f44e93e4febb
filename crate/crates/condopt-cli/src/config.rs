//! Run configuration: a flat key = value file plus command-line overrides
//! (`--set key=value`), with overrides taking precedence over the file and
//! the file over built-in defaults.
//!
//! Column keys take the form `predictor.<name>.type`, `predictor.<name>.lo`,
//! `predictor.<name>.hi` (same for `response.`); `predictor.*.type` style
//! wildcards set a default for all columns of that role. Continuous columns
//! without bounds fall back to the observed range, inflated by a relative
//! 1e-9 margin per side.

use std::collections::BTreeMap;
use std::path::Path;

use condopt::{CondOptPrior, Dim, OptPrior, SampleSpace, TestDirection};

use crate::errors::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColKind,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub predictors: Vec<ColumnSpec>,
    pub responses: Vec<ColumnSpec>,
    pub rho: f64,
    pub rho_y: f64,
    pub alpha: f64,
    pub max_depth_x: u32,
    pub max_depth_y: u32,
    pub min_points: u32,
    pub seed: u64,
    pub permutations: usize,
    pub threads: usize,
    pub direction: TestDirection,
}

impl RunConfig {
    /// Parse the file, then apply `key=value` overrides on top.
    pub fn load(path: &Path, overrides: &[String]) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(&format!("reading config {}", path.display()), e))?;
        let mut map = parse_pairs(&text)?;
        for ov in overrides {
            let (k, v) = ov
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("override {ov:?} is not KEY=VALUE")))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        Self::from_map(map)
    }

    fn from_map(map: BTreeMap<String, String>) -> CliResult<Self> {
        let predictors = column_specs(&map, "predictor", "predictors")?;
        let responses = column_specs(&map, "response", "responses")?;
        if predictors.is_empty() {
            return Err(CliError::Config("config must list at least one predictor column".into()));
        }
        if responses.is_empty() {
            return Err(CliError::Config("config must list at least one response column".into()));
        }
        for p in &predictors {
            if responses.iter().any(|r| r.name == p.name) {
                return Err(CliError::Config(format!(
                    "column {:?} appears as both predictor and response",
                    p.name
                )));
            }
        }

        let cfg = RunConfig {
            predictors,
            responses,
            rho: num(&map, "rho", 0.5)?,
            rho_y: num(&map, "rho_y", 0.5)?,
            alpha: num(&map, "alpha", 0.5)?,
            max_depth_x: num(&map, "max_depth_x", 12u32)?,
            max_depth_y: num(&map, "max_depth_y", 12u32)?,
            min_points: num(&map, "min_points", 0u32)?,
            seed: num(&map, "seed", 42u64)?,
            permutations: num(&map, "permutations", 200usize)?,
            threads: num(&map, "threads", 0usize)?,
            direction: direction(map.get("direction").map(String::as_str).unwrap_or("y-given-x"))?,
        };
        cfg.prior().validate().map_err(CliError::from)?;
        Ok(cfg)
    }

    pub fn prior(&self) -> CondOptPrior {
        CondOptPrior {
            rho: self.rho,
            local: OptPrior {
                rho: self.rho_y,
                alpha: [self.alpha, self.alpha],
                max_depth: self.max_depth_y,
            },
            max_depth_x: self.max_depth_x,
            min_points: self.min_points,
        }
    }

    /// Build a sample space from column specs, taking bounds from the config
    /// where given and from the observed per-column ranges otherwise.
    pub fn space(cols: &[ColumnSpec], ranges: Option<&[(f64, f64)]>) -> CliResult<SampleSpace> {
        let dims = cols
            .iter()
            .enumerate()
            .map(|(i, c)| match c.kind {
                ColKind::Binary => Ok(Dim::Binary),
                ColKind::Continuous => match (c.lo, c.hi) {
                    (Some(lo), Some(hi)) => Ok(Dim::Continuous { lo, hi }),
                    (None, None) => {
                        let (lo, hi) = ranges
                            .and_then(|r| r.get(i).copied())
                            .ok_or_else(|| {
                                CliError::Config(format!(
                                    "column {:?} has no bounds and the data is empty",
                                    c.name
                                ))
                            })?;
                        let span = (hi - lo).abs().max(lo.abs()).max(hi.abs()).max(1.0);
                        let pad = span * 1e-9;
                        Ok(Dim::Continuous { lo: lo - pad, hi: hi + pad })
                    }
                    _ => Err(CliError::Config(format!(
                        "column {:?} must set both lo and hi or neither",
                        c.name
                    ))),
                },
            })
            .collect::<CliResult<Vec<_>>>()?;
        SampleSpace::new(dims).map_err(CliError::from)
    }
}

fn parse_pairs(text: &str) -> CliResult<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CliError::Config(format!("line {}: expected key = value, got {raw:?}", lineno + 1))
        })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn column_specs(
    map: &BTreeMap<String, String>,
    role: &str,
    list_key: &str,
) -> CliResult<Vec<ColumnSpec>> {
    let Some(list) = map.get(list_key) else {
        return Err(CliError::Config(format!("config must set {list_key} = <comma-separated names>")));
    };
    list.split(',')
        .map(|name| {
            let name = name.trim();
            if name.is_empty() {
                return Err(CliError::Config(format!("{list_key} has an empty column name")));
            }
            let get = |field: &str| {
                map.get(&format!("{role}.{name}.{field}"))
                    .or_else(|| map.get(&format!("{role}.*.{field}")))
            };
            let kind = match get("type").map(String::as_str) {
                None | Some("continuous") => ColKind::Continuous,
                Some("binary") => ColKind::Binary,
                Some(other) => {
                    return Err(CliError::Config(format!(
                        "column {name:?}: unknown type {other:?} (continuous or binary)"
                    )))
                }
            };
            let bound = |field: &str| -> CliResult<Option<f64>> {
                get(field)
                    .map(|v| {
                        v.parse::<f64>().map_err(|_| {
                            CliError::Config(format!("column {name:?}: {field} = {v:?} is not a number"))
                        })
                    })
                    .transpose()
            };
            let (lo, hi) = (bound("lo")?, bound("hi")?);
            if kind == ColKind::Binary && (lo.is_some() || hi.is_some()) {
                return Err(CliError::Config(format!("binary column {name:?} cannot take bounds")));
            }
            if let (Some(lo), Some(hi)) = (lo, hi) {
                if !(lo < hi) {
                    return Err(CliError::Config(format!(
                        "column {name:?}: lo {lo} must be below hi {hi}"
                    )));
                }
            }
            Ok(ColumnSpec { name: name.to_string(), kind, lo, hi })
        })
        .collect()
}

fn num<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str, default: T) -> CliResult<T> {
    match map.get(key) {
        None => Ok(default),
        Some(v) => v
            .parse::<T>()
            .map_err(|_| CliError::Config(format!("{key} = {v:?} is not a valid value"))),
    }
}

pub fn direction(s: &str) -> CliResult<TestDirection> {
    match s {
        "y-given-x" => Ok(TestDirection::YGivenX),
        "x-given-y" => Ok(TestDirection::XGivenY),
        "min-both" => Ok(TestDirection::MinBoth),
        other => Err(CliError::Config(format!(
            "direction {other:?} must be y-given-x, x-given-y, or min-both"
        ))),
    }
}
