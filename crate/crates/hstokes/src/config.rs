//! Study configuration: TOML parsing with defaults and validation.
//!
//! Every key is optional; the defaults describe the standard laminate
//! sweep. Validation failures name the offending key, so a config error
//! in a long study points at the line to fix.

use crate::coeff::Family;
use crate::domain::Recipe;
use crate::error::{Error, Result};
use crate::twoscale::ExtensionMode;
use std::path::PathBuf;

#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub family: Family,
    /// Declared ellipticity constant; `None` selects the sharpest.
    pub mu: Option<f64>,
    /// Cell resolution for correctors, a power of two >= 32.
    pub cell_n: usize,
    pub cell_tol: f64,
    /// Sweep values, in (0, 1/2], strictly decreasing.
    pub epsilons: Vec<f64>,
    /// Domain grid rule: M is the next power of two >= grid_factor / eps.
    pub grid_factor: usize,
    pub domain_tol: f64,
    pub recipe: Recipe,
    pub extension: ExtensionMode,
    pub out_dir: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    /// Worker threads for the per-epsilon fan-out; 0 lets the pool decide.
    pub jobs: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            family: Family::Laminate {
                offset: 2.0,
                amplitude: 1.0,
            },
            mu: None,
            cell_n: 128,
            cell_tol: 1e-9,
            epsilons: vec![0.25, 0.125, 0.0625, 0.03125],
            grid_factor: 8,
            domain_tol: 1e-9,
            recipe: Recipe::Vortex,
            extension: ExtensionMode::Analytic,
            out_dir: None,
            cache_dir: None,
            jobs: 0,
        }
    }
}

impl StudyConfig {
    /// Domain resolution for one sweep value: the next power of two at
    /// or above `grid_factor / eps`, floored at 32.
    pub fn domain_m(&self, eps: f64) -> usize {
        let cells = (self.grid_factor as f64 / eps).ceil() as usize;
        cells.next_power_of_two().max(32)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.cell_n.is_power_of_two() || self.cell_n < 32 {
            return Err(Error::config(
                "cell.n",
                format!("must be a power of two >= 32, got {}", self.cell_n),
            ));
        }
        for (key, tol) in [("cell.tol", self.cell_tol), ("sweep.tol", self.domain_tol)] {
            if !(tol > 0.0 && tol <= 1e-4) {
                return Err(Error::config(
                    key,
                    format!("tolerance must lie in (0, 1e-4], got {tol}"),
                ));
            }
        }
        if self.epsilons.is_empty() {
            return Err(Error::config("sweep.epsilons", "must not be empty"));
        }
        for &eps in &self.epsilons {
            if !(eps > 0.0 && eps <= 0.5) {
                return Err(Error::config(
                    "sweep.epsilons",
                    format!("values must lie in (0, 1/2], got {eps}"),
                ));
            }
        }
        if self.epsilons.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::config(
                "sweep.epsilons",
                "values must be strictly decreasing",
            ));
        }
        if self.grid_factor < 4 {
            return Err(Error::config(
                "sweep.grid_factor",
                format!("must be at least 4, got {}", self.grid_factor),
            ));
        }
        Ok(())
    }
}

pub fn parse_config(path: &std::path::Path) -> Result<StudyConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<StudyConfig> {
    let table: toml::Table = text
        .parse()
        .map_err(|e| Error::config("config", format!("not valid TOML: {e}")))?;
    let mut cfg = StudyConfig::default();

    if let Some(c) = get_table(&table, "coefficient")? {
        let offset = get_f64(c, "coefficient", "offset")?.unwrap_or(2.0);
        let amplitude = get_f64(c, "coefficient", "amplitude")?.unwrap_or(1.0);
        let name = get_str(c, "coefficient", "family")?.unwrap_or_else(|| "laminate".to_string());
        cfg.family = match name.as_str() {
            "constant" => Family::Constant,
            "laminate" => Family::Laminate { offset, amplitude },
            "trig2d" => Family::Trig2d { offset, amplitude },
            "nonsymmetric" => Family::Nonsymmetric { offset, amplitude },
            other => {
                return Err(Error::config(
                    "coefficient.family",
                    format!("unknown family {other:?}"),
                ))
            }
        };
        cfg.mu = get_f64(c, "coefficient", "mu")?;
    }

    if let Some(c) = get_table(&table, "cell")? {
        if let Some(n) = get_int(c, "cell", "n")? {
            cfg.cell_n = n;
        }
        if let Some(t) = get_f64(c, "cell", "tol")? {
            cfg.cell_tol = t;
        }
    }

    if let Some(s) = get_table(&table, "sweep")? {
        if let Some(v) = s.get("epsilons") {
            let arr = v.as_array().ok_or_else(|| {
                Error::config("sweep.epsilons", "expected an array of numbers")
            })?;
            let mut eps = Vec::with_capacity(arr.len());
            for item in arr {
                eps.push(item.as_float().or(item.as_integer().map(|i| i as f64)).ok_or_else(
                    || Error::config("sweep.epsilons", format!("non-numeric entry {item}")),
                )?);
            }
            cfg.epsilons = eps;
        }
        if let Some(k) = get_int(s, "sweep", "grid_factor")? {
            cfg.grid_factor = k;
        }
        if let Some(t) = get_f64(s, "sweep", "tol")? {
            cfg.domain_tol = t;
        }
        if let Some(r) = get_str(s, "sweep", "recipe")? {
            cfg.recipe = match r.as_str() {
                "zero" => Recipe::Zero,
                "vortex" => Recipe::Vortex,
                "incompatible" => Recipe::Incompatible,
                other => {
                    return Err(Error::config(
                        "sweep.recipe",
                        format!("unknown recipe {other:?}"),
                    ))
                }
            };
        }
        if let Some(e) = get_str(s, "sweep", "extension")? {
            cfg.extension = match e.as_str() {
                "analytic" => ExtensionMode::Analytic,
                "reflection" => ExtensionMode::Reflection,
                other => {
                    return Err(Error::config(
                        "sweep.extension",
                        format!("unknown extension mode {other:?}"),
                    ))
                }
            };
        }
    }

    if let Some(o) = get_table(&table, "output")? {
        if let Some(d) = get_str(o, "output", "dir")? {
            cfg.out_dir = Some(PathBuf::from(d));
        }
        if let Some(d) = get_str(o, "output", "cache")? {
            cfg.cache_dir = Some(PathBuf::from(d));
        }
        if let Some(j) = get_int(o, "output", "jobs")? {
            cfg.jobs = j;
        }
    }

    cfg.validate()?;
    Ok(cfg)
}

fn get_table<'t>(table: &'t toml::Table, key: &str) -> Result<Option<&'t toml::Table>> {
    match table.get(key) {
        None => Ok(None),
        Some(v) => v
            .as_table()
            .map(Some)
            .ok_or_else(|| Error::config(key, "expected a table")),
    }
}

fn get_f64(table: &toml::Table, section: &str, key: &str) -> Result<Option<f64>> {
    match table.get(key) {
        None => Ok(None),
        Some(v) => v
            .as_float()
            .or(v.as_integer().map(|i| i as f64))
            .map(Some)
            .ok_or_else(|| Error::config(format!("{section}.{key}"), "expected a number")),
    }
}

fn get_int(table: &toml::Table, section: &str, key: &str) -> Result<Option<usize>> {
    match table.get(key) {
        None => Ok(None),
        Some(v) => {
            let i = v
                .as_integer()
                .ok_or_else(|| Error::config(format!("{section}.{key}"), "expected an integer"))?;
            usize::try_from(i).map(Some).map_err(|_| {
                Error::config(format!("{section}.{key}"), format!("must be nonnegative, got {i}"))
            })
        }
    }
}

fn get_str(table: &toml::Table, section: &str, key: &str) -> Result<Option<String>> {
    match table.get(key) {
        None => Ok(None),
        Some(v) => v
            .as_str()
            .map(|s| Some(s.to_string()))
            .ok_or_else(|| Error::config(format!("{section}.{key}"), "expected a string")),
    }
}
