//! Configuration files, trace CSV, JSON reports, the binary field format and
//! run manifests.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};
use crate::evolution::{NormTrace, SolverConfig, TimeStep, TraceRow};
use crate::experiments::{ExperimentParams, Report};
use crate::grid::{make_grid, ScalarField};
use crate::model_flow::DeformationSchedule;

pub const TRACE_HEADER: &str = "t,k,M,H2,H3,C1,S_inf,S_sup";
pub const FIELD_MAGIC: &[u8; 4] = b"IPMF";
pub const FIELD_VERSION: u32 = 1;

/// Keys of an `evolve` configuration.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvolveConfig {
    pub grid_n: Option<usize>,
    pub grid_l: Option<f64>,
    pub dt: Option<f64>,
    pub cfl: Option<f64>,
    pub t_end: Option<f64>,
    pub stable: Option<bool>,
    pub forcing_csv: Option<PathBuf>,
    pub filter: Option<f64>,
    pub dealias: Option<bool>,
    pub initial: Option<PathBuf>,
}

impl EvolveConfig {
    /// Solver settings; the forcing file, if any, is read relative to `base`.
    pub fn solver_config(&self, base: &Path) -> Result<SolverConfig> {
        let mut cfg = SolverConfig::default();
        if let Some(dt) = self.dt {
            cfg.time_step = TimeStep::Fixed(dt);
        } else if let Some(c) = self.cfl {
            cfg.time_step = TimeStep::Cfl(c);
        }
        cfg.stable_mode = self.stable.unwrap_or(false);
        cfg.filter_strength = self.filter.unwrap_or(0.0);
        cfg.dealias = self.dealias.unwrap_or(true);
        if let Some(p) = &self.forcing_csv {
            cfg.forcing = Some(read_schedule(&base.join(p))?);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// A parsed configuration file: `evolve` keys plus experiment parameters.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub evolve: EvolveConfig,
    pub params: ExperimentParams,
    /// Every key that was set, in file order.
    pub keys: Vec<String>,
}

fn config_err(line: usize, msg: impl Into<String>) -> LabError {
    LabError::Config {
        line,
        msg: msg.into(),
    }
}

fn parse_num(line: usize, key: &str, v: &str) -> Result<f64> {
    let x: f64 = v
        .parse()
        .map_err(|_| config_err(line, format!("{key}: '{v}' is not a number")))?;
    if !x.is_finite() {
        return Err(config_err(line, format!("{key}: value must be finite")));
    }
    Ok(x)
}

fn parse_count(line: usize, key: &str, v: &str) -> Result<usize> {
    v.parse()
        .map_err(|_| config_err(line, format!("{key}: '{v}' is not a nonnegative integer")))
}

fn parse_bool(line: usize, key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(config_err(line, format!("{key}: '{v}' is not a boolean"))),
    }
}

fn parse_list(line: usize, key: &str, v: &str) -> Result<Vec<f64>> {
    let out: Result<Vec<f64>> = v.split(',').map(|s| parse_num(line, key, s.trim())).collect();
    let out = out?;
    if out.is_empty() {
        return Err(config_err(line, format!("{key}: empty list")));
    }
    Ok(out)
}

fn positive(line: usize, key: &str, x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(config_err(line, format!("{key} = {x} must be positive")));
    }
    Ok(x)
}

fn unit_interval(line: usize, key: &str, x: f64) -> Result<f64> {
    if !(x > 0.0 && x < 1.0) {
        return Err(config_err(
            line,
            format!("{key} = {x} violates the hypothesis 0 < {key} < 1"),
        ));
    }
    Ok(x)
}

fn power_of_two(line: usize, key: &str, n: usize) -> Result<usize> {
    if n < 16 || !n.is_power_of_two() {
        return Err(config_err(
            line,
            format!("{key} = {n} must be a power of two, at least 16"),
        ));
    }
    Ok(n)
}

/// Parses `key=value` lines; `#` starts a comment.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (key, value) = body
            .split_once('=')
            .ok_or_else(|| config_err(line, format!("expected key=value, got '{body}'")))?;
        let (key, v) = (key.trim(), value.trim());
        if let Some(prev) = seen.insert(key.to_string(), line) {
            return Err(config_err(line, format!("{key} already set on line {prev}")));
        }
        let e = &mut cfg.evolve;
        let p = &mut cfg.params;
        match key {
            "grid_n" => e.grid_n = Some(power_of_two(line, key, parse_count(line, key, v)?)?),
            "grid_l" => e.grid_l = Some(positive(line, key, parse_num(line, key, v)?)?),
            "dt" => e.dt = Some(positive(line, key, parse_num(line, key, v)?)?),
            "cfl" => e.cfl = Some(positive(line, key, parse_num(line, key, v)?)?),
            "T" => {
                let t = positive(line, key, parse_num(line, key, v)?)?;
                e.t_end = Some(t);
                p.t_end = t;
            }
            "stable" => e.stable = Some(parse_bool(line, key, v)?),
            "forcing_csv" => e.forcing_csv = Some(PathBuf::from(v)),
            "filter" => {
                let f = parse_num(line, key, v)?;
                if f < 0.0 {
                    return Err(config_err(line, "filter must be nonnegative"));
                }
                e.filter = Some(f);
            }
            "dealias" => e.dealias = Some(parse_bool(line, key, v)?),
            "initial" => e.initial = Some(PathBuf::from(v)),
            "eps0" => p.eps0 = unit_interval(line, key, parse_num(line, key, v)?)?,
            "eps1" => p.eps1 = unit_interval(line, key, parse_num(line, key, v)?)?,
            "eps2" => p.eps2 = unit_interval(line, key, parse_num(line, key, v)?)?,
            "eps3" => p.eps3 = unit_interval(line, key, parse_num(line, key, v)?)?,
            "epsilon" => p.epsilon = unit_interval(line, key, parse_num(line, key, v)?)?,
            "M" => p.m = positive(line, key, parse_num(line, key, v)?)?,
            "d" => p.d = positive(line, key, parse_num(line, key, v)?)?,
            "K_bound" => {
                let k = parse_num(line, key, v)?;
                if !(k > 1.0) {
                    return Err(config_err(line, format!("K_bound = {k} must exceed 1")));
                }
                p.k_bound = k;
            }
            "every" => p.every = positive(line, key, parse_num(line, key, v)?)?,
            "theta0" => p.theta0 = parse_num(line, key, v)?,
            "lambda_list" => p.lambda_list = parse_list(line, key, v)?,
            "a_list" => p.a_list = parse_list(line, key, v)?,
            "A_list" => p.osc_list = parse_list(line, key, v)?,
            "N_list" => {
                p.n_list = parse_list(line, key, v)?
                    .into_iter()
                    .map(|x| {
                        if x >= 1.0 && x.fract() == 0.0 {
                            Ok(x as u32)
                        } else {
                            Err(config_err(line, format!("N_list: {x} is not a positive integer")))
                        }
                    })
                    .collect::<Result<_>>()?
            }
            "layer_count" => p.layer_count = parse_count(line, key, v)?,
            "model_k" => p.model_k = parse_num(line, key, v)?,
            "model_T" => p.model_t_end = positive(line, key, parse_num(line, key, v)?)?,
            "model_grid_n" => p.model_grid_n = power_of_two(line, key, parse_count(line, key, v)?)?,
            "model_grid_l" => p.model_grid_l = positive(line, key, parse_num(line, key, v)?)?,
            "growth_N" => {
                let n = parse_count(line, key, v)?;
                if n == 0 {
                    return Err(config_err(line, "growth_N must be positive"));
                }
                p.growth_n = n as u32;
            }
            "growth_grid_n" => p.growth_grid_n = power_of_two(line, key, parse_count(line, key, v)?)?,
            "osc_grid_n" => p.osc_grid_n = power_of_two(line, key, parse_count(line, key, v)?)?,
            "osc_grid_l" => p.osc_grid_l = positive(line, key, parse_num(line, key, v)?)?,
            "gluing_grid_n" => p.gluing_grid_n = power_of_two(line, key, parse_count(line, key, v)?)?,
            "construction_grid_n" => {
                p.construction_grid_n = power_of_two(line, key, parse_count(line, key, v)?)?
            }
            "background_grid_n" => p.background.grid_n = power_of_two(line, key, parse_count(line, key, v)?)?,
            "background_grid_l" => p.background.grid_l = positive(line, key, parse_num(line, key, v)?)?,
            "hole_K" => p.background.hole_k = parse_count(line, key, v)?,
            "hole_lambda1" => p.background.hole_lambda1 = positive(line, key, parse_num(line, key, v)?)?,
            "hole_ratio" => p.background.hole_ratio = positive(line, key, parse_num(line, key, v)?)?,
            "stack_K" => p.background.stack_k = parse_count(line, key, v)?,
            "delta0" => p.background.delta0 = positive(line, key, parse_num(line, key, v)?)?,
            "cone_constant" => p.background.cone_constant = positive(line, key, parse_num(line, key, v)?)?,
            _ => return Err(config_err(line, format!("unknown key '{key}'"))),
        }
        cfg.keys.push(key.to_string());
    }
    if cfg.evolve.dt.is_some() && cfg.evolve.cfl.is_some() {
        let line = seen["dt"].max(seen["cfl"]);
        return Err(config_err(line, "dt and cfl are mutually exclusive"));
    }
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    parse_config_str(&fs::read_to_string(path)?)
}

/// Fails naming `key` when it was not set.
pub fn require<'a, T>(value: &'a Option<T>, key: &str) -> Result<&'a T> {
    value
        .as_ref()
        .ok_or_else(|| config_err(0, format!("missing required key '{key}'")))
}

fn fmt_row(r: &TraceRow) -> String {
    format!(
        "{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
        r.t, r.k, r.m, r.h2, r.h3, r.c1, r.s_inf, r.s_sup
    )
}

pub fn trace_to_csv(trace: &NormTrace) -> String {
    let mut s = String::from(TRACE_HEADER);
    s.push('\n');
    for r in &trace.rows {
        s.push_str(&fmt_row(r));
        s.push('\n');
    }
    s
}

pub fn write_trace(trace: &NormTrace, path: &Path) -> Result<()> {
    fs::write(path, trace_to_csv(trace))?;
    Ok(())
}

fn parse_err(line: usize, msg: impl Into<String>) -> LabError {
    LabError::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_fields(line: usize, raw: &str, expected: usize) -> Result<Vec<f64>> {
    let vals: Vec<&str> = raw.split(',').collect();
    if vals.len() != expected {
        return Err(parse_err(
            line,
            format!("expected {expected} columns, found {}", vals.len()),
        ));
    }
    vals.iter()
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| parse_err(line, format!("'{v}' is not a number")))
        })
        .collect()
}

pub fn trace_from_csv(text: &str) -> Result<NormTrace> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == TRACE_HEADER => {}
        Some((_, h)) => return Err(parse_err(1, format!("bad header '{h}'"))),
        None => return Err(parse_err(1, "missing header")),
    }
    let mut trace = NormTrace::default();
    for (idx, raw) in lines {
        let v = parse_fields(idx + 1, raw, 8)?;
        trace.rows.push(TraceRow {
            t: v[0],
            k: v[1],
            m: v[2],
            h2: v[3],
            h3: v[4],
            c1: v[5],
            s_inf: v[6],
            s_sup: v[7],
        });
        trace.k_quad.push(f64::NAN);
    }
    Ok(trace)
}

pub fn read_trace(path: &Path) -> Result<NormTrace> {
    trace_from_csv(&fs::read_to_string(path)?)
}

/// Two-column `t,k` CSV with that header.
pub fn read_schedule(path: &Path) -> Result<DeformationSchedule> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "t,k")) => {}
        _ => return Err(parse_err(1, "forcing file must start with header 't,k'")),
    }
    let mut t = Vec::new();
    let mut k = Vec::new();
    for (idx, raw) in lines {
        let v = parse_fields(idx + 1, raw, 2)?;
        t.push(v[0]);
        k.push(v[1]);
    }
    DeformationSchedule::new(t, k)
}

pub fn write_schedule(schedule: &DeformationSchedule, path: &Path) -> Result<()> {
    let mut s = String::from("t,k\n");
    for (t, k) in schedule.times.iter().zip(&schedule.k) {
        s.push_str(&format!("{t:?},{k:?}\n"));
    }
    fs::write(path, s)?;
    Ok(())
}

/// Pretty JSON with struct-declaration key order; `checks` is always present.
pub fn report_to_json(report: &Report) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

pub fn emit_report(report: &Report, path: &Path) -> Result<()> {
    fs::write(path, report_to_json(report)?)?;
    Ok(())
}

pub fn encode_field(field: &ScalarField) -> Vec<u8> {
    let n = field.grid.n();
    let mut out = Vec::with_capacity(20 + 8 * field.values.len());
    out.extend_from_slice(FIELD_MAGIC);
    out.extend_from_slice(&FIELD_VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&field.grid.half_width.to_le_bytes());
    for v in &field.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_field(bytes: &[u8]) -> Result<ScalarField> {
    if bytes.len() < 20 || &bytes[0..4] != FIELD_MAGIC {
        return Err(LabError::Format("missing IPMF magic".into()));
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != FIELD_VERSION {
        return Err(LabError::Format(format!("unsupported field version {version}")));
    }
    let n = u32_at(8) as usize;
    let l = f64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let grid = make_grid(n, l)?;
    let body = &bytes[20..];
    if body.len() != 8 * n * n {
        return Err(LabError::Format(format!(
            "expected {} value bytes for n = {n}, found {}",
            8 * n * n,
            body.len()
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ScalarField::from_values(grid, values)
}

pub fn write_field(field: &ScalarField, path: &Path) -> Result<()> {
    fs::write(path, encode_field(field))?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<ScalarField> {
    decode_field(&fs::read(path)?)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_digest(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub params: Value,
    pub grid: Option<(usize, f64)>,
    pub status: String,
    pub wall_time_s: Option<f64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    #[serde(skip)]
    started: Option<Instant>,
}

impl RunManifest {
    pub fn new(command: &str, params: Value) -> Self {
        RunManifest {
            tool: "ipm-lab".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            params,
            grid: None,
            status: "running".into(),
            wall_time_s: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: None,
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: file_digest(path)?,
        });
        Ok(())
    }

    pub fn add_output(&mut self, path: &Path) -> Result<()> {
        self.outputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: file_digest(path)?,
        });
        Ok(())
    }

    /// Writes the manifest with status `running` and starts the clock.
    pub fn begin(&mut self, path: &Path) -> Result<()> {
        self.started = Some(Instant::now());
        self.write(path)
    }

    pub fn finish(&mut self, path: &Path, status: &str) -> Result<()> {
        self.status = status.into();
        self.wall_time_s = self.started.map(|s| s.elapsed().as_secs_f64());
        self.write(path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(serde_json::to_string_pretty(self)?.as_bytes())?;
        f.write_all(b"\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_keys_parse() {
        let c = parse_config_str("grid_n=256\ngrid_l=4.0").unwrap();
        assert_eq!(c.evolve.grid_n, Some(256));
        assert_eq!(c.evolve.grid_l, Some(4.0));
        make_grid(256, 4.0).unwrap();
    }

    #[test]
    fn non_power_of_two_rejected() {
        let e = parse_config_str("grid_n=100").unwrap_err().to_string();
        assert!(e.contains("line 1") && e.contains("power of two"), "{e}");
    }

    #[test]
    fn eps_hypothesis() {
        let e = parse_config_str("# c\n\neps2=1.5").unwrap_err().to_string();
        assert!(e.contains("line 3") && e.contains("eps2 < 1"), "{e}");
    }

    #[test]
    fn unknown_key_named() {
        let e = parse_config_str("grid_n=64\nbogus=1").unwrap_err().to_string();
        assert!(e.contains("line 2") && e.contains("bogus"), "{e}");
    }

    #[test]
    fn empty_trace_is_header_only() {
        assert_eq!(trace_to_csv(&NormTrace::default()), format!("{TRACE_HEADER}\n"));
    }

    #[test]
    fn trailing_garbage_line() {
        let text = format!("{TRACE_HEADER}\n0.0,1,2,3,4,5,6,7\nfoo\n");
        let e = trace_from_csv(&text).unwrap_err().to_string();
        assert!(e.contains("line 3"), "{e}");
    }

    #[test]
    fn empty_checks_serialized() {
        let r = Report::new("x", Value::Null);
        let s = report_to_json(&r).unwrap();
        assert!(s.contains("\"checks\": []"), "{s}");
    }
}
