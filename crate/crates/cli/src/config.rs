//! Run-configuration file: flat `key = value` pairs with one `[algorithm]`
//! block per run entry. `#` starts a comment; keys before the first block
//! configure the batch.

use std::path::PathBuf;

use crate::grammar::{parse_schedule, ScheduleRequest};
use ifbs::engine::Algorithm;

#[derive(Debug, Clone)]
pub struct GenerateSpec {
    pub m: usize,
    pub n: usize,
    pub sparsity: usize,
    pub std: f64,
    pub rho: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub enum InstanceSource {
    File(PathBuf),
    Generate(GenerateSpec),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SnapshotPolicy {
    /// Stride 1 for n <= 500, stride 10 otherwise.
    Default,
    Off,
    Stride(u64),
}

#[derive(Debug, Clone)]
pub struct AlgorithmEntry {
    pub name: String,
    pub algorithm: Algorithm,
    pub schedule_text: String,
    pub schedule: ScheduleRequest,
    pub max_iter: u64,
    pub target_gap: Option<f64>,
    pub step_tol: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub instance: InstanceSource,
    pub out_dir: PathBuf,
    pub gap_tol: f64,
    pub snapshots: SnapshotPolicy,
    pub algorithms: Vec<AlgorithmEntry>,
}

const DEFAULT_MAX_ITER: u64 = 100_000;
const DEFAULT_GAP_TOL: f64 = 1e-12;

struct RawBlock {
    header_line: usize,
    pairs: Vec<(usize, String, String)>,
}

fn split_blocks(text: &str) -> Result<(RawBlock, Vec<RawBlock>), String> {
    let mut global = RawBlock {
        header_line: 0,
        pairs: Vec::new(),
    };
    let mut blocks: Vec<RawBlock> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line == "[algorithm]" {
            blocks.push(RawBlock {
                header_line: idx + 1,
                pairs: Vec::new(),
            });
            continue;
        }
        if line.starts_with('[') {
            return Err(format!("line {}: unknown section `{line}`", idx + 1));
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected `key = value`", idx + 1))?;
        let pair = (idx + 1, k.trim().to_string(), v.trim().to_string());
        match blocks.last_mut() {
            Some(b) => b.pairs.push(pair),
            None => global.pairs.push(pair),
        }
    }
    Ok((global, blocks))
}

fn take<'a>(pairs: &'a [(usize, String, String)], key: &str) -> Option<&'a str> {
    pairs
        .iter()
        .find(|(_, k, _)| k == key)
        .map(|(_, _, v)| v.as_str())
}

fn parse_num<T: std::str::FromStr>(pairs: &[(usize, String, String)], key: &str) -> Result<Option<T>, String>
where
    T::Err: std::fmt::Display,
{
    match take(pairs, key) {
        Some(v) => v
            .parse::<T>()
            .map(Some)
            .map_err(|e| format!("bad value for `{key}`: {e}")),
        None => Ok(None),
    }
}

pub fn parse_run_config(text: &str, out_dir_override: Option<PathBuf>) -> Result<RunConfig, String> {
    let (global, blocks) = split_blocks(text)?;
    let g = &global.pairs;

    let known_global = [
        "instance", "gen_m", "gen_n", "gen_sparsity", "gen_std", "gen_rho", "gen_seed",
        "out_dir", "gap_tol", "snapshot_stride", "max_iter", "target_gap", "step_tol",
    ];
    for (line, k, _) in g {
        if !known_global.contains(&k.as_str()) {
            return Err(format!("line {line}: unknown key `{k}`"));
        }
    }

    let instance = match take(g, "instance") {
        Some(path) => {
            for gen_key in ["gen_m", "gen_n", "gen_sparsity", "gen_std", "gen_rho", "gen_seed"] {
                if take(g, gen_key).is_some() {
                    return Err(format!(
                        "`instance` and `{gen_key}` are mutually exclusive"
                    ));
                }
            }
            InstanceSource::File(PathBuf::from(path))
        }
        None => {
            let m = parse_num::<usize>(g, "gen_m")?.ok_or("missing `instance` or `gen_m`")?;
            let n = parse_num::<usize>(g, "gen_n")?.ok_or("missing `gen_n`")?;
            let sparsity =
                parse_num::<usize>(g, "gen_sparsity")?.ok_or("missing `gen_sparsity`")?;
            let std = parse_num::<f64>(g, "gen_std")?.ok_or("missing `gen_std`")?;
            let rho = parse_num::<f64>(g, "gen_rho")?.ok_or("missing `gen_rho`")?;
            let seed = parse_num::<u64>(g, "gen_seed")?.ok_or("missing `gen_seed`")?;
            InstanceSource::Generate(GenerateSpec {
                m,
                n,
                sparsity,
                std,
                rho,
                seed,
            })
        }
    };

    let out_dir = match out_dir_override {
        Some(d) => d,
        None => PathBuf::from(take(g, "out_dir").ok_or("missing `out_dir` (or --out-dir flag)")?),
    };
    let gap_tol = parse_num::<f64>(g, "gap_tol")?.unwrap_or(DEFAULT_GAP_TOL);
    if !(gap_tol > 0.0) {
        return Err("gap_tol must be positive".into());
    }
    let snapshots = match take(g, "snapshot_stride") {
        None => SnapshotPolicy::Default,
        Some("off") | Some("none") => SnapshotPolicy::Off,
        Some(v) => {
            let stride: u64 = v.parse().map_err(|e| format!("bad snapshot_stride: {e}"))?;
            if stride == 0 {
                return Err("snapshot_stride must be positive (or `off`)".into());
            }
            SnapshotPolicy::Stride(stride)
        }
    };
    let default_max_iter = parse_num::<u64>(g, "max_iter")?.unwrap_or(DEFAULT_MAX_ITER);
    let default_target_gap = parse_num::<f64>(g, "target_gap")?;
    let default_step_tol = parse_num::<f64>(g, "step_tol")?;

    if blocks.is_empty() {
        return Err("config defines no [algorithm] blocks".into());
    }
    let known_algo = ["name", "algo", "schedule", "max_iter", "target_gap", "step_tol"];
    let mut algorithms = Vec::new();
    for block in &blocks {
        for (line, k, _) in &block.pairs {
            if !known_algo.contains(&k.as_str()) {
                return Err(format!("line {line}: unknown key `{k}` in [algorithm]"));
            }
        }
        let schedule_text = take(&block.pairs, "schedule")
            .ok_or_else(|| {
                format!(
                    "[algorithm] at line {} is missing `schedule`",
                    block.header_line
                )
            })?
            .to_string();
        let schedule = parse_schedule(&schedule_text)
            .map_err(|e| format!("[algorithm] at line {}: {e}", block.header_line))?;
        let name = take(&block.pairs, "name")
            .map(str::to_string)
            .unwrap_or_else(|| schedule_text.replace(' ', "_").replace('=', "-"));
        if !name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.')
        {
            return Err(format!(
                "algorithm name `{name}` may only contain [A-Za-z0-9._-]"
            ));
        }
        let algorithm = match take(&block.pairs, "algo").unwrap_or("ifbs") {
            "ifbs" => Algorithm::Ifbs,
            "sipm" => Algorithm::Sipm,
            other => return Err(format!("unknown algo `{other}` (use ifbs or sipm)")),
        };
        algorithms.push(AlgorithmEntry {
            name,
            algorithm,
            schedule_text,
            schedule,
            max_iter: parse_num::<u64>(&block.pairs, "max_iter")?.unwrap_or(default_max_iter),
            target_gap: parse_num::<f64>(&block.pairs, "target_gap")?.or(default_target_gap),
            step_tol: parse_num::<f64>(&block.pairs, "step_tol")?.or(default_step_tol),
        });
    }
    let mut names: Vec<&str> = algorithms.iter().map(|a| a.name.as_str()).collect();
    names.sort_unstable();
    names.dedup();
    if names.len() != algorithms.len() {
        return Err("algorithm names must be unique".into());
    }

    Ok(RunConfig {
        instance,
        out_dir,
        gap_tol,
        snapshots,
        algorithms,
    })
}
