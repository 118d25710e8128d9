//! On-disk formats. Everything here is pinned to `f64`.
//!
//! - Task collections: JSON
//!   `{"input_dim": q, "tasks": [{"id", "train": {"x": [[f64]], "y": [0|1]},
//!   "val": {...}, "test": {...}}]}`; labels are 0/1 in files and mapped to
//!   -1/+1 in memory.
//! - Score tables: JSON array of `{"subset": [ids], "task": id, "score": f}`.
//! - Gradient caches: little-endian binary, 8-byte aligned. Header: magic
//!   `"GTAE1"` plus three zero pad bytes, then `p: u64`, `d: u64`,
//!   `seed: u64`, `count: u64`. Each record: `task_id: u32`, `y: i8`, three
//!   zero pad bytes, `f0: f64`, then `d` f64 feature values.
//! - Models, assignments, reports: JSON.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::cluster::ClusterAssignment;
use crate::error::{Error, Result};
use crate::models::{
    ArchitectureSpec, ModelParams, Provenance, Sample, ScoreTable, Task, TaskCollection,
};
use crate::regression::ProjectedSample;

// ---------------------------------------------------------------------------
// Task collections
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct SplitFile {
    x: Vec<Vec<f64>>,
    y: Vec<u8>,
}

#[derive(Serialize, Deserialize)]
struct TaskFile {
    id: usize,
    train: SplitFile,
    val: SplitFile,
    test: SplitFile,
}

#[derive(Serialize, Deserialize)]
struct TasksFile {
    input_dim: usize,
    tasks: Vec<TaskFile>,
}

fn split_to_samples(split: &SplitFile) -> Result<Vec<Sample<f64>>> {
    if split.x.len() != split.y.len() {
        return Err(Error::Format(format!(
            "split has {} feature rows but {} labels",
            split.x.len(),
            split.y.len()
        )));
    }
    split
        .x
        .iter()
        .zip(&split.y)
        .map(|(x, &y)| {
            let label = match y {
                0 => -1.0,
                1 => 1.0,
                other => {
                    return Err(Error::Format(format!("label {other} is not 0/1")));
                }
            };
            Ok(Sample::new(x.clone(), label))
        })
        .collect()
}

fn samples_to_split(samples: &[Sample<f64>]) -> SplitFile {
    SplitFile {
        x: samples.iter().map(|s| s.x.to_vec()).collect(),
        y: samples
            .iter()
            .map(|s| if s.y > 0.0 { 1u8 } else { 0u8 })
            .collect(),
    }
}

pub fn tasks_to_json(tasks: &TaskCollection<f64>) -> Result<String> {
    let file = TasksFile {
        input_dim: tasks.input_dim,
        tasks: tasks
            .tasks
            .iter()
            .map(|t| TaskFile {
                id: t.id,
                train: samples_to_split(&t.train),
                val: samples_to_split(&t.val),
                test: samples_to_split(&t.test),
            })
            .collect(),
    };
    Ok(serde_json::to_string(&file)?)
}

pub fn tasks_from_json(text: &str) -> Result<TaskCollection<f64>> {
    let file: TasksFile = serde_json::from_str(text)?;
    let tasks = file
        .tasks
        .iter()
        .map(|t| {
            Ok(Task {
                id: t.id,
                train: split_to_samples(&t.train)?,
                val: split_to_samples(&t.val)?,
                test: split_to_samples(&t.test)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    TaskCollection::new(file.input_dim, tasks)
}

pub fn write_tasks(path: &Path, tasks: &TaskCollection<f64>) -> Result<()> {
    std::fs::write(path, tasks_to_json(tasks)?)?;
    Ok(())
}

pub fn read_tasks(path: &Path) -> Result<TaskCollection<f64>> {
    tasks_from_json(&std::fs::read_to_string(path)?)
}

// ---------------------------------------------------------------------------
// Score tables
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ScoreRecord {
    subset: Vec<usize>,
    task: usize,
    score: f64,
}

pub fn scores_to_json(table: &ScoreTable<f64>) -> Result<String> {
    let records: Vec<ScoreRecord> = table
        .entries
        .iter()
        .map(|(&(k, task), &score)| ScoreRecord {
            subset: table.subsets[k].clone(),
            task,
            score,
        })
        .collect();
    Ok(serde_json::to_string(&records)?)
}

/// Rebuild a table from score records. Duplicate subsets collapse to one
/// entry holding the mean score, which preserves sums over plans that
/// repeat a subset.
pub fn scores_from_json(text: &str, provenance: Provenance) -> Result<ScoreTable<f64>> {
    let records: Vec<ScoreRecord> = serde_json::from_str(text)?;
    let mut subsets: Vec<Vec<usize>> = Vec::new();
    let mut sums: BTreeMap<(usize, usize), (f64, usize)> = BTreeMap::new();
    for rec in &records {
        let mut key = rec.subset.clone();
        key.sort_unstable();
        let idx = match subsets.iter().position(|s| *s == key) {
            Some(i) => i,
            None => {
                subsets.push(key);
                subsets.len() - 1
            }
        };
        let slot = sums.entry((idx, rec.task)).or_insert((0.0, 0));
        slot.0 += rec.score;
        slot.1 += 1;
    }
    let mut table = ScoreTable::new(subsets, provenance);
    for ((idx, task), (sum, count)) in sums {
        table.insert(idx, task, sum / count as f64)?;
    }
    Ok(table)
}

/// Re-key a loaded table onto a plan's subset ordering (subsets matched by
/// value; plans may repeat subsets).
pub fn align_scores_to_plan(
    table: &ScoreTable<f64>,
    plan_subsets: &[Vec<usize>],
) -> Result<ScoreTable<f64>> {
    let mut out = ScoreTable::new(plan_subsets.to_vec(), table.provenance);
    for (k, subset) in plan_subsets.iter().enumerate() {
        for &task in subset {
            let score = table
                .get_by_subset(subset, task)
                .ok_or_else(|| Error::MissingScore {
                    subset: subset.clone(),
                    task,
                })?;
            out.insert(k, task, score)?;
        }
    }
    Ok(out)
}

pub fn write_scores(path: &Path, table: &ScoreTable<f64>) -> Result<()> {
    std::fs::write(path, scores_to_json(table)?)?;
    Ok(())
}

pub fn read_scores(path: &Path, provenance: Provenance) -> Result<ScoreTable<f64>> {
    scores_from_json(&std::fs::read_to_string(path)?, provenance)
}

// ---------------------------------------------------------------------------
// Gradient caches
// ---------------------------------------------------------------------------

const CACHE_MAGIC: &[u8; 5] = b"GTAE1";

pub struct GradientCache {
    pub p: u64,
    pub d: u64,
    pub seed: u64,
    pub records: Vec<ProjectedSample<f64>>,
}

pub fn write_gradient_cache(
    path: &Path,
    p: u64,
    d: u64,
    seed: u64,
    records: &[ProjectedSample<f64>],
) -> Result<()> {
    let mut buf: Vec<u8> = Vec::with_capacity(40 + records.len() * (16 + 8 * d as usize));
    buf.extend_from_slice(CACHE_MAGIC);
    buf.extend_from_slice(&[0u8; 3]);
    buf.extend_from_slice(&p.to_le_bytes());
    buf.extend_from_slice(&d.to_le_bytes());
    buf.extend_from_slice(&seed.to_le_bytes());
    buf.extend_from_slice(&(records.len() as u64).to_le_bytes());
    for rec in records {
        if rec.g_tilde.len() as u64 != d {
            return Err(Error::DimensionMismatch {
                expected: d as usize,
                got: rec.g_tilde.len(),
                context: "gradient cache record",
            });
        }
        buf.extend_from_slice(&(rec.task_id as u32).to_le_bytes());
        let y: i8 = if rec.y > 0.0 { 1 } else { -1 };
        buf.push(y as u8);
        buf.extend_from_slice(&[0u8; 3]);
        buf.extend_from_slice(&rec.f0.to_le_bytes());
        for v in rec.g_tilde.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

pub fn read_gradient_cache(path: &Path) -> Result<GradientCache> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    if buf.len() < 40 || &buf[..5] != CACHE_MAGIC {
        return Err(Error::Format(format!(
            "{} is not a gradient cache",
            path.display()
        )));
    }
    let u64_at = |off: usize| -> u64 { u64::from_le_bytes(buf[off..off + 8].try_into().unwrap()) };
    let p = u64_at(8);
    let d = u64_at(16);
    let seed = u64_at(24);
    let count = u64_at(32) as usize;
    let record_len = 16 + 8 * d as usize;
    if buf.len() != 40 + count * record_len {
        return Err(Error::Format(format!(
            "gradient cache {} has {} bytes, expected {}",
            path.display(),
            buf.len(),
            40 + count * record_len
        )));
    }
    let mut records = Vec::with_capacity(count);
    for i in 0..count {
        let base = 40 + i * record_len;
        let task_id = u32::from_le_bytes(buf[base..base + 4].try_into().unwrap()) as usize;
        let y = buf[base + 4] as i8;
        if y != 1 && y != -1 {
            return Err(Error::Format(format!("record {i} has label byte {y}")));
        }
        let f0 = f64::from_le_bytes(buf[base + 8..base + 16].try_into().unwrap());
        let mut g = Vec::with_capacity(d as usize);
        for j in 0..d as usize {
            let off = base + 16 + 8 * j;
            g.push(f64::from_le_bytes(buf[off..off + 8].try_into().unwrap()));
        }
        let y = y as f64;
        records.push(ProjectedSample {
            g_tilde: Array1::from_vec(g),
            y,
            b: -y * f0,
            f0,
            task_id,
        });
    }
    Ok(GradientCache {
        p,
        d,
        seed,
        records,
    })
}

// ---------------------------------------------------------------------------
// Models, assignments
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ModelFile {
    spec: ArchitectureSpec,
    theta: Vec<f64>,
}

pub fn write_model(path: &Path, model: &ModelParams<f64>) -> Result<()> {
    let file = ModelFile {
        spec: model.spec,
        theta: model.theta.to_vec(),
    };
    std::fs::write(path, serde_json::to_string(&file)?)?;
    Ok(())
}

pub fn read_model(path: &Path) -> Result<ModelParams<f64>> {
    let file: ModelFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    ModelParams::new(file.spec, Array1::from_vec(file.theta))
}

/// Assignment JSON: `{"0": [task ids], "1": [...]}`.
pub fn assignment_to_json(a: &ClusterAssignment) -> Result<String> {
    let map: BTreeMap<String, Vec<usize>> = a
        .clusters
        .iter()
        .enumerate()
        .map(|(i, c)| (i.to_string(), c.clone()))
        .collect();
    Ok(serde_json::to_string_pretty(&map)?)
}

pub fn assignment_from_json(text: &str) -> Result<ClusterAssignment> {
    let map: BTreeMap<String, Vec<usize>> = serde_json::from_str(text)?;
    ClusterAssignment::new(map.into_values().collect())
}

pub fn write_assignment(path: &Path, a: &ClusterAssignment) -> Result<()> {
    std::fs::write(path, assignment_to_json(a)?)?;
    Ok(())
}

pub fn read_assignment(path: &Path) -> Result<ClusterAssignment> {
    assignment_from_json(&std::fs::read_to_string(path)?)
}
