//! Dataset verification: per-shard integrity, format and conservation.

use std::fs;
use std::path::Path;

use anyhow::Context;
use geowalk::conservation::mass_audit;
use geowalk::dataset::{checksum_hex, read_manifest, read_shard, Manifest, ShardEntry, MANIFEST_FILE};
use geowalk::geometry::from_f32x3;
use rayon::prelude::*;

use crate::{Status, VerifyArgs};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShardVerdict {
    pub path: String,
    /// `None` when every check passed.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyReport {
    /// Dataset-level problems, such as totals that disagree with the shard list.
    pub manifest_failures: Vec<String>,
    pub shards: Vec<ShardVerdict>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.manifest_failures.is_empty() && self.shards.iter().all(|s| s.failure.is_none())
    }

    pub fn failed_shards(&self) -> usize {
        self.shards.iter().filter(|s| s.failure.is_some()).count()
    }
}

/// Every check for one listed shard.
pub fn verify_shard(root: &Path, entry: &ShardEntry) -> Result<(), String> {
    let path = root.join(&entry.path);
    let bytes = fs::read(&path).map_err(|e| format!("missing: {e}"))?;
    if bytes.len() as u64 != entry.bytes {
        return Err(format!("size: {} bytes, manifest says {}", bytes.len(), entry.bytes));
    }
    let sum = checksum_hex(&bytes);
    if sum != entry.checksum {
        return Err(format!("checksum: file {sum}, manifest {}", entry.checksum));
    }
    let record = read_shard(&bytes).map_err(|e| format!("format: {e}"))?;
    if record.geometry_id != entry.geometry_id || record.dynamics_index != entry.dynamics_index {
        return Err(format!(
            "identity: shard holds {}/{}, manifest lists {}/{}",
            record.geometry_id, record.dynamics_index, entry.geometry_id, entry.dynamics_index
        ));
    }
    mass_audit(&record).map_err(|e| format!("conservation: {e}"))?;
    if let Some(i) = record
        .velocities
        .iter()
        .position(|v| !(from_f32x3(v).norm() <= record.v_max))
    {
        return Err(format!("velocity: particle {i} outside the v_max ball"));
    }
    if let Some(i) = record.positions.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
        return Err(format!("position: particle {i} is not finite"));
    }
    Ok(())
}

fn manifest_failures(m: &Manifest) -> Vec<String> {
    let mut out = Vec::new();
    if m.total_samples != m.shards.len() {
        out.push(format!(
            "manifest total {} but {} shards listed",
            m.total_samples,
            m.shards.len()
        ));
    }
    let per_category: usize = m.samples_per_category.values().sum();
    if per_category != m.total_samples {
        out.push(format!(
            "per-category samples sum to {per_category}, total is {}",
            m.total_samples
        ));
    }
    out
}

/// Verifies every shard listed in the manifest under `root`, in manifest order.
pub fn verify_dataset(root: &Path) -> anyhow::Result<VerifyReport> {
    let manifest_path = root.join(MANIFEST_FILE);
    let manifest = read_manifest(&manifest_path).with_context(|| format!("reading {}", manifest_path.display()))?;
    let shards = manifest
        .shards
        .par_iter()
        .map(|e| ShardVerdict {
            path: e.path.clone(),
            failure: verify_shard(root, e).err(),
        })
        .collect();
    Ok(VerifyReport {
        manifest_failures: manifest_failures(&manifest),
        shards,
    })
}

pub fn run(args: &VerifyArgs) -> anyhow::Result<Status> {
    let pool = args.workers.pool()?;
    let report = pool.install(|| verify_dataset(&args.dataset))?;
    for f in &report.manifest_failures {
        println!("FAIL  {MANIFEST_FILE}  {f}");
    }
    for s in &report.shards {
        match &s.failure {
            None => println!("PASS  {}", s.path),
            Some(why) => println!("FAIL  {}  {why}", s.path),
        }
    }
    if args.machine {
        for s in &report.shards {
            let (verdict, why) = match &s.failure {
                None => ("PASS", ""),
                Some(w) => ("FAIL", w.as_str()),
            };
            println!("verify\t{verdict}\t{}\t{why}", s.path);
        }
    }
    let failed = report.failed_shards();
    eprintln!(
        "{} shards: {} passed, {failed} failed",
        report.shards.len(),
        report.shards.len() - failed
    );
    Ok(if report.passed() { Status::Success } else { Status::Failure })
}
