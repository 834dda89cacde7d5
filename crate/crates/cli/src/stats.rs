use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context};
use geowalk::conservation::MassLedger;
use geowalk::dataset::{read_manifest, read_shard_file, MANIFEST_FILE};
use geowalk::walk::SampleRecord;
use geowalk::Category;
use rayon::prelude::*;

use crate::{StatsArgs, Status};

const HISTOGRAM_BINS: usize = 10;

/// Running min / mean / max / sd.
#[derive(Debug, Clone, Copy)]
struct Moments {
    n: u64,
    sum: f64,
    sum_sq: f64,
    min: f64,
    max: f64,
}

impl Default for Moments {
    fn default() -> Self {
        Self {
            n: 0,
            sum: 0.0,
            sum_sq: 0.0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }
}

impl Moments {
    fn add(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
        self.min = self.min.min(x);
        self.max = self.max.max(x);
    }

    fn merge(&mut self, o: &Moments) {
        self.n += o.n;
        self.sum += o.sum;
        self.sum_sq += o.sum_sq;
        self.min = self.min.min(o.min);
        self.max = self.max.max(o.max);
    }

    fn describe(&self) -> String {
        if self.n == 0 {
            return "n=0".into();
        }
        let mean = self.sum / self.n as f64;
        let sd = (self.sum_sq / self.n as f64 - mean * mean).max(0.0).sqrt();
        format!("n={} min={:.6} mean={:.6} max={:.6} sd={:.6}", self.n, self.min, mean, self.max, sd)
    }
}

/// Per-shard contribution, merged in manifest order.
#[derive(Debug, Clone, Default)]
struct ShardStats {
    particles: u64,
    stuck_per_step: Vec<u64>,
    stuck_fraction_per_step: Vec<f64>,
    norms_per_step: Vec<Moments>,
}

fn shard_stats(record: &SampleRecord) -> ShardStats {
    let steps = record.steps();
    let stuck: Vec<Option<usize>> = record.stuck_steps.iter().map(|s| s.map(usize::from)).collect();
    let ledger = MassLedger::from_stuck_steps(&stuck, &[], record.tau as usize);
    let mut norms = vec![Moments::default(); steps];
    for i in 0..record.n_points() {
        for (t, m) in norms.iter_mut().enumerate() {
            let row = record.feature_row(i, t);
            m.add(row.iter().map(|&c| f64::from(c) * f64::from(c)).sum::<f64>().sqrt());
        }
    }
    ShardStats {
        particles: record.n_points() as u64,
        stuck_per_step: ledger.boundary.iter().map(|&b| b as u64).collect(),
        stuck_fraction_per_step: ledger.stuck_fraction(),
        norms_per_step: norms,
    }
}

fn histogram(values: &[f64]) -> [usize; HISTOGRAM_BINS] {
    let mut h = [0; HISTOGRAM_BINS];
    for &v in values {
        let b = ((v * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
        h[b] += 1;
    }
    h
}

fn dump_obj(record: &SampleRecord, path: &Path) -> anyhow::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?);
    writeln!(w, "# {} dynamics {}", record.geometry_id, record.dynamics_index)?;
    writeln!(w, "# vertex colour: red = stuck by the last step, grey = free")?;
    for (p, s) in record.positions.iter().zip(&record.stuck_steps) {
        let rgb = if s.is_some() { "1 0 0" } else { "0.6 0.6 0.6" };
        writeln!(w, "v {} {} {} {rgb}", p[0], p[1], p[2])?;
    }
    for i in 1..=record.n_points() {
        writeln!(w, "p {i}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn run(args: &StatsArgs) -> anyhow::Result<Status> {
    let root = &args.dataset;
    let manifest_path = root.join(MANIFEST_FILE);
    if !manifest_path.is_file() {
        eprintln!("error: no manifest at {}", manifest_path.display());
        return Ok(Status::Failure);
    }
    let manifest = read_manifest(&manifest_path)?;

    let pool = args.workers.pool()?;
    let per_shard: Vec<anyhow::Result<(Category, ShardStats)>> = pool.install(|| {
        manifest
            .shards
            .par_iter()
            .map(|e| {
                let r = read_shard_file(&root.join(&e.path)).with_context(|| format!("reading {}", e.path))?;
                Ok((e.category, shard_stats(&r)))
            })
            .collect()
    });

    let mut counted: BTreeMap<Category, usize> = BTreeMap::new();
    let mut particles = 0u64;
    let mut stuck: Vec<u64> = Vec::new();
    let mut fractions: Vec<Vec<f64>> = Vec::new();
    let mut norms: Vec<Moments> = Vec::new();
    for r in per_shard {
        let (cat, s) = r?;
        *counted.entry(cat).or_default() += 1;
        particles += s.particles;
        let steps = s.stuck_per_step.len();
        if stuck.len() < steps {
            stuck.resize(steps, 0);
            fractions.resize(steps, Vec::new());
            norms.resize(steps, Moments::default());
        }
        for t in 0..steps {
            stuck[t] += s.stuck_per_step[t];
            fractions[t].push(s.stuck_fraction_per_step[t]);
            norms[t].merge(&s.norms_per_step[t]);
        }
    }

    println!("dataset {} (seed {})", manifest.dataset_name, manifest.master_seed);
    let mut consistent = true;
    for (cat, n) in &manifest.samples_per_category {
        let seen = counted.get(cat).copied().unwrap_or(0);
        let geos = manifest.geometries_per_category.get(cat).copied().unwrap_or(0);
        println!("category {cat}: {geos} geometries, {seen} samples (manifest {n})");
        consistent &= seen == *n;
    }
    let total: usize = counted.values().sum();
    println!("samples: {total} (manifest {})", manifest.total_samples);
    consistent &= total == manifest.total_samples && counted.len() <= manifest.samples_per_category.len();
    println!("particles: {particles}");

    let steps = stuck.len().max(manifest.config.tau + 1);
    for t in 0..steps {
        let frac = if particles == 0 { 0.0 } else { stuck.get(t).copied().unwrap_or(0) as f64 / particles as f64 };
        let hist = fractions.get(t).map_or([0; HISTOGRAM_BINS], |f| histogram(f));
        println!("step {t}: stuck fraction {frac:.6}; per-shard histogram (10 bins on [0,1]) {hist:?}");
    }
    for (t, m) in norms.iter().enumerate() {
        println!("step {t}: feature norm {}", m.describe());
    }

    if let Some(path) = &args.dump_obj {
        let Some(entry) = manifest.shards.get(args.dump_shard) else {
            bail!("--dump-shard {} out of range ({} shards)", args.dump_shard, manifest.shards.len());
        };
        dump_obj(&read_shard_file(&root.join(&entry.path))?, path)?;
        eprintln!("wrote {} points to {}", entry.path, path.display());
    }

    if !consistent {
        eprintln!("error: shard counts disagree with the manifest");
        return Ok(Status::Failure);
    }
    Ok(Status::Success)
}
