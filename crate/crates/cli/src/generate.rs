use std::fs;
use std::time::Instant;

use anyhow::Context;
use geowalk::dataset::{write_manifest, DirectorySink, Manifest, MANIFEST_FILE};
use geowalk::sampling::SeedPlan;
use geowalk::walk::{generate_dataset, CatalogEntry, GenerationConfig, MeshSource, DEFAULT_SURF_EPS_REL};
use serde_json::json;

use crate::catalog;
use crate::{GenerateArgs, Status};

pub fn config_from(args: &GenerateArgs) -> GenerationConfig {
    GenerationConfig {
        n_volume: args.n_volume,
        n_surface: args.n_surface,
        v_max: args.v_max,
        tau: args.tau,
        n_dyn: args.n_dyn,
        bbox: None,
        mode: args.mode.into(),
        feature: args.feature.into(),
        convention: args.convention.into(),
        surf_eps: args
            .surf_eps
            .unwrap_or(DEFAULT_SURF_EPS_REL * geowalk::mesh::DEFAULT_TARGET_X_LENGTH),
        surface_offset_eps: args.surface_offset,
        resample_positions: args.resample_positions,
        epoch_seed: args.epoch_seed,
    }
}

pub fn run(args: &GenerateArgs) -> anyhow::Result<Status> {
    if let Err(msg) = catalog::require_dir(&args.input) {
        eprintln!("error: {msg}");
        return Ok(Status::Usage);
    }
    let mut files = catalog::scan(&args.input, args.default_category)?;
    if !args.categories.is_empty() {
        files.retain(|f| args.categories.contains(&f.category));
    }
    if let Err(e) = catalog::check_unique_stems(&files) {
        eprintln!("error: {e}");
        return Ok(Status::Usage);
    }
    let entries: Vec<CatalogEntry> = files
        .iter()
        .map(|f| CatalogEntry {
            geometry_id: f.stem.clone(),
            category: f.category,
            source: MeshSource::File(f.path.clone()),
        })
        .collect();

    let config = config_from(args);
    let seeds = SeedPlan::new(args.seed);
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let sink = DirectorySink::new(&args.out);

    let workers = args.workers.count();
    let pool = args.workers.pool()?;
    eprintln!(
        "generating {} geometries x {} dynamics fields ({} points, tau {}) on {workers} workers",
        entries.len(),
        config.n_dyn,
        config.n_points(),
        config.tau
    );
    let started = Instant::now();
    let summary = pool.install(|| generate_dataset(&entries, &config, &seeds, &sink));
    let elapsed = started.elapsed().as_secs_f64();

    let manifest = Manifest::from_summary(&args.name, args.seed, &config, &summary);
    write_manifest(&manifest, &args.out.join(MANIFEST_FILE))?;

    let rate = summary.point_steps as f64 / elapsed.max(1e-9);
    eprintln!(
        "{} samples in {elapsed:.2}s: {rate:.0} point-steps/s ({:.0} per worker)",
        summary.total_samples,
        rate / workers as f64
    );
    for s in &summary.skipped {
        eprintln!(
            "skipped {} (dynamics {}): {}",
            s.geometry_id,
            s.dynamics_index.map_or("all".to_string(), |d| d.to_string()),
            s.reason
        );
    }
    println!(
        "{}",
        json!({
            "total_samples": summary.total_samples,
            "samples_per_category": summary.samples_per_category,
            "geometries_per_category": summary.geometries_per_category,
            "skipped": summary.skipped.len(),
            "point_steps": summary.point_steps,
        })
    );

    Ok(if summary.total_samples > 0 {
        Status::Success
    } else {
        eprintln!("error: no samples were generated");
        Status::Failure
    })
}
