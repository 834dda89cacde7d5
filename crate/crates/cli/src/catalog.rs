//! Mesh discovery.
//!
//! A mesh directory holds `.obj` / `.stl` files directly, or in one level of
//! subdirectories named after a category (`car/`, `airplane/`, ...).
//! Anything else is ignored.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use geowalk::mesh::MeshFormat;
use geowalk::Category;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeshFile {
    pub path: PathBuf,
    pub category: Category,
    /// File stem, used as the geometry id.
    pub stem: String,
}

fn sorted_entries(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut entries = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<Vec<_>, _>>()
        .with_context(|| format!("reading {}", dir.display()))?;
    entries.sort();
    Ok(entries)
}

fn mesh_file(path: PathBuf, category: Category) -> Option<MeshFile> {
    MeshFormat::from_path(&path)?;
    let stem = path.file_stem()?.to_str()?.to_string();
    Some(MeshFile { path, category, stem })
}

/// Meshes under `dir`, ordered by category then file name.
pub fn scan(dir: &Path, default_category: Category) -> anyhow::Result<Vec<MeshFile>> {
    let mut found = Vec::new();
    for path in sorted_entries(dir)? {
        if path.is_dir() {
            let Some(category) = path
                .file_name()
                .and_then(|n| n.to_str())
                .and_then(|n| n.parse::<Category>().ok())
            else {
                log::warn!("ignoring directory {}: not a category name", path.display());
                continue;
            };
            found.extend(
                sorted_entries(&path)?
                    .into_iter()
                    .filter(|p| p.is_file())
                    .filter_map(|p| mesh_file(p, category)),
            );
        } else if let Some(m) = mesh_file(path, default_category) {
            found.push(m);
        }
    }
    found.sort_by(|a, b| (a.category, &a.stem, &a.path).cmp(&(b.category, &b.stem, &b.path)));
    Ok(found)
}

/// Fails if two meshes would share a geometry id.
pub fn check_unique_stems(files: &[MeshFile]) -> anyhow::Result<()> {
    let mut stems: Vec<(&str, &Path)> = files.iter().map(|f| (f.stem.as_str(), f.path.as_path())).collect();
    stems.sort();
    for w in stems.windows(2) {
        if w[0].0 == w[1].0 {
            bail!(
                "geometry id {:?} is used by both {} and {}",
                w[0].0,
                w[0].1.display(),
                w[1].1.display()
            );
        }
    }
    Ok(())
}

/// `Err` with a message naming the path when `dir` is not a directory.
pub fn require_dir(dir: &Path) -> Result<(), String> {
    if dir.is_dir() {
        Ok(())
    } else {
        Err(format!("input directory {} does not exist", dir.display()))
    }
}
