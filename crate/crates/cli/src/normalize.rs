use std::fs;
use std::io::{BufWriter, Write};

use anyhow::Context;
use geowalk::geometry::Mat3;
use geowalk::mesh::{load_mesh_file, normalize_mesh, validate_mesh, write_obj, DEFAULT_AREA_EPS};
use serde_json::json;

use crate::catalog::{self, MeshFile};
use crate::{NormalizeArgs, Status};

pub fn run(args: &NormalizeArgs) -> anyhow::Result<Status> {
    if let Err(msg) = catalog::require_dir(&args.input) {
        eprintln!("error: {msg}");
        return Ok(Status::Usage);
    }
    let files = catalog::scan(&args.input, args.category)?;
    if files.is_empty() {
        eprintln!("warning: no meshes found in {}", args.input.display());
        return Ok(Status::Success);
    }

    let mut failed = 0;
    for f in &files {
        match normalize_one(args, f) {
            Ok(line) => println!("{line}"),
            Err(e) => {
                failed += 1;
                eprintln!("FAIL {}: {e:#}", f.path.display());
            }
        }
    }
    eprintln!("normalized {} of {} meshes", files.len() - failed, files.len());
    Ok(if failed == 0 { Status::Success } else { Status::Failure })
}

fn normalize_one(args: &NormalizeArgs, f: &MeshFile) -> anyhow::Result<String> {
    let raw = load_mesh_file(&f.path, f.category)?;
    let (clean, report) = validate_mesh(&raw, DEFAULT_AREA_EPS)?;
    let (mesh, record) = normalize_mesh(&clean, args.x_length, &Mat3::identity())?;

    let dir = args.out.join(f.category.as_str());
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let obj = dir.join(format!("{}.obj", f.stem));
    let file = fs::File::create(&obj).with_context(|| format!("creating {}", obj.display()))?;
    let mut w = BufWriter::new(file);
    write_obj(&mesh, &mut w)?;
    w.flush()?;

    let sidecar = json!({
        "source": f.path.display().to_string(),
        "category": f.category,
        "normalization": record,
        "validation": report,
    });
    let side = dir.join(format!("{}.json", f.stem));
    fs::write(&side, serde_json::to_string_pretty(&sidecar)? + "\n")?;

    Ok(format!("OK {} -> {} {report}", f.path.display(), obj.display()))
}
