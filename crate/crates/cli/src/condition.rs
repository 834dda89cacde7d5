use std::fs;

use anyhow::Context;
use geowalk::condition::{parse_points, parse_spec_file, recommend_norm};
use geowalk::dataset::encode_velocity_block;
use geowalk::geometry::to_f32x3;

use crate::{ConditionArgs, Status};

pub fn run(args: &ConditionArgs) -> anyhow::Result<Status> {
    let spec_text = fs::read_to_string(&args.spec).with_context(|| format!("reading {}", args.spec.display()))?;
    let spec = match parse_spec_file(&spec_text) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {}: {e}", args.spec.display());
            return Ok(Status::Failure);
        }
    };
    let point_text =
        fs::read_to_string(&args.points).with_context(|| format!("reading {}", args.points.display()))?;
    let points = match parse_points(&point_text) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {}: {e}", args.points.display());
            return Ok(Status::Failure);
        }
    };

    let mut condition = spec.spec.build(&points)?;
    if args.shift_deg != 0.0 {
        condition = condition.shifted(args.shift_deg);
    }
    let positions: Vec<[f32; 3]> = points.iter().map(to_f32x3).collect();
    let block = encode_velocity_block(&positions, &condition.velocities_f32())?;
    fs::write(&args.out, &block).with_context(|| format!("writing {}", args.out.display()))?;

    let regime = spec.regime();
    let (lo, hi) = recommend_norm(regime);
    let max_norm = spec.spec.max_norm();
    println!(
        "wrote {} velocities to {}; max norm {max_norm}",
        points.len(),
        args.out.display()
    );
    println!("regime {regime}: recommended norm [{lo:.1}, {hi:.1}]");
    if max_norm > 0.0 && !(lo..=hi).contains(&max_norm) {
        eprintln!("warning: max norm {max_norm} lies outside the recommended range for {regime}");
    }
    Ok(Status::Success)
}
