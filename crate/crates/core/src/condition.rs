//! Task-specific velocity conditions built from simulation settings.
//!
//! Direction convention: the base direction is `+x`, which is front to back
//! for a geometry normalized with its front at `-x`. Aero fields use
//! `R_z(sideslip) R_y(-aoa)`, hydro fields `R_z(yaw)` and crash fields
//! `R_z(impact_angle)`, all right-handed rotations in degrees.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{rot_y, rot_z, Vec3};

/// Decay radius used when a crash spec omits one: the normalized x-length.
pub const DEFAULT_DECAY_RADIUS: f64 = crate::mesh::DEFAULT_TARGET_X_LENGTH;

/// Description of the base-direction and rotation-order convention, stored
/// in every condition's provenance.
pub const DIRECTION_CONVENTION: &str = "base +x; aero R_z(sideslip)*R_y(-aoa); hydro R_z(yaw); crash R_z(angle)";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConditionError {
    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("missing field {0}")]
    MissingField(&'static str),
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConditionError {
    ConditionError::Invalid {
        field,
        reason: reason.into(),
    }
}

fn non_negative(field: &'static str, x: f64) -> Result<(), ConditionError> {
    if x.is_finite() && x >= 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("{x} is not a finite non-negative number")))
    }
}

fn finite(field: &'static str, x: f64) -> Result<(), ConditionError> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("{x} is not finite")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AeroSpec {
    pub speed_norm: f64,
    pub aoa_deg: f64,
    pub sideslip_deg: f64,
}

impl AeroSpec {
    pub fn validate(&self) -> Result<(), ConditionError> {
        non_negative("speed_norm", self.speed_norm)?;
        finite("aoa_deg", self.aoa_deg)?;
        finite("sideslip_deg", self.sideslip_deg)
    }

    pub fn direction(&self) -> Vec3 {
        rot_z(self.sideslip_deg) * rot_y(-self.aoa_deg) * Vec3::x()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HydroSpec {
    pub water_norm: f64,
    pub air_norm: f64,
    pub interface_height: f64,
    pub yaw_deg: f64,
}

impl HydroSpec {
    pub fn validate(&self) -> Result<(), ConditionError> {
        non_negative("water_norm", self.water_norm)?;
        non_negative("air_norm", self.air_norm)?;
        finite("interface_height", self.interface_height)?;
        finite("yaw_deg", self.yaw_deg)
    }

    pub fn direction(&self) -> Vec3 {
        rot_z(self.yaw_deg) * Vec3::x()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrashSpec {
    pub impact_point: [f64; 3],
    pub impact_angle_deg: f64,
    pub max_norm: f64,
    pub decay_radius: f64,
}

impl CrashSpec {
    pub fn validate(&self) -> Result<(), ConditionError> {
        for c in self.impact_point {
            finite("impact_point", c)?;
        }
        finite("impact_angle_deg", self.impact_angle_deg)?;
        non_negative("max_norm", self.max_norm)?;
        if !(self.decay_radius.is_finite() && self.decay_radius > 0.0) {
            return Err(invalid("decay_radius", format!("{} is not positive", self.decay_radius)));
        }
        Ok(())
    }

    pub fn direction(&self) -> Vec3 {
        rot_z(self.impact_angle_deg) * Vec3::x()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ConditionSpec {
    Aero(AeroSpec),
    Hydro(HydroSpec),
    Crash(CrashSpec),
}

impl ConditionSpec {
    pub fn validate(&self) -> Result<(), ConditionError> {
        match self {
            ConditionSpec::Aero(s) => s.validate(),
            ConditionSpec::Hydro(s) => s.validate(),
            ConditionSpec::Crash(s) => s.validate(),
        }
    }

    /// Largest speed any point can receive.
    pub fn max_norm(&self) -> f64 {
        match self {
            ConditionSpec::Aero(s) => s.speed_norm,
            ConditionSpec::Hydro(s) => s.water_norm.max(s.air_norm),
            ConditionSpec::Crash(s) => s.max_norm,
        }
    }

    pub fn build(&self, points: &[Vec3]) -> Result<DynamicsCondition, ConditionError> {
        match self {
            ConditionSpec::Aero(s) => build_aero(s, points),
            ConditionSpec::Hydro(s) => build_hydro(s, points),
            ConditionSpec::Crash(s) => build_crash(s, points),
        }
    }
}

/// Where a condition came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub spec: ConditionSpec,
    pub convention: String,
    /// Extra z-rotation applied after building, in degrees.
    pub shift_deg: f64,
}

/// Per-point velocities aligned with a point set.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsCondition {
    pub velocities: Vec<Vec3>,
    pub provenance: Provenance,
}

impl DynamicsCondition {
    fn new(spec: ConditionSpec, velocities: Vec<Vec3>) -> Self {
        Self {
            velocities,
            provenance: Provenance {
                spec,
                convention: DIRECTION_CONVENTION.to_string(),
                shift_deg: 0.0,
            },
        }
    }

    pub fn len(&self) -> usize {
        self.velocities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.velocities.is_empty()
    }

    pub fn velocities_f32(&self) -> Vec<[f32; 3]> {
        self.velocities.iter().map(crate::geometry::to_f32x3).collect()
    }

    /// Rotates every velocity about `z`, for direction-shift experiments.
    pub fn shifted(&self, deg: f64) -> Self {
        let r = rot_z(deg);
        Self {
            velocities: self.velocities.iter().map(|v| r * v).collect(),
            provenance: Provenance {
                shift_deg: self.provenance.shift_deg + deg,
                ..self.provenance.clone()
            },
        }
    }
}

/// Uniform field along the freestream direction.
pub fn build_aero(spec: &AeroSpec, points: &[Vec3]) -> Result<DynamicsCondition, ConditionError> {
    spec.validate()?;
    let v = spec.direction() * spec.speed_norm;
    Ok(DynamicsCondition::new(ConditionSpec::Aero(*spec), vec![v; points.len()]))
}

/// Water velocity at or below the interface, air velocity above it.
pub fn build_hydro(spec: &HydroSpec, points: &[Vec3]) -> Result<DynamicsCondition, ConditionError> {
    spec.validate()?;
    let d = spec.direction();
    let (water, air) = (d * spec.water_norm, d * spec.air_norm);
    let velocities = points
        .iter()
        .map(|p| if p.z <= spec.interface_height { water } else { air })
        .collect();
    Ok(DynamicsCondition::new(ConditionSpec::Hydro(*spec), velocities))
}

/// Impact direction with a norm decaying linearly to zero at `decay_radius`.
pub fn build_crash(spec: &CrashSpec, points: &[Vec3]) -> Result<DynamicsCondition, ConditionError> {
    spec.validate()?;
    let d = spec.direction();
    let center = Vec3::from(spec.impact_point);
    let velocities = points
        .iter()
        .map(|p| {
            let decay = (1.0 - (p - center).norm() / spec.decay_radius).max(0.0);
            d * (spec.max_norm * decay)
        })
        .collect();
    Ok(DynamicsCondition::new(ConditionSpec::Crash(*spec), velocities))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    LowSpeed,
    HighSpeed,
}

impl FromStr for Regime {
    type Err = ConditionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "low_speed" | "low" => Ok(Regime::LowSpeed),
            "high_speed" | "high" => Ok(Regime::HighSpeed),
            other => Err(invalid("regime", format!("unknown regime {other:?}"))),
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::LowSpeed => "low_speed",
            Regime::HighSpeed => "high_speed",
        })
    }
}

/// Recommended condition norm interval for a speed regime.
pub fn recommend_norm(regime: Regime) -> (f64, f64) {
    match regime {
        Regime::LowSpeed => (0.1, 1.0),
        Regime::HighSpeed => (1.0, 2.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpeedUnit {
    MetersPerSecond,
    KilometersPerHour,
    MilesPerHour,
    Knots,
}

impl SpeedUnit {
    pub fn to_meters_per_second(self, value: f64) -> f64 {
        match self {
            SpeedUnit::MetersPerSecond => value,
            SpeedUnit::KilometersPerHour => value / 3.6,
            SpeedUnit::MilesPerHour => value * 0.447_04,
            SpeedUnit::Knots => value * 1852.0 / 3600.0,
        }
    }
}

impl FromStr for SpeedUnit {
    type Err = ConditionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "m/s" | "mps" => Ok(SpeedUnit::MetersPerSecond),
            "km/h" | "kmh" | "kph" => Ok(SpeedUnit::KilometersPerHour),
            "mph" => Ok(SpeedUnit::MilesPerHour),
            "kn" | "kt" | "knots" => Ok(SpeedUnit::Knots),
            other => Err(invalid("unit", format!("unknown speed unit {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Speed {
    pub value: f64,
    pub unit: SpeedUnit,
}

impl Speed {
    pub fn new(value: f64, unit: SpeedUnit) -> Self {
        Self { value, unit }
    }

    pub fn meters_per_second(&self) -> f64 {
        self.unit.to_meters_per_second(self.value)
    }
}

impl FromStr for Speed {
    type Err = ConditionError;

    /// `"12 m/s"`, `"250km/h"`; a bare number is metres per second.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let split = s
            .find(|c: char| !(c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E')))
            .unwrap_or(s.len());
        let (num, unit) = s.split_at(split);
        let value = num
            .trim()
            .parse::<f64>()
            .map_err(|_| invalid("speed", format!("cannot parse {s:?}")))?;
        let unit = if unit.trim().is_empty() {
            SpeedUnit::MetersPerSecond
        } else {
            unit.parse()?
        };
        Ok(Speed { value, unit })
    }
}

/// Affine map of a real speed from `reference` onto `target`, clamped to
/// `target`.
pub fn normalize_real_speed(
    real: Speed,
    reference: (Speed, Speed),
    target: (f64, f64),
) -> Result<f64, ConditionError> {
    let x = real.meters_per_second();
    let lo = reference.0.meters_per_second();
    let hi = reference.1.meters_per_second();
    finite("real_speed", x)?;
    finite("target", target.0)?;
    finite("target", target.1)?;
    if !(lo.is_finite() && hi.is_finite()) || lo == hi {
        return Err(invalid("reference_range", format!("[{lo}, {hi}] m/s is degenerate")));
    }
    let y = target.0 + (x - lo) / (hi - lo) * (target.1 - target.0);
    let (a, b) = if target.0 <= target.1 { target } else { (target.1, target.0) };
    Ok(y.clamp(a, b))
}

/// A parsed condition spec file.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecFile {
    pub spec: ConditionSpec,
    /// Declared regime, if any.
    pub regime: Option<Regime>,
}

impl SpecFile {
    /// The declared regime, or the one the spec's largest norm falls in.
    pub fn regime(&self) -> Regime {
        self.regime.unwrap_or(if self.spec.max_norm() <= 1.0 {
            Regime::LowSpeed
        } else {
            Regime::HighSpeed
        })
    }
}

/// Parses `key = value` lines. `#` starts a comment. `kind` selects the
/// spec (`aero`, `hydro`, `crash`); `regime` is optional.
///
/// | kind  | keys |
/// |-------|------|
/// | aero  | `speed_norm`, `aoa_deg` (0), `sideslip_deg` (0) |
/// | hydro | `water_norm`, `air_norm` (0), `interface_height`, `yaw_deg` (0) |
/// | crash | `impact_point` (3 numbers), `impact_angle_deg` (0), `max_norm`, `decay_radius` (5) |
pub fn parse_spec_file(text: &str) -> Result<SpecFile, ConditionError> {
    let mut fields: Vec<(usize, String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConditionError::Parse {
                line: i + 1,
                message: format!("expected key = value, got {line:?}"),
            });
        };
        let key = k.trim().to_ascii_lowercase();
        if let Some((prev, ..)) = fields.iter().find(|(_, fk, _)| *fk == key) {
            return Err(ConditionError::Parse {
                line: i + 1,
                message: format!("{key} already set on line {prev}"),
            });
        }
        fields.push((i + 1, key, v.trim().to_string()));
    }

    let mut fields = Fields(fields);
    let kind = fields.take("kind").ok_or(ConditionError::MissingField("kind"))?;
    let regime = fields.take("regime").map(|(_, v)| v.parse()).transpose()?;
    let spec = match kind.1.to_ascii_lowercase().as_str() {
        "aero" => ConditionSpec::Aero(AeroSpec {
            speed_norm: fields.number("speed_norm", None)?,
            aoa_deg: fields.number("aoa_deg", Some(0.0))?,
            sideslip_deg: fields.number("sideslip_deg", Some(0.0))?,
        }),
        "hydro" => ConditionSpec::Hydro(HydroSpec {
            water_norm: fields.number("water_norm", None)?,
            air_norm: fields.number("air_norm", Some(0.0))?,
            interface_height: fields.number("interface_height", None)?,
            yaw_deg: fields.number("yaw_deg", Some(0.0))?,
        }),
        "crash" => ConditionSpec::Crash(CrashSpec {
            impact_point: fields.vector("impact_point")?,
            impact_angle_deg: fields.number("impact_angle_deg", Some(0.0))?,
            max_norm: fields.number("max_norm", None)?,
            decay_radius: fields.number("decay_radius", Some(DEFAULT_DECAY_RADIUS))?,
        }),
        other => {
            return Err(ConditionError::Parse {
                line: kind.0,
                message: format!("unknown kind {other:?}; expected aero, hydro or crash"),
            })
        }
    };
    if let Some((line, key, _)) = fields.0.first() {
        return Err(ConditionError::Parse {
            line: *line,
            message: format!("unknown field {key}"),
        });
    }
    spec.validate()?;
    Ok(SpecFile { spec, regime })
}

struct Fields(Vec<(usize, String, String)>);

impl Fields {
    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        let i = self.0.iter().position(|(_, k, _)| k == key)?;
        let (line, _, v) = self.0.remove(i);
        Some((line, v))
    }

    fn number(&mut self, key: &'static str, default: Option<f64>) -> Result<f64, ConditionError> {
        match self.take(key) {
            None => default.ok_or(ConditionError::MissingField(key)),
            Some((_, v)) => v
                .parse::<f64>()
                .map_err(|_| invalid(key, format!("{v:?} is not a number"))),
        }
    }

    fn vector(&mut self, key: &'static str) -> Result<[f64; 3], ConditionError> {
        let (_, v) = self.take(key).ok_or(ConditionError::MissingField(key))?;
        let parts: Vec<f64> = v
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| invalid(key, format!("{v:?} is not three numbers")))?;
        <[f64; 3]>::try_from(parts).map_err(|_| invalid(key, format!("{v:?} is not three numbers")))
    }
}

/// Parses a point file: one point per line as three numbers separated by
/// whitespace or commas. OBJ `v` records are accepted and other OBJ records
/// skipped; `#` starts a comment.
pub fn parse_points(text: &str) -> Result<Vec<Vec3>, ConditionError> {
    let mut points = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let mut line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(first) = line.split_whitespace().next() {
            if first.starts_with(|c: char| c.is_ascii_alphabetic()) {
                if first != "v" {
                    continue;
                }
                line = line[1..].trim_start();
            }
        }
        let nums: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        let parse_err = || ConditionError::Parse {
            line: i + 1,
            message: format!("expected three coordinates, got {raw:?}"),
        };
        if nums.len() != 3 {
            return Err(parse_err());
        }
        let mut p = [0.0; 3];
        for (k, s) in nums.iter().enumerate() {
            p[k] = s.parse::<f64>().map_err(|_| parse_err())?;
            if !p[k].is_finite() {
                return Err(parse_err());
            }
        }
        points.push(Vec3::from(p));
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts() -> Vec<Vec3> {
        vec![
            Vec3::new(0.0, 0.0, 0.1),
            Vec3::new(1.0, -2.0, 0.5),
            Vec3::new(-3.0, 1.0, 0.244),
        ]
    }

    #[test]
    fn aero_low_speed_default() {
        let c = build_aero(
            &AeroSpec {
                speed_norm: 0.3,
                aoa_deg: 0.0,
                sideslip_deg: 0.0,
            },
            &pts(),
        )
        .unwrap();
        assert!(c.velocities.iter().all(|v| *v == Vec3::new(0.3, 0.0, 0.0)));
        assert_eq!(c.provenance.convention, DIRECTION_CONVENTION);
    }

    #[test]
    fn aero_quarter_turn_points_up() {
        let c = build_aero(
            &AeroSpec {
                speed_norm: 1.0,
                aoa_deg: 90.0,
                sideslip_deg: 0.0,
            },
            &pts(),
        )
        .unwrap();
        for v in &c.velocities {
            assert!((v - Vec3::z()).norm() < 1e-12);
        }
        let s = build_aero(
            &AeroSpec {
                speed_norm: 1.0,
                aoa_deg: 0.0,
                sideslip_deg: 90.0,
            },
            &pts(),
        )
        .unwrap();
        assert!((s.velocities[0] - Vec3::y()).norm() < 1e-12);
    }

    #[test]
    fn hydro_two_phase() {
        let spec = HydroSpec {
            water_norm: 1.668,
            air_norm: 0.0,
            interface_height: 0.244,
            yaw_deg: 0.0,
        };
        let c = build_hydro(&spec, &pts()).unwrap();
        assert_eq!(c.velocities[0], Vec3::new(1.668, 0.0, 0.0));
        assert_eq!(c.velocities[1], Vec3::zeros());
        // On the interface counts as water.
        assert_eq!(c.velocities[2].norm(), 1.668);

        let yawed = build_hydro(&HydroSpec { yaw_deg: 11.0, ..spec }, &pts()).unwrap();
        let d = yawed.velocities[0] / 1.668;
        let r = 11f64.to_radians();
        assert!((d - Vec3::new(r.cos(), r.sin(), 0.0)).norm() < 1e-12);
    }

    #[test]
    fn crash_decays_linearly() {
        let spec = CrashSpec {
            impact_point: [1.0, 0.0, 0.0],
            impact_angle_deg: 0.0,
            max_norm: 0.3,
            decay_radius: 2.0,
        };
        let p = vec![Vec3::new(1.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0), Vec3::new(3.5, 0.0, 0.0)];
        let c = build_crash(&spec, &p).unwrap();
        assert_eq!(c.velocities[0].norm(), 0.3);
        assert_eq!(c.velocities[1].norm(), 0.15);
        assert_eq!(c.velocities[2], Vec3::zeros());
    }

    #[test]
    fn zero_speed_gives_zero_field() {
        let p = pts();
        let specs = [
            ConditionSpec::Aero(AeroSpec {
                speed_norm: 0.0,
                aoa_deg: 30.0,
                sideslip_deg: 10.0,
            }),
            ConditionSpec::Hydro(HydroSpec {
                water_norm: 0.0,
                air_norm: 0.0,
                interface_height: 0.2,
                yaw_deg: 5.0,
            }),
            ConditionSpec::Crash(CrashSpec {
                impact_point: [0.0; 3],
                impact_angle_deg: 45.0,
                max_norm: 0.0,
                decay_radius: 5.0,
            }),
        ];
        for s in specs {
            let c = s.build(&p).unwrap();
            assert!(c.velocities.iter().all(|v| v.iter().all(|x| *x == 0.0)));
        }
    }

    #[test]
    fn invalid_specs_name_the_field() {
        let e = build_aero(
            &AeroSpec {
                speed_norm: -1.0,
                aoa_deg: 0.0,
                sideslip_deg: 0.0,
            },
            &pts(),
        )
        .unwrap_err();
        assert!(matches!(e, ConditionError::Invalid { field: "speed_norm", .. }));
        let e = CrashSpec {
            impact_point: [0.0; 3],
            impact_angle_deg: 0.0,
            max_norm: 1.0,
            decay_radius: 0.0,
        }
        .validate()
        .unwrap_err();
        assert!(matches!(e, ConditionError::Invalid { field: "decay_radius", .. }));
    }

    #[test]
    fn norm_recipe() {
        assert_eq!(recommend_norm(Regime::LowSpeed), (0.1, 1.0));
        assert_eq!(recommend_norm(Regime::HighSpeed), (1.0, 2.0));
        let (lo, hi) = recommend_norm(Regime::HighSpeed);
        for (a, b) in [(1.0, 1.4), (1.4, 1.8)] {
            assert!(lo <= a && b <= hi);
        }
    }

    #[test]
    fn real_speed_normalization() {
        let ms = |v| Speed::new(v, SpeedUnit::MetersPerSecond);
        let r = (ms(100.0), ms(300.0));
        assert_eq!(normalize_real_speed(ms(200.0), r, (1.0, 1.4)).unwrap(), 1.2);
        assert_eq!(normalize_real_speed(ms(100.0), r, (1.0, 1.4)).unwrap(), 1.0);
        assert_eq!(normalize_real_speed(ms(900.0), r, (1.0, 1.4)).unwrap(), 1.4);
        let kmh: Speed = "720 km/h".parse().unwrap();
        assert!((normalize_real_speed(kmh, r, (1.0, 1.4)).unwrap() - 1.2).abs() < 1e-12);
        assert!(matches!(
            normalize_real_speed(ms(1.0), (ms(5.0), ms(5.0)), (0.0, 1.0)),
            Err(ConditionError::Invalid { field: "reference_range", .. })
        ));
    }

    #[test]
    fn shift_rotates_about_z() {
        let c = build_aero(
            &AeroSpec {
                speed_norm: 1.0,
                aoa_deg: 0.0,
                sideslip_deg: 0.0,
            },
            &pts(),
        )
        .unwrap();
        let s = c.shifted(90.0);
        assert!((s.velocities[0] - Vec3::y()).norm() < 1e-12);
        assert_eq!(s.provenance.shift_deg, 90.0);
    }

    #[test]
    fn spec_file_round_trip() {
        let f = parse_spec_file("# DTC hull\nkind = hydro\nwater_norm = 1.668\ninterface_height = 0.244\n").unwrap();
        assert_eq!(
            f.spec,
            ConditionSpec::Hydro(HydroSpec {
                water_norm: 1.668,
                air_norm: 0.0,
                interface_height: 0.244,
                yaw_deg: 0.0
            })
        );
        assert_eq!(f.regime(), Regime::HighSpeed);

        let f = parse_spec_file("kind=crash\nimpact_point = 1, 0, 0.5\nmax_norm=0.3\nregime=low_speed").unwrap();
        let ConditionSpec::Crash(c) = f.spec else { panic!() };
        assert_eq!(c.impact_point, [1.0, 0.0, 0.5]);
        assert_eq!(c.decay_radius, 5.0);
        assert_eq!(f.regime, Some(Regime::LowSpeed));
    }

    #[test]
    fn spec_file_errors() {
        let e = parse_spec_file("kind = aero\nspeed_norm = -0.3").unwrap_err();
        assert!(e.to_string().contains("speed_norm"));
        let e = parse_spec_file("kind = aero\nspeed_norm = fast").unwrap_err();
        assert!(matches!(e, ConditionError::Invalid { field: "speed_norm", .. }));
        assert_eq!(
            parse_spec_file("kind = aero").unwrap_err(),
            ConditionError::MissingField("speed_norm")
        );
        let e = parse_spec_file("kind = aero\nspeed_norm = 1\nsped = 2").unwrap_err();
        assert!(matches!(e, ConditionError::Parse { line: 3, .. }));
        assert!(e.to_string().contains("sped"));
        assert_eq!(parse_spec_file("speed_norm = 1").unwrap_err(), ConditionError::MissingField("kind"));
    }

    #[test]
    fn point_files() {
        let p = parse_points("# pts\n1 2 3\n4,5,6\nv 7 8 9\nf 1 2 3\n").unwrap();
        assert_eq!(p, vec![Vec3::new(1.0, 2.0, 3.0), Vec3::new(4.0, 5.0, 6.0), Vec3::new(7.0, 8.0, 9.0)]);
        assert!(matches!(parse_points("1 2\n"), Err(ConditionError::Parse { line: 1, .. })));
        assert!(matches!(parse_points("1 2 3\n1 2 nan\n"), Err(ConditionError::Parse { line: 2, .. })));
    }
}
