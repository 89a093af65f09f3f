//! Recorded-trajectory environment: loading normalized trajectory CSV files
//! and querying the (non-reactive) recorded vehicles at arbitrary times.
//!
//! Schema: a header row naming at least `vehicle_id,t,x,y`, optionally `vx`
//! and `vy`; one row per vehicle per sample; lines starting with `#` are
//! ignored. Missing velocity columns are derived from the positions.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prediction::SvId;
use crate::safety::SvState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDataset {
    /// Time-sorted samples per vehicle id.
    pub vehicles: BTreeMap<SvId, Vec<TrajectorySample>>,
    /// Median spacing between consecutive samples (s).
    pub timestep: f64,
    pub start: f64,
    pub end: f64,
    /// Whether any velocity column was reconstructed from positions.
    pub velocities_derived: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimestepStats {
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

impl TrajectoryDataset {
    pub fn vehicle_count(&self) -> usize {
        self.vehicles.len()
    }

    pub fn sample_count(&self) -> usize {
        self.vehicles.values().map(Vec::len).sum()
    }

    pub fn timestep_stats(&self) -> TimestepStats {
        let mut dts = sample_spacings(&self.vehicles);
        dts.sort_by(f64::total_cmp);
        match (dts.first(), dts.last()) {
            (Some(&min), Some(&max)) => TimestepStats {
                min,
                median: dts[dts.len() / 2],
                max,
            },
            _ => TimestepStats {
                min: f64::NAN,
                median: f64::NAN,
                max: f64::NAN,
            },
        }
    }

    /// Writes the dataset back in the normalized schema with explicit
    /// velocities.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["vehicle_id", "t", "x", "y", "vx", "vy"])?;
        for (id, samples) in &self.vehicles {
            for s in samples {
                out.write_record(&[
                    id.to_string(),
                    s.t.to_string(),
                    s.x.to_string(),
                    s.y.to_string(),
                    s.vx.to_string(),
                    s.vy.to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

fn sample_spacings(vehicles: &BTreeMap<SvId, Vec<TrajectorySample>>) -> Vec<f64> {
    vehicles
        .values()
        .flat_map(|s| s.windows(2).map(|p| p[1].t - p[0].t))
        .collect()
}

pub fn load_trajectories(path: impl AsRef<Path>) -> Result<TrajectoryDataset> {
    let file = std::fs::File::open(path)?;
    parse_trajectories(std::io::BufReader::new(file))
}

struct Columns {
    id: usize,
    t: usize,
    x: usize,
    y: usize,
    vx: Option<usize>,
    vy: Option<usize>,
}

fn columns(headers: &csv::StringRecord) -> Result<Columns> {
    let find = |name: &str| headers.iter().position(|h| h == name);
    let need = |name: &str| find(name).ok_or_else(|| Error::MissingColumn(name.into()));
    Ok(Columns {
        id: need("vehicle_id")?,
        t: need("t")?,
        x: need("x")?,
        y: need("y")?,
        vx: find("vx"),
        vy: find("vy"),
    })
}

fn field(rec: &csv::StringRecord, i: usize, name: &str, row: usize) -> Result<f64> {
    let raw = rec.get(i).ok_or_else(|| Error::Parse {
        row,
        reason: format!("missing value for `{name}`"),
    })?;
    let v: f64 = raw.parse().map_err(|_| Error::Parse {
        row,
        reason: format!("`{name}` is not a number: {raw:?}"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            row,
            reason: format!("`{name}` is not finite"),
        });
    }
    Ok(v)
}

/// Parses a dataset from any reader. Row numbers in errors are 1-based file
/// line numbers.
pub fn parse_trajectories<R: Read>(reader: R) -> Result<TrajectoryDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let cols = columns(&headers)?;

    let mut vehicles: BTreeMap<SvId, Vec<TrajectorySample>> = BTreeMap::new();
    let mut record = csv::StringRecord::new();
    while rdr.read_record(&mut record)? {
        let row = record.position().map_or(0, |p| p.line() as usize);
        let raw_id = record.get(cols.id).unwrap_or("");
        let id: SvId = raw_id.parse().map_err(|_| Error::Parse {
            row,
            reason: format!("`vehicle_id` is not an integer: {raw_id:?}"),
        })?;
        let t = field(&record, cols.t, "t", row)?;
        let x = field(&record, cols.x, "x", row)?;
        let y = field(&record, cols.y, "y", row)?;
        let vx = cols.vx.map(|i| field(&record, i, "vx", row)).transpose()?;
        let vy = cols.vy.map(|i| field(&record, i, "vy", row)).transpose()?;
        let samples = vehicles.entry(id).or_default();
        if let Some(prev) = samples.last() {
            if !(t > prev.t) {
                return Err(Error::Data {
                    vehicle_id: id,
                    row,
                    reason: format!("time {t} does not increase (previous sample at {})", prev.t),
                });
            }
        }
        samples.push(TrajectorySample {
            t,
            x,
            y,
            vx: vx.unwrap_or(f64::NAN),
            vy: vy.unwrap_or(f64::NAN),
        });
    }
    if vehicles.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let derive_x = cols.vx.is_none();
    let derive_y = cols.vy.is_none();
    for samples in vehicles.values_mut() {
        if derive_x {
            let v = finite_difference(samples, |s| s.x);
            samples.iter_mut().zip(v).for_each(|(s, v)| s.vx = v);
        }
        if derive_y {
            let v = finite_difference(samples, |s| s.y);
            samples.iter_mut().zip(v).for_each(|(s, v)| s.vy = v);
        }
    }

    let mut dts = sample_spacings(&vehicles);
    dts.sort_by(f64::total_cmp);
    let timestep = dts.get(dts.len() / 2).copied().unwrap_or(f64::NAN);
    let start = vehicles.values().map(|s| s[0].t).fold(f64::INFINITY, f64::min);
    let end = vehicles
        .values()
        .map(|s| s[s.len() - 1].t)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(TrajectoryDataset {
        vehicles,
        timestep,
        start,
        end,
        velocities_derived: derive_x || derive_y,
    })
}

/// Central differences inside, one-sided at the ends; a single sample gets
/// zero velocity.
fn finite_difference(s: &[TrajectorySample], f: impl Fn(&TrajectorySample) -> f64) -> Vec<f64> {
    let n = s.len();
    if n < 2 {
        return vec![0.0; n];
    }
    (0..n)
        .map(|i| {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
            (f(&s[b]) - f(&s[a])) / (s[b].t - s[a].t)
        })
        .collect()
}

fn lerp(a: f64, b: f64, r: f64) -> f64 {
    a + (b - a) * r
}

/// Recorded vehicles at time `t`, linearly interpolated between samples and
/// ordered by id. Vehicles whose record does not cover `t` are omitted.
pub fn world_at(ds: &TrajectoryDataset, t: f64) -> Result<Vec<(SvId, SvState)>> {
    if !(t >= ds.start && t <= ds.end) {
        return Err(Error::OutOfRange {
            t,
            start: ds.start,
            end: ds.end,
        });
    }
    let mut out = Vec::new();
    for (&id, s) in &ds.vehicles {
        let (first, last) = (s[0].t, s[s.len() - 1].t);
        if t < first || t > last {
            continue;
        }
        // first sample strictly after t
        let hi = s.partition_point(|p| p.t <= t);
        let state = if hi == 0 {
            continue;
        } else if hi == s.len() || s[hi - 1].t == t {
            let p = &s[hi - 1];
            SvState::new(p.x, p.y, p.vx, p.vy)
        } else {
            let (a, b) = (&s[hi - 1], &s[hi]);
            let r = (t - a.t) / (b.t - a.t);
            SvState::new(lerp(a.x, b.x, r), lerp(a.y, b.y, r), lerp(a.vx, b.vx, r), lerp(a.vy, b.vy, r))
        };
        out.push((id, state));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<TrajectoryDataset> {
        parse_trajectories(s.as_bytes())
    }

    #[test]
    fn explicit_velocities_echo() {
        let ds = parse("vehicle_id,t,x,y,vx,vy\n1,0,0,1,10,0\n1,0.08,0.8,1,10,0.5\n1,0.16,1.6,1.04,10,0\n").unwrap();
        assert_eq!(ds.vehicle_count(), 1);
        let s = &ds.vehicles[&1];
        assert_eq!(s.len(), 3);
        assert_eq!(s[1], TrajectorySample { t: 0.08, x: 0.8, y: 1.0, vx: 10.0, vy: 0.5 });
        assert!(!ds.velocities_derived);
        assert_eq!((ds.start, ds.end), (0.0, 0.16));
        assert!((ds.timestep - 0.08).abs() < 1e-12);
    }

    #[test]
    fn derived_velocities_on_linear_motion() {
        let mut text = String::from("# x = 10 t\nvehicle_id,t,x,y\n");
        for k in 0..6 {
            let t = 0.08 * k as f64;
            text.push_str(&format!("4,{t},{},2\n", 10.0 * t));
        }
        let ds = parse(&text).unwrap();
        assert!(ds.velocities_derived);
        for s in &ds.vehicles[&4] {
            assert!((s.vx - 10.0).abs() < 1e-9, "{}", s.vx);
            assert_eq!(s.vy, 0.0);
        }
    }

    #[test]
    fn backwards_time_is_rejected_with_row() {
        let err = parse("vehicle_id,t,x,y\n1,0,0,0\n1,0.1,1,0\n1,0.05,2,0\n").unwrap_err();
        match err {
            Error::Data { vehicle_id, row, .. } => {
                assert_eq!(vehicle_id, 1);
                assert_eq!(row, 4);
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn schema_errors() {
        match parse("vehicle_id,t,x\n1,0,0\n").unwrap_err() {
            Error::MissingColumn(c) => assert_eq!(c, "y"),
            other => panic!("{other}"),
        }
        assert!(matches!(parse(""), Err(Error::EmptyDataset)));
        assert!(matches!(parse("vehicle_id,t,x,y\n"), Err(Error::EmptyDataset)));
        assert!(matches!(parse("vehicle_id,t,x,y\n1,0,abc,0\n"), Err(Error::Parse { row: 2, .. })));
        assert!(matches!(parse("vehicle_id,t,x,y\n1,0,inf,0\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn world_at_examples() {
        let ds = parse("vehicle_id,t,x,y,vx,vy\n1,0,0,0,1,0\n1,1,1,0,1,0\n2,0,5,4,0,0\n2,0.5,5,4,0,0\n").unwrap();
        let w = world_at(&ds, 0.0).unwrap();
        assert_eq!(w, vec![(1, SvState::new(0.0, 0.0, 1.0, 0.0)), (2, SvState::new(5.0, 4.0, 0.0, 0.0))]);
        let w = world_at(&ds, 0.5).unwrap();
        assert_eq!(w[0].1.ox, 0.5);
        assert_eq!(w.len(), 2);
        // vehicle 2's record ends before t
        let w = world_at(&ds, 0.5 + 1e-9).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(world_at(&ds, 1.0).unwrap()[0].1.ox, 1.0);
        assert!(matches!(world_at(&ds, 1.01), Err(Error::OutOfRange { .. })));
        assert!(matches!(world_at(&ds, -0.01), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn world_at_is_continuous() {
        let ds = parse("vehicle_id,t,x,y\n1,0,0,0\n1,0.08,1,0.2\n1,0.16,3,0.1\n").unwrap();
        for t in [0.05, 0.08, 0.1] {
            let a = world_at(&ds, t).unwrap()[0].1;
            let b = world_at(&ds, t + 1e-10).unwrap()[0].1;
            assert!((a.ox - b.ox).abs() < 1e-8 && (a.oy - b.oy).abs() < 1e-8);
        }
    }

    #[test]
    fn reserialization_is_idempotent() {
        let ds = parse("vehicle_id,t,x,y\n3,0,0.1,7\n3,0.08,1.3,7.01\n3,0.16,2.2,7.05\n9,0.08,-4,2\n").unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let again = parse_trajectories(buf.as_slice()).unwrap();
        assert_eq!(again.vehicles, ds.vehicles);
        let mut buf2 = Vec::new();
        again.write_csv(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }
}
