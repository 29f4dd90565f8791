//! File formats: trajectory and event CSVs, fit results as JSON, and
//! ingestion of daily compartment tables.

use std::collections::HashMap;
use std::io::{Read, Write};

use chrono::NaiveDate;

use crate::em::FitResult;
use crate::error::{Error, Result};
use crate::gillespie::EventRecord;
use crate::network::{ReactionNetwork, Trajectory};

/// Read a `time,<species...>` CSV.
pub fn read_trajectory<R: Read>(input: R) -> Result<Trajectory> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = rdr.headers()?.clone();
    if header.get(0) != Some("time") {
        return Err(Error::Ingest("first column must be 'time'".into()));
    }
    let species: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    if species.is_empty() {
        return Err(Error::Ingest("no species columns".into()));
    }
    let mut times = Vec::new();
    let mut states = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        // Header is line 1.
        let line = i + 2;
        if rec.len() != header.len() {
            return Err(Error::Ingest(format!(
                "line {line}: {} fields, expected {}",
                rec.len(),
                header.len()
            )));
        }
        let t: f64 = rec[0]
            .parse()
            .map_err(|_| Error::Ingest(format!("line {line}: bad time '{}'", &rec[0])))?;
        let mut row = Vec::with_capacity(species.len());
        for (l, field) in rec.iter().skip(1).enumerate() {
            let y: f64 = field.parse().map_err(|_| {
                Error::Ingest(format!("line {line}, column '{}': bad count '{field}'", species[l]))
            })?;
            if !y.is_finite() || y < 0.0 || y.fract() != 0.0 {
                return Err(Error::Ingest(format!(
                    "line {line}, column '{}': count {field} is not a nonnegative integer",
                    species[l]
                )));
            }
            row.push(y);
        }
        times.push(t);
        states.push(row);
    }
    Trajectory::new(species, times, states)
}

pub fn write_trajectory<W: Write>(traj: &Trajectory, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["time".to_string()];
    header.extend(traj.species().iter().cloned());
    w.write_record(&header)?;
    for (t, row) in traj.times().iter().zip(traj.states()) {
        let mut rec = vec![t.to_string()];
        rec.extend(row.iter().map(|y| y.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Write a `time,reaction` CSV with 1-based reaction indices.
pub fn write_events<W: Write>(rec: &EventRecord, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time", "reaction"])?;
    for (t, j) in &rec.events {
        w.write_record([t.to_string(), (j + 1).to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Read events written by [`write_events`]; returns 0-based indices.
pub fn read_events<R: Read>(net: &ReactionNetwork, input: R) -> Result<Vec<(f64, usize)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut events = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let bad = || Error::Ingest(format!("line {line}: expected 'time,reaction'"));
        let t: f64 = rec.get(0).ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let j: usize = rec.get(1).ok_or_else(bad)?.parse().map_err(|_| bad())?;
        if j == 0 || j > net.n_reactions() {
            return Err(Error::Ingest(format!(
                "line {line}: reaction {j} outside 1..={}",
                net.n_reactions()
            )));
        }
        events.push((t, j - 1));
    }
    Ok(events)
}

pub fn write_fit<W: Write>(fit: &FitResult, out: W) -> Result<()> {
    serde_json::to_writer_pretty(out, fit)?;
    Ok(())
}

pub fn read_fit<R: Read>(input: R) -> Result<FitResult> {
    Ok(serde_json::from_reader(input)?)
}

/// Inclusive date window for [`ingest_compartments`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DateWindow {
    pub from: Option<NaiveDate>,
    pub to: Option<NaiveDate>,
}

impl DateWindow {
    /// Window from optional `YYYY-MM-DD` bounds.
    pub fn parse(from: Option<&str>, to: Option<&str>) -> Result<Self> {
        let date = |s: &str| {
            NaiveDate::parse_from_str(s, "%Y-%m-%d")
                .map_err(|_| Error::InvalidArgument(format!("bad date '{s}', expected YYYY-MM-DD")))
        };
        let window = DateWindow {
            from: from.map(date).transpose()?,
            to: to.map(date).transpose()?,
        };
        if let (Some(f), Some(t)) = (window.from, window.to) {
            if f > t {
                return Err(Error::InvalidArgument(format!("date window is empty: {f} after {t}")));
            }
        }
        Ok(window)
    }

    fn contains(&self, d: NaiveDate) -> bool {
        self.from.is_none_or(|f| d >= f) && self.to.is_none_or(|t| d <= t)
    }
}

/// Compartment table pivoted to one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Compartments {
    /// Regions in order of first appearance.
    pub regions: Vec<String>,
    pub dates: Vec<NaiveDate>,
    /// Species `I_k, R_k, D_k` per region; times are days since the first
    /// retained date.
    pub trajectory: Trajectory,
}

/// Pivot a `date,region,I,R,D` table (ISO dates) into a trajectory with
/// species laid out as in [`crate::network::build_sir_named`].
///
/// Dates must increase strictly within each region, and every region must
/// report the same dates.
pub fn ingest_compartments<R: Read>(input: R, window: DateWindow) -> Result<Compartments> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Ingest(format!("missing column '{name}'")))
    };
    let (c_date, c_region) = (col("date")?, col("region")?);
    let counts = [col("I")?, col("R")?, col("D")?];

    let mut regions: Vec<String> = Vec::new();
    let mut series: HashMap<String, Vec<(NaiveDate, [f64; 3])>> = HashMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let date = NaiveDate::parse_from_str(field(c_date), "%Y-%m-%d").map_err(|_| {
            Error::Ingest(format!("line {line}: bad date '{}', expected YYYY-MM-DD", field(c_date)))
        })?;
        let region = field(c_region).to_string();
        let mut row = [0.0; 3];
        for (k, &c) in counts.iter().enumerate() {
            let y: f64 = field(c).parse().map_err(|_| {
                Error::Ingest(format!("line {line}, column '{}': bad count '{}'", &header[c], field(c)))
            })?;
            if !y.is_finite() || y < 0.0 || y.fract() != 0.0 {
                return Err(Error::Ingest(format!(
                    "line {line}, column '{}': count {} is not a nonnegative integer",
                    &header[c],
                    field(c)
                )));
            }
            row[k] = y;
        }
        let entry = series.entry(region.clone()).or_insert_with(|| {
            regions.push(region.clone());
            Vec::new()
        });
        if let Some((prev, _)) = entry.last() {
            if date <= *prev {
                return Err(Error::Ingest(format!(
                    "line {line}: dates for region '{region}' are not increasing ({prev} then {date})"
                )));
            }
        }
        if window.contains(date) {
            entry.push((date, row));
        }
    }
    if regions.is_empty() {
        return Err(Error::Ingest("no data rows".into()));
    }
    let dates: Vec<NaiveDate> = series[&regions[0]].iter().map(|(d, _)| *d).collect();
    if dates.is_empty() {
        return Err(Error::Ingest("no rows inside the date window".into()));
    }
    for r in &regions[1..] {
        let other: Vec<NaiveDate> = series[r].iter().map(|(d, _)| *d).collect();
        if other != dates {
            return Err(Error::Ingest(format!(
                "region '{r}' reports different dates than region '{}'",
                regions[0]
            )));
        }
    }
    let start = dates[0];
    let times: Vec<f64> = dates.iter().map(|d| (*d - start).num_days() as f64).collect();
    let states: Vec<Vec<f64>> = (0..dates.len())
        .map(|i| regions.iter().flat_map(|r| series[r][i].1).collect())
        .collect();
    let species: Vec<String> = regions
        .iter()
        .flat_map(|r| [format!("I_{r}"), format!("R_{r}"), format!("D_{r}")])
        .collect();
    Ok(Compartments {
        trajectory: Trajectory::new(species, times, states)?,
        regions,
        dates,
    })
}
