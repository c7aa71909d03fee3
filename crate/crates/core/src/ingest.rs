//! Parsing and validation of load, fuel-mix and outage files, and reduction
//! of hourly load to daily energy / peak summaries.
//!
//! Canonical units are MW for power and MWh for energy.
//!
//! File layouts (comma separated, UTF-8, one header line, `#` starts a
//! comment line):
//!
//! | file     | header                                           |
//! |----------|--------------------------------------------------|
//! | load     | `date,hour,load_mw` (hour 0..=23)                |
//! | fuel mix | `timestamp,wind_mw,solar_mw,hydro_mw,other_mw`   |
//! | outages  | `timestamp,outage_mw,telemetered_output_mw`      |
//! | daily    | `date,total_energy_mwh,peak_demand_mw,hours_present` |

use std::collections::BTreeMap;
use std::io::Read;

use chrono::{NaiveDate, NaiveDateTime, NaiveTime, Timelike};

use crate::calendar::{format_timestamp, parse_date, parse_timestamp};
use crate::error::{Error, Result};
use crate::output::{num, Table};

pub const LOAD_HEADER: [&str; 3] = ["date", "hour", "load_mw"];
pub const FUEL_MIX_HEADER: [&str; 5] = ["timestamp", "wind_mw", "solar_mw", "hydro_mw", "other_mw"];
pub const OUTAGE_HEADER: [&str; 3] = ["timestamp", "outage_mw", "telemetered_output_mw"];
pub const DAILY_HEADER: [&str; 4] = ["date", "total_energy_mwh", "peak_demand_mw", "hours_present"];

/// Days with fewer hours than this are left out of window searches.
pub const DEFAULT_MIN_HOURS: u8 = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HourlyLoadRecord {
    pub timestamp: NaiveDateTime,
    pub load_mw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DailyLoadSummary {
    pub date: NaiveDate,
    pub total_energy_mwh: f64,
    pub peak_demand_mw: f64,
    pub hours_present: u8,
}

impl DailyLoadSummary {
    pub fn is_complete(&self, min_hours: u8) -> bool {
        self.hours_present >= min_hours
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FuelMixRecord {
    pub timestamp: NaiveDateTime,
    pub wind_mw: f64,
    pub solar_mw: f64,
    pub hydro_mw: f64,
    pub other_mw: f64,
}

impl FuelMixRecord {
    /// Wind + solar + hydro.
    pub fn non_thermal_mw(&self) -> f64 {
        self.wind_mw + self.solar_mw + self.hydro_mw
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutageRecord {
    pub timestamp: NaiveDateTime,
    pub outage_mw: f64,
    pub telemetered_output_mw: Option<f64>,
}

// ---------------------------------------------------------------------------
// table reading

/// Reads a headed CSV table, checks the header and hands back each data row
/// with its 1-based line number.
pub(crate) fn read_rows<R: Read>(source: R, header: &[&str]) -> Result<Vec<(u64, Vec<String>)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(source);

    let mut rows = Vec::new();
    let mut saw_header = false;
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if !saw_header {
            let found: Vec<&str> = record.iter().collect();
            if found != header {
                return Err(Error::Header {
                    line,
                    expected: header.join(","),
                    found: found.join(","),
                });
            }
            saw_header = true;
            continue;
        }
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        if record.len() != header.len() {
            return Err(Error::malformed(
                line,
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        rows.push((line, record.iter().map(str::to_owned).collect()));
    }
    if !saw_header {
        return Err(Error::Header {
            line: 1,
            expected: header.join(","),
            found: String::new(),
        });
    }
    Ok(rows)
}

pub(crate) fn field_f64(line: u64, name: &str, raw: &str) -> Result<f64> {
    let v: f64 = raw
        .parse()
        .map_err(|_| Error::malformed(line, format!("{name}: `{raw}` is not a number")))?;
    if !v.is_finite() {
        return Err(Error::malformed(line, format!("{name}: `{raw}` is not finite")));
    }
    Ok(v)
}

fn non_negative(line: u64, field: &'static str, raw: &str) -> Result<f64> {
    let v = field_f64(line, field, raw)?;
    if v < 0.0 {
        return Err(Error::Negative { line, field, value: v });
    }
    Ok(v)
}

fn timestamp_field(line: u64, raw: &str) -> Result<NaiveDateTime> {
    parse_timestamp(raw).ok_or_else(|| Error::malformed(line, format!("bad timestamp `{raw}`")))
}

fn date_field(line: u64, raw: &str) -> Result<NaiveDate> {
    parse_date(raw).ok_or_else(|| Error::malformed(line, format!("bad date `{raw}`")))
}

fn check_increasing(line: u64, prev: Option<NaiveDateTime>, ts: NaiveDateTime) -> Result<()> {
    match prev {
        Some(p) if p == ts => Err(Error::DuplicateTimestamp { line, timestamp: ts }),
        Some(p) if p > ts => Err(Error::NonMonotone { line, timestamp: ts }),
        _ => Ok(()),
    }
}

fn on_quarter_hour(ts: NaiveDateTime) -> bool {
    ts.minute().is_multiple_of(15) && ts.second() == 0 && ts.nanosecond() == 0
}

// ---------------------------------------------------------------------------
// load

pub fn parse_hourly_load<R: Read>(source: R) -> Result<Vec<HourlyLoadRecord>> {
    let mut out = Vec::new();
    let mut prev = None;
    for (line, row) in read_rows(source, &LOAD_HEADER)? {
        let date = date_field(line, &row[0])?;
        let hour: u32 = row[1]
            .parse()
            .ok()
            .filter(|h| *h < 24)
            .ok_or_else(|| Error::malformed(line, format!("hour `{}` not in 0..=23", row[1])))?;
        let load_mw = non_negative(line, "load_mw", &row[2])?;
        let timestamp = date.and_time(NaiveTime::from_hms_opt(hour, 0, 0).expect("hour < 24"));
        check_increasing(line, prev, timestamp)?;
        prev = Some(timestamp);
        out.push(HourlyLoadRecord { timestamp, load_mw });
    }
    Ok(out)
}

pub fn write_hourly_load(records: &[HourlyLoadRecord]) -> String {
    let mut t = Table::new(&LOAD_HEADER);
    for r in records {
        t.row([
            r.timestamp.date().format("%Y-%m-%d").to_string(),
            r.timestamp.hour().to_string(),
            num(r.load_mw),
        ]);
    }
    t.into_string()
}

/// One summary per calendar day present in `hourly`. Energy is the sum of
/// hourly MW over one-hour intervals.
pub fn aggregate_daily(hourly: &[HourlyLoadRecord]) -> Vec<DailyLoadSummary> {
    let mut by_day: BTreeMap<NaiveDate, Vec<&HourlyLoadRecord>> = BTreeMap::new();
    for r in hourly {
        by_day.entry(r.timestamp.date()).or_default().push(r);
    }
    by_day
        .into_iter()
        .map(|(date, mut recs)| {
            // fixed summation order regardless of input order
            recs.sort_by_key(|r| r.timestamp);
            DailyLoadSummary {
                date,
                total_energy_mwh: recs.iter().map(|r| r.load_mw).sum(),
                peak_demand_mw: recs.iter().map(|r| r.load_mw).fold(f64::NEG_INFINITY, f64::max),
                hours_present: recs.len().min(u8::MAX as usize) as u8,
            }
        })
        .collect()
}

pub fn write_daily(days: &[DailyLoadSummary]) -> String {
    let mut t = Table::new(&DAILY_HEADER);
    for d in days {
        t.row([
            d.date.format("%Y-%m-%d").to_string(),
            num(d.total_energy_mwh),
            num(d.peak_demand_mw),
            d.hours_present.to_string(),
        ]);
    }
    t.into_string()
}

pub fn parse_daily<R: Read>(source: R) -> Result<Vec<DailyLoadSummary>> {
    let mut out: Vec<DailyLoadSummary> = Vec::new();
    for (line, row) in read_rows(source, &DAILY_HEADER)? {
        let date = date_field(line, &row[0])?;
        if let Some(last) = out.last() {
            if last.date >= date {
                return Err(Error::NonMonotone {
                    line,
                    timestamp: date.and_time(NaiveTime::MIN),
                });
            }
        }
        let hours_present: u8 = row[3]
            .parse()
            .ok()
            .filter(|h| *h <= 24)
            .ok_or_else(|| Error::malformed(line, format!("hours_present `{}` not in 0..=24", row[3])))?;
        out.push(DailyLoadSummary {
            date,
            total_energy_mwh: non_negative(line, "total_energy_mwh", &row[1])?,
            peak_demand_mw: non_negative(line, "peak_demand_mw", &row[2])?,
            hours_present,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// fuel mix

pub fn parse_fuel_mix<R: Read>(source: R) -> Result<Vec<FuelMixRecord>> {
    let mut out = Vec::new();
    let mut prev = None;
    for (line, row) in read_rows(source, &FUEL_MIX_HEADER)? {
        let timestamp = timestamp_field(line, &row[0])?;
        if !on_quarter_hour(timestamp) {
            return Err(Error::Misaligned { line, timestamp });
        }
        check_increasing(line, prev, timestamp)?;
        prev = Some(timestamp);
        out.push(FuelMixRecord {
            timestamp,
            wind_mw: non_negative(line, "wind_mw", &row[1])?,
            solar_mw: non_negative(line, "solar_mw", &row[2])?,
            hydro_mw: non_negative(line, "hydro_mw", &row[3])?,
            other_mw: non_negative(line, "other_mw", &row[4])?,
        });
    }
    Ok(out)
}

fn floor_to_hour(ts: NaiveDateTime) -> NaiveDateTime {
    ts.date()
        .and_time(NaiveTime::from_hms_opt(ts.hour(), 0, 0).expect("valid hour"))
}

/// Mean non-thermal MW per hour. MW is a rate, so sub-hourly values are
/// averaged rather than summed.
pub fn hourly_non_thermal(mix: &[FuelMixRecord]) -> BTreeMap<NaiveDateTime, f64> {
    let mut acc: BTreeMap<NaiveDateTime, (f64, u32)> = BTreeMap::new();
    for m in mix {
        let e = acc.entry(floor_to_hour(m.timestamp)).or_insert((0.0, 0));
        e.0 += m.non_thermal_mw();
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(h, (sum, n))| (h, sum / f64::from(n)))
        .collect()
}

/// Load minus wind, solar and hydro, floored at zero.
pub fn net_non_thermal(
    hourly: &[HourlyLoadRecord],
    mix: &[FuelMixRecord],
) -> Result<Vec<HourlyLoadRecord>> {
    let per_hour = hourly_non_thermal(mix);
    hourly
        .iter()
        .map(|r| {
            let nt = per_hour
                .get(&floor_to_hour(r.timestamp))
                .ok_or(Error::MissingMixCoverage(r.timestamp))?;
            Ok(HourlyLoadRecord {
                timestamp: r.timestamp,
                load_mw: (r.load_mw - nt).max(0.0),
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// outages

pub fn parse_outages<R: Read>(source: R) -> Result<Vec<OutageRecord>> {
    let mut out = Vec::new();
    for (line, row) in read_rows(source, &OUTAGE_HEADER)? {
        let timestamp = timestamp_field(line, &row[0])?;
        if !on_quarter_hour(timestamp) {
            return Err(Error::Misaligned { line, timestamp });
        }
        let outage_mw = non_negative(line, "outage_mw", &row[1])?;
        let telemetered_output_mw = if row[2].is_empty() {
            None
        } else {
            Some(non_negative(line, "telemetered_output_mw", &row[2])?)
        };
        out.push((
            line,
            OutageRecord {
                timestamp,
                outage_mw,
                telemetered_output_mw,
            },
        ));
    }
    out.sort_by_key(|(_, r)| r.timestamp);
    for pair in out.windows(2) {
        if pair[0].1.timestamp == pair[1].1.timestamp {
            return Err(Error::DuplicateTimestamp {
                line: pair[0].0.max(pair[1].0),
                timestamp: pair[1].1.timestamp,
            });
        }
    }
    Ok(out.into_iter().map(|(_, r)| r).collect())
}

pub fn write_outages(records: &[OutageRecord]) -> String {
    let mut t = Table::new(&OUTAGE_HEADER);
    for r in records {
        t.row([
            format_timestamp(r.timestamp),
            num(r.outage_mw),
            r.telemetered_output_mw.map(num).unwrap_or_default(),
        ]);
    }
    t.into_string()
}

pub fn write_fuel_mix(records: &[FuelMixRecord]) -> String {
    let mut t = Table::new(&FUEL_MIX_HEADER);
    for r in records {
        t.row([
            format_timestamp(r.timestamp),
            num(r.wind_mw),
            num(r.solar_mw),
            num(r.hydro_mw),
            num(r.other_mw),
        ]);
    }
    t.into_string()
}
