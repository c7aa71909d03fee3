//! Maintenance headroom: outage averages over calendar periods, the
//! incremental outage attributed to shoulder-season maintenance, and how much
//! hourly demand would go unmet if that increment were moved into winter.

use std::fmt;

use chrono::{Datelike, NaiveDate};

use crate::calendar::{days_in_month, ymd};
use crate::error::{Error, Result};
use crate::ingest::{HourlyLoadRecord, OutageRecord};
use crate::output::{num, sig3, Table};

/// Reference figures reported for ERCOT, used for comparison in reports.
pub mod published {
    /// Mean outages, Mar 15 - May 1 and Oct 15 - Nov 30 of 2022 pooled.
    pub const SHOULDER_POOLED_GW: f64 = 22.1;
    /// Mean outages, December and January pooled, as stated in the narrative.
    pub const WINTER_POOLED_GW: f64 = 16.6;
    pub const JANUARY_2022_GW: f64 = 10.3;
    pub const DECEMBER_2022_GW: f64 = 12.6;
    pub const INCREMENTAL_MAINTENANCE_GW: f64 = 5.5;

    /// Per-period 2022/23 averages: (label, GW).
    pub const PERIOD_OUTAGES_GW: [(&str, f64); 6] = [
        ("January 1-January 31", 10.3),
        ("March 15-May 1", 24.0),
        ("October 15-November 30", 20.2),
        ("March 2-April 15", 22.8),
        ("December 1-December 31", 12.6),
        ("December 31 2022-February 13 2023", 8.64),
    ];

    /// Percent of hourly demand above (max output - 5.5 GW): (year, month, %).
    pub const UNMET_PCT: [(i32, u32, f64); 6] = [
        (2020, 1, 10.2),
        (2020, 12, 1.75),
        (2021, 1, 2.02),
        (2021, 12, 23.1),
        (2022, 1, 2.02),
        (2022, 12, 2.42),
    ];

    /// Mean of the January and December monthly figures. This does not
    /// reproduce [`WINTER_POOLED_GW`]; both are kept side by side.
    pub fn winter_from_monthly() -> f64 {
        0.5 * (JANUARY_2022_GW + DECEMBER_2022_GW)
    }
}

/// Closed date interval `[start, end]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Period {
    pub label: String,
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl Period {
    pub fn new(label: impl Into<String>, start: NaiveDate, end: NaiveDate) -> Self {
        Period {
            label: label.into(),
            start,
            end,
        }
    }

    pub fn month(year: i32, month: u32) -> Self {
        Period::new(
            format!("{year}-{month:02}"),
            ymd(year, month, 1),
            ymd(year, month, days_in_month(year, month)),
        )
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({}..{})", self.label, self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodOutageStat {
    pub label: String,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub mean_outage_gw: f64,
    pub records: usize,
}

/// Mean outage capacity over every record dated inside any of `periods`.
pub fn average_outages_pooled(
    records: &[OutageRecord],
    periods: &[Period],
    label: &str,
) -> Result<PeriodOutageStat> {
    let (sum, n) = records
        .iter()
        .filter(|r| periods.iter().any(|p| p.contains(r.timestamp.date())))
        .fold((0.0, 0usize), |(s, n), r| (s + r.outage_mw, n + 1));
    if n == 0 {
        return Err(Error::EmptyPeriod(label.to_string()));
    }
    Ok(PeriodOutageStat {
        label: label.to_string(),
        start: periods.iter().map(|p| p.start).min().expect("non-empty"),
        end: periods.iter().map(|p| p.end).max().expect("non-empty"),
        mean_outage_gw: sum / n as f64 / 1000.0,
        records: n,
    })
}

pub fn average_outages(records: &[OutageRecord], period: &Period) -> Result<PeriodOutageStat> {
    average_outages_pooled(records, std::slice::from_ref(period), &period.label)
}

/// Extra outage capacity attributed to shoulder-season maintenance.
pub fn incremental_maintenance_delta(shoulder_mean_gw: f64, winter_mean_gw: f64) -> f64 {
    shoulder_mean_gw - winter_mean_gw
}

/// Percent of hours whose demand exceeds `max_output - extra_outage`.
///
/// Supply and demand are not matched hour by hour: the threshold is a single
/// number per month.
pub fn unmet_demand_fraction(demand_mw: &[f64], max_output_mw: f64, extra_outage_mw: f64) -> Result<f64> {
    if demand_mw.is_empty() {
        return Err(Error::Empty("demand series"));
    }
    if extra_outage_mw < 0.0 || max_output_mw < extra_outage_mw {
        return Err(Error::InvalidArgument(format!(
            "need max_output ({max_output_mw}) >= extra_outage ({extra_outage_mw}) >= 0"
        )));
    }
    let threshold = max_output_mw - extra_outage_mw;
    let over = demand_mw.iter().filter(|d| **d > threshold).count();
    Ok(100.0 * over as f64 / demand_mw.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdequacyResult {
    pub month: String,
    pub max_output_gw: f64,
    pub extra_outage_gw: f64,
    pub pct_unmet: f64,
    pub hours: usize,
}

/// Unmet-demand percentage for one calendar month, using the month's largest
/// telemetered output as available capacity.
pub fn monthly_unmet(
    load: &[HourlyLoadRecord],
    outages: &[OutageRecord],
    year: i32,
    month: u32,
    extra_outage_mw: f64,
) -> Result<AdequacyResult> {
    let period = Period::month(year, month);
    let max_output = outages
        .iter()
        .filter(|r| period.contains(r.timestamp.date()))
        .filter_map(|r| r.telemetered_output_mw)
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))
        .ok_or_else(|| Error::EmptyPeriod(format!("telemetered output in {period}")))?;
    let demand: Vec<f64> = load
        .iter()
        .filter(|r| period.contains(r.timestamp.date()))
        .map(|r| r.load_mw)
        .collect();
    let pct_unmet = unmet_demand_fraction(&demand, max_output, extra_outage_mw)
        .map_err(|e| match e {
            Error::Empty(_) => Error::EmptyPeriod(format!("hourly demand in {period}")),
            other => other,
        })?;
    Ok(AdequacyResult {
        month: period.label,
        max_output_gw: max_output / 1000.0,
        extra_outage_gw: extra_outage_mw / 1000.0,
        pct_unmet,
        hours: demand.len(),
    })
}

/// January and December of every year that has both outage telemetry and
/// load inside the month.
pub fn winter_months(load: &[HourlyLoadRecord], outages: &[OutageRecord]) -> Vec<(i32, u32)> {
    let mut months: Vec<(i32, u32)> = outages
        .iter()
        .filter(|r| r.telemetered_output_mw.is_some())
        .map(|r| (r.timestamp.year(), r.timestamp.month()))
        .filter(|(_, m)| *m == 1 || *m == 12)
        .collect();
    months.dedup();
    months.retain(|(y, m)| {
        let p = Period::month(*y, *m);
        load.iter().any(|r| p.contains(r.timestamp.date()))
    });
    months
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bin {
    pub low: f64,
    pub high: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub label: String,
    pub bins: Vec<Bin>,
    pub peak_demand_mw: f64,
    pub max_output_mw: f64,
    /// `max_output - peak_demand`.
    pub headroom_mw: f64,
    /// Peak demand reaches the largest output: no room for extra outages.
    pub balanced: bool,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }
}

/// Histogram of telemetered output inside `period`, with bins of
/// `bin_width_mw` aligned to multiples of the width.
pub fn generation_histogram(
    outages: &[OutageRecord],
    period: &Period,
    bin_width_mw: f64,
    peak_demand_mw: f64,
) -> Result<Histogram> {
    if bin_width_mw.is_nan() || bin_width_mw <= 0.0 {
        return Err(Error::InvalidArgument(format!("bin width {bin_width_mw} must be > 0")));
    }
    let values: Vec<f64> = outages
        .iter()
        .filter(|r| period.contains(r.timestamp.date()))
        .filter_map(|r| r.telemetered_output_mw)
        .collect();
    if values.is_empty() {
        return Err(Error::EmptyPeriod(period.to_string()));
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let origin = (min / bin_width_mw).floor() * bin_width_mw;
    let index = |v: f64| ((v - origin) / bin_width_mw).floor() as usize;
    let mut counts = vec![0usize; index(max) + 1];
    for v in &values {
        counts[index(*v)] += 1;
    }
    let bins = counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| Bin {
            low: origin + i as f64 * bin_width_mw,
            high: origin + (i + 1) as f64 * bin_width_mw,
            count,
        })
        .collect();
    let headroom = max - peak_demand_mw;
    Ok(Histogram {
        label: period.label.clone(),
        bins,
        peak_demand_mw,
        max_output_mw: max,
        headroom_mw: headroom,
        balanced: headroom <= 1e-9 * max.abs().max(1.0),
    })
}

/// Largest hourly load dated inside `period`.
pub fn peak_demand_in(load: &[HourlyLoadRecord], period: &Period) -> Option<f64> {
    load.iter()
        .filter(|r| period.contains(r.timestamp.date()))
        .map(|r| r.load_mw)
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))
}

pub fn write_outage_table(stats: &[PeriodOutageStat]) -> String {
    let mut t = Table::new(&["period", "start", "end", "mean_outage_gw", "records"]);
    for s in stats {
        t.row([
            s.label.clone(),
            s.start.to_string(),
            s.end.to_string(),
            num(sig3(s.mean_outage_gw)),
            s.records.to_string(),
        ]);
    }
    t.into_string()
}

pub fn write_unmet_table(rows: &[AdequacyResult]) -> String {
    let mut t = Table::new(&["month", "max_output_gw", "extra_outage_gw", "pct_unmet", "hours"]);
    for r in rows {
        t.row([
            r.month.clone(),
            num(sig3(r.max_output_gw)),
            num(sig3(r.extra_outage_gw)),
            num(sig3(r.pct_unmet)),
            r.hours.to_string(),
        ]);
    }
    t.into_string()
}

/// Bin counts for every histogram, and one summary row per histogram.
pub fn write_histograms(hists: &[Histogram]) -> (String, String) {
    let mut bins = Table::new(&["period", "bin_low_mw", "bin_high_mw", "count"]);
    let mut summary = Table::new(&["period", "peak_demand_mw", "max_output_mw", "headroom_mw", "balanced"]);
    for h in hists {
        for b in &h.bins {
            bins.row([h.label.clone(), num(b.low), num(b.high), b.count.to_string()]);
        }
        summary.row([
            h.label.clone(),
            num(h.peak_demand_mw),
            num(h.max_output_mw),
            num(h.headroom_mw),
            h.balanced.to_string(),
        ]);
    }
    (bins.into_string(), summary.into_string())
}
