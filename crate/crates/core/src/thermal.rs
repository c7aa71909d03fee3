//! Regional temperature, the demand/temperature cubic, reference temperature
//! and degree days.
//!
//! Peak demand is modelled per year as
//! `D = a1*T^3 + a2*T^2 + a3*T + a4` over the daily regional mean
//! temperature `T`. The reference temperature `t0` is the temperature at the
//! local minimum of that cubic, and degree days are `|T - t0|`.

use std::collections::BTreeMap;
use std::io::Read;

use chrono::{Datelike, NaiveDate, NaiveDateTime, NaiveTime};
use nalgebra::{DMatrix, DVector};

use crate::calendar::{days_in_year, format_timestamp, parse_date, parse_timestamp};
use crate::error::{Error, Result};
use crate::ingest::{field_f64, read_rows, DailyLoadSummary};
use crate::output::{num, Table};

pub const GRID_HEADER: [&str; 4] = ["lat", "lon", "date", "t2m_c"];
pub const POPULATION_HEADER: [&str; 4] = ["lat", "lon", "epoch", "persons"];
pub const MASK_HEADER: [&str; 3] = ["lat", "lon", "in_region"];
pub const DAILY_TEMP_HEADER: [&str; 2] = ["date", "t_avg_c"];
pub const DEGREE_DAY_HEADER: [&str; 3] = ["date", "t_avg_c", "dd"];
pub const FIT_HEADER: [&str; 8] = ["year", "a1", "a2", "a3", "a4", "t0_c", "fit_min_c", "fit_max_c"];
pub const ANNUAL_HEADER: [&str; 2] = ["year", "t_mean_c"];

const COORD_EPS: f64 = 1e-9;
const BINARY_MAGIC: &str = "shoulder-grid-v1";

fn coord_index(axis: &[f64], v: f64) -> Option<usize> {
    axis.iter().position(|a| (a - v).abs() <= COORD_EPS)
}

// ---------------------------------------------------------------------------
// grids

/// 2 m temperature on a regular lat/lon raster with a region mask.
///
/// Values are stored time-major (`[time][lat][lon]`); `NaN` marks a missing
/// sample, which is only allowed outside the mask.
#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureGrid {
    lats: Vec<f64>,
    lons: Vec<f64>,
    times: Vec<NaiveDateTime>,
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl TemperatureGrid {
    pub fn new(
        lats: Vec<f64>,
        lons: Vec<f64>,
        times: Vec<NaiveDateTime>,
        values: Vec<f64>,
        mask: Vec<bool>,
    ) -> Result<Self> {
        let cells = lats.len() * lons.len();
        if values.len() != times.len() * cells {
            return Err(Error::InvalidGrid(format!(
                "{} values for {} times x {} lats x {} lons",
                values.len(),
                times.len(),
                lats.len(),
                lons.len()
            )));
        }
        if mask.len() != cells {
            return Err(Error::InvalidGrid(format!(
                "mask has {} cells, grid has {cells}",
                mask.len()
            )));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidGrid("time axis not strictly increasing".into()));
        }
        let grid = TemperatureGrid {
            lats,
            lons,
            times,
            values,
            mask,
        };
        grid.check_masked_finite()?;
        Ok(grid)
    }

    fn check_masked_finite(&self) -> Result<()> {
        let cells = self.cell_count();
        for (t, ts) in self.times.iter().enumerate() {
            for c in (0..cells).filter(|&c| self.mask[c]) {
                if !self.values[t * cells + c].is_finite() {
                    let (la, lo) = self.cell_coords(c);
                    return Err(Error::InvalidGrid(format!(
                        "masked-in cell ({la}, {lo}) has no finite value at {ts}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn lats(&self) -> &[f64] {
        &self.lats
    }

    pub fn lons(&self) -> &[f64] {
        &self.lons
    }

    pub fn times(&self) -> &[NaiveDateTime] {
        &self.times
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn cell_count(&self) -> usize {
        self.lats.len() * self.lons.len()
    }

    pub fn cell_coords(&self, cell: usize) -> (f64, f64) {
        (self.lats[cell / self.lons.len()], self.lons[cell % self.lons.len()])
    }

    pub fn cell_index(&self, lat: f64, lon: f64) -> Option<usize> {
        Some(coord_index(&self.lats, lat)? * self.lons.len() + coord_index(&self.lons, lon)?)
    }

    pub fn value(&self, time: usize, cell: usize) -> f64 {
        self.values[time * self.cell_count() + cell]
    }

    pub fn masked_cells(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.cell_count()).filter(|&c| self.mask[c])
    }

    /// Replaces the mask from a `lat,lon,in_region` table. Cells not listed
    /// are outside the region.
    pub fn apply_mask<R: Read>(&mut self, source: R) -> Result<()> {
        let mut mask = vec![false; self.cell_count()];
        for (line, row) in read_rows(source, &MASK_HEADER)? {
            let lat = field_f64(line, "lat", &row[0])?;
            let lon = field_f64(line, "lon", &row[1])?;
            let cell = self
                .cell_index(lat, lon)
                .ok_or(Error::NotCoRegistered { lat, lon })?;
            mask[cell] = match row[2].as_str() {
                "1" => true,
                "0" => false,
                other => {
                    return Err(Error::malformed(line, format!("in_region `{other}` must be 0 or 1")))
                }
            };
        }
        self.mask = mask;
        self.check_masked_finite()
    }

    /// Per-cell daily means: every sample stamped on the same calendar date is
    /// averaged, so hourly and daily grids are handled alike.
    pub fn daily_cell_means(&self) -> BTreeMap<NaiveDate, Vec<f64>> {
        let cells = self.cell_count();
        let mut acc: BTreeMap<NaiveDate, (Vec<f64>, u32)> = BTreeMap::new();
        for (t, ts) in self.times.iter().enumerate() {
            let e = acc
                .entry(ts.date())
                .or_insert_with(|| (vec![0.0; cells], 0));
            for c in 0..cells {
                e.0[c] += self.values[t * cells + c];
            }
            e.1 += 1;
        }
        acc.into_iter()
            .map(|(d, (sums, n))| (d, sums.into_iter().map(|s| s / f64::from(n)).collect()))
            .collect()
    }

    /// Long-format `lat,lon,date,t2m_c` reader. The date column may carry a
    /// time of day for sub-daily grids. All cells start inside the mask.
    pub fn parse_long<R: Read>(source: R) -> Result<Self> {
        let rows = read_rows(source, &GRID_HEADER)?;
        let mut parsed = Vec::with_capacity(rows.len());
        for (line, row) in rows {
            let lat = field_f64(line, "lat", &row[0])?;
            let lon = field_f64(line, "lon", &row[1])?;
            let ts = parse_timestamp(&row[2])
                .or_else(|| parse_date(&row[2]).map(|d| d.and_time(NaiveTime::MIN)))
                .ok_or_else(|| Error::malformed(line, format!("bad date `{}`", row[2])))?;
            let t = field_f64(line, "t2m_c", &row[3])?;
            parsed.push((line, lat, lon, ts, t));
        }
        let axis = |get: fn(&(u64, f64, f64, NaiveDateTime, f64)) -> f64| {
            let mut v: Vec<f64> = parsed.iter().map(get).collect();
            v.sort_by(f64::total_cmp);
            v.dedup_by(|a, b| (*a - *b).abs() <= COORD_EPS);
            v
        };
        let lats = axis(|p| p.1);
        let lons = axis(|p| p.2);
        let mut times: Vec<NaiveDateTime> = parsed.iter().map(|p| p.3).collect();
        times.sort();
        times.dedup();
        let time_index: BTreeMap<NaiveDateTime, usize> =
            times.iter().enumerate().map(|(i, t)| (*t, i)).collect();

        let cells = lats.len() * lons.len();
        let mut values = vec![f64::NAN; times.len() * cells];
        for (line, lat, lon, ts, t) in parsed {
            let cell = coord_index(&lats, lat).expect("lat on axis") * lons.len()
                + coord_index(&lons, lon).expect("lon on axis");
            let slot = &mut values[time_index[&ts] * cells + cell];
            if !slot.is_nan() {
                return Err(Error::malformed(
                    line,
                    format!("duplicate sample for ({lat}, {lon}) at {ts}"),
                ));
            }
            *slot = t;
        }
        let mask = (0..cells)
            .map(|c| (0..times.len()).all(|t| values[t * cells + c].is_finite()))
            .collect();
        TemperatureGrid::new(lats, lons, times, values, mask)
    }

    pub fn write_long(&self) -> String {
        let mut t = Table::new(&GRID_HEADER);
        for (ti, ts) in self.times.iter().enumerate() {
            let stamp = if ts.time() == NaiveTime::MIN {
                ts.date().format("%Y-%m-%d").to_string()
            } else {
                format_timestamp(*ts)
            };
            for c in 0..self.cell_count() {
                let v = self.value(ti, c);
                if v.is_nan() {
                    continue;
                }
                let (la, lo) = self.cell_coords(c);
                t.row([num(la), num(lo), stamp.clone(), num(v)]);
            }
        }
        t.into_string()
    }

    /// Binary raster form: a text sidecar declaring the axes and mask, plus
    /// little-endian `f64` values in time-major order.
    pub fn to_binary(&self) -> (String, Vec<u8>) {
        let join = |v: &[f64]| v.iter().map(|x| num(*x)).collect::<Vec<_>>().join(",");
        let times = self
            .times
            .iter()
            .map(|t| format_timestamp(*t))
            .collect::<Vec<_>>()
            .join(",");
        let mask: String = self.mask.iter().map(|m| if *m { '1' } else { '0' }).collect();
        let sidecar = format!(
            "format {BINARY_MAGIC}\nlats {}\nlons {}\ntimes {}\nmask {}\n",
            join(&self.lats),
            join(&self.lons),
            times,
            mask
        );
        let bytes = self.values.iter().flat_map(|v| v.to_le_bytes()).collect();
        (sidecar, bytes)
    }

    pub fn from_binary(sidecar: &str, bytes: &[u8]) -> Result<Self> {
        let mut fields: BTreeMap<&str, &str> = BTreeMap::new();
        for line in sidecar.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line.split_once(' ').unwrap_or((line, ""));
            fields.insert(k, v);
        }
        let get = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| Error::InvalidGrid(format!("sidecar lacks `{k}`")))
        };
        if get("format")? != BINARY_MAGIC {
            return Err(Error::InvalidGrid("unknown sidecar format".into()));
        }
        let floats = |k: &str| -> Result<Vec<f64>> {
            get(k)?
                .split(',')
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse()
                        .map_err(|_| Error::InvalidGrid(format!("bad {k} entry `{s}`")))
                })
                .collect()
        };
        let lats = floats("lats")?;
        let lons = floats("lons")?;
        let times = get("times")?
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|s| parse_timestamp(s).ok_or_else(|| Error::InvalidGrid(format!("bad time `{s}`"))))
            .collect::<Result<Vec<_>>>()?;
        let mask = get("mask")?
            .chars()
            .map(|c| match c {
                '1' => Ok(true),
                '0' => Ok(false),
                _ => Err(Error::InvalidGrid(format!("bad mask char `{c}`"))),
            })
            .collect::<Result<Vec<_>>>()?;
        if !bytes.len().is_multiple_of(8) {
            return Err(Error::InvalidGrid("value payload is not a whole number of f64".into()));
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        TemperatureGrid::new(lats, lons, times, values, mask)
    }
}

/// Population counts per cell for each census epoch, co-registered with a
/// [`TemperatureGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationGrid {
    epochs: BTreeMap<i32, Vec<f64>>,
}

impl PopulationGrid {
    pub fn new(epochs: BTreeMap<i32, Vec<f64>>) -> Result<Self> {
        if epochs.is_empty() {
            return Err(Error::Empty("population epochs"));
        }
        Ok(PopulationGrid { epochs })
    }

    pub fn parse<R: Read>(source: R, grid: &TemperatureGrid) -> Result<Self> {
        let mut epochs: BTreeMap<i32, Vec<f64>> = BTreeMap::new();
        for (line, row) in read_rows(source, &POPULATION_HEADER)? {
            let lat = field_f64(line, "lat", &row[0])?;
            let lon = field_f64(line, "lon", &row[1])?;
            let epoch: i32 = row[2]
                .parse()
                .map_err(|_| Error::malformed(line, format!("bad epoch `{}`", row[2])))?;
            let persons = field_f64(line, "persons", &row[3])?;
            if persons < 0.0 {
                return Err(Error::Negative {
                    line,
                    field: "persons",
                    value: persons,
                });
            }
            let cell = grid
                .cell_index(lat, lon)
                .ok_or(Error::NotCoRegistered { lat, lon })?;
            epochs
                .entry(epoch)
                .or_insert_with(|| vec![0.0; grid.cell_count()])[cell] = persons;
        }
        PopulationGrid::new(epochs)
    }

    /// Nearest previous epoch; years before the first epoch use the first.
    pub fn weights_for_year(&self, year: i32) -> &[f64] {
        self.epochs
            .range(..=year)
            .next_back()
            .or_else(|| self.epochs.iter().next())
            .map(|(_, w)| w.as_slice())
            .expect("at least one epoch")
    }

    pub fn epoch_for_year(&self, year: i32) -> i32 {
        self.epochs
            .range(..=year)
            .next_back()
            .or_else(|| self.epochs.iter().next())
            .map(|(e, _)| *e)
            .expect("at least one epoch")
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Weighting<'a> {
    /// Every masked-in cell counts equally.
    Uniform,
    Population(&'a PopulationGrid),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DailyRegionTemp {
    pub date: NaiveDate,
    pub t_avg: f64,
}

/// Regional daily mean temperature over the masked cells for every date in
/// `start..=end`.
pub fn population_weighted_daily_temp(
    grid: &TemperatureGrid,
    weighting: Weighting<'_>,
    start: NaiveDate,
    end: NaiveDate,
) -> Result<Vec<DailyRegionTemp>> {
    let daily = grid.daily_cell_means();
    let cells: Vec<usize> = grid.masked_cells().collect();
    if cells.is_empty() {
        return Err(Error::EmptyMask);
    }
    let uniform = vec![1.0; grid.cell_count()];
    let mut out = Vec::new();
    for date in start.iter_days().take_while(|d| *d <= end) {
        let temps = daily.get(&date).ok_or(Error::MissingDate(date))?;
        let w = match weighting {
            Weighting::Uniform => uniform.as_slice(),
            Weighting::Population(p) => p.weights_for_year(date.year()),
        };
        let total: f64 = cells.iter().map(|&c| w[c]).sum();
        if total <= 0.0 {
            return Err(Error::ZeroWeight);
        }
        let weighted: f64 = cells.iter().map(|&c| w[c] * temps[c]).sum();
        out.push(DailyRegionTemp {
            date,
            t_avg: weighted / total,
        });
    }
    Ok(out)
}

/// First and last date for which the grid has samples.
pub fn grid_date_span(grid: &TemperatureGrid) -> Option<(NaiveDate, NaiveDate)> {
    Some((grid.times.first()?.date(), grid.times.last()?.date()))
}

// ---------------------------------------------------------------------------
// cubic fit and reference temperature

/// `D = a1*T^3 + a2*T^2 + a3*T + a4`, valid over `fit_range`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicFit {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
    pub fit_range: (f64, f64),
}

impl CubicFit {
    pub fn eval(&self, t: f64) -> f64 {
        ((self.a1 * t + self.a2) * t + self.a3) * t + self.a4
    }

    pub fn coefficients(&self) -> [f64; 4] {
        [self.a1, self.a2, self.a3, self.a4]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicDemandFit {
    pub year: i32,
    pub fit: CubicFit,
    pub t0: f64,
}

impl CubicDemandFit {
    pub fn new(year: i32, fit: CubicFit) -> Result<Self> {
        Ok(CubicDemandFit {
            year,
            fit,
            t0: reference_temperature(&fit)?,
        })
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Least-squares cubic of peak demand on temperature.
///
/// The abscissa is mapped onto [-1, 1] before solving (QR on the scaled
/// Vandermonde matrix) and the coefficients are expanded back into powers of
/// the raw temperature.
pub fn fit_demand_temperature_cubic(pairs: &[(f64, f64)]) -> Result<CubicFit> {
    let mut xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < 4 {
        return Err(Error::RankDeficient(xs.len()));
    }
    let (lo, hi) = (xs[0], xs[xs.len() - 1]);
    let center = 0.5 * (lo + hi);
    let scale = 0.5 * (hi - lo);

    let n = pairs.len();
    let design = DMatrix::from_fn(n, 4, |i, j| ((pairs[i].0 - center) / scale).powi(j as i32));
    let rhs = DVector::from_iterator(n, pairs.iter().map(|p| p.1));
    let qr = design.qr();
    let qtb = qr.q().transpose() * rhs;
    let b = qr
        .r()
        .solve_upper_triangular(&qtb)
        .ok_or(Error::RankDeficient(xs.len()))?;

    // sum_k b_k ((T - c)/s)^k  ->  sum_j a_j T^j
    let mut raw = [0.0f64; 4];
    for k in 0..4 {
        let bk = b[k] / scale.powi(k as i32);
        for (j, slot) in raw.iter_mut().enumerate().take(k + 1) {
            *slot += bk * binomial(k, j) * (-center).powi((k - j) as i32);
        }
    }
    Ok(CubicFit {
        a1: raw[3],
        a2: raw[2],
        a3: raw[1],
        a4: raw[0],
        fit_range: (lo, hi),
    })
}

/// Temperature of the cubic's local minimum inside its fit range.
///
/// A cubic has at most one local minimum: the derivative root with positive
/// curvature. With `a1 == 0` the fit is a parabola and the vertex is used.
pub fn reference_temperature(fit: &CubicFit) -> Result<f64> {
    let (low, high) = fit.fit_range;
    let no_min = Error::NoInteriorMinimum { low, high };
    let (a, b, c) = (3.0 * fit.a1, 2.0 * fit.a2, fit.a3);

    let candidate = if a == 0.0 {
        if b <= 0.0 {
            return Err(no_min);
        }
        -c / b
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc <= 0.0 {
            return Err(no_min);
        }
        let q = -0.5 * (b + b.signum() * disc.sqrt());
        let roots = if q == 0.0 {
            // b == 0 and a*c < 0
            let r = (-c / a).sqrt();
            [r, -r]
        } else {
            [q / a, c / q]
        };
        match roots.into_iter().find(|&t| 2.0 * a * t + b > 0.0) {
            Some(t) => t,
            None => return Err(no_min),
        }
    };
    if candidate < low || candidate > high {
        return Err(no_min);
    }
    Ok(candidate)
}

/// Mean of the yearly reference temperatures.
pub fn global_t0(fits: &[CubicDemandFit]) -> Result<f64> {
    if fits.is_empty() {
        return Err(Error::Empty("yearly cubic fits"));
    }
    Ok(fits.iter().map(|f| f.t0).sum::<f64>() / fits.len() as f64)
}

/// Fits one cubic per year from daily regional temperature paired with the
/// same day's peak demand. Days with fewer than `min_hours` of load are left
/// out; years with fewer than four distinct temperatures, or whose cubic
/// has no minimum inside the observed range, are skipped.
pub fn fit_yearly_cubics(
    temps: &[DailyRegionTemp],
    loads: &[DailyLoadSummary],
    min_hours: u8,
) -> Result<Vec<CubicDemandFit>> {
    let by_date: BTreeMap<NaiveDate, f64> = temps.iter().map(|t| (t.date, t.t_avg)).collect();
    let mut per_year: BTreeMap<i32, Vec<(f64, f64)>> = BTreeMap::new();
    for d in loads.iter().filter(|d| d.is_complete(min_hours)) {
        if let Some(&t) = by_date.get(&d.date) {
            per_year.entry(d.date.year()).or_default().push((t, d.peak_demand_mw));
        }
    }
    let mut fits = Vec::new();
    for (year, pairs) in per_year {
        match fit_demand_temperature_cubic(&pairs).and_then(|fit| CubicDemandFit::new(year, fit)) {
            Ok(f) => fits.push(f),
            Err(Error::RankDeficient(n)) => {
                log::warn!("skipping {year}: only {n} distinct temperatures");
            }
            Err(e @ Error::NoInteriorMinimum { .. }) => log::warn!("skipping {year}: {e}"),
            Err(e) => return Err(e),
        }
    }
    Ok(fits)
}

// ---------------------------------------------------------------------------
// degree days

/// Combined heating and cooling degree days for one day.
pub fn degree_days(t_avg: f64, t0: f64) -> f64 {
    if t_avg >= t0 {
        t_avg - t0
    } else {
        t0 - t_avg
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegreeDayValue {
    pub date: NaiveDate,
    pub t_avg: f64,
    pub dd: f64,
}

pub fn degree_day_series(temps: &[DailyRegionTemp], t0: f64) -> Vec<DegreeDayValue> {
    temps
        .iter()
        .map(|t| DegreeDayValue {
            date: t.date,
            t_avg: t.t_avg,
            dd: degree_days(t.t_avg, t0),
        })
        .collect()
}

// ---------------------------------------------------------------------------
// spatial spread and annual means

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialSpread {
    /// Per-day population standard deviation across masked cells.
    pub per_day: Vec<(NaiveDate, f64)>,
    pub mean_std: f64,
    /// Set when the mask holds a single cell and the spread is zero by
    /// convention.
    pub single_cell: bool,
}

/// Unweighted spread of daily mean temperature across the masked cells.
pub fn spatial_temp_stddev(
    grid: &TemperatureGrid,
    start: NaiveDate,
    end: NaiveDate,
) -> Result<SpatialSpread> {
    let cells: Vec<usize> = grid.masked_cells().collect();
    if cells.is_empty() {
        return Err(Error::EmptyMask);
    }
    let daily = grid.daily_cell_means();
    let mut per_day = Vec::new();
    for date in start.iter_days().take_while(|d| *d <= end) {
        let temps = daily.get(&date).ok_or(Error::MissingDate(date))?;
        let n = cells.len() as f64;
        let mean = cells.iter().map(|&c| temps[c]).sum::<f64>() / n;
        let var = cells.iter().map(|&c| (temps[c] - mean).powi(2)).sum::<f64>() / n;
        per_day.push((date, var.sqrt()));
    }
    if per_day.is_empty() {
        return Err(Error::Empty("date range"));
    }
    let mean_std = per_day.iter().map(|p| p.1).sum::<f64>() / per_day.len() as f64;
    Ok(SpatialSpread {
        per_day,
        mean_std,
        single_cell: cells.len() == 1,
    })
}

/// Calendar-year means, keeping only years with every day present.
pub fn annual_mean_temps(daily: &[DailyRegionTemp]) -> Vec<(i32, f64)> {
    let mut acc: BTreeMap<i32, (f64, u32)> = BTreeMap::new();
    for d in daily {
        let e = acc.entry(d.date.year()).or_insert((0.0, 0));
        e.0 += d.t_avg;
        e.1 += 1;
    }
    acc.into_iter()
        .filter(|(y, (_, n))| *n == days_in_year(*y))
        .map(|(y, (s, n))| (y, s / f64::from(n)))
        .collect()
}

// ---------------------------------------------------------------------------
// cached tables

pub fn write_daily_temps(temps: &[DailyRegionTemp]) -> String {
    let mut t = Table::new(&DAILY_TEMP_HEADER);
    for d in temps {
        t.row([d.date.format("%Y-%m-%d").to_string(), num(d.t_avg)]);
    }
    t.into_string()
}

pub fn parse_daily_temps<R: Read>(source: R) -> Result<Vec<DailyRegionTemp>> {
    read_rows(source, &DAILY_TEMP_HEADER)?
        .into_iter()
        .map(|(line, row)| {
            Ok(DailyRegionTemp {
                date: parse_date(&row[0]).ok_or_else(|| Error::malformed(line, "bad date"))?,
                t_avg: field_f64(line, "t_avg_c", &row[1])?,
            })
        })
        .collect()
}

pub fn write_degree_days(values: &[DegreeDayValue], t0: f64) -> String {
    let mut t = Table::new(&DEGREE_DAY_HEADER);
    t.comment(&format!("t0_c={}", num(t0)));
    for d in values {
        t.row([d.date.format("%Y-%m-%d").to_string(), num(d.t_avg), num(d.dd)]);
    }
    t.into_string()
}

pub fn parse_degree_days<R: Read>(source: R) -> Result<Vec<DegreeDayValue>> {
    read_rows(source, &DEGREE_DAY_HEADER)?
        .into_iter()
        .map(|(line, row)| {
            Ok(DegreeDayValue {
                date: parse_date(&row[0]).ok_or_else(|| Error::malformed(line, "bad date"))?,
                t_avg: field_f64(line, "t_avg_c", &row[1])?,
                dd: field_f64(line, "dd", &row[2])?,
            })
        })
        .collect()
}

pub fn write_fits(fits: &[CubicDemandFit]) -> String {
    let mut t = Table::new(&FIT_HEADER);
    for f in fits {
        t.row([
            f.year.to_string(),
            num(f.fit.a1),
            num(f.fit.a2),
            num(f.fit.a3),
            num(f.fit.a4),
            num(f.t0),
            num(f.fit.fit_range.0),
            num(f.fit.fit_range.1),
        ]);
    }
    t.into_string()
}

pub fn write_annual(annual: &[(i32, f64)]) -> String {
    let mut t = Table::new(&ANNUAL_HEADER);
    for (y, v) in annual {
        t.row([y.to_string(), num(*v)]);
    }
    t.into_string()
}

pub fn parse_annual<R: Read>(source: R) -> Result<Vec<(i32, f64)>> {
    read_rows(source, &ANNUAL_HEADER)?
        .into_iter()
        .map(|(line, row)| {
            let y = row[0]
                .parse()
                .map_err(|_| Error::malformed(line, format!("bad year `{}`", row[0])))?;
            Ok((y, field_f64(line, "t_mean_c", &row[1])?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calendar::ymd;
    use proptest::prelude::*;

    fn day(d: NaiveDate) -> NaiveDateTime {
        d.and_time(NaiveTime::MIN)
    }

    /// 1 lat x 2 lon grid, daily, constant per cell.
    fn two_cell_grid(t_a: f64, t_b: f64, days: u32) -> TemperatureGrid {
        let times: Vec<_> = (0..days)
            .map(|i| day(ymd(2010, 1, 1) + chrono::Duration::days(i64::from(i))))
            .collect();
        let values = times.iter().flat_map(|_| [t_a, t_b]).collect();
        TemperatureGrid::new(vec![30.0], vec![-100.0, -99.75], times, values, vec![true, true])
            .unwrap()
    }

    fn pop(weights: Vec<f64>) -> PopulationGrid {
        PopulationGrid::new(BTreeMap::from([(2010, weights)])).unwrap()
    }

    #[test]
    fn weighted_mean_by_hand() {
        let g = two_cell_grid(10.0, 20.0, 3);
        let p = pop(vec![1.0, 3.0]);
        let out =
            population_weighted_daily_temp(&g, Weighting::Population(&p), ymd(2010, 1, 1), ymd(2010, 1, 3))
                .unwrap();
        assert_eq!(out.len(), 3);
        assert!(out.iter().all(|d| (d.t_avg - 17.5).abs() < 1e-12));
    }

    #[test]
    fn uniform_and_single_cell_weights() {
        let g = two_cell_grid(10.0, 20.0, 1);
        let u = population_weighted_daily_temp(&g, Weighting::Uniform, ymd(2010, 1, 1), ymd(2010, 1, 1))
            .unwrap();
        assert_eq!(u[0].t_avg, 15.0);
        let p = pop(vec![0.0, 7.0]);
        let s = population_weighted_daily_temp(&g, Weighting::Population(&p), ymd(2010, 1, 1), ymd(2010, 1, 1))
            .unwrap();
        assert_eq!(s[0].t_avg, 20.0);
    }

    #[test]
    fn zero_weight_and_missing_date() {
        let g = two_cell_grid(10.0, 20.0, 2);
        let p = pop(vec![0.0, 0.0]);
        assert!(matches!(
            population_weighted_daily_temp(&g, Weighting::Population(&p), ymd(2010, 1, 1), ymd(2010, 1, 1)),
            Err(Error::ZeroWeight)
        ));
        assert!(matches!(
            population_weighted_daily_temp(&g, Weighting::Uniform, ymd(2010, 1, 1), ymd(2010, 1, 5)),
            Err(Error::MissingDate(d)) if d == ymd(2010, 1, 3)
        ));
    }

    #[test]
    fn hourly_samples_average_to_daily() {
        let d = ymd(2015, 6, 1);
        let times: Vec<_> = (0..24).map(|h| d.and_hms_opt(h, 0, 0).unwrap()).collect();
        let values: Vec<f64> = (0..24).map(f64::from).collect();
        let g = TemperatureGrid::new(vec![1.0], vec![2.0], times, values, vec![true]).unwrap();
        let out = population_weighted_daily_temp(&g, Weighting::Uniform, d, d).unwrap();
        assert_eq!(out[0].t_avg, 11.5);
    }

    #[test]
    fn epoch_selection_is_nearest_previous() {
        let p = PopulationGrid::new(BTreeMap::from([
            (2000, vec![1.0]),
            (2005, vec![2.0]),
            (2010, vec![3.0]),
        ]))
        .unwrap();
        assert_eq!(p.epoch_for_year(1985), 2000);
        assert_eq!(p.epoch_for_year(2003), 2000);
        assert_eq!(p.epoch_for_year(2012), 2010);
        assert_eq!(p.weights_for_year(2005), &[2.0]);
    }

    #[test]
    fn grid_files_parse_with_mask_and_population() {
        let grid_src = "lat,lon,date,t2m_c\n\
            30,-100,2010-01-01,10\n30,-99.75,2010-01-01,20\n\
            30,-100,2010-01-02,12\n30,-99.75,2010-01-02,22\n";
        let mut g = TemperatureGrid::parse_long(grid_src.as_bytes()).unwrap();
        assert_eq!(g.cell_count(), 2);
        g.apply_mask("lat,lon,in_region\n30,-100,1\n30,-99.75,0\n".as_bytes())
            .unwrap();
        assert_eq!(g.mask(), &[true, false]);
        let p = PopulationGrid::parse("lat,lon,epoch,persons\n30,-100,2000,5\n30,-99.75,2000,5\n".as_bytes(), &g)
            .unwrap();
        let out = population_weighted_daily_temp(&g, Weighting::Population(&p), ymd(2010, 1, 1), ymd(2010, 1, 2))
            .unwrap();
        assert_eq!(out[1].t_avg, 12.0);

        let off_grid = PopulationGrid::parse("lat,lon,epoch,persons\n31,-100,2000,5\n".as_bytes(), &g);
        assert!(matches!(off_grid, Err(Error::NotCoRegistered { .. })));
    }

    #[test]
    fn binary_and_long_round_trip_bit_exact() {
        let d = ymd(2001, 3, 4);
        let times: Vec<_> = (0..3).map(|h| d.and_hms_opt(h, 0, 0).unwrap()).collect();
        let nan_inside = vec![f64::NAN; 12];
        assert!(
            TemperatureGrid::new(vec![29.5, 29.75], vec![-98.0, -97.75], times, nan_inside, vec![true; 4]).is_err(),
            "NaN inside mask must be rejected"
        );
        let times: Vec<_> = (0..3).map(|h| d.and_hms_opt(h, 0, 0).unwrap()).collect();
        let values = vec![0.1, 1.0 / 3.0, -7.25, f64::NAN, 2.0e-17, 3.0, 4.5, f64::NAN, 5.0, 6.0, 7.0, f64::NAN];
        let grid = TemperatureGrid::new(
            vec![29.5, 29.75],
            vec![-98.0, -97.75],
            times,
            values,
            vec![true, true, true, false],
        )
        .unwrap();
        let (sidecar, bytes) = grid.to_binary();
        let back = TemperatureGrid::from_binary(&sidecar, &bytes).unwrap();
        let bits = |g: &TemperatureGrid| g.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&grid));
        assert_eq!(back.mask, grid.mask);
        assert_eq!(back.times, grid.times);

        let long = TemperatureGrid::parse_long(grid.write_long().as_bytes()).unwrap();
        assert_eq!(bits(&long), bits(&grid));
    }

    // Table A3 rows: (year, a1, a2, a3, a4, listed t0)
    const TABLE: [(i32, f64, f64, f64, f64, f64); 3] = [
        (2022, 1.018, 54.93, -2313.0, 65140.0, 14.89),
        (1996, 0.9044, 25.70, -1263.0, 36850.0, 14.09),
        (1999, -0.04506, 87.09, -2304.0, 43540.0, 13.37),
    ];

    fn cubic(a: (f64, f64, f64, f64)) -> CubicFit {
        CubicFit {
            a1: a.0,
            a2: a.1,
            a3: a.2,
            a4: a.3,
            fit_range: (-10.0, 40.0),
        }
    }

    #[test]
    fn reference_temperature_spot_checks() {
        for (_, a1, a2, a3, a4, t0) in TABLE {
            let got = reference_temperature(&cubic((a1, a2, a3, a4))).unwrap();
            assert!((got - t0).abs() <= 0.05, "{got} vs {t0}");
        }
        let parabola = cubic((0.0, 1.0, -30.0, 0.0));
        assert_eq!(reference_temperature(&parabola).unwrap(), 15.0);
    }

    #[test]
    fn reference_temperature_errors() {
        // minimum at 15 but range excludes it
        let mut f = cubic((0.0, 1.0, -30.0, 0.0));
        f.fit_range = (20.0, 30.0);
        assert!(matches!(reference_temperature(&f), Err(Error::NoInteriorMinimum { .. })));
        // monotone cubic
        assert!(reference_temperature(&cubic((1.0, 0.0, 5.0, 0.0))).is_err());
        // downward parabola
        assert!(reference_temperature(&cubic((0.0, -1.0, 3.0, 0.0))).is_err());
    }

    #[test]
    fn cubic_recovers_2022_coefficients() {
        let truth = cubic((1.018, 54.93, -2313.0, 65140.0));
        let pairs: Vec<_> = (0..200)
            .map(|i| {
                let t = -5.0 + 40.0 * f64::from(i) / 199.0;
                (t, truth.eval(t))
            })
            .collect();
        let fit = fit_demand_temperature_cubic(&pairs).unwrap();
        for (got, want) in fit.coefficients().iter().zip(truth.coefficients()) {
            assert!(((got - want) / want).abs() <= 1e-6, "{got} vs {want}");
        }
        assert_eq!(fit.fit_range, (-5.0, 35.0));
    }

    #[test]
    fn cubic_interpolates_four_points() {
        let pts = [(0.0, 1.0), (1.0, 3.0), (2.0, 11.0), (3.0, 31.0)]; // x^3 + x + 1
        let fit = fit_demand_temperature_cubic(&pts).unwrap();
        for (x, y) in pts {
            assert!((fit.eval(x) - y).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_demand_fits_flat() {
        let pts: Vec<_> = (0..30).map(|i| (f64::from(i) - 5.0, 42_000.0)).collect();
        let fit = fit_demand_temperature_cubic(&pts).unwrap();
        assert!(fit.a1.abs() < 1e-9 && fit.a2.abs() < 1e-7 && fit.a3.abs() < 1e-6);
        assert!((fit.a4 - 42_000.0).abs() < 1e-6);
    }

    #[test]
    fn rank_deficient_cubic() {
        let pts = [(1.0, 1.0), (2.0, 2.0), (3.0, 3.0), (3.0, 4.0), (1.0, 0.0)];
        assert!(matches!(fit_demand_temperature_cubic(&pts), Err(Error::RankDeficient(3))));
    }

    #[test]
    fn degree_day_branches() {
        assert_eq!(degree_days(14.89, 14.89), 0.0);
        assert_eq!(degree_days(20.0, 15.0), 5.0);
        assert_eq!(degree_days(10.0, 15.0), 5.0);
    }

    #[test]
    fn global_t0_means() {
        let f = |year, t0| CubicDemandFit {
            year,
            fit: cubic((0.0, 1.0, 0.0, 0.0)),
            t0,
        };
        assert_eq!(global_t0(&[f(2000, 14.0)]).unwrap(), 14.0);
        assert_eq!(global_t0(&[f(2000, 14.0), f(2001, 15.0)]).unwrap(), 14.5);
        assert!(global_t0(&[]).is_err());
    }

    #[test]
    fn spatial_spread() {
        let g = two_cell_grid(10.0, 20.0, 4);
        let s = spatial_temp_stddev(&g, ymd(2010, 1, 1), ymd(2010, 1, 4)).unwrap();
        assert_eq!(s.mean_std, 5.0);
        assert!(!s.single_cell);

        let flat = two_cell_grid(12.0, 12.0, 2);
        assert_eq!(spatial_temp_stddev(&flat, ymd(2010, 1, 1), ymd(2010, 1, 2)).unwrap().mean_std, 0.0);

        let mut one = two_cell_grid(10.0, 20.0, 2);
        one.mask = vec![false, true];
        let s = spatial_temp_stddev(&one, ymd(2010, 1, 1), ymd(2010, 1, 2)).unwrap();
        assert_eq!(s.mean_std, 0.0);
        assert!(s.single_cell);
    }

    #[test]
    fn annual_means_need_full_years() {
        let temps: Vec<_> = ymd(2019, 1, 1)
            .iter_days()
            .take(365 + 10)
            .map(|date| DailyRegionTemp { date, t_avg: if date.year() == 2019 { 20.0 } else { 0.0 } })
            .collect();
        assert_eq!(annual_mean_temps(&temps), vec![(2019, 20.0)]);
    }

    proptest! {
        #[test]
        fn weights_are_scale_invariant(w0 in 0.01f64..1e6, w1 in 0.0f64..1e6, k in 1e-3f64..1e3,
                                       ta in -20.0f64..40.0, tb in -20.0f64..40.0) {
            let g = two_cell_grid(ta, tb, 1);
            let a = pop(vec![w0, w1]);
            let b = pop(vec![w0 * k, w1 * k]);
            let d = ymd(2010, 1, 1);
            let x = population_weighted_daily_temp(&g, Weighting::Population(&a), d, d).unwrap()[0].t_avg;
            let y = population_weighted_daily_temp(&g, Weighting::Population(&b), d, d).unwrap()[0].t_avg;
            prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
        }

        #[test]
        fn t0_ignores_constant_offset(shift in -1e5f64..1e5) {
            let base = cubic((1.018, 54.93, -2313.0, 65140.0));
            let moved = CubicFit { a4: base.a4 + shift, ..base };
            prop_assert_eq!(reference_temperature(&base).unwrap(), reference_temperature(&moved).unwrap());
        }

        #[test]
        fn exact_cubic_reproduces_points(a1 in -2.0f64..2.0, a2 in -100.0f64..100.0,
                                         a3 in -3000.0f64..3000.0, a4 in 0.0f64..80000.0) {
            let truth = cubic((a1, a2, a3, a4));
            let pairs: Vec<_> = (0..60).map(|i| { let t = -8.0 + 0.7 * f64::from(i); (t, truth.eval(t)) }).collect();
            let fit = fit_demand_temperature_cubic(&pairs).unwrap();
            for (t, d) in pairs {
                prop_assert!((fit.eval(t) - d).abs() <= 1e-7 * (1.0 + d.abs()));
            }
        }
    }
}
