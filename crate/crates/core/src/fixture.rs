//! Seeded synthetic inputs for exercising the whole pipeline.
//!
//! The generator writes every input file in its documented format plus a
//! ready-to-run config. Load carries planted 45-day dips, one per half-year,
//! placed where the noise-free seasonal temperature crosses the demand
//! minimum; everywhere else load stays far above the dip level, so the
//! planted windows are the exact load-metric minima. They are written to
//! `planted_onsets.csv` for checking.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::calendar::{day_of_year, days_in_month, days_in_year, format_timestamp, ymd, Season};
use crate::error::Result;
use crate::ingest::{FUEL_MIX_HEADER, LOAD_HEADER, OUTAGE_HEADER};
use crate::output::{write_atomic, Table};
use crate::projection::ENSEMBLE_HEADER;
use crate::thermal::{GRID_HEADER, MASK_HEADER, POPULATION_HEADER};

pub const DEFAULT_SEED: u64 = 42;
pub const FIRST_YEAR: i32 = 2001;
pub const LAST_YEAR: i32 = 2020;
pub const CONFIG_FILE: &str = "shoulder.conf";
pub const PLANTED_FILE: &str = "planted_onsets.csv";

const WINDOW: i64 = 45;
const LATS: [f64; 2] = [30.0, 30.5];
const LONS: [f64; 3] = [-98.0, -97.5, -97.0];
/// Cell (30.5, -97.0) lies outside the region.
const OUT_OF_REGION: usize = 5;

const MEAN_TEMP: f64 = 18.0;
const WARMING_PER_YEAR: f64 = 0.03;
const SEASONAL_AMPLITUDE: f64 = 8.0;
const COLDEST_DOY: f64 = 20.0;
/// Temperature of minimum natural demand.
const DEMAND_MIN_TEMP: f64 = 14.0;

const BASE_LOAD: f64 = 45_000.0;
const LOAD_PER_DEG2: f64 = 40.0;
const LOAD_CAP: f64 = 8_000.0;
const DIP: f64 = 35_000.0;

const MEMBERS: usize = 5;
const ENSEMBLE_YEARS: (i32, i32) = (1995, 2100);
const ENSEMBLE_BIAS: f64 = 1.2;
const FUTURE_WARMING_PER_YEAR: f64 = 0.08;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlantedOnset {
    pub year: i32,
    pub season: Season,
    pub onset: NaiveDate,
}

#[derive(Debug, Clone)]
pub struct FixtureFiles {
    pub dir: PathBuf,
    pub config: PathBuf,
    pub planted: Vec<PlantedOnset>,
}

/// Regional mean temperature trend before year-to-year anomalies.
fn climate_mean(year: i32) -> f64 {
    MEAN_TEMP + WARMING_PER_YEAR * f64::from(year - FIRST_YEAR)
}

fn seasonal(doy: f64, year: i32) -> f64 {
    -SEASONAL_AMPLITUDE * (2.0 * PI * (doy - COLDEST_DOY) / f64::from(days_in_year(year))).cos()
}

/// Days on which `mean + seasonal` crosses the demand minimum, or `None`
/// when the winter trough no longer dips below it.
fn crossings(mean: f64, year: i32) -> Option<(f64, f64)> {
    let c = (mean - DEMAND_MIN_TEMP) / SEASONAL_AMPLITUDE;
    if !(-1.0..1.0).contains(&c) {
        return None;
    }
    let phase = c.acos() / (2.0 * PI) * f64::from(days_in_year(year));
    Some((COLDEST_DOY + phase, COLDEST_DOY + f64::from(days_in_year(year)) - phase))
}

fn planted_onsets(year: i32, mean: f64) -> [PlantedOnset; 2] {
    let (spring, fall) = crossings(mean, year).expect("fixture climate keeps both crossings");
    let start = |centre: f64| {
        let doy = (centre - (WINDOW / 2) as f64).round() as i64;
        ymd(year, 1, 1) + Duration::days(doy - 1)
    };
    [
        PlantedOnset { year, season: Season::Spring, onset: start(spring) },
        PlantedOnset { year, season: Season::Fall, onset: start(fall) },
    ]
}

fn natural_load(t: f64) -> f64 {
    BASE_LOAD + (LOAD_PER_DEG2 * (t - DEMAND_MIN_TEMP).powi(2)).min(LOAD_CAP)
}

fn diurnal(hour: u32) -> f64 {
    2_500.0 * (2.0 * PI * (f64::from(hour) - 10.0) / 24.0).sin()
}

fn dates() -> impl Iterator<Item = NaiveDate> {
    ymd(FIRST_YEAR, 1, 1)
        .iter_days()
        .take_while(|d| *d <= ymd(LAST_YEAR, 12, 31))
}

/// Writes the full input set for `seed` into `dir` and returns the planted
/// load minima.
pub fn generate(dir: &Path, seed: u64) -> Result<FixtureFiles> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    let gauss = |rng: &mut ChaCha8Rng, sd: f64| sd * std_normal.sample(rng);

    // ---- temperature --------------------------------------------------
    let anomalies: Vec<(i32, f64)> = (FIRST_YEAR..=LAST_YEAR)
        .map(|y| (y, gauss(&mut rng, 0.4)))
        .collect();
    let year_mean = |y: i32| climate_mean(y) + anomalies[(y - FIRST_YEAR) as usize].1;
    let cell_offsets: Vec<f64> = (0..LATS.len() * LONS.len())
        .map(|c| 0.6 * (c as f64 - 2.5) / 2.5)
        .collect();

    let mut grid = Table::new(&GRID_HEADER);
    let mut regional: Vec<(NaiveDate, f64)> = Vec::new();
    for date in dates() {
        let common = year_mean(date.year()) + seasonal(f64::from(day_of_year(date)), date.year()) + gauss(&mut rng, 2.0);
        regional.push((date, common));
        for (li, lat) in LATS.iter().enumerate() {
            for (oi, lon) in LONS.iter().enumerate() {
                let c = li * LONS.len() + oi;
                let t = common + cell_offsets[c] + gauss(&mut rng, 0.3);
                grid.row([format!("{lat:.2}"), format!("{lon:.2}"), format!("{date}T12:00:00"), format!("{t:.2}")]);
            }
        }
    }

    let mut mask = Table::new(&MASK_HEADER);
    let mut population = Table::new(&POPULATION_HEADER);
    for (li, lat) in LATS.iter().enumerate() {
        for (oi, lon) in LONS.iter().enumerate() {
            let c = li * LONS.len() + oi;
            mask.row([format!("{lat:.2}"), format!("{lon:.2}"), u8::from(c != OUT_OF_REGION).to_string()]);
        }
    }
    for epoch in [2000, 2010] {
        for lat in LATS {
            for lon in LONS {
                let persons: u32 = rng.random_range(20_000..400_000) * if epoch == 2010 { 11 } else { 10 } / 10;
                population.row([format!("{lat:.2}"), format!("{lon:.2}"), epoch.to_string(), persons.to_string()]);
            }
        }
    }

    // ---- load with planted dips --------------------------------------
    let planted: Vec<PlantedOnset> = (FIRST_YEAR..=LAST_YEAR)
        .flat_map(|y| planted_onsets(y, year_mean(y)))
        .collect();
    let in_dip = |d: NaiveDate| {
        planted
            .iter()
            .any(|p| d >= p.onset && d < p.onset + Duration::days(WINDOW))
    };

    let mut load = Table::new(&LOAD_HEADER);
    let mut hourly: Vec<(NaiveDateTime, f64)> = Vec::new();
    for &(date, t) in &regional {
        // a handful of badly partial summer days; kept well away from any
        // window so planted minima stay exact
        let doy = day_of_year(date);
        let partial = (190..240).contains(&doy) && rng.random_bool(0.03);
        let level = natural_load(t) - if in_dip(date) { DIP } else { 0.0 };
        for hour in 0..24u32 {
            let mw = level + diurnal(hour) + gauss(&mut rng, 200.0);
            if partial && (8..16).contains(&hour) {
                continue;
            }
            let mw = (mw * 10.0).round() / 10.0;
            load.row([date.to_string(), hour.to_string(), format!("{mw:.1}")]);
            hourly.push((date.and_hms_opt(hour, 0, 0).expect("valid hour"), mw));
        }
    }

    // ---- fuel mix for the final year ----------------------------------
    let mut mix = Table::new(&FUEL_MIX_HEADER);
    let mix_start = ymd(LAST_YEAR, 1, 1).and_hms_opt(0, 0, 0).expect("midnight");
    for q in 0..i64::from(days_in_year(LAST_YEAR)) * 96 {
        let ts = mix_start + Duration::minutes(15 * q);
        let hour = (q % 96) as f64 / 4.0;
        let wind = (8_000.0 + gauss(&mut rng, 2_500.0)).max(0.0);
        let solar = (6_000.0 * (PI * (hour - 6.0) / 13.0).sin()).max(0.0);
        let hydro = 300.0 + gauss(&mut rng, 20.0).abs();
        let other = 100.0;
        mix.row([
            format_timestamp(ts),
            format!("{wind:.1}"),
            format!("{solar:.1}"),
            format!("{hydro:.1}"),
            format!("{other:.1}"),
        ]);
    }

    // ---- outages and telemetered output for the last two years --------
    let mut outages = Table::new(&OUTAGE_HEADER);
    let maintenance = |d: NaiveDate| {
        let md = (d.month(), d.day());
        ((3, 15)..=(5, 1)).contains(&md) || ((10, 15)..=(11, 30)).contains(&md)
    };
    let first_hour = ymd(LAST_YEAR - 1, 1, 1).and_hms_opt(0, 0, 0).expect("midnight");
    let hourly_from: Vec<&(NaiveDateTime, f64)> = hourly.iter().filter(|(ts, _)| *ts >= first_hour).collect();
    let mut hour_iter = hourly_from.iter().peekable();
    let mut last_load = hourly_from.first().map_or(BASE_LOAD, |h| h.1);
    for q in 0..(i64::from(days_in_year(LAST_YEAR - 1)) + i64::from(days_in_year(LAST_YEAR))) * 96 {
        let ts = first_hour + Duration::minutes(15 * q);
        while let Some(h) = hour_iter.peek() {
            if h.0 <= ts {
                last_load = h.1;
                hour_iter.next();
            } else {
                break;
            }
        }
        let outage = 12_000.0 + if maintenance(ts.date()) { 8_000.0 } else { 0.0 } + gauss(&mut rng, 1_000.0);
        let output = last_load * (1.0 + gauss(&mut rng, 0.01));
        outages.row([format_timestamp(ts), format!("{:.1}", outage.max(0.0)), format!("{:.1}", output.max(0.0))]);
    }

    // ---- climate ensemble, warm-biased --------------------------------
    let mut ensemble = Table::new(&ENSEMBLE_HEADER);
    for member in 1..=MEMBERS {
        for year in ENSEMBLE_YEARS.0..=ENSEMBLE_YEARS.1 {
            let future = FUTURE_WARMING_PER_YEAR * f64::from((year - LAST_YEAR).max(0));
            let annual = climate_mean(year.min(LAST_YEAR)) + future + ENSEMBLE_BIAS + gauss(&mut rng, 0.3);
            for month in 1..=12u32 {
                let mid = f64::from(ymd(year, month, days_in_month(year, month) / 2 + 1).ordinal());
                let t = annual + seasonal(mid, year) + gauss(&mut rng, 0.5);
                ensemble.row([format!("m{member:02}"), year.to_string(), month.to_string(), format!("{t:.3}")]);
            }
        }
    }

    let mut planted_table = Table::new(&["year", "season", "onset_date", "onset_doy"]);
    for p in &planted {
        planted_table.row([p.year.to_string(), p.season.to_string(), p.onset.to_string(), day_of_year(p.onset).to_string()]);
    }

    let files: [(&str, String); 9] = [
        ("grid.csv", grid.into_string()),
        ("mask.csv", mask.into_string()),
        ("population.csv", population.into_string()),
        ("load.csv", load.into_string()),
        ("fuel_mix.csv", mix.into_string()),
        ("outages.csv", outages.into_string()),
        ("ensemble.csv", ensemble.into_string()),
        (PLANTED_FILE, planted_table.into_string()),
        (CONFIG_FILE, config_text()),
    ];
    for (name, body) in &files {
        write_atomic(&dir.join(name), body.as_bytes())?;
    }
    Ok(FixtureFiles {
        dir: dir.to_path_buf(),
        config: dir.join(CONFIG_FILE),
        planted,
    })
}

fn config_text() -> String {
    format!(
        "# synthetic fixture; paths are relative to this file\n\
         region = fixture\n\
         load = load.csv\n\
         temperature_grid = grid.csv\n\
         mask = mask.csv\n\
         population = population.csv\n\
         fuel_mix = fuel_mix.csv\n\
         outages = outages.csv\n\
         ensemble = ensemble.csv\n\
         output_dir = out\n\
         bias_overlap = {FIRST_YEAR}..{LAST_YEAR}\n\
         projection_years = {}..{}\n\
         shoulder_periods = {y}-03-15..{y}-05-01, {y}-10-15..{y}-11-30\n\
         winter_periods = {y}-01-01..{y}-01-31, {y}-12-01..{y}-12-31\n",
        LAST_YEAR + 1,
        ENSEMBLE_YEARS.1,
        y = LAST_YEAR,
    )
}
