//! Config-driven orchestration.
//!
//! Each stage reads its upstream results from cached tables in the output
//! directory (running the upstream stage first when a table is missing) and
//! writes its own tables atomically. Tables use round-trip float formatting,
//! so a stage run from cache produces the same bytes as a fresh full run.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::fs::{self, File};
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};

use crate::adequacy::{self, Period};
use crate::calendar::{parse_date, ymd, Season};
use crate::error::{Error, Result};
use crate::ingest::{self, DEFAULT_MIN_HOURS};
use crate::output::{num, write_atomic, Table};
use crate::projection::{self, DEFAULT_PERSISTENCE};
use crate::thermal::{self, PopulationGrid, TemperatureGrid, Weighting};
use crate::trends::{self, Direction, OutlierPolicy, FALL_CUTOFF, SPRING_CUTOFF};
use crate::windows::{self, Metric, WindowConfig};

/// Names of the tables written under the output directory.
pub mod files {
    pub const DAILY_LOAD: &str = "daily_load.csv";
    pub const DAILY_LOAD_NET: &str = "daily_load_net.csv";
    pub const DAILY_TEMP: &str = "daily_temp.csv";
    pub const ANNUAL_TEMP: &str = "annual_temp.csv";
    pub const CUBIC_FITS: &str = "cubic_fits.csv";
    pub const DEGREE_DAYS: &str = "degree_days.csv";
    pub const SPATIAL_STD: &str = "spatial_std.csv";
    pub const SHOULDER: &str = "shoulder_windows.csv";
    pub const SHOULDER_NET: &str = "shoulder_windows_net.csv";
    pub const TRENDS: &str = "trends.csv";
    pub const TREND_BANDS: &str = "trend_bands.csv";
    pub const CORRELATIONS: &str = "correlations.csv";
    pub const ENSEMBLE_STATS: &str = "ensemble_stats.csv";
    pub const ONSET_TEMPERATURE: &str = "onset_vs_temperature.csv";
    pub const PROJECTION: &str = "projection.csv";
    pub const OUTAGE_PERIODS: &str = "outage_periods.csv";
    pub const UNMET_DEMAND: &str = "unmet_demand.csv";
    pub const HISTOGRAMS: &str = "generation_histograms.csv";
    pub const HEADROOM: &str = "generation_headroom.csv";
    pub const REPORT: &str = "report.txt";
}

// ---------------------------------------------------------------------------
// config

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightingMode {
    Population,
    Uniform,
}

/// Every recognised config key with a one-line description and default.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("region", "label used in the report (default: region)"),
    ("load", "hourly load CSV: date,hour,load_mw (required)"),
    ("temperature_grid", "gridded temperature: long CSV lat,lon,date,t2m_c, or .bin raster with a .hdr sidecar (required)"),
    ("mask", "region mask CSV: lat,lon,in_region (default: every cell in region)"),
    ("population", "population CSV: lat,lon,epoch,persons (default: uniform weights)"),
    ("fuel_mix", "15-minute fuel mix CSV: timestamp,wind_mw,solar_mw,hydro_mw,other_mw (optional)"),
    ("outages", "15-minute outage CSV: timestamp,outage_mw,telemetered_output_mw (needed by adequacy)"),
    ("ensemble", "climate ensemble CSV: member,year,month,t2m_c (needed by project)"),
    ("output_dir", "directory for all tables and the report (default: out)"),
    ("window_len", "shoulder window length in days, >= 1 (default: 45)"),
    ("min_hours", "hours a day needs to count as complete (default: 20)"),
    ("max_missing_days", "missing days tolerated inside a window (default: 3)"),
    ("cross_year", "let fall windows run into the next January: true|false (default: true)"),
    ("weighting", "regional temperature weighting: population|uniform (default: population when a population file is given)"),
    ("outlier_policy", "onset trend outliers: studentized|none|explicit:YEAR,YEAR,... (default: studentized)"),
    ("moving_average_years", "moving-average width for trend plot data (default: 5)"),
    ("projection_metric", "onset metric projected forward (default: degree_days)"),
    ("bias_overlap", "years used for ensemble bias correction, A..B (default: all shared years)"),
    ("projection_years", "projected years, A..B (default: after the last observed year to the ensemble end)"),
    ("persistence", "consecutive overlapping years needed for a merge (default: 3)"),
    ("extra_outage_mw", "outage moved into winter for the unmet-demand check (default: 5500)"),
    ("shoulder_periods", "comma-separated DATE..DATE periods (default: Mar 15-May 1 and Oct 15-Nov 30 of each outage year)"),
    ("winter_periods", "comma-separated DATE..DATE periods (default: January and December of each outage year)"),
    ("histogram_bin_mw", "generation histogram bin width (default: 1000)"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub region: String,
    pub load: PathBuf,
    pub temperature_grid: PathBuf,
    pub mask: Option<PathBuf>,
    pub population: Option<PathBuf>,
    pub fuel_mix: Option<PathBuf>,
    pub outages: Option<PathBuf>,
    pub ensemble: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub window: WindowConfig,
    pub min_hours: u8,
    pub weighting: WeightingMode,
    pub outlier_policy: OutlierPolicy,
    pub moving_average_years: usize,
    pub projection_metric: Metric,
    pub bias_overlap: Option<RangeInclusive<i32>>,
    pub projection_years: Option<RangeInclusive<i32>>,
    pub persistence: usize,
    pub extra_outage_mw: f64,
    pub shoulder_periods: Option<Vec<Period>>,
    pub winter_periods: Option<Vec<Period>>,
    pub histogram_bin_mw: f64,
}

fn parse_range(key: &str, v: &str) -> Result<RangeInclusive<i32>> {
    let bad = || Error::config(key, format!("`{v}` is not a year range A..B"));
    let (a, b) = v.split_once("..").ok_or_else(bad)?;
    let a: i32 = a.trim().parse().map_err(|_| bad())?;
    let b: i32 = b.trim().parse().map_err(|_| bad())?;
    if a > b {
        return Err(Error::config(key, format!("range {a}..{b} is empty")));
    }
    Ok(a..=b)
}

fn parse_periods(key: &str, v: &str) -> Result<Vec<Period>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            let bad = || Error::config(key, format!("`{s}` is not a period DATE..DATE"));
            let (a, b) = s.split_once("..").ok_or_else(bad)?;
            let start = parse_date(a.trim()).ok_or_else(bad)?;
            let end = parse_date(b.trim()).ok_or_else(bad)?;
            if start > end {
                return Err(Error::config(key, format!("period `{s}` ends before it starts")));
            }
            Ok(Period::new(format!("{start}..{end}"), start, end))
        })
        .collect()
}

fn parse_policy(v: &str) -> Result<OutlierPolicy> {
    match v {
        "studentized" => Ok(OutlierPolicy::studentized_default()),
        "none" => Ok(OutlierPolicy::None),
        _ => {
            let years = v
                .strip_prefix("explicit:")
                .ok_or_else(|| Error::config("outlier_policy", format!("unknown policy `{v}`")))?;
            years
                .split(',')
                .map(|y| {
                    y.trim()
                        .parse::<i32>()
                        .map(f64::from)
                        .map_err(|_| Error::config("outlier_policy", format!("`{y}` is not a year")))
                })
                .collect::<Result<Vec<_>>>()
                .map(OutlierPolicy::Explicit)
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        RunConfig::parse(&text, base)
    }

    /// Parses `key = value` lines; relative paths resolve against `base`.
    /// Files are not checked here, see [`RunConfig::validate`].
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut kv: BTreeMap<&str, &str> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::config(line, format!("line {}: expected `key = value`", i + 1))
            })?;
            let (k, v) = (k.trim(), v.trim());
            if !CONFIG_KEYS.iter().any(|(known, _)| *known == k) {
                return Err(Error::config(k, "unknown key"));
            }
            if kv.insert(k, v).is_some() {
                return Err(Error::config(k, "given more than once"));
            }
        }

        let path = |k: &str| kv.get(k).map(|v| base.join(v));
        let required = |k: &str| path(k).ok_or_else(|| Error::config(k, "required key is missing"));
        fn number<T: FromStr>(kv: &BTreeMap<&str, &str>, k: &str, default: T) -> Result<T> {
            match kv.get(k) {
                None => Ok(default),
                Some(v) => v
                    .parse()
                    .map_err(|_| Error::config(k, format!("`{v}` is not a valid number"))),
            }
        }

        let window_len: usize = number(&kv, "window_len", windows::DEFAULT_WINDOW_LEN)?;
        if window_len == 0 {
            return Err(Error::config("window_len", "must be at least 1"));
        }
        let max_missing: usize = number(&kv, "max_missing_days", 3)?;
        if max_missing >= window_len {
            return Err(Error::config("max_missing_days", "must be smaller than window_len"));
        }
        let cross_year = match kv.get("cross_year").copied() {
            None | Some("true") => true,
            Some("false") => false,
            Some(v) => return Err(Error::config("cross_year", format!("`{v}` is not true or false"))),
        };
        let min_hours: u8 = number(&kv, "min_hours", DEFAULT_MIN_HOURS)?;
        if !(1..=24).contains(&min_hours) {
            return Err(Error::config("min_hours", "must be within 1..=24"));
        }
        let population = path("population");
        let weighting = match kv.get("weighting").copied() {
            None if population.is_some() => WeightingMode::Population,
            None | Some("uniform") => WeightingMode::Uniform,
            Some("population") if population.is_some() => WeightingMode::Population,
            Some("population") => {
                return Err(Error::config("weighting", "population weighting needs a `population` file"))
            }
            Some(v) => return Err(Error::config("weighting", format!("unknown weighting `{v}`"))),
        };
        let persistence: usize = number(&kv, "persistence", DEFAULT_PERSISTENCE)?;
        if persistence == 0 {
            return Err(Error::config("persistence", "must be at least 1"));
        }
        let moving_average_years: usize = number(&kv, "moving_average_years", 5)?;
        if moving_average_years == 0 {
            return Err(Error::config("moving_average_years", "must be at least 1"));
        }
        let extra_outage_mw: f64 = number(&kv, "extra_outage_mw", 5_500.0)?;
        if !(extra_outage_mw >= 0.0 && extra_outage_mw.is_finite()) {
            return Err(Error::config("extra_outage_mw", "must be a finite value >= 0"));
        }
        let histogram_bin_mw: f64 = number(&kv, "histogram_bin_mw", 1_000.0)?;
        if !(histogram_bin_mw > 0.0 && histogram_bin_mw.is_finite()) {
            return Err(Error::config("histogram_bin_mw", "must be > 0"));
        }
        let projection_metric = match kv.get("projection_metric") {
            None => Metric::DegreeDays,
            Some(v) => v.parse().map_err(|e: String| Error::config("projection_metric", e))?,
        };

        Ok(RunConfig {
            region: kv.get("region").map_or("region", |v| v).to_string(),
            load: required("load")?,
            temperature_grid: required("temperature_grid")?,
            mask: path("mask"),
            population,
            fuel_mix: path("fuel_mix"),
            outages: path("outages"),
            ensemble: path("ensemble"),
            output_dir: path("output_dir").unwrap_or_else(|| base.join("out")),
            window: WindowConfig {
                window_len,
                max_missing,
                cross_year,
            },
            min_hours,
            weighting,
            outlier_policy: kv.get("outlier_policy").map_or(Ok(OutlierPolicy::studentized_default()), |v| parse_policy(v))?,
            moving_average_years,
            projection_metric,
            bias_overlap: kv.get("bias_overlap").map(|v| parse_range("bias_overlap", v)).transpose()?,
            projection_years: kv
                .get("projection_years")
                .map(|v| parse_range("projection_years", v))
                .transpose()?,
            persistence,
            extra_outage_mw,
            shoulder_periods: kv
                .get("shoulder_periods")
                .map(|v| parse_periods("shoulder_periods", v))
                .transpose()?,
            winter_periods: kv
                .get("winter_periods")
                .map(|v| parse_periods("winter_periods", v))
                .transpose()?,
            histogram_bin_mw,
        })
    }

    /// Every referenced input file must exist.
    pub fn validate(&self) -> Result<()> {
        let inputs = [
            ("load", Some(&self.load)),
            ("temperature_grid", Some(&self.temperature_grid)),
            ("mask", self.mask.as_ref()),
            ("population", self.population.as_ref()),
            ("fuel_mix", self.fuel_mix.as_ref()),
            ("outages", self.outages.as_ref()),
            ("ensemble", self.ensemble.as_ref()),
        ];
        for (key, p) in inputs {
            if let Some(p) = p {
                if !p.is_file() {
                    return Err(Error::config(key, format!("file `{}` does not exist", p.display())));
                }
            }
        }
        if self.temperature_grid.extension().is_some_and(|e| e == "bin") {
            let hdr = self.temperature_grid.with_extension("hdr");
            if !hdr.is_file() {
                return Err(Error::config(
                    "temperature_grid",
                    format!("raster sidecar `{}` does not exist", hdr.display()),
                ));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// stages

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Ingest,
    Thermal,
    Shoulder,
    Trends,
    Project,
    Adequacy,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Ingest,
        Stage::Thermal,
        Stage::Shoulder,
        Stage::Trends,
        Stage::Project,
        Stage::Adequacy,
        Stage::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Thermal => "thermal",
            Stage::Shoulder => "shoulder",
            Stage::Trends => "trends",
            Stage::Project => "project",
            Stage::Adequacy => "adequacy",
            Stage::Report => "report",
        }
    }

    /// Tables whose presence lets downstream stages skip this one.
    fn cached_outputs(self) -> &'static [&'static str] {
        match self {
            Stage::Ingest => &[files::DAILY_LOAD],
            Stage::Thermal => &[files::DAILY_TEMP, files::ANNUAL_TEMP, files::DEGREE_DAYS],
            Stage::Shoulder => &[files::SHOULDER],
            _ => &[],
        }
    }

    fn upstream(self) -> &'static [Stage] {
        match self {
            Stage::Thermal => &[Stage::Ingest],
            Stage::Shoulder => &[Stage::Ingest, Stage::Thermal],
            Stage::Trends => &[Stage::Shoulder],
            Stage::Project => &[Stage::Thermal, Stage::Shoulder],
            _ => &[],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown stage `{s}`")))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSummary {
    pub stages_run: Vec<Stage>,
    /// Stages left out of an `all` run because an optional input is absent.
    pub skipped: Vec<(Stage, String)>,
    /// Written tables, relative to the output directory.
    pub written: BTreeSet<String>,
    pub report: Option<String>,
}

struct Runner<'a> {
    cfg: &'a RunConfig,
    out: &'a Path,
    /// Skip stages whose optional inputs are unset instead of failing.
    lenient: bool,
    done: BTreeSet<Stage>,
    summary: RunSummary,
}

/// Runs `stages` in dependency order; upstream stages without cached
/// results are run first.
pub fn run_pipeline(cfg: &RunConfig, stages: &[Stage]) -> Result<RunSummary> {
    run(cfg, stages, false)
}

/// Every stage. Projection and adequacy are skipped, not failed, when their
/// optional inputs are not configured.
pub fn run_all(cfg: &RunConfig) -> Result<RunSummary> {
    run(cfg, &Stage::ALL, true)
}

fn run(cfg: &RunConfig, stages: &[Stage], lenient: bool) -> Result<RunSummary> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    let mut runner = Runner {
        cfg,
        out: &cfg.output_dir,
        lenient,
        done: BTreeSet::new(),
        summary: RunSummary::default(),
    };
    let requested: BTreeSet<Stage> = stages.iter().copied().collect();
    for stage in requested {
        runner.execute(stage)?;
    }
    Ok(runner.summary)
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

impl Runner<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn cached(&self, name: &str) -> Result<File> {
        open(&self.path(name))
    }

    fn write(&mut self, name: &str, body: &str) -> Result<()> {
        write_atomic(&self.path(name), body.as_bytes())?;
        self.summary.written.insert(name.to_string());
        Ok(())
    }

    fn ensure(&mut self, stage: Stage) -> Result<()> {
        if self.done.contains(&stage) {
            return Ok(());
        }
        if stage.cached_outputs().iter().all(|f| self.path(f).is_file()) {
            return Ok(());
        }
        self.execute(stage)
    }

    fn execute(&mut self, stage: Stage) -> Result<()> {
        if self.done.contains(&stage) {
            return Ok(());
        }
        for &up in stage.upstream() {
            self.ensure(up)?;
        }
        log::info!("stage {stage}");
        let ran = match stage {
            Stage::Ingest => self.ingest().map(|_| true),
            Stage::Thermal => self.thermal().map(|_| true),
            Stage::Shoulder => self.shoulder().map(|_| true),
            Stage::Trends => self.trends().map(|_| true),
            Stage::Project => self.optional(stage, |r| r.cfg.ensemble.clone(), "ensemble", Runner::project),
            Stage::Adequacy => self.optional(stage, |r| r.cfg.outages.clone(), "outages", Runner::adequacy),
            Stage::Report => self.report().map(|_| true),
        }?;
        self.done.insert(stage);
        if ran {
            self.summary.stages_run.push(stage);
        }
        Ok(())
    }

    fn optional(
        &mut self,
        stage: Stage,
        input: impl Fn(&Self) -> Option<PathBuf>,
        key: &str,
        body: fn(&mut Self, &Path) -> Result<()>,
    ) -> Result<bool> {
        match input(self) {
            Some(p) => body(self, &p).map(|_| true),
            None if self.lenient => {
                log::warn!("skipping {stage}: no `{key}` configured");
                self.summary.skipped.push((stage, format!("no `{key}` configured")));
                Ok(false)
            }
            None => Err(Error::MissingInput {
                stage: stage.as_str(),
                what: key.to_string(),
            }),
        }
    }

    fn ingest(&mut self) -> Result<()> {
        let hourly = ingest::parse_hourly_load(open(&self.cfg.load)?)?;
        if hourly.is_empty() {
            return Err(Error::Empty("hourly load"));
        }
        self.write(files::DAILY_LOAD, &ingest::write_daily(&ingest::aggregate_daily(&hourly)))?;

        if let Some(mix_path) = &self.cfg.fuel_mix {
            let mix = ingest::parse_fuel_mix(open(mix_path)?)?;
            if let (Some(first), Some(last)) = (mix.first(), mix.last()) {
                // netting only where the mix record exists
                let (lo, hi) = (first.timestamp, last.timestamp);
                let covered: Vec<_> = hourly
                    .iter()
                    .filter(|r| r.timestamp >= lo && r.timestamp <= hi)
                    .copied()
                    .collect();
                let net = ingest::net_non_thermal(&covered, &mix)?;
                self.write(files::DAILY_LOAD_NET, &ingest::write_daily(&ingest::aggregate_daily(&net)))?;
            }
        }
        Ok(())
    }

    fn load_grid(&self) -> Result<TemperatureGrid> {
        let path = &self.cfg.temperature_grid;
        let mut grid = if path.extension().is_some_and(|e| e == "bin") {
            let hdr = path.with_extension("hdr");
            let sidecar = fs::read_to_string(&hdr).map_err(|e| Error::io(&hdr, e))?;
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            TemperatureGrid::from_binary(&sidecar, &bytes)?
        } else {
            TemperatureGrid::parse_long(open(path)?)?
        };
        if let Some(mask) = &self.cfg.mask {
            grid.apply_mask(open(mask)?)?;
        }
        Ok(grid)
    }

    fn thermal(&mut self) -> Result<()> {
        let grid = self.load_grid()?;
        let (start, end) = thermal::grid_date_span(&grid).ok_or(Error::Empty("temperature grid"))?;
        let population = match (&self.cfg.population, self.cfg.weighting) {
            (Some(p), WeightingMode::Population) => Some(PopulationGrid::parse(open(p)?, &grid)?),
            _ => None,
        };
        let weighting = population.as_ref().map_or(Weighting::Uniform, Weighting::Population);

        let daily = thermal::population_weighted_daily_temp(&grid, weighting, start, end)?;
        // annual means feed the temperature/onset regression and are not
        // population-weighted
        let unweighted = match weighting {
            Weighting::Uniform => daily.clone(),
            Weighting::Population(_) => thermal::population_weighted_daily_temp(&grid, Weighting::Uniform, start, end)?,
        };
        let annual = thermal::annual_mean_temps(&unweighted);

        let loads = ingest::parse_daily(self.cached(files::DAILY_LOAD)?)?;
        let fits = thermal::fit_yearly_cubics(&daily, &loads, self.cfg.min_hours)?;
        let t0 = thermal::global_t0(&fits)?;
        let dd = thermal::degree_day_series(&daily, t0);

        let spread = thermal::spatial_temp_stddev(&grid, start, end)?;
        let mut spatial = Table::new(&["date", "std_c"]);
        spatial.comment(&format!(
            "mean_std_c={} single_cell={}",
            num(spread.mean_std),
            spread.single_cell
        ));
        for (d, s) in &spread.per_day {
            spatial.row([d.to_string(), num(*s)]);
        }

        self.write(files::DAILY_TEMP, &thermal::write_daily_temps(&daily))?;
        self.write(files::ANNUAL_TEMP, &thermal::write_annual(&annual))?;
        self.write(files::CUBIC_FITS, &thermal::write_fits(&fits))?;
        self.write(files::DEGREE_DAYS, &thermal::write_degree_days(&dd, t0))?;
        self.write(files::SPATIAL_STD, spatial.as_str())?;
        Ok(())
    }

    fn shoulder(&mut self) -> Result<()> {
        let loads = ingest::parse_daily(self.cached(files::DAILY_LOAD)?)?;
        let dd = thermal::parse_degree_days(self.cached(files::DEGREE_DAYS)?)?;
        let min_hours = self.cfg.min_hours;
        let dd_series = windows::degree_day_series(&dd);
        let energy = windows::load_series(&loads, Metric::TotalEnergy, min_hours);
        let peak = windows::load_series(&loads, Metric::PeakDemand, min_hours);
        let rows = windows::shoulder_table(
            &[
                (Metric::DegreeDays, &dd_series),
                (Metric::TotalEnergy, &energy),
                (Metric::PeakDemand, &peak),
            ],
            &self.cfg.window,
        )?;
        self.write(files::SHOULDER, &windows::write_shoulder_table(&rows))?;

        let net_path = self.path(files::DAILY_LOAD_NET);
        if net_path.is_file() {
            let net = ingest::parse_daily(open(&net_path)?)?;
            let energy = windows::load_series(&net, Metric::TotalEnergy, min_hours);
            let peak = windows::load_series(&net, Metric::PeakDemand, min_hours);
            let rows = windows::shoulder_table(
                &[(Metric::TotalEnergy, &energy), (Metric::PeakDemand, &peak)],
                &self.cfg.window,
            )?;
            self.write(files::SHOULDER_NET, &windows::write_shoulder_table(&rows))?;
        }
        Ok(())
    }

    fn trends(&mut self) -> Result<()> {
        let rows = windows::parse_shoulder_table(self.cached(files::SHOULDER)?)?;
        let mut table = Table::new(&[
            "metric",
            "season",
            "slope_days_per_decade",
            "stderr_days_per_decade",
            "shift_probability",
            "direction",
            "n",
            "excluded_years",
        ]);
        let mut bands = Table::new(&[
            "metric",
            "season",
            "year",
            "onset_doy",
            "moving_average",
            "fit",
            "band_low",
            "band_high",
        ]);
        for metric in Metric::ALL {
            for season in Season::ALL {
                let series = windows::onsets(&rows, metric, season);
                if series.is_empty() {
                    continue;
                }
                let fit = match trends::yearly_trend(&series, Direction::for_season(season), &self.cfg.outlier_policy) {
                    Ok(f) => f,
                    Err(e @ (Error::TooFewPoints { .. } | Error::DegenerateAbscissae)) => {
                        log::warn!("no trend for {metric} {season}: {e}");
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                let (slope, se) = fit.per_decade();
                let excluded: Vec<String> = fit.excluded.iter().map(|p| (p.0 as i32).to_string()).collect();
                table.row([
                    metric.to_string(),
                    season.to_string(),
                    num(slope),
                    num(se),
                    num(fit.shift_probability),
                    match fit.direction {
                        Direction::Earlier => "earlier".to_string(),
                        Direction::Later => "later".to_string(),
                    },
                    fit.n.to_string(),
                    excluded.join(";"),
                ]);
                let smooth = trends::moving_average(&series, self.cfg.moving_average_years);
                for ((year, doy), (_, ma)) in series.iter().zip(&smooth) {
                    let x = f64::from(*year);
                    let (lo, hi) = fit.band(x);
                    bands.row([
                        metric.to_string(),
                        season.to_string(),
                        year.to_string(),
                        num(*doy),
                        num(*ma),
                        num(fit.predict(x)),
                        num(lo),
                        num(hi),
                    ]);
                }
            }
        }

        let mut corr = Table::new(&["season", "x_metric", "y_metric", "cutoff", "r", "n_used", "excluded_years"]);
        let dates = |metric: Metric, season: Season| -> Vec<(i32, NaiveDate)> {
            rows.iter()
                .filter(|w| w.metric == metric && w.season == season)
                .map(|w| (w.year, w.onset_date))
                .collect()
        };
        for season in Season::ALL {
            let x = dates(Metric::DegreeDays, season);
            let cutoff = match season {
                Season::Spring => SPRING_CUTOFF,
                Season::Fall => FALL_CUTOFF,
            };
            for y_metric in [Metric::TotalEnergy, Metric::PeakDemand] {
                let y = dates(y_metric, season);
                for c in [None, Some(cutoff)] {
                    match trends::pearson_with_cutoff(&x, &y, season, c) {
                        Ok(r) => corr.row([
                            season.to_string(),
                            Metric::DegreeDays.to_string(),
                            y_metric.to_string(),
                            c.map_or_else(|| "none".to_string(), |(m, d)| format!("{m:02}-{d:02}")),
                            num(r.r),
                            r.n_used.to_string(),
                            r.excluded_years.iter().map(i32::to_string).collect::<Vec<_>>().join(";"),
                        ]),
                        Err(e @ (Error::TooFewPoints { .. } | Error::DegenerateAbscissae)) => {
                            log::warn!("no {season} correlation with {y_metric}: {e}");
                        }
                        Err(e) => return Err(e),
                    }
                }
            }
        }

        self.write(files::TRENDS, table.as_str())?;
        self.write(files::TREND_BANDS, bands.as_str())?;
        self.write(files::CORRELATIONS, corr.as_str())?;
        Ok(())
    }

    fn project(&mut self, ensemble_path: &Path) -> Result<()> {
        let annual = thermal::parse_annual(self.cached(files::ANNUAL_TEMP)?)?;
        let rows = windows::parse_shoulder_table(self.cached(files::SHOULDER)?)?;
        let records = projection::parse_ensemble(open(ensemble_path)?)?;
        let stats = projection::ensemble_annual_stats(&records)?;
        let (first_obs, last_obs) = match (annual.first(), annual.last()) {
            (Some(a), Some(b)) => (a.0, b.0),
            _ => return Err(Error::Empty("annual mean temperatures")),
        };
        let overlap = self.cfg.bias_overlap.clone().unwrap_or(first_obs..=last_obs);
        let bias = projection::fit_bias_correction(&annual, &stats, overlap)?;
        let path = bias.apply_stats(&stats);

        let metric = self.cfg.projection_metric;
        let spring_line = projection::onset_vs_temperature(&annual, &windows::onsets(&rows, metric, Season::Spring), Season::Spring)?;
        let fall_line = projection::onset_vs_temperature(&annual, &windows::onsets(&rows, metric, Season::Fall), Season::Fall)?;
        let last_ens = stats.last().map(|s| s.year).ok_or(Error::Empty("ensemble"))?;
        let years = self.cfg.projection_years.clone().unwrap_or(last_obs + 1..=last_ens);
        let (spring, fall) = projection::project_onsets(&spring_line, &fall_line, &path, years)?;
        let merge = projection::merge_year(&spring, &fall, self.cfg.persistence);

        let mut ens = Table::new(&[
            "year",
            "ensemble_mean_c",
            "ensemble_std_c",
            "members",
            "corrected_mean_c",
            "corrected_std_c",
        ]);
        ens.comment(&format!("gain={} offset={}", num(bias.gain), num(bias.offset)));
        for (s, c) in stats.iter().zip(&path) {
            ens.row([
                s.year.to_string(),
                num(s.ensemble_mean_temp),
                num(s.ensemble_std),
                s.n_members.to_string(),
                num(c.mean),
                num(c.std),
            ]);
        }
        let mut lines = Table::new(&["season", "metric", "slope_days_per_c", "intercept", "stderr", "n", "shift_probability"]);
        for (season, l) in [(Season::Spring, &spring_line), (Season::Fall, &fall_line)] {
            lines.row([
                season.to_string(),
                metric.to_string(),
                num(l.slope),
                num(l.intercept),
                num(l.slope_stderr),
                l.n.to_string(),
                num(l.shift_probability),
            ]);
        }

        self.write(files::ENSEMBLE_STATS, ens.as_str())?;
        self.write(files::ONSET_TEMPERATURE, lines.as_str())?;
        self.write(
            files::PROJECTION,
            &projection::write_projection(&spring, &fall, merge, self.cfg.persistence),
        )?;
        Ok(())
    }

    fn adequacy(&mut self, outages_path: &Path) -> Result<()> {
        let outages = ingest::parse_outages(open(outages_path)?)?;
        let load = ingest::parse_hourly_load(open(&self.cfg.load)?)?;
        let mut years: Vec<i32> = outages.iter().map(|r| r.timestamp.year()).collect();
        years.dedup();
        let has_records = |p: &Period| outages.iter().any(|r| p.contains(r.timestamp.date()));
        let defaults = |spans: &[((u32, u32), (u32, u32))]| -> Vec<Period> {
            years
                .iter()
                .flat_map(|&y| {
                    spans.iter().map(move |&((m0, d0), (m1, d1))| {
                        let (a, b) = (ymd(y, m0, d0), ymd(y, m1, d1));
                        Period::new(format!("{a}..{b}"), a, b)
                    })
                })
                .filter(|p| has_records(p))
                .collect()
        };
        let shoulder = self
            .cfg
            .shoulder_periods
            .clone()
            .unwrap_or_else(|| defaults(&[((3, 15), (5, 1)), ((10, 15), (11, 30))]));
        let winter = self
            .cfg
            .winter_periods
            .clone()
            .unwrap_or_else(|| defaults(&[((1, 1), (1, 31)), ((12, 1), (12, 31))]));
        if shoulder.is_empty() || winter.is_empty() {
            return Err(Error::MissingInput {
                stage: "adequacy",
                what: "outage records inside shoulder and winter periods".into(),
            });
        }

        let mut stats = Vec::new();
        for p in shoulder.iter().chain(&winter) {
            stats.push(adequacy::average_outages(&outages, p)?);
        }
        let pooled_shoulder = adequacy::average_outages_pooled(&outages, &shoulder, "shoulder_pooled")?;
        let pooled_winter = adequacy::average_outages_pooled(&outages, &winter, "winter_pooled")?;
        let delta = adequacy::incremental_maintenance_delta(pooled_shoulder.mean_outage_gw, pooled_winter.mean_outage_gw);
        stats.push(pooled_shoulder);
        stats.push(pooled_winter);
        let mut outage_table = adequacy::write_outage_table(&stats);
        let _ = writeln!(outage_table, "# incremental_maintenance_gw={}", num(delta));

        let unmet: Vec<_> = adequacy::winter_months(&load, &outages)
            .into_iter()
            .map(|(y, m)| adequacy::monthly_unmet(&load, &outages, y, m, self.cfg.extra_outage_mw))
            .collect::<Result<_>>()?;

        let mut hists = Vec::new();
        for p in shoulder.iter().chain(&winter) {
            match adequacy::peak_demand_in(&load, p) {
                Some(peak) => hists.push(adequacy::generation_histogram(&outages, p, self.cfg.histogram_bin_mw, peak)?),
                None => log::warn!("no load inside {p}; histogram skipped"),
            }
        }
        let (bins, headroom) = adequacy::write_histograms(&hists);

        self.write(files::OUTAGE_PERIODS, &outage_table)?;
        self.write(files::UNMET_DEMAND, &adequacy::write_unmet_table(&unmet))?;
        self.write(files::HISTOGRAMS, &bins)?;
        self.write(files::HEADROOM, &headroom)?;
        Ok(())
    }

    fn report(&mut self) -> Result<()> {
        let text = emit_report(self.out, &self.cfg.region);
        self.write(files::REPORT, &text)?;
        self.summary.report = Some(text);
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// report

/// Cached table as header-keyed rows plus its `#` metadata lines.
struct Cached {
    rows: Vec<BTreeMap<String, String>>,
    meta: Vec<String>,
}

impl Cached {
    fn read(dir: &Path, name: &str) -> Option<Cached> {
        let text = fs::read_to_string(dir.join(name)).ok()?;
        let mut meta = Vec::new();
        let mut lines = Vec::new();
        for l in text.lines() {
            match l.strip_prefix("# ") {
                Some(m) => meta.push(m.to_string()),
                None if !l.is_empty() => lines.push(l),
                None => {}
            }
        }
        let header: Vec<&str> = lines.first()?.split(',').collect();
        let rows = lines[1..]
            .iter()
            .map(|l| {
                header
                    .iter()
                    .map(|h| h.to_string())
                    .zip(l.split(',').map(str::to_string))
                    .collect()
            })
            .collect();
        Some(Cached { rows, meta })
    }

    /// `key=value` from the metadata lines.
    fn meta(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .flat_map(|m| m.split_whitespace())
            .find_map(|kv| kv.strip_prefix(key)?.strip_prefix('='))
    }
}

fn field<'a>(row: &'a BTreeMap<String, String>, k: &str) -> &'a str {
    row.get(k).map_or("", String::as_str)
}

fn fixed(raw: &str, digits: usize) -> String {
    raw.parse::<f64>()
        .map_or_else(|_| raw.to_string(), |v| format!("{v:.digits$}"))
}

/// Plain-text digest of whatever results sit in `dir`.
pub fn emit_report(dir: &Path, region: &str) -> String {
    let mut sections: Vec<String> = Vec::new();

    if let Some(dd) = Cached::read(dir, files::DEGREE_DAYS) {
        let mut s = String::from("reference temperature\n");
        if let Some(t0) = dd.meta("t0_c") {
            let _ = write!(s, "  T0 = {} C", fixed(t0, 2));
            if let Some(fits) = Cached::read(dir, files::CUBIC_FITS) {
                let years: Vec<&str> = fits.rows.iter().map(|r| field(r, "year")).collect();
                if let (Some(a), Some(b)) = (years.first(), years.last()) {
                    let _ = write!(s, " (mean of {} yearly cubic fits, {a}-{b})", years.len());
                }
            }
            s.push('\n');
        }
        if let Some(sp) = Cached::read(dir, files::SPATIAL_STD).and_then(|c| c.meta("mean_std_c").map(str::to_string)) {
            let _ = writeln!(s, "  mean spatial spread of daily temperature: {} C", fixed(&sp, 2));
        }
        sections.push(s);
    }

    if let Some(sh) = Cached::read(dir, files::SHOULDER) {
        let mut by_year: BTreeMap<&str, BTreeMap<(String, String), &str>> = BTreeMap::new();
        for r in &sh.rows {
            by_year
                .entry(field(r, "year"))
                .or_default()
                .insert((field(r, "season").to_string(), field(r, "metric").to_string()), field(r, "onset_date"));
        }
        let cols: Vec<(String, String)> = Season::ALL
            .iter()
            .flat_map(|s| Metric::ALL.iter().map(move |m| (s.to_string(), m.to_string())))
            .collect();
        let mut s = String::from("shoulder-season onsets\n  year");
        for (season, metric) in &cols {
            let _ = write!(s, " {:>22}", format!("{season}/{metric}"));
        }
        s.push('\n');
        for (year, cells) in &by_year {
            let _ = write!(s, "  {year}");
            for c in &cols {
                let _ = write!(s, " {:>22}", cells.get(c).copied().unwrap_or("-"));
            }
            s.push('\n');
        }
        sections.push(s);
    }

    if let Some(tr) = Cached::read(dir, files::TRENDS) {
        let mut s = String::from("onset trends\n");
        for r in &tr.rows {
            let _ = write!(
                s,
                "  {} {}: slope {} days/decade (stderr {}), P({}) = {}, n = {}",
                field(r, "metric"),
                field(r, "season"),
                fixed(field(r, "slope_days_per_decade"), 2),
                fixed(field(r, "stderr_days_per_decade"), 2),
                field(r, "direction"),
                fixed(field(r, "shift_probability"), 3),
                field(r, "n"),
            );
            let ex = field(r, "excluded_years");
            if !ex.is_empty() {
                let _ = write!(s, ", excluded {}", ex.replace(';', " "));
            }
            s.push('\n');
        }
        if let Some(c) = Cached::read(dir, files::CORRELATIONS) {
            s.push_str("  correlation with degree-day onsets\n");
            for r in &c.rows {
                let _ = writeln!(
                    s,
                    "    {} {} (cutoff {}): r = {}, n = {}",
                    field(r, "season"),
                    field(r, "y_metric"),
                    field(r, "cutoff"),
                    fixed(field(r, "r"), 3),
                    field(r, "n_used"),
                );
            }
        }
        sections.push(s);
    }

    if let Some(pr) = Cached::read(dir, files::PROJECTION) {
        let mut s = String::from("projection\n");
        if let Some(ens) = Cached::read(dir, files::ENSEMBLE_STATS) {
            if let (Some(g), Some(o)) = (ens.meta("gain"), ens.meta("offset")) {
                let _ = writeln!(s, "  bias correction: T_corr = {} * T + {}", fixed(g, 4), fixed(o, 4));
            }
        }
        if let Some(lines) = Cached::read(dir, files::ONSET_TEMPERATURE) {
            for r in &lines.rows {
                let _ = writeln!(
                    s,
                    "  {} onset vs annual temperature: {} days/C (stderr {}, n = {})",
                    field(r, "season"),
                    fixed(field(r, "slope_days_per_c"), 2),
                    fixed(field(r, "stderr"), 2),
                    field(r, "n"),
                );
            }
        }
        let years: BTreeSet<&str> = pr.rows.iter().map(|r| field(r, "year")).collect();
        if let (Some(a), Some(b)) = (years.first(), years.last()) {
            let _ = writeln!(s, "  projected years: {a}-{b}");
        }
        match (pr.meta("merge_year"), pr.meta("persistence")) {
            (Some("none"), Some(p)) => {
                let _ = writeln!(s, "  merge year: none (persistence {p})");
            }
            (Some(y), Some(p)) => {
                let _ = writeln!(s, "  merge year: {y} (persistence {p})");
            }
            _ => {}
        }
        sections.push(s);
    }

    if let Some(op) = Cached::read(dir, files::OUTAGE_PERIODS) {
        let mut s = String::from("maintenance adequacy\n");
        for r in &op.rows {
            let _ = writeln!(
                s,
                "  {:<24} mean outage {} GW",
                field(r, "period"),
                field(r, "mean_outage_gw")
            );
        }
        if let Some(d) = op.meta("incremental_maintenance_gw") {
            let _ = writeln!(s, "  incremental maintenance outage: {} GW", fixed(d, 2));
        }
        if let Some(un) = Cached::read(dir, files::UNMET_DEMAND) {
            s.push_str("  month    max_output_gw  extra_outage_gw  pct_unmet\n");
            for r in &un.rows {
                let _ = writeln!(
                    s,
                    "  {:<8} {:>13}  {:>15}  {:>9}",
                    field(r, "month"),
                    field(r, "max_output_gw"),
                    field(r, "extra_outage_gw"),
                    field(r, "pct_unmet"),
                );
            }
        }
        if let Some(h) = Cached::read(dir, files::HEADROOM) {
            for r in h.rows.iter().filter(|r| field(r, "balanced") == "true") {
                let _ = writeln!(s, "  {}: peak demand reaches maximum output", field(r, "period"));
            }
        }
        let _ = writeln!(
            s,
            "  reference (ERCOT 2022): shoulder {} GW, winter {} GW ({} GW from monthly figures), increment {} GW",
            adequacy::published::SHOULDER_POOLED_GW,
            adequacy::published::WINTER_POOLED_GW,
            adequacy::published::winter_from_monthly(),
            adequacy::published::INCREMENTAL_MAINTENANCE_GW,
        );
        sections.push(s);
    }

    if sections.is_empty() {
        return "no stages run\n".to_string();
    }
    let mut out = format!("shoulder-season report: {region}\n");
    for s in sections {
        out.push('\n');
        out.push_str(&s);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_cfg(extra: &str) -> Result<RunConfig> {
        RunConfig::parse(
            &format!("load = l.csv\ntemperature_grid = g.csv\n{extra}"),
            Path::new("/data"),
        )
    }

    fn key_of(e: Error) -> String {
        match e {
            Error::Config { key, .. } => key,
            other => panic!("expected a config error, got {other}"),
        }
    }

    #[test]
    fn defaults() {
        let c = base_cfg("").unwrap();
        assert_eq!(c.load, PathBuf::from("/data/l.csv"));
        assert_eq!(c.output_dir, PathBuf::from("/data/out"));
        assert_eq!(c.window, WindowConfig::default());
        assert_eq!(c.min_hours, 20);
        assert_eq!(c.persistence, 3);
        assert_eq!(c.weighting, WeightingMode::Uniform);
        assert_eq!(c.projection_metric, Metric::DegreeDays);
        assert_eq!(c.outlier_policy, OutlierPolicy::studentized_default());
    }

    #[test]
    fn errors_name_the_key() {
        assert_eq!(key_of(base_cfg("window_len = 0").unwrap_err()), "window_len");
        assert_eq!(key_of(base_cfg("window_len = x").unwrap_err()), "window_len");
        assert_eq!(key_of(base_cfg("persistance = 3").unwrap_err()), "persistance");
        assert_eq!(key_of(base_cfg("cross_year = maybe").unwrap_err()), "cross_year");
        assert_eq!(key_of(base_cfg("outlier_policy = explicit:20x1").unwrap_err()), "outlier_policy");
        assert_eq!(key_of(base_cfg("bias_overlap = 2020..2001").unwrap_err()), "bias_overlap");
        assert_eq!(key_of(base_cfg("weighting = population").unwrap_err()), "weighting");
        assert_eq!(key_of(base_cfg("shoulder_periods = 2022-05-01..2022-03-15").unwrap_err()), "shoulder_periods");
        assert_eq!(key_of(base_cfg("min_hours = 3\nmin_hours = 4").unwrap_err()), "min_hours");
        assert_eq!(key_of(RunConfig::parse("load = l.csv", Path::new("")).unwrap_err()), "temperature_grid");
    }

    #[test]
    fn parses_lists_and_ranges() {
        let c = base_cfg(
            "outlier_policy = explicit:2011, 2015\nshoulder_periods = 2022-03-15..2022-05-01, 2022-10-15..2022-11-30\nprojection_years = 2023..2100\ncross_year = false",
        )
        .unwrap();
        assert_eq!(c.outlier_policy, OutlierPolicy::Explicit(vec![2011.0, 2015.0]));
        let p = c.shoulder_periods.unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p[1].end, ymd(2022, 11, 30));
        assert_eq!(c.projection_years, Some(2023..=2100));
        assert!(!c.window.cross_year);
    }

    #[test]
    fn validate_reports_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        let c = RunConfig::parse("load = l.csv\ntemperature_grid = g.csv", dir.path()).unwrap();
        assert_eq!(key_of(c.validate().unwrap_err()), "load");
    }

    #[test]
    fn stage_names() {
        for s in Stage::ALL {
            assert_eq!(s.as_str().parse::<Stage>().unwrap(), s);
        }
        assert!("bogus".parse::<Stage>().is_err());
    }

    #[test]
    fn empty_report() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(emit_report(dir.path(), "x"), "no stages run\n");
    }

    #[test]
    fn trends_only_report() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join(files::TRENDS),
            "metric,season,slope_days_per_decade,stderr_days_per_decade,shift_probability,direction,n,excluded_years\n\
             degree_days,spring,-2.4,1,0.99,earlier,27,\n",
        )
        .unwrap();
        let r = emit_report(dir.path(), "x");
        assert!(r.contains("degree_days spring: slope -2.40 days/decade"), "{r}");
        assert!(r.contains("P(earlier) = 0.990"), "{r}");
    }
}
