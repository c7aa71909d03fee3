//! Minimum-mean window search: for each year, half and metric, the run of
//! `window_len` consecutive days with the lowest average value.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use chrono::{Datelike, Duration, NaiveDate};

use crate::calendar::{day_of_year, parse_date, ymd, Season};
use crate::error::{Error, Result};
use crate::ingest::{field_f64, read_rows, DailyLoadSummary};
use crate::output::{num, Table};
use crate::thermal::DegreeDayValue;

pub const SHOULDER_HEADER: [&str; 7] = [
    "year",
    "season",
    "metric",
    "onset_date",
    "onset_doy",
    "window_mean",
    "days_used",
];

pub const DEFAULT_WINDOW_LEN: usize = 45;

/// Relative slack when comparing window means, so rounding noise in the
/// running sums cannot displace an earlier onset with an equal mean.
const TIE_TOLERANCE: f64 = 1e-12;

pub type DailySeries = BTreeMap<NaiveDate, f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    DegreeDays,
    TotalEnergy,
    PeakDemand,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::DegreeDays, Metric::TotalEnergy, Metric::PeakDemand];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::DegreeDays => "degree_days",
            Metric::TotalEnergy => "total_energy",
            Metric::PeakDemand => "peak_demand",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown metric `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowConfig {
    pub window_len: usize,
    /// Missing days tolerated inside a window.
    pub max_missing: usize,
    /// Allow fall windows to run into the next January when data exists.
    pub cross_year: bool,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            window_len: DEFAULT_WINDOW_LEN,
            max_missing: 3,
            cross_year: true,
        }
    }
}

impl WindowConfig {
    pub fn min_present(&self) -> usize {
        self.window_len.saturating_sub(self.max_missing).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShoulderWindow {
    pub year: i32,
    pub season: Season,
    pub metric: Metric,
    pub onset_date: NaiveDate,
    pub onset_doy: u32,
    pub window_mean: f64,
    pub days_used: usize,
}

/// Finds the onset in `season` of `year` whose window has the lowest mean.
///
/// Every day of the half is a candidate onset; the window itself may run
/// past the half (and past Dec 31 when `cross_year` is set). A window is
/// admissible when it lies within the series' date span and has at least
/// `cfg.min_present()` days present. Ties go to the earliest onset.
pub fn min_window(
    series: &DailySeries,
    metric: Metric,
    year: i32,
    season: Season,
    cfg: &WindowConfig,
) -> Result<ShoulderWindow> {
    if cfg.window_len == 0 {
        return Err(Error::Window("window length must be at least 1".into()));
    }
    let (Some((&first, _)), Some((&last, _))) = (series.first_key_value(), series.last_key_value())
    else {
        return Err(Error::Window("empty series".into()));
    };
    let len = cfg.window_len;
    let (half_start, half_end) = season.bounds(year);
    let year_end = ymd(year, 12, 31);
    let span = (half_end - half_start).num_days() as usize + len;

    // prefix sums over [half_start, half_start + span)
    let mut sum = vec![0.0f64; span + 1];
    let mut count = vec![0usize; span + 1];
    for i in 0..span {
        let v = series.get(&(half_start + Duration::days(i as i64)));
        sum[i + 1] = sum[i] + v.copied().unwrap_or(0.0);
        count[i + 1] = count[i] + usize::from(v.is_some());
    }

    let mut best: Option<(usize, f64)> = None;
    for offset in 0..=(half_end - half_start).num_days() as usize {
        let onset = half_start + Duration::days(offset as i64);
        let end = onset + Duration::days(len as i64 - 1);
        if onset < first || end > last || (!cfg.cross_year && end > year_end) {
            continue;
        }
        let present = count[offset + len] - count[offset];
        if present < cfg.min_present() {
            continue;
        }
        let mean = (sum[offset + len] - sum[offset]) / present as f64;
        let better = match best {
            None => true,
            Some((_, b)) => mean < b - TIE_TOLERANCE * b.abs().max(1.0),
        };
        if better {
            best = Some((offset, mean));
        }
    }

    let (offset, _) = best.ok_or_else(|| {
        Error::Window(format!(
            "no admissible {len}-day {metric} window in {season} {year}"
        ))
    })?;
    let onset_date = half_start + Duration::days(offset as i64);
    let values: Vec<f64> = series
        .range(onset_date..onset_date + Duration::days(len as i64))
        .map(|(_, v)| *v)
        .collect();
    Ok(ShoulderWindow {
        year,
        season,
        metric,
        onset_date,
        onset_doy: day_of_year(onset_date),
        window_mean: values.iter().sum::<f64>() / values.len() as f64,
        days_used: values.len(),
    })
}

pub fn degree_day_series(values: &[DegreeDayValue]) -> DailySeries {
    values.iter().map(|v| (v.date, v.dd)).collect()
}

/// Daily load metric, leaving out days with fewer than `min_hours` hours.
pub fn load_series(days: &[DailyLoadSummary], metric: Metric, min_hours: u8) -> DailySeries {
    days.iter()
        .filter(|d| d.is_complete(min_hours))
        .filter_map(|d| {
            let v = match metric {
                Metric::TotalEnergy => d.total_energy_mwh,
                Metric::PeakDemand => d.peak_demand_mw,
                Metric::DegreeDays => return None,
            };
            Some((d.date, v))
        })
        .collect()
}

/// Runs [`min_window`] for every year and half present in each series.
///
/// Halves without enough days for even one admissible window (years absent
/// from the record, or partial edge years) are skipped; any other failure is
/// returned. Rows come out ordered by metric, season, year.
pub fn shoulder_table(
    series: &[(Metric, &DailySeries)],
    cfg: &WindowConfig,
) -> Result<Vec<ShoulderWindow>> {
    let mut rows = Vec::new();
    for &(metric, s) in series {
        let mut years: Vec<i32> = s.keys().map(|d| d.year()).collect();
        years.dedup();
        for season in Season::ALL {
            for &year in &years {
                let (a, b) = season.bounds(year);
                if s.range(a..=b).count() < cfg.min_present() {
                    log::debug!("skipping {metric} {season} {year}: too few days");
                    continue;
                }
                match min_window(s, metric, year, season, cfg) {
                    Ok(w) => rows.push(w),
                    // trailing edge of the record: not enough data after the half
                    Err(Error::Window(msg)) if b >= *s.keys().next_back().expect("non-empty") => {
                        log::debug!("skipping trailing {season} {year}: {msg}");
                    }
                    Err(e) => return Err(e),
                }
            }
        }
    }
    rows.sort_by_key(|w| (w.metric, w.season, w.year));
    Ok(rows)
}

pub fn write_shoulder_table(rows: &[ShoulderWindow]) -> String {
    let mut t = Table::new(&SHOULDER_HEADER);
    for w in rows {
        t.row([
            w.year.to_string(),
            w.season.to_string(),
            w.metric.to_string(),
            w.onset_date.format("%Y-%m-%d").to_string(),
            w.onset_doy.to_string(),
            num(w.window_mean),
            w.days_used.to_string(),
        ]);
    }
    t.into_string()
}

pub fn parse_shoulder_table<R: Read>(source: R) -> Result<Vec<ShoulderWindow>> {
    read_rows(source, &SHOULDER_HEADER)?
        .into_iter()
        .map(|(line, row)| {
            let bad = |what: &str| Error::malformed(line, format!("bad {what}"));
            let onset_date = parse_date(&row[3]).ok_or_else(|| bad("onset_date"))?;
            Ok(ShoulderWindow {
                year: row[0].parse().map_err(|_| bad("year"))?,
                season: row[1].parse().map_err(|_| bad("season"))?,
                metric: row[2].parse().map_err(|_| bad("metric"))?,
                onset_date,
                onset_doy: row[4].parse().map_err(|_| bad("onset_doy"))?,
                window_mean: field_f64(line, "window_mean", &row[5])?,
                days_used: row[6].parse().map_err(|_| bad("days_used"))?,
            })
        })
        .collect()
}

/// Onset day-of-year by year for one metric and season.
pub fn onsets(rows: &[ShoulderWindow], metric: Metric, season: Season) -> Vec<(i32, f64)> {
    rows.iter()
        .filter(|w| w.metric == metric && w.season == season)
        .map(|w| (w.year, f64::from(w.onset_doy)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn series_from(start: NaiveDate, values: &[f64]) -> DailySeries {
        values
            .iter()
            .enumerate()
            .map(|(i, v)| (start + Duration::days(i as i64), *v))
            .collect()
    }

    /// Exhaustive O(n*w) scan, written without prefix sums.
    fn brute_force(
        s: &DailySeries,
        year: i32,
        season: Season,
        cfg: &WindowConfig,
    ) -> Option<(NaiveDate, f64)> {
        let (a, b) = season.bounds(year);
        let first = *s.keys().next()?;
        let last = *s.keys().next_back()?;
        let mut best: Option<(NaiveDate, f64)> = None;
        let mut onset = a;
        while onset <= b {
            let end = onset + Duration::days(cfg.window_len as i64 - 1);
            let ok_span = onset >= first && end <= last && (cfg.cross_year || end.year() == year);
            if ok_span {
                let mut total = 0.0;
                let mut n = 0;
                let mut d = onset;
                while d <= end {
                    if let Some(v) = s.get(&d) {
                        total += v;
                        n += 1;
                    }
                    d += Duration::days(1);
                }
                if n >= cfg.min_present() {
                    let mean = total / n as f64;
                    if best.is_none_or(|(_, m)| mean < m) {
                        best = Some((onset, mean));
                    }
                }
            }
            onset += Duration::days(1);
        }
        best
    }

    #[test]
    fn constant_series_picks_first_day() {
        let s = series_from(ymd(2020, 1, 1), &vec![0.1; 400]);
        let cfg = WindowConfig::default();
        let w = min_window(&s, Metric::DegreeDays, 2020, Season::Spring, &cfg).unwrap();
        assert_eq!(w.onset_date, ymd(2020, 1, 1));
        let w = min_window(&s, Metric::DegreeDays, 2020, Season::Fall, &cfg).unwrap();
        assert_eq!(w.onset_date, ymd(2020, 7, 1));
    }

    #[test]
    fn v_shape_centres_window_on_minimum() {
        let start = ymd(2021, 1, 1);
        let m = 100usize;
        let values: Vec<f64> = (0..365).map(|i| (i as f64 - m as f64).abs()).collect();
        let s = series_from(start, &values);
        let cfg = WindowConfig::default();
        let w = min_window(&s, Metric::DegreeDays, 2021, Season::Spring, &cfg).unwrap();
        assert_eq!(w.onset_date, start + Duration::days(m as i64 - 22));
        let (onset, mean) = brute_force(&s, 2021, Season::Spring, &cfg).unwrap();
        assert_eq!(w.onset_date, onset);
        assert!((w.window_mean - mean).abs() < 1e-12);
        assert_eq!(w.days_used, 45);
        assert_eq!(w.onset_doy, 79);
    }

    #[test]
    fn fall_window_crosses_into_january() {
        // minimum centred on Dec 28
        let start = ymd(2020, 1, 1);
        let values: Vec<f64> = (0..731)
            .map(|i| ((start + Duration::days(i)) - ymd(2020, 12, 28)).num_days().abs() as f64)
            .collect();
        let s = series_from(start, &values);
        let cfg = WindowConfig::default();
        let w = min_window(&s, Metric::DegreeDays, 2020, Season::Fall, &cfg).unwrap();
        assert_eq!(w.onset_date, ymd(2020, 12, 6));

        let strict = WindowConfig { cross_year: false, ..cfg };
        let w = min_window(&s, Metric::DegreeDays, 2020, Season::Fall, &strict).unwrap();
        assert_eq!(w.onset_date, ymd(2020, 11, 17), "last onset ending on Dec 31");

        // no next-year data: same cut-off applies
        let only_2020: DailySeries = s.range(..ymd(2021, 1, 1)).map(|(d, v)| (*d, *v)).collect();
        let w = min_window(&only_2020, Metric::DegreeDays, 2020, Season::Fall, &cfg).unwrap();
        assert_eq!(w.onset_date, ymd(2020, 11, 17));
    }

    #[test]
    fn gaps_inside_window() {
        let start = ymd(2019, 1, 1);
        let mut s = series_from(start, &vec![10.0; 365]);
        for i in 60..105 {
            s.insert(start + Duration::days(i), 1.0);
        }
        // knock out 3 days: still admissible, mean over 42 days
        for i in [70, 80, 90] {
            s.remove(&(start + Duration::days(i)));
        }
        let cfg = WindowConfig::default();
        let w = min_window(&s, Metric::PeakDemand, 2019, Season::Spring, &cfg).unwrap();
        assert_eq!(w.onset_date, start + Duration::days(60));
        assert_eq!(w.days_used, 42);
        assert_eq!(w.window_mean, 1.0);

        // a fourth gap everywhere makes every window inadmissible
        let sparse: DailySeries = s.iter().filter(|(d, _)| d.ordinal() % 10 != 0).map(|(d, v)| (*d, *v)).collect();
        assert!(matches!(
            min_window(&sparse, Metric::PeakDemand, 2019, Season::Spring, &cfg),
            Err(Error::Window(_))
        ));
    }

    #[test]
    fn window_len_one_is_argmin() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let values: Vec<f64> = (0..365).map(|_| rng.random_range(0.0..100.0)).collect();
        let s = series_from(ymd(2018, 1, 1), &values);
        let cfg = WindowConfig { window_len: 1, max_missing: 0, cross_year: true };
        let w = min_window(&s, Metric::TotalEnergy, 2018, Season::Spring, &cfg).unwrap();
        let (arg, min) = values[..181]
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        assert_eq!(w.onset_date, ymd(2018, 1, 1) + Duration::days(arg as i64));
        assert_eq!(w.window_mean, *min);
    }

    #[test]
    fn zero_length_and_empty_series() {
        let s = series_from(ymd(2018, 1, 1), &[1.0; 10]);
        let zero = WindowConfig { window_len: 0, ..WindowConfig::default() };
        assert!(min_window(&s, Metric::DegreeDays, 2018, Season::Spring, &zero).is_err());
        assert!(min_window(&DailySeries::new(), Metric::DegreeDays, 2018, Season::Spring, &WindowConfig::default()).is_err());
    }

    #[test]
    fn synthetic_year_table_matches_oracle() {
        let start = ymd(2015, 1, 1);
        let spring_min = ymd(2015, 3, 20);
        let fall_min = ymd(2015, 11, 2);
        let values: Vec<f64> = (0..(365 + 60))
            .map(|i| {
                let d = start + Duration::days(i);
                let a = (d - spring_min).num_days().abs() as f64;
                let b = (d - fall_min).num_days().abs() as f64;
                a.min(b) + 3.0
            })
            .collect();
        let s = series_from(start, &values);
        let cfg = WindowConfig::default();
        let rows = shoulder_table(&[(Metric::DegreeDays, &s)], &cfg).unwrap();
        let for_2015: Vec<_> = rows.iter().filter(|r| r.year == 2015).collect();
        assert_eq!(for_2015.len(), 2);
        for r in for_2015 {
            let (onset, mean) = brute_force(&s, 2015, r.season, &cfg).unwrap();
            assert_eq!(r.onset_date, onset);
            assert!((r.window_mean - mean).abs() < 1e-12);
        }
        assert_eq!(rows[0].onset_date, spring_min - Duration::days(22));
    }

    #[test]
    fn absent_year_is_skipped() {
        let mut s = DailySeries::new();
        for y in [1999, 2000, 2002] {
            for d in ymd(y, 1, 1).iter_days().take_while(|d| d.year() == y) {
                s.insert(d, f64::from(d.ordinal() % 50));
            }
        }
        let rows = shoulder_table(&[(Metric::TotalEnergy, &s)], &WindowConfig::default()).unwrap();
        let years: Vec<i32> = rows.iter().map(|r| r.year).collect();
        assert!(!years.contains(&2001));
        assert_eq!(rows.len(), 6);
    }

    #[test]
    fn table_round_trips() {
        let s = series_from(ymd(2016, 1, 1), &(0..800).map(|i| f64::from(i % 97) * 0.37).collect::<Vec<_>>());
        let rows = shoulder_table(&[(Metric::PeakDemand, &s)], &WindowConfig::default()).unwrap();
        let text = write_shoulder_table(&rows);
        assert_eq!(parse_shoulder_table(text.as_bytes()).unwrap(), rows);
    }

    #[test]
    fn partial_days_are_excluded_from_load_series() {
        let days = [
            DailyLoadSummary { date: ymd(2020, 1, 1), total_energy_mwh: 24.0, peak_demand_mw: 1.0, hours_present: 24 },
            DailyLoadSummary { date: ymd(2020, 1, 2), total_energy_mwh: 3.0, peak_demand_mw: 1.0, hours_present: 3 },
        ];
        assert_eq!(load_series(&days, Metric::TotalEnergy, 20).len(), 1);
        assert_eq!(load_series(&days, Metric::PeakDemand, 0).len(), 2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn matches_exhaustive_scan(seed in any::<u64>(), len_pick in 0usize..3, drop_pct in 0u32..4) {
            let len = [1usize, 7, 45][len_pick];
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let start = ymd(2010, 1, 1);
            let mut s = DailySeries::new();
            for i in 0..730 {
                if rng.random_range(0..100) >= drop_pct {
                    s.insert(start + Duration::days(i), rng.random_range(-50.0..50.0));
                }
            }
            let cfg = WindowConfig { window_len: len, ..WindowConfig::default() };
            for season in Season::ALL {
                let fast = min_window(&s, Metric::DegreeDays, 2010, season, &cfg).ok();
                let slow = brute_force(&s, 2010, season, &cfg);
                prop_assert_eq!(fast.map(|w| w.onset_date), slow.map(|b| b.0));
                if let (Some(w), Some(b)) = (fast, slow) {
                    prop_assert!((w.window_mean - b.1).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn shift_and_scale_keep_onset(seed in any::<u64>(), c in -1e3f64..1e3, k in 0.01f64..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let start = ymd(2012, 1, 1);
            let values: Vec<f64> = (0..400).map(|_| rng.random_range(0.0..10.0)).collect();
            let base = series_from(start, &values);
            let shifted: DailySeries = base.iter().map(|(d, v)| (*d, v + c)).collect();
            let scaled: DailySeries = base.iter().map(|(d, v)| (*d, v * k)).collect();
            let cfg = WindowConfig::default();
            let w0 = min_window(&base, Metric::DegreeDays, 2012, Season::Spring, &cfg).unwrap();
            let w1 = min_window(&shifted, Metric::DegreeDays, 2012, Season::Spring, &cfg).unwrap();
            let w2 = min_window(&scaled, Metric::DegreeDays, 2012, Season::Spring, &cfg).unwrap();
            prop_assert_eq!(w0.onset_date, w1.onset_date);
            prop_assert_eq!(w0.onset_date, w2.onset_date);
            prop_assert!((w1.window_mean - (w0.window_mean + c)).abs() < 1e-9 * (1.0 + c.abs()));
        }
    }
}
