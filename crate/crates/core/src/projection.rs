//! Climate-ensemble temperatures carried through to future onsets.
//!
//! Ensemble annual means are mapped onto observations with an affine
//! correction fitted by least squares, onsets are regressed on observed annual
//! temperature, and the regression lines are evaluated along the corrected
//! ensemble path. The merge year is the first year from which the spring and
//! fall onset intervals keep overlapping.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::ops::RangeInclusive;

use crate::calendar::{days_in_month, days_in_year, Season};
use crate::error::{Error, Result};
use crate::ingest::{field_f64, read_rows};
use crate::output::{num, Table};
use crate::trends::{linear_trend, Direction, OutlierPolicy, TrendResult};

pub const ENSEMBLE_HEADER: [&str; 4] = ["member", "year", "month", "t2m_c"];
pub const PROJECTION_HEADER: [&str; 5] = ["year", "season", "predicted_onset_doy", "ci_low", "ci_high"];
pub const DEFAULT_PERSISTENCE: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleRecord {
    pub member: String,
    pub year: i32,
    pub month: u32,
    pub t2m_c: f64,
}

pub fn parse_ensemble<R: Read>(source: R) -> Result<Vec<EnsembleRecord>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (line, row) in read_rows(source, &ENSEMBLE_HEADER)? {
        let year: i32 = row[1]
            .parse()
            .map_err(|_| Error::malformed(line, format!("bad year `{}`", row[1])))?;
        let month: u32 = row[2]
            .parse()
            .ok()
            .filter(|m| (1..=12).contains(m))
            .ok_or_else(|| Error::malformed(line, format!("month `{}` not in 1..=12", row[2])))?;
        if row[0].is_empty() {
            return Err(Error::malformed(line, "empty member id"));
        }
        if !seen.insert((row[0].clone(), year, month)) {
            return Err(Error::malformed(
                line,
                format!("duplicate entry for member {} {year}-{month:02}", row[0]),
            ));
        }
        out.push(EnsembleRecord {
            member: row[0].clone(),
            year,
            month,
            t2m_c: field_f64(line, "t2m_c", &row[3])?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleAnnualStats {
    pub year: i32,
    pub ensemble_mean_temp: f64,
    /// Population standard deviation across members.
    pub ensemble_std: f64,
    pub n_members: usize,
}

/// Per-year mean and spread across members of each member's annual mean.
/// Months are weighted by their day counts. Members are reduced in sorted id
/// order, so the result does not depend on record order.
pub fn ensemble_annual_stats(records: &[EnsembleRecord]) -> Result<Vec<EnsembleAnnualStats>> {
    let mut monthly: BTreeMap<i32, BTreeMap<&str, [Option<f64>; 12]>> = BTreeMap::new();
    for r in records {
        monthly
            .entry(r.year)
            .or_default()
            .entry(r.member.as_str())
            .or_insert([None; 12])[r.month as usize - 1] = Some(r.t2m_c);
    }
    let mut out = Vec::new();
    for (year, members) in monthly {
        let mut annual = Vec::with_capacity(members.len());
        for (member, months) in members {
            let present = months.iter().flatten().count();
            if present != 12 {
                return Err(Error::IncompleteMemberYear {
                    member: member.to_string(),
                    year,
                    months: present,
                });
            }
            let weighted: f64 = months
                .iter()
                .enumerate()
                .map(|(m, t)| f64::from(days_in_month(year, m as u32 + 1)) * t.expect("checked"))
                .sum();
            annual.push(weighted / f64::from(days_in_year(year)));
        }
        let n = annual.len() as f64;
        let mean = annual.iter().sum::<f64>() / n;
        let var = annual.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
        out.push(EnsembleAnnualStats {
            year,
            ensemble_mean_temp: mean,
            ensemble_std: var.sqrt(),
            n_members: annual.len(),
        });
    }
    Ok(out)
}

/// `corrected = gain * raw + offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasCorrection {
    pub gain: f64,
    pub offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrectedTemp {
    pub year: i32,
    pub mean: f64,
    pub std: f64,
}

impl BiasCorrection {
    pub fn apply(&self, t: f64) -> f64 {
        self.gain * t + self.offset
    }

    /// Corrected path; the spread scales with `|gain|`.
    pub fn apply_stats(&self, stats: &[EnsembleAnnualStats]) -> Vec<CorrectedTemp> {
        stats
            .iter()
            .map(|s| CorrectedTemp {
                year: s.year,
                mean: self.apply(s.ensemble_mean_temp),
                std: self.gain.abs() * s.ensemble_std,
            })
            .collect()
    }
}

/// Least-squares fit of observed annual means on ensemble means over the
/// overlap years.
pub fn fit_bias_correction(
    observed: &[(i32, f64)],
    ensemble: &[EnsembleAnnualStats],
    overlap: RangeInclusive<i32>,
) -> Result<BiasCorrection> {
    let ens: BTreeMap<i32, f64> = ensemble
        .iter()
        .map(|s| (s.year, s.ensemble_mean_temp))
        .collect();
    let pairs: Vec<(f64, f64)> = observed
        .iter()
        .filter(|(y, _)| overlap.contains(y))
        .filter_map(|(y, obs)| ens.get(y).map(|e| (*e, *obs)))
        .collect();
    if pairs.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            got: pairs.len(),
        });
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateAbscissae);
    }
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let gain = sxy / sxx;
    Ok(BiasCorrection {
        gain,
        offset: my - gain * mx,
    })
}

/// Onset day-of-year regressed on annual mean temperature, paired by year.
pub fn onset_vs_temperature(
    annual_temps: &[(i32, f64)],
    onsets: &[(i32, f64)],
    season: Season,
) -> Result<TrendResult> {
    let temps: BTreeMap<i32, f64> = annual_temps.iter().copied().collect();
    let pairs: Vec<(f64, f64)> = onsets
        .iter()
        .filter_map(|(y, d)| temps.get(y).map(|t| (*t, *d)))
        .collect();
    linear_trend(&pairs, Direction::for_season(season), &OutlierPolicy::None)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnsetProjection {
    pub year: i32,
    pub predicted_onset: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Evaluates `line` along the corrected path.
///
/// The 95% half-width combines the regression's mean-prediction half-width
/// and the +/-2 sigma temperature spread pushed through the slope, added in
/// quadrature.
pub fn project_season(
    line: &TrendResult,
    path: &[CorrectedTemp],
    years: RangeInclusive<i32>,
) -> Result<Vec<OnsetProjection>> {
    let by_year: BTreeMap<i32, &CorrectedTemp> = path.iter().map(|p| (p.year, p)).collect();
    years
        .map(|year| {
            let p = by_year.get(&year).ok_or(Error::YearOutsidePath(year))?;
            let predicted = line.predict(p.mean);
            let regression = line.mean_halfwidth(p.mean);
            let spread = line.slope * 2.0 * p.std;
            let half = regression.hypot(spread);
            Ok(OnsetProjection {
                year,
                predicted_onset: predicted,
                ci_low: predicted - half,
                ci_high: predicted + half,
            })
        })
        .collect()
}

pub fn project_onsets(
    spring_line: &TrendResult,
    fall_line: &TrendResult,
    path: &[CorrectedTemp],
    years: RangeInclusive<i32>,
) -> Result<(Vec<OnsetProjection>, Vec<OnsetProjection>)> {
    Ok((
        project_season(spring_line, path, years.clone())?,
        project_season(fall_line, path, years)?,
    ))
}

/// Fall interval of year `y` against the spring interval of `y + 1`, with
/// the spring days shifted onto the fall year's day axis.
fn wraps_into_overlap(fall: &OnsetProjection, next_spring: &OnsetProjection) -> bool {
    let shift = f64::from(days_in_year(fall.year));
    let (lo, hi) = (next_spring.ci_low + shift, next_spring.ci_high + shift);
    fall.ci_low <= hi && lo <= fall.ci_high
}

/// First fall-season year from which the intervals overlap for
/// `persistence` consecutive years, or `None`.
pub fn merge_year(
    spring: &[OnsetProjection],
    fall: &[OnsetProjection],
    persistence: usize,
) -> Option<i32> {
    let spring_by_year: BTreeMap<i32, &OnsetProjection> = spring.iter().map(|s| (s.year, s)).collect();
    let overlapping: BTreeSet<i32> = fall
        .iter()
        .filter(|f| {
            spring_by_year
                .get(&(f.year + 1))
                .is_some_and(|s| wraps_into_overlap(f, s))
        })
        .map(|f| f.year)
        .collect();
    let run = persistence.max(1) as i32;
    overlapping
        .iter()
        .copied()
        .find(|&y| (y..y + run).all(|k| overlapping.contains(&k)))
}

pub fn write_projection(
    spring: &[OnsetProjection],
    fall: &[OnsetProjection],
    merge: Option<i32>,
    persistence: usize,
) -> String {
    let mut t = Table::new(&PROJECTION_HEADER);
    for (season, rows) in [(Season::Spring, spring), (Season::Fall, fall)] {
        for p in rows {
            t.row([
                p.year.to_string(),
                season.to_string(),
                num(p.predicted_onset),
                num(p.ci_low),
                num(p.ci_high),
            ]);
        }
    }
    t.comment(&format!(
        "merge_year={} persistence={persistence}",
        merge.map_or_else(|| "none".to_string(), |y| y.to_string())
    ));
    t.into_string()
}
