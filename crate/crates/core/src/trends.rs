//! Drift of onsets over time.
//!
//! Ordinary least squares with the textbook slope standard error, the
//! normal-approximation probability that the drift points in a given
//! direction, optional outlier trimming, centred moving averages and Pearson
//! correlation with seasonal date cut-offs.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{Datelike, NaiveDate};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::calendar::Season;
use crate::error::{Error, Result};

/// Spring pairs whose temperature-defined onset falls before Feb 14 are
/// dropped from correlations.
pub const SPRING_CUTOFF: (u32, u32) = (2, 14);
/// Fall pairs whose temperature-defined onset falls after Nov 25 are dropped.
pub const FALL_CUTOFF: (u32, u32) = (11, 25);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Earlier,
    Later,
}

impl Direction {
    /// Spring onsets are expected to move earlier, fall onsets later.
    pub fn for_season(season: Season) -> Self {
        match season {
            Season::Spring => Direction::Earlier,
            Season::Fall => Direction::Later,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Earlier => "earlier",
            Direction::Later => "later",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum OutlierPolicy {
    #[default]
    None,
    /// Drop points with these abscissae (years, usually).
    Explicit(Vec<f64>),
    /// Iteratively drop the point with the largest internally studentized
    /// residual while it exceeds `threshold`, at most `max_removals` times.
    Studentized { threshold: f64, max_removals: usize },
}

impl OutlierPolicy {
    pub fn studentized_default() -> Self {
        OutlierPolicy::Studentized {
            threshold: 2.5,
            max_removals: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrendResult {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub n: usize,
    pub direction: Direction,
    pub shift_probability: f64,
    /// Residual standard deviation, n - 2 degrees of freedom.
    pub residual_sd: f64,
    pub x_mean: f64,
    pub sxx: f64,
    pub excluded: Vec<(f64, f64)>,
}

impl TrendResult {
    pub fn predict(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }

    pub fn per_decade(&self) -> (f64, f64) {
        (10.0 * self.slope, 10.0 * self.slope_stderr)
    }

    /// Standard error of the fitted mean at `x`.
    pub fn mean_stderr(&self, x: f64) -> f64 {
        let d = x - self.x_mean;
        self.residual_sd * (1.0 / self.n as f64 + d * d / self.sxx).sqrt()
    }

    /// Half-width of the 95% confidence interval of the fitted mean at `x`
    /// (Student-t, n - 2 degrees of freedom).
    pub fn mean_halfwidth(&self, x: f64) -> f64 {
        t_975(self.n - 2) * self.mean_stderr(x)
    }

    pub fn band(&self, x: f64) -> (f64, f64) {
        let y = self.predict(x);
        let h = self.mean_halfwidth(x);
        (y - h, y + h)
    }
}

pub(crate) fn t_975(dof: usize) -> f64 {
    StudentsT::new(0.0, 1.0, dof.max(1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975)
}

fn std_normal_cdf(z: f64) -> f64 {
    Normal::standard().cdf(z)
}

/// Probability that the true slope points in `direction`, given the fitted
/// slope and its standard error. A zero standard error saturates to 0 or 1
/// (0.5 when the slope is exactly zero).
pub fn shift_probability(slope: f64, stderr: f64, direction: Direction) -> f64 {
    let signed = match direction {
        Direction::Earlier => -slope,
        Direction::Later => slope,
    };
    if stderr > 0.0 {
        std_normal_cdf(signed / stderr)
    } else if signed > 0.0 {
        1.0
    } else if signed < 0.0 {
        0.0
    } else {
        0.5
    }
}

struct Ols {
    slope: f64,
    intercept: f64,
    x_mean: f64,
    sxx: f64,
    residual_sd: f64,
}

fn ols(points: &[(f64, f64)]) -> Result<Ols> {
    let n = points.len() as f64;
    let x_mean = points.iter().map(|p| p.0).sum::<f64>() / n;
    let y_mean = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - x_mean).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateAbscissae);
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - x_mean) * (p.1 - y_mean)).sum();
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let ssr: f64 = points
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let residual_sd = if points.len() > 2 {
        (ssr / (n - 2.0)).sqrt()
    } else {
        0.0
    };
    Ok(Ols {
        slope,
        intercept,
        x_mean,
        sxx,
        residual_sd,
    })
}

/// Least-squares line through `points` (x usually the year).
pub fn linear_trend(
    points: &[(f64, f64)],
    direction: Direction,
    policy: &OutlierPolicy,
) -> Result<TrendResult> {
    let mut kept: Vec<(f64, f64)> = points.to_vec();
    let mut excluded = Vec::new();

    if let OutlierPolicy::Explicit(xs) = policy {
        let (drop, keep): (Vec<_>, Vec<_>) = kept
            .into_iter()
            .partition(|p| xs.iter().any(|x| (x - p.0).abs() < 1e-9));
        kept = keep;
        excluded.extend(drop);
    }
    if kept.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            got: kept.len(),
        });
    }

    if let OutlierPolicy::Studentized {
        threshold,
        max_removals,
    } = *policy
    {
        for _ in 0..max_removals {
            if kept.len() <= 3 {
                break;
            }
            let fit = ols(&kept)?;
            if fit.residual_sd == 0.0 {
                break;
            }
            let n = kept.len() as f64;
            let worst = kept
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let h = 1.0 / n + (p.0 - fit.x_mean).powi(2) / fit.sxx;
                    let e = p.1 - fit.intercept - fit.slope * p.0;
                    (i, (e / (fit.residual_sd * (1.0 - h).max(f64::EPSILON).sqrt())).abs())
                })
                .max_by(|a, b| a.1.total_cmp(&b.1));
            match worst {
                Some((i, r)) if r > threshold => excluded.push(kept.remove(i)),
                _ => break,
            }
        }
    }

    let fit = ols(&kept)?;
    let slope_stderr = fit.residual_sd / fit.sxx.sqrt();
    Ok(TrendResult {
        slope: fit.slope,
        intercept: fit.intercept,
        slope_stderr,
        n: kept.len(),
        direction,
        shift_probability: shift_probability(fit.slope, slope_stderr, direction),
        residual_sd: fit.residual_sd,
        x_mean: fit.x_mean,
        sxx: fit.sxx,
        excluded,
    })
}

/// Convenience wrapper for `(year, value)` series.
pub fn yearly_trend(
    points: &[(i32, f64)],
    direction: Direction,
    policy: &OutlierPolicy,
) -> Result<TrendResult> {
    let xy: Vec<(f64, f64)> = points.iter().map(|(y, v)| (f64::from(*y), *v)).collect();
    linear_trend(&xy, direction, policy)
}

/// Centred moving average over the neighbours within `k / 2` years that are
/// actually present, so the window shrinks at the ends and across gaps.
/// An even `k` behaves like `k + 1`.
pub fn moving_average(points: &[(i32, f64)], k: usize) -> Vec<(i32, f64)> {
    let half = (k / 2) as i32;
    let by_year: BTreeMap<i32, f64> = points.iter().copied().collect();
    points
        .iter()
        .map(|&(y, _)| {
            let window: Vec<f64> = by_year.range(y - half..=y + half).map(|(_, v)| *v).collect();
            // offsets from the first value keep constant runs exact
            let base = window[0];
            let offset = window.iter().map(|v| v - base).sum::<f64>() / window.len() as f64;
            (y, base + offset)
        })
        .collect()
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            got: x.len().min(y.len()),
        });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateAbscissae);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationResult {
    pub r: f64,
    pub n_used: usize,
    pub cutoff: Option<(u32, u32)>,
    pub excluded_years: Vec<i32>,
}

impl CorrelationResult {
    pub fn excluded_count(&self) -> usize {
        self.excluded_years.len()
    }
}

/// Pearson r between two onset series paired by year, after dropping pairs
/// whose `x` onset lies before the spring cut-off or after the fall cut-off
/// (month, day within the onset's own year).
pub fn pearson_with_cutoff(
    x: &[(i32, NaiveDate)],
    y: &[(i32, NaiveDate)],
    season: Season,
    cutoff: Option<(u32, u32)>,
) -> Result<CorrelationResult> {
    let y_by_year: BTreeMap<i32, NaiveDate> = y.iter().copied().collect();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut excluded_years = Vec::new();
    for &(year, xd) in x {
        let Some(&yd) = y_by_year.get(&year) else {
            continue;
        };
        let drop = cutoff.is_some_and(|(m, d)| {
            let md = (xd.month(), xd.day());
            match season {
                Season::Spring => md < (m, d),
                Season::Fall => md > (m, d),
            }
        });
        if drop {
            excluded_years.push(year);
        } else {
            xs.push(f64::from(xd.ordinal()));
            ys.push(f64::from(yd.ordinal()));
        }
    }
    if xs.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            got: xs.len(),
        });
    }
    Ok(CorrelationResult {
        r: pearson(&xs, &ys)?,
        n_used: xs.len(),
        cutoff,
        excluded_years,
    })
}
