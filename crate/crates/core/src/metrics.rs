//! Rank and regression metrics.
//!
//! Correlations are undefined when either input is constant. That case is an
//! explicit [`Error::UndefinedCorrelation`] from the scalar functions, and a
//! `None` field in [`MetricsReport`], never a NaN or a silent zero.

use std::cmp::Ordering;
use std::fmt;

use crate::diffmath::{mse_loss, Tensor};
use crate::error::{Error, Result};

/// 1-based ranks; tied values share the mean of the positions they occupy.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end share their mean
        let rank = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        start = end;
    }
    ranks
}

fn check_pair(op: &'static str, x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::shape(op, &[x.len()], &[y.len()]));
    }
    if x.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "{op} needs at least 2 samples, got {}",
            x.len()
        )));
    }
    if let Some(i) = x.iter().chain(y).position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: op.to_string(),
            index: i % x.len(),
        });
    }
    Ok(())
}

/// Pearson product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair("pearson", x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("constant input".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Tie-corrected Spearman ρ: Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair("spearman", x, y)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Mean squared error; same contract as [`crate::diffmath::mse_loss`].
pub fn mse(pred: &[f64], target: &[f64]) -> Result<f64> {
    let p = Tensor::from_vec([pred.len()], pred.to_vec())?;
    let t = Tensor::from_vec([target.len()], target.to_vec())?;
    mse_loss(&p, &t)
}

/// Coefficient of determination of the simple linear fit: squared Pearson r.
pub fn r_squared(x: &[f64], y: &[f64]) -> Result<f64> {
    let r = pearson(x, y)?;
    Ok(r * r)
}

/// Ordinary least-squares line `y = slope·x + intercept`.
pub fn least_squares(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    check_pair("least_squares", x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::UndefinedCorrelation("constant x in least squares".into()));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Metrics for one evaluation run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub n: usize,
    pub mse: f64,
    /// `None` when either series is constant.
    pub spearman_rho: Option<f64>,
    /// `None` when either series is constant.
    pub r_squared: Option<f64>,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "n,mse,spearman,r_squared";

    pub fn compute(pred: &[f64], target: &[f64]) -> Result<Self> {
        check_pair("evaluate", pred, target)?;
        let undefined = |r: Result<f64>| match r {
            Ok(v) => Ok(Some(v)),
            Err(Error::UndefinedCorrelation(_)) => Ok(None),
            Err(e) => Err(e),
        };
        Ok(Self {
            n: pred.len(),
            mse: mse(pred, target)?,
            spearman_rho: undefined(spearman(pred, target))?,
            r_squared: undefined(r_squared(pred, target))?,
        })
    }

    pub fn is_defined(&self) -> bool {
        self.spearman_rho.is_some()
    }

    /// Parses a row written by the `Display` impl.
    pub fn parse_csv_row(row: &str) -> Result<Self> {
        let bad = |what: &str| Error::InvalidArgument(format!("metrics row `{row}`: bad {what}"));
        let fields: Vec<&str> = row.trim().split(',').collect();
        if fields.len() != 4 {
            return Err(bad("field count"));
        }
        let opt = |s: &str, what: &str| -> Result<Option<f64>> {
            if s == "NA" {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad(what))
            }
        };
        Ok(Self {
            n: fields[0].parse().map_err(|_| bad("n"))?,
            mse: fields[1].parse().map_err(|_| bad("mse"))?,
            spearman_rho: opt(fields[2], "spearman")?,
            r_squared: opt(fields[3], "r_squared")?,
        })
    }
}

pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// CSV row `n,mse,spearman,r_squared`, `NA` for undefined fields.
impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{}",
            self.n,
            self.mse,
            fmt_opt(self.spearman_rho),
            fmt_opt(self.r_squared)
        )
    }
}
