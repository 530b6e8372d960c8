//! Monthly rate series split at a model's training cutoff, and the
//! train/test robustness summary derived from them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::ReportRow;
use crate::io_util::write_atomic;
use crate::month::YearMonth;

pub const WEIGHTING: &str = "unweighted";

/// Mean compression rate per month for one model on one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct MonthlySeries {
    pub model: String,
    pub dataset: String,
    points: Vec<(YearMonth, f64)>,
}

impl MonthlySeries {
    /// Sorts the points by month; duplicate months and non-positive rates
    /// are rejected.
    pub fn new(model: impl Into<String>, dataset: impl Into<String>, mut points: Vec<(YearMonth, f64)>) -> Result<Self> {
        points.sort_by_key(|p| p.0);
        if let Some(w) = points.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::Temporal(format!("month {} appears twice", w[0].0)));
        }
        if let Some((ym, r)) = points.iter().find(|(_, r)| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::Temporal(format!("month {ym} has rate {r}; rates must be positive")));
        }
        Ok(MonthlySeries {
            model: model.into(),
            dataset: dataset.into(),
            points,
        })
    }

    /// One series per (model, dataset) from the month rows of a report;
    /// per-document rows and rows without a month are ignored.
    pub fn from_rows(rows: &[ReportRow]) -> Result<Vec<MonthlySeries>> {
        let mut groups: BTreeMap<(&str, &str), Vec<(YearMonth, f64)>> = BTreeMap::new();
        for r in rows.iter().filter(|r| r.doc_id.is_none()) {
            if let Some(ym) = r.year_month {
                groups.entry((&r.model, &r.dataset)).or_default().push((ym, r.rate));
            }
        }
        if groups.is_empty() {
            return Err(Error::Temporal("no month rows to build a series from".into()));
        }
        groups
            .into_iter()
            .map(|((m, d), pts)| {
                MonthlySeries::new(m, d, pts).map_err(|e| Error::Temporal(format!("{m} on {d}: {e}")))
            })
            .collect()
    }

    pub fn points(&self) -> &[(YearMonth, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Unweighted mean, taken as offsets from the first month so that a
    /// constant series averages to exactly its value.
    pub fn mean_rate(&self) -> Option<f64> {
        let first = self.points.first()?.1;
        let offset: f64 = self.points.iter().map(|p| p.1 - first).sum();
        Some(first + offset / self.points.len() as f64)
    }

    fn with_points(&self, points: Vec<(YearMonth, f64)>) -> Self {
        MonthlySeries {
            model: self.model.clone(),
            dataset: self.dataset.clone(),
            points,
        }
    }

    /// Months up to and including `cutoff` train, the rest test. Both sides
    /// must be non-empty.
    pub fn split_by_cutoff(&self, cutoff: YearMonth) -> Result<(MonthlySeries, MonthlySeries)> {
        let (train, test): (Vec<_>, Vec<_>) = self.points.iter().partition(|p| p.0 <= cutoff);
        let range = match (self.points.first(), self.points.last()) {
            (Some(a), Some(b)) => format!("{}..{}", a.0, b.0),
            _ => "empty series".into(),
        };
        if train.is_empty() {
            return Err(Error::Temporal(format!(
                "cutoff {cutoff} leaves no training months ({range})"
            )));
        }
        if test.is_empty() {
            return Err(Error::Temporal(format!(
                "cutoff {cutoff} leaves no testing months ({range})"
            )));
        }
        Ok((self.with_points(train), self.with_points(test)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalSummary {
    pub model: String,
    pub dataset: String,
    pub cutoff: YearMonth,
    pub train_months: usize,
    pub test_months: usize,
    pub rate_train: f64,
    pub rate_test: f64,
    pub rate_avg: f64,
    pub gap: f64,
    pub rate_future_estimate: f64,
    pub weighting: String,
}

impl TemporalSummary {
    pub fn arrow(&self) -> &'static str {
        arrow(self.gap)
    }
}

pub fn summarize(series: &MonthlySeries, cutoff: YearMonth) -> Result<TemporalSummary> {
    let (train, test) = series.split_by_cutoff(cutoff)?;
    let rate_train = train.mean_rate().unwrap_or_default();
    let rate_test = test.mean_rate().unwrap_or_default();
    let gap = rate_test - rate_train;
    Ok(TemporalSummary {
        model: series.model.clone(),
        dataset: series.dataset.clone(),
        cutoff,
        train_months: train.len(),
        test_months: test.len(),
        rate_train,
        rate_test,
        rate_avg: series.mean_rate().unwrap_or_default(),
        gap,
        rate_future_estimate: rate_test + gap,
        weighting: WEIGHTING.into(),
    })
}

/// Summaries for every series, ordered by (model, dataset).
pub fn summarize_all(series: &[MonthlySeries], cutoff: YearMonth) -> Result<Vec<TemporalSummary>> {
    let mut out = series
        .iter()
        .map(|s| summarize(s, cutoff).map_err(|e| Error::Temporal(format!("{} on {}: {e}", s.model, s.dataset))))
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| (&a.model, &a.dataset).cmp(&(&b.model, &b.dataset)));
    Ok(out)
}

/// `↑` for a worse (higher) test rate, `↓` for a better one.
pub fn arrow(gap: f64) -> &'static str {
    if gap > 0.0 {
        "↑"
    } else if gap < 0.0 {
        "↓"
    } else {
        "="
    }
}

/// A rate as a percentage with three decimals: `0.07349` is `7.349`.
pub fn format_percent(rate: f64) -> String {
    format!("{:.3}", rate * 100.0)
}

/// A gap in percentage points, signed and without the leading zero:
/// `0.00219` is `+.219`.
pub fn format_gap(gap: f64) -> String {
    let body = format!("{:.3}", (gap * 100.0).abs());
    let body = body.strip_prefix('0').unwrap_or(&body).to_owned();
    if body.trim_start_matches(['.', '0']).is_empty() {
        return body;
    }
    format!("{}{body}", if gap < 0.0 { '-' } else { '+' })
}

/// Renders the Avg / test / gap table, one line per summary.
pub fn render_table(summaries: &[TemporalSummary]) -> String {
    let mut s = String::from("| Model | Dataset | Avg. | Test | Gap | Future |\n|---|---|---:|---:|---:|---:|\n");
    for t in summaries {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} {} | {} | {} |",
            t.model,
            t.dataset,
            format_percent(t.rate_avg),
            format_percent(t.rate_test),
            t.arrow(),
            format_gap(t.gap),
            format_percent(t.rate_future_estimate)
        );
    }
    s
}

#[derive(Serialize)]
struct SeriesRow<'a> {
    model: &'a str,
    dataset: &'a str,
    year_month: YearMonth,
    rate: f64,
    period: &'static str,
}

#[derive(Serialize)]
struct ReportJson<'a> {
    weighting: &'static str,
    rate_unit: &'static str,
    summaries: &'a [TemporalSummary],
}

/// Writes `summary.csv`, `summary.json`, `series.csv` and `table.md` into
/// `dir`, returning their paths.
pub fn emit_report(summaries: &[TemporalSummary], series: &[MonthlySeries], dir: &Path) -> Result<Vec<PathBuf>> {
    if summaries.is_empty() {
        return Err(Error::Temporal("nothing to report".into()));
    }
    let mut summaries = summaries.to_vec();
    summaries.sort_by(|a, b| (&a.model, &a.dataset).cmp(&(&b.model, &b.dataset)));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;

    let mut w = csv::Writer::from_writer(Vec::new());
    for s in &summaries {
        w.serialize(s)?;
    }
    let summary_csv = w.into_inner().map_err(|e| Error::io("flushing CSV", e.into_error()))?;

    let json = serde_json::to_vec_pretty(&ReportJson {
        weighting: WEIGHTING,
        rate_unit: "fraction of raw size",
        summaries: &summaries,
    })?;

    let mut ordered: Vec<&MonthlySeries> = series.iter().collect();
    ordered.sort_by(|a, b| (&a.model, &a.dataset).cmp(&(&b.model, &b.dataset)));
    let mut w = csv::Writer::from_writer(Vec::new());
    for s in ordered {
        let cutoff = summaries
            .iter()
            .find(|t| t.model == s.model && t.dataset == s.dataset)
            .map(|t| t.cutoff);
        for &(ym, rate) in s.points() {
            let period = match cutoff {
                Some(c) if ym <= c => "train",
                Some(_) => "test",
                None => "",
            };
            w.serialize(SeriesRow {
                model: &s.model,
                dataset: &s.dataset,
                year_month: ym,
                rate,
                period,
            })?;
        }
    }
    let series_csv = w.into_inner().map_err(|e| Error::io("flushing CSV", e.into_error()))?;

    let files = [
        ("summary.csv", summary_csv),
        ("summary.json", json),
        ("series.csv", series_csv),
        ("table.md", render_table(&summaries).into_bytes()),
    ];
    let mut paths = Vec::new();
    for (name, bytes) in files {
        let p = dir.join(name);
        write_atomic(&p, &bytes)?;
        paths.push(p);
    }
    Ok(paths)
}

pub fn read_summaries(path: &Path) -> Result<Vec<TemporalSummary>> {
    let bytes = crate::io_util::read(path)?;
    csv::Reader::from_reader(bytes.as_slice())
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ym(s: &str) -> YearMonth {
        s.parse().unwrap()
    }

    fn series(rate: impl Fn(usize) -> f64) -> MonthlySeries {
        let months = YearMonth::range(ym("2017-01"), ym("2023-11"));
        MonthlySeries::new("m", "d", months.into_iter().enumerate().map(|(i, m)| (m, rate(i))).collect()).unwrap()
    }

    #[test]
    fn split_at_2022_12() {
        let s = series(|_| 0.4);
        assert_eq!(s.len(), 83);
        let (train, test) = s.split_by_cutoff(ym("2022-12")).unwrap();
        assert_eq!((train.len(), test.len()), (72, 11));
    }

    #[test]
    fn degenerate_cutoffs() {
        let s = series(|_| 0.4);
        assert!(s.split_by_cutoff(ym("2023-11")).is_err());
        assert!(s.split_by_cutoff(ym("2016-12")).is_err());
        let one = MonthlySeries::new("m", "d", vec![(ym("2023-05"), 0.3)]).unwrap();
        assert!(one.split_by_cutoff(ym("2023-01")).is_err());
    }

    #[test]
    fn constant_series() {
        let t = summarize(&series(|_| 0.4), ym("2022-12")).unwrap();
        assert_eq!(t.gap, 0.0);
        assert_eq!(t.rate_future_estimate, 0.4);
        assert_eq!(t.arrow(), "=");
    }

    #[test]
    fn linear_drift_matches_closed_form() {
        let t = summarize(&series(|i| 0.30 + 0.001 * i as f64), ym("2022-12")).unwrap();
        let mean = |a: f64, b: f64| 0.30 + 0.001 * (a + b) / 2.0;
        assert!((t.rate_train - mean(0.0, 71.0)).abs() < 1e-12);
        assert!((t.rate_test - mean(72.0, 82.0)).abs() < 1e-12);
        assert!((t.rate_avg - mean(0.0, 82.0)).abs() < 1e-12);
        assert!((t.gap - 0.001 * 41.5).abs() < 1e-12);
        assert_eq!(t.arrow(), "↑");
    }

    #[test]
    fn future_estimate_is_test_plus_gap() {
        let s = MonthlySeries::new("m", "d", vec![(ym("2022-01"), 0.5), (ym("2023-01"), 0.375)]).unwrap();
        let t = summarize(&s, ym("2022-12")).unwrap();
        assert_eq!(t.rate_future_estimate - t.rate_test, t.rate_test - t.rate_train);
        assert_eq!(t.arrow(), "↓");
        assert_eq!(format_gap(t.gap), "-12.500");
    }

    #[test]
    fn gap_rendering() {
        assert_eq!(format_gap(0.00219), "+.219");
        assert_eq!(format_gap(-0.0005), "-.050");
        assert_eq!(format_gap(0.0), ".000");
        assert_eq!(format_percent(0.07349), "7.349");
    }

    #[test]
    fn rejects_bad_series() {
        assert!(MonthlySeries::new("m", "d", vec![(ym("2022-01"), 0.5), (ym("2022-01"), 0.4)]).is_err());
        assert!(MonthlySeries::new("m", "d", vec![(ym("2022-01"), 0.0)]).is_err());
    }

    #[test]
    fn report_files_round_trip() {
        let a = MonthlySeries::new("zeta", "d", vec![(ym("2022-01"), 0.5), (ym("2023-01"), 0.6)]).unwrap();
        let b = MonthlySeries::new("alpha", "d", vec![(ym("2022-06"), 0.1), (ym("2023-02"), 0.2)]).unwrap();
        let series = vec![a, b];
        let sums = summarize_all(&series, ym("2022-12")).unwrap();
        assert_eq!(sums[0].model, "alpha");
        let dir = tempfile::tempdir().unwrap();
        let paths = emit_report(&sums, &series, dir.path()).unwrap();
        assert_eq!(paths.len(), 4);
        assert_eq!(read_summaries(&dir.path().join("summary.csv")).unwrap(), sums);
        let series_csv = std::fs::read_to_string(dir.path().join("series.csv")).unwrap();
        assert_eq!(series_csv.lines().count(), 5);
        assert!(series_csv.lines().nth(1).unwrap().starts_with("alpha,d,2022-06,0.1,train"));
        let json: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("summary.json")).unwrap()).unwrap();
        assert_eq!(json["weighting"], "unweighted");
        assert!(emit_report(&[], &series, dir.path()).is_err());
    }

    proptest! {
        #[test]
        fn invariant_under_month_order(rates in proptest::collection::vec(0.01f64..1.0, 2..40), seed in any::<u64>()) {
            let months = YearMonth::range(ym("2020-01"), ym("2030-12"));
            let mut pts: Vec<_> = months.into_iter().zip(rates.iter().copied()).collect();
            let cutoff = pts[pts.len() / 2 - usize::from(pts.len() % 2 == 0)].0;
            let a = summarize(&MonthlySeries::new("m", "d", pts.clone()).unwrap(), cutoff).unwrap();
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            pts.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let s = MonthlySeries::new("m", "d", pts).unwrap();
            let b = summarize(&s, cutoff).unwrap();
            prop_assert_eq!(a, b);
            let (tr, te) = s.split_by_cutoff(cutoff).unwrap();
            prop_assert_eq!([tr.points(), te.points()].concat(), s.points().to_vec());
        }
    }
}
