//! Receipt log ingestion: CSV parsing and the users × day-of-week × week
//! count tensor.
//!
//! Receipt schema: header `user_id,date,item,price`, ISO-8601 dates
//! (`YYYY-MM-DD`), optional non-negative price.

use std::collections::HashMap;
use std::io::Read;

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::DenseTensor3;

pub const RECEIPT_HEADER: [&str; 4] = ["user_id", "date", "item", "price"];
pub const DAYS_PER_WEEK: usize = 7;

#[derive(Clone, Debug, PartialEq)]
pub struct ReceiptRecord {
    pub user_id: String,
    pub date: NaiveDate,
    pub item: String,
    pub price: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowError {
    /// 1-based line number in the input, header included.
    pub line: u64,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseReport {
    pub rows_read: usize,
    pub accepted: usize,
    pub errors: Vec<RowError>,
}

pub(crate) fn check_header(headers: &csv::StringRecord, expected: &[&str], what: &str) -> Result<()> {
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::Schema {
            source_name: what.to_string(),
            message: format!("expected header {:?}, found {:?}", expected.join(","), got.join(",")),
        });
    }
    Ok(())
}

fn parse_receipt(rec: &csv::StringRecord) -> std::result::Result<ReceiptRecord, String> {
    if rec.len() != RECEIPT_HEADER.len() {
        return Err(format!("expected 4 fields, found {}", rec.len()));
    }
    let user_id = rec[0].trim();
    if user_id.is_empty() {
        return Err("empty user_id".into());
    }
    let date = NaiveDate::parse_from_str(rec[1].trim(), "%Y-%m-%d")
        .map_err(|e| format!("bad date {:?}: {e}", &rec[1]))?;
    let price = match rec[3].trim() {
        "" => None,
        s => {
            let p: f64 = s.parse().map_err(|_| format!("bad price {s:?}"))?;
            if !(p >= 0.0 && p.is_finite()) {
                return Err(format!("price must be a non-negative number, got {s}"));
            }
            Some(p)
        }
    };
    Ok(ReceiptRecord {
        user_id: user_id.to_string(),
        date,
        item: rec[2].to_string(),
        price,
    })
}

/// Streams a receipt CSV. Malformed rows are skipped and reported with
/// their line number; a missing or wrong header and I/O failures are fatal.
pub fn parse_receipts<R: Read>(input: R) -> Result<(Vec<ReceiptRecord>, ParseReport)> {
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);
    let headers = rd.headers()?.clone();
    check_header(&headers, &RECEIPT_HEADER, "receipts")?;
    let mut out = Vec::new();
    let mut report = ParseReport::default();
    let mut rec = csv::StringRecord::new();
    loop {
        let line = rd.position().line();
        match rd.read_record(&mut rec) {
            Ok(false) => break,
            Ok(true) => {
                report.rows_read += 1;
                let line = rec.position().map_or(line, |p| p.line());
                match parse_receipt(&rec) {
                    Ok(r) => {
                        report.accepted += 1;
                        out.push(r);
                    }
                    Err(message) => report.errors.push(RowError { line, message }),
                }
            }
            Err(e) if e.is_io_error() => return Err(e.into()),
            Err(e) => {
                report.rows_read += 1;
                report.errors.push(RowError {
                    line,
                    message: e.to_string(),
                });
            }
        }
    }
    Ok((out, report))
}

/// Whether boundary weeks that are only partly inside the window count.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeekPolicy {
    /// Only weeks lying entirely inside the window.
    #[default]
    FullWeeks,
    /// Every week that overlaps the window.
    PartialWeeks,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalendarConfig {
    /// First day of the window (inclusive).
    pub start: NaiveDate,
    /// Last day of the window (inclusive).
    pub end: NaiveDate,
    #[serde(default = "default_week_start")]
    pub week_start: Weekday,
    #[serde(default)]
    pub policy: WeekPolicy,
}

fn default_week_start() -> Weekday {
    Weekday::Mon
}

impl CalendarConfig {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Self {
        CalendarConfig {
            start,
            end,
            week_start: Weekday::Mon,
            policy: WeekPolicy::FullWeeks,
        }
    }

    /// First day of week 0 and the number of included weeks.
    pub fn weeks(&self) -> Result<(NaiveDate, usize)> {
        if self.start > self.end {
            return Err(Error::Config(format!(
                "window start {} is after end {}",
                self.start, self.end
            )));
        }
        let ws = self.week_start.num_days_from_monday() as i64;
        let sd = self.start.weekday().num_days_from_monday() as i64;
        let (first, weeks) = match self.policy {
            WeekPolicy::FullWeeks => {
                let first = self.start + chrono::Duration::days((ws - sd).rem_euclid(7));
                let span = (self.end - first).num_days() + 1;
                (first, if span > 0 { (span / 7) as usize } else { 0 })
            }
            WeekPolicy::PartialWeeks => {
                let first = self.start - chrono::Duration::days((sd - ws).rem_euclid(7));
                (first, ((self.end - first).num_days() / 7 + 1) as usize)
            }
        };
        if weeks == 0 {
            return Err(Error::Config(format!(
                "window {}..={} contains no complete week starting on {}",
                self.start, self.end, self.week_start
            )));
        }
        Ok((first, weeks))
    }

    /// `(day-of-week, week)` slot for a date, or `None` outside the window or
    /// the included weeks.
    pub fn slot(&self, date: NaiveDate) -> Result<Option<(usize, usize)>> {
        let (first, weeks) = self.weeks()?;
        Ok(self.slot_with(first, weeks, date))
    }

    fn slot_with(&self, first: NaiveDate, weeks: usize, date: NaiveDate) -> Option<(usize, usize)> {
        if date < self.start || date > self.end {
            return None;
        }
        let off = (date - first).num_days();
        if off < 0 {
            return None;
        }
        let (week, day) = ((off / 7) as usize, (off % 7) as usize);
        (week < weeks).then_some((day, week))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TensorBuild {
    pub tensor: DenseTensor3,
    /// Row `i` of the tensor belongs to `users[i]`.
    pub users: Vec<String>,
    /// Start date of each included week.
    pub week_starts: Vec<NaiveDate>,
    pub included: usize,
    /// Records dated outside `[start, end]`.
    pub out_of_window: usize,
    /// Records inside the window but in an excluded boundary week.
    pub outside_weeks: usize,
}

/// Counts records per (user, day-of-week, week). Users get rows in order of
/// their first included record.
pub fn build_tensor(records: &[ReceiptRecord], cal: &CalendarConfig) -> Result<TensorBuild> {
    let (first, weeks) = cal.weeks()?;
    let mut users: Vec<String> = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut cells: Vec<(usize, usize, usize)> = Vec::with_capacity(records.len());
    let (mut out_of_window, mut outside_weeks) = (0, 0);
    for r in records {
        if r.date < cal.start || r.date > cal.end {
            out_of_window += 1;
            continue;
        }
        let Some((day, week)) = cal.slot_with(first, weeks, r.date) else {
            outside_weeks += 1;
            continue;
        };
        let i = *index.entry(r.user_id.as_str()).or_insert_with(|| {
            users.push(r.user_id.clone());
            users.len() - 1
        });
        cells.push((i, day, week));
    }
    if users.is_empty() {
        return Err(Error::Config(
            "no records fall inside the included weeks of the window".into(),
        ));
    }
    let mut tensor = DenseTensor3::zeros((users.len(), DAYS_PER_WEEK, weeks))?;
    for &(i, j, k) in &cells {
        tensor.add_at(i, j, k, 1.0);
    }
    let week_starts = (0..weeks)
        .map(|k| first + chrono::Duration::days(7 * k as i64))
        .collect();
    Ok(TensorBuild {
        tensor,
        users,
        week_starts,
        included: cells.len(),
        out_of_window,
        outside_weeks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn rec(user: &str, date: &str) -> ReceiptRecord {
        ReceiptRecord {
            user_id: user.into(),
            date: d(date),
            item: "x".into(),
            price: None,
        }
    }

    #[test]
    fn empty_file_with_header() {
        let (recs, rep) = parse_receipts("user_id,date,item,price\n".as_bytes()).unwrap();
        assert!(recs.is_empty());
        assert_eq!(rep.rows_read, 0);
        assert!(rep.errors.is_empty());
    }

    #[test]
    fn unparseable_date_is_skipped() {
        let (recs, rep) = parse_receipts("user_id,date,item,price\nu1,2017-13-01,milk,1.0\n".as_bytes()).unwrap();
        assert!(recs.is_empty());
        assert_eq!(rep.errors.len(), 1);
        assert_eq!(rep.errors[0].line, 2);
    }

    #[test]
    fn quoted_fields_and_optional_price() {
        let src = "user_id,date,item,price\nu1,2017-04-03,\"bread, \"\"rye\"\"\",\nu2,2017-04-04,egg,2.5\n";
        let (recs, rep) = parse_receipts(src.as_bytes()).unwrap();
        assert_eq!(rep.accepted, 2);
        assert_eq!(recs[0].item, "bread, \"rye\"");
        assert_eq!(recs[0].price, None);
        assert_eq!(recs[1].price, Some(2.5));
    }

    #[test]
    fn bad_header_is_fatal() {
        assert!(matches!(
            parse_receipts("user,date,item,price\n".as_bytes()),
            Err(Error::Schema { .. })
        ));
    }

    #[test]
    fn negative_price_and_field_count_rejected() {
        let src = "user_id,date,item,price\nu1,2017-04-03,milk,-1\nu1,2017-04-03,milk\n,2017-04-03,milk,1\n";
        let (recs, rep) = parse_receipts(src.as_bytes()).unwrap();
        assert!(recs.is_empty());
        assert_eq!(rep.errors.iter().map(|e| e.line).collect::<Vec<_>>(), vec![2, 3, 4]);
    }

    #[test]
    fn single_record_on_first_monday() {
        // 2017-04-03 is a Monday.
        let cal = CalendarConfig::new(d("2017-04-03"), d("2017-04-30"));
        let b = build_tensor(&[rec("u", "2017-04-03")], &cal).unwrap();
        assert_eq!(b.tensor.shape(), (1, 7, 4));
        assert_eq!(b.tensor.get(0, 0, 0), 1.0);
        assert_eq!(b.tensor.sum(), 1.0);
    }

    #[test]
    fn repeated_records_accumulate() {
        let cal = CalendarConfig::new(d("2017-04-03"), d("2017-04-09"));
        let b = build_tensor(&[rec("u", "2017-04-05"), rec("u", "2017-04-05")], &cal).unwrap();
        assert_eq!(b.tensor.get(0, 2, 0), 2.0);
    }

    #[test]
    fn full_week_policy_drops_partial_boundary_weeks() {
        // 2017-04-01 is a Saturday: the first full Monday week starts 04-03.
        let cal = CalendarConfig::new(d("2017-04-01"), d("2017-04-19"));
        let (first, weeks) = cal.weeks().unwrap();
        assert_eq!(first, d("2017-04-03"));
        assert_eq!(weeks, 2);
        let b = build_tensor(
            &[rec("a", "2017-04-01"), rec("b", "2017-04-03"), rec("b", "2017-04-18"), rec("c", "2017-05-01")],
            &cal,
        )
        .unwrap();
        assert_eq!(b.users, vec!["b".to_string()]);
        assert_eq!(b.included, 1);
        assert_eq!(b.outside_weeks, 2);
        assert_eq!(b.out_of_window, 1);
    }

    #[test]
    fn partial_week_policy_keeps_boundary_weeks() {
        let mut cal = CalendarConfig::new(d("2017-04-01"), d("2017-04-19"));
        cal.policy = WeekPolicy::PartialWeeks;
        let (first, weeks) = cal.weeks().unwrap();
        assert_eq!(first, d("2017-03-27"));
        assert_eq!(weeks, 4);
        let b = build_tensor(&[rec("a", "2017-04-01")], &cal).unwrap();
        // Saturday of week 0.
        assert_eq!(b.tensor.get(0, 5, 0), 1.0);
    }

    #[test]
    fn sunday_week_start() {
        let mut cal = CalendarConfig::new(d("2017-04-02"), d("2017-04-08"));
        cal.week_start = Weekday::Sun;
        let b = build_tensor(&[rec("a", "2017-04-02"), rec("a", "2017-04-03")], &cal).unwrap();
        assert_eq!(b.tensor.get(0, 0, 0), 1.0);
        assert_eq!(b.tensor.get(0, 1, 0), 1.0);
    }

    #[test]
    fn no_included_week_is_config_error() {
        let cal = CalendarConfig::new(d("2017-04-04"), d("2017-04-09"));
        assert!(matches!(cal.weeks(), Err(Error::Config(_))));
        let cal = CalendarConfig::new(d("2017-04-03"), d("2017-04-09"));
        assert!(matches!(build_tensor(&[rec("a", "2018-01-01")], &cal), Err(Error::Config(_))));
        let cal = CalendarConfig::new(d("2017-04-09"), d("2017-04-03"));
        assert!(matches!(cal.weeks(), Err(Error::Config(_))));
    }
}
