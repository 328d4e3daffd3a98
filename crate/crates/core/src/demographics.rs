//! Per-user categorical attributes and the roster CSV reader.
//!
//! Roster schema: header `user_id,gender,age_cohort,marital,child` with
//! values `Female|Male`, `1..6`, `Married|Unmarried`, `No|Yes`.

use std::collections::HashMap;
use std::fmt;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{ParseReport, RowError};

pub const DEMOGRAPHICS_HEADER: [&str; 5] = ["user_id", "gender", "age_cohort", "marital", "child"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Gender {
    Female,
    Male,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Marital {
    Married,
    Unmarried,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Child {
    No,
    Yes,
}

/// Age cohort 1 (youngest) through 6 (oldest).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AgeCohort(u8);

impl AgeCohort {
    pub const MIN: u8 = 1;
    pub const MAX: u8 = 6;

    pub fn new(v: u8) -> Result<Self> {
        if (Self::MIN..=Self::MAX).contains(&v) {
            Ok(AgeCohort(v))
        } else {
            Err(Error::arg(format!("age cohort must be in 1..=6, got {v}")))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Demographics {
    pub gender: Gender,
    pub age_cohort: AgeCohort,
    pub marital: Marital,
    pub child: Child,
}

/// A categorical attribute tested against cluster membership.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    AgeRange,
    Child,
    Gender,
    MaritalStatus,
}

impl Attribute {
    /// All attributes, in report order.
    pub const ALL: [Attribute; 4] = [
        Attribute::AgeRange,
        Attribute::Child,
        Attribute::Gender,
        Attribute::MaritalStatus,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Attribute::AgeRange => "Age range",
            Attribute::Child => "Child",
            Attribute::Gender => "Gender",
            Attribute::MaritalStatus => "Marital status",
        }
    }

    pub fn categories(self) -> &'static [&'static str] {
        match self {
            Attribute::AgeRange => &["1", "2", "3", "4", "5", "6"],
            Attribute::Child => &["No children", "With children"],
            Attribute::Gender => &["Female", "Male"],
            Attribute::MaritalStatus => &["Married", "Unmarried"],
        }
    }

    pub fn category_of(self, d: &Demographics) -> usize {
        match self {
            Attribute::AgeRange => (d.age_cohort.get() - 1) as usize,
            Attribute::Child => match d.child {
                Child::No => 0,
                Child::Yes => 1,
            },
            Attribute::Gender => match d.gender {
                Gender::Female => 0,
                Gender::Male => 1,
            },
            Attribute::MaritalStatus => match d.marital {
                Marital::Married => 0,
                Marital::Unmarried => 1,
            },
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Attribute {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace(['_', '-'], " ");
        match norm.as_str() {
            "age range" | "age" | "age cohort" => Ok(Attribute::AgeRange),
            "child" | "children" => Ok(Attribute::Child),
            "gender" => Ok(Attribute::Gender),
            "marital status" | "marital" => Ok(Attribute::MaritalStatus),
            _ => Err(Error::arg(format!("unknown attribute {s:?}"))),
        }
    }
}

/// Users and their attributes, in insertion order; ids are unique.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DemographicTable {
    rows: Vec<(String, Demographics)>,
    index: HashMap<String, usize>,
}

impl DemographicTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, user_id: impl Into<String>, d: Demographics) -> Result<()> {
        let id = user_id.into();
        if self.index.contains_key(&id) {
            return Err(Error::arg(format!("duplicate user_id {id:?}")));
        }
        self.index.insert(id.clone(), self.rows.len());
        self.rows.push((id, d));
        Ok(())
    }

    pub fn get(&self, user_id: &str) -> Option<&Demographics> {
        self.index.get(user_id).map(|&i| &self.rows[i].1)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Demographics)> {
        self.rows.iter().map(|(id, d)| (id.as_str(), d))
    }

    /// Category counts of `attr` over the whole table.
    pub fn category_counts(&self, attr: Attribute) -> Vec<usize> {
        let mut counts = vec![0; attr.categories().len()];
        for (_, d) in &self.rows {
            counts[attr.category_of(d)] += 1;
        }
        counts
    }

    /// Writes the table in the roster CSV schema.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(DEMOGRAPHICS_HEADER)?;
        for (id, d) in &self.rows {
            let gender = match d.gender {
                Gender::Female => "Female",
                Gender::Male => "Male",
            };
            let marital = match d.marital {
                Marital::Married => "Married",
                Marital::Unmarried => "Unmarried",
            };
            let child = match d.child {
                Child::No => "No",
                Child::Yes => "Yes",
            };
            let age = d.age_cohort.get().to_string();
            wr.write_record([id.as_str(), gender, age.as_str(), marital, child])?;
        }
        wr.flush().map_err(|e| Error::io("<demographics>", e))?;
        Ok(())
    }
}

fn parse_row(rec: &csv::StringRecord) -> std::result::Result<(String, Demographics), String> {
    if rec.len() != DEMOGRAPHICS_HEADER.len() {
        return Err(format!("expected 5 fields, found {}", rec.len()));
    }
    let id = rec[0].trim();
    if id.is_empty() {
        return Err("empty user_id".into());
    }
    let gender = match rec[1].trim() {
        "Female" => Gender::Female,
        "Male" => Gender::Male,
        other => return Err(format!("unknown gender {other:?}")),
    };
    let age: u8 = rec[2]
        .trim()
        .parse()
        .map_err(|_| format!("age_cohort {:?} is not an integer", &rec[2]))?;
    let age_cohort = AgeCohort::new(age).map_err(|_| format!("age_cohort {age} outside 1..6"))?;
    let marital = match rec[3].trim() {
        "Married" => Marital::Married,
        "Unmarried" => Marital::Unmarried,
        other => return Err(format!("unknown marital status {other:?}")),
    };
    let child = match rec[4].trim() {
        "No" => Child::No,
        "Yes" => Child::Yes,
        other => return Err(format!("unknown child value {other:?}")),
    };
    Ok((
        id.to_string(),
        Demographics {
            gender,
            age_cohort,
            marital,
            child,
        },
    ))
}

/// Reads a roster CSV. Rows with out-of-domain values or a repeated
/// `user_id` are skipped and reported; a missing or wrong header is fatal.
pub fn parse_demographics<R: Read>(input: R) -> Result<(DemographicTable, ParseReport)> {
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);
    let headers = rd.headers()?.clone();
    crate::ingest::check_header(&headers, &DEMOGRAPHICS_HEADER, "demographics")?;
    let mut table = DemographicTable::new();
    let mut report = ParseReport::default();
    for (n, rec) in rd.records().enumerate() {
        // header is line 1
        let line = n as u64 + 2;
        report.rows_read += 1;
        let rec = match rec {
            Ok(r) => r,
            Err(e) if e.is_io_error() => return Err(e.into()),
            Err(e) => {
                report.errors.push(RowError { line, message: e.to_string() });
                continue;
            }
        };
        let line = rec.position().map_or(line, |p| p.line());
        match parse_row(&rec) {
            Ok((id, d)) => {
                if let Err(e) = table.insert(id, d) {
                    report.errors.push(RowError { line, message: e.to_string() });
                } else {
                    report.accepted += 1;
                }
            }
            Err(message) => report.errors.push(RowError { line, message }),
        }
    }
    Ok((table, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    const VALID: &str = "user_id,gender,age_cohort,marital,child\n\
        u1,Female,1,Married,No\n\
        u2,Male,3,Unmarried,Yes\n\
        u3,Female,6,Married,Yes\n\
        u4,Male,2,Unmarried,No\n";

    #[test]
    fn parses_valid_roster() {
        let (t, rep) = parse_demographics(VALID.as_bytes()).unwrap();
        assert_eq!(t.len(), 4);
        assert_eq!(rep.accepted, 4);
        assert!(rep.errors.is_empty());
        assert_eq!(t.get("u3").unwrap().age_cohort.get(), 6);
    }

    #[test]
    fn rejects_age_cohort_seven() {
        let src = "user_id,gender,age_cohort,marital,child\nu1,Female,7,Married,No\n";
        let (t, rep) = parse_demographics(src.as_bytes()).unwrap();
        assert!(t.is_empty());
        assert_eq!(rep.errors.len(), 1);
        assert_eq!(rep.errors[0].line, 2);
        assert!(rep.errors[0].message.contains("age_cohort"));
    }

    #[test]
    fn rejects_duplicate_user() {
        let src = "user_id,gender,age_cohort,marital,child\n\
            u1,Female,1,Married,No\nu1,Male,2,Married,No\n";
        let (t, rep) = parse_demographics(src.as_bytes()).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.get("u1").unwrap().gender, Gender::Female);
        assert_eq!(rep.errors.len(), 1);
        assert_eq!(rep.errors[0].line, 3);
    }

    #[test]
    fn rejects_unknown_category() {
        let src = "user_id,gender,age_cohort,marital,child\nu1,Other,1,Married,No\nu2,Male,1,Divorced,No\n";
        let (t, rep) = parse_demographics(src.as_bytes()).unwrap();
        assert!(t.is_empty());
        assert_eq!(rep.errors.len(), 2);
    }

    #[test]
    fn wrong_header_is_fatal() {
        let src = "id,gender,age,marital,child\n";
        assert!(matches!(parse_demographics(src.as_bytes()), Err(Error::Schema { .. })));
    }

    #[test]
    fn csv_round_trip() {
        let (t, _) = parse_demographics(VALID.as_bytes()).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), VALID);
    }

    #[test]
    fn attribute_parsing_and_categories() {
        assert_eq!("marital_status".parse::<Attribute>().unwrap(), Attribute::MaritalStatus);
        assert_eq!("Age range".parse::<Attribute>().unwrap(), Attribute::AgeRange);
        assert!("income".parse::<Attribute>().is_err());
        let d = Demographics {
            gender: Gender::Male,
            age_cohort: AgeCohort::new(4).unwrap(),
            marital: Marital::Unmarried,
            child: Child::Yes,
        };
        assert_eq!(Attribute::AgeRange.category_of(&d), 3);
        assert_eq!(Attribute::Gender.category_of(&d), 1);
    }
}
