//! Survey ingestion: the variable schema, CSV parsing with quarantine,
//! cleaning of inconsistent trip chains, conversion of trips into activity
//! schedules, and the train/validation split by travel year.

use crate::builder::PurposeMap;
use crate::encoding::Value;
use crate::schedule::{ActivitySchedule, PersonGroup, Tour, DAY_CAP_MINUTES};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::OnceLock;
use thiserror::Error;

pub const TRAIN_YEARS: std::ops::RangeInclusive<i32> = 2012..=2017;
pub const VALIDATION_YEAR: i32 = 2018;

const HOME: &str = "Home";

/// Kind of one survey variable.
#[derive(Debug, Clone, PartialEq)]
pub enum SurveyKind {
    Cat(Vec<String>),
    Num { min: f64, max: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurveyColumn {
    pub name: &'static str,
    pub kind: SurveyKind,
}

/// The survey variable schema: personal attributes, household features, and
/// zone information, in file column order.
#[derive(Debug, Clone, PartialEq)]
pub struct SurveySchema {
    pub columns: Vec<SurveyColumn>,
}

impl SurveySchema {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn csv_header(&self) -> Vec<String> {
        let mut h = vec!["PersonId".to_string()];
        h.extend(self.columns.iter().map(|c| c.name.to_string()));
        h
    }
}

fn vocab(items: &[&str]) -> SurveyKind {
    SurveyKind::Cat(items.iter().map(|s| s.to_string()).collect())
}

fn codes(prefix: &str, n: usize) -> SurveyKind {
    SurveyKind::Cat((1..=n).map(|i| format!("{prefix}_{i:03}")).collect())
}

/// Victorian postcodes: 3000 through 3244.
fn postcodes() -> SurveyKind {
    SurveyKind::Cat((3000..3245).map(|p| p.to_string()).collect())
}

pub const MAIN_ROLES: [&str; 7] = [
    "Full-time worker",
    "Part-time worker",
    "Student",
    "Pupil",
    "Child",
    "Retired",
    "Nonworker",
];

pub const WORK_TYPES: [&str; 5] =
    ["Fixed hours", "Flexible hours", "Roster shifts", "Work from home", "Not in workforce"];

pub const WEEKDAYS: [&str; 7] =
    ["Monday", "Tuesday", "Wednesday", "Thursday", "Friday", "Saturday", "Sunday"];

/// The survey schema. Cardinalities follow the source data dictionary
/// (e.g. 53 detailed occupations, 106 detailed industries, 245 postcodes).
pub fn survey_schema() -> &'static SurveySchema {
    static SCHEMA: OnceLock<SurveySchema> = OnceLock::new();
    SCHEMA.get_or_init(|| {
        let num = |min: f64, max: f64| SurveyKind::Num { min, max };
        SurveySchema {
            columns: vec![
                SurveyColumn { name: "PersonType", kind: vocab(&["Worker", "Student", "Nonworker"]) },
                SurveyColumn { name: "Age", kind: num(0.0, 116.0) },
                SurveyColumn { name: "Gender", kind: vocab(&["Male", "Female"]) },
                SurveyColumn { name: "CarLicence", kind: vocab(&["Yes", "No"]) },
                SurveyColumn {
                    name: "MainOccupation",
                    kind: vocab(&[
                        "Manager",
                        "Professional",
                        "Technician",
                        "Community worker",
                        "Clerical",
                        "Sales",
                        "Machinery operator",
                        "Labourer",
                        "Home duties",
                        "Not in workforce",
                    ]),
                },
                SurveyColumn { name: "ANZSCO2", kind: codes("ANZSCO", 53) },
                SurveyColumn { name: "MainIndustry", kind: codes("IND", 21) },
                SurveyColumn { name: "ANZSIC2", kind: codes("ANZSIC", 106) },
                SurveyColumn { name: "PersonIncomeLevel", kind: codes("LEVEL", 11) },
                SurveyColumn { name: "MainRole", kind: vocab(&MAIN_ROLES) },
                SurveyColumn { name: "WorkType", kind: vocab(&WORK_TYPES) },
                SurveyColumn {
                    name: "EmpType",
                    kind: vocab(&["Employee", "Self-employed", "Employer", "Casual", "Not employed"]),
                },
                SurveyColumn {
                    name: "OwnDwell",
                    kind: vocab(&[
                        "Fully owned",
                        "Being purchased",
                        "Being rented",
                        "Occupied rent-free",
                        "Something else",
                    ]),
                },
                SurveyColumn { name: "TravelYear", kind: num(2012.0, 2018.0) },
                SurveyColumn { name: "TravelMonth", kind: num(1.0, 12.0) },
                SurveyColumn { name: "TravelDay", kind: vocab(&WEEKDAYS) },
                SurveyColumn { name: "NumPersons", kind: num(1.0, 11.0) },
                SurveyColumn { name: "NumKids", kind: num(0.0, 7.0) },
                SurveyColumn { name: "NumFulltimeWorkers", kind: num(0.0, 6.0) },
                SurveyColumn { name: "NumParttimeWorkers", kind: num(0.0, 5.0) },
                SurveyColumn { name: "NumCasualWorkers", kind: num(0.0, 4.0) },
                SurveyColumn { name: "NumCars", kind: num(0.0, 7.0) },
                SurveyColumn { name: "NumBikes", kind: num(0.0, 14.0) },
                SurveyColumn { name: "HhIncome", kind: num(0.0, 12500.0) },
                SurveyColumn { name: "YearsLived", kind: num(0.0, 88.0) },
                SurveyColumn { name: "HomeRegion", kind: vocab(&["Metropolitan", "Regional"]) },
                SurveyColumn { name: "HomeLGA", kind: codes("LGA", 32) },
                SurveyColumn { name: "HomePostcode", kind: postcodes() },
            ],
        }
    })
}

/// One survey person: household, personal, and zone variables aligned with
/// [`survey_schema`] column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonRecord {
    pub person_id: String,
    pub values: Vec<Value>,
}

impl PersonRecord {
    pub fn get(&self, name: &str) -> Option<&Value> {
        survey_schema().index_of(name).map(|i| &self.values[i])
    }

    pub fn cat(&self, name: &str) -> &str {
        self.get(name).and_then(Value::as_cat).unwrap_or("")
    }

    pub fn num(&self, name: &str) -> f64 {
        self.get(name).and_then(Value::as_num).unwrap_or(f64::NAN)
    }

    pub fn person_group(&self) -> Option<PersonGroup> {
        PersonGroup::parse(self.cat("PersonType"))
    }

    pub fn travel_year(&self) -> i32 {
        self.num("TravelYear") as i32
    }
}

/// One trip leg of a travel diary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripRecord {
    pub person_id: String,
    pub origin_purpose: String,
    pub dest_purpose: String,
    /// Departure in minutes since midnight.
    pub depart: f64,
    /// Arrival in minutes since midnight; after `depart` on valid trips.
    pub arrive: f64,
}

/// A rejected input row and why it was rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuarantinedRow {
    pub file: String,
    /// 1-based line number (header is line 1).
    pub line: u64,
    pub person_id: String,
    pub column: String,
    pub reason: String,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("person {person_id}: day does not start and end at home")]
    NotHomeAnchored { person_id: String },
    #[error("person {person_id}: non-positive dwell at minute {at}")]
    NonPositiveDwell { person_id: String, at: f64 },
    #[error("person {person_id}: {source}")]
    UnknownPurpose {
        person_id: String,
        #[source]
        source: crate::builder::BuilderError,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
}

/// Parsed survey with its quarantine report.
#[derive(Debug, Default)]
pub struct ParsedSurvey {
    pub persons: Vec<PersonRecord>,
    pub trips: Vec<TripRecord>,
    pub quarantined: Vec<QuarantinedRow>,
}

fn header_index(
    headers: &csv::StringRecord,
    wanted: &[&str],
    file: &str,
) -> Result<Vec<usize>, IngestError> {
    let lower: Vec<String> = headers.iter().map(|h| h.trim().to_lowercase()).collect();
    wanted
        .iter()
        .map(|w| {
            lower
                .iter()
                .position(|h| h == &w.to_lowercase())
                .ok_or_else(|| IngestError::MissingColumn(format!("{file}: {w}")))
        })
        .collect()
}

/// Parses the person and trip CSVs. Rows that fail type or range checks are
/// quarantined with their line number rather than aborting the parse;
/// missing columns abort.
pub fn parse_survey(
    person_csv: &Path,
    trip_csv: &Path,
) -> Result<ParsedSurvey, IngestError> {
    let mut out = ParsedSurvey::default();
    parse_persons(person_csv, &mut out)?;
    parse_trips(trip_csv, &mut out)?;
    Ok(out)
}

fn parse_persons(path: &Path, out: &mut ParsedSurvey) -> Result<(), IngestError> {
    let schema = survey_schema();
    let file_label = path.file_name().map_or_else(String::new, |f| f.to_string_lossy().into_owned());
    let mut reader = csv::Reader::from_path(path)?;
    let wanted: Vec<&str> =
        std::iter::once("PersonId").chain(schema.columns.iter().map(|c| c.name)).collect();
    let cols = header_index(reader.headers()?, &wanted, &file_label)?;

    'rows: for (row_i, record) in reader.records().enumerate() {
        let record = record?;
        let line = row_i as u64 + 2;
        let person_id = record.get(cols[0]).unwrap_or("").trim().to_string();
        let mut values = Vec::with_capacity(schema.columns.len());
        for (ci, col) in schema.columns.iter().enumerate() {
            let raw = record.get(cols[ci + 1]).unwrap_or("").trim();
            let mut reject = |reason: String| {
                out.quarantined.push(QuarantinedRow {
                    file: file_label.clone(),
                    line,
                    person_id: person_id.clone(),
                    column: col.name.to_string(),
                    reason,
                });
            };
            match &col.kind {
                SurveyKind::Cat(vocab) => {
                    if vocab.iter().any(|v| v == raw) {
                        values.push(Value::cat(raw));
                    } else {
                        reject(format!("unknown category {raw:?}"));
                        continue 'rows;
                    }
                }
                SurveyKind::Num { min, max } => match raw.parse::<f64>() {
                    Ok(x) if (*min..=*max).contains(&x) => values.push(Value::Num(x)),
                    Ok(x) => {
                        reject(format!("value {x} outside [{min}, {max}]"));
                        continue 'rows;
                    }
                    Err(_) => {
                        reject(format!("type mismatch: {raw:?} is not numeric"));
                        continue 'rows;
                    }
                },
            }
        }
        out.persons.push(PersonRecord { person_id, values });
    }
    Ok(())
}

fn parse_trips(path: &Path, out: &mut ParsedSurvey) -> Result<(), IngestError> {
    let file_label = path.file_name().map_or_else(String::new, |f| f.to_string_lossy().into_owned());
    let mut reader = csv::Reader::from_path(path)?;
    let wanted = ["PersonId", "OriginPurpose", "DestPurpose", "DepartMinutes", "ArriveMinutes"];
    let cols = header_index(reader.headers()?, &wanted, &file_label)?;

    for (row_i, record) in reader.records().enumerate() {
        let record = record?;
        let line = row_i as u64 + 2;
        let person_id = record.get(cols[0]).unwrap_or("").trim().to_string();
        let parse_minutes = |idx: usize| -> Result<f64, String> {
            let raw = record.get(cols[idx]).unwrap_or("").trim();
            match raw.parse::<f64>() {
                Ok(x) if (0.0..=DAY_CAP_MINUTES).contains(&x) => Ok(x),
                Ok(x) => Err(format!("time {x} outside [0, {DAY_CAP_MINUTES}]")),
                Err(_) => Err(format!("type mismatch: {raw:?} is not numeric")),
            }
        };
        match (parse_minutes(3), parse_minutes(4)) {
            (Ok(depart), Ok(arrive)) => out.trips.push(TripRecord {
                person_id,
                origin_purpose: record.get(cols[1]).unwrap_or("").trim().to_string(),
                dest_purpose: record.get(cols[2]).unwrap_or("").trim().to_string(),
                depart,
                arrive,
            }),
            (bad, other) => {
                let (column, reason) = match bad {
                    Err(r) => ("DepartMinutes", r),
                    Ok(_) => ("ArriveMinutes", other.unwrap_err()),
                };
                out.quarantined.push(QuarantinedRow {
                    file: file_label.clone(),
                    line,
                    person_id,
                    column: column.to_string(),
                    reason,
                });
            }
        }
    }
    Ok(())
}

/// Toggles for the individual cleaning rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanRules {
    /// Remove persons with a trip arriving at or before its departure.
    pub remove_negative_durations: bool,
    /// Remove persons whose next trip departs before the previous arrival
    /// (or exactly at it for a non-home dwell).
    pub remove_overlaps: bool,
    /// Remove persons whose trip chain breaks (destination of one trip is
    /// not the origin of the next).
    pub require_purpose_chain: bool,
}

impl Default for CleanRules {
    fn default() -> Self {
        Self { remove_negative_durations: true, remove_overlaps: true, require_purpose_chain: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovedPerson {
    pub person_id: String,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct CleanOutcome {
    pub persons: Vec<PersonRecord>,
    pub trips: Vec<TripRecord>,
    pub removed: Vec<RemovedPerson>,
}

fn trip_chain_problem(trips: &[TripRecord], rules: &CleanRules) -> Option<String> {
    for t in trips {
        if rules.remove_negative_durations && t.arrive <= t.depart {
            return Some(format!("non-positive trip duration at depart {}", t.depart));
        }
    }
    for pair in trips.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if rules.remove_overlaps {
            let strict = !a.dest_purpose.eq_ignore_ascii_case(HOME);
            if b.depart < a.arrive || (strict && b.depart <= a.arrive) {
                return Some(format!("trip overlap at arrive {}", a.arrive));
            }
        }
        if rules.require_purpose_chain && !a.dest_purpose.eq_ignore_ascii_case(&b.origin_purpose) {
            return Some(format!(
                "broken chain: arrived at {:?} but departed from {:?}",
                a.dest_purpose, b.origin_purpose
            ));
        }
    }
    None
}

/// Removes persons whose trip chains are inconsistent. Deterministic given
/// input order and idempotent; surviving persons keep their trips unchanged.
pub fn clean(
    persons: Vec<PersonRecord>,
    trips: Vec<TripRecord>,
    rules: &CleanRules,
) -> CleanOutcome {
    let mut by_person: HashMap<&str, Vec<&TripRecord>> = HashMap::new();
    for t in &trips {
        by_person.entry(&t.person_id).or_default().push(t);
    }

    let mut removed = Vec::new();
    let mut kept_persons = Vec::new();
    for p in persons {
        let owned: Vec<TripRecord> = by_person
            .get(p.person_id.as_str())
            .map(|ts| ts.iter().map(|&t| t.clone()).collect())
            .unwrap_or_default();
        match trip_chain_problem(&owned, rules) {
            Some(reason) => removed.push(RemovedPerson { person_id: p.person_id.clone(), reason }),
            None => kept_persons.push(p),
        }
    }
    let kept_ids: std::collections::HashSet<&str> =
        kept_persons.iter().map(|p| p.person_id.as_str()).collect();
    let kept_trips = trips.into_iter().filter(|t| kept_ids.contains(t.person_id.as_str())).collect();
    CleanOutcome { persons: kept_persons, trips: kept_trips, removed }
}

/// Converts one person's cleaned, time-ordered trips into a tour-structured
/// activity schedule. Every dwell at a non-home destination becomes an
/// activity from the inbound arrival to the outbound departure; dwells at
/// home close the current tour.
pub fn trips_to_schedule(
    person_id: &str,
    trips: &[TripRecord],
    purposes: &PurposeMap,
) -> Result<ActivitySchedule, IngestError> {
    let anchored = trips
        .first()
        .is_some_and(|t| t.origin_purpose.eq_ignore_ascii_case(HOME))
        && trips.last().is_some_and(|t| t.dest_purpose.eq_ignore_ascii_case(HOME));
    if !anchored {
        return Err(IngestError::NotHomeAnchored { person_id: person_id.to_string() });
    }

    let mut tours: Vec<Tour> = Vec::new();
    let mut current: Tour = Vec::new();
    for (i, trip) in trips.iter().enumerate() {
        if trip.dest_purpose.eq_ignore_ascii_case(HOME) {
            if !current.is_empty() {
                tours.push(std::mem::take(&mut current));
            }
            continue;
        }
        let start = trip.arrive;
        let end = trips[i + 1].depart; // a non-home dest is never the last trip
        if end <= start {
            return Err(IngestError::NonPositiveDwell { person_id: person_id.to_string(), at: start });
        }
        let group = purposes
            .classify(&trip.dest_purpose)
            .map_err(|source| IngestError::UnknownPurpose { person_id: person_id.to_string(), source })?;
        current.push(crate::schedule::Activity::new(group, start, end, trip.dest_purpose.clone()));
    }
    if !current.is_empty() {
        tours.push(current);
    }
    Ok(ActivitySchedule::new(person_id, tours))
}

/// Groups trips per person (input order preserved) and builds schedules for
/// every person that has trips. Persons without trips are skipped.
pub fn schedules_for(
    persons: &[PersonRecord],
    trips: &[TripRecord],
    purposes: &PurposeMap,
) -> Result<Vec<ActivitySchedule>, IngestError> {
    let mut by_person: HashMap<&str, Vec<&TripRecord>> = HashMap::new();
    for t in trips {
        by_person.entry(&t.person_id).or_default().push(t);
    }
    let mut out = Vec::new();
    for p in persons {
        if let Some(ts) = by_person.get(p.person_id.as_str()) {
            let owned: Vec<TripRecord> = ts.iter().map(|&t| t.clone()).collect();
            out.push(trips_to_schedule(&p.person_id, &owned, purposes)?);
        }
    }
    Ok(out)
}

/// Splits persons into the training years (2012-2017) and the validation
/// year (2018). The partition is exhaustive and disjoint.
pub fn split_by_year(persons: Vec<PersonRecord>) -> (Vec<PersonRecord>, Vec<PersonRecord>) {
    persons.into_iter().partition(|p| p.travel_year() != VALIDATION_YEAR)
}

pub fn write_schedules_jsonl(path: &Path, schedules: &[ActivitySchedule]) -> Result<(), IngestError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for s in schedules {
        let line = serde_json::to_string(s)
            .map_err(|source| IngestError::Json { path: path.display().to_string(), source })?;
        writeln!(f, "{line}")?;
    }
    Ok(())
}

pub fn read_schedules_jsonl(path: &Path) -> Result<Vec<ActivitySchedule>, IngestError> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for line in f.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|source| IngestError::Json { path: path.display().to_string(), source })?,
        );
    }
    Ok(out)
}

pub fn write_quarantine_csv(path: &Path, rows: &[QuarantinedRow]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["file", "line", "person_id", "column", "reason"])?;
    for r in rows {
        w.write_record([
            r.file.as_str(),
            &r.line.to_string(),
            r.person_id.as_str(),
            r.column.as_str(),
            r.reason.as_str(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::ActivityGroup;
    use std::io::Write as _;

    fn trip(pid: &str, from: &str, to: &str, depart: f64, arrive: f64) -> TripRecord {
        TripRecord {
            person_id: pid.into(),
            origin_purpose: from.into(),
            dest_purpose: to.into(),
            depart,
            arrive,
        }
    }

    fn default_person(pid: &str) -> PersonRecord {
        let values = survey_schema()
            .columns
            .iter()
            .map(|c| match &c.kind {
                SurveyKind::Cat(v) => Value::cat(v[0].clone()),
                SurveyKind::Num { min, .. } => Value::Num(*min),
            })
            .collect();
        PersonRecord { person_id: pid.into(), values }
    }

    fn write_person_csv(dir: &Path, rows: &[Vec<String>]) -> std::path::PathBuf {
        let path = dir.join("persons.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "{}", survey_schema().csv_header().join(",")).unwrap();
        for row in rows {
            writeln!(f, "{}", row.join(",")).unwrap();
        }
        path
    }

    fn person_csv_row(pid: &str, overrides: &[(&str, &str)]) -> Vec<String> {
        let p = default_person(pid);
        let mut row = vec![pid.to_string()];
        for (col, v) in survey_schema().columns.iter().zip(&p.values) {
            let mut s = match v {
                Value::Cat(s) => s.clone(),
                Value::Num(x) => format!("{x}"),
            };
            for (name, val) in overrides {
                if *name == col.name {
                    s = val.to_string();
                }
            }
            row.push(s);
        }
        row
    }

    fn write_trip_csv(dir: &Path, rows: &[TripRecord]) -> std::path::PathBuf {
        let path = dir.join("trips.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "PersonId,OriginPurpose,DestPurpose,DepartMinutes,ArriveMinutes").unwrap();
        for t in rows {
            writeln!(
                f,
                "{},{},{},{},{}",
                t.person_id, t.origin_purpose, t.dest_purpose, t.depart, t.arrive
            )
            .unwrap();
        }
        path
    }

    #[test]
    fn parses_all_person_columns() {
        let dir = tempfile::tempdir().unwrap();
        let persons = write_person_csv(
            dir.path(),
            &[person_csv_row("p1", &[]), person_csv_row("p2", &[]), person_csv_row("p3", &[])],
        );
        let trips = write_trip_csv(dir.path(), &[]);
        let parsed = parse_survey(&persons, &trips).unwrap();
        assert_eq!(parsed.persons.len(), 3);
        assert!(parsed.quarantined.is_empty());
        assert_eq!(parsed.persons[0].values.len(), survey_schema().columns.len());
    }

    #[test]
    fn out_of_range_age_is_quarantined() {
        let dir = tempfile::tempdir().unwrap();
        let persons = write_person_csv(
            dir.path(),
            &[person_csv_row("p1", &[("Age", "200")]), person_csv_row("p2", &[])],
        );
        let trips = write_trip_csv(dir.path(), &[]);
        let parsed = parse_survey(&persons, &trips).unwrap();
        assert_eq!(parsed.persons.len(), 1);
        assert_eq!(parsed.quarantined.len(), 1);
        assert_eq!(parsed.quarantined[0].column, "Age");
        assert_eq!(parsed.quarantined[0].line, 2);
    }

    #[test]
    fn missing_column_aborts() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("persons.csv");
        let header: Vec<String> = survey_schema()
            .csv_header()
            .into_iter()
            .filter(|h| h != "HomeLGA")
            .collect();
        std::fs::write(&path, format!("{}\n", header.join(","))).unwrap();
        let trips = write_trip_csv(dir.path(), &[]);
        match parse_survey(&path, &trips) {
            Err(IngestError::MissingColumn(c)) => assert!(c.contains("HomeLGA")),
            other => panic!("expected MissingColumn, got {other:?}"),
        }
    }

    #[test]
    fn overlapping_trips_remove_the_person() {
        let persons = vec![default_person("p1"), default_person("p2")];
        let trips = vec![
            trip("p1", "Home", "Shopping", 540.0, 560.0),
            trip("p1", "Shopping", "Home", 555.0, 600.0),
            trip("p2", "Home", "Shopping", 540.0, 560.0),
            trip("p2", "Shopping", "Home", 580.0, 600.0),
        ];
        let out = clean(persons, trips, &CleanRules::default());
        assert_eq!(out.persons.len(), 1);
        assert_eq!(out.persons[0].person_id, "p2");
        assert_eq!(out.removed.len(), 1);
        assert_eq!(out.removed[0].person_id, "p1");
        assert!(out.trips.iter().all(|t| t.person_id == "p2"));
    }

    #[test]
    fn clean_is_idempotent() {
        let persons = vec![default_person("a"), default_person("b")];
        let trips = vec![
            trip("a", "Home", "Work", 500.0, 530.0),
            trip("a", "Work", "Home", 1000.0, 1030.0),
            trip("b", "Home", "Work", 530.0, 500.0), // negative duration
        ];
        let once = clean(persons, trips, &CleanRules::default());
        let twice = clean(once.persons.clone(), once.trips.clone(), &CleanRules::default());
        assert_eq!(once.persons, twice.persons);
        assert_eq!(once.trips, twice.trips);
        assert!(twice.removed.is_empty());
    }

    #[test]
    fn narrative_day_becomes_five_activities() {
        let trips = vec![
            trip("w", "Home", "Pick up", 505.0, 510.0),
            trip("w", "Pick up", "Work", 515.0, 550.0),
            trip("w", "Work", "Personal business", 750.0, 770.0),
            trip("w", "Personal business", "Work", 830.0, 850.0),
            trip("w", "Work", "Shopping", 1035.0, 1060.0),
            trip("w", "Shopping", "Home", 1090.0, 1115.0),
        ];
        let s = trips_to_schedule("w", &trips, &PurposeMap::default()).unwrap();
        assert_eq!(s.len(), 5);
        assert_eq!(s.tours.len(), 1);
        let groups: Vec<ActivityGroup> = s.activities().map(|a| a.group).collect();
        assert_eq!(
            groups,
            vec![
                ActivityGroup::P,
                ActivityGroup::W,
                ActivityGroup::M,
                ActivityGroup::W,
                ActivityGroup::M
            ]
        );
        let spans: Vec<(f64, f64)> = s.activities().map(|a| (a.start, a.end)).collect();
        assert_eq!(
            spans,
            vec![
                (510.0, 515.0),
                (550.0, 750.0),
                (770.0, 830.0),
                (850.0, 1035.0),
                (1060.0, 1090.0)
            ]
        );
    }

    #[test]
    fn single_round_trip_is_one_activity() {
        let trips = vec![
            trip("p", "Home", "Shopping", 580.0, 600.0),
            trip("p", "Shopping", "Home", 630.0, 650.0),
        ];
        let s = trips_to_schedule("p", &trips, &PurposeMap::default()).unwrap();
        assert_eq!(s.len(), 1);
        let a = s.activities().next().unwrap();
        assert_eq!((a.group, a.start, a.end), (ActivityGroup::M, 600.0, 630.0));
    }

    #[test]
    fn day_not_ending_at_home_is_rejected() {
        let trips = vec![trip("p", "Home", "Work", 500.0, 530.0)];
        assert!(matches!(
            trips_to_schedule("p", &trips, &PurposeMap::default()),
            Err(IngestError::NotHomeAnchored { .. })
        ));
    }

    #[test]
    fn split_by_year_partitions() {
        let mut persons = Vec::new();
        for i in 0..10 {
            let mut p = default_person(&format!("t{i}"));
            let yi = survey_schema().index_of("TravelYear").unwrap();
            p.values[yi] = Value::Num(2012.0);
            persons.push(p);
        }
        for i in 0..5 {
            let mut p = default_person(&format!("v{i}"));
            let yi = survey_schema().index_of("TravelYear").unwrap();
            p.values[yi] = Value::Num(2018.0);
            persons.push(p);
        }
        let n = persons.len();
        let (train, valid) = split_by_year(persons);
        assert_eq!(train.len(), 10);
        assert_eq!(valid.len(), 5);
        assert_eq!(train.len() + valid.len(), n);

        let (t2, v2) = split_by_year(train.clone());
        assert_eq!(t2.len(), 10);
        assert!(v2.is_empty());
        let (t3, v3) = split_by_year(valid.clone());
        assert!(t3.is_empty());
        assert_eq!(v3.len(), 5);
    }

    #[test]
    fn schedules_jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let trips = vec![
            trip("p", "Home", "Shopping", 580.0, 600.0),
            trip("p", "Shopping", "Home", 630.0, 650.0),
        ];
        let s = vec![trips_to_schedule("p", &trips, &PurposeMap::default()).unwrap()];
        let path = dir.path().join("schedules.jsonl");
        write_schedules_jsonl(&path, &s).unwrap();
        assert_eq!(read_schedules_jsonl(&path).unwrap(), s);
    }
}
