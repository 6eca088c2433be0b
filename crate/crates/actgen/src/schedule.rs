//! Domain types for daily activity schedules and tour-based patterns.
//!
//! Time is a real number of minutes since midnight. Activities start inside
//! the survey day (`[0, 1440)`) but may run past midnight up to
//! [`DAY_CAP_MINUTES`] to accommodate late evening activities.
//!
//! A person's day is modelled as a list of home-based tours. One tour holds
//! the primary activity together with at most one stop before, one stop
//! after, and (for subsistence primaries) at most one sub-tour; every other
//! activity is secondary. Pattern invariants are checked by
//! [`validate_pattern`], which reports violations as data rather than
//! aborting, so batch validation can list every problem at once.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Minutes in a civil day.
pub const DAY_MINUTES: f64 = 1440.0;

/// Latest admissible activity end: 04:48 the next day (1440 * 1.2).
pub const DAY_CAP_MINUTES: f64 = 1728.0;

/// Coarse activity category.
///
/// `W`/`M`/`D`/`P` label real activities. `ZeroStop` and `NoneSubTour` are
/// classifier outcomes only: they mark the absence of a stop or sub-tour and
/// never appear as the group of a concrete [`Activity`] in a valid pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActivityGroup {
    /// Subsistence: work or study.
    W,
    /// Maintenance: shopping, personal business.
    M,
    /// Discretionary: recreation, social, other.
    D,
    /// Pickup-dropoff.
    P,
    #[serde(rename = "ZERO_STOP")]
    ZeroStop,
    #[serde(rename = "NONE")]
    NoneSubTour,
}

impl ActivityGroup {
    /// Groups that a concrete activity may carry.
    pub fn is_concrete(self) -> bool {
        matches!(self, Self::W | Self::M | Self::D | Self::P)
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::W => "W",
            Self::M => "M",
            Self::D => "D",
            Self::P => "P",
            Self::ZeroStop => "ZERO_STOP",
            Self::NoneSubTour => "NONE",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "W" => Some(Self::W),
            "M" => Some(Self::M),
            "D" => Some(Self::D),
            "P" => Some(Self::P),
            "ZERO_STOP" => Some(Self::ZeroStop),
            "NONE" => Some(Self::NoneSubTour),
            _ => None,
        }
    }
}

impl fmt::Display for ActivityGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Person segmentation used throughout the model cascade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PersonGroup {
    Worker,
    Student,
    Nonworker,
}

impl PersonGroup {
    pub const ALL: [PersonGroup; 3] = [Self::Worker, Self::Student, Self::Nonworker];

    /// Legal primary activity groups for this person group.
    pub fn primary_groups(self) -> &'static [ActivityGroup] {
        match self {
            Self::Worker | Self::Student => &[ActivityGroup::W, ActivityGroup::M, ActivityGroup::D],
            Self::Nonworker => &[ActivityGroup::M, ActivityGroup::D],
        }
    }

    /// Legal secondary activity groups (the same for every person group).
    pub fn secondary_groups(self) -> &'static [ActivityGroup] {
        &[ActivityGroup::M, ActivityGroup::D, ActivityGroup::P]
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Worker => "Worker",
            Self::Student => "Student",
            Self::Nonworker => "Nonworker",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "Worker" => Some(Self::Worker),
            "Student" => Some(Self::Student),
            "Nonworker" => Some(Self::Nonworker),
            _ => None,
        }
    }
}

impl fmt::Display for PersonGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One out-of-home activity episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Activity {
    pub group: ActivityGroup,
    /// Minutes since midnight, in `[0, 1440)`.
    pub start: f64,
    /// Minutes since midnight, in `(start, 1728]`.
    pub end: f64,
    /// Raw survey purpose label, e.g. "Shopping".
    pub raw_type: String,
}

impl Activity {
    pub fn new(group: ActivityGroup, start: f64, end: f64, raw_type: impl Into<String>) -> Self {
        Self { group, start, end, raw_type: raw_type.into() }
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    /// Violations of the single-activity invariants, tagged with `slot`.
    fn check(&self, slot: PatternSlot) -> Vec<Violation> {
        let mut out = Vec::new();
        if !self.group.is_concrete() {
            out.push(Violation::MarkerGroupOnActivity { slot, group: self.group });
        }
        if !(0.0..DAY_MINUTES).contains(&self.start) {
            out.push(Violation::StartOutOfRange { slot, start: self.start });
        }
        if self.end <= self.start {
            out.push(Violation::NonPositiveDuration { slot });
        }
        if self.end > DAY_CAP_MINUTES {
            out.push(Violation::EndPastCap { slot, end: self.end });
        }
        out
    }
}

/// A home-based tour: the consecutive activities between two dwells at home.
pub type Tour = Vec<Activity>;

/// One person's out-of-home day, grouped into home-based tours.
///
/// Tours are time-ordered and each tour's activities are time-ordered.
/// `activities()` flattens them into the ordered episode list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivitySchedule {
    pub person_id: String,
    pub tours: Vec<Tour>,
}

impl ActivitySchedule {
    pub fn new(person_id: impl Into<String>, tours: Vec<Tour>) -> Self {
        Self { person_id: person_id.into(), tours }
    }

    /// All activities in time order.
    pub fn activities(&self) -> impl Iterator<Item = &Activity> {
        self.tours.iter().flatten()
    }

    pub fn len(&self) -> usize {
        self.tours.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.tours.iter().all(Vec::is_empty)
    }

    /// True when activities are strictly ordered and pairwise disjoint
    /// (`a.end <= b.start` for consecutive episodes).
    pub fn is_time_ordered(&self) -> bool {
        let mut prev_end = f64::NEG_INFINITY;
        for a in self.activities() {
            if a.start < prev_end || a.end <= a.start {
                return false;
            }
            prev_end = a.end;
        }
        true
    }
}

mod stop_slot {
    //! Serializes an optional stop as the activity object or `"ZERO_STOP"`.
    use super::Activity;
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Activity>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(a) => a.serialize(s),
            None => s.serialize_str("ZERO_STOP"),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Activity>, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Slot {
            Act(Activity),
            Marker(String),
        }
        match Slot::deserialize(d)? {
            Slot::Act(a) => Ok(Some(a)),
            Slot::Marker(m) if m == "ZERO_STOP" => Ok(None),
            Slot::Marker(m) => Err(D::Error::custom(format!("invalid stop marker {m:?}"))),
        }
    }
}

mod subtour_slot {
    //! Serializes an optional sub-tour as the activity object or `"NONE"`.
    use super::Activity;
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Activity>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(a) => a.serialize(s),
            None => s.serialize_str("NONE"),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Activity>, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Slot {
            Act(Activity),
            Marker(String),
        }
        match Slot::deserialize(d)? {
            Slot::Act(a) => Ok(Some(a)),
            Slot::Marker(m) if m == "NONE" => Ok(None),
            Slot::Marker(m) => Err(D::Error::custom(format!("invalid sub-tour marker {m:?}"))),
        }
    }
}

/// Skeleton of the primary home-based tour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimaryPattern {
    pub primary: Activity,
    #[serde(with = "stop_slot")]
    pub stop_before: Option<Activity>,
    #[serde(with = "stop_slot")]
    pub stop_after: Option<Activity>,
    #[serde(with = "subtour_slot")]
    pub sub_tour: Option<Activity>,
}

impl PrimaryPattern {
    /// Primary duration less the sub-tour duration, when one is present.
    pub fn net_duration(&self) -> f64 {
        self.primary.duration() - self.sub_tour.as_ref().map_or(0.0, Activity::duration)
    }

    /// Time interval spanned by the primary tour (stops included).
    pub fn tour_interval(&self) -> (f64, f64) {
        let lo = self.stop_before.as_ref().map_or(self.primary.start, |s| s.start.min(self.primary.start));
        let hi = self.stop_after.as_ref().map_or(self.primary.end, |s| s.end.max(self.primary.end));
        (lo, hi)
    }
}

/// A full daily pattern: primary tour plus secondary activities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyPattern {
    #[serde(flatten)]
    pub primary_pattern: PrimaryPattern,
    pub secondary: Vec<Activity>,
}

impl DailyPattern {
    pub fn primary(&self) -> &Activity {
        &self.primary_pattern.primary
    }

    /// Flattens the pattern back into a tour-structured schedule.
    ///
    /// The primary tour lists stop-before, the primary (split around the
    /// sub-tour when one exists), and stop-after. Each secondary activity
    /// becomes its own home-based tour. Tours are emitted in time order, so
    /// rebuilding with unchanged thresholds reproduces this pattern.
    pub fn to_schedule(&self, person_id: impl Into<String>) -> ActivitySchedule {
        let pp = &self.primary_pattern;
        let mut primary_tour: Tour = Vec::new();
        if let Some(sb) = &pp.stop_before {
            primary_tour.push(sb.clone());
        }
        match &pp.sub_tour {
            Some(st) => {
                let p = &pp.primary;
                primary_tour.push(Activity::new(p.group, p.start, st.start, p.raw_type.clone()));
                primary_tour.push(st.clone());
                primary_tour.push(Activity::new(p.group, st.end, p.end, p.raw_type.clone()));
            }
            None => primary_tour.push(pp.primary.clone()),
        }
        if let Some(sa) = &pp.stop_after {
            primary_tour.push(sa.clone());
        }

        let mut tours: Vec<Tour> = vec![primary_tour];
        tours.extend(self.secondary.iter().map(|a| vec![a.clone()]));
        tours.sort_by(|a, b| a[0].start.total_cmp(&b[0].start));
        ActivitySchedule::new(person_id, tours)
    }
}

/// Slot of a pattern a violation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PatternSlot {
    Primary,
    StopBefore,
    StopAfter,
    SubTour,
    Secondary(usize),
}

/// One broken pattern invariant. Violations are data, not errors, so a
/// batch validation pass can report every problem in a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    MarkerGroupOnActivity { slot: PatternSlot, group: ActivityGroup },
    StartOutOfRange { slot: PatternSlot, start: f64 },
    NonPositiveDuration { slot: PatternSlot },
    EndPastCap { slot: PatternSlot, end: f64 },
    PrimaryGroupInvalid { group: ActivityGroup },
    StopGroupInvalid { slot: PatternSlot, group: ActivityGroup },
    OverlapBeforePrimary,
    OverlapAfterPrimary,
    SubTourRequiresSubsistence,
    SubTourOutsidePrimary,
    SecondaryGroupInvalid { index: usize, group: ActivityGroup },
    SecondaryOverlapsPrimaryTour { index: usize },
    SecondaryOutOfOrder { index: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

const STOP_GROUPS: [ActivityGroup; 3] = [ActivityGroup::M, ActivityGroup::D, ActivityGroup::P];

/// Checks every pattern invariant and returns one violation per breach.
/// An empty result means the pattern is valid.
pub fn validate_pattern(p: &DailyPattern) -> Vec<Violation> {
    let pp = &p.primary_pattern;
    let mut v = Vec::new();

    v.extend(pp.primary.check(PatternSlot::Primary));
    if !matches!(pp.primary.group, ActivityGroup::W | ActivityGroup::M | ActivityGroup::D) {
        v.push(Violation::PrimaryGroupInvalid { group: pp.primary.group });
    }

    if let Some(sb) = &pp.stop_before {
        v.extend(sb.check(PatternSlot::StopBefore));
        if !STOP_GROUPS.contains(&sb.group) {
            v.push(Violation::StopGroupInvalid { slot: PatternSlot::StopBefore, group: sb.group });
        }
        if sb.end > pp.primary.start {
            v.push(Violation::OverlapBeforePrimary);
        }
    }
    if let Some(sa) = &pp.stop_after {
        v.extend(sa.check(PatternSlot::StopAfter));
        if !STOP_GROUPS.contains(&sa.group) {
            v.push(Violation::StopGroupInvalid { slot: PatternSlot::StopAfter, group: sa.group });
        }
        if pp.primary.end > sa.start {
            v.push(Violation::OverlapAfterPrimary);
        }
    }
    if let Some(st) = &pp.sub_tour {
        v.extend(st.check(PatternSlot::SubTour));
        if !STOP_GROUPS.contains(&st.group) {
            v.push(Violation::StopGroupInvalid { slot: PatternSlot::SubTour, group: st.group });
        }
        if pp.primary.group != ActivityGroup::W {
            v.push(Violation::SubTourRequiresSubsistence);
        }
        if !(pp.primary.start < st.start && st.end < pp.primary.end) {
            v.push(Violation::SubTourOutsidePrimary);
        }
    }

    let (tour_lo, tour_hi) = pp.tour_interval();
    let mut prev_start = f64::NEG_INFINITY;
    for (i, a) in p.secondary.iter().enumerate() {
        v.extend(a.check(PatternSlot::Secondary(i)));
        if !STOP_GROUPS.contains(&a.group) {
            v.push(Violation::SecondaryGroupInvalid { index: i, group: a.group });
        }
        if a.start < tour_hi && a.end > tour_lo {
            v.push(Violation::SecondaryOverlapsPrimaryTour { index: i });
        }
        if a.start < prev_start {
            v.push(Violation::SecondaryOutOfOrder { index: i });
        }
        prev_start = a.start;
    }
    v
}
