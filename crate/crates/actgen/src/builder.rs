//! Turns an [`ActivitySchedule`] into a [`DailyPattern`]: primary activity
//! selection, stop-before/stop-after attachment, sub-tour merging, and
//! secondary extraction.

use crate::schedule::{
    Activity, ActivityGroup, ActivitySchedule, DailyPattern, PersonGroup, PrimaryPattern,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Minimum durations for maintenance/discretionary activities to qualify as
/// primary ahead of the longest-of fallback.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrimaryThresholds {
    pub maintenance_min: f64,
    pub discretionary_min: f64,
}

impl Default for PrimaryThresholds {
    fn default() -> Self {
        Self { maintenance_min: 30.0, discretionary_min: 30.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BuilderError {
    #[error("unknown activity purpose {0:?}")]
    UnknownPurpose(String),
    #[error("schedule has no activities")]
    EmptySchedule,
    #[error("no primary candidate: schedule contains only pickup-dropoff activities")]
    NoPrimaryCandidate,
    #[error("nonworker schedule contains a subsistence activity")]
    SubsistenceForNonworker,
}

/// Lookup from raw survey purpose strings to activity groups.
///
/// The default table covers the standard purpose labels; pipelines can
/// extend or replace it from configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PurposeMap {
    map: BTreeMap<String, ActivityGroup>,
}

impl Default for PurposeMap {
    fn default() -> Self {
        let entries: [(&str, ActivityGroup); 9] = [
            ("Work", ActivityGroup::W),
            ("Study", ActivityGroup::W),
            ("Shopping", ActivityGroup::M),
            ("Personal business", ActivityGroup::M),
            ("Recreation", ActivityGroup::D),
            ("Social", ActivityGroup::D),
            ("Other", ActivityGroup::D),
            ("Pick up", ActivityGroup::P),
            ("Drop off", ActivityGroup::P),
        ];
        let map = entries.iter().map(|(k, g)| (k.to_lowercase(), *g)).collect();
        Self { map }
    }
}

impl PurposeMap {
    pub fn from_entries(entries: impl IntoIterator<Item = (String, ActivityGroup)>) -> Self {
        Self { map: entries.into_iter().map(|(k, g)| (k.to_lowercase(), g)).collect() }
    }

    pub fn insert(&mut self, purpose: &str, group: ActivityGroup) {
        self.map.insert(purpose.to_lowercase(), group);
    }

    /// Maps a raw purpose label to its group; case-insensitive.
    pub fn classify(&self, raw_type: &str) -> Result<ActivityGroup, BuilderError> {
        self.map
            .get(&raw_type.to_lowercase())
            .copied()
            .ok_or_else(|| BuilderError::UnknownPurpose(raw_type.to_string()))
    }
}

/// Position of an activity inside a schedule's tour structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActivityIdx {
    pub tour: usize,
    pub pos: usize,
}

/// Picks the primary activity by priority: any subsistence activity first
/// (longest wins), then the longest maintenance episode at or above its
/// threshold, then the longest discretionary episode at or above its
/// threshold, and finally the longest maintenance/discretionary episode
/// regardless of duration. Pickup-dropoff activities are never primary.
/// Equal durations tie-break on earliest start.
pub fn select_primary(
    s: &ActivitySchedule,
    t: &PrimaryThresholds,
    g: PersonGroup,
) -> Result<ActivityIdx, BuilderError> {
    if s.is_empty() {
        return Err(BuilderError::EmptySchedule);
    }

    let indexed = || {
        s.tours.iter().enumerate().flat_map(|(ti, tour)| {
            tour.iter().enumerate().map(move |(pi, a)| (ActivityIdx { tour: ti, pos: pi }, a))
        })
    };
    let longest = |group: ActivityGroup, min_duration: f64| -> Option<ActivityIdx> {
        indexed()
            .filter(|(_, a)| a.group == group && a.duration() >= min_duration)
            .max_by(|(_, a), (_, b)| {
                a.duration().total_cmp(&b.duration()).then(b.start.total_cmp(&a.start))
            })
            .map(|(idx, _)| idx)
    };

    if let Some(idx) = longest(ActivityGroup::W, 0.0) {
        if g == PersonGroup::Nonworker {
            return Err(BuilderError::SubsistenceForNonworker);
        }
        return Ok(idx);
    }
    if let Some(idx) = longest(ActivityGroup::M, t.maintenance_min) {
        return Ok(idx);
    }
    if let Some(idx) = longest(ActivityGroup::D, t.discretionary_min) {
        return Ok(idx);
    }
    indexed()
        .filter(|(_, a)| matches!(a.group, ActivityGroup::M | ActivityGroup::D))
        .max_by(|(_, a), (_, b)| {
            a.duration().total_cmp(&b.duration()).then(b.start.total_cmp(&a.start))
        })
        .map(|(idx, _)| idx)
        .ok_or(BuilderError::NoPrimaryCandidate)
}

/// Convenience accessor for the selected primary activity.
pub fn select_primary_activity<'a>(
    s: &'a ActivitySchedule,
    t: &PrimaryThresholds,
    g: PersonGroup,
) -> Result<&'a Activity, BuilderError> {
    let idx = select_primary(s, t, g)?;
    Ok(&s.tours[idx.tour][idx.pos])
}

/// A built pattern plus the activities the longest-stop rule pruned.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternParts {
    pub pattern: PrimaryPattern,
    /// Index of the home-based tour containing the primary.
    pub primary_tour: usize,
    /// In-tour stop candidates removed by the keep-the-longest rule.
    pub dropped_stops: Vec<Activity>,
}

/// Builds the primary pattern around the selected primary activity.
///
/// Within the primary's home-based tour, the longest activity strictly
/// before the primary becomes the stop-before and the longest strictly
/// after becomes the stop-after; other in-tour activities are pruned (the
/// survey keeps at most one stop on each side). When the primary is a
/// subsistence activity immediately flanked by another episode of the same
/// raw type with a single excursion between them, the episodes merge into
/// one primary spanning both and the excursion becomes the sub-tour.
pub fn build_primary_pattern(s: &ActivitySchedule, primary: ActivityIdx) -> PatternParts {
    let tour = &s.tours[primary.tour];
    let p = &tour[primary.pos];

    // Sub-tour merge: primary W at `pos`, excursion at pos+1, matching W at
    // pos+2 (or mirrored on the left). One excursion at most.
    let mut lo = primary.pos;
    let mut hi = primary.pos;
    let mut sub_tour: Option<Activity> = None;
    if p.group == ActivityGroup::W {
        let mergeable = |w: &Activity, x: &Activity| {
            w.group == ActivityGroup::W && w.raw_type == p.raw_type && x.group != ActivityGroup::W
        };
        if primary.pos + 2 < tour.len() && mergeable(&tour[primary.pos + 2], &tour[primary.pos + 1]) {
            sub_tour = Some(tour[primary.pos + 1].clone());
            hi = primary.pos + 2;
        } else if primary.pos >= 2 && mergeable(&tour[primary.pos - 2], &tour[primary.pos - 1]) {
            sub_tour = Some(tour[primary.pos - 1].clone());
            lo = primary.pos - 2;
        }
    }
    let merged = Activity::new(p.group, tour[lo].start, tour[hi].end, p.raw_type.clone());

    let mut dropped = Vec::new();
    let mut pick_longest = |candidates: &[Activity]| -> Option<Activity> {
        let best = candidates
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| {
                a.duration().total_cmp(&b.duration()).then(b.start.total_cmp(&a.start))
            })
            .map(|(i, _)| i)?;
        for (i, a) in candidates.iter().enumerate() {
            if i != best {
                dropped.push(a.clone());
            }
        }
        Some(candidates[best].clone())
    };

    let stop_before = pick_longest(&tour[..lo]);
    let stop_after = pick_longest(&tour[hi + 1..]);

    PatternParts {
        pattern: PrimaryPattern { primary: merged, stop_before, stop_after, sub_tour },
        primary_tour: primary.tour,
        dropped_stops: dropped,
    }
}

/// All activities outside the primary home-based tour, in time order.
pub fn extract_secondary(s: &ActivitySchedule, parts: &PatternParts) -> Vec<Activity> {
    s.tours
        .iter()
        .enumerate()
        .filter(|(ti, _)| *ti != parts.primary_tour)
        .flat_map(|(_, tour)| tour.iter().cloned())
        .collect()
}

/// A built daily pattern with its pruning record.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternBuild {
    pub pattern: DailyPattern,
    pub dropped_stops: Vec<Activity>,
}

/// Composition of primary selection, pattern assembly, and secondary
/// extraction.
pub fn build_daily_pattern(
    s: &ActivitySchedule,
    t: &PrimaryThresholds,
    g: PersonGroup,
) -> Result<DailyPattern, BuilderError> {
    Ok(build_daily_pattern_detailed(s, t, g)?.pattern)
}

/// As [`build_daily_pattern`], also reporting pruned stops.
pub fn build_daily_pattern_detailed(
    s: &ActivitySchedule,
    t: &PrimaryThresholds,
    g: PersonGroup,
) -> Result<PatternBuild, BuilderError> {
    let idx = select_primary(s, t, g)?;
    let parts = build_primary_pattern(s, idx);
    let secondary = extract_secondary(s, &parts);
    Ok(PatternBuild {
        pattern: DailyPattern { primary_pattern: parts.pattern, secondary },
        dropped_stops: parts.dropped_stops,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::validate_pattern;

    fn act(group: ActivityGroup, start: f64, end: f64, raw: &str) -> Activity {
        Activity::new(group, start, end, raw)
    }

    /// The narrative worker day: pickup, work split by a noon errand,
    /// shopping on the way home, and an evening social tour.
    fn worker_day() -> ActivitySchedule {
        ActivitySchedule::new(
            "w1",
            vec![
                vec![
                    act(ActivityGroup::P, 510.0, 515.0, "Pick up"),
                    act(ActivityGroup::W, 550.0, 750.0, "Work"),
                    act(ActivityGroup::M, 770.0, 830.0, "Personal business"),
                    act(ActivityGroup::W, 850.0, 1035.0, "Work"),
                    act(ActivityGroup::M, 1060.0, 1090.0, "Shopping"),
                ],
                vec![act(ActivityGroup::D, 1230.0, 1290.0, "Social")],
            ],
        )
    }

    #[test]
    fn classify_examples() {
        let m = PurposeMap::default();
        assert_eq!(m.classify("Work").unwrap(), ActivityGroup::W);
        assert_eq!(m.classify("Recreation").unwrap(), ActivityGroup::D);
        assert_eq!(m.classify("shopping").unwrap(), ActivityGroup::M);
        assert_eq!(
            m.classify("Commuting"),
            Err(BuilderError::UnknownPurpose("Commuting".into()))
        );
    }

    #[test]
    fn subsistence_beats_duration() {
        let s = ActivitySchedule::new(
            "p",
            vec![vec![
                act(ActivityGroup::W, 540.0, 600.0, "Work"),
                act(ActivityGroup::M, 620.0, 920.0, "Shopping"),
            ]],
        );
        let a = select_primary_activity(&s, &PrimaryThresholds::default(), PersonGroup::Worker)
            .unwrap();
        assert_eq!(a.group, ActivityGroup::W);
    }

    #[test]
    fn maintenance_outranks_discretionary_above_threshold() {
        let s = ActivitySchedule::new(
            "p",
            vec![vec![
                act(ActivityGroup::M, 540.0, 585.0, "Shopping"),
                act(ActivityGroup::D, 600.0, 690.0, "Social"),
            ]],
        );
        let a = select_primary_activity(&s, &PrimaryThresholds::default(), PersonGroup::Nonworker)
            .unwrap();
        assert_eq!(a.group, ActivityGroup::M);
    }

    #[test]
    fn fallback_longest_of_maintenance_and_discretionary() {
        let s = ActivitySchedule::new(
            "p",
            vec![vec![
                act(ActivityGroup::M, 540.0, 550.0, "Shopping"),
                act(ActivityGroup::D, 600.0, 620.0, "Social"),
            ]],
        );
        let a = select_primary_activity(&s, &PrimaryThresholds::default(), PersonGroup::Nonworker)
            .unwrap();
        assert_eq!(a.group, ActivityGroup::D);
    }

    #[test]
    fn only_pickup_dropoff_has_no_candidate() {
        let s = ActivitySchedule::new(
            "p",
            vec![vec![act(ActivityGroup::P, 510.0, 515.0, "Pick up")]],
        );
        assert_eq!(
            select_primary(&s, &PrimaryThresholds::default(), PersonGroup::Worker),
            Err(BuilderError::NoPrimaryCandidate)
        );
    }

    #[test]
    fn nonworker_with_subsistence_is_rejected() {
        let s = ActivitySchedule::new(
            "p",
            vec![vec![act(ActivityGroup::W, 540.0, 900.0, "Work")]],
        );
        assert_eq!(
            select_primary(&s, &PrimaryThresholds::default(), PersonGroup::Nonworker),
            Err(BuilderError::SubsistenceForNonworker)
        );
    }

    #[test]
    fn worker_day_builds_merged_pattern() {
        let s = worker_day();
        let build = build_daily_pattern_detailed(
            &s,
            &PrimaryThresholds::default(),
            PersonGroup::Worker,
        )
        .unwrap();
        let pp = &build.pattern.primary_pattern;
        assert_eq!(pp.primary, act(ActivityGroup::W, 550.0, 1035.0, "Work"));
        assert_eq!(pp.sub_tour, Some(act(ActivityGroup::M, 770.0, 830.0, "Personal business")));
        assert_eq!(pp.stop_before, Some(act(ActivityGroup::P, 510.0, 515.0, "Pick up")));
        assert_eq!(pp.stop_after, Some(act(ActivityGroup::M, 1060.0, 1090.0, "Shopping")));
        assert_eq!(
            build.pattern.secondary,
            vec![act(ActivityGroup::D, 1230.0, 1290.0, "Social")]
        );
        assert!(build.dropped_stops.is_empty());
        assert_eq!(validate_pattern(&build.pattern), vec![]);
    }

    #[test]
    fn two_stops_before_keeps_the_longest() {
        let s = ActivitySchedule::new(
            "p",
            vec![vec![
                act(ActivityGroup::P, 480.0, 490.0, "Drop off"),
                act(ActivityGroup::M, 500.0, 525.0, "Shopping"),
                act(ActivityGroup::W, 550.0, 1000.0, "Work"),
            ]],
        );
        let build =
            build_daily_pattern_detailed(&s, &PrimaryThresholds::default(), PersonGroup::Worker)
                .unwrap();
        let pp = &build.pattern.primary_pattern;
        assert_eq!(pp.stop_before, Some(act(ActivityGroup::M, 500.0, 525.0, "Shopping")));
        assert_eq!(build.dropped_stops, vec![act(ActivityGroup::P, 480.0, 490.0, "Drop off")]);
    }

    #[test]
    fn lone_primary_has_zero_stops() {
        let s = ActivitySchedule::new(
            "p",
            vec![vec![act(ActivityGroup::W, 550.0, 1000.0, "Work")]],
        );
        let p = build_daily_pattern(&s, &PrimaryThresholds::default(), PersonGroup::Student)
            .unwrap();
        assert_eq!(p.primary_pattern.stop_before, None);
        assert_eq!(p.primary_pattern.stop_after, None);
        assert_eq!(p.primary_pattern.sub_tour, None);
        assert!(p.secondary.is_empty());
    }

    #[test]
    fn nonworker_secondary_tours_are_extracted_in_order() {
        let s = ActivitySchedule::new(
            "p",
            vec![
                vec![act(ActivityGroup::M, 540.0, 660.0, "Shopping")],
                vec![act(ActivityGroup::P, 900.0, 910.0, "Pick up")],
                vec![act(ActivityGroup::D, 1000.0, 1060.0, "Social")],
            ],
        );
        let p = build_daily_pattern(&s, &PrimaryThresholds::default(), PersonGroup::Nonworker)
            .unwrap();
        assert_eq!(p.primary().group, ActivityGroup::M);
        let groups: Vec<_> = p.secondary.iter().map(|a| a.group).collect();
        assert_eq!(groups, vec![ActivityGroup::P, ActivityGroup::D]);
    }

    #[test]
    fn round_trip_through_flatten() {
        let s = worker_day();
        let t = PrimaryThresholds::default();
        let p = build_daily_pattern(&s, &t, PersonGroup::Worker).unwrap();
        let flat = p.to_schedule("w1");
        let rebuilt = build_daily_pattern(&flat, &t, PersonGroup::Worker).unwrap();
        assert_eq!(rebuilt, p);
    }
}
