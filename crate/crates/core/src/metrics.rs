//! Ideation metrics computed from a session log: Guilford counts, context
//! switches, spatial-semantic correspondence, dwell fractions and
//! per-half breakdowns.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CategoryLabel, EventKind, IslandId, Mode, SessionEvent, UtteranceId};
use crate::navigation::DwellSegment;

const PARTITION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("duration must be positive, got {0}")]
    NonPositiveDuration(f64),
    #[error("dwell segments do not partition the session: {0}")]
    IncompletePartition(String),
    #[error("originality annotations, line {line}: {reason}")]
    BadAnnotation { line: usize, reason: String },
}

/// Where the user was when an idea was submitted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Location {
    Overview,
    Island {
        island_id: IslandId,
        category: CategoryLabel,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdeaRecord {
    pub utterance_id: UtteranceId,
    pub t: f64,
    /// `None` when categorization failed.
    pub category: Option<CategoryLabel>,
    pub location: Location,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub originality: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Guilford {
    pub fluency: usize,
    pub flexibility: usize,
    pub persistence: f64,
}

fn categorized(ideas: &[IdeaRecord]) -> impl Iterator<Item = (&IdeaRecord, &CategoryLabel)> {
    ideas
        .iter()
        .filter_map(|i| i.category.as_ref().map(|c| (i, c)))
}

pub fn guilford(ideas: &[IdeaRecord]) -> Guilford {
    let fluency = categorized(ideas).count();
    let flexibility = categorized(ideas)
        .map(|(_, c)| c)
        .collect::<HashSet<_>>()
        .len();
    let persistence = if flexibility == 0 {
        0.0
    } else {
        fluency as f64 / flexibility as f64
    };
    Guilford {
        fluency,
        flexibility,
        persistence,
    }
}

/// Adjacent category changes among categorized ideas, in the given order.
pub fn switch_count(ideas: &[IdeaRecord]) -> usize {
    let cats: Vec<&CategoryLabel> = categorized(ideas).map(|(_, c)| c).collect();
    cats.windows(2).filter(|w| w[0] != w[1]).count()
}

/// Switches per minute over `duration` seconds.
pub fn switch_rate(ideas: &[IdeaRecord], duration: f64) -> Result<f64, MetricsError> {
    if !duration.is_finite() || duration <= 0.0 {
        return Err(MetricsError::NonPositiveDuration(duration));
    }
    Ok(switch_count(ideas) as f64 / (duration / 60.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SscReport {
    pub matched: usize,
    pub in_island: usize,
    pub rate: Option<f64>,
}

pub fn ssc(ideas: &[IdeaRecord]) -> SscReport {
    let mut matched = 0;
    let mut in_island = 0;
    for (idea, category) in categorized(ideas) {
        if let Location::Island { category: here, .. } = &idea.location {
            in_island += 1;
            if here == category {
                matched += 1;
            }
        }
    }
    SscReport {
        matched,
        in_island,
        rate: (in_island > 0).then(|| matched as f64 / in_island as f64),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfReport {
    pub start: f64,
    pub end: f64,
    pub guilford: Guilford,
    pub switches: usize,
    pub switch_rate: f64,
}

/// Splits at `duration / 2`; the first half is `[0, T/2)`.
pub fn temporal_halves(
    ideas: &[IdeaRecord],
    duration: f64,
) -> Result<[HalfReport; 2], MetricsError> {
    if !duration.is_finite() || duration <= 0.0 {
        return Err(MetricsError::NonPositiveDuration(duration));
    }
    let mid = duration / 2.0;
    let (first, second): (Vec<IdeaRecord>, Vec<IdeaRecord>) =
        ideas.iter().cloned().partition(|i| i.t < mid);
    let half = |ideas: &[IdeaRecord], start: f64, end: f64| -> Result<HalfReport, MetricsError> {
        Ok(HalfReport {
            start,
            end,
            guilford: guilford(ideas),
            switches: switch_count(ideas),
            switch_rate: switch_rate(ideas, end - start)?,
        })
    };
    Ok([half(&first, 0.0, mid)?, half(&second, mid, duration)?])
}

/// Share of session time spent in the overview. Segments must be closed,
/// ordered and contiguous.
pub fn overview_fraction(segments: &[DwellSegment]) -> Result<f64, MetricsError> {
    let bad = |msg: String| Err(MetricsError::IncompletePartition(msg));
    let Some(first) = segments.first() else {
        return bad("no segments".into());
    };
    let mut cursor = first.start;
    let mut overview = 0.0;
    for (i, seg) in segments.iter().enumerate() {
        let Some(end) = seg.end else {
            return bad(format!("segment {i} is still open"));
        };
        if (seg.start - cursor).abs() > PARTITION_TOLERANCE {
            return bad(format!(
                "segment {i} starts at {} but previous ended at {cursor}",
                seg.start
            ));
        }
        if end < seg.start {
            return bad(format!("segment {i} ends before it starts"));
        }
        if seg.location == Mode::Overview {
            overview += end - seg.start;
        }
        cursor = end;
    }
    let total = cursor - first.start;
    if total.is_nan() || total <= 0.0 {
        return bad("segments cover zero time".into());
    }
    Ok(overview / total)
}

/// Reads `utterance_id,score` lines (a header line and `#` comments are
/// skipped) and attaches scores to matching ideas.
pub fn attach_originality(ideas: &mut [IdeaRecord], csv: &str) -> Result<usize, MetricsError> {
    let mut scores = BTreeMap::new();
    for (n, line) in csv.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |reason: &str| MetricsError::BadAnnotation {
            line: n + 1,
            reason: reason.to_string(),
        };
        let (id, score) = line
            .split_once(',')
            .ok_or_else(|| bad("expected two columns"))?;
        let Ok(id) = id.trim().parse::<u64>() else {
            if n == 0 {
                continue;
            }
            return Err(bad("utterance id is not an integer"));
        };
        let score: f64 = score
            .trim()
            .parse()
            .map_err(|_| bad("score is not a number"))?;
        scores.insert(UtteranceId(id), score);
    }
    let mut attached = 0;
    for idea in ideas.iter_mut() {
        if let Some(score) = scores.get(&idea.utterance_id) {
            idea.originality = Some(*score);
            attached += 1;
        }
    }
    Ok(attached)
}

/// Ideas and dwell segments recovered from an event log.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionAnalysis {
    pub ideas: Vec<IdeaRecord>,
    pub dwell: Vec<DwellSegment>,
    pub duration: f64,
}

impl SessionAnalysis {
    /// Walks the log. The session ends at `end` if given, else at the
    /// `SessionEnded` event, else at the last event.
    pub fn from_events<'a>(
        events: impl IntoIterator<Item = &'a SessionEvent>,
        end: Option<f64>,
    ) -> Self {
        let mut island_categories: BTreeMap<IslandId, CategoryLabel> = BTreeMap::new();
        let mut ideas: Vec<IdeaRecord> = Vec::new();
        let mut index: BTreeMap<UtteranceId, usize> = BTreeMap::new();
        let mut dwell = vec![DwellSegment {
            location: Mode::Overview,
            start: 0.0,
            end: None,
        }];
        let mut last_t: f64 = 0.0;
        let mut ended_at = None;

        let move_to = |dwell: &mut Vec<DwellSegment>, location: Mode, t: f64| {
            if let Some(open) = dwell.last_mut() {
                open.end = Some(t);
            }
            dwell.push(DwellSegment {
                location,
                start: t,
                end: None,
            });
        };

        for event in events {
            last_t = last_t.max(event.t);
            let location = dwell.last().map_or(Mode::Overview, |s| s.location);
            match &event.kind {
                EventKind::IslandCreated {
                    island_id,
                    category,
                    ..
                } => {
                    island_categories.insert(*island_id, category.clone());
                }
                EventKind::UtteranceSubmitted { utterance } => {
                    let location = match location {
                        Mode::Overview => Location::Overview,
                        Mode::Immersed(id) => match island_categories.get(&id) {
                            Some(category) => Location::Island {
                                island_id: id,
                                category: category.clone(),
                            },
                            None => Location::Overview,
                        },
                    };
                    index.insert(utterance.id, ideas.len());
                    ideas.push(IdeaRecord {
                        utterance_id: utterance.id,
                        t: utterance.t,
                        category: None,
                        location,
                        originality: None,
                    });
                }
                EventKind::Categorized {
                    utterance_id,
                    category,
                    ..
                } => {
                    if let Some(&i) = index.get(utterance_id) {
                        ideas[i].category = Some(category.clone());
                    }
                }
                EventKind::DiveIn { island_id, .. } => {
                    move_to(&mut dwell, Mode::Immersed(*island_id), event.t)
                }
                EventKind::WalkTeleport { to, .. } => {
                    move_to(&mut dwell, Mode::Immersed(*to), event.t)
                }
                EventKind::DiveOut { .. } => move_to(&mut dwell, Mode::Overview, event.t),
                EventKind::SessionEnded => ended_at = Some(event.t),
                _ => {}
            }
        }

        let duration = end.or(ended_at).unwrap_or(last_t);
        if let Some(open) = dwell.last_mut() {
            open.end = Some(duration.max(open.start));
        }
        ideas.sort_by(|a, b| {
            a.t.total_cmp(&b.t)
                .then(a.utterance_id.cmp(&b.utterance_id))
        });
        Self {
            ideas,
            dwell,
            duration,
        }
    }

    pub fn report(&self) -> MetricsReport {
        MetricsReport::compute(&self.ideas, &self.dwell, self.duration)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub duration_s: f64,
    pub fluency: usize,
    pub flexibility: usize,
    pub persistence: f64,
    pub switches: usize,
    /// Per minute; `None` for a zero-length session.
    pub switch_rate: Option<f64>,
    pub ssc: SscReport,
    /// In-island ideas over all categorized ideas.
    pub in_island_share: Option<f64>,
    pub overview_fraction: Option<f64>,
    pub originality_total: Option<f64>,
    pub halves: Option<[HalfReport; 2]>,
}

impl MetricsReport {
    pub fn compute(ideas: &[IdeaRecord], dwell: &[DwellSegment], duration: f64) -> Self {
        let g = guilford(ideas);
        let ssc = ssc(ideas);
        let originality: Vec<f64> = categorized(ideas)
            .filter_map(|(i, _)| i.originality)
            .collect();
        Self {
            duration_s: duration,
            fluency: g.fluency,
            flexibility: g.flexibility,
            persistence: g.persistence,
            switches: switch_count(ideas),
            switch_rate: switch_rate(ideas, duration).ok(),
            ssc,
            in_island_share: (g.fluency > 0).then(|| ssc.in_island as f64 / g.fluency as f64),
            overview_fraction: overview_fraction(dwell).ok(),
            originality_total: (!originality.is_empty()).then(|| originality.iter().sum()),
            halves: temporal_halves(ideas, duration).ok(),
        }
    }

    /// One `name=value` line per metric.
    pub fn to_text(&self) -> String {
        fn opt(v: Option<f64>, digits: usize) -> String {
            v.map_or_else(|| "undefined".to_string(), |v| format!("{v:.digits$}"))
        }
        let mut out = String::new();
        let mut line = |name: &str, value: String| {
            let _ = writeln!(out, "{name}={value}");
        };
        line("duration_s", format!("{:.3}", self.duration_s));
        line("fluency", self.fluency.to_string());
        line("flexibility", self.flexibility.to_string());
        line("persistence", format!("{:.3}", self.persistence));
        line("switches", self.switches.to_string());
        line(
            "switch_rate",
            self.switch_rate
                .map_or_else(|| "undefined".into(), |r| format!("{r:.2}/min")),
        );
        line("ssc", opt(self.ssc.rate, 3));
        line("ssc_matched", self.ssc.matched.to_string());
        line("ssc_in_island", self.ssc.in_island.to_string());
        line("in_island_share", opt(self.in_island_share, 3));
        line("overview_fraction", opt(self.overview_fraction, 6));
        if let Some(total) = self.originality_total {
            line("originality_total", format!("{total:.3}"));
        }
        if let Some(halves) = &self.halves {
            for (name, h) in ["first_half", "second_half"].iter().zip(halves) {
                line(&format!("{name}.fluency"), h.guilford.fluency.to_string());
                line(
                    &format!("{name}.flexibility"),
                    h.guilford.flexibility.to_string(),
                );
                line(
                    &format!("{name}.persistence"),
                    format!("{:.3}", h.guilford.persistence),
                );
                line(&format!("{name}.switches"), h.switches.to_string());
                line(
                    &format!("{name}.switch_rate"),
                    format!("{:.2}/min", h.switch_rate),
                );
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
