//! Synthetic session logs with prescribed idea counts and dwell schedule,
//! generated by driving a real [`Session`] with a scripted provider.
//!
//! Schedule: the user starts in the overview, where the first idea founds
//! island 0, and dives into island 0 at `overview_seconds`. Ideas submitted
//! after that point are in-island; `matched` of them carry island 0's
//! category and the rest are spread over the other categories.

use std::collections::HashMap;
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{EngineError, Session, SessionConfig};
use crate::layout::LayoutParams;
use crate::model::{CategoryLabel, IslandId, TransitionMode};
use crate::organizer::{
    FewShotExample, InferenceProvider, InferenceRaw, InferenceRequest, ProviderError, TopicConfig,
};
use crate::session_log::{Durability, SessionFile};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth parameters: {0}")]
    Invalid(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub ideas: usize,
    pub in_island: usize,
    pub matched: usize,
    pub categories: usize,
    pub duration: f64,
    pub overview_seconds: f64,
    pub seed: u64,
    /// Explicit category per idea, all submitted in the overview at evenly
    /// spaced times. Overrides the count parameters.
    pub sequence: Option<Vec<String>>,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            ideas: 20,
            in_island: 10,
            matched: 5,
            categories: 4,
            duration: 600.0,
            overview_seconds: 300.0,
            seed: 0,
            sequence: None,
        }
    }
}

impl SynthParams {
    /// Ideas in the given category order, spread over `duration` seconds
    /// without leaving the overview.
    pub fn sequence(categories: &[&str], duration: f64) -> Self {
        Self {
            ideas: categories.len(),
            in_island: 0,
            matched: 0,
            categories: 0,
            duration,
            overview_seconds: duration,
            seed: 0,
            sequence: Some(categories.iter().map(|c| c.to_string()).collect()),
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        let fail = |m: &str| Err(SynthError::Invalid(m.to_string()));
        if !self.duration.is_finite() || self.duration <= 0.0 {
            return fail("duration must be positive");
        }
        if self.overview_seconds.is_nan()
            || self.overview_seconds <= 0.0
            || self.overview_seconds > self.duration
        {
            return fail("overview_seconds must lie in (0, duration]");
        }
        if let Some(seq) = &self.sequence {
            if seq.iter().any(|c| CategoryLabel::new(c).is_err()) {
                return fail("sequence contains an empty category");
            }
            return Ok(());
        }
        if self.matched > self.in_island || self.in_island > self.ideas {
            return fail("need matched <= in_island <= ideas");
        }
        if self.categories == 0 {
            return fail("need at least one category");
        }
        if self.matched < self.in_island && self.categories < 2 {
            return fail("mismatched in-island ideas need a second category");
        }
        let immersed = self.overview_seconds < self.duration;
        if immersed && self.in_island == self.ideas {
            return fail("at least one overview idea is needed to found island 0");
        }
        if !immersed && self.in_island > 0 {
            return fail("in-island ideas need overview_seconds < duration");
        }
        Ok(())
    }
}

/// Replies with a fixed category for each transcript.
struct Scripted(HashMap<String, String>);

impl InferenceProvider for Scripted {
    fn infer(&self, request: &InferenceRequest) -> Result<InferenceRaw, ProviderError> {
        self.0
            .get(&request.transcript)
            .map(|category| InferenceRaw(format!("{category};{}", request.transcript)))
            .ok_or_else(|| ProviderError::Failed("unscripted transcript".into()))
    }
}

fn synthetic_topic() -> TopicConfig {
    TopicConfig {
        id: "synthetic".into(),
        topic_name: "Synthetic session".into(),
        prefix_rules: "Categorize each idea.".into(),
        seed_categories: Vec::new(),
        few_shot_examples: vec![FewShotExample {
            topic: "Synthetic session".into(),
            categories: vec![],
            transcript: "idea".into(),
            output: "Category 1;idea".into(),
        }],
        mock: None,
    }
}

fn spread(n: usize, start: f64, end: f64) -> impl Iterator<Item = f64> {
    let step = (end - start) / n.max(1) as f64;
    (0..n).map(move |i| start + (i as f64 + 0.5) * step)
}

pub fn generate(params: &SynthParams) -> Result<SessionFile, SynthError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let name = |k: usize| format!("Category {}", k + 1);

    // category per idea, overview ideas first
    let (overview_cats, island_cats): (Vec<String>, Vec<String>) = match &params.sequence {
        Some(seq) => (seq.clone(), Vec::new()),
        None => {
            let n_overview = params.ideas - params.in_island;
            let overview = (0..n_overview)
                .map(|i| {
                    name(if i == 0 {
                        0
                    } else {
                        rng.random_range(0..params.categories)
                    })
                })
                .collect();
            let mut island: Vec<String> = (0..params.in_island)
                .map(|i| {
                    if i < params.matched {
                        name(0)
                    } else {
                        name(rng.random_range(1..params.categories))
                    }
                })
                .collect();
            island.shuffle(&mut rng);
            (overview, island)
        }
    };

    let mut script = HashMap::new();
    let transcripts: Vec<String> = (0..overview_cats.len() + island_cats.len())
        .map(|i| format!("idea {}", i + 1))
        .collect();
    for (transcript, category) in transcripts
        .iter()
        .zip(overview_cats.iter().chain(&island_cats))
    {
        script.insert(transcript.clone(), category.clone());
    }
    let provider = Scripted(script);

    let mut config = SessionConfig::new(synthetic_topic());
    config.params = LayoutParams::default();
    config.transition = TransitionMode::Dive;
    config.deadline = Duration::from_secs(60);
    config.durability = Durability::Flush;
    let mut session = Session::new(config)?;

    let mut transcripts = transcripts.iter();
    let sequence_mode = params.sequence.is_some();
    let overview_end = params.overview_seconds;
    let overview_times: Vec<f64> = if sequence_mode {
        let step = params.duration / overview_cats.len().max(1) as f64;
        (0..overview_cats.len()).map(|i| i as f64 * step).collect()
    } else {
        spread(overview_cats.len(), 0.0, overview_end).collect()
    };
    for t in overview_times {
        session
            .submit_blocking(&provider, transcripts.next().unwrap(), t)?
            .0
            .ok();
    }
    if overview_end < params.duration {
        session.dive_in(IslandId(0), overview_end)?;
        for t in spread(island_cats.len(), overview_end, params.duration) {
            session
                .submit_blocking(&provider, transcripts.next().unwrap(), t)?
                .0
                .ok();
        }
    }
    session.end(params.duration)?;

    Ok(SessionFile {
        header: session.header().clone(),
        events: session.events().to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::SessionAnalysis;

    fn report(params: &SynthParams) -> crate::metrics::MetricsReport {
        let file = generate(params).unwrap();
        file.replay().unwrap();
        SessionAnalysis::from_events(&file.events, None).report()
    }

    #[test]
    fn constructed_counts_are_reported() {
        let params = SynthParams {
            ideas: 122,
            in_island: 109,
            matched: 53,
            categories: 6,
            duration: 1200.0,
            overview_seconds: 200.0,
            seed: 7,
            sequence: None,
        };
        let r = report(&params);
        assert_eq!(r.fluency, 122);
        assert_eq!((r.ssc.matched, r.ssc.in_island), (53, 109));
        assert!((r.overview_fraction.unwrap() - 200.0 / 1200.0).abs() < 1e-12);
    }

    #[test]
    fn sequence_mode() {
        let r = report(&SynthParams::sequence(
            &["A", "A", "B", "B", "B", "A"],
            120.0,
        ));
        assert_eq!(r.switches, 2);
        assert_eq!(r.switch_rate, Some(1.0));
        assert_eq!(r.overview_fraction, Some(1.0));
    }

    #[test]
    fn same_seed_same_log() {
        let p = SynthParams::default();
        let a = generate(&p).unwrap();
        let b = generate(&p).unwrap();
        assert_eq!(a.events, b.events);
    }

    #[test]
    fn rejects_impossible_counts() {
        let p = SynthParams {
            matched: 11,
            ..SynthParams::default()
        };
        assert!(generate(&p).is_err());
        let p = SynthParams {
            in_island: 20,
            matched: 20,
            ..SynthParams::default()
        };
        assert!(generate(&p).is_err());
    }
}
