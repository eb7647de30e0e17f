//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Run with `cargo test -p islands-core --test acceptance`.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use futures::{SinkExt, StreamExt};
use islands_core::engine::{Session, SessionConfig};
use islands_core::geometry::{angle_between, Vec2};
use islands_core::layout::{align_for_teleport, LayoutParams};
use islands_core::metrics::{switch_count, switch_rate, SessionAnalysis};
use islands_core::model::{
    normalize_category, IslandId, Mode, SceneState, Slot, TransitionMode, UserPose,
};
use islands_core::organizer::{build_prompt, MockProvider, TopicConfig, FORMAT_RULE};
use islands_core::service::{router, ClientMessage, Hub, HubConfig, ServerMessage};
use islands_core::session_log::{Durability, SessionFile};
use islands_core::synth::{generate, SynthParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tokio_tungstenite::tungstenite::Message;

type Check = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn FnOnce() -> Check + 'a>);

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn synth_report(
    ideas: usize,
    in_island: usize,
    matched: usize,
) -> islands_core::metrics::MetricsReport {
    let file = generate(&SynthParams {
        ideas,
        in_island,
        matched,
        categories: 6,
        ..SynthParams::default()
    })
    .expect("synth");
    SessionAnalysis::from_events(&file.events, None).report()
}

fn context_switches() -> Check {
    let file = generate(&SynthParams::sequence(
        &["A", "A", "B", "B", "B", "A"],
        120.0,
    ))
    .map_err(|e| e.to_string())?;
    let analysis = SessionAnalysis::from_events(&file.events, None);

    // brute-force oracle over the category sequence
    let names: Vec<String> = analysis
        .ideas
        .iter()
        .filter_map(|i| i.category.as_ref().map(|c| c.key().to_string()))
        .collect();
    let mut brute = 0;
    for i in 1..names.len() {
        if names[i] != names[i - 1] {
            brute += 1;
        }
    }
    let brute_rate = brute as f64 / 2.0;

    let start = Instant::now();
    let count = switch_count(&analysis.ideas);
    let rate = switch_rate(&analysis.ideas, analysis.duration).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(
        count == 2
            && brute == 2
            && (rate - 1.0).abs() < 1e-12
            && (rate - brute_rate).abs() < 1e-12
            && elapsed < Duration::from_millis(1),
        format!("switches={count} oracle={brute} rate={rate:.2}/min elapsed={elapsed:?}"),
    )
}

fn ssc_values() -> Check {
    let first = synth_report(122, 109, 53).ssc.rate.unwrap_or(f64::NAN) * 100.0;
    let second = synth_report(93, 26, 19).ssc.rate.unwrap_or(f64::NAN) * 100.0;
    ensure(
        (first - 48.6).abs() <= 0.05 && (second - 73.1).abs() <= 0.05,
        format!("53/109={first:.3}% 19/26={second:.3}%"),
    )
}

fn in_island_share() -> Check {
    let first = synth_report(122, 109, 53)
        .in_island_share
        .unwrap_or(f64::NAN)
        * 100.0;
    let second = synth_report(93, 26, 19).in_island_share.unwrap_or(f64::NAN) * 100.0;
    ensure(
        (first - 89.3).abs() <= 0.05 && (second - 28.0).abs() <= 0.05,
        format!("109/122={first:.3}% 26/93={second:.3}%"),
    )
}

fn overview_fraction() -> Check {
    let file = generate(&SynthParams {
        overview_seconds: 440.4,
        duration: 600.0,
        ..SynthParams::default()
    })
    .map_err(|e| e.to_string())?;
    let fraction = SessionAnalysis::from_events(&file.events, None)
        .report()
        .overview_fraction
        .unwrap_or(f64::NAN);
    ensure(
        (fraction - 0.734).abs() <= 1e-6,
        format!("fraction={fraction:.9}"),
    )
}

/// Independent reading of the keyword table: longest key wins, first on ties.
fn oracle_category(topic: &TopicConfig, transcript: &str) -> String {
    let mock = topic.mock.as_ref().unwrap();
    let lower = transcript.to_lowercase();
    let mut best: Option<(usize, &str)> = None;
    for entry in &mock.keywords {
        let key = entry.keyword.to_lowercase();
        let len = key.chars().count();
        if len > 0 && lower.contains(&key) && best.is_none_or(|(l, _)| len > l) {
            best = Some((len, entry.category.as_str()));
        }
    }
    match best {
        Some((_, category)) => category.to_string(),
        None => mock.fallback.split(';').next().unwrap().to_string(),
    }
}

fn organize_equivalence() -> Check {
    let topics: Vec<TopicConfig> = TopicConfig::preset_names()
        .map(|n| TopicConfig::preset(n).unwrap())
        .collect();
    let fillers = [
        "we could",
        "maybe",
        "what about",
        "students",
        "on campus",
        "every week",
        "hmm",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let start = Instant::now();
    for stream in 0..1000 {
        let topic = &topics[stream % topics.len()];
        let keywords = &topic.mock.as_ref().unwrap().keywords;
        let provider = MockProvider::new(topic.keyword_table().unwrap());
        let mut session =
            Session::new(SessionConfig::new(topic.clone())).map_err(|e| e.to_string())?;

        let mut order: Vec<String> = Vec::new();
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        let len = rng.random_range(1..=40);
        for i in 0..len {
            let mut words = vec![fillers[rng.random_range(0..fillers.len())]];
            for _ in 0..rng.random_range(0..=2) {
                words.push(
                    keywords[rng.random_range(0..keywords.len())]
                        .keyword
                        .as_str(),
                );
                words.push(fillers[rng.random_range(0..fillers.len())]);
            }
            let transcript = words.join(" ");
            let key = normalize_category(&oracle_category(topic, &transcript));
            if !counts.contains_key(&key) {
                order.push(key.clone());
            }
            *counts.entry(key).or_default() += 1;
            let (result, _) = session
                .submit_blocking(&provider, &transcript, i as f64)
                .map_err(|e| e.to_string())?;
            result.map_err(|e| format!("stream {stream}: {e}"))?;
        }

        let state = session.snapshot();
        let islands: Vec<String> = state
            .islands
            .iter()
            .map(|i| i.category.key().to_string())
            .collect();
        if islands != order {
            return Err(format!("stream {stream}: islands {islands:?} != {order:?}"));
        }
        for island in &state.islands {
            let want = counts[island.category.key()];
            let placed = island
                .trees
                .iter()
                .filter(|t| t.slot != Slot::Overflow)
                .count();
            if island.trees.len() != want || placed != want.min(8) {
                return Err(format!(
                    "stream {stream}: island {:?} has {} trees ({placed} placed), expected {want}",
                    island.category.name(),
                    island.trees.len()
                ));
            }
        }
    }
    let elapsed = start.elapsed();
    ensure(
        elapsed < Duration::from_secs(10),
        format!("1000 streams in {elapsed:?}"),
    )
}

fn worked_session(path: &std::path::Path) -> Result<(), String> {
    let topic = TopicConfig::preset("study2-sustainability").unwrap();
    let provider = MockProvider::new(topic.keyword_table().unwrap());
    let mut config = SessionConfig::new(topic);
    config.log_path = Some(path.to_path_buf());
    config.durability = Durability::Flush;
    config.transition = TransitionMode::Walk;
    let mut s = Session::new(config).map_err(|e| e.to_string())?;
    let e = |e: islands_core::engine::EngineError| e.to_string();
    for (i, idea) in [
        "turn off lights",
        "bike racks",
        "vegan menu",
        "more bike lanes",
    ]
    .iter()
    .enumerate()
    {
        s.submit_blocking(&provider, idea, i as f64)
            .map_err(e)?
            .0
            .map_err(|e| e.to_string())?;
    }
    s.dive_in(IslandId(1), 5.0).map_err(e)?;
    s.pose(Vec2::new(0.2, 0.1), 0.3, 6.0).map_err(e)?;
    s.submit_blocking(&provider, "campus shuttle", 7.0)
        .map_err(e)?
        .0
        .map_err(|e| e.to_string())?;
    s.dive_out(8.0).map_err(e)?;
    s.end(9.0).map_err(e)?;
    Ok(())
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("session.jsonl");
    worked_session(&path)?;
    let first = SessionFile::load(&path).map_err(|e| e.to_string())?;
    let second = SessionFile::load(&path).map_err(|e| e.to_string())?;
    let (a, b) = (
        first.replay().map_err(|e| e.to_string())?,
        second.replay().map_err(|e| e.to_string())?,
    );
    let report = |f: &SessionFile| {
        let r = SessionAnalysis::from_events(&f.events, None).report();
        (r.to_text(), r.to_json())
    };
    let states_equal =
        a == b && serde_json::to_string(&a).unwrap() == serde_json::to_string(&b).unwrap();
    ensure(
        states_equal
            && report(&first) == report(&second)
            && first.to_text() == std::fs::read_to_string(&path).unwrap(),
        format!(
            "{} events, states and reports identical={}",
            first.events.len(),
            states_equal
        ),
    )
}

fn teleport_alignment() -> Check {
    let topic = TopicConfig::preset("study1-health").unwrap();
    let provider = MockProvider::new(topic.keyword_table().unwrap());
    let mut session = Session::new(SessionConfig::new(topic.clone())).map_err(|e| e.to_string())?;
    for (i, entry) in topic.mock.as_ref().unwrap().keywords.iter().enumerate() {
        session
            .submit_blocking(&provider, &entry.keyword, i as f64)
            .map_err(|e| e.to_string())?
            .0
            .map_err(|e| e.to_string())?;
    }
    let islands = session.snapshot().islands.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut worst_pos, mut worst_angle) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let island = &islands[rng.random_range(0..islands.len())];
        let user = UserPose {
            room_position: Vec2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)),
            world_position: Vec2::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0)),
            heading: rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
            mode: Mode::Immersed(island.id),
        };
        let transform = align_for_teleport(island, &user);
        let entry = transform.apply(island.pathway.entry_point());
        let tangent = transform.apply_direction(island.pathway.entry_tangent());
        worst_pos = worst_pos.max(entry.distance(user.world_position));
        worst_angle = worst_angle.max(angle_between(tangent.angle(), user.heading));
    }
    ensure(
        worst_pos < 1e-9 && worst_angle < 1e-9 && islands.len() > 1,
        format!("max |entry-user|={worst_pos:.3e} max angle={worst_angle:.3e}"),
    )
}

fn tree_cap() -> Check {
    let topic = TopicConfig::preset("study2-sustainability").unwrap();
    let provider = MockProvider::new(topic.keyword_table().unwrap());
    let mut session = Session::new(SessionConfig::new(topic)).map_err(|e| e.to_string())?;
    for i in 0..9 {
        session
            .submit_blocking(&provider, &format!("bike racks near hall {i}"), i as f64)
            .map_err(|e| e.to_string())?
            .0
            .map_err(|e| e.to_string())?;
    }
    let state: &SceneState = session.snapshot();
    let island = &state.islands[0];
    let placed = island
        .trees
        .iter()
        .filter(|t| t.slot != Slot::Overflow)
        .count();
    let overflow = island.trees.len() - placed;
    let fluency = session.metrics().fluency;
    ensure(
        state.islands.len() == 1 && placed == 8 && overflow == 1 && fluency == 9,
        format!("placed={placed} overflow={overflow} fluency={fluency}"),
    )
}

fn prompt_golden() -> Check {
    let health = [
        "Nutrition Management",
        "Exercise Promotion",
        "Health Monitoring",
        "Rewards & Incentives",
        "Mental Health Care",
        "Health Education",
        "Digital Utilization",
    ];
    let communication = [
        "Digital Interaction Tools",
        "Card & Board Tools",
        "Events & Workshops",
        "Collaborative Activities",
        "Content Sharing Activities",
        "Space & Environment",
        "Experience & Practice Activities",
        "Incentive & Reward Systems",
    ];
    let sustainability = [
        "Energy Saving",
        "Resource & Waste Management",
        "Transportation & Mobility",
        "Space Design & Greening",
        "Eco-Friendly Diet",
        "Education & Campaign",
        "Digital Monitoring",
    ];
    let first_study_examples = [
        "Digital Interaction Tools;touch screen quiz events",
        "Space & Environment;quiet zones and open zones combined",
        "Mental Health Care;meditation app sharing for stress management",
    ];
    let second_study_examples = [
        "Energy Saving;night patrol waste prevention",
        "Digital Monitoring;real-time resource usage disclosure",
    ];
    let cases: [(&str, &[&str], &[&str]); 3] = [
        ("study1-health", &health, &first_study_examples),
        (
            "study1-communication",
            &communication,
            &first_study_examples,
        ),
        (
            "study2-sustainability",
            &sustainability,
            &second_study_examples,
        ),
    ];
    let mut missing = Vec::new();
    for (preset, seeds, outputs) in cases {
        let topic = TopicConfig::preset(preset).map_err(|e| e.to_string())?;
        let prompt = build_prompt(&topic, &[], "an idea").map_err(|e| e.to_string())?;
        if !prompt.contains(FORMAT_RULE) || FORMAT_RULE != "Output must be \"CATEGORY;SUMMARY\"." {
            missing.push(format!("{preset}: format rule"));
        }
        for seed in seeds {
            if !prompt.contains(&format!("- {seed}\n")) {
                missing.push(format!("{preset}: seed {seed}"));
            }
        }
        for output in outputs {
            if !prompt.contains(&format!("output: {output}")) {
                missing.push(format!("{preset}: example {output}"));
            }
        }
        if !prompt.trim_end().ends_with("output:") {
            missing.push(format!("{preset}: query tail"));
        }
    }
    ensure(
        missing.is_empty(),
        if missing.is_empty() {
            "3 presets".into()
        } else {
            missing.join(", ")
        },
    )
}

async fn ws_latency() -> Check {
    let topic = TopicConfig::preset("study2-sustainability").unwrap();
    let hub = Hub::new(HubConfig {
        provider: Arc::new(MockProvider::new(topic.keyword_table().unwrap())),
        topic,
        params: LayoutParams::default(),
        transition: TransitionMode::Dive,
        log_dir: None,
        durability: Durability::Flush,
    });
    let id = hub.create_session().await.map_err(|e| e.to_string())?;
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0")
        .await
        .map_err(|e| e.to_string())?;
    let addr = listener.local_addr().unwrap();
    let listener = axum::serve::ListenerExt::tap_io(listener, |tcp| {
        let _ = tcp.set_nodelay(true);
    });
    tokio::spawn(async move { axum::serve(listener, router(hub)).await });
    let (mut ws, _) = tokio_tungstenite::connect_async_with_config(
        format!("ws://{addr}/sessions/{id}/ws"),
        None,
        true,
    )
    .await
    .map_err(|e| e.to_string())?;

    let ideas = [
        "turn off lights",
        "bike racks",
        "vegan menu",
        "recycling bins",
        "solar panels",
    ];
    let mut samples = Vec::with_capacity(1000);
    for i in 0..1000 {
        let message = ClientMessage::SubmitUtterance {
            transcript: format!("{} {i}", ideas[i % ideas.len()]),
        };
        let sent = Instant::now();
        ws.send(Message::text(serde_json::to_string(&message).unwrap()))
            .await
            .map_err(|e| e.to_string())?;
        loop {
            let frame = tokio::time::timeout(Duration::from_secs(5), ws.next())
                .await
                .map_err(|_| format!("message {i}: no tree_added within 5 s"))?
                .ok_or("socket closed")?
                .map_err(|e| e.to_string())?;
            let Message::Text(text) = frame else { continue };
            let reply: ServerMessage =
                serde_json::from_str(text.as_str()).map_err(|e| e.to_string())?;
            if let ServerMessage::SceneDelta { events, .. } = &reply {
                if events.iter().any(|e| e.kind.name() == "tree_added") {
                    samples.push(sent.elapsed());
                    break;
                }
            }
        }
    }
    samples.sort();
    let p95 = samples[samples.len() * 95 / 100 - 1];
    ensure(
        p95 < Duration::from_millis(100),
        format!(
            "p95={p95:?} max={:?} n={}",
            samples.last().unwrap(),
            samples.len()
        ),
    )
}

fn main() {
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()
        .unwrap();
    let checks: Vec<Criterion> = vec![
        ("context switch rate", Box::new(context_switches)),
        ("same-semantic-category ratio", Box::new(ssc_values)),
        ("in-island idea share", Box::new(in_island_share)),
        ("overview time fraction", Box::new(overview_fraction)),
        (
            "organize-and-place equivalence",
            Box::new(organize_equivalence),
        ),
        ("replay determinism", Box::new(determinism)),
        ("teleport alignment", Box::new(teleport_alignment)),
        ("tree cap and overflow", Box::new(tree_cap)),
        ("prompt contents", Box::new(prompt_golden)),
        (
            "submit-to-tree latency",
            Box::new(move || runtime.block_on(ws_latency())),
        ),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
