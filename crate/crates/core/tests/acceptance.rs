//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use cogplan_core::evalkit::{
    bleu, build_report, claim_precision_recall, compare, rouge_l, token_f1, Claim, ExactMatcher, MetricsConfig,
    SentenceExtractor,
};
use cogplan_core::expert::{ExpertRole, PromptSet, RecordingExpert, Script, ScriptStep, ScriptedExpert};
use cogplan_core::harness::{
    dataset_stats, load_dataset, parse_dataset, run_pipeline, BenchSample, HopBucket, PipelineMode,
};
use cogplan_core::planner::{run_plan, Backends, Paradigm, PlannerConfig};
use cogplan_core::retrieval::{
    CachedSearch, LocalCorpus, RawHit, RetrievalLimits, Retriever, SearchBackend, SearchError,
};
use cogplan_core::state::{ImageRef, MultimodalQuery, PlanTrace, RetrievalAction, Termination};
use cogplan_core::tokens;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if let false = $cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn demo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../demo")
}

fn corpus() -> LocalCorpus {
    LocalCorpus::load(&demo()).expect("demo corpus loads")
}

fn dataset() -> Vec<BenchSample> {
    load_dataset(&demo().join("dataset.jsonl")).expect("demo dataset loads")
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_cogplan"))
        .args(args)
        .env_remove("COGPLAN_EXPERT_URL")
        .env_remove("COGPLAN_SEARCH_URL")
        .output()
        .expect("cli runs")
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

const SALES_QUESTION: &str = "How many copies has the game in this screenshot sold compared with Black Myth: Wukong?";

fn sales_query() -> MultimodalQuery {
    let image = ImageRef::parse(demo().join("assets/astro_bot_screenshot.png").to_string_lossy()).unwrap();
    MultimodalQuery::new("wukong", SALES_QUESTION, Some(image))
}

// 1 ------------------------------------------------------------------------

fn screenshot_replay() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let image = demo().join("assets/astro_bot_screenshot.png");
    let script = demo().join("experts/wukong.json");
    let corpus_dir = demo();
    let mut outputs = Vec::new();
    let mut slowest = Duration::ZERO;
    for run in 0..3 {
        let out = dir.path().join(format!("run{run}.jsonl"));
        let started = Instant::now();
        let result = cli(&[
            "plan",
            "--mode",
            "cogplanner-sequential",
            "--query",
            SALES_QUESTION,
            "--image",
            path(&image),
            "--id",
            "wukong",
            "--expert-script",
            path(&script),
            "--corpus",
            path(&corpus_dir),
            "--out",
            path(&out),
        ]);
        slowest = slowest.max(started.elapsed());
        ensure!(result.status.success(), "plan exited {:?}: {}", result.status, String::from_utf8_lossy(&result.stderr));
        outputs.push(std::fs::read(&out).unwrap());
    }
    ensure!(outputs.iter().all(|o| o == &outputs[0]), "traces differ across runs");
    ensure!(slowest < Duration::from_secs(5), "slowest run took {slowest:?}");

    let trace: PlanTrace = serde_json::from_slice(outputs[0].split(|&b| b == b'\n').next().unwrap()).unwrap();
    let actions: Vec<_> = trace.steps.iter().map(|s| s.decision.action).collect();
    ensure!(
        actions == [RetrievalAction::ImageSearch, RetrievalAction::TextSearch, RetrievalAction::NoSearch],
        "decision chain {actions:?}"
    );
    // step 1 refines the single question, step 2 decomposes it
    let q1 = trace.steps[0].decision.query_set.as_slice();
    let q2 = trace.steps[1].decision.query_set.as_slice();
    ensure!(q1.len() == 1 && q1[0] != SALES_QUESTION, "step 1 is not a refinement: {q1:?}");
    ensure!(q2.len() == 2, "step 2 has {} sub-queries", q2.len());
    ensure!(trace.terminated_by == Termination::NoSearch, "terminated by {:?}", trace.terminated_by);
    ensure!(!trace.steps[0].retrieved.is_empty() && !trace.steps[1].retrieved.is_empty(), "retrieval came back empty");
    Ok(format!("chain image→text(2 sub-queries)→none, 3 identical runs, slowest {slowest:?}"))
}

// 2 ------------------------------------------------------------------------

fn step(iteration: usize, reformulation: Option<&[&str]>, action: RetrievalAction) -> ScriptStep {
    ScriptStep {
        iteration,
        reformulation: reformulation.map(|r| r.iter().map(|s| s.to_string()).collect()),
        action,
    }
}

fn paradigm_semantics() -> Outcome {
    let corpus = corpus();
    let prompts = PromptSet::default();
    let script = Script {
        steps: vec![
            step(0, Some(&["What game is shown in this screenshot?"]), RetrievalAction::ImageSearch),
            step(
                1,
                Some(&["How many copies did Astro Bot sell?", "How many copies did Black Myth Wukong sell?"]),
                RetrievalAction::TextSearch,
            ),
            step(2, Some(&["Astro Bot and Black Myth Wukong sales"]), RetrievalAction::NoSearch),
        ],
        answer: "answer".into(),
        unassisted_answer: None,
    };
    let mut checked = 0;
    for paradigm in [Paradigm::Parallel, Paradigm::Sequential] {
        let expert = RecordingExpert::new(ScriptedExpert::new(script.clone()));
        let config = PlannerConfig { paradigm, ..PlannerConfig::default() };
        let trace = run_plan(sales_query(), &config, Backends::new(&expert, &expert, &corpus, &prompts)).unwrap();
        let selections = expert.requests_for(ExpertRole::SelectAction);
        ensure!(selections.len() == trace.steps.len(), "{} selections for {} steps", selections.len(), trace.steps.len());
        for (t, request) in selections.iter().enumerate() {
            let previous: Vec<String> = if t == 0 {
                vec![SALES_QUESTION.to_string()]
            } else {
                trace.steps[t - 1].decision.query_set.as_slice().to_vec()
            };
            let reformulated = trace.steps[t].decision.query_set.as_slice().to_vec();
            ensure!(previous != reformulated, "step {t}: reformulation did not change the queries");
            let expected = match paradigm {
                Paradigm::Parallel => &previous,
                Paradigm::Sequential => &reformulated,
            };
            ensure!(&request.meta.queries == expected, "{paradigm:?} step {t}: selector saw {:?}", request.meta.queries);
            // the original question is always shown as context; only the query list matters here
            let listed = request
                .user_text
                .split("Queries to resolve:")
                .nth(1)
                .and_then(|rest| rest.split("Evidence gathered").next())
                .unwrap_or_default();
            for q in expected {
                ensure!(listed.contains(q.as_str()), "{paradigm:?} step {t}: prompt lacks {q:?}");
            }
            let other = if expected == &previous { &reformulated } else { &previous };
            for q in other {
                ensure!(!listed.contains(q.as_str()), "{paradigm:?} step {t}: prompt lists {q:?}");
            }
            checked += 1;
        }
    }

    let identity = Script {
        steps: vec![
            step(0, None, RetrievalAction::ImageSearch),
            step(1, None, RetrievalAction::TextSearch),
            step(2, None, RetrievalAction::NoSearch),
        ],
        answer: "answer".into(),
        unassisted_answer: None,
    };
    let expert = ScriptedExpert::new(identity);
    let traces: Vec<String> = [Paradigm::Parallel, Paradigm::Sequential]
        .into_iter()
        .map(|paradigm| {
            let config = PlannerConfig { paradigm, ..PlannerConfig::default() };
            run_plan(sales_query(), &config, Backends::new(&expert, &expert, &corpus, &prompts))
                .unwrap()
                .to_json_line()
        })
        .collect();
    ensure!(traces[0] == traces[1], "identity reformulator: paradigms diverge");
    Ok(format!("{checked} selector inputs checked; identity traces identical"))
}

// 3 ------------------------------------------------------------------------

fn retrieval_constraints() -> Outcome {
    let corpus = corpus();
    let vocab: Vec<String> = corpus.vocabulary().into_iter().collect();
    let assets: Vec<ImageRef> = std::fs::read_dir(demo().join("assets"))
        .unwrap()
        .map(|e| ImageRef::parse(e.unwrap().path().to_string_lossy()).unwrap())
        .collect();
    let limits = RetrievalLimits::default();
    ensure!(
        (limits.text_top_k, limits.text_token_cap, limits.image_min, limits.image_max) == (5, 800, 3, 6),
        "default limits {limits:?}"
    );
    let retriever = Retriever::new(&corpus, limits);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut capped, mut flagged, mut text_docs) = (0, 0, 0);
    for _ in 0..100 {
        let n = rng.gen_range(1..=5);
        let query: Vec<&str> = (0..n).map(|_| vocab.choose(&mut rng).unwrap().as_str()).collect();
        let query = query.join(" ");
        let docs = retriever.text(&query, 1).unwrap();
        ensure!(docs.len() <= 5, "{query:?}: {} text docs", docs.len());
        for d in &docs {
            let count = tokens::count(&d.content);
            ensure!(count <= 800 && d.token_count == count, "{query:?}: doc {} has {count} tokens", d.source_id);
            capped += usize::from(count == 800);
        }
        text_docs += docs.len();

        let image = assets.choose(&mut rng).unwrap();
        let found = retriever.image(image, &query, 1).unwrap();
        ensure!(found.docs.len() <= 6, "{query:?}: {} image candidates", found.docs.len());
        ensure!(
            found.below_minimum == (found.docs.len() < 3),
            "{query:?}: {} candidates, below_minimum={}",
            found.docs.len(),
            found.below_minimum
        );
        flagged += usize::from(found.below_minimum);
    }
    ensure!(capped > 0, "no query exercised truncation");
    Ok(format!("100 queries, {text_docs} text docs ({capped} cut at 800), {flagged} image sets flagged below minimum"))
}

// 4 ------------------------------------------------------------------------

fn termination() -> Outcome {
    let corpus = corpus();
    let prompts = PromptSet::default();
    let action = prop::sample::select(RetrievalAction::ALL.to_vec());
    let strategy = (
        proptest::collection::vec((action, any::<bool>()), 0..7),
        any::<bool>(),
        prop::sample::select(vec![Paradigm::Parallel, Paradigm::Sequential]),
        1usize..=5,
    );
    let mut runner = TestRunner::new_with_rng(
        Config { cases: 256, failure_persistence: None, ..Config::default() },
        proptest::test_runner::TestRng::deterministic_rng(proptest::test_runner::RngAlgorithm::ChaCha),
    );
    let result = runner.run(&strategy, |(actions, with_image, paradigm, t_max)| {
        let steps = actions
            .iter()
            .enumerate()
            .map(|(i, &(action, reform))| ScriptStep {
                iteration: i,
                reformulation: reform.then(|| vec![format!("astro bot question {i}")]),
                action,
            })
            .collect();
        let expert = ScriptedExpert::new(Script { steps, answer: "a".into(), unassisted_answer: None });
        let query = if with_image { sales_query() } else { MultimodalQuery::new("wukong", SALES_QUESTION, None) };
        let backends = Backends::new(&expert, &expert, &corpus, &prompts);
        for (cap, expect_cap) in [(3, 3), (t_max, t_max)] {
            let config = PlannerConfig { paradigm, t_max: cap, ..PlannerConfig::default() };
            let trace = run_plan(query.clone(), &config, backends).unwrap();
            let n = trace.steps.len();
            prop_assert!((1..=expect_cap).contains(&n), "{n} steps with t_max {cap}");
            let last = trace.steps.last().unwrap().decision.action;
            match trace.terminated_by {
                Termination::NoSearch => prop_assert_eq!(last, RetrievalAction::NoSearch),
                Termination::IterationCap => {
                    prop_assert!(last != RetrievalAction::NoSearch);
                    prop_assert_eq!(n, cap);
                }
                Termination::Failed => prop_assert!(false, "failed trace"),
            }
            // NO_SEARCH only ever ends a plan
            prop_assert!(trace.steps[..n - 1].iter().all(|s| s.decision.action != RetrievalAction::NoSearch));
            if !with_image {
                prop_assert!(trace.steps.iter().all(|s| s.decision.action != RetrievalAction::ImageSearch));
            }
        }
        Ok(())
    });
    result.map_err(|e| e.to_string())?;
    Ok("256 random scripts, every plan stopped within t_max (≤3 by default)".into())
}

// 5 ------------------------------------------------------------------------

mod oracle {
    use std::collections::HashMap;

    pub fn tokens(text: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut current = String::new();
        for c in text.chars() {
            if c.is_alphanumeric() {
                current.extend(c.to_lowercase());
            } else if !current.is_empty() {
                out.push(std::mem::take(&mut current));
            }
        }
        if !current.is_empty() {
            out.push(current);
        }
        out
    }

    pub fn f1(pred: &str, gold: &str) -> f64 {
        let p = tokens(pred);
        let mut g = tokens(gold);
        if p.is_empty() || g.is_empty() {
            return if p.is_empty() && g.is_empty() { 1.0 } else { 0.0 };
        }
        let gold_len = g.len();
        let mut overlap = 0;
        for t in &p {
            if let Some(i) = g.iter().position(|x| x == t) {
                g.remove(i);
                overlap += 1;
            }
        }
        if overlap == 0 {
            return 0.0;
        }
        let (pr, rc) = (overlap as f64 / p.len() as f64, overlap as f64 / gold_len as f64);
        2.0 * pr * rc / (pr + rc)
    }

    fn grams(t: &[String], n: usize) -> Vec<Vec<String>> {
        (0..=t.len() - n).map(|i| t[i..i + n].to_vec()).collect()
    }

    pub fn bleu(pred: &str, refs: &[&str]) -> f64 {
        let p = tokens(pred);
        let refs: Vec<Vec<String>> = refs.iter().map(|r| tokens(r)).collect();
        if p.is_empty() || refs.is_empty() {
            return 0.0;
        }
        let max_n = p.len().min(4);
        let mut product = 1.0;
        for n in 1..=max_n {
            let pg = grams(&p, n);
            let mut seen: Vec<&Vec<String>> = Vec::new();
            let mut clipped = 0;
            for g in &pg {
                if seen.contains(&g) {
                    continue;
                }
                seen.push(g);
                let count = pg.iter().filter(|x| *x == g).count();
                let best = refs
                    .iter()
                    .filter(|r| r.len() >= n)
                    .map(|r| grams(r, n).iter().filter(|x| *x == g).count())
                    .max()
                    .unwrap_or(0);
                clipped += count.min(best);
            }
            let total = pg.len() as f64;
            product *= if clipped == 0 { 1.0 / (total + 1.0) } else { clipped as f64 / total };
        }
        let c = p.len() as i64;
        let mut r = refs[0].len() as i64;
        for candidate in refs.iter().map(|x| x.len() as i64) {
            let (d_new, d_old) = ((candidate - c).abs(), (r - c).abs());
            if d_new < d_old || (d_new == d_old && candidate < r) {
                r = candidate;
            }
        }
        let bp = if c < r { (1.0 - r as f64 / c as f64).exp() } else { 1.0 };
        bp * product.powf(1.0 / max_n as f64)
    }

    fn lcs(a: &[String], b: &[String], i: usize, j: usize, memo: &mut HashMap<(usize, usize), usize>) -> usize {
        if i == a.len() || j == b.len() {
            return 0;
        }
        if let Some(&v) = memo.get(&(i, j)) {
            return v;
        }
        let v = if a[i] == b[j] {
            1 + lcs(a, b, i + 1, j + 1, memo)
        } else {
            lcs(a, b, i + 1, j, memo).max(lcs(a, b, i, j + 1, memo))
        };
        memo.insert((i, j), v);
        v
    }

    pub fn rouge(pred: &str, reference: &str) -> f64 {
        let p = tokens(pred);
        let r = tokens(reference);
        if p.is_empty() || r.is_empty() {
            return if p.is_empty() && r.is_empty() { 1.0 } else { 0.0 };
        }
        let l = lcs(&p, &r, 0, 0, &mut HashMap::new()) as f64;
        if l == 0.0 {
            return 0.0;
        }
        let (pr, rc) = (l / p.len() as f64, l / r.len() as f64);
        2.0 * pr * rc / (pr + rc)
    }
}

fn metric_oracles() -> Outcome {
    ensure!(token_f1("the cat sat on mat", "the cat ran") == 0.5, "worked F1 value");
    ensure!((rouge_l("a b c d", "a c d") - 6.0 / 7.0).abs() < 1e-12, "worked ROUGE-L value");

    let words = ["the", "The", "cat", "sat", "on", "mat", "ran,", "a", "b", "c", "d", "Astro-Bot", "1.5M", "sold"];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let sentence = |rng: &mut ChaCha8Rng, max: usize| {
        let n = rng.gen_range(0..=max);
        (0..n).map(|_| *words.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
    };
    let mut pairs: Vec<(String, Vec<String>)> = vec![
        ("the cat sat on mat".into(), vec!["the cat ran".into()]),
        ("a b c d".into(), vec!["a c d".into()]),
        ("".into(), vec!["x".into()]),
        ("".into(), vec!["".into()]),
        ("one two three four".into(), vec!["one two three four".into()]),
    ];
    while pairs.len() < 50 {
        let pred = sentence(&mut rng, 12);
        let refs: Vec<String> = (0..rng.gen_range(1..=2)).map(|_| sentence(&mut rng, 12)).collect();
        let refs = if rng.gen_bool(0.15) { vec![pred.clone()] } else { refs };
        pairs.push((pred, refs));
    }
    let mut worst: f64 = 0.0;
    for (pred, refs) in &pairs {
        let gold = &refs[0];
        let ref_strs: Vec<&str> = refs.iter().map(String::as_str).collect();
        let checks = [
            ("token_f1", token_f1(pred, gold), oracle::f1(pred, gold)),
            ("token_f1 swapped", token_f1(gold, pred), oracle::f1(pred, gold)),
            ("rouge_l", rouge_l(pred, gold), oracle::rouge(pred, gold)),
            ("bleu", bleu(pred, &ref_strs), oracle::bleu(pred, &ref_strs)),
        ];
        for (name, got, want) in checks {
            let diff = (got - want).abs();
            worst = worst.max(diff);
            ensure!(diff <= 1e-9, "{name}({pred:?}, {refs:?}) = {got}, oracle {want}");
            ensure!((0.0..=1.0).contains(&got), "{name} out of range: {got}");
        }
    }
    Ok(format!("50 pairs, max deviation {worst:.1e}"))
}

// 6 ------------------------------------------------------------------------

fn claim_metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut pairs: Vec<(BTreeSet<u8>, BTreeSet<u8>)> = vec![
        ([1, 3].into(), [1, 2].into()),
        ([1].into(), [1, 2, 3].into()),
        ([].into(), [].into()),
        ([].into(), [2].into()),
        ([4].into(), [].into()),
    ];
    while pairs.len() < 30 {
        let mut pick = || (1..=8u8).filter(|_| rng.gen_bool(0.4)).collect::<BTreeSet<u8>>();
        pairs.push((pick(), pick()));
    }
    // surface forms differ from the normalized claim text
    let claims = |set: &BTreeSet<u8>, shout: bool| -> Vec<Claim> {
        set.iter()
            .map(|i| {
                let raw = if shout { format!("  Claim NUMBER {i}. ") } else { format!("claim number {i}") };
                Claim::new(&raw).unwrap()
            })
            .collect()
    };
    for (pred, gold) in &pairs {
        let got = claim_precision_recall(&claims(pred, true), &claims(gold, false), &ExactMatcher).unwrap();
        let common = pred.intersection(gold).count() as f64;
        let want = match (pred.len(), gold.len()) {
            (0, 0) => (1.0, 1.0),
            (0, _) => (0.0, 0.0),
            (p, 0) => (0.0 / p as f64, 0.0),
            (p, g) => (common / p as f64, common / g as f64),
        };
        ensure!(got == want, "pred {pred:?} gold {gold:?}: {got:?} vs oracle {want:?}");
    }
    let first = claim_precision_recall(&claims(&pairs[0].0, false), &claims(&pairs[0].1, false), &ExactMatcher).unwrap();
    ensure!(first == (0.5, 0.5), "worked example gave {first:?}");
    Ok("30 claim-set pairs match the set-intersection oracle".into())
}

// 7 ------------------------------------------------------------------------

fn synthetic(hops: &[u32]) -> Vec<BenchSample> {
    let lines: Vec<String> = hops
        .iter()
        .enumerate()
        .map(|(i, h)| {
            serde_json::json!({
                "id": format!("x{i}"), "query": {"text": "q"}, "hop_count": h,
                "answer_type": "close-ended", "domain": "d", "golden_answer": "a"
            })
            .to_string()
        })
        .collect();
    parse_dataset(&lines.join("\n"), Path::new(".")).unwrap()
}

fn report_structure() -> Outcome {
    let data = dataset();
    let corpus = corpus();
    let expert = ScriptedExpert::load(&demo().join("experts")).unwrap();
    let prompts = PromptSet::default();
    let traces = run_pipeline(
        &data,
        PipelineMode::CogplannerParallel,
        &PlannerConfig::default(),
        Backends::new(&expert, &expert, &corpus, &prompts),
    );
    let cfg = MetricsConfig { extractor: &SentenceExtractor, matcher: &ExactMatcher, label: "demo".into() };
    let report = build_report(&traces, &data, &cfg).unwrap();
    let json = serde_json::to_value(&report).unwrap();
    let keys: BTreeSet<&str> = json["buckets"].as_object().unwrap().keys().map(String::as_str).collect();
    ensure!(keys == BTreeSet::from(["1-hop", "2-hop", ">2-hop"]), "bucket keys {keys:?}");
    let bucket_sum: f64 = report.buckets.values().map(|b| b.fraction).sum();
    ensure!((bucket_sum - 1.0).abs() <= 1e-9, "bucket fractions sum to {bucket_sum}");
    let dist = json["action_distribution"].as_object().unwrap();
    let dist_keys: BTreeSet<&str> = dist.keys().map(String::as_str).collect();
    ensure!(dist_keys == BTreeSet::from(["image", "no", "text"]), "action keys {dist_keys:?}");
    let a = report.action_distribution;
    let sum = a.no + a.text + a.image;
    ensure!((sum - 1.0).abs() <= 1e-9, "action fractions sum to {sum}");
    for v in [a.no, a.text, a.image, report.overall.precision, report.overall.recall, report.overall.token_f1] {
        ensure!((0.0..=1.0).contains(&v), "fraction out of range: {v}");
    }
    for key in ["overall", "efficiency", "excluded"] {
        ensure!(!json[key].is_null(), "report lacks {key}");
    }
    let table = compare(std::slice::from_ref(&report));
    ensure!(
        ["1-hop", "2-hop", ">2-hop", "overall", "demo"].iter().all(|k| table.contains(k)),
        "comparison table lacks a column"
    );

    // 2 / 3 / 5 samples per bucket
    let synth = synthetic(&[1, 1, 2, 2, 2, 3, 4, 5, 6, 9]);
    let stats = dataset_stats(&synth).unwrap();
    let traces: Vec<PlanTrace> = synth
        .iter()
        .map(|s| PlanTrace {
            sample_id: s.id.clone(),
            mode: None,
            steps: vec![],
            final_answer: "a".into(),
            terminated_by: Termination::NoSearch,
            flags: vec![],
            error: None,
        })
        .collect();
    let synth_report = build_report(&traces, &synth, &cfg).unwrap();
    for (bucket, want) in [(HopBucket::One, 0.2), (HopBucket::Two, 0.3), (HopBucket::More, 0.5)] {
        ensure!(stats.hop_histogram[&bucket].fraction == want, "stats {bucket}: {}", stats.hop_histogram[&bucket].fraction);
        ensure!(synth_report.buckets[&bucket].fraction == want, "report {bucket}: {}", synth_report.buckets[&bucket].fraction);
    }
    Ok(format!(
        "demo actions no {:.3} / text {:.3} / image {:.3}; synthetic buckets 20/30/50%",
        a.no, a.text, a.image
    ))
}

// 8 ------------------------------------------------------------------------

struct Counting<B> {
    inner: B,
    calls: AtomicUsize,
}

impl<B: SearchBackend> SearchBackend for Counting<B> {
    fn text_search(&self, query: &str, k: usize) -> Result<Vec<RawHit>, SearchError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.text_search(query, k)
    }

    fn image_search(&self, image: &ImageRef, query: &str, max: usize) -> Result<Vec<RawHit>, SearchError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.image_search(image, query, max)
    }
}

fn hits_equal(a: &[RawHit], b: &[RawHit]) -> bool {
    serde_json::to_value(a).unwrap() == serde_json::to_value(b).unwrap()
}

fn cache_behavior() -> Outcome {
    let raw = corpus();
    let counting = Counting { inner: corpus(), calls: AtomicUsize::new(0) };
    let cached = CachedSearch::new(&counting, 64);
    for variant in ["Astro Bot sales", "astro bot sales", "  Astro   Bot sales ", "ASTRO BOT SALES"] {
        cached.text_search(variant, 5).unwrap();
    }
    let image = ImageRef::parse(demo().join("assets/eiffel_tower_photo.png").to_string_lossy()).unwrap();
    for _ in 0..5 {
        cached.image_search(&image, "tower", 6).unwrap();
    }
    ensure!(counting.calls.load(Ordering::SeqCst) == 2, "inner called {} times", counting.calls.load(Ordering::SeqCst));

    // observational equivalence
    let vocab: Vec<String> = raw.vocabulary().into_iter().collect();
    let assets: Vec<ImageRef> = std::fs::read_dir(demo().join("assets"))
        .unwrap()
        .map(|e| ImageRef::parse(e.unwrap().path().to_string_lossy()).unwrap())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let pool: Vec<String> = (0..40)
        .map(|_| (0..rng.gen_range(1..=3)).map(|_| vocab.choose(&mut rng).unwrap().as_str()).collect::<Vec<_>>().join(" "))
        .collect();
    let fresh = CachedSearch::new(corpus(), 16);
    for _ in 0..100 {
        let q = pool.choose(&mut rng).unwrap();
        let k = rng.gen_range(1..=6);
        ensure!(hits_equal(&fresh.text_search(q, k).unwrap(), &raw.text_search(q, k).unwrap()), "text {q:?} differs");
        let img = assets.choose(&mut rng).unwrap();
        ensure!(
            hits_equal(&fresh.image_search(img, q, k).unwrap(), &raw.image_search(img, q, k).unwrap()),
            "image {q:?} differs"
        );
    }

    // LRU eviction against a simulated LRU list
    let capacity = 4;
    let counting = Counting { inner: corpus(), calls: AtomicUsize::new(0) };
    let cached = CachedSearch::new(&counting, capacity);
    let keys: Vec<String> = (0..8).map(|i| format!("astro {i}")).collect();
    let mut lru: VecDeque<String> = VecDeque::new();
    let mut expected_misses = 0;
    for i in 0..300 {
        let key = keys.choose(&mut rng).unwrap().clone();
        let before = counting.calls.load(Ordering::SeqCst);
        cached.text_search(&key, 5).unwrap();
        let missed = counting.calls.load(Ordering::SeqCst) - before == 1;
        let oracle_miss = match lru.iter().position(|k| k == &key) {
            Some(pos) => {
                lru.remove(pos);
                false
            }
            None => {
                if lru.len() == capacity {
                    lru.pop_back();
                }
                true
            }
        };
        lru.push_front(key.clone());
        expected_misses += usize::from(oracle_miss);
        ensure!(missed == oracle_miss, "access {i} ({key}): cache miss={missed}, oracle miss={oracle_miss}");
    }
    let stats = cached.stats();
    ensure!(stats.misses as usize == expected_misses, "stats report {} misses, oracle {expected_misses}", stats.misses);
    Ok(format!("single fetch per key; 100 queries equivalent; LRU matches oracle over 300 accesses ({expected_misses} misses)"))
}

// 9 ------------------------------------------------------------------------

fn mode_contracts() -> Outcome {
    let data = dataset();
    let corpus = corpus();
    let expert = ScriptedExpert::load(&demo().join("experts")).unwrap();
    let prompts = PromptSet::default();
    let backends = Backends::new(&expert, &expert, &corpus, &prompts);
    let config = PlannerConfig::default();
    let mut fallbacks = 0;
    for mode in [PipelineMode::Origin, PipelineMode::FixedText, PipelineMode::FixedImage] {
        let traces = run_pipeline(&data, mode, &config, backends);
        ensure!(traces.len() == data.len(), "{mode}: {} traces", traces.len());
        for (t, s) in traces.iter().zip(&data) {
            ensure!(!t.failed(), "{mode} {}: failed", t.sample_id);
            ensure!(t.mode.as_deref() == Some(mode.label()), "{mode}: mode field {:?}", t.mode);
            let actions: Vec<_> = t.steps.iter().map(|s| s.decision.action).collect();
            match mode {
                PipelineMode::Origin => {
                    ensure!(t.retrieval_steps() == 0, "origin {}: {} retrieval steps", t.sample_id, t.retrieval_steps())
                }
                PipelineMode::FixedText => {
                    ensure!(actions == [RetrievalAction::TextSearch], "fixed-text {}: {actions:?}", t.sample_id)
                }
                _ if s.query.image.is_some() => {
                    ensure!(actions == [RetrievalAction::ImageSearch], "fixed-image {}: {actions:?}", t.sample_id)
                }
                _ => {
                    ensure!(
                        t.retrieval_steps() == 0 && t.flags.iter().any(|f| f == "image-fallback"),
                        "fixed-image {}: imageless sample not flagged",
                        t.sample_id
                    );
                    fallbacks += 1;
                }
            }
        }
    }
    Ok(format!("{} samples per mode, {fallbacks} flagged image fallbacks", data.len()))
}

// 10 -----------------------------------------------------------------------

fn cli_round_trip() -> Outcome {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let data = demo().join("dataset.jsonl");
    let experts = demo().join("experts");
    let corpus_dir = demo();
    let run = |args: &[&str]| -> Result<std::process::Output, String> {
        let out = cli(args);
        if out.status.code() == Some(0) {
            Ok(out)
        } else {
            Err(format!("`cogplan {}` exited {:?}: {}", args[0], out.status.code(), String::from_utf8_lossy(&out.stderr)))
        }
    };
    let stats = run(&["stats", path(&data)])?;
    ensure!(String::from_utf8_lossy(&stats.stdout).contains(">2-hop"), "stats output lacks hop buckets");
    let mut reports = Vec::new();
    for mode in PipelineMode::ALL {
        let traces = dir.path().join(format!("{mode}.jsonl"));
        let report = dir.path().join(format!("{mode}.json"));
        run(&[
            "plan",
            "--dataset",
            path(&data),
            "--mode",
            mode.label(),
            "--expert-script",
            path(&experts),
            "--corpus",
            path(&corpus_dir),
            "--cache-dir",
            path(&dir.path().join("cache")),
            "--out",
            path(&traces),
        ])?;
        run(&["eval", "--traces", path(&traces), "--dataset", path(&data), "--out", path(&report)])?;
        reports.push(report);
    }
    let mut args = vec!["compare"];
    args.extend(reports.iter().map(|r| path(r)));
    let table = run(&args)?;
    let table = String::from_utf8_lossy(&table.stdout).into_owned();
    ensure!(
        PipelineMode::ALL.iter().all(|m| table.contains(m.label())),
        "compare table lacks a mode row:\n{table}"
    );
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(60), "round trip took {elapsed:?}");
    Ok(format!("stats → plan ×5 → eval ×5 → compare in {elapsed:.2?}"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("screenshot scenario replay", screenshot_replay),
        ("paradigm semantics", paradigm_semantics),
        ("retrieval constraints", retrieval_constraints),
        ("termination", termination),
        ("metric oracle equivalence", metric_oracles),
        ("claim metrics", claim_metrics),
        ("report structure", report_structure),
        ("cache behavior", cache_behavior),
        ("mode contracts", mode_contracts),
        ("CLI round-trip", cli_round_trip),
    ];
    let mut failures = 0;
    let mut summary = BTreeMap::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(msg)
        });
        match &outcome {
            Ok(detail) => println!("criterion {:>2}: PASS  {name} — {detail}", i + 1),
            Err(why) => {
                failures += 1;
                println!("criterion {:>2}: FAIL  {name} — {why}", i + 1);
            }
        }
        summary.insert(i + 1, outcome.is_ok());
    }
    println!("{} of {} criteria passed", summary.values().filter(|ok| **ok).count(), summary.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
