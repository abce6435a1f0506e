//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use serde_json::Value;
use synpanel::elicitation::{
    run_panel, Embedder, EmbeddingCache, MockChatProvider, MockEmbedder, PanelContext,
    RaterExamples, ResponseCache, RetryPolicy, RunConfig, Stage, RATER_TEMPERATURE, RATER_TOP_P,
};
use synpanel::metrics::{evaluate, ks_similarity, RetestResult};
use synpanel::panelio::{default_anchor_sets, load_report, report_to_string};
use synpanel::parametric::{synthetic_copy, ParametricPanel, ParametricSpec};
use synpanel::ssr::{
    apply_temperature, average_pmfs, cosine_similarity, pmf_from_similarities, score_response,
    AnchorSet, EmbeddingVector, SsrParams,
};
use synpanel::{Corpus, LikertRating, Method, ResponsePmf, SCALE_POINTS};

type Outcome = Result<String, String>;
type Check = fn() -> Outcome;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

// 1 -------------------------------------------------------------------------

fn ssr_oracle() -> Outcome {
    let gammas = [0.2, 0.4, 0.6, 0.8, 1.0];
    let p0 = pmf_from_similarities(&gammas, 0.0).map_err(|e| e.to_string())?;
    ensure(close(p0.probs(), &[0.0, 0.1, 0.2, 0.3, 0.4], 1e-12), || {
        format!("eps=0 gave {:?}", p0.probs())
    })?;
    let p2 = pmf_from_similarities(&gammas, 0.2).map_err(|e| e.to_string())?;
    let expected = [0.2, 0.2, 0.4, 0.6, 0.8].map(|m| m / 2.2);
    ensure(close(p2.probs(), &expected, 1e-12), || {
        format!("eps=0.2 gave {:?}", p2.probs())
    })?;
    Ok("eps=0 and eps=0.2 within 1e-12".into())
}

// 2 -------------------------------------------------------------------------

const CASES: u32 = 10_000;

fn runner() -> TestRunner {
    let config = Config {
        cases: CASES,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn gammas() -> impl Strategy<Value = [f64; SCALE_POINTS]> {
    prop::array::uniform5(-1.0f64..1.0)
}

/// Random pmfs, a third of their entries zero on average.
fn pmf() -> impl Strategy<Value = ResponsePmf> {
    prop::array::uniform5(prop_oneof![1 => Just(0.0), 2 => 1e-6f64..1.0])
        .prop_filter("some mass", |w| w.iter().any(|&x| x > 0.0))
        .prop_map(|w| ResponsePmf::from_weights(w).expect("positive weights"))
}

fn valid(p: &ResponsePmf) -> Result<(), TestCaseError> {
    prop_assert!(p.check().is_ok(), "invalid pmf {:?}", p.probs());
    let sum: f64 = p.probs().iter().sum();
    prop_assert!((sum - 1.0).abs() <= 1e-9 && p.probs().iter().all(|&x| x >= 0.0));
    Ok(())
}

fn unique_max(xs: &[f64]) -> Option<usize> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[b].total_cmp(&xs[a]));
    (xs[order[0]] - xs[order[1]] > 1e-9).then_some(order[0])
}

fn run_property(
    name: &str,
    run: impl FnOnce(&mut TestRunner) -> Result<(), String>,
    failures: &mut Vec<String>,
) {
    let mut r = runner();
    if let Err(e) = run(&mut r) {
        failures.push(format!("{name}: {e}"));
    }
}

fn property_suite() -> Outcome {
    let start = Instant::now();
    let mut failures = Vec::new();

    run_property(
        "closure",
        |r| {
            r.run(
                &(
                    gammas(),
                    0.0f64..2.0,
                    pmf(),
                    0.01f64..50.0,
                    prop::collection::vec(pmf(), 1..8),
                ),
                |(g, eps, p, t, ps)| {
                    valid(&pmf_from_similarities(&g, eps).unwrap())?;
                    valid(&apply_temperature(&p, t).unwrap())?;
                    valid(&average_pmfs(&ps).unwrap())?;
                    Ok(())
                },
            )
            .map_err(|e| e.to_string())
        },
        &mut failures,
    );

    run_property(
        "argmax",
        |r| {
            r.run(&gammas(), |g| {
                if let Some(top) = unique_max(&g) {
                    prop_assert_eq!(
                        pmf_from_similarities(&g, 0.0).unwrap().argmax().index(),
                        top
                    );
                }
                Ok(())
            })
            .map_err(|e| e.to_string())
        },
        &mut failures,
    );

    run_property(
        "shift",
        |r| {
            r.run(&(gammas(), -1.0f64..1.0, 0.0f64..1.0), |(g, c, eps)| {
                let spread = g.iter().copied().fold(f64::MIN, f64::max)
                    - g.iter().copied().fold(f64::MAX, f64::min);
                prop_assume!(spread > 1e-3);
                let a = pmf_from_similarities(&g, eps).unwrap();
                let b = pmf_from_similarities(&g.map(|x| x + c), eps).unwrap();
                prop_assert!(
                    close(a.probs(), b.probs(), 1e-12),
                    "{:?} vs {:?}",
                    a.probs(),
                    b.probs()
                );
                Ok(())
            })
            .map_err(|e| e.to_string())
        },
        &mut failures,
    );

    run_property(
        "entropy monotone in T",
        |r| {
            r.run(
                &(pmf(), prop::collection::vec(0.02f64..50.0, 2..8)),
                |(p, mut ts)| {
                    ts.sort_by(f64::total_cmp);
                    let hs: Vec<f64> = ts
                        .iter()
                        .map(|&t| apply_temperature(&p, t).unwrap().entropy())
                        .collect();
                    for w in hs.windows(2) {
                        prop_assert!(w[1] >= w[0] - 1e-12, "entropies {:?} at {:?}", hs, ts);
                    }
                    Ok(())
                },
            )
            .map_err(|e| e.to_string())
        },
        &mut failures,
    );

    run_property(
        "T=1 identity",
        |r| {
            r.run(&pmf(), |p| {
                let q = apply_temperature(&p, 1.0).unwrap();
                prop_assert!(p
                    .probs()
                    .iter()
                    .zip(q.probs())
                    .all(|(a, b)| a.to_bits() == b.to_bits()));
                Ok(())
            })
            .map_err(|e| e.to_string())
        },
        &mut failures,
    );

    run_property(
        "support",
        |r| {
            r.run(&(pmf(), 0.01f64..50.0, gammas()), |(p, t, g)| {
                let q = apply_temperature(&p, t).unwrap();
                for (a, b) in p.probs().iter().zip(q.probs()) {
                    prop_assert!(*a > 0.0 || *b == 0.0);
                }
                if g.iter().any(|&x| x != g[0]) {
                    let min = g.iter().copied().fold(f64::MAX, f64::min);
                    let l = g.iter().position(|&x| x == min).unwrap();
                    prop_assert_eq!(pmf_from_similarities(&g, 0.0).unwrap().probs()[l], 0.0);
                }
                Ok(())
            })
            .map_err(|e| e.to_string())
        },
        &mut failures,
    );

    run_property(
        "cosine scale invariance",
        |r| {
            let vecs = (1usize..16).prop_flat_map(|d| {
                (
                    prop::collection::vec(-1.0f64..1.0, d),
                    prop::collection::vec(-1.0f64..1.0, d),
                )
            });
            r.run(&(vecs, 1e-3f64..1e3, 1e-3f64..1e3), |((u, v), a, b)| {
                let norm = |x: &[f64]| x.iter().map(|c| c * c).sum::<f64>().sqrt();
                prop_assume!(norm(&u) > 1e-3 && norm(&v) > 1e-3);
                let base = cosine_similarity(
                    &EmbeddingVector::new(u.clone()).unwrap(),
                    &EmbeddingVector::new(v.clone()).unwrap(),
                )
                .unwrap();
                let au = EmbeddingVector::new(u.iter().map(|x| x * a).collect()).unwrap();
                let bv = EmbeddingVector::new(v.iter().map(|x| x * b).collect()).unwrap();
                let scaled = cosine_similarity(&au, &bv).unwrap();
                prop_assert!((base - scaled).abs() <= 1e-12, "{} vs {}", base, scaled);
                Ok(())
            })
            .map_err(|e| e.to_string())
        },
        &mut failures,
    );

    let elapsed = start.elapsed();
    ensure(failures.is_empty(), || failures.join("; "))?;
    ensure(elapsed < Duration::from_secs(10), || {
        format!("took {elapsed:.1?}")
    })?;
    Ok(format!("7 properties x {CASES} cases in {elapsed:.1?}"))
}

// 3 -------------------------------------------------------------------------

fn delta(r: u8) -> ResponsePmf {
    ResponsePmf::delta(LikertRating::try_from(r).unwrap())
}

fn ks_oracle() -> Outcome {
    let k = ks_similarity(&ResponsePmf::uniform(), &delta(5));
    ensure((k - 0.2).abs() <= 1e-12, || {
        format!("uniform vs delta(5) = {k}")
    })?;
    let p = ResponsePmf::new([0.05, 0.15, 0.3, 0.3, 0.2]).unwrap();
    ensure(ks_similarity(&p, &p) == 1.0, || "identity is not 1".into())?;
    // Moving mass from rating 5 towards rating 1 can only lower similarity
    // to delta(5).
    let mut last = f64::INFINITY;
    for i in 0..100 {
        let w = i as f64 / 99.0;
        let mix = ResponsePmf::new([w, 0.0, 0.0, 0.0, 1.0 - w]).unwrap();
        let s = ks_similarity(&mix, &delta(5));
        ensure(s < last || (i == 0 && s == 1.0), || {
            format!("not monotone at w={w}: {s} after {last}")
        })?;
        ensure((s - (1.0 - w)).abs() <= 1e-12, || format!("w={w}: {s}"))?;
        last = s;
    }
    Ok("0.2, 1 and 100 mixture weights".into())
}

// 4 -------------------------------------------------------------------------

fn embedded_default_sets(
    cfg: &RunConfig,
    embedder: &MockEmbedder,
) -> Result<Vec<AnchorSet>, String> {
    let cache = EmbeddingCache::in_memory();
    Embedder {
        provider: embedder,
        model: &cfg.embed_model,
        cache: &cache,
        retry: RetryPolicy::immediate(1),
    }
    .embed_anchor_sets(&default_anchor_sets())
    .map_err(|e| e.to_string())
}

fn self_anchor() -> Outcome {
    let cfg = RunConfig::default();
    let sets = embedded_default_sets(&cfg, &MockEmbedder::default())?;
    let mut hits = 0;
    let mut total = 0;
    for set in &sets {
        for (r, v) in set.embeddings().expect("embedded").iter().enumerate() {
            let scored = score_response(v, std::slice::from_ref(set), &SsrParams::default())
                .map_err(|e| e.to_string())?;
            total += 1;
            if scored.final_pmf.argmax().index() == r {
                hits += 1;
            }
        }
    }
    ensure(total == 30 && hits == 30, || format!("{hits}/{total}"))?;
    Ok(format!("{hits}/{total}"))
}

// 5 -------------------------------------------------------------------------

fn cli(args: &[&str]) -> Result<(), String> {
    let mut argv = vec!["synpanel"];
    argv.extend_from_slice(args);
    synpanel_cli::run_from(argv).map_err(|e| format!("synpanel {}: {e}", args.join(" ")))
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn retest(dir: &Path, real: &Path, synth: &Path, name: &str) -> Result<(f64, Duration), String> {
    let out = dir.join(format!("{name}.json"));
    let start = Instant::now();
    cli(&[
        "retest",
        "--corpus",
        s(real),
        "--synthetic",
        s(synth),
        "--out",
        s(&out),
        "--iterations",
        "2000",
        "--seed",
        "1",
    ])?;
    let elapsed = start.elapsed();
    let result: RetestResult = load_report("retest", &out).map_err(|e| e.to_string())?;
    Ok((result.rho.ok_or("rho undefined")?, elapsed))
}

fn correlation_oracle() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let real = d.join("real.json");
    let copy = d.join("copy.json");
    let rep = d.join("replicate.json");
    cli(&[
        "parametric",
        "--out",
        s(&real),
        "--copy",
        s(&copy),
        "--replicate",
        s(&rep),
    ])?;

    let (rho_copy, t_copy) = retest(d, &real, &copy, "copy")?;
    let (rho_rep, t_rep) = retest(d, &real, &rep, "replicate")?;
    let mut degraded = Vec::new();
    for noise in ["0.05", "0.1", "0.2"] {
        let noisy = d.join(format!("noisy-{noise}.json"));
        let real_again = d.join(format!("real-{noise}.json"));
        cli(&[
            "parametric",
            "--out",
            s(&real_again),
            "--replicate",
            s(&noisy),
            "--noise",
            noise,
        ])?;
        degraded.push(retest(d, &real, &noisy, &format!("noisy-{noise}"))?.0);
    }

    // The literal copy is the oracle. An exchangeable replicate is reported
    // for reference only: its rho scatters too widely between panels at this
    // size to be asserted.
    let slowest = t_copy.max(t_rep);
    let mut chain = vec![rho_copy, rho_rep];
    chain.extend(&degraded);
    let monotone = chain.windows(2).all(|w| w[1] < w[0]);
    let detail = format!(
        "copy rho={rho_copy:.3}; replicate rho={rho_rep:.3}; noise 0.05/0.1/0.2 rho={:.3}/{:.3}/{:.3}; retest {slowest:.1?}",
        degraded[0], degraded[1], degraded[2]
    );
    let mut problems = Vec::new();
    if !(0.95..=1.05).contains(&rho_copy) {
        problems.push("copy rho outside [0.95, 1.05]");
    }
    if !monotone {
        problems.push("degraded rho not strictly decreasing");
    }
    if slowest >= Duration::from_secs(60) {
        problems.push("retest slower than 60 s");
    }
    if problems.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{}; {detail}", problems.join(", ")))
    }
}

// 6 -------------------------------------------------------------------------

fn read(p: &Path) -> Result<Vec<u8>, String> {
    std::fs::read(p).map_err(|e| format!("{}: {e}", p.display()))
}

fn read_json(p: &Path) -> Result<Value, String> {
    serde_json::from_slice(&read(p)?).map_err(|e| format!("{}: {e}", p.display()))
}

fn line_count(p: &Path) -> Result<usize, String> {
    Ok(read(p)?.iter().filter(|&&b| b == b'\n').count())
}

fn end_to_end() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let real = d.join("real.json");
    let cache = d.join("cache");
    cli(&[
        "parametric",
        "--out",
        s(&real),
        "--surveys",
        "3",
        "--respondents",
        "20",
        "--seed",
        "3",
    ])?;

    let run = |tag: &str| -> Result<(PathBuf, PathBuf), String> {
        let synth = d.join(format!("synth-{tag}.json"));
        let report = d.join(format!("report-{tag}.json"));
        cli(&[
            "simulate",
            "--corpus",
            s(&real),
            "--out",
            s(&synth),
            "--mock",
            "--cache-dir",
            s(&cache),
            "--seed",
            "11",
        ])?;
        cli(&[
            "evaluate",
            "--corpus",
            s(&real),
            "--synthetic",
            s(&synth),
            "--out",
            s(&report),
            "--iterations",
            "200",
            "--seed",
            "11",
        ])?;
        Ok((synth, report))
    };
    let (synth1, report1) = run("first")?;
    let cached_lines = line_count(&cache.join("responses.jsonl"))?;
    let (synth2, report2) = run("second")?;

    ensure(read(&synth1)? == read(&synth2)?, || {
        "synthetic corpora differ".into()
    })?;
    ensure(read(&report1)? == read(&report2)?, || {
        "evaluation reports differ".into()
    })?;
    let log = read_json(&d.join("synth-second.run.json"))?;
    let chat_calls = log["report"]["chat_calls"].as_u64();
    let embed_misses = log["report"]["embedding_cache"]["misses"].as_u64();
    ensure(chat_calls == Some(0) && embed_misses == Some(0), || {
        format!("second run made {chat_calls:?} chat and {embed_misses:?} embedding calls")
    })?;
    ensure(
        line_count(&cache.join("responses.jsonl"))? == cached_lines,
        || "cache log grew on rerun".into(),
    )?;
    let first = read_json(&d.join("synth-first.run.json"))?;
    Ok(format!(
        "identical corpus and report; provider calls {} then 0",
        first["report"]["chat_calls"].as_u64().unwrap_or(0)
    ))
}

// 7 -------------------------------------------------------------------------

fn small_real() -> Corpus {
    ParametricPanel::generate(ParametricSpec {
        surveys: 3,
        respondents: 8,
        seed: 5,
        ..Default::default()
    })
    .real()
}

fn run_method(method: Method, chat: &MockChatProvider) -> Result<Corpus, String> {
    let cfg = RunConfig {
        method,
        llm_temperature: 0.9,
        top_p: 0.8,
        ..Default::default()
    };
    let embed = MockEmbedder::default();
    let sets = embedded_default_sets(&cfg, &embed)?;
    let embeddings = EmbeddingCache::in_memory();
    let responses = ResponseCache::in_memory();
    let examples = RaterExamples::default();
    let ctx = PanelContext {
        config: &cfg,
        chat,
        responses: &responses,
        embedder: Some(Embedder {
            provider: &embed,
            model: &cfg.embed_model,
            cache: &embeddings,
            retry: RetryPolicy::immediate(3),
        }),
        anchor_sets: &sets,
        rater_examples: &examples,
        retry: RetryPolicy::immediate(3),
    };
    let real = small_real();
    let mut out = real.clone();
    out.surveys.clear();
    for survey in &real.surveys {
        let outcome = run_panel(survey, &ctx).map_err(|e| e.to_string())?;
        if !outcome.report.errors.is_empty() {
            return Err(format!(
                "{method}: {} record errors",
                outcome.report.errors.len()
            ));
        }
        out.surveys.push(outcome.survey);
    }
    Ok(out)
}

fn records(c: &Corpus) -> impl Iterator<Item = &synpanel::ResponseRecord> {
    c.surveys.iter().flat_map(|s| s.responses.iter())
}

fn pipeline_contracts() -> Outcome {
    let dlr = run_method(Method::Dlr, &MockChatProvider::default())?;
    let n_dlr = records(&dlr).count();
    ensure(n_dlr > 0, || "no DLR records".into())?;
    for r in records(&dlr) {
        let rating = r.final_pmf.as_delta();
        ensure(
            rating.is_some() && rating == r.direct_rating && r.per_set_pmfs.is_none(),
            || format!("DLR record for {} is not a delta", r.consumer_id),
        )?;
    }

    let ssr = run_method(Method::Ssr, &MockChatProvider::default())?;
    let mut n_ssr = 0;
    for r in records(&ssr) {
        let sets = r
            .per_set_pmfs
            .as_ref()
            .ok_or("SSR record without per-set pmfs")?;
        ensure(sets.len() == 6, || format!("{} per-set pmfs", sets.len()))?;
        let mean: Vec<f64> = (0..SCALE_POINTS)
            .map(|i| sets.iter().map(|p| p.probs()[i]).sum::<f64>() / sets.len() as f64)
            .collect();
        ensure(close(r.final_pmf.probs(), &mean, 1e-12), || {
            format!("final pmf of {} is not the mean", r.consumer_id)
        })?;
        n_ssr += 1;
    }

    let chat = MockChatProvider::default();
    let flr = run_method(Method::Flr, &chat)?;
    let rater: Vec<_> = chat
        .calls()
        .into_iter()
        .filter(|c| c.tag.stage == Stage::Rate)
        .collect();
    ensure(!rater.is_empty(), || "rater never called".into())?;
    for c in &rater {
        ensure(
            c.temperature == RATER_TEMPERATURE && c.top_p == RATER_TOP_P,
            || format!("rater called with T={} top_p={}", c.temperature, c.top_p),
        )?;
    }
    ensure(RATER_TEMPERATURE == 0.3 && RATER_TOP_P == 1.0, || {
        "rater constants changed".into()
    })?;
    ensure(
        records(&flr).all(|r| r.direct_rating.is_some() && r.raw_text.is_some()),
        || "FLR record without text or rating".into(),
    )?;
    Ok(format!(
        "{n_dlr} DLR deltas, {n_ssr} SSR records x 6 sets, {} rater calls at T=0.3 top_p=1",
        rater.len()
    ))
}

// 8 -------------------------------------------------------------------------

fn report_schema() -> Outcome {
    let real = ParametricPanel::generate(ParametricSpec {
        surveys: 12,
        respondents: 60,
        seed: 8,
        ..Default::default()
    })
    .real();
    let copy = synthetic_copy(&real);
    let report = evaluate(&real, &copy, 200, 8).map_err(|e| e.to_string())?;
    let text = report_to_string("evaluation", &report).map_err(|e| e.to_string())?;
    let json: Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let summary = &json["report"]["summary"];
    for key in ["rho", "k_xy", "r_xy", "c_xy"] {
        ensure(summary.get(key).is_some(), || {
            format!("summary lacks {key}")
        })?;
    }
    for side in ["real_pi", "synthetic_pi"] {
        for key in ["mean", "std"] {
            ensure(
                summary[side].get(key).and_then(Value::as_f64).is_some(),
                || format!("summary lacks {side}.{key}"),
            )?;
        }
    }
    ensure(
        json["report"]["surveys"].as_array().map(Vec::len) == Some(12),
        || "one row per survey expected".into(),
    )?;
    let s = &report.summary;
    ensure(
        s.k_xy == 1.0 && s.c_xy == 1.0 && s.r_xy == Some(1.0),
        || format!("copy gave K={} C={} R={:?}", s.k_xy, s.c_xy, s.r_xy),
    )?;
    ensure(
        summary["k_xy"].as_f64() == Some(1.0)
            && summary["c_xy"].as_f64() == Some(1.0)
            && summary["r_xy"].as_f64() == Some(1.0),
        || "serialized K, C, R are not exactly 1".into(),
    )?;
    Ok(format!(
        "rho, K, R, C, E[PI] +- std present; copy K=C=R=1 ({})",
        report.summary_line()
    ))
}

// ---------------------------------------------------------------------------

fn main() {
    let criteria: [(u32, &str, Check); 8] = [
        (1, "ssr math oracle", ssr_oracle),
        (2, "property suite", property_suite),
        (3, "ks oracle", ks_oracle),
        (4, "self-anchor argmax", self_anchor),
        (5, "correlation attainment oracle", correlation_oracle),
        (6, "end-to-end determinism", end_to_end),
        (7, "pipeline contracts", pipeline_contracts),
        (8, "evaluation report schema", report_schema),
    ];
    let mut failed = 0;
    for (n, name, check) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n}: PASS  {name}: {detail} [{secs:.2}s]"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n}: FAIL  {name}: {detail} [{secs:.2}s]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
