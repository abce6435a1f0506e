use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use synpanel::elicitation::{
    check_ready, embed_corpus_texts, rescore_corpus, run_panel, CacheStats, Embedder, PanelContext,
    RaterExamples, RunReport,
};
use synpanel::metrics::{correlation_attainment_with, evaluate_with, stratified_pi, StratumRow};
use synpanel::panelio::{
    import_table, load_anchor_sets, load_corpus, round_significant, save_corpus, save_report,
};
use synpanel::parametric::{synthetic_copy, ParametricPanel, ParametricSpec};
use synpanel::{Corpus, Execution, Method, ResponsePmf, Role};

use crate::error::CliError;
use crate::run::{
    data_path, open_embedding_cache, open_response_cache, sidecar, write_manifest, Providers,
};
use crate::{
    EvaluateArgs, ImportArgs, ParametricArgs, RetestArgs, ScoreArgs, SimulateArgs, StrataArgs,
    SweepArgs,
};

#[derive(Debug, Serialize)]
struct SimulationLog {
    surveys: Vec<RunReport>,
    chat_calls: usize,
    response_cache: CacheStats,
    embedding_cache: CacheStats,
}

pub fn simulate(a: SimulateArgs, argv: Vec<String>) -> Result<(), CliError> {
    let cfg = a.run.config(a.seed, a.provider.parallelism);
    cfg.validate()?;
    if !(0.0..=1.0).contains(&a.max_failure_rate) {
        return Err(CliError::config("--max-failure-rate must be in [0, 1]"));
    }
    let providers = Providers::from_args(&a.provider)?;
    let corpus_path = data_path(&a.corpus);
    let out = data_path(&a.out);
    let real = load_corpus(&corpus_path)?;
    let anchor_path = a.provider.anchors.as_deref().map(data_path);
    let sets = if cfg.method == Method::Ssr {
        load_anchor_sets(anchor_path.as_deref())?
    } else {
        Vec::new()
    };
    let examples_path = a.rater_examples.as_deref().map(data_path);
    let examples = RaterExamples::load(examples_path.as_deref())?;

    let responses = open_response_cache(&a.provider.cache_dir)?;
    let embeddings = open_embedding_cache(&a.provider.cache_dir)?;
    let embedder = Embedder {
        provider: providers.embedder(),
        model: &cfg.embed_model,
        cache: &embeddings,
        retry: providers.retry(),
    };
    let mut ctx = PanelContext {
        config: &cfg,
        chat: providers.chat(),
        responses: &responses,
        embedder: (cfg.method == Method::Ssr).then_some(embedder),
        anchor_sets: &sets,
        rater_examples: &examples,
        retry: providers.retry(),
    };
    for survey in &real.surveys {
        check_ready(survey, &ctx)?;
    }
    let embedded = if cfg.method == Method::Ssr {
        embedder.embed_anchor_sets(&sets)?
    } else {
        Vec::new()
    };
    ctx.anchor_sets = &embedded;

    let mut surveys = Vec::with_capacity(real.surveys.len());
    let mut reports = Vec::with_capacity(real.surveys.len());
    for survey in &real.surveys {
        let outcome = run_panel(survey, &ctx)?;
        log::info!(
            "survey '{}': {}/{} records",
            survey.id,
            outcome.report.records_written,
            outcome.report.records_expected
        );
        surveys.push(outcome.survey);
        reports.push(outcome.report);
    }
    let synthetic = Corpus {
        surveys,
        role: Role::Synthetic,
        provenance: format!(
            "synpanel simulate method={} chat_model={} embed_model={} llm_temperature={} top_p={} samples={} demography={} stimulus={} seed={}",
            cfg.method,
            cfg.chat_model,
            cfg.embed_model,
            cfg.llm_temperature,
            cfg.top_p,
            cfg.samples_per_consumer,
            cfg.demography_mode,
            cfg.stimulus_mode,
            cfg.seed
        ),
    };
    save_corpus(&synthetic, &out)?;

    let expected: usize = reports.iter().map(|r| r.records_expected).sum();
    let failed: usize = reports.iter().map(|r| r.errors.len()).sum();
    let log = SimulationLog {
        chat_calls: reports.iter().map(|r| r.chat_calls).sum(),
        surveys: reports,
        response_cache: responses.stats(),
        embedding_cache: embeddings.stats(),
    };
    let log_path = sidecar(&out, "run");
    save_report("simulation-log", &log, &log_path)?;
    let mut inputs = vec![corpus_path.as_path()];
    inputs.extend(anchor_path.as_deref());
    inputs.extend(examples_path.as_deref());
    write_manifest("simulate", &argv, &a, &inputs, &[&out, &log_path], &out)?;

    println!(
        "{} surveys, {}/{} records, {} chat calls, {} embedding calls",
        synthetic.surveys.len(),
        expected - failed,
        expected,
        log.chat_calls,
        log.embedding_cache.misses
    );
    let rate = if expected == 0 {
        0.0
    } else {
        failed as f64 / expected as f64
    };
    if rate > a.max_failure_rate {
        return Err(CliError::partial(format!(
            "{failed} of {expected} records failed ({:.1}% > {:.1}%); see {}",
            rate * 100.0,
            a.max_failure_rate * 100.0,
            log_path.display()
        )));
    }
    Ok(())
}

fn quantize(pmf: &ResponsePmf) -> ResponsePmf {
    ResponsePmf::from_raw(pmf.probs().map(round_significant))
}

/// Rounds SSR pmfs the way a save and reload would.
fn quantize_corpus(corpus: &mut Corpus) {
    for r in corpus
        .surveys
        .iter_mut()
        .flat_map(|s| s.responses.iter_mut())
    {
        if r.method == Method::Ssr {
            r.final_pmf = quantize(&r.final_pmf);
            if let Some(sets) = &mut r.per_set_pmfs {
                for p in sets.iter_mut() {
                    *p = quantize(p);
                }
            }
        }
    }
}

pub fn score(a: ScoreArgs, argv: Vec<String>) -> Result<(), CliError> {
    let params = a.ssr.params();
    params
        .validate()
        .map_err(|e| CliError::config(e.to_string()))?;
    let providers = Providers::from_args(&a.provider)?;
    let in_path = data_path(&a.synthetic);
    let out = data_path(&a.out);
    let corpus = load_corpus(&in_path)?;
    let anchor_path = a.provider.anchors.as_deref().map(data_path);
    let sets = load_anchor_sets(anchor_path.as_deref())?;
    let embeddings = open_embedding_cache(&a.provider.cache_dir)?;
    let embedder = Embedder {
        provider: providers.embedder(),
        model: &a.embed_model,
        cache: &embeddings,
        retry: providers.retry(),
    };
    let sets = embedder.embed_anchor_sets(&sets)?;
    let texts = embed_corpus_texts(
        &corpus,
        &embedder,
        Execution::bounded(a.provider.parallelism),
    )?;
    let rescored = rescore_corpus(&corpus, &sets, &params, &texts)?;
    save_corpus(&rescored, &out)?;
    let mut inputs = vec![in_path.as_path()];
    inputs.extend(anchor_path.as_deref());
    write_manifest("score", &argv, &a, &inputs, &[&out], &out)?;
    println!(
        "rescored {} texts with {} anchor sets (epsilon={}, T={}); {} embedding calls",
        texts.len(),
        sets.len(),
        params.epsilon,
        params.temperature,
        embeddings.stats().misses
    );
    Ok(())
}

pub fn evaluate(a: EvaluateArgs, argv: Vec<String>) -> Result<(), CliError> {
    let real_path = data_path(&a.corpus);
    let synth_path = data_path(&a.synthetic);
    let out = data_path(&a.out);
    let real = load_corpus(&real_path)?;
    let synth = load_corpus(&synth_path)?;
    let report = evaluate_with(
        &real,
        &synth,
        a.iterations,
        a.seed,
        Execution::bounded(a.parallelism),
    )?;
    save_report("evaluation", &report, &out)?;
    let mut outputs = vec![out.clone()];
    if let Some(t) = &a.table {
        let t = data_path(t);
        std::fs::write(&t, report.to_table()).map_err(|e| CliError {
            code: crate::error::EXIT_IO,
            message: format!("{}: {e}", t.display()),
        })?;
        outputs.push(t);
    }
    let outputs: Vec<&Path> = outputs.iter().map(|p| p.as_path()).collect();
    write_manifest(
        "evaluate",
        &argv,
        &a,
        &[&real_path, &synth_path],
        &outputs,
        &out,
    )?;
    println!("{}", report.summary_line());
    Ok(())
}

#[derive(Debug, Serialize)]
struct SweepRow {
    temperature: f64,
    epsilon: f64,
    rho: Option<f64>,
    k_xy: f64,
    r_xy: Option<f64>,
    c_xy: f64,
    /// Mean entropy of the synthetic response pmfs, per survey.
    mean_response_entropy: BTreeMap<String, f64>,
}

#[derive(Debug, Serialize)]
struct SweepReport {
    rows: Vec<SweepRow>,
    entropy_non_decreasing_in_temperature: bool,
}

fn mean_entropy(corpus: &Corpus) -> BTreeMap<String, f64> {
    corpus
        .surveys
        .iter()
        .map(|s| {
            let n = s.responses.len().max(1) as f64;
            let h = s
                .responses
                .iter()
                .map(|r| r.final_pmf.entropy())
                .sum::<f64>()
                / n;
            (s.id.clone(), h)
        })
        .collect()
}

fn entropy_monotone(rows: &[SweepRow]) -> bool {
    let mut by_eps: BTreeMap<u64, Vec<&SweepRow>> = BTreeMap::new();
    for r in rows {
        by_eps.entry(r.epsilon.to_bits()).or_default().push(r);
    }
    by_eps.values_mut().all(|group| {
        group.sort_by(|x, y| x.temperature.total_cmp(&y.temperature));
        group.windows(2).all(|w| {
            w[0].mean_response_entropy.iter().all(|(id, h)| {
                w[1].mean_response_entropy
                    .get(id)
                    .is_some_and(|h2| *h2 >= h - 1e-9)
            })
        })
    })
}

pub fn sweep(a: SweepArgs, argv: Vec<String>) -> Result<(), CliError> {
    if a.temperatures.is_empty() || a.epsilons.is_empty() {
        return Err(CliError::config("empty sweep grid"));
    }
    let grid: Vec<synpanel::ssr::SsrParams> = a
        .epsilons
        .iter()
        .flat_map(|&e| {
            a.temperatures
                .iter()
                .map(move |&t| synpanel::ssr::SsrParams {
                    epsilon: e,
                    temperature: t,
                })
        })
        .collect();
    for p in &grid {
        p.validate().map_err(|e| CliError::config(e.to_string()))?;
    }
    let providers = Providers::from_args(&a.provider)?;
    let real_path = data_path(&a.corpus);
    let synth_path = data_path(&a.synthetic);
    let out = data_path(&a.out);
    let real = load_corpus(&real_path)?;
    let synth = load_corpus(&synth_path)?;
    let anchor_path = a.provider.anchors.as_deref().map(data_path);
    let sets = load_anchor_sets(anchor_path.as_deref())?;
    let embeddings = open_embedding_cache(&a.provider.cache_dir)?;
    let embedder = Embedder {
        provider: providers.embedder(),
        model: &a.embed_model,
        cache: &embeddings,
        retry: providers.retry(),
    };
    let execution = Execution::bounded(a.provider.parallelism);
    let sets = embedder.embed_anchor_sets(&sets)?;
    let texts = embed_corpus_texts(&synth, &embedder, execution)?;

    let mut rows = Vec::with_capacity(grid.len());
    for params in &grid {
        let mut rescored = rescore_corpus(&synth, &sets, params, &texts)?;
        quantize_corpus(&mut rescored);
        let report = evaluate_with(&real, &rescored, a.iterations, a.seed, execution)?;
        rows.push(SweepRow {
            temperature: params.temperature,
            epsilon: params.epsilon,
            rho: report.summary.rho,
            k_xy: report.summary.k_xy,
            r_xy: report.summary.r_xy,
            c_xy: report.summary.c_xy,
            mean_response_entropy: mean_entropy(&rescored),
        });
    }
    let report = SweepReport {
        entropy_non_decreasing_in_temperature: entropy_monotone(&rows),
        rows,
    };
    save_report("sweep", &report, &out)?;
    let mut inputs = vec![real_path.as_path(), synth_path.as_path()];
    inputs.extend(anchor_path.as_deref());
    write_manifest("sweep", &argv, &a, &inputs, &[&out], &out)?;

    let fmt = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x:.4}"));
    println!("T\tepsilon\trho\tK_xy\tR_xy\tC_xy\tmean_entropy");
    for r in &report.rows {
        let h = r.mean_response_entropy.values().sum::<f64>()
            / r.mean_response_entropy.len().max(1) as f64;
        println!(
            "{}\t{}\t{}\t{:.4}\t{}\t{:.4}\t{h:.4}",
            r.temperature,
            r.epsilon,
            fmt(r.rho),
            r.k_xy,
            fmt(r.r_xy),
            r.c_xy
        );
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct StrataTable {
    feature: String,
    real: Vec<StratumRow>,
    synthetic: Option<Vec<StratumRow>>,
}

pub fn strata(a: StrataArgs, argv: Vec<String>) -> Result<(), CliError> {
    let real_path = data_path(&a.corpus);
    let synth_path = a.synthetic.as_deref().map(data_path);
    let out = data_path(&a.out);
    let real = load_corpus(&real_path)?;
    let synth = synth_path.as_deref().map(load_corpus).transpose()?;
    let mut tables = Vec::with_capacity(a.features.len());
    for feature in &a.features {
        tables.push(StrataTable {
            feature: feature.clone(),
            real: stratified_pi(&real, feature)?,
            synthetic: synth
                .as_ref()
                .map(|s| stratified_pi(s, feature))
                .transpose()?,
        });
    }
    save_report("strata", &tables, &out)?;
    let mut inputs = vec![real_path.as_path()];
    inputs.extend(synth_path.as_deref());
    write_manifest("strata", &argv, &a, &inputs, &[&out], &out)?;

    println!("feature\tbucket\tcorpus\tmean_pi\tstd_error\tn");
    for t in &tables {
        let sides = [("real", Some(&t.real)), ("synthetic", t.synthetic.as_ref())];
        for (name, rows) in sides {
            for r in rows.into_iter().flatten() {
                let se = r.std_error.map_or("NA".to_string(), |s| format!("{s:.4}"));
                println!(
                    "{}\t{}\t{name}\t{:.4}\t{se}\t{}",
                    t.feature, r.bucket, r.mean_pi, r.n
                );
            }
        }
    }
    Ok(())
}

pub fn retest(a: RetestArgs, argv: Vec<String>) -> Result<(), CliError> {
    let real_path = data_path(&a.corpus);
    let synth_path = data_path(&a.synthetic);
    let out = data_path(&a.out);
    let real = load_corpus(&real_path)?;
    let synth = load_corpus(&synth_path)?;
    let result = correlation_attainment_with(
        &real,
        &synth,
        a.iterations,
        a.seed,
        Execution::bounded(a.parallelism),
    )?;
    save_report("retest", &result, &out)?;
    write_manifest(
        "retest",
        &argv,
        &a,
        &[&real_path, &synth_path],
        &[&out],
        &out,
    )?;
    let fmt = |v: Option<f64>| v.map_or("undefined".to_string(), |x| format!("{x:.4}"));
    println!(
        "rho={} se={} R_xx={} R_xy={} iterations={} seed={}",
        fmt(result.rho),
        fmt(result.std_error_rho),
        fmt(result.mean_rxx),
        fmt(result.mean_rxy),
        result.iterations,
        result.seed
    );
    Ok(())
}

pub fn import(a: ImportArgs, argv: Vec<String>) -> Result<(), CliError> {
    if !a.delimiter.is_ascii() {
        return Err(CliError::config(
            "delimiter must be a single ASCII character",
        ));
    }
    let table = data_path(&a.table);
    let out = data_path(&a.out);
    let corpus = import_table(&table, a.delimiter as u8)?;
    save_corpus(&corpus, &out)?;
    write_manifest("import", &argv, &a, &[&table], &[&out], &out)?;
    let records: usize = corpus.surveys.iter().map(|s| s.responses.len()).sum();
    println!(
        "imported {} surveys, {records} responses",
        corpus.surveys.len()
    );
    Ok(())
}

pub fn parametric(a: ParametricArgs, argv: Vec<String>) -> Result<(), CliError> {
    if a.surveys == 0 || a.respondents == 0 {
        return Err(CliError::config(
            "--surveys and --respondents must be positive",
        ));
    }
    if !(a.noise >= 0.0 && a.noise.is_finite()) {
        return Err(CliError::config(
            "--noise must be a finite non-negative number",
        ));
    }
    let panel = ParametricPanel::generate(ParametricSpec {
        surveys: a.surveys,
        respondents: a.respondents,
        seed: a.seed,
        ..Default::default()
    });
    let out = data_path(&a.out);
    let real = panel.real();
    save_corpus(&real, &out)?;
    let mut outputs = vec![out.clone()];
    if let Some(p) = &a.copy {
        let p = data_path(p);
        save_corpus(&synthetic_copy(&real), &p)?;
        outputs.push(p);
    }
    if let Some(p) = &a.replicate {
        let p = data_path(p);
        save_corpus(&panel.replicate(a.noise, 1), &p)?;
        outputs.push(p);
    }
    let outputs: Vec<&Path> = outputs.iter().map(|p| p.as_path()).collect();
    write_manifest("parametric", &argv, &a, &[], &outputs, &out)?;
    println!(
        "wrote {} surveys of {} respondents",
        a.surveys, a.respondents
    );
    Ok(())
}
