//! Acceptance suite: end-to-end guarantees over the bundled fixture
//! corpus. Each check prints one [PASS]/[FAIL] line; the test fails if
//! any check fails.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use tablefind_core::baselines::{bm25, bm25f, tablerank, Bm25Params, Bm25fParams};
use tablefind_core::corpus::{parse_tables, NumericMatcher, TableRecord};
use tablefind_core::eval::{
    ap_at, err_at, evaluate_run, kendall_tau, ndcg_at, parse_topics, Cutoffs, Judgments, Topic,
};
use tablefind_core::index::{tokenize, FieldScope, Index};
use tablefind_core::query::quantity::{features, loss_and_grad, N_FEATURES};
use tablefind_core::query::{
    analyze, build_analyzed_query, build_quantity_type_node, mine_text, ConceptMode, Lexicon,
    Ontology, QueryIntel, DEFAULT_LEXICON, DEFAULT_ONTOLOGY,
};
use tablefind_core::ranker::{
    build_concept_node, build_query_terms, build_union_terms, rank, QueryNode, Ranked,
};
use tablefind_core::testsupport::Oracle;
use tablefind_core::ModelParams;

fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

struct Fixture {
    records: Vec<TableRecord>,
    index: Index,
    intel: QueryIntel,
    topics: Vec<Topic>,
    judgments: Judgments,
    params: ModelParams,
}

fn load_fixture() -> Fixture {
    let matcher = NumericMatcher::new();
    let mut paths: Vec<_> = fs::read_dir(fixtures_dir().join("corpus"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    paths.sort();
    let mut records = Vec::new();
    for path in paths {
        let doc_id = path.file_stem().unwrap().to_string_lossy().into_owned();
        let outcome = parse_tables(&fs::read(&path).unwrap(), &doc_id, &matcher).unwrap();
        records.extend(outcome.records);
    }
    let index = Index::build(&records).unwrap();
    let intel = QueryIntel::build_default(&records).unwrap();
    let topics = parse_topics(&fs::read(fixtures_dir().join("topics.xml")).unwrap()).unwrap();
    let judgments =
        Judgments::parse(&fs::read_to_string(fixtures_dir().join("qrels.txt")).unwrap()).unwrap();
    Fixture {
        records,
        index,
        intel,
        topics,
        judgments,
        params: ModelParams::default(),
    }
}

type Check = std::result::Result<(), String>;

fn err(msg: impl Into<String>) -> Check {
    Err(msg.into())
}

fn ranked_ids(ranked: &[Ranked]) -> Vec<String> {
    ranked.iter().map(|r| r.table_id.clone()).collect()
}

fn position(ranked: &[Ranked], table_id: &str) -> Option<usize> {
    ranked.iter().position(|r| r.table_id == table_id)
}

/// Every query tree the engine can score, for one analyzed topic.
fn topic_trees(fx: &Fixture, topic: &Topic) -> Vec<(String, QueryNode)> {
    let analysis = analyze(&topic.title, &fx.index, &fx.intel, ConceptMode::Entity).unwrap();
    let mut trees = vec![
        (
            "terms".to_string(),
            build_query_terms(&analysis.tokens, &fx.params.field_weights).unwrap(),
        ),
        (
            "full".to_string(),
            build_analyzed_query(&analysis, &fx.params).unwrap(),
        ),
    ];
    for c in &analysis.concepts {
        trees.push((
            format!("concept '{}'", c.display),
            build_concept_node(&c.tokens, &fx.params.sdm).unwrap(),
        ));
    }
    for q in &analysis.quantities {
        trees.push((
            format!("quantity '{}'", q.name),
            build_quantity_type_node(&q.symbols).unwrap(),
        ));
    }
    trees
}

/// Engine scores and ranking order equal a brute-force rescore that reads
/// the statistics dump and the raw records, for every topic and tree.
fn check_scoring_oracle(fx: &Fixture) -> Check {
    let start = Instant::now();
    let mut stats = Vec::new();
    fx.index.write_stats_tsv(&mut stats).unwrap();
    let stats = String::from_utf8(stats).unwrap();
    let oracle = Oracle::new(&fx.records, &stats, &fx.params).map_err(|e| e.to_string())?;
    let k = fx.index.table_count();
    for topic in &fx.topics {
        for (label, node) in topic_trees(fx, topic) {
            let want = oracle.rank_ids(&node, k);
            let got = rank(&fx.index, &node, &fx.params, k).map_err(|e| e.to_string())?;
            if got.len() != want.len() {
                return err(format!(
                    "topic {} {label}: {} results vs oracle {}",
                    topic.num,
                    got.len(),
                    want.len()
                ));
            }
            for (g, w) in got.iter().zip(&want) {
                if g.table_id != w.0 {
                    return err(format!(
                        "topic {} {label}: order {} vs oracle {}",
                        topic.num, g.table_id, w.0
                    ));
                }
                if (g.score - w.1).abs() > 1e-9 {
                    return err(format!(
                        "topic {} {label} {}: score {} vs oracle {}",
                        topic.num, g.table_id, g.score, w.1
                    ));
                }
            }
        }
    }
    let elapsed = start.elapsed();
    if elapsed > Duration::from_secs(5) {
        return err(format!("took {elapsed:?}, budget 5s"));
    }
    Ok(())
}

/// With both mixture weights at zero and the prior off, the assembled
/// query ranks identically to the plain term backbone; turning the
/// numeric prior on strictly raises fixture MAP.
fn check_ablations(fx: &Fixture) -> Check {
    let off = ModelParams {
        alpha: 0.0,
        beta: 0.0,
        prior_enabled: false,
        ..ModelParams::default()
    };
    let k = fx.index.table_count();
    for topic in &fx.topics {
        let analysis = analyze(&topic.title, &fx.index, &fx.intel, ConceptMode::Entity).unwrap();
        let full = build_analyzed_query(&analysis, &off).unwrap();
        let terms = build_query_terms(&analysis.tokens, &off.field_weights).unwrap();
        let a = ranked_ids(&rank(&fx.index, &full, &off, k).unwrap());
        let b = ranked_ids(&rank(&fx.index, &terms, &off, k).unwrap());
        match kendall_tau(&a, &b) {
            Some(tau) if (tau - 1.0).abs() < 1e-12 => {}
            other => return err(format!("topic {}: tau {other:?}, want 1", topic.num)),
        }
    }

    let with_prior = ModelParams {
        prior_enabled: true,
        ..ModelParams::default()
    };
    let without_prior = ModelParams {
        prior_enabled: false,
        ..ModelParams::default()
    };
    let map_of = |params: &ModelParams| -> f64 {
        let mut run: BTreeMap<String, Vec<Ranked>> = BTreeMap::new();
        for topic in &fx.topics {
            let analysis =
                analyze(&topic.title, &fx.index, &fx.intel, ConceptMode::Entity).unwrap();
            let node = build_analyzed_query(&analysis, params).unwrap();
            run.insert(
                topic.num.clone(),
                rank(&fx.index, &node, params, params.k).unwrap(),
            );
        }
        evaluate_run(&fx.judgments, &run, Cutoffs::default()).map
    };
    let on = map_of(&with_prior);
    let off = map_of(&without_prior);
    if on <= off {
        return err(format!(
            "MAP {on} with prior vs {off} without; want a strict gain"
        ));
    }
    Ok(())
}

/// Uniform BM25F parameters recover plain BM25, and the language-model
/// ranking over the pooled pseudo-field reproduces the ordering of an
/// inline bag-of-words scorer computed from raw index statistics.
fn check_degenerations(fx: &Fixture) -> Check {
    let k = fx.index.table_count();
    for topic in &fx.topics {
        let tokens = tokenize(&topic.title);
        let plain = bm25(&fx.index, &tokens, Bm25Params::default(), k).unwrap();
        let fielded = bm25f(&fx.index, &tokens, &Bm25fParams::uniform(1.2, 0.75), k).unwrap();
        if plain.len() != fielded.len() {
            return err(format!(
                "topic {}: bm25 and uniform bm25f sizes differ",
                topic.num
            ));
        }
        for (p, f) in plain.iter().zip(&fielded) {
            if p.table_id != f.table_id || (p.score - f.score).abs() > 1e-12 {
                return err(format!(
                    "topic {}: bm25 {}={} vs uniform bm25f {}={}",
                    topic.num, p.table_id, p.score, f.table_id, f.score
                ));
            }
        }

        let priorless = ModelParams {
            prior_enabled: false,
            ..ModelParams::default()
        };
        let node = build_union_terms(&tokens).unwrap();
        let engine = ranked_ids(&rank(&fx.index, &node, &priorless, k).unwrap());
        let bow = ranked_ids(&bow_ranking(fx, &tokens));
        if engine != bow {
            return err(format!(
                "topic {}: union ranking {engine:?} vs bow {bow:?}",
                topic.num
            ));
        }
    }
    Ok(())
}

/// Smoothed bag-of-words ranking over the pooled table text, computed
/// directly from index statistics.
fn bow_ranking(fx: &Fixture, tokens: &[String]) -> Vec<Ranked> {
    let s = fx.params.full_text;
    let total = fx.index.scope_token_count(FieldScope::Union) as f64;
    let mut scored = Vec::new();
    for ix in 0..fx.index.table_count() as u32 {
        let len = fx.index.scope_len(ix, FieldScope::Union) as f64;
        let mut matched = false;
        let mut sum = 0.0;
        for token in tokens {
            let c = fx.index.term_count_in(token, ix, FieldScope::Union) as f64;
            matched |= c > 0.0;
            let ctf = fx.index.ctf(token, FieldScope::Union);
            let coll = if ctf == 0 || total == 0.0 {
                0.5 / (total + 1.0)
            } else {
                ctf as f64 / total
            };
            let p = if len == 0.0 && s.mu == 0.0 {
                coll
            } else {
                s.lambda * (c + s.mu * coll) / (len + s.mu) + (1.0 - s.lambda) * coll
            };
            sum += p.max(f64::MIN_POSITIVE).ln();
        }
        if matched {
            scored.push(Ranked {
                table_id: fx.index.table(ix).table_id.clone(),
                score: sum / tokens.len() as f64,
            });
        }
    }
    scored.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.table_id.cmp(&b.table_id))
    });
    scored
}

/// The vector-space baseline rewards sheer term repetition: it puts the
/// mass compendium above the meson table for "meson mass", while the
/// full ranker prefers the table matching both concepts.
fn check_repetition_flip(fx: &Fixture) -> Check {
    let query = "meson mass";
    let repetitive = "meson02#0";
    let on_topic = "meson01#0";
    let k = fx.index.table_count();

    let tokens = tokenize(query);
    let tr = tablerank(&fx.index, &tokens, k).unwrap();
    let (Some(rep_tr), Some(on_tr)) = (position(&tr, repetitive), position(&tr, on_topic)) else {
        return err("tablerank dropped one of the pair");
    };
    if rep_tr >= on_tr {
        return err(format!(
            "tablerank rank {} for {repetitive} vs {} for {on_topic}; want the repetitive table first",
            rep_tr + 1,
            on_tr + 1
        ));
    }

    let analysis = analyze(query, &fx.index, &fx.intel, ConceptMode::Entity).unwrap();
    let node = build_analyzed_query(&analysis, &fx.params).unwrap();
    let full = rank(&fx.index, &node, &fx.params, k).unwrap();
    let (Some(rep_full), Some(on_full)) = (position(&full, repetitive), position(&full, on_topic))
    else {
        return err("full ranker dropped one of the pair");
    };
    if on_full >= rep_full {
        return err(format!(
            "full rank {} for {on_topic} vs {} for {repetitive}; want the on-topic table first",
            on_full + 1,
            rep_full + 1
        ));
    }
    Ok(())
}

/// Hand-computed metric values, plus exact 1.0 on perfect rankings.
fn check_metric_goldens(_fx: &Fixture) -> Check {
    let close = |got: f64, want: f64| (got - want).abs() <= 1e-9;

    let ap = ap_at(&[1, 0, 2, 0, 3], 3, 100).unwrap();
    if !close(ap, 0.7555555555555555) {
        return err(format!("ap {ap}"));
    }
    let ap_cut = ap_at(&[1, 0, 2, 0, 3], 3, 2).unwrap();
    if !close(ap_cut, 0.5) {
        return err(format!("ap at cutoff 2: {ap_cut}"));
    }
    let ndcg = ndcg_at(&[3, 0, 1], &[3, 1, 0], 20).unwrap();
    if !close(ndcg, 0.9828422279067397) {
        return err(format!("ndcg {ndcg}"));
    }
    for (grades, want) in [
        (vec![3u8], 0.875),
        (vec![0, 3], 0.4375),
        (vec![2, 3], 0.6484375),
    ] {
        let got = err_at(&grades, 20);
        if !close(got, want) {
            return err(format!("err {got} for {grades:?}, want {want}"));
        }
    }

    let perfect_ap = ap_at(&[3, 2, 1], 3, 100).unwrap();
    if perfect_ap != 1.0 {
        return err(format!("perfect ap {perfect_ap} != 1.0"));
    }
    let perfect_ndcg = ndcg_at(&[3, 1, 0], &[3, 1, 0], 20).unwrap();
    if perfect_ndcg != 1.0 {
        return err(format!("perfect ndcg {perfect_ndcg} != 1.0"));
    }
    Ok(())
}

/// Every line of the labeled tagger fixture extracts exactly, including
/// the verbatim "distance in cm" case.
fn check_unit_tagger(_fx: &Fixture) -> Check {
    let path = fixtures_dir().join("tagger_cases.tsv");
    let text = fs::read_to_string(&path).unwrap();
    let ontology = Ontology::parse(DEFAULT_ONTOLOGY).unwrap();
    let lexicon = Lexicon::parse(DEFAULT_LEXICON).unwrap();
    let mut cases = 0usize;
    let mut saw_verbatim = false;
    for line in text.lines().filter(|l| !l.is_empty()) {
        cases += 1;
        let (case, expected) = line.split_once('\t').unwrap_or((line, ""));
        if case == "distance in cm" && expected == "distance|cm|Length" {
            saw_verbatim = true;
        }
        let want: Vec<(String, String, String)> = if expected.is_empty() {
            Vec::new()
        } else {
            expected
                .split(';')
                .map(|t| {
                    let mut it = t.split('|');
                    (
                        it.next().unwrap_or_default().to_string(),
                        it.next().unwrap_or_default().to_string(),
                        it.next().unwrap_or_default().to_string(),
                    )
                })
                .collect()
        };
        let got: Vec<(String, String, String)> = mine_text(case, &ontology, &lexicon)
            .into_iter()
            .map(|u| (u.phrase, u.symbol, u.type_name))
            .collect();
        if got != want {
            return err(format!("{case:?}: got {got:?}, want {want:?}"));
        }
    }
    if cases != 50 {
        return err(format!("{cases} cases, want 50"));
    }
    if !saw_verbatim {
        return err("missing the verbatim 'distance in cm' case");
    }
    Ok(())
}

/// The trained classifier makes the expected fixture picks, and its
/// analytic gradient matches central finite differences.
fn check_quantity_classifier(fx: &Fixture) -> Check {
    let picks = |phrase: &str| -> Vec<String> {
        fx.intel
            .quantities
            .classify(&tokenize(phrase))
            .into_iter()
            .map(|(name, _)| name)
            .collect()
    };
    let force = picks("gravitational forces");
    if force != ["Force"] {
        return err(format!(
            "'gravitational forces' picked {force:?}, want [Force]"
        ));
    }
    let planet = picks("earth-like planet");
    if !planet.is_empty() {
        return err(format!("'earth-like planet' picked {planet:?}, want none"));
    }

    // Feature/label set assembled the way training does it.
    let model = &fx.intel.quantities;
    let mut xs: Vec<[f64; N_FEATURES]> = Vec::new();
    let mut ys = Vec::new();
    for mined in model.mined.iter().take(12) {
        for t in model.ontology.types().iter().take(6) {
            xs.push(features(
                &mined.tokens,
                &t.name,
                &model.lm,
                &model.mined,
                &model.ontology,
            ));
            ys.push(f64::from(u8::from(mined.type_name == t.name)));
        }
    }
    if xs.is_empty() {
        return err("no mined units to build a gradient-check set");
    }
    for weights in [
        model.classifier.weights.clone(),
        vec![0.3, -0.2, 0.5, 0.1, -0.4],
    ] {
        let (_, grad) = loss_and_grad(&weights, &xs, &ys);
        let h = 1e-6;
        for j in 0..weights.len() {
            let mut hi = weights.clone();
            let mut lo = weights.clone();
            hi[j] += h;
            lo[j] -= h;
            let (loss_hi, _) = loss_and_grad(&hi, &xs, &ys);
            let (loss_lo, _) = loss_and_grad(&lo, &xs, &ys);
            let fd = (loss_hi - loss_lo) / (2.0 * h);
            let rel = (grad[j] - fd).abs() / fd.abs().max(1e-8);
            if rel >= 1e-5 {
                return err(format!(
                    "gradient component {j}: analytic {} vs fd {fd}, rel {rel}",
                    grad[j]
                ));
            }
        }
    }
    Ok(())
}

/// The bundled gazetteer and lexicon analyze the mixed-concept fixture
/// query into the expected entity and noun-phrase concepts.
fn check_analysis_goldens(fx: &Fixture) -> Check {
    let query = "gravitational forces in newtonian gravity versus bimetric gravity";

    let entity = analyze(query, &fx.index, &fx.intel, ConceptMode::Entity).unwrap();
    let displays: BTreeSet<&str> = entity.concepts.iter().map(|c| c.display.as_str()).collect();
    let want: BTreeSet<&str> = ["gravitational force", "newtonian gravity", "versus"]
        .into_iter()
        .collect();
    if displays != want {
        return err(format!("entity concepts {displays:?}, want {want:?}"));
    }

    let phrases = analyze(query, &fx.index, &fx.intel, ConceptMode::NounPhrase).unwrap();
    let token_sets: BTreeSet<Vec<String>> =
        phrases.concepts.iter().map(|c| c.tokens.clone()).collect();
    let want_tokens: BTreeSet<Vec<String>> = [
        vec!["gravitational", "force"],
        vec!["newtonian", "gravity"],
        vec!["bimetric", "gravity"],
    ]
    .into_iter()
    .map(|v| v.into_iter().map(String::from).collect())
    .collect();
    if token_sets != want_tokens {
        return err(format!("noun phrases {token_sets:?}, want {want_tokens:?}"));
    }
    Ok(())
}

/// The shipped configuration carries the documented defaults.
fn check_shipped_defaults(_fx: &Fixture) -> Check {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("config/default.toml");
    let value: toml::Value = toml::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    let get = |keys: &[&str]| -> f64 {
        let mut v = &value;
        for key in keys {
            v = &v[*key];
        }
        v.as_float()
            .or_else(|| v.as_integer().map(|i| i as f64))
            .unwrap()
    };
    let close = |got: f64, want: f64| (got - want).abs() < 1e-12;
    for (keys, want) in [
        (&["model", "full_text", "lambda"][..], 0.58),
        (&["model", "full_text", "mu"][..], 250.0),
        (&["model", "fielded", "lambda"][..], 0.81),
        (&["model", "fielded", "mu"][..], 2.0),
        (&["model", "sdm", "term"][..], 0.85),
        (&["model", "sdm", "ordered"][..], 0.10),
        (&["model", "sdm", "unordered"][..], 0.05),
        (&["quantity", "threshold"][..], 0.65),
        (&["search", "k"][..], 100.0),
    ] {
        let got = get(keys);
        if !close(got, want) {
            return err(format!("{} = {got}, want {want}", keys.join(".")));
        }
    }
    Ok(())
}

type NamedCheck = (&'static str, fn(&Fixture) -> Check);

#[test]
fn acceptance() {
    let fx = load_fixture();
    let checks: Vec<NamedCheck> = vec![
        (
            "scoring oracle: engine matches brute-force scores and order",
            check_scoring_oracle,
        ),
        (
            "ablations: zero weights reduce to term ranking; numeric prior raises MAP",
            check_ablations,
        ),
        (
            "degenerations: uniform bm25f equals bm25; union ranking equals bag-of-words",
            check_degenerations,
        ),
        (
            "repetition flip: tablerank prefers repetition, full ranker the concept match",
            check_repetition_flip,
        ),
        (
            "metric golden values and perfect-ranking identities",
            check_metric_goldens,
        ),
        (
            "unit tagger: all 50 labeled cases extract exactly",
            check_unit_tagger,
        ),
        (
            "quantity classifier: fixture picks and finite-difference gradient",
            check_quantity_classifier,
        ),
        (
            "query analysis: entity and noun-phrase concepts match goldens",
            check_analysis_goldens,
        ),
        (
            "shipped config carries the documented defaults",
            check_shipped_defaults,
        ),
    ];
    let mut failures = Vec::new();
    for (name, check) in checks {
        match check(&fx) {
            Ok(()) => println!("[PASS] {name}"),
            Err(why) => {
                println!("[FAIL] {name}: {why}");
                failures.push(name);
            }
        }
    }
    assert!(failures.is_empty(), "failed: {failures:?}");
}
