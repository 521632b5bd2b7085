//! Command implementations. Each returns `Ok(())` on success; failures
//! carry the underlying error so the exit code can reflect its class.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use tablefind_core::baselines::{self, Bm25Params, Bm25fParams};
use tablefind_core::corpus::{parse_tables, read_records, write_records, NumericMatcher};
use tablefind_core::eval::{
    evaluate_run, make_folds, parse_topics, read_run, Cutoffs, Judgments, Topic,
};
use tablefind_core::index::{tokenize, Index};
use tablefind_core::query::{
    self, mine_records, ConceptMode, Gazetteer, Lexicon, MinedUnit, Ontology, QuantityModel,
    QueryIntel, DEFAULT_GAZETTEER, DEFAULT_LEXICON, DEFAULT_ONTOLOGY,
};
use tablefind_core::ranker::{self, Ranked};
use tablefind_core::{Error, ModelParams};

use crate::config::{Config, Paths, Ranker};
use crate::ModelFlags;

const INTEL_FILE: &str = "intel.json";

/// Effective settings once flags are laid over the config.
struct Effective {
    ranker: Ranker,
    mode: ConceptMode,
    params: ModelParams,
    k: usize,
}

fn effective(cfg: &Config, flags: &ModelFlags) -> Result<Effective> {
    let mut params = cfg.model_params()?;
    if let Some(a) = flags.alpha {
        params.alpha = a;
    }
    if let Some(b) = flags.beta {
        params.beta = b;
    }
    if let Some(p) = flags.prior {
        params.prior_enabled = p;
    }
    params.validate()?;
    let k = flags.k.unwrap_or(cfg.search.k);
    params.k = k;
    Ok(Effective {
        ranker: flags.ranker.unwrap_or(cfg.search.ranker),
        mode: flags
            .concepts
            .map(Into::into)
            .unwrap_or(cfg.search.concepts),
        params,
        k,
    })
}

fn load_resources(paths: &Paths) -> Result<(Gazetteer, Lexicon, Ontology)> {
    let gazetteer = match &paths.gazetteer {
        Some(p) => Gazetteer::parse(&fs::read_to_string(p)?).map_err(|e| e.with_path(p))?,
        None => Gazetteer::parse(DEFAULT_GAZETTEER)?,
    };
    let lexicon = match &paths.lexicon {
        Some(p) => Lexicon::parse(&fs::read_to_string(p)?).map_err(|e| e.with_path(p))?,
        None => Lexicon::parse(DEFAULT_LEXICON)?,
    };
    let ontology = match &paths.ontology {
        Some(p) => Ontology::parse(&fs::read_to_string(p)?).map_err(|e| e.with_path(p))?,
        None => Ontology::parse(DEFAULT_ONTOLOGY)?,
    };
    Ok((gazetteer, lexicon, ontology))
}

/// Load the persisted query intelligence, applying resource overrides and
/// the configured threshold.
fn load_intel(cfg: &Config, index_dir: &Path) -> Result<Option<QueryIntel>> {
    let path = index_dir.join(INTEL_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let mut intel: QueryIntel = serde_json::from_str(&fs::read_to_string(&path)?)
        .map_err(Error::from)
        .map_err(|e| e.with_path(&path))?;
    if cfg.paths.gazetteer.is_some() || cfg.paths.lexicon.is_some() {
        let (gazetteer, lexicon, _) = load_resources(&cfg.paths)?;
        intel.gazetteer = gazetteer;
        intel.lexicon = lexicon;
    }
    intel.quantities.classifier.threshold = cfg.quantity.threshold;
    Ok(Some(intel))
}

fn open_index(dir: &Path) -> Result<Index> {
    Index::load(dir).with_context(|| format!("opening index {}", dir.display()))
}

fn write_or_stdout(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => fs::write(p, bytes).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().write_all(bytes)?,
    }
    Ok(())
}

pub fn ingest(corpus: &Path, out: &Path) -> Result<()> {
    let mut paths: Vec<_> = fs::read_dir(corpus)
        .with_context(|| format!("reading corpus directory {}", corpus.display()))?
        .map(|e| Ok(e?.path()))
        .collect::<Result<Vec<_>>>()?;
    paths.retain(|p| p.extension().is_some_and(|x| x == "xml"));
    paths.sort();
    if paths.is_empty() {
        bail!("no .xml files under {}", corpus.display());
    }

    let matcher = NumericMatcher::new();
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for path in &paths {
        let doc_id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let bytes = fs::read(path)?;
        let outcome = parse_tables(&bytes, &doc_id, &matcher).map_err(|e| e.with_path(path))?;
        for warning in &outcome.warnings {
            eprintln!("warning: {}: {warning}", path.display());
        }
        for record in &outcome.records {
            if !seen.insert(record.table_id.clone()) {
                return Err(Error::DuplicateTableId(record.table_id.clone()).into());
            }
        }
        records.extend(outcome.records);
    }
    write_records(out, &records)?;
    println!(
        "{} tables from {} files -> {}",
        records.len(),
        paths.len(),
        out.display()
    );
    Ok(())
}

pub fn index(cfg: &Config, records_path: &Path, index_dir: &Path) -> Result<()> {
    let records = read_records(records_path)
        .with_context(|| format!("reading records {}", records_path.display()))?;
    let index = Index::build(&records)?;
    index.save(index_dir)?;

    let (gazetteer, lexicon, ontology) = load_resources(&cfg.paths)?;
    match QueryIntel::build(&records, gazetteer, lexicon, ontology) {
        Ok(intel) => {
            fs::write(index_dir.join(INTEL_FILE), serde_json::to_string(&intel)?)?;
            println!(
                "indexed {} tables; mined {} unit-tagged phrases",
                records.len(),
                intel.quantities.mined.len()
            );
        }
        Err(Error::Training(msg)) => {
            // A corpus without unit-tagged text still gets a working index.
            eprintln!("warning: quantity classifier not trained: {msg}");
            println!("indexed {} tables", records.len());
        }
        Err(e) => return Err(e.into()),
    }
    Ok(())
}

/// Rank one query with the selected ranker. Baselines never apply the
/// numeric prior; the full model follows the parameters.
fn rank_query(
    index: &Index,
    intel: Option<&QueryIntel>,
    eff: &Effective,
    query: &str,
) -> Result<Vec<Ranked>> {
    let tokens = tokenize(query);
    let priorless = ModelParams {
        prior_enabled: false,
        ..eff.params.clone()
    };
    let ranked = match eff.ranker {
        Ranker::Bm25 => baselines::bm25(index, &tokens, Bm25Params::default(), eff.k)?,
        Ranker::Bm25f => baselines::bm25f(index, &tokens, &Bm25fParams::default(), eff.k)?,
        Ranker::Tablerank => baselines::tablerank(index, &tokens, eff.k)?,
        Ranker::LmBow => {
            let node = ranker::build_union_terms(&tokens)?;
            ranker::rank(index, &node, &priorless, eff.k)?
        }
        Ranker::LmSdm => {
            let node = baselines::build_sdm_query(&tokens, &eff.params.sdm)?;
            ranker::rank(index, &node, &priorless, eff.k)?
        }
        Ranker::Full => {
            let intel = intel.ok_or_else(|| {
                anyhow::anyhow!(
                    "index has no query intelligence; re-run `index` or pick a baseline ranker"
                )
            })?;
            let analysis = query::analyze(query, index, intel, eff.mode)?;
            let node = query::build_analyzed_query(&analysis, &eff.params)?;
            ranker::rank(index, &node, &eff.params, eff.k)?
        }
    };
    Ok(ranked)
}

#[allow(clippy::too_many_arguments)]
pub fn search(
    cfg: &Config,
    index_dir: &Path,
    query: Option<&str>,
    qid: &str,
    topics: Option<&Path>,
    tag: Option<String>,
    out: Option<&Path>,
    flags: &ModelFlags,
) -> Result<()> {
    let eff = effective(cfg, flags)?;
    let index = open_index(index_dir)?;
    let intel = load_intel(cfg, index_dir)?;
    let tag = tag.unwrap_or_else(|| eff.ranker.name().to_string());

    let queries: Vec<(String, String)> = match (query, topics) {
        (Some(q), None) => vec![(qid.to_string(), q.to_string())],
        (None, Some(path)) => parse_topics(
            &fs::read(path).with_context(|| format!("reading topics {}", path.display()))?,
        )?
        .into_iter()
        .map(|t| (t.num, t.title))
        .collect(),
        _ => unreachable!("clap enforces exactly one input"),
    };

    let mut buf = Vec::new();
    for (qid, text) in &queries {
        let ranked = rank_query(&index, intel.as_ref(), &eff, text)?;
        tablefind_core::eval::write_run_lines(&mut buf, qid, &ranked, &tag)?;
    }
    write_or_stdout(out, &buf)
}

pub fn explain(cfg: &Config, index_dir: &Path, query_text: &str, flags: &ModelFlags) -> Result<()> {
    let eff = effective(cfg, flags)?;
    let index = open_index(index_dir)?;
    let intel = load_intel(cfg, index_dir)?;
    let tokens = tokenize(query_text);

    println!("tokens: {}", tokens.join(" "));
    let node = match eff.ranker {
        Ranker::Bm25 | Ranker::Bm25f | Ranker::Tablerank => {
            println!(
                "ranker {} uses the bag of tokens above, no structured query",
                eff.ranker.name()
            );
            return Ok(());
        }
        Ranker::LmBow => ranker::build_union_terms(&tokens)?,
        Ranker::LmSdm => baselines::build_sdm_query(&tokens, &eff.params.sdm)?,
        Ranker::Full => {
            let intel = intel.as_ref().ok_or_else(|| {
                anyhow::anyhow!(
                    "index has no query intelligence; re-run `index` or pick a baseline ranker"
                )
            })?;
            let analysis = query::analyze(query_text, &index, intel, eff.mode)?;
            for c in &analysis.concepts {
                println!(
                    "concept  {:.4}  {}  [{}]",
                    c.weight,
                    c.display,
                    c.tokens.join(" ")
                );
            }
            for q in &analysis.quantities {
                println!(
                    "quantity {:.4}  {}  p={:.3}  units: {}",
                    q.weight,
                    q.name,
                    q.probability,
                    q.symbols.join(" ")
                );
            }
            query::build_analyzed_query(&analysis, &eff.params)?
        }
    };
    println!("{}", node.to_query_string());
    Ok(())
}

pub fn eval(cfg: &Config, run_path: &Path, qrels_path: &Path) -> Result<()> {
    let run = read_run(
        &fs::read_to_string(run_path)
            .with_context(|| format!("reading run {}", run_path.display()))?,
    )
    .map_err(|e| e.with_path(run_path))?;
    let judgments = Judgments::parse(
        &fs::read_to_string(qrels_path)
            .with_context(|| format!("reading qrels {}", qrels_path.display()))?,
    )
    .map_err(|e| e.with_path(qrels_path))?;
    let cutoffs = Cutoffs {
        ap: cfg.eval.ap_cutoff,
        ndcg: cfg.eval.ndcg_cutoff,
        err: cfg.eval.err_cutoff,
    };
    let result = evaluate_run(&judgments, &run, cutoffs);
    println!("qid\tap\tndcg\terr");
    for (qid, q) in &result.per_query {
        println!("{qid}\t{:.4}\t{:.4}\t{:.4}", q.ap, q.ndcg, q.err);
    }
    println!(
        "all\t{:.4}\t{:.4}\t{:.4}",
        result.map, result.mean_ndcg, result.mean_err
    );
    Ok(())
}

pub fn sweep(
    cfg: &Config,
    index_dir: &Path,
    topics_path: &Path,
    qrels_path: &Path,
    folds_flag: Option<usize>,
    flags: &ModelFlags,
    seed: u64,
) -> Result<()> {
    let eff = effective(cfg, flags)?;
    if eff.ranker != Ranker::Full {
        bail!(
            "sweep tunes the full ranker; --ranker {} has no component weights",
            eff.ranker.name()
        );
    }
    let index = open_index(index_dir)?;
    let intel = load_intel(cfg, index_dir)?
        .ok_or_else(|| anyhow::anyhow!("index has no query intelligence; re-run `index`"))?;
    let topics = parse_topics(
        &fs::read(topics_path)
            .with_context(|| format!("reading topics {}", topics_path.display()))?,
    )?;
    let judgments = Judgments::parse(
        &fs::read_to_string(qrels_path)
            .with_context(|| format!("reading qrels {}", qrels_path.display()))?,
    )
    .map_err(|e| e.with_path(qrels_path))?;
    let cutoffs = Cutoffs {
        ap: cfg.eval.ap_cutoff,
        ndcg: cfg.eval.ndcg_cutoff,
        err: cfg.eval.err_cutoff,
    };

    let topics: Vec<&Topic> = topics
        .iter()
        .filter(|t| judgments.relevant_count(&t.num) > 0)
        .collect();
    if topics.is_empty() {
        bail!("no topic has relevant tables in the qrels");
    }

    let grid: Vec<(f64, f64)> = cfg
        .sweep
        .alphas
        .iter()
        .flat_map(|&a| cfg.sweep.betas.iter().map(move |&b| (a, b)))
        .filter(|(a, b)| a + b <= 1.0)
        .collect();

    // AP per (grid point, topic), computed once.
    let mut ap: BTreeMap<(usize, &str), f64> = BTreeMap::new();
    for (gi, (alpha, beta)) in grid.iter().enumerate() {
        let params = ModelParams {
            alpha: *alpha,
            beta: *beta,
            ..eff.params.clone()
        };
        for t in &topics {
            let analysis = query::analyze(&t.title, &index, &intel, eff.mode)?;
            let node = query::build_analyzed_query(&analysis, &params)?;
            let ranked = ranker::rank(&index, &node, &params, eff.k)?;
            let grades = judgments.grades_of(&t.num, &ranked);
            let value =
                tablefind_core::eval::ap_at(&grades, judgments.relevant_count(&t.num), cutoffs.ap)
                    .unwrap_or(0.0);
            ap.insert((gi, t.num.as_str()), value);
        }
    }

    let qids: Vec<String> = topics.iter().map(|t| t.num.clone()).collect();
    let folds = make_folds(&qids, folds_flag.unwrap_or(cfg.sweep.folds), seed)?;
    let mean = |gi: usize, qids: &[&str]| -> f64 {
        qids.iter().map(|q| ap[&(gi, *q)]).sum::<f64>() / qids.len().max(1) as f64
    };

    println!(
        "grid of {} points over {} topics, {} folds, seed {}",
        grid.len(),
        topics.len(),
        folds.len(),
        seed
    );
    println!("fold\tqueries\talpha\tbeta\ttrain_map\ttest_map");
    let mut test_maps = Vec::new();
    for (fi, fold) in folds.iter().enumerate() {
        let test: Vec<&str> = fold.iter().map(String::as_str).collect();
        let train: Vec<&str> = qids
            .iter()
            .filter(|q| !fold.contains(q))
            .map(String::as_str)
            .collect();
        // With one fold there is no held-out data: tune and test on all.
        let train = if train.is_empty() {
            test.clone()
        } else {
            train
        };
        let best = (0..grid.len())
            .max_by(|&a, &b| mean(a, &train).total_cmp(&mean(b, &train)))
            .unwrap();
        let test_map = mean(best, &test);
        println!(
            "{fi}\t{}\t{}\t{}\t{:.4}\t{:.4}",
            fold.join(","),
            grid[best].0,
            grid[best].1,
            mean(best, &train),
            test_map,
        );
        test_maps.push(test_map);
    }
    println!(
        "cv_map\t{:.4}",
        test_maps.iter().sum::<f64>() / test_maps.len() as f64
    );
    Ok(())
}

pub fn mine_units(cfg: &Config, records_path: &Path, out: Option<&Path>) -> Result<()> {
    let records = read_records(records_path)
        .with_context(|| format!("reading records {}", records_path.display()))?;
    let (_, lexicon, ontology) = load_resources(&cfg.paths)?;
    let mined = mine_records(&records, &ontology, &lexicon);
    let mut buf = Vec::new();
    for m in &mined {
        writeln!(buf, "{}\t{}\t{}", m.phrase, m.symbol, m.type_name)?;
    }
    write_or_stdout(out, &buf)
}

pub fn train_quantity(cfg: &Config, pairs_path: &Path, out: &Path) -> Result<()> {
    let (_, _, ontology) = load_resources(&cfg.paths)?;
    let text = fs::read_to_string(pairs_path)
        .with_context(|| format!("reading pairs {}", pairs_path.display()))?;
    let mut mined = Vec::new();
    for (ix, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(Error::Format {
                what: "training pairs",
                path: Some(pairs_path.to_path_buf()),
                detail: format!("line {}: expected 3 tab-separated columns", ix + 1),
            }
            .into());
        }
        if ontology.get(cols[2]).is_none() {
            return Err(Error::Format {
                what: "training pairs",
                path: Some(pairs_path.to_path_buf()),
                detail: format!("line {}: unknown quantity type `{}`", ix + 1, cols[2]),
            }
            .into());
        }
        mined.push(MinedUnit {
            phrase: cols[0].to_string(),
            tokens: tokenize(cols[0]),
            symbol: cols[1].to_string(),
            type_name: cols[2].to_string(),
        });
    }
    let mut model = QuantityModel::train(ontology, mined)?;
    model.classifier.threshold = cfg.quantity.threshold;
    fs::write(out, serde_json::to_string(&model)?)?;
    println!(
        "trained on {} pairs; weights {:?}",
        model.mined.len(),
        model.classifier.weights
    );
    Ok(())
}

pub fn dump_stats(index_dir: &Path, out: Option<&Path>) -> Result<()> {
    let index = open_index(index_dir)?;
    let mut buf = Vec::new();
    index.write_stats_tsv(&mut buf)?;
    write_or_stdout(out, &buf)
}
