use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::cli::config::{AblateSection, ClusterSection, EvalSection, Metric, RunConfig};
use crate::cli::manifest::RunManifest;
use crate::cli::{
    usage, AblateArgs, ClusterArgs, CliError, Command, CommonArgs, EvalArgs, GradcheckArgs, SynthArgs, TrainArgs,
};
use crate::clustering::{kmeans_fit, KMeansConfig};
use crate::data::{default_ids, load_embeddings, save_embeddings, synth_conflict_dataset, EmbeddingSet, SyntheticSpec};
use crate::error::Error;
use crate::eval::{
    map_at_100, parse_grid_values, recall_at_ks, run_ablation, truncate_dims, RetrievalReport,
};
use crate::gradcheck::{run_gradcheck, GradcheckConfig};
use crate::trainer::{load_checkpoint, save_checkpoint, train, FeatureSelection, TrainConfig};

type CliResult<T = ()> = Result<T, CliError>;

/// Settings shared by every command after `--config` and flags are merged.
struct Session {
    cfg: RunConfig,
    seed: u64,
    threads: Option<usize>,
}

fn open_session(common: &CommonArgs) -> CliResult<Session> {
    let cfg = match &common.config {
        Some(path) => RunConfig::from_json_str(&fs::read_to_string(path)?).map_err(|e| match e {
            Error::InvalidParameter(m) => CliError::Usage(m),
            other => CliError::Lib(other),
        })?,
        None => RunConfig::default(),
    };
    let seed = common.seed.or(cfg.seed).unwrap_or(0);
    let threads = common.threads.or(cfg.threads);
    if threads == Some(0) {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    if let Some(n) = threads {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(Session { cfg, seed, threads })
}

fn json<T: Serialize>(v: &T) -> CliResult<serde_json::Value> {
    Ok(serde_json::to_value(v).map_err(Error::from)?)
}

fn write_text(dir: &Path, name: &str, text: &str) -> CliResult {
    fs::write(dir.join(name), text)?;
    Ok(())
}

fn write_json<T: Serialize>(dir: &Path, name: &str, v: &T) -> CliResult {
    let mut text = serde_json::to_string_pretty(v).map_err(Error::from)?;
    text.push('\n');
    write_text(dir, name, &text)
}

pub(crate) fn dispatch(command: Command) -> CliResult {
    match command {
        Command::Synth(a) => synth(a),
        Command::Cluster(a) => cluster(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Ablate(a) => ablate(a),
        Command::Gradcheck(a) => gradcheck(a),
    }
}

fn synth(a: SynthArgs) -> CliResult {
    let s = open_session(&a.common)?;
    let spec = SyntheticSpec {
        true_classes: a.classes.unwrap_or(s.cfg.synth.true_classes),
        per_class: a.per_class.unwrap_or(s.cfg.synth.per_class),
        dim: a.dim.unwrap_or(s.cfg.synth.dim),
        intra_noise: a.noise.unwrap_or(s.cfg.synth.intra_noise),
        conflict_ratio: a.conflict.unwrap_or(s.cfg.synth.conflict_ratio),
        seed: s.seed,
    };
    usage(spec.validate())?;
    let out = &a.common.out;
    RunManifest::new("synth", s.seed, s.threads, json(&spec)?)
        .outputs(&["data.uceb", "truth.uceb"])
        .write(out)?;

    let (set, truth) = synth_conflict_dataset(&spec)?;
    save_embeddings(&set, out.join("data.uceb"))?;
    save_embeddings(&set.with_labels(Some(truth))?, out.join("truth.uceb"))?;
    println!(
        "wrote {} rows ({} true classes, {} pseudo labels) to {}",
        set.count(),
        spec.true_classes,
        spec.pseudo_classes(),
        out.display()
    );
    Ok(())
}

fn cluster(a: ClusterArgs) -> CliResult {
    let s = open_session(&a.common)?;
    let section = ClusterSection {
        k: a.k.unwrap_or(s.cfg.cluster.k),
        max_iters: a.max_iters.unwrap_or(s.cfg.cluster.max_iters),
        tol: a.tol.unwrap_or(s.cfg.cluster.tol),
        init: a.init.unwrap_or(s.cfg.cluster.init),
    };
    if section.k == 0 {
        return Err(CliError::Usage("--k must be at least 1".into()));
    }
    if section.max_iters == 0 || !(section.tol >= 0.0) {
        return Err(CliError::Usage("--max-iters must be >= 1 and --tol >= 0".into()));
    }
    let out = &a.common.out;
    RunManifest::new("cluster", s.seed, s.threads, json(&section)?)
        .input("input", &a.input)
        .outputs(&["centroids.uceb", "labeled.uceb", "objective.tsv"])
        .write(out)?;

    let data = load_embeddings(&a.input)?;
    let km = KMeansConfig {
        max_iters: section.max_iters,
        tol: section.tol,
        init: section.init,
        ..KMeansConfig::new(section.k, s.seed)
    };
    let result = kmeans_fit(&data, &km)?;
    let centroids = EmbeddingSet::from_matrix(&result.centroids, Some(default_ids("c", result.k())), None)?;
    save_embeddings(&centroids, out.join("centroids.uceb"))?;
    let labels = result.assignments.iter().map(|&c| c as i64).collect();
    save_embeddings(&data.with_labels(Some(labels))?, out.join("labeled.uceb"))?;

    let mut trace = String::from("iteration\tobjective\n");
    for (i, v) in result.objective_trace.iter().enumerate() {
        let _ = writeln!(trace, "{i}\t{v}");
    }
    write_text(out, "objective.tsv", &trace)?;
    print!("{trace}");
    Ok(())
}

fn resolve_train(a: &TrainArgs, s: &Session) -> TrainConfig {
    let mut c = s.cfg.train.clone();
    c.seed = s.seed;
    if let Some(v) = a.epochs {
        c.epochs = v;
    }
    if let Some(v) = a.batch_size {
        c.batch_size = v;
    }
    if let Some(v) = a.optimizer {
        c.optimizer = v;
    }
    if let Some(v) = a.lr {
        c.lr = v;
    }
    if let Some(v) = a.wd {
        c.weight_decay = v;
    }
    if let Some(v) = a.r1 {
        c.loss.r1 = v;
    }
    if let Some(v) = a.r2 {
        c.loss.r2 = v;
    }
    if let Some(v) = a.r3 {
        c.features = FeatureSelection::Dropout { r3: v };
    }
    if let Some(v) = a.margin {
        c.loss.margin = v;
    }
    if let Some(v) = a.scale {
        c.loss.scale = v;
    }
    if let Some(v) = a.output_dim {
        c.output_dim = v;
    }
    if let Some(v) = a.prototype_init {
        c.prototype_init = v;
    }
    if let Some(v) = a.encoder_init {
        c.encoder_init = v;
    }
    c
}

fn train_cmd(a: TrainArgs) -> CliResult {
    let s = open_session(&a.common)?;
    let cfg = resolve_train(&a, &s);
    usage(cfg.validate())?;
    let out = &a.common.out;
    RunManifest::new("train", s.seed, s.threads, json(&cfg)?)
        .input("input", &a.input)
        .outputs(&[
            "encoder.uceb",
            "prototypes.uceb",
            "checkpoint.json",
            "loss_curve.tsv",
            "embeddings.uceb",
        ])
        .write(out)?;

    let data = load_embeddings(&a.input)?;
    let outcome = train(&data, &cfg)?;
    save_checkpoint(out, &outcome.encoder, &outcome.prototypes, &cfg, outcome.losses.len() as u64)?;
    let mut curve = String::new();
    for (i, l) in outcome.losses.iter().enumerate() {
        let _ = writeln!(curve, "{i}\t{l}");
    }
    write_text(out, "loss_curve.tsv", &curve)?;
    save_embeddings(&outcome.encoder.encode_set(&data)?, out.join("embeddings.uceb"))?;
    if let (Some(first), Some(last)) = (outcome.losses.first(), outcome.losses.last()) {
        println!("{} steps, loss {first:.6} -> {last:.6}", outcome.losses.len());
    }
    Ok(())
}

fn eval(a: EvalArgs) -> CliResult {
    let s = open_session(&a.common)?;
    let section = EvalSection {
        metric: a.metric.unwrap_or(s.cfg.eval.metric),
        k: a.k.clone().unwrap_or_else(|| s.cfg.eval.k.clone()),
        dims: a.dims.or(s.cfg.eval.dims),
    };
    if section.k.is_empty() || section.k.contains(&0) {
        return Err(CliError::Usage("--k values must be at least 1".into()));
    }
    if section.dims == Some(0) {
        return Err(CliError::Usage("--dims must be at least 1".into()));
    }
    if section.metric == Metric::Map100 && a.gallery.is_none() {
        return Err(CliError::Usage("--metric map100 needs --gallery".into()));
    }
    let out = &a.common.out;
    let mut manifest = RunManifest::new("eval", s.seed, s.threads, json(&section)?)
        .input("input", &a.input)
        .outputs(&["report.json", "report.tsv"]);
    if let Some(g) = &a.gallery {
        manifest = manifest.input("gallery", g);
    }
    if let Some(c) = &a.checkpoint {
        manifest = manifest.input("checkpoint", c);
    }
    manifest.write(out)?;

    let encoder = match &a.checkpoint {
        Some(dir) => Some(load_checkpoint(dir)?.encoder),
        None => None,
    };
    let prepare = |path: &Path| -> CliResult<EmbeddingSet> {
        let mut set = load_embeddings(path)?;
        if let Some(enc) = &encoder {
            set = enc.encode_set(&set)?;
        }
        if let Some(d) = section.dims {
            set = truncate_dims(&set, d)?;
        }
        Ok(set)
    };
    let queries = prepare(&a.input)?;
    let mut report = RetrievalReport {
        recall_at: Default::default(),
        map_at_100: None,
        dims_used: queries.dim(),
        config: json(&section)?,
    };
    match section.metric {
        Metric::Recall => report.recall_at = recall_at_ks(&queries, &section.k)?,
        Metric::Map100 => {
            let gallery = prepare(a.gallery.as_deref().expect("checked above"))?;
            report.map_at_100 = Some(map_at_100(&queries, &gallery)?);
        }
    }

    let mut tsv = String::from("metric\tvalue\n");
    for (k, v) in &report.recall_at {
        let _ = writeln!(tsv, "recall@{k}\t{v}");
    }
    if let Some(m) = report.map_at_100 {
        let _ = writeln!(tsv, "map@100\t{m}");
    }
    let _ = writeln!(tsv, "dims\t{}", report.dims_used);
    write_text(out, "report.tsv", &tsv)?;
    write_json(out, "report.json", &report)?;
    print!("{tsv}");
    Ok(())
}

fn resolve_ablate(a: &AblateArgs, s: &Session) -> CliResult<AblateSection> {
    let mut c = s.cfg.ablate.clone();
    if let Some(p) = a.param {
        c.param = Some(p);
    }
    if let Some(v) = &a.values {
        c.values = usage(parse_grid_values(v))?;
    }
    if let Some(v) = a.seeds {
        c.seeds = v;
    }
    let b = &mut c.base;
    if let Some(v) = a.report_dims {
        b.report_dims = Some(v);
    }
    if let Some(v) = a.dim {
        b.data.dim = v;
    }
    if let Some(v) = a.classes {
        b.data.true_classes = v;
    }
    if let Some(v) = a.per_class {
        b.data.per_class = v;
    }
    if let Some(v) = a.noise {
        b.data.intra_noise = v;
    }
    if let Some(v) = a.conflict {
        b.data.conflict_ratio = v;
    }
    if let Some(v) = a.holdout_per_class {
        b.holdout_per_class = v;
    }
    if let Some(v) = a.epochs {
        b.train.epochs = v;
    }
    if let Some(v) = a.batch_size {
        b.train.batch_size = v;
    }
    if let Some(v) = a.lr {
        b.train.lr = v;
    }
    if let Some(v) = a.output_dim {
        b.train.output_dim = v;
    }
    if let Some(v) = a.cluster_k {
        b.cluster_k = Some(v);
    }
    if let Some(v) = a.recall_k {
        b.recall_k = v;
    }
    b.data.seed = s.seed;
    b.train.seed = s.seed;
    Ok(c)
}

fn validate_ablate(c: &AblateSection) -> CliResult {
    let param = c.param.ok_or_else(|| CliError::Usage("--param is required".into()))?;
    if c.values.len() < 2 {
        return Err(CliError::Usage("--values needs at least 2 grid values".into()));
    }
    if c.seeds < 3 {
        return Err(CliError::Usage("--seeds must be at least 3".into()));
    }
    for &v in &c.values {
        usage(param.validate_value(v))?;
    }
    let b = &c.base;
    usage(b.data.validate())?;
    usage(b.train.validate())?;
    if b.holdout_per_class < 2 || b.recall_k == 0 {
        return Err(CliError::Usage("--holdout-per-class must be >= 2 and --recall-k >= 1".into()));
    }
    let out_dim = if b.train.output_dim == 0 { b.data.dim } else { b.train.output_dim };
    if let Some(d) = b.report_dims {
        if d == 0 || d > out_dim {
            return Err(CliError::Usage(format!("--report-dims must lie in 1..={out_dim}")));
        }
    }
    Ok(())
}

fn ablate(a: AblateArgs) -> CliResult {
    let s = open_session(&a.common)?;
    let section = resolve_ablate(&a, &s)?;
    validate_ablate(&section)?;
    let out = &a.common.out;
    RunManifest::new("ablate", s.seed, s.threads, json(&section)?)
        .outputs(&["ablation.tsv", "ablation.json"])
        .write(out)?;

    let seeds: Vec<u64> = (0..section.seeds as u64).map(|i| s.seed.wrapping_add(i)).collect();
    let param = section.param.expect("validated");
    let table = run_ablation(param, &section.values, &section.base, &seeds)?;
    let tsv = table.to_tsv();
    write_text(out, "ablation.tsv", &tsv)?;
    write_text(out, "ablation.json", &table.to_json()?)?;
    print!("{tsv}");
    Ok(())
}

fn gradcheck(a: GradcheckArgs) -> CliResult {
    let s = open_session(&a.common)?;
    let d = &s.cfg.gradcheck;
    let cfg = GradcheckConfig {
        trials: a.trials.unwrap_or(d.trials),
        tol: a.tol.unwrap_or(d.tol),
        step: a.step.unwrap_or(d.step),
        max_scale: a.max_scale.unwrap_or(d.max_scale),
        inject_sign_flip: a.inject_sign_flip || d.inject_sign_flip,
        seed: s.seed,
        ..d.clone()
    };
    if cfg.trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    if !(cfg.tol > 0.0) || !(cfg.step > 0.0) || !(cfg.max_scale >= 1.0) {
        return Err(CliError::Usage("--tol and --step must be > 0, --max-scale >= 1".into()));
    }
    let out = &a.common.out;
    RunManifest::new("gradcheck", s.seed, s.threads, json(&cfg)?)
        .outputs(&["gradcheck.tsv", "gradcheck.json"])
        .write(out)?;

    let report = run_gradcheck(&cfg)?;
    let mut tsv = String::from("trial\tbatch\tdim\tclasses\tsubset\tactive\trel_error\n");
    for t in &report.trials {
        let _ = writeln!(
            tsv,
            "{}\t{}\t{}\t{}\t{}\t{}\t{:e}",
            t.trial, t.batch, t.dim, t.classes, t.subset, t.active_features, t.rel_error
        );
    }
    write_text(out, "gradcheck.tsv", &tsv)?;
    write_json(out, "gradcheck.json", &report)?;
    let verdict = if report.passed { "PASS" } else { "FAIL" };
    println!(
        "{verdict}: max relative error {:e} over {} trials (tolerance {:e})",
        report.max_rel_error,
        report.trials.len(),
        report.tol
    );
    if report.passed {
        Ok(())
    } else {
        Err(CliError::Failed("gradient check failed".into()))
    }
}
