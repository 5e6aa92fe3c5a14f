use std::fmt;
use std::io::Write;
use std::path::PathBuf;

use arelu::bench::{self, BenchConfig};
use arelu::experiments::tasks::{objective_for, TauChoice};
use arelu::experiments::{
    dynamics_check, empty_sequence_rate, sparsity_histogram, tau_sweep, ClassificationTask,
    CopyTaskConfig,
};
use arelu::nnet::{Activation, ClusterConfig, OptimizerConfig, OptimizerKind, TinyNetwork};
use serde_json::json;

use crate::args::*;
use crate::output::{resolve_out_dir, RunDir, Settings};

/// A configuration problem reported with usage exit status.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Fails with every missing key listed at once.
fn require(missing: &[(&str, bool)]) -> anyhow::Result<()> {
    let keys: Vec<&str> = missing.iter().filter(|(_, present)| !present).map(|(k, _)| *k).collect();
    if keys.is_empty() {
        Ok(())
    } else {
        Err(usage(format!(
            "missing required config keys: {}\nset them as flags (e.g. --{}=...) or as key=value lines in a --config file",
            keys.join(", "),
            keys[0]
        )))
    }
}

fn tau_text(tau: TauChoice) -> String {
    match tau {
        TauChoice::Calibrate => "calibrate".into(),
        TauChoice::Fixed(t) => t.to_string(),
    }
}

fn optimizer(kind: OptimizerArg, lr: f64, steps: usize) -> OptimizerConfig {
    match kind {
        OptimizerArg::Sgd => OptimizerConfig::sgd(lr, steps),
        OptimizerArg::Adam => OptimizerConfig::adam(lr, steps),
    }
}

fn resolve_optimizer(opts: &TrainOpts, base: OptimizerConfig, s: &mut Settings) -> OptimizerConfig {
    let kind = opts.optimizer.unwrap_or(match base.kind {
        OptimizerKind::Sgd => OptimizerArg::Sgd,
        OptimizerKind::Adam => OptimizerArg::Adam,
    });
    let cfg = optimizer(kind, opts.lr.unwrap_or(base.lr), opts.steps.unwrap_or(base.steps));
    s.set("optimizer", if kind == OptimizerArg::Sgd { "sgd" } else { "adam" });
    s.set("lr", cfg.lr).set("steps", cfg.steps);
    cfg
}

fn cluster_config(c: &ClusterOpts, s: &mut Settings) -> ClusterConfig {
    let d = ClusterConfig::default();
    let cfg = ClusterConfig {
        classes: c.classes.unwrap_or(d.classes),
        dim: c.dim.unwrap_or(d.dim),
        per_class: c.per_class.unwrap_or(d.per_class),
        noise: c.noise.unwrap_or(d.noise),
        center_scale: c.center_scale.unwrap_or(d.center_scale),
    };
    s.set("classes", cfg.classes)
        .set("dim", cfg.dim)
        .set("per-class", cfg.per_class)
        .set("noise", cfg.noise)
        .set("center-scale", cfg.center_scale);
    cfg
}

fn classification_task(train: &TrainOpts, c: &ClusterOpts, s: &mut Settings) -> anyhow::Result<ClassificationTask> {
    let mut t = ClassificationTask { clusters: cluster_config(c, s), ..ClassificationTask::default() };
    if let Some(h) = &train.hidden {
        t.hidden = h.0.clone();
    }
    t.train.optimizer = resolve_optimizer(train, t.train.optimizer, s);
    t.train.batch_size = train.batch_size.unwrap_or(t.train.batch_size);
    t.train.log_every = train.log_every.unwrap_or(t.train.log_every);
    t.alpha = train.alpha.unwrap_or(t.alpha);
    s.set("hidden", List(t.hidden.clone()))
        .set("batch-size", t.train.batch_size)
        .set("log-every", t.train.log_every)
        .set("alpha", t.alpha);
    Ok(t)
}

fn copy_task(train: &TrainOpts, c: &CopyOpts, s: &mut Settings) -> anyhow::Result<CopyTaskConfig> {
    let mut t = CopyTaskConfig::default();
    t.task.vocab = c.vocab.unwrap_or(t.task.vocab);
    t.task.min_len = c.min_len.unwrap_or(t.task.min_len);
    t.task.max_len = c.max_len.unwrap_or(t.task.max_len);
    t.train_size = c.train_size.unwrap_or(t.train_size);
    t.dev_size = c.dev_size.unwrap_or(t.dev_size);
    t.embed_dim = c.embed_dim.unwrap_or(t.embed_dim);
    if let Some(h) = &train.hidden {
        match h.0.as_slice() {
            [w] => t.hidden = *w,
            _ => return Err(usage("the sequence model takes a single --hidden width")),
        }
    }
    t.train.optimizer = resolve_optimizer(train, t.train.optimizer, s);
    t.train.batch_size = train.batch_size.unwrap_or(t.train.batch_size);
    t.train.log_every = train.log_every.unwrap_or(t.train.log_every);
    t.alpha = train.alpha.unwrap_or(t.alpha);
    s.set("vocab", t.task.vocab)
        .set("min-len", t.task.min_len)
        .set("max-len", t.task.max_len)
        .set("train-size", t.train_size)
        .set("dev-size", t.dev_size)
        .set("embed-dim", t.embed_dim)
        .set("hidden", t.hidden)
        .set("batch-size", t.train.batch_size)
        .set("log-every", t.train.log_every)
        .set("alpha", t.alpha);
    Ok(t)
}

fn start(run: &RunOpts, command: &str, extra: &[(&str, bool)]) -> anyhow::Result<(u64, RunDir, Settings)> {
    let mut keys = vec![("seed", run.seed.is_some())];
    keys.extend_from_slice(extra);
    require(&keys)?;
    let seed = run.seed.expect("checked above");
    let dir = RunDir::create(resolve_out_dir(run.out.as_deref(), command, seed))?;
    let mut s = Settings::default();
    s.set("seed", seed);
    Ok((seed, dir, s))
}

pub fn bench(a: &BenchArgs) -> anyhow::Result<PathBuf> {
    let mut dir = RunDir::create(resolve_out_dir(a.out.as_deref(), "bench", a.seed))?;
    let mut records = Vec::new();
    for &dim in &a.dims.0 {
        let cfg = BenchConfig {
            kinds: a.transforms.0.clone(),
            dim,
            batch: a.batch,
            iters: a.iters,
            warmup: a.warmup,
            precision: a.precision,
            alpha: a.alpha,
            tau: a.tau,
            logit_scale: a.logit_scale,
            seed: a.seed,
            threads: a.threads,
        };
        let rows = bench::run_bench(&cfg).map_err(|e| usage(e.to_string()))?;
        for r in &rows {
            println!("{:>16} d={:<7} mean {:>12.0} ns  p50 {:>12.0} ns  p95 {:>12.0} ns", r.transform, r.dim, r.mean_ns, r.p50_ns, r.p95_ns);
        }
        records.extend(rows);
    }
    bench::write_csv(&records, dir.file("bench.csv")?)?;
    let mut s = Settings::default();
    s.set("transforms", &a.transforms)
        .set("dims", &a.dims)
        .set("batch", a.batch)
        .set("iters", a.iters)
        .set("warmup", a.warmup)
        .set("precision", if a.precision == bench::Precision::F32 { "f32" } else { "f64" })
        .set("threads", a.threads)
        .set("alpha", a.alpha)
        .set("tau", a.tau)
        .set("logit-scale", a.logit_scale)
        .set("seed", a.seed);
    dir.finish("bench", a.seed, s)
}

pub fn train(a: &TrainArgs) -> anyhow::Result<PathBuf> {
    let (seed, mut dir, mut s) = start(&a.run, "train", &[("loss", a.loss.is_some())])?;
    let kind = a.loss.expect("checked above");
    let task = classification_task(&a.train, &a.clusters, &mut s)?;
    s.set("loss", kind).set("tau", tau_text(a.tau));
    let run = task.run(kind, a.tau, seed)?;

    let mut w = dir.file("train.jsonl")?;
    run.log.write_jsonl(&mut w)?;
    w.flush()?;
    dir.json("metrics.json", &json!({ "objective": run.objective, "metrics": run.metrics }))?;
    run.net.save_json(dir.track("checkpoint.json"))?;
    println!(
        "{}: accuracy {:.4}, loss {:.5}, zero fraction {:.3}",
        run.objective.label(),
        run.metrics.accuracy,
        run.metrics.loss,
        run.metrics.sparsity_mean
    );
    dir.finish("train", seed, s)
}

pub fn tau_sweep_cmd(a: &TauSweepArgs) -> anyhow::Result<PathBuf> {
    let (seed, mut dir, mut s) = start(&a.run, "tau-sweep", &[])?;
    let task = classification_task(&a.train, &a.clusters, &mut s)?;
    s.set("taus", &a.taus);
    let points = tau_sweep(&a.taus.0, &task, seed)?;
    arelu::experiments::tau_sweep::write_curves_csv(&points, dir.file("tau_sweep.csv")?)?;
    let summary: Vec<_> = points
        .iter()
        .map(|p| {
            println!("tau {:>6}: final {:.4}  first logged {:.4}  curve mean {:.4}", p.tau, p.final_accuracy, p.early_accuracy, p.mean_accuracy);
            json!({ "tau": p.tau, "final_accuracy": p.final_accuracy, "early_accuracy": p.early_accuracy, "mean_accuracy": p.mean_accuracy })
        })
        .collect();
    dir.json("summary.json", &summary)?;
    dir.finish("tau-sweep", seed, s)
}

pub fn ntk_check(a: &NtkArgs) -> anyhow::Result<PathBuf> {
    let (seed, mut dir, mut s) = start(&a.run, "ntk-check", &[])?;
    let task = ClassificationTask { clusters: cluster_config(&a.clusters, &mut s), alpha: a.alpha, ..ClassificationTask::default() };
    s.set("alpha", a.alpha)
        .set("transforms", &a.transforms)
        .set("widths", &a.widths)
        .set("points", a.points)
        .set("eta", a.eta)
        .set("steps", a.steps)
        .set("tau", tau_text(a.tau));
    let data = task.dataset(seed)?;
    if a.points == 0 || a.points > data.len() {
        return Err(usage(format!("--points must be in 1..={}", data.len())));
    }
    let data = data.head(a.points);

    let mut reports = Vec::new();
    let mut summary = Vec::new();
    for &kind in &a.transforms.0 {
        let mut errors = Vec::new();
        for &width in &a.widths.0 {
            let mut net = TinyNetwork::new(&[data.dim(), width, data.classes], Activation::Relu, seed)?;
            let tau = match a.tau {
                TauChoice::Fixed(t) => t,
                TauChoice::Calibrate => task.calibrate(&net, &data)?,
            };
            let r = dynamics_check(&mut net, &data, &objective_for(kind, a.alpha, tau), a.eta, a.steps)?;
            println!(
                "{:>16} width {:>5}: min cosine {:.6}  mean rel error {:.3e}  min eig {:.3e}",
                kind.name(),
                width,
                r.min_cosine,
                r.mean_rel_error,
                r.min_kernel_eig
            );
            errors.push(r.mean_rel_error);
            summary.push(json!({
                "transform": r.transform,
                "width": width,
                "min_cosine": r.min_cosine,
                "mean_cosine": r.mean_cosine,
                "mean_rel_error": r.mean_rel_error,
                "min_kernel_eig": r.min_kernel_eig,
            }));
            reports.push(r);
        }
        let monotone = errors.windows(2).all(|w| w[1] < w[0]);
        println!("{:>16} error decreases with width: {monotone}", kind.name());
    }
    arelu::experiments::dynamics::write_probes_csv(&reports, dir.file("ntk.csv")?)?;
    dir.json("summary.json", &summary)?;
    dir.finish("ntk-check", seed, s)
}

pub fn sparsity(a: &SparsityArgs) -> anyhow::Result<PathBuf> {
    let (seed, mut dir, mut s) = start(&a.run, "sparsity", &[])?;
    s.set("transforms", &a.transforms).set("tau", tau_text(a.tau)).set("buckets", a.buckets);
    let mut rows = Vec::new();
    match a.task {
        TaskArg::Cls => {
            s.set("task", "cls");
            let task = classification_task(&a.train, &a.clusters, &mut s)?;
            let data = task.dataset(seed)?;
            for &kind in &a.transforms.0 {
                let run = task.run(kind, a.tau, seed)?;
                let logits = run.net.forward_batch(data.inputs.view())?;
                let stats = sparsity_histogram(&run.objective, logits.outer_iter().map(|r| r.to_slice().unwrap()), a.buckets)?;
                rows.push((run.objective.label(), stats));
            }
        }
        TaskArg::Copy => {
            s.set("task", "copy");
            let task = copy_task(&a.train, &a.copy, &mut s)?;
            for &kind in &a.transforms.0 {
                let run = task.run(kind, a.tau, seed)?;
                let (logits, _) = run.model.teacher_forced_logits(&run.dev)?;
                let stats = sparsity_histogram(&run.objective, logits.outer_iter().map(|r| r.to_slice().unwrap()), a.buckets)?;
                rows.push((run.objective.label(), stats));
            }
        }
    }
    arelu::experiments::sparsity::write_histogram_csv(&rows, dir.file("sparsity.csv")?)?;
    let summary: Vec<_> = rows
        .iter()
        .map(|(label, st)| {
            println!("{label:>32}: mean zero fraction {:.4}  median {:.4}", st.mean, st.median);
            json!({ "transform": label, "mean": st.mean, "median": st.median, "examples": st.zero_fractions.len() })
        })
        .collect();
    dir.json("summary.json", &summary)?;
    dir.finish("sparsity", seed, s)
}

pub fn empty_seq(a: &EmptySeqArgs) -> anyhow::Result<PathBuf> {
    let (seed, mut dir, mut s) = start(&a.run, "empty-seq", &[])?;
    let task = copy_task(&a.train, &a.copy, &mut s)?;
    s.set("transforms", &a.transforms).set("tau", tau_text(a.tau)).set("beam-width", a.beam_width);
    let mut csv = csv::Writer::from_writer(dir.file("empty_seq.csv")?);
    csv.write_record(["transform", "examples", "empty_preferred", "rate_pct", "eos_zero_at_start", "exact_match"])?;
    for &kind in &a.transforms.0 {
        let run = task.run(kind, a.tau, seed)?;
        let mut w = dir.file(&format!("train-{}.jsonl", kind.name()))?;
        run.log.write_jsonl(&mut w)?;
        w.flush()?;
        let r = empty_sequence_rate(&run.model, &run.dev, &run.objective, a.beam_width)?;
        println!(
            "{:>32}: empty preferred {:>5.1}%  EOS exactly 0 at step 1 on {}/{}  exact match {:.3}",
            r.transform, r.rate_pct, r.eos_zero_at_start, r.examples, r.exact_match
        );
        csv.write_record([
            r.transform.clone(),
            r.examples.to_string(),
            r.empty_preferred.to_string(),
            r.rate_pct.to_string(),
            r.eos_zero_at_start.to_string(),
            r.exact_match.to_string(),
        ])?;
    }
    csv.flush()?;
    drop(csv);
    dir.finish("empty-seq", seed, s)
}

pub fn calibrate(a: &CalibrateArgs) -> anyhow::Result<PathBuf> {
    let (seed, mut dir, mut s) = start(&a.run, "calibrate", &[])?;
    let (task_name, tau, alpha, rows) = match a.task {
        TaskArg::Cls => {
            let task = classification_task(&a.train, &a.clusters, &mut s)?;
            let data = task.dataset(seed)?;
            let net = task.network(seed)?;
            ("cls", task.calibrate(&net, &data)?, task.alpha, task.train.batch_size.min(data.len()))
        }
        TaskArg::Copy => {
            let task = copy_task(&a.train, &a.copy, &mut s)?;
            let (train, _) = task.data(seed)?;
            let model = task.model(seed)?;
            let first = &train[..task.train.batch_size.min(train.len())];
            let rows = first.iter().map(|e| e.target.len() + 1).sum::<usize>();
            ("copy", task.calibrate(&model, &train)?, task.alpha, rows)
        }
    };
    s.set("task", task_name);
    println!("calibrated tau = {tau}  (alpha {alpha}, {rows} logit rows)");
    dir.json("calibration.json", &json!({ "task": task_name, "alpha": alpha, "tau": tau, "rows": rows }))?;
    dir.finish("calibrate", seed, s)
}

pub fn run(cli: &Cli) -> anyhow::Result<PathBuf> {
    let result = match &cli.command {
        Command::Bench(a) => bench(a),
        Command::Train(a) => train(a),
        Command::TauSweep(a) => tau_sweep_cmd(a),
        Command::NtkCheck(a) => ntk_check(a),
        Command::Sparsity(a) => sparsity(a),
        Command::EmptySeq(a) => empty_seq(a),
        Command::Calibrate(a) => calibrate(a),
    };
    result.map_err(|e| match e.downcast_ref::<arelu::Error>() {
        Some(arelu::Error::Config(msg)) => usage(msg.clone()),
        _ => e,
    })
}
