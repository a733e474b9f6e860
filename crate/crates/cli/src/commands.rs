//! Subcommand implementations.

use std::path::{Path, PathBuf};

use soda_core::eval::standard_eval;
use soda_core::numerics::derive_seed;
use soda_core::pipeline::{
    build_pref_dataset, build_world, distill_soda_full, generate_teacher_data,
    make_rejection_source, run_gad_full, run_seqkd, take_snapshot, warmup, ArchSpec,
    BlackBoxTeacher, CostCounters, RejectionSource, TrainConfig, World,
};
use soda_core::report::{RunReport, REPORT_SCHEMA_VERSION};
use soda_core::repr::repr_report;
use soda_core::SodaError;

use crate::config::{ExperimentSpec, Method};
use crate::error::{CliError, CliResult};
use crate::io;

/// Builds the world for one seed of the spec.
fn seed_world(spec: &ExperimentSpec, seed: u64) -> CliResult<(TrainConfig, World)> {
    let cfg = TrainConfig {
        seed,
        ..spec.train.clone()
    };
    let world = build_world(
        &cfg,
        spec.vocab_size,
        spec.architecture,
        spec.n_prompts,
        spec.n_heldout,
    )?;
    Ok((cfg, world))
}

fn seeds(spec: &ExperimentSpec, seed_override: Option<u64>) -> Vec<u64> {
    match seed_override {
        Some(s) => vec![s],
        None => spec.seeds.clone(),
    }
}

fn require_method(spec: &ExperimentSpec, expected: Method, subcommand: &str) -> CliResult<()> {
    if spec.method != expected {
        return Err(CliError::config_invalid(format!(
            "method: `{subcommand}` expects method = {expected}, config says {}",
            spec.method
        )));
    }
    Ok(())
}

fn write_report(dir: &Path, report: &RunReport) -> CliResult<()> {
    io::atomic_write(
        &dir.join("report.json"),
        serde_json::to_string_pretty(report)?.as_bytes(),
    )?;
    io::atomic_write(&dir.join("metrics.csv"), report.metrics_csv().as_bytes())?;
    Ok(())
}

/// Regenerates the run's datasets from the master seed for persistence; the
/// derivation is deterministic, so the bytes match what training consumed.
fn persist_datasets(
    dir: &Path,
    cfg: &TrainConfig,
    world: &World,
    include_negatives: bool,
) -> CliResult<()> {
    let teacher = BlackBoxTeacher::new(world.teacher_params.clone());
    let mut scratch = CostCounters::default();
    let teacher_data = generate_teacher_data(&teacher, &world.prompts, cfg, &mut scratch)?;
    io::write_dataset(&dir.join("teacher_data.jsonl"), &teacher_data, |i| {
        derive_seed(cfg.seed, "teacher_data", i as u64)
    })?;
    if include_negatives {
        let negatives = make_rejection_source(
            cfg.rejection_source,
            cfg,
            &world.base_student,
            Some(&world.cross_student),
            &world.prompts,
            &mut scratch,
        )?;
        io::write_dataset(&dir.join("snapshot.jsonl"), &negatives, |i| {
            derive_seed(cfg.seed, "snapshot", i as u64)
        })?;
        let pref = build_pref_dataset(&teacher_data, &negatives)?;
        io::write_pref_dataset(&dir.join("pref.jsonl"), &pref, |i| {
            derive_seed(cfg.seed, "snapshot", i as u64)
        })?;
    }
    Ok(())
}

pub fn gen_data(spec: &ExperimentSpec, seed_override: Option<u64>) -> CliResult<()> {
    let out = spec.effective_out_dir();
    for seed in seeds(spec, seed_override) {
        let (cfg, world) = seed_world(spec, seed)?;
        let dir = io::run_dir(&out, "world", seed);
        std::fs::create_dir_all(&dir)?;
        io::write_checkpoint(&dir.join("teacher.json"), &world.teacher_params, "teacher")?;
        io::write_checkpoint(&dir.join("q0.json"), &world.base_student, "q0")?;
        persist_datasets(&dir, &cfg, &world, false)?;
        let heldout: String = world
            .heldout_prompts
            .iter()
            .map(|p| format!("{}\n", serde_json::json!({ "prompt": p })))
            .collect();
        io::atomic_write(&dir.join("heldout_prompts.jsonl"), heldout.as_bytes())?;
        io::write_manifest(&dir)?;
        println!(
            "world seed {seed}: {} prompts, teacher and base checkpoints in {}",
            world.prompts.len(),
            dir.display()
        );
    }
    Ok(())
}

pub fn snapshot(spec: &ExperimentSpec, seed_override: Option<u64>) -> CliResult<()> {
    let out = spec.effective_out_dir();
    for seed in seeds(spec, seed_override) {
        let (cfg, world) = seed_world(spec, seed)?;
        let dir = io::run_dir(&out, "snapshot", seed);
        std::fs::create_dir_all(&dir)?;
        let mut counters = CostCounters::default();
        let (snap, data) = take_snapshot(&world.base_student, &world.prompts, &cfg, &mut counters)?;
        io::write_checkpoint(&dir.join("q0.json"), &world.base_student, "q0")?;
        io::atomic_write(
            &dir.join("snapshot.json"),
            serde_json::to_string(&snap.to_payload())?.as_bytes(),
        )?;
        io::write_dataset(&dir.join("snapshot_data.jsonl"), &data, |i| {
            derive_seed(cfg.seed, "snapshot", i as u64)
        })?;
        io::write_manifest(&dir)?;
        println!(
            "snapshot seed {seed}: {} generations recorded in {}",
            counters.student_generations,
            dir.display()
        );
    }
    Ok(())
}

pub fn warmup_stage(spec: &ExperimentSpec, seed_override: Option<u64>) -> CliResult<()> {
    let out = spec.effective_out_dir();
    for seed in seeds(spec, seed_override) {
        let (cfg, world) = seed_world(spec, seed)?;
        let dir = io::run_dir(&out, "warmup", seed);
        std::fs::create_dir_all(&dir)?;
        let teacher = BlackBoxTeacher::new(world.teacher_params.clone());
        let mut counters = CostCounters::default();
        let data = generate_teacher_data(&teacher, &world.prompts, &cfg, &mut counters)?;
        let mut report = RunReport::new("warmup", seed, cfg.clone());
        let q_w = warmup(&world.base_student, &data, &cfg, &mut report)?;
        io::write_checkpoint(&dir.join("q0.json"), &world.base_student, "q0")?;
        io::write_checkpoint(&dir.join("q_w.json"), &q_w, "q_w")?;
        io::atomic_write(&dir.join("metrics.csv"), report.metrics_csv().as_bytes())?;
        io::write_manifest(&dir)?;
        println!("warmup seed {seed}: q_w written to {}", dir.display());
    }
    Ok(())
}

fn finish_run(
    dir: &Path,
    world: &World,
    cfg: &TrainConfig,
    report: &mut RunReport,
    final_model: &soda_core::ModelParams,
) -> CliResult<()> {
    report.eval = standard_eval(
        final_model,
        &world.teacher_params,
        &world.prompts,
        &world.heldout_prompts,
        cfg,
    )?;
    write_report(dir, report)?;
    io::write_manifest(dir)?;
    Ok(())
}

fn run_soda_variant(cfg: &TrainConfig, world: &World, out: &Path) -> CliResult<String> {
    let teacher = BlackBoxTeacher::new(world.teacher_params.clone());
    let cross = (cfg.rejection_source == RejectionSource::CrossStudent)
        .then_some(&world.cross_student);
    let (output, mut report) =
        distill_soda_full(cfg, &world.prompts, &teacher, &world.base_student, cross)?;
    let dir = io::run_dir(out, &report.method, cfg.seed);
    std::fs::create_dir_all(&dir)?;
    io::write_checkpoint(&dir.join("q0.json"), &world.base_student, "q0")?;
    io::write_checkpoint(&dir.join("q_w.json"), &output.reference, "q_w")?;
    io::write_checkpoint(&dir.join("q_soda.json"), &output.policy, "q_soda")?;
    persist_datasets(&dir, cfg, world, true)?;
    finish_run(&dir, world, cfg, &mut report, &output.policy)?;
    Ok(report.method.clone())
}

pub fn distill(spec: &ExperimentSpec, seed_override: Option<u64>) -> CliResult<()> {
    require_method(spec, Method::Soda, "distill")?;
    let out = spec.effective_out_dir();
    for seed in seeds(spec, seed_override) {
        let (cfg, world) = seed_world(spec, seed)?;
        let method = run_soda_variant(&cfg, &world, &out)?;
        println!("{method} seed {seed}: done");
    }
    Ok(())
}

pub fn seqkd(spec: &ExperimentSpec, seed_override: Option<u64>) -> CliResult<()> {
    require_method(spec, Method::Seqkd, "seqkd")?;
    let out = spec.effective_out_dir();
    for seed in seeds(spec, seed_override) {
        let (cfg, world) = seed_world(spec, seed)?;
        let teacher = BlackBoxTeacher::new(world.teacher_params.clone());
        let (model, mut report) = run_seqkd(&cfg, &world.prompts, &teacher, &world.base_student)?;
        let dir = io::run_dir(&out, "seqkd", seed);
        std::fs::create_dir_all(&dir)?;
        io::write_checkpoint(&dir.join("q0.json"), &world.base_student, "q0")?;
        io::write_checkpoint(&dir.join("q_seqkd.json"), &model, "q_seqkd")?;
        persist_datasets(&dir, &cfg, &world, false)?;
        finish_run(&dir, &world, &cfg, &mut report, &model)?;
        println!("seqkd seed {seed}: done");
    }
    Ok(())
}

pub fn gad(spec: &ExperimentSpec, seed_override: Option<u64>) -> CliResult<()> {
    require_method(spec, Method::Gad, "gad")?;
    let out = spec.effective_out_dir();
    for seed in seeds(spec, seed_override) {
        let (cfg, world) = seed_world(spec, seed)?;
        let teacher = BlackBoxTeacher::new(world.teacher_params.clone());
        let (output, mut report) =
            run_gad_full(&cfg, &world.prompts, &teacher, &world.base_student)?;
        let dir = io::run_dir(&out, "gad", seed);
        std::fs::create_dir_all(&dir)?;
        io::write_checkpoint(&dir.join("q0.json"), &world.base_student, "q0")?;
        io::write_checkpoint(&dir.join("q_gad.json"), &output.generator, "q_gad")?;
        io::write_checkpoint(&dir.join("disc.json"), &output.discriminator, "disc")?;
        persist_datasets(&dir, &cfg, &world, true)?;
        finish_run(&dir, &world, &cfg, &mut report, &output.generator)?;
        println!(
            "gad seed {seed}: done ({} adversarial generations)",
            report.cost.student_generations
        );
    }
    Ok(())
}

pub fn ablate(spec: &ExperimentSpec, seed_override: Option<u64>) -> CliResult<()> {
    require_method(spec, Method::Ablation, "ablate")?;
    let out = spec.effective_out_dir();
    for seed in seeds(spec, seed_override) {
        let (base_cfg, world) = seed_world(spec, seed)?;
        for mode in [
            RejectionSource::BaseStudent,
            RejectionSource::CrossStudent,
            RejectionSource::Corrupted,
        ] {
            let cfg = TrainConfig {
                rejection_source: mode,
                ..base_cfg.clone()
            };
            let method = run_soda_variant(&cfg, &world, &out)?;
            println!("{method} seed {seed}: done");
        }
    }
    Ok(())
}

pub fn eval(spec: &ExperimentSpec, run_dir: &Path) -> CliResult<()> {
    let report_path = run_dir.join("report.json");
    if !report_path.exists() {
        return Err(CliError::runtime(
            "RUN_NOT_FOUND",
            format!("no report.json under {}", run_dir.display()),
        ));
    }
    let mut report: RunReport = serde_json::from_str(&std::fs::read_to_string(&report_path)?)?;
    check_schema(&report, &report_path)?;
    let (cfg, world) = seed_world(spec, report.seed)?;
    let model = final_checkpoint(run_dir)?;
    let rows = standard_eval(
        &model,
        &world.teacher_params,
        &world.prompts,
        &world.heldout_prompts,
        &cfg,
    )?;

    // refresh the run's own eval rows, then append to the shared CSV
    report.eval = rows.clone();
    io::atomic_write(
        &report_path,
        serde_json::to_string_pretty(&report)?.as_bytes(),
    )?;
    io::write_manifest(run_dir)?;

    let out = spec.effective_out_dir();
    std::fs::create_dir_all(&out)?;
    let csv_path = out.join("eval.csv");
    let mut contents = if csv_path.exists() {
        std::fs::read_to_string(&csv_path)?
    } else {
        "run_id,method,seed,kl,judge_score,n_prompts\n".to_string()
    };
    for row in &rows {
        contents.push_str(&format!(
            "{}/{},{},{},{},{},{}\n",
            report.run_id, row.split, report.method, report.seed, row.kl_to_teacher,
            row.judge_score, row.n_prompts
        ));
        println!(
            "{} {}: kl={:.4} judge={:.1} over {} prompts",
            report.run_id, row.split, row.kl_to_teacher, row.judge_score, row.n_prompts
        );
    }
    io::atomic_write(&csv_path, contents.as_bytes())?;
    Ok(())
}

/// The trained model of a run directory, whatever the method was.
fn final_checkpoint(run_dir: &Path) -> CliResult<soda_core::ModelParams> {
    for name in ["q_soda.json", "q_gad.json", "q_seqkd.json", "q_w.json", "q0.json"] {
        let path = run_dir.join(name);
        if path.exists() {
            return io::read_checkpoint(&path);
        }
    }
    Err(CliError::runtime(
        "CHECKPOINT_NOT_FOUND",
        format!("no model checkpoint under {}", run_dir.display()),
    ))
}

pub fn repr(spec: &ExperimentSpec, n_prompts: usize, seed_override: Option<u64>) -> CliResult<()> {
    if matches!(spec.architecture, ArchSpec::Tabular) {
        return Err(CliError::from(SodaError::UnsupportedArchitecture(
            "representation analysis requires architecture = tiny_transformer".into(),
        )));
    }
    let out = spec.effective_out_dir();
    let mut cka_rows = vec!["candidate_id,layer,cka".to_string()];
    let mut stat_rows = vec!["candidate_id,entropy,kurtosis".to_string()];
    for seed in seeds(spec, seed_override) {
        let (cfg, world) = seed_world(spec, seed)?;
        let prompts = soda_core::pipeline::synth_heldout_prompts(
            world.vocab,
            n_prompts,
            cfg.prompt_len,
            cfg.seed,
            &world.prompts,
        )?;
        let mut candidates = Vec::new();
        for (method, stage) in [
            ("seqkd", "q_seqkd.json"),
            ("soda", "q_w.json"),
            ("soda", "q_soda.json"),
            ("gad", "q_gad.json"),
        ] {
            let path = io::run_dir(&out, method, seed).join(stage);
            if path.exists() {
                let label = format!("{}_s{}:{}", method, seed, stage.trim_end_matches(".json"));
                candidates.push((label, io::read_checkpoint(&path)?));
            }
        }
        if candidates.is_empty() {
            return Err(CliError::runtime(
                "RUN_NOT_FOUND",
                format!("no transformer checkpoints for seed {seed} under {}", out.display()),
            ));
        }
        let models: Vec<soda_core::ModelParams> =
            candidates.iter().map(|(_, m)| m.clone()).collect();
        let reports = repr_report(&world.base_student, &models, &prompts)?;
        let mut stat_points = Vec::new();
        for ((label, _), r) in candidates.iter().zip(&reports) {
            for (layer, cka) in r.cka_to_base.iter().enumerate() {
                cka_rows.push(format!("{label},{layer},{cka}"));
            }
            stat_rows.push(format!(
                "{label},{},{}",
                r.last_layer_entropy, r.last_layer_kurtosis
            ));
            stat_points.push((label.clone(), r.last_layer_entropy, r.last_layer_kurtosis));
        }
        println!(
            "repr seed {seed}: {} candidates over {} prompts (entropy in nats, pearson kurtosis)",
            candidates.len(),
            prompts.len()
        );
        print_score_correlations(&out, seed, &stat_points)?;
    }
    io::atomic_write(
        &out.join("repr_cka.csv"),
        (cka_rows.join("\n") + "\n").as_bytes(),
    )?;
    io::atomic_write(
        &out.join("repr_stats.csv"),
        (stat_rows.join("\n") + "\n").as_bytes(),
    )?;
    Ok(())
}

/// Correlates final-checkpoint activation statistics with held-out judge
/// scores across methods. Reported only; nothing asserts its sign.
fn print_score_correlations(
    out: &Path,
    seed: u64,
    stats: &[(String, f64, f64)],
) -> CliResult<()> {
    let mut points = Vec::new();
    for (label, entropy, kurtosis) in stats {
        // final checkpoints are labeled "<method>_s<seed>:q_<method>"
        let Some((method, stage)) = label.split_once(':') else {
            continue;
        };
        let method = method.trim_end_matches(&format!("_s{seed}"));
        if stage != format!("q_{method}") {
            continue;
        }
        let report_path = io::run_dir(out, method, seed).join("report.json");
        if !report_path.exists() {
            continue;
        }
        let report: RunReport = serde_json::from_str(&std::fs::read_to_string(&report_path)?)?;
        if let Some(row) = report.eval.iter().find(|e| e.split == "heldout") {
            points.push((*entropy, *kurtosis, row.judge_score));
        }
    }
    if points.len() >= 2 {
        let entropies: Vec<f64> = points.iter().map(|p| p.0).collect();
        let kurtoses: Vec<f64> = points.iter().map(|p| p.1).collect();
        let judges: Vec<f64> = points.iter().map(|p| p.2).collect();
        println!(
            "repr seed {seed}: corr(entropy, judge) = {:+.3}, corr(kurtosis, judge) = {:+.3} \
             over {} methods (reported, not asserted)",
            pearson(&entropies, &judges),
            pearson(&kurtoses, &judges),
            points.len()
        );
    }
    Ok(())
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let denom = (vx * vy).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        cov / denom
    }
}

fn check_schema(report: &RunReport, path: &Path) -> CliResult<()> {
    if report.schema_version != REPORT_SCHEMA_VERSION {
        return Err(CliError {
            code: "MIGRATION_ERROR",
            message: format!(
                "{}: schema version {} (current {})",
                path.display(),
                report.schema_version,
                REPORT_SCHEMA_VERSION
            ),
            exit_code: crate::error::EXIT_FAILURE,
        });
    }
    Ok(())
}

/// Aggregates every report under `dir` into one comparison table, one row
/// per (method, seed).
pub fn report(dir: &Path) -> CliResult<()> {
    let mut reports = Vec::new();
    collect_reports(dir, &mut reports)?;
    if reports.is_empty() {
        return Err(CliError::runtime(
            "RUN_NOT_FOUND",
            format!("no report.json files under {}", dir.display()),
        ));
    }
    reports.sort_by(|a, b| (&a.method, a.seed).cmp(&(&b.method, b.seed)));

    let path = dir.join("comparison.csv");
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record([
        "method",
        "seed",
        "judge_score_in_dist",
        "judge_score_heldout",
        "kl_in_dist",
        "kl_heldout",
        "student_generations",
        "wall_clock_s",
        "peak_mem_bytes",
        "instability_events",
    ])?;
    for r in &reports {
        let split = |name: &str| r.eval.iter().find(|e| e.split == name);
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        writer.write_record([
            r.method.clone(),
            r.seed.to_string(),
            fmt(split("in_dist").map(|e| e.judge_score)),
            fmt(split("heldout").map(|e| e.judge_score)),
            fmt(split("in_dist").map(|e| e.kl_to_teacher)),
            fmt(split("heldout").map(|e| e.kl_to_teacher)),
            r.cost.student_generations.to_string(),
            r.wall_clock_seconds.to_string(),
            r.peak_mem_bytes.to_string(),
            r.instability_events.to_string(),
        ])?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| CliError::runtime("CSV_ERROR", e.to_string()))?;
    io::atomic_write(&path, &bytes)?;
    print!("{}", String::from_utf8_lossy(&bytes));
    println!("comparison table: {} rows -> {}", reports.len(), path.display());
    Ok(())
}

fn collect_reports(dir: &Path, out: &mut Vec<RunReport>) -> CliResult<()> {
    if !dir.is_dir() {
        return Ok(());
    }
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_reports(&path, out)?;
        } else if path.file_name().is_some_and(|n| n == "report.json") {
            let report: RunReport = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
            check_schema(&report, &path)?;
            out.push(report);
        }
    }
    Ok(())
}

/// Recomputes artifact hashes against every manifest under `dir`.
pub fn verify(dir: &Path) -> CliResult<()> {
    let mut checked = 0usize;
    let mut failures = Vec::new();
    verify_tree(dir, &mut checked, &mut failures)?;
    if checked == 0 {
        return Err(CliError::runtime(
            "RUN_NOT_FOUND",
            format!("no manifests under {}", dir.display()),
        ));
    }
    for (dir, bad) in &failures {
        for b in bad {
            println!("BAD  {}: {}", dir.display(), b);
        }
    }
    println!("verified {checked} manifest(s), {} problem(s)", failures.len());
    if !failures.is_empty() {
        return Err(CliError::runtime(
            "VERIFY_FAILED",
            format!("{} directories failed verification", failures.len()),
        ));
    }
    Ok(())
}

fn verify_tree(
    dir: &Path,
    checked: &mut usize,
    failures: &mut Vec<(PathBuf, Vec<String>)>,
) -> CliResult<()> {
    if !dir.is_dir() {
        return Ok(());
    }
    if dir.join(io::MANIFEST_NAME).exists() {
        let bad = io::verify_manifest(dir)?;
        *checked += 1;
        if bad.is_empty() {
            println!("OK   {}", dir.display());
        } else {
            failures.push((dir.to_path_buf(), bad));
        }
    }
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            verify_tree(&path, checked, failures)?;
        }
    }
    Ok(())
}
