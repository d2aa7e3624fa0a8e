//! The subcommands. Each reads validated inputs, writes its artifacts
//! atomically and finishes with a run manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use gaitasym::exec::Exec;
use gaitasym::features::FeatureRow;
use gaitasym::flags;
use gaitasym::gaitparams::gait_stats;
use gaitasym::io::{parse_measurement, spectrogram_image, write_measurement, write_pgm, write_spectrogram_csv, MeasurementFile};
use gaitasym::model::{evaluate_loso, roc, scenario_data, select_scenario, Detector, LosoReport, RocCurve, Scenario};
use gaitasym::pipeline::{analyze_with, infer_direction, Analysis};
use gaitasym::sim::{synthesize_return, Direction};
use gaitasym::tfa::{denoise, stft_spectrogram_with, GrayImage};
use serde_json::json;

use crate::config::PipelineConfig;
use crate::error::{kind, CliError, Result};
use crate::manifest::{write_artifact, Run};
use crate::table::{accepted_rows, read_dataset, read_feature_table, write_dataset, write_feature_table, DatasetEntry, TableRow};

/// Settings shared by every subcommand.
pub struct Context {
    pub config: PipelineConfig,
    pub out: PathBuf,
    pub jobs: usize,
    pub exec: Exec,
}

impl Context {
    fn run(&self, command: &str) -> Result<Run> {
        Run::new(&self.out, command, &self.config, self.jobs)
    }

    /// Strategy for work nested inside an already parallel loop.
    fn inner(&self) -> Exec {
        if self.exec.is_parallel() {
            Exec::Sequential
        } else {
            self.exec
        }
    }
}

fn read_input(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::data(path.display(), e))
}

fn load_measurement(run: &mut Run, path: &Path) -> Result<MeasurementFile> {
    let bytes = read_input(path)?;
    run.input(path, &bytes);
    parse_measurement(&bytes).map_err(|e| CliError::data(path.display(), e))
}

fn resolve_direction(ctx: &Context, m: &MeasurementFile, infer: bool, exec: Exec) -> gaitasym::error::Result<Direction> {
    if infer {
        infer_direction(&m.signal, &ctx.config.analysis, exec)
    } else {
        Ok(m.direction)
    }
}

fn pgm(image: &GrayImage) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_pgm(&mut buf, image)?;
    Ok(buf)
}

fn json_bytes(value: &serde_json::Value) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("json values serialize");
    bytes.push(b'\n');
    bytes
}

/// File-name-safe version of a subject id.
fn slug(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

pub fn simulate(ctx: &Context) -> Result<()> {
    let mut run = ctx.run("simulate")?;
    let cohort = ctx.config.cohort.to_spec();
    cohort.validate()?;
    run.seed("master_seed", cohort.master_seed);
    let plans = cohort.plan();
    let started = Instant::now();
    let written = ctx.exec.map_range(plans.len(), |i| -> Result<(DatasetEntry, _)> {
        let p = &plans[i];
        let signal = synthesize_return(&p.walker, &p.radar)?;
        let file = MeasurementFile {
            signal,
            direction: p.direction,
            label: p.label,
            subject: p.subject_id.clone(),
        };
        let mut bytes = Vec::new();
        write_measurement(&mut bytes, &file)?;
        let path = format!(
            "measurements/{i:04}_{}_{}_{}_{:02}.mdgs",
            slug(&p.subject_id),
            p.direction.as_str(),
            p.label.as_str(),
            p.repeat
        );
        let artifact = write_artifact(run.out_dir(), &path, &bytes)?;
        let entry = DatasetEntry {
            path,
            subject: p.subject_id.clone(),
            direction: p.direction,
            label: p.label,
            seed: p.seed,
        };
        Ok((entry, artifact))
    });
    let (entries, artifacts): (Vec<_>, Vec<_>) = written.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();
    run.written(artifacts);
    run.timed("synthesize", started);
    run.write("manifest.csv", &write_dataset(&entries)?)?;
    run.note("measurements", entries.len());
    run.note("subjects", cohort.subjects.len());
    run.finish()?;
    println!("simulated {} measurements of {} subjects", entries.len(), cohort.subjects.len());
    Ok(())
}

/// Runs the whole chain on one measurement file.
fn analyze_file(ctx: &Context, run: &mut Run, path: &Path, infer: bool) -> Result<(MeasurementFile, Direction, Analysis)> {
    let m = load_measurement(run, path)?;
    let started = Instant::now();
    let direction = resolve_direction(ctx, &m, infer, ctx.exec)?;
    let analysis = analyze_with(&m.signal, direction, &ctx.config.analysis, ctx.exec)
        .map_err(|e| CliError::data(path.display(), e))?;
    run.timed("analyze", started);
    run.note("direction", direction.as_str());
    Ok((m, direction, analysis))
}

fn gait_stats_json(m: &MeasurementFile, direction: Direction, a_stats: &gaitasym::gaitparams::GaitStats, frame_times: &[f64]) -> serde_json::Value {
    let peaks: Vec<_> = a_stats
        .step_peaks
        .iter()
        .map(|p| json!({ "frame": p.frame, "time_s": frame_times[p.frame], "doppler_hz": p.doppler }))
        .collect();
    json!({
        "subject": m.subject,
        "direction": direction.as_str(),
        "label": m.label.as_str(),
        "f_step_hz": a_stats.f_step,
        "f_max_hz": a_stats.f_max,
        "f_torso_hz": a_stats.f_torso,
        "step_peaks": peaks,
    })
}

fn steps_json(m: &MeasurementFile, direction: Direction, a: &Analysis) -> serde_json::Value {
    let w = &a.window;
    let axis = &a.spectrogram.freq_axis;
    let (lo, hi) = (axis[w.bins.start].abs(), axis[w.bins.end - 1].abs());
    json!({
        "subject": m.subject,
        "direction": direction.as_str(),
        "window": {
            "start_frame": w.start_frame,
            "start_time_s": a.spectrogram.frame_times[w.start_frame],
            "width": w.image.width(),
            "height": w.image.height(),
            "doppler_range_hz": [lo.min(hi), lo.max(hi)],
            "step_width": w.step_width,
        },
        "initial_step_times": a.initial.step_times,
        "refined_step_times": a.refinement.pair.step_times,
        "initial_scores": a.refinement.initial_scores,
        "refined_scores": a.refinement.refined_scores,
        "flags": flags::join(&a.refinement.pair.flags),
        "images": { "window": "window.pgm", "a": "step_a.pgm", "b": "step_b.pgm" },
    })
}

fn write_steps(run: &mut Run, m: &MeasurementFile, direction: Direction, a: &Analysis) -> Result<()> {
    run.write("window.pgm", &pgm(&a.window.image)?)?;
    run.write("step_a.pgm", &pgm(&a.refinement.pair.a)?)?;
    run.write("step_b.pgm", &pgm(&a.refinement.pair.b)?)?;
    run.write("steps.json", &json_bytes(&steps_json(m, direction, a)))
}

/// The feature-table line `analyze` and `features` emit for a measurement.
pub fn feature_line(m: &MeasurementFile, direction: Direction, a: &Analysis) -> TableRow {
    TableRow::accepted(&FeatureRow::new(&m.subject, direction, m.label, a.features.clone()))
}

pub fn analyze(ctx: &Context, path: &Path, infer: bool) -> Result<()> {
    let mut run = ctx.run("analyze")?;
    let (m, direction, a) = analyze_file(ctx, &mut run, path, infer)?;
    let export = &ctx.config.export;
    let image = spectrogram_image(&a.spectrogram, export.db_floor, export.db_ceil)?;
    run.write("spectrogram.pgm", &pgm(&image)?)?;
    let mut csv = Vec::new();
    write_spectrogram_csv(&mut csv, &a.spectrogram, export.csv_max_freq_hz)?;
    run.write("spectrogram.csv", &csv)?;
    let stats = gait_stats_json(&m, direction, &a.stats, &a.spectrogram.frame_times);
    run.write("gaitstats.json", &json_bytes(&stats))?;
    write_steps(&mut run, &m, direction, &a)?;
    let line = feature_line(&m, direction, &a);
    run.write("features.csv", &write_feature_table(std::slice::from_ref(&line))?)?;
    run.note("flags", &line.flags);
    run.finish()?;
    let r = a.features.get(gaitasym::features::Feature::R);
    println!("{} {}: r = {r:.4}, flags = [{}]", m.subject, direction.as_str(), line.flags);
    Ok(())
}

pub fn gaitstats(ctx: &Context, path: &Path, infer: bool) -> Result<()> {
    let mut run = ctx.run("gaitstats")?;
    let m = load_measurement(&mut run, path)?;
    let started = Instant::now();
    let direction = resolve_direction(ctx, &m, infer, ctx.exec)?;
    let cfg = &ctx.config.analysis;
    let data_err = |e| CliError::data(path.display(), e);
    let raw = stft_spectrogram_with(&m.signal.remove_dc(), &cfg.stft, ctx.exec).map_err(data_err)?;
    let spec = denoise(&raw, cfg.margin_db).map_err(data_err)?;
    let (_, stats) = gait_stats(&spec, direction, &cfg.gait).map_err(data_err)?;
    run.timed("gait_stats", started);
    run.write("gaitstats.json", &json_bytes(&gait_stats_json(&m, direction, &stats, &spec.frame_times)))?;
    run.finish()?;
    println!(
        "{} {}: f_step = {:.3} Hz, f_max = {:.1} Hz, f_torso = {:.1} Hz",
        m.subject,
        direction.as_str(),
        stats.f_step,
        stats.f_max,
        stats.f_torso
    );
    Ok(())
}

pub fn steps(ctx: &Context, path: &Path, infer: bool) -> Result<()> {
    let mut run = ctx.run("steps")?;
    let (m, direction, a) = analyze_file(ctx, &mut run, path, infer)?;
    write_steps(&mut run, &m, direction, &a)?;
    run.finish()?;
    println!("{} {}: steps at {:?}", m.subject, direction.as_str(), a.refinement.pair.step_times);
    Ok(())
}

/// Feature-table line for one dataset entry; failures become rejected rows.
fn process_entry(ctx: &Context, base: &Path, e: &DatasetEntry, infer: bool) -> TableRow {
    let reject = |reason: &str| TableRow::rejected(&e.subject, e.direction, e.label, reason);
    let path = base.join(&e.path);
    let Ok(bytes) = std::fs::read(&path) else {
        return reject("missing_file");
    };
    let m = match parse_measurement(&bytes) {
        Ok(m) => m,
        Err(err) => return reject(kind(&err)),
    };
    if m.subject != e.subject || m.label != e.label || (!infer && m.direction != e.direction) {
        return reject("manifest_mismatch");
    }
    let exec = ctx.inner();
    let result = resolve_direction(ctx, &m, infer, exec)
        .and_then(|d| analyze_with(&m.signal, d, &ctx.config.analysis, exec).map(|a| (d, a)));
    match result {
        Ok((direction, a)) => feature_line(&m, direction, &a),
        Err(err) => reject(kind(&err)),
    }
}

pub fn features(ctx: &Context, manifest: &Path, infer: bool) -> Result<()> {
    let mut run = ctx.run("features")?;
    let bytes = read_input(manifest)?;
    run.input(manifest, &bytes);
    let entries = read_dataset(&bytes).map_err(|e| CliError::data(manifest.display(), e))?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let started = Instant::now();
    let rows = ctx.exec.map_slice(&entries, |e| process_entry(ctx, base, e, infer));
    run.timed("analyze", started);
    run.write("features.csv", &write_feature_table(&rows)?)?;
    let rejected = rows.iter().filter(|r| r.is_rejected()).count();
    let flagged = rows.iter().filter(|r| !r.is_rejected() && !r.flags.is_empty()).count();
    run.note("rows", rows.len());
    run.note("rejected", rejected);
    run.note("flagged", flagged);
    run.finish()?;
    println!("{} rows, {rejected} rejected, {flagged} flagged", rows.len());
    if rejected == rows.len() {
        return Err(CliError::Data("no measurement could be analysed".into()));
    }
    Ok(())
}

fn load_table(run: &mut Run, path: &Path) -> Result<Vec<FeatureRow>> {
    let bytes = read_input(path)?;
    run.input(path, &bytes);
    let rows = accepted_rows(&read_feature_table(&bytes)?)?;
    if rows.is_empty() {
        return Err(CliError::Data(format!("{} holds no feature rows", path.display())));
    }
    Ok(rows)
}

fn predictor_list(predictors: &[gaitasym::features::Feature]) -> String {
    predictors.iter().map(|f| f.name()).collect::<Vec<_>>().join(";")
}

fn csv_bytes(header: &[&str], records: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e| CliError::data("csv", e);
    w.write_record(header).map_err(err)?;
    for r in records {
        w.write_record(r).map_err(err)?;
    }
    w.into_inner().map_err(|e| CliError::data("csv", e))
}

fn roc_csv(curve: &RocCurve) -> Result<Vec<u8>> {
    csv_bytes(
        &["threshold", "fa", "detection"],
        curve
            .points
            .iter()
            .map(|p| vec![p.threshold.to_string(), p.fa.to_string(), p.detection.to_string()]),
    )
}

pub fn select(ctx: &Context, table: &Path, scenario: Option<Scenario>) -> Result<()> {
    let mut run = ctx.run("select")?;
    let rows = load_table(&mut run, table)?;
    let scenario = scenario.unwrap_or(ctx.config.model.scenario);
    let started = Instant::now();
    let selection = select_scenario(&rows, scenario, ctx.exec)?;
    if selection.best.is_empty() {
        return Err(CliError::Data("no predictor subset converged".into()));
    }
    let (x, y) = scenario_data(&rows, scenario);
    let detector = Detector::train(&x, &y, &selection.best, ctx.config.model.fa_bound)?;
    run.timed("select", started);
    let model = &detector.model;
    let summary = json!({
        "scenario": scenario.as_str(),
        "n": selection.n,
        "predictors": selection.best.iter().map(|f| f.name()).collect::<Vec<_>>(),
        "bic": selection.best_bic,
        "log_likelihood": model.log_likelihood,
        "converged": model.converged,
        "iterations": model.iterations,
        "fa_bound": ctx.config.model.fa_bound,
        "tau": detector.tau,
        "train_fa": detector.train_fa_rate,
        "train_detection": detector.train_detection_rate,
        "coefficients": model.summary(),
    });
    let s = scenario.as_str();
    run.write(&format!("model_{s}.json"), &json_bytes(&summary))?;
    let per_order = selection
        .per_order
        .iter()
        .map(|o| vec![o.order.to_string(), predictor_list(&o.predictors), o.bic.to_string()]);
    run.write(&format!("bic_{s}.csv"), &csv_bytes(&["order", "predictors", "bic"], per_order)?)?;
    let subsets = selection.subsets.iter().map(|o| {
        vec![
            o.predictors.len().to_string(),
            predictor_list(&o.predictors),
            o.bic.to_string(),
            o.converged.to_string(),
        ]
    });
    run.write(
        &format!("subsets_{s}.csv"),
        &csv_bytes(&["order", "predictors", "bic", "converged"], subsets)?,
    )?;
    let probs: Vec<f64> = x.iter().map(|r| model.predict(r)).collect();
    let curve = roc(&probs, &y)?;
    run.write(&format!("roc_train_{s}.csv"), &roc_csv(&curve)?)?;
    run.note("predictors", predictor_list(&selection.best));
    run.note("train_auc", curve.auc());
    run.finish()?;
    println!(
        "{s}: {} (BIC {:.3}), tau = {:.4}, training AUC {:.3}",
        predictor_list(&selection.best),
        selection.best_bic,
        detector.tau,
        curve.auc()
    );
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const REPORT_COLUMNS: [&str; 11] = [
    "held_out",
    "direction",
    "predictors",
    "tau",
    "pd_train",
    "fa_train",
    "pd_test",
    "fa_test",
    "n_test_asymmetric",
    "n_test_symmetric",
    "flags",
];

fn report_record(held_out: &str, scenario: Scenario, outcome: &gaitasym::error::Result<LosoReport>) -> Vec<String> {
    match outcome {
        Ok(r) => vec![
            r.held_out.clone(),
            scenario.as_str().to_string(),
            predictor_list(&r.predictors),
            r.tau.to_string(),
            r.train_detection.to_string(),
            r.train_fa.to_string(),
            fmt_opt(r.test_detection),
            fmt_opt(r.test_fa),
            r.n_test_positive.to_string(),
            r.n_test_negative.to_string(),
            String::new(),
        ],
        Err(e) => {
            let mut rec = vec![held_out.to_string(), scenario.as_str().to_string()];
            rec.extend(std::iter::repeat_n(String::new(), 8));
            rec.push(format!("{}{}", crate::table::REJECTED, kind(e)));
            rec
        }
    }
}

pub fn evaluate(ctx: &Context, table: &Path, held_out: &[String], scenarios: &[Scenario]) -> Result<()> {
    let mut run = ctx.run("evaluate")?;
    let rows = load_table(&mut run, table)?;
    let model = &ctx.config.model;
    let scenarios = if scenarios.is_empty() { &model.evaluate[..] } else { scenarios };
    let mut subjects: Vec<String> = if held_out.is_empty() { model.held_out.clone() } else { held_out.to_vec() };
    if subjects.is_empty() {
        for r in &rows {
            if !subjects.contains(&r.subject) {
                subjects.push(r.subject.clone());
            }
        }
    }
    if let Some(s) = subjects.iter().find(|s| !rows.iter().any(|r| &r.subject == *s)) {
        return Err(CliError::Validation(format!("held-out subject `{s}` is not in the feature table")));
    }
    let mut records = Vec::new();
    for &scenario in scenarios {
        let started = Instant::now();
        let inner = ctx.inner();
        let outcomes = ctx
            .exec
            .map_slice(&subjects, |s| evaluate_loso(&rows, s, scenario, model.fa_bound, inner));
        run.timed(&format!("loso_{scenario}"), started);
        let mut scores = Vec::new();
        for (s, o) in subjects.iter().zip(&outcomes) {
            records.push(report_record(s, scenario, o));
            if let Ok(r) = o {
                scores.extend(r.test_scores.iter().copied());
            }
        }
        let (probs, labels): (Vec<f64>, Vec<bool>) = scores.into_iter().unzip();
        match roc(&probs, &labels) {
            Ok(curve) => {
                run.write(&format!("roc_{scenario}.csv"), &roc_csv(&curve)?)?;
                run.note(&format!("auc_{scenario}"), curve.auc());
                println!("{scenario}: pooled held-out AUC {:.3}", curve.auc());
            }
            Err(e) => run.note(&format!("auc_{scenario}"), format!("unavailable: {e}")),
        }
        let failed = outcomes.iter().filter(|o| o.is_err()).count();
        run.note(&format!("failed_{scenario}"), failed);
    }
    run.write("report.csv", &csv_bytes(&REPORT_COLUMNS, records)?)?;
    run.note("fa_bound", model.fa_bound);
    run.finish()?;
    Ok(())
}
