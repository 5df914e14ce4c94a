//! The six subcommands and their shared plumbing. Each command is a plain
//! function returning data for the binary to print, so everything here is
//! exercisable in-process by tests.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use evifuse_core::dataset::{
    build_samples, format_timestamp, normalize, parse_csv, split, synth_generate, write_csv,
};
use evifuse_core::forecast::train;
use evifuse_core::fusion::{decision_matrix, predictor_frame, run_fusion, FusionDecision};
use evifuse_core::metrics::{mae, mape};
use evifuse_core::{
    Checkpoint, DecisionMatrix, FusionMode, InputConfig, LstmParams, MassFunction,
    NormalizationSpec, PredictorId, Record,
};

use crate::config::ExperimentConfig;
use crate::report::{
    series_csv, DatasetSummary, EvaluationReport, FusionReport, PredictorReport,
    REPRODUCIBILITY_NOTE,
};
use crate::CliError;

/// The worked example's three event mass triples, used by `tables` when no
/// triples are given.
pub const DEFAULT_TRIPLES: [[f64; 3]; 3] = [
    [0.30, 0.26, 0.44],
    [0.31, 0.34, 0.35],
    [0.24, 0.41, 0.35],
];

/// One persisted predictor: provenance plus the checkpoint itself.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub predictor: String,
    pub input_config: InputConfig,
    pub train_samples: usize,
    pub final_loss: f64,
    pub checkpoint: Checkpoint,
}

/// Canonical path of one predictor's model file.
pub fn model_path(dir: &Path, id: PredictorId) -> PathBuf {
    dir.join(format!("model_v{}.json", id.index() + 1))
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|source| CliError::Write {
                path: dir.to_path_buf(),
                source,
            })?;
        }
    }
    std::fs::write(path, contents).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads the experiment's records from disk or the seeded generator.
/// Returns the records, a source description for the report, and whether
/// they were synthesized (and so should be persisted beside the models).
fn load_records(config: &ExperimentConfig) -> Result<(Vec<Record>, String, bool), CliError> {
    match &config.data {
        Some(path) => {
            let records = parse_csv(&read_file(path)?)?;
            Ok((records, path.display().to_string(), false))
        }
        None => {
            let records = synth_generate(config.seed, config.synth_hours)?;
            let source = format!(
                "synthetic (seed {}, {} hours)",
                config.seed, config.synth_hours
            );
            Ok((records, source, true))
        }
    }
}

/// Trained models with their scaling statistics and per-predictor metadata
/// `(train_samples, final_loss)`.
pub struct TrainedPredictors {
    pub models: [LstmParams; 3],
    pub norm: NormalizationSpec,
    pub meta: [(usize, f64); 3],
}

fn train_predictors(
    config: &ExperimentConfig,
    records: &[Record],
) -> Result<TrainedPredictors, CliError> {
    let (train_slice, _) = split(records, config.train_fraction)?;
    let norm = NormalizationSpec::fit(train_slice)?;
    let (normalized_train, _) = normalize(train_slice, Some(&norm))?;
    let mut models = Vec::new();
    let mut meta = Vec::new();
    for id in PredictorId::ALL {
        let set = build_samples(&normalized_train, id.input_config(config.window), &norm)?;
        let outcome = train(&set.samples, &config.training_config(id.index()))?;
        meta.push((
            set.samples.len(),
            *outcome.loss_history.last().expect("history is never empty"),
        ));
        models.push(outcome.params);
    }
    Ok(TrainedPredictors {
        models: models.try_into().expect("three predictors"),
        norm,
        meta: meta.try_into().expect("three predictors"),
    })
}

fn persist_artifacts(
    config: &ExperimentConfig,
    records: &[Record],
    synthesized: bool,
    trained: &TrainedPredictors,
) -> Result<(), CliError> {
    if synthesized {
        write_file(&config.output_dir.join("data.csv"), &write_csv(records))?;
    }
    let norm_json = serde_json::to_string_pretty(&trained.norm).expect("spec serializes");
    write_file(
        &config.output_dir.join("normalization.json"),
        &(norm_json + "\n"),
    )?;
    for id in PredictorId::ALL {
        let file = ModelFile {
            predictor: id.label().to_string(),
            input_config: id.input_config(config.window),
            train_samples: trained.meta[id.index()].0,
            final_loss: trained.meta[id.index()].1,
            checkpoint: Checkpoint::new(
                config.training_config(id.index()),
                trained.models[id.index()].clone(),
            )?,
        };
        let json = serde_json::to_string_pretty(&file).expect("model serializes");
        write_file(&model_path(&config.output_dir, id), &(json + "\n"))?;
    }
    Ok(())
}

fn load_artifacts(config: &ExperimentConfig) -> Result<TrainedPredictors, CliError> {
    let norm_path = config.output_dir.join("normalization.json");
    let norm: NormalizationSpec = serde_json::from_str(&read_file(&norm_path)?)
        .map_err(|e| CliError::Config(format!("{}: {e}", norm_path.display())))?;
    let mut models = Vec::new();
    let mut meta = Vec::new();
    for id in PredictorId::ALL {
        let path = model_path(&config.output_dir, id);
        let file: ModelFile = serde_json::from_str(&read_file(&path)?)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if file.predictor != id.label() {
            return Err(CliError::Config(format!(
                "{}: holds predictor {}, expected {}",
                path.display(),
                file.predictor,
                id.label()
            )));
        }
        if file.input_config != id.input_config(config.window) {
            return Err(CliError::Config(format!(
                "{}: feature view does not match the configured window {}",
                path.display(),
                config.window
            )));
        }
        let checkpoint = Checkpoint::new(file.checkpoint.config, file.checkpoint.params)?;
        meta.push((file.train_samples, file.final_loss));
        models.push(checkpoint.params);
    }
    Ok(TrainedPredictors {
        models: models.try_into().expect("three predictors"),
        norm,
        meta: meta.try_into().expect("three predictors"),
    })
}

/// The configured origin, or the latest hour that still leaves a full
/// horizon of actuals to evaluate against.
fn resolve_origin(config: &ExperimentConfig, records: &[Record]) -> Result<i64, CliError> {
    if let Some(ts) = config.origin {
        return Ok(ts);
    }
    let index = records
        .len()
        .checked_sub(config.horizon + 1)
        .ok_or_else(|| {
            CliError::Config(format!(
                "dataset of {} records cannot hold a {}-hour horizon",
                records.len(),
                config.horizon
            ))
        })?;
    Ok(records[index].timestamp)
}

fn feature_label(config: InputConfig) -> String {
    match config {
        InputConfig::LagParams => "previous-hour load and weather".to_string(),
        InputConfig::CurrentParams => {
            "previous-hour load with the target hour's weather".to_string()
        }
        InputConfig::Windowed { window } => {
            format!("trailing {window}-hour window of all columns")
        }
    }
}

fn build_report(
    config: &ExperimentConfig,
    records: &[Record],
    source: String,
    trained: &TrainedPredictors,
    decision: &FusionDecision,
    started: Instant,
) -> Result<EvaluationReport, CliError> {
    let (train_slice, eval_slice) = split(records, config.train_fraction)?;
    let actual: Vec<f64> = decision.horizon.iter().map(|p| p.actual_kw).collect();
    let fused: Vec<f64> = decision.horizon.iter().map(|p| p.fused_kw).collect();

    let mut predictors = Vec::new();
    for id in PredictorId::ALL {
        let series: Vec<f64> = decision
            .horizon
            .iter()
            .map(|p| p.predictions_kw[id.index()])
            .collect();
        predictors.push(PredictorReport {
            id: id.label().to_string(),
            features: feature_label(id.input_config(config.window)),
            train_samples: trained.meta[id.index()].0,
            final_loss: trained.meta[id.index()].1,
            horizon_mae_kw: mae(&series, &actual)?,
            horizon_mape_pct: mape(&series, &actual)?,
        });
    }

    let interval = decision.combined.confidence_interval(&decision.selected)?;
    let fusion = FusionReport {
        origin: format_timestamp(decision.origin_timestamp),
        mode: decision.mode.to_string(),
        event_accuracies_pct: decision.event_accuracies,
        event_masses: decision
            .event_masses
            .iter()
            .map(MassFunction::to_label_map)
            .collect(),
        stage_conflicts: decision.matrices.iter().map(|m| m.conflict).collect(),
        combined_mass: decision.combined.to_label_map(),
        selected: decision.selected.label(),
        selected_belief: interval.bel(),
        selected_plausibility: interval.pls(),
        fused_mae_kw: mae(&fused, &actual)?,
        fused_mape_pct: mape(&fused, &actual)?,
    };

    Ok(EvaluationReport {
        config: config.clone(),
        dataset: DatasetSummary {
            source,
            records: records.len(),
            train_records: train_slice.len(),
            eval_records: eval_slice.len(),
            first_timestamp: format_timestamp(records[0].timestamp),
            last_timestamp: format_timestamp(records[records.len() - 1].timestamp),
        },
        predictors,
        fusion,
        reproducibility_note: REPRODUCIBILITY_NOTE.to_string(),
        runtime_ms: started.elapsed().as_millis(),
    })
}

/// `synth`: generate a seeded hourly dataset and write it as CSV.
pub fn cmd_synth(seed: u64, hours: usize, out: &Path) -> Result<String, CliError> {
    let records = synth_generate(seed, hours)?;
    write_file(out, &write_csv(&records))?;
    Ok(format!(
        "wrote {} hourly records to {}",
        records.len(),
        out.display()
    ))
}

/// Result of `train`: one summary line per predictor.
pub struct TrainOutput {
    pub lines: Vec<String>,
    pub output_dir: PathBuf,
}

/// `train`: ingest or synthesize, fit scaling on the training slice, train
/// all three predictors, and persist every artifact needed by `fuse`.
pub fn cmd_train(config: &ExperimentConfig) -> Result<TrainOutput, CliError> {
    config.validate()?;
    let (records, _, synthesized) = load_records(config)?;
    let trained = train_predictors(config, &records)?;
    persist_artifacts(config, &records, synthesized, &trained)?;
    let lines = PredictorId::ALL
        .iter()
        .map(|id| {
            let (samples, loss) = trained.meta[id.index()];
            format!(
                "{}: {} samples, final loss {:.6} -> {}",
                id.label(),
                samples,
                loss,
                model_path(&config.output_dir, *id).display()
            )
        })
        .collect();
    Ok(TrainOutput {
        lines,
        output_dir: config.output_dir.clone(),
    })
}

/// Result of `run` or `fuse`: the report plus where it was written.
pub struct RunOutput {
    pub report: EvaluationReport,
    pub report_path: PathBuf,
    pub series_path: PathBuf,
}

fn finish_run(
    config: &ExperimentConfig,
    records: &[Record],
    source: String,
    trained: &TrainedPredictors,
    started: Instant,
) -> Result<RunOutput, CliError> {
    let origin = resolve_origin(config, records)?;
    let decision = run_fusion(
        &trained.models,
        records,
        &trained.norm,
        config.window,
        origin,
        config.horizon,
        config.mode,
    )?;
    let report = build_report(config, records, source, trained, &decision, started)?;
    let report_path = config.output_dir.join("report.json");
    let series_path = config.output_dir.join("series.csv");
    write_file(&report_path, &report.to_json())?;
    write_file(&series_path, &series_csv(&decision.horizon))?;
    Ok(RunOutput {
        report,
        report_path,
        series_path,
    })
}

/// `run`: the full pipeline — data, training, fusion, evaluation, report.
pub fn cmd_run(config: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let started = Instant::now();
    config.validate()?;
    let (records, source, synthesized) = load_records(config)?;
    let trained = train_predictors(config, &records)?;
    persist_artifacts(config, &records, synthesized, &trained)?;
    finish_run(config, &records, source, &trained, started)
}

/// `fuse`: reuse the artifacts persisted by `train` and decide again, e.g.
/// at a different origin or under the other combination rule.
pub fn cmd_fuse(config: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let started = Instant::now();
    config.validate()?;
    let data_path = config
        .data
        .clone()
        .unwrap_or_else(|| config.output_dir.join("data.csv"));
    let records = parse_csv(&read_file(&data_path)?)?;
    let trained = load_artifacts(config)?;
    finish_run(
        config,
        &records,
        data_path.display().to_string(),
        &trained,
        started,
    )
}

/// Parses one `a,b,c` singleton mass triple. The three values must be
/// nonnegative and sum to 1 (hand-typed decimals get a 1e-3 allowance and
/// are rescaled exactly).
pub fn parse_triple(text: &str) -> Result<[f64; 3], CliError> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 3 {
        return Err(CliError::Config(format!(
            "triple `{text}` must hold three comma-separated values"
        )));
    }
    let mut values = [0.0f64; 3];
    for (value, part) in values.iter_mut().zip(&parts) {
        *value = part.trim().parse().map_err(|_| {
            CliError::Config(format!("triple `{text}`: `{}` is not a number", part.trim()))
        })?;
        if !value.is_finite() || *value < 0.0 {
            return Err(CliError::Config(format!(
                "triple `{text}`: masses must be nonnegative"
            )));
        }
    }
    let sum: f64 = values.iter().sum();
    if (sum - 1.0).abs() > 1e-3 {
        return Err(CliError::Config(format!(
            "triple `{text}` sums to {sum}, expected 1"
        )));
    }
    Ok(values)
}

fn combine(
    first: &MassFunction,
    second: &MassFunction,
    mode: FusionMode,
) -> Result<MassFunction, CliError> {
    Ok(match mode {
        FusionMode::Disjunctive => first.combine_disjunctive(second)?,
        FusionMode::Conjunctive => first.combine_conjunctive(second)?,
    })
}

fn render_mass(mass: &MassFunction) -> String {
    mass.focal_sets()
        .map(|(s, v)| format!("{{{}}} {:.2}%", s.label(), v * 100.0))
        .collect::<Vec<_>>()
        .join("  ")
}

fn render_matrix(out: &mut String, matrix: &DecisionMatrix) {
    for cell in &matrix.cells {
        out.push_str(&format!(
            "  {{{}}} x {{{}}} -> {{{}}} : {:.2}%\n",
            cell.col,
            cell.row,
            cell.merged,
            cell.product * 100.0
        ));
    }
    if matrix.conflict > 0.0 {
        out.push_str(&format!(
            "  conflict discarded: {:.2}%\n",
            matrix.conflict * 100.0
        ));
    }
}

/// `tables`: the two-stage decision-matrix audit for three event triples.
/// Every cross-product cell is listed with where its mass lands, followed by
/// the aggregated row of each stage and the final selection.
pub fn cmd_tables(triples: &[[f64; 3]; 3], mode: FusionMode) -> Result<String, CliError> {
    let frame = predictor_frame();
    let masses: Vec<MassFunction> = triples
        .iter()
        .map(|t| {
            let assignments: Vec<_> = PredictorId::ALL
                .iter()
                .map(|id| {
                    (
                        frame.singleton(id.label()).expect("known element"),
                        t[id.index()],
                    )
                })
                .collect();
            MassFunction::new(&frame, &assignments, true)
        })
        .collect::<Result<_, _>>()?;

    let mut out = String::from("Event masses\n");
    for (i, mass) in masses.iter().enumerate() {
        out.push_str(&format!("  E{}: {}\n", i + 1, render_mass(mass)));
    }

    let stage1 = decision_matrix(&masses[0], &masses[1], mode)?;
    let combined1 = combine(&masses[0], &masses[1], mode)?;
    out.push_str(&format!("\nStage 1: E1 (+) E2, {mode} rule\n"));
    render_matrix(&mut out, &stage1);
    out.push_str(&format!("  aggregated: {}\n", render_mass(&combined1)));

    let stage2 = decision_matrix(&combined1, &masses[2], mode)?;
    let combined2 = combine(&combined1, &masses[2], mode)?;
    out.push_str(&format!("\nStage 2: (E1 (+) E2) (+) E3, {mode} rule\n"));
    render_matrix(&mut out, &stage2);
    out.push_str(&format!("  aggregated: {}\n", render_mass(&combined2)));

    let selected = combined2.argmax_subset();
    let interval = combined2.confidence_interval(&selected)?;
    out.push_str(&format!(
        "\nSelected subset: {selected} with mass {:.2}% (belief {:.2}%, plausibility {:.2}%)\n",
        combined2.mass(&selected) * 100.0,
        interval.bel() * 100.0,
        interval.pls() * 100.0,
    ));
    Ok(out)
}

/// `eval`: recompute MAE and MAPE for every series in a `series.csv`.
pub fn cmd_eval(series_path: &Path) -> Result<String, CliError> {
    const HEADER: &str = "timestamp,actual_kw,v1_kw,v2_kw,v3_kw,fused_kw";
    let text = read_file(series_path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("").trim_end();
    if header != HEADER {
        return Err(CliError::Config(format!(
            "{}: expected header `{HEADER}`, found `{header}`",
            series_path.display()
        )));
    }
    let mut columns: [Vec<f64>; 5] = Default::default();
    for (idx, raw) in lines.enumerate() {
        let line = raw.trim_end();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(CliError::Config(format!(
                "{}:{}: expected 6 fields, found {}",
                series_path.display(),
                idx + 2,
                fields.len()
            )));
        }
        for (column, field) in columns.iter_mut().zip(&fields[1..]) {
            let value: f64 = field.parse().map_err(|_| {
                CliError::Config(format!(
                    "{}:{}: `{field}` is not a number",
                    series_path.display(),
                    idx + 2
                ))
            })?;
            column.push(value);
        }
    }

    #[derive(Serialize)]
    struct SeriesMetrics<'a> {
        series: &'a str,
        mae_kw: f64,
        mape_pct: f64,
    }
    let actual = columns[0].clone();
    let mut rows = Vec::new();
    for (offset, name) in ["V1", "V2", "V3", "fused"].iter().enumerate() {
        rows.push(SeriesMetrics {
            series: name,
            mae_kw: mae(&columns[offset + 1], &actual)?,
            mape_pct: mape(&columns[offset + 1], &actual)?,
        });
    }
    Ok(serde_json::to_string_pretty(&rows).expect("metrics serialize"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triples_parse_and_reject_malformed_input() {
        assert_eq!(parse_triple("0.30,0.26,0.44").unwrap(), [0.30, 0.26, 0.44]);
        assert_eq!(parse_triple(" 1 , 0 , 0 ").unwrap(), [1.0, 0.0, 0.0]);
        for bad in ["0.3,0.7", "a,b,c", "0.5,0.4,0.3", "-0.1,0.6,0.5", "1,0"] {
            let err = parse_triple(bad).unwrap_err();
            assert_eq!(err.exit_code(), 2, "`{bad}` should be a config error");
        }
    }

    #[test]
    fn tables_on_certain_evidence_collapse_to_one_cell() {
        let triples = [[1.0, 0.0, 0.0]; 3];
        let out = cmd_tables(&triples, FusionMode::Disjunctive).unwrap();
        assert!(out.contains("{V1} x {V1} -> {V1} : 100.00%"));
        assert!(out.contains("Selected subset: {V1} with mass 100.00%"));
        // one cell per stage: no other predictor ever appears
        assert!(!out.contains("V2"));
        assert!(!out.contains("V3"));
    }

    #[test]
    fn tables_treat_symmetric_evidence_symmetrically() {
        let third = 1.0 / 3.0;
        let triples = [[third, third, third]; 3];
        for mode in [FusionMode::Disjunctive, FusionMode::Conjunctive] {
            let out = cmd_tables(&triples, mode).unwrap();
            // every singleton aggregate must print identically
            let aggregated = out
                .lines()
                .filter(|l| l.contains("aggregated"))
                .last()
                .unwrap();
            let pick = |label: &str| -> &str {
                let start = aggregated.find(label).unwrap() + label.len();
                aggregated[start..].split('%').next().unwrap()
            };
            assert_eq!(pick("{V1} "), pick("{V2} "));
            assert_eq!(pick("{V2} "), pick("{V3} "));
            if mode == FusionMode::Disjunctive {
                assert_eq!(pick("{V1,V2} "), pick("{V2,V3} "));
            }
        }
    }

    #[test]
    fn tables_print_the_worked_example() {
        let out = cmd_tables(&DEFAULT_TRIPLES, FusionMode::Disjunctive).unwrap();
        assert!(out.contains("{V1} x {V1} -> {V1} : 9.30%"));
        assert!(out.contains("{V3} x {V2} -> {V2,V3} : 14.96%"));
        assert!(out.contains("Selected subset: {V2,V3}"));
    }

    #[test]
    fn eval_recomputes_metrics_from_csv() {
        let dir = std::env::temp_dir().join(format!("evifuse-eval-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("series.csv");
        // power-of-two values keep every ratio binary-exact
        std::fs::write(
            &path,
            "timestamp,actual_kw,v1_kw,v2_kw,v3_kw,fused_kw\n\
             2021-01-01T00:00:00Z,128,160,128,112,136\n\
             2021-01-01T01:00:00Z,256,320,256,224,272\n",
        )
        .unwrap();
        let out = cmd_eval(&path).unwrap();
        let rows: Vec<serde_json::Value> = serde_json::from_str(&out).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0]["series"], "V1");
        assert_eq!(rows[0]["mae_kw"], 48.0);
        assert_eq!(rows[0]["mape_pct"], 25.0);
        assert_eq!(rows[1]["mae_kw"], 0.0);
        assert_eq!(rows[2]["mape_pct"], 12.5);
        assert_eq!(rows[3]["series"], "fused");
        assert_eq!(rows[3]["mae_kw"], 12.0);
        assert_eq!(rows[3]["mape_pct"], 6.25);

        std::fs::write(&path, "wrong,header\n").unwrap();
        assert_eq!(cmd_eval(&path).unwrap_err().exit_code(), 2);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn missing_series_file_names_the_path() {
        let err = cmd_eval(Path::new("/no/such/series.csv")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("/no/such/series.csv"));
    }

    #[test]
    fn model_paths_are_one_based() {
        let dir = Path::new("out");
        assert_eq!(
            model_path(dir, PredictorId::V1),
            PathBuf::from("out/model_v1.json")
        );
        assert_eq!(
            model_path(dir, PredictorId::V3),
            PathBuf::from("out/model_v3.json")
        );
    }
}
