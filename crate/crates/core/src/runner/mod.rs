//! Experiment runner: wires plant, preprocessing, pipelines, cognition and
//! business logic over the bus, executes seeded repetitions, and writes the
//! per-repetition and aggregated CSV reports.
//!
//! One production cycle is processed in a fixed order: the plant runs a
//! batch (raw-data), preprocessing normalizes it (preprocessed-data), every
//! candidate pipeline consumes it and — once the initial design is complete —
//! fits its model and proposes a candidate (optimization-result), the
//! cognition scores the proposals and picks whose candidate is applied, and
//! the business logic vets the candidate and adapts the plant for the next
//! cycle. Concurrent mode runs only the pipeline fits on separate threads;
//! the records are identical up to cpu-time fields.

mod aggregate;
mod config;

pub use aggregate::{aggregate_reports, AGGREGATE_HEADER};
pub use config::{ExecutionMode, ExperimentConfig};

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::bus::{Broker, BusClass, BusError, FieldKind, FieldSpec, Subscriber, Value};
use crate::cognition::{
    Cognition, CognitionError, DriftDetector, PipelinePerformance, PipelineSpec,
};
use crate::conceptual::{
    check_constraints, decide_adaption, ConceptError, ConstraintCheck, CycleRecord, RunLog,
};
use crate::payload;
use crate::sim::{aggregate_raw, ObjectiveWeights, SimError, VpsSimulator};
use crate::smbo::{generate_design, propose, Proposal, SmboError, SmboState};
use crate::surrogates::ModelSpec;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("runtime failure: {0}")]
    Runtime(String),
}

impl RunError {
    /// Process exit code per the contract: 2 for config errors, 3 for
    /// runtime failures (0 is success).
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Config(_) => 2,
            RunError::Runtime(_) => 3,
        }
    }
}

impl From<BusError> for RunError {
    fn from(e: BusError) -> Self {
        RunError::Runtime(e.to_string())
    }
}

impl From<SimError> for RunError {
    fn from(e: SimError) -> Self {
        RunError::Runtime(e.to_string())
    }
}

impl From<SmboError> for RunError {
    fn from(e: SmboError) -> Self {
        RunError::Runtime(e.to_string())
    }
}

impl From<ConceptError> for RunError {
    fn from(e: ConceptError) -> Self {
        RunError::Runtime(e.to_string())
    }
}

impl From<CognitionError> for RunError {
    fn from(e: CognitionError) -> Self {
        match e {
            CognitionError::UnsupportedGoal(_) => RunError::Config(e.to_string()),
            _ => RunError::Runtime(e.to_string()),
        }
    }
}

/// SplitMix64 step; used to derive independent per-(repetition, cycle,
/// pipeline) seeds from one base seed.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    mix(mix(mix(base) ^ a) ^ b)
}

/// All topics of the three buses, with their class.
pub const TOPICS: &[(&str, BusClass)] = &[
    ("raw-data", BusClass::Data),
    ("preprocessed-data", BusClass::Data),
    ("adaption-ack", BusClass::Data),
    ("model-request", BusClass::Analytics),
    ("model-ready", BusClass::Analytics),
    ("optimization-result", BusClass::Analytics),
    ("pipeline-selected", BusClass::Analytics),
    ("drift-event", BusClass::Analytics),
    ("recalibration-event", BusClass::Analytics),
    ("reports", BusClass::Knowledge),
];

fn builtin_schema(topic: &str) -> Vec<FieldSpec> {
    use FieldKind::{Float, Integer, Text};
    let req = FieldSpec::required;
    match topic {
        "raw-data" => vec![
            req("cycle", Integer),
            req("x", Float),
            req("f1", Float),
            req("f2", Float),
            req("f3", Float),
            req("popped", Float),
            req("box_filled", Integer),
        ],
        "preprocessed-data" => vec![req("cycle", Integer), req("x_norm", Float), req("y", Float)],
        "adaption-ack" => vec![
            req("cycle", Integer),
            req("x", Float),
            req("accepted", Integer),
        ],
        "model-request" => vec![req("pipeline_id", Text), req("cycle", Integer)],
        "model-ready" => vec![
            req("pipeline_id", Text),
            req("cycle", Integer),
            req("algorithm", Text),
            req("model_bytes", Integer),
            req("cpu_ms", Float),
        ],
        "optimization-result" => vec![
            req("pipeline_id", Text),
            req("cycle", Integer),
            req("x_candidate", Float),
            req("predicted_optimum", Float),
            req("cpu_ms", Float),
            req("model_bytes", Integer),
            req("pred_error", Float),
        ],
        "pipeline-selected" => vec![req("cycle", Integer), req("pipeline_id", Text)],
        "drift-event" => vec![req("cycle", Integer), req("pipeline_id", Text)],
        "recalibration-event" => vec![req("cycle", Integer), req("count", Integer)],
        "reports" => vec![req("cycle", Integer), req("summary", Text)],
        other => unreachable!("no builtin schema for topic {other}"),
    }
}

/// Create every topic and register schemas: documents from `schema_dir`
/// first (if any), then the built-in schema for every topic still lacking
/// one.
pub fn setup_broker(schema_dir: Option<&Path>) -> Result<Broker, RunError> {
    let broker = Broker::new();
    for &(topic, class) in TOPICS {
        broker.create_topic(topic, class)?;
    }
    if let Some(dir) = schema_dir {
        broker.load_schema_dir(dir)?;
    }
    for &(topic, _) in TOPICS {
        if broker.schema(topic, None).is_err() {
            broker.register_schema(topic, builtin_schema(topic))?;
        }
    }
    Ok(broker)
}

/// One candidate pipeline at run time: its spec, its consumer-group handle
/// on preprocessed-data, its SMBO state, and its latest proposal.
struct PipelineTask {
    spec: PipelineSpec,
    sub: Subscriber,
    state: SmboState<f64>,
    proposal: Option<Proposal<f64>>,
}

/// Everything one repetition produced.
pub struct RepetitionOutcome {
    pub log: RunLog,
    pub bus_stats_csv: String,
    /// Simulator defensive counter; stays 0 in a healthy system.
    pub violations: u64,
    pub drift_cycles: Vec<u64>,
    pub recalibration_cycles: Vec<u64>,
    pub selected_pipeline: Option<String>,
}

fn f64_field(payload: &crate::bus::Payload, name: &str) -> Result<f64, RunError> {
    payload
        .get(name)
        .and_then(Value::as_f64)
        .ok_or_else(|| RunError::Runtime(format!("message lacks float field {name}")))
}

fn i64_field(payload: &crate::bus::Payload, name: &str) -> Result<i64, RunError> {
    payload
        .get(name)
        .and_then(Value::as_i64)
        .ok_or_else(|| RunError::Runtime(format!("message lacks integer field {name}")))
}

fn text_field(payload: &crate::bus::Payload, name: &str) -> Result<String, RunError> {
    payload
        .get(name)
        .and_then(Value::as_text)
        .map(str::to_string)
        .ok_or_else(|| RunError::Runtime(format!("message lacks text field {name}")))
}

/// Vary the forest bootstrap seeds with the repetition so seeded runs
/// differ even on a noise-free plant.
fn reseed_forests(kb: &mut crate::conceptual::KnowledgeBase, goal_kind: &str, seed: u64) {
    if let Some(setups) = kb.goals.get_mut(goal_kind) {
        for (i, setup) in setups.iter_mut().enumerate() {
            if let ModelSpec::Forest(cfg) = &mut setup.model {
                cfg.seed = derive_seed(seed, i as u64, cfg.seed);
            }
        }
    }
}

/// Execute one seeded repetition of the full workflow.
pub fn run_repetition(
    cfg: &ExperimentConfig,
    seed: u64,
    mode: ExecutionMode,
) -> Result<RepetitionOutcome, RunError> {
    let mut ground_truth = cfg.ground_truth.clone();
    ground_truth.seed = seed;
    let mut sim = VpsSimulator::new(ground_truth).map_err(|e| RunError::Config(e.to_string()))?;
    let (lo, hi) = sim.bounds();
    let denorm = |xn: f64| lo + (hi - lo) * xn;
    let norm = |x: f64| (x - lo) / (hi - lo);

    let weights = ObjectiveWeights {
        weights: cfg.weights,
        ranges: sim.objective_ranges(1001),
    };
    weights
        .validate()
        .map_err(|e| RunError::Config(e.to_string()))?;

    let mut knowledge = cfg.knowledge.clone();
    reseed_forests(&mut knowledge, &cfg.goal_kind, seed);

    let broker = setup_broker(cfg.schema_dir.as_deref())?;
    let mut cognition = Cognition::new(
        &cfg.goal_kind,
        &knowledge,
        (lo, hi),
        cfg.policy,
        cfg.phase1_cycles,
        DriftDetector::new(cfg.drift_window, cfg.drift_trigger_ratio),
        cfg.recalibration_window,
    )?;

    let mut pipelines: Vec<PipelineTask> = cognition
        .candidates
        .iter()
        .map(|spec| -> Result<PipelineTask, RunError> {
            let sub = broker.subscribe("preprocessed-data", &spec.consumer_group, "m1")?;
            Ok(PipelineTask {
                spec: spec.clone(),
                sub,
                state: SmboState::new(1),
                proposal: None,
            })
        })
        .collect::<Result<_, _>>()?;

    let pre_sub = broker.subscribe("raw-data", "grp-preprocessing", "m1")?;
    let cog_sub = broker.subscribe("optimization-result", "grp-cognition", "m1")?;

    let design = generate_design::<f64>(&cfg.design, &[(0.0, 1.0)])
        .map_err(|e| RunError::Config(e.to_string()))?;
    let n_initial = cfg.design.n_initial as u64;
    let norm_bounds = [(0.0, 1.0)];

    let mut log = RunLog::new();
    let mut drift_cycles = Vec::new();
    let mut recalibration_cycles = Vec::new();

    for cycle in 1..=cfg.n_cycles {
        // 1. plant: one batch per cycle
        let batch = if cycle <= n_initial {
            sim.run_batch(denorm(design[(cycle - 1) as usize][0]))?
        } else {
            sim.run_current_batch()?
        };
        broker.publish(
            "raw-data",
            payload! {
                "cycle" => Value::Int(cycle as i64),
                "x" => Value::Float(batch.x_used),
                "f1" => Value::Float(batch.f1),
                "f2" => Value::Float(batch.f2),
                "f3" => Value::Float(batch.f3),
                "popped" => Value::Float(batch.popped),
                "box_filled" => Value::Int(i64::from(batch.box_filled)),
            },
        )?;

        // 2./3. acquisition + preprocessing: normalize and aggregate
        let mut y_observed = f64::NAN;
        for msg in broker.poll(&pre_sub, 1024)? {
            let f = [
                f64_field(&msg.payload, "f1")?,
                f64_field(&msg.payload, "f2")?,
                f64_field(&msg.payload, "f3")?,
            ];
            let y = aggregate_raw(f, &weights);
            y_observed = y;
            broker.publish(
                "preprocessed-data",
                payload! {
                    "cycle" => Value::Int(i64_field(&msg.payload, "cycle")?),
                    "x_norm" => Value::Float(norm(f64_field(&msg.payload, "x")?)),
                    "y" => Value::Float(y),
                },
            )?;
        }

        // every candidate's consumer group receives all preprocessed data
        for pipeline in &mut pipelines {
            for msg in broker.poll(&pipeline.sub, 1024)? {
                pipeline.state.observe(
                    vec![f64_field(&msg.payload, "x_norm")?],
                    f64_field(&msg.payload, "y")?,
                );
            }
        }

        if cycle < n_initial {
            continue; // still collecting the initial design
        }

        // 4./5. model fitting and model application, one proposal per pipeline
        for pipeline in &pipelines {
            broker.publish(
                "model-request",
                payload! {
                    "pipeline_id" => Value::Text(pipeline.spec.pipeline_id.clone()),
                    "cycle" => Value::Int(cycle as i64),
                },
            )?;
        }
        let truth = |x: &[f64]| {
            sim.ground_truth_objective(denorm(x[0]).clamp(lo, hi), &weights)
                .expect("clamped candidate is in bounds")
        };
        let proposals: Vec<Result<Proposal<f64>, SmboError>> = match mode {
            ExecutionMode::Deterministic => pipelines
                .iter()
                .enumerate()
                .map(|(k, p)| {
                    propose(
                        &p.state,
                        &p.spec.model,
                        &p.spec.infill,
                        &norm_bounds,
                        &truth,
                        derive_seed(seed, cycle, k as u64),
                    )
                })
                .collect(),
            ExecutionMode::Concurrent => std::thread::scope(|scope| {
                let handles: Vec<_> = pipelines
                    .iter()
                    .enumerate()
                    .map(|(k, p)| {
                        let truth = &truth;
                        scope.spawn(move || {
                            propose(
                                &p.state,
                                &p.spec.model,
                                &p.spec.infill,
                                &norm_bounds,
                                truth,
                                derive_seed(seed, cycle, k as u64),
                            )
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("pipeline thread panicked"))
                    .collect()
            }),
        };
        for (pipeline, proposal) in pipelines.iter_mut().zip(proposals) {
            let proposal = proposal?;
            broker.publish(
                "model-ready",
                payload! {
                    "pipeline_id" => Value::Text(pipeline.spec.pipeline_id.clone()),
                    "cycle" => Value::Int(cycle as i64),
                    "algorithm" => Value::Text(pipeline.spec.model.algorithm().to_string()),
                    "model_bytes" => Value::Int(proposal.report.model_size_bytes as i64),
                    "cpu_ms" => Value::Float(proposal.report.cpu_time_s * 1000.0),
                },
            )?;
            broker.publish(
                "optimization-result",
                payload! {
                    "pipeline_id" => Value::Text(pipeline.spec.pipeline_id.clone()),
                    "cycle" => Value::Int(cycle as i64),
                    "x_candidate" => Value::Float(proposal.x_candidate[0]),
                    "predicted_optimum" => Value::Float(proposal.predicted_optimum),
                    "cpu_ms" => Value::Float(proposal.report.cpu_time_s * 1000.0),
                    "model_bytes" => Value::Int(proposal.report.model_size_bytes as i64),
                    "pred_error" => Value::Float(proposal.pred_error),
                },
            )?;
            pipeline.proposal = Some(proposal);
        }

        // 6. cognition: score proposals, select, watch for drift
        let mut perfs = Vec::new();
        for msg in broker.poll(&cog_sub, 1024)? {
            perfs.push(PipelinePerformance {
                pipeline_id: text_field(&msg.payload, "pipeline_id")?,
                cycle: i64_field(&msg.payload, "cycle")? as u64,
                pred_error: f64_field(&msg.payload, "pred_error")?,
                predicted_optimum: f64_field(&msg.payload, "predicted_optimum")?,
                cpu_time_s: f64_field(&msg.payload, "cpu_ms")? / 1000.0,
                model_size_bytes: i64_field(&msg.payload, "model_bytes")? as usize,
            });
        }
        let decision = cognition.handle_cycle(&perfs)?;
        if let Some(selected) = &decision.selected_now {
            broker.publish(
                "pipeline-selected",
                payload! {
                    "cycle" => Value::Int(cycle as i64),
                    "pipeline_id" => Value::Text(selected.clone()),
                },
            )?;
        }
        if decision.drift {
            drift_cycles.push(cycle);
            broker.publish(
                "drift-event",
                payload! {
                    "cycle" => Value::Int(cycle as i64),
                    "pipeline_id" => Value::Text(decision.chosen_pipeline.clone()),
                },
            )?;
        }
        if decision.recalibrated {
            recalibration_cycles.push(cycle);
            broker.publish(
                "recalibration-event",
                payload! {
                    "cycle" => Value::Int(cycle as i64),
                    "count" => Value::Int(cognition.recalibration_count() as i64),
                },
            )?;
            // re-calibration turns on forgetting for every candidate
            for pipeline in &mut pipelines {
                let spec = cognition
                    .candidates
                    .iter()
                    .find(|c| c.pipeline_id == pipeline.spec.pipeline_id)
                    .expect("recalibration preserves the candidate set");
                pipeline.spec.window = spec.window;
                pipeline.state.history.window = spec.window;
            }
        }

        // 7./8. business logic vets the chosen candidate; adaption applies it
        let chosen = pipelines
            .iter()
            .find(|p| p.spec.pipeline_id == decision.chosen_pipeline)
            .ok_or_else(|| RunError::Runtime("chosen pipeline unknown".into()))?;
        let chosen_proposal = chosen
            .proposal
            .as_ref()
            .ok_or_else(|| RunError::Runtime("chosen pipeline has no proposal".into()))?;
        let x_candidate = denorm(chosen_proposal.x_candidate[0]);
        let mut adapted = false;
        let summary = match check_constraints(x_candidate, &knowledge) {
            ConstraintCheck::Ok => {
                // the improvement threshold compares against what the plant
                // currently delivers, not the historical best: evaluating the
                // candidate requires moving the plant there
                match decide_adaption(
                    y_observed,
                    x_candidate,
                    chosen_proposal.predicted_optimum,
                    &knowledge,
                    cycle,
                    &decision.chosen_pipeline,
                ) {
                    Some(command) => match sim.apply_adaption(&command) {
                        Ok(ack) => {
                            adapted = true;
                            broker.publish(
                                "adaption-ack",
                                payload! {
                                    "cycle" => Value::Int(cycle as i64),
                                    "x" => Value::Float(ack.x),
                                    "accepted" => Value::Int(1),
                                },
                            )?;
                            format!("adapted x to {x_candidate}")
                        }
                        Err(e) => {
                            broker.publish(
                                "adaption-ack",
                                payload! {
                                    "cycle" => Value::Int(cycle as i64),
                                    "x" => Value::Float(x_candidate),
                                    "accepted" => Value::Int(0),
                                },
                            )?;
                            format!("plant rejected adaption: {e}")
                        }
                    },
                    None => "improvement below threshold; keeping x".to_string(),
                }
            }
            ConstraintCheck::Violation(reason) => format!("constraint violation: {reason}"),
        };
        broker.publish(
            "reports",
            payload! {
                "cycle" => Value::Int(cycle as i64),
                "summary" => Value::Text(format!(
                    "cycle {cycle}: chose {}; {summary}",
                    decision.chosen_pipeline
                )),
            },
        )?;

        // 9. monitoring: one record per pipeline per cycle
        for pipeline in &pipelines {
            let proposal = pipeline.proposal.as_ref().expect("proposal set this cycle");
            let is_chosen = pipeline.spec.pipeline_id == decision.chosen_pipeline;
            log.record_cycle(CycleRecord {
                cycle,
                pipeline_id: pipeline.spec.pipeline_id.clone(),
                x_evaluated: batch.x_used,
                y_observed,
                predicted_optimum: proposal.predicted_optimum,
                pred_error: proposal.pred_error,
                cpu_ms: proposal.report.cpu_time_s * 1000.0,
                model_bytes: proposal.report.model_size_bytes,
                selected: is_chosen,
                adapted: adapted && is_chosen,
                drift: decision.drift && is_chosen,
            })?;
        }
    }

    Ok(RepetitionOutcome {
        log,
        bus_stats_csv: broker.stats_csv(),
        violations: sim.violation_count(),
        drift_cycles,
        recalibration_cycles,
        selected_pipeline: cognition.selected().map(str::to_string),
    })
}

/// What a successful run wrote, plus health counters for assertions.
#[derive(Debug)]
pub struct RunSummary {
    pub repetition_files: Vec<PathBuf>,
    pub aggregate_file: PathBuf,
    pub total_violations: u64,
    pub drift_cycles: Vec<Vec<u64>>,
    pub recalibration_cycles: Vec<Vec<u64>>,
}

fn remove_outputs(paths: &[PathBuf]) {
    for path in paths {
        let _ = std::fs::remove_file(path);
    }
}

/// Execute every repetition of a validated configuration and write the
/// output CSVs into `out_dir`. On any failure all partial outputs are
/// removed.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    mode: ExecutionMode,
    seed_offset: u64,
) -> Result<RunSummary, RunError> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| RunError::Runtime(format!("{}: {e}", out_dir.display())))?;

    let mut written: Vec<PathBuf> = Vec::new();
    let mut reports: Vec<String> = Vec::new();
    let mut summary = RunSummary {
        repetition_files: Vec::new(),
        aggregate_file: out_dir.join("aggregate.csv"),
        total_violations: 0,
        drift_cycles: Vec::new(),
        recalibration_cycles: Vec::new(),
    };

    let fail = |written: &[PathBuf], e: RunError| {
        remove_outputs(written);
        Err(e)
    };

    for (i, &base_seed) in cfg.seeds.iter().enumerate() {
        let seed = base_seed.wrapping_add(seed_offset);
        let outcome = match run_repetition(cfg, seed, mode) {
            Ok(outcome) => outcome,
            Err(e) => return fail(&written, e),
        };
        let report = outcome.log.to_csv();
        let rep_path = out_dir.join(format!("repetition_{:02}.csv", i + 1));
        let stats_path = out_dir.join(format!("bus_stats_{:02}.csv", i + 1));
        if let Err(e) = std::fs::write(&rep_path, &report) {
            return fail(
                &written,
                RunError::Runtime(format!("{}: {e}", rep_path.display())),
            );
        }
        written.push(rep_path.clone());
        if let Err(e) = std::fs::write(&stats_path, &outcome.bus_stats_csv) {
            return fail(
                &written,
                RunError::Runtime(format!("{}: {e}", stats_path.display())),
            );
        }
        written.push(stats_path);
        summary.repetition_files.push(rep_path);
        summary.total_violations += outcome.violations;
        summary.drift_cycles.push(outcome.drift_cycles);
        summary
            .recalibration_cycles
            .push(outcome.recalibration_cycles);
        reports.push(report);
    }

    let aggregate = match aggregate_reports(&reports) {
        Ok(a) => a,
        Err(e) => return fail(&written, e),
    };
    if let Err(e) = std::fs::write(&summary.aggregate_file, aggregate) {
        let e = RunError::Runtime(format!("{}: {e}", summary.aggregate_file.display()));
        return fail(&written, e);
    }
    Ok(summary)
}

/// CLI entry point for `run`: load the config, apply flag overrides, and
/// execute.
pub fn run(
    config_path: &Path,
    out_override: Option<&Path>,
    mode_override: Option<ExecutionMode>,
    seed_offset: u64,
) -> Result<RunSummary, RunError> {
    let cfg = ExperimentConfig::load(config_path)?;
    let out_dir = out_override.unwrap_or(&cfg.output_dir).to_path_buf();
    let mode = mode_override.unwrap_or(cfg.mode);
    run_experiment(&cfg, &out_dir, mode, seed_offset)
}
