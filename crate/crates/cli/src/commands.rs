//! Subcommand implementations. Every command writes its artifacts under the
//! configured output directory and returns the report rows it emitted.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use fedrobust_core::attacks::{attack_batch, AttackConfig};
use fedrobust_core::data::{generate_synthetic_tabular, load_mnist_dir, reshape_tabular_to_image, train_test_split, LabeledDataset};
use fedrobust_core::eval::{self, compare_step_times, metrics_report, MetricsReport, Tags, TimingStats};
use fedrobust_core::federated::{rounds_to_csv, run_training, RoundLog};
use fedrobust_core::nn::train::train_centralized;
use fedrobust_core::nn::{ArchConfig, Model, ModelSpec, ModelVariant};
use fedrobust_core::rng::{self, tag};

use crate::config::{DataSource, ExperimentConfig};
use crate::error::{CliError, Result, StageExt};
use crate::model_file;

pub const MODEL_FILE: &str = "model.frb";
pub const ROUNDS_FILE: &str = "rounds.csv";
pub const SUMMARY_STEM: &str = "summary";
pub const OVERHEAD_FILE: &str = "overhead.csv";
pub const ADV_IMAGES_FILE: &str = "adversarial-images.idx";
pub const ADV_LABELS_FILE: &str = "adversarial-labels.idx";

pub struct Data {
    pub source: DataSource,
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

fn limit(d: LabeledDataset, n: Option<usize>) -> Result<LabeledDataset> {
    match n {
        Some(n) if n < d.len() => Ok(d.take(n)?),
        _ => Ok(d),
    }
}

pub fn load_data(cfg: &ExperimentConfig, source: DataSource) -> Result<Data> {
    let d = &cfg.data;
    let (train, test) = match source {
        DataSource::Mnist => load_mnist_dir(&d.mnist_dir)?,
        DataSource::Synthetic => {
            let s = &d.synthetic;
            let mut r = rng::derive(cfg.seed, &[tag::DATA]);
            let table = generate_synthetic_tabular(s.n, s.num_features, s.num_classes, s.separation, &mut r)?;
            let images = reshape_tabular_to_image(&table)?;
            train_test_split(&images, s.test_fraction, &mut rng::derive(cfg.seed, &[tag::SPLIT]))?
        }
    };
    Ok(Data { source, train: limit(train, d.train_limit)?, test: limit(test, d.test_limit)? })
}

pub fn build_spec(cfg: &ExperimentConfig, variant: ModelVariant, data: &Data) -> Result<ModelSpec> {
    let shape = data.train.sample_shape();
    Ok(ModelSpec::build(variant, shape, data.train.class_count, &ArchConfig::default(), &cfg.noise)?)
}

fn tags(variant: ModelVariant, source: DataSource) -> Tags {
    Tags { model: variant.as_str().into(), dataset: source.as_str().into() }
}

/// Seed shared by every prediction pass, so `evaluate` and an ε = 0 attack
/// see identical noise.
fn eval_seed(cfg: &ExperimentConfig) -> u64 {
    rng::derive_seed(cfg.seed, &[tag::EVAL])
}

fn out_path(cfg: &ExperimentConfig, name: &str) -> Result<PathBuf> {
    let dir = &cfg.report.out_dir;
    fs::create_dir_all(dir).map_err(|source| CliError::Output { path: dir.clone(), source })?;
    Ok(dir.join(name))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| CliError::Output { path: path.to_path_buf(), source })
}

fn emit(cfg: &ExperimentConfig, rows: &[MetricsReport]) -> Result<()> {
    out_path(cfg, "")?;
    eval::report_emit(rows, &cfg.report.out_dir, SUMMARY_STEM)?;
    Ok(())
}

fn timing_ms(cfg: &ExperimentConfig, ms: f64) -> Option<f64> {
    cfg.report.timing.then_some(ms)
}

fn train_central_model(cfg: &ExperimentConfig, variant: ModelVariant, data: &Data) -> Result<(Model, f64)> {
    let spec = build_spec(cfg, variant, data)?;
    let started = Instant::now();
    let model = train_centralized(&spec, &data.train, cfg.train.epochs, &cfg.train.sgd(), cfg.seed, |epoch, loss, _| {
        eprintln!("[{} {}] epoch {epoch}: loss {loss:.4}", variant.as_str(), data.source);
        Ok(())
    })?;
    let steps = cfg.train.epochs * data.train.len().div_ceil(cfg.train.batch_size);
    Ok((model, started.elapsed().as_secs_f64() * 1e3 / steps.max(1) as f64))
}

fn train_federated_model(cfg: &ExperimentConfig, variant: ModelVariant, data: &Data) -> Result<(Model, Vec<RoundLog>)> {
    let spec = build_spec(cfg, variant, data)?;
    Ok(run_training(&cfg.fed, &spec, &data.train, &data.test, &cfg.noise, |log| {
        eprintln!(
            "[{} {}] round {}: mean local loss {:.4}, test accuracy {:.4}",
            variant.as_str(),
            data.source,
            log.round,
            log.mean_local_loss,
            log.test_acc
        );
    })?)
}

fn mean_step_ms(logs: &[RoundLog]) -> f64 {
    logs.iter().map(|l| l.step_time_ms).sum::<f64>() / logs.len().max(1) as f64
}

fn clean_row(cfg: &ExperimentConfig, model: &Model, data: &Data, variant: ModelVariant, step_ms: Option<f64>) -> Result<MetricsReport> {
    let mut row = eval::evaluate(model, &data.test, &cfg.noise, eval_seed(cfg), &tags(variant, data.source))?;
    row.step_time_ms = step_ms;
    Ok(row)
}

pub fn train_central(cfg: &ExperimentConfig) -> Result<Vec<MetricsReport>> {
    let data = load_data(cfg, cfg.data.source)?;
    let (model, step_ms) = train_central_model(cfg, cfg.model, &data)?;
    model_file::save(&out_path(cfg, MODEL_FILE)?, &model.params)?;
    let rows = vec![clean_row(cfg, &model, &data, cfg.model, timing_ms(cfg, step_ms))?];
    emit(cfg, &rows)?;
    Ok(rows)
}

pub fn train_federated(cfg: &ExperimentConfig) -> Result<Vec<MetricsReport>> {
    let data = load_data(cfg, cfg.data.source)?;
    let (model, logs) = train_federated_model(cfg, cfg.model, &data)?;
    model_file::save(&out_path(cfg, MODEL_FILE)?, &model.params)?;
    write(&out_path(cfg, ROUNDS_FILE)?, &rounds_to_csv(&logs, cfg.report.timing)?)?;
    let rows = vec![clean_row(cfg, &model, &data, cfg.model, timing_ms(cfg, mean_step_ms(&logs)))?];
    emit(cfg, &rows)?;
    Ok(rows)
}

fn load_model(cfg: &ExperimentConfig, data: &Data, path: &Path) -> Result<Model> {
    model_file::load(path, &build_spec(cfg, cfg.model, data)?)
}

pub fn evaluate(cfg: &ExperimentConfig, model_path: &Path) -> Result<Vec<MetricsReport>> {
    let data = load_data(cfg, cfg.data.source)?;
    let model = load_model(cfg, &data, model_path)?;
    let rows = vec![clean_row(cfg, &model, &data, cfg.model, None)?];
    emit(cfg, &rows)?;
    Ok(rows)
}

fn attack_rows(
    cfg: &ExperimentConfig,
    model: &Model,
    subset: &LabeledDataset,
    attack: &AttackConfig,
    variant: ModelVariant,
    source: DataSource,
) -> Result<(MetricsReport, LabeledDataset)> {
    let started = Instant::now();
    let outcome = attack_batch(model, subset, attack, &cfg.noise, eval_seed(cfg))?;
    eprintln!(
        "[{} {source}] {} ε={}: success rate {:.4} ({:.1}s)",
        variant.as_str(),
        attack.family.as_str(),
        attack.epsilon,
        outcome.success_rate,
        started.elapsed().as_secs_f64()
    );
    let row = metrics_report(&tags(variant, source), attack.family.as_str(), attack.epsilon, &outcome.adversarial_predictions, subset)?;
    Ok((row, outcome.adversarial))
}

fn attack_subset(cfg: &ExperimentConfig, data: &Data) -> Result<LabeledDataset> {
    limit(data.test.clone(), cfg.data.attack_limit)
}

pub fn attack(cfg: &ExperimentConfig, model_path: &Path) -> Result<Vec<MetricsReport>> {
    let data = load_data(cfg, cfg.data.source)?;
    let model = load_model(cfg, &data, model_path)?;
    let subset = attack_subset(cfg, &data)?;
    let (row, adversarial) = attack_rows(cfg, &model, &subset, &cfg.attack, cfg.model, data.source)?;
    adversarial.save_idx(&out_path(cfg, ADV_IMAGES_FILE)?, &out_path(cfg, ADV_LABELS_FILE)?)?;
    let rows = vec![row];
    emit(cfg, &rows)?;
    Ok(rows)
}

/// Concatenates summary CSVs into one table.
pub fn report_merge(cfg: &ExperimentConfig, inputs: &[PathBuf]) -> Result<Vec<MetricsReport>> {
    if inputs.is_empty() {
        return Err(CliError::Config { key: "--inputs".into(), reason: "name at least one summary CSV".into() });
    }
    let mut rows = Vec::new();
    for path in inputs {
        rows.extend(eval::report::read_csv(path)?);
    }
    emit(cfg, &rows)?;
    Ok(rows)
}

pub const OVERHEAD_HEADER: &str = "dataset,cnn_step_ms,cnn_ci_ms,dipsen_step_ms,dipsen_ci_ms,ratio,overhead_pct,steps";

fn overhead_line(cfg: &ExperimentConfig, source: DataSource, cnn: &TimingStats, dipsen: &TimingStats) -> String {
    if !cfg.report.timing {
        return format!("{source},,,,,,,{}", cnn.samples.len());
    }
    format!(
        "{source},{},{},{},{},{},{},{}",
        cnn.mean_secs * 1e3,
        cnn.half_width_secs * 1e3,
        dipsen.mean_secs * 1e3,
        dipsen.half_width_secs * 1e3,
        dipsen.mean_secs / cnn.mean_secs,
        eval::relative_overhead_pct(cnn, dipsen),
        cnn.samples.len()
    )
}

/// Basic CNN, DiPSeN baseline, overhead and robustness on every configured
/// dataset. Per-dataset models and round logs are prefixed with the dataset
/// name; `summary.*` and `overhead.csv` cover all datasets.
pub fn full_pipeline(cfg: &ExperimentConfig) -> Result<Vec<MetricsReport>> {
    let mut rows = Vec::new();
    let mut overhead = vec![OVERHEAD_HEADER.to_string()];
    for &source in &cfg.pipeline.datasets {
        let data = load_data(cfg, source).stage(&format!("{source}: data"))?;

        let (cnn, _) = train_central_model(cfg, ModelVariant::Cnn, &data).stage(&format!("{source}: basic cnn"))?;
        model_file::save(&out_path(cfg, &format!("{source}-cnn.frb"))?, &cnn.params)?;

        let dipsen_stage = format!("{source}: dipsen baseline");
        let dipsen = if cfg.pipeline.federated_dipsen {
            let (model, logs) = train_federated_model(cfg, ModelVariant::Dipsen, &data).stage(&dipsen_stage)?;
            write(&out_path(cfg, &format!("{source}-{ROUNDS_FILE}"))?, &rounds_to_csv(&logs, cfg.report.timing)?)?;
            model
        } else {
            train_central_model(cfg, ModelVariant::Dipsen, &data).stage(&dipsen_stage)?.0
        };
        model_file::save(&out_path(cfg, &format!("{source}-dipsen.frb"))?, &dipsen.params)?;

        let timing_seed = rng::derive_seed(cfg.seed, &[tag::TIMING]);
        let (t_cnn, t_dipsen) = compare_step_times(&cnn, &dipsen, &data.train, &cfg.train.sgd(), cfg.pipeline.timing_steps, timing_seed)
            .stage(&format!("{source}: overhead"))?;
        eprintln!(
            "[{source}] step time cnn {:.2} ms, dipsen {:.2} ms, overhead {:+.2}%",
            t_cnn.mean_secs * 1e3,
            t_dipsen.mean_secs * 1e3,
            eval::relative_overhead_pct(&t_cnn, &t_dipsen)
        );
        overhead.push(overhead_line(cfg, source, &t_cnn, &t_dipsen));

        let robustness = format!("{source}: robustness");
        let subset = attack_subset(cfg, &data)?;
        for (variant, model, timing) in [(ModelVariant::Cnn, &cnn, &t_cnn), (ModelVariant::Dipsen, &dipsen, &t_dipsen)] {
            rows.push(clean_row(cfg, model, &data, variant, timing_ms(cfg, timing.mean_secs * 1e3)).stage(&robustness)?);
            for &family in &cfg.pipeline.attacks {
                let attack = AttackConfig { family, ..cfg.attack };
                rows.push(attack_rows(cfg, model, &subset, &attack, variant, source).stage(&robustness)?.0);
            }
        }
    }
    write(&out_path(cfg, OVERHEAD_FILE)?, &(overhead.join("\n") + "\n"))?;
    emit(cfg, &rows)?;
    Ok(rows)
}

/// Fixed-width rendering of report rows for the terminal.
pub fn render_table(rows: &[MetricsReport]) -> String {
    let mut out = format!("{:<8} {:<10} {:<6} {:>7} {:>7} {:>7} {:>7} {:>7} {:>10}\n", "model", "dataset", "attack", "eps", "acc", "prec", "rec", "f1", "step_ms");
    for r in rows {
        let step = r.step_time_ms.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into());
        out += &format!(
            "{:<8} {:<10} {:<6} {:>7.3} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>10}\n",
            r.model, r.dataset, r.attack, r.epsilon, r.acc, r.prec, r.rec, r.f1, step
        );
    }
    out
}
