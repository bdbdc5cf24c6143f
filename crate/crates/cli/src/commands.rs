use std::path::{Path, PathBuf};

use serde::Serialize;

use rstar_core::inference::InferenceEngine;
use rstar_core::profile::{default_step, profile_grid};
use rstar_core::simlab::{self, run_verification, SimConfig, VerifyConfig};
use rstar_core::{
    fit_mle, ConstrainedFit, Dataset, ErrorDensity, FitResult, InferenceReport, ModelSpec, Problem,
    ProfileOptions, RootStatistic,
};

use crate::output::{emit, read_file, Artifact, Manifest};
use crate::{CliError, DataArgs, Format, OutArgs, Preset, StudyArgs};

struct Loaded {
    bytes: Vec<u8>,
    data: Dataset,
    interest: usize,
}

fn load(args: &DataArgs) -> Result<Loaded, CliError> {
    let bytes = read_file(&args.input).map_err(|e| CliError::Data(format!("{}: {e}", args.input.display())))?;
    let data = Dataset::from_csv(bytes.as_slice(), &args.response, args.intercept)?;
    let interest = match &args.interest {
        None => data.ncols() - 1,
        Some(s) => match data.column_index(s) {
            Some(i) => i,
            None => match s.parse::<usize>() {
                Ok(i) if i < data.ncols() => i,
                _ => return Err(CliError::Config(format!("unknown interest column '{s}'"))),
            },
        },
    };
    Ok(Loaded { bytes, data, interest })
}

/// The resolved options of a data-driven run, as recorded in the manifest.
#[derive(Serialize)]
struct DataRun<'a, E: Serialize> {
    input: String,
    response: &'a str,
    family: ModelSpec,
    intercept: bool,
    interest: &'a str,
    #[serde(flatten)]
    extra: E,
}

fn data_run<'a, E: Serialize>(args: &'a DataArgs, loaded: &'a Loaded, extra: E) -> DataRun<'a, E> {
    DataRun {
        input: args.input.display().to_string(),
        response: &args.response,
        family: args.family,
        intercept: args.intercept,
        interest: &loaded.data.names()[loaded.interest],
        extra,
    }
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut v = serde_json::to_vec_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    v.push(b'\n');
    Ok(v)
}

fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

fn primary(out: &OutArgs, bytes: Vec<u8>) -> Artifact {
    Artifact {
        path: out.output.clone(),
        bytes,
    }
}

#[derive(Serialize)]
struct ParameterRow {
    name: String,
    estimate: f64,
    std_error: f64,
}

#[derive(Serialize)]
struct FitReport<'a> {
    family: ModelSpec,
    n: usize,
    interest: &'a str,
    parameters: Vec<ParameterRow>,
    loglik: f64,
    iterations: usize,
    converged: bool,
    logdet_nuisance: f64,
}

fn parameter_rows(model: &ModelSpec, data: &Dataset, fit: &FitResult) -> Result<Vec<ParameterRow>, CliError> {
    let mut names: Vec<String> = data.names().to_vec();
    if model.scale_index(data.ncols()).is_some() {
        names.push("sigma".into());
    }
    let se_part = fit.standard_errors()?;
    let pos = fit.theta_hat.natural_positions();
    let mut se = vec![0.0; se_part.len()];
    for (k, &i) in pos.iter().enumerate() {
        se[i] = se_part[k];
    }
    Ok(fit
        .theta_hat
        .to_natural()
        .into_iter()
        .zip(se)
        .zip(names)
        .map(|((estimate, std_error), name)| ParameterRow {
            name,
            estimate,
            std_error,
        })
        .collect())
}

pub fn fit(args: &DataArgs) -> Result<(), CliError> {
    let loaded = load(args)?;
    let problem = Problem::new(args.family, &loaded.data, loaded.interest)?;
    let fit = fit_mle(&problem, None)?;
    let parameters = parameter_rows(&args.family, &loaded.data, &fit)?;
    let bytes = match args.out.format.unwrap_or(Format::Json) {
        Format::Json => json_bytes(&FitReport {
            family: args.family,
            n: loaded.data.n(),
            interest: &loaded.data.names()[loaded.interest],
            parameters,
            loglik: fit.loglik_at_max,
            iterations: fit.iterations,
            converged: fit.converged,
            logdet_nuisance: fit.logdet_nuisance,
        })?,
        Format::Csv => csv_bytes(
            &["name", "estimate", "std_error"],
            &parameters
                .iter()
                .map(|p| vec![p.name.clone(), p.estimate.to_string(), p.std_error.to_string()])
                .collect::<Vec<_>>(),
        )?,
    };
    let run = data_run(args, &loaded, ());
    let manifest = Manifest::new("fit", &run, None, Some(&loaded.bytes))?;
    emit(manifest, vec![primary(&args.out, bytes)])
}

#[derive(Serialize)]
struct Interval {
    lo: f64,
    hi: f64,
}

#[derive(Serialize)]
struct TestOutput {
    #[serde(flatten)]
    report: InferenceReport,
    level: f64,
    interval_r: Option<Interval>,
    interval_r_star: Option<Interval>,
    /// Messages from interval searches that failed.
    interval_errors: Vec<String>,
}

pub fn test(args: &DataArgs, psi0: f64, level: f64) -> Result<(), CliError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(CliError::Config(format!("level must lie in (0, 1), got {level}")));
    }
    let loaded = load(args)?;
    let problem = Problem::new(args.family, &loaded.data, loaded.interest)?;
    let engine = InferenceEngine::new(problem)?;
    let report = engine.test(psi0)?;
    let mut interval_errors = Vec::new();
    let mut interval = |which: RootStatistic| match engine.confidence_interval(which, level) {
        Ok((lo, hi)) => Some(Interval { lo, hi }),
        Err(e) => {
            interval_errors.push(format!("{which:?}: {e}"));
            None
        }
    };
    let interval_r = interval(RootStatistic::R);
    let interval_r_star = interval(RootStatistic::RStar);
    let out = TestOutput {
        report,
        level,
        interval_r,
        interval_r_star,
        interval_errors,
    };
    let bytes = match args.out.format.unwrap_or(Format::Json) {
        Format::Json => json_bytes(&out)?,
        Format::Csv => {
            let value = serde_json::to_value(&out).map_err(|e| CliError::Io(e.to_string()))?;
            let rows: Vec<Vec<String>> = value
                .as_object()
                .map(|m| {
                    m.iter()
                        .map(|(k, v)| vec![k.clone(), v.to_string().trim_matches('"').to_string()])
                        .collect()
                })
                .unwrap_or_default();
            csv_bytes(&["field", "value"], &rows)?
        }
    };
    #[derive(Serialize)]
    struct Extra {
        psi0: f64,
        level: f64,
    }
    let run = data_run(args, &loaded, Extra { psi0, level });
    let manifest = Manifest::new("test", &run, None, Some(&loaded.bytes))?;
    emit(manifest, vec![primary(&args.out, bytes)])
}

pub fn profile(args: &DataArgs, radius: usize, step: Option<f64>) -> Result<(), CliError> {
    let loaded = load(args)?;
    let problem = Problem::new(args.family, &loaded.data, loaded.interest)?;
    let fit = fit_mle(&problem, None)?;
    let opts = ProfileOptions {
        step,
        ..ProfileOptions::default()
    };
    let h = default_step(&problem, &fit, &opts)?;
    let grid: Vec<ConstrainedFit> = profile_grid(&problem, fit.psi_hat(), h, radius)?;
    let bytes = match args.out.format.unwrap_or(Format::Csv) {
        Format::Csv => csv_bytes(
            &["psi", "l_p", "logdet_nuisance"],
            &grid
                .iter()
                .map(|g| vec![g.psi.to_string(), g.loglik_profile.to_string(), g.logdet_nuisance.to_string()])
                .collect::<Vec<_>>(),
        )?,
        Format::Json => json_bytes(&grid)?,
    };
    #[derive(Serialize)]
    struct Extra {
        radius: usize,
        step: f64,
    }
    let run = data_run(args, &loaded, Extra { radius, step: h });
    let manifest = Manifest::new("profile", &run, None, Some(&loaded.bytes))?;
    emit(manifest, vec![primary(&args.out, bytes)])
}

/// Parses a TOML study configuration, inserting `seed` when the file has none.
fn study_toml<T: serde::de::DeserializeOwned>(path: &Path, seed: u64) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut table: toml::Table = toml::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;
    // TOML integers are i64; a larger --seed is applied after parsing.
    table
        .entry("seed")
        .or_insert(toml::Value::Integer(i64::try_from(seed).unwrap_or(0)));
    table
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))
}

fn resolve_seed(study: &StudyArgs) -> u64 {
    // Drawn seeds stay below 2^63 so they can be pasted into a TOML config.
    study.seed.unwrap_or_else(|| rand::random::<u64>() >> 1)
}

fn plot_path(output: &Path) -> PathBuf {
    let stem = output.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    output.with_file_name(format!("{stem}.plot.csv"))
}

pub fn simulate(study: &StudyArgs, reps: Option<usize>, boot: Option<usize>, plot: Option<PathBuf>) -> Result<(), CliError> {
    let seed = resolve_seed(study);
    let mut config = match (&study.config, study.preset) {
        (Some(path), _) => study_toml::<SimConfig>(path, seed)?,
        (None, Some(Preset::Logistic)) => SimConfig::logistic_reference(500, 500, seed),
        (None, Some(Preset::T5)) => SimConfig::t5_reference(500, 500, seed),
        (None, None) => return Err(CliError::Config("simulate needs --config or --preset".into())),
    };
    if let Some(s) = study.seed {
        config.seed = s;
    }
    if let Some(r) = reps {
        config.reps = r;
    }
    if let Some(b) = boot {
        config.bootstrap_reps = b;
    }
    config.validate()?;
    let result = simlab::run_study(&config, study.workers)?;

    let mut artifacts = Vec::new();
    let bytes = match study.out.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut buf = Vec::new();
            simlab::write_results_csv(&result, &mut buf)?;
            buf
        }
        Format::Json => json_bytes(&result)?,
    };
    artifacts.push(primary(&study.out, bytes));
    if let Some(path) = plot.or_else(|| study.out.output.as_deref().map(plot_path)) {
        let mut buf = Vec::new();
        simlab::write_plot_csv(&result, &mut buf)?;
        artifacts.push(Artifact {
            path: Some(path),
            bytes: buf,
        });
    }
    let manifest = Manifest::new("simulate", &config, Some(config.seed), None)?;
    emit(manifest, artifacts)
}

pub fn verify(study: &StudyArgs) -> Result<(), CliError> {
    let seed = resolve_seed(study);
    let mut config = match (&study.config, study.preset) {
        (Some(path), _) => study_toml::<VerifyConfig>(path, seed)?,
        (None, Some(Preset::Logistic)) => VerifyConfig::logistic_reference(seed),
        (None, Some(Preset::T5)) => {
            let mut c = VerifyConfig::logistic_reference(seed);
            c.design.family = ModelSpec::LocationScale {
                error: ErrorDensity::StudentT { df: 5.0 },
            };
            c
        }
        (None, None) => return Err(CliError::Config("verify needs --config or --preset".into())),
    };
    if let Some(s) = study.seed {
        config.seed = s;
    }
    let result = run_verification(&config, study.workers)?;
    let bytes = match study.out.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut buf = Vec::new();
            simlab::write_verify_csv(&result, &mut buf)?;
            buf
        }
        Format::Json => json_bytes(&result)?,
    };
    let manifest = Manifest::new("verify", &config, Some(config.seed), None)?;
    emit(manifest, vec![primary(&study.out, bytes)])
}
