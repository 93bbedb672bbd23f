//! Command-line surface: fit, predict, importance, heatmap, validate-glm, eval.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gforse::artifact::{ModelFile, RunManifest};
use gforse::baseline::{self, SynthGlmSpec};
use gforse::interpret;
use gforse::kriging::{self, FitConfig, Optimizer};
use gforse::linalg::Matrix;
use gforse::metrics;
use gforse::{Error, Result};

#[derive(Parser)]
#[command(name = "gforse", version, about = "Kriging metamodel fitting and interpretation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OptimizerArg {
    De,
    Lbfgsb,
    Both,
}

impl From<OptimizerArg> for Optimizer {
    fn from(v: OptimizerArg) -> Self {
        match v {
            OptimizerArg::De => Optimizer::DifferentialEvolution,
            OptimizerArg::Lbfgsb => Optimizer::BoundedQuasiNewton,
            OptimizerArg::Both => Optimizer::Both,
        }
    }
}

#[derive(Args)]
struct FitArgs {
    /// Training CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Response column name; every other column is a numeric feature.
    #[arg(long)]
    target: String,
    #[arg(long, default_value = "model.json")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    optimizer: OptimizerArg,
    #[arg(long, default_value_t = 1e-4)]
    theta_lo: f64,
    #[arg(long, default_value_t = 1e2)]
    theta_hi: f64,
    #[arg(long, default_value_t = 1e-10)]
    nugget: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// DE population size; defaults to 10 per feature.
    #[arg(long)]
    pop: Option<usize>,
    #[arg(long, default_value_t = 200)]
    iters: usize,
    #[arg(long, default_value_t = false)]
    optimize_p: bool,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "predictions.csv")]
    out: PathBuf,
    /// Best observed response; adds an expected-improvement column.
    #[arg(long)]
    ei_best: Option<f64>,
}

#[derive(Args)]
struct ImportanceArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "importance.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct HeatmapArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "matrix.csv")]
    out: PathBuf,
    #[arg(long)]
    pgm: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateGlmArgs {
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Six true coefficients: five linear terms then the x2*x3 interaction.
    #[arg(long, value_delimiter = ',', num_args = 6)]
    coeffs: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.0)]
    intercept: f64,
    #[arg(long, default_value_t = baseline::DEFAULT_FEATURE_CORR)]
    feature_corr: f64,
    #[arg(long, default_value_t = 4)]
    noise_features: usize,
    /// Feature probed for the Hauck-Donner effect (0-based).
    #[arg(long, default_value_t = 0)]
    hde_feature: usize,
    /// Separation scales for the HDE probe.
    #[arg(long, value_delimiter = ',', default_value = "0,0.5,1,2,4,8")]
    hde_grid: Vec<f64>,
    #[arg(long)]
    pop: Option<usize>,
    #[arg(long, default_value_t = 80)]
    iters: usize,
    #[arg(long, default_value = "validate_glm.json")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a surrogate to a CSV of black-box predictions.
    Fit(FitArgs),
    /// Predict mean, standard deviation and optional expected improvement.
    Predict(PredictArgs),
    /// Export the theta-based feature importance ranking.
    Importance(ImportanceArgs),
    /// Export the cluster-ordered correlation matrix.
    Heatmap(HeatmapArgs),
    /// Run the synthetic-GLM validation experiment.
    ValidateGlm(ValidateGlmArgs),
    /// Report surrogate fidelity as RMSE(r).
    Eval(EvalArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let started = Instant::now();
    let result = match cli.command {
        Command::Fit(a) => cmd_fit(a, started),
        Command::Predict(a) => cmd_predict(a, started),
        Command::Importance(a) => cmd_importance(a, started),
        Command::Heatmap(a) => cmd_heatmap(a, started),
        Command::ValidateGlm(a) => cmd_validate_glm(a, started),
        Command::Eval(a) => cmd_eval(a, started),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::DegenerateResponse
        | Error::AllColumnsConstant
        | Error::ConstantVector
        | Error::OneClassOnly => 3,
        Error::NotPositiveDefinite { .. }
        | Error::SingularInformation
        | Error::InfeasibleStart => 4,
        _ => 2,
    }
}

struct Table {
    headers: Vec<String>,
    columns: Vec<Vec<f64>>,
}

fn read_csv(path: &Path) -> Result<Table> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::Malformed(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Malformed(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Malformed(e.to_string()))?;
        if record.len() != headers.len() {
            return Err(Error::Malformed(format!(
                "row {} has {} fields, header has {}",
                row_idx + 2,
                record.len(),
                headers.len()
            )));
        }
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::Malformed(format!(
                    "non-numeric value '{}' in column '{}', row {}",
                    field,
                    headers[j],
                    row_idx + 2
                ))
            })?;
            columns[j].push(v);
        }
    }
    Ok(Table { headers, columns })
}

fn split_target(table: &Table, target: &str) -> Result<(Matrix<f64>, Vec<f64>, Vec<String>)> {
    let t = table
        .headers
        .iter()
        .position(|h| h == target)
        .ok_or_else(|| Error::Malformed(format!("target column '{target}' not found")))?;
    let y = table.columns[t].clone();
    if y.is_empty() {
        return Err(Error::EmptyInput);
    }
    let feature_names: Vec<String> = table
        .headers
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != t)
        .map(|(_, h)| h.clone())
        .collect();
    let n = y.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            table
                .columns
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != t)
                .map(|(_, c)| c[i])
                .collect()
        })
        .collect();
    Ok((Matrix::from_rows(rows)?, y, feature_names))
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_os_string();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn finish_manifest(mut m: RunManifest, out: &Path, started: Instant) -> Result<()> {
    m.wall_time_ms = started.elapsed().as_millis();
    m.write(&manifest_path(out))
}

fn cmd_fit(a: FitArgs, started: Instant) -> Result<()> {
    let table = read_csv(&a.data)?;
    let (raw_x, raw_y, feature_names) = split_target(&table, &a.target)?;
    let (xn, mut record) = metrics::normalize(&raw_x)?;
    for &j in &record.dropped {
        eprintln!(
            "warning: dropping constant feature column '{}'",
            feature_names[j]
        );
    }
    let ys = metrics::standardize_response(&mut record, &raw_y)?;
    if raw_y.iter().all(|&v| v == raw_y[0]) {
        return Err(Error::DegenerateResponse);
    }

    let config = FitConfig {
        optimizer: a.optimizer.into(),
        theta_bounds: (a.theta_lo, a.theta_hi),
        nugget: a.nugget,
        de_population: a.pop,
        de_iterations: a.iters,
        seed: a.seed,
        optimize_p: a.optimize_p,
        ..FitConfig::default()
    };
    let model = kriging::fit(xn, ys, &config)?;

    let config_json = serde_json::to_value(&config).map_err(|e| Error::Malformed(e.to_string()))?;
    let manifest = RunManifest::new(
        "fit",
        vec![a.data.display().to_string()],
        config_json,
        Some(a.seed),
        Some(format!(
            "{} feature columns retained, {} dropped",
            record.columns.len(),
            record.dropped.len()
        )),
    );
    let mf = ModelFile::from_model(
        &model,
        &record,
        feature_names,
        a.target.clone(),
        config.nugget_max,
    );
    mf.save(&a.out, &manifest.manifest_hash)?;
    finish_manifest(manifest, &a.out, started)?;

    println!("logL       = {:.6}", model.log_likelihood());
    println!("mu_hat     = {:.6} (standardized response units)", model.mu_hat());
    println!("sigma2_hat = {:.6} (standardized response units)", model.sigma2_hat());
    let retained: Vec<&str> = record
        .columns
        .iter()
        .map(|&(j, _, _)| mf.feature_names[j].as_str())
        .collect();
    for (name, theta) in retained.iter().zip(model.params().theta.iter()) {
        println!("theta[{name}] = {theta:.6e}");
    }
    println!("model written to {}", a.out.display());
    Ok(())
}

fn load_model(path: &Path) -> Result<(ModelFile, gforse::KrigingModelF64)> {
    let mf = ModelFile::load(path)?;
    let model = mf.to_model()?;
    Ok((mf, model))
}

/// Maps a prediction table onto raw rows in the model's training feature
/// order, matching columns by name.
fn prediction_rows(table: &Table, mf: &ModelFile) -> Result<Vec<Vec<f64>>> {
    let mut col_for_feature = Vec::with_capacity(mf.feature_names.len());
    for name in &mf.feature_names {
        let j = table
            .headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Malformed(format!("missing feature column '{name}'")))?;
        col_for_feature.push(j);
    }
    let n = table.columns.first().map(|c| c.len()).unwrap_or(0);
    Ok((0..n)
        .map(|i| col_for_feature.iter().map(|&j| table.columns[j][i]).collect())
        .collect())
}

fn cmd_predict(a: PredictArgs, started: Instant) -> Result<()> {
    let (mf, model) = load_model(&a.model)?;
    let table = read_csv(&a.data)?;
    let rows = prediction_rows(&table, &mf)?;

    let manifest = RunManifest::new(
        "predict",
        vec![a.model.display().to_string(), a.data.display().to_string()],
        serde_json::json!({ "ei_best": a.ei_best }),
        None,
        None,
    );

    let mut out = File::create(&a.out)?;
    writeln!(out, "# manifest: {}", manifest.manifest_hash)?;
    if a.ei_best.is_some() {
        writeln!(out, "prediction,sd,ei")?;
    } else {
        writeln!(out, "prediction,sd")?;
    }
    let scale = mf.scaling.response_scale;
    for raw in &rows {
        let xs = mf.scaling.apply_row(raw)?;
        let mean_std = model.predict_mean(&xs)?;
        let sd_std = model.predict_variance(&xs)?.sqrt();
        let mean = mf.scaling.destandardize_response(mean_std);
        let sd = sd_std * scale;
        match a.ei_best {
            Some(best) => {
                let best_std = mf.scaling.standardize_response(best);
                let ei = model.expected_improvement(&xs, best_std)? * scale;
                writeln!(out, "{mean},{sd},{ei}")?;
            }
            None => writeln!(out, "{mean},{sd}")?,
        }
    }
    finish_manifest(manifest, &a.out, started)?;
    println!("{} predictions written to {}", rows.len(), a.out.display());
    Ok(())
}

fn retained_names(mf: &ModelFile) -> Vec<String> {
    mf.scaling
        .columns
        .iter()
        .map(|&(j, _, _)| mf.feature_names[j].clone())
        .collect()
}

fn cmd_importance(a: ImportanceArgs, started: Instant) -> Result<()> {
    let (mf, model) = load_model(&a.model)?;
    let names = retained_names(&mf);
    let report = interpret::feature_importance(&model, &names)?;

    let manifest = RunManifest::new(
        "importance",
        vec![a.model.display().to_string()],
        serde_json::json!({}),
        None,
        None,
    );
    let mut out = File::create(&a.out)?;
    writeln!(out, "# manifest: {}", manifest.manifest_hash)?;
    writeln!(out, "name,theta,normalized_score,inactive")?;
    for e in &report.entries {
        writeln!(
            out,
            "{},{:.9e},{:.6},{}",
            e.name, e.theta, e.normalized_score, e.inactive
        )?;
    }
    finish_manifest(manifest, &a.out, started)?;
    println!("importance written to {}", a.out.display());
    Ok(())
}

fn cmd_heatmap(a: HeatmapArgs, started: Instant) -> Result<()> {
    let (_, model) = load_model(&a.model)?;
    let expl = interpret::group_explanation(&model)?;

    let manifest = RunManifest::new(
        "heatmap",
        vec![a.model.display().to_string()],
        serde_json::json!({ "pgm": a.pgm.as_ref().map(|p| p.display().to_string()) }),
        None,
        None,
    );
    let mut out = File::create(&a.out)?;
    writeln!(out, "# manifest: {}", manifest.manifest_hash)?;
    interpret::write_heatmap_csv(&expl, &mut out)?;
    if let Some(pgm_path) = &a.pgm {
        let mut pgm = File::create(pgm_path)?;
        writeln!(pgm, "# manifest: {}", manifest.manifest_hash)?;
        interpret::write_pgm(&expl, &mut pgm)?;
    }
    finish_manifest(manifest, &a.out, started)?;
    println!("heatmap written to {}", a.out.display());
    Ok(())
}

fn cmd_validate_glm(a: ValidateGlmArgs, started: Instant) -> Result<()> {
    let mut coeffs = baseline::DEFAULT_COEFFS;
    if let Some(c) = &a.coeffs {
        coeffs.copy_from_slice(c);
    }
    let spec = SynthGlmSpec {
        n: a.n,
        coeffs,
        intercept: a.intercept,
        feature_corr: a.feature_corr,
        noise_features: a.noise_features,
        seed: a.seed,
    };
    let data = baseline::generate_synth_glm(&spec)?;

    let (xn, mut record) = metrics::normalize(&data.x)?;
    let ys = metrics::standardize_response(&mut record, &data.y)?;
    let config = FitConfig {
        seed: a.seed,
        de_population: a.pop,
        de_iterations: a.iters,
        ..FitConfig::default()
    };
    let model = kriging::fit(xn, ys, &config)?;
    let report = interpret::feature_importance(&model, &data.feature_names)?;

    let glm = baseline::logistic_fit(
        &data.x,
        &data.y,
        baseline::DEFAULT_GLM_MAX_ITERS,
        baseline::DEFAULT_GLM_TOL,
    )?;
    let true_active = vec![0usize, 1, 2, 3, 4];
    let summary = baseline::compare_importance(&report, &glm, &true_active)?;
    let hde = baseline::detect_hde(&data.x, &data.y, a.hde_feature, &a.hde_grid)?;

    let manifest = RunManifest::new(
        "validate-glm",
        vec![],
        serde_json::to_value(&spec).map_err(|e| Error::Malformed(e.to_string()))?,
        Some(a.seed),
        None,
    );
    let body = serde_json::json!({
        "manifest": manifest.manifest_hash,
        "spec": spec,
        "kriging_importance": report.entries.iter().map(|e| {
            serde_json::json!({"name": e.name, "theta": e.theta, "inactive": e.inactive})
        }).collect::<Vec<_>>(),
        "glm": {
            "beta": glm.beta,
            "std_err": glm.std_err,
            "wald_z": glm.wald_z,
            "converged": glm.converged,
            "separation_flag": glm.separation_flag,
        },
        "comparison": summary,
        "hde_trace": hde,
    });
    std::fs::write(
        &a.out,
        serde_json::to_string_pretty(&body).map_err(|e| Error::Malformed(e.to_string()))? + "\n",
    )?;
    finish_manifest(manifest, &a.out, started)?;

    println!(
        "kriging top-{} hit rate: {:?}",
        true_active.len(),
        summary.kriging_hit_rate
    );
    println!(
        "logistic top-{} hit rate: {:?} (separation: {})",
        true_active.len(),
        summary.glm_hit_rate,
        glm.separation_flag
    );
    println!("HDE detected on feature {}: {:?}", a.hde_feature, hde.hde_detected);
    println!("report written to {}", a.out.display());
    Ok(())
}

fn cmd_eval(a: EvalArgs, started: Instant) -> Result<()> {
    let (mf, model) = load_model(&a.model)?;
    let table = read_csv(&a.data)?;
    let t = table
        .headers
        .iter()
        .position(|h| *h == mf.target_name)
        .ok_or_else(|| Error::Malformed(format!("target column '{}' not found", mf.target_name)))?;
    let y = table.columns[t].clone();
    let rows = prediction_rows(&table, &mf)?;
    let x_eval = Matrix::from_rows(rows)?;
    let (rmse, r) = metrics::fidelity_report(&model, &mf.scaling, &x_eval, &y)?;

    let manifest = RunManifest::new(
        "eval",
        vec![a.model.display().to_string(), a.data.display().to_string()],
        serde_json::json!({}),
        None,
        None,
    );
    finish_manifest(manifest, Path::new("eval"), started)?;
    println!("RMSE(r) = {}", metrics::fidelity_cell(rmse, r));
    println!("units: RMSE in original '{}' units", mf.target_name);
    Ok(())
}
