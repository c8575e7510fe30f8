use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use pathavg::estimators::{fit_all, Method, PipelineOptions, SlopeScale, DEFAULT_FOLDS};
use pathavg::realdata::{crime_experiment, load_crime_csv, Schema};
use pathavg::report::{companion_path, format_sig6, summary_csv, write_atomic, write_results, ExperimentResult};
use pathavg::rng::rep_rng;
use pathavg::simulation::{
    method_comparison_experiment, ordering_experiment, CovKind, Factor, SimConfig,
};

use crate::args::{Command, Common, CrimeArgs, Design, FitArgs, Fitting, OrderingArgs, Repeats, SweepArgs};
use crate::config::{parse_list, ConfigFile};
use crate::error::CliError;

pub const DEFAULT_SEED: u64 = 7;
pub const SIMULATION_REPS: usize = 1000;
pub const CRIME_REPS: usize = 500;
pub const DEFAULT_FRACTIONS: [f64; 7] = [0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

const COMMON_KEYS: [&str; 2] = ["seed", "out"];
const FITTING_KEYS: [&str; 2] = ["folds", "slope-scale"];
const REPEAT_KEYS: [&str; 2] = ["reps", "emit-curves"];
const DESIGN_KEYS: [&str; 6] = ["n", "p", "s", "rho", "r2", "delta"];

fn keys(groups: &[&[&'static str]]) -> Vec<&'static str> {
    groups.concat()
}

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Fit(args) => fit(args),
        Command::Ordering(args) => ordering(args),
        Command::Sweep(args) => sweep(args),
        Command::Crime(args) => crime(args),
    }
}

struct Shared {
    seed: u64,
    out: PathBuf,
}

fn shared(file: &ConfigFile, common: Common, default_out: &str) -> Result<Shared, CliError> {
    Ok(Shared {
        seed: file.pick_or(common.seed, "seed", DEFAULT_SEED)?,
        out: file.pick_or(common.out, "out", PathBuf::from(default_out))?,
    })
}

fn pipeline(file: &ConfigFile, fitting: Fitting) -> Result<PipelineOptions, CliError> {
    let n_folds = file.pick_or(fitting.folds, "folds", DEFAULT_FOLDS)?;
    if n_folds < 2 {
        return Err(CliError::config(format!("folds = {n_folds}, need at least 2")));
    }
    let slope_scale = match file.pick::<String>(fitting.slope_scale, "slope-scale")? {
        None => SlopeScale::LassoAnchored,
        Some(text) => SlopeScale::parse(&text).map_err(CliError::config)?,
    };
    Ok(PipelineOptions { n_folds, slope_scale })
}

fn repeats(file: &ConfigFile, repeats: Repeats, default_reps: usize) -> Result<(usize, bool), CliError> {
    let reps = file.pick_or(repeats.reps, "reps", default_reps)?;
    if reps == 0 {
        return Err(CliError::config("reps = 0"));
    }
    Ok((reps, file.switch(repeats.emit_curves, "emit-curves")?))
}

fn apply_design(file: &ConfigFile, design: Design, base: SimConfig) -> Result<SimConfig, CliError> {
    Ok(SimConfig {
        n: file.pick_or(design.n, "n", base.n)?,
        p: file.pick_or(design.p, "p", base.p)?,
        s: file.pick_or(design.s, "s", base.s)?,
        rho: file.pick_or(design.rho, "rho", base.rho)?,
        r2_target: file.pick_or(design.r2, "r2", base.r2_target)?,
        delta: file.pick_or(design.delta, "delta", base.delta)?,
        ..base
    })
}

fn load_table(
    file: &ConfigFile,
    data: Option<PathBuf>,
    schema: Option<PathBuf>,
) -> Result<pathavg::realdata::CleanedTable, CliError> {
    let data = file
        .pick(data, "data")?
        .ok_or_else(|| CliError::config("--data is required"))?;
    let schema = file
        .pick(schema, "schema")?
        .ok_or_else(|| CliError::config("--schema is required"))?;
    let schema = Schema::from_file(&schema).map_err(|e| CliError::io(format!("{}: {e}", schema.display())))?;
    load_crime_csv(&data, &schema).map_err(|e| CliError::io(format!("{}: {e}", data.display())))
}

fn fit(args: FitArgs) -> Result<(), CliError> {
    let file = ConfigFile::load(
        args.common.config.as_deref(),
        &keys(&[&["data", "schema"], &COMMON_KEYS, &FITTING_KEYS]),
    )?;
    let table = load_table(&file, args.data, args.schema)?;
    let shared = shared(&file, args.common, "fit.csv")?;
    let options = pipeline(&file, args.fitting)?;
    let data = table.to_dataset().map_err(CliError::io)?;
    let fits = fit_all(&data, &options, &mut rep_rng(shared.seed, 0)).map_err(CliError::experiment)?;
    let mut csv = String::from("method,feature,coefficient\n");
    for method in Method::PREDICTION {
        let est = fits.estimate(method).expect("prediction methods need no truth");
        let _ = writeln!(csv, "{},(intercept),{}", method.label(), format_sig6(est.intercept));
        for (name, value) in table.feature_names.iter().zip(est.coefficients.iter()) {
            let _ = writeln!(csv, "{},{name},{}", method.label(), format_sig6(*value));
        }
    }
    write_atomic(&shared.out, &csv).map_err(CliError::io)?;
    eprintln!("wrote {}", shared.out.display());
    Ok(())
}

fn ordering(args: OrderingArgs) -> Result<(), CliError> {
    let file = ConfigFile::load(
        args.common.config.as_deref(),
        &keys(&[&DESIGN_KEYS, &["l"], &COMMON_KEYS, &REPEAT_KEYS]),
    )?;
    let shared = shared(&file, args.common, "ordering.csv")?;
    let (reps, curves) = repeats(&file, args.repeats, SIMULATION_REPS)?;
    let config = SimConfig {
        n_reps: reps,
        base_seed: shared.seed,
        ..apply_design(&file, args.design, SimConfig::ordering_defaults())?
    };
    config.validate().map_err(CliError::config)?;
    let l_values: Vec<usize> = match file.pick::<String>(args.l, "l")? {
        None => (0..=50).step_by(10).collect(),
        Some(text) => parse_list(&text, "l")?,
    };
    let max_l = l_values.iter().copied().max().unwrap_or(0);
    if max_l + config.s > config.p {
        return Err(CliError::config(format!("l = {max_l} with s = {} exceeds p = {}", config.s, config.p)));
    }
    if config.n < config.p + 2 {
        return Err(CliError::config(format!("n = {} must be at least p + 2 = {}", config.n, config.p + 2)));
    }
    let result = ordering_experiment(&config, &l_values).map_err(CliError::experiment)?;
    emit(&result, &shared.out, curves)
}

fn sweep(args: SweepArgs) -> Result<(), CliError> {
    let file = ConfigFile::load(
        args.common.config.as_deref(),
        &keys(&[&["factor", "cov", "levels"], &DESIGN_KEYS, &COMMON_KEYS, &REPEAT_KEYS, &FITTING_KEYS]),
    )?;
    let factor_label = file
        .pick(args.factor, "factor")?
        .ok_or_else(|| CliError::config("--factor is required"))?;
    let factor = Factor::from_label(&factor_label).map_err(CliError::config)?;
    let cov_label = file.pick_or(args.cov, "cov", "ar".to_string())?;
    let cov = match CovKind::from_label(&cov_label) {
        Some(kind @ (CovKind::CompoundSymmetry | CovKind::AutoRegressive)) => kind,
        _ => return Err(CliError::config(format!("cov = {cov_label}, expected cs or ar"))),
    };
    let shared = shared(&file, args.common, "sweep.csv")?;
    let (reps, curves) = repeats(&file, args.repeats, SIMULATION_REPS)?;
    let options = pipeline(&file, args.fitting)?;
    let config = SimConfig {
        n_reps: reps,
        base_seed: shared.seed,
        n_folds: options.n_folds,
        slope_scale: options.slope_scale,
        ..apply_design(&file, args.design, SimConfig::comparison_defaults(cov))?
    };
    let levels: Vec<f64> = match file.pick::<String>(args.levels, "levels")? {
        None => factor.default_levels(),
        Some(text) => parse_list(&text, "levels")?,
    };
    if levels.is_empty() {
        return Err(CliError::config("no levels"));
    }
    for &level in &levels {
        let at_level = factor.apply(&config, level).map_err(CliError::config)?;
        at_level.validate().map_err(CliError::config)?;
        if at_level.n < at_level.n_folds {
            return Err(CliError::config(format!("n = {} is below folds = {}", at_level.n, at_level.n_folds)));
        }
    }
    let result = method_comparison_experiment(&config, factor, &levels).map_err(CliError::experiment)?;
    emit(&result, &shared.out, curves)
}

fn crime(args: CrimeArgs) -> Result<(), CliError> {
    let file = ConfigFile::load(
        args.common.config.as_deref(),
        &keys(&[&["data", "schema", "tr"], &COMMON_KEYS, &REPEAT_KEYS, &FITTING_KEYS]),
    )?;
    let shared = shared(&file, args.common, "crime.csv")?;
    let (reps, curves) = repeats(&file, args.repeats, CRIME_REPS)?;
    let options = pipeline(&file, args.fitting)?;
    let fractions: Vec<f64> = match file.pick::<String>(args.tr, "tr")? {
        None => DEFAULT_FRACTIONS.to_vec(),
        Some(text) => parse_list(&text, "tr")?,
    };
    if let Some(bad) = fractions.iter().find(|&&f| !(f > 0.0 && f < 1.0)) {
        return Err(CliError::config(format!("tr = {bad}, expected a fraction in (0, 1)")));
    }
    let table = load_table(&file, args.data, args.schema)?;
    eprintln!("{} rows, {} covariates", table.n(), table.p());
    let result = crime_experiment(&table, &fractions, reps, shared.seed, &options).map_err(CliError::experiment)?;
    emit(&result, &shared.out, curves)
}

/// Writes the records and summary, optionally one curve file per method, and
/// prints the summary.
fn emit(result: &ExperimentResult, out: &Path, curves: bool) -> Result<(), CliError> {
    if !result.failures.is_empty() {
        eprintln!("{} repetition(s) failed and were excluded", result.failures.len());
    }
    if result.records.is_empty() {
        return Err(CliError::experiment("no repetition produced results"));
    }
    write_results(result, out).map_err(CliError::io)?;
    let summary = result.summary();
    if curves {
        let mut methods: Vec<&str> = summary.iter().map(|r| r.method.as_str()).collect();
        methods.dedup();
        for method in methods {
            let rows: Vec<_> = summary.iter().filter(|r| r.method == method).cloned().collect();
            let path = companion_path(out, &format!("curve_{method}"));
            write_atomic(&path, &summary_csv(&rows)).map_err(CliError::io)?;
        }
    }
    print!("{}", summary_csv(&summary));
    eprintln!("wrote {} and {}", out.display(), companion_path(out, "summary").display());
    Ok(())
}
