//! Subcommand implementations. Every output is a pure function of the
//! config, the input files and the seed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::path::{Path, PathBuf};

use celltherm::discrete::simulate_heat;
use celltherm::drive_cycle::{heat_series, Column, DriveCycle, HeatSeries};
use celltherm::estimation::{initial_covariance, run_estimator, EstimatorSetup, EstimatorState, EstimatorTrace, Mode};
use celltherm::fd::FdSolver;
use celltherm::field::Field;
use celltherm::impedance::ImpedanceCalibration;
use celltherm::model::default_probe_points;
use celltherm::sysid::{calibrate_pipeline, identify as run_identify, IdProblem, Pairing};
use celltherm::twin::{run_twin, TwinSetup};
use celltherm::{discretize, DiscreteStateSpace, StateSpaceModel};
use nalgebra::DVector;
use serde::Serialize;

use crate::config::RunConfig;
use crate::{CliError, Common, ModeArg};

const DEFAULT_SEED: u64 = 1;

struct Context {
    cfg: RunConfig,
    out: PathBuf,
    seed: u64,
}

fn context(common: &Common) -> Result<Context, CliError> {
    let cfg = match &common.config {
        Some(path) => {
            if !path.is_file() {
                return Err(CliError::Input(format!("config file {} does not exist", path.display())));
            }
            let mut cfg = RunConfig::load(path)?;
            cfg.rebase_paths(path.parent().unwrap_or(Path::new(".")));
            cfg
        }
        None => RunConfig::default(),
    };
    let out = common.out.clone().or_else(|| cfg.paths.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let seed = common.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED);
    Ok(Context { cfg, out, seed })
}

/// First of the flag and the config path; it must exist.
fn input_path(flag: Option<PathBuf>, configured: &Option<PathBuf>, what: &str) -> Result<PathBuf, CliError> {
    let path = flag
        .or_else(|| configured.clone())
        .ok_or_else(|| CliError::Input(format!("no {what} given (use --{what} or [paths] {what})")))?;
    if !path.is_file() {
        return Err(CliError::Input(format!("{what} file {} does not exist", path.display())));
    }
    Ok(path)
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("cannot create output directory {}: {e}", dir.display())))
}

fn write_out(dir: &Path, name: &str, contents: &[u8]) -> Result<(), CliError> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Input(format!("write failed: {e}"))
}

fn load_cycle(path: &Path) -> Result<DriveCycle, CliError> {
    let file = File::open(path).map_err(|e| CliError::Input(format!("cannot open {}: {e}", path.display())))?;
    DriveCycle::read_csv(file).map_err(|e| match CliError::from(e) {
        CliError::Input(m) => CliError::Input(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn load_calibration(path: &Path) -> Result<ImpedanceCalibration, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let cal: ImpedanceCalibration = toml::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    cal.validate()?;
    Ok(cal)
}

fn heat(cfg: &RunConfig, cycle: &DriveCycle) -> Result<HeatSeries, CliError> {
    let h = heat_series(cycle, &cfg.ocv()?, &cfg.cell()?, &cfg.geometry()?);
    if h.negative_fraction > 0.0 {
        eprintln!(
            "warning: {:.1}% of samples generate negative heat; check the current sign convention",
            100.0 * h.negative_fraction
        );
    }
    Ok(h)
}

fn model(cfg: &RunConfig, dt: f64) -> Result<(StateSpaceModel, DiscreteStateSpace), CliError> {
    let m = StateSpaceModel::assemble(cfg.geometry()?, cfg.thermal()?, cfg.spectral()?)?;
    let d = discretize(&m, dt)?;
    Ok((m, d))
}

fn cycle_dt(cycle: &DriveCycle) -> Result<f64, CliError> {
    if cycle.len() < 2 {
        return Err(CliError::Input("cycle needs at least two samples".into()));
    }
    Ok(cycle.uniform_dt()?)
}

fn field_csv(field: &Field) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    field.write_csv(&mut buf).map_err(io_err)?;
    Ok(buf)
}

fn trace_csv(times: &[f64], q: &[f64], temps: &[[f64; 4]], mean: &[f64]) -> String {
    let mut s = String::from("t,q,T1,T2,T3,T4,Tmean\n");
    for k in 0..times.len() {
        let [a, b, c, d] = temps[k];
        let _ = writeln!(s, "{},{},{a},{b},{c},{d},{}", times[k], q[k], mean[k]);
    }
    s
}

fn estimator_trace_csv(trace: &EstimatorTrace) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    trace.write_csv(&mut buf).map_err(io_err)?;
    Ok(buf)
}

fn initial_state(cfg: &RunConfig, model: &StateSpaceModel, t: f64) -> EstimatorState {
    EstimatorState {
        x_hat: model.uniform_state(t),
        p: initial_covariance(model.state_dim(), cfg.estimator.p0_uniform_sigma, cfg.estimator.p0_mode_sigma),
        k: 0,
    }
}

pub fn simulate(common: &Common, cycle: Option<PathBuf>, oracle: bool) -> Result<(), CliError> {
    let ctx = context(common)?;
    let cycle_path = input_path(cycle, &ctx.cfg.paths.cycle, "cycle")?;
    let oracle_grid = if oracle { Some(ctx.cfg.simulate.oracle.grid()?) } else { None };
    let cycle = load_cycle(&cycle_path)?;
    let dt = cycle_dt(&cycle)?;
    let heat = heat(&ctx.cfg, &cycle)?;
    let (m, disc) = model(&ctx.cfg, dt)?;
    let params = ctx.cfg.thermal()?;
    let t0 = ctx.cfg.simulate.initial_temperature.unwrap_or(params.t_ambient);
    prepare_out(&ctx.out)?;

    let q = &heat.volumetric;
    let states = simulate_heat(&disc, &m.uniform_state(t0), &q[..q.len() - 1]);
    let out = m.default_output_map();
    let mean = m.mean_temperature_row();
    let times: Vec<f64> = cycle.samples.iter().map(|s| s.t).collect();
    let temps: Vec<[f64; 4]> = states
        .iter()
        .map(|x| {
            let y = out.apply(x);
            [y[0], y[1], y[2], y[3]]
        })
        .collect();
    let means: Vec<f64> = states.iter().map(|x| mean.eval(x)).collect();
    write_out(&ctx.out, "trace.csv", trace_csv(&times, q, &temps, &means).as_bytes())?;
    let last = states.last().expect("at least one state");
    let field = m.reconstruct_field(last, ctx.cfg.output.field_n_r, ctx.cfg.output.field_n_z)?;
    write_out(&ctx.out, "field.csv", &field_csv(&field)?)?;
    println!("simulated {} samples ({} s), mean heat {:.3} W", cycle.len(), times[times.len() - 1] - times[0], heat.mean_power());
    println!("final T1..T4 = {:.3} {:.3} {:.3} {:.3} C, mean {:.3} C", temps.last().unwrap()[0], temps.last().unwrap()[1], temps.last().unwrap()[2], temps.last().unwrap()[3], means.last().unwrap());

    if let Some(grid) = oracle_grid {
        let geometry = ctx.cfg.geometry()?;
        let solver = FdSolver::new(geometry, params, grid)?;
        let run = solver.run(&q[..q.len() - 1], dt, solver.uniform(t0), &default_probe_points(&geometry))?;
        let fd_temps: Vec<[f64; 4]> = (0..run.mean.len())
            .map(|k| [run.probes[0][k], run.probes[1][k], run.probes[2][k], run.probes[3][k]])
            .collect();
        write_out(&ctx.out, "oracle_trace.csv", trace_csv(&times, q, &fd_temps, &run.mean).as_bytes())?;
        write_out(&ctx.out, "oracle_field.csv", &field_csv(&run.final_field)?)?;
        let mut report = String::from("output,max_abs_diff\n");
        let mut worst = 0.0f64;
        for (i, label) in ["T1", "T2", "T3", "T4"].iter().enumerate() {
            let d = temps.iter().zip(&fd_temps).fold(0.0f64, |a, (s, f)| a.max((s[i] - f[i]).abs()));
            worst = worst.max(d);
            let _ = writeln!(report, "{label},{d}");
        }
        let d = means.iter().zip(&run.mean).fold(0.0f64, |a, (s, f)| a.max((s - f).abs()));
        let _ = writeln!(report, "Tmean,{d}");
        write_out(&ctx.out, "oracle_comparison.csv", report.as_bytes())?;
        println!("oracle {}x{} cells: max |spectral - oracle| over probes = {worst:.4} C", grid.n_r_cells, grid.n_z_cells);
    }
    Ok(())
}

pub fn twin(common: &Common) -> Result<(), CliError> {
    let ctx = context(common)?;
    let cfg = &ctx.cfg;
    let setup = TwinSetup {
        spec: cfg.twin_spec(ctx.seed),
        generator: cfg.generator()?,
        geometry: cfg.geometry()?,
        params: cfg.thermal()?,
        spectral: cfg.spectral()?,
        truth: cfg.twin_truth()?,
        calibration: ImpedanceCalibration::synthetic_default(),
        ekf: cfg.estimator_config(Mode::EkfZ, cfg.generator()?.dt),
        kf: cfg.estimator_config(Mode::KfT3, cfg.generator()?.dt),
    };
    prepare_out(&ctx.out)?;
    let outcome = run_twin(&setup)?;

    let mut cycle_buf = Vec::new();
    outcome.cycle.write_csv(&mut cycle_buf)?;
    write_out(&ctx.out, "cycle.csv", &cycle_buf)?;
    let cal = toml::to_string(&setup.calibration).map_err(|e| CliError::Numerical(e.to_string()))?;
    write_out(&ctx.out, "calibration.toml", cal.as_bytes())?;
    let truth = &outcome.truth;
    write_out(&ctx.out, "truth.csv", trace_csv(&truth.t, &outcome.q, &truth.temps, &truth.mean).as_bytes())?;
    for trace in &outcome.traces {
        write_out(&ctx.out, &format!("trace_{}.csv", trace.mode.name()), &estimator_trace_csv(trace)?)?;
    }
    let mut summary = Vec::new();
    outcome.write_summary_csv(&mut summary).map_err(io_err)?;
    write_out(&ctx.out, "rmse_summary.csv", &summary)?;
    let mut hist = Vec::new();
    outcome.write_histograms_csv(&mut hist).map_err(io_err)?;
    write_out(&ctx.out, "error_histograms.csv", &hist)?;

    println!("twin seed {}: {} samples, truth from {:?}", ctx.seed, outcome.cycle.len(), setup.truth);
    println!("{:<10} {:>8} {:>8} {:>8} {:>8} {:>8} {:>12}", "mode", "T1", "T2", "T3", "T4", "Tmean", "converged");
    for m in &outcome.metrics {
        println!(
            "{:<10} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>12}",
            m.mode,
            m.rmse[0],
            m.rmse[1],
            m.rmse[2],
            m.rmse[3],
            m.rmse_mean,
            m.convergence_time.map(|t| format!("{t} s")).unwrap_or_else(|| "never".into())
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct IdentificationReport {
    seed: u64,
    objective: f64,
    best_start_objective: f64,
    evaluations: usize,
    iterations: usize,
    identified: BTreeMap<String, f64>,
    bounds: BTreeMap<String, [f64; 2]>,
    rmse: BTreeMap<String, f64>,
    fixed: BTreeMap<String, f64>,
}

pub fn identify(common: &Common, cycle: Option<PathBuf>) -> Result<(), CliError> {
    let ctx = context(common)?;
    let cfg = &ctx.cfg;
    let cycle_path = input_path(cycle, &cfg.paths.cycle, "cycle")?;
    let bounds = cfg.identify.bounds()?;
    let cycle = load_cycle(&cycle_path)?;
    cycle.require(&[Column::T1, Column::T2, Column::T3, Column::T4])?;
    let heat = heat(cfg, &cycle)?;
    let fixed = cfg.thermal()?;
    let mut problem = IdProblem::from_cycle(&cycle, heat.volumetric, cfg.geometry()?, fixed, cfg.spectral()?, bounds)?;
    if let Some(t) = cfg.identify.initial_temperature {
        problem.initial_temperature = t;
    }
    prepare_out(&ctx.out)?;
    let result = run_identify(&problem, &cfg.identify.options(ctx.seed))?;

    let report = IdentificationReport {
        seed: ctx.seed,
        objective: result.objective,
        best_start_objective: result.best_start_objective,
        evaluations: result.evaluations,
        iterations: result.iterations,
        identified: result.values.iter().map(|(p, v)| (p.name().to_string(), *v)).collect(),
        bounds: result.bounds.iter().map(|b| (b.param.name().to_string(), [b.lo, b.hi])).collect(),
        rmse: ["T1", "T2", "T3", "T4"].iter().map(|s| s.to_string()).zip(result.rmse).collect(),
        fixed: [("rho", fixed.rho), ("cp", fixed.cp), ("k_r", fixed.k_r), ("t_ambient", fixed.t_ambient)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
    };
    let text = toml::to_string(&report).map_err(|e| CliError::Numerical(e.to_string()))?;
    write_out(&ctx.out, "identification.toml", text.as_bytes())?;
    println!("identified after {} evaluations, objective {:.6}", result.evaluations, result.objective);
    for (p, v) in &result.values {
        println!("  {:<8} = {v:.6}", p.name());
    }
    println!(
        "  RMSE T1..T4 = {:.3} {:.3} {:.3} {:.3} C",
        result.rmse[0], result.rmse[1], result.rmse[2], result.rmse[3]
    );
    Ok(())
}

pub fn calibrate(common: &Common, cycle: Option<PathBuf>) -> Result<(), CliError> {
    let ctx = context(common)?;
    let cfg = &ctx.cfg;
    let cycle_path = input_path(cycle, &cfg.paths.cycle, "cycle")?;
    let cycle = load_cycle(&cycle_path)?;
    cycle.require(&[Column::ZImag])?;
    if cfg.calibrate.pairing == Pairing::KfT3 {
        cycle.require(&[Column::T3])?;
    }
    let dt = cycle_dt(&cycle)?;
    let heat = heat(cfg, &cycle)?;
    let (m, disc) = model(cfg, dt)?;
    let t0 = cfg
        .calibrate
        .initial_temperature
        .or_else(|| cycle.samples.iter().find_map(|s| s.temps[2]))
        .unwrap_or(m.params.t_ambient);
    let kf = cfg.estimator_config(Mode::KfT3, dt);
    let setup = EstimatorSetup { model: &m, discrete: &disc, calibration: None, config: &kf };
    prepare_out(&ctx.out)?;
    let fit = calibrate_pipeline(&cycle, &heat.volumetric, &setup, initial_state(cfg, &m, t0), cfg.calibrate.pairing, cfg.calibrate.frequency)?;

    let text = toml::to_string(&fit.calibration).map_err(|e| CliError::Numerical(e.to_string()))?;
    write_out(&ctx.out, "calibration.toml", text.as_bytes())?;
    let mut pairs = String::from("t_mean,z_imag\n");
    for (t, z) in &fit.pairs {
        let _ = writeln!(pairs, "{t},{z}");
    }
    write_out(&ctx.out, "calibration_pairs.csv", pairs.as_bytes())?;
    let c = &fit.calibration;
    println!("fitted Z'' = {:e} + {:e} T + {:e} T^2 from {} pairs", c.a1, c.a2, c.a3, fit.pairs.len());
    println!("  valid on [{:.2}, {:.2}] C, rms residual {:e} Ohm", c.t_range.0, c.t_range.1, c.rms_residual.unwrap_or(f64::NAN));
    for w in &c.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

pub fn estimate(common: &Common, cycle: Option<PathBuf>, mode: ModeArg, calibration: Option<PathBuf>) -> Result<(), CliError> {
    let ctx = context(common)?;
    let cfg = &ctx.cfg;
    let mode = match mode {
        ModeArg::EkfZ => Mode::EkfZ,
        ModeArg::KfT3 => Mode::KfT3,
        ModeArg::OpenLoop => Mode::OpenLoop,
    };
    let cycle_path = input_path(cycle, &cfg.paths.cycle, "cycle")?;
    let cal = match (mode, calibration.or_else(|| cfg.paths.calibration.clone())) {
        (Mode::EkfZ, None) => return Err(CliError::Input("ekf_z mode requires a calibration file (--calibration)".into())),
        (_, Some(path)) => {
            if !path.is_file() {
                return Err(CliError::Input(format!("calibration file {} does not exist", path.display())));
            }
            Some(load_calibration(&path)?)
        }
        (_, None) => None,
    };
    let cycle = load_cycle(&cycle_path)?;
    match mode {
        Mode::EkfZ => cycle.require(&[Column::ZImag])?,
        Mode::KfT3 => cycle.require(&[Column::T3])?,
        Mode::OpenLoop => {}
    }
    let dt = cycle_dt(&cycle)?;
    let heat = heat(cfg, &cycle)?;
    let (m, disc) = model(cfg, dt)?;
    let filter = cfg.estimator_config(mode, dt);
    let setup = EstimatorSetup { model: &m, discrete: &disc, calibration: cal.as_ref(), config: &filter };
    prepare_out(&ctx.out)?;
    let trace = run_estimator(&cycle, &heat.volumetric, &setup, mode, initial_state(cfg, &m, cfg.estimator.initial_temperature))?;

    write_out(&ctx.out, &format!("trace_{}.csv", mode.name()), &estimator_trace_csv(&trace)?)?;
    let x: &DVector<f64> = &trace.final_state.x_hat;
    let field = m.reconstruct_field(x, cfg.output.field_n_r, cfg.output.field_n_z)?;
    write_out(&ctx.out, "field.csv", &field_csv(&field)?)?;
    let last = trace.rows.last().expect("cycle is not empty");
    let updates = trace.rows.iter().filter(|r| r.innovation.is_some()).count();
    println!("{} over {} samples, {} measurement updates", mode.name(), trace.rows.len(), updates);
    println!(
        "final T1..T4 = {:.3} {:.3} {:.3} {:.3} C, mean {:.3} C",
        last.temps[0], last.temps[1], last.temps[2], last.temps[3], last.t_mean
    );
    Ok(())
}
