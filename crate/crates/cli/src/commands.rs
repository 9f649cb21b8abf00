use std::fs;
use std::io::Write;
use std::path::Path;

use obstacle_ridge::estimator::{erm_fit_with_gram, fit_with_gram, model_energy};
use obstacle_ridge::experiments::default_widths;
use obstacle_ridge::oracle::{run_check_suite, CheckItem};
use obstacle_ridge::{
    assemble_gram, illposed_demo, predict_batch, run_rate_study, schedule_params, smoothed_predict, sphere_quadrature,
    EuclideanKernel, ExperimentConfig, FittedModel, Mode, Schedule,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::args::{CheckArgs, FitArgs, IllposedArgs, PredictArgs, StudyArgs};
use crate::io::{read_dataset, read_queries, sink, write_config_comment, write_json};
use crate::CliError;

pub const RIDGE_BAND: [f64; 2] = [-0.55, -0.25];
pub const ERM_BAND: [f64; 2] = [-0.50, -0.17];

#[derive(Serialize)]
struct Echo<'a, T: Serialize> {
    command: &'static str,
    #[serde(flatten)]
    args: &'a T,
}

#[derive(Serialize)]
struct ModelFile<'a> {
    #[serde(flatten)]
    model: &'a FittedModel,
    config: Echo<'a, FitArgs>,
}

pub fn fit(a: &FitArgs) -> Result<(), CliError> {
    let ds = read_dataset(&a.data, a.d)?;
    let n = ds.len();
    let schedule = Schedule {
        linked_kappa: a.linked_kappa,
        ..Schedule::new(ds.dim(), a.gamma0, a.lambda0, a.mode)
    };
    let (gamma, lambda) = schedule_params(&schedule, n)?;
    let q = sphere_quadrature(ds.dim(), a.quad.quad_level, a.quad.seed)?;
    let g = assemble_gram(&EuclideanKernel::new(ds.dim())?, ds.x(), gamma, &q)?;
    let model = match a.mode {
        Mode::Ridge => fit_with_gram(&ds, &g, lambda)?,
        Mode::Erm => {
            let m = a
                .norm_bound
                .ok_or_else(|| CliError::Input("--mode erm needs --norm-bound".into()))?;
            erm_fit_with_gram(&ds, &g, m)?
        }
    };
    let energy = model_energy(&model, &g)?;

    let file = ModelFile {
        model: &model,
        config: Echo {
            command: "fit",
            args: a,
        },
    };
    let mut w = sink(Some(&a.out))?;
    write_json(&mut *w, &file)?;
    w.flush()?;

    println!("gamma  {}", model.gamma);
    println!("lambda {}", model.lambda);
    println!("n      {n}");
    println!("jitter {}", model.applied_jitter);
    println!("energy {energy}");
    Ok(())
}

fn read_model(path: &Path) -> Result<FittedModel, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    FittedModel::from_json(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn predict(a: &PredictArgs) -> Result<(), CliError> {
    let model = read_model(&a.model)?;
    let xs = read_queries(&a.queries)?;
    if xs.dim() != model.d {
        return Err(CliError::Input(format!(
            "queries have dimension {} but the model has {}",
            xs.dim(),
            model.d
        )));
    }
    let values = if a.smoothed {
        let q = sphere_quadrature(model.d, a.quad.quad_level, a.quad.seed)?;
        (0..xs.len())
            .into_par_iter()
            .map(|j| smoothed_predict(&model, xs.row(j), &q))
            .collect::<Result<Vec<f64>, _>>()?
    } else {
        predict_batch(&model, &xs)?
    };

    let mut w = sink(a.out.as_deref())?;
    write_config_comment(
        &mut *w,
        &Echo {
            command: "predict",
            args: a,
        },
    )?;
    let header: Vec<String> = (1..=model.d).map(|j| format!("x{j}")).chain(["yhat".into()]).collect();
    writeln!(w, "{}", header.join(","))?;
    for (j, v) in values.iter().enumerate() {
        for x in xs.row(j) {
            write!(w, "{x},")?;
        }
        writeln!(w, "{v}")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct StudyConfig<'a> {
    command: &'static str,
    #[serde(flatten)]
    experiment: &'a ExperimentConfig,
    band: [f64; 2],
}

#[derive(Serialize)]
struct StudySummary<'a> {
    config: &'a StudyConfig<'a>,
    target_energy: f64,
    norm_bound: Option<f64>,
    n_grid: &'a [usize],
    mean_mse: &'a [f64],
    slope: f64,
    slope_std_error: f64,
    seed_slopes: &'a [(u64, f64)],
    passed: bool,
}

fn band_of(a: &StudyArgs, mode: Mode) -> Result<[f64; 2], CliError> {
    match &a.band {
        Some(b) if b.len() == 2 && b[0] <= b[1] => Ok([b[0], b[1]]),
        Some(b) => Err(CliError::Input(format!("--band needs lo,hi with lo <= hi, got {b:?}"))),
        None => Ok(match mode {
            Mode::Ridge => RIDGE_BAND,
            Mode::Erm => ERM_BAND,
        }),
    }
}

pub fn study(a: &StudyArgs, default_mode: Mode) -> Result<(), CliError> {
    let mode = a.mode.unwrap_or(default_mode);
    let command = match default_mode {
        Mode::Ridge => "rate-study",
        Mode::Erm => "erm-study",
    };
    let cfg = ExperimentConfig {
        d: a.d,
        n_grid: a.n_grid.clone(),
        seeds: a.seeds.clone(),
        gamma0: a.gamma0,
        lambda0: a.lambda0,
        mode,
        linked_kappa: a.linked_kappa,
        noise_sd: a.noise_sd,
        test_size: a.test_size,
        quad_level: a.quad.quad_level,
        target_centers: a.target_centers,
        target_tau: a.target_tau,
        target_seed: a.quad.seed,
        erm_bound_factor: a.bound_factor,
    };
    let band = band_of(a, mode)?;
    cfg.validate()?;
    fs::create_dir_all(&a.out).map_err(|e| CliError::Input(format!("{}: {e}", a.out.display())))?;

    let res = run_rate_study(&cfg)?;
    for c in &res.cells {
        eprintln!(
            "n = {:5}  seed = {:3}  mse = {:.6e}  {:.0} ms",
            c.n, c.seed, c.mse, c.wall_ms
        );
    }

    let config = StudyConfig {
        command,
        experiment: &cfg,
        band,
    };
    let mut w = sink(Some(&a.out.join("cells.csv")))?;
    write_config_comment(&mut *w, &config)?;
    let mut cw = csv::Writer::from_writer(w);
    for c in &res.cells {
        cw.serialize(c)?;
    }
    cw.flush()?;

    if a.timing {
        let mut tw = csv::Writer::from_path(a.out.join("timing.csv"))?;
        tw.write_record(["n", "seed", "wall_ms"])?;
        for c in &res.cells {
            tw.write_record([c.n.to_string(), c.seed.to_string(), format!("{:.3}", c.wall_ms)])?;
        }
        tw.flush()?;
    }

    let passed = res.slope >= band[0] && res.slope <= band[1];
    let summary = StudySummary {
        config: &config,
        target_energy: res.target_energy,
        norm_bound: res.norm_bound,
        n_grid: &res.n_grid,
        mean_mse: &res.mean_mse,
        slope: res.slope,
        slope_std_error: res.slope_std_error,
        seed_slopes: &res.seed_slopes,
        passed,
    };
    let mut w = sink(Some(&a.out.join("summary.json")))?;
    write_json(&mut *w, &summary)?;
    w.flush()?;

    println!(
        "slope {:.4} (se {:.4}), band [{}, {}]: {}",
        res.slope,
        res.slope_std_error,
        band[0],
        band[1],
        if passed { "pass" } else { "FAIL" }
    );
    if passed {
        Ok(())
    } else {
        Err(CliError::Band(format!(
            "slope {} outside [{}, {}]",
            res.slope, band[0], band[1]
        )))
    }
}

pub fn check(a: &CheckArgs) -> Result<(), CliError> {
    #[derive(Serialize)]
    struct Report<'a> {
        config: Echo<'a, CheckArgs>,
        all_passed: bool,
        items: &'a [CheckItem],
    }

    let report = run_check_suite(a.seed)?;
    let all_passed = report.all_passed();
    let mut w = sink(a.out.as_deref())?;
    write_json(
        &mut *w,
        &Report {
            config: Echo {
                command: "check",
                args: a,
            },
            all_passed,
            items: &report.items,
        },
    )?;
    w.flush()?;
    if a.out.is_some() {
        for i in &report.items {
            println!(
                "{:<4} {:<52} {:>12.4e}  (limit {:e})",
                if i.passed { "ok" } else { "FAIL" },
                i.name,
                i.measured,
                i.threshold
            );
        }
    }
    if all_passed {
        Ok(())
    } else {
        let failed: Vec<&str> = report
            .items
            .iter()
            .filter(|i| !i.passed)
            .map(|i| i.name.as_str())
            .collect();
        Err(CliError::Band(format!("failed checks: {}", failed.join(", "))))
    }
}

pub fn illposed(a: &IllposedArgs) -> Result<(), CliError> {
    #[derive(Serialize)]
    struct Config<'a> {
        command: &'static str,
        d: usize,
        seed: u64,
        widths: &'a [f64],
    }

    let widths = match &a.widths {
        Some(w) => w.clone(),
        None => default_widths(a.d, a.seed)?,
    };
    let res = illposed_demo(a.d, &widths, a.seed)?;

    let mut w = sink(a.out.as_deref())?;
    write_config_comment(
        &mut *w,
        &Config {
            command: "illposed",
            d: a.d,
            seed: a.seed,
            widths: &widths,
        },
    )?;
    writeln!(w, "# profile: {}", res.profile)?;
    writeln!(w, "# unit_energy: {}", res.unit_energy)?;
    writeln!(w, "# min_separation: {}", res.min_separation)?;
    writeln!(w, "# energy_exponent: {}", res.energy_exponent)?;
    let mut cw = csv::Writer::from_writer(w);
    for r in &res.rows {
        cw.serialize(r)?;
    }
    cw.flush()?;

    let expected = a.d as f64 - 2.0;
    let mut problems = Vec::new();
    if res.rows.len() >= 2 && !((res.energy_exponent - expected).abs() <= 1e-6) {
        problems.push(format!(
            "energy exponent {} differs from {expected}",
            res.energy_exponent
        ));
    }
    if let Some(r) = res.rows.iter().find(|r| r.interpolation_error != 0.0) {
        problems.push(format!("interpolation error {} at h = {}", r.interpolation_error, r.h));
    }
    if res.rows.windows(2).any(|p| !(p[1].l2_norm < p[0].l2_norm)) {
        problems.push("L2 norm is not strictly decreasing".into());
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(CliError::Band(problems.join("; ")))
    }
}
