use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use psforge_core::frames::integrate_frame;
use psforge_core::io::parse_value_list;
use psforge_core::loops::{birkhoff_split_with, Direction, LaurentLoop, SplitOptions};
use psforge_core::potentials::{eta_2x2, eta_x, eta_y};
use psforge_core::sinegordon::{analytic_residual, constant_angle, goursat_solve_with, sg_residual, GoursatOptions};
use psforge_core::surfaces::{export_mesh, fundamental_forms, sym_from_frame};
use psforge_core::verify::{verify, VerifyOptions};
use psforge_core::{soliton_angle, AngleField};

use crate::config::RunConfig;
use crate::CliError;

/// Outcome of a command that ran to completion: `false` means a verification failure.
pub type Passed = bool;

fn out_file(cfg: &RunConfig, name: &str) -> Result<PathBuf, CliError> {
    let dir = cfg.out_dir();
    fs::create_dir_all(&dir).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir.join(name))
}

fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(psforge_core::Error::from)?;
    text.push('\n');
    fs::write(path, text).map_err(psforge_core::Error::from)?;
    Ok(())
}

fn read_list(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = fs::read_to_string(path).map_err(psforge_core::Error::from)?;
    Ok(parse_value_list(&text)?)
}

/// The angle field named by the config: an input file, or a closed form on the configured grid.
fn angle_field(cfg: &RunConfig) -> Result<AngleField, CliError> {
    if let Some(input) = &cfg.input {
        return Ok(AngleField::read_csv(input, cfg.phi_x.as_deref())?);
    }
    match (cfg.soliton, cfg.constant) {
        (Some(a), None) => Ok(soliton_angle(a, cfg.grid()?)?),
        (None, Some(c)) => Ok(constant_angle(c, cfg.grid()?)),
        (Some(_), Some(_)) => Err(CliError::Usage("choose one of --soliton and --constant".into())),
        (None, None) => Err(CliError::Usage("an angle field is required (--input FILE or --soliton A)".into())),
    }
}

fn finite_or_null(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

pub fn cmd_solve(cfg: &RunConfig) -> Result<Passed, CliError> {
    let boundary = cfg.x_data.is_some() || cfg.y_data.is_some();
    let (field, mode) = if boundary {
        if cfg.soliton.is_some() || cfg.constant.is_some() {
            return Err(CliError::Usage("boundary data cannot be combined with --soliton or --constant".into()));
        }
        let (Some(xp), Some(yp)) = (&cfg.x_data, &cfg.y_data) else {
            return Err(CliError::Usage("boundary mode needs both --x-data and --y-data".into()));
        };
        let grid = cfg.grid()?;
        let opts = GoursatOptions { substeps: cfg.substeps.unwrap_or(GoursatOptions::default().substeps), ..Default::default() };
        (goursat_solve_with(&read_list(xp)?, &read_list(yp)?, grid, opts)?, "goursat")
    } else {
        let mode = if cfg.soliton.is_some() { "soliton" } else { "constant" };
        if cfg.input.is_some() {
            return Err(CliError::Usage("solve writes angle fields; it does not take --input".into()));
        }
        (angle_field(cfg)?, mode)
    };

    field.write_csv(&out_file(cfg, "phi.csv")?)?;
    if field.exact.is_some() {
        field.write_phi_x_csv(&out_file(cfg, "phi_x.csv")?)?;
    }
    let fd = sg_residual(&field);
    let mut summary = json!({
        "mode": mode,
        "nx": field.grid.nx,
        "ny": field.grid.ny,
        "sg_residual_sup": finite_or_null(fd.sup()),
        "sg_residual_mean": finite_or_null(fd.abs_mean()),
    });
    if let Some(r) = analytic_residual(&field) {
        summary["analytic_residual_sup"] = finite_or_null(r.sup());
    }
    write_json(&out_file(cfg, "solve_summary.json")?, &summary)?;
    println!("wrote {} ({}x{} nodes, sg_residual_sup {:.3e})", cfg.out_dir().join("phi.csv").display(), field.grid.nx, field.grid.ny, fd.sup());
    Ok(true)
}

pub fn cmd_surface(cfg: &RunConfig) -> Result<Passed, CliError> {
    let f = AngleField::read_csv(cfg.require_input()?, cfg.phi_x.as_deref())?;
    let lambdas = cfg.lambdas_or(&[1.0])?;
    let threshold = cfg.mask_threshold.unwrap_or(0.1);
    let mask: Vec<bool> = f.phi.iter().map(|p| p.sin() > threshold).collect();
    let mean_sup = |values: &mut dyn Iterator<Item = f64>| {
        let (mut sum, mut sup, mut n) = (0.0, 0.0_f64, 0usize);
        for v in values {
            sum += v;
            sup = sup.max(v.abs());
            n += 1;
        }
        (if n > 0 { sum / n as f64 } else { f64::NAN }, sup)
    };
    let mut members = Vec::new();
    for &lambda in &lambdas {
        let frame = integrate_frame(&f, lambda, true)?;
        let immersion = sym_from_frame(&frame)?;
        let geo = fundamental_forms(&immersion)?;
        export_mesh(&immersion, &out_file(cfg, &format!("surface_lambda_{lambda}.obj"))?, None)?;
        geo.write_csv(&out_file(cfg, &format!("geometry_lambda_{lambda}.csv"))?)?;

        let idx: Vec<usize> = (0..f.grid.len()).filter(|&k| mask[k] && geo.k[k].is_finite()).collect();
        let cos = geo.cos_angle();
        let (k_mean, _) = mean_sup(&mut idx.iter().map(|&k| geo.k[k]));
        let (_, k_dev) = mean_sup(&mut idx.iter().map(|&k| geo.k[k] + 1.0));
        let (a_mean, a_dev) = mean_sup(&mut idx.iter().map(|&k| geo.metric_a[k] - lambda));
        let (b_mean, b_dev) = mean_sup(&mut idx.iter().map(|&k| geo.metric_b[k] - 1.0 / lambda));
        let (_, angle_dev) = mean_sup(&mut idx.iter().map(|&k| cos[k] - f.phi[k].cos()));
        members.push(json!({
            "lambda": lambda,
            "masked_nodes": idx.len(),
            "K_mean": finite_or_null(k_mean),
            "K_dev_sup": finite_or_null(k_dev),
            "metricA_mean": finite_or_null(a_mean + lambda),
            "metricB_mean": finite_or_null(b_mean + 1.0 / lambda),
            "chebyshev_dev_sup": finite_or_null(a_dev.max(b_dev)),
            "angle_dev_sup": finite_or_null(angle_dev),
            "origin_point": immersion.grid.origin().ok().map(|(i, j)| {
                let p = immersion.at(i, j);
                json!([p.x, p.y, p.z])
            }),
        }));
        println!("lambda {lambda}: K_mean {k_mean:.6}, |psi_x| mean {:.6}", a_mean + lambda);
    }
    write_json(
        &out_file(cfg, "surface_summary.json")?,
        &json!({ "mask_threshold": threshold, "surfaces": members }),
    )?;
    Ok(true)
}

pub fn cmd_potentials(cfg: &RunConfig) -> Result<Passed, CliError> {
    let f = AngleField::read_csv(cfg.require_input()?, cfg.phi_x.as_deref())?;
    eta_x(&f)?.write_csv(&out_file(cfg, "eta_x.csv")?)?;
    eta_y(&f)?.write_csv(&out_file(cfg, "eta_y.csv")?)?;
    let mut written = vec!["eta_x.csv", "eta_y.csv"];
    if cfg.su2.unwrap_or(false) {
        let (px, py) = eta_2x2(&f)?;
        px.write_csv(&out_file(cfg, "eta_x_su2.csv")?)?;
        py.write_csv(&out_file(cfg, "eta_y_su2.csv")?)?;
        written.extend(["eta_x_su2.csv", "eta_y_su2.csv"]);
    }
    println!("wrote {} in {}", written.join(", "), cfg.out_dir().display());
    Ok(true)
}

pub fn cmd_split(cfg: &RunConfig) -> Result<Passed, CliError> {
    let path = cfg.loop_file.as_deref().ok_or_else(|| CliError::Usage("a loop file is required (--loop FILE)".into()))?;
    let g = LaurentLoop::read_json(path)?;
    let direction = cfg.direction.unwrap_or(Direction::MinusFirst);
    let mut opts = SplitOptions::default();
    if let Some(t) = cfg.truncation {
        opts.truncation = t.max(1);
        opts.max_truncation = opts.max_truncation.max(opts.truncation);
    }
    let s = birkhoff_split_with(&g, direction, opts)?;
    s.factor1.write_json(&out_file(cfg, "factor1.json")?)?;
    s.factor2.write_json(&out_file(cfg, "factor2.json")?)?;
    let (name, first, second) = match direction {
        Direction::MinusFirst => ("minus-first", "minus", "plus"),
        Direction::PlusFirst => ("plus-first", "plus", "minus"),
    };
    write_json(
        &out_file(cfg, "split_summary.json")?,
        &json!({
            "direction": name,
            "factor1": first,
            "factor2": second,
            "residual": s.residual,
            "truncation": s.truncation,
            "condition": finite_or_null(s.condition),
            "twisted": g.twisted,
            "real": g.real,
        }),
    )?;
    println!("{name} split: residual {:.3e}, truncation {}, condition {:.3e}", s.residual, s.truncation, s.condition);
    Ok(true)
}

pub fn cmd_verify(cfg: &RunConfig) -> Result<Passed, CliError> {
    let f = angle_field(cfg)?;
    let mut opts = VerifyOptions { tolerances: cfg.tolerances.clone(), ..Default::default() };
    opts.lambdas = cfg.lambdas_or(&opts.lambdas)?;
    if let Some(only) = &cfg.only {
        opts.only = only.clone();
    }
    if let Some(t) = cfg.mask_threshold {
        opts.mask_threshold = t;
    }
    if let Some(n) = cfg.split_samples {
        opts.split_samples = n;
    }
    let report = verify(&f, &opts)?;
    for c in &report.checks {
        println!(
            "{:<24} {}  sup {:.3e}  mean {:.3e}  tol {:.1e}{}",
            c.name,
            if c.pass { "PASS" } else { "FAIL" },
            c.sup,
            c.mean,
            c.tolerance,
            c.reason.as_ref().map(|r| format!("  ({r})")).unwrap_or_default()
        );
    }
    let path = match &cfg.report {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(psforge_core::Error::from)?;
            }
            p.clone()
        }
        None => out_file(cfg, "report.json")?,
    };
    let mut text = report.to_json()?;
    text.push('\n');
    fs::write(&path, text).map_err(psforge_core::Error::from)?;
    if report.pass {
        println!("all {} checks passed; report in {}", report.checks.len(), path.display());
    } else {
        println!("failed: {}; report in {}", report.failures.join(", "), path.display());
    }
    Ok(report.pass)
}
