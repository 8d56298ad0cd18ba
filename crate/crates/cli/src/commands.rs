use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use flowdmd::experiments::{
    advection_table, burgers_study, AdvectionRow, AdvectionSetup, ErrorTable, TimingTable,
    BURGERS_SPACINGS,
};
use flowdmd::io::{
    read_model, read_plan_table, read_rasters_with_meta, write_arrows, write_model,
    write_plan_table, write_rasters, write_velocity, CommandEcho, Encoding, IoError, RasterMeta,
    RunManifest, RunMetrics, MODEL_MAGIC,
};
use flowdmd::pipeline::{
    couple_model, error_dmd_reference, error_flow_lists, presence_validation_windows, run_coupling,
};
use flowdmd::testdata::BurgersSpec;
use flowdmd::transport::Flow;
use flowdmd::{fit as fit_model, CouplingConfig, DmdOptions, GridSpec, ModeScaling, RankPolicy};

use crate::error::CliError;
use crate::{ErrorKind, Experiment, FlowArgs};

pub const MODEL_FILE: &str = "model.fdmd";
pub const RASTER_FILE: &str = "rasters.txt";
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const PLAN_FILE: &str = "plans.txt";

fn run_dir(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|source| IoError::File {
        path: out.to_path_buf(),
        source,
    })?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| {
            IoError::File {
                path: path.to_path_buf(),
                source,
            }
            .into()
        })
}

fn finish(mut w: BufWriter<File>) -> Result<(), CliError> {
    w.flush().map_err(IoError::from)?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes()).map_err(IoError::from)?;
    finish(w)
}

fn is_model_file(path: &Path) -> Result<bool, CliError> {
    let mut head = [0u8; 16];
    let mut f = File::open(path).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })?;
    let n = f.read(&mut head).map_err(IoError::from)?;
    Ok(n == head.len() && &head == MODEL_MAGIC)
}

pub fn fit(rasters: &Path, rank: RankPolicy, scaling: ModeScaling, out: &Path) -> Result<(), CliError> {
    let (set, meta) = read_rasters_with_meta(rasters)?;
    let model = fit_model(&set, &DmdOptions { rank, scaling })?;
    run_dir(out)?;
    write_model(&model, &out.join(MODEL_FILE))?;

    let d = &model.diagnostics;
    let total: f64 = d.spectrum.iter().map(|s| s * s).sum();
    let mut report = String::new();
    writeln!(report, "snapshots {}", set.n_frames()).ok();
    writeln!(report, "states {}", set.n_states()).ok();
    writeln!(report, "dt {}", set.dt()).ok();
    writeln!(report, "rank {}", model.rank()).ok();
    if let Some(r) = d.clipped_from {
        writeln!(report, "clipped_from {r}").ok();
    }
    writeln!(report, "fit_residual {:e}", d.fit_residual).ok();
    writeln!(report, "# index sigma cumulative_energy").ok();
    let mut acc = 0.0;
    for (i, s) in d.spectrum.iter().enumerate() {
        acc += s * s;
        let frac = if total > 0.0 { acc / total } else { 0.0 };
        writeln!(report, "{} {s:e} {frac:.12}", i + 1).ok();
    }
    write_text(&out.join("fit_report.txt"), &report)?;

    CommandEcho::new("fit")
        .with("input", rasters.display())
        .with("rank_policy", rank)
        .with("scaling", scaling.as_str())
        .with("value_unit", &meta.value_unit)
        .with("length_unit", &meta.length_unit)
        .with("time_unit", &meta.time_unit)
        .write(&out.join(MANIFEST_FILE))?;
    println!(
        "rank {} fit residual {:e}; wrote {}",
        model.rank(),
        d.fit_residual,
        out.display()
    );
    Ok(())
}

pub fn reconstruct(
    model_path: &Path,
    dt_fine: f64,
    window: Option<(f64, f64)>,
    binary: bool,
    out: &Path,
) -> Result<(), CliError> {
    let model = read_model(model_path)?;
    let (t0, t1) = window.unwrap_or((model.t0, model.t_end));
    let (frames, report) = model.interpolate_series(t0, t1, dt_fine)?;
    run_dir(out)?;
    let meta = RasterMeta {
        encoding: if binary { Encoding::Binary } else { Encoding::Text },
        ..Default::default()
    };
    write_rasters(&frames, &out.join(RASTER_FILE), &meta)?;
    CommandEcho::new("reconstruct")
        .with("model", model_path.display())
        .with("dt_fine", dt_fine)
        .with("t_start", t0)
        .with("t_end", t1)
        .with("encoding", meta.encoding.as_str())
        .with("frames", frames.n_frames())
        .with("clamped_mass", report.clamped_mass)
        .with("clamped_cells", report.clamped_cells)
        .with("extrapolated", report.extrapolated)
        .write(&out.join(MANIFEST_FILE))?;
    println!("{} frames; wrote {}", frames.n_frames(), out.display());
    Ok(())
}

pub fn flows(a: &FlowArgs) -> Result<(), CliError> {
    let mut config = CouplingConfig {
        v_max: a.vmax,
        rank: a.rank.policy()?,
        scaling: a.scaling,
        cost: a.cost,
        mode: a.mode,
        balance: a.balance,
        reservoir: a.reservoir,
        aggregation_window: a.aggregate,
        min_refinement: a.min_refinement,
        workers: a.workers,
        global_budget: a.budget,
        ..Default::default()
    };
    if !(a.significant > 0.0 && a.significant <= 1.0) {
        return Err(CliError::Usage(format!("--significant {} outside (0, 1]", a.significant)));
    }
    let (run, meta) = if is_model_file(&a.input)? {
        let model = read_model(&a.input)?;
        config.dt_data = Some(model.dt_fit);
        (couple_model(model, &config)?, RasterMeta::default())
    } else {
        let (set, meta) = read_rasters_with_meta(&a.input)?;
        config.dt_data = Some(set.dt());
        (run_coupling(&set, &config)?, meta)
    };
    let grid = *run.layout.grid();
    let field = run.flow_field(a.aggregate)?;
    run_dir(&a.out)?;

    let mut w = create(&a.out.join(PLAN_FILE))?;
    write_plan_table(&mut w, &run.steps, &grid)?;
    finish(w)?;
    let mut w = create(&a.out.join("arrows.txt"))?;
    write_arrows(&mut w, &field, &grid, a.significant)?;
    finish(w)?;
    let mut w = create(&a.out.join("velocity.txt"))?;
    write_velocity(&mut w, &field, &grid)?;
    finish(w)?;
    let metrics = RunMetrics::from_run(&run, &field);
    write_text(&a.out.join("metrics.toml"), &metrics.to_toml()?)?;

    let input = a.input.display().to_string();
    let mut manifest = RunManifest::from_config("flows", &input, &grid, run.model.dt_fit, &config);
    manifest.length_unit = meta.length_unit;
    manifest.time_unit = meta.time_unit;
    manifest.value_unit = meta.value_unit;
    manifest.write(&a.out.join(MANIFEST_FILE))?;
    println!(
        "{} steps (kappa {}), moved mass {:e}, {} reservoir steps; wrote {}",
        metrics.steps,
        metrics.kappa,
        metrics.moved_mass,
        metrics.reservoir_steps,
        a.out.display()
    );
    Ok(())
}

fn read_run_plans(dir: &Path) -> Result<(RunManifest, Vec<Vec<Flow>>), CliError> {
    let manifest = RunManifest::read(&dir.join(MANIFEST_FILE))?;
    let grid = GridSpec::new(manifest.n_rows, manifest.n_cols, 1.0, 1.0, [0.0, 0.0])
        .map_err(|e| CliError::Usage(format!("{}: {e}", dir.display())))?;
    let path = dir.join(PLAN_FILE);
    let f = File::open(&path).map_err(|source| IoError::File { path, source })?;
    let plans = read_plan_table(BufReader::new(f), &grid)?;
    Ok((manifest, plans))
}

pub fn errors(
    kind: ErrorKind,
    inputs: &[std::path::PathBuf],
    rank: RankPolicy,
    window_frames: Option<usize>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let need = |n: usize| {
        if inputs.len() == n {
            Ok(())
        } else {
            Err(CliError::Usage(format!(
                "this kind needs {n} input(s), got {}",
                inputs.len()
            )))
        }
    };
    let mut report = String::new();
    let mut echo = CommandEcho::new("errors");
    match kind {
        ErrorKind::Plan => {
            need(2)?;
            let (ma, a) = read_run_plans(&inputs[0])?;
            let (mb, b) = read_run_plans(&inputs[1])?;
            if (ma.n_rows, ma.n_cols) != (mb.n_rows, mb.n_cols) {
                return Err(CliError::Usage("runs are on different grids".into()));
            }
            let a: Vec<&[Flow]> = a.iter().map(Vec::as_slice).collect();
            let b: Vec<&[Flow]> = b.iter().map(Vec::as_slice).collect();
            let e = error_flow_lists(&a, &b)?;
            writeln!(report, "kind plan").ok();
            writeln!(report, "steps {}", a.len()).ok();
            writeln!(report, "E {e:e}").ok();
            echo = echo
                .with("kind", "plan")
                .with("reference", inputs[0].display())
                .with("dmd", inputs[1].display());
        }
        ErrorKind::Presence => {
            need(1)?;
            let (set, _) = read_rasters_with_meta(&inputs[0])?;
            let window = window_frames.unwrap_or(set.n_frames());
            let (e, models) = presence_validation_windows(
                &set,
                window,
                &DmdOptions {
                    rank,
                    ..Default::default()
                },
            )?;
            let max_rank = models.iter().map(|m| m.rank()).max().unwrap_or(0);
            writeln!(report, "kind presence").ok();
            writeln!(report, "frames {}", set.n_frames()).ok();
            writeln!(report, "windows {}", models.len()).ok();
            writeln!(report, "rank {max_rank}").ok();
            writeln!(report, "E {e:e}").ok();
            echo = echo
                .with("kind", "presence")
                .with("input", inputs[0].display())
                .with("rank_policy", rank)
                .with("window_frames", window);
        }
        ErrorKind::Dmd => {
            need(2)?;
            let (set, _) = read_rasters_with_meta(&inputs[0])?;
            let model = read_model(&inputs[1])?;
            if model.n_states() != set.n_states() {
                return Err(CliError::Usage(format!(
                    "model has {} states, reference {}",
                    model.n_states(),
                    set.n_states()
                )));
            }
            let times = set.times();
            let e = error_dmd_reference(set.data(), &model.evaluate_many(&times))?;
            writeln!(report, "kind dmd").ok();
            writeln!(report, "E {:e}", e.total).ok();
            writeln!(report, "# t E(t)").ok();
            for (t, v) in times.iter().zip(&e.series) {
                writeln!(report, "{t} {v:e}").ok();
            }
            echo = echo
                .with("kind", "dmd")
                .with("reference", inputs[0].display())
                .with("model", inputs[1].display());
        }
    }
    print!("{report}");
    if let Some(out) = out {
        run_dir(out)?;
        write_text(&out.join("report.txt"), &report)?;
        echo.write(&out.join(MANIFEST_FILE))?;
    }
    Ok(())
}

fn advection_notes(rows: &[AdvectionRow]) -> String {
    let mut s = String::new();
    writeln!(
        s,
        "{:>4} {:>8} {:>8} {:>10} {:>10} {:>10} {:>10}",
        "N", "steps", "rank", "res exact", "res DMD", "vx", "vy"
    )
    .ok();
    for r in rows {
        writeln!(
            s,
            "{:>4} {:>8} {:>8} {:>10} {:>10} {:>10.4} {:>10.4}",
            r.n, r.steps, r.rank, r.reservoir_steps.0, r.reservoir_steps.1, r.velocity[0], r.velocity[1]
        )
        .ok();
    }
    s
}

pub fn bench(
    experiment: Experiment,
    sizes: &[usize],
    local_only: bool,
    workers: usize,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let setup = AdvectionSetup {
        workers,
        run_global: !local_only,
        ..Default::default()
    };
    let (name, report) = match experiment {
        Experiment::AdvectionTable1 | Experiment::AdvectionTable2 => {
            if sizes.iter().any(|&n| n < 4) {
                return Err(CliError::Usage("grid sizes must be at least 4".into()));
            }
            let rows = advection_table(sizes, &setup)?;
            if experiment == Experiment::AdvectionTable1 {
                let report = format!("{}\n{}", ErrorTable(&rows), advection_notes(&rows));
                ("advection-table1", report)
            } else {
                ("advection-table2", TimingTable(&rows).to_string())
            }
        }
        Experiment::BurgersFig8 => {
            let study = burgers_study(&BurgersSpec::default(), &BURGERS_SPACINGS, 0.0125, 9, 20)?;
            ("burgers-fig8", study.to_string())
        }
    };
    print!("{report}");
    if let Some(out) = out {
        run_dir(out)?;
        write_text(&out.join("report.txt"), &report)?;
        CommandEcho::new("bench")
            .with("experiment", name)
            .with("sizes", format!("{sizes:?}"))
            .with("local_only", local_only)
            .with("workers", workers)
            .write(&out.join(MANIFEST_FILE))?;
    }
    Ok(())
}
