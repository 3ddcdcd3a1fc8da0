use std::path::Path;
use std::sync::Arc;

use serde_json::{json, Map, Value};
use vmsrom::discretization::{load_mesh, FeSystem};
use vmsrom::fom::{write_file, FomSolver, ParabolicInlet, SnapshotSet, SolverConfig};
use vmsrom::operators::{BodyForce, OperatorSet, Parameters};
use vmsrom::pod::{build_basis, eigen_csv, ReducedBasis, DEFAULT_RANK_TOL};
use vmsrom::rom::{
    errors_vs_n_csv, errors_vs_time_csv, initial_state_from, metrics, rom_run, MetricsReport,
    ReducedModel, RomConfig, RomTrajectory,
};

use crate::config::{sha256_hex, CompareConfig, RunConfig, Variant};
use crate::error::CliError;

fn operators(config: &RunConfig, dt: f64) -> Result<OperatorSet, CliError> {
    let mesh = load_mesh(&config.mesh)
        .map_err(|e| CliError::Config(format!("{}: {e}", config.mesh.display())))?;
    let params = Parameters {
        nu: config.nu,
        dt,
        c_inv: config.c_inv,
        force: BodyForce::Zero,
    };
    Ok(OperatorSet::assemble(
        Arc::new(FeSystem::new(mesh)),
        &params,
    ))
}

fn check_mesh(ops: &OperatorSet, checksum: u64, what: &Path) -> Result<(), CliError> {
    let expected = ops.fes().mesh().checksum();
    if checksum != expected {
        return Err(CliError::Config(format!(
            "{} was computed on mesh {checksum:016x}, the configured mesh is {expected:016x}",
            what.display()
        )));
    }
    Ok(())
}

/// Writes `files` into `dir` and a `<command>.json` sidecar with the config hash
/// and the digest of every file.
fn emit(
    dir: &Path,
    command: &str,
    hash: &str,
    files: &[(&str, Vec<u8>)],
    mut info: Map<String, Value>,
) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Config(format!("{}: {e}", dir.display())))?;
    let mut digests = Map::new();
    for (name, bytes) in files {
        write_file(&dir.join(name), bytes)?;
        digests.insert(name.to_string(), json!(sha256_hex(bytes)));
    }
    info.insert("command".into(), json!(command));
    info.insert("config_hash".into(), json!(hash));
    info.insert("outputs".into(), Value::Object(digests));
    let mut text = serde_json::to_string_pretty(&Value::Object(info)).expect("sidecar serializes");
    text.push('\n');
    write_file(&dir.join(format!("{command}.json")), text.as_bytes())?;
    Ok(())
}

pub fn cmd_fom(config: &RunConfig, hash: &str) -> Result<(), CliError> {
    let ops = operators(config, config.dt)?;
    let inlet = ParabolicInlet::new(ops.fes(), config.inlet_peak)?;
    let mut solver_config = SolverConfig::new(config.dt, config.t_final, config.stride);
    solver_config.ramp_steps = config.ramp_steps;
    solver_config.record_from = config.record_from;
    solver_config.newton = config.newton.into();
    let solver = FomSolver::new(&ops, &inlet, solver_config)?;
    let mut iterations = 0;
    let snaps = solver.run(&mut |r| iterations += r.newton_iters)?;
    let path = config.snapshot_path();
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("snapshots.bin")
        .to_string();
    let dir = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| config.output_dir.clone());
    let mut info = Map::new();
    info.insert(
        "mesh_checksum".into(),
        json!(format!("{:016x}", snaps.mesh_checksum)),
    );
    info.insert("snapshots".into(), json!(snaps.len()));
    info.insert("sample_interval".into(), json!(snaps.sample_interval));
    info.insert("n_velocity".into(), json!(ops.n_velocity()));
    info.insert("n_pressure".into(), json!(ops.n_pressure()));
    info.insert("newton_iterations".into(), json!(iterations));
    info.insert("times".into(), json!(snaps.times()));
    emit(&dir, "fom", hash, &[(&name, snaps.to_bytes())], info)?;
    println!(
        "fom: {} snapshots ({} velocity, {} pressure dofs) -> {}",
        snaps.len(),
        ops.n_velocity(),
        ops.n_pressure(),
        path.display()
    );
    Ok(())
}

pub fn cmd_pod(config: &RunConfig, hash: &str) -> Result<(), CliError> {
    let snaps = SnapshotSet::load(&config.snapshot_path())?;
    let ops = operators(config, config.dt)?;
    check_mesh(&ops, snaps.mesh_checksum, &config.snapshot_path())?;
    if config.n > snaps.len() {
        return Err(CliError::Numerical(format!(
            "requested {} modes but only {} snapshots are available, so the rank is at most {}",
            config.n,
            snaps.len(),
            snaps.len().saturating_sub(1)
        )));
    }
    let basis = build_basis(
        &snaps,
        &ops,
        config.n,
        config.with_supremizers,
        DEFAULT_RANK_TOL,
    )?;
    let path = config.basis_path();
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("basis.bin")
        .to_string();
    let dir = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| config.output_dir.clone());
    let mut info = Map::new();
    info.insert(
        "mesh_checksum".into(),
        json!(format!("{:016x}", basis.mesh_checksum)),
    );
    info.insert("n".into(), json!(config.n));
    info.insert("with_supremizers".into(), json!(basis.with_supremizers()));
    info.insert(
        "lambda_u_trace".into(),
        json!(basis.lambda_u.iter().sum::<f64>()),
    );
    info.insert(
        "lambda_s_trace".into(),
        json!(basis.lambda_s.iter().sum::<f64>()),
    );
    info.insert(
        "lambda_p_trace".into(),
        json!(basis.lambda_p.iter().sum::<f64>()),
    );
    emit(
        &dir,
        "pod",
        hash,
        &[
            (&name, basis.to_bytes()),
            ("eigenvalues.csv", eigen_csv(&basis).into_bytes()),
        ],
        info,
    )?;
    println!(
        "pod: {} velocity, {} supremizer, {} pressure modes -> {}",
        basis.n_velocity,
        basis.n_supremizer,
        basis.n_pressure(),
        path.display()
    );
    Ok(())
}

/// Steps between samples and the step index of the first sample for the reduced run.
fn rom_grid(config: &RunConfig, snaps: &SnapshotSet) -> Result<(f64, usize, usize), CliError> {
    let dt = config.rom_dt.unwrap_or(config.dt);
    let as_steps = |t: f64, what: &str| {
        let k = (t / dt).round();
        if (k * dt - t).abs() > 1e-9 * t.abs().max(1.0) {
            return Err(CliError::Config(format!(
                "{what} {t} is not a multiple of the reduced time step {dt}"
            )));
        }
        Ok(k as usize)
    };
    let first = snaps
        .states
        .first()
        .ok_or_else(|| CliError::Config("snapshot file is empty".into()))?;
    let per_sample = if snaps.len() > 1 {
        as_steps(snaps.sample_interval, "snapshot interval")?.max(1)
    } else {
        1
    };
    Ok((dt, as_steps(first.t, "first snapshot time")?, per_sample))
}

fn identity_basis(ops: &OperatorSet, snaps: &SnapshotSet) -> ReducedBasis {
    let mut lifting = snaps.states[0].u.clone();
    for d in ops.fes().free_velocity_dofs() {
        lifting[d] = 0.0;
    }
    ReducedBasis::identity(ops, lifting)
}

struct Evaluated {
    trajectory: RomTrajectory,
    report: MetricsReport,
    inf_sup: f64,
    iterations: usize,
}

fn evaluate(
    config: &RunConfig,
    snaps: &SnapshotSet,
    ops: &OperatorSet,
    basis: &ReducedBasis,
) -> Result<Evaluated, CliError> {
    let (_, start, per_sample) = rom_grid(config, snaps)?;
    let consistent = config.variant == Variant::Consistent;
    let model = ReducedModel::project(ops, basis, consistent)?;
    let init = initial_state_from(ops, basis, snaps).expect("snapshots are not empty");
    let rom_config = RomConfig {
        newton: config.newton.into(),
        ..RomConfig::default()
    };
    let mut iterations = 0;
    let states = rom_run(
        &model,
        &init,
        start,
        (snaps.len() - 1) * per_sample,
        per_sample,
        &rom_config,
        &mut |r| iterations += r.newton_iters,
    )?;
    let report = metrics(ops, basis, &states, snaps)?;
    Ok(Evaluated {
        trajectory: RomTrajectory {
            mesh_checksum: basis.mesh_checksum,
            states,
        },
        report,
        inf_sup: model.inf_sup,
        iterations,
    })
}

fn load_inputs(config: &RunConfig) -> Result<(SnapshotSet, OperatorSet), CliError> {
    let snaps = SnapshotSet::load(&config.snapshot_path())?;
    let (dt, _, _) = rom_grid(config, &snaps)?;
    let ops = operators(config, dt)?;
    check_mesh(&ops, snaps.mesh_checksum, &config.snapshot_path())?;
    Ok((snaps, ops))
}

fn load_basis(
    config: &RunConfig,
    ops: &OperatorSet,
    snaps: &SnapshotSet,
) -> Result<ReducedBasis, CliError> {
    if config.identity_basis {
        return Ok(identity_basis(ops, snaps));
    }
    let basis = ReducedBasis::load(&config.basis_path())?;
    check_mesh(ops, basis.mesh_checksum, &config.basis_path())?;
    Ok(basis)
}

pub fn cmd_rom(config: &RunConfig, hash: &str, allow_singular: bool) -> Result<(), CliError> {
    let (snaps, ops) = load_inputs(config)?;
    let basis = load_basis(config, &ops, &snaps)?;
    if config.variant == Variant::NonConsistent
        && !basis.with_supremizers()
        && !config.identity_basis
        && !allow_singular
    {
        return Err(CliError::Config(format!(
            "{} has no supremizer modes and the non-consistent ROM would be singular; pass --allow-singular to run it anyway",
            config.basis_path().display()
        )));
    }
    let ev = evaluate(config, &snaps, &ops, &basis)?;
    let label = config.series_label();
    let r = &ev.report;
    let mut info = Map::new();
    info.insert(
        "mesh_checksum".into(),
        json!(format!("{:016x}", basis.mesh_checksum)),
    );
    info.insert("label".into(), json!(label));
    info.insert("variant".into(), json!(config.variant.to_string()));
    info.insert("n".into(), json!(basis.n_velocity));
    info.insert("with_supremizers".into(), json!(basis.with_supremizers()));
    info.insert("reduced_inf_sup".into(), json!(ev.inf_sup));
    info.insert("newton_iterations".into(), json!(ev.iterations));
    info.insert("err_u".into(), json!(r.err_u));
    info.insert("err_p".into(), json!(r.err_p));
    info.insert("err_k".into(), json!(r.err_k));
    info.insert("err_e".into(), json!(r.err_e));
    info.insert("supremizer_dormancy".into(), json!(r.dormancy));
    emit(
        &config.output_dir,
        "rom",
        hash,
        &[
            ("trajectory.bin", ev.trajectory.to_bytes()),
            (
                "errors_vs_time.csv",
                errors_vs_time_csv(&[(&label, r)]).into_bytes(),
            ),
            (
                "errors_vs_N.csv",
                errors_vs_n_csv(&[(basis.n_velocity, &label, r)]).into_bytes(),
            ),
        ],
        info,
    )?;
    println!(
        "rom {label}: err_u {:.4e} err_p {:.4e} err_K {:.4e} err_E {:.4e}{}",
        r.err_u,
        r.err_p,
        r.err_k,
        r.err_e,
        r.dormancy
            .map_or(String::new(), |d| format!(" dormancy {d:.3e}"))
    );
    Ok(())
}

/// Tabulates the stored trajectories of several runs against their snapshots.
pub fn cmd_compare(
    config: &CompareConfig,
    hash: &str,
    allow_singular: bool,
) -> Result<(), CliError> {
    let mut series = Vec::new();
    let mut checksum = None;
    for run in &config.runs {
        let (rc, _) = RunConfig::load(&run.config, allow_singular)?;
        let (snaps, ops) = load_inputs(&rc)?;
        let basis = load_basis(&rc, &ops, &snaps)?;
        let traj = RomTrajectory::load(&rc.trajectory_path())?;
        for (what, c) in [
            ("basis", basis.mesh_checksum),
            ("trajectory", traj.mesh_checksum),
        ] {
            if c != snaps.mesh_checksum {
                return Err(CliError::Config(format!(
                    "run {}: {what} mesh {c:016x} differs from snapshot mesh {:016x}",
                    run.label, snaps.mesh_checksum
                )));
            }
        }
        match checksum {
            None => checksum = Some(snaps.mesh_checksum),
            Some(c) if c != snaps.mesh_checksum => {
                return Err(CliError::Config(format!(
                    "run {} uses mesh {:016x}, earlier runs {c:016x}; refusing to compare",
                    run.label, snaps.mesh_checksum
                )))
            }
            Some(_) => {}
        }
        if traj.states.first().map(|s| s.c.len()) != Some(basis.zu.ncols()) {
            return Err(CliError::Config(format!(
                "run {}: trajectory does not match the basis",
                run.label
            )));
        }
        let report = metrics(&ops, &basis, &traj.states, &snaps)?;
        series.push((run.label.clone(), basis.n_velocity, report));
    }
    let by_time: Vec<(&str, &MetricsReport)> =
        series.iter().map(|(l, _, r)| (l.as_str(), r)).collect();
    let by_n: Vec<(usize, &str, &MetricsReport)> =
        series.iter().map(|(l, n, r)| (*n, l.as_str(), r)).collect();
    let mut info = Map::new();
    info.insert(
        "mesh_checksum".into(),
        json!(format!("{:016x}", checksum.expect("at least one run"))),
    );
    info.insert(
        "runs".into(),
        Value::Array(
            series
                .iter()
                .map(|(l, n, r)| json!({"label": l, "n": n, "err_u": r.err_u, "err_p": r.err_p, "err_k": r.err_k, "err_e": r.err_e, "supremizer_dormancy": r.dormancy}))
                .collect(),
        ),
    );
    emit(
        &config.output_dir,
        "compare",
        hash,
        &[
            (
                "errors_vs_time.csv",
                errors_vs_time_csv(&by_time).into_bytes(),
            ),
            ("errors_vs_N.csv", errors_vs_n_csv(&by_n).into_bytes()),
        ],
        info,
    )?;
    for (l, n, r) in &series {
        println!(
            "compare {l} (N = {n}): err_u {:.4e} err_p {:.4e}",
            r.err_u, r.err_p
        );
    }
    Ok(())
}
