use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use rsp_core::bounds::{
    distill_pure, hull_fill_fraction, is_entangled, max_purity_b, monte_carlo_preparable,
    partially_entangled, preparable_ellipsoid, purity_ab, TetrahedronState,
};
use rsp_core::optics::LocalFilter;
use rsp_core::qstate::{
    apply_alice, bloch_from_state, fidelity, kets, partial_trace_a, purity, tangle, ComplexEntry,
    DensityMatrix, DensityMatrix1Q,
};
use rsp_core::rsp::{ideal_settings, trigger_filter, PlateRetardances, TriggerOutcome};
use rsp_core::tomo::{
    mle_reconstruct, CountRecord, ExperimentConfig, ProjectorSet, RspExperiment, TargetRun,
    TomographyResult,
};

use crate::config::{self, RunConfig};
use crate::CliError;

const DEFAULT_SAMPLES: usize = 100_000;
const HULL_DIRECTIONS: usize = 500;
const HULL_POINTS: usize = 5_000;

/// Loaded config with the effective seed and output directory.
pub struct RunContext {
    pub config: RunConfig,
    pub config_sha256: String,
    pub seed: u64,
    pub out: PathBuf,
}

impl RunContext {
    pub fn new(path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<Self, CliError> {
        let loaded = config::load(path)?;
        let digest = Sha256::digest(loaded.text.as_bytes());
        let config_sha256 = digest.iter().map(|b| format!("{b:02x}")).collect();
        let out = out
            .or_else(|| loaded.config.output.dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        Ok(Self {
            seed: seed.unwrap_or(loaded.config.seed),
            config: loaded.config,
            config_sha256,
            out,
        })
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| io_error(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_error(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_error(path, e))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| io_error(path, e))?;
    for row in rows {
        writer.serialize(row).map_err(|e| io_error(path, e))?;
    }
    writer.flush().map_err(|e| io_error(path, e))
}

/// Re-runs the state checks on anything about to be written.
fn checked<const N: usize>(what: &str, rho: &DensityMatrix<N>) -> Result<(), CliError> {
    DensityMatrix::new(*rho.matrix())
        .and_then(|m| m.ensure_normalized())
        .map_err(|e| CliError::Numerical(format!("{what}: {e}")))
}

fn bloch_array(rho: &DensityMatrix1Q) -> Result<[f64; 3], CliError> {
    bloch_from_state(rho)
        .map(|s| s.to_array())
        .map_err(|e| CliError::Numerical(e.to_string()))
}

#[derive(Serialize)]
struct ResourceSummary {
    fidelity_to_source: f64,
    purity: f64,
    tangle: f64,
}

#[derive(Serialize)]
struct TargetRow {
    id: usize,
    theta: f64,
    phi: f64,
    lambda: f64,
    target_bloch: [f64; 3],
    qwp_angle_deg: f64,
    hwp_angle_deg: f64,
    t_d: f64,
    t_a: f64,
    success_probability: f64,
    predicted_fidelity: f64,
    bloch: [f64; 3],
    purity: f64,
    fidelity: f64,
    target_fidelity: f64,
}

#[derive(Serialize)]
struct RunManifest {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config_sha256: String,
    seed: u64,
    n0: f64,
    retardances_deg: [f64; 2],
    resource: ResourceSummary,
    mean_fidelity: f64,
    min_fidelity: f64,
    targets: Vec<TargetRow>,
}

#[derive(Serialize)]
struct CsvRow {
    target_id: usize,
    s1: f64,
    s2: f64,
    s3: f64,
    purity: f64,
    fidelity: f64,
}

#[derive(Serialize)]
struct ResourceFile<'a> {
    source: &'a DensityMatrix<4>,
    reconstruction: &'a TomographyResult<4>,
    summary: &'a ResourceSummary,
}

fn target_row(run: &TargetRun) -> Result<TargetRow, CliError> {
    let rho = &run.tomography.rho_hat;
    Ok(TargetRow {
        id: run.index,
        theta: run.target.theta,
        phi: run.target.phi,
        lambda: run.target.lam,
        target_bloch: run.target.bloch().to_array(),
        qwp_angle_deg: run.settings.qwp_angle.to_degrees(),
        hwp_angle_deg: run.settings.hwp_angle.to_degrees(),
        t_d: run.settings.t_d,
        t_a: run.settings.t_a,
        success_probability: run.settings.success_probability,
        predicted_fidelity: run.settings.predicted_fidelity,
        bloch: bloch_array(rho)?,
        purity: purity(rho).map_err(|e| CliError::Numerical(e.to_string()))?,
        fidelity: run.fidelity,
        target_fidelity: run.target_fidelity,
    })
}

pub fn prepare(run: &RunContext) -> Result<(), CliError> {
    let cfg = &run.config;
    let planned = cfg.targets.resolve()?;
    if planned.is_empty() {
        return Err(CliError::Input(
            "no targets: set targets.preset or add [[targets.states]]".into(),
        ));
    }
    let experiment_config = ExperimentConfig {
        resource: cfg.resource.spec(),
        retardances: cfg.plates.retardances()?,
        n0: cfg.n0,
        seed: run.seed,
        detector: cfg.detector.unwrap_or_default(),
    };
    let experiment = RspExperiment::characterize(experiment_config)
        .map_err(|e| CliError::from_core("resource", e))?;

    let runs: Vec<TargetRun> = planned
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            match p.settings {
                Some(settings) => experiment.run_with_settings(i, &p.target, settings),
                None => experiment.run_target(i, &p.target),
            }
            .map_err(|e| CliError::from_core(&format!("target {i}"), e))
        })
        .collect::<Result<_, _>>()?;

    let resource = experiment.resource();
    checked("resource reconstruction", &resource.tomography.rho_hat)?;
    let summary = ResourceSummary {
        fidelity_to_source: resource.fidelity,
        purity: purity(&resource.tomography.rho_hat).map_err(|e| CliError::Numerical(e.to_string()))?,
        tangle: tangle(&resource.tomography.rho_hat).map_err(|e| CliError::Numerical(e.to_string()))?,
    };
    let mut rows = Vec::with_capacity(runs.len());
    for r in &runs {
        checked(&format!("target {} reconstruction", r.index), &r.tomography.rho_hat)?;
        checked(&format!("target {} prediction", r.index), &r.expected)?;
        rows.push(target_row(r)?);
    }
    let mean_fidelity = rows.iter().map(|r| r.fidelity).sum::<f64>() / rows.len() as f64;
    let min_fidelity = rows.iter().map(|r| r.fidelity).fold(f64::INFINITY, f64::min);
    let csv_rows: Vec<CsvRow> = rows
        .iter()
        .map(|r| CsvRow {
            target_id: r.id,
            s1: r.bloch[0],
            s2: r.bloch[1],
            s3: r.bloch[2],
            purity: r.purity,
            fidelity: r.fidelity,
        })
        .collect();
    let plates = experiment.config().retardances;
    let manifest = RunManifest {
        tool: "rsp",
        version: env!("CARGO_PKG_VERSION"),
        command: "prepare",
        config_sha256: run.config_sha256.clone(),
        seed: run.seed,
        n0: cfg.n0,
        retardances_deg: [plates.qwp.to_degrees(), plates.hwp.to_degrees()],
        resource: summary,
        mean_fidelity,
        min_fidelity,
        targets: rows,
    };

    let targets_dir = run.out.join("targets");
    create_dir(&targets_dir)?;
    write_json(
        &run.out.join("resource.json"),
        &ResourceFile {
            source: &resource.truth,
            reconstruction: &resource.tomography,
            summary: &manifest.resource,
        },
    )?;
    write_json(&run.out.join("resource_counts.json"), &resource.counts)?;
    for r in &runs {
        write_json(&targets_dir.join(format!("target_{:03}.json", r.index)), r)?;
        write_json(
            &targets_dir.join(format!("target_{:03}_counts.json", r.index)),
            &r.counts,
        )?;
    }
    write_csv(&run.out.join("states.csv"), &csv_rows)?;
    write_json(&run.out.join("manifest.json"), &manifest)?;
    println!(
        "prepared {} targets: mean fidelity {:.5}, min {:.5}; resource fidelity {:.5}",
        manifest.targets.len(),
        mean_fidelity,
        min_fidelity,
        manifest.resource.fidelity_to_source
    );
    println!("wrote {}", run.out.display());
    Ok(())
}

#[derive(Serialize)]
struct TetrahedronReport {
    t: [f64; 3],
    eigenvalues: [f64; 4],
    entangled: bool,
    semi_axes: [f64; 3],
    purity_ab: f64,
    max_purity_b: f64,
}

#[derive(Serialize)]
struct MonteCarloReport {
    requested: usize,
    accepted: usize,
    discarded: usize,
    max_length: f64,
    max_purity: f64,
    violations: Option<usize>,
    max_violation: Option<f64>,
    max_scaled_radius: Option<f64>,
    hull_fill_fraction: Option<f64>,
}

#[derive(Serialize)]
struct BoundsReport {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config_sha256: String,
    seed: u64,
    resource_purity: f64,
    resource_tangle: f64,
    /// Present when the resource is Bell-diagonal.
    tetrahedron: Option<TetrahedronReport>,
    monte_carlo: MonteCarloReport,
}

#[derive(Serialize)]
struct CloudRow {
    s1: f64,
    s2: f64,
    s3: f64,
    success_prob: f64,
}

pub fn bounds(run: &RunContext, samples: Option<usize>) -> Result<(), CliError> {
    let section = run
        .config
        .bounds
        .as_ref()
        .ok_or_else(|| CliError::Input("missing [bounds] section".into()))?;
    let resource = section.resource()?;
    let samples = samples.or(section.samples).unwrap_or(DEFAULT_SAMPLES);
    let cloud = monte_carlo_preparable(&resource, samples, run.seed)
        .map_err(|e| CliError::from_core("bounds", e))?;
    let tetra = TetrahedronState::from_density(&resource);
    let hull_fill = tetra.and_then(|t| {
        hull_fill_fraction(&cloud, &preparable_ellipsoid(&t), HULL_DIRECTIONS, HULL_POINTS, run.seed).ok()
    });
    let report = BoundsReport {
        tool: "rsp",
        version: env!("CARGO_PKG_VERSION"),
        command: "bounds",
        config_sha256: run.config_sha256.clone(),
        seed: run.seed,
        resource_purity: purity(&resource).map_err(|e| CliError::Numerical(e.to_string()))?,
        resource_tangle: tangle(&resource).map_err(|e| CliError::Numerical(e.to_string()))?,
        tetrahedron: tetra.map(|t| TetrahedronReport {
            t: t.t(),
            eigenvalues: t.eigenvalues(),
            entangled: is_entangled(&t),
            semi_axes: preparable_ellipsoid(&t).semi_axes,
            purity_ab: purity_ab(&t),
            max_purity_b: max_purity_b(&t),
        }),
        monte_carlo: MonteCarloReport {
            requested: samples,
            accepted: cloud.samples.len(),
            discarded: cloud.discarded,
            max_length: cloud.max_length,
            max_purity: cloud.max_purity(),
            violations: cloud.summary.map(|s| s.violations),
            max_violation: cloud.summary.map(|s| s.max_violation),
            max_scaled_radius: cloud.summary.map(|s| s.max_scaled_radius),
            hull_fill_fraction: hull_fill,
        },
    };
    let rows: Vec<CloudRow> = cloud
        .samples
        .iter()
        .map(|s| CloudRow {
            s1: s.bloch.s1,
            s2: s.bloch.s2,
            s3: s.bloch.s3,
            success_prob: s.success_probability,
        })
        .collect();
    create_dir(&run.out)?;
    write_csv(&run.out.join("cloud.csv"), &rows)?;
    write_json(&run.out.join("bounds.json"), &report)?;

    match &report.tetrahedron {
        Some(t) => println!(
            "t = {:?}: {}; semi-axes {:?}; max Bob purity {:.6} (Monte Carlo {:.6})",
            t.t,
            if t.entangled { "entangled" } else { "unentangled" },
            t.semi_axes,
            t.max_purity_b,
            report.monte_carlo.max_purity
        ),
        None => println!(
            "resource is not Bell-diagonal; Monte Carlo max Bob purity {:.6}",
            report.monte_carlo.max_purity
        ),
    }
    if let Some(v) = report.monte_carlo.violations {
        println!("violations: {v}");
        if v > 0 {
            return Err(CliError::Numerical(format!(
                "{v} sampled states lie outside the ellipsoid"
            )));
        }
    }
    println!("wrote {}", run.out.display());
    Ok(())
}

#[derive(Serialize)]
struct TomoMetrics {
    purity: f64,
    bloch: Option<[f64; 3]>,
    tangle: Option<f64>,
}

#[derive(Serialize)]
struct TomoReport<const N: usize> {
    qubits: usize,
    #[serde(flatten)]
    result: TomographyResult<N>,
    metrics: TomoMetrics,
}

fn reconstruct<const N: usize>(record: &CountRecord) -> Result<TomographyResult<N>, CliError> {
    let result = mle_reconstruct(record, &ProjectorSet::<N>::standard())
        .map_err(|e| CliError::from_core("reconstruction", e))?;
    checked("reconstruction", &result.rho_hat)?;
    Ok(result)
}

pub fn tomo(counts: &Path, out: &Path) -> Result<(), CliError> {
    let text = fs::read_to_string(counts)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", counts.display())))?;
    let record: CountRecord = serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("{}: {e}", counts.display())))?;
    let numerical = |e: rsp_core::RspError| CliError::Numerical(e.to_string());
    let json = match record.labels.len() {
        6 => {
            let result = reconstruct::<2>(&record)?;
            let metrics = TomoMetrics {
                purity: purity(&result.rho_hat).map_err(numerical)?,
                bloch: Some(bloch_array(&result.rho_hat)?),
                tangle: None,
            };
            serde_json::to_value(TomoReport { qubits: 1, result, metrics })
        }
        36 => {
            let result = reconstruct::<4>(&record)?;
            let metrics = TomoMetrics {
                purity: purity(&result.rho_hat).map_err(numerical)?,
                bloch: None,
                tangle: Some(tangle(&result.rho_hat).map_err(numerical)?),
            };
            serde_json::to_value(TomoReport { qubits: 2, result, metrics })
        }
        n => {
            return Err(CliError::Input(format!(
                "{}: expected 6 or 36 projections, found {n}",
                counts.display()
            )))
        }
    }
    .map_err(|e| CliError::Io(e.to_string()))?;
    create_dir(out)?;
    let path = out.join("tomography.json");
    write_json(&path, &json)?;
    println!("wrote {}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct DistilledTarget {
    id: usize,
    theta: f64,
    phi: f64,
    lambda: f64,
    success_probability: f64,
    fidelity: f64,
}

#[derive(Serialize)]
struct DistillReport {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config_sha256: String,
    p: f64,
    filter: Vec<Vec<ComplexEntry>>,
    success_probability: f64,
    bell_fidelity: f64,
    tangle_before: f64,
    tangle_after: f64,
    targets: Vec<DistilledTarget>,
}

pub fn distill(run: &RunContext) -> Result<(), CliError> {
    let p = run
        .config
        .distill
        .ok_or_else(|| CliError::Input("missing [distill] section".into()))?
        .p;
    let (filter, success) = distill_pure(p).map_err(|e| CliError::from_core("distill", e))?;
    let source = partially_entangled(p);
    let distilled = apply_alice(&source, &filter)
        .normalized()
        .map_err(|e| CliError::from_core("distill", e))?;
    checked("distilled state", &distilled)?;
    let bell = DensityMatrix::from_ket(&kets::phi_plus());
    let numerical = |e: rsp_core::RspError| CliError::Numerical(e.to_string());

    let plates = PlateRetardances::ideal();
    let targets = run
        .config
        .targets
        .resolve()?
        .iter()
        .enumerate()
        .map(|(id, planned)| {
            let settings = planned.settings.unwrap_or_else(|| ideal_settings(&planned.target));
            let trigger = trigger_filter(&settings, &plates, TriggerOutcome::Transmitted)
                .map_err(|e| CliError::from_core(&format!("target {id}"), e))?;
            let combined: LocalFilter = filter.then(&trigger);
            let bob = partial_trace_a(&apply_alice(&source, &combined));
            let success_probability = bob.trace();
            let bob = bob
                .normalized()
                .map_err(|e| CliError::from_core(&format!("target {id}"), e))?;
            Ok(DistilledTarget {
                id,
                theta: planned.target.theta,
                phi: planned.target.phi,
                lambda: planned.target.lam,
                success_probability,
                fidelity: fidelity(&planned.target.density(), &bob).map_err(numerical)?,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    let report = DistillReport {
        tool: "rsp",
        version: env!("CARGO_PKG_VERSION"),
        command: "distill",
        config_sha256: run.config_sha256.clone(),
        p,
        filter: (0..2)
            .map(|r| (0..2).map(|c| filter.matrix()[(r, c)].into()).collect())
            .collect(),
        success_probability: success,
        bell_fidelity: fidelity(&bell, &distilled).map_err(numerical)?,
        tangle_before: tangle(&source).map_err(numerical)?,
        tangle_after: tangle(&distilled).map_err(numerical)?,
        targets,
    };
    create_dir(&run.out)?;
    write_json(&run.out.join("distill.json"), &report)?;
    println!(
        "p = {p}: success probability {:.6}, Bell fidelity {:.12}, tangle {:.6} -> {:.6}",
        report.success_probability, report.bell_fidelity, report.tangle_before, report.tangle_after
    );
    println!("wrote {}", run.out.display());
    Ok(())
}
