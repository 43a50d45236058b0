//! The experiment pipelines behind the CLI subcommands.

use std::sync::Arc;

use drift_core::homoclinic::{
    build_homoclinic_cylinder, check_simplicity, find_primary_homoclinic, find_saddle,
    generate_secondary, symplectic_orthogonality_check, HomoclinicCylinder, SaddleData,
    ScatteringMapSample, SimplicityReport,
};
use drift_core::interp::Grid;
use drift_core::maps::{check_exact, check_symplectic, CheckReport, PhaseLoop};
use drift_core::nhim::{
    compute_cylinder, lambda_lemma_check, spectral_gap, CylinderGraph, SeedSurface,
};
use drift_core::shadowing::{
    make_proper_code, shoot_channel_orbit, verify_shadowing, Channel, RawCode,
};
use drift_core::transport::synthetic::{bump_lift, random_instance, rotation, twist};
use drift_core::transport::{
    birkhoff_transport, validate_certificate, CylinderMap, EssentialCurve, Ifs, Outcome,
    RestrictedMap, TransportCertificate, Validation,
};
use drift_core::{MapDef, PhasePoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, MuScanConfig, SyntheticConfig};
use crate::io::{Recorder, RunManifest, RunStatus};
use crate::LabError;

type CoreResult<T> = drift_core::Result<T>;

/// Invariant cylinder, saddle and homoclinic cylinders of one map.
pub struct MapParts {
    pub map: MapDef,
    pub cyl: CylinderGraph,
    pub saddle: SaddleData,
    pub cylinders: Vec<HomoclinicCylinder>,
    pub samples: Vec<ScatteringMapSample>,
    pub simplicity: Vec<SimplicityReport>,
}

/// The IFS a command works on, with the map data behind it when there is a map.
pub struct System {
    pub ifs: Ifs,
    pub gamma_minus: EssentialCurve,
    pub gamma_plus: EssentialCurve,
    pub parts: Option<MapParts>,
}

pub fn build_cylinder(cfg: &ExperimentConfig, map: &MapDef) -> CoreResult<(CylinderGraph, f64)> {
    let [n_phi, n_i] = cfg.grids.cylinder;
    let cyl = compute_cylinder(
        map,
        cfg.band.range,
        n_phi,
        n_i,
        cfg.grids.graph_tol,
        cfg.grids.graph_iterations,
    )?;
    let r = cyl.invariance_residual(map);
    Ok((cyl, r))
}

/// Primary homoclinic cylinder plus `N - 1` secondary ones.
pub fn build_homoclinics(
    cfg: &ExperimentConfig,
    map: &MapDef,
    cyl: &CylinderGraph,
) -> CoreResult<(SaddleData, Vec<HomoclinicCylinder>)> {
    let saddle = find_saddle(map.saddle_k())?;
    let h = find_primary_homoclinic(&saddle, 1e-10)?;
    let [n_phi, n_i] = cfg.grids.scattering;
    let grid = Grid::new(n_phi, n_i, cfg.band.range.0, cfg.band.range.1);
    let primary = build_homoclinic_cylinder(map, cyl, &saddle, &h, grid, cfg.channel.delta, 1)?;
    let extra = cfg.channel.homoclinics - 1;
    let mut out = vec![primary];
    if extra > 0 {
        let sec = generate_secondary(map, cyl, &saddle, &out[0], extra, cfg.band.sub_band)?;
        out.extend(sec.into_iter().map(|s| s.cylinder));
    }
    Ok((saddle, out))
}

pub fn build_scattering(
    cfg: &ExperimentConfig,
    map: &MapDef,
    cyl: &CylinderGraph,
    saddle: &SaddleData,
    cylinders: &[HomoclinicCylinder],
) -> CoreResult<(Vec<ScatteringMapSample>, Vec<SimplicityReport>)> {
    let samples: Vec<ScatteringMapSample> = cylinders
        .iter()
        .map(|b| ScatteringMapSample::from_cylinder(b, cyl))
        .collect();
    let simplicity = cylinders
        .iter()
        .zip(&samples)
        .map(|(b, f)| check_simplicity(&b.solver(map, cyl, *saddle), b, f, cfg.band.sub_band))
        .collect::<CoreResult<Vec<_>>>()?;
    Ok((samples, simplicity))
}

fn map_ifs(parts: &MapParts, band: (f64, f64)) -> CoreResult<Ifs> {
    let mut maps: Vec<Arc<dyn CylinderMap>> = vec![Arc::new(RestrictedMap {
        map: parts.map.clone(),
        cyl: parts.cyl.clone(),
    })];
    maps.extend(
        parts
            .samples
            .iter()
            .map(|s| Arc::new(s.clone()) as Arc<dyn CylinderMap>),
    );
    Ifs::new(maps, band)
}

fn synthetic_system(cfg: &ExperimentConfig, syn: &SyntheticConfig) -> CoreResult<System> {
    let n = cfg.grids.curve;
    let band = cfg.band.range;
    let curves = || {
        (
            cfg.transport.gamma_minus.curve(n),
            cfg.transport.gamma_plus.curve(n),
        )
    };
    let (ifs, gamma_minus, gamma_plus) = match *syn {
        SyntheticConfig::Lift {
            rotation: a,
            amount,
        } => {
            let maps: Vec<Arc<dyn CylinderMap>> =
                vec![Arc::new(rotation(a)), Arc::new(bump_lift(amount, 0.0, 1.0))];
            let (gm, gp) = curves();
            (Ifs::new(maps, band)?, gm, gp)
        }
        SyntheticConfig::Identity { rotation: a, slope } => {
            let maps: Vec<Arc<dyn CylinderMap>> =
                vec![Arc::new(twist(a, slope)), Arc::new(twist(a, slope))];
            let (gm, gp) = curves();
            (Ifs::new(maps, band)?, gm, gp)
        }
        SyntheticConfig::Random { seed } => {
            let inst = random_instance(seed, n);
            (inst.ifs, inst.gamma_minus, inst.gamma_plus)
        }
    };
    Ok(System {
        ifs,
        gamma_minus,
        gamma_plus,
        parts: None,
    })
}

/// Everything up to the IFS, one stage per step.
fn prepare(rec: &mut Recorder, cfg: &ExperimentConfig, map: &MapDef) -> Result<System, LabError> {
    if let Some(syn) = &cfg.synthetic {
        return rec.stage("synthetic", || {
            let s = synthetic_system(cfg, syn)?;
            let detail = format!("{:?}", s.ifs);
            Ok((s, true, detail))
        });
    }
    let parts = map_parts(rec, cfg, map)?;
    let ifs = rec.stage("ifs", || {
        let ifs = map_ifs(&parts, cfg.band.range)?;
        let twist = ifs.min_twist(16)?;
        Ok((ifs, twist > 0.0, format!("min twist {twist:.4}")))
    })?;
    let n = cfg.grids.curve;
    Ok(System {
        ifs,
        gamma_minus: cfg.transport.gamma_minus.curve(n),
        gamma_plus: cfg.transport.gamma_plus.curve(n),
        parts: Some(parts),
    })
}

fn map_parts(
    rec: &mut Recorder,
    cfg: &ExperimentConfig,
    map: &MapDef,
) -> Result<MapParts, LabError> {
    let cyl = cylinder_stage(rec, cfg, map)?;
    let (saddle, cylinders) = rec.stage("homoclinic", || {
        let (s, c) = build_homoclinics(cfg, map, &cyl)?;
        let detail = format!(
            "{} cylinder(s), multipliers {:.12} / {:.12}",
            c.len(),
            s.lambda_u,
            s.lambda_s
        );
        Ok(((s, c), true, detail))
    })?;
    let (samples, simplicity) = rec.stage("scattering", || {
        let (f, s) = build_scattering(cfg, map, &cyl, &saddle, &cylinders)?;
        let ok = s.iter().all(SimplicityReport::usable);
        let sup = f.iter().map(|x| x.sup_displacement()).fold(0.0, f64::max);
        Ok((
            (f, s),
            ok,
            format!("sup |F_B - id| = {sup:e}, simple: {ok}"),
        ))
    })?;
    Ok(MapParts {
        map: map.clone(),
        cyl,
        saddle,
        cylinders,
        samples,
        simplicity,
    })
}

fn cylinder_stage(
    rec: &mut Recorder,
    cfg: &ExperimentConfig,
    map: &MapDef,
) -> Result<CylinderGraph, LabError> {
    rec.stage("cylinder", || {
        let (cyl, r) = build_cylinder(cfg, map)?;
        let ok = r < 1e-8;
        let detail = format!("invariance residual {r:e}, sup |g| = {:e}", cyl.sup_norm());
        Ok((cyl, ok, detail))
    })
}

fn status_of(rec: &Recorder) -> RunStatus {
    if rec.all_passed() {
        RunStatus::Pass
    } else {
        RunStatus::Fail
    }
}

const CYLINDER_COLUMNS: [(&str, &str); 4] = [
    ("phi", "angle on the cylinder"),
    ("action", "action I"),
    ("x", "graph value x = g_x(phi, I)"),
    ("y", "graph value y = g_y(phi, I)"),
];

const SCATTERING_COLUMNS: [(&str, &str); 4] = [
    ("phi", "angle of the grid node"),
    ("action", "action of the grid node"),
    ("psi", "image angle"),
    ("image_action", "image action"),
];

const CURVE_COLUMNS: [(&str, &str); 2] = [("phi", "angle"), ("y", "action of the curve")];

fn write_parts(rec: &mut Recorder, parts: &MapParts) -> Result<(), LabError> {
    rec.csv("cylinder.csv", &CYLINDER_COLUMNS, &parts.cyl.rows())?;
    for (b, f) in parts.cylinders.iter().zip(&parts.samples) {
        rec.csv(
            &format!("homoclinic_{}.csv", b.id),
            &CYLINDER_COLUMNS,
            &b.rows(),
        )?;
        rec.csv(
            &format!("scattering_{}.csv", f.id),
            &SCATTERING_COLUMNS,
            &f.rows(),
        )?;
    }
    rec.json("simplicity.json", &parts.simplicity)
}

fn curve_rows(c: &EssentialCurve) -> Vec<[f64; 2]> {
    c.phis.iter().zip(&c.ys).map(|(&p, &y)| [p, y]).collect()
}

#[derive(Serialize)]
struct CheckEntry {
    stage: &'static str,
    report: CheckReport,
}

/// Sample points with angles in `[0, 2pi)`, actions in the band and
/// `y` in `[-2, 2]`.
pub fn sample_points(seed: u64, n: usize, band: (f64, f64)) -> Vec<PhasePoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tau = std::f64::consts::TAU;
    (0..n)
        .map(|_| {
            PhasePoint::new(
                rng.random_range(0.0..tau),
                rng.random_range(band.0..band.1),
                rng.random_range(0.0..tau),
                rng.random_range(-2.0..2.0),
            )
        })
        .collect()
}

/// Five closed loops, winding in `phi` and in both angles, with wobbles.
pub fn test_loops(band: (f64, f64)) -> Vec<PhaseLoop> {
    let mid = 0.5 * (band.0 + band.1);
    let w = 0.1 * (band.1 - band.0);
    vec![
        PhaseLoop::horizontal(mid, 0.0, 0.0),
        PhaseLoop::horizontal(band.0 + w, 1.0, 0.3),
        PhaseLoop::wavy(mid, w, 0.1, 0.2, false),
        PhaseLoop::wavy(mid - w, w, -0.2, 0.1, true),
        PhaseLoop::wavy(band.1 - 2.0 * w, 0.5 * w, 0.5, 0.3, true),
    ]
}

/// Invariant suites of every module; a failing stage does not stop the
/// stages that do not depend on it.
pub fn cmd_check(cfg: &ExperimentConfig) -> Result<RunManifest, LabError> {
    let mut rec = Recorder::new(&cfg.output, "check", cfg.hash())?;
    let map = &cfg.map;
    let mut reports = Vec::new();
    let points = sample_points(cfg.seeds.check, cfg.check.points, cfg.band.range);
    if let Ok(r) = rec.stage("symplectic", || {
        let r = check_symplectic(map, &points, cfg.check.symplectic_tol)?;
        let detail = format!("max |J^T Omega J - Omega| = {:e}", r.max_residual);
        Ok((r.clone(), r.passed, detail))
    }) {
        reports.push(CheckEntry {
            stage: "symplectic",
            report: r,
        });
    }
    if let Ok(r) = rec.stage("exactness", || {
        let loops = test_loops(cfg.band.range);
        let rs = loops
            .iter()
            .map(|lp| check_exact(map, lp, 1024, cfg.check.exact_tol))
            .collect::<CoreResult<Vec<_>>>()?;
        let worst = rs.iter().map(|r| r.max_residual).fold(0.0, f64::max);
        let ok = rs.iter().all(|r| r.passed);
        Ok((
            rs,
            ok,
            format!("{} loops, max action defect {worst:e}", loops.len()),
        ))
    }) {
        reports.extend(r.into_iter().map(|report| CheckEntry {
            stage: "exactness",
            report,
        }));
    }
    if let Ok(cyl) = cylinder_stage(&mut rec, cfg, map) {
        let _ = rec.stage("spectral_gap", || {
            let g = spectral_gap(map, &cyl, [1.0, 0.1])?;
            let detail = format!(
                "alpha {:.6} lambda {:.6} alpha^2 lambda {:.6}",
                g.alpha, g.lambda, g.product_check
            );
            Ok((g.clone(), g.is_valid(), detail))
        });
        let _ = rec.stage("lambda_lemma", || {
            let seed = SeedSurface::Constant { offset: 0.1 };
            let r = lambda_lemma_check(
                map,
                &cyl,
                &seed,
                cfg.check.lambda_iterates,
                cfg.channel.delta,
            )?;
            let worst = r.ratios.iter().copied().fold(0.0, f64::max);
            Ok((
                (),
                r.passed,
                format!("worst C0 ratio {worst:.6} against lambda {:.6}", r.lambda),
            ))
        });
        let homoclinic = rec.stage("homoclinic", || {
            let (s, c) = build_homoclinics(cfg, map, &cyl)?;
            Ok(((s, c), true, String::new()))
        });
        if let Ok((saddle, cylinders)) = homoclinic {
            if let Ok(r) = rec.stage("orthogonality", || {
                let r = symplectic_orthogonality_check(map, &cyl, &saddle, &cylinders[0], 16)?;
                let detail = r.detail.clone();
                Ok((r.clone(), r.passed, detail))
            }) {
                reports.push(CheckEntry {
                    stage: "orthogonality",
                    report: r,
                });
            }
            let _ = rec.stage("scattering", || {
                let (f, s) = build_scattering(cfg, map, &cyl, &saddle, &cylinders)?;
                let ok = s.iter().all(SimplicityReport::usable);
                let exact = f
                    .iter()
                    .map(|x| x.exactness(&cyl, 8, 256))
                    .fold(0.0, f64::max);
                Ok((
                    (),
                    ok && exact < 1e-6,
                    format!("simple: {ok}, exactness residual {exact:e}"),
                ))
            });
        }
    }
    rec.json("checks.json", &reports)?;
    let status = status_of(&rec);
    rec.finish(status)
}

pub fn cmd_cylinder(cfg: &ExperimentConfig) -> Result<RunManifest, LabError> {
    let mut rec = Recorder::new(&cfg.output, "cylinder", cfg.hash())?;
    let cyl = cylinder_stage(&mut rec, cfg, &cfg.map)?;
    let gap = rec.stage("spectral_gap", || {
        let g = spectral_gap(&cfg.map, &cyl, [1.0, 0.1])?;
        let detail = format!(
            "alpha {:.6} lambda {:.6} alpha^2 lambda {:.6}",
            g.alpha, g.lambda, g.product_check
        );
        Ok((g.clone(), g.is_valid(), detail))
    })?;
    rec.csv("cylinder.csv", &CYLINDER_COLUMNS, &cyl.rows())?;
    rec.json("spectral_gap.json", &gap)?;
    let status = status_of(&rec);
    rec.finish(status)
}

pub fn cmd_scattering(cfg: &ExperimentConfig) -> Result<RunManifest, LabError> {
    let mut rec = Recorder::new(&cfg.output, "scattering", cfg.hash())?;
    let parts = map_parts(&mut rec, cfg, &cfg.map)?;
    write_parts(&mut rec, &parts)?;
    let status = status_of(&rec);
    rec.finish(status)
}

fn transport_stages(
    rec: &mut Recorder,
    cfg: &ExperimentConfig,
    sys: &System,
) -> Result<(TransportCertificate, Validation), LabError> {
    let cert = rec.stage("transport", || {
        let c = birkhoff_transport(
            &sys.ifs,
            &sys.gamma_minus,
            &sys.gamma_plus,
            &cfg.transport.options(),
        )?;
        let detail = format!("{:?} after {} generations", c.outcome, c.generations);
        Ok((c, true, detail))
    })?;
    let v = rec.stage("validate", || {
        let v = validate_certificate(&cert, &sys.ifs, cfg.transport.validate_tol);
        Ok((v.clone(), v.valid, v.diagnosis.clone()))
    })?;
    rec.json("certificate.json", &cert)?;
    rec.csv(
        "gamma_minus.csv",
        &CURVE_COLUMNS,
        &curve_rows(&sys.gamma_minus),
    )?;
    rec.csv(
        "gamma_plus.csv",
        &CURVE_COLUMNS,
        &curve_rows(&sys.gamma_plus),
    )?;
    if let Some(ob) = &cert.obstruction {
        let rows: Vec<[f64; 2]> = ob.phis.iter().zip(&ob.ys).map(|(&p, &y)| [p, y]).collect();
        rec.csv("obstruction.csv", &CURVE_COLUMNS, &rows)?;
    }
    if cert.outcome == Outcome::Connecting {
        let rows: Vec<[f64; 3]> = cert
            .steps
            .iter()
            .map(|s| [s.phi, s.action, s.map_index.map_or(-1.0, |n| n as f64)])
            .collect();
        rec.csv(
            "ifs_orbit.csv",
            &[
                ("phi", "angle"),
                ("action", "action"),
                ("map", "index of the map applied next, -1 at the end"),
            ],
            &rows,
        )?;
    }
    Ok((cert, v))
}

pub fn cmd_transport(cfg: &ExperimentConfig) -> Result<RunManifest, LabError> {
    let mut rec = Recorder::new(&cfg.output, "transport", cfg.hash())?;
    let sys = prepare(&mut rec, cfg, &cfg.map)?;
    if let Some(parts) = &sys.parts {
        write_parts(&mut rec, parts)?;
    }
    transport_stages(&mut rec, cfg, &sys)?;
    let status = status_of(&rec);
    rec.finish(status)
}

/// Transport, then a true orbit of the map shadowing the connecting IFS
/// orbit. An obstruction ends the run as inconclusive.
pub fn cmd_drift(cfg: &ExperimentConfig) -> Result<RunManifest, LabError> {
    let mut rec = Recorder::new(&cfg.output, "drift", cfg.hash())?;
    let sys = prepare(&mut rec, cfg, &cfg.map)?;
    let (cert, valid) = transport_stages(&mut rec, cfg, &sys)?;
    if cert.outcome == Outcome::Obstruction {
        rec.push(
            "no_drift",
            0.0,
            valid.valid,
            "validated invariant curve between gamma- and gamma+".into(),
        );
        let status = if valid.valid {
            RunStatus::Inconclusive
        } else {
            RunStatus::Fail
        };
        return rec.finish(status);
    }
    let target = cfg.shadowing.target_drift;
    let Some(parts) = &sys.parts else {
        // a synthetic IFS has no phase space: the IFS orbit is the result
        let d = match (cert.steps.first(), cert.steps.last()) {
            (Some(a), Some(b)) => b.action - a.action,
            _ => 0.0,
        };
        rec.push("drift", 0.0, d >= target, format!("IFS orbit dI = {d:.6}"));
        let status = status_of(&rec);
        return rec.finish(status);
    };
    let raw = rec.stage("code", || {
        let r = RawCode::from_steps(&cert.steps)?;
        let detail = format!("{} excursions", r.steps.len());
        Ok((r, true, detail))
    })?;
    let channel = Channel::new(
        &parts.map,
        &parts.cyl,
        parts.saddle,
        &parts.cylinders,
        cfg.channel.delta,
    )
    .map_err(|e| LabError::Stage {
        stage: "channel".into(),
        source: e,
    })?;
    let (code, shadow) = rec.stage("proper_code", || {
        let (c, s) = make_proper_code(
            &raw,
            &channel,
            cfg.shadowing.properness(),
            &cfg.shadowing.padding(),
        )?;
        let detail = format!("blocks {:?}", c.blocks());
        Ok(((c.clone(), s), c.is_proper(), detail))
    })?;
    let orbit = rec.stage("shoot", || {
        let o = shoot_channel_orbit(&channel, &shadow)?;
        let detail = format!("{} points, z_in {:e}", o.points.len(), o.z_in);
        Ok((o, true, detail))
    })?;
    let report = rec.stage("verify", || {
        let r = verify_shadowing(&channel, &orbit, &shadow, cfg.shadowing.epsilon);
        let detail = if r.passed {
            format!(
                "max deviation {:e} within 2 x {:e}",
                r.deviations.iter().copied().fold(0.0, f64::max),
                r.bound
            )
        } else {
            r.problems.join("; ")
        };
        Ok((r.clone(), r.passed, detail))
    })?;
    let defect = orbit.defects(&parts.map).into_iter().fold(0.0, f64::max);
    rec.push(
        "replay",
        0.0,
        defect < cfg.shadowing.epsilon,
        format!("max one-step defect {defect:e}"),
    );
    let d = orbit.action_change();
    rec.push(
        "drift",
        0.0,
        d >= target,
        format!("dI = {d:.6} (target {target})"),
    );
    let rows: Vec<[f64; 7]> = orbit
        .rows()
        .into_iter()
        .map(|(t, p, station, dev)| {
            [
                t as f64,
                p.phi,
                p.action,
                p.x,
                p.y,
                if station { 1.0 } else { 0.0 },
                dev.unwrap_or(f64::NAN),
            ]
        })
        .collect();
    rec.csv(
        "orbit.csv",
        &[
            ("t", "iterate"),
            ("phi", "angle of the twist factor"),
            ("action", "action I"),
            ("x", "standard-map angle"),
            ("y", "standard-map momentum"),
            ("station", "1 at the way-stations of the code"),
            (
                "deviation",
                "distance of the station's projection from the shadow, NaN elsewhere",
            ),
        ],
        &rows,
    )?;
    let shadow_rows: Vec<[f64; 3]> = shadow
        .points
        .iter()
        .enumerate()
        .map(|(s, v)| [s as f64, v.phi, v.action])
        .collect();
    rec.csv(
        "shadow.csv",
        &[
            ("s", "station index"),
            ("phi", "angle"),
            ("action", "action"),
        ],
        &shadow_rows,
    )?;
    rec.json("code.json", &code)?;
    rec.json("shadow_report.json", &report)?;
    let status = status_of(&rec);
    rec.finish(status)
}

/// Outcome of one node of a parameter scan.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanRow {
    pub mu1: f64,
    pub mu2: f64,
    /// `connecting`, `obstruction`, `invalid` or `inconclusive`.
    pub outcome: String,
    /// Validation error of the certificate; NaN without one.
    pub residual: f64,
    pub detail: String,
}

fn scan_node(cfg: &ExperimentConfig, map: &MapDef, mu1: f64, mu2: f64) -> ScanRow {
    let run = || -> CoreResult<(TransportCertificate, Validation)> {
        let (cyl, _) = build_cylinder(cfg, map)?;
        let (saddle, cylinders) = build_homoclinics(cfg, map, &cyl)?;
        let (samples, simplicity) = build_scattering(cfg, map, &cyl, &saddle, &cylinders)?;
        let parts = MapParts {
            map: map.clone(),
            cyl,
            saddle,
            cylinders,
            samples,
            simplicity,
        };
        let ifs = map_ifs(&parts, cfg.band.range)?;
        let n = cfg.grids.curve;
        let (gm, gp) = (
            cfg.transport.gamma_minus.curve(n),
            cfg.transport.gamma_plus.curve(n),
        );
        let cert = birkhoff_transport(&ifs, &gm, &gp, &cfg.transport.options())?;
        let v = validate_certificate(&cert, &ifs, cfg.transport.validate_tol);
        Ok((cert, v))
    };
    match run() {
        Ok((cert, v)) => ScanRow {
            mu1,
            mu2,
            outcome: match (v.valid, cert.outcome) {
                (false, _) => "invalid".into(),
                (true, Outcome::Connecting) => "connecting".into(),
                (true, Outcome::Obstruction) => "obstruction".into(),
            },
            residual: v.max_error,
            detail: format!("{} generations", cert.generations),
        },
        Err(e) => ScanRow {
            mu1,
            mu2,
            outcome: "inconclusive".into(),
            residual: f64::NAN,
            detail: e.to_string(),
        },
    }
}

/// Transport at every node of the `(mu1, mu2)` grid of the two-step family.
pub fn cmd_mu_scan(cfg: &ExperimentConfig) -> Result<RunManifest, LabError> {
    let mut rec = Recorder::new(&cfg.output, "mu-scan", cfg.hash())?;
    let family = cfg.family()?;
    let scan = &cfg.mu_scan;
    let nodes: Vec<(f64, f64)> = MuScanConfig::axis(scan.mu1, scan.nodes[0])
        .into_iter()
        .flat_map(|a| {
            MuScanConfig::axis(scan.mu2, scan.nodes[1])
                .into_iter()
                .map(move |b| (a, b))
        })
        .collect();
    let rows = rec.stage("scan", || {
        let rows: Vec<ScanRow> = nodes
            .par_iter()
            .map(|&(a, b)| scan_node(cfg, &family.at(&[a, b]), a, b))
            .collect();
        let invalid = rows.iter().filter(|r| r.outcome == "invalid").count();
        let open = rows.iter().filter(|r| r.outcome == "inconclusive").count();
        let detail = format!(
            "{} nodes, {invalid} invalid, {open} inconclusive",
            rows.len()
        );
        Ok((rows, invalid == 0, detail))
    })?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.mu1.to_string(),
                r.mu2.to_string(),
                r.outcome.clone(),
                r.residual.to_string(),
            ]
        })
        .collect();
    rec.table(
        "mu_scan.csv",
        &[
            ("mu1", "first family parameter"),
            ("mu2", "second family parameter"),
            (
                "outcome",
                "connecting, obstruction, invalid or inconclusive",
            ),
            ("residual", "certificate validation error"),
        ],
        &table,
    )?;
    rec.json("mu_scan.json", &rows)?;
    let status = if !rec.all_passed() {
        RunStatus::Fail
    } else if rows.iter().any(|r| r.outcome == "inconclusive") {
        RunStatus::Inconclusive
    } else {
        RunStatus::Pass
    };
    rec.finish(status)
}
