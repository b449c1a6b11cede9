use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context, Result};
use lagflow_core::flow::{run_flow, Snapshot, Termination};
use lagflow_core::geometry::{GeometryOptions, OmegaRaising};
use lagflow_core::hodge::{hodge_decompose, loop_periods};
use lagflow_core::identities::{threshold, IdentityEvaluator, IdentityId, ResidualReport};
use lagflow_core::{GeometryState, Scenario};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::manifest::RunManifest;
use crate::output::{curve_svg, diagnostics_csv, periods_csv, write_atomic, write_json};

/// Largest accepted `max |⟨ν_i, ν_j⟩ - η_ij|` before any identity is trusted.
pub const CONSISTENCY_GATE: f64 = 1e-10;

pub const EXIT_OK: u8 = 0;
pub const EXIT_CHECK_FAILED: u8 = 2;

#[derive(Serialize)]
struct IdentityEntry {
    #[serde(flatten)]
    report: ResidualReport,
    threshold: f64,
    passed: bool,
}

pub fn verify_identities(
    cfg: &RunConfig,
    flip_omega: bool,
    out: &Path,
    manifest: &mut RunManifest,
) -> Result<u8> {
    let scenarios = match cfg.scenario()? {
        Some(s) => vec![s],
        None => Scenario::library(),
    };
    let opts = GeometryOptions {
        omega_raising: if flip_omega {
            OmegaRaising::Flipped
        } else {
            OmegaRaising::Standard
        },
        ..GeometryOptions::default()
    };
    let mut entries = Vec::new();
    let mut gates = Vec::new();
    let mut skipped = Vec::new();
    for s in &scenarios {
        let grid = cfg.grid_for(s)?;
        let state = GeometryState::build_with(&s.immersion(&grid)?, &opts)?;
        let defect = state.nu_eta_defect();
        gates.push(json!({
            "scenario": s.to_string(),
            "nu_eta_defect": defect,
            "passed": defect <= CONSISTENCY_GATE,
        }));
        let tol = threshold(&grid);
        let evaluator = IdentityEvaluator::new(&state);
        for id in IdentityId::ALL {
            if !id.applies_to(s) {
                skipped.push(format!("{s}:{id}"));
                continue;
            }
            let mut report = evaluator.evaluate(id)?;
            report.scenario = Some(s.to_string());
            let passed = report.max_residual <= tol;
            entries.push(IdentityEntry {
                report,
                threshold: tol,
                passed,
            });
        }
    }
    write_json(&out.join("identities.json"), &entries)?;
    manifest.outputs.push("identities.json".into());
    manifest.scenario = cfg.scenario.clone();
    manifest.grid = vec![cfg.grid.n];

    let failing: Vec<String> = entries
        .iter()
        .filter(|e| !e.passed)
        .map(|e| {
            format!(
                "{}:{}",
                e.report.scenario.as_deref().unwrap_or(""),
                e.report.id
            )
        })
        .collect();
    let gate_ok = gates.iter().all(|g| g["passed"] == true);
    manifest.summary = json!({
        "checked": entries.len(),
        "failing": failing,
        "skipped": skipped,
        "consistency_gate": gates,
    });
    for e in &entries {
        eprintln!(
            "{} {:<32} {:<6} max {:.3e} (≤ {:.0e})",
            if e.passed { "ok  " } else { "FAIL" },
            e.report.scenario.as_deref().unwrap_or(""),
            e.report.id,
            e.report.max_residual,
            e.threshold
        );
    }
    if !gate_ok {
        eprintln!("⟨ν,ν⟩ = η consistency check failed; ω raising convention is wrong");
    }
    Ok(if failing.is_empty() && gate_ok {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    })
}

pub fn flow(cfg: &RunConfig, out: &Path, manifest: &mut RunManifest) -> Result<u8> {
    let s = cfg.scenario()?.ok_or_else(|| {
        anyhow!("flow needs a scenario (--scenario or the config key `scenario`)")
    })?;
    let grid = cfg.grid_for(&s)?;
    manifest.scenario = Some(s.to_string());
    manifest.grid = grid.sizes().to_vec();
    let record = run_flow(&s.immersion(&grid)?, &cfg.flow)?;

    write_atomic(
        &out.join("diagnostics.csv"),
        diagnostics_csv(&record.diagnostics, s.dim()).as_bytes(),
    )?;
    manifest.outputs.push("diagnostics.csv".into());
    for (k, snap) in record.snapshots.iter().enumerate() {
        let name = format!("snapshots/snapshot_{k:05}.json");
        write_json(&out.join(&name), snap)?;
        manifest.outputs.push(name);
        if s.dim() == 1 {
            let name = format!("snapshots/snapshot_{k:05}.svg");
            write_atomic(
                &out.join(&name),
                curve_svg(&snap.immersion, snap.t).as_bytes(),
            )?;
            manifest.outputs.push(name);
        }
    }
    let last = record.diagnostics.last();
    manifest.summary = json!({
        "lagrangian": record.lagrangian,
        "steps": record.steps,
        "records": record.diagnostics.len(),
        "termination": record.termination,
        "final_t": last.map(|d| d.t),
        "final_area": last.map(|d| d.area),
    });
    if let Termination::SingularityStop { t, min_eig } = record.termination {
        eprintln!("stopped before a singularity at t = {t} (min eig g = {min_eig:e})");
    }
    Ok(EXIT_OK)
}

/// Decompose the snapshot's driving form (its `theta` if present, else `H`).
pub fn hodge(
    snapshot: &Path,
    basepoint: usize,
    out: &Path,
    manifest: &mut RunManifest,
) -> Result<u8> {
    let text = fs::read_to_string(snapshot)
        .with_context(|| format!("reading snapshot {}", snapshot.display()))?;
    let snap: Snapshot = serde_json::from_str(&text)
        .with_context(|| format!("parsing snapshot {}", snapshot.display()))?;
    let state = GeometryState::build(&snap.immersion)?;
    let theta = snap.theta.as_ref().unwrap_or(&snap.mean_curvature);
    let split = hodge_decompose(theta, &state, basepoint)?;

    write_json(&out.join("hodge.json"), &split)?;
    let csv = periods_csv(&loop_periods(theta)?, &loop_periods(&split.psi)?);
    write_atomic(&out.join("periods.csv"), csv.as_bytes())?;
    manifest
        .outputs
        .extend(["hodge.json".into(), "periods.csv".into()]);
    manifest.grid = state.grid().sizes().to_vec();
    manifest.scheme = state.grid().scheme().to_string();
    manifest.summary = json!({
        "snapshot": snapshot.display().to_string(),
        "t": snap.t,
        "basepoint": basepoint,
        "psi_max": split.psi.max_abs(),
        "phi_max": split.phi.max_abs(),
        "iterations": split.iterations,
        "residual": split.residual,
    });
    Ok(EXIT_OK)
}
