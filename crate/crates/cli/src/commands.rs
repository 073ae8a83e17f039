use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::Serialize;
use zerocurrent::holomap::{audit_hypotheses, AuditReport, Window};
use zerocurrent::mc::{
    convergence_sweep_with, radial_profile, run, EmpiricalMeasure, SweepRow, SWEEP_CSV_HEADER,
};
use zerocurrent::theory::{
    expectation_pairing, limit_pairing, CurveNormalization, PairingReport, TheoryMeasure,
};

use crate::config::Resolved;
use crate::output::OutputDir;
use crate::CliError;

/// Grid used by `audit`, matching the pre-run audit inside the Monte Carlo driver.
const AUDIT_NODES: usize = 41;
const RADIAL_BINS: usize = 40;
/// Agreement band for Monte Carlo means, in standard errors.
const SE_BAND: f64 = 3.0;

fn out_dir(r: &Resolved) -> Result<OutputDir, CliError> {
    OutputDir::create(&r.config.output_dir, &r.digest)
}

#[derive(Serialize)]
struct AuditOutput<'a> {
    family: String,
    map: &'a [String],
    passed: bool,
    report: &'a AuditReport,
}

pub fn audit(r: &Resolved) -> Result<(), CliError> {
    let jmax = r.n().unwrap_or(1).max(1) as u64;
    let grid = Window::new(r.window, AUDIT_NODES, AUDIT_NODES).map_err(|e| CliError::Config(e.to_string()))?;
    let report = audit_hypotheses(&r.map, &r.family, &grid, jmax).map_err(|e| CliError::Numerical(e.to_string()))?;
    let out = out_dir(r)?;
    let path = out.json(
        "audit.json",
        &AuditOutput {
            family: r.family.describe(),
            map: &r.config.map,
            passed: report.passed(),
            report: &report,
        },
    )?;
    for c in &report.checks {
        println!(
            "{} {}: lhs {:e} rhs {:e} at ({}, {}){}",
            if c.pass { "PASS" } else { "FAIL" },
            c.hypothesis,
            c.witness.lhs,
            c.witness.rhs,
            c.witness.z[0],
            c.witness.z[1],
            c.witness.j.map(|j| format!(" j={j}")).unwrap_or_default()
        );
    }
    println!("c_min {:e} at ({}, {})", report.c_min, report.c_min_at[0], report.c_min_at[1]);
    println!("wrote {}", path.display());
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::Failed("growth hypotheses fail on the window".into()))
    }
}

#[derive(Serialize)]
struct LimitOnly {
    rho_id: String,
    limit_ac: f64,
    limit_curve: f64,
    limit_total: f64,
    potential_form: f64,
    diff: f64,
}

#[derive(Serialize)]
#[serde(untagged)]
enum PairingRow {
    WithExpectation(PairingReport),
    LimitOnly(LimitOnly),
}

#[derive(Serialize)]
struct TheoryOutput {
    n: Option<usize>,
    curve_length: f64,
    curve_chains: usize,
    pairings: Vec<PairingRow>,
}

pub fn theory(r: &Resolved) -> Result<(), CliError> {
    let measure = TheoryMeasure::compute(&r.map, &r.quad)?;
    let spec = match r.config.n {
        Some(n) => Some(r.spec(n)?),
        None => None,
    };
    let mut pairings = Vec::new();
    for rho in &r.rho {
        let lim = limit_pairing(&r.map, rho, &r.quad)?;
        let row = match &spec {
            Some(s) => {
                let e = expectation_pairing(s, rho, &r.quad)?;
                PairingRow::WithExpectation(PairingReport::new(&rho.id, s.n(), e.value, &lim))
            }
            None => PairingRow::LimitOnly(LimitOnly {
                rho_id: rho.id.clone(),
                limit_ac: lim.ac,
                limit_curve: lim.curve,
                limit_total: lim.total,
                potential_form: lim.potential_form,
                diff: lim.diff,
            }),
        };
        println!("{}: limit {:.6} (ac {:.6}, curve {:.6})", rho.id, lim.total, lim.ac, lim.curve);
        pairings.push(row);
    }
    let out = out_dir(r)?;
    out.csv("density.csv", &measure.density_csv())?;
    out.csv("curve.csv", &measure.curve.to_csv())?;
    out.json(
        "pairings.json",
        &TheoryOutput {
            n: r.config.n,
            curve_length: measure.curve.total_length(),
            curve_chains: measure.curve.chains.len(),
            pairings,
        },
    )?;
    println!("wrote density.csv, curve.csv, pairings.json to {}", r.config.output_dir.display());
    Ok(())
}

fn pairings_csv(em: &EmpiricalMeasure, ids: &[String]) -> String {
    let mut out = format!("trial,{}\n", ids.join(","));
    for (t, vals) in &em.pairings {
        let cols: Vec<String> = vals.iter().map(|v| format!("{v:e}")).collect();
        out.push_str(&format!("{t},{}\n", cols.join(",")));
    }
    out
}

pub fn simulate(r: &Resolved) -> Result<(), CliError> {
    let exp = r.experiment(r.n()?)?;
    let em = run(&exp)?;
    let out = out_dir(r)?;
    out.json("empirical.json", &em)?;
    let ids: Vec<String> = r.rho.iter().map(|t| t.id.clone()).collect();
    out.csv("pairings.csv", &pairings_csv(&em, &ids))?;
    if em.zeros.is_some() {
        out.csv("zeros.csv", &em.zeros_csv()?)?;
        let prof = radial_profile(&em, &r.window, r.window.center(), RADIAL_BINS)?;
        out.csv("radial.csv", &prof.to_csv())?;
    }
    for (id, s) in &em.per_rho {
        println!("{id}: mean {:.6} se {:.2e} ({} trials)", s.mean, s.se, s.n_trials);
    }
    if em.audit_overridden {
        println!("warning: growth audit failed and was overridden");
    }
    println!(
        "{} ok, {} failed; wrote results to {}",
        em.trials_ok,
        em.trials_failed,
        r.config.output_dir.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct Check {
    name: String,
    pass: bool,
    detail: String,
}

#[derive(Serialize)]
struct Verdict {
    verdict: &'static str,
    normalization: &'static str,
    n_list: Vec<usize>,
    checks: Vec<Check>,
    rows: Vec<SweepRow>,
}

fn load_inputs(r: &Resolved, inputs: &[PathBuf]) -> Result<BTreeMap<usize, EmpiricalMeasure>, CliError> {
    let mut out = BTreeMap::new();
    for path in inputs {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let em: EmpiricalMeasure =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let expected = r.experiment(em.n)?.digest();
        if em.spec_digest != expected {
            return Err(CliError::Config(format!(
                "{} was produced by a different experiment (digest {} vs {expected})",
                path.display(),
                em.spec_digest
            )));
        }
        if out.insert(em.n, em).is_some() {
            return Err(CliError::Config(format!("two inputs for the same n ({})", path.display())));
        }
    }
    Ok(out)
}

pub fn compare(r: &Resolved, inputs: &[PathBuf], wrong_normalization: bool) -> Result<(), CliError> {
    let n_list = r.n_list()?;
    let precomputed = load_inputs(r, inputs)?;
    if let Some(n) = precomputed.keys().find(|n| !n_list.contains(n)) {
        return Err(CliError::Config(format!("input for n = {n} is not in n_list")));
    }
    let norm = if wrong_normalization {
        CurveNormalization::Unnormalized
    } else {
        CurveNormalization::Canonical
    };
    let base = r.experiment(n_list[0])?;
    let rows = convergence_sweep_with(&base, &n_list, &r.quad, true, norm, &precomputed)?;

    let mut checks = Vec::new();
    for row in &rows {
        let pass = row.mc_agrees(SE_BAND).unwrap_or(false);
        checks.push(Check {
            name: format!("mc_within_3se/{}/n={}", row.rho_id, row.n),
            pass,
            detail: format!(
                "mc {:e} +- {:e} vs expectation {:e}",
                row.mc_mean.unwrap_or(f64::NAN),
                row.mc_se.unwrap_or(f64::NAN),
                row.expectation
            ),
        });
    }
    let last = *n_list.last().expect("n_list is non-empty");
    for row in rows.iter().filter(|row| row.n == last) {
        checks.push(Check {
            name: format!("final_gap_within_rate_bound/{}", row.rho_id),
            pass: row.gap <= row.rate_bound,
            detail: format!("gap {:e} vs bound {:e} (limit {:e})", row.gap, row.rate_bound, row.limit),
        });
    }
    let pass = checks.iter().all(|c| c.pass);
    for c in &checks {
        println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let out = out_dir(r)?;
    let mut csv = format!("{SWEEP_CSV_HEADER}\n");
    for row in &rows {
        csv.push_str(&row.csv_row());
        csv.push('\n');
    }
    out.csv("comparison.csv", &csv)?;
    out.json(
        "verdict.json",
        &Verdict {
            verdict: if pass { "PASS" } else { "FAIL" },
            normalization: if wrong_normalization { "unnormalized" } else { "canonical" },
            n_list,
            checks,
            rows,
        },
    )?;
    println!("verdict: {}", if pass { "PASS" } else { "FAIL" });
    if pass {
        Ok(())
    } else {
        Err(CliError::Failed("comparison verdict FAIL".into()))
    }
}
