//! One line per acceptance criterion. Criteria that the printed source text
//! cannot meet are pinned as expected failures in `EXPECTED`; the test fails
//! if any criterion changes state in either direction. Runs without the
//! libtest harness so the lines are always printed.

use std::f64::consts::PI;

use confinv::catalog::SurfaceSpec;
use confinv::energies::{integrate, invariant_integrals, EnergyPreset};
use confinv::identities::{default_surfaces, run_suite, Category, IdentityRow, Reading, SuiteConfig, Verdict, VerificationReport};

const GRID: usize = 16;
const POINTS: usize = 100;
const EXTERIOR_SAMPLES: usize = 500;

const GB_SPHERE_REL: f64 = 1e-6;
const GB_ELLIPSOID_REL: f64 = 1e-4;
const GB_TORUS_ABS: f64 = 1e-6;
const CLOSED_FORM_REL: f64 = 1e-6;
const CONFORMAL_REL: f64 = 1e-4;
const POINTWISE_REL: f64 = 1e-9;
const JET_IDENTITY: f64 = 1e-7;
const VARIATIONAL: f64 = 1e-5;
const NOETHER_TABLE: f64 = 1e-9;
const NOETHER_TRACE: f64 = 1e-7;
const EXTERIOR: f64 = 1e-11;
const EB_PRINTED_ABS: f64 = 1e-5;
const WEYL_ZERO_ABS: f64 = 1e-8;
const DISCOVERY: f64 = 1e-4;

/// Criteria 3, 4 and 7 include statements whose printed coefficients are
/// wrong; their corrected forms pass and are reported on the same line.
const EXPECTED: [bool; 10] = [true, true, false, false, true, true, false, true, true, true];

const GENERIC: [f64; 5] = [1.0, 1.3, 0.8, 1.1, 0.9];

struct Line {
    pass: bool,
    text: String,
}

fn get<'a>(r: &'a VerificationReport, id: &str) -> &'a IdentityRow {
    r.get(id).unwrap_or_else(|| panic!("row {id} missing from report"))
}

fn fmt_row(row: &IdentityRow) -> String {
    let res = row.residual.map_or_else(|| format!("error ({})", row.error.as_deref().unwrap_or("?")), |x| format!("{x:.1e}"));
    match row.convergence_order {
        Some(o) => format!("{} {res} (order {o:.1})", row.id),
        None => format!("{} {res}", row.id),
    }
}

/// Every row passes its own verdict and is within `tol`.
fn within(r: &VerificationReport, ids: &[&str], tol: f64) -> Line {
    let rows: Vec<&IdentityRow> = ids.iter().map(|id| get(r, id)).collect();
    let pass = rows.iter().all(|row| row.verdict == Verdict::Pass && row.residual.is_some_and(|x| x <= tol));
    let failing: Vec<String> = rows.iter().filter(|row| row.verdict != Verdict::Pass || row.residual.is_none_or(|x| x > tol)).map(|row| fmt_row(row)).collect();
    let worst = rows.iter().filter_map(|row| row.residual).fold(0.0, f64::max);
    let text = if failing.is_empty() {
        format!("{} rows, worst residual {worst:.1e} ≤ {tol:.0e}", rows.len())
    } else {
        format!("{} rows, failing: {}", rows.len(), failing.join(", "))
    };
    Line { pass, text }
}

fn with_companions(r: &VerificationReport, ids: &[&str], tol: f64) -> Line {
    let mut line = within(r, ids, tol);
    let mut names: Vec<&str> =
        ids.iter().map(|id| get(r, id)).filter(|row| row.verdict != Verdict::Pass).filter_map(|row| row.companion.as_deref()).collect();
    names.dedup();
    let companions: Vec<String> = names
        .into_iter()
        .map(|c| {
            let row = get(r, c);
            format!("{} {}", fmt_row(row), row.verdict)
        })
        .collect();
    if !companions.is_empty() {
        line.text += &format!("; corrected: {}", companions.join(", "));
    }
    line
}

fn gauss_bonnet() -> Line {
    let exact = 16.0 * PI * PI;
    let cases = [
        (SurfaceSpec::sphere(1.0).unwrap(), Some(exact), GB_SPHERE_REL),
        (SurfaceSpec::ellipsoid(GENERIC).unwrap(), Some(exact), GB_ELLIPSOID_REL),
        (SurfaceSpec::torus(2.0, 1.0).unwrap(), None, GB_TORUS_ABS),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (spec, target, tol) in cases {
        let ii = invariant_integrals(&spec, GRID, false).unwrap();
        let v = 6.0 * ii.values[7];
        let err = match target {
            Some(t) => (v - t).abs() / t,
            None => v.abs(),
        };
        pass &= err <= tol;
        parts.push(format!("{} {}{err:.1e}", spec.label(), if target.is_some() { "rel " } else { "abs " }));
    }
    Line { pass, text: parts.join(", ") }
}

fn closed_forms() -> Line {
    let mut pass = true;
    let mut worst = [0.0f64; 2];
    for rho in [0.5, 1.0, 2.0] {
        let s = SurfaceSpec::sphere(rho).unwrap();
        for (k, (preset, c)) in [(EnergyPreset::EC, 96.0), (EnergyPreset::EA, -88.0 / 3.0)].into_iter().enumerate() {
            let exact = c * PI * PI;
            let err = ((integrate(&s, &preset, GRID).unwrap().value - exact) / exact).abs();
            worst[k] = worst[k].max(err);
            pass &= err <= CLOSED_FORM_REL;
        }
    }
    Line { pass, text: format!("ρ ∈ {{0.5, 1, 2}}: E_C worst rel {:.1e}, E_A worst rel {:.1e}", worst[0], worst[1]) }
}

fn main_report() -> VerificationReport {
    run_suite(&SuiteConfig {
        surfaces: default_surfaces(),
        grid: GRID,
        points: POINTS,
        exterior_samples: EXTERIOR_SAMPLES,
        categories: Category::ALL.to_vec(),
        variational: true,
        ..SuiteConfig::default()
    })
}

fn pointwise(r: &VerificationReport) -> Line {
    let ids = [
        "scalar_curvature_gauss",
        "traceless_norm_expansion",
        "traceless_trace_expansion",
        "ricci_norm_shape",
        "ricci_weyl_printed",
        "weyl_norm_identity",
        "quartic_weyl_printed",
    ];
    let mut line = with_companions(r, &ids, POINTWISE_REL);
    let sampled = ids.iter().all(|id| {
        let row = get(r, id);
        row.details.len() == 3 && row.samples >= POINTS
    });
    if !sampled {
        line.pass = false;
        line.text += "; fewer than 3 surfaces or 100 points";
    }
    line
}

fn noether(r: &VerificationReport) -> Line {
    let vc = get(r, "noether_variational_consistency");
    let mut pass = vc.verdict == Verdict::Pass && vc.residual.is_some_and(|x| x <= VARIATIONAL) && vc.surfaces.iter().any(|s| s == "torus(2,1)");
    let ids = |prefix: &str| -> Vec<&str> { r.rows.iter().filter(|x| x.id.starts_with(prefix)).map(|x| x.id.as_str()).collect() };
    let mut tables = ids("noether_table_");
    tables.push("noether_det_zero_fields");
    let t = within(r, &tables, NOETHER_TABLE);
    let tr = within(r, &ids("noether_trace_"), NOETHER_TRACE);
    pass &= t.pass && tr.pass;
    let printed = get(r, "noether_current_printed_sign");
    Line {
        pass,
        text: format!(
            "{}; tables {}; traces {}; printed current sign reported separately ({})",
            fmt_row(vc),
            t.text,
            tr.text,
            fmt_row(printed)
        ),
    }
}

fn exterior(r: &VerificationReport) -> Line {
    let ids: Vec<&str> =
        r.rows.iter().filter(|x| x.category == Category::Exterior && x.reading != Reading::Reconciled).map(|x| x.id.as_str()).collect();
    let mut line = with_companions(r, &ids, EXTERIOR);
    if ids.iter().any(|id| get(r, id).samples < EXTERIOR_SAMPLES && !id.contains("round_trip")) {
        line.pass = false;
        line.text += "; fewer than 500 samples";
    }
    line
}

fn discovery(r: &VerificationReport) -> Line {
    let ids = ["discovery_gauss_bonnet", "discovery_corollary_leading", "discovery_corollary_recovered", "discovery_rational_basis", "discovery_held_out"];
    let mut line = within(r, &ids, DISCOVERY);
    let rem = get(r, "discovery_corollary_remaining");
    line.text += &format!("; reported: {} {}", fmt_row(rem), rem.verdict);
    if let Some(note) = &get(r, "discovery_corollary_recovered").note {
        line.text += &format!("; {note}");
    }
    line
}

fn eb(r: &VerificationReport) -> Line {
    let printed = get(r, "eb_printed_sphere_value");
    let zero = get(r, "weyl_energy_vanishes_conformally_flat");
    let positive = get(r, "weyl_energy_positive");
    let pass = printed.residual.is_some_and(|x| x <= EB_PRINTED_ABS)
        && zero.residual.is_some_and(|x| x <= WEYL_ZERO_ABS)
        && zero.surfaces.iter().any(|s| s.starts_with("sphere"))
        && zero.surfaces.iter().any(|s| s.starts_with("torus"))
        && positive.verdict == Verdict::Pass;
    Line { pass, text: format!("{}, {}, {} {}", fmt_row(printed), fmt_row(zero), fmt_row(positive), positive.verdict) }
}

/// The identities the regularity argument relies on, in their corrected
/// form where the printed coefficients fail.
fn regularity_support(r: &VerificationReport, c5: &Line, c6: &Line) -> Line {
    let exterior_ok = r
        .rows
        .iter()
        .filter(|x| x.category == Category::Exterior && x.verdict != Verdict::Pass)
        .all(|x| x.reading == Reading::Printed && x.companion.as_deref().is_some_and(|c| get(r, c).verdict == Verdict::Pass));
    let pass = c5.pass && c6.pass && exterior_ok;
    Line {
        pass,
        text: format!(
            "not reproducible numerically; supporting identities: criteria 5 {}, 6 {}, exterior rows {}",
            verdict(c5.pass),
            verdict(c6.pass),
            if exterior_ok { "PASS (second contraction identity in corrected form)" } else { "FAIL" }
        ),
    }
}

fn verdict(b: bool) -> &'static str {
    if b { "PASS" } else { "FAIL" }
}

fn main() {
    let report = main_report();
    let c5 = within(&report, &["mean_curvature_flux_lemma", "einstein_normal_divergence", "einstein_divergence_free"], JET_IDENTITY);
    let c6 = noether(&report);
    let c10 = regularity_support(&report, &c5, &c6);
    let lines = [
        ("Gauss–Bonnet", gauss_bonnet()),
        ("sphere closed forms", closed_forms()),
        (
            "conformal invariance",
            with_companions(&report, &["conformal_invariance_ea", "conformal_invariance_ec", "conformal_invariance_e100", "conformal_invariance_e010"], CONFORMAL_REL),
        ),
        ("pointwise identities", pointwise(&report)),
        ("flux and Einstein identities", c5),
        ("Noether pipeline", c6),
        ("exterior suite", exterior(&report)),
        ("identity discovery", discovery(&report)),
        ("E_B reconciliation", eb(&report)),
        ("regularity estimate", c10),
    ];
    let mut drift = Vec::new();
    for (k, (title, line)) in lines.iter().enumerate() {
        println!("criterion {:>2} {}: {title}: {}", k + 1, verdict(line.pass), line.text);
        if line.pass != EXPECTED[k] {
            drift.push(k + 1);
        }
    }
    if !drift.is_empty() {
        eprintln!("criteria {drift:?} changed state from the pinned expectation");
        std::process::exit(1);
    }
    println!("acceptance: all criteria match the pinned expectation");
}
