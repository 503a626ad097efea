//! Acceptance criteria, one line per criterion. Run with
//! `cargo test -p sqjcm --test acceptance`.

use std::process::ExitCode;
use std::time::Instant;

use sqjcm::states::ModelParams;
use sqjcm::validate::{
    bn_oracle_residual, collapse_plateau_offset, jcm_route_residual, longtime_mean, normalization_residual,
    nonrwa_pair, operator_identity_residuals, oracle_retained, revival_peak_offset, route_equivalence_residual,
    run_suite, Mutation, Suite, REFERENCE_SETS,
};
use sqjcm::Result;

struct Outcome {
    pass: bool,
    detail: String,
}

fn within(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn coefficients() -> Result<Outcome> {
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for (a, b, r) in REFERENCE_SETS {
        let p = ModelParams::aligned(a, b, r, 0.0)?;
        let res = bn_oracle_residual(&p, oracle_retained(r))?;
        parts.push(format!("({a},{b},{r}): {res:.1e}"));
        worst = worst.max(res);
    }
    Ok(within(worst < 1e-7, format!("max |Δb_n| {} < 1e-7", parts.join(", "))))
}

fn normalization() -> Result<Outcome> {
    let mut worst = 0.0f64;
    let sets = REFERENCE_SETS.iter().copied().chain([(0.0, 2.0, 0.0)]);
    for (a, b, r) in sets {
        let p = ModelParams::aligned(a, b, r, 0.0)?;
        worst = worst.max(normalization_residual(&p, 1e-8)?);
    }
    Ok(within(worst < 1e-6, format!("max |Σ|b_n|² + tail − 1| = {worst:.1e} < 1e-6")))
}

fn route_equivalence() -> Result<Outcome> {
    let mut parts = Vec::new();
    let mut pass = true;
    for (a, b, r) in [(10.0, 2.0, 0.1), (0.0, 5.0, 0.9)] {
        let p = ModelParams::aligned(a, b, r, 0.0)?;
        let res = route_equivalence_residual(&p, 30.0, 3001)?;
        pass &= res < 1e-5;
        parts.push(format!("({a},{b},{r}): {res:.1e} < 1e-5"));
    }
    let jcm = jcm_route_residual(2.0, 30.0, 3001)?;
    pass &= jcm < 1e-6;
    parts.push(format!("coherent b=2: {jcm:.1e} < 1e-6"));
    Ok(within(pass, parts.join(", ")))
}

fn identities() -> Result<Outcome> {
    let res = operator_identity_residuals()?;
    let pass = res.iter().all(|(_, r)| *r < 1e-8);
    let parts: Vec<String> = res.iter().map(|(n, r)| format!("{n} {r:.1e}")).collect();
    Ok(within(pass, format!("{} (each < 1e-8)", parts.join(", "))))
}

fn recursion_residual() -> Result<Outcome> {
    let (coarse, fine) = nonrwa_pair()?;
    let ratio = coarse / fine;
    Ok(within(
        coarse < 1e-4 && (3.5..=4.5).contains(&ratio),
        format!("residual {coarse:.2e} < 1e-4 at dt 1e-3, halving ratio {ratio:.3} in [3.5, 4.5]"),
    ))
}

fn revival() -> Result<Outcome> {
    let peak2 = revival_peak_offset(2.0)?;
    let peak5 = revival_peak_offset(5.0)?;
    let plateau = collapse_plateau_offset(5.0)?;
    Ok(within(
        peak2 <= 2.0 && peak5 <= 2.0 && plateau <= 0.05,
        format!("peak offsets |β|=2: {peak2:.3}, |β|=5: {peak5:.3} (≤ 2); plateau |⟨P⟩ − ½| = {plateau:.1e} (≤ 0.05)"),
    ))
}

fn longtime() -> Result<Outcome> {
    let mean = longtime_mean()?;
    Ok(within(
        (mean - 0.5).abs() <= 0.05,
        format!("mean P over λt ∈ [50, 200] = {mean:.6} (0.5 ± 0.05, conjecture check)"),
    ))
}

fn mutations() -> Result<Outcome> {
    let mut parts = Vec::new();
    let mut pass = true;
    for m in [Mutation::FlipSinhSign, Mutation::DropChiPhase] {
        let report = run_suite(Suite::Full, Some(m));
        let failures = report.failures();
        pass &= !failures.is_empty();
        parts.push(format!("{m:?} fails [{}]", failures.join(", ")));
    }
    let clean = run_suite(Suite::Full, None);
    pass &= clean.all_pass();
    parts.push(format!("unmutated failures: {}", clean.failures().len()));
    Ok(within(pass, parts.join("; ")))
}

type Criterion = (&'static str, fn() -> Result<Outcome>);

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("analytic coefficients match the matrix oracle", coefficients),
        ("normalization", normalization),
        ("route equivalence", route_equivalence),
        ("operator identities", identities),
        ("recursion residual and its order", recursion_residual),
        ("revival phenomenology", revival),
        ("long-time average", longtime),
        ("mutation sensitivity", mutations),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (pass, detail) = match f() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!pass);
        println!(
            "{} criterion {}: {name}: {detail} [{:.1} s]",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            start.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
