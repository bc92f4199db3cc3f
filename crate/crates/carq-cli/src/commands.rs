//! Subcommand implementations. Each returns `CliResult<()>`; the binary maps
//! the error class to the exit code (input 1, invariant 2, resource 3).

use std::path::Path;
use std::time::Instant;

use num_complex::Complex64;

use carq_core::dynamics::{KernelVariant, Partition, PartitionKind, Scenario};
use carq_core::fock::{self, FockSystem};
use carq_core::kernel::{self, IndexWord};
use carq_core::linalg::{OperatorMatrix, StateVector};
use carq_core::optimize::{self, EvalPhase};

use crate::report;
use crate::scenario::{LogBase, ScenarioFile};
use crate::{CliError, CliResult};

/// Tolerance for the cross-route creation check (occupation-basis creator vs
/// wedge-tensor construction).
const CROSS_TOL: f64 = 1e-10;

/// Tolerance on the claims asserted by `reproduce-paper`.
const CLAIM_TOL: f64 = 1e-12;

/// Prune threshold that drops exactly-zero branches and nothing else: the
/// walk prunes on strict `weight < prune`, and this is the smallest positive
/// double.
const ZERO_BRANCH_PRUNE: f64 = f64::from_bits(1);

/// Squared matrix, assembled column by column through the nonzero entries.
/// The CAR generators are one-entry-per-column sparse, so this stays at
/// O(dim^2) where a dense product would cost O(dim^3).
fn square_max_abs(m: &OperatorMatrix) -> f64 {
    let dim = m.nrows();
    let cols: Vec<Vec<(usize, Complex64)>> = (0..dim)
        .map(|c| {
            (0..dim)
                .filter_map(|r| {
                    let v = m[(r, c)];
                    (v != Complex64::ZERO).then_some((r, v))
                })
                .collect()
        })
        .collect();
    let mut scratch = vec![Complex64::ZERO; dim];
    let mut worst = 0.0f64;
    for col in &cols {
        scratch.iter_mut().for_each(|v| *v = Complex64::ZERO);
        for &(r, vc) in col {
            for &(rr, vr) in &cols[r] {
                scratch[rr] += vr * vc;
            }
        }
        for v in &scratch {
            worst = worst.max(v.norm());
        }
    }
    worst
}

/// Compares `a†(f) x` against the wedge-tensor construction on a fixed smooth
/// mode function and a low-occupation vector (so only small antisymmetrizers
/// are needed at any mode count).
fn antisymmetrizer_cross_check(sys: &FockSystem) -> CliResult<f64> {
    let m = sys.modes();
    let f: Vec<Complex64> = (0..m)
        .map(|i| Complex64::new(0.3 + 0.1 * i as f64, 0.2 - 0.05 * i as f64))
        .collect();
    let mut x = StateVector::zeros(sys.dim());
    for b in 0..sys.dim() {
        if b.count_ones() <= 2 {
            x[b] = Complex64::new(1.0 / (b as f64 + 1.0), 0.1 * b as f64);
        }
    }
    let direct = sys.creator_field(&f)? * &x;
    let wedge = fock::creation_via_antisymmetrizer(sys, &f, &x)?;
    Ok((direct - wedge)
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

pub fn cmd_verify_car(modes: usize, inject_fault: Option<usize>) -> CliResult<()> {
    let started = Instant::now();
    let mut sys = fock::build_fock_system(modes)?;
    if let Some(i) = inject_fault {
        sys.inject_generator_fault(i)?;
    }
    println!(
        "CAR relations on {} mode{} (dimension {}):",
        modes,
        if modes == 1 { "" } else { "s" },
        sys.dim()
    );
    let car = fock::verify_car_relations(&sys);
    println!("  {{a_i†, a_j}} = δ_ij 1   max deviation {:.3e}", car.family_max[0]);
    println!("  {{a_i, a_j}} = 0         max deviation {:.3e}", car.family_max[1]);
    println!("  {{a_i†, a_j†}} = 0       max deviation {:.3e}", car.family_max[2]);

    let mut pauli = 0.0f64;
    for i in 0..modes {
        pauli = pauli.max(square_max_abs(sys.annihilator(i)));
        pauli = pauli.max(square_max_abs(sys.creator(i)));
    }
    println!("  a_i² = 0, (a_i†)² = 0   max deviation {pauli:.3e}");

    let cross = antisymmetrizer_cross_check(&sys)?;
    println!("  creation vs antisymmetrizer route: max deviation {cross:.3e}");
    println!("  wall clock: {:?}", started.elapsed());

    if !car.passes {
        return Err(CliError::Math(format!("CAR relation violated: {car}")));
    }
    if !(pauli <= car.tol) {
        return Err(CliError::Math(format!(
            "Pauli principle violated: max |a_i²| deviation {pauli:.3e} exceeds {:.1e}",
            car.tol
        )));
    }
    if !(cross <= CROSS_TOL) {
        return Err(CliError::Math(format!(
            "creation operators disagree with the antisymmetrizer route by {cross:.3e} (tolerance {CROSS_TOL:.1e})"
        )));
    }
    println!("all relations verified (tolerance {:.1e})", car.tol);
    Ok(())
}

/// Applies the flag overrides and returns the concrete scenario.
fn resolve_scenario(
    file: &ScenarioFile,
    horizon: Option<usize>,
    cap: Option<u64>,
) -> CliResult<Scenario> {
    let mut s = file.scenario()?;
    if let Some(h) = horizon {
        s = s.with_horizon(h)?;
    }
    if let Some(c) = cap {
        s = s.with_cap(c);
    }
    Ok(s)
}

fn print_scenario_summary(s: &Scenario, base: LogBase) {
    // Debug keeps subnormal thresholds like 5e-324 in shortest form.
    println!(
        "scenario: dimension {}, {} symbols, variant {}, horizon {}, prune {:?}, entropies in {}",
        s.rho.nrows(),
        s.symbol_count(),
        s.variant,
        s.horizon,
        s.prune,
        base.label()
    );
}

/// Shared tail of the entropy-reporting commands: print the table and series,
/// estimate the rate when the series is long enough, write the CSVs.
fn report_run(
    s: &Scenario,
    base: LogBase,
    csv: Option<&Path>,
    kernel_csv: Option<&Path>,
) -> CliResult<()> {
    let started = Instant::now();
    let table = kernel::kernel_table(s)?;
    table.validate()?;
    let series = kernel::entropy_series(s, s.horizon)?;
    report::print_kernel_table(&table);
    report::print_series(&series, base);
    if s.horizon >= 3 {
        let rate = kernel::rate_estimate(&series)?;
        report::print_rate(&rate, base);
    } else {
        println!("rate estimate: skipped (needs horizon >= 3, got {})", s.horizon);
    }
    if let Some(path) = csv {
        report::write_file(path, &report::series_csv(&series, base))?;
        println!("entropy series written to {}", path.display());
    }
    if let Some(path) = kernel_csv {
        report::write_file(path, &report::kernel_csv(&table))?;
        println!("kernel table written to {}", path.display());
    }
    println!("wall clock: {:?}", started.elapsed());
    Ok(())
}

pub fn cmd_entropy(
    scenario_path: &Path,
    horizon: Option<usize>,
    cap: Option<u64>,
    csv: Option<&Path>,
    kernel_csv: Option<&Path>,
) -> CliResult<()> {
    let file = ScenarioFile::load(scenario_path)?;
    let s = resolve_scenario(&file, horizon, cap)?;
    print_scenario_summary(&s, file.log_base);
    report_run(&s, file.log_base, csv, kernel_csv)
}

/// The two-level reference model: one fermionic mode in the basis that lists
/// the occupied state first, gamma_1 = a†a, gamma_2 = aa†, the automorphism
/// exp(i a†a) (a projector, so U = 1 + (e^i - 1) a†a exactly), and the
/// diagonal state diag(lambda, 1-lambda). Zero-probability branches are
/// pruned so the word tree stays at two paths per horizon.
pub fn two_level_reference_scenario(lambda: f64, horizon: usize) -> CliResult<Scenario> {
    if !lambda.is_finite() || !(0.0..=1.0).contains(&lambda) {
        return Err(CliError::Input(format!(
            "lambda: must lie in [0, 1], got {lambda}"
        )));
    }
    let sys = fock::build_fock_system(1)?;
    let a = fock::reverse_basis_order(sys.annihilator(0));
    let gamma1 = a.adjoint() * &a;
    let gamma2 = &a * a.adjoint();
    let phase = Complex64::new(0.0, 1.0).exp() - Complex64::ONE;
    let u = OperatorMatrix::identity(2, 2) + &gamma1 * phase;
    let rho = OperatorMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
        Complex64::new(lambda, 0.0),
        Complex64::new(1.0 - lambda, 0.0),
    ]));
    let partition = Partition::new(vec![gamma1, gamma2], PartitionKind::OrthogonalProjective)?;
    let automorphism = carq_core::dynamics::Automorphism::new(u)?;
    Ok(
        Scenario::new(rho, partition, automorphism, KernelVariant::Car, horizon)?
            .with_prune(ZERO_BRANCH_PRUNE)?,
    )
}

pub fn cmd_reproduce_paper(
    lambda: f64,
    horizon: usize,
    csv: Option<&Path>,
    kernel_csv: Option<&Path>,
) -> CliResult<()> {
    if horizon < 3 {
        return Err(CliError::Input(format!(
            "horizon: must be at least 3 for a rate estimate, got {horizon}"
        )));
    }
    let s = two_level_reference_scenario(lambda, horizon)?;
    println!(
        "two-level reference model: lambda = {lambda}, horizon = {horizon}, variant {}",
        s.variant
    );

    let table = kernel::kernel_table(&s)?;
    table.validate()?;
    let series = kernel::entropy_series(&s, horizon)?;
    let rate = kernel::rate_estimate(&series)?;
    report::print_kernel_table(&table);
    report::print_series(&series, LogBase::E);
    report::print_rate(&rate, LogBase::E);

    let k = table.symbol_count;
    let all_ones = IndexWord::constant(1, horizon, k)?;
    let all_twos = IndexWord::constant(2, horizon, k)?;
    let claims = [
        (
            format!("P({}) = lambda", table.word_label(&all_ones)),
            (table.probability(&all_ones) - lambda).abs(),
        ),
        (
            format!("P({}) = 1 - lambda", table.word_label(&all_twos)),
            (table.probability(&all_twos) - (1.0 - lambda)).abs(),
        ),
        (
            "mixed words vanish".to_string(),
            table
                .entries
                .iter()
                .filter(|(w, _)| **w != all_ones && **w != all_twos)
                .map(|(_, &p)| p)
                .fold(0.0, f64::max),
        ),
        ("entropy rate is 0".to_string(), rate.rate.abs()),
    ];
    let binary = if lambda == 0.0 || lambda == 1.0 {
        0.0
    } else {
        -(lambda * lambda.ln() + (1.0 - lambda) * (1.0 - lambda).ln())
    };
    println!(
        "binary entropy h(lambda) = {binary}; max |S_n - h| = {:.3e}",
        series
            .s
            .iter()
            .map(|v| (v - binary).abs())
            .fold(0.0, f64::max)
    );
    for (claim, deviation) in &claims {
        if !(*deviation <= CLAIM_TOL) {
            return Err(CliError::Math(format!(
                "claim violated: {claim} (deviation {deviation:.3e}, tolerance {CLAIM_TOL:.1e})"
            )));
        }
        println!("claim holds: {claim} (deviation {deviation:.3e})");
    }

    if let Some(path) = csv {
        report::write_file(path, &report::series_csv(&series, LogBase::E))?;
        println!("entropy series written to {}", path.display());
    }
    if let Some(path) = kernel_csv {
        report::write_file(path, &report::kernel_csv(&table))?;
        println!("kernel table written to {}", path.display());
    }
    Ok(())
}

pub fn cmd_optimize(scenario_path: &Path, budget: usize, horizon: Option<usize>) -> CliResult<()> {
    let file = ScenarioFile::load(scenario_path)?;
    let family = file.family()?;
    let horizon = horizon.unwrap_or(file.horizon);
    if horizon < 3 {
        return Err(CliError::Input(format!(
            "horizon: must be at least 3 for a rate objective, got {horizon}"
        )));
    }
    let template = file.template();
    let base = file.log_base;
    let d = base.divisor();
    println!(
        "optimizing the tail-increment rate over a {}-parameter family (horizon {horizon}, budget {budget}, rates in {})",
        family.param_count(),
        base.label()
    );
    let started = Instant::now();
    let result = optimize::sup_over_family(&template, family, horizon, budget)?;
    for eval in &result.trace {
        let phase = match eval.phase {
            EvalPhase::Grid => "grid",
            EvalPhase::Refine => "refine",
        };
        println!("  [{phase}] params {:?} rate {}", eval.params, eval.rate / d);
    }
    println!("grid maximum: {}", result.grid_max / d);
    println!(
        "best: params {:?} rate {}",
        result.best_params,
        result.best_rate / d
    );
    println!("evaluations: {}", result.trace.len());
    println!("wall clock: {:?}", started.elapsed());
    Ok(())
}
