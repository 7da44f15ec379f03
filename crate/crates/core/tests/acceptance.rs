//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits with
//! a nonzero status if any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;

use common::*;
use twostep::conditionm::{build_matrix_set, certify_step_sizes, check_condition_m, CertStatus};
use twostep::diagnostics::{gap_rate_check, rate_report, GapQuery, GapTracker};
use twostep::engine::{
    kkt_residual, solve, AlgorithmSpec, BaseFamily, Control, DenseReference, Family,
    InnerSolverConfig, IterateState, Stepper, StopCriteria,
};
use twostep::linops::to_dense;
use twostep::mri::{benchmark, estimate_fstar, run_family, MriConfig, MriInstance};
use twostep::vecops::max_abs_diff;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn tight_inner() -> InnerSolverConfig {
    InnerSolverConfig {
        max_inner: 5000,
        inner_tol: 1e-14,
    }
}

fn oracle_equivalence() -> Verdict {
    const TOL: f64 = 1e-10;
    let mut r = rng(2024);
    let mut worst: f64 = 0.0;
    let mut worst_at = String::new();
    for trial in 0..10 {
        let p = random_instance(&mut r);
        for fam in all_families() {
            let beta = r.random_range(0.5..2.0);
            let spec = AlgorithmSpec::new(fam.clone(), reasonable_alphas(&fam, &p, 0.9), beta)
                .with_inner(tight_inner());
            let dense = match DenseReference::for_spec(&p, &spec) {
                Ok(d) => d,
                Err(e) => {
                    return verdict(
                        false,
                        format!("{fam}: dense engine rejected the matrix set: {e}"),
                    )
                }
            };
            let mut fast = random_state(&mut r, &p);
            let mut slow = fast.clone();
            let mut stepper = Stepper::new(&p, &spec).unwrap();
            for _ in 0..20 {
                stepper.advance(&mut fast);
                slow = dense.step(&p, &slow, &spec.inner).0;
                let d = max_abs_diff(&fast.v(), &slow.v());
                if d > worst {
                    worst = d;
                    worst_at = format!("instance {trial}, {fam}");
                }
            }
        }
    }
    verdict(
        worst <= TOL,
        format!("10 instances x {} families x 20 iterations, max deviation {worst:.2e} ({worst_at}), tol {TOL:e}", all_families().len()),
    )
}

fn condition_m_soundness() -> Verdict {
    let families = [
        Family::TwoStepImplicit,
        Family::TwoStepExplicit,
        Family::Hybrid {
            implicit_blocks: [1].into_iter().collect(),
        },
    ];
    let mut r = rng(77);
    let (mut accepted_ok, mut flagged, mut dense_flagged) = (0, 0, 0);
    let mut problems = Vec::new();
    for draw in 0..100 {
        let violate = draw >= 50;
        let p = random_instance(&mut r);
        let ops = p.operators();
        let fam = families[draw % families.len()].clone();
        let beta = r.random_range(0.3..3.0);
        let probe = certify_step_sizes(&fam, &ops, &[1e-9; 3], beta).unwrap();
        let bounds = probe.per_block_bounds.clone();
        let alphas: Vec<f64> = bounds
            .iter()
            .map(|b| {
                if violate {
                    2.0 * b
                } else {
                    r.random_range(0.05..0.99) * b
                }
            })
            .collect();
        let cert = certify_step_sizes(&fam, &ops, &alphas, beta).unwrap();
        let dense: Vec<_> = ops.iter().map(|a| to_dense(a.as_ref())).collect();
        let ms = build_matrix_set(&fam, &dense, &alphas, beta).unwrap();
        let cm = check_condition_m(&ms)
            .map(|rep| rep.passed)
            .unwrap_or(false);
        if violate {
            if cert.status == CertStatus::Rejected {
                flagged += 1;
            } else {
                problems.push(format!("draw {draw} ({fam}) not flagged"));
            }
            dense_flagged += usize::from(!cm);
        } else if cert.is_certified() && cm {
            accepted_ok += 1;
        } else {
            problems.push(format!(
                "draw {draw} ({fam}): certified={} condition-M={cm}",
                cert.is_certified()
            ));
        }
    }
    verdict(
        accepted_ok == 50 && flagged == 50,
        format!(
            "{accepted_ok}/50 in-bound draws pass Condition-M, {flagged}/50 doubled draws rejected by the bound \
             ({dense_flagged}/50 also fail the dense check){}",
            if problems.is_empty() { String::new() } else { format!("; {}", problems.join("; ")) }
        ),
    )
}

fn lp_solution() -> Verdict {
    let p = lp_instance();
    let families = [
        Family::TwoStepExplicit,
        Family::TwoStepImplicit,
        Family::PdPrimalFirst,
        Family::PdDualFirst,
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for fam in families {
        let alphas =
            twostep::conditionm::suggest_step_sizes(&fam, &p.operators(), 1.0, 0.9).unwrap();
        let spec = AlgorithmSpec::new(fam.clone(), alphas, 1.0);
        let out = solve(
            &p,
            &spec,
            IterateState::zeros(&p),
            &StopCriteria {
                max_iter: 5000,
                kkt_tol: Some(1e-10),
                ..StopCriteria::default()
            },
            |_, _| Control::Continue,
        )
        .unwrap();
        let x = out.state.x();
        let obj = p.objective(x);
        let feas = p.feasibility(x);
        let kkt = kkt_residual(&p, &out.state, &spec.alphas, spec.beta).unwrap();
        let good = (obj - 1.0).abs() <= 1e-6 && feas <= 1e-6 && kkt <= 1e-8;
        ok &= good;
        parts.push(format!(
            "{fam}: k={} obj={obj:.9} feas={feas:.1e} kkt={kkt:.1e}",
            out.state.k()
        ));
    }
    verdict(
        ok,
        format!(
            "objective 1 (tol 1e-6), feasibility <= 1e-6, KKT <= 1e-8; {}",
            parts.join(", ")
        ),
    )
}

fn rate_verification() -> Verdict {
    // Oracle instance: full history, exact saddle point.
    let p = lp_instance();
    let fam = Family::TwoStepExplicit;
    let alphas = twostep::conditionm::suggest_step_sizes(&fam, &p.operators(), 1.0, 0.9).unwrap();
    let spec = AlgorithmSpec::new(fam, alphas, 1.0);
    let mut history = vec![IterateState::zeros(&p).v()];
    let out = solve(
        &p,
        &spec,
        IterateState::zeros(&p),
        &StopCriteria {
            max_iter: 5000,
            track_kkt: false,
            ..StopCriteria::default()
        },
        |st, _| {
            history.push(st.v());
            Control::Continue
        },
    )
    .unwrap();
    let lp_rate = rate_report(&out.trace.step_norms()).unwrap();
    let star = GapQuery::at(vec![vec![0.0], vec![0.0], vec![1.0]], vec![-1.0 / 3.0]);
    let ks: Vec<usize> = (0..=28)
        .map(|i| 10f64.powf(1.0 + i as f64 / 8.0).round() as usize)
        .filter(|&k| k < 5000)
        .collect();
    let lp_gap = gap_rate_check(&history, &ks, &star, &p).unwrap();

    // MRI desk run: streaming gap against a long-run reference.
    let cfg = MriConfig {
        max_iter: 2000,
        ..MriConfig::default()
    };
    let inst = MriInstance::new(cfg).unwrap();
    let mspec = inst.spec_for(&Family::TwoStepExplicit);
    let long = solve(
        &inst.problem,
        &mspec,
        inst.initial_state(),
        &StopCriteria {
            max_iter: 20_000,
            track_kkt: false,
            ..StopCriteria::default()
        },
        |_, _| Control::Continue,
    )
    .unwrap();
    let mstar = GapQuery::from_state(&long.state);
    let mut tracker = GapTracker::new(&inst.problem, 2000, 8);
    let mut gap_err = None;
    let run = solve(
        &inst.problem,
        &mspec,
        inst.initial_state(),
        &StopCriteria {
            max_iter: 2000,
            track_kkt: false,
            ..StopCriteria::default()
        },
        |st, _| {
            if st.k() < 2 {
                return Control::Continue;
            }
            if let Err(e) = tracker.observe(st, &mstar, &inst.problem) {
                gap_err = Some(e);
                return Control::Stop;
            }
            Control::Continue
        },
    )
    .unwrap();
    if let Some(e) = gap_err {
        return verdict(false, format!("MRI gap evaluation failed: {e}"));
    }
    let mri_rate = rate_report(&run.trace.step_norms()).unwrap();
    let mri_gap = tracker.report();

    let pass = lp_rate.bounded
        && lp_rate.vanishing
        && mri_rate.bounded
        && mri_rate.vanishing
        && lp_gap.slope <= -0.8
        && mri_gap.slope <= -0.8;
    verdict(
        pass,
        format!(
            "LP: c_k slope {:.3} (bounded {}), k*min vanishing {}, gap slope {:.3}; \
             MRI 64x64: c_k slope {:.3} (bounded {}), k*min vanishing {}, gap slope {:.3} (bound -0.8)",
            lp_rate.cumulative_slope,
            lp_rate.bounded,
            lp_rate.vanishing,
            lp_gap.slope,
            mri_rate.cumulative_slope,
            mri_rate.bounded,
            mri_rate.vanishing,
            mri_gap.slope
        ),
    )
}

/// PSNR is non-decreasing after burn-in when sampled every `stride`
/// iterations.
fn psnr_monotone(psnr: &[f64], burn_in: usize, stride: usize) -> bool {
    let samples: Vec<f64> = psnr.iter().skip(burn_in).step_by(stride).cloned().collect();
    samples.windows(2).all(|w| w[1] >= w[0])
}

fn mri_desk() -> Verdict {
    let cfg = MriConfig {
        max_iter: 3000,
        eps1_tols: vec![1e-4],
        eps2_tols: vec![5e-5],
        ..MriConfig::default()
    };
    let inst = MriInstance::new(cfg).unwrap();
    let fstar = estimate_fstar(&inst, inst.cfg.fstar_iterations()).unwrap();
    let fams = [
        Family::PdDualFirst,
        Family::LadmmDirect,
        Family::TwoStepExplicit,
    ];
    let rep = benchmark(&inst, &fams, fstar).unwrap();
    let iters: Vec<Option<usize>> = ["2SFPPA", "LADMM", "JLADMM"]
        .iter()
        .map(|f| rep.entry(true, f, 1e-4).and_then(|e| e.iterations))
        .collect();
    let all_reach = iters.iter().all(Option::is_some);
    let ordered = all_reach && iters[0] <= iters[1] && iters[1] <= iters[2];
    let mut monotone = true;
    let mut mono_note = Vec::new();
    for run in &rep.runs {
        let psnr: Vec<f64> = run.trace.records.iter().filter_map(|r| r.psnr).collect();
        let burn_in = psnr.len() / 10;
        let m = psnr_monotone(&psnr, burn_in, 10);
        monotone &= m;
        mono_note.push(format!(
            "{} {}",
            run.label,
            if m { "monotone" } else { "not monotone" }
        ));
    }
    let fmt = |v: Option<usize>| v.map_or("-".to_string(), |k| k.to_string());
    verdict(
        all_reach && ordered && monotone,
        format!(
            "64x64, 9 lines ({:.1}% sampled): first k with eps1 < 1e-4: 2SFPPA {}, LADMM {}, JLADMM {}; \
             ordering {}; PSNR after burn-in: {}",
            100.0 * rep.sampling_ratio,
            fmt(iters[0]),
            fmt(iters[1]),
            fmt(iters[2]),
            if ordered { "holds" } else { "violated" },
            mono_note.join(", ")
        ),
    )
}

fn full_scale() -> Verdict {
    let cfg = MriConfig {
        d1: 256,
        d2: 256,
        n_lines: 17,
        max_iter: 3000,
        fstar_iters: Some(5000),
        eps1_tols: vec![1e-4],
        eps2_tols: vec![5e-5],
        ..MriConfig::default()
    };
    let inst = MriInstance::new(cfg).unwrap();
    let fstar = estimate_fstar(&inst, inst.cfg.fstar_iterations()).unwrap();
    let run = run_family(&inst, &Family::TwoStepExplicit, fstar, inst.cfg.max_iter).unwrap();
    let k1 = twostep::mri::first_below(&run.trace, "2SFPPA", 1e-4, |r| r.eps1).iterations;
    let k2 = twostep::mri::first_below(&run.trace, "2SFPPA", 5e-5, |r| r.eps2).iterations;
    let within = |k: Option<usize>, target: f64| {
        k.is_some_and(|k| (k as f64 - target).abs() <= 0.3 * target)
    };
    let fmt = |v: Option<usize>| v.map_or("-".to_string(), |k| k.to_string());
    verdict(
        within(k1, 1026.0) && within(k2, 438.0),
        format!(
            "256x256, 17 lines ({:.1}% sampled): 2SFPPA eps1 < 1e-4 at k = {} (1026 +/- 30%), eps2 < 5e-5 at k = {} (438 +/- 30%)",
            100.0 * inst.sampling_ratio(),
            fmt(k1),
            fmt(k2)
        ),
    )
}

fn degeneration() -> Verdict {
    const TOL: f64 = 1e-12;
    let mut r = rng(99);
    let mut worst_pin: f64 = 0.0;
    let mut worst_theta: f64 = 0.0;
    for _ in 0..10 {
        let p = random_instance(&mut r);
        let beta = r.random_range(0.5..2.0);
        let alphas = reasonable_alphas(&Family::TwoStepExplicit, &p, 0.9);
        let two = AlgorithmSpec::new(Family::TwoStepExplicit, alphas.clone(), beta);
        let one = AlgorithmSpec::new(Family::LadmmDirect, alphas.clone(), beta);
        let start = random_state(&mut r, &p);
        let (mut a, mut b) = (start.clone(), start.clone());
        a.pin_memory();
        b.pin_memory();
        let mut sa = Stepper::new(&p, &two).unwrap();
        let mut sb = Stepper::new(&p, &one).unwrap();
        for _ in 0..20 {
            a.pin_memory();
            sa.advance(&mut a);
            sb.advance(&mut b);
            worst_pin = worst_pin.max(max_abs_diff(&a.v(), &b.v()));
        }

        let implicit = reasonable_alphas(&Family::TwoStepImplicit, &p, 0.9);
        let pairs = [
            (
                Family::DiagRelaxed { theta: 0.0 },
                Family::TwoStepImplicit,
                implicit.clone(),
            ),
            (
                Family::OffDiag {
                    base: BaseFamily::Implicit,
                    theta: 0.0,
                },
                Family::TwoStepImplicit,
                implicit,
            ),
            (
                Family::OffDiag {
                    base: BaseFamily::Explicit,
                    theta: 0.0,
                },
                Family::TwoStepExplicit,
                alphas,
            ),
        ];
        for (variant, base, al) in pairs {
            let sv = AlgorithmSpec::new(variant, al.clone(), beta);
            let sb_ = AlgorithmSpec::new(base, al, beta);
            let (mut a, mut b) = (start.clone(), start.clone());
            let mut st_a = Stepper::new(&p, &sv).unwrap();
            let mut st_b = Stepper::new(&p, &sb_).unwrap();
            for _ in 0..20 {
                st_a.advance(&mut a);
                st_b.advance(&mut b);
                worst_theta = worst_theta.max(max_abs_diff(&a.v(), &b.v()));
            }
        }
    }
    verdict(
        worst_pin <= TOL && worst_theta <= TOL,
        format!(
            "pinned-memory 2SFPPA vs LADMM max deviation {worst_pin:.1e}; theta = 0 variants vs base max deviation {worst_theta:.1e} (tol {TOL:e})"
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 7] = [
        ("1 oracle equivalence", oracle_equivalence),
        ("2 Condition-M soundness", condition_m_soundness),
        ("3 solution correctness", lp_solution),
        ("4 rate verification", rate_verification),
        ("5 MRI desk-scale experiment", mri_desk),
        ("6 full-scale reproduction", full_scale),
        ("7 degeneration identities", degeneration),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let t = Instant::now();
        let v = run();
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!(
            "{tag} criterion {name} [{:.1}s]: {}",
            t.elapsed().as_secs_f64(),
            v.detail
        );
        failed += usize::from(!v.pass);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
