use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use twostep::conditionm::{
    assess_practical, certify_step_sizes, suggest_step_sizes, CertMethod, CertStatus,
    StepSizeCertificate,
};
use twostep::diagnostics::{rate_report, write_rate_csv, GapQuery, GapTracker, RateReport};
use twostep::engine::{
    self, kkt_residual, AlgorithmSpec, BlockProblem, Control, Family, IterateState, StopCriteria,
    StopReason,
};
use twostep::mri::{self, BenchmarkReport, MriInstance, TableEntry};

use crate::config::{self, Builtin, ProblemSpec, RunConfig};
use crate::{CliError, Common, Outcome};

enum Loaded {
    Generic(BlockProblem),
    Mri(Box<MriInstance>),
}

impl Loaded {
    fn problem(&self) -> &BlockProblem {
        match self {
            Loaded::Generic(p) => p,
            Loaded::Mri(inst) => &inst.problem,
        }
    }

    fn initial_state(&self) -> IterateState {
        match self {
            Loaded::Generic(p) => IterateState::zeros(p),
            Loaded::Mri(inst) => inst.initial_state(),
        }
    }
}

/// Load the config, apply command-line overrides and build the problem.
fn prepare(c: &Common) -> Result<(RunConfig, Loaded), CliError> {
    let mut cfg = config::load(&c.config)?;
    if let Some(out) = &c.out {
        cfg.out = Some(out.clone());
    }
    if let Some(f) = &c.family {
        cfg.family = Some(config::parse_family(f)?);
    }
    if let Some(n) = c.max_iter {
        cfg.stop.max_iter = n;
        if let ProblemSpec::Mri(m) = &mut cfg.problem {
            m.max_iter = n;
        }
    }
    if cfg.stop.max_iter == 0 {
        return Err(CliError::Usage("max_iter must be positive".into()));
    }
    let loaded = match &mut cfg.problem {
        ProblemSpec::Builtin(Builtin::Lp3) => Loaded::Generic(config::lp3()),
        ProblemSpec::Dense(d) => Loaded::Generic(d.build()?),
        ProblemSpec::Mri(m) => {
            match cfg.beta {
                Some(b) => m.beta = b,
                None => cfg.beta = Some(m.beta),
            }
            m.validate()?;
            Loaded::Mri(Box::new(MriInstance::new(m.clone())?))
        }
    };
    if cfg.beta.is_none() {
        return Err(CliError::Usage(format!(
            "{}: missing key `beta`",
            c.config.display()
        )));
    }
    Ok((cfg, loaded))
}

/// Resolve family and step sizes. Resolved values are written back into the
/// config so the manifest reproduces the run.
fn resolve_spec(cfg: &mut RunConfig, loaded: &Loaded) -> Result<AlgorithmSpec, CliError> {
    let family = cfg
        .family
        .clone()
        .ok_or_else(|| CliError::Usage("missing key `family` (or pass --family)".into()))?;
    let beta = cfg.beta.expect("checked in prepare");
    let problem = loaded.problem();
    let alphas = match (&cfg.alphas, loaded) {
        (Some(a), _) => a.clone(),
        (None, Loaded::Mri(inst)) => inst.alphas_for(&family),
        (None, Loaded::Generic(p)) => suggest_step_sizes(&family, &p.operators(), beta, cfg.safety)
            .map_err(|e| {
                CliError::Usage(format!(
                    "cannot choose step sizes for {family}: {e}; set `alphas`"
                ))
            })?,
    };
    let spec = AlgorithmSpec::new(family, alphas, beta).with_inner(cfg.inner);
    spec.validate(problem.s())?;
    cfg.alphas = Some(spec.alphas.clone());
    Ok(spec)
}

/// Theory certificate; MRI runs use the practical rule as a fallback verdict.
fn certificate(loaded: &Loaded, spec: &AlgorithmSpec) -> Result<StepSizeCertificate, CliError> {
    let ops = loaded.problem().operators();
    Ok(match loaded {
        Loaded::Generic(_) => certify_step_sizes(&spec.family, &ops, &spec.alphas, spec.beta)?,
        Loaded::Mri(_) => assess_practical(&spec.family, &ops, &spec.alphas, spec.beta)?,
    })
}

#[derive(Serialize)]
struct CertSummary {
    family: String,
    alphas: Vec<f64>,
    status: CertStatus,
    method: CertMethod,
    note: String,
}

impl From<&StepSizeCertificate> for CertSummary {
    fn from(c: &StepSizeCertificate) -> Self {
        CertSummary {
            family: c.family.clone(),
            alphas: c.alphas.clone(),
            status: c.status,
            method: c.method,
            note: c.note.clone(),
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config: &'a RunConfig,
    operator_norms_sq: Vec<f64>,
    mtilde_norm: f64,
    certificates: Vec<CertSummary>,
    workers: usize,
}

fn write_manifest(
    out: &Path,
    command: &'static str,
    cfg: &RunConfig,
    certs: &[StepSizeCertificate],
) -> Result<(), CliError> {
    let first = certs.first();
    let m = Manifest {
        tool: "twostep",
        version: env!("CARGO_PKG_VERSION"),
        command,
        config: cfg,
        operator_norms_sq: first.map(|c| c.block_norms_sq.clone()).unwrap_or_default(),
        mtilde_norm: first.map_or(0.0, |c| c.mtilde_norm),
        certificates: certs.iter().map(CertSummary::from).collect(),
        workers: twostep::parallel::worker_count(),
    };
    write_json(&out.join("manifest.json"), &m)
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("run"));
    fs::create_dir_all(&out).map_err(|e| CliError::Io {
        path: out.clone(),
        source: e,
    })?;
    Ok(out)
}

fn write_with(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<File>) -> twostep::Result<()>,
) -> Result<(), CliError> {
    let io = |e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    f(&mut w).map_err(|e| match e {
        twostep::Error::Io(e) => io(e),
        other => other.into(),
    })?;
    w.flush().map_err(io)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    write_with(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)?;
        Ok(())
    })
}

pub fn check(c: &Common) -> Result<Outcome, CliError> {
    let (mut cfg, loaded) = prepare(c)?;
    let spec = resolve_spec(&mut cfg, &loaded)?;
    let cert = certificate(&loaded, &spec)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&cert).map_err(twostep::Error::from)?
    );
    if cfg.out.is_some() {
        let out = out_dir(&cfg)?;
        write_json(&out.join("certificate.json"), &cert)?;
        write_manifest(&out, "check", &cfg, std::slice::from_ref(&cert))?;
    }
    Ok(if cert.is_certified() {
        Outcome::Success
    } else {
        Outcome::Rejected
    })
}

#[derive(Serialize)]
struct RateSummary {
    iterations: usize,
    bounded: bool,
    vanishing: bool,
    ergodic_slope: f64,
    cumulative_slope: f64,
    runmin_slope: f64,
}

impl From<&RateReport> for RateSummary {
    fn from(r: &RateReport) -> Self {
        RateSummary {
            iterations: r.a.len(),
            bounded: r.bounded,
            vanishing: r.vanishing,
            ergodic_slope: r.ergodic_slope,
            cumulative_slope: r.cumulative_slope,
            runmin_slope: r.runmin_slope,
        }
    }
}

#[derive(Serialize)]
struct SolveSummary {
    family: String,
    alphas: Vec<f64>,
    beta: f64,
    converged: bool,
    reason: StopReason,
    iterations: usize,
    objective: f64,
    feasibility: f64,
    kkt: f64,
    step_norm_sq: f64,
    inner_unconverged: usize,
    /// Absent for runs shorter than the rate report needs.
    rate: Option<RateSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    x: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    y: Option<Vec<f64>>,
}

pub fn solve(c: &Common) -> Result<Outcome, CliError> {
    let (mut cfg, loaded) = prepare(c)?;
    let spec = resolve_spec(&mut cfg, &loaded)?;
    let cert = certificate(&loaded, &spec)?;
    let out = out_dir(&cfg)?;
    let problem = loaded.problem();
    let run = engine::solve(problem, &spec, loaded.initial_state(), &cfg.stop, |_, _| {
        Control::Continue
    })?;
    let state = &run.state;
    let opt = |v: Option<f64>| v.map(|v| format!("{v:e}")).unwrap_or_default();
    write_with(&out.join("trace.csv"), |w| {
        writeln!(w, "k,step_norm_sq,kkt,objective,eps2")?;
        for r in &run.trace.records {
            writeln!(
                w,
                "{},{:e},{},{:e},{}",
                r.k,
                r.step_norm_sq,
                opt(r.kkt),
                r.objective,
                opt(r.eps2)
            )?;
        }
        Ok(())
    })?;
    let small = matches!(loaded, Loaded::Generic(_));
    let summary = SolveSummary {
        family: spec.family.to_string(),
        alphas: spec.alphas.clone(),
        beta: spec.beta,
        converged: run.converged,
        reason: run.reason,
        iterations: state.k(),
        objective: problem.objective(state.x()),
        feasibility: problem.feasibility(state.x()),
        kkt: kkt_residual(problem, state, &spec.alphas, spec.beta)?,
        step_norm_sq: state.step_norm_sq(),
        inner_unconverged: run.trace.inner_unconverged,
        rate: rate_report(&run.trace.step_norms())
            .ok()
            .as_ref()
            .map(RateSummary::from),
        x: small.then(|| state.x().to_vec()),
        y: small.then(|| state.y().to_vec()),
    };
    write_json(&out.join("summary.json"), &summary)?;
    if let Loaded::Mri(inst) = &loaded {
        let u: Vec<f64> = state.y().iter().map(|v| -v).collect();
        let (d1, d2) = (inst.cfg.d1, inst.cfg.d2);
        write_with(&out.join("recovered.pgm"), |w| {
            mri::write_pgm(&u, d1, d2, inst.cfg.intensity_scale, w)
        })?;
    }
    write_manifest(&out, "solve", &cfg, std::slice::from_ref(&cert))?;
    println!(
        "{}: {} iterations, converged {}, kkt {:.3e}, objective {:.9e} -> {}",
        summary.family,
        summary.iterations,
        summary.converged,
        summary.kkt,
        summary.objective,
        out.display()
    );
    Ok(Outcome::Success)
}

fn slug(label: &str) -> String {
    let s: String = label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                '_'
            }
        })
        .collect();
    s.trim_matches('_').to_string()
}

fn print_table(title: &str, table: &[TableEntry]) {
    println!("{title}");
    for e in table {
        let cell = match (e.iterations, e.psnr_db) {
            (Some(k), Some(p)) => format!("({k}, {p:.2})"),
            _ => "-".to_string(),
        };
        println!("  {:<8} {:<8e} {cell}", e.family, e.epsilon);
    }
}

pub fn mri(c: &Common) -> Result<Outcome, CliError> {
    let (mut cfg, loaded) = prepare(c)?;
    let Loaded::Mri(inst) = &loaded else {
        return Err(CliError::Usage(
            "the mri command needs an `mri` problem".into(),
        ));
    };
    let families = match (&c.family, &cfg.families, &cfg.family) {
        (Some(_), _, Some(f)) => vec![f.clone()],
        (None, Some(fs), _) => fs.clone(),
        (None, None, Some(f)) => vec![f.clone()],
        _ => vec![
            Family::PdDualFirst,
            Family::LadmmDirect,
            Family::TwoStepExplicit,
        ],
    };
    if families.is_empty() {
        return Err(CliError::Usage("`families` must not be empty".into()));
    }
    cfg.families = Some(families.clone());
    let out = out_dir(&cfg)?;
    let certs = families
        .iter()
        .map(|f| certificate(&loaded, &inst.spec_for(f)))
        .collect::<Result<Vec<_>, _>>()?;

    let (d1, d2) = (inst.cfg.d1, inst.cfg.d2);
    let white = inst.cfg.intensity_scale;
    write_with(&out.join("phantom.pgm"), |w| {
        mri::write_pgm(&inst.phantom, d1, d2, white, w)
    })?;
    write_with(&out.join("phantom.csv"), |w| {
        mri::write_image_csv(&inst.phantom, d1, d2, w)
    })?;
    write_with(&out.join("mask.txt"), |w| mri::write_mask(inst.mask(), w))?;

    let fstar_iters = inst.cfg.fstar_iterations();
    eprintln!(
        "{d1}x{d2}, {} lines, {:.2}% sampled; estimating F* with {fstar_iters} LADMM iterations",
        inst.cfg.n_lines,
        100.0 * inst.sampling_ratio()
    );
    let f_star = mri::estimate_fstar(inst, fstar_iters)?;
    let report: BenchmarkReport = mri::benchmark(inst, &families, f_star)?;
    for run in &report.runs {
        let s = slug(&run.label);
        write_with(&out.join(format!("recovered_{s}.pgm")), |w| {
            mri::write_pgm(&run.image, d1, d2, white, w)
        })?;
        write_with(&out.join(format!("recovered_{s}.csv")), |w| {
            mri::write_image_csv(&run.image, d1, d2, w)
        })?;
        let err = mri::error_image(inst, &run.image);
        write_with(&out.join(format!("error_{s}.csv")), |w| {
            mri::write_image_csv(&err, d1, d2, w)
        })?;
        write_with(&out.join(format!("metrics_{s}.csv")), |w| {
            mri::write_metrics_csv(&run.trace, w, true)
        })?;
    }
    write_with(&out.join("table_eps1.csv"), |w| {
        mri::write_table_csv(&report.eps1_table, w, true)
    })?;
    write_with(&out.join("table_eps2.csv"), |w| {
        mri::write_table_csv(&report.eps2_table, w, true)
    })?;
    write_json(&out.join("report.json"), &report)?;
    write_manifest(&out, "mri", &cfg, &certs)?;

    println!("F* = {f_star:.10e}");
    print_table("eps1: (first iteration, PSNR dB)", &report.eps1_table);
    print_table("eps2: (first iteration, PSNR dB)", &report.eps2_table);
    println!("artifacts in {}", out.display());
    Ok(Outcome::Success)
}

#[derive(Serialize)]
struct RateOutput {
    family: String,
    reference: String,
    steps: RateSummary,
    gap_slope: f64,
    k_times_gap_bounded: bool,
    gap_negative: bool,
}

pub fn rate(c: &Common) -> Result<Outcome, CliError> {
    let (mut cfg, loaded) = prepare(c)?;
    let spec = resolve_spec(&mut cfg, &loaded)?;
    let cert = certificate(&loaded, &spec)?;
    let out = out_dir(&cfg)?;
    let problem = loaded.problem();
    let n = cfg.stop.max_iter;
    let fixed = |max_iter| StopCriteria {
        max_iter,
        eps2_tol: None,
        kkt_tol: None,
        track_kkt: false,
    };
    let (query, reference) = match &cfg.reference {
        Some(r) => (GapQuery::at(r.x.clone(), r.y.clone()), "config".to_string()),
        None => {
            let long = engine::solve(
                problem,
                &spec,
                loaded.initial_state(),
                &fixed(10 * n),
                |_, _| Control::Continue,
            )?;
            (
                GapQuery::from_state(&long.state),
                format!("iterate {} of the same run", 10 * n),
            )
        }
    };
    let mut tracker = GapTracker::new(problem, n, 8);
    let mut failure = None;
    let run = engine::solve(
        problem,
        &spec,
        loaded.initial_state(),
        &fixed(n),
        |st, _| {
            if st.k() >= 2 {
                if let Err(e) = tracker.observe(st, &query, problem) {
                    failure = Some(e);
                    return Control::Stop;
                }
            }
            Control::Continue
        },
    )?;
    if let Some(e) = failure {
        return Err(e.into());
    }
    let steps = rate_report(&run.trace.step_norms())?;
    let gap = tracker.report();
    write_with(&out.join("rate.csv"), |w| {
        write_rate_csv(&steps, Some(&gap), w)
    })?;
    let summary = RateOutput {
        family: spec.family.to_string(),
        reference,
        steps: RateSummary::from(&steps),
        gap_slope: gap.slope,
        k_times_gap_bounded: gap.k_times_gap_bounded,
        gap_negative: gap.negative,
    };
    write_json(&out.join("rate.json"), &summary)?;
    write_manifest(&out, "rate", &cfg, std::slice::from_ref(&cert))?;
    println!(
        "{}: c_k bounded {}, k*min vanishing {}, gap slope {:.3} -> {}",
        summary.family,
        summary.steps.bounded,
        summary.steps.vanishing,
        summary.gap_slope,
        out.display()
    );
    Ok(Outcome::Success)
}
