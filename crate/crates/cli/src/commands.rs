use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use num_complex::Complex64 as C;
use serde_json::{json, Value};

use se2lab::analysis::{self, CompareDomain, KernelMethod};
use se2lab::cdft::cdft_inverse;
use se2lab::exact::{self, Approach};
use se2lab::fd_solver::{self, SchemeConfig};
use se2lab::io::{self, Image};
use se2lab::mathieu::{Kind, MathieuParams, MathieuSolution};
use se2lab::oscore;
use se2lab::stochastic::{self, Estimator, TimeLaw, WalkConfig};
use se2lab::{Case, DiffusionParams, Domain, GridSpec, GroupElement, Result, Se2Error, Se2Field};

use crate::args::*;
use crate::Command;

pub fn exit_code(e: &Se2Error) -> u8 {
    if e.is_validation() {
        2
    } else {
        3
    }
}

fn invalid(msg: impl Into<String>) -> Se2Error {
    Se2Error::InvalidParams(msg.into())
}

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Kernel(a) => kernel(a),
        Command::Compare(a) => compare(a),
        Command::CompletionField(a) => completion_field(a),
        Command::Oscore { cmd } => match cmd {
            OscoreCommand::Transform(a) => oscore_transform(a),
            OscoreCommand::Reconstruct(a) => oscore_reconstruct(a),
            OscoreCommand::Enhance(a) => oscore_enhance(a),
        },
        Command::Mathieu { cmd: MathieuCommand::Eval(a) } => mathieu_eval(a),
        Command::Asymptotics(a) => asymptotics(a),
        Command::Rerun { manifest, out } => rerun(&manifest, out),
    }
}

fn rerun(path: &str, out: Option<String>) -> Result<()> {
    let text = std::fs::read_to_string(path)?;
    let v: Value = serde_json::from_str(&text).map_err(|e| Se2Error::Format(format!("{path}: {e}")))?;
    let cmd = v.get("command").cloned().ok_or_else(|| Se2Error::Format(format!("{path}: no command recorded")))?;
    let mut cmd: Command = serde_json::from_value(cmd).map_err(|e| Se2Error::Format(format!("{path}: {e}")))?;
    if let Some(o) = out {
        match &mut cmd {
            Command::Kernel(a) => a.out = o,
            Command::Compare(a) => a.out = o,
            Command::CompletionField(a) => a.out = o,
            Command::Oscore { cmd: OscoreCommand::Transform(a) } => a.out = o,
            Command::Oscore { cmd: OscoreCommand::Reconstruct(a) } => a.out = o,
            Command::Oscore { cmd: OscoreCommand::Enhance(a) } => a.out = o,
            Command::Mathieu { cmd: MathieuCommand::Eval(a) } => a.out = o,
            Command::Asymptotics(a) => a.out = o,
            Command::Rerun { .. } => return Err(Se2Error::Format("manifest records another rerun".into())),
        }
    }
    run(cmd)
}

/// Manifest path for an output file: same stem, `.json`.
fn manifest_path(out: &str) -> String {
    Path::new(out).with_extension("json").to_string_lossy().into_owned()
}

fn write_manifest(path: &str, cmd: &Command, resolved: Value, outputs: &[String]) -> Result<()> {
    let doc = json!({
        "tool": "se2lab",
        "version": env!("CARGO_PKG_VERSION"),
        "command": cmd,
        "resolved": resolved,
        "outputs": outputs,
    });
    let text = serde_json::to_string_pretty(&doc).map_err(|e| Se2Error::Format(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn create(path: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Grid and parameters from the shared flags; `s = auto` is replaced by
/// its value so the returned arguments replay exactly.
fn resolve_model(m: &ModelArgs) -> Result<(GridSpec, DiffusionParams, ModelArgs)> {
    if m.ns < 2 || m.no < 2 {
        return Err(invalid("--Ns and --No must be at least 2"));
    }
    let grid = GridSpec::from_counts(m.ns, m.no)?.with_oversample(m.sigma_oversample)?;
    let p = match m.case {
        CaseArg::Enh => {
            let d = match m.d.as_slice() {
                [] => [1.0, 0.0, 0.08],
                [d11, d22, d33] => [*d11, *d22, *d33],
                _ => return Err(invalid("--D needs three values D11,D22,D33")),
            };
            DiffusionParams::enhancement(d[0], d[2], m.alpha).with_d22(d[1])
        }
        CaseArg::Com => {
            let d33 = match m.d.as_slice() {
                [] => 0.08,
                [d33] => *d33,
                [d11, d22, d33] if *d11 == 0.0 && *d22 == 0.0 => *d33,
                _ => return Err(invalid("completion takes --D D33 or 0,0,D33")),
            };
            DiffusionParams::completion(d33, m.alpha)
        }
    }
    .with_k(m.k);
    let s = if m.s == "auto" {
        exact::default_s(&grid)
    } else {
        m.s.parse::<f64>().map_err(|_| invalid(format!("--s expects a number or auto, got '{}'", m.s)))?
    };
    let p = p.with_s(s);
    p.validate(true)?;
    let mut resolved = m.clone();
    resolved.s = format!("{s:?}");
    resolved.d = vec![p.d11, p.d22, p.d33];
    Ok((grid, p, resolved))
}

fn params_json(p: &DiffusionParams) -> Value {
    json!({
        "D": [p.d11, p.d22, p.d33],
        "a": [p.a1, p.a2, p.a3],
        "alpha": p.alpha,
        "k": p.k,
        "s": p.s,
        "sigma": p.sigma(),
    })
}

fn grid_json(g: &GridSpec) -> Value {
    json!({
        "P": g.p, "Q": g.q, "R": g.r,
        "samples": [g.nx(), g.ny(), g.ntheta()],
        "oversample": g.oversample,
        "length": [g.length_x, g.length_y],
    })
}

fn parse_time_law(s: &str, alpha: f64) -> Result<TimeLaw> {
    let bad = || invalid(format!("--time-law expects exp, gamma:k or fixed:t, got '{s}'"));
    match s.split_once(':') {
        None if s == "exp" => Ok(TimeLaw::Exponential(alpha)),
        Some(("gamma", k)) => Ok(TimeLaw::Gamma { k: k.parse().map_err(|_| bad())?, rate: alpha }),
        Some(("fixed", t)) => Ok(TimeLaw::Fixed(t.parse().map_err(|_| bad())?)),
        _ => Err(bad()),
    }
}

/// Walk settings for a parameter set; random times use the occupation
/// estimator, a fixed time bins the end state.
fn walk_config(p: &DiffusionParams, solver: &SolverArgs) -> Result<WalkConfig> {
    let law = match &solver.time_law {
        Some(s) => parse_time_law(s, p.alpha)?,
        None if p.k == 1 => TimeLaw::Exponential(p.alpha),
        None => TimeLaw::Gamma { k: p.k, rate: p.alpha },
    };
    let est = if matches!(law, TimeLaw::Fixed(_)) { Estimator::EndState } else { Estimator::Killed };
    let cfg = WalkConfig::new(solver.dt.unwrap_or(0.02), solver.paths, law, solver.seed).with_estimator(est);
    cfg.validate(p)?;
    Ok(cfg)
}

fn method_of(name: &str, solver: &SolverArgs) -> Result<KernelMethod> {
    Ok(match name.parse::<KernelMethod>()? {
        KernelMethod::Fbt { .. } => KernelMethod::Fbt { n: solver.fbt_n },
        KernelMethod::FdExplicit { .. } => KernelMethod::FdExplicit { dt: solver.dt.unwrap_or(0.0) },
        KernelMethod::FdImplicit { .. } => KernelMethod::FdImplicit { dt: solver.dt.unwrap_or(0.0) },
        KernelMethod::MonteCarlo { .. } => {
            KernelMethod::MonteCarlo { paths: solver.paths, dt: solver.dt.unwrap_or(0.02), seed: solver.seed }
        }
        m => m,
    })
}

/// Kernel by name, returned with the solver settings actually used.
fn make_kernel(grid: &GridSpec, p: &DiffusionParams, name: &str, solver: &SolverArgs) -> Result<(Se2Field, Value)> {
    let method = method_of(name, solver)?;
    match method {
        KernelMethod::Exact(approach) if p.alpha == 0.0 => {
            eprintln!("warning: α = 0 gives the fundamental solution; its ω = 0 column is a pole and is extrapolated");
            if approach != Approach::ClosedForm {
                eprintln!("warning: the fundamental solution is evaluated in closed form");
            }
            let f = exact::fundamental_solution(grid, p)?;
            let spatial = cdft_inverse(&f.field)?.to_real();
            Ok((spatial, json!({ "method": name, "fundamental": true, "pole_samples": f.flagged.len() })))
        }
        _ if p.alpha == 0.0 => Err(invalid(format!("method {name} needs α > 0"))),
        KernelMethod::FdExplicit { dt } | KernelMethod::FdImplicit { dt } => {
            let explicit = matches!(method, KernelMethod::FdExplicit { .. });
            let base = analysis::default_fd_step(grid, p)?;
            let dt = match (dt > 0.0, explicit) {
                (true, _) => dt,
                (false, true) => base,
                (false, false) => 10.0 * base,
            };
            let cfg = if explicit { SchemeConfig::explicit(dt, 0) } else { SchemeConfig::implicit(dt, 0) };
            let field = fd_solver::resolvent_quadrature(*grid, p, &cfg, solver.tmax)?;
            Ok((field, json!({ "method": name, "dt": dt, "tmax": solver.tmax })))
        }
        KernelMethod::MonteCarlo { .. } => {
            let cfg = walk_config(p, solver)?;
            let field = stochastic::kernel_histogram(&cfg, p, grid)?;
            Ok((
                field,
                json!({
                    "method": name, "dt": cfg.dt, "paths": cfg.n_paths, "seed": cfg.seed,
                    "time_law": format!("{:?}", cfg.time_law), "estimator": format!("{:?}", cfg.estimator),
                }),
            ))
        }
        KernelMethod::Fbt { n } => {
            let field = analysis::build_kernel(grid, p, method)?;
            Ok((field, json!({ "method": name, "n": n.unwrap_or(2 * grid.r) })))
        }
        KernelMethod::Exact(_) => Ok((analysis::build_kernel(grid, p, method)?, json!({ "method": name }))),
    }
}

fn write_field_outputs(field: &Se2Field, prefix: &str) -> Result<Vec<String>> {
    let skf = format!("{prefix}.skf");
    let mut w = create(&skf)?;
    io::write_skf(field, &mut w)?;
    w.flush()?;
    let mut outs = vec![skf];
    if field.domain == Domain::Spatial {
        let pgm = format!("{prefix}.pgm");
        let mut w = create(&pgm)?;
        io::write_pgm(&io::marginal_image(field)?, true, &mut w)?;
        w.flush()?;
        outs.push(pgm);
    }
    Ok(outs)
}

fn kernel(a: KernelArgs) -> Result<()> {
    let (grid, p, model) = resolve_model(&a.model)?;
    let (field, solver) = make_kernel(&grid, &p, &a.method, &a.solver)?;
    let outs = write_field_outputs(&field, &a.out)?;
    let cmd = Command::Kernel(KernelArgs { model, ..a.clone() });
    let resolved = json!({ "grid": grid_json(&grid), "params": params_json(&p), "solver": solver });
    write_manifest(&format!("{}.json", a.out), &cmd, resolved, &outs)
}

fn case_of(c: CaseArg) -> Case {
    match c {
        CaseArg::Enh => Case::Enhancement,
        CaseArg::Com => Case::Completion,
    }
}

fn read_field(path: &str) -> Result<Se2Field> {
    io::read_skf(BufReader::new(File::open(path).map_err(|e| invalid(format!("{path}: {e}")))?))
}

fn compare(a: CompareArgs) -> Result<()> {
    let case = case_of(a.model.case);
    let mut cmd_args = a.clone();
    let (rows, resolved) = if let Some(exact_path) = &a.exact {
        if a.approx.is_empty() {
            return Err(invalid("--exact needs at least one --approx file"));
        }
        let exact = read_field(exact_path)?;
        let approx = a.approx.iter().map(|f| Ok((f.clone(), read_field(f)?))).collect::<Result<Vec<_>>>()?;
        (analysis::compare_report(case, &exact, &approx)?, json!({ "files": true }))
    } else {
        let (grid, p, model) = resolve_model(&a.model)?;
        cmd_args.model = model;
        let resolved = json!({ "grid": grid_json(&grid), "params": params_json(&p) });
        if !a.sigmas.is_empty() {
            let methods = a.methods.iter().map(|m| method_of(m, &a.solver)).collect::<Result<Vec<_>>>()?;
            (analysis::sigma_sweep(&grid, &p, &a.sigmas, &methods)?, resolved)
        } else {
            let (reference, _) = make_kernel(&grid, &p, &a.reference, &a.solver)?;
            let mut approx = Vec::new();
            let mut used = Vec::new();
            for m in &a.methods {
                let (f, s) = make_kernel(&grid, &p, m, &a.solver)?;
                approx.push((m.clone(), f));
                used.push(s);
            }
            let mut resolved = resolved;
            resolved["solvers"] = Value::Array(used);
            (analysis::compare_report(case, &reference, &approx)?, resolved)
        }
    };
    let mut w = create(&a.out)?;
    analysis::write_report_csv(&rows, &mut w)?;
    w.flush()?;
    write_manifest(&manifest_path(&a.out), &Command::Compare(cmd_args), resolved, &[a.out.clone()])
}

fn state(v: &[f64], flag: &str) -> Result<GroupElement> {
    match v {
        [x, y, t] => Ok(GroupElement::new(*x, *y, *t)),
        _ => Err(invalid(format!("--{flag} expects x,y,θ"))),
    }
}

fn completion_field(a: CompletionArgs) -> Result<()> {
    let (grid, p, model) = resolve_model(&a.model)?;
    let (g0, g1) = (state(&a.from, "from")?, state(&a.to, "to")?);
    let cfg = walk_config(&p, &a.solver)?;
    let field = stochastic::completion_field(&p, g0, g1, &grid, &cfg)?;
    let outs = write_field_outputs(&field, &a.out)?;
    let resolved = json!({
        "grid": grid_json(&grid), "params": params_json(&p),
        "walk": { "dt": cfg.dt, "paths": cfg.n_paths, "seed": cfg.seed, "time_law": format!("{:?}", cfg.time_law) },
    });
    let cmd = Command::CompletionField(CompletionArgs { model, ..a.clone() });
    write_manifest(&format!("{}.json", a.out), &cmd, resolved, &outs)
}

fn read_image(path: &str) -> Result<Image> {
    let f = BufReader::new(File::open(path).map_err(|e| invalid(format!("{path}: {e}")))?);
    if path.ends_with(".csv") {
        io::read_csv_matrix(f)
    } else {
        io::read_pgm(f)
    }
}

fn write_image(img: &Image, path: &str) -> Result<()> {
    let mut w = create(path)?;
    if path.ends_with(".csv") {
        io::write_csv_matrix(img, &mut w)?;
    } else {
        io::write_pgm(img, true, &mut w)?;
    }
    w.flush()?;
    Ok(())
}

fn oscore_transform(a: OscoreTransformArgs) -> Result<()> {
    let img = read_image(&a.input)?;
    let spec = oscore::build_wavelets(a.no, a.disk, img.rows, img.cols)?;
    let u = oscore::transform(&img, &spec)?;
    let skf = format!("{}.skf", a.out);
    let mut w = create(&skf)?;
    io::write_skf(&u, &mut w)?;
    w.flush()?;
    let resolved = json!({ "rows": img.rows, "cols": img.cols, "grid": grid_json(&spec.grid) });
    write_manifest(&format!("{}.json", a.out), &Command::Oscore { cmd: OscoreCommand::Transform(a) }, resolved, &[skf])
}

fn oscore_reconstruct(a: OscoreReconstructArgs) -> Result<()> {
    let u = read_field(&a.input)?;
    let g = u.grid;
    let rows = a.rows.unwrap_or(g.ny());
    let cols = a.cols.unwrap_or(g.nx());
    let spec = oscore::build_wavelets(2 * g.r, a.disk, rows, cols)?;
    let img = if a.adjoint { oscore::reconstruct_adjoint(&u, &spec)? } else { oscore::reconstruct(&u, &spec)? };
    write_image(&img, &a.out)?;
    let resolved = json!({ "rows": rows, "cols": cols, "orientations": 2 * g.r });
    let out = a.out.clone();
    write_manifest(&manifest_path(&out), &Command::Oscore { cmd: OscoreCommand::Reconstruct(a) }, resolved, &[out])
}

fn oscore_enhance(a: OscoreEnhanceArgs) -> Result<()> {
    let img = read_image(&a.input)?;
    let spec = oscore::build_wavelets(a.no, a.disk, img.rows, img.cols)?;
    let [d11, d22, d33] = a.d[..] else {
        return Err(invalid("--D needs three values D11,D22,D33"));
    };
    let p = DiffusionParams::enhancement(d11, d33, a.alpha).with_d22(d22).with_s(a.s);
    p.validate(false)?;
    let (kernel, solver) = make_kernel(&spec.grid, &p, &a.method, &a.solver)?;
    let out = oscore::enhance(&img, &spec, &kernel)?;
    write_image(&out, &a.out)?;
    let resolved = json!({ "grid": grid_json(&spec.grid), "params": params_json(&p), "solver": solver });
    let path = a.out.clone();
    write_manifest(&manifest_path(&path), &Command::Oscore { cmd: OscoreCommand::Enhance(a) }, resolved, &[path])
}

fn mathieu_eval(a: MathieuEvalArgs) -> Result<()> {
    if a.n < 2 {
        return Err(invalid("--n must be at least 2"));
    }
    let params = MathieuParams::new(C::new(a.a, a.a_im), C::new(a.q, a.q_im));
    let sol = MathieuSolution::new(params)?;
    let mut w = csv_writer(&a.out)?;
    let cols = ["z", "ce_re", "ce_im", "se_re", "se_im", "me_plus_re", "me_plus_im", "me_minus_re", "me_minus_im"];
    w.write_record(cols).map_err(csv_err)?;
    for i in 0..a.n {
        let z = a.z_from + (a.z_to - a.z_from) * i as f64 / (a.n - 1) as f64;
        let mut rec = vec![format!("{z:e}")];
        for kind in [Kind::Ce, Kind::Se, Kind::MePlus, Kind::MeMinus] {
            let v = sol.eval(C::new(z, 0.0), kind);
            rec.push(format!("{:e}", v.re));
            rec.push(format!("{:e}", v.im));
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    let resolved = json!({ "nu": [sol.nu.re, sol.nu.im], "resonant": sol.resonant, "coefficients": 2 * sol.n + 1 });
    let out = a.out.clone();
    write_manifest(&manifest_path(&out), &Command::Mathieu { cmd: MathieuCommand::Eval(a) }, resolved, &[out])
}

fn csv_writer(path: &str) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).map_err(csv_err)
}

fn csv_err(e: csv::Error) -> Se2Error {
    Se2Error::Format(e.to_string())
}

fn asymptotics(a: AsymptoticsArgs) -> Result<()> {
    let (_, mut p, model) = resolve_model(&a.model)?;
    if a.mode == AsymptoteMode::Fundamental {
        p.alpha = 0.0;
    } else if p.alpha <= 0.0 {
        return Err(invalid("resolvent asymptotics need α > 0"));
    }
    if a.n < 2 || !(a.rho_from > 0.0 && a.rho_to > a.rho_from) {
        return Err(invalid("need 0 < rho-from < rho-to and n ≥ 2"));
    }
    let case = p.validate(true)?;
    let mut w = csv_writer(&a.out)?;
    w.write_record(["rho", "theta", "exact_re", "exact_im", "asymptote_re", "asymptote_im", "rel_err"])
        .map_err(csv_err)?;
    for i in 0..a.n {
        let rho = a.rho_from * (a.rho_to / a.rho_from).powf(i as f64 / (a.n - 1) as f64);
        let exact = exact::kernel_hat_closed_form((rho, 0.0), a.theta, &p)?;
        let asym = match (case, a.mode) {
            (Case::Enhancement, AsymptoteMode::Resolvent) => analysis::asymptote_enhancement(rho, a.theta, &p),
            (Case::Enhancement, AsymptoteMode::Fundamental) => {
                analysis::asymptote_enhancement_fundamental(rho, a.theta, &p)
            }
            (Case::Completion, _) => analysis::asymptote_completion(rho, a.theta, &p),
        };
        let rel = (exact - asym).norm() / exact.norm();
        let rec: Vec<String> =
            [rho, a.theta, exact.re, exact.im, asym.re, asym.im, rel].iter().map(|v| format!("{v:e}")).collect();
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    let resolved = json!({ "params": params_json(&p), "domain": CompareDomain::Fourier.to_string() });
    let out = a.out.clone();
    write_manifest(&manifest_path(&out), &Command::Asymptotics(AsymptoticsArgs { model, ..a }), resolved, &[out])
}
