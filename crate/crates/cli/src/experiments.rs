//! Experiment drivers: each one calls the engines, then collects results,
//! tables, plots and named assertions.

use nevlab::divisor::{DivisorSum, WeilSpec};
use nevlab::expr::{format_rational, parse_rational};
use nevlab::nevanlinna::{defect_from_rows, nev_report, nev_rows, RGrid};
use nevlab::nevconst::{bundled_candidates, nev_upper_bound, smt_full_check, stratify, NevTriple};
use nevlab::smt::{calculus_lemma_report, cartan_smt_report, derivative_growth_check, ldl_report, InequalityTrace};
use nevlab::stochastic::{mc_nevanlinna, occupation_estimates, occupation_quadrature, Functional};
use nevlab::surface::{green_lower_bound_check, jacobi_solve, ProfileKind, SurfaceModel};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Kernel, PolicySpec, Resolved, Task};
use crate::error::{CliError, Result};
use crate::svg::{flag_intervals, PlotSpec, Series};
use crate::table::{flag, num, opt, Table};

/// A named check; any failure gives exit code 2.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Assertion {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }
}

/// Which random streams a run consumed.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct RngAccounting {
    pub generator: &'static str,
    pub seed: u64,
    /// Paths per radius; path `i` uses stream `i` (or `i/2` with antithetic pairs).
    pub paths_per_radius: usize,
    pub radii: usize,
    pub antithetic: bool,
    /// Every radius reuses the same streams.
    pub total_paths: usize,
}

impl RngAccounting {
    fn new(policy: &PolicySpec, radii: usize) -> Self {
        Self {
            generator: "ChaCha8",
            seed: policy.seed,
            paths_per_radius: policy.n_paths,
            radii,
            antithetic: policy.antithetic,
            total_paths: policy.n_paths * radii,
        }
    }
}

pub struct Plot {
    pub name: String,
    pub spec: PlotSpec,
    pub series: Vec<Series>,
}

pub struct Outcome {
    pub results: Value,
    pub tables: Vec<Table>,
    pub plots: Vec<Plot>,
    pub assertions: Vec<Assertion>,
    pub rng: Option<RngAccounting>,
}

fn engine<T>(context: &str, r: nevlab::error::Result<T>) -> Result<T> {
    r.map_err(|e| CliError::engine(context, e))
}

/// `(mean − exact)/stderr`, with the standard error floored at a relative
/// 1e-12 so that estimators without variance compare at rounding level.
fn zscore(mean: f64, stderr: f64, exact: f64) -> f64 {
    (mean - exact) / stderr.max(1e-12 * exact.abs().max(1.0))
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

fn grid_of(res: &Resolved) -> &RGrid {
    res.grid.as_ref().expect("resolve builds a grid for grid experiments")
}

fn trace_table(name: &str, trace: &InequalityTrace) -> Table {
    Table::parse(name, &trace.to_csv()).expect("trace CSV is well formed")
}

/// Plot of one trace column against r with flagged rows shaded.
fn trace_plot(name: &str, trace: &InequalityTrace, column: &str, title: &str, reference: Option<f64>) -> Plot {
    let xs: Vec<f64> = trace.rows.iter().map(|r| r.r).collect();
    let flags: Vec<bool> = trace.rows.iter().map(|r| r.flag.is_some()).collect();
    let ys: Vec<f64> = trace
        .rows
        .iter()
        .map(|r| match column {
            "ratio" => r.ratio.unwrap_or(f64::NAN),
            "rhs_margin" => r.rhs_margin,
            "lhs" => r.lhs,
            _ => r.extra.get(column).copied().unwrap_or(f64::NAN),
        })
        .collect();
    Plot {
        name: name.into(),
        spec: PlotSpec {
            title: title.into(),
            x_label: "r".into(),
            y_label: column.into(),
            log_x: true,
            shaded: flag_intervals(&xs, &flags, true),
            reference,
            ..PlotSpec::default()
        },
        series: vec![Series { label: column.into(), points: xs.into_iter().zip(ys).collect() }],
    }
}

fn violation_assertion(name: &str, trace: &InequalityTrace) -> Assertion {
    let v = trace.violations();
    let detail = match v.first() {
        None => format!(
            "{} of {} rows unflagged; smallest rhs_margin {}",
            trace.unflagged().count(),
            trace.rows.len(),
            trace.min_unflagged_rhs_margin().map_or("n/a".into(), num)
        ),
        Some(row) => format!(
            "{} unflagged rows violate the bound; first at r = {}: rhs_margin {} < -slack {}",
            v.len(),
            row.r,
            row.rhs_margin,
            row.slack
        ),
    };
    Assertion::new(name, v.is_empty(), detail)
}

pub fn execute(res: &Resolved) -> Result<Outcome> {
    match &res.task {
        Task::Fmt { curve, spec, tolerance } => fmt(res, curve, spec, *tolerance),
        Task::Ldl { psi, field, k, derivative_growth } => {
            let grid = grid_of(res);
            let delta = res.config.policy.delta;
            let trace = engine("ldl", ldl_report(psi, field, *k, &res.surface, grid, delta))?;
            let mut tables = vec![trace_table("ldl", &trace)];
            let mut plots = vec![
                trace_plot("ldl_ratio", &trace, "ratio", "logarithmic derivative lemma: lhs / rhs", Some(1.0)),
                trace_plot("ldl_margin", &trace, "rhs_margin", "logarithmic derivative lemma: rhs - lhs", Some(0.0)),
            ];
            let mut assertions = vec![violation_assertion("ldl.bound", &trace)];
            let mut results = json!({ "function": psi.num().to_string() + " / " + &psi.den().to_string(), "trace": to_value(&trace) });
            if *derivative_growth {
                let g = engine("derivative growth", derivative_growth_check(psi, field, *k, &res.surface, grid, delta))?;
                tables.push(trace_table("derivative_growth", &g));
                plots.push(trace_plot("derivative_growth_ratio", &g, "ratio", "T(r, X^k psi) / (2^k T(r, psi))", Some(1.0)));
                assertions.push(violation_assertion("derivative_growth.bound", &g));
                results["derivative_growth"] = to_value(&g);
            }
            Ok(Outcome { results, tables, plots, assertions, rng: None })
        }
        Task::Calculus { kernel, ratio_bound } => calculus(res, kernel, *ratio_bound),
        Task::Cartan { curve, hyperplanes, norm, defects, defect_tolerance } => {
            let grid = grid_of(res);
            let trace = engine(
                "cartan",
                cartan_smt_report(curve, hyperplanes, *norm, &res.surface, grid, res.config.policy.delta),
            )?;
            let mut tables = vec![trace_table("cartan", &trace)];
            let mut plots = vec![trace_plot("cartan_margin", &trace, "rhs_margin", "Cartan bound: rhs - lhs", Some(0.0))];
            let mut assertions = vec![violation_assertion("cartan.bound", &trace)];
            let mut results = json!({ "curve": curve.to_string(), "trace": to_value(&trace) });
            if *defects {
                let n = curve.n();
                let mut per = Vec::new();
                let mut cols: Vec<Vec<f64>> = Vec::new();
                for (i, h) in hyperplanes.iter().enumerate() {
                    let spec = WeilSpec::new(DivisorSum::single(h.clone()), *norm);
                    let rows = engine(&format!("cartan.defect[{i}]"), nev_rows(curve, &spec, &res.surface, grid))?;
                    let rep = engine(&format!("cartan.defect[{i}]"), defect_from_rows(&rows, 1))?;
                    let last = rows.last().and_then(|r| r.defect_ratio).unwrap_or(f64::NAN);
                    cols.push(rows.iter().map(|r| r.defect_ratio.unwrap_or(f64::NAN)).collect());
                    per.push(json!({ "hyperplane": h.to_string(), "ratio_at_r_max": last, "estimate": to_value(&rep) }));
                }
                let sum: f64 = cols.iter().map(|c| c.last().copied().unwrap_or(f64::NAN)).sum();
                let allowed = (n + 1) as f64 + defect_tolerance;
                assertions.push(Assertion::new(
                    "cartan.defect_sum",
                    sum <= allowed,
                    format!("sum of m/T at r = {} is {sum}, allowed {allowed}", grid.r_max()),
                ));
                let mut names = vec!["r".to_string()];
                names.extend((0..hyperplanes.len()).map(|i| format!("delta_{i}")));
                names.push("sum".into());
                let mut t = Table { name: "cartan_defects".into(), columns: names, rows: Vec::new() };
                for (j, &r) in grid.radii().iter().enumerate() {
                    let mut row = vec![num(r)];
                    row.extend(cols.iter().map(|c| num(c[j])));
                    row.push(num(cols.iter().map(|c| c[j]).sum()));
                    t.rows.push(row);
                }
                tables.push(t);
                plots.push(Plot {
                    name: "cartan_defects".into(),
                    spec: PlotSpec {
                        title: "m/T per hyperplane".into(),
                        x_label: "r".into(),
                        y_label: "m/T".into(),
                        log_x: true,
                        reference: Some(1.0),
                        ..PlotSpec::default()
                    },
                    series: hyperplanes
                        .iter()
                        .zip(&cols)
                        .map(|(h, c)| Series { label: h.to_string(), points: grid.radii().iter().copied().zip(c.iter().copied()).collect() })
                        .collect(),
                });
                results["defects"] = json!({ "per_hyperplane": per, "sum_at_r_max": sum });
            }
            Ok(Outcome { results, tables, plots, assertions, rng: None })
        }
        Task::Smt { curve, spec, d_l, bound, k_max, veronese_degree } => {
            let grid = grid_of(res);
            let mut results = json!({ "curve": curve.to_string(), "divisor": spec.divisor.to_string() });
            let mut assertions = Vec::new();
            let (b, default_degree) = match bound {
                Some(text) => (engine("smt.bound", parse_rational(text))?, *d_l),
                None => {
                    let cands = engine("smt bundled candidates", bundled_candidates(&spec.divisor, *d_l, *k_max))?;
                    let nb = nev_upper_bound(&spec.divisor, &cands);
                    results["nev"] = to_value(&nb);
                    let best = nb.best.as_ref().and_then(|l| cands.iter().find(|c| &c.label == l));
                    match (nb.exact, best) {
                        (Some(v), Some(t)) => {
                            assertions.push(Assertion::new("smt.bound_certified", true, format!("Nev ≤ {}", format_rational(&v))));
                            (v, t.k * t.d_l)
                        }
                        _ => {
                            assertions.push(Assertion::new("smt.bound_certified", false, nb.explanation.clone()));
                            return Ok(Outcome { results, tables: Vec::new(), plots: Vec::new(), assertions, rng: None });
                        }
                    }
                }
            };
            let degree = veronese_degree.unwrap_or(default_degree.max(1));
            let trace = engine(
                "smt",
                smt_full_check(curve, spec, *d_l, &b, degree, &res.surface, grid, res.config.policy.delta),
            )?;
            assertions.push(violation_assertion("smt.bound", &trace));
            if let Some(borel) = &trace.borel {
                assertions.push(Assertion::new(
                    "smt.exceptional_measure",
                    borel.within_bound(),
                    format!("flagged measure {} against 1/δ + resolution = {}", borel.measure, borel.bound + borel.resolution),
                ));
            }
            results["bound"] = json!(format_rational(&b));
            results["veronese_degree"] = json!(degree);
            results["trace"] = to_value(&trace);
            Ok(Outcome {
                results,
                tables: vec![trace_table("smt", &trace)],
                plots: vec![
                    trace_plot("smt_margin", &trace, "rhs_margin", "main theorem: rhs - lhs", Some(0.0)),
                    trace_plot("smt_ratio", &trace, "ratio", "m / T", None),
                ],
                assertions,
                rng: None,
            })
        }
        Task::Nev { divisor, d_l, bundled, k_max, candidates, expect_at_most } => {
            nev(divisor, *d_l, *bundled, *k_max, candidates, expect_at_most.as_deref())
        }
        Task::McValidate { kernels, radii, exit_tolerance } => mc_validate(res, kernels, radii, *exit_tolerance),
        Task::SurfaceValidate(spec) => surface_validate(res, spec),
    }
}

fn fmt(res: &Resolved, curve: &nevlab::holo::ProjectiveCurve, spec: &WeilSpec, tolerance: f64) -> Result<Outcome> {
    let grid = grid_of(res);
    let report = engine("fmt", nev_report(curve, spec, &res.surface, grid))?;
    let policy = &res.config.policy;
    let mc = if res.config.engine.uses_mc() {
        Some(
            report
                .rows
                .iter()
                .map(|row| engine(&format!("fmt mc at r = {}", row.r), mc_nevanlinna(curve, spec, &res.surface, row.r, &policy.path_policy(row.rho))))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    let mut cols = vec!["r", "rho", "T", "m", "N", "residual", "defect_ratio", "flagged"];
    if mc.is_some() {
        cols.extend(["T_fs", "T_fs_mc", "T_fs_mc_stderr", "m_mc", "m_mc_stderr"]);
    }
    let mut t = Table::new("fmt", &cols);
    let mut assertions = vec![Assertion::new(
        "fmt.residual_oscillation",
        report.residual_oscillation < tolerance,
        format!("max - min of T - m - N is {} (tolerance {tolerance})", report.residual_oscillation),
    )];
    let mut worst: Option<(f64, f64)> = None;
    for (i, row) in report.rows.iter().enumerate() {
        let mut cells = vec![
            num(row.r),
            num(row.rho),
            num(row.t),
            num(row.m),
            num(row.n),
            num(row.residual),
            opt(row.defect_ratio),
            flag(row.boundary_flag),
        ];
        if let Some(mc) = &mc {
            let e = &mc[i];
            cells.extend([num(row.t_fs), num(e.t.mean), num(e.t.stderr), num(e.m.mean), num(e.m.stderr)]);
            for (est, exact) in [(e.t, row.t_fs), (e.m, row.m)] {
                let z = zscore(est.mean, est.stderr, exact).abs();
                if worst.is_none_or(|(w, _)| z > w) {
                    worst = Some((z, row.r));
                }
            }
        }
        t.push(cells);
    }
    if let Some((z, r)) = worst {
        assertions.push(Assertion::new(
            "fmt.mc_agreement",
            z <= policy.sigmas,
            format!("largest |MC - quadrature| is {z:.3} stderr (at r = {r}); allowed {}", policy.sigmas),
        ));
    }
    let xs: Vec<f64> = report.rows.iter().map(|r| r.r).collect();
    let flags: Vec<bool> = report.rows.iter().map(|r| r.boundary_flag).collect();
    let shaded = flag_intervals(&xs, &flags, true);
    let plots = vec![
        Plot {
            name: "fmt_residual".into(),
            spec: PlotSpec {
                title: format!("T - m - N for {curve}"),
                x_label: "r".into(),
                y_label: "residual".into(),
                log_x: true,
                shaded: shaded.clone(),
                ..PlotSpec::default()
            },
            series: vec![Series { label: "residual".into(), points: report.rows.iter().map(|r| (r.r, r.residual)).collect() }],
        },
        Plot {
            name: "fmt_defect".into(),
            spec: PlotSpec {
                title: format!("m/T for {curve}"),
                x_label: "r".into(),
                y_label: "defect_ratio".into(),
                log_x: true,
                shaded,
                reference: Some(1.0),
                ..PlotSpec::default()
            },
            series: vec![Series {
                label: "m/T".into(),
                points: report.rows.iter().map(|r| (r.r, r.defect_ratio.unwrap_or(f64::NAN))).collect(),
            }],
        },
    ];
    let rng = mc.as_ref().map(|_| RngAccounting::new(policy, report.rows.len()));
    let mut results = json!({ "report": to_value(&report) });
    if let Some(mc) = &mc {
        results["mc"] = to_value(mc);
    }
    Ok(Outcome { results, tables: vec![t], plots, assertions, rng })
}

fn calculus(res: &Resolved, kernel: &Kernel, ratio_bound: f64) -> Result<Outcome> {
    let grid = grid_of(res);
    let policy_spec = &res.config.policy;
    let rho_min = engine("grid", res.surface.euclidean_radius(grid.radii()[0]))?;
    let policy = policy_spec.path_policy(rho_min);
    let use_mc = res.config.engine.uses_mc();
    let k = |z: Complex64| kernel.eval(z);
    let trace = engine(
        "calculus",
        calculus_lemma_report(&res.surface, &k, grid, policy_spec.delta, use_mc.then_some(&policy)),
    )?;
    let mut assertions = vec![violation_assertion("calculus.bound", &trace)];
    let max_ratio = trace.max_unflagged_ratio();
    assertions.push(Assertion::new(
        "calculus.ratio",
        max_ratio.is_some_and(|m| m <= ratio_bound),
        format!("largest unflagged ratio {} (bound {ratio_bound})", max_ratio.map_or("n/a".into(), num)),
    ));
    if use_mc {
        let mut worst = (0.0f64, f64::NAN);
        for row in &trace.rows {
            let e = &row.extra;
            for (mean, se, exact) in [
                ("mc_occupation", "mc_occupation_stderr", "occupation"),
                ("mc_boundary", "mc_boundary_stderr", ""),
            ] {
                let target = if exact.is_empty() { Some(row.lhs) } else { e.get(exact).copied() };
                if let (Some(m), Some(s), Some(x)) = (e.get(mean), e.get(se), target) {
                    let z = zscore(*m, *s, x).abs();
                    if z > worst.0 || worst.1.is_nan() {
                        worst = (z, row.r);
                    }
                }
            }
        }
        assertions.push(Assertion::new(
            "calculus.mc_agreement",
            worst.0 <= policy_spec.sigmas,
            format!("largest |MC - quadrature| is {:.3} stderr (at r = {}); allowed {}", worst.0, worst.1, policy_spec.sigmas),
        ));
    }
    Ok(Outcome {
        results: json!({ "kernel": format!("{kernel:?}"), "trace": to_value(&trace) }),
        tables: vec![trace_table("calculus", &trace)],
        plots: vec![
            trace_plot("calculus_ratio", &trace, "ratio", "calculus lemma: lhs / rhs", None),
            trace_plot("calculus_plain_ratio", &trace, "plain_ratio", "E[k(X_tau)] / (E[int k] e^{r sqrt(-kappa)} log r)", None),
        ],
        assertions,
        rng: use_mc.then(|| RngAccounting::new(policy_spec, grid.radii().len())),
    })
}

fn nev(
    divisor: &DivisorSum,
    d_l: u32,
    bundled: bool,
    k_max: u32,
    explicit: &[crate::config::ParsedCandidate],
    expect_at_most: Option<&str>,
) -> Result<Outcome> {
    let strata = engine("nev stratification", stratify(divisor, divisor.n()))?;
    let mut cands: Vec<NevTriple> = if bundled { engine("nev bundled candidates", bundled_candidates(divisor, d_l, k_max))? } else { Vec::new() };
    cands.extend(explicit.iter().map(|c| c.triple.clone()));
    let nb = nev_upper_bound(divisor, &cands);
    let mut assertions = vec![Assertion::new("nev.certified", nb.exact.is_some(), nb.explanation.clone())];
    if let Some(limit) = expect_at_most {
        let limit_v = engine("nev.expect_at_most", parse_rational(limit))?;
        let ok = nb.exact.as_ref().is_some_and(|v| *v <= limit_v);
        assertions.push(Assertion::new(
            "nev.expect_at_most",
            ok,
            format!("certified bound {} against {limit}", nb.value.as_deref().unwrap_or("+inf")),
        ));
    }
    for c in explicit {
        if let Some(expect) = c.expect_pass {
            let outcome = nb.outcomes.iter().find(|o| o.label == c.triple.label);
            let passed = outcome.and_then(|o| o.certificate.as_ref()).is_some_and(|cert| cert.pass);
            let detail = match outcome {
                Some(o) => match (&o.certificate, &o.error) {
                    (Some(cert), _) if cert.violations.is_empty() => format!("verified: dim V / mu = {}", cert.bound),
                    (Some(cert), _) => cert.violations.join("; "),
                    (None, Some(e)) => e.clone(),
                    (None, None) => "no outcome".into(),
                },
                None => "candidate missing".into(),
            };
            assertions.push(Assertion::new(format!("nev.candidate[{}]", c.triple.label), passed == expect, detail));
        }
    }
    let mut summary = Table::new("nev", &["label", "k", "dim_v", "mu", "bound", "pass", "violations", "error"]);
    let mut entries = Table::new("nev_certificates", &["label", "stratum", "component", "order_sum", "required", "margin", "pass"]);
    for o in &nb.outcomes {
        match (&o.certificate, &o.error) {
            (Some(c), _) => {
                summary.push(vec![
                    c.label.clone(),
                    c.k.to_string(),
                    c.dim_v.to_string(),
                    c.mu.clone(),
                    c.bound.clone(),
                    flag(c.pass),
                    c.violations.len().to_string(),
                    String::new(),
                ]);
                for e in &c.entries {
                    entries.push(vec![
                        c.label.clone(),
                        format!("{{{}}}", e.stratum.join(", ")),
                        e.component.clone(),
                        e.order_sum.to_string(),
                        e.required.clone(),
                        e.margin.clone(),
                        flag(e.pass),
                    ]);
                }
            }
            (None, e) => summary.push(vec![
                o.label.clone(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                flag(false),
                String::new(),
                e.clone().unwrap_or_default(),
            ]),
        }
    }
    let strata_labels: Vec<Vec<String>> = strata.strata.iter().map(|s| strata.label(&s.members)).collect();
    Ok(Outcome {
        results: json!({ "divisor": divisor.to_string(), "strata": strata_labels, "nev": to_value(&nb) }),
        tables: vec![summary, entries],
        plots: Vec::new(),
        assertions,
        rng: None,
    })
}

fn mc_validate(res: &Resolved, kernels: &[(String, Kernel)], radii: &[f64], exit_tolerance: f64) -> Result<Outcome> {
    let s = &res.surface;
    let policy_spec = &res.config.policy;
    let one = |_: Complex64| 1.0;
    let closures: Vec<Box<dyn Fn(Complex64) -> f64 + Sync + '_>> =
        kernels.iter().map(|(_, k)| Box::new(move |z: Complex64| k.eval(z)) as Box<dyn Fn(Complex64) -> f64 + Sync>).collect();
    let mut phis: Vec<Functional<'_>> = closures.iter().map(|c| c.as_ref() as Functional<'_>).collect();
    phis.push(&one);
    let mut table = Table::new("mc_validate", &["r", "functional", "quadrature", "mc", "stderr", "delta", "z"]);
    let mut exits = Table::new("mc_exit_time", &["r", "mean", "stderr", "bound", "margin", "abandoned", "mean_steps"]);
    let mut series: Vec<Series> = kernels.iter().map(|(n, _)| Series { label: n.clone(), points: Vec::new() }).collect();
    let mut assertions = Vec::new();
    let mut per_radius = Vec::new();
    for &r in radii {
        let rho = engine("mc_validate", s.euclidean_radius(r))?;
        let policy = policy_spec.path_policy(rho);
        let batch = engine(&format!("mc_validate at r = {r}"), occupation_estimates(s, &phis, r, &policy))?;
        let mut rows = Vec::new();
        for (j, (name, _)) in kernels.iter().enumerate() {
            let quad = engine(
                &format!("quadrature of {name} at r = {r}"),
                occupation_quadrature(s, phis[j], r, &res.config.quadrature),
            )?;
            let est = batch.estimates[j];
            let delta = est.mean - quad;
            let z = zscore(est.mean, est.stderr, quad);
            table.push(vec![num(r), name.clone(), num(quad), num(est.mean), num(est.stderr), num(delta), num(z)]);
            series[j].points.push((r, z));
            assertions.push(Assertion::new(
                format!("mc.agreement[{name} @ r={r}]"),
                z.abs() <= policy_spec.sigmas,
                format!("delta {delta:e} is {z:.3} stderr; allowed {}", policy_spec.sigmas),
            ));
            rows.push(json!({ "functional": name, "quadrature": quad, "mc": est, "delta": delta }));
        }
        let tau = batch.surface_time;
        let bound = 0.5 * r * r;
        exits.push(vec![
            num(r),
            num(tau.mean),
            num(tau.stderr),
            num(bound),
            num(bound - tau.mean),
            batch.abandoned.to_string(),
            num(batch.mean_steps),
        ]);
        if s.is_flat() {
            let rel = (tau.mean - bound).abs() / bound;
            assertions.push(Assertion::new(
                format!("mc.exit_time[r={r}]"),
                rel <= exit_tolerance,
                format!("E[tau] = {} against r^2/2 = {bound}: relative error {rel:e} (allowed {exit_tolerance})", tau.mean),
            ));
        } else {
            assertions.push(Assertion::new(
                format!("mc.exit_margin[r={r}]"),
                bound - tau.mean > 0.0,
                format!("r^2/2 - E[tau] = {:e} (stderr {:e})", bound - tau.mean, tau.stderr),
            ));
        }
        per_radius.push(json!({
            "r": r,
            "rho": rho,
            "base_step": policy.base_step,
            "functionals": rows,
            "exit_time": tau,
            "abandoned": batch.abandoned,
            "mean_steps": batch.mean_steps,
            "max_exit_offset": batch.max_exit_offset,
        }));
    }
    Ok(Outcome {
        results: json!({ "radii": per_radius }),
        tables: vec![table, exits],
        plots: vec![Plot {
            name: "mc_validate".into(),
            spec: PlotSpec {
                title: "(MC - quadrature) / stderr".into(),
                x_label: "r".into(),
                y_label: "z".into(),
                reference: Some(0.0),
                ..PlotSpec::default()
            },
            series,
        }],
        assertions,
        rng: Some(RngAccounting::new(policy_spec, radii.len())),
    })
}

/// Closed forms of `ρ_e(r)` and `G(r)` where the profile has them.
fn closed_forms(s: &SurfaceModel, r: f64) -> Option<(f64, f64)> {
    match s.profile.kind() {
        ProfileKind::Euclidean => Some((r, r)),
        ProfileKind::Poincare { a } => Some(((a * r / 2.0).tanh(), (a * r).sinh() / a)),
        ProfileKind::Custom { .. } => None,
    }
}

fn surface_validate(res: &Resolved, spec: &crate::config::SurfaceValidateSpec) -> Result<Outcome> {
    let s = &res.surface;
    let grid = grid_of(res);
    let r_max = grid.r_max();
    let jac = engine("jacobi_solve", jacobi_solve(|t| s.kappa(t).unwrap_or(f64::NEG_INFINITY), r_max, spec.jacobi_tol * 1e-2))?;
    let invariants = jac.check_invariants(spec.jacobi_tol);
    let mut t = Table::new(
        "surface",
        &["r", "rho", "rho_closed", "roundtrip_error", "kappa", "G", "G_closed", "green_infimum"],
    );
    let (mut worst_trip, mut worst_rho, mut worst_g) = (0.0f64, 0.0f64, 0.0f64);
    let mut green_ok = true;
    let mut green = Vec::new();
    for &r in grid.radii() {
        let rho = engine("euclidean_radius", s.euclidean_radius(r))?;
        let back = engine("geodesic_radius", s.geodesic_radius(rho))?;
        let trip = (back - r).abs();
        worst_trip = worst_trip.max(trip);
        let kappa = engine("kappa", s.kappa(r))?;
        let g = jac.eval(r);
        let closed = closed_forms(s, r);
        if let Some((rc, gc)) = closed {
            worst_rho = worst_rho.max((rho - rc).abs());
            worst_g = worst_g.max((g - gc).abs() / gc.abs().max(1.0));
        }
        let inf = if r > spec.eta {
            let rep = engine("green_lower_bound_check", green_lower_bound_check(s, spec.eta, r, spec.samples))?;
            green_ok &= rep.positive;
            let v = rep.infimum;
            green.push(rep);
            Some(v)
        } else {
            None
        };
        t.push(vec![
            num(r),
            num(rho),
            opt(closed.map(|c| c.0)),
            num(trip),
            num(kappa),
            num(g),
            opt(closed.map(|c| c.1)),
            opt(inf),
        ]);
    }
    let mut assertions = vec![
        Assertion::new(
            "surface.roundtrip",
            worst_trip <= spec.roundtrip_tol,
            format!("largest |r(rho(r)) - r| = {worst_trip:e} (allowed {:e})", spec.roundtrip_tol),
        ),
        Assertion::new(
            "surface.jacobi_invariants",
            invariants.is_ok(),
            invariants.clone().err().unwrap_or_else(|| "G(0)=0, G'(0)=1, t ≤ G ≤ t·exp(t√−κ), ∫dt/G ≤ log r".into()),
        ),
        Assertion::new("surface.green_lower_bound", green_ok, format!("{} radii above eta = {} checked", green.len(), spec.eta)),
    ];
    if closed_forms(s, 1.0).is_some() {
        assertions.push(Assertion::new(
            "surface.closed_form_rho",
            worst_rho <= spec.jacobi_tol,
            format!("largest |rho - closed form| = {worst_rho:e} (allowed {:e})", spec.jacobi_tol),
        ));
        assertions.push(Assertion::new(
            "surface.closed_form_jacobi",
            worst_g <= spec.jacobi_tol,
            format!("largest relative |G - closed form| = {worst_g:e} (allowed {:e})", spec.jacobi_tol),
        ));
    }
    let radii = grid.radii();
    let g_series = Series { label: "G".into(), points: radii.iter().map(|&r| (r, jac.eval(r))).collect() };
    let mut g_plot = vec![g_series];
    if closed_forms(s, 1.0).is_some() {
        g_plot.push(Series {
            label: "closed form".into(),
            points: radii.iter().map(|&r| (r, closed_forms(s, r).map_or(f64::NAN, |c| c.1))).collect(),
        });
    }
    Ok(Outcome {
        results: json!({
            "profile": to_value(&s.profile.tag()),
            "jacobi": { "r_max": jac.r_max(), "nodes": jac.grid.len(), "invariants": invariants.err() },
            "green_lower_bound": to_value(&green),
            "max_roundtrip_error": worst_trip,
        }),
        tables: vec![t],
        plots: vec![Plot {
            name: "jacobi".into(),
            spec: PlotSpec {
                title: "Jacobi comparison function".into(),
                x_label: "r".into(),
                y_label: "G".into(),
                log_y: true,
                ..PlotSpec::default()
            },
            series: g_plot,
        }],
        assertions,
        rng: None,
    })
}
