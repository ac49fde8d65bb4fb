//! The identity suite: runs every configured case on the selected backends
//! and assembles reports in a fixed order.

pub mod checks;
pub mod config;
pub mod report;

use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::backend::Backend;
use crate::error::{Error, Result};
use crate::exact::ExactEngine;
use crate::ground::GroundSpace;
use crate::monte_carlo::{sample_configurations, McEngine};

pub use checks::{CheckOutcome, Expect, Gate, GateKind, Gates, Phi, Route};
pub use config::{CaseSpec, SuiteConfig, DEFAULT_CONFIG};
pub use report::{to_json, CaseInfo, VerificationReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BackendSelection {
    Exact,
    Mc,
    #[default]
    Both,
}

impl BackendSelection {
    fn exact(self) -> bool {
        self != BackendSelection::Mc
    }

    fn mc(self) -> bool {
        self != BackendSelection::Exact
    }
}

impl FromStr for BackendSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Self::Exact),
            "mc" => Ok(Self::Mc),
            "both" => Ok(Self::Both),
            other => Err(Error::Config {
                key: "backend".into(),
                message: format!("expected exact, mc or both, got `{other}`"),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub backends: BackendSelection,
    /// Record wall time per report. Off by default so reruns are byte-identical.
    pub timings: bool,
}

/// SplitMix64 finalizer over `(base, space, case)`; gives every case its own
/// reproducible seed.
pub fn derive_seed(base: u64, space: usize, case: usize) -> u64 {
    let mut z = base
        ^ (space as u64).wrapping_mul(0xD1B5_4A32_D192_ED03)
        ^ (case as u64)
            .wrapping_add(1)
            .wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct SpaceCtx {
    label: &'static str,
    space: GroundSpace,
    exact: Option<Result<ExactEngine>>,
    leak: Option<f64>,
}

struct Job {
    space: usize,
    case: usize,
    route: Route,
}

fn route_name(route: Route) -> &'static str {
    match route {
        Route::Exact => "exact",
        Route::Mc => "mc",
        Route::Pointwise => "pointwise",
    }
}

/// Evaluates one case on one backend.
pub fn run_case(case: &CaseSpec, backend: &dyn Backend, gates: &Gates) -> Result<CheckOutcome> {
    let space = backend.space();
    match case {
        CaseSpec::Mecke { u } => checks::mecke_check(&u.build(space)?, backend, gates),
        CaseSpec::Duality { f, u } => {
            checks::duality_check(&f.build(space)?, &u.build(space)?, backend, gates)
        }
        CaseSpec::Skorokhod { u } => checks::skorokhod_check(&u.build(space)?, backend, gates),
        CaseSpec::EnergyDerivation { f, g, u } => checks::energy_derivation_check(
            &f.build(space)?,
            &g.build(space)?,
            &u.build(space)?,
            backend,
            gates,
        ),
        CaseSpec::GammaRepresentation { f, phi } => {
            checks::gamma_representation_check(&f.build(space)?, &phi.build(space)?, backend, gates)
        }
        CaseSpec::GammaFormBound { f, phi } => {
            checks::gamma_form_bound_check(&f.build(space)?, &phi.build(space)?, backend, gates)
        }
        CaseSpec::BracketExpectation { u, v } => {
            checks::bracket_expectation_check(&u.build(space)?, &v.build(space)?, backend, gates)
        }
        CaseSpec::ChainRule { phi, f, g, expect } => checks::chain_rule_check(
            *phi,
            &f.build(space)?,
            &g.build(space)?,
            *expect,
            backend,
            gates,
        ),
        CaseSpec::Commutation { .. }
        | CaseSpec::ProductFormula { .. }
        | CaseSpec::NonDiffusion { .. } => Err(Error::Binding(format!(
            "{} does not run on a backend",
            case.identity()
        ))),
    }
}

fn run_job(
    cfg: &SuiteConfig,
    ctx: &SpaceCtx,
    job: &Job,
    opts: &RunOptions,
) -> (VerificationReport, Option<CheckOutcome>) {
    let case = &cfg.cases[job.case];
    let info = CaseInfo {
        index: job.case,
        identity: case.identity().to_string(),
        space: ctx.label.to_string(),
        weights: ctx.space.weights().to_vec(),
        bindings: case.bindings(),
    };
    let start = Instant::now();
    let mut seed = None;
    let outcome: Result<CheckOutcome> = match job.route {
        Route::Pointwise => {
            let s = derive_seed(cfg.pointwise.seed, job.space, job.case);
            seed = Some(s);
            let configs = sample_configurations(&ctx.space, s, cfg.pointwise.points);
            match case {
                CaseSpec::Commutation { u } => u
                    .build(&ctx.space)
                    .map(|u| checks::commutation_check(&ctx.space, &u, &configs, &cfg.gates)),
                CaseSpec::ProductFormula { f, u } => f.build(&ctx.space).and_then(|f| {
                    let u = u.build(&ctx.space)?;
                    Ok(checks::product_formula_check(
                        &ctx.space, &f, &u, &configs, &cfg.gates,
                    ))
                }),
                _ => unreachable!("only pointwise cases are routed here"),
            }
        }
        Route::Exact => match ctx.exact.as_ref().expect("exact engine requested") {
            Err(e) => Err(e.clone()),
            Ok(engine) => match case {
                CaseSpec::NonDiffusion { budget } => {
                    checks::non_diffusion_counterexample(engine, *budget, &cfg.gates)
                }
                _ => run_case(case, engine, &cfg.gates),
            },
        },
        Route::Mc => {
            let s = derive_seed(cfg.mc.seed, job.space, job.case);
            seed = Some(s);
            run_case(
                case,
                &McEngine::new(&ctx.space, cfg.mc.sampler(s)),
                &cfg.gates,
            )
        }
    };
    let elapsed = start.elapsed().as_secs_f64() * 1e3;
    let name = route_name(job.route);
    let (mut report, outcome) = match outcome {
        Ok(o) => (VerificationReport::from_outcome(info, name, &o), Some(o)),
        Err(e) => (VerificationReport::failed(info, name, e.to_string()), None),
    };
    report.seed = seed;
    if job.route == Route::Exact {
        report.boundary_leak = ctx.leak;
    }
    if opts.timings {
        report.wall_time_ms = Some(elapsed);
    }
    (report, outcome)
}

/// Exact and Monte Carlo defects of the same case agree: the mc interval of
/// `mc_z` standard errors, widened by the exact gate, contains the exact defect.
fn cross_report(
    exact: (&VerificationReport, &CheckOutcome),
    mc: (&VerificationReport, &CheckOutcome),
    gates: &Gates,
) -> VerificationReport {
    let (er, eo) = exact;
    let (mr, mo) = mc;
    let se = mo.std_error.unwrap_or(0.0);
    let eb = eo.error_bound.unwrap_or(0.0);
    let gate = Gate {
        kind: GateKind::AtMost,
        value: gates.mc_z * se + gates.exact_abs + eb,
        rule: format!(
            "cross: |mc defect - exact defect| <= {} x std_error + {:e} + truncation bound",
            gates.mc_z, gates.exact_abs
        ),
    };
    let defect = mo.defect - eo.defect;
    VerificationReport {
        case: mr.case.clone(),
        backend: "cross".into(),
        lhs: Some(eo.defect),
        rhs: Some(mo.defect),
        defect: Some(defect),
        pass: gate.admits(defect),
        gate: Some(gate),
        seed: mr.seed,
        n: mr.n,
        state_count: er.state_count,
        tail_bound: er.tail_bound,
        boundary_leak: er.boundary_leak,
        wall_time_ms: None,
        note: None,
        error: None,
    }
}

/// Runs every case of `cfg` on the configured space (and the randomized one,
/// if set). Reports are ordered by space, case index, then backend
/// (`exact`, `mc`, `cross`); a failing check never aborts the suite.
pub fn run_suite(cfg: &SuiteConfig, opts: &RunOptions) -> Result<Vec<VerificationReport>> {
    cfg.validate()?;
    let needs_exact = opts.backends.exact()
        || cfg
            .cases
            .iter()
            .any(|c| matches!(c, CaseSpec::NonDiffusion { .. }));
    let ctxs: Vec<SpaceCtx> = cfg
        .spaces()?
        .into_iter()
        .map(|(label, space)| {
            let exact = needs_exact
                .then(|| ExactEngine::new(&space, cfg.truncation.tol, cfg.truncation.budget));
            let leak = match &exact {
                Some(Ok(e)) => Some(e.table().boundary_leak()),
                _ => None,
            };
            SpaceCtx {
                label,
                space,
                exact,
                leak,
            }
        })
        .collect();

    let mut jobs = Vec::new();
    for space in 0..ctxs.len() {
        for (case, spec) in cfg.cases.iter().enumerate() {
            let routes: Vec<Route> = if spec.is_pointwise() {
                vec![Route::Pointwise]
            } else if matches!(spec, CaseSpec::NonDiffusion { .. }) {
                vec![Route::Exact]
            } else {
                let mut r = Vec::new();
                if opts.backends.exact() {
                    r.push(Route::Exact);
                }
                if opts.backends.mc() {
                    r.push(Route::Mc);
                }
                r
            };
            jobs.extend(routes.into_iter().map(|route| Job { space, case, route }));
        }
    }

    let results: Vec<(VerificationReport, Option<CheckOutcome>)> = jobs
        .par_iter()
        .map(|job| run_job(cfg, &ctxs[job.space], job, opts))
        .collect();

    let mut out = Vec::with_capacity(results.len());
    for (i, (report, outcome)) in results.iter().enumerate() {
        out.push(report.clone());
        let (job, prev) = (&jobs[i], i.checked_sub(1));
        if job.route != Route::Mc {
            continue;
        }
        let Some(p) = prev else { continue };
        let pj = &jobs[p];
        if pj.route == Route::Exact && pj.space == job.space && pj.case == job.case {
            if let (Some(eo), Some(mo)) = (&results[p].1, outcome) {
                out.push(cross_report((&results[p].0, eo), (report, mo), &cfg.gates));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SuiteConfig {
        SuiteConfig::from_json(
            r#"{
              "space": {"weights": [0.5, 1.0, 1.5]},
              "mc": {"seed": 5, "samples": 4000, "workers": 2},
              "pointwise": {"seed": 1, "points": 20},
              "cases": [
                {"identity": "mecke", "u": {"name": "constant", "value": 1.0}},
                {"identity": "commutation", "u": {"name": "site_count", "values": [1, 2, 3]}},
                {"identity": "skorokhod", "u": {"name": "weighted", "functional": {"name": "linear_count"}, "values": [1, 1, 1]}},
                {"identity": "non_diffusion", "budget": 20}
              ]
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn suite_layout_and_determinism() {
        let cfg = small();
        let opts = RunOptions::default();
        let a = run_suite(&cfg, &opts).unwrap();
        let layout: Vec<(usize, &str)> = a
            .iter()
            .map(|r| (r.case.index, r.backend.as_str()))
            .collect();
        assert_eq!(
            layout,
            vec![
                (0, "exact"),
                (0, "mc"),
                (0, "cross"),
                (1, "pointwise"),
                (2, "exact"),
                (2, "mc"),
                (2, "cross"),
                (3, "exact"),
            ]
        );
        assert!(
            a.iter().all(|r| r.pass),
            "{:#?}",
            a.iter().filter(|r| !r.pass).collect::<Vec<_>>()
        );
        assert!(a.iter().all(|r| r.wall_time_ms.is_none()));
        assert!(a[0].boundary_leak.is_some() && a[1].boundary_leak.is_none());
        assert_eq!(to_json(&a), to_json(&run_suite(&cfg, &opts).unwrap()));
    }

    #[test]
    fn selection_and_seeds() {
        let cfg = small();
        let opts = RunOptions {
            backends: BackendSelection::Mc,
            timings: true,
        };
        let r = run_suite(&cfg, &opts).unwrap();
        // non_diffusion always runs exact
        assert_eq!(r.iter().filter(|r| r.backend == "exact").count(), 1);
        assert!(r.iter().all(|r| r.wall_time_ms.is_some()));
        let seeds: Vec<_> = r
            .iter()
            .filter(|r| r.backend == "mc")
            .map(|r| r.seed.unwrap())
            .collect();
        assert_eq!(seeds.len(), 2);
        assert_ne!(seeds[0], seeds[1]);
        assert!("gpu".parse::<BackendSelection>().is_err());
    }

    #[test]
    fn backend_failure_becomes_a_failed_report() {
        let mut cfg = small();
        cfg.truncation.budget = 10;
        let r = run_suite(
            &cfg,
            &RunOptions {
                backends: BackendSelection::Exact,
                timings: false,
            },
        )
        .unwrap();
        let exact: Vec<_> = r.iter().filter(|r| r.backend == "exact").collect();
        assert!(!exact.is_empty());
        assert!(exact
            .iter()
            .all(|r| !r.pass && r.error.as_deref().unwrap().contains("budget")));
        assert!(r.iter().any(|r| r.backend == "pointwise" && r.pass));
    }
}
