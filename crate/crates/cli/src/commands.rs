use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;
use serde_json::{json, Value};

use freelab_core::basis::{
    basis_constant, find_divergent_chains, lemma41_witness, projections_from_system, signed_sum_norm,
    unconditional_constant, UncondMode, DEFAULT_EXHAUSTIVE_CAP,
};
use freelab_core::experiments::{dichotomy_experiment, lemma41_experiment, thm32_experiment, ExperimentReport};
use freelab_core::extensional::{enumerate_circle_union, verify_extensional_suite};
use freelab_core::io::{self, csv_field, AnySpace};
use freelab_core::metric::{build_circle, build_circle_union, build_grid_net, DEFAULT_GRID_CAP};
use freelab_core::retraction::{lip_profile, max_lip, validate_phi_table, validate_system, RetractionSystem};
use freelab_core::scalar::parse_rational;
use freelab_core::search::{
    certify_circle_lower_bound, heuristic_circle_system, recheck_pruned, theorem32_bound, Budget, Checkpoint, Outcome,
    SearchOptions, Strategy, Target,
};
use freelab_core::{kr_norm_dual, Error, Measure, PointedMetricSpace, Scalar};

use crate::{BasisCmd, BudgetArgs, ExperimentCmd, ExtCmd, NormArgs, SearchCmd, SpaceCmd, SystemArgs, SystemCmd};

pub struct Ctx {
    pub threads: usize,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Ok,
    Failed,
    Indeterminate,
}

pub struct Report {
    pub json: Value,
    pub csv: Option<String>,
    /// Print CSV unless JSON is asked for explicitly.
    pub prefer_csv: bool,
    pub status: Status,
    /// Lines for stderr.
    pub notes: Vec<String>,
}

impl Report {
    fn ok(json: Value) -> Self {
        Report { json, csv: None, prefer_csv: false, status: Status::Ok, notes: Vec::new() }
    }

    fn with_csv(mut self, csv: String) -> Self {
        self.csv = Some(csv);
        self
    }

    fn failed_if(mut self, bad: bool) -> Self {
        if bad {
            self.status = Status::Failed;
        }
        self
    }
}

macro_rules! with_space {
    ($any:expr, $s:ident => $body:expr) => {
        match $any {
            AnySpace::Exact($s) => $body,
            AnySpace::Float($s) => $body,
        }
    };
}

fn load_space(path: &Path) -> Result<AnySpace> {
    Ok(io::read_space(path)?)
}

fn labels<S: Scalar>(space: &PointedMetricSpace<S>, pts: &[usize]) -> Vec<String> {
    pts.iter().map(|&x| space.label(x).to_string()).collect()
}

fn pair_json<S: Scalar>(space: &PointedMetricSpace<S>, pair: Option<(usize, usize)>) -> Value {
    pair.map_or(Value::Null, |(x, y)| json!([space.label(x), space.label(y)]))
}

pub fn space(cmd: SpaceCmd) -> Result<Report> {
    let any = match cmd {
        SpaceCmd::Circle { n } => AnySpace::Exact(build_circle(n)?),
        SpaceCmd::Union { k } => AnySpace::Exact(build_circle_union(k)?),
        SpaceCmd::Grid { m, dim } => AnySpace::Float(build_grid_net(m, dim, DEFAULT_GRID_CAP)?),
        SpaceCmd::Validate { file } => {
            return Ok(match io::read_space(&file) {
                Ok(s) => Report::ok(json!({ "file": file, "valid": true, "points": s.len() })),
                Err(Error::InvalidMetric(report)) => {
                    let lines: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
                    let mut r = Report::ok(json!({ "file": file, "valid": false, "violations": lines })).failed_if(true);
                    r.notes = lines.iter().map(|l| format!("{}: {l}", file.display())).collect();
                    r
                }
                Err(e) => return Err(e.into()),
            });
        }
    };
    Ok(Report::ok(any.to_json()))
}

pub fn norm(args: NormArgs) -> Result<Report> {
    let any = load_space(&args.space.space)?;
    with_space!(&any, s => norm_in(s, &args))
}

fn norm_in<S: Scalar>(space: &PointedMetricSpace<S>, args: &NormArgs) -> Result<Report> {
    let mu = match (&args.measure, &args.measure_file) {
        (Some(text), _) => Measure::parse(space, text)?,
        (None, Some(path)) => io::parse_measure_csv(space, &io::read_text(path)?, &path.display().to_string())?,
        (None, None) => bail!("give --measure or --measure-file"),
    };
    let plan = freelab_core::transport::kr_transport(space, &mu);
    let dual = kr_norm_dual(space, &mu)?;
    let agree = plan.cost.eq_tol(&dual.value);
    let witness: serde_json::Map<String, Value> = (0..space.len())
        .map(|x| (space.label(x).to_string(), dual.witness.value(x).to_json()))
        .collect();
    let moves: Vec<Value> = plan
        .moves
        .iter()
        .map(|(a, b, m)| json!({ "from": space.label(*a), "to": space.label(*b), "mass": m.to_json() }))
        .collect();
    let out = json!({
        "measure": mu.iter().map(|(x, a)| json!([space.label(x), a.to_json()])).collect::<Vec<_>>(),
        "primal": plan.cost.to_json(),
        "dual": dual.value.to_json(),
        "agree": agree,
        "witness": witness,
        "plan": moves,
    });
    Ok(Report::ok(out).failed_if(!agree))
}

fn load_system(args: &SystemArgs) -> Result<(AnySpace, RetractionSystem)> {
    let any = load_space(&args.space.space)?;
    let sys = with_space!(&any, s => io::read_system(s, &args.system)?);
    Ok((any, sys))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TableFile {
    order: Vec<String>,
    phi: Vec<Vec<String>>,
}

pub fn system(cmd: SystemCmd) -> Result<Report> {
    match cmd {
        SystemCmd::Build(args) => {
            let (any, sys) = load_system(&args)?;
            with_space!(&any, s => {
                let phi: Vec<Vec<String>> = sys.phi_table().iter().map(|row| labels(s, row)).collect();
                let mut out = io::system_to_json(s, &sys);
                out["phi"] = json!(phi);
                Ok(Report::ok(out))
            })
        }
        SystemCmd::Validate { space, system, table } => {
            let any = load_space(&space.space)?;
            let report = match (system, table) {
                (Some(path), _) => {
                    let sys = with_space!(&any, s => io::read_system(s, &path)?);
                    validate_system(&sys)
                }
                (None, Some(path)) => {
                    let text = io::read_text(&path)?;
                    let file: TableFile = serde_json::from_str(&text)
                        .map_err(|e| anyhow!("parse error at {}:{}:{}: {e}", path.display(), e.line(), e.column()))?;
                    with_space!(&any, s => {
                        let idx = |l: &String| s.index_of(l).with_context(|| format!("in {}", path.display()));
                        let order = file.order.iter().map(idx).collect::<Result<Vec<_>>>()?;
                        let phi = file
                            .phi
                            .iter()
                            .map(|row| row.iter().map(idx).collect::<Result<Vec<_>>>())
                            .collect::<Result<Vec<_>>>()?;
                        validate_phi_table(&order, &phi)
                    })
                }
                (None, None) => bail!("give --system or --table"),
            };
            let valid = report.is_valid();
            let mut r = Report::ok(json!({ "valid": valid, "report": report })).failed_if(!valid);
            if !valid {
                r.notes.push(report.to_string());
            }
            Ok(r)
        }
        SystemCmd::Lip(args) => {
            let (any, sys) = load_system(&args)?;
            with_space!(&any, s => {
                let profile = lip_profile(s, &sys);
                let max = max_lip(s, &sys);
                let mut csv = String::from("i,mu,lip,x,y\n");
                let rows: Vec<Value> = profile
                    .iter()
                    .enumerate()
                    .map(|(i, l)| {
                        let (x, y) = l.pair.map_or((String::new(), String::new()), |(x, y)| {
                            (s.label(x).to_string(), s.label(y).to_string())
                        });
                        csv.push_str(&format!(
                            "{i},{},{},{},{}\n",
                            csv_field(s.label(sys.mu(i))),
                            scalar_cell(&l.value),
                            csv_field(&x),
                            csv_field(&y)
                        ));
                        json!({ "i": i, "mu": s.label(sys.mu(i)), "lip": l.value.to_json(), "pair": pair_json(s, l.pair) })
                    })
                    .collect();
                Ok(Report::ok(json!({ "max": max.to_json(), "profile": rows })).with_csv(csv))
            })
        }
        SystemCmd::Chain { sys: args, point, from } => {
            let (any, sys) = load_system(&args)?;
            with_space!(&any, s => {
                let to = s.index_of(&point)?;
                let chain = match from {
                    Some(f) => sys.chain_between(s.index_of(&f)?, to)?,
                    None => sys.chain_to(to),
                };
                Ok(Report::ok(json!({ "chain": labels(s, &chain.points) })))
            })
        }
    }
}

fn scalar_cell<S: Scalar>(v: &S) -> String {
    match v.to_json() {
        Value::String(s) => s,
        other => other.to_string(),
    }
}

pub fn basis(cmd: BasisCmd, ctx: &Ctx) -> Result<Report> {
    match cmd {
        BasisCmd::Const(args) => {
            let (any, sys) = load_system(&args)?;
            with_space!(&any, s => {
                let fam = projections_from_system(s, &sys);
                let bc = basis_constant(s, &fam);
                let mut csv = String::from("n,norm,x,y\n");
                let per_n: Vec<Value> = bc
                    .per_n
                    .iter()
                    .enumerate()
                    .map(|(n, p)| {
                        let (x, y) = p.attained_at.map_or((String::new(), String::new()), |(x, y)| {
                            (s.label(x).to_string(), s.label(y).to_string())
                        });
                        csv.push_str(&format!("{n},{},{},{}\n", scalar_cell(&p.value), csv_field(&x), csv_field(&y)));
                        json!({ "n": n, "norm": p.value.to_json(), "attained_at": pair_json(s, p.attained_at) })
                    })
                    .collect();
                Ok(Report::ok(json!({ "value": bc.value.to_json(), "per_n": per_n })).with_csv(csv))
            })
        }
        BasisCmd::Uncond { sys: args, exhaustive, samples } => {
            let (any, sys) = load_system(&args)?;
            let mode = match samples {
                Some(samples) if !exhaustive => UncondMode::Sampled { samples, seed: ctx.seed },
                _ => UncondMode::Exhaustive { cap: DEFAULT_EXHAUSTIVE_CAP },
            };
            with_space!(&any, s => {
                let fam = projections_from_system(s, &sys);
                let r = unconditional_constant(s, &fam, mode)?;
                Ok(Report::ok(json!({
                    "value": r.value.to_json(),
                    "eps": r.eps,
                    "attained_at": pair_json(s, r.attained_at),
                    "patterns": r.patterns,
                    "mode": r.mode,
                    "exact": matches!(r.mode, UncondMode::Exhaustive { .. }),
                })))
            })
        }
        BasisCmd::Witness { sys: args, alpha, beta, x, y } => {
            let (any, sys) = load_system(&args)?;
            with_space!(&any, s => witness_in(s, &sys, &alpha, &beta, x.as_deref(), y.as_deref()))
        }
    }
}

fn witness_in<S: Scalar>(
    space: &PointedMetricSpace<S>,
    sys: &RetractionSystem,
    alpha: &str,
    beta: &str,
    x: Option<&str>,
    y: Option<&str>,
) -> Result<Report> {
    let alpha = S::parse_str(alpha).map_err(|e| anyhow!("--alpha: {e}"))?;
    let beta = S::parse_str(beta).map_err(|e| anyhow!("--beta: {e}"))?;
    let (x, y) = match (x, y) {
        (Some(x), Some(y)) => (space.index_of(x)?, space.index_of(y)?),
        _ => {
            let p = find_divergent_chains(space, sys, &beta, 2)
                .into_iter()
                .next()
                .ok_or_else(|| anyhow!("no pair within β whose chains differ in two or more points"))?;
            (p.x, p.y)
        }
    };
    let w = lemma41_witness(space, sys, &sys.chain_to(x), &sys.chain_to(y), &alpha, &beta)?;
    let fam = projections_from_system(space, sys);
    let norm = signed_sum_norm(space, &fam, &w.eps)?;
    let holds = w.evaluation.ge_tol(&w.bound) && norm.value.ge_tol(&w.bound);
    let f: serde_json::Map<String, Value> =
        (0..space.len()).map(|p| (space.label(p).to_string(), w.f[p].to_json())).collect();
    Ok(Report::ok(json!({
        "x": space.label(x),
        "y": space.label(y),
        "n": w.n,
        "t": w.t,
        "s": w.s,
        "bound": w.bound.to_json(),
        "evaluation": w.evaluation.to_json(),
        "signed_sum_norm": norm.value.to_json(),
        "attained_at": pair_json(space, norm.attained_at),
        "eps": w.eps,
        "f": f,
        "holds": holds,
    }))
    .failed_if(!holds))
}

fn budget(args: &BudgetArgs) -> Result<Budget> {
    let mut b = Budget::default().with_env()?;
    if let Some(n) = args.budget_nodes {
        b.max_nodes = n;
    }
    if let Some(s) = args.budget_secs {
        b.max_secs = s;
    }
    b.validate()?;
    Ok(b)
}

fn parse_target(n: usize, text: &str) -> Result<Target> {
    if text == "auto" {
        return Ok(Target::theorem32(n));
    }
    let v = parse_rational(text).map_err(|e| anyhow!("--target: {e}"))?;
    Ok(Target::exact(v)?)
}

pub fn search(cmd: SearchCmd, ctx: &Ctx) -> Result<Report> {
    match cmd {
        SearchCmd::Circle { n, target, budget: b, resume, checkpoint, no_heuristics, recheck } => {
            let target = parse_target(n, &target)?;
            let opts = SearchOptions {
                budget: budget(&b)?,
                parallel: ctx.threads > 1,
                record_pruned: recheck,
                heuristics_first: !no_heuristics,
            };
            let resume: Option<Checkpoint> = match resume {
                Some(path) => {
                    let text = io::read_text(&path)?;
                    Some(
                        serde_json::from_str(&text)
                            .map_err(|e| anyhow!("parse error at {}:{}:{}: {e}", path.display(), e.line(), e.column()))?,
                    )
                }
                None => None,
            };
            let cert = certify_circle_lower_bound(n, &target, &opts, resume.as_ref())?;
            let mut out = serde_json::to_value(&cert)?;
            let mut notes = Vec::new();
            if let Target::Theorem32 { .. } = target {
                let bound = theorem32_bound(n);
                if bound.below_hypothesis {
                    notes.push(format!("note: n = {n} < 10 lies outside the hypothesis of the circle bound"));
                }
                out["bound"] = serde_json::to_value(bound)?;
            }
            if recheck > 0 {
                let agreed = cert.pruned_samples.iter().filter(|p| recheck_pruned(n, &target, p)).count();
                out["recheck"] = json!({ "checked": cert.pruned_samples.len(), "agreed": agreed });
                if agreed != cert.pruned_samples.len() {
                    notes.push("error: independent re-check disagrees with a pruning decision".into());
                }
            }
            let mut status = Status::Ok;
            match &cert.outcome {
                Outcome::Indeterminate { frontier } => {
                    status = Status::Indeterminate;
                    if let Some(path) = checkpoint {
                        let cp = Checkpoint {
                            n,
                            target: target.clone(),
                            nodes_explored: cert.nodes_explored,
                            frontier: frontier.clone(),
                        };
                        std::fs::write(&path, serde_json::to_string_pretty(&cp)?)
                            .with_context(|| format!("cannot write {}", path.display()))?;
                        notes.push(format!("budget exhausted; frontier written to {}", path.display()));
                    } else {
                        notes.push("budget exhausted; pass --checkpoint FILE to save the frontier".into());
                    }
                }
                Outcome::Counterexample { order, parents, .. } => {
                    let space = build_circle(n)?;
                    let pairs: Vec<Value> =
                        order.iter().zip(parents).skip(1).map(|(&c, &p)| json!([space.label(c), space.label(p)])).collect();
                    out["system"] = json!({ "order": labels(&space, order), "parent": pairs });
                }
                Outcome::Certified => {}
            }
            let failed = notes.iter().any(|l| l.starts_with("error"));
            Ok(Report { json: out, csv: None, prefer_csv: false, status, notes }.failed_if(failed))
        }
        SearchCmd::Heuristic { n, strategy } => {
            let st: Strategy = strategy.parse()?;
            let h = heuristic_circle_system(n, st)?;
            let profile: Vec<Value> = lip_profile(&h.space, &h.system).iter().map(|l| l.value.to_json()).collect();
            Ok(Report::ok(json!({
                "n": n,
                "strategy": st.name(),
                "max_lip": h.achieved.to_string(),
                "max_lip_f64": h.achieved.to_f64(),
                "bound": theorem32_bound(n),
                "lip_profile": profile,
                "system": io::system_to_json(&h.space, &h.system),
            })))
        }
    }
}

fn parse_range(text: &str) -> Result<std::ops::Range<usize>> {
    let (a, b) = text.split_once("..").ok_or_else(|| anyhow!("--i-range must look like a..b"))?;
    let a: usize = a.trim().parse().context("--i-range start")?;
    let b: usize = b.trim().parse().context("--i-range end")?;
    Ok(a..b)
}

pub fn extensional(cmd: ExtCmd, ctx: &Ctx) -> Result<Report> {
    match cmd {
        ExtCmd::Verify { k, i_range, trials } => {
            let en = enumerate_circle_union(k)?;
            let space = build_circle_union(k)?;
            let range = match i_range {
                Some(t) => parse_range(&t)?,
                None => 0..en.len(),
            };
            let r = verify_extensional_suite(&en, &space, range, trials, ctx.seed)?;
            let mut csv = String::from("i,level,norm,rank,commutes_with_next,fixes_d,convex_columns\n");
            for p in &r.per_index {
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    p.i, p.level, p.norm, p.rank, p.commutes_with_next, p.fixes_d, p.convex_columns
                ));
            }
            let mut out = serde_json::to_value(&r)?;
            out["seed"] = json!(ctx.seed);
            Ok(Report::ok(out).with_csv(csv).failed_if(!r.all_passed))
        }
        ExtCmd::Apply { k, i, f } => {
            let en = enumerate_circle_union(k)?;
            let space = build_circle_union(k)?;
            let values = io::parse_function_csv(&space, &io::read_text(&f)?, &f.display().to_string())?;
            let pf = en.apply_extension(i, &values)?;
            let json_vals: serde_json::Map<String, Value> =
                (0..space.len()).map(|x| (space.label(x).to_string(), pf[x].to_json())).collect();
            let mut r = Report::ok(json!({ "k": k, "i": i, "values": json_vals })).with_csv(io::function_to_csv(&space, &pf));
            r.prefer_csv = true;
            Ok(r)
        }
    }
}

fn experiment_report(rep: ExperimentReport) -> Result<Report> {
    let csv = rep.to_csv();
    let passed = rep.passed;
    Ok(Report::ok(serde_json::to_value(&rep)?).with_csv(csv).failed_if(!passed))
}

pub fn experiment(cmd: ExperimentCmd, ctx: &Ctx) -> Result<Report> {
    match cmd {
        ExperimentCmd::Lemma41 { grids, samples } => experiment_report(lemma41_experiment(&grids, samples, ctx.seed)?),
        ExperimentCmd::Thm32 { n, budget: b } => {
            let opts = SearchOptions { budget: budget(&b)?, parallel: ctx.threads > 1, heuristics_first: true, ..Default::default() };
            let (rep, cert) = thm32_experiment(n, &opts)?;
            let indeterminate = matches!(cert.outcome, Outcome::Indeterminate { .. });
            let mut r = experiment_report(rep)?;
            r.json["certificate"] = serde_json::to_value(&cert)?;
            if indeterminate {
                r.status = Status::Indeterminate;
            }
            Ok(r)
        }
        ExperimentCmd::Dichotomy { k } => experiment_report(dichotomy_experiment(k)?),
    }
}
