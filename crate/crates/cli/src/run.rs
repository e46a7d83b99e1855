use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use dpfair::audit::{
    anti_concentration_check, check_parallel_composition, estimate_privacy_ratio, exact_privacy_ratio,
    fairness_failure_rate, CoinTail, RatioReport,
};
use dpfair::ef_em::{truncation_budget, PreparedEf};
use dpfair::generators::{
    all_zero_profile, bernoulli_profile, ef_packing_default_c, ef_packing_default_t, ef_packing_family,
    prop_packing_default_c, prop_packing_default_t, prop_packing_family, PackingFamily,
};
use dpfair::knife::KnifeTrace;
use dpfair::oracles::{
    audit_f_sensitivity, audit_score_sensitivity, ef2_connected_exists, exact_em_distribution, min_ef_c_connected,
    min_prop_c_connected,
};
use dpfair::{
    adjacency_distance, connected_allocation_count, dp_moving_knife, ef_degree, prop_degree, Adjacency,
    ConnectedAllocation, FairnessNotion, PrivacyParams, RandomStream, UtilityProfile,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::*;
use crate::instance::InstanceFile;
use crate::report::{AllocationRecord, RunReportFile, Timing};

/// Rendered output and whether every audit or invariant check passed.
pub struct Output {
    pub text: String,
    pub passed: bool,
}

struct Ctx<'a> {
    global: &'a GlobalArgs,
    started: Instant,
}

impl Ctx<'_> {
    fn params(&self) -> Result<PrivacyParams> {
        let g = self.global;
        Ok(PrivacyParams::with_svt_constant(g.epsilon, g.beta, g.svt_constant)?)
    }

    fn stream(&self) -> RandomStream {
        RandomStream::from_seed(self.global.seed)
    }

    fn format(&self, default: Format) -> Format {
        self.global.format.unwrap_or(default)
    }

    fn json_only(&self, command: &str) -> Result<()> {
        if self.format(Format::Json) == Format::Csv {
            bail!("csv output is not available for `{command}`");
        }
        Ok(())
    }

    fn parameters(&self, extra: Value) -> Value {
        let g = self.global;
        let mut p = json!({
            "epsilon": g.epsilon,
            "beta": g.beta,
            "svt_constant": g.svt_constant,
            "trials": g.trials,
            "enum_cap": g.enum_cap.to_string(),
        });
        if let (Value::Object(p), Value::Object(extra)) = (&mut p, extra) {
            p.extend(extra);
        }
        p
    }

    fn report(
        &self,
        command: &str,
        parameters: Value,
        allocation: Option<AllocationRecord>,
        metadata: Value,
        passed: bool,
    ) -> Output {
        let report = RunReportFile {
            command: command.into(),
            seed: self.global.seed,
            parameters: self.parameters(parameters),
            allocation,
            metadata,
            timing: Timing { elapsed_ms: self.started.elapsed().as_secs_f64() * 1e3 },
            passed,
        };
        Output { text: report.to_json(), passed }
    }
}

fn to_value(v: &impl Serialize) -> Value {
    serde_json::to_value(v).expect("reports serialize")
}

fn csv_text<R: Serialize>(rows: impl IntoIterator<Item = R>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub fn execute(cli: &Cli) -> Result<Output> {
    let ctx = Ctx { global: &cli.global, started: Instant::now() };
    match &cli.command {
        Command::Gen(g) => gen(&ctx, g),
        Command::AllocateEf { instance } => allocate_ef(&ctx, instance),
        Command::AllocateProp { instance } => allocate_prop(&ctx, instance),
        Command::Oracle { instance } => oracle(&ctx, instance),
        Command::Audit(a) => audit(&ctx, a),
        Command::Sweep(s) => sweep(&ctx, s),
    }
}

fn gen(ctx: &Ctx, command: &GenCommand) -> Result<Output> {
    ctx.json_only("gen")?;
    let profile = match command {
        GenCommand::Bernoulli(s) => bernoulli_profile(s.n, s.m, &mut ctx.stream())?,
        GenCommand::AllZero(s) => all_zero_profile(s.n, s.m)?,
        GenCommand::EfPacking(p) => {
            let c = p.c.unwrap_or_else(|| ef_packing_default_c(p.shape.n, p.shape.m, ctx.global.epsilon));
            let t = p.t.unwrap_or_else(|| ef_packing_default_t(p.shape.m, c));
            packing_member(ef_packing_family(p.shape.n, p.shape.m, c, t).with_context(|| packing_hint(c))?, p.member)?
        }
        GenCommand::PropPacking(p) => {
            let c = p.c.unwrap_or_else(|| prop_packing_default_c(p.shape.n, p.shape.m, ctx.global.epsilon));
            let t = p.t.unwrap_or_else(|| prop_packing_default_t(p.shape.n, p.shape.m, c));
            packing_member(prop_packing_family(p.shape.n, p.shape.m, c, t).with_context(|| packing_hint(c))?, p.member)?
        }
    };
    Ok(Output { text: InstanceFile::from_profile(&profile).to_json(), passed: true })
}

fn packing_hint(c: usize) -> String {
    if c == 0 {
        "the default removal count is 0 at this size; pass --c".into()
    } else {
        format!("packing family with c = {c}")
    }
}

fn packing_member(family: PackingFamily, member: usize) -> Result<UtilityProfile> {
    match member {
        0 => Ok(family.base),
        t if t <= family.members.len() => Ok(family.members[t - 1].clone()),
        t => bail!("--member {t} exceeds the {} members of the family", family.members.len()),
    }
}

#[derive(Serialize)]
struct IntervalRow {
    agent: usize,
    first_item: Option<usize>,
    last_item: Option<usize>,
}

fn allocation_csv(a: &ConnectedAllocation) -> Result<String> {
    csv_text(a.spans().iter().enumerate().map(|(i, s)| IntervalRow {
        agent: i + 1,
        first_item: s.map(|s| s.start + 1),
        last_item: s.map(|s| s.end),
    }))
}

fn allocate_ef(ctx: &Ctx, path: &Path) -> Result<Output> {
    let profile = InstanceFile::read(path)?;
    let params = ctx.params()?;
    let run = dpfair::dp_ef_allocate_with_cap(&profile, &params, &mut ctx.stream(), ctx.global.enum_cap)?;
    if ctx.format(Format::Json) == Format::Csv {
        return Ok(Output { text: allocation_csv(&run.allocation)?, passed: true });
    }
    let metadata = json!({
        "g": run.g,
        "score": run.score,
        "max_score": run.max_score,
        "candidate_count": run.candidate_count.to_string(),
        "accuracy_slack": run.accuracy_slack(),
        "guaranteed_ef": run.guaranteed_ef,
    });
    let allocation = AllocationRecord::from_connected(&run.allocation);
    Ok(ctx.report("allocate-ef", json!({ "instance": path }), Some(allocation), metadata, true))
}

fn trace_json(trace: &KnifeTrace) -> Value {
    let nodes: Vec<Value> = trace
        .nodes
        .iter()
        .map(|v| {
            let one_based = |agents: &[usize]| agents.iter().map(|a| a + 1).collect::<Vec<_>>();
            let mut node = json!({
                "id": v.id,
                "agents": one_based(&v.agents),
                "items": (v.start < v.end).then_some([v.start + 1, v.end]),
            });
            if !v.is_leaf() {
                node["level"] = json!(v.level);
                node["epsilon"] = json!(v.epsilon);
                node["g"] = json!(v.g);
                node["split"] = json!(v.split);
                node["left_agents"] = json!(one_based(&v.left_agents));
                node["right_agents"] = json!(one_based(&v.right_agents));
                node["cuts"] = v
                    .cuts
                    .iter()
                    .map(|c| json!({"agent": c.agent + 1, "selected": c.selected, "queries": c.queries}))
                    .collect();
            }
            node
        })
        .collect();
    let share = trace.budget_share();
    json!({
        "budget_ledger": trace.budget_ledger().iter().map(|(b, e)| json!({"level": b, "epsilon": e})).collect::<Vec<_>>(),
        "budget_spent": trace.budget_ledger().iter().map(|(_, e)| e).sum::<f64>(),
        "budget_share": format!("{}/{}", share.numer(), share.denom()),
        "proportionality_bound": trace.proportionality_bound(),
        "nodes": nodes,
    })
}

fn allocate_prop(ctx: &Ctx, path: &Path) -> Result<Output> {
    let profile = InstanceFile::read(path)?;
    let (allocation, trace) = dp_moving_knife(&profile, &ctx.params()?, &ctx.stream())?;
    let composition = check_parallel_composition(&trace);
    if ctx.format(Format::Json) == Format::Csv {
        return Ok(Output { text: allocation_csv(&allocation)?, passed: composition.passed() });
    }
    let mut metadata = trace_json(&trace);
    metadata["composition_violations"] = json!(composition.violations);
    let record = AllocationRecord::from_connected(&allocation);
    Ok(ctx.report("allocate-prop", json!({ "instance": path }), Some(record), metadata, composition.passed()))
}

fn oracle(ctx: &Ctx, path: &Path) -> Result<Output> {
    ctx.json_only("oracle")?;
    let profile = InstanceFile::read(path)?;
    let cap = ctx.global.enum_cap;
    let metadata = json!({
        "connected_allocations": connected_allocation_count(profile.m(), profile.n()).to_string(),
        "min_ef_c": min_ef_c_connected(&profile, cap)?,
        "min_prop_c": min_prop_c_connected(&profile, cap)?,
        "ef2_exists": ef2_connected_exists(&profile, cap)?,
    });
    Ok(ctx.report("oracle", json!({ "instance": path }), None, metadata, true))
}

fn audit(ctx: &Ctx, command: &AuditCommand) -> Result<Output> {
    match command {
        AuditCommand::PrivacyRatio(p) => audit_pair(ctx, p, false),
        AuditCommand::Group(p) => audit_pair(ctx, p, true),
        AuditCommand::Sensitivity(s) => audit_sensitivity(ctx, s),
        AuditCommand::FairnessRate(f) => audit_fairness_rate(ctx, f),
        AuditCommand::AntiConcentration(a) => audit_anti_concentration(ctx, a),
    }
}

#[derive(Serialize)]
struct OutcomeRow<'a> {
    outcome: &'a str,
    p1: f64,
    p2: f64,
    p1_low: f64,
    p1_high: f64,
    p2_low: f64,
    p2_high: f64,
    ratio_lower: f64,
    flagged: bool,
}

fn ratio_csv(r: &RatioReport) -> Result<String> {
    csv_text(r.outcomes.iter().map(|o| OutcomeRow {
        outcome: &o.outcome,
        p1: o.p1,
        p2: o.p2,
        p1_low: o.ci1.0,
        p1_high: o.ci1.1,
        p2_low: o.ci2.0,
        p2_high: o.ci2.1,
        ratio_lower: o.ratio_lower,
        flagged: o.flagged,
    }))
}

fn audit_pair(ctx: &Ctx, args: &PairArgs, group: bool) -> Result<Output> {
    let p1 = InstanceFile::read(&args.first)?;
    let p2 = InstanceFile::read(&args.second)?;
    let params = ctx.params()?;
    let k = adjacency_distance(&p1, &p2, Adjacency::AgentItemLevel)?;
    if !group && k > 1 {
        bail!("the inputs differ in {k} cells; use `audit group` for non-adjacent inputs");
    }
    let bound_log = if group { k as f64 } else { 1.0 } * params.epsilon;
    let cap = ctx.global.enum_cap;
    let report = match args.algorithm {
        Algorithm::Ef if !args.sampled => {
            let d1 = exact_em_distribution(&p1, &params, cap)?;
            let d2 = exact_em_distribution(&p2, &params, cap)?;
            exact_privacy_ratio(&d1, &d2, bound_log)?
        }
        Algorithm::Ef => {
            let (e1, e2) = (PreparedEf::new(&p1, &params, cap)?, PreparedEf::new(&p2, &params, cap)?);
            let mech = |p: &UtilityProfile, s: &mut RandomStream| {
                Ok(if *p == p1 { &e1 } else { &e2 }.sample(s)?.allocation)
            };
            estimate_privacy_ratio(mech, &p1, &p2, bound_log, ctx.global.trials, &ctx.stream())?
        }
        Algorithm::Prop => {
            let mech = |p: &UtilityProfile, s: &mut RandomStream| Ok(dp_moving_knife(p, &params, s)?.0);
            estimate_privacy_ratio(mech, &p1, &p2, bound_log, ctx.global.trials, &ctx.stream())?
        }
    };
    if ctx.format(Format::Json) == Format::Csv {
        return Ok(Output { text: ratio_csv(&report)?, passed: report.passed() });
    }
    let command = if group { "audit group" } else { "audit privacy-ratio" };
    let parameters = json!({
        "algorithm": format!("{:?}", args.algorithm).to_lowercase(),
        "first": args.first,
        "second": args.second,
        "distance": k,
    });
    let mut metadata = to_value(&report);
    metadata["bound"] = json!(report.bound());
    Ok(ctx.report(command, parameters, None, metadata, report.passed()))
}

fn audit_sensitivity(ctx: &Ctx, args: &SensitivityArgs) -> Result<Output> {
    ctx.json_only("audit sensitivity")?;
    let (n, m) = (args.shape.n, args.shape.m);
    let report = match args.function {
        AuditedFunction::Score => audit_score_sensitivity(m, n, args.g)?,
        AuditedFunction::F => audit_f_sensitivity(m, n, args.g)?,
    };
    let passed = report.max_delta <= 1;
    let parameters = json!({"function": format!("{:?}", args.function).to_lowercase(), "n": n, "m": m, "g": args.g});
    let mut metadata = to_value(&report);
    if let Some(w) = &report.witness {
        metadata["witness"]["low"] = to_value(&InstanceFile::from_profile(&w.low));
        metadata["witness"]["high"] = to_value(&InstanceFile::from_profile(&w.high));
    }
    Ok(ctx.report("audit sensitivity", parameters, None, metadata, passed))
}

/// Removal count each algorithm guarantees with probability `1 - beta`.
fn guaranteed_c(algorithm: Algorithm, profile: &UtilityProfile, params: &PrivacyParams) -> Result<usize> {
    Ok(match algorithm {
        Algorithm::Ef => 3 * truncation_budget(profile.m(), profile.n(), params.epsilon, params.beta)? as usize / 2,
        // The bound depends only on the recursion shape, which is fixed by n.
        Algorithm::Prop => dp_moving_knife(profile, params, &RandomStream::from_seed(0))?.1.proportionality_bound(),
    })
}

fn target_notion(algorithm: Algorithm) -> FairnessNotion {
    match algorithm {
        Algorithm::Ef => FairnessNotion::Ef,
        Algorithm::Prop => FairnessNotion::Prop,
    }
}

fn audit_fairness_rate(ctx: &Ctx, args: &FairnessRateArgs) -> Result<Output> {
    ctx.json_only("audit fairness-rate")?;
    let profile = InstanceFile::read(&args.instance)?;
    let params = ctx.params()?;
    let notion = match args.criterion {
        Some(Criterion::Ef) => FairnessNotion::Ef,
        Some(Criterion::Prop) => FairnessNotion::Prop,
        None => target_notion(args.algorithm),
    };
    let c = match args.c {
        Some(c) => c,
        None => guaranteed_c(args.algorithm, &profile, &params)?,
    };
    let estimate = match args.algorithm {
        Algorithm::Ef => {
            let prepared = PreparedEf::new(&profile, &params, ctx.global.enum_cap)?;
            let mech = |_: &UtilityProfile, s: &mut RandomStream| Ok(prepared.sample(s)?.allocation);
            fairness_failure_rate(mech, &profile, notion, c, ctx.global.trials, &ctx.stream())?
        }
        Algorithm::Prop => {
            let mech = |p: &UtilityProfile, s: &mut RandomStream| Ok(dp_moving_knife(p, &params, s)?.0);
            fairness_failure_rate(mech, &profile, notion, c, ctx.global.trials, &ctx.stream())?
        }
    };
    let passed = estimate.at_most(params.beta);
    let parameters = json!({
        "algorithm": format!("{:?}", args.algorithm).to_lowercase(),
        "criterion": notion,
        "c": c,
        "instance": args.instance,
    });
    let metadata = json!({"estimate": estimate, "bound": params.beta});
    Ok(ctx.report("audit fairness-rate", parameters, None, metadata, passed))
}

fn audit_anti_concentration(ctx: &Ctx, args: &AntiConcentrationArgs) -> Result<Output> {
    ctx.json_only("audit anti-concentration")?;
    let tail = match args.lemma {
        Lemma::Lower => CoinTail::Lower,
        Lemma::Upper => CoinTail::Upper { gamma: args.gamma },
    };
    let report = anti_concentration_check(tail, args.k, ctx.global.trials, &ctx.stream())?;
    let parameters = json!({"k": args.k, "tail": tail});
    Ok(ctx.report("audit anti-concentration", parameters, None, to_value(&report), report.passed()))
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub n: usize,
    pub m: usize,
    pub epsilon: f64,
    pub beta: f64,
    pub seed: u64,
    pub algorithm: &'static str,
    pub c_achieved: usize,
    pub failure_rate: f64,
    pub runtime_ms: f64,
}

fn sweep(ctx: &Ctx, args: &SweepArgs) -> Result<Output> {
    let g = ctx.global;
    let epsilons = if args.epsilons.is_empty() { vec![g.epsilon] } else { args.epsilons.clone() };
    let betas = if args.betas.is_empty() { vec![g.beta] } else { args.betas.clone() };
    let root = ctx.stream();
    let mut rows = Vec::new();
    let mut point = 0u64;
    for &n in &args.n {
        for &m in &args.m {
            for &epsilon in &epsilons {
                for &beta in &betas {
                    let point_stream = root.substream(point);
                    point += 1;
                    let profile = bernoulli_profile(n, m, &mut point_stream.substream(0))?;
                    let params = PrivacyParams::with_svt_constant(epsilon, beta, g.svt_constant)?;
                    for &algorithm in &args.algorithms {
                        rows.push(sweep_point(ctx, &profile, &params, algorithm, &point_stream)?);
                    }
                }
            }
        }
    }
    if ctx.format(Format::Csv) == Format::Csv {
        return Ok(Output { text: csv_text(&rows)?, passed: true });
    }
    let parameters = json!({"n": args.n, "m": args.m, "epsilons": epsilons, "betas": betas});
    Ok(ctx.report("sweep", parameters, None, json!({ "rows": rows }), true))
}

fn sweep_point(
    ctx: &Ctx,
    profile: &UtilityProfile,
    params: &PrivacyParams,
    algorithm: Algorithm,
    stream: &RandomStream,
) -> Result<SweepRow> {
    let started = Instant::now();
    let trials = ctx.global.trials.max(1);
    let c = guaranteed_c(algorithm, profile, params)?;
    let (mut c_achieved, mut failures) = (0usize, 0u64);
    let mut record = |degree: Option<usize>| {
        let d = degree.unwrap_or(profile.m());
        c_achieved = c_achieved.max(d);
        failures += u64::from(d > c);
    };
    match algorithm {
        Algorithm::Ef => {
            let prepared = PreparedEf::new(profile, params, ctx.global.enum_cap)?;
            let runs = stream.substream(1);
            for t in 0..trials {
                let a = prepared.sample(&mut runs.substream(t))?.allocation;
                record(Some(ef_degree(profile, &a)?));
            }
        }
        Algorithm::Prop => {
            let runs = stream.substream(2);
            for t in 0..trials {
                let (a, _) = dp_moving_knife(profile, params, &runs.substream(t))?;
                record(prop_degree(profile, &a)?);
            }
        }
    }
    Ok(SweepRow {
        n: profile.n(),
        m: profile.m(),
        epsilon: params.epsilon,
        beta: params.beta,
        seed: ctx.global.seed,
        algorithm: match algorithm {
            Algorithm::Ef => "ef",
            Algorithm::Prop => "prop",
        },
        c_achieved,
        failure_rate: failures as f64 / trials as f64,
        runtime_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}
