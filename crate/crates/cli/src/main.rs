use std::io::{self, Write};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mss::charsum::{
    applicable_kinds, weil_audit_kind, weil_audit_summary, AuditKind, AuditSummary, CharSumReport, Coverage,
    EXHAUSTIVE_MAX_Q,
};
use mss::counting::{
    bool_dp_positive_with, count_brute_with_cap, count_exact_dp_with, factorial, reduce_targets, DpConfig,
    MomentTarget, DEFAULT_BRUTE_CAP, DEFAULT_MEMORY_CAP,
};
use mss::evalsets::{fiber_size_enumerated, image_set, preimage_count, value_set_size, EvalSetDesc};
use mss::regimes::{DecideConfig, Decider, DecisionOutcome, Engine, DEFAULT_BUDGET};
use mss::{Error, FieldCtx, FieldElement};
use serde::Serialize;

mod selftest;

#[derive(Parser, Debug)]
#[command(name = "mss", version, about = "Moment subset sums over finite fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Decide whether some k-subset of D meets the moment targets
    Decide(DecideArgs),
    /// Count solutions exactly
    Count(CountArgs),
    /// Size and elements of an evaluation set
    Valueset(ValuesetArgs),
    /// Fiber size of a Dickson polynomial over a point
    Preimage(PreimageArgs),
    /// Character-sum bound audit, one record per test
    Audit(AuditArgs),
    /// Small-instance oracle suites
    Selftest(SelftestArgs),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    #[default]
    Text,
    Json,
    Ldjson,
}

#[derive(Args, Debug)]
struct Common {
    /// `q`, `p^s` or `p^s:modulus=c0,..,cs`
    #[arg(long)]
    field: String,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// same as --format json
    #[arg(long)]
    json: bool,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args, Debug)]
struct TargetArgs {
    /// monomial:n=N, dickson:n=N,a=A or explicit:e1,e2,..
    #[arg(long)]
    set: String,
    #[arg(long)]
    m: u32,
    /// comma-separated targets b_1..b_m
    #[arg(long, allow_hyphen_values = true)]
    b: String,
    #[arg(long)]
    k: usize,
}

#[derive(Args, Debug)]
struct DecideArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    target: TargetArgs,
    /// state-transition budget; MSS_BUDGET overrides the default
    #[arg(long)]
    budget: Option<u128>,
    #[arg(long, value_enum, default_value_t = EngineArg::Auto)]
    engine: EngineArg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum EngineArg {
    Auto,
    Dp,
    Brute,
    Bool,
}

impl EngineArg {
    fn name(self) -> &'static str {
        match self {
            EngineArg::Auto => "auto",
            EngineArg::Dp => "dp",
            EngineArg::Brute => "brute",
            EngineArg::Bool => "bool",
        }
    }
}

#[derive(Args, Debug)]
struct CountArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    target: TargetArgs,
    #[arg(long, value_enum, default_value_t = CountEngine::Dp)]
    engine: CountEngine,
    /// report M_k = k! N_k instead of N_k
    #[arg(long)]
    ordered: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum CountEngine {
    Dp,
    Brute,
    Bool,
}

#[derive(Args, Debug)]
struct ValuesetArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    set: String,
}

#[derive(Args, Debug)]
struct PreimageArgs {
    #[command(flatten)]
    common: Common,
    /// dickson:n=N,a=A (monomial:n=N is a = 0)
    #[arg(long)]
    set: String,
    #[arg(long)]
    x0: String,
}

#[derive(Args, Debug)]
struct AuditArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    set: String,
    #[arg(long)]
    m: u32,
    /// restrict to one estimate; default is every applicable one
    #[arg(long, value_enum)]
    kind: Option<KindArg>,
    /// random sample of this many (character, polynomial) pairs instead of a full sweep
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum KindArg {
    CompleteField,
    MonomialImage,
    DicksonImage,
    DicksonComplete,
    DicksonEta,
    DicksonTwist,
}

impl From<KindArg> for AuditKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::CompleteField => AuditKind::CompleteField,
            KindArg::MonomialImage => AuditKind::MonomialImage,
            KindArg::DicksonImage => AuditKind::DicksonImage,
            KindArg::DicksonComplete => AuditKind::DicksonComplete,
            KindArg::DicksonEta => AuditKind::DicksonEta,
            KindArg::DicksonTwist => AuditKind::DicksonTwist,
        }
    }
}

#[derive(Args, Debug)]
struct SelftestArgs {
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    json: bool,
}

/// Resolved configuration echoed at the top of every output.
#[derive(Debug, Default, Serialize)]
struct RunConfig {
    command: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    field: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    set: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    m: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    b: Option<Vec<FieldElement>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    x0: Option<FieldElement>,
    #[serde(skip_serializing_if = "Option::is_none")]
    engine: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    budget: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    kind: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    coverage: Option<String>,
    seed: u64,
    format: Format,
}

impl RunConfig {
    fn header(&self) -> String {
        let mut parts = vec![format!("# mss {}", self.command)];
        let mut kv = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                parts.push(format!("{k}={v}"));
            }
        };
        kv("field", self.field.clone());
        kv("set", self.set.clone());
        kv("m", self.m.map(|m| m.to_string()));
        kv("b", self.b.as_ref().map(|b| join(b)));
        kv("k", self.k.map(|k| k.to_string()));
        kv("x0", self.x0.map(|x| x.to_string()));
        kv("engine", self.engine.map(str::to_string));
        kv("budget", self.budget.clone());
        kv("kind", self.kind.clone());
        kv("coverage", self.coverage.clone());
        kv("seed", Some(self.seed.to_string()));
        parts.push(format!("format={}", format_name(self.format)));
        parts.join(" ")
    }
}

fn format_name(f: Format) -> &'static str {
    match f {
        Format::Text => "text",
        Format::Json => "json",
        Format::Ldjson => "ldjson",
    }
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// First line of ldjson output.
#[derive(Serialize)]
struct Header<'a> {
    config: &'a RunConfig,
}

/// Failure of a run, with its exit status.
enum Failure {
    Usage(String),
    Budget(String),
    Other(String),
    /// stdout closed early, e.g. piped into `head`
    Closed,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::BudgetExceeded(_)
            | Error::StateSpaceTooLarge { .. }
            | Error::BruteCapExceeded { .. }
            | Error::EnumerationCap { .. } => Failure::Budget(e.to_string()),
            Error::Hypothesis(_) => Failure::Other(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        if e.kind() == io::ErrorKind::BrokenPipe {
            return Failure::Closed;
        }
        Failure::Other(e.to_string())
    }
}

type Run = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let res = match cli.command {
        Command::Decide(a) => decide(a, &mut out),
        Command::Count(a) => count(a, &mut out),
        Command::Valueset(a) => valueset(a, &mut out),
        Command::Preimage(a) => preimage(a, &mut out),
        Command::Audit(a) => audit(a, &mut out),
        Command::Selftest(a) => selftest::run(resolve_format(a.format, a.json, Format::Text), &mut out),
    };
    let _ = out.flush();
    match res {
        Ok(()) | Err(Failure::Closed) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Budget(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Other(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn resolve_format(f: Option<Format>, json: bool, default: Format) -> Format {
    match (f, json) {
        (Some(f), _) => f,
        (None, true) => Format::Json,
        (None, false) => default,
    }
}

fn budget_from_env(flag: Option<u128>) -> Result<u128, Failure> {
    if let Some(b) = flag {
        return Ok(b);
    }
    match std::env::var("MSS_BUDGET") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("MSS_BUDGET={v:?} is not a non-negative integer"))),
        Err(_) => Ok(DEFAULT_BUDGET),
    }
}

struct Parsed {
    ctx: FieldCtx,
    desc: EvalSetDesc,
    target: MomentTarget,
}

fn parse_target(common: &Common, t: &TargetArgs) -> Result<Parsed, Failure> {
    let ctx = FieldCtx::parse(&common.field)?;
    let desc = EvalSetDesc::parse(&ctx, &t.set)?;
    let target = MomentTarget::parse(&ctx, t.m, &t.b)?;
    Ok(Parsed { ctx, desc, target })
}

fn emit_json<T: Serialize>(out: &mut impl Write, cfg: &RunConfig, body: &T) -> Run {
    #[derive(Serialize)]
    struct Doc<'a, T> {
        config: &'a RunConfig,
        #[serde(flatten)]
        body: &'a T,
    }
    let s = serde_json::to_string_pretty(&Doc { config: cfg, body }).map_err(|e| Failure::Other(e.to_string()))?;
    writeln!(out, "{s}")?;
    Ok(())
}

fn emit_line<T: Serialize>(out: &mut impl Write, v: &T) -> Run {
    let s = serde_json::to_string(v).map_err(|e| Failure::Other(e.to_string()))?;
    writeln!(out, "{s}")?;
    Ok(())
}

fn decide(a: DecideArgs, out: &mut impl Write) -> Run {
    let Parsed { ctx, desc, target } = parse_target(&a.common, &a.target)?;
    let format = resolve_format(a.common.format, a.common.json, Format::Text);
    let budget = budget_from_env(a.budget)?;
    let engine = match a.engine {
        EngineArg::Auto => Engine::Auto,
        EngineArg::Dp => Engine::Dp,
        EngineArg::Brute => Engine::Brute,
        EngineArg::Bool => Engine::Bool,
    };
    let cfg = RunConfig {
        command: "decide",
        field: Some(ctx.descriptor()),
        set: Some(desc.to_string()),
        m: Some(target.m),
        b: Some(target.b.clone()),
        k: Some(a.target.k),
        engine: Some(a.engine.name()),
        budget: Some(budget.to_string()),
        format,
        ..RunConfig::default()
    };
    let mut decider = Decider::new(
        ctx,
        DecideConfig {
            budget,
            threads: a.common.threads,
            engine,
            ..DecideConfig::default()
        },
    );
    let outcome = decider.decide(&desc, &target, a.target.k);
    match format {
        Format::Text => {
            writeln!(out, "{}", cfg.header())?;
            write_outcome_text(out, &outcome?)?;
        }
        Format::Json => emit_json(out, &cfg, &outcome?)?,
        Format::Ldjson => {
            emit_line(out, &Header { config: &cfg })?;
            emit_line(out, &outcome?)?;
        }
    }
    Ok(())
}

fn write_outcome_text(out: &mut impl Write, o: &DecisionOutcome) -> Run {
    writeln!(out, "answer: {}", o.answer)?;
    writeln!(out, "regime: {}", o.regime)?;
    writeln!(out, "duality_applied: {}", o.duality_applied)?;
    if let Some(c) = &o.count {
        writeln!(out, "count: {c}")?;
    }
    if let Some(w) = &o.witness {
        writeln!(out, "witness: {}", join(w))?;
    }
    for h in &o.hypotheses {
        writeln!(out, "hypothesis: {h}")?;
    }
    Ok(())
}

#[derive(Serialize)]
struct CountOutput {
    kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    count: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    positive: Option<bool>,
}

fn count(a: CountArgs, out: &mut impl Write) -> Run {
    let Parsed { ctx, desc, target } = parse_target(&a.common, &a.target)?;
    let format = resolve_format(a.common.format, a.common.json, Format::Text);
    let k = a.target.k;
    let engine = a.engine;
    let engine_name = match engine {
        CountEngine::Dp => "dp",
        CountEngine::Brute => "brute",
        CountEngine::Bool => "bool",
    };
    let cfg = RunConfig {
        command: "count",
        field: Some(ctx.descriptor()),
        set: Some(desc.to_string()),
        m: Some(target.m),
        b: Some(target.b.clone()),
        k: Some(k),
        engine: Some(engine_name),
        format,
        ..RunConfig::default()
    };
    let d = image_set(&ctx, &desc)?;
    let rt = reduce_targets(&ctx, &target);
    let dp = DpConfig {
        threads: a.common.threads,
        memory_cap: DEFAULT_MEMORY_CAP,
    };
    let kind = if a.ordered { "M_k" } else { "N_k" };
    let result = match engine {
        CountEngine::Bool => CountOutput {
            kind,
            count: None,
            positive: Some(bool_dp_positive_with(&ctx, d.elements(), &rt, k, dp)?),
        },
        CountEngine::Dp | CountEngine::Brute => {
            let n = if engine == CountEngine::Dp {
                count_exact_dp_with(&ctx, d.elements(), &rt, k, dp)?.value
            } else {
                count_brute_with_cap(&ctx, d.elements(), &rt, k, DEFAULT_BRUTE_CAP)?.value
            };
            let n = if a.ordered { n * factorial(k as u64) } else { n };
            CountOutput {
                kind,
                positive: None,
                count: Some(n.to_string()),
            }
        }
    };
    match format {
        Format::Text => {
            writeln!(out, "{}", cfg.header())?;
            match (&result.count, result.positive) {
                (Some(c), _) => writeln!(out, "{kind}: {c}")?,
                (None, Some(p)) => writeln!(out, "{kind} > 0: {}", if p { "yes" } else { "no" })?,
                _ => {}
            }
        }
        Format::Json => emit_json(out, &cfg, &result)?,
        Format::Ldjson => {
            emit_line(out, &Header { config: &cfg })?;
            emit_line(out, &result)?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct ValuesetOutput {
    size: u64,
    method: mss::evalsets::SizeMethod,
    enumerated_size: usize,
    elements: Vec<FieldElement>,
}

fn valueset(a: ValuesetArgs, out: &mut impl Write) -> Run {
    let ctx = FieldCtx::parse(&a.common.field)?;
    let desc = EvalSetDesc::parse(&ctx, &a.set)?;
    let format = resolve_format(a.common.format, a.common.json, Format::Text);
    let cfg = RunConfig {
        command: "valueset",
        field: Some(ctx.descriptor()),
        set: Some(desc.to_string()),
        format,
        ..RunConfig::default()
    };
    let size = value_set_size(&ctx, &desc)?;
    let d = image_set(&ctx, &desc)?;
    let result = ValuesetOutput {
        size: size.size,
        method: size.method,
        enumerated_size: d.len(),
        elements: d.elements().to_vec(),
    };
    match format {
        Format::Text => {
            writeln!(out, "{}", cfg.header())?;
            let method = match result.method {
                mss::evalsets::SizeMethod::Formula => "formula",
                mss::evalsets::SizeMethod::Enumerated => "enumerated",
            };
            writeln!(out, "size: {} ({method})", result.size)?;
            if result.enumerated_size as u64 != result.size {
                writeln!(out, "enumerated_size: {}", result.enumerated_size)?;
            }
            writeln!(out, "elements: {}", join(&result.elements))?;
        }
        Format::Json => emit_json(out, &cfg, &result)?,
        Format::Ldjson => {
            emit_line(out, &Header { config: &cfg })?;
            emit_line(out, &result)?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct PreimageOutput {
    /// exact rational, `a` or `a/b`
    size: String,
    case: mss::evalsets::FiberCase,
    enumerated: u64,
    agree: bool,
}

fn preimage(a: PreimageArgs, out: &mut impl Write) -> Run {
    let ctx = FieldCtx::parse(&a.common.field)?;
    let desc = EvalSetDesc::parse(&ctx, &a.set)?;
    let x0 = ctx.parse_element(&a.x0)?;
    let format = resolve_format(a.common.format, a.common.json, Format::Text);
    let cfg = RunConfig {
        command: "preimage",
        field: Some(ctx.descriptor()),
        set: Some(desc.to_string()),
        x0: Some(x0),
        format,
        ..RunConfig::default()
    };
    let (n, param) = match desc {
        EvalSetDesc::Dickson { n, a } => (n, a),
        EvalSetDesc::Monomial { n } => (n, FieldElement::ZERO),
        EvalSetDesc::Explicit { .. } => {
            return Err(Failure::Usage("preimage needs a monomial or Dickson set".into()));
        }
    };
    let f = preimage_count(&ctx, n, param, x0)?;
    let enumerated = fiber_size_enumerated(&ctx, n, param, x0);
    let result = PreimageOutput {
        size: f.size.to_string(),
        case: f.case,
        enumerated,
        agree: f.size.is_integer() && *f.size.numer() == enumerated,
    };
    match format {
        Format::Text => {
            writeln!(out, "{}", cfg.header())?;
            let case = serde_json::to_value(result.case).map_err(|e| Failure::Other(e.to_string()))?;
            writeln!(out, "size: {}", result.size)?;
            writeln!(out, "case: {}", case.as_str().unwrap_or_default())?;
            writeln!(out, "enumerated: {}", result.enumerated)?;
            writeln!(out, "agree: {}", result.agree)?;
        }
        Format::Json => emit_json(out, &cfg, &result)?,
        Format::Ldjson => {
            emit_line(out, &Header { config: &cfg })?;
            emit_line(out, &result)?;
        }
    }
    Ok(())
}

/// One audit record: the report plus the moment order it was run at.
#[derive(Serialize)]
struct AuditRecord<'a> {
    m: u32,
    #[serde(flatten)]
    report: &'a CharSumReport,
}

fn audit(a: AuditArgs, out: &mut impl Write) -> Run {
    let ctx = FieldCtx::parse(&a.common.field)?;
    let desc = EvalSetDesc::parse(&ctx, &a.set)?;
    let format = resolve_format(a.common.format, a.common.json, Format::Ldjson);
    let coverage = match a.samples {
        Some(count) => Coverage::Sample { count, seed: a.seed },
        None if ctx.q() <= EXHAUSTIVE_MAX_Q => Coverage::Exhaustive,
        None => {
            return Err(Failure::Usage(format!(
                "full sweeps are limited to q <= {EXHAUSTIVE_MAX_Q}; pass --samples"
            )))
        }
    };
    let kinds: Vec<AuditKind> = match a.kind {
        Some(k) => vec![k.into()],
        None => applicable_kinds(&ctx, &desc),
    };
    let kind_names: Vec<String> = kinds.iter().map(|k| kind_name(*k)).collect();
    let cfg = RunConfig {
        command: "audit",
        field: Some(ctx.descriptor()),
        set: Some(desc.to_string()),
        m: Some(a.m),
        kind: Some(if kind_names.is_empty() {
            "none".into()
        } else {
            kind_names.join(",")
        }),
        coverage: Some(match coverage {
            Coverage::Exhaustive => "exhaustive".into(),
            Coverage::Sample { count, .. } => format!("sample:{count}"),
        }),
        seed: a.seed,
        format,
        ..RunConfig::default()
    };
    match format {
        Format::Ldjson => {
            emit_line(out, &Header { config: &cfg })?;
            let mut err = None;
            for kind in kinds {
                weil_audit_kind(&ctx, &desc, kind, a.m, coverage, &mut |r| {
                    if err.is_none() {
                        if let Err(e) = emit_line(out, &AuditRecord { m: a.m, report: &r }) {
                            err = Some(e);
                        }
                    }
                })?;
            }
            if let Some(e) = err {
                return Err(e);
            }
        }
        Format::Text | Format::Json => {
            let mut per_kind = Vec::new();
            for kind in kinds {
                per_kind.push((kind_name(kind), weil_audit_summary(&ctx, &desc, kind, a.m, coverage)?));
            }
            if format == Format::Json {
                #[derive(Serialize)]
                struct Kind<'a> {
                    kind: &'a str,
                    #[serde(flatten)]
                    summary: &'a AuditSummary,
                }
                let kinds: Vec<Kind> = per_kind
                    .iter()
                    .map(|(k, s)| Kind { kind: k, summary: s })
                    .collect();
                emit_json(out, &cfg, &serde_json::json!({ "kinds": kinds }))?;
            } else {
                writeln!(out, "{}", cfg.header())?;
                for (k, s) in &per_kind {
                    let margin = s.min_margin.map_or("-".to_string(), |m| format!("{m:.6}"));
                    writeln!(
                        out,
                        "{k}: tests={} violations={} min_margin={margin}",
                        s.tests, s.violations
                    )?;
                }
            }
        }
    }
    Ok(())
}

fn kind_name(k: AuditKind) -> String {
    serde_json::to_value(k)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}
