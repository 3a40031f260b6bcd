//! Call-cost measurement.
//!
//! Three workloads, all driven by a single-threaded client issuing
//! sequential calls and timed per batch on the monotonic clock (a batch
//! is long enough that clock resolution stops mattering):
//!
//! * **noarg** — a void method with no arguments: the transport floor.
//! * **tenargs** — ten structured arguments copied per call.
//! * **policy** — one workload run twice: once with the policy stores
//!   emptied and bypassed (a run flag hard-codes by-reference), once
//!   with explicit method and return rules saying the same thing. The
//!   bypass run never consults the rule engine, so the difference
//!   between the two is the cost of policy resolution itself.
//!
//! The policy workload runs its two configurations back to back within
//! every batch (order alternating per batch), which pairs each rules
//! sample with a bypass sample taken microseconds apart. The reported
//! overhead ratio is the median of those per-batch ratios: pairing
//! cancels drift, the median sheds the occasional batch a scheduler
//! stall lands in. The per-configuration lines still report plain
//! arithmetic means across batches.
//!
//! The server side is a `BenchTarget` service; its policy store is
//! switched remotely through the `BenchControl` surface, since both ends
//! of a call resolve policy (arguments on the caller, returns on the
//! callee).

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Weak};
use std::time::Instant;

use thiserror::Error;

use rrt::node::{CallError, Node, NodeConfig};
use rrt::object::{AppException, ByValueCodec, Instance, Obj};
use rrt::policy::{Depth, MethodKey, PassingMechanism, PolicyRule, RuleTarget};
use rrt::registry::{MethodSignature, RemoteType, ServiceAdaptor};
use rrt::remoteref::ProxyHandle;

use crate::demo::{message_obj, register_demo_classes};

// ── Workload types ──────────────────────────────────────────────────────────

/// The structured argument for the tenargs workload: two fixed-width
/// strings and an integer.
pub struct ComplexArgData {
    pub s10: String,
    pub s25: String,
    pub n: i32,
}

/// Builds a `ComplexArg`, holding the widths to exactly 10 and 25
/// characters.
pub fn complex_arg_instance(s10: &str, s25: &str, n: i32) -> Result<Instance, AppException> {
    if s10.chars().count() != 10 || s25.chars().count() != 25 {
        return Err(AppException::new(
            "BadComplexArg",
            format!("widths must be exactly 10 and 25, got {} and {}", s10.len(), s25.len()),
        ));
    }
    Ok(Instance::new(
        "ComplexArg",
        Arc::new(ComplexArgData { s10: s10.to_string(), s25: s25.to_string(), n }),
    ))
}

/// A deterministic sample argument.
pub fn sample_complex_arg(n: i32) -> Obj {
    let inst = complex_arg_instance(&format!("{n:010}"), &format!("{n:025}"), n)
        .expect("formatted widths are exact");
    Obj::Instance(inst)
}

fn complex_arg_codec() -> ByValueCodec {
    ByValueCodec {
        to_fields: Arc::new(|inst: &Instance| {
            let arg = inst.downcast::<ComplexArgData>()?;
            Some(vec![
                ("s10".to_string(), Obj::Text(arg.s10.clone())),
                ("s25".to_string(), Obj::Text(arg.s25.clone())),
                ("n".to_string(), Obj::I32(arg.n)),
            ])
        }),
        from_fields: Arc::new(|fields| {
            let mut s10 = None;
            let mut s25 = None;
            let mut n = None;
            for (name, value) in &fields {
                match name.as_str() {
                    "s10" => s10 = value.as_text().map(String::from),
                    "s25" => s25 = value.as_text().map(String::from),
                    "n" => n = value.as_i32(),
                    _ => {}
                }
            }
            match (s10, s25, n) {
                (Some(s10), Some(s25), Some(n)) => {
                    complex_arg_instance(&s10, &s25, n).map_err(|e| e.message)
                }
                _ => Err("ComplexArg needs fields `s10`, `s25` (text) and `n` (i32)".into()),
            }
        }),
    }
}

/// Registers the benchmark's by-value class with a runtime. The demo
/// classes carry the rest ([`register_demo_classes`]).
pub fn register_bench_classes(node: &Arc<Node>) {
    node.classes().register_by_value("ComplexArg", complex_arg_codec());
}

// ── The served target ───────────────────────────────────────────────────────

/// How many messages one `exchange` call carries. Each by-reference
/// argument costs one policy resolution per call (the echoed return is a
/// reference re-transmission and asks nothing), so this sets the
/// workload's resolution count: enough to measure, small enough that the
/// engine's share of a call stays marginal.
pub const EXCHANGE_ARGS: usize = 4;

struct BenchTargetData {
    node: Weak<Node>,
    served: AtomicU64,
}

fn bt_ten_args(data: &Arc<BenchTargetData>, args: &[Obj]) -> Result<Obj, AppException> {
    for arg in args {
        match arg {
            Obj::Instance(inst) if inst.class_name() == "ComplexArg" => {}
            other => {
                return Err(AppException::new(
                    "BadArgument",
                    format!("tenArgs wants ComplexArg copies, got {other:?}"),
                ))
            }
        }
    }
    data.served.fetch_add(1, Ordering::Relaxed);
    Ok(Obj::Null)
}

fn bt_exchange(data: &Arc<BenchTargetData>, args: &[Obj]) -> Result<Obj, AppException> {
    data.served.fetch_add(1, Ordering::Relaxed);
    Ok(args[0].clone())
}

fn bt_configure(data: &Arc<BenchTargetData>, args: &[Obj]) -> Result<Obj, AppException> {
    let mode = args
        .first()
        .and_then(Obj::as_text)
        .ok_or_else(|| AppException::new("BadArgument", "configure takes a mode name"))?;
    let node = data
        .node
        .upgrade()
        .ok_or_else(|| AppException::new("NodeGone", "serving runtime has shut down"))?;
    apply_bench_policy(&node, mode)?;
    Ok(Obj::Null)
}

/// Builds the benchmark service adaptor. Alongside the three measured
/// methods it carries the policy-control surface and a few probes with
/// distinct return types, used to observe failure-mode defaults.
pub fn bench_target_adaptor(node: &Arc<Node>) -> Arc<ServiceAdaptor> {
    let data =
        Arc::new(BenchTargetData { node: Arc::downgrade(node), served: AtomicU64::new(0) });
    let instance = Instance::new("BenchTarget", Arc::clone(&data));
    let (d1, d2, d3, d4, d5) = (
        Arc::clone(&data),
        Arc::clone(&data),
        Arc::clone(&data),
        Arc::clone(&data),
        Arc::clone(&data),
    );
    let shown = Arc::clone(&data);
    Arc::new(
        ServiceAdaptor::builder(instance)
            .method(MethodSignature::new::<&str>("noArg", &[], "void"), move |_| {
                d1.served.fetch_add(1, Ordering::Relaxed);
                Ok(Obj::Null)
            })
            .method(
                MethodSignature::new("tenArgs", &["ComplexArg"; 10], "void"),
                move |args| bt_ten_args(&d2, args),
            )
            .method(
                MethodSignature::new("exchange", &["Message"; EXCHANGE_ARGS], "Message"),
                move |args| bt_exchange(&d3, args),
            )
            .method(MethodSignature::new::<&str>("count", &[], "i32"), move |_| {
                Ok(Obj::I32(d4.served.load(Ordering::Relaxed) as i32))
            })
            .method(MethodSignature::new::<&str>("ready", &[], "bool"), |_| Ok(Obj::Bool(true)))
            .method(MethodSignature::new::<&str>("sample", &[], "Message"), |_| {
                Ok(message_obj(1, "sample"))
            })
            .method(MethodSignature::new::<&str>("explode", &[], "i32"), |_| {
                Err(AppException::new("BenchFault", "deliberate failure"))
            })
            .method(MethodSignature::new("configure", &["text"], "void"), move |args| {
                bt_configure(&d5, args)
            })
            .display(move || format!("BenchTarget({} calls)", shown.served.load(Ordering::Relaxed)))
            .build(),
    )
}

pub fn ibench_type() -> RemoteType {
    RemoteType::new(
        "IBench",
        vec![
            MethodSignature::new::<&str>("noArg", &[], "void"),
            MethodSignature::new("tenArgs", &["ComplexArg"; 10], "void"),
            MethodSignature::new("exchange", &["Message"; EXCHANGE_ARGS], "Message"),
            MethodSignature::new::<&str>("count", &[], "i32"),
            MethodSignature::new::<&str>("ready", &[], "bool"),
            MethodSignature::new::<&str>("sample", &[], "Message"),
            MethodSignature::new::<&str>("explode", &[], "i32"),
        ],
    )
    .expect("no duplicate overloads")
}

pub fn ibench_control_type() -> RemoteType {
    RemoteType::new(
        "IBenchControl",
        vec![MethodSignature::new("configure", &["text"], "void")],
    )
    .expect("no duplicate overloads")
}

// ── Policy phases ───────────────────────────────────────────────────────────

pub fn method_key_exchange() -> MethodKey {
    MethodKey::new("BenchTarget", "exchange", &["Message"; EXCHANGE_ARGS])
}

/// Puts one runtime's policy store into a named benchmark phase. Both
/// ends of the measured call run the same function, the server via its
/// `configure` control method.
pub fn apply_bench_policy(node: &Node, mode: &str) -> Result<(), AppException> {
    let store = node.policy();
    store.clear();
    let rule = |target, mechanism| PolicyRule {
        target,
        mechanism,
        depth: Depth::Unbounded,
        priority: 0,
    };
    match mode {
        "noarg" => node.set_policy_bypass(false),
        "tenargs" => {
            node.set_policy_bypass(false);
            store
                .set_rule(rule(
                    RuleTarget::Class { class_name: "ComplexArg".to_string() },
                    PassingMechanism::ByValue,
                ))
                .expect("statically valid rule");
        }
        "policy-bypass" => node.set_policy_bypass(true),
        "policy-rules" => {
            node.set_policy_bypass(false);
            store
                .set_rule(rule(
                    RuleTarget::Method(method_key_exchange()),
                    PassingMechanism::ByReference,
                ))
                .expect("statically valid rule");
            store
                .set_rule(rule(
                    RuleTarget::Return(method_key_exchange()),
                    PassingMechanism::ByReference,
                ))
                .expect("statically valid rule");
        }
        other => {
            return Err(AppException::new("BadMode", format!("unknown bench phase `{other}`")))
        }
    }
    Ok(())
}

// ── The harness ─────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchMode {
    NoArg,
    TenArgs,
    PolicyOverhead,
}

#[derive(Debug, Clone)]
pub struct BenchSpec {
    pub mode: BenchMode,
    pub batches: u32,
    pub calls_per_batch: u32,
    pub host: String,
    pub port: u16,
}

impl BenchSpec {
    pub fn new(mode: BenchMode, host: &str, port: u16) -> BenchSpec {
        BenchSpec { mode, batches: 100, calls_per_batch: 4000, host: host.to_string(), port }
    }
}

/// Per-call statistics of one timed configuration.
#[derive(Debug, Clone)]
pub struct RunStats {
    pub label: String,
    pub batches: u32,
    pub calls: u64,
    pub mean_us: f64,
    pub stddev_us: f64,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub runs: Vec<RunStats>,
    /// rules over bypass, the median of per-batch paired ratios; present
    /// for the policy workload.
    pub overhead_ratio: Option<f64>,
}

impl BenchReport {
    /// One parseable line per timed configuration:
    /// `label, batches, calls, mean_us, stddev_us`.
    pub fn machine_lines(&self) -> Vec<String> {
        self.runs
            .iter()
            .map(|r| {
                format!(
                    "{}, {}, {}, {:.3}, {:.3}",
                    r.label, r.batches, r.calls, r.mean_us, r.stddev_us
                )
            })
            .collect()
    }

    pub fn human_text(&self) -> String {
        let mut out = String::from("per-call latency:\n");
        for r in &self.runs {
            out.push_str(&format!(
                "  {}: {:.2} us/call (stddev {:.2}) over {} batches, {} calls\n",
                r.label, r.mean_us, r.stddev_us, r.batches, r.calls
            ));
        }
        if let Some(ratio) = self.overhead_ratio {
            out.push_str(&format!("policy overhead ratio (rules/bypass): {ratio:.4}\n"));
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("benchmark client could not serve: {0}")]
    Bind(#[from] std::io::Error),
    #[error(transparent)]
    Call(#[from] CallError),
    #[error("expected a proxy for `{0}`")]
    NotAProxy(String),
}

fn stats_from(label: &str, batches: u32, calls_per_batch: u32, per_call_us: &[f64]) -> RunStats {
    let n = per_call_us.len() as f64;
    let mean = per_call_us.iter().sum::<f64>() / n;
    let variance = if per_call_us.len() > 1 {
        per_call_us.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    RunStats {
        label: label.to_string(),
        batches,
        calls: u64::from(batches) * u64::from(calls_per_batch),
        mean_us: mean,
        stddev_us: variance.sqrt(),
    }
}

/// Times `batches` batches of `calls_per_batch` sequential calls and
/// reports per-call statistics across batches.
fn timed_run(
    label: &str,
    batches: u32,
    calls_per_batch: u32,
    mut call: impl FnMut() -> Result<(), CallError>,
) -> Result<RunStats, CallError> {
    let mut per_call_us = Vec::with_capacity(batches as usize);
    for _ in 0..batches {
        let started = Instant::now();
        for _ in 0..calls_per_batch {
            call()?;
        }
        per_call_us.push(started.elapsed().as_secs_f64() * 1e6 / f64::from(calls_per_batch));
    }
    Ok(stats_from(label, batches, calls_per_batch, &per_call_us))
}

/// The median of elementwise ratios. Index `i` of both slices was
/// measured within one batch, moments apart, so each ratio is immune to
/// slow drift; the median then ignores the odd batch a scheduler stall
/// landed in.
fn paired_ratio(numerators: &[f64], denominators: &[f64]) -> f64 {
    let mut ratios: Vec<f64> =
        numerators.iter().zip(denominators).map(|(n, d)| n / d).collect();
    ratios.sort_by(|a, b| a.total_cmp(b));
    let mid = ratios.len() / 2;
    if ratios.len() % 2 == 1 {
        ratios[mid]
    } else {
        (ratios[mid - 1] + ratios[mid]) / 2.0
    }
}

fn expect_proxy(obj: Obj, what: &str) -> Result<Arc<ProxyHandle>, BenchError> {
    match obj {
        Obj::Proxy(p) => Ok(p),
        _ => Err(BenchError::NotAProxy(what.to_string())),
    }
}

/// Runs one configured workload against a serving target and reports
/// per-call statistics. Every call is counted; the totals in the report
/// are exactly `batches x calls_per_batch` per configuration.
pub fn run_bench(spec: &BenchSpec) -> Result<BenchReport, BenchError> {
    let client = Node::new(NodeConfig::default());
    register_demo_classes(&client);
    register_bench_classes(&client);
    // The client serves too: by-reference arguments it sends must name a
    // callable endpoint.
    client.serve()?;
    let result = drive(&client, spec);
    client.shutdown();
    result
}

fn drive(client: &Arc<Node>, spec: &BenchSpec) -> Result<BenchReport, BenchError> {
    let bench =
        expect_proxy(client.get_remote_reference(&spec.host, spec.port, "Bench")?, "Bench")?;
    let control = expect_proxy(
        client.get_remote_reference(&spec.host, spec.port, "BenchControl")?,
        "BenchControl",
    )?;
    let phase = |name: &str| -> Result<(), BenchError> {
        control.invoke("configure", vec![Obj::text(name)])?;
        apply_bench_policy(client, name).map_err(CallError::App)?;
        Ok(())
    };
    let warmup = spec.calls_per_batch.min(50);

    match spec.mode {
        BenchMode::NoArg => {
            phase("noarg")?;
            let call = || bench.invoke("noArg", vec![]).map(drop);
            for _ in 0..warmup {
                call()?;
            }
            let run = timed_run("noarg", spec.batches, spec.calls_per_batch, call)?;
            Ok(BenchReport { runs: vec![run], overhead_ratio: None })
        }
        BenchMode::TenArgs => {
            phase("tenargs")?;
            let args: Vec<Obj> = (0..10).map(sample_complex_arg).collect();
            let call = || bench.invoke("tenArgs", args.clone()).map(drop);
            for _ in 0..warmup {
                call()?;
            }
            let run = timed_run("tenargs", spec.batches, spec.calls_per_batch, call)?;
            Ok(BenchReport { runs: vec![run], overhead_ratio: None })
        }
        BenchMode::PolicyOverhead => {
            let messages: Vec<Obj> =
                (0..EXCHANGE_ARGS as i32).map(|i| message_obj(i, "exchange")).collect();
            let call = || bench.invoke("exchange", messages.clone()).map(drop);
            // Touch both configurations before timing anything, so
            // one-time costs (implicit exposure, server-side proxies)
            // are paid up front.
            for name in ["policy-rules", "policy-bypass"] {
                phase(name)?;
                for _ in 0..warmup {
                    call()?;
                }
            }
            let mut bypass_us = Vec::with_capacity(spec.batches as usize);
            let mut rules_us = Vec::with_capacity(spec.batches as usize);
            for batch in 0..spec.batches {
                // Interleave, alternating which configuration goes
                // first, so drift cannot favor either side.
                let order = if batch % 2 == 0 {
                    [("policy-bypass", &mut bypass_us), ("policy-rules", &mut rules_us)]
                } else {
                    [("policy-rules", &mut rules_us), ("policy-bypass", &mut bypass_us)]
                };
                for (name, samples) in order {
                    phase(name)?;
                    let started = Instant::now();
                    for _ in 0..spec.calls_per_batch {
                        call()?;
                    }
                    samples
                        .push(started.elapsed().as_secs_f64() * 1e6 / f64::from(spec.calls_per_batch));
                }
            }
            let bypass = stats_from("policy-bypass", spec.batches, spec.calls_per_batch, &bypass_us);
            let rules = stats_from("policy-rules", spec.batches, spec.calls_per_batch, &rules_us);
            let ratio = paired_ratio(&rules_us, &bypass_us);
            Ok(BenchReport { runs: vec![bypass, rules], overhead_ratio: Some(ratio) })
        }
    }
}
