//! The ring-routing demonstration.
//!
//! One script drives the same two `P2PNode` objects in either of two
//! worlds:
//!
//! * **single-process** — both nodes are plain local instances and every
//!   call is a direct invocation;
//! * **two-node** — each node lives behind its own runtime on a loopback
//!   port, the driver holds proxies fetched by service name, and every
//!   call crosses HTTP.
//!
//! The script seeds its RNG, applies the same policies, and emits the
//! same trace lines either way, so the two runs are expected to produce
//! byte-identical traces — that equality is the demonstration.
//!
//! Two policies shape the distributed run: messages larger than
//! [`MAX_MESSAGE_BYTES`] travel by reference while smaller ones are
//! copied (a per-call argument rule re-set before every route), and each
//! node's `key` field is cached inside the references handed out, so
//! peers read keys without network traffic. `Key` itself is declared
//! by-value, as identifiers should be.

use std::sync::Arc;

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use rrt::node::{CallError, Node, NodeConfig};
use rrt::object::Obj;
use rrt::policy::{
    Depth, FieldCacheRule, MethodKey, PassingMechanism, PolicyError, PolicyRule, RuleTarget,
};
use rrt::registry::RegistryError;

use crate::demo::{
    call_obj, ip2pnode_type, imanage_type, imonitor_type, key_obj, message_obj, p2pnode_adaptor,
    p2pnode_instance, register_demo_classes, short_hex, KEY_BYTES,
};

/// Bodies above this size route by reference; smaller ones are copied.
pub const MAX_MESSAGE_BYTES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum P2pMode {
    TwoNode,
    SingleProcess,
}

#[derive(Debug, Error)]
pub enum DemoError {
    #[error("demo call failed: {0}")]
    Call(#[from] CallError),
    #[error("could not serve a demo runtime: {0}")]
    Bind(#[from] std::io::Error),
    #[error("could not expose a demo node: {0}")]
    Expose(#[from] RegistryError),
    #[error("could not set a demo policy: {0}")]
    Policy(#[from] PolicyError),
    #[error("expected a proxy for `{0}`")]
    NotAProxy(String),
}

/// One ring node as the driver sees it: its key and the three service
/// surfaces. In single-process mode all three are the same instance; in
/// two-node mode they are proxies for the services of one runtime.
struct RingNode {
    key: [u8; KEY_BYTES],
    p2p: Obj,
    manage: Obj,
    monitor: Obj,
    /// Log lines already drained into the trace.
    drained: usize,
}

struct PlannedMessage {
    id: i32,
    body: String,
    dest: [u8; KEY_BYTES],
    /// Index of the node the driver hands the message to.
    entry: usize,
}

pub fn method_key_route() -> MethodKey {
    MethodKey::new("P2PNode", "route", &["Key", "Message"])
}

/// The per-call size rule: re-set before every route call, replacing the
/// previous rule in the same slot.
pub fn route_size_rule(body_len: usize) -> PolicyRule {
    let mechanism = if body_len > MAX_MESSAGE_BYTES {
        PassingMechanism::ByReference
    } else {
        PassingMechanism::ByValue
    };
    PolicyRule {
        target: RuleTarget::Argument { method: method_key_route(), index: 1 },
        mechanism,
        depth: Depth::Unbounded,
        priority: 1,
    }
}

/// The standing demo policies: cache each node's key inside its
/// references, and copy `Key` values wherever they appear.
pub fn apply_base_policy(node: &Node) -> Result<(), PolicyError> {
    node.policy().set_field_cache(FieldCacheRule {
        class_name: "P2PNode".to_string(),
        field: "key".to_string(),
        getter_name: "getKey".to_string(),
        setter_name: None,
    });
    node.policy().set_rule(PolicyRule {
        target: RuleTarget::Class { class_name: "Key".to_string() },
        mechanism: PassingMechanism::ByValue,
        depth: Depth::Unbounded,
        priority: 0,
    })
}

fn fresh_runtime() -> Arc<Node> {
    let node = Node::new(NodeConfig::default());
    register_demo_classes(&node);
    node
}

fn random_key(rng: &mut ChaCha8Rng) -> [u8; KEY_BYTES] {
    let mut key = [0u8; KEY_BYTES];
    rng.fill_bytes(&mut key);
    key
}

/// The fixed message sequence: six ordinary messages alternating between
/// small (copied) and large (proxied) bodies and between entry nodes,
/// then one aimed at a stopped node, then the same route again after a
/// restart.
fn build_plan(rng: &mut ChaCha8Rng, key_b: [u8; KEY_BYTES]) -> Vec<PlannedMessage> {
    let mut plan = Vec::new();
    for id in 0..6 {
        let body = if id % 2 == 0 {
            format!("ping-{id}")
        } else {
            format!("payload-{id}-{}", "x".repeat(90))
        };
        plan.push(PlannedMessage { id, body, dest: random_key(rng), entry: (id % 2) as usize });
    }
    for id in [6, 7] {
        plan.push(PlannedMessage {
            id,
            body: format!("ping-{id}"),
            dest: key_b,
            entry: 0,
        });
    }
    plan
}

fn expect_proxy(obj: Obj, what: &str) -> Result<Obj, DemoError> {
    match obj {
        Obj::Proxy(_) => Ok(obj),
        _ => Err(DemoError::NotAProxy(what.to_string())),
    }
}

/// Runs the demo and returns the trace, one line per entry.
pub fn run(mode: P2pMode, seed: u64) -> Result<Vec<String>, DemoError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let key_a = random_key(&mut rng);
    let key_b = random_key(&mut rng);
    let plan = build_plan(&mut rng, key_b);

    let (runtimes, mut nodes) = match mode {
        P2pMode::SingleProcess => {
            // One runtime, two local instances; nothing serves and
            // nothing is ever marshalled.
            let runtime = fresh_runtime();
            apply_base_policy(&runtime)?;
            let a = Obj::Instance(p2pnode_instance(key_a));
            let b = Obj::Instance(p2pnode_instance(key_b));
            let node = |key, obj: &Obj| RingNode {
                key,
                p2p: obj.clone(),
                manage: obj.clone(),
                monitor: obj.clone(),
                drained: 0,
            };
            (vec![runtime], [node(key_a, &a), node(key_b, &b)])
        }
        P2pMode::TwoNode => {
            // Each ring node gets its own serving runtime; the driver
            // runs a third, which also serves so that by-reference
            // messages it originates stay callable.
            let driver = fresh_runtime();
            apply_base_policy(&driver)?;
            driver.serve()?;
            let make_node = |key| -> Result<(Arc<Node>, u16), DemoError> {
                let runtime = fresh_runtime();
                apply_base_policy(&runtime)?;
                let instance = p2pnode_instance(key);
                let adaptor = p2pnode_adaptor(&instance).expect("factory accepts its own class");
                runtime.expose("P2P", Arc::clone(&adaptor), Some(ip2pnode_type()))?;
                runtime.expose("Manage", Arc::clone(&adaptor), Some(imanage_type()))?;
                runtime.expose("Monitor", adaptor, Some(imonitor_type()))?;
                let port = runtime.serve()?;
                Ok((runtime, port))
            };
            let (ra, port_a) = make_node(key_a)?;
            let (rb, port_b) = make_node(key_b)?;
            let host = driver.host().to_string();
            let fetch = |port: u16, name: &str| -> Result<Obj, DemoError> {
                expect_proxy(driver.get_remote_reference(&host, port, name)?, name)
            };
            let node_a = RingNode {
                key: key_a,
                p2p: fetch(port_a, "P2P")?,
                manage: fetch(port_a, "Manage")?,
                monitor: fetch(port_a, "Monitor")?,
                drained: 0,
            };
            let node_b = RingNode {
                key: key_b,
                p2p: fetch(port_b, "P2P")?,
                manage: fetch(port_b, "Manage")?,
                monitor: fetch(port_b, "Monitor")?,
                drained: 0,
            };
            (vec![driver, ra, rb], [node_a, node_b])
        }
    };

    let trace = run_script(&runtimes, &mut nodes, &plan);
    for runtime in &runtimes {
        runtime.shutdown();
    }
    trace
}

fn run_script(
    runtimes: &[Arc<Node>],
    nodes: &mut [RingNode; 2],
    plan: &[PlannedMessage],
) -> Result<Vec<String>, DemoError> {
    let mut trace =
        vec![format!("ring: a={} b={}", short_hex(&nodes[0].key), short_hex(&nodes[1].key))];

    // Wire the ring. In the distributed world the peer argument is a
    // proxy, which the receiving runtime resolves into its own handle —
    // complete with the cached key snapshot carried by the reference.
    call_obj(&nodes[0].p2p, "addPeer", vec![nodes[1].p2p.clone()])?;
    call_obj(&nodes[1].p2p, "addPeer", vec![nodes[0].p2p.clone()])?;

    for message in plan {
        // Management interlude: park node b before message 6, revive it
        // before message 7.
        if message.id == 6 {
            trace.push("manage: stop node-b".to_string());
            call_obj(&nodes[1].manage, "stop", vec![])?;
        }
        if message.id == 7 {
            trace.push("manage: start node-b".to_string());
            call_obj(&nodes[1].manage, "start", vec![])?;
        }

        // The per-call policy: how this message travels depends on its
        // size, decided here, right before the call.
        for runtime in runtimes {
            runtime.policy().set_rule(route_size_rule(message.body.len()))?;
        }

        let msg = message_obj(message.id, &message.body);
        let outcome = call_obj(
            &nodes[message.entry].p2p,
            "route",
            vec![key_obj(message.dest), msg],
        );

        let mut handled = Vec::new();
        for node in nodes.iter_mut() {
            handled.extend(drain_log(node)?);
        }
        handled.sort_by_key(|line| line_order(line));
        trace.extend(handled);

        match outcome {
            Ok(_) => trace.push(format!("msg {} result: delivered", message.id)),
            Err(CallError::App(e)) => {
                trace.push(format!("msg {} result: rejected ({}: {})", message.id, e.type_name, e.message));
            }
            Err(other) => return Err(other.into()),
        }
    }
    Ok(trace)
}

/// Fetches the lines a node logged since the last drain.
fn drain_log(node: &mut RingNode) -> Result<Vec<String>, DemoError> {
    let text = call_obj(&node.monitor, "getLog", vec![])?;
    let all: Vec<String> = text
        .as_text()
        .unwrap_or("")
        .split('\n')
        .filter(|line| !line.is_empty())
        .map(String::from)
        .collect();
    let fresh = all[node.drained.min(all.len())..].to_vec();
    node.drained = all.len();
    Ok(fresh)
}

/// Orders the lines of one message's journey: by hop, and within a hop
/// the routing announcement before the forward/deliver outcome.
fn line_order(line: &str) -> (i32, u8) {
    let hop = line
        .split_whitespace()
        .nth(3)
        .and_then(|t| t.parse().ok())
        .unwrap_or(i32::MAX);
    let kind = u8::from(!line.contains(": routing"));
    (hop, kind)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_process_traces_are_deterministic() {
        let one = run(P2pMode::SingleProcess, 42).unwrap();
        let two = run(P2pMode::SingleProcess, 42).unwrap();
        assert_eq!(one, two);
        assert!(one.len() > 10);
        assert!(one[0].starts_with("ring: a="));
        // The stopped-node interlude shows up as a rejection.
        assert!(one.iter().any(|l| l.contains("rejected (NodeStopped")));
        assert!(one.iter().any(|l| l.contains("result: delivered")));
    }

    #[test]
    fn different_seeds_give_different_rings() {
        let one = run(P2pMode::SingleProcess, 1).unwrap();
        let two = run(P2pMode::SingleProcess, 2).unwrap();
        assert_ne!(one[0], two[0]);
    }

    #[test]
    fn size_rule_flips_with_the_body_length() {
        assert_eq!(route_size_rule(10).mechanism, PassingMechanism::ByValue);
        assert_eq!(route_size_rule(MAX_MESSAGE_BYTES).mechanism, PassingMechanism::ByValue);
        assert_eq!(
            route_size_rule(MAX_MESSAGE_BYTES + 1).mechanism,
            PassingMechanism::ByReference
        );
    }
}
