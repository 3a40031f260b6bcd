//! The ring-routing demo classes: `Key`, `Message` and `P2PNode`.
//!
//! All three are plain application objects — none of them knows about
//! the runtime. A `P2PNode` holds its peers and in-flight messages as
//! [`Obj`] values, so a peer may equally be a local instance or a proxy
//! for a node in another address space; the routing code cannot tell the
//! difference. [`call_obj`] is the uniform invocation helper that makes
//! that work: proxies go through their runtime, local instances go
//! through [`dispatch_local`], and both paths run the same method bodies
//! the service adaptors bind.

use std::sync::atomic::{AtomicBool, AtomicI32, Ordering};
use std::sync::{Arc, Mutex};

use rrt::node::{CallError, Node};
use rrt::object::{AppException, ByValueCodec, Instance, Obj};
use rrt::registry::{MethodSignature, RemoteType, ServiceAdaptor};

// ── Keys ────────────────────────────────────────────────────────────────────

/// Width of a ring identifier in bytes (160 bits).
pub const KEY_BYTES: usize = 20;

/// A 160-bit ring identifier. Keys are immutable; the demo declares an
/// explicit by-value class policy for them, so they are copied across
/// address spaces rather than proxied.
pub struct KeyData(pub [u8; KEY_BYTES]);

pub fn key_instance(bits: [u8; KEY_BYTES]) -> Instance {
    Instance::new("Key", Arc::new(KeyData(bits)))
}

pub fn key_obj(bits: [u8; KEY_BYTES]) -> Obj {
    Obj::Instance(key_instance(bits))
}

/// Extracts the bits from a `Key`. Keys only ever exist locally (their
/// class policy copies them), so anything but a `Key` instance is an
/// application error.
pub fn key_bits(obj: &Obj) -> Result<[u8; KEY_BYTES], AppException> {
    match obj {
        Obj::Instance(inst) if inst.class_name() == "Key" => inst
            .downcast::<KeyData>()
            .map(|k| k.0)
            .ok_or_else(|| AppException::new("BadKey", "Key instance holds a foreign payload")),
        other => Err(AppException::new("BadKey", format!("expected a Key, got {other:?}"))),
    }
}

/// Abbreviated rendering used in routing traces and display strings.
pub fn short_hex(bits: &[u8; KEY_BYTES]) -> String {
    hex::encode(&bits[..4])
}

/// `(a - b) mod 2^160`, big-endian.
fn wrapping_sub(a: &[u8; KEY_BYTES], b: &[u8; KEY_BYTES]) -> [u8; KEY_BYTES] {
    let mut out = [0u8; KEY_BYTES];
    let mut borrow = 0u16;
    for i in (0..KEY_BYTES).rev() {
        let d = 0x100 + u16::from(a[i]) - u16::from(b[i]) - borrow;
        out[i] = (d & 0xff) as u8;
        borrow = u16::from(d < 0x100);
    }
    out
}

/// Distance between two identifiers on the 2^160 ring: the shorter of
/// the two arcs between them. Big-endian arrays compare numerically via
/// their lexicographic order.
pub fn ring_distance(a: &[u8; KEY_BYTES], b: &[u8; KEY_BYTES]) -> [u8; KEY_BYTES] {
    let forward = wrapping_sub(b, a);
    let backward = wrapping_sub(a, b);
    forward.min(backward)
}

fn key_codec() -> ByValueCodec {
    ByValueCodec {
        to_fields: Arc::new(|inst: &Instance| {
            let key = inst.downcast::<KeyData>()?;
            Some(vec![("bits".to_string(), Obj::Text(hex::encode(key.0)))])
        }),
        from_fields: Arc::new(|fields| {
            let bits = fields
                .iter()
                .find(|(name, _)| name == "bits")
                .and_then(|(_, v)| v.as_text())
                .ok_or("Key needs a text field `bits`")?;
            if bits.len() != 2 * KEY_BYTES
                || !bits.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
            {
                return Err(format!("`bits` must be {} lowercase hex characters", 2 * KEY_BYTES));
            }
            let mut out = [0u8; KEY_BYTES];
            out.copy_from_slice(&hex::decode(bits).expect("validated hex"));
            Ok(key_instance(out))
        }),
    }
}

// ── Messages ────────────────────────────────────────────────────────────────

/// A routed payload. The hop counter is the only mutable part; routing
/// increments it on every forward, whether the message at hand is the
/// original or a copy.
pub struct MessageData {
    pub id: i32,
    pub body: String,
    hops: AtomicI32,
}

pub fn message_instance(id: i32, body: &str) -> Instance {
    Instance::new(
        "Message",
        Arc::new(MessageData { id, body: body.to_string(), hops: AtomicI32::new(0) }),
    )
}

pub fn message_obj(id: i32, body: &str) -> Obj {
    Obj::Instance(message_instance(id, body))
}

fn message_codec() -> ByValueCodec {
    ByValueCodec {
        to_fields: Arc::new(|inst: &Instance| {
            let msg = inst.downcast::<MessageData>()?;
            Some(vec![
                ("id".to_string(), Obj::I32(msg.id)),
                ("body".to_string(), Obj::Text(msg.body.clone())),
                ("hops".to_string(), Obj::I32(msg.hops.load(Ordering::SeqCst))),
            ])
        }),
        from_fields: Arc::new(|fields| {
            let mut id = None;
            let mut body = None;
            let mut hops = None;
            for (name, value) in &fields {
                match name.as_str() {
                    "id" => id = value.as_i32(),
                    "body" => body = value.as_text().map(String::from),
                    "hops" => hops = value.as_i32(),
                    _ => {}
                }
            }
            match (id, body, hops) {
                (Some(id), Some(body), Some(hops)) => Ok(Instance::new(
                    "Message",
                    Arc::new(MessageData { id, body, hops: AtomicI32::new(hops) }),
                )),
                _ => Err("Message needs fields `id` (i32), `body` (text), `hops` (i32)".into()),
            }
        }),
    }
}

fn msg_get_id(data: &Arc<MessageData>) -> Result<Obj, AppException> {
    Ok(Obj::I32(data.id))
}

fn msg_get_body(data: &Arc<MessageData>) -> Result<Obj, AppException> {
    Ok(Obj::Text(data.body.clone()))
}

fn msg_get_hops(data: &Arc<MessageData>) -> Result<Obj, AppException> {
    Ok(Obj::I32(data.hops.load(Ordering::SeqCst)))
}

fn msg_set_hops(data: &Arc<MessageData>, args: &[Obj]) -> Result<Obj, AppException> {
    let hops = args
        .first()
        .and_then(Obj::as_i32)
        .ok_or_else(|| AppException::new("BadArgument", "setHops takes one i32"))?;
    data.hops.store(hops, Ordering::SeqCst);
    Ok(Obj::Null)
}

pub fn message_adaptor(inst: &Instance) -> Option<Arc<ServiceAdaptor>> {
    let data = inst.downcast::<MessageData>()?;
    let (d1, d2, d3, d4) = (Arc::clone(&data), Arc::clone(&data), Arc::clone(&data), Arc::clone(&data));
    let shown = Arc::clone(&data);
    Some(Arc::new(
        ServiceAdaptor::builder(inst.clone())
            .method(MethodSignature::new::<&str>("getId", &[], "i32"), move |_| msg_get_id(&d1))
            .method(MethodSignature::new::<&str>("getBody", &[], "text"), move |_| {
                msg_get_body(&d2)
            })
            .method(MethodSignature::new::<&str>("getHops", &[], "i32"), move |_| {
                msg_get_hops(&d3)
            })
            .method(MethodSignature::new("setHops", &["i32"], "void"), move |args| {
                msg_set_hops(&d4, args)
            })
            .display(move || format!("Message({}, {} bytes)", shown.id, shown.body.len()))
            .build(),
    ))
}

pub fn imessage_type() -> RemoteType {
    RemoteType::new(
        "IMessage",
        vec![
            MethodSignature::new::<&str>("getId", &[], "i32"),
            MethodSignature::new::<&str>("getBody", &[], "text"),
            MethodSignature::new::<&str>("getHops", &[], "i32"),
            MethodSignature::new("setHops", &["i32"], "void"),
        ],
    )
    .expect("no duplicate overloads")
}

// ── Ring nodes ──────────────────────────────────────────────────────────────

/// A node in the routing ring: a fixed key, a peer list, and a log of
/// everything it has handled. Peers and messages are [`Obj`] values —
/// local instances and remote proxies route identically.
pub struct P2PNodeData {
    key: [u8; KEY_BYTES],
    peers: Mutex<Vec<Obj>>,
    log: Mutex<Vec<String>>,
    running: AtomicBool,
}

pub fn p2pnode_instance(key: [u8; KEY_BYTES]) -> Instance {
    Instance::new(
        "P2PNode",
        Arc::new(P2PNodeData {
            key,
            peers: Mutex::new(Vec::new()),
            log: Mutex::new(Vec::new()),
            running: AtomicBool::new(true),
        }),
    )
}

pub fn p2pnode_obj(key: [u8; KEY_BYTES]) -> Obj {
    Obj::Instance(p2pnode_instance(key))
}

fn node_get_key(data: &Arc<P2PNodeData>) -> Result<Obj, AppException> {
    Ok(key_obj(data.key))
}

fn node_add_peer(data: &Arc<P2PNodeData>, args: &[Obj]) -> Result<Obj, AppException> {
    let peer = args
        .first()
        .ok_or_else(|| AppException::new("BadArgument", "addPeer takes one node"))?;
    let accepted = match peer {
        Obj::Instance(inst) => inst.class_name() == "P2PNode",
        Obj::Proxy(p) => p.real_class_name() == "P2PNode",
        _ => false,
    };
    if !accepted {
        return Err(AppException::new("BadPeer", format!("not a ring node: {peer:?}")));
    }
    data.peers.lock().unwrap().push(peer.clone());
    Ok(Obj::Null)
}

fn node_get_log(data: &Arc<P2PNodeData>) -> Result<Obj, AppException> {
    Ok(Obj::Text(data.log.lock().unwrap().join("\n")))
}

fn node_stop(data: &Arc<P2PNodeData>) -> Result<Obj, AppException> {
    data.running.store(false, Ordering::SeqCst);
    Ok(Obj::Null)
}

fn node_start(data: &Arc<P2PNodeData>) -> Result<Obj, AppException> {
    data.running.store(true, Ordering::SeqCst);
    Ok(Obj::Null)
}

/// Greedy ring routing: deliver here unless some peer is strictly closer
/// to the destination, in which case increment the hop counter and hand
/// the message on. Strict improvement guarantees termination.
fn node_route(data: &Arc<P2PNodeData>, args: &[Obj]) -> Result<Obj, AppException> {
    let [dest_obj, msg] = args else {
        return Err(AppException::new("BadArgument", "route takes a Key and a Message"));
    };
    if !data.running.load(Ordering::SeqCst) {
        return Err(AppException::new("NodeStopped", "stopped node cannot route"));
    }
    let dest = key_bits(dest_obj)?;
    let msg_id = call_app(msg, "getId", vec![])?
        .as_i32()
        .ok_or_else(|| AppException::new("BadMessage", "getId did not return an i32"))?;
    let hops = call_app(msg, "getHops", vec![])?
        .as_i32()
        .ok_or_else(|| AppException::new("BadMessage", "getHops did not return an i32"))?;
    let me = short_hex(&data.key);
    let log = |line: String| data.log.lock().unwrap().push(line);
    log(format!("msg {msg_id} hop {hops} at {me}: routing to {}", short_hex(&dest)));

    // Peer keys are read through the uniform helper; on a proxy whose
    // reference caches the key field, this costs no network traffic.
    let peers = data.peers.lock().unwrap().clone();
    let mut best: Option<(Obj, [u8; KEY_BYTES])> = None;
    for peer in peers {
        let peer_key = key_bits(&call_app(&peer, "getKey", vec![])?)?;
        let improves = match &best {
            Some((_, held)) => ring_distance(&peer_key, &dest) < ring_distance(held, &dest),
            None => true,
        };
        if improves {
            best = Some((peer, peer_key));
        }
    }
    let closer = best
        .filter(|(_, pk)| ring_distance(pk, &dest) < ring_distance(&data.key, &dest));
    match closer {
        Some((peer, peer_key)) => {
            call_app(msg, "setHops", vec![Obj::I32(hops + 1)])?;
            log(format!("msg {msg_id} hop {hops} at {me}: forward to {}", short_hex(&peer_key)));
            call_app(&peer, "route", vec![dest_obj.clone(), msg.clone()])?;
        }
        None => {
            let body = call_app(msg, "getBody", vec![])?
                .as_text()
                .map(String::from)
                .ok_or_else(|| AppException::new("BadMessage", "getBody did not return text"))?;
            log(format!("msg {msg_id} hop {hops} at {me}: deliver \"{body}\" after {hops} hops"));
        }
    }
    Ok(Obj::Null)
}

pub fn p2pnode_adaptor(inst: &Instance) -> Option<Arc<ServiceAdaptor>> {
    let data = inst.downcast::<P2PNodeData>()?;
    let adaptor = ServiceAdaptor::builder(inst.clone());
    let (d1, d2, d3, d4, d5, d6) = (
        Arc::clone(&data),
        Arc::clone(&data),
        Arc::clone(&data),
        Arc::clone(&data),
        Arc::clone(&data),
        Arc::clone(&data),
    );
    let field = Arc::clone(&data);
    let shown = Arc::clone(&data);
    Some(Arc::new(
        adaptor
            .method(MethodSignature::new("addPeer", &["P2PNode"], "void"), move |args| {
                node_add_peer(&d1, args)
            })
            .method(MethodSignature::new("route", &["Key", "Message"], "void"), move |args| {
                node_route(&d2, args)
            })
            .method(MethodSignature::new::<&str>("getLog", &[], "text"), move |_| {
                node_get_log(&d3)
            })
            .method(MethodSignature::new::<&str>("stop", &[], "void"), move |_| node_stop(&d4))
            .method(MethodSignature::new::<&str>("start", &[], "void"), move |_| node_start(&d5))
            .method(MethodSignature::new::<&str>("getKey", &[], "Key"), move |_| {
                node_get_key(&d6)
            })
            .field("key", move || key_obj(field.key), None)
            .display(move || format!("P2PNode({})", short_hex(&shown.key)))
            .build(),
    ))
}

pub fn ip2pnode_type() -> RemoteType {
    RemoteType::new(
        "IP2PNode",
        vec![
            MethodSignature::new("addPeer", &["P2PNode"], "void"),
            MethodSignature::new("route", &["Key", "Message"], "void"),
            MethodSignature::new::<&str>("getKey", &[], "Key"),
        ],
    )
    .expect("no duplicate overloads")
}

pub fn imanage_type() -> RemoteType {
    RemoteType::new(
        "IManage",
        vec![
            MethodSignature::new::<&str>("stop", &[], "void"),
            MethodSignature::new::<&str>("start", &[], "void"),
        ],
    )
    .expect("no duplicate overloads")
}

pub fn imonitor_type() -> RemoteType {
    RemoteType::new("IMonitor", vec![MethodSignature::new::<&str>("getLog", &[], "text")])
        .expect("no duplicate overloads")
}

// ── Registration and uniform dispatch ───────────────────────────────────────

/// Registers the demo classes' capabilities with a runtime: by-value
/// codecs for `Key` and `Message`, reference adaptors for `Message` and
/// `P2PNode`, and the remote types the latter two are published under
/// when marshalled implicitly.
pub fn register_demo_classes(node: &Arc<Node>) {
    node.classes().register_by_value("Key", key_codec());
    node.classes().register_by_value("Message", message_codec());
    node.classes().register_adaptor_factory("Message", Arc::new(message_adaptor));
    node.associate("Message", imessage_type());
    node.classes().register_adaptor_factory("P2PNode", Arc::new(p2pnode_adaptor));
    node.associate("P2PNode", ip2pnode_type());
}

/// Invokes a method uniformly on a local instance or a remote proxy.
/// This is the only call-site the demo uses, so its application code is
/// identical whether the ring shares one address space or several.
pub fn call_obj(target: &Obj, method: &str, args: Vec<Obj>) -> Result<Obj, CallError> {
    match target {
        Obj::Proxy(proxy) => proxy.invoke(method, args),
        Obj::Instance(inst) => dispatch_local(inst, method, &args).map_err(CallError::App),
        other => Err(CallError::App(AppException::new(
            "BadTarget",
            format!("cannot invoke `{method}` on {other:?}"),
        ))),
    }
}

/// [`call_obj`] for use inside application method bodies, where every
/// failure is an application exception. Distribution faults that leak
/// through are wrapped rather than lost.
fn call_app(target: &Obj, method: &str, args: Vec<Obj>) -> Result<Obj, AppException> {
    call_obj(target, method, args).map_err(|e| match e {
        CallError::App(app) => app,
        other => AppException::new("DistributionError", other.to_string()),
    })
}

/// Local dispatch for the demo classes. The match arms call the same
/// body functions the service adaptors bind, so a direct call and a
/// remote call run identical code.
fn dispatch_local(inst: &Instance, method: &str, args: &[Obj]) -> Result<Obj, AppException> {
    let unknown = || {
        AppException::new(
            "NoSuchMethod",
            format!("{}.{}/{}", inst.class_name(), method, args.len()),
        )
    };
    match inst.class_name() {
        "P2PNode" => {
            let data = inst
                .downcast::<P2PNodeData>()
                .ok_or_else(|| AppException::new("BadTarget", "foreign P2PNode payload"))?;
            match (method, args.len()) {
                ("addPeer", 1) => node_add_peer(&data, args),
                ("route", 2) => node_route(&data, args),
                ("getLog", 0) => node_get_log(&data),
                ("stop", 0) => node_stop(&data),
                ("start", 0) => node_start(&data),
                ("getKey", 0) => node_get_key(&data),
                _ => Err(unknown()),
            }
        }
        "Message" => {
            let data = inst
                .downcast::<MessageData>()
                .ok_or_else(|| AppException::new("BadTarget", "foreign Message payload"))?;
            match (method, args.len()) {
                ("getId", 0) => msg_get_id(&data),
                ("getBody", 0) => msg_get_body(&data),
                ("getHops", 0) => msg_get_hops(&data),
                ("setHops", 1) => msg_set_hops(&data, args),
                _ => Err(unknown()),
            }
        }
        other => Err(AppException::new("UnknownClass", other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(n: u8) -> [u8; KEY_BYTES] {
        let mut k = [0u8; KEY_BYTES];
        k[KEY_BYTES - 1] = n;
        k
    }

    #[test]
    fn ring_distance_takes_the_shorter_arc() {
        assert_eq!(ring_distance(&key(10), &key(14)), key(4));
        assert_eq!(ring_distance(&key(14), &key(10)), key(4));
        assert_eq!(ring_distance(&key(0), &key(0)), key(0));
        // Wrap-around: from 0xff..ff to 0x00..01 is two steps forward.
        let top = [0xffu8; KEY_BYTES];
        assert_eq!(ring_distance(&top, &key(1)), key(2));
    }

    #[test]
    fn keys_and_messages_round_trip_their_codecs() {
        let bits: [u8; KEY_BYTES] = [7; KEY_BYTES];
        let codec = key_codec();
        let fields = (codec.to_fields)(&key_instance(bits)).unwrap();
        let back = (codec.from_fields)(fields).unwrap();
        assert_eq!(key_bits(&Obj::Instance(back)).unwrap(), bits);

        let codec = message_codec();
        let inst = message_instance(3, "hi");
        dispatch_local(&inst, "setHops", &[Obj::I32(2)]).unwrap();
        let fields = (codec.to_fields)(&inst).unwrap();
        let back = (codec.from_fields)(fields).unwrap();
        assert_eq!(dispatch_local(&back, "getId", &[]).unwrap(), Obj::I32(3));
        assert_eq!(dispatch_local(&back, "getBody", &[]).unwrap(), Obj::text("hi"));
        assert_eq!(dispatch_local(&back, "getHops", &[]).unwrap(), Obj::I32(2));
    }

    #[test]
    fn key_codec_rejects_malformed_bits() {
        let codec = key_codec();
        let bad = vec![("bits".to_string(), Obj::text("XYZ"))];
        assert!((codec.from_fields)(bad).is_err());
        let upper = vec![("bits".to_string(), Obj::text("A".repeat(40)))];
        assert!((codec.from_fields)(upper).is_err());
    }

    #[test]
    fn local_routing_delivers_at_the_closest_node() {
        let a = p2pnode_obj(key(0));
        let b = p2pnode_obj(key(100));
        call_obj(&a, "addPeer", vec![b.clone()]).unwrap();
        call_obj(&b, "addPeer", vec![a.clone()]).unwrap();

        // Destination right next to b: a forwards, b delivers.
        call_obj(&a, "route", vec![key_obj(key(99)), message_obj(1, "hello")]).unwrap();
        let log_a = call_obj(&a, "getLog", vec![]).unwrap();
        let log_b = call_obj(&b, "getLog", vec![]).unwrap();
        assert!(log_a.as_text().unwrap().contains("forward to"));
        let log_b = log_b.as_text().unwrap();
        assert!(log_b.contains("deliver \"hello\" after 1 hops"), "got: {log_b}");
    }

    #[test]
    fn stopped_nodes_refuse_to_route() {
        let a = p2pnode_obj(key(1));
        call_obj(&a, "stop", vec![]).unwrap();
        let err = call_obj(&a, "route", vec![key_obj(key(2)), message_obj(1, "x")]);
        match err {
            Err(CallError::App(e)) => assert_eq!(e.type_name, "NodeStopped"),
            other => panic!("expected NodeStopped, got {other:?}"),
        }
        call_obj(&a, "start", vec![]).unwrap();
        call_obj(&a, "route", vec![key_obj(key(2)), message_obj(1, "x")]).unwrap();
    }

    #[test]
    fn add_peer_rejects_non_nodes() {
        let a = p2pnode_obj(key(1));
        let err = call_obj(&a, "addPeer", vec![message_obj(1, "not a node")]);
        match err {
            Err(CallError::App(e)) => assert_eq!(e.type_name, "BadPeer"),
            other => panic!("expected BadPeer, got {other:?}"),
        }
    }
}
