//! Shared fixtures: a `Counter` service class, a `Pair` value class, a
//! `Wrap` container for nesting tests and a `Wide` class whose remote
//! type is too large to embed in references.
//!
//! Not every test binary uses every fixture.
#![allow(dead_code)]

use std::sync::{Arc, Mutex};

use rrt::node::{Node, NodeConfig};
use rrt::object::{AppException, ByValueCodec, Instance, Obj};
use rrt::registry::{MethodSignature, RemoteType, ServiceAdaptor};

// ── Pair: a plain value class ───────────────────────────────────────────────

pub fn pair(x: i32, y: i32) -> Instance {
    Instance::new("Pair", Arc::new(Mutex::new((x, y))))
}

pub fn pair_values(inst: &Instance) -> Option<(i32, i32)> {
    inst.downcast::<Mutex<(i32, i32)>>().map(|cell| *cell.lock().unwrap())
}

pub fn register_pair(node: &Node) {
    node.classes().register_by_value(
        "Pair",
        ByValueCodec {
            to_fields: Arc::new(|inst| {
                let cell = inst.downcast::<Mutex<(i32, i32)>>()?;
                let (x, y) = *cell.lock().unwrap();
                Some(vec![("x".into(), Obj::I32(x)), ("y".into(), Obj::I32(y))])
            }),
            from_fields: Arc::new(|fields| {
                let (mut x, mut y) = (None, None);
                for (name, value) in fields {
                    match (name.as_str(), value.as_i32()) {
                        ("x", Some(v)) => x = Some(v),
                        ("y", Some(v)) => y = Some(v),
                        _ => return Err(format!("unexpected field `{name}`")),
                    }
                }
                match (x, y) {
                    (Some(x), Some(y)) => Ok(pair(x, y)),
                    _ => Err("missing x or y".into()),
                }
            }),
        },
    );
    // Pairs may also travel by reference (the scope default).
    node.classes().register_adaptor_factory(
        "Pair",
        Arc::new(|inst| {
            let cell = inst.downcast::<Mutex<(i32, i32)>>()?;
            let get_x = Arc::clone(&cell);
            let get_y = cell;
            Some(Arc::new(
                ServiceAdaptor::builder(inst.clone())
                    .method(MethodSignature::new::<&str>("getX", &[], "i32"), move |_| {
                        Ok(Obj::I32(get_x.lock().unwrap().0))
                    })
                    .method(MethodSignature::new::<&str>("getY", &[], "i32"), move |_| {
                        Ok(Obj::I32(get_y.lock().unwrap().1))
                    })
                    .build(),
            ))
        }),
    );
    node.associate(
        "Pair",
        RemoteType::new(
            "IPair",
            vec![
                MethodSignature::new::<&str>("getX", &[], "i32"),
                MethodSignature::new::<&str>("getY", &[], "i32"),
            ],
        )
        .unwrap(),
    );
}

// ── Wrap: one `inner` field, for nesting/depth tests ───────────────────────

pub fn wrap(inner: Obj) -> Instance {
    Instance::new("Wrap", Arc::new(Mutex::new(inner)))
}

pub fn register_wrap(node: &Node) {
    node.classes().register_by_value(
        "Wrap",
        ByValueCodec {
            to_fields: Arc::new(|inst| {
                let cell = inst.downcast::<Mutex<Obj>>()?;
                let inner = cell.lock().unwrap().clone();
                Some(vec![("inner".into(), inner)])
            }),
            from_fields: Arc::new(|mut fields| match fields.pop() {
                Some((name, value)) if name == "inner" && fields.is_empty() => Ok(wrap(value)),
                _ => Err("expected exactly one `inner` field".into()),
            }),
        },
    );
    // Needed once a depth bound forces deeper Wraps to go by reference.
    node.classes().register_adaptor_factory(
        "Wrap",
        Arc::new(|inst| {
            let cell = inst.downcast::<Mutex<Obj>>()?;
            Some(Arc::new(
                ServiceAdaptor::builder(inst.clone())
                    .method(MethodSignature::new::<&str>("getInner", &[], "Object"), move |_| {
                        Ok(cell.lock().unwrap().clone())
                    })
                    .build(),
            ))
        }),
    );
    node.associate(
        "Wrap",
        RemoteType::new(
            "IWrap",
            vec![MethodSignature::new::<&str>("getInner", &[], "Object")],
        )
        .unwrap(),
    );
}

/// Renders the shape of a received object graph, distinguishing copies
/// from proxies: `Wrap(Wrap(Pair(1,2)))` vs `Wrap(proxy:Wrap)`.
pub fn shape_of(obj: &Obj) -> String {
    match obj {
        Obj::Instance(i) if i.class_name() == "Wrap" => {
            let inner = i.downcast::<Mutex<Obj>>().expect("Wrap payload");
            let inner = inner.lock().unwrap().clone();
            format!("Wrap({})", shape_of(&inner))
        }
        Obj::Instance(i) if i.class_name() == "Pair" => {
            let (x, y) = pair_values(i).expect("Pair payload");
            format!("Pair({x},{y})")
        }
        Obj::Instance(i) => format!("instance:{}", i.class_name()),
        Obj::Proxy(p) => format!("proxy:{}", p.real_class_name()),
        Obj::Null => "null".into(),
        other => format!("{other:?}"),
    }
}

// ── Counter: the workhorse service class ───────────────────────────────────

pub fn counter(value: i32) -> (Instance, Arc<Mutex<i32>>) {
    let cell = Arc::new(Mutex::new(value));
    (Instance::new("Counter", Arc::clone(&cell)), cell)
}

pub fn counter_signatures() -> Vec<MethodSignature> {
    vec![
        MethodSignature::new::<&str>("get", &[], "i32"),
        MethodSignature::new("add", &["i32"], "i32"),
        MethodSignature::new::<&str>("getValue", &[], "i32"),
        MethodSignature::new("setValue", &["i32"], "void"),
        MethodSignature::new::<&str>("boom", &[], "i32"),
        MethodSignature::new::<&str>("die", &[], "i32"),
        MethodSignature::new("echoPair", &["Pair"], "Pair"),
        MethodSignature::new("shape", &["Object"], "text"),
        MethodSignature::new("same", &["Object", "Object"], "bool"),
        MethodSignature::new("bump", &["Object"], "i32"),
    ]
}

pub fn counter_remote_type() -> RemoteType {
    RemoteType::new("ICounter", counter_signatures()).unwrap()
}

pub fn counter_adaptor(inst: &Instance) -> Option<Arc<ServiceAdaptor>> {
    let cell = inst.downcast::<Mutex<i32>>()?;
    let bad_arg = || AppException::new("BadArgument", "expected an i32");
    let get = Arc::clone(&cell);
    let add = Arc::clone(&cell);
    let get_value = Arc::clone(&cell);
    let set_value = Arc::clone(&cell);
    let field_get = Arc::clone(&cell);
    let field_set = Arc::clone(&cell);
    let display = Arc::clone(&cell);
    Some(Arc::new(
        ServiceAdaptor::builder(inst.clone())
            .method(MethodSignature::new::<&str>("get", &[], "i32"), move |_| {
                Ok(Obj::I32(*get.lock().unwrap()))
            })
            .method(MethodSignature::new("add", &["i32"], "i32"), move |args| {
                let delta = args[0].as_i32().ok_or_else(bad_arg)?;
                let mut v = add.lock().unwrap();
                *v += delta;
                Ok(Obj::I32(*v))
            })
            .method(MethodSignature::new::<&str>("getValue", &[], "i32"), move |_| {
                Ok(Obj::I32(*get_value.lock().unwrap()))
            })
            .method(MethodSignature::new("setValue", &["i32"], "void"), move |args| {
                *set_value.lock().unwrap() = args[0].as_i32().ok_or_else(bad_arg)?;
                Ok(Obj::Null)
            })
            .method(MethodSignature::new::<&str>("boom", &[], "i32"), |_| {
                Err(AppException::new("CounterFault", "boom"))
            })
            .method(MethodSignature::new::<&str>("die", &[], "i32"), |_| {
                panic!("deliberate test panic")
            })
            .method(MethodSignature::new("echoPair", &["Pair"], "Pair"), |args| {
                Ok(args[0].clone())
            })
            .method(MethodSignature::new("shape", &["Object"], "text"), |args| {
                Ok(Obj::text(shape_of(&args[0])))
            })
            // Object equality is identity for instances/proxies: tells
            // apart one aliased object from two equal-valued copies.
            .method(MethodSignature::new("same", &["Object", "Object"], "bool"), |args| {
                Ok(Obj::Bool(args[0] == args[1]))
            })
            // Increments a Counter received as an argument — through the
            // proxy when it lives elsewhere, directly on loopback.
            .method(MethodSignature::new("bump", &["Object"], "i32"), |args| {
                let failed = |m: String| AppException::new("BumpFailed", m);
                match &args[0] {
                    Obj::Proxy(p) => p
                        .invoke("add", vec![Obj::I32(1)])
                        .map_err(|e| failed(e.to_string()))?
                        .as_i32()
                        .map(Obj::I32)
                        .ok_or_else(|| failed("non-i32 from add".into())),
                    Obj::Instance(i) => {
                        let cell = i
                            .downcast::<Mutex<i32>>()
                            .ok_or_else(|| failed("not a Counter".into()))?;
                        let mut v = cell.lock().unwrap();
                        *v += 1;
                        Ok(Obj::I32(*v))
                    }
                    other => Err(failed(format!("unsupported argument {other:?}"))),
                }
            })
            .field(
                "value",
                move || Obj::I32(*field_get.lock().unwrap()),
                Some(Arc::new(move |obj: Obj| {
                    if let Some(v) = obj.as_i32() {
                        *field_set.lock().unwrap() = v;
                    }
                })),
            )
            .display(move || format!("Counter({})", *display.lock().unwrap()))
            .build(),
    ))
}

pub fn register_counter(node: &Node) {
    node.classes().register_adaptor_factory("Counter", Arc::new(counter_adaptor));
    node.associate("Counter", counter_remote_type());
}

// ── Wide: more methods than a reference may embed ───────────────────────────

pub fn wide_signatures() -> Vec<MethodSignature> {
    (0..17)
        .map(|i| MethodSignature::new::<&str>(&format!("m{i}"), &[], "void"))
        .collect()
}

pub fn register_wide(node: &Node) {
    node.classes().register_adaptor_factory(
        "Wide",
        Arc::new(|inst| {
            let mut builder = ServiceAdaptor::builder(inst.clone());
            for sig in wide_signatures() {
                builder = builder.method(sig, |_| Ok(Obj::Null));
            }
            Some(Arc::new(builder.build()))
        }),
    );
    node.associate("Wide", RemoteType::new("IWide", wide_signatures()).unwrap());
}

pub fn wide() -> Instance {
    Instance::new("Wide", Arc::new(Mutex::new(())))
}

// ── Node construction ───────────────────────────────────────────────────────

/// A node with every fixture class registered, serving on an OS-picked
/// port.
pub fn served_node(config: NodeConfig) -> Arc<Node> {
    let node = Node::new(config);
    register_pair(&node);
    register_wrap(&node);
    register_counter(&node);
    register_wide(&node);
    node.serve().expect("bind test node");
    node
}

pub fn default_node() -> Arc<Node> {
    served_node(NodeConfig::default())
}

/// Plain HTTP GET returning (status, body) — for exercising the server
/// exactly as an outside client would.
pub fn raw_get(port: u16, path: &str, accept: Option<&str>) -> (u16, Vec<u8>) {
    use std::io::{Read, Write};
    let mut stream = std::net::TcpStream::connect(("127.0.0.1", port)).expect("connect");
    let accept_line = accept.map(|a| format!("Accept: {a}\r\n")).unwrap_or_default();
    let request = format!("GET {path} HTTP/1.1\r\nHost: test\r\n{accept_line}Connection: close\r\n\r\n");
    stream.write_all(request.as_bytes()).expect("send");
    let mut raw = Vec::new();
    stream.read_to_end(&mut raw).expect("read");
    let text = String::from_utf8_lossy(&raw);
    let status: u16 = text
        .split_whitespace()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .expect("status line");
    let body_at = raw.windows(4).position(|w| w == b"\r\n\r\n").map(|p| p + 4).unwrap_or(raw.len());
    (status, raw[body_at..].to_vec())
}
