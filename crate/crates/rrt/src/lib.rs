//! Policy-aware distributed objects over XML/HTTP.
//!
//! This crate lets a process expose plain objects as remote services and
//! call objects living in other processes through proxies, with one
//! distinguishing twist: whether any given object crosses the wire **by
//! value** (a copy) or **by reference** (a callable proxy) is not baked
//! into its type. It is decided per call site by declarative rules that
//! can be set, replaced and persisted at run time — per class, per
//! method, per return value or per individual argument — without touching
//! application code.
//!
//! The pieces, bottom up:
//!
//! * [`wire`] — the canonical XML encoding: values (primitives, text,
//!   structs, lists, references, aliases), call and reply envelopes.
//!   Byte-exact deterministic output, strict parsing.
//! * [`object`] — the application-facing value model ([`object::Obj`])
//!   and the class registry where codecs, adaptor factories and cached
//!   method bodies are registered per class name.
//! * [`registry`] — named and GUID-keyed service records, remote types
//!   (the callable façade of a service) and service adaptors bridging
//!   invocations onto real objects.
//! * [`policy`] — the rule store and its resolution logic: most specific
//!   wins, priority breaks ties, insertion order never matters.
//! * [`remoteref`] — transmissible object references and the proxies
//!   built from them, including client-side field caches and locally
//!   runnable cached methods.
//! * [`node`] — the runtime tying it together: marshalling walks,
//!   dispatch, the HTTP server and the proxy call path.
//!
//! # A two-process sketch
//!
//! Process A exposes a counter under a name:
//!
//! ```no_run
//! use std::sync::{Arc, Mutex};
//! use rrt::node::{Node, NodeConfig};
//! use rrt::object::{Instance, Obj};
//! use rrt::registry::{MethodSignature, ServiceAdaptor};
//!
//! let node = Node::new(NodeConfig { port: 9001, ..NodeConfig::default() });
//! let counter = Arc::new(Mutex::new(0i32));
//! let instance = Instance::new("Counter", Arc::clone(&counter));
//! let adaptor = ServiceAdaptor::builder(instance)
//!     .method(MethodSignature::new::<&str>("get", &[], "i32"), {
//!         let counter = Arc::clone(&counter);
//!         move |_args| Ok(Obj::I32(*counter.lock().unwrap()))
//!     })
//!     .build();
//! node.expose("counter", Arc::new(adaptor), None).unwrap();
//! node.serve().unwrap();
//! ```
//!
//! Process B fetches the reference and calls through the proxy:
//!
//! ```no_run
//! use rrt::node::{Node, NodeConfig};
//!
//! let node = Node::new(NodeConfig::default());
//! let obj = node.get_remote_reference("127.0.0.1", 9001, "counter").unwrap();
//! let proxy = obj.as_proxy().unwrap();
//! let value = proxy.invoke("get", vec![]).unwrap();
//! assert!(value.as_i32().is_some());
//! ```

pub mod node;
pub mod object;
pub mod policy;
pub mod registry;
pub mod remoteref;
pub mod wire;
