//! End-to-end tests over real localhost HTTP: exposure, invocation,
//! fault propagation, failure modes, loopback and proxy dedup.

mod common;

use std::sync::Arc;

use common::*;
use rrt::node::{CallError, FailureMode, Node, NodeConfig};
use rrt::object::Obj;
use rrt::wire::DistFaultCode;

fn client() -> Arc<Node> {
    // Clients never serve; construction alone is enough to call out.
    let node = Node::new(NodeConfig::default());
    register_pair(&node);
    register_wrap(&node);
    register_counter(&node);
    register_wide(&node);
    node
}

fn proxy_to(client: &Arc<Node>, server: &Arc<Node>, key: &str) -> Arc<rrt::remoteref::ProxyHandle> {
    let obj = client
        .get_remote_reference(server.host(), server.port(), key)
        .expect("fetch reference");
    match obj {
        Obj::Proxy(p) => p,
        other => panic!("expected a proxy, got {other:?}"),
    }
}

#[test]
fn named_service_calls_mutate_the_real_object() {
    let server = default_node();
    let (instance, cell) = counter(0);
    server
        .expose("main", counter_adaptor(&instance).unwrap(), Some(counter_remote_type()))
        .unwrap();

    let client = client();
    let proxy = proxy_to(&client, &server, "main");
    assert_eq!(proxy.remote_type_name(), "ICounter");
    assert_eq!(proxy.invoke("get", vec![]).unwrap(), Obj::I32(0));
    assert_eq!(proxy.invoke("add", vec![Obj::I32(5)]).unwrap(), Obj::I32(5));
    assert_eq!(proxy.invoke("add", vec![Obj::I32(-2)]).unwrap(), Obj::I32(3));
    // The server-side object really changed.
    assert_eq!(*cell.lock().unwrap(), 3);
    server.shutdown();
}

#[test]
fn unknown_services_and_methods_are_distinct_faults() {
    let server = default_node();
    let (instance, _cell) = counter(0);
    server
        .expose("main", counter_adaptor(&instance).unwrap(), Some(counter_remote_type()))
        .unwrap();
    let client = client();

    match client.get_remote_reference(server.host(), server.port(), "nope") {
        Err(CallError::Dist { code: DistFaultCode::ServiceNotFound, .. }) => {}
        other => panic!("unexpected outcome {other:?}"),
    }
    let proxy = proxy_to(&client, &server, "main");
    // Not part of ICounter: rejected locally, before any traffic.
    let sent_before = client.outbound_request_count();
    assert!(matches!(
        proxy.invoke("reboot", vec![]),
        Err(CallError::Proxy(rrt::remoteref::ProxyError::NotInRemoteType(..)))
    ));
    assert_eq!(client.outbound_request_count(), sent_before);
    server.shutdown();
}

#[test]
fn app_exceptions_surface_in_both_failure_modes() {
    let server = default_node();
    let (instance, _cell) = counter(0);
    server
        .expose("main", counter_adaptor(&instance).unwrap(), Some(counter_remote_type()))
        .unwrap();
    let client = client();
    let proxy = proxy_to(&client, &server, "main");

    for mode in [FailureMode::Propagate, FailureMode::SuppressWithDefaults] {
        client.set_failure_mode(mode);
        match proxy.invoke("boom", vec![]) {
            Err(CallError::App(e)) => {
                assert_eq!(e.type_name, "CounterFault");
                assert_eq!(e.message, "boom");
            }
            other => panic!("expected an application fault in {mode:?}, got {other:?}"),
        }
    }
    server.shutdown();
}

#[test]
fn dist_faults_respect_the_failure_mode() {
    let server = default_node();
    let (instance, _cell) = counter(9);
    server
        .expose("main", counter_adaptor(&instance).unwrap(), Some(counter_remote_type()))
        .unwrap();
    let client = client();
    let proxy = proxy_to(&client, &server, "main");
    server.shutdown();

    // Propagate: the transport failure reaches the caller.
    client.set_failure_mode(FailureMode::Propagate);
    match proxy.invoke("get", vec![]) {
        Err(CallError::Dist { code: DistFaultCode::Transport, .. }) => {}
        other => panic!("unexpected outcome {other:?}"),
    }

    // Suppress: the same calls turn into defaults per return type.
    client.set_failure_mode(FailureMode::SuppressWithDefaults);
    assert_eq!(proxy.invoke("get", vec![]).unwrap(), Obj::I32(0));
    assert_eq!(proxy.invoke("setValue", vec![Obj::I32(3)]).unwrap(), Obj::Null);
    assert_eq!(proxy.invoke("shape", vec![Obj::Null]).unwrap(), Obj::Null);
}

#[test]
fn panicking_methods_become_internal_faults() {
    let server = default_node();
    let (instance, _cell) = counter(0);
    server
        .expose("main", counter_adaptor(&instance).unwrap(), Some(counter_remote_type()))
        .unwrap();
    let client = client();
    let proxy = proxy_to(&client, &server, "main");
    match proxy.invoke("die", vec![]) {
        Err(CallError::Dist { code: DistFaultCode::Internal, message }) => {
            assert!(message.contains("panicked"), "message was {message}");
        }
        other => panic!("unexpected outcome {other:?}"),
    }
    // The server survives the panic and keeps answering.
    assert_eq!(proxy.invoke("get", vec![]).unwrap(), Obj::I32(0));
    server.shutdown();
}

#[test]
fn loopback_references_resolve_to_the_object_itself() {
    let server = default_node();
    let (instance, _cell) = counter(4);
    server
        .expose("main", counter_adaptor(&instance).unwrap(), Some(counter_remote_type()))
        .unwrap();
    // The server fetches its own service over real HTTP; the resolved
    // result is the local instance, not a proxy.
    let obj = server
        .get_remote_reference(server.host(), server.port(), "main")
        .unwrap();
    match obj {
        Obj::Instance(resolved) => assert_eq!(resolved.identity(), instance.identity()),
        other => panic!("expected the local instance, got {other:?}"),
    }
    server.shutdown();
}

#[test]
fn repeated_resolution_yields_one_proxy() {
    let server = default_node();
    let (instance, _cell) = counter(0);
    server
        .expose("main", counter_adaptor(&instance).unwrap(), Some(counter_remote_type()))
        .unwrap();
    let client = client();
    let first = proxy_to(&client, &server, "main");
    let second = proxy_to(&client, &server, "main");
    assert!(Arc::ptr_eq(&first, &second), "one guid must map to one proxy");
    server.shutdown();
}

#[test]
fn concurrent_calls_are_isolated() {
    let server = default_node();
    let (instance, cell) = counter(0);
    server
        .expose("main", counter_adaptor(&instance).unwrap(), Some(counter_remote_type()))
        .unwrap();
    let client = client();
    let proxy = proxy_to(&client, &server, "main");

    let threads: Vec<_> = (0..8)
        .map(|_| {
            let proxy = Arc::clone(&proxy);
            std::thread::spawn(move || {
                for _ in 0..25 {
                    proxy.invoke("add", vec![Obj::I32(1)]).unwrap();
                }
            })
        })
        .collect();
    for t in threads {
        t.join().unwrap();
    }
    assert_eq!(*cell.lock().unwrap(), 200);
    assert_eq!(proxy.invoke("get", vec![]).unwrap(), Obj::I32(200));
    server.shutdown();
}

#[test]
fn shutdown_is_idempotent_and_frees_the_port() {
    let server = default_node();
    let port = server.port();
    server.shutdown();
    server.shutdown();
    // The port is free again: a fresh listener can bind it.
    std::net::TcpListener::bind(("127.0.0.1", port)).expect("port must be released");
}
