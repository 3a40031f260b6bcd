//! The plain-browser surface: the service index, per-service pages, the
//! detail view behind `browse_details`, and content negotiation between
//! HTML pages and reference envelopes.

mod common;

use std::sync::Arc;

use common::*;
use rrt::node::{Node, NodeConfig};

fn expose_counter(server: &Arc<Node>, name: &str, value: i32) {
    let (instance, _cell) = counter(value);
    server
        .expose(name, counter_adaptor(&instance).unwrap(), Some(counter_remote_type()))
        .unwrap();
}

fn get_text(port: u16, path: &str, accept: Option<&str>) -> (u16, String) {
    let (status, body) = raw_get(port, path, accept);
    (status, String::from_utf8(body).expect("utf-8 body"))
}

#[test]
fn the_index_lists_every_exposed_service() {
    let server = default_node();
    expose_counter(&server, "alpha", 1);
    expose_counter(&server, "beta", 2);

    let (status, body) = get_text(server.port(), "/", None);
    assert_eq!(status, 200);
    assert!(body.contains("<h1>Services on 127.0.0.1:"), "got: {body}");
    assert!(body.contains("href=\"/alpha\""));
    assert!(body.contains("href=\"/beta\""));
    assert!(body.contains("ICounter"));
    assert!(body.contains("Counter(1)"), "index shows each object's display string");
    assert!(body.contains("2 service(s)."));
    server.shutdown();
}

#[test]
fn an_empty_node_still_serves_an_index() {
    let server = default_node();
    let (status, body) = get_text(server.port(), "/", None);
    assert_eq!(status, 200);
    assert!(body.contains("No services exposed."));
    assert!(body.contains("0 service(s)."));
    server.shutdown();
}

#[test]
fn service_pages_show_the_remote_type_only() {
    let server = default_node();
    expose_counter(&server, "main", 42);

    let (status, body) = get_text(server.port(), "/main", None);
    assert_eq!(status, 200);
    assert!(body.contains("<h1>Service main</h1>"));
    assert!(body.contains("GUID <code>"));
    assert!(body.contains("Remote type <code>ICounter</code>"));
    assert!(body.contains("<code>i32 get()</code>"));
    assert!(body.contains("<code>i32 add(i32)</code>"));
    // Without browse_details, nothing about the implementation leaks out.
    assert!(!body.contains("Implementation"));
    assert!(!body.contains("Counter(42)"));
    server.shutdown();
}

#[test]
fn detail_pages_reveal_implementation_state_when_enabled() {
    let config = NodeConfig { browse_details: true, ..NodeConfig::default() };
    let server = served_node(config);
    expose_counter(&server, "main", 42);

    let (status, body) = get_text(server.port(), "/main", None);
    assert_eq!(status, 200);
    assert!(body.contains("Implementation <code>Counter</code>"));
    assert!(body.contains("Counter(42)"), "display string appears: {body}");
    assert!(body.contains("<code>i32 bump(Object)</code>"), "adapted methods appear");
    assert!(body.contains("<code>value</code>"));
    assert!(body.contains("I32(42)"), "live field values appear");
    server.shutdown();
}

#[test]
fn xml_accept_negotiates_a_reference_envelope() {
    let server = default_node();
    expose_counter(&server, "main", 42);

    let (status, body) = get_text(server.port(), "/main", Some("application/xml"));
    assert_eq!(status, 200);
    assert!(body.starts_with("<ref><ior host=\"127.0.0.1\" port="), "got: {body}");
    assert!(body.contains(" remote-type=\"ICounter\""));
    assert!(body.contains(" real-class=\"Counter\""));
    assert!(body.contains("<rt-method name=\"add\" sig=\"i32\" returns=\"i32\"/>"));
    assert!(body.ends_with("</ior></ref>"));
    server.shutdown();
}

#[test]
fn unknown_paths_and_methods_are_refused() {
    let server = default_node();
    let (status, body) = get_text(server.port(), "/nope", None);
    assert_eq!(status, 404);
    assert_eq!(body, "no such service");

    // Anything but GET and POST is turned away.
    use std::io::{Read, Write};
    let mut stream = std::net::TcpStream::connect(("127.0.0.1", server.port())).unwrap();
    stream
        .write_all(b"PUT /main HTTP/1.1\r\nHost: test\r\nConnection: close\r\n\r\n")
        .unwrap();
    let mut raw = Vec::new();
    stream.read_to_end(&mut raw).unwrap();
    let head = String::from_utf8_lossy(&raw);
    assert!(head.starts_with("HTTP/1.1 405 "), "got: {head}");
    server.shutdown();
}
