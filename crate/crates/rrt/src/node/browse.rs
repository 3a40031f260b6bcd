//! Human-readable pages for plain browser `GET`s.
//!
//! The index lists every exposed service; each service links to a detail
//! page showing its remote type. When the node was configured with
//! `browse_details`, the detail page additionally reveals the adapted
//! class's full interface and the current values of its adapted fields —
//! useful while debugging, unsuitable for nodes exposed beyond the
//! development machine.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::registry::ServiceRecord;

use super::Node;

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
    out
}

fn page(title: &str, body: &str) -> String {
    format!(
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>{}</title>\
         <style>body{{font-family:sans-serif;margin:2em}}table{{border-collapse:collapse}}\
         td,th{{border:1px solid #999;padding:.3em .6em;text-align:left}}\
         code{{background:#eee;padding:0 .2em}}</style></head>\n<body>\n{}</body></html>\n",
        escape(title),
        body
    )
}

/// The service directory at `/`.
pub(super) fn index_page(node: &Node) -> String {
    let records = node.registry.records();
    let mut body = String::new();
    let _ = writeln!(body, "<h1>Services on {}:{}</h1>", escape(node.host()), node.port());
    if records.is_empty() {
        body.push_str("<p>No services exposed.</p>\n");
    } else {
        body.push_str(
            "<table>\n<tr><th>Service</th><th>Remote type</th><th>Class</th><th>Object</th></tr>\n",
        );
        for record in &records {
            let key = record.service_key();
            let _ = writeln!(
                body,
                "<tr><td><a href=\"/{key}\">{name}</a></td><td>{rt}</td><td>{class}</td><td>{display}</td></tr>",
                key = escape(key),
                name = escape(key),
                rt = escape(record.remote_type.type_name()),
                class = escape(record.adaptor.class_name()),
                display = escape(&record.adaptor.display_string()),
            );
        }
        body.push_str("</table>\n");
    }
    let _ = writeln!(body, "<p>{} service(s).</p>", records.len());
    page("Services", &body)
}

/// The per-service page at `/<name-or-guid>`.
pub(super) fn service_page(node: &Node, record: &Arc<ServiceRecord>) -> String {
    let key = record.service_key();
    let mut body = String::new();
    let _ = writeln!(body, "<h1>Service {}</h1>", escape(key));
    let _ = writeln!(body, "<p>GUID <code>{}</code></p>", escape(record.guid.as_str()));
    let _ = writeln!(
        body,
        "<h2>Remote type <code>{}</code></h2>\n<ul>",
        escape(record.remote_type.type_name())
    );
    for sig in record.remote_type.methods() {
        let _ = writeln!(
            body,
            "<li><code>{} {}</code></li>",
            escape(&sig.return_type_name),
            escape(&sig.canonical())
        );
    }
    body.push_str("</ul>\n");
    if node.browse_details {
        let _ = writeln!(
            body,
            "<h2>Implementation <code>{}</code></h2>",
            escape(record.adaptor.class_name())
        );
        let _ = writeln!(body, "<p>{}</p>", escape(&record.adaptor.display_string()));
        body.push_str("<h3>Adapted methods</h3>\n<ul>\n");
        for sig in record.adaptor.method_signatures() {
            let _ = writeln!(
                body,
                "<li><code>{} {}</code></li>",
                escape(&sig.return_type_name),
                escape(&sig.canonical())
            );
        }
        body.push_str("</ul>\n<h3>Fields</h3>\n");
        let fields = record.adaptor.field_names();
        if fields.is_empty() {
            body.push_str("<p>No adapted fields.</p>\n");
        } else {
            body.push_str("<table>\n<tr><th>Field</th><th>Current value</th></tr>\n");
            for name in fields {
                let rendered = record
                    .adaptor
                    .field_accessor(name)
                    .map(|a| format!("{:?}", (a.getter)()))
                    .unwrap_or_default();
                let _ = writeln!(
                    body,
                    "<tr><td><code>{}</code></td><td><code>{}</code></td></tr>",
                    escape(name),
                    escape(&rendered)
                );
            }
            body.push_str("</table>\n");
        }
    }
    body.push_str("<p><a href=\"/\">All services</a></p>\n");
    page(&format!("Service {key}"), &body)
}
