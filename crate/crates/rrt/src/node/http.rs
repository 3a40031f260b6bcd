//! Plain HTTP/1.1 over `std::net`: one request per connection, no
//! keep-alive, thread per accepted connection.
//!
//! The runtime speaks a deliberately small slice of HTTP. Method
//! invocations are `POST`s with an XML call envelope; remote references
//! are fetched with `GET` plus `Accept: application/xml`; the same URLs
//! answer ordinary browsers with HTML. Every request and response carries
//! an explicit `Content-Length` and `Connection: close`.

use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use super::Node;

const IO_TIMEOUT: Duration = Duration::from_secs(30);
/// Upper bound on accepted bodies; a runtime peer has no business sending
/// more, and it keeps a stray client from ballooning memory.
const MAX_BODY: usize = 64 * 1024 * 1024;

pub(crate) struct Request {
    pub method: String,
    pub path: String,
    headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl Request {
    pub fn header(&self, name: &str) -> Option<&str> {
        let name = name.to_ascii_lowercase();
        self.headers
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, v)| v.as_str())
    }
}

pub(crate) struct Response {
    pub status: u16,
    pub content_type: &'static str,
    pub body: Vec<u8>,
}

impl Response {
    pub fn xml(body: Vec<u8>) -> Response {
        Response { status: 200, content_type: "application/xml", body }
    }

    pub fn html(body: String) -> Response {
        Response { status: 200, content_type: "text/html; charset=utf-8", body: body.into_bytes() }
    }

    pub fn not_found(message: &str) -> Response {
        Response { status: 404, content_type: "text/plain", body: message.as_bytes().to_vec() }
    }

    pub fn bad_request(message: &str) -> Response {
        Response { status: 400, content_type: "text/plain", body: message.as_bytes().to_vec() }
    }

    pub fn method_not_allowed() -> Response {
        Response { status: 405, content_type: "text/plain", body: b"method not allowed".to_vec() }
    }
}

fn status_reason(status: u16) -> &'static str {
    match status {
        200 => "OK",
        400 => "Bad Request",
        404 => "Not Found",
        405 => "Method Not Allowed",
        _ => "Internal Server Error",
    }
}

// ── Wire-level reading and writing ──────────────────────────────────────────

fn read_head(reader: &mut BufReader<&TcpStream>) -> io::Result<(String, Vec<(String, String)>)> {
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let start = line.trim_end().to_string();
    if start.is_empty() {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "empty request"));
    }
    let mut headers = Vec::new();
    loop {
        let mut line = String::new();
        reader.read_line(&mut line)?;
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            headers.push((name.trim().to_ascii_lowercase(), value.trim().to_string()));
        }
    }
    Ok((start, headers))
}

fn read_body(
    reader: &mut BufReader<&TcpStream>,
    headers: &[(String, String)],
) -> io::Result<Vec<u8>> {
    let len: usize = headers
        .iter()
        .find(|(n, _)| n == "content-length")
        .and_then(|(_, v)| v.parse().ok())
        .unwrap_or(0);
    if len > MAX_BODY {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "body too large"));
    }
    let mut body = vec![0u8; len];
    reader.read_exact(&mut body)?;
    Ok(body)
}

fn read_request(stream: &TcpStream) -> io::Result<Request> {
    let mut reader = BufReader::new(stream);
    let (start, headers) = read_head(&mut reader)?;
    let mut parts = start.split_whitespace();
    let method = parts.next().unwrap_or("").to_string();
    let path = parts.next().unwrap_or("/").to_string();
    let body = read_body(&mut reader, &headers)?;
    Ok(Request { method, path, headers, body })
}

fn write_response(stream: &mut &TcpStream, response: &Response) -> io::Result<()> {
    let head = format!(
        "HTTP/1.1 {} {}\r\nContent-Type: {}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        response.status,
        status_reason(response.status),
        response.content_type,
        response.body.len()
    );
    stream.write_all(head.as_bytes())?;
    stream.write_all(&response.body)?;
    stream.flush()
}

// ── Client side ─────────────────────────────────────────────────────────────

/// One outbound request over a fresh connection.
pub(crate) fn send_request(
    host: &str,
    port: u16,
    method: &str,
    path: &str,
    accept: Option<&str>,
    body: &[u8],
) -> io::Result<(u16, Vec<u8>)> {
    let stream = TcpStream::connect((host, port))?;
    stream.set_read_timeout(Some(IO_TIMEOUT))?;
    stream.set_write_timeout(Some(IO_TIMEOUT))?;
    let mut head = format!("{method} {path} HTTP/1.1\r\nHost: {host}:{port}\r\n");
    if let Some(accept) = accept {
        head.push_str("Accept: ");
        head.push_str(accept);
        head.push_str("\r\n");
    }
    if !body.is_empty() || method == "POST" {
        head.push_str("Content-Type: application/xml\r\n");
        head.push_str(&format!("Content-Length: {}\r\n", body.len()));
    }
    head.push_str("Connection: close\r\n\r\n");
    let mut writer = &stream;
    writer.write_all(head.as_bytes())?;
    writer.write_all(body)?;
    writer.flush()?;

    let mut reader = BufReader::new(&stream);
    let (start, headers) = read_head(&mut reader)?;
    let status: u16 = start
        .split_whitespace()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "bad status line"))?;
    let body = read_body(&mut reader, &headers)?;
    Ok((status, body))
}

// ── Server side ─────────────────────────────────────────────────────────────

/// Accept loop: one thread per connection, one request per connection.
/// Runs until the shutdown flag flips (a wake-up connection is enough to
/// get it re-checked).
pub(crate) fn serve(node: Arc<Node>, listener: TcpListener, shutdown: Arc<AtomicBool>) {
    for stream in listener.incoming() {
        if shutdown.load(Ordering::SeqCst) {
            break;
        }
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                log::warn!("accept failed: {e}");
                continue;
            }
        };
        let node = Arc::clone(&node);
        std::thread::spawn(move || {
            let _ = stream.set_read_timeout(Some(IO_TIMEOUT));
            let _ = stream.set_write_timeout(Some(IO_TIMEOUT));
            let response = match read_request(&stream) {
                Ok(request) => node.handle_http(&request),
                Err(e) => Response::bad_request(&format!("unreadable request: {e}")),
            };
            let mut stream = &stream;
            if let Err(e) = write_response(&mut stream, &response) {
                log::debug!("response write failed: {e}");
            }
        });
    }
}
