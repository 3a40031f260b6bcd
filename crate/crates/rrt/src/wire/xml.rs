//! Minimal XML reader/writer for the canonical wire grammar.
//!
//! The documents this runtime exchanges are small, fully specified and must
//! be byte-reproducible, so the codec is hand-rolled rather than layered on
//! a general XML library: the writer emits exactly one canonical form and
//! the reader accepts exactly that grammar (plus, optionally, whitespace
//! between elements for hand-edited files such as policy files).
//!
//! Only the five standard entities (`&amp;` `&lt;` `&gt;` `&quot;`
//! `&apos;`) are understood. No namespaces, comments, processing
//! instructions or doctypes.

use std::fmt::Write as _;

/// Error raised by the reader; carries a byte offset and a short reason.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct XmlError {
    pub pos: usize,
    pub reason: String,
}

impl XmlError {
    fn new(pos: usize, reason: impl Into<String>) -> Self {
        XmlError {
            pos,
            reason: reason.into(),
        }
    }
}

impl std::fmt::Display for XmlError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} at byte {}", self.reason, self.pos)
    }
}

pub(crate) fn escape_into(out: &mut String, s: &str) {
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
}

// ── Writer ──────────────────────────────────────────────────────────────────

/// Canonical writer: no inter-element whitespace, attributes in caller
/// order, all text and attribute values escaped.
#[derive(Default)]
pub(crate) struct XmlWriter {
    out: String,
}

impl XmlWriter {
    pub fn new() -> Self {
        XmlWriter::default()
    }

    /// `<tag` — must be followed by `attr`s then `finish_start` or
    /// `finish_empty`.
    pub fn start(&mut self, tag: &str) {
        self.out.push('<');
        self.out.push_str(tag);
    }

    pub fn attr(&mut self, name: &str, value: &str) {
        self.out.push(' ');
        self.out.push_str(name);
        self.out.push_str("=\"");
        escape_into(&mut self.out, value);
        self.out.push('"');
    }

    pub fn attr_u32(&mut self, name: &str, value: u32) {
        let _ = write!(self.out, " {}=\"{}\"", name, value);
    }

    pub fn finish_start(&mut self) {
        self.out.push('>');
    }

    pub fn finish_empty(&mut self) {
        self.out.push_str("/>");
    }

    pub fn end(&mut self, tag: &str) {
        self.out.push_str("</");
        self.out.push_str(tag);
        self.out.push('>');
    }

    pub fn text(&mut self, s: &str) {
        escape_into(&mut self.out, s);
    }

    pub fn raw(&mut self, s: &str) {
        self.out.push_str(s);
    }

    #[cfg(test)]
    pub fn into_string(self) -> String {
        self.out
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.out.into_bytes()
    }
}

// ── Reader ──────────────────────────────────────────────────────────────────

/// An opened element: its attributes in document order and whether it was
/// self-closing (`<tag/>`).
pub(crate) struct Element {
    pub attrs: Vec<(String, String)>,
    pub self_closed: bool,
}

impl Element {
    pub fn attr(&self, name: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_str())
    }

    /// Rejects attributes outside the allowed set.
    pub fn check_attrs(&self, allowed: &[&str]) -> Result<(), XmlError> {
        for (n, _) in &self.attrs {
            if !allowed.contains(&n.as_str()) {
                return Err(XmlError::new(0, format!("unexpected attribute `{n}`")));
            }
        }
        Ok(())
    }
}

pub(crate) struct XmlReader<'a> {
    s: &'a str,
    pos: usize,
    /// Permit whitespace between elements (hand-edited files).
    lenient_ws: bool,
}

impl<'a> XmlReader<'a> {
    pub fn new(input: &'a [u8]) -> Result<Self, XmlError> {
        let s = std::str::from_utf8(input)
            .map_err(|e| XmlError::new(e.valid_up_to(), "invalid utf-8"))?;
        Ok(XmlReader {
            s,
            pos: 0,
            lenient_ws: false,
        })
    }

    pub fn new_lenient(input: &'a [u8]) -> Result<Self, XmlError> {
        let mut r = Self::new(input)?;
        r.lenient_ws = true;
        Ok(r)
    }

    fn err(&self, reason: impl Into<String>) -> XmlError {
        XmlError::new(self.pos, reason)
    }

    fn rest(&self) -> &'a str {
        &self.s[self.pos..]
    }

    fn skip_ws(&mut self) {
        if self.lenient_ws {
            let trimmed = self.rest().trim_start();
            self.pos = self.s.len() - trimmed.len();
        }
    }

    /// Name of the next opening tag without consuming it, or None when the
    /// next token is a closing tag or end of input.
    pub fn peek_open(&mut self) -> Option<&'a str> {
        self.skip_ws();
        let rest = self.rest();
        if !rest.starts_with('<') || rest.starts_with("</") {
            return None;
        }
        let body = &rest[1..];
        let end = body.find(|c: char| c == ' ' || c == '>' || c == '/')?;
        Some(&body[..end])
    }

    /// Consumes `<tag ...>` or `<tag .../>`.
    pub fn open(&mut self, tag: &str) -> Result<Element, XmlError> {
        self.skip_ws();
        if !self.rest().starts_with('<') {
            return Err(self.err(format!("expected `<{tag}`")));
        }
        let got = self
            .peek_open()
            .ok_or_else(|| self.err(format!("expected `<{tag}`")))?;
        if got != tag {
            return Err(self.err(format!("expected `<{tag}`, found `<{got}`")));
        }
        self.pos += 1 + tag.len();
        let mut attrs = Vec::new();
        loop {
            if self.rest().starts_with("/>") {
                self.pos += 2;
                return Ok(Element {
                    attrs,
                    self_closed: true,
                });
            }
            if self.rest().starts_with('>') {
                self.pos += 1;
                return Ok(Element {
                    attrs,
                    self_closed: false,
                });
            }
            if !self.rest().starts_with(' ') {
                return Err(self.err("expected attribute, `>` or `/>`"));
            }
            while self.rest().starts_with(' ') {
                self.pos += 1;
            }
            let (name, value) = self.read_attr()?;
            attrs.push((name, value));
        }
    }

    fn read_attr(&mut self) -> Result<(String, String), XmlError> {
        let rest = self.rest();
        let eq = rest
            .find('=')
            .ok_or_else(|| self.err("malformed attribute"))?;
        let name = &rest[..eq];
        if name.is_empty()
            || !name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            return Err(self.err("malformed attribute name"));
        }
        self.pos += eq + 1;
        if !self.rest().starts_with('"') {
            return Err(self.err("expected `\"` after `=`"));
        }
        self.pos += 1;
        let close = self
            .rest()
            .find('"')
            .ok_or_else(|| self.err("unterminated attribute value"))?;
        let raw = &self.rest()[..close];
        let value = self.unescape(raw)?;
        self.pos += close + 1;
        Ok((name.to_string(), value))
    }

    /// True when the next token is `</tag>`; does not consume.
    pub fn at_close(&mut self, tag: &str) -> bool {
        self.skip_ws();
        let rest = self.rest();
        rest.starts_with("</")
            && rest[2..].starts_with(tag)
            && rest[2 + tag.len()..].starts_with('>')
    }

    pub fn close(&mut self, tag: &str) -> Result<(), XmlError> {
        if !self.at_close(tag) {
            return Err(self.err(format!("expected `</{tag}>`")));
        }
        self.pos += 3 + tag.len();
        Ok(())
    }

    /// Character data up to the next `<`, unescaped.
    pub fn text(&mut self) -> Result<String, XmlError> {
        let end = self.rest().find('<').unwrap_or(self.rest().len());
        let raw = &self.rest()[..end];
        let out = self.unescape(raw)?;
        self.pos += end;
        Ok(out)
    }

    pub fn expect_eof(&mut self) -> Result<(), XmlError> {
        self.skip_ws();
        if self.pos != self.s.len() {
            return Err(self.err("trailing content"));
        }
        Ok(())
    }

    fn unescape(&self, raw: &str) -> Result<String, XmlError> {
        if raw.contains('<') {
            return Err(self.err("`<` in character data"));
        }
        if !raw.contains('&') {
            return Ok(raw.to_string());
        }
        let mut out = String::with_capacity(raw.len());
        let mut rest = raw;
        while let Some(i) = rest.find('&') {
            out.push_str(&rest[..i]);
            rest = &rest[i..];
            let semi = rest
                .find(';')
                .ok_or_else(|| self.err("unterminated entity"))?;
            match &rest[..=semi] {
                "&amp;" => out.push('&'),
                "&lt;" => out.push('<'),
                "&gt;" => out.push('>'),
                "&quot;" => out.push('"'),
                "&apos;" => out.push('\''),
                other => return Err(self.err(format!("unknown entity `{other}`"))),
            }
            rest = &rest[semi + 1..];
        }
        out.push_str(rest);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writer_escapes_text_and_attrs() {
        let mut w = XmlWriter::new();
        w.start("t");
        w.attr("a", "x\"&y");
        w.finish_start();
        w.text("<b>&'");
        w.end("t");
        assert_eq!(
            w.into_string(),
            "<t a=\"x&quot;&amp;y\">&lt;b&gt;&amp;&apos;</t>"
        );
    }

    #[test]
    fn reader_round_trips_entities() {
        let doc = b"<t a=\"x&quot;&amp;y\">&lt;b&gt;&amp;&apos;</t>";
        let mut r = XmlReader::new(doc).unwrap();
        let el = r.open("t").unwrap();
        assert_eq!(el.attr("a"), Some("x\"&y"));
        assert!(!el.self_closed);
        assert_eq!(r.text().unwrap(), "<b>&'");
        r.close("t").unwrap();
        r.expect_eof().unwrap();
    }

    #[test]
    fn strict_reader_rejects_whitespace_between_elements() {
        let mut r = XmlReader::new(b"<a> <b/></a>").unwrap();
        r.open("a").unwrap();
        assert!(r.open("b").is_err());
    }

    #[test]
    fn lenient_reader_skips_whitespace() {
        let mut r = XmlReader::new_lenient(b"<a>\n  <b/>\n</a>\n").unwrap();
        r.open("a").unwrap();
        let b = r.open("b").unwrap();
        assert!(b.self_closed);
        r.close("a").unwrap();
        r.expect_eof().unwrap();
    }
}
