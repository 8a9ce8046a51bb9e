//! Minimal XML reader and writer for manifest documents.
//!
//! Supports elements, attributes, character data, CDATA, comments,
//! processing instructions and the predefined/numeric entities. DTDs are
//! rejected. Nesting is capped to keep hostile input from exhausting the
//! stack.

use std::fmt::Write as _;

use thiserror::Error;

const MAX_DEPTH: usize = 64;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("malformed XML at byte {offset}: {message}")]
pub struct XmlError {
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Element {
    pub name: String,
    pub attributes: Vec<(String, String)>,
    pub children: Vec<Element>,
    /// Concatenated character data directly inside this element.
    pub text: String,
}

impl Element {
    pub fn new(name: impl Into<String>) -> Self {
        Element {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn attr(&self, name: &str) -> Option<&str> {
        self.attributes
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_str())
    }

    pub fn with_attr(mut self, name: &str, value: impl ToString) -> Self {
        self.attributes.push((name.to_string(), value.to_string()));
        self
    }

    pub fn with_text(mut self, text: impl Into<String>) -> Self {
        self.text = text.into();
        self
    }

    pub fn push(&mut self, child: Element) {
        self.children.push(child);
    }
}

struct Reader<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, message: impl Into<String>) -> XmlError {
        XmlError {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn starts_with(&self, s: &str) -> bool {
        self.rest().starts_with(s)
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start_matches([' ', '\t', '\r', '\n']);
        self.pos = self.src.len() - trimmed.len();
    }

    fn expect(&mut self, s: &str) -> Result<(), XmlError> {
        if self.starts_with(s) {
            self.pos += s.len();
            Ok(())
        } else {
            Err(self.err(format!("expected `{s}`")))
        }
    }

    fn skip_past(&mut self, terminator: &str, what: &str) -> Result<&'a str, XmlError> {
        match self.rest().find(terminator) {
            Some(i) => {
                let body = &self.rest()[..i];
                self.pos += i + terminator.len();
                Ok(body)
            }
            None => Err(self.err(format!("unterminated {what}"))),
        }
    }

    /// Comments, processing instructions and whitespace outside the root.
    fn skip_misc(&mut self) -> Result<(), XmlError> {
        loop {
            self.skip_ws();
            if self.starts_with("<!--") {
                self.pos += 4;
                self.skip_past("-->", "comment")?;
            } else if self.starts_with("<?") {
                self.pos += 2;
                self.skip_past("?>", "processing instruction")?;
            } else if self.starts_with("<!") {
                return Err(self.err("DTDs are not supported"));
            } else {
                return Ok(());
            }
        }
    }

    fn name(&mut self) -> Result<&'a str, XmlError> {
        let rest = self.rest();
        let end = rest
            .find(|c: char| !(c.is_alphanumeric() || matches!(c, '_' | '-' | '.' | ':')))
            .unwrap_or(rest.len());
        let name = &rest[..end];
        match name.chars().next() {
            Some(c) if c.is_alphabetic() || c == '_' || c == ':' => {
                self.pos += end;
                Ok(name)
            }
            _ => Err(self.err("expected a name")),
        }
    }

    fn element(&mut self, depth: usize) -> Result<Element, XmlError> {
        if depth > MAX_DEPTH {
            return Err(self.err("elements nested too deeply"));
        }
        self.expect("<")?;
        let mut el = Element::new(self.name()?);
        loop {
            let before = self.pos;
            self.skip_ws();
            if self.starts_with("/>") {
                self.pos += 2;
                return Ok(el);
            }
            if self.starts_with(">") {
                self.pos += 1;
                break;
            }
            if self.pos == before {
                return Err(self.err("expected whitespace before attribute"));
            }
            let key = self.name()?;
            self.skip_ws();
            self.expect("=")?;
            self.skip_ws();
            let quote = match self.rest().chars().next() {
                Some(q @ ('"' | '\'')) => q,
                _ => return Err(self.err("attribute value must be quoted")),
            };
            self.pos += 1;
            let start = self.pos;
            let raw = self.skip_past(&quote.to_string(), "attribute value")?;
            if raw.contains('<') {
                return Err(XmlError {
                    offset: start,
                    message: "`<` in attribute value".into(),
                });
            }
            let value = unescape(raw, start)?;
            if el.attr(key).is_some() {
                return Err(self.err(format!("duplicate attribute `{key}`")));
            }
            el.attributes.push((key.to_string(), value));
        }

        loop {
            let rest = self.rest();
            let next = rest
                .find('<')
                .ok_or_else(|| self.err(format!("unclosed element `{}`", el.name)))?;
            if next > 0 {
                let start = self.pos;
                el.text.push_str(&unescape(&rest[..next], start)?);
                self.pos += next;
            }
            if self.starts_with("</") {
                self.pos += 2;
                let close = self.name()?;
                if close != el.name {
                    return Err(self.err(format!("`</{close}>` closes `<{}>`", el.name)));
                }
                self.skip_ws();
                self.expect(">")?;
                return Ok(el);
            } else if self.starts_with("<!--") {
                self.pos += 4;
                self.skip_past("-->", "comment")?;
            } else if self.starts_with("<![CDATA[") {
                self.pos += 9;
                let data = self.skip_past("]]>", "CDATA section")?;
                el.text.push_str(data);
            } else if self.starts_with("<?") {
                self.pos += 2;
                self.skip_past("?>", "processing instruction")?;
            } else if self.starts_with("<!") {
                return Err(self.err("unexpected markup declaration"));
            } else {
                let child = self.element(depth + 1)?;
                el.children.push(child);
            }
        }
    }
}

fn unescape(raw: &str, offset: usize) -> Result<String, XmlError> {
    if !raw.contains('&') {
        return Ok(raw.to_string());
    }
    let mut out = String::with_capacity(raw.len());
    let mut rest = raw;
    while let Some(amp) = rest.find('&') {
        out.push_str(&rest[..amp]);
        let after = &rest[amp + 1..];
        let semi = after.find(';').ok_or_else(|| XmlError {
            offset,
            message: "unterminated entity reference".into(),
        })?;
        let entity = &after[..semi];
        let ch = match entity {
            "lt" => '<',
            "gt" => '>',
            "amp" => '&',
            "quot" => '"',
            "apos" => '\'',
            _ => {
                let code = if let Some(hex) = entity.strip_prefix("#x") {
                    u32::from_str_radix(hex, 16).ok()
                } else if let Some(dec) = entity.strip_prefix('#') {
                    dec.parse::<u32>().ok()
                } else {
                    None
                };
                code.and_then(char::from_u32).ok_or_else(|| XmlError {
                    offset,
                    message: format!("unknown entity `&{entity};`"),
                })?
            }
        };
        out.push(ch);
        rest = &after[semi + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Parses a complete document and returns its root element.
pub fn parse(src: &str) -> Result<Element, XmlError> {
    let mut r = Reader {
        src: src.strip_prefix('\u{feff}').unwrap_or(src),
        pos: 0,
    };
    r.skip_misc()?;
    if !r.starts_with("<") {
        return Err(r.err("expected root element"));
    }
    let root = r.element(0)?;
    r.skip_misc()?;
    if r.pos != r.src.len() {
        return Err(r.err("content after root element"));
    }
    Ok(root)
}

pub fn escape(s: &str, out: &mut String) {
    for c in s.chars() {
        match c {
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '&' => out.push_str("&amp;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            '\t' => out.push_str("&#x9;"),
            '\n' => out.push_str("&#xA;"),
            '\r' => out.push_str("&#xD;"),
            c => out.push(c),
        }
    }
}

/// Serializes with two-space indentation. Elements with children must not
/// also carry text.
pub fn write_document(root: &Element) -> String {
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    write_element(root, 0, &mut out);
    out
}

fn write_element(el: &Element, depth: usize, out: &mut String) {
    for _ in 0..depth {
        out.push_str("  ");
    }
    let _ = write!(out, "<{}", el.name);
    for (k, v) in &el.attributes {
        let _ = write!(out, " {k}=\"");
        escape(v, out);
        out.push('"');
    }
    if el.children.is_empty() {
        if el.text.is_empty() {
            out.push_str("/>\n");
        } else {
            out.push('>');
            escape(&el.text, out);
            let _ = writeln!(out, "</{}>", el.name);
        }
        return;
    }
    out.push_str(">\n");
    for child in &el.children {
        write_element(child, depth + 1, out);
    }
    for _ in 0..depth {
        out.push_str("  ");
    }
    let _ = writeln!(out, "</{}>", el.name);
}
