//! Minimal XML tree reader, sufficient for the ABSA corpus layouts.
//!
//! Handles elements, attributes, character data, comments, CDATA, the
//! XML declaration and the five predefined entities plus numeric
//! character references. No DTDs, no namespaces.

use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct Element {
    pub name: String,
    pub attrs: Vec<(String, String)>,
    pub children: Vec<Element>,
    pub text: String,
    pub line: usize,
}

impl Element {
    pub fn attr(&self, name: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_str())
    }

    pub fn child(&self, name: &str) -> Option<&Element> {
        self.children.iter().find(|c| c.name == name)
    }

    /// Depth-first walk collecting every descendant with the given name.
    pub fn descendants<'a>(&'a self, name: &str, out: &mut Vec<&'a Element>) {
        for c in &self.children {
            if c.name == name {
                out.push(c);
            }
            c.descendants(name, out);
        }
    }
}

struct Reader<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
}

pub fn parse(bytes: &[u8]) -> Result<Element> {
    let mut r = Reader {
        src: bytes,
        pos: 0,
        line: 1,
    };
    r.skip_misc()?;
    let root = r.element()?;
    r.skip_misc()?;
    if r.pos < r.src.len() {
        return Err(r.err("trailing content after document element"));
    }
    Ok(root)
}

impl<'a> Reader<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Xml {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let b = self.peek()?;
        self.pos += 1;
        if b == b'\n' {
            self.line += 1;
        }
        Some(b)
    }

    fn eat(&mut self, lit: &str) -> bool {
        if self.src[self.pos..].starts_with(lit.as_bytes()) {
            for _ in 0..lit.len() {
                self.bump();
            }
            true
        } else {
            false
        }
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b' ' | b'\t' | b'\r' | b'\n')) {
            self.bump();
        }
    }

    /// Skips whitespace, the XML declaration, processing instructions and
    /// comments between markup.
    fn skip_misc(&mut self) -> Result<()> {
        loop {
            self.skip_ws();
            if self.eat("<?") {
                while !self.eat("?>") {
                    if self.bump().is_none() {
                        return Err(self.err("unterminated processing instruction"));
                    }
                }
            } else if self.src[self.pos..].starts_with(b"<!--") {
                self.eat("<!--");
                while !self.eat("-->") {
                    if self.bump().is_none() {
                        return Err(self.err("unterminated comment"));
                    }
                }
            } else if self.src[self.pos..].starts_with(b"<!DOCTYPE") {
                // skip to the closing '>' (internal subsets unsupported)
                while let Some(b) = self.bump() {
                    if b == b'>' {
                        break;
                    }
                }
            } else {
                return Ok(());
            }
        }
    }

    fn name(&mut self) -> Result<String> {
        let start = self.pos;
        while let Some(b) = self.peek() {
            if b.is_ascii_alphanumeric() || matches!(b, b'_' | b'-' | b'.' | b':') {
                self.bump();
            } else {
                break;
            }
        }
        if self.pos == start {
            return Err(self.err("expected a name"));
        }
        Ok(String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
    }

    fn element(&mut self) -> Result<Element> {
        let line = self.line;
        if !self.eat("<") {
            return Err(self.err("expected '<'"));
        }
        let name = self.name()?;
        let mut attrs = Vec::new();
        loop {
            self.skip_ws();
            match self.peek() {
                Some(b'/') => {
                    self.bump();
                    if !self.eat(">") {
                        return Err(self.err("expected '>' after '/'"));
                    }
                    return Ok(Element {
                        name,
                        attrs,
                        children: Vec::new(),
                        text: String::new(),
                        line,
                    });
                }
                Some(b'>') => {
                    self.bump();
                    break;
                }
                Some(_) => {
                    let key = self.name()?;
                    self.skip_ws();
                    if !self.eat("=") {
                        return Err(self.err(format!("expected '=' after attribute {key:?}")));
                    }
                    self.skip_ws();
                    let quote = match self.bump() {
                        Some(q @ (b'"' | b'\'')) => q,
                        _ => return Err(self.err("expected quoted attribute value")),
                    };
                    let mut raw = Vec::new();
                    loop {
                        match self.bump() {
                            Some(b) if b == quote => break,
                            Some(b) => raw.push(b),
                            None => return Err(self.err("unterminated attribute value")),
                        }
                    }
                    attrs.push((key, self.unescape(&raw)?));
                }
                None => return Err(self.err("unexpected end of input in tag")),
            }
        }

        let mut children = Vec::new();
        let mut text_raw: Vec<u8> = Vec::new();
        loop {
            if self.src[self.pos..].starts_with(b"</") {
                self.eat("</");
                let close = self.name()?;
                if close != name {
                    return Err(self.err(format!(
                        "mismatched closing tag </{close}> for <{name}>"
                    )));
                }
                self.skip_ws();
                if !self.eat(">") {
                    return Err(self.err("expected '>' in closing tag"));
                }
                let text = self.unescape(&text_raw)?;
                return Ok(Element {
                    name,
                    attrs,
                    children,
                    text,
                    line,
                });
            } else if self.src[self.pos..].starts_with(b"<!--") {
                self.eat("<!--");
                while !self.eat("-->") {
                    if self.bump().is_none() {
                        return Err(self.err("unterminated comment"));
                    }
                }
            } else if self.src[self.pos..].starts_with(b"<![CDATA[") {
                self.eat("<![CDATA[");
                loop {
                    if self.eat("]]>") {
                        break;
                    }
                    match self.bump() {
                        Some(b) => text_raw.push(b),
                        None => return Err(self.err("unterminated CDATA section")),
                    }
                }
            } else if self.peek() == Some(b'<') {
                children.push(self.element()?);
            } else {
                match self.bump() {
                    Some(b) => text_raw.push(b),
                    None => return Err(self.err(format!("unexpected end of input in <{name}>"))),
                }
            }
        }
    }

    fn unescape(&self, raw: &[u8]) -> Result<String> {
        let s = std::str::from_utf8(raw)
            .map_err(|_| self.err("invalid UTF-8"))?;
        if !s.contains('&') {
            return Ok(s.to_owned());
        }
        let mut out = String::with_capacity(s.len());
        let mut rest = s;
        while let Some(i) = rest.find('&') {
            out.push_str(&rest[..i]);
            rest = &rest[i..];
            let end = rest
                .find(';')
                .ok_or_else(|| self.err("unterminated entity reference"))?;
            let ent = &rest[1..end];
            match ent {
                "amp" => out.push('&'),
                "lt" => out.push('<'),
                "gt" => out.push('>'),
                "quot" => out.push('"'),
                "apos" => out.push('\''),
                _ if ent.starts_with("#x") || ent.starts_with("#X") => {
                    let cp = u32::from_str_radix(&ent[2..], 16)
                        .map_err(|_| self.err(format!("bad character reference &{ent};")))?;
                    out.push(
                        char::from_u32(cp)
                            .ok_or_else(|| self.err("character reference out of range"))?,
                    );
                }
                _ if ent.starts_with('#') => {
                    let cp: u32 = ent[1..]
                        .parse()
                        .map_err(|_| self.err(format!("bad character reference &{ent};")))?;
                    out.push(
                        char::from_u32(cp)
                            .ok_or_else(|| self.err("character reference out of range"))?,
                    );
                }
                _ => return Err(self.err(format!("unknown entity &{ent};"))),
            }
            rest = &rest[end + 1..];
        }
        out.push_str(rest);
        Ok(out)
    }
}
