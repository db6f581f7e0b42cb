//! A small YAML subset: block maps and sequences, single-line flow
//! collections, plain and quoted scalars, and `#` comments. Anchors,
//! aliases, tags and block scalars are rejected.

use serde_json::{Map, Number, Value};

use super::MAX_DEPTH;

#[derive(Debug, Clone, PartialEq)]
pub struct YamlError {
    pub line: usize,
    pub message: String,
}

impl YamlError {
    fn new(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

#[derive(Debug)]
struct Line {
    no: usize,
    indent: usize,
    text: String,
}

/// Parses a document. An empty document is an empty map.
pub fn parse(src: &str) -> Result<Value, YamlError> {
    let lines = split_lines(src)?;
    if lines.is_empty() {
        return Ok(Value::Object(Map::new()));
    }
    let indent = lines[0].indent;
    let mut parser = Parser { lines, pos: 0 };
    let value = parser.block(indent, 1)?;
    if let Some(line) = parser.lines.get(parser.pos) {
        return Err(YamlError::new(line.no, "unexpected content after document"));
    }
    Ok(value)
}

fn split_lines(src: &str) -> Result<Vec<Line>, YamlError> {
    let mut out = Vec::new();
    for (idx, raw) in src.lines().enumerate() {
        let no = idx + 1;
        let stripped = strip_comment(raw);
        let content = stripped.trim_end();
        let text = content.trim_start_matches(' ');
        if text.is_empty() {
            continue;
        }
        if text.starts_with('\t') {
            return Err(YamlError::new(no, "tabs are not allowed for indentation"));
        }
        if text == "---" && out.is_empty() {
            continue;
        }
        out.push(Line {
            no,
            indent: content.len() - text.len(),
            text: text.to_owned(),
        });
    }
    Ok(out)
}

fn strip_comment(line: &str) -> &str {
    let mut in_double = false;
    let mut in_single = false;
    let mut escaped = false;
    let mut prev_space = true;
    for (i, c) in line.char_indices() {
        if in_double {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_double = false;
            }
        } else if in_single {
            if c == '\'' {
                in_single = false;
            }
        } else if c == '#' && prev_space {
            return &line[..i];
        } else if c == '"' {
            in_double = true;
        } else if c == '\'' {
            in_single = true;
        }
        prev_space = c == ' ' || c == '\t';
    }
    line
}

fn is_seq_item(text: &str) -> bool {
    text == "-" || text.starts_with("- ")
}

/// Splits `key: rest` when `text` opens a mapping entry.
fn split_key(text: &str, line: usize) -> Result<Option<(String, String)>, YamlError> {
    if text.starts_with('[') || text.starts_with('{') {
        return Ok(None);
    }
    if text.starts_with('"') || text.starts_with('\'') {
        let mut cur = Cursor::new(text, line);
        let key = cur.quoted()?;
        cur.skip_ws();
        if cur.peek() == Some(':') {
            cur.bump();
            if matches!(cur.peek(), None | Some(' ')) {
                return Ok(Some((key, cur.rest().trim().to_owned())));
            }
        }
        return Ok(None);
    }
    let bytes = text.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if b == b':' && (i + 1 == bytes.len() || bytes[i + 1] == b' ') {
            let key = text[..i].trim_end();
            if key.is_empty() {
                return Err(YamlError::new(line, "empty mapping key"));
            }
            return Ok(Some((key.to_owned(), text[i + 1..].trim().to_owned())));
        }
    }
    Ok(None)
}

struct Parser {
    lines: Vec<Line>,
    pos: usize,
}

impl Parser {
    fn block(&mut self, indent: usize, depth: usize) -> Result<Value, YamlError> {
        let line = &self.lines[self.pos];
        if depth > MAX_DEPTH {
            return Err(YamlError::new(line.no, format!("nesting deeper than {MAX_DEPTH}")));
        }
        if is_seq_item(&line.text) {
            self.sequence(indent, depth)
        } else if split_key(&line.text, line.no)?.is_some() {
            self.mapping(indent, depth)
        } else {
            let (no, text) = (line.no, line.text.clone());
            self.pos += 1;
            inline(&text, no, depth)
        }
    }

    fn nested_value(&mut self, indent: usize, depth: usize) -> Result<Value, YamlError> {
        match self.lines.get(self.pos) {
            Some(next) if next.indent > indent => {
                let inner = next.indent;
                self.block(inner, depth)
            }
            Some(next) if next.indent == indent && is_seq_item(&next.text) => {
                self.sequence(indent, depth)
            }
            _ => Ok(Value::Null),
        }
    }

    fn mapping(&mut self, indent: usize, depth: usize) -> Result<Value, YamlError> {
        let mut map = Map::new();
        while let Some(line) = self.lines.get(self.pos) {
            if line.indent < indent {
                break;
            }
            if line.indent > indent {
                return Err(YamlError::new(line.no, "unexpected indentation"));
            }
            if is_seq_item(&line.text) {
                return Err(YamlError::new(line.no, "sequence item where a mapping key was expected"));
            }
            let no = line.no;
            let Some((key, rest)) = split_key(&line.text, no)? else {
                return Err(YamlError::new(no, "expected `key: value`"));
            };
            if map.contains_key(&key) {
                return Err(YamlError::new(no, format!("duplicate key `{key}`")));
            }
            self.pos += 1;
            let value = if rest.is_empty() {
                self.nested_value(indent, depth + 1)?
            } else {
                inline(&rest, no, depth + 1)?
            };
            map.insert(key, value);
        }
        Ok(Value::Object(map))
    }

    fn sequence(&mut self, indent: usize, depth: usize) -> Result<Value, YamlError> {
        let mut items = Vec::new();
        while let Some(line) = self.lines.get(self.pos) {
            if line.indent < indent || (line.indent == indent && !is_seq_item(&line.text)) {
                break;
            }
            if line.indent > indent {
                return Err(YamlError::new(line.no, "unexpected indentation"));
            }
            let no = line.no;
            let content = line.text[1..].trim_start().to_owned();
            if content.is_empty() {
                self.pos += 1;
                let value = match self.lines.get(self.pos) {
                    Some(next) if next.indent > indent => {
                        let inner = next.indent;
                        self.block(inner, depth + 1)?
                    }
                    _ => Value::Null,
                };
                items.push(value);
            } else if is_seq_item(&content) || split_key(&content, no)?.is_some() {
                // An inline block item: re-anchor the line at its content column.
                let offset = line.text.len() - content.len();
                let line = &mut self.lines[self.pos];
                line.indent = indent + offset;
                line.text = content;
                items.push(self.block(indent + offset, depth + 1)?);
            } else {
                self.pos += 1;
                items.push(inline(&content, no, depth + 1)?);
            }
        }
        Ok(Value::Array(items))
    }
}

fn inline(text: &str, line: usize, depth: usize) -> Result<Value, YamlError> {
    if text.starts_with('|') || text.starts_with('>') {
        return Err(YamlError::new(line, "block scalars are not supported"));
    }
    let mut cur = Cursor::new(text, line);
    let value = cur.value(depth, false)?;
    cur.skip_ws();
    if cur.peek().is_some() {
        return Err(YamlError::new(line, format!("unexpected `{}`", cur.rest())));
    }
    Ok(value)
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
    line: usize,
}

impl<'a> Cursor<'a> {
    fn new(src: &'a str, line: usize) -> Self {
        Self { src, pos: 0, line }
    }

    fn err(&self, message: impl Into<String>) -> YamlError {
        YamlError::new(self.line, message)
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        while self.peek() == Some(' ') {
            self.pos += 1;
        }
    }

    fn expect(&mut self, want: char) -> Result<(), YamlError> {
        match self.bump() {
            Some(c) if c == want => Ok(()),
            Some(c) => Err(self.err(format!("expected `{want}`, found `{c}`"))),
            None => Err(self.err(format!("expected `{want}`, found end of line"))),
        }
    }

    fn value(&mut self, depth: usize, in_flow: bool) -> Result<Value, YamlError> {
        self.skip_ws();
        match self.peek() {
            Some('[') => self.flow_seq(depth),
            Some('{') => self.flow_map(depth),
            Some('"') | Some('\'') => self.quoted().map(Value::String),
            Some(_) => {
                let raw = self.plain(in_flow);
                resolve_plain(raw.trim_end(), self.line)
            }
            None => Ok(Value::Null),
        }
    }

    fn plain(&mut self, in_flow: bool) -> &'a str {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if in_flow && matches!(c, ',' | ']' | '}') {
                break;
            }
            self.pos += c.len_utf8();
        }
        &self.src[start..self.pos]
    }

    fn check_depth(&self, depth: usize) -> Result<(), YamlError> {
        if depth > MAX_DEPTH {
            Err(self.err(format!("nesting deeper than {MAX_DEPTH}")))
        } else {
            Ok(())
        }
    }

    fn flow_seq(&mut self, depth: usize) -> Result<Value, YamlError> {
        self.check_depth(depth)?;
        self.expect('[')?;
        let mut items = Vec::new();
        loop {
            self.skip_ws();
            if self.peek() == Some(']') {
                self.bump();
                return Ok(Value::Array(items));
            }
            items.push(self.value(depth + 1, true)?);
            self.skip_ws();
            match self.bump() {
                Some(',') => continue,
                Some(']') => return Ok(Value::Array(items)),
                _ => return Err(self.err("unterminated flow sequence")),
            }
        }
    }

    fn flow_map(&mut self, depth: usize) -> Result<Value, YamlError> {
        self.check_depth(depth)?;
        self.expect('{')?;
        let mut map = Map::new();
        loop {
            self.skip_ws();
            if self.peek() == Some('}') {
                self.bump();
                return Ok(Value::Object(map));
            }
            let key = match self.peek() {
                Some('"') | Some('\'') => self.quoted()?,
                _ => {
                    let start = self.pos;
                    while let Some(c) = self.peek() {
                        if matches!(c, ':' | ',' | '}') {
                            break;
                        }
                        self.pos += c.len_utf8();
                    }
                    self.src[start..self.pos].trim().to_owned()
                }
            };
            if key.is_empty() {
                return Err(self.err("empty mapping key"));
            }
            self.skip_ws();
            self.expect(':')?;
            let value = self.value(depth + 1, true)?;
            if map.insert(key.clone(), value).is_some() {
                return Err(self.err(format!("duplicate key `{key}`")));
            }
            self.skip_ws();
            match self.bump() {
                Some(',') => continue,
                Some('}') => return Ok(Value::Object(map)),
                _ => return Err(self.err("unterminated flow mapping")),
            }
        }
    }

    fn quoted(&mut self) -> Result<String, YamlError> {
        let start = self.pos;
        match self.bump() {
            Some('"') => {
                let mut escaped = false;
                loop {
                    match self.bump() {
                        None => return Err(self.err("unterminated string")),
                        Some('\\') if !escaped => escaped = true,
                        Some('"') if !escaped => break,
                        Some(_) => escaped = false,
                    }
                }
                serde_json::from_str(&self.src[start..self.pos])
                    .map_err(|e| self.err(format!("bad escape in string: {e}")))
            }
            Some('\'') => {
                let mut out = String::new();
                loop {
                    match self.bump() {
                        None => return Err(self.err("unterminated string")),
                        Some('\'') if self.peek() == Some('\'') => {
                            self.bump();
                            out.push('\'');
                        }
                        Some('\'') => return Ok(out),
                        Some(c) => out.push(c),
                    }
                }
            }
            _ => Err(self.err("expected a quoted string")),
        }
    }
}

fn resolve_plain(s: &str, line: usize) -> Result<Value, YamlError> {
    if let Some(c) = s.chars().next() {
        if matches!(c, '&' | '*' | '!' | '|' | '>' | '%' | '@' | '`') {
            return Err(YamlError::new(
                line,
                format!("unsupported YAML construct starting with `{c}`"),
            ));
        }
    }
    Ok(match s {
        "" | "~" | "null" | "Null" | "NULL" => Value::Null,
        "true" | "True" | "TRUE" => Value::Bool(true),
        "false" | "False" | "FALSE" => Value::Bool(false),
        _ => number(s).unwrap_or_else(|| Value::String(s.to_owned())),
    })
}

fn number(s: &str) -> Option<Value> {
    let body = s.strip_prefix(['-', '+']).unwrap_or(s);
    if body.is_empty() || !body.starts_with(|c: char| c.is_ascii_digit() || c == '.') {
        return None;
    }
    if body.bytes().all(|b| b.is_ascii_digit()) {
        let s = s.strip_prefix('+').unwrap_or(s);
        if let Ok(u) = s.parse::<u64>() {
            return Some(Value::Number(u.into()));
        }
        if let Ok(i) = s.parse::<i64>() {
            return Some(Value::Number(i.into()));
        }
    }
    let float_chars = body
        .bytes()
        .all(|b| b.is_ascii_digit() || matches!(b, b'.' | b'e' | b'E' | b'-' | b'+'));
    if !float_chars || !body.bytes().any(|b| b.is_ascii_digit()) {
        return None;
    }
    let v: f64 = s.parse().ok()?;
    Number::from_f64(v).map(Value::Number)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn block_structures() {
        let doc = parse(
            "# header\n\
             a: 1\n\
             b:\n  c: two   # trailing\n  d: [1, 2.5, x]\n\
             seq:\n- 1\n- k: v\n  w: 3\n-\n  - nested\n-\n\
             e: {f: null, 'g h': \"q#x\"}\n\
             empty:\n",
        )
        .unwrap();
        assert_eq!(
            doc,
            json!({
                "a": 1,
                "b": {"c": "two", "d": [1, 2.5, "x"]},
                "seq": [1, {"k": "v", "w": 3}, ["nested"], null],
                "e": {"f": null, "g h": "q#x"},
                "empty": null
            })
        );
    }

    #[test]
    fn scalars() {
        let doc = parse(
            "i: -3\nf: 1e-3\nt: true\nn: ~\ns: hello world\nq: 'it''s'\nu: \"\\u00e9\"\nurl: http://x\nv: 1.2.3\n",
        )
        .unwrap();
        assert_eq!(
            doc,
            json!({"i": -3, "f": 0.001, "t": true, "n": null, "s": "hello world",
                   "q": "it's", "u": "é", "url": "http://x", "v": "1.2.3"})
        );
    }

    #[test]
    fn empty_document_is_empty_map() {
        assert_eq!(parse("").unwrap(), json!({}));
        assert_eq!(parse("# only comments\n\n").unwrap(), json!({}));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = parse("a: 1\nb: 2\na: 3\n").unwrap_err();
        assert_eq!(e.line, 3);
        assert!(e.message.contains("duplicate"));
        let e = parse("a:\n  b: 1\n    c: 2\n").unwrap_err();
        assert_eq!(e.line, 3);
        let e = parse("a: &anchor 1\n").unwrap_err();
        assert_eq!(e.line, 1);
        let e = parse("x: 1\ny: [1, 2\n").unwrap_err();
        assert_eq!(e.line, 2);
        let e = parse("x: |\n  text\n").unwrap_err();
        assert!(e.message.contains("block scalar"));
        assert!(parse("a:\n\tb: 1\n").is_err());
    }

    #[test]
    fn depth_limit() {
        let nested = |levels: usize| {
            let mut s = String::new();
            for i in 0..levels - 1 {
                s.push_str(&format!("{}k:\n", "  ".repeat(i)));
            }
            s.push_str(&format!("{}leaf: 1\n", "  ".repeat(levels - 1)));
            s
        };
        assert!(parse(&nested(MAX_DEPTH)).is_ok());
        assert!(parse(&nested(MAX_DEPTH + 1)).is_err());
        let flow = format!("a: {}{}", "[".repeat(40), "]".repeat(40));
        assert!(parse(&flow).is_err());
    }
}
