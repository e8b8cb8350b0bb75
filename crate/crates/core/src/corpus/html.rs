//! Parser for the supported HTML subset.
//!
//! Grammar: nestable elements `<name attr=...>...</name>`, void elements
//! (`img`, `br`, `hr`, ...), self-closing `<name/>`, comments, doctype and
//! processing instructions (skipped), and the common character entities.
//! `script` and `style` bodies are dropped. Block-level boundaries and
//! dropped elements separate words; inline tags do not. Text between two
//! images is collapsed into a single whitespace-normalized run.
//!
//! Elements still open at end of input are closed implicitly. A close tag
//! that does not match the innermost open element is an error.

use super::CorpusError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PageSegment {
    Text(String),
    /// `src` of an `<img>` tag.
    Image(String),
}

const VOID: &[&str] = &[
    "area", "base", "br", "col", "embed", "hr", "img", "input", "link", "meta", "param", "source", "track", "wbr",
];

const BLOCK: &[&str] = &[
    "address", "article", "aside", "blockquote", "body", "br", "dd", "div", "dl", "dt", "figcaption", "figure",
    "footer", "form", "h1", "h2", "h3", "h4", "h5", "h6", "head", "header", "hr", "html", "li", "main", "nav", "ol",
    "p", "pre", "section", "table", "tbody", "td", "tfoot", "th", "thead", "title", "tr", "ul",
];

const RAW_TEXT: &[&str] = &["script", "style"];

struct Tag {
    name: String,
    attrs: Vec<(String, String)>,
    self_closing: bool,
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    stack: Vec<String>,
    out: Vec<PageSegment>,
    text: String,
}

impl<'a> Parser<'a> {
    fn err(&self, offset: usize, message: impl Into<String>) -> CorpusError {
        CorpusError::MalformedMarkup {
            offset,
            message: message.into(),
        }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn flush_text(&mut self) {
        let normalized = self.text.split_whitespace().collect::<Vec<_>>().join(" ");
        if !normalized.is_empty() {
            self.out.push(PageSegment::Text(normalized));
        }
        self.text.clear();
    }

    fn run(mut self) -> Result<Vec<PageSegment>, CorpusError> {
        while self.pos < self.src.len() {
            let rest = self.rest();
            let Some(lt) = rest.find('<') else {
                self.text.push_str(&decode_entities(rest));
                self.pos = self.src.len();
                break;
            };
            self.text.push_str(&decode_entities(&rest[..lt]));
            self.pos += lt;
            self.markup()?;
        }
        self.flush_text();
        Ok(self.out)
    }

    /// Handle the construct starting at `<`.
    fn markup(&mut self) -> Result<(), CorpusError> {
        let start = self.pos;
        let rest = self.rest();
        if let Some(body) = rest.strip_prefix("<!--") {
            self.pos = match body.find("-->") {
                Some(end) => start + 4 + end + 3,
                None => self.src.len(),
            };
            return Ok(());
        }
        if rest.starts_with("<!") || rest.starts_with("<?") {
            let end = rest.find('>').ok_or_else(|| self.err(start, "unterminated declaration"))?;
            self.pos = start + end + 1;
            return Ok(());
        }
        if let Some(after) = rest.strip_prefix("</") {
            if after.starts_with(|c: char| c.is_ascii_alphabetic()) {
                let end = after.find('>').ok_or_else(|| self.err(start, "unterminated close tag"))?;
                let name = after[..end].trim().to_ascii_lowercase();
                self.pos = start + 2 + end + 1;
                return self.close(&name, start);
            }
        }
        if rest[1..].starts_with(|c: char| c.is_ascii_alphabetic()) {
            let (tag, len) = parse_tag(rest).ok_or_else(|| self.err(start, "unterminated tag"))?;
            self.pos = start + len;
            return self.open(tag, start);
        }
        // A bare '<' is text.
        self.text.push('<');
        self.pos += 1;
        Ok(())
    }

    fn open(&mut self, tag: Tag, start: usize) -> Result<(), CorpusError> {
        let name = tag.name.as_str();
        if RAW_TEXT.contains(&name) {
            self.text.push(' ');
            if !tag.self_closing {
                let close = format!("</{name}");
                let lower = self.rest().to_ascii_lowercase();
                match lower.find(&close) {
                    Some(idx) => {
                        let after = self.pos + idx;
                        let gt = self.src[after..]
                            .find('>')
                            .ok_or_else(|| self.err(start, format!("unterminated </{name}>")))?;
                        self.pos = after + gt + 1;
                    }
                    None => self.pos = self.src.len(),
                }
            }
            return Ok(());
        }
        if name == "img" {
            if let Some((_, src)) = tag.attrs.iter().find(|(k, _)| k == "src") {
                if !src.trim().is_empty() {
                    self.flush_text();
                    self.out.push(PageSegment::Image(src.trim().to_string()));
                }
            }
            return Ok(());
        }
        if BLOCK.contains(&name) {
            self.text.push(' ');
        }
        if !tag.self_closing && !VOID.contains(&name) {
            self.stack.push(tag.name);
        }
        Ok(())
    }

    fn close(&mut self, name: &str, start: usize) -> Result<(), CorpusError> {
        if VOID.contains(&name) {
            return Ok(());
        }
        match self.stack.last() {
            Some(top) if top == name => {
                self.stack.pop();
                if BLOCK.contains(&name) {
                    self.text.push(' ');
                }
                Ok(())
            }
            Some(top) => Err(self.err(start, format!("</{name}> does not match open <{top}>"))),
            None => Err(self.err(start, format!("</{name}> without open element"))),
        }
    }
}

/// Parse a start tag at the beginning of `s`. Returns the tag and the
/// number of bytes consumed, or `None` when the tag never terminates.
fn parse_tag(s: &str) -> Option<(Tag, usize)> {
    let bytes = s.as_bytes();
    let mut i = 1;
    while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'-' || bytes[i] == b':') {
        i += 1;
    }
    let name = s[1..i].to_ascii_lowercase();
    let mut attrs = Vec::new();
    let mut self_closing = false;
    loop {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        match bytes.get(i)? {
            b'>' => return Some((Tag { name, attrs, self_closing }, i + 1)),
            b'/' => {
                self_closing = true;
                i += 1;
                continue;
            }
            _ => {}
        }
        self_closing = false;
        let key_start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() && !matches!(bytes[i], b'=' | b'>' | b'/') {
            i += 1;
        }
        let key = s[key_start..i].to_ascii_lowercase();
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        let mut value = String::new();
        if bytes.get(i) == Some(&b'=') {
            i += 1;
            while i < bytes.len() && bytes[i].is_ascii_whitespace() {
                i += 1;
            }
            match bytes.get(i)? {
                q @ (b'"' | b'\'') => {
                    let end = s[i + 1..].find(*q as char)?;
                    value = decode_entities(&s[i + 1..i + 1 + end]);
                    i += end + 2;
                }
                _ => {
                    let v_start = i;
                    while i < bytes.len()
                        && !bytes[i].is_ascii_whitespace()
                        && bytes[i] != b'>'
                        && !(bytes[i] == b'/' && bytes.get(i + 1) == Some(&b'>'))
                    {
                        i += 1;
                    }
                    value = decode_entities(&s[v_start..i]);
                }
            }
        }
        if !key.is_empty() {
            attrs.push((key, value));
        }
    }
}

fn decode_entities(s: &str) -> String {
    if !s.contains('&') {
        return s.to_string();
    }
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(amp) = rest.find('&') {
        out.push_str(&rest[..amp]);
        rest = &rest[amp..];
        let decoded = rest.find(';').filter(|&semi| semi <= 10).and_then(|semi| {
            let ent = &rest[1..semi];
            let ch = match ent {
                "amp" => Some('&'),
                "lt" => Some('<'),
                "gt" => Some('>'),
                "quot" => Some('"'),
                "apos" => Some('\''),
                "nbsp" => Some(' '),
                _ => ent
                    .strip_prefix("#x")
                    .or_else(|| ent.strip_prefix("#X"))
                    .and_then(|h| u32::from_str_radix(h, 16).ok())
                    .or_else(|| ent.strip_prefix('#').and_then(|d| d.parse().ok()))
                    .and_then(char::from_u32),
            };
            ch.map(|c| (c, semi + 1))
        });
        match decoded {
            Some((c, len)) => {
                out.push(c);
                rest = &rest[len..];
            }
            None => {
                out.push('&');
                rest = &rest[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

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

/// Extract text runs and image references from `markup`, in document order.
pub fn parse_page(markup: &str) -> Result<Vec<PageSegment>, CorpusError> {
    Parser {
        src: markup,
        pos: 0,
        stack: Vec::new(),
        out: Vec::new(),
        text: String::new(),
    }
    .run()
}

/// Inverse of [`parse_page`] for its own output: text runs become `<p>`
/// blocks and images become `<img src>` tags.
pub fn serialize_segments(segments: &[PageSegment]) -> String {
    let mut out = String::new();
    for seg in segments {
        match seg {
            PageSegment::Text(t) => {
                out.push_str("<p>");
                out.push_str(&escape(t));
                out.push_str("</p>");
            }
            PageSegment::Image(src) => {
                out.push_str("<img src=\"");
                out.push_str(&escape(src));
                out.push_str("\">");
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(s: &str) -> PageSegment {
        PageSegment::Text(s.into())
    }
    fn i(s: &str) -> PageSegment {
        PageSegment::Image(s.into())
    }

    #[test]
    fn text_image_text() {
        assert_eq!(
            parse_page(r#"<p>hello <img src="a.jpg"> world</p>"#).unwrap(),
            vec![t("hello"), i("a.jpg"), t("world")]
        );
    }

    #[test]
    fn empty_body() {
        assert_eq!(parse_page("<div></div>").unwrap(), vec![]);
        assert_eq!(parse_page("").unwrap(), vec![]);
    }

    #[test]
    fn script_is_stripped_and_separates_words() {
        assert_eq!(parse_page("<p>x<script>bad()</script>y</p>").unwrap(), vec![t("x y")]);
        assert_eq!(
            parse_page("<style>p{color:red}</style><p>a</p><SCRIPT type=x>if (a<b) {}</SCRIPT>").unwrap(),
            vec![t("a")]
        );
    }

    #[test]
    fn inline_tags_do_not_split_words() {
        assert_eq!(parse_page("<p>hel<b>lo</b> there</p>").unwrap(), vec![t("hello there")]);
        assert_eq!(parse_page("<p>a</p><p>b</p>").unwrap(), vec![t("a b")]);
    }

    #[test]
    fn unclosed_at_eof_is_tolerated() {
        assert_eq!(parse_page("<div><p>open").unwrap(), vec![t("open")]);
        assert_eq!(parse_page("<p>x<script>never closed").unwrap(), vec![t("x")]);
    }

    #[test]
    fn mismatched_close_is_an_error() {
        let err = parse_page("<div><p>x</div>").unwrap_err();
        assert!(matches!(err, CorpusError::MalformedMarkup { offset: 9, .. }), "{err:?}");
        assert!(parse_page("x</p>").is_err());
    }

    #[test]
    fn truncated_tag_is_an_error() {
        assert!(parse_page(r#"<p>x<img src="a.jpg"#).is_err());
    }

    #[test]
    fn attributes_and_entities() {
        assert_eq!(
            parse_page("<p>a &amp; b&#33; &lt;c&gt;<img alt='x' SRC=b.png/>&nbsp;d &bogus; e</p>").unwrap(),
            vec![t("a & b! <c>"), i("b.png"), t("d &bogus; e")]
        );
        assert_eq!(parse_page(r#"<img src="a?x=1&amp;y=2">"#).unwrap(), vec![i("a?x=1&y=2")]);
    }

    #[test]
    fn comments_doctype_and_bare_lt() {
        assert_eq!(
            parse_page("<!DOCTYPE html><!-- <p>hidden</p> --><p>1 < 2</p>").unwrap(),
            vec![t("1 < 2")]
        );
    }

    #[test]
    fn img_without_src_is_ignored() {
        assert_eq!(parse_page("<p>a<img alt=x>b</p>").unwrap(), vec![t("ab")]);
    }

    fn segments_strategy() -> impl Strategy<Value = Vec<PageSegment>> {
        let word = "[a-zA-Z0-9&<>\"'!?.,;:-]{1,8}";
        let text = prop::collection::vec(word, 1..6).prop_map(|w| PageSegment::Text(w.join(" ")));
        let img = "[a-z0-9/._?=&-]{1,16}".prop_map(PageSegment::Image);
        prop::collection::vec(prop_oneof![text, img], 0..10).prop_map(|segs| {
            // The parser never emits two adjacent text runs.
            let mut out: Vec<PageSegment> = Vec::new();
            for s in segs {
                match (out.last_mut(), s) {
                    (Some(PageSegment::Text(prev)), PageSegment::Text(next)) => {
                        prev.push(' ');
                        prev.push_str(&next);
                    }
                    (_, s) => out.push(s),
                }
            }
            out
        })
    }

    proptest! {
        #[test]
        fn serialize_then_parse_round_trips(segs in segments_strategy()) {
            let html = serialize_segments(&segs);
            prop_assert_eq!(parse_page(&html).unwrap(), segs);
        }
    }
}
