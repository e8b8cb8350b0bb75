//! Interleaved image-text and text-only document construction.
//!
//! The pipeline runs in two passes. Pass one parses pages, resolves and
//! filters images, and counts image URLs and MD5s over the whole corpus
//! ([`count_images`], shard-mergeable). Pass two removes globally frequent
//! and page-repeated images ([`apply_image_dedup`]) and re-applies the
//! document-level image-count rule ([`filter_document`]).

mod dedup;
mod filter;
mod html;
mod minhash;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dedup::{apply_image_dedup, apply_image_dedup_tallied, count_images, count_images_par, DedupCounts, DedupTally, MAX_CORPUS_OCCURRENCES};
pub use filter::{
    filter_document, filter_image, text_quality_filter, FilterDecision, RejectReason, TextFilterConfig,
    MAX_IMAGES_PER_DOC, MAX_SIDE_PX, MIN_SIDE_PX, URL_KEYWORDS,
};
pub use html::{parse_page, serialize_segments, PageSegment};
pub use minhash::{
    estimate_jaccard, lsh_near_duplicates, minhash_signature, near_duplicate_drops, shingles, DuplicatePair, LshParams,
    MinHashParams, MinHashSignature, MinHasher,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CorpusError {
    #[error("malformed markup at byte {offset}: {message}")]
    MalformedMarkup { offset: usize, message: String },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

/// One ingested web page.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawPage {
    pub page_id: String,
    pub url: String,
    #[serde(default)]
    pub markup: String,
}

fn is_true(b: &bool) -> bool {
    *b
}

fn default_true() -> bool {
    true
}

/// Image metadata. Decoding happens upstream, so dimensions, digest and
/// validity arrive precomputed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageRecord {
    pub url: String,
    #[serde(rename = "width")]
    pub width_px: u32,
    #[serde(rename = "height")]
    pub height_px: u32,
    #[serde(rename = "md5")]
    pub md5_hex: String,
    #[serde(default = "default_true", skip_serializing_if = "is_true")]
    pub bytes_valid: bool,
}

impl ImageRecord {
    pub fn new(url: impl Into<String>, width_px: u32, height_px: u32, md5_hex: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            width_px,
            height_px,
            md5_hex: md5_hex.into(),
            bytes_valid: true,
        }
    }

    /// Placeholder for an image whose bytes never arrived.
    pub fn missing(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            width_px: 0,
            height_px: 0,
            md5_hex: "0".repeat(32),
            bytes_valid: false,
        }
    }

    pub fn has_valid_md5(&self) -> bool {
        self.md5_hex.len() == 32 && self.md5_hex.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum DocSegment {
    Text { content: String },
    Image(ImageRecord),
}

impl DocSegment {
    pub fn text(content: impl Into<String>) -> Self {
        DocSegment::Text {
            content: content.into(),
        }
    }

    pub fn as_image(&self) -> Option<&ImageRecord> {
        match self {
            DocSegment::Image(img) => Some(img),
            DocSegment::Text { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterleavedDoc {
    pub doc_id: String,
    pub segments: Vec<DocSegment>,
}

impl InterleavedDoc {
    pub fn new(doc_id: impl Into<String>, segments: Vec<DocSegment>) -> Self {
        Self {
            doc_id: doc_id.into(),
            segments,
        }
    }

    pub fn image_count(&self) -> usize {
        self.segments.iter().filter(|s| s.as_image().is_some()).count()
    }

    pub fn images(&self) -> impl Iterator<Item = &ImageRecord> {
        self.segments.iter().filter_map(DocSegment::as_image)
    }

    /// Text runs joined by newlines.
    pub fn text_layer(&self) -> String {
        let parts: Vec<&str> = self
            .segments
            .iter()
            .filter_map(|s| match s {
                DocSegment::Text { content } => Some(content.as_str()),
                DocSegment::Image(_) => None,
            })
            .collect();
        parts.join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextDoc {
    pub doc_id: String,
    pub text: String,
}

impl TextDoc {
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            doc_id: doc_id.into(),
            text: text.into(),
        }
    }

    /// Whitespace-split token count.
    pub fn token_estimate(&self) -> usize {
        self.text.split_whitespace().count()
    }
}

/// Attach image metadata to parsed segments. Images unknown to `lookup`
/// become [`ImageRecord::missing`] and are later rejected as corrupt.
pub fn resolve_images<F>(segments: Vec<PageSegment>, mut lookup: F) -> Vec<DocSegment>
where
    F: FnMut(&str) -> Option<ImageRecord>,
{
    segments
        .into_iter()
        .map(|seg| match seg {
            PageSegment::Text(content) => DocSegment::Text { content },
            PageSegment::Image(src) => DocSegment::Image(lookup(&src).unwrap_or_else(|| ImageRecord::missing(src))),
        })
        .collect()
}

/// Drop images rejected by [`filter_image`], returning the kept segments
/// and the rejection reasons in document order.
pub fn filter_images(segments: Vec<DocSegment>) -> (Vec<DocSegment>, Vec<RejectReason>) {
    let mut rejected = Vec::new();
    let kept = segments
        .into_iter()
        .filter(|seg| match seg {
            DocSegment::Image(img) => {
                let decision = filter_image(img);
                if !decision.keep {
                    rejected.push(decision.reason);
                }
                decision.keep
            }
            DocSegment::Text { .. } => true,
        })
        .collect();
    (kept, rejected)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_wire_format() {
        let doc = InterleavedDoc::new(
            "d1",
            vec![DocSegment::text("hi"), DocSegment::Image(ImageRecord::new("a.jpg", 200, 300, "0".repeat(32)))],
        );
        let json = serde_json::to_string(&doc).unwrap();
        assert_eq!(
            json,
            r#"{"doc_id":"d1","segments":[{"type":"text","content":"hi"},{"type":"image","url":"a.jpg","width":200,"height":300,"md5":"00000000000000000000000000000000"}]}"#
        );
        let back: InterleavedDoc = serde_json::from_str(&json).unwrap();
        assert_eq!(back, doc);
        assert_eq!(back.image_count(), 1);
    }

    #[test]
    fn invalid_image_serializes_flag() {
        let json = serde_json::to_string(&ImageRecord::missing("x")).unwrap();
        assert!(json.contains(r#""bytes_valid":false"#));
    }

    #[test]
    fn md5_shape() {
        assert!(ImageRecord::new("u", 1, 1, "0123456789abcdef0123456789abcdef").has_valid_md5());
        assert!(!ImageRecord::new("u", 1, 1, "0123456789ABCDEF0123456789abcdef").has_valid_md5());
        assert!(!ImageRecord::new("u", 1, 1, "abc").has_valid_md5());
    }

    #[test]
    fn token_estimate_is_whitespace_split() {
        assert_eq!(TextDoc::new("t", "  a b\n\tc  ").token_estimate(), 3);
        assert_eq!(TextDoc::new("t", "").token_estimate(), 0);
    }

    #[test]
    fn unresolved_images_become_missing() {
        let segs = resolve_images(
            vec![PageSegment::Text("a".into()), PageSegment::Image("x.png".into())],
            |_| None,
        );
        assert_eq!(segs[1], DocSegment::Image(ImageRecord::missing("x.png")));
        let (kept, rejected) = filter_images(segs);
        assert_eq!(kept.len(), 1);
        assert_eq!(rejected, vec![RejectReason::CorruptBytes]);
    }
}
