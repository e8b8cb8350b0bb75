use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{ImageRecord, InterleavedDoc, TextDoc};

/// Images whose shorter side is below this are dropped.
pub const MIN_SIDE_PX: u32 = 100;
/// Images whose longer side exceeds this are dropped.
pub const MAX_SIDE_PX: u32 = 10_000;
/// Case-insensitive URL substrings marking decorative images.
pub const URL_KEYWORDS: [&str; 5] = ["logo", "button", "icon", "plugin", "widget"];
/// Documents with more images than this are dropped.
pub const MAX_IMAGES_PER_DOC: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    Ok,
    CorruptBytes,
    AspectRatio,
    TooSmall,
    TooLarge,
    UrlKeyword,
    TooShort,
    Blocklist,
    NoImages,
    TooManyImages,
    GlobalDup,
    PageDup,
    NearDup,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::Ok => "ok",
            RejectReason::CorruptBytes => "corrupt_bytes",
            RejectReason::AspectRatio => "aspect_ratio",
            RejectReason::TooSmall => "too_small",
            RejectReason::TooLarge => "too_large",
            RejectReason::UrlKeyword => "url_keyword",
            RejectReason::TooShort => "too_short",
            RejectReason::Blocklist => "blocklist",
            RejectReason::NoImages => "no_images",
            RejectReason::TooManyImages => "too_many_images",
            RejectReason::GlobalDup => "global_dup",
            RejectReason::PageDup => "page_dup",
            RejectReason::NearDup => "near_dup",
        }
    }
}

/// `reason == Ok` exactly when `keep` is set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterDecision {
    pub keep: bool,
    pub reason: RejectReason,
}

impl FilterDecision {
    pub const KEEP: FilterDecision = FilterDecision {
        keep: true,
        reason: RejectReason::Ok,
    };

    pub fn reject(reason: RejectReason) -> Self {
        debug_assert_ne!(reason, RejectReason::Ok);
        Self { keep: false, reason }
    }
}

/// Checks run in a fixed order and the first failing one is reported:
/// corrupt bytes, aspect ratio outside `[1/2, 2]`, shorter side below
/// 100px, longer side above 10,000px, decorative URL keyword.
pub fn filter_image(img: &ImageRecord) -> FilterDecision {
    let (w, h) = (img.width_px as u64, img.height_px as u64);
    if !img.bytes_valid {
        return FilterDecision::reject(RejectReason::CorruptBytes);
    }
    // w/h < 1/2  <=>  2w < h;   w/h > 2  <=>  w > 2h
    if 2 * w < h || w > 2 * h {
        return FilterDecision::reject(RejectReason::AspectRatio);
    }
    if w.min(h) < MIN_SIDE_PX as u64 {
        return FilterDecision::reject(RejectReason::TooSmall);
    }
    if w.max(h) > MAX_SIDE_PX as u64 {
        return FilterDecision::reject(RejectReason::TooLarge);
    }
    let url = img.url.to_lowercase();
    if URL_KEYWORDS.iter().any(|k| url.contains(k)) {
        return FilterDecision::reject(RejectReason::UrlKeyword);
    }
    FilterDecision::KEEP
}

pub fn filter_document(doc: &InterleavedDoc) -> FilterDecision {
    match doc.image_count() {
        0 => FilterDecision::reject(RejectReason::NoImages),
        n if n > MAX_IMAGES_PER_DOC => FilterDecision::reject(RejectReason::TooManyImages),
        _ => FilterDecision::KEEP,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextFilterConfig {
    pub min_tokens: usize,
    /// Lowercased terms; multi-word terms match on word boundaries too.
    pub blocklist: BTreeSet<String>,
}

impl Default for TextFilterConfig {
    fn default() -> Self {
        Self {
            min_tokens: 64,
            blocklist: BTreeSet::new(),
        }
    }
}

impl TextFilterConfig {
    pub fn with_blocklist<I, S>(mut self, terms: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.blocklist = terms
            .into_iter()
            .map(|t| t.as_ref().trim().to_lowercase())
            .filter(|t| !t.is_empty())
            .collect();
        self
    }
}

fn contains_word(haystack: &str, term: &str) -> bool {
    let is_word = |c: char| c.is_alphanumeric() || c == '_';
    let mut from = 0;
    while let Some(rel) = haystack[from..].find(term) {
        let start = from + rel;
        let end = start + term.len();
        let before_ok = haystack[..start].chars().next_back().is_none_or(|c| !is_word(c));
        let after_ok = haystack[end..].chars().next().is_none_or(|c| !is_word(c));
        if before_ok && after_ok {
            return true;
        }
        from = start + haystack[start..].chars().next().map_or(1, char::len_utf8);
    }
    false
}

pub fn text_quality_filter(doc: &TextDoc, cfg: &TextFilterConfig) -> FilterDecision {
    if doc.token_estimate() < cfg.min_tokens {
        return FilterDecision::reject(RejectReason::TooShort);
    }
    if !cfg.blocklist.is_empty() {
        let lower = doc.text.to_lowercase();
        if cfg.blocklist.iter().any(|term| contains_word(&lower, term)) {
            return FilterDecision::reject(RejectReason::Blocklist);
        }
    }
    FilterDecision::KEEP
}
