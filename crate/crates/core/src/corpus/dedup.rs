use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DocSegment, InterleavedDoc};

/// An image whose URL or MD5 occurs more often than this across the corpus
/// is removed everywhere.
pub const MAX_CORPUS_OCCURRENCES: u64 = 10;

/// Corpus-wide occurrence counts of image URLs and MD5 digests.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupCounts {
    pub url_counts: BTreeMap<String, u64>,
    pub md5_counts: BTreeMap<String, u64>,
}

impl DedupCounts {
    pub fn add_doc(&mut self, doc: &InterleavedDoc) {
        for img in doc.images() {
            *self.url_counts.entry(img.url.clone()).or_default() += 1;
            *self.md5_counts.entry(img.md5_hex.clone()).or_default() += 1;
        }
    }

    /// Pointwise sum.
    pub fn merge(&mut self, other: &DedupCounts) {
        for (k, v) in &other.url_counts {
            *self.url_counts.entry(k.clone()).or_default() += v;
        }
        for (k, v) in &other.md5_counts {
            *self.md5_counts.entry(k.clone()).or_default() += v;
        }
    }

    pub fn merged(mut self, other: &DedupCounts) -> Self {
        self.merge(other);
        self
    }

    pub fn url_count(&self, url: &str) -> u64 {
        self.url_counts.get(url).copied().unwrap_or(0)
    }

    pub fn md5_count(&self, md5: &str) -> u64 {
        self.md5_counts.get(md5).copied().unwrap_or(0)
    }
}

pub fn count_images<'a, I>(docs: I) -> DedupCounts
where
    I: IntoIterator<Item = &'a InterleavedDoc>,
{
    let mut counts = DedupCounts::default();
    for doc in docs {
        counts.add_doc(doc);
    }
    counts
}

/// Shard-parallel [`count_images`]; the result does not depend on the
/// thread count.
pub fn count_images_par(docs: &[InterleavedDoc]) -> DedupCounts {
    docs.par_chunks(256)
        .map(count_images)
        .reduce(DedupCounts::default, |a, b| a.merged(&b))
}

/// Number of images removed by each dedup rule.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DedupTally {
    pub global_dup: usize,
    pub page_dup: usize,
}

pub fn apply_image_dedup(doc: &InterleavedDoc, counts: &DedupCounts) -> InterleavedDoc {
    apply_image_dedup_tallied(doc, counts).0
}

/// Removes images frequent across the corpus and any later repeat of an
/// image (same URL or same MD5) within the document. Survivors keep their
/// relative order; text segments are untouched.
pub fn apply_image_dedup_tallied(doc: &InterleavedDoc, counts: &DedupCounts) -> (InterleavedDoc, DedupTally) {
    let mut tally = DedupTally::default();
    let mut seen_urls = HashSet::new();
    let mut seen_md5s = HashSet::new();
    let segments = doc
        .segments
        .iter()
        .filter(|seg| {
            let DocSegment::Image(img) = seg else {
                return true;
            };
            // Keys of globally removed images still count as seen, so raising
            // a count can only ever remove more images.
            let repeat = !seen_urls.insert(img.url.as_str()) | !seen_md5s.insert(img.md5_hex.as_str());
            if counts.url_count(&img.url) > MAX_CORPUS_OCCURRENCES
                || counts.md5_count(&img.md5_hex) > MAX_CORPUS_OCCURRENCES
            {
                tally.global_dup += 1;
                return false;
            }
            if repeat {
                tally.page_dup += 1;
            }
            !repeat
        })
        .cloned()
        .collect();
    (InterleavedDoc::new(doc.doc_id.clone(), segments), tally)
}
