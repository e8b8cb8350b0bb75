use crate::corpus::{DocSegment, InterleavedDoc, TextDoc};

use super::{BatchPlan, ImageSlot, PackError, PackedSequence, TokenStream, Tokenizer, IMAGE_ID, PAD_ID};

/// Text tokens interleaved with one `tokens_per_image`-wide slot of
/// [`IMAGE_ID`] per image, in segment order.
pub fn lay_out_document<T: Tokenizer + ?Sized>(
    doc: &InterleavedDoc,
    tokens_per_image: usize,
    tokenizer: &T,
) -> Result<TokenStream, PackError> {
    if tokens_per_image == 0 {
        return Err(PackError::InvalidPlan("tokens_per_image must be positive".into()));
    }
    let mut stream = TokenStream::default();
    for seg in &doc.segments {
        match seg {
            DocSegment::Text { content } => stream.tokens.extend(tokenizer.encode(content)),
            DocSegment::Image(_) => {
                stream.image_slots.push(ImageSlot {
                    position: stream.tokens.len(),
                    span: tokens_per_image,
                });
                stream.tokens.extend(std::iter::repeat_n(IMAGE_ID, tokens_per_image));
            }
        }
    }
    if !stream.tokens.is_empty() {
        stream.boundaries.push(0);
    }
    Ok(stream)
}

pub fn lay_out_text<T: Tokenizer + ?Sized>(doc: &TextDoc, tokenizer: &T) -> TokenStream {
    let tokens = tokenizer.encode(&doc.text);
    let boundaries = if tokens.is_empty() { vec![] } else { vec![0] };
    TokenStream {
        tokens,
        image_slots: vec![],
        boundaries,
    }
}

/// Streaming greedy packer.
///
/// Documents are placed in arrival order. A document that would overflow
/// the open sequence's length or image cap closes it and starts a new one.
/// A document that cannot fit even an empty sequence is split at token
/// granularity, never inside an image slot; its last piece stays open for
/// the following documents.
#[derive(Debug)]
pub struct Packer {
    plan: BatchPlan,
    tokens: Vec<u32>,
    slots: Vec<ImageSlot>,
    boundaries: Vec<usize>,
}

impl Packer {
    pub fn new(plan: BatchPlan) -> Result<Self, PackError> {
        plan.validate()?;
        Ok(Self {
            plan,
            tokens: Vec::with_capacity(plan.seq_len),
            slots: Vec::new(),
            boundaries: Vec::new(),
        })
    }

    fn fits(&self, len: usize, images: usize) -> bool {
        self.tokens.len() + len <= self.plan.seq_len && self.slots.len() + images <= self.plan.max_images_per_seq
    }

    fn append(&mut self, doc: &TokenStream, start: usize, end: usize) {
        let base = self.tokens.len();
        self.boundaries.push(base);
        self.tokens.extend_from_slice(&doc.tokens[start..end]);
        self.slots.extend(
            doc.image_slots
                .iter()
                .filter(|s| s.position >= start && s.position < end)
                .map(|s| ImageSlot {
                    position: base + s.position - start,
                    span: s.span,
                }),
        );
    }

    fn flush(&mut self) -> Option<PackedSequence> {
        if self.tokens.is_empty() {
            return None;
        }
        let seq_len = self.plan.seq_len;
        let pad_from = self.tokens.len();
        let mut loss_mask = vec![false; seq_len];
        loss_mask[..pad_from].fill(true);
        for s in &self.slots {
            loss_mask[s.position..s.end()].fill(false);
        }
        let mut tokens = std::mem::replace(&mut self.tokens, Vec::with_capacity(seq_len));
        tokens.resize(seq_len, PAD_ID);
        Some(PackedSequence {
            tokens,
            boundaries: std::mem::take(&mut self.boundaries),
            image_slots: std::mem::take(&mut self.slots),
            loss_mask,
            pad_from,
        })
    }

    /// Add one document; returns the sequences it closed.
    pub fn push(&mut self, doc: &TokenStream) -> Vec<PackedSequence> {
        let mut done = Vec::new();
        let n = doc.len();
        if n == 0 {
            return done;
        }
        if !self.fits(n, doc.image_slots.len()) {
            done.extend(self.flush());
        }
        let max_images = self.plan.max_images_per_seq;
        let mut offset = 0;
        loop {
            let rest: Vec<&ImageSlot> = doc.image_slots.iter().filter(|s| s.position >= offset).collect();
            if self.fits(n - offset, rest.len()) {
                self.append(doc, offset, n);
                return done;
            }
            let mut cut = (offset + self.plan.seq_len).min(n);
            if let Some(over) = rest.get(max_images) {
                cut = cut.min(over.position);
            }
            if let Some(straddle) = rest.iter().find(|s| s.position < cut && cut < s.end()) {
                cut = straddle.position;
            }
            debug_assert!(cut > offset);
            self.append(doc, offset, cut);
            done.extend(self.flush());
            offset = cut;
        }
    }

    /// Close the open sequence, if any.
    pub fn finish(mut self) -> Option<PackedSequence> {
        self.flush()
    }
}

pub fn pack_sequences<'a, I>(docs: I, plan: &BatchPlan) -> Result<Vec<PackedSequence>, PackError>
where
    I: IntoIterator<Item = &'a TokenStream>,
{
    let mut packer = Packer::new(*plan)?;
    let mut out = Vec::new();
    for doc in docs {
        out.extend(packer.push(doc));
    }
    out.extend(packer.finish());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ImageRecord;
    use crate::packer::WordTokenizer;

    fn text_doc(len: usize) -> TokenStream {
        TokenStream {
            tokens: vec![7; len],
            image_slots: vec![],
            boundaries: vec![0],
        }
    }

    fn caption(span: usize) -> TokenStream {
        let mut t = vec![IMAGE_ID; span];
        t.extend([8, 9]);
        TokenStream {
            tokens: t,
            image_slots: vec![ImageSlot { position: 0, span }],
            boundaries: vec![0],
        }
    }

    fn plan(seq_len: usize, max_images: usize, span: usize) -> BatchPlan {
        BatchPlan {
            batch_size: 1,
            seq_len,
            max_images_per_seq: max_images,
            tokens_per_image: span,
        }
    }

    #[test]
    fn layout_examples() {
        let tok = WordTokenizer::build(["a b c d e", "f g"]);
        let img = DocSegment::Image(ImageRecord::new("x", 200, 200, "0".repeat(32)));
        let doc = InterleavedDoc::new("d", vec![DocSegment::text("a b c d e"), img.clone(), DocSegment::text("f g")]);
        let s = lay_out_document(&doc, 144, &tok).unwrap();
        assert_eq!(s.len(), 151);
        assert_eq!(s.image_slots, vec![ImageSlot { position: 5, span: 144 }]);
        assert!(s.tokens[5..149].iter().all(|&t| t == IMAGE_ID));

        let only = lay_out_document(&InterleavedDoc::new("d", vec![img.clone()]), 144, &tok).unwrap();
        assert_eq!((only.len(), only.image_slots[0].position), (144, 0));

        let two = lay_out_document(&InterleavedDoc::new("d", vec![img.clone(), img]), 144, &tok).unwrap();
        let pos: Vec<usize> = two.image_slots.iter().map(|s| s.position).collect();
        assert_eq!(pos, [0, 144]);
        assert!(lay_out_document(&doc, 0, &tok).is_err());
    }

    #[test]
    fn greedy_fill() {
        let docs = [text_doc(2000), text_doc(2000), text_doc(2000)];
        let seqs = pack_sequences(&docs, &plan(4096, 16, 144)).unwrap();
        assert_eq!(seqs.len(), 2);
        assert_eq!(seqs[0].boundaries, vec![0, 2000]);
        assert_eq!(seqs[0].pad_from, 4000);
        assert!(seqs[0].tokens[4000..].iter().all(|&t| t == PAD_ID));
        assert!(!seqs[0].loss_mask[4000]);
        assert_eq!((seqs[1].boundaries.clone(), seqs[1].pad_from), (vec![0], 2000));
    }

    #[test]
    fn image_cap_starts_new_sequence() {
        let docs: Vec<TokenStream> = (0..17).map(|_| caption(144)).collect();
        let seqs = pack_sequences(&docs, &plan(4096, 16, 144)).unwrap();
        assert_eq!(seqs.len(), 2);
        assert_eq!(seqs[0].image_slots.len(), 16);
        assert_eq!(seqs[1].image_slots.len(), 1);
        assert!(seqs[0].loss_mask[144] && !seqs[0].loss_mask[0]);
    }

    #[test]
    fn long_doc_is_split() {
        let seqs = pack_sequences(&[text_doc(5000)], &plan(4096, 16, 144)).unwrap();
        assert_eq!(seqs.len(), 2);
        assert_eq!(seqs[0].boundaries, vec![0]);
        assert_eq!(seqs[1].boundaries, vec![0]);
        assert_eq!((seqs[0].pad_from, seqs[1].pad_from), (4096, 904));
    }

    #[test]
    fn split_never_cuts_a_slot() {
        // 10 text tokens, slot at 10..40, 2 text; seq_len 32 would cut at 32.
        let mut tokens = vec![5; 10];
        tokens.extend(vec![IMAGE_ID; 30]);
        tokens.extend(vec![5; 2]);
        let doc = TokenStream {
            tokens,
            image_slots: vec![ImageSlot { position: 10, span: 30 }],
            boundaries: vec![0],
        };
        let seqs = pack_sequences(&[doc], &plan(32, 4, 30)).unwrap();
        assert_eq!(seqs.len(), 2);
        assert_eq!(seqs[0].pad_from, 10);
        assert_eq!(seqs[1].image_slots, vec![ImageSlot { position: 0, span: 30 }]);
        assert_eq!(seqs[1].pad_from, 32);
    }

    #[test]
    fn split_on_image_cap_within_doc() {
        let mut tokens = Vec::new();
        let mut slots = Vec::new();
        for _ in 0..5 {
            slots.push(ImageSlot {
                position: tokens.len(),
                span: 3,
            });
            tokens.extend([IMAGE_ID; 3]);
            tokens.push(4);
        }
        let doc = TokenStream {
            tokens,
            image_slots: slots,
            boundaries: vec![0],
        };
        let seqs = pack_sequences(&[doc, text_doc(3)], &plan(100, 2, 3)).unwrap();
        let counts: Vec<usize> = seqs.iter().map(|s| s.image_slots.len()).collect();
        assert_eq!(counts, [2, 2, 1]);
        assert_eq!(seqs[2].boundaries, vec![0, 4]);
    }

    #[test]
    fn empty_input_no_sequences() {
        assert!(pack_sequences(&[], &plan(16, 1, 4)).unwrap().is_empty());
        assert!(pack_sequences(&[TokenStream::default()], &plan(16, 1, 4)).unwrap().is_empty());
        assert!(matches!(
            pack_sequences(&[], &plan(16, 1, 17)),
            Err(PackError::OversizedSlot { .. })
        ));
    }
}
