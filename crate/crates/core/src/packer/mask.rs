use super::PackError;

/// Boundaries of packed examples within one sequence. `pad_from` defaults to
/// `seq_len` (no padding).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskSpec {
    pub boundaries: Vec<usize>,
    pub seq_len: usize,
    pub pad_from: Option<usize>,
}

/// Block-causal attention predicate: a real token attends to earlier or
/// equal positions of its own block; padding attends only to itself.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockMask {
    boundaries: Vec<usize>,
    seq_len: usize,
    pad_from: usize,
}

impl BlockMask {
    pub(crate) fn new(boundaries: Vec<usize>, seq_len: usize, pad_from: usize) -> Self {
        Self {
            boundaries,
            seq_len,
            pad_from,
        }
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    /// Index of the block containing `pos`.
    pub fn block(&self, pos: usize) -> usize {
        self.boundaries.partition_point(|&b| b <= pos).saturating_sub(1)
    }

    pub fn attend(&self, query: usize, key: usize) -> bool {
        if query >= self.seq_len || key >= self.seq_len {
            return false;
        }
        if query >= self.pad_from || key >= self.pad_from {
            return query == key;
        }
        key <= query && self.block(query) == self.block(key)
    }

    /// Row-major `seq_len x seq_len` matrix; `[q][k]` is `attend(q, k)`.
    pub fn to_dense(&self) -> Vec<Vec<bool>> {
        (0..self.seq_len)
            .map(|q| (0..self.seq_len).map(|k| self.attend(q, k)).collect())
            .collect()
    }
}

pub fn build_mask(spec: &MaskSpec) -> Result<BlockMask, PackError> {
    let pad_from = spec.pad_from.unwrap_or(spec.seq_len);
    if pad_from > spec.seq_len {
        return Err(PackError::InvalidMask(format!("pad_from {pad_from} > seq_len {}", spec.seq_len)));
    }
    if pad_from > 0 && spec.boundaries.first() != Some(&0) {
        return Err(PackError::InvalidMask("boundaries must start at 0".into()));
    }
    if spec.boundaries.windows(2).any(|w| w[0] >= w[1]) {
        return Err(PackError::InvalidMask("boundaries must be strictly increasing".into()));
    }
    if spec.boundaries.last().is_some_and(|&b| b >= pad_from.max(1)) {
        return Err(PackError::InvalidMask("boundary beyond the unpadded region".into()));
    }
    Ok(BlockMask::new(spec.boundaries.clone(), spec.seq_len, pad_from))
}
