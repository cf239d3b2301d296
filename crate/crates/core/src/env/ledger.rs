use crate::workload::{ContentId, RequestBatch};

/// Normalized cumulative request `q` of every catalog content.
///
/// Each slot with at least one request adds `δ_o = c_o / Σ c` to `q_o`;
/// the normalizer is the slot's total over the whole catalog, so `q` is
/// comparable between cached and uncached contents.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulativeLedger {
    raw_counts: Vec<u64>,
    q: Vec<f64>,
    last_delta: Vec<f64>,
    touched: Vec<usize>,
}

impl CumulativeLedger {
    pub fn new(catalog_size: usize) -> Self {
        CumulativeLedger {
            raw_counts: vec![0; catalog_size],
            q: vec![0.0; catalog_size],
            last_delta: vec![0.0; catalog_size],
            touched: Vec::new(),
        }
    }

    pub fn catalog_size(&self) -> usize {
        self.q.len()
    }

    pub fn q(&self, content: ContentId) -> f64 {
        self.q[content.index()]
    }

    pub fn last_delta(&self, content: ContentId) -> f64 {
        self.last_delta[content.index()]
    }

    pub fn raw_count(&self, content: ContentId) -> u64 {
        self.raw_counts[content.index()]
    }

    /// `q` of every content, indexed by `ContentId::index`.
    pub fn q_values(&self) -> &[f64] {
        &self.q
    }

    /// Folds one slot of requests into the ledger. Empty slots leave it untouched.
    pub fn update(&mut self, batch: &RequestBatch) {
        let total = batch.total_requests();
        if total == 0 {
            return;
        }
        for &i in &self.touched {
            self.last_delta[i] = 0.0;
        }
        self.touched.clear();
        let total = total as f64;
        for (&content, &c) in &batch.counts {
            let i = content.index();
            let delta = c as f64 / total;
            self.last_delta[i] = delta;
            self.q[i] += delta;
            self.raw_counts[i] += c as u64;
            self.touched.push(i);
        }
    }
}
