use serde::Serialize;

/// Receives operation counts from the kernels. The default implementation
/// ignores them and compiles away.
pub trait Probe {
    #[inline(always)]
    fn xnor_words(&mut self, _n: u64) {}
    #[inline(always)]
    fn popcounts(&mut self, _n: u64) {}
    #[inline(always)]
    fn compares(&mut self, _n: u64) {}
    #[inline(always)]
    fn ors(&mut self, _n: u64) {}
    #[inline(always)]
    fn int8_macs(&mut self, _n: u64) {}
}

/// No-op probe for normal inference.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoProbe;

impl Probe for NoProbe {}

/// Counts every word-level operation a kernel executes.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct OpCounter {
    pub xnor_word_ops: u64,
    pub popcount_ops: u64,
    pub threshold_compares: u64,
    pub or_ops: u64,
    pub int8_mac_equivalents: u64,
}

impl Probe for OpCounter {
    fn xnor_words(&mut self, n: u64) {
        self.xnor_word_ops += n;
    }
    fn popcounts(&mut self, n: u64) {
        self.popcount_ops += n;
    }
    fn compares(&mut self, n: u64) {
        self.threshold_compares += n;
    }
    fn ors(&mut self, n: u64) {
        self.or_ops += n;
    }
    fn int8_macs(&mut self, n: u64) {
        self.int8_mac_equivalents += n;
    }
}

impl std::ops::AddAssign for OpCounter {
    fn add_assign(&mut self, rhs: Self) {
        self.xnor_word_ops += rhs.xnor_word_ops;
        self.popcount_ops += rhs.popcount_ops;
        self.threshold_compares += rhs.threshold_compares;
        self.or_ops += rhs.or_ops;
        self.int8_mac_equivalents += rhs.int8_mac_equivalents;
    }
}
