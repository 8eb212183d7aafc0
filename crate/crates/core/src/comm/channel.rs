use alloc::collections::BTreeMap;

/// Latency/bandwidth link model: a message of `b` bytes sent at `t` arrives at
/// `t + alpha + beta b`, never overtaking an earlier message on the same
/// channel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkModel {
    pub alpha_ns: f64,
    pub beta_ns_per_byte: f64,
}

impl Default for LinkModel {
    fn default() -> Self {
        LinkModel { alpha_ns: 2000.0, beta_ns_per_byte: 1.0 }
    }
}

/// Delivery bookkeeping for every directed (source, destination) channel.
#[derive(Clone, Debug, Default)]
pub struct Channels {
    pub model: LinkModel,
    last: BTreeMap<(u16, u16), u64>,
}

impl Channels {
    pub fn new(model: LinkModel) -> Self {
        Channels { model, last: BTreeMap::new() }
    }

    pub fn deliver(&mut self, src: u16, dest: u16, send_ns: u64, bytes: usize) -> u64 {
        let cost = self.model.alpha_ns + self.model.beta_ns_per_byte * bytes as f64;
        let t = send_ns + libm::ceil(cost.max(0.0)) as u64;
        let slot = self.last.entry((src, dest)).or_insert(0);
        let t = t.max(*slot);
        *slot = t;
        t
    }

    pub fn reset(&mut self) {
        self.last.clear();
    }
}
