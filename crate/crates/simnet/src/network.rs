//! Message sizes and per-sender egress queues.

use solida_core::encoding::{Encode, Encoder};
use solida_core::{Message, SlotValue, Time};

use crate::scenario::SizeModel;

/// Framing per message: kind tag plus length.
const FRAME: u64 = 8;

fn key_and_sig(model: SizeModel) -> (u64, u64) {
    match model {
        SizeModel::Zero => (0, 0),
        SizeModel::Compact => (32, 64),
        SizeModel::Ecdsa192 => (49, 56),
    }
}

/// Body bytes excluding embedded signed headers (counted separately).
fn body_size(value: &SlotValue, pk: u64, sig: u64) -> u64 {
    match value {
        SlotValue::TxBatch { transactions } => 4 + transactions.len() as u64 * (2 * pk + 16 + sig),
        // new member, PoW key, nonce, puzzle config and count, closing digest
        SlotValue::Reconfig(_) => 1 + 2 * pk + 8 + 12 + 32,
    }
}

/// Wire size of `msg` in bytes under `model`.
pub fn message_size(msg: &Message, model: SizeModel) -> u64 {
    if model == SizeModel::Zero {
        return 0;
    }
    let (pk, sig) = key_and_sig(model);
    let mut total = FRAME;
    for h in msg.all_headers() {
        let mut enc = Encoder::new();
        h.header.encode_into(&mut enc);
        total += enc.len() as u64 + pk + sig;
    }
    for b in msg.bodies() {
        total += body_size(b, pk, sig);
    }
    if let Message::BodyRequest { .. } = msg {
        total += 32;
    }
    total
}

pub fn serialization_delay(bytes: u64, bits_per_sec: f64) -> Time {
    Time((bytes as f64 * 8.0 / bits_per_sec * 1e9).round() as u64)
}

/// FIFO egress: a node transmits one copy at a time.
#[derive(Clone, Copy, Debug, Default)]
pub struct Egress {
    free_at: Time,
}

impl Egress {
    /// Queue one copy of `bytes`; returns when its last bit has left.
    pub fn enqueue(&mut self, now: Time, bytes: u64, bits_per_sec: Option<f64>) -> Time {
        let Some(bps) = bits_per_sec else {
            return now;
        };
        let start = self.free_at.max(now);
        self.free_at = start + serialization_delay(bytes, bps);
        self.free_at
    }

    pub fn free_at(&self) -> Time {
        self.free_at
    }
}
