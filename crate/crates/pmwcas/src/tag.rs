//! Word tagging.
//!
//! The low two bits of every data word discriminate its content: `00` is a
//! plain payload, `10` is an embedded descriptor reference, and `01` is a
//! payload whose cache copy has not been flushed yet (a dirty flag). Tag
//! `11` never occurs. Application payloads live in the upper 62 bits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TAG_MASK: u64 = 0b11;
const DIRTY_BIT: u64 = 0b01;
const DESC_BIT: u64 = 0b10;

/// What a tagged word currently holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WordKind {
    /// A plain application payload (`00`).
    Payload,
    /// An embedded descriptor reference (`10`).
    Descriptor,
    /// A payload with a dirty flag (`01`).
    DirtyPayload,
}

/// A 64-bit word whose low two bits carry the PMwCAS tag.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize, PartialOrd, Ord,
)]
#[serde(transparent)]
pub struct TaggedWord(pub u64);

impl TaggedWord {
    /// Builds a clean payload word from a 62-bit application value.
    pub fn from_payload(value: u64) -> Self {
        debug_assert!(value <= (u64::MAX >> 2), "payload exceeds 62 bits");
        TaggedWord(value << 2)
    }

    /// The 62-bit application value, ignoring tag bits.
    pub fn payload(self) -> u64 {
        self.0 >> 2
    }

    pub fn raw(self) -> u64 {
        self.0
    }

    pub fn classify(self) -> WordKind {
        match self.0 & TAG_MASK {
            0b00 => WordKind::Payload,
            0b10 => WordKind::Descriptor,
            0b01 => WordKind::DirtyPayload,
            _ => unreachable!("tag 11 never occurs"),
        }
    }

    pub fn is_payload(self) -> bool {
        self.0 & TAG_MASK == 0
    }

    pub fn is_descriptor(self) -> bool {
        self.0 & DESC_BIT != 0
    }

    pub fn is_dirty(self) -> bool {
        self.0 & DIRTY_BIT != 0
    }

    /// True while some PMwCAS operation owns or has not yet flushed this word.
    pub fn is_in_progress(self) -> bool {
        self.0 & TAG_MASK != 0
    }

    /// Sets the dirty flag on a clean payload.
    pub fn set_dirty(self) -> Result<TaggedWord> {
        if !self.is_payload() {
            return Err(Error::Contract(
                "set_dirty requires a clean payload word".into(),
            ));
        }
        Ok(TaggedWord(self.0 | DIRTY_BIT))
    }

    /// Clears both tag bits, yielding the clean payload word.
    pub fn clear_flags(self) -> TaggedWord {
        TaggedWord(self.0 & !TAG_MASK)
    }

    /// Encodes a descriptor reference for `slot`.
    pub fn descriptor_for(slot: usize) -> TaggedWord {
        TaggedWord(((slot as u64) << 2) | DESC_BIT)
    }

    /// Decodes the slot from a descriptor-tagged word.
    pub fn descriptor_slot(self) -> Option<usize> {
        if self.is_descriptor() {
            Some((self.0 >> 2) as usize)
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn payload_five_dirty_bit() {
        // payload 5 is raw 0b10100; its dirty form is 0b10101
        let w = TaggedWord::from_payload(5);
        assert_eq!(w.raw(), 0b10100);
        assert_eq!(w.set_dirty().unwrap().raw(), 0b10101);
    }

    #[test]
    fn classify_tags() {
        assert_eq!(TaggedWord(0b100).classify(), WordKind::Payload);
        assert_eq!(TaggedWord(0b110).classify(), WordKind::Descriptor);
        assert_eq!(TaggedWord(0b101).classify(), WordKind::DirtyPayload);
    }

    #[test]
    fn descriptor_word_roundtrip() {
        for slot in 0..64 {
            let w = TaggedWord::descriptor_for(slot);
            assert!(w.is_descriptor());
            assert!(!w.is_dirty());
            assert_eq!(w.descriptor_slot(), Some(slot));
        }
    }

    #[test]
    fn set_dirty_on_descriptor_rejected() {
        assert!(TaggedWord::descriptor_for(3).set_dirty().is_err());
    }

    proptest! {
        #[test]
        fn clear_flags_inverts_set_dirty(v in 0u64..=(u64::MAX >> 2)) {
            let w = TaggedWord::from_payload(v);
            prop_assert_eq!(w.set_dirty().unwrap().clear_flags(), w);
            prop_assert_eq!(w.set_dirty().unwrap().payload(), v);
        }
    }
}
