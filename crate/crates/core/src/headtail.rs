//! The combined deque cursor word.
//!
//! `head` is the index of the next slot the owner consumes; `tail` is the
//! index of the last stealable slot. Both live in one 64-bit word so that a
//! thief can move the tail and learn both cursors in a single atomic
//! fetch-and-add. The head occupies the upper 32 bits, the tail the lower 32
//! bits as a two's-complement `i32`. Arithmetic is lane-wise: a tail that
//! goes negative never borrows from the head lane.

use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct HeadTail {
    pub head: i32,
    pub tail: i32,
}

impl HeadTail {
    pub const fn new(head: i32, tail: i32) -> Self {
        Self { head, tail }
    }

    /// Cursors of a deque holding `len` tasks at slots `0..len`.
    pub fn filled(len: usize) -> Result<Self, Error> {
        let tail = i32::try_from(len).map_err(|_| Error::Overflow)? - 1;
        Ok(Self { head: 0, tail })
    }

    pub const fn pack(self) -> u64 {
        ((self.head as u32 as u64) << 32) | (self.tail as u32 as u64)
    }

    pub const fn unpack(word: u64) -> Self {
        Self {
            head: (word >> 32) as u32 as i32,
            tail: word as u32 as i32,
        }
    }

    /// Lane-wise `(head + dh, tail + dt)`; `None` if either lane overflows or
    /// the head would become negative.
    pub fn offset(self, dh: i32, dt: i32) -> Option<Self> {
        let head = self.head.checked_add(dh)?;
        let tail = self.tail.checked_add(dt)?;
        (head >= 0).then_some(Self { head, tail })
    }

    pub fn is_empty(self) -> bool {
        self.tail < self.head
    }

    /// Queued tasks: `max(0, tail - head + 1)`.
    pub fn available(self) -> u32 {
        if self.tail < self.head {
            0
        } else {
            (self.tail as i64 - self.head as i64 + 1) as u32
        }
    }

    /// Tasks the owner has taken plus tasks still queued. Because slots are
    /// never reused this equals the total the rank will run absent further
    /// theft.
    pub fn assigned(self) -> u32 {
        self.head.max(self.tail.saturating_add(1)).max(0) as u32
    }
}

/// Free-standing form of [`HeadTail::available`].
pub fn available(ht: HeadTail) -> u32 {
    ht.available()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn available_examples() {
        assert_eq!(available(HeadTail::new(0, 9)), 10);
        assert_eq!(available(HeadTail::new(5, 4)), 0);
        assert_eq!(available(HeadTail::new(3, 3)), 1);
        assert_eq!(available(HeadTail::new(2, -7)), 0);
    }

    #[test]
    fn negative_tail_does_not_borrow_from_head() {
        let ht = HeadTail::new(7, -3);
        let back = HeadTail::unpack(ht.pack());
        assert_eq!(back, ht);
        assert_eq!(ht.pack() >> 32, 7);
    }

    #[test]
    fn offset_rejects_negative_head() {
        assert_eq!(HeadTail::new(0, 4).offset(-1, 0), None);
        assert_eq!(HeadTail::new(0, 9).offset(0, -3), Some(HeadTail::new(0, 6)));
    }

    #[test]
    fn filled_empty_is_minus_one() {
        assert_eq!(HeadTail::filled(0).unwrap(), HeadTail::new(0, -1));
        assert_eq!(HeadTail::filled(60).unwrap(), HeadTail::new(0, 59));
    }
}
