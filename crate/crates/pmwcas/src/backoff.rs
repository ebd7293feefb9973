//! Exponential back-off for contended loops.
//!
//! Starts at 64 spin iterations and doubles to a cap of 4096, after which
//! each wait also yields to the scheduler. The same policy is used for
//! read waits and descriptor-embedding waits.

const INITIAL_SPINS: u32 = 64;
const MAX_SPINS: u32 = 4096;

#[derive(Debug)]
pub struct Backoff {
    spins: u32,
}

impl Backoff {
    pub fn new() -> Self {
        Backoff {
            spins: INITIAL_SPINS,
        }
    }

    pub fn wait(&mut self) {
        for _ in 0..self.spins {
            std::hint::spin_loop();
        }
        if self.spins < MAX_SPINS {
            self.spins *= 2;
        } else {
            std::thread::yield_now();
        }
    }

    pub fn reset(&mut self) {
        self.spins = INITIAL_SPINS;
    }
}

impl Default for Backoff {
    fn default() -> Self {
        Self::new()
    }
}
