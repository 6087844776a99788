/// Sliding-window anti-replay filter over 64-bit transport counters.
///
/// Bit `c % width` of the ring records counter `c` for every `c` in
/// `(greatest - width, greatest]`. Anything at or beyond `width` behind the
/// greatest counter seen is rejected outright.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayWindow {
    width: u64,
    greatest: Option<u64>,
    ring: Vec<u64>,
}

pub const MIN_WINDOW: usize = 64;
pub const MAX_WINDOW: usize = 2048;
pub const DEFAULT_WINDOW: usize = 64;

impl Default for ReplayWindow {
    fn default() -> Self {
        Self::new(DEFAULT_WINDOW).expect("default width is in range")
    }
}

impl ReplayWindow {
    /// Returns `None` unless `MIN_WINDOW <= width <= MAX_WINDOW`.
    pub fn new(width: usize) -> Option<Self> {
        if !(MIN_WINDOW..=MAX_WINDOW).contains(&width) {
            return None;
        }
        Some(Self { width: width as u64, greatest: None, ring: vec![0; width.div_ceil(64)] })
    }

    pub fn width(&self) -> usize {
        self.width as usize
    }

    pub fn greatest_seen(&self) -> Option<u64> {
        self.greatest
    }

    fn bit(&self, counter: u64) -> (usize, u64) {
        let slot = counter % self.width;
        ((slot / 64) as usize, 1u64 << (slot % 64))
    }

    /// Would `counter` be accepted? Does not modify the window.
    pub fn check(&self, counter: u64) -> bool {
        match self.greatest {
            None => true,
            Some(g) if counter > g => true,
            Some(g) if g - counter >= self.width => false,
            Some(_) => {
                let (w, m) = self.bit(counter);
                self.ring[w] & m == 0
            }
        }
    }

    /// Accepts `counter` if it is fresh and records it. Returns whether it was accepted.
    pub fn accept(&mut self, counter: u64) -> bool {
        if !self.check(counter) {
            return false;
        }
        match self.greatest {
            Some(g) if counter <= g => {}
            prev => {
                let start = prev.map_or(0, |g| g + 1);
                if counter - start >= self.width || prev.is_none() {
                    self.ring.iter_mut().for_each(|w| *w = 0);
                } else {
                    for c in start..counter {
                        let (w, m) = self.bit(c);
                        self.ring[w] &= !m;
                    }
                }
                self.greatest = Some(counter);
            }
        }
        let (w, m) = self.bit(counter);
        self.ring[w] |= m;
        true
    }
}
