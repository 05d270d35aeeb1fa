use crate::geom::Vec2;

/// Exponential moving average of the needle tip across frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TipTracker {
    alpha: f64,
    state: Option<Vec2>,
}

impl TipTracker {
    pub fn new(alpha: f64) -> Self {
        Self {
            alpha: alpha.clamp(0.0, 1.0),
            state: None,
        }
    }

    /// Feeds a raw tip observation and returns the smoothed tip.
    pub fn update(&mut self, raw: Vec2) -> Vec2 {
        let next = match self.state {
            None => raw,
            Some(prev) => prev + (raw - prev) * self.alpha,
        };
        self.state = Some(next);
        next
    }

    pub fn current(&self) -> Option<Vec2> {
        self.state
    }

    pub fn reset(&mut self) {
        self.state = None;
    }
}
