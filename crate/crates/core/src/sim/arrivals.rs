use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

/// Generator behind every random stream in the simulator.
pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha 0.9), one stream per (seed, node, purpose)";

/// Independent stream for `(seed, stream)`.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Lazily generated Poisson arrival instants.
#[derive(Debug, Clone)]
pub struct PoissonSource {
    gap: Option<Exp<f64>>,
    rng: ChaCha8Rng,
    next: f64,
}

impl PoissonSource {
    /// A source with `rate == 0` never fires.
    pub fn new(rate: f64, rng: ChaCha8Rng) -> Self {
        let gap = (rate > 0.0).then(|| Exp::new(rate).expect("rate is positive and finite"));
        let mut src = PoissonSource { gap, rng, next: 0.0 };
        src.next = src.draw_after(0.0);
        src
    }

    fn draw_after(&mut self, t: f64) -> f64 {
        match &self.gap {
            Some(exp) => t + exp.sample(&mut self.rng),
            None => f64::INFINITY,
        }
    }

    pub fn peek(&self) -> f64 {
        self.next
    }

    pub fn pop(&mut self) -> f64 {
        let t = self.next;
        self.next = self.draw_after(t);
        // exponential gaps can round to zero on huge clocks; keep strict order
        if self.next <= t {
            self.next = f64::from_bits(t.to_bits() + 1);
        }
        t
    }
}

/// Arrival instants of a rate-`rate` Poisson process on `[0, horizon)`.
pub fn poisson_arrival_stream(rate: f64, horizon: f64, seed: u64) -> Vec<f64> {
    let mut src = PoissonSource::new(rate, rng_stream(seed, 0));
    let mut out = Vec::new();
    while src.peek() < horizon {
        out.push(src.pop());
    }
    out
}

/// Uniform backoff draw from `[0, window - 1]`.
pub(crate) fn draw_backoff(rng: &mut ChaCha8Rng, window: u64) -> u64 {
    rng.random_range(0..window)
}
