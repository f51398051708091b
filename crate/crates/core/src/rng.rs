//! Deterministic pseudo-random numbers (xoshiro256++ seeded via
//! splitmix64). Self-contained so that a given seed reproduces the same
//! stream forever, independent of any external crate version.

#[derive(Debug, Clone)]
pub struct Rng {
    s: [u64; 4],
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

#[inline]
fn rotl(x: u64, k: u32) -> u64 {
    (x << k) | (x >> (64 - k))
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        let mut sm = seed;
        let mut s = [0u64; 4];
        for slot in s.iter_mut() {
            *slot = splitmix64(&mut sm);
        }
        // All-zero state is invalid for xoshiro.
        if s == [0, 0, 0, 0] {
            s[0] = 1;
        }
        Rng { s }
    }

    /// Independent stream for worker/stratum `index`, derived
    /// deterministically from a master seed.
    pub fn shard(master_seed: u64, index: u64) -> Self {
        let mut sm = master_seed ^ 0xA5A5_A5A5_5A5A_5A5A;
        let a = splitmix64(&mut sm);
        Rng::new(a ^ index.wrapping_mul(0x9E3779B97F4A7C15).rotate_left(17))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let result = rotl(self.s[0].wrapping_add(self.s[3]), 23).wrapping_add(self.s[0]);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = rotl(self.s[3], 45);
        result
    }

    /// Uniform in [0, 1) with 53 random bits.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        let mut u1 = self.next_f64();
        if u1 <= 0.0 {
            u1 = f64::MIN_POSITIVE;
        }
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Uniform point in the d-dimensional unit ball.
    pub fn in_unit_ball(&mut self, out: &mut [f64]) {
        let d = out.len();
        loop {
            let mut n2 = 0.0;
            for v in out.iter_mut() {
                *v = self.normal();
                n2 += *v * *v;
            }
            if n2 > 0.0 {
                let r = self.next_f64().powf(1.0 / d as f64) / n2.sqrt();
                for v in out.iter_mut() {
                    *v *= r;
                }
                return;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_stream() {
        let mut a = Rng::new(42);
        let mut b = Rng::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn shards_differ() {
        let mut a = Rng::shard(7, 0);
        let mut b = Rng::shard(7, 1);
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn uniform_in_range_and_ball_inside() {
        let mut r = Rng::new(1);
        for _ in 0..1000 {
            let x = r.uniform(-2.0, 3.0);
            assert!((-2.0..3.0).contains(&x));
        }
        let mut p = [0.0; 3];
        for _ in 0..1000 {
            r.in_unit_ball(&mut p);
            let n2: f64 = p.iter().map(|v| v * v).sum();
            assert!(n2 <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn ball_sampling_mean_near_zero() {
        let mut r = Rng::new(9);
        let mut mean = [0.0; 2];
        let n = 20000;
        let mut p = [0.0; 2];
        for _ in 0..n {
            r.in_unit_ball(&mut p);
            mean[0] += p[0];
            mean[1] += p[1];
        }
        assert!((mean[0] / n as f64).abs() < 0.02);
        assert!((mean[1] / n as f64).abs() < 0.02);
    }
}
